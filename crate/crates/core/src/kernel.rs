//! Symbolic U-statistic kernels.
//!
//! A [`MixedKernel`] is a sum of terms `c · ∏θ_{uv} · ∏_slots ∏ x_slot[i]`.
//! Data factors are bound to argument slots, so integrating a slot against
//! `N_p(0, Θ)` is exact: the slot's coordinate multiset is replaced by its
//! Isserlis moment. A data factor `θ̂_uv(x_s) = x_s[u] x_s[v]` contributes the
//! coordinates `u, v` to slot `s`.

use std::collections::BTreeMap;

use crate::covmodel::{CovModel, SampleMatrix};
use crate::error::{Error, Result};
use crate::poly::{PairIndex, PolyConstraint};
use crate::wick::GaussianMoments;

/// Largest kernel degree accepted by the permutation-averaging evaluator.
pub const MAX_DEGREE: usize = 6;

/// Absolute tolerance (scaled by the kernel's coefficient size, floor 1) for
/// symbolic zero checks such as the canonical property.
pub const SYMBOLIC_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTerm {
    pub coeff: f64,
    /// Sorted coordinate multiset for each argument slot.
    pub slots: Vec<Vec<usize>>,
    /// Sorted constant factors `θ_uv`, bound to the kernel's model.
    pub consts: Vec<PairIndex>,
}

impl KernelTerm {
    fn data_degree(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedKernel {
    arity: usize,
    terms: Vec<KernelTerm>,
    theta: Option<CovModel>,
    canonical: bool,
}

impl MixedKernel {
    /// Validates and merges `terms`. Constant factors need `theta`.
    pub fn new(arity: usize, terms: Vec<KernelTerm>, theta: Option<CovModel>) -> Result<Self> {
        for t in &terms {
            if t.slots.len() != arity {
                return Err(Error::DimensionMismatch { expected: arity, found: t.slots.len() });
            }
            if !t.consts.is_empty() && theta.is_none() {
                return Err(Error::Domain("constant factors require a bound covariance".into()));
            }
            if let Some(model) = &theta {
                let p = model.dim();
                let oob = t.slots.iter().flatten().any(|&c| c >= p) || t.consts.iter().any(|c| c.v() >= p);
                if oob {
                    return Err(Error::Domain(format!("kernel coordinate outside dimension {p}")));
                }
            }
        }
        Ok(MixedKernel { arity, terms, theta, canonical: false }.merged())
    }

    pub fn constant(value: f64, arity: usize) -> Self {
        MixedKernel {
            arity,
            terms: vec![KernelTerm { coeff: value, slots: vec![Vec::new(); arity], consts: Vec::new() }],
            theta: None,
            canonical: false,
        }
        .merged()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    pub fn model(&self) -> Option<&CovModel> {
        self.theta.as_ref()
    }

    /// Set by [`hoeffding_projection`] after the canonical property is verified.
    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    /// Evaluates at `xs[0..arity]`.
    pub fn eval(&self, xs: &[&[f64]]) -> f64 {
        assert_eq!(xs.len(), self.arity, "kernel arity mismatch");
        self.terms
            .iter()
            .map(|t| {
                let mut v = t.coeff;
                if let Some(model) = &self.theta {
                    for c in &t.consts {
                        v *= model.entry(c.u(), c.v());
                    }
                }
                for (x, coords) in xs.iter().zip(&t.slots) {
                    for &i in coords {
                        v *= x[i];
                    }
                }
                v
            })
            .sum()
    }

    /// Evaluates at rows `idx` of `x`.
    pub fn eval_rows(&self, x: &SampleMatrix, idx: &[usize]) -> f64 {
        let rows: Vec<&[f64]> = idx.iter().map(|&i| x.row(i)).collect();
        self.eval(&rows)
    }

    /// Merges terms with identical factors and drops exact zeros.
    fn merged(mut self) -> Self {
        let mut acc: BTreeMap<(Vec<Vec<usize>>, Vec<PairIndex>), f64> = BTreeMap::new();
        for mut t in std::mem::take(&mut self.terms) {
            for s in &mut t.slots {
                s.sort_unstable();
            }
            t.consts.sort();
            *acc.entry((t.slots, t.consts)).or_insert(0.0) += t.coeff;
        }
        self.terms = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((slots, consts), coeff)| KernelTerm { coeff, slots, consts })
            .collect();
        self
    }

    /// Folds constant factors into coefficients.
    pub fn bind(&self) -> MixedKernel {
        let Some(model) = &self.theta else {
            return self.clone();
        };
        let terms = self
            .terms
            .iter()
            .map(|t| KernelTerm {
                coeff: t.consts.iter().fold(t.coeff, |c, q| c * model.entry(q.u(), q.v())),
                slots: t.slots.clone(),
                consts: Vec::new(),
            })
            .collect();
        MixedKernel { arity: self.arity, terms, theta: self.theta.clone(), canonical: self.canonical }.merged()
    }

    /// Integrates slot `slot` out under the moment engine's model; later
    /// slots shift down by one.
    pub fn integrate_slot(&self, moments: &GaussianMoments, slot: usize) -> MixedKernel {
        assert!(slot < self.arity);
        let bound = self.bind();
        let terms = bound
            .terms
            .into_iter()
            .map(|mut t| {
                let coords = t.slots.remove(slot);
                t.coeff *= moments.moment_sorted(&coords);
                t
            })
            .collect();
        MixedKernel {
            arity: self.arity - 1,
            terms,
            theta: Some(moments.model().clone()),
            canonical: false,
        }
        .merged()
    }

    /// Integrates out every slot at position `≥ keep`.
    pub fn partial_expectation(&self, moments: &GaussianMoments, keep: usize) -> MixedKernel {
        assert!(keep <= self.arity);
        if keep == self.arity {
            return self.clone();
        }
        let bound = self.bind();
        let terms = bound
            .terms
            .into_iter()
            .map(|mut t| {
                for coords in t.slots.drain(keep..) {
                    if t.coeff == 0.0 {
                        break;
                    }
                    t.coeff *= moments.moment_sorted(&coords);
                }
                t.slots.truncate(keep);
                t
            })
            .collect();
        MixedKernel { arity: keep, terms, theta: Some(moments.model().clone()), canonical: false }.merged()
    }

    /// Full expectation `E[K]`.
    pub fn expectation(&self, moments: &GaussianMoments) -> f64 {
        self.partial_expectation(moments, 0).terms.iter().map(|t| t.coeff).sum()
    }

    /// Re-indexes slot `i` of `self` to slot `targets[i]` of a kernel of
    /// arity `arity`; the other slots are left unused.
    pub fn embed(&self, arity: usize, targets: &[usize]) -> MixedKernel {
        assert_eq!(targets.len(), self.arity);
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut slots = vec![Vec::new(); arity];
                for (src, &dst) in targets.iter().enumerate() {
                    slots[dst] = t.slots[src].clone();
                }
                KernelTerm { coeff: t.coeff, slots, consts: t.consts.clone() }
            })
            .collect();
        MixedKernel { arity, terms, theta: self.theta.clone(), canonical: false }.merged()
    }

    pub fn scaled(&self, factor: f64) -> MixedKernel {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= factor;
        }
        out.canonical = false;
        out.merged()
    }

    /// Sum of kernels of equal arity. Constants are folded first when the
    /// operands' models differ.
    pub fn plus(&self, other: &MixedKernel) -> MixedKernel {
        assert_eq!(self.arity, other.arity);
        let same_model = self.theta == other.theta;
        let (a, b) = if same_model { (self.clone(), other.clone()) } else { (self.bind(), other.bind()) };
        let theta = a.theta.clone().or(b.theta.clone());
        let mut terms = a.terms;
        terms.extend(b.terms);
        MixedKernel { arity: self.arity, terms, theta, canonical: false }.merged()
    }

    pub fn minus(&self, other: &MixedKernel) -> MixedKernel {
        self.plus(&other.scaled(-1.0))
    }

    /// Average over all slot permutations.
    pub fn symmetrize(&self) -> Result<MixedKernel> {
        if self.arity > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(self.arity));
        }
        let perms = permutations(self.arity);
        let w = 1.0 / perms.len() as f64;
        let mut terms = Vec::with_capacity(perms.len() * self.terms.len());
        for perm in &perms {
            for t in &self.terms {
                let mut slots = vec![Vec::new(); self.arity];
                for (src, &dst) in perm.iter().enumerate() {
                    slots[dst] = t.slots[src].clone();
                }
                terms.push(KernelTerm { coeff: t.coeff * w, slots, consts: t.consts.clone() });
            }
        }
        Ok(MixedKernel { arity: self.arity, terms, theta: self.theta.clone(), canonical: false }.merged())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.bind().terms.iter().map(|t| t.coeff.abs()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs_coeff() <= tol
    }

    /// Highest total data degree over terms.
    pub fn data_degree(&self) -> usize {
        self.terms.iter().map(KernelTerm::data_degree).max().unwrap_or(0)
    }
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..k).collect();
    let mut out = vec![cur.clone()];
    loop {
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Unbiased, unsymmetrized kernel: monomial `a · θ_{u1v1} ⋯ θ_{urvr}` maps to
/// `a · θ̂_{u1v1}(x_1) ⋯ θ̂_{urvr}(x_r)`; slots `r+1..m` are unused.
pub fn build_breve_h(f: &PolyConstraint) -> MixedKernel {
    let m = f.degree();
    let mut terms = vec![KernelTerm { coeff: f.constant(), slots: vec![Vec::new(); m], consts: Vec::new() }];
    for mono in f.monomials() {
        let mut slots = vec![Vec::new(); m];
        for (slot, pair) in mono.pairs.iter().enumerate() {
            slots[slot] = vec![pair.u(), pair.v()];
        }
        terms.push(KernelTerm { coeff: mono.coeff, slots, consts: Vec::new() });
    }
    MixedKernel { arity: m, terms, theta: None, canonical: false }.merged()
}

/// Symbolic symmetrized kernel `h`, expanded over all `m!` permutations.
pub fn symmetric_kernel_symbolic(f: &PolyConstraint) -> Result<MixedKernel> {
    build_breve_h(f).symmetrize()
}

/// Projection kernel `g(x) = E[h(x, X_2, …, X_m)]` written out directly:
/// `a0 + Σ a · (1/m) Σ_j θ⋯θ̂_{u_j v_j}(x)⋯θ + Σ a · (m−r)/m · θ⋯θ`,
/// where the last sum covers monomials of degree `r < m`, whose
/// permutations leave `x` in an unused slot.
pub fn projection_kernel(f: &PolyConstraint, model: &CovModel) -> Result<MixedKernel> {
    if model.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: model.dim() });
    }
    let m = f.degree();
    let mf = m as f64;
    let mut terms = vec![KernelTerm { coeff: f.constant(), slots: vec![Vec::new()], consts: Vec::new() }];
    for mono in f.monomials() {
        let r = mono.degree();
        for j in 0..r {
            let pair = mono.pairs[j];
            let mut consts = mono.pairs.clone();
            consts.remove(j);
            terms.push(KernelTerm { coeff: mono.coeff / mf, slots: vec![vec![pair.u(), pair.v()]], consts });
        }
        if r < m {
            terms.push(KernelTerm {
                coeff: mono.coeff * (m - r) as f64 / mf,
                slots: vec![Vec::new()],
                consts: mono.pairs.clone(),
            });
        }
    }
    MixedKernel::new(1, terms, Some(model.clone()))
}

/// `g(x)` at a single point.
pub fn eval_g(f: &PolyConstraint, model: &CovModel, x: &[f64]) -> Result<f64> {
    Ok(projection_kernel(f, model)?.eval(&[x]))
}

/// `P^{m-keep} h`: the symmetrized kernel with its last `m − keep` slots
/// integrated out.
pub fn partial_expectation(h: &MixedKernel, moments: &GaussianMoments, keep: usize) -> MixedKernel {
    h.partial_expectation(moments, keep)
}

/// Hoeffding projection `π_r(h)(x_1..x_r) = Σ_{S⊆[r]} (−1)^{r−|S|} (P^{m−|S|} h)(x_S)`.
///
/// The result is checked to be canonical: integrating any single slot yields
/// the zero kernel up to [`SYMBOLIC_ZERO_TOL`].
pub fn hoeffding_projection(f: &PolyConstraint, moments: &GaussianMoments, r: usize) -> Result<MixedKernel> {
    let h = symmetric_kernel_symbolic(f)?;
    hoeffding_projection_of(&h, moments, r)
}

/// As [`hoeffding_projection`] for an already symmetric kernel.
pub fn hoeffding_projection_of(h: &MixedKernel, moments: &GaussianMoments, r: usize) -> Result<MixedKernel> {
    let m = h.arity();
    if r == 0 || r > m {
        return Err(Error::Domain(format!("projection order {r} outside 1..={m}")));
    }
    let partials: Vec<MixedKernel> = (0..=r).map(|k| h.partial_expectation(moments, k)).collect();
    let mut acc = MixedKernel::constant(0.0, r);
    for mask in 0u32..(1 << r) {
        let subset: Vec<usize> = (0..r).filter(|&i| mask & (1 << i) != 0).collect();
        let sign = if (r - subset.len()) % 2 == 0 { 1.0 } else { -1.0 };
        acc = acc.plus(&partials[subset.len()].embed(r, &subset).scaled(sign));
    }
    let mut proj = acc.bind();
    let tol = SYMBOLIC_ZERO_TOL * h.max_abs_coeff().max(1.0);
    for slot in 0..r {
        let residual = proj.integrate_slot(moments, slot);
        if !residual.is_zero(tol) {
            return Err(Error::InternalConsistency(format!(
                "projection of order {r} is not canonical in slot {slot} (residual {:e})",
                residual.max_abs_coeff()
            )));
        }
    }
    proj.canonical = true;
    Ok(proj)
}

/// Fast evaluator of the symmetrized kernel `h` by averaging the unbiased
/// kernel over all `m!` argument orders at call time.
#[derive(Debug, Clone)]
pub struct SymmetricKernel {
    m: usize,
    a0: f64,
    // (coefficient, [(slot, u, v)])
    terms: Vec<(f64, Vec<(usize, usize, usize)>)>,
    perms: Vec<Vec<usize>>,
}

impl SymmetricKernel {
    pub fn new(f: &PolyConstraint) -> Result<Self> {
        let m = f.degree();
        if m > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(m));
        }
        let terms = f
            .monomials()
            .iter()
            .map(|mono| {
                let factors = mono.pairs.iter().enumerate().map(|(s, q)| (s, q.u(), q.v())).collect();
                (mono.coeff, factors)
            })
            .collect();
        Ok(SymmetricKernel { m, a0: f.constant(), terms, perms: permutations(m) })
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn eval(&self, xs: &[&[f64]]) -> f64 {
        assert_eq!(xs.len(), self.m, "kernel arity mismatch");
        self.eval_with(|slot| xs[slot])
    }

    /// `h(X_{idx[0]}, …, X_{idx[m-1]})`.
    #[inline]
    pub fn eval_rows(&self, x: &SampleMatrix, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.m);
        self.eval_with(|slot| x.row(idx[slot]))
    }

    #[inline]
    fn eval_with<'a>(&self, arg: impl Fn(usize) -> &'a [f64]) -> f64 {
        let perm_sum = |perm: &[usize]| {
            let mut s = 0.0;
            for (coeff, factors) in &self.terms {
                let mut v = *coeff;
                for &(slot, u, w) in factors {
                    let x = arg(perm[slot]);
                    v *= x[u] * x[w];
                }
                s += v;
            }
            s
        };
        // Permuting the arguments permutes the per-order sums; adding them in
        // sorted order makes the result bit-identical under permutation.
        let total = match self.perms.len() {
            1 => perm_sum(&self.perms[0]),
            2 => perm_sum(&self.perms[0]) + perm_sum(&self.perms[1]),
            _ => {
                let mut sums: Vec<f64> = self.perms.iter().map(|p| perm_sum(p)).collect();
                sums.sort_by(f64::total_cmp);
                sums.iter().sum()
            }
        };
        self.a0 + total / self.perms.len() as f64
    }
}

/// `h(x_1, …, x_m)` for the symmetrized kernel of `f`.
pub fn eval_h(f: &PolyConstraint, xs: &[&[f64]]) -> Result<f64> {
    let k = SymmetricKernel::new(f)?;
    if xs.len() != k.degree() {
        return Err(Error::DimensionMismatch { expected: k.degree(), found: xs.len() });
    }
    Ok(k.eval(xs))
}
