//! Exact Gaussian moments via Isserlis' theorem, the Wishart covariance
//! `V(Θ)`, and exact second moments of symbolic kernels.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;

use crate::covmodel::CovModel;
use crate::error::{Error, Result};
use crate::kernel::{self, MixedKernel};
use crate::poly::{pair_count, upper_pairs, GradientVector, PolyConstraint};
use crate::rng::{Purpose, SeedStream};

/// Sorted multiset of coordinate indices whose product is averaged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MomentKey(Vec<usize>);

impl MomentKey {
    pub fn new(mut coords: Vec<usize>) -> Self {
        coords.sort_unstable();
        MomentKey(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }
}

/// Memoized mixed moments `E[X_{i1} ⋯ X_{ik}]` of `X ~ N_p(0, Θ)`.
///
/// The recursion pairs the first coordinate with every remaining one; equal
/// coordinates give equal remainders, so each distinct value is visited once
/// and weighted by its multiplicity. Subresults are cached by sorted key.
/// The cache sits behind a mutex that is never held across recursion.
#[derive(Debug)]
pub struct GaussianMoments {
    model: CovModel,
    cache: Mutex<HashMap<Vec<usize>, f64>>,
}

impl Clone for GaussianMoments {
    fn clone(&self) -> Self {
        GaussianMoments::new(&self.model)
    }
}

impl GaussianMoments {
    pub fn new(model: &CovModel) -> Self {
        GaussianMoments { model: model.clone(), cache: Mutex::new(HashMap::new()) }
    }

    pub fn model(&self) -> &CovModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn moment(&self, key: &MomentKey) -> Result<f64> {
        let p = self.dim();
        if let Some(&bad) = key.coords().iter().find(|&&c| c >= p) {
            return Err(Error::Domain(format!("coordinate {bad} outside dimension {p}")));
        }
        Ok(self.moment_sorted(key.coords()))
    }

    /// Moment for an unsorted coordinate list.
    pub fn moment_of(&self, coords: &[usize]) -> Result<f64> {
        self.moment(&MomentKey::new(coords.to_vec()))
    }

    /// `key` must be sorted and in range.
    pub(crate) fn moment_sorted(&self, key: &[usize]) -> f64 {
        match key.len() {
            0 => return 1.0,
            k if k % 2 == 1 => return 0.0,
            2 => return self.model.entry(key[0], key[1]),
            _ => {}
        }
        if let Some(&v) = self.cache.lock().expect("moment cache poisoned").get(key) {
            return v;
        }
        let first = key[0];
        let rest = &key[1..];
        let mut total = 0.0;
        let mut scratch = Vec::with_capacity(rest.len() - 1);
        let mut j = 0;
        while j < rest.len() {
            let c = rest[j];
            let run = rest[j..].iter().take_while(|&&x| x == c).count();
            let cov = self.model.entry(first, c);
            if cov != 0.0 {
                scratch.clear();
                scratch.extend_from_slice(&rest[..j]);
                scratch.extend_from_slice(&rest[j + 1..]);
                total += run as f64 * cov * self.moment_sorted(&scratch);
            }
            j += run;
        }
        self.cache
            .lock()
            .expect("moment cache poisoned")
            .insert(key.to_vec(), total);
        total
    }

    /// `V(Θ)`.
    pub fn wishart_cov(&self) -> WishartCov {
        wishart_cov(&self.model)
    }

    /// `E[K]` under the model.
    pub fn kernel_mean(&self, k: &MixedKernel) -> f64 {
        k.expectation(self)
    }

    /// `E[K(X_1, …, X_r)²]` with i.i.d. arguments, computed exactly by
    /// expanding the square and factoring the expectation per argument slot.
    pub fn kernel_second_moment(&self, k: &MixedKernel) -> f64 {
        let k = k.bind();
        let terms = k.terms();
        let mut total = 0.0;
        let mut merged: Vec<usize> = Vec::new();
        for (i, a) in terms.iter().enumerate() {
            for b in &terms[i..] {
                let mut prod = a.coeff * b.coeff;
                for (sa, sb) in a.slots.iter().zip(&b.slots) {
                    if prod == 0.0 {
                        break;
                    }
                    merged.clear();
                    merged.extend_from_slice(sa);
                    merged.extend_from_slice(sb);
                    merged.sort_unstable();
                    prod *= self.moment_sorted(&merged);
                }
                total += if std::ptr::eq(a, b) { prod } else { 2.0 * prod };
            }
        }
        total
    }

    pub fn kernel_variance(&self, k: &MixedKernel) -> f64 {
        let mean = self.kernel_mean(k);
        self.kernel_second_moment(k) - mean * mean
    }
}

/// `E[Y_1 ⋯ Y_k]` for coordinates `key` of `X ~ N_p(0, Θ)` (odd orders give 0).
pub fn isserlis_moment(model: &CovModel, key: &MomentKey) -> Result<f64> {
    GaussianMoments::new(model).moment(key)
}

/// All partitions of `{0, …, k-1}` into unordered pairs, by pairing the first
/// unmatched element with each remaining one. Empty for odd `k`.
pub fn pair_partitions(k: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &[usize], current: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rest.is_empty() {
            out.push(current.clone());
            return;
        }
        let first = rest[0];
        for j in 1..rest.len() {
            current.push((first, rest[j]));
            let remaining: Vec<usize> = rest[1..]
                .iter()
                .enumerate()
                .filter(|&(i, _)| i + 1 != j)
                .map(|(_, &x)| x)
                .collect();
            rec(&remaining, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    if k % 2 == 0 {
        let all: Vec<usize> = (0..k).collect();
        rec(&all, &mut Vec::new(), &mut out);
    }
    out
}

/// Unmemoized Isserlis sum over every pair partition.
pub fn isserlis_by_enumeration(model: &CovModel, coords: &[usize]) -> f64 {
    if coords.len() % 2 == 1 {
        return 0.0;
    }
    pair_partitions(coords.len())
        .iter()
        .map(|part| {
            part.iter()
                .map(|&(a, b)| model.entry(coords[a], coords[b]))
                .product::<f64>()
        })
        .sum()
}

/// Covariance `V(Θ)` of the upper-diagonal entries of `X Xᵀ`:
/// `V_{uv,wz} = θ_uw θ_vz + θ_uz θ_vw`.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartCov {
    p: usize,
    matrix: DMatrix<f64>,
}

pub fn wishart_cov(model: &CovModel) -> WishartCov {
    wishart_cov_of(model.theta())
}

/// `V` built from any symmetric matrix (used with plug-in `Θ̂`).
pub fn wishart_cov_of(theta: &DMatrix<f64>) -> WishartCov {
    let p = theta.nrows();
    let pairs = upper_pairs(p);
    let d = pairs.len();
    let mut matrix = DMatrix::zeros(d, d);
    for (i, a) in pairs.iter().enumerate() {
        for (j, b) in pairs.iter().enumerate().skip(i) {
            let (u, v, w, z) = (a.u(), a.v(), b.u(), b.v());
            let x = theta[(u, w)] * theta[(v, z)] + theta[(u, z)] * theta[(v, w)];
            matrix[(i, j)] = x;
            matrix[(j, i)] = x;
        }
    }
    WishartCov { p, matrix }
}

impl WishartCov {
    pub fn dim(&self) -> usize {
        pair_count(self.p)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `∇fᵀ V ∇f`.
    pub fn quad_form(&self, grad: &GradientVector) -> f64 {
        let g = grad.as_slice();
        let mut acc = 0.0;
        for i in 0..g.len() {
            if g[i] == 0.0 {
                continue;
            }
            for j in 0..g.len() {
                acc += g[i] * self.matrix[(i, j)] * g[j];
            }
        }
        acc
    }

    pub fn is_positive_definite(&self) -> bool {
        nalgebra::Cholesky::new(self.matrix.clone()).is_some()
    }

    /// Ratio of extreme eigenvalues (infinite when the smallest is not positive).
    pub fn condition_number(&self) -> f64 {
        let eig = self.matrix.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }
}

/// `σ_g² = ∇f(Θ)ᵀ V(Θ) ∇f(Θ) / m²`.
pub fn sigma_g_squared(f: &PolyConstraint, model: &CovModel) -> Result<f64> {
    let m = f.degree() as f64;
    let grad = f.gradient(model.theta())?;
    Ok(wishart_cov(model).quad_form(&grad) / (m * m))
}

/// Relative tolerance of the dual-path `σ_g²` check.
pub const SIGMA_G_DUAL_PATH_TOL: f64 = 1e-10;

/// `σ_g²` by the gradient quadratic form, verified against the exact
/// Isserlis variance of the projection kernel `g`.
pub fn sigma_g_squared_checked(f: &PolyConstraint, moments: &GaussianMoments) -> Result<f64> {
    let g = kernel::projection_kernel(f, moments.model())?;
    sigma_g_squared_verified(f, moments, &g)
}

/// As [`sigma_g_squared_checked`] with a caller-supplied `g` kernel.
pub fn sigma_g_squared_verified(
    f: &PolyConstraint,
    moments: &GaussianMoments,
    g: &MixedKernel,
) -> Result<f64> {
    let quad = sigma_g_squared(f, moments.model())?;
    let exact = moments.kernel_variance(g);
    let scale = quad.abs().max(exact.abs());
    if (quad - exact).abs() > SIGMA_G_DUAL_PATH_TOL * scale + 1e-15 {
        return Err(Error::InternalConsistency(format!(
            "sigma_g^2 paths disagree: gradient form {quad:e} vs Isserlis {exact:e}"
        )));
    }
    Ok(quad)
}

/// `σ_h² = Var[h(X_1, …, X_m)]` from the symbolic symmetrized kernel.
pub fn sigma_h_squared(f: &PolyConstraint, moments: &GaussianMoments) -> Result<f64> {
    let h = kernel::symmetric_kernel_symbolic(f)?;
    Ok(moments.kernel_variance(&h))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Ingredients of the complete-U-statistic Berry–Esseen bound
/// `(1+√2)(m−1)σ_h / (√(m(n−m+1)) σ_g) + 6.1 E|g|³ / (√n σ_g³)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BerryEsseenDiagnostics {
    pub n: usize,
    pub m: usize,
    pub sigma_g2: f64,
    pub sigma_h2: f64,
    pub sigma_g: f64,
    pub sigma_h: f64,
    /// `σ_h / σ_g`, infinite when `σ_g = 0`.
    pub ratio: f64,
    pub ratio_infinite: bool,
    /// Exact first bound term (infinite when `σ_g = 0`).
    pub bound_term1: f64,
    /// Second bound term with `E|g|³` estimated by Monte Carlo.
    pub bound_term2: f64,
    pub bound_term2_se: f64,
    /// `E|g − E g|³`, always an estimate.
    pub abs_g3: McEstimate,
}

/// Default number of draws for the `E|g|³` estimate.
pub const DEFAULT_ABS_MOMENT_DRAWS: usize = 100_000;

pub fn be_diagnostics(
    f: &PolyConstraint,
    moments: &GaussianMoments,
    n: usize,
    mc_draws: usize,
    seed: SeedStream,
) -> Result<BerryEsseenDiagnostics> {
    let m = f.degree();
    if n < m {
        return Err(Error::InsufficientSample { n, required: m });
    }
    let g = kernel::projection_kernel(f, moments.model())?;
    let sigma_g2 = sigma_g_squared_verified(f, moments, &g)?.max(0.0);
    let sigma_h2 = sigma_h_squared(f, moments)?;
    let (sigma_g, sigma_h) = (sigma_g2.sqrt(), sigma_h2.max(0.0).sqrt());
    let ratio_infinite = sigma_g == 0.0;
    let ratio = if ratio_infinite { f64::INFINITY } else { sigma_h / sigma_g };

    let abs_g3 = abs_third_moment(&g, moments, mc_draws, seed);
    let (mf, nf) = (m as f64, n as f64);
    let (bound_term1, bound_term2, bound_term2_se) = if ratio_infinite {
        (f64::INFINITY, f64::INFINITY, f64::NAN)
    } else {
        let t1 = (1.0 + 2f64.sqrt()) * (mf - 1.0) * sigma_h / ((mf * (nf - mf + 1.0)).sqrt() * sigma_g);
        let scale = 6.1 / (nf.sqrt() * sigma_g.powi(3));
        (t1, scale * abs_g3.mean, scale * abs_g3.std_error)
    };
    Ok(BerryEsseenDiagnostics {
        n,
        m,
        sigma_g2,
        sigma_h2,
        sigma_g,
        sigma_h,
        ratio,
        ratio_infinite,
        bound_term1,
        bound_term2,
        bound_term2_se,
        abs_g3,
    })
}

fn abs_third_moment(g: &MixedKernel, moments: &GaussianMoments, draws: usize, seed: SeedStream) -> McEstimate {
    let mean_g = moments.kernel_mean(g);
    let mut rng = seed.rng(Purpose::MonteCarlo, 0);
    let x = moments.model().sample(draws.max(2), &mut rng);
    let vals: Vec<f64> = x.rows().map(|row| (g.eval(&[row]) - mean_g).abs().powi(3)).collect();
    mean_and_se(&vals)
}

pub fn mean_and_se(vals: &[f64]) -> McEstimate {
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    McEstimate { mean, std_error: (var / k).sqrt(), draws: vals.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::PairIndex;
    use proptest::prelude::*;

    fn factorial(k: usize) -> usize {
        (1..=k).product()
    }

    #[test]
    fn partition_counts() {
        for r in 1..=5 {
            let want = factorial(2 * r) / (2usize.pow(r as u32) * factorial(r));
            assert_eq!(pair_partitions(2 * r).len(), want);
        }
        assert_eq!(pair_partitions(4).len(), 3);
        assert_eq!(pair_partitions(8).len(), 105);
        assert!(pair_partitions(3).is_empty());
    }

    #[test]
    fn identity_base_cases() {
        let id = CovModel::identity(4).unwrap();
        let mm = GaussianMoments::new(&id);
        assert_eq!(mm.moment_of(&[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(mm.moment_of(&[2, 2, 2, 2]).unwrap(), 3.0);
        assert_eq!(mm.moment_of(&[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(mm.moment_of(&[]).unwrap(), 1.0);
        assert!(mm.moment_of(&[0, 4]).is_err());
        let equi = CovModel::equicorrelation(3, 0.3).unwrap();
        let me = GaussianMoments::new(&equi);
        assert_eq!(me.moment_of(&[0, 2]).unwrap(), 0.3);
        assert_eq!(me.moment_of(&[1]).unwrap(), 0.0);
    }

    #[test]
    fn wishart_identity_structure() {
        let id = CovModel::identity(3).unwrap();
        let v = wishart_cov(&id);
        let pairs = upper_pairs(3);
        for (i, a) in pairs.iter().enumerate() {
            for (j, _) in pairs.iter().enumerate() {
                let want = match (i == j, a.u() == a.v()) {
                    (true, true) => 2.0,
                    (true, false) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(v.matrix()[(i, j)], want);
            }
        }
        assert!(v.is_positive_definite());
    }

    #[test]
    fn monomial_sigma_g_at_identity() {
        let f = PolyConstraint::new(2, 0.0, [(1.0, vec![PairIndex::new(0, 1)])]).unwrap();
        let id = CovModel::identity(2).unwrap();
        assert_eq!(sigma_g_squared(&f, &id).unwrap(), 1.0);
        let mm = GaussianMoments::new(&id);
        assert!((sigma_g_squared_checked(&f, &mm).unwrap() - 1.0).abs() < 1e-15);
        assert!((sigma_h_squared(&f, &mm).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tetrad_singular_at_identity() {
        let f = PolyConstraint::tetrad(4, 0, 1, 2, 3).unwrap();
        let mm = GaussianMoments::new(&CovModel::identity(4).unwrap());
        assert_eq!(sigma_g_squared_checked(&f, &mm).unwrap(), 0.0);
        assert!((sigma_h_squared(&f, &mm).unwrap() - 1.0).abs() < 1e-14);
        let d = be_diagnostics(&f, &mm, 100, 2000, SeedStream::new(1)).unwrap();
        assert!(d.ratio_infinite && d.ratio.is_infinite());
    }

    #[test]
    fn tetrad_dual_path_on_equicorrelation() {
        let f = PolyConstraint::tetrad(4, 0, 1, 2, 3).unwrap();
        for rho in [0.04, 0.2, 0.5] {
            let mm = GaussianMoments::new(&CovModel::equicorrelation(4, rho).unwrap());
            let s = sigma_g_squared_checked(&f, &mm).unwrap();
            assert!(s > 0.0);
        }
    }

    #[test]
    fn be_first_term_is_vacuous_near_singularity() {
        let f = PolyConstraint::tetrad(4, 0, 1, 2, 3).unwrap();
        let near = GaussianMoments::new(&CovModel::equicorrelation(4, 0.04).unwrap());
        let far = GaussianMoments::new(&CovModel::equicorrelation(4, 0.5).unwrap());
        let d_near = be_diagnostics(&f, &near, 100, 2000, SeedStream::new(3)).unwrap();
        let d_far = be_diagnostics(&f, &far, 400, 2000, SeedStream::new(3)).unwrap();
        assert!(d_near.bound_term1 > 1.0);
        assert!(d_far.bound_term1 < d_near.bound_term1);
    }

    #[test]
    fn concurrent_moment_queries_agree() {
        let model = CovModel::equicorrelation(5, 0.3).unwrap();
        let shared = GaussianMoments::new(&model);
        let keys: Vec<Vec<usize>> = (0..40)
            .map(|i| (0..8).map(|j| (i * 7 + j * 3) % 5).collect())
            .collect();
        let results: Vec<Vec<f64>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| s.spawn(|| keys.iter().map(|k| shared.moment_of(k).unwrap()).collect()))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for k in &keys {
            let fresh = isserlis_by_enumeration(&model, k);
            for r in &results {
                let got = r[keys.iter().position(|x| x == k).unwrap()];
                assert!((got - fresh).abs() <= 1e-12 * (1.0 + fresh.abs()));
            }
        }
    }

    fn arb_model(p: usize) -> impl Strategy<Value = CovModel> {
        prop::collection::vec(-1.0..1.0f64, p * p).prop_map(move |v| {
            let a = DMatrix::from_vec(p, p, v);
            CovModel::new(&a * a.transpose() + DMatrix::identity(p, p) * 0.3).unwrap()
        })
    }

    proptest! {
        #[test]
        fn memoized_matches_enumeration(
            (model, key) in (2usize..=5).prop_flat_map(|p| (arb_model(p), prop::collection::vec(0..p, 0..=8)))
        ) {
            let fast = GaussianMoments::new(&model).moment_of(&key).unwrap();
            let slow = isserlis_by_enumeration(&model, &key);
            prop_assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow.abs()));
            if key.len() % 2 == 1 {
                prop_assert_eq!(fast, 0.0);
            }
        }

        #[test]
        fn moment_is_permutation_invariant(
            (model, key) in (2usize..=4).prop_flat_map(|p| (arb_model(p), prop::collection::vec(0..p, 6)))
        ) {
            let mut rev = key.clone();
            rev.reverse();
            let a = isserlis_by_enumeration(&model, &key);
            let b = isserlis_by_enumeration(&model, &rev);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn wishart_matches_isserlis_covariance(model in (2usize..=5).prop_flat_map(arb_model)) {
            let v = wishart_cov(&model);
            let mm = GaussianMoments::new(&model);
            let pairs = upper_pairs(model.dim());
            for (i, a) in pairs.iter().enumerate() {
                for (j, b) in pairs.iter().enumerate() {
                    let cov = mm.moment_of(&[a.u(), a.v(), b.u(), b.v()]).unwrap()
                        - model.entry(a.u(), a.v()) * model.entry(b.u(), b.v());
                    prop_assert!((cov - v.matrix()[(i, j)]).abs() <= 1e-12 * (1.0 + cov.abs()));
                }
            }
            prop_assert!(v.is_positive_definite());
        }
    }
}
