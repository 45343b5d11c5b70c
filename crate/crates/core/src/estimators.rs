//! U-statistics and test statistics for `H: f(Θ) = 0`.
//!
//! * complete `U_n`, Bernoulli-sampled incomplete `U′_{n,N}`, block `S_{⌊n/m⌋}`
//! * projection U-statistics `U_n^{(r)}` of the Hoeffding decomposition
//! * Wald statistics `T_f` (true normalizer) and `T̂_f` (plug-in)
//! * `√n U′/σ` and `√n U′/σ̂`, with `σ² = m²σ_g² + (n/N)σ_h²`
//! * the `W_n`, `B_n` rewrite of the incomplete statistic

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covmodel::{CovModel, SampleMatrix};
use crate::error::{Error, Result};
use crate::kernel::{self, MixedKernel, SymmetricKernel};
use crate::poly::PolyConstraint;
use crate::rng::{Purpose, SeedStream};
use crate::wick::{self, wishart_cov, wishart_cov_of, GaussianMoments};

/// `C(n, k)` as a float (exact for the sizes used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

/// Visits every increasing `m`-tuple of `0..n` in lexicographic order.
pub fn for_each_tuple(n: usize, m: usize, mut visit: impl FnMut(&[usize])) {
    if m > n {
        return;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..m).rev().find(|&i| idx[i] < n - m + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn require_sample(n: usize, required: usize) -> Result<()> {
    if n < required {
        Err(Error::InsufficientSample { n, required })
    } else {
        Ok(())
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Which tail rejects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sidedness {
    #[default]
    Two,
    Right,
}

impl Sidedness {
    /// Critical value of a level-`alpha` test against `N(0, 1)`.
    pub fn critical_value(self, alpha: f64) -> f64 {
        let q = match self {
            Sidedness::Two => 1.0 - alpha / 2.0,
            Sidedness::Right => 1.0 - alpha,
        };
        std_normal().inverse_cdf(q)
    }

    pub fn pvalue(self, z: f64) -> f64 {
        match self {
            Sidedness::Two => (2.0 * std_normal().sf(z.abs())).min(1.0),
            Sidedness::Right => std_normal().sf(z),
        }
    }

    pub fn rejects(self, z: f64, critical: f64) -> bool {
        match self {
            Sidedness::Two => z.abs() > critical,
            Sidedness::Right => z > critical,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sidedness::Two => "two",
            Sidedness::Right => "right",
        }
    }
}

/// Computational budget for Bernoulli sampling of `m`-tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPlan {
    n: usize,
    m: usize,
    budget: u64,
    total: f64,
    seed: SeedStream,
    index: u64,
    attempt: u64,
}

impl BudgetPlan {
    /// `budget` is `N`; tuples are flipped on the `Sampling` stream `index`.
    pub fn new(n: usize, m: usize, budget: u64, seed: SeedStream, index: u64) -> Result<Self> {
        require_sample(n, m.max(1))?;
        let total = binomial(n, m);
        if budget == 0 || budget as f64 > total {
            return Err(Error::Config(format!(
                "budget N = {budget} must lie in 1..=C({n},{m}) = {total}"
            )));
        }
        Ok(BudgetPlan { n, m, budget, total, seed, index, attempt: 0 })
    }

    /// Budget covering every tuple (`p = 1`).
    pub fn complete(n: usize, m: usize, seed: SeedStream, index: u64) -> Result<Self> {
        Self::new(n, m, binomial(n, m) as u64, seed, index)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn total_tuples(&self) -> f64 {
        self.total
    }

    pub fn seed(&self) -> SeedStream {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn attempt(&self) -> u64 {
        self.attempt
    }

    /// `p_{n,N} = N / C(n, m)`.
    pub fn p_sample(&self) -> f64 {
        self.budget as f64 / self.total
    }

    /// `α_n = n / N`.
    pub fn alpha_n(&self) -> f64 {
        self.n as f64 / self.budget as f64
    }

    /// The same plan on a fresh sampling stream.
    pub fn redraw(&self) -> BudgetPlan {
        BudgetPlan { attempt: self.attempt + 1, ..self.clone() }
    }

    /// Flips one Bernoulli(`p`) per tuple in lexicographic order.
    pub fn draw_selection(&self) -> Selection {
        let p = self.p_sample();
        let mut rng = self.seed.rng_attempt(Purpose::Sampling, self.index, self.attempt);
        let mut ordinals = Vec::new();
        let mut tuples = Vec::new();
        let mut ordinal = 0u64;
        for_each_tuple(self.n, self.m, |t| {
            if rng.random::<f64>() < p {
                ordinals.push(ordinal);
                tuples.extend_from_slice(t);
            }
            ordinal += 1;
        });
        Selection { n: self.n, m: self.m, ordinals, tuples }
    }
}

/// Tuples selected by the Bernoulli design (`Z = 1`), in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    n: usize,
    m: usize,
    ordinals: Vec<u64>,
    tuples: Vec<usize>,
}

impl Selection {
    /// Selection given by increasing lexicographic ordinals.
    pub fn from_ordinals(n: usize, m: usize, mut ordinals: Vec<u64>) -> Self {
        ordinals.sort_unstable();
        ordinals.dedup();
        let mut tuples = Vec::with_capacity(ordinals.len() * m);
        let mut next = 0;
        let mut ordinal = 0u64;
        for_each_tuple(n, m, |t| {
            if next < ordinals.len() && ordinals[next] == ordinal {
                tuples.extend_from_slice(t);
                next += 1;
            }
            ordinal += 1;
        });
        ordinals.truncate(next);
        Selection { n, m, ordinals, tuples }
    }

    pub fn nhat(&self) -> usize {
        self.ordinals.len()
    }

    pub fn ordinals(&self) -> &[u64] {
        &self.ordinals
    }

    pub fn tuples(&self) -> impl Iterator<Item = &[usize]> {
        self.tuples.chunks_exact(self.m.max(1))
    }
}

/// Complete U-statistic `U_n = C(n,m)⁻¹ Σ h(X_i1, …, X_im)`.
pub fn complete_ustat(h: &SymmetricKernel, x: &SampleMatrix) -> Result<f64> {
    let m = h.degree();
    require_sample(x.n(), m)?;
    let mut sum = CompensatedSum::default();
    for_each_tuple(x.n(), m, |t| sum.add(h.eval_rows(x, t)));
    Ok(sum.value() / binomial(x.n(), m))
}

/// Result of one Bernoulli-sampled incomplete U-statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteDraw {
    /// `U′_{n,N} = N̂⁻¹ Σ Z h`.
    pub value: f64,
    pub nhat: usize,
    pub selection: Selection,
    /// Kernel values of the selected tuples, in selection order.
    pub evaluations: Vec<f64>,
}

/// Incomplete U-statistic under Bernoulli sampling; `N̂ = 0` is an error.
pub fn incomplete_ustat(h: &SymmetricKernel, x: &SampleMatrix, plan: &BudgetPlan) -> Result<IncompleteDraw> {
    check_plan(h, x, plan)?;
    let selection = plan.draw_selection();
    incomplete_from_selection(h, x, selection)
}

fn check_plan(h: &SymmetricKernel, x: &SampleMatrix, plan: &BudgetPlan) -> Result<()> {
    require_sample(x.n(), h.degree())?;
    if plan.n() != x.n() || plan.degree() != h.degree() {
        return Err(Error::Config(format!(
            "plan for (n={}, m={}) used with (n={}, m={})",
            plan.n(),
            plan.degree(),
            x.n(),
            h.degree()
        )));
    }
    Ok(())
}

pub fn incomplete_from_selection(h: &SymmetricKernel, x: &SampleMatrix, selection: Selection) -> Result<IncompleteDraw> {
    let nhat = selection.nhat();
    if nhat == 0 {
        return Err(Error::EmptySelection);
    }
    let evaluations: Vec<f64> = selection.tuples().map(|t| h.eval_rows(x, t)).collect();
    let mut sum = CompensatedSum::default();
    evaluations.iter().for_each(|&v| sum.add(v));
    let value = sum.value() / nhat as f64;
    Ok(IncompleteDraw { value, nhat, selection, evaluations })
}

/// Neumaier summation.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// `W_n`, `B_n` and `U_n` recomputed from the Bernoulli draws of a selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WnBn {
    pub w_n: f64,
    pub b_n: f64,
    pub u_n: f64,
}

/// `B_n = N⁻¹ Σ (Z − p)/√(1−p) · h` and `W_n = U_n + √(1−p) B_n`.
/// Undefined for `p = 1`.
pub fn wn_bn_decompose(
    h: &SymmetricKernel,
    x: &SampleMatrix,
    plan: &BudgetPlan,
    selection: &Selection,
) -> Result<WnBn> {
    check_plan(h, x, plan)?;
    let p = plan.p_sample();
    if p >= 1.0 {
        return Err(Error::Domain("B_n is undefined when every tuple is sampled (p = 1)".into()));
    }
    let scale = (1.0 - p).sqrt();
    let chosen = selection.ordinals();
    let (mut next, mut ordinal) = (0usize, 0u64);
    let (mut sum_h, mut sum_b) = (CompensatedSum::default(), CompensatedSum::default());
    for_each_tuple(x.n(), h.degree(), |t| {
        let z = if next < chosen.len() && chosen[next] == ordinal {
            next += 1;
            1.0
        } else {
            0.0
        };
        let hv = h.eval_rows(x, t);
        sum_h.add(hv);
        sum_b.add((z - p) / scale * hv);
        ordinal += 1;
    });
    let u_n = sum_h.value() / plan.total_tuples();
    let b_n = sum_b.value() / plan.budget() as f64;
    Ok(WnBn { w_n: u_n + scale * b_n, b_n, u_n })
}

/// `S_{⌊n/m⌋}`: mean of `h` over disjoint consecutive batches.
pub fn block_estimator(h: &SymmetricKernel, x: &SampleMatrix) -> Result<f64> {
    let m = h.degree();
    require_sample(x.n(), m)?;
    let batches = x.n() / m;
    let mut idx = vec![0usize; m];
    let mut sum = 0.0;
    for b in 0..batches {
        for (j, slot) in idx.iter_mut().enumerate() {
            *slot = b * m + j;
        }
        sum += h.eval_rows(x, &idx);
    }
    Ok(sum / batches as f64)
}

/// U-statistic of an arbitrary symbolic kernel over increasing tuples.
pub fn ustat_of_kernel(k: &MixedKernel, x: &SampleMatrix) -> Result<f64> {
    let r = k.arity();
    require_sample(x.n(), r)?;
    let mut sum = 0.0;
    let mut rows: Vec<&[f64]> = Vec::with_capacity(r);
    for_each_tuple(x.n(), r, |t| {
        rows.clear();
        rows.extend(t.iter().map(|&i| x.row(i)));
        sum += k.eval(&rows);
    });
    Ok(sum / binomial(x.n(), r))
}

/// Projection U-statistic `U_n^{(r)}` with kernel `π_r(h)`.
pub fn projection_ustat(f: &PolyConstraint, moments: &GaussianMoments, x: &SampleMatrix, r: usize) -> Result<f64> {
    require_sample(x.n(), f.degree())?;
    let proj = kernel::hoeffding_projection(f, moments, r)?;
    ustat_of_kernel(&proj, x)
}

/// Variance ingredients recorded with a test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VarianceComponents {
    /// `σ_g²` or its (truncated) estimate.
    pub sigma_g2: Option<f64>,
    /// Untruncated `σ̂_g²`, for studentized statistics.
    pub sigma_g2_raw: Option<f64>,
    /// `σ_h²` or its estimate.
    pub sigma_h2: Option<f64>,
    /// Squared normalizer of the statistic.
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    /// Unnormalized estimate (`f(Θ̂)`, `U′`, or `S`).
    pub statistic: f64,
    /// Standard deviation used to normalize `√n · statistic` (or `√⌊n/m⌋ · S`).
    pub normalizer: f64,
    pub zscore: f64,
    pub pvalue_two_sided: f64,
    pub nhat: Option<usize>,
    pub components: VarianceComponents,
}

impl TestOutcome {
    fn new(statistic: f64, root_n: f64, normalizer: f64, nhat: Option<usize>, components: VarianceComponents) -> Self {
        let zscore = root_n * statistic / normalizer;
        TestOutcome {
            statistic,
            normalizer,
            zscore,
            pvalue_two_sided: Sidedness::Two.pvalue(zscore),
            nhat,
            components,
        }
    }

    pub fn pvalue(&self, sided: Sidedness) -> f64 {
        sided.pvalue(self.zscore)
    }

    pub fn rejects(&self, alpha: f64, sided: Sidedness) -> bool {
        sided.rejects(self.zscore, sided.critical_value(alpha))
    }
}

/// Exact population quantities at the true `Θ`, computed once per model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueMoments {
    pub m: usize,
    /// `σ_g²`, verified by both computation paths.
    pub sigma_g2: f64,
    pub sigma_h2: f64,
    /// `∇f(Θ)ᵀ V(Θ) ∇f(Θ) = m² σ_g²`.
    pub wald_variance: f64,
}

impl TrueMoments {
    pub fn compute(f: &PolyConstraint, model: &CovModel) -> Result<Self> {
        let moments = GaussianMoments::new(model);
        let sigma_g2 = wick::sigma_g_squared_checked(f, &moments)?;
        let sigma_h2 = wick::sigma_h_squared(f, &moments)?;
        if !(sigma_h2 > 0.0) {
            return Err(Error::InternalConsistency(format!(
                "sigma_h^2 = {sigma_h2:e} is not positive for a non-constant constraint"
            )));
        }
        Ok(TrueMoments { m: f.degree(), sigma_g2, sigma_h2, wald_variance: wald_variance(f, model)? })
    }

    /// `σ² = m² σ_g² + α_n σ_h²`.
    pub fn sigma2(&self, alpha_n: f64) -> f64 {
        let m = self.m as f64;
        m * m * self.sigma_g2 + alpha_n * self.sigma_h2
    }
}

/// `∇f(Θ)ᵀ V(Θ) ∇f(Θ)`.
pub fn wald_variance(f: &PolyConstraint, model: &CovModel) -> Result<f64> {
    let grad = f.gradient(model.theta())?;
    Ok(wishart_cov(model).quad_form(&grad))
}

/// `T_f = √n f(Θ̂) / √(∇f(Θ)ᵀ V(Θ) ∇f(Θ))`.
pub fn wald_standardized(f: &PolyConstraint, model: &CovModel, x: &SampleMatrix) -> Result<TestOutcome> {
    wald_standardized_with(f, wald_variance(f, model)?, x)
}

/// `T_f` with a precomputed limiting variance.
pub fn wald_standardized_with(f: &PolyConstraint, variance: f64, x: &SampleMatrix) -> Result<TestOutcome> {
    if !(variance > 0.0) {
        return Err(Error::SingularHypothesis);
    }
    let stat = f.evaluate(&x.covariance())?;
    Ok(TestOutcome::new(
        stat,
        (x.n() as f64).sqrt(),
        variance.sqrt(),
        None,
        VarianceComponents { sigma2: variance, ..Default::default() },
    ))
}

/// `T̂_f`: the Wald statistic with `Θ̂` plugged into the normalizer.
pub fn wald_studentized(f: &PolyConstraint, x: &SampleMatrix) -> Result<TestOutcome> {
    let theta_hat = x.covariance();
    let stat = f.evaluate(&theta_hat)?;
    let grad = f.gradient(&theta_hat)?;
    let variance = wishart_cov_of(&theta_hat).quad_form(&grad);
    if !(variance > 0.0) {
        return Err(Error::UndefinedStudentizer);
    }
    Ok(TestOutcome::new(
        stat,
        (x.n() as f64).sqrt(),
        variance.sqrt(),
        None,
        VarianceComponents { sigma2: variance, ..Default::default() },
    ))
}

/// `√n U_n / (m σ_g)`; refused at a singular hypothesis.
pub fn complete_standardized(h: &SymmetricKernel, truth: &TrueMoments, x: &SampleMatrix) -> Result<TestOutcome> {
    if !(truth.sigma_g2 > 0.0) {
        return Err(Error::SingularHypothesis);
    }
    let u = complete_ustat(h, x)?;
    let sigma = truth.m as f64 * truth.sigma_g2.sqrt();
    Ok(TestOutcome::new(
        u,
        (x.n() as f64).sqrt(),
        sigma,
        None,
        VarianceComponents { sigma_g2: Some(truth.sigma_g2), sigma_h2: Some(truth.sigma_h2), sigma2: sigma * sigma, ..Default::default() },
    ))
}

/// `√⌊n/m⌋ S_{⌊n/m⌋} / σ_h`.
pub fn block_standardized(h: &SymmetricKernel, truth: &TrueMoments, x: &SampleMatrix) -> Result<TestOutcome> {
    let s = block_estimator(h, x)?;
    let batches = (x.n() / h.degree()) as f64;
    Ok(TestOutcome::new(
        s,
        batches.sqrt(),
        truth.sigma_h2.sqrt(),
        None,
        VarianceComponents { sigma_h2: Some(truth.sigma_h2), sigma2: truth.sigma_h2, ..Default::default() },
    ))
}

/// `√n U′ / σ` with the exact `σ² = m²σ_g² + (n/N)σ_h²`.
pub fn icu_standardized(
    h: &SymmetricKernel,
    truth: &TrueMoments,
    x: &SampleMatrix,
    plan: &BudgetPlan,
) -> Result<TestOutcome> {
    let draw = incomplete_ustat(h, x, plan)?;
    Ok(icu_standardized_from(&draw, truth, plan))
}

pub fn icu_standardized_from(draw: &IncompleteDraw, truth: &TrueMoments, plan: &BudgetPlan) -> TestOutcome {
    let sigma2 = truth.sigma2(plan.alpha_n());
    TestOutcome::new(
        draw.value,
        (plan.n() as f64).sqrt(),
        sigma2.sqrt(),
        Some(draw.nhat),
        VarianceComponents {
            sigma_g2: Some(truth.sigma_g2),
            sigma_h2: Some(truth.sigma_h2),
            sigma2,
            ..Default::default()
        },
    )
}

/// `√n U′ / σ̂` with the divide-and-conquer studentizer.
///
/// `groups` is the number of disjoint `(m−1)`-tuples averaged on each side
/// of the studentizer; 0 uses as many as the sample allows.
pub fn icu_studentized(h: &SymmetricKernel, x: &SampleMatrix, plan: &BudgetPlan, groups: usize) -> Result<TestOutcome> {
    let draw = incomplete_ustat(h, x, plan)?;
    icu_studentized_from(&draw, h, x, plan, groups)
}

pub fn icu_studentized_from(
    draw: &IncompleteDraw,
    h: &SymmetricKernel,
    x: &SampleMatrix,
    plan: &BudgetPlan,
    groups: usize,
) -> Result<TestOutcome> {
    let m = h.degree();
    let mut rng = plan.seed().rng_attempt(Purpose::Studentizer, plan.index(), plan.attempt());
    let raw_g2 = sigma_g2_divide_and_conquer(h, x, draw, groups, &mut rng)?;
    let sigma_h2 = sample_variance(&draw.evaluations);
    let sigma_g2 = raw_g2.max(0.0);
    let mf = m as f64;
    let sigma2 = mf * mf * sigma_g2 + plan.alpha_n() * sigma_h2;
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateStudentizer);
    }
    Ok(TestOutcome::new(
        draw.value,
        (plan.n() as f64).sqrt(),
        sigma2.sqrt(),
        Some(draw.nhat),
        VarianceComponents {
            sigma_g2: Some(sigma_g2),
            sigma_g2_raw: Some(raw_g2),
            sigma_h2: Some(sigma_h2),
            sigma2,
        },
    ))
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0)
}

/// Largest number of disjoint `(m−1)`-tuples per side for sample size `n`.
pub fn max_studentizer_groups(n: usize, m: usize) -> usize {
    if m <= 1 {
        1
    } else {
        (n.saturating_sub(1) / (2 * (m - 1))).max(1)
    }
}

/// `n⁻¹ Σ ĝ₁(i) ĝ₂(i)`, the cross moment of the divide-and-conquer scheme.
///
/// Rows are placed on a random cycle. For the row at cycle position `k` the
/// following positions are cut into consecutive `(m−1)`-tuples; `ĝ₁` averages
/// `h(X_k, ·)` over the first `groups` tuples and `ĝ₂` over the next `groups`.
/// Given `X_k` the two are independent, each with mean `E[h | X_k]`.
pub fn divide_and_conquer_cross_moment<R: Rng + ?Sized>(
    h: &SymmetricKernel,
    x: &SampleMatrix,
    groups: usize,
    rng: &mut R,
) -> Result<f64> {
    let m = h.degree();
    let n = x.n();
    require_sample(n, (3 * m).saturating_sub(2).max(2))?;
    let max = max_studentizer_groups(n, m);
    let groups = if groups == 0 { max } else { groups };
    if groups > max {
        return Err(Error::Config(format!(
            "{groups} studentizer groups need n >= {}, got n = {n}",
            2 * groups * (m - 1) + 1
        )));
    }
    let mut cycle: Vec<usize> = (0..n).collect();
    cycle.shuffle(rng);

    let at = |k: usize| cycle[k % n];
    let mut idx = vec![0usize; m];
    let mut cross = 0.0;
    for k in 0..n {
        idx[0] = at(k);
        let mut side = [0.0; 2];
        for (s, total) in side.iter_mut().enumerate() {
            for l in 0..groups {
                let base = k + 1 + (s * groups + l) * (m - 1);
                for j in 1..m {
                    idx[j] = at(base + j - 1);
                }
                *total += h.eval_rows(x, &idx);
            }
        }
        cross += side[0] * side[1] / (groups * groups) as f64;
    }
    Ok(cross / n as f64)
}

/// Average of `h_a h_b` over ordered pairs of selected tuples with disjoint
/// index sets: an unbiased estimate of `f(Θ)²`.
pub fn disjoint_product_mean(draw: &IncompleteDraw) -> Result<f64> {
    use std::collections::BTreeMap;

    let e = &draw.evaluations;
    let s: f64 = e.iter().sum();
    let s2: f64 = e.iter().map(|v| v * v).sum();
    let k = e.len() as f64;
    // Inclusion-exclusion over shared index subsets removes every ordered
    // pair of distinct tuples that overlap.
    let mut by_subset: BTreeMap<Vec<usize>, (f64, f64, f64)> = BTreeMap::new();
    let mut sub = Vec::new();
    for (t, &v) in draw.selection.tuples().zip(e) {
        let m = t.len();
        for mask in 1u32..(1 << m) - 1 {
            sub.clear();
            sub.extend((0..m).filter(|b| mask >> b & 1 == 1).map(|b| t[b]));
            let entry = by_subset.entry(sub.clone()).or_insert((0.0, 0.0, 0.0));
            entry.0 += v;
            entry.1 += v * v;
            entry.2 += 1.0;
        }
    }
    let (mut overlap_sum, mut overlap_count) = (0.0, 0.0);
    for (subset, (t, t2, c)) in &by_subset {
        let sign = if subset.len() % 2 == 1 { 1.0 } else { -1.0 };
        overlap_sum += sign * (t * t - t2);
        overlap_count += sign * (c * c - c);
    }
    let pairs = k * k - k - overlap_count;
    if pairs < 0.5 {
        return Err(Error::DegenerateStudentizer);
    }
    Ok((s * s - s2 - overlap_sum) / pairs)
}

/// Untruncated divide-and-conquer estimate of `σ_g²`: the cross moment minus
/// the disjoint-pair estimate of `f(Θ)²` from the selected tuples.
pub fn sigma_g2_divide_and_conquer<R: Rng + ?Sized>(
    h: &SymmetricKernel,
    x: &SampleMatrix,
    draw: &IncompleteDraw,
    groups: usize,
    rng: &mut R,
) -> Result<f64> {
    let cross = divide_and_conquer_cross_moment(h, x, groups, rng)?;
    Ok(cross - disjoint_product_mean(draw)?)
}
