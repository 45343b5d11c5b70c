//! Seeded Monte Carlo harness: empirical size curves, KS checks, n-sweeps and
//! Berry–Esseen diagnostic reports.
//!
//! Replicate `r` draws its data from the `Data` stream `r` and its Bernoulli
//! design from the `Sampling` stream `r`, so results do not depend on the
//! thread count or on scheduling.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covmodel::{sample_gaussian, CovModel};
use crate::error::{Error, Result};
use crate::estimators::{self, binomial, BudgetPlan, Sidedness, TrueMoments};
use crate::kernel::SymmetricKernel;
use crate::poly::PolyConstraint;
use crate::rng::{Purpose, SeedStream};
use crate::wick::{self, BerryEsseenDiagnostics, GaussianMoments};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `Ψ + LLᵀ` with explicit uniquenesses.
    OneFactor { loadings: Vec<f64>, uniqueness: Vec<f64> },
    /// `Ψ = I − diag(L²)`.
    OneFactorUnitDiagonal { loadings: Vec<f64> },
    Equicorrelation { p: usize, rho: f64 },
    Identity { p: usize },
    Explicit(DMatrix<f64>),
}

impl ModelSpec {
    pub fn build(&self) -> Result<CovModel> {
        match self {
            ModelSpec::OneFactor { loadings, uniqueness } => CovModel::one_factor(loadings, uniqueness),
            ModelSpec::OneFactorUnitDiagonal { loadings } => CovModel::one_factor_unit_diagonal(loadings),
            ModelSpec::Equicorrelation { p, rho } => CovModel::equicorrelation(*p, *rho),
            ModelSpec::Identity { p } => CovModel::identity(*p),
            ModelSpec::Explicit(theta) => CovModel::new(theta.clone()),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::OneFactor { loadings, uniqueness } => {
                write!(f, "one-factor:{}:{}", join(loadings), join(uniqueness))
            }
            ModelSpec::OneFactorUnitDiagonal { loadings } => write!(f, "one-factor:{}", join(loadings)),
            ModelSpec::Equicorrelation { p, rho } => write!(f, "equi:{p}:{rho}"),
            ModelSpec::Identity { p } => write!(f, "identity:{p}"),
            ModelSpec::Explicit(theta) => {
                let rows: Vec<String> = theta
                    .row_iter()
                    .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                write!(f, "explicit:{}", rows.join(";"))
            }
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("not a number: {t:?}")))
        })
        .collect()
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// `identity:P`, `equi:P:RHO`, `one-factor:L1,..,Lp[:PSI1,..,PSIp]`,
    /// or `explicit:row;row;...` with comma-separated rows.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let parts: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(':').collect() };
        let bad = || Error::Config(format!("malformed model spec {s:?}"));
        let parse_p = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        match (kind, parts.as_slice()) {
            ("identity", [p]) => Ok(ModelSpec::Identity { p: parse_p(p)? }),
            ("equi", [p, rho]) => Ok(ModelSpec::Equicorrelation {
                p: parse_p(p)?,
                rho: rho.trim().parse().map_err(|_| bad())?,
            }),
            ("one-factor", [l]) => Ok(ModelSpec::OneFactorUnitDiagonal { loadings: parse_list(l)? }),
            ("one-factor", [l, psi]) => Ok(ModelSpec::OneFactor {
                loadings: parse_list(l)?,
                uniqueness: parse_list(psi)?,
            }),
            ("explicit", [rows]) => {
                let rows: Vec<Vec<f64>> = rows.split(';').map(parse_list).collect::<Result<_>>()?;
                let p = rows.len();
                if rows.iter().any(|r| r.len() != p) {
                    return Err(Error::Config("explicit covariance must be square".into()));
                }
                Ok(ModelSpec::Explicit(DMatrix::from_fn(p, p, |i, j| rows[i][j])))
            }
            _ => Err(bad()),
        }
    }
}

/// Computational budget `N`, absolute or as a multiple of `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Absolute(u64),
    MultipleOfN(f64),
}

impl Budget {
    pub fn resolve(self, n: usize) -> u64 {
        match self {
            Budget::Absolute(b) => b,
            Budget::MultipleOfN(k) => (k * n as f64).round() as u64,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Absolute(b) => write!(f, "{b}"),
            Budget::MultipleOfN(k) => write!(f, "x{k}"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("budget must be an integer N or xK, got {s:?}"));
        if let Some(k) = s.strip_prefix('x') {
            let k: f64 = k.parse().map_err(|_| bad())?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(bad());
            }
            Ok(Budget::MultipleOfN(k))
        } else {
            Ok(Budget::Absolute(s.parse().map_err(|_| bad())?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatisticKind {
    /// `T_f`, Wald with the true normalizer.
    WaldStd,
    /// `T̂_f`, Wald with the plug-in normalizer.
    WaldStud,
    /// `√n U′ / σ`.
    IcuStd,
    /// `√n U′ / σ̂`.
    IcuStud,
    /// `√⌊n/m⌋ S / σ_h`.
    Block,
    /// `√n U_n / (m σ_g)`.
    CompleteStd,
    /// Exact `N(0, 1)` draws, for calibrating the harness itself.
    ReferenceNormal,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 7] = [
        StatisticKind::WaldStd,
        StatisticKind::WaldStud,
        StatisticKind::IcuStd,
        StatisticKind::IcuStud,
        StatisticKind::Block,
        StatisticKind::CompleteStd,
        StatisticKind::ReferenceNormal,
    ];

    /// The five statistics compared in the size figure.
    pub const FIGURE: [StatisticKind; 5] = [
        StatisticKind::WaldStd,
        StatisticKind::WaldStud,
        StatisticKind::IcuStd,
        StatisticKind::IcuStud,
        StatisticKind::Block,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::WaldStd => "wald_std",
            StatisticKind::WaldStud => "wald_stud",
            StatisticKind::IcuStd => "icu_std",
            StatisticKind::IcuStud => "icu_stud",
            StatisticKind::Block => "block",
            StatisticKind::CompleteStd => "complete_std",
            StatisticKind::ReferenceNormal => "reference_normal",
        }
    }

    fn needs_sigma_g(self) -> bool {
        matches!(self, StatisticKind::WaldStd | StatisticKind::CompleteStd)
    }

    fn incomplete(self) -> bool {
        matches!(self, StatisticKind::IcuStd | StatisticKind::IcuStud)
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        StatisticKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown statistic {s:?}")))
    }
}

/// `{0.01, …, 0.20} ∪ {0.25, …, 0.50}`.
pub fn default_alpha_grid() -> Vec<f64> {
    let fine = (1..=20).map(|k| k as f64 / 100.0);
    let coarse = (5..=10).map(|k| k as f64 * 5.0 / 100.0);
    fine.chain(coarse).collect()
}

pub const DEFAULT_MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SizeExperimentConfig {
    pub model: ModelSpec,
    pub constraint: PolyConstraint,
    pub n: usize,
    pub budget: Budget,
    pub statistics: Vec<StatisticKind>,
    pub replicates: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub sided: Sidedness,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Redraws of an empty Bernoulli design allowed per replicate.
    pub max_redraws: usize,
    /// Disjoint tuples per side in the studentizer; 0 uses the maximum.
    pub studentizer_groups: usize,
}

impl SizeExperimentConfig {
    /// The tetrad size study: `p = 4`, loadings `0.2`, unit diagonal,
    /// `n = 100`, `N = 2n`, `R = 1000`.
    pub fn figure1() -> Self {
        SizeExperimentConfig {
            model: ModelSpec::OneFactorUnitDiagonal { loadings: vec![0.2; 4] },
            constraint: PolyConstraint::tetrad(4, 0, 1, 2, 3).expect("valid tetrad"),
            n: 100,
            budget: Budget::MultipleOfN(2.0),
            statistics: StatisticKind::FIGURE.to_vec(),
            replicates: 1000,
            alphas: default_alpha_grid(),
            seed: 20240601,
            sided: Sidedness::Two,
            threads: 0,
            max_redraws: DEFAULT_MAX_REDRAWS,
            studentizer_groups: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("the nominal level grid is empty".into()));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Config("nominal levels must lie in (0, 1)".into()));
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("nominal levels must be strictly increasing".into()));
        }
        if self.statistics.is_empty() {
            return Err(Error::Config("no statistics requested".into()));
        }
        let mut seen = self.statistics.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.statistics.len() {
            return Err(Error::Config("statistics listed twice".into()));
        }
        if self.constraint.dim() != self.model.build()?.dim() {
            return Err(Error::Config(format!(
                "constraint is over p = {} but the model has p = {}",
                self.constraint.dim(),
                self.model.build()?.dim()
            )));
        }
        let m = self.constraint.degree();
        if self.n < m {
            return Err(Error::InsufficientSample { n: self.n, required: m });
        }
        if self.statistics.contains(&StatisticKind::IcuStud) {
            if self.n < 3 * m - 2 {
                return Err(Error::InsufficientSample { n: self.n, required: 3 * m - 2 });
            }
            let max = estimators::max_studentizer_groups(self.n, m);
            if self.studentizer_groups > max {
                return Err(Error::Config(format!(
                    "studentizer groups {} exceed the maximum {max} for n = {}",
                    self.studentizer_groups, self.n
                )));
            }
        }
        if self.statistics.iter().any(|k| k.incomplete()) {
            let b = self.budget.resolve(self.n);
            if b == 0 || b as f64 > binomial(self.n, m) {
                return Err(Error::Config(format!(
                    "budget N = {b} outside 1..=C({}, {m})",
                    self.n
                )));
            }
        }
        Ok(())
    }
}

/// Per-replicate z-scores; `None` marks an undefined outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateTable {
    pub statistics: Vec<StatisticKind>,
    /// `zscores[s][r]` for statistic `s`, replicate `r`.
    pub zscores: Vec<Vec<Option<f64>>>,
    /// Empty-design redraws summed over replicates.
    pub redraws: usize,
    pub truth: TrueMoments,
}

impl ReplicateTable {
    pub fn zscores_of(&self, kind: StatisticKind) -> Option<Vec<f64>> {
        let s = self.statistics.iter().position(|&k| k == kind)?;
        Some(self.zscores[s].iter().flatten().copied().collect())
    }
}

struct Replicate {
    z: Vec<Option<f64>>,
    redraws: usize,
}

struct Prepared {
    model: CovModel,
    kernel: SymmetricKernel,
    truth: TrueMoments,
    wald_var: f64,
    budget: u64,
    seed: SeedStream,
}

fn prepare(cfg: &SizeExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let truth = TrueMoments::compute(&cfg.constraint, &model)?;
    if truth.sigma_g2 <= 0.0 {
        if let Some(k) = cfg.statistics.iter().find(|k| k.needs_sigma_g()) {
            return Err(Error::Config(format!(
                "{k} is normalized by sigma_g, which is 0 at this (singular) hypothesis"
            )));
        }
    }
    Ok(Prepared {
        kernel: SymmetricKernel::new(&cfg.constraint)?,
        wald_var: truth.wald_variance,
        truth,
        budget: cfg.budget.resolve(cfg.n),
        seed: SeedStream::new(cfg.seed),
        model,
    })
}

fn defined(r: Result<estimators::TestOutcome>) -> Result<Option<f64>> {
    match r {
        Ok(out) => Ok(Some(out.zscore)),
        Err(Error::UndefinedStudentizer | Error::DegenerateStudentizer) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_replicate(cfg: &SizeExperimentConfig, prep: &Prepared, r: usize) -> Result<Replicate> {
    let f = &cfg.constraint;
    let x = sample_gaussian(&prep.model, cfg.n, prep.seed, r as u64)?;
    let mut redraws = 0;
    let draw = if cfg.statistics.iter().any(|k| k.incomplete()) {
        let mut plan = BudgetPlan::new(cfg.n, f.degree(), prep.budget, prep.seed, r as u64)?;
        loop {
            match estimators::incomplete_ustat(&prep.kernel, &x, &plan) {
                Ok(d) => break Some((d, plan)),
                Err(Error::EmptySelection) if redraws < cfg.max_redraws => {
                    redraws += 1;
                    plan = plan.redraw();
                }
                Err(Error::EmptySelection) => return Err(Error::RedrawBudgetExceeded(cfg.max_redraws)),
                Err(e) => return Err(e),
            }
        }
    } else {
        None
    };
    let mut z = Vec::with_capacity(cfg.statistics.len());
    for kind in &cfg.statistics {
        let value = match kind {
            StatisticKind::WaldStd => defined(estimators::wald_standardized_with(f, prep.wald_var, &x))?,
            StatisticKind::WaldStud => defined(estimators::wald_studentized(f, &x))?,
            StatisticKind::IcuStd => {
                let (d, plan) = draw.as_ref().expect("incomplete draw");
                Some(estimators::icu_standardized_from(d, &prep.truth, plan).zscore)
            }
            StatisticKind::IcuStud => {
                let (d, plan) = draw.as_ref().expect("incomplete draw");
                defined(estimators::icu_studentized_from(d, &prep.kernel, &x, plan, cfg.studentizer_groups))?
            }
            StatisticKind::Block => defined(estimators::block_standardized(&prep.kernel, &prep.truth, &x))?,
            StatisticKind::CompleteStd => {
                defined(estimators::complete_standardized(&prep.kernel, &prep.truth, &x))?
            }
            StatisticKind::ReferenceNormal => {
                let mut rng = prep.seed.rng(Purpose::Oracle, r as u64);
                Some(rng.sample(StandardNormal))
            }
        };
        z.push(value);
    }
    Ok(Replicate { z, redraws })
}

fn with_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs every replicate and keeps the raw z-scores.
pub fn collect_zscores(cfg: &SizeExperimentConfig) -> Result<ReplicateTable> {
    let prep = prepare(cfg)?;
    let reps: Vec<Replicate> = with_pool(cfg.threads, || {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &prep, r))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut zscores = vec![Vec::with_capacity(cfg.replicates); cfg.statistics.len()];
    let mut redraws = 0;
    for rep in reps {
        redraws += rep.redraws;
        for (s, z) in rep.z.into_iter().enumerate() {
            zscores[s].push(z);
        }
    }
    Ok(ReplicateTable { statistics: cfg.statistics.clone(), zscores, redraws, truth: prep.truth })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub alpha: f64,
    pub empirical_size: f64,
    /// `√(α(1−α)/R)` with `R` the number of defined replicates.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticCurve {
    pub kind: StatisticKind,
    pub points: Vec<CurvePoint>,
    /// Replicates with a defined statistic.
    pub replicates: usize,
    /// Replicates excluded as undefined (non-positive studentizer).
    pub degenerate_count: usize,
}

impl StatisticCurve {
    /// `max_α |empirical − α|`.
    pub fn max_deviation(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.empirical_size - p.alpha).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeCurve {
    pub curves: Vec<StatisticCurve>,
    pub replicates: usize,
    /// Redraws of empty Bernoulli designs.
    pub redraws: usize,
    pub sided: Sidedness,
    pub truth: TrueMoments,
}

impl SizeCurve {
    pub fn get(&self, kind: StatisticKind) -> Option<&StatisticCurve> {
        self.curves.iter().find(|c| c.kind == kind)
    }
}

/// Tallies rejections at every nominal level.
pub fn size_curve_from(table: &ReplicateTable, alphas: &[f64], sided: Sidedness) -> SizeCurve {
    let crit: Vec<f64> = alphas.iter().map(|&a| sided.critical_value(a)).collect();
    let curves = table
        .statistics
        .iter()
        .zip(&table.zscores)
        .map(|(&kind, zs)| {
            let valid: Vec<f64> = zs.iter().flatten().copied().collect();
            let r = valid.len();
            let points = alphas
                .iter()
                .zip(&crit)
                .map(|(&alpha, &c)| {
                    let rejected = valid.iter().filter(|&&z| sided.rejects(z, c)).count();
                    let (empirical_size, se) = if r == 0 {
                        (f64::NAN, f64::NAN)
                    } else {
                        (rejected as f64 / r as f64, (alpha * (1.0 - alpha) / r as f64).sqrt())
                    };
                    CurvePoint { alpha, empirical_size, se }
                })
                .collect();
            StatisticCurve { kind, points, replicates: r, degenerate_count: zs.len() - r }
        })
        .collect();
    SizeCurve {
        curves,
        replicates: table.zscores.first().map_or(0, Vec::len),
        redraws: table.redraws,
        sided,
        truth: table.truth,
    }
}

pub fn run_size_experiment(cfg: &SizeExperimentConfig) -> Result<SizeCurve> {
    let table = collect_zscores(cfg)?;
    Ok(size_curve_from(&table, &cfg.alphas, cfg.sided))
}

/// The same experiment at several sample sizes (budget re-resolved per `n`).
pub fn run_n_sweep(cfg: &SizeExperimentConfig, ns: &[usize]) -> Result<Vec<(usize, SizeCurve)>> {
    ns.iter()
        .map(|&n| {
            let c = SizeExperimentConfig { n, ..cfg.clone() };
            Ok((n, run_size_experiment(&c)?))
        })
        .collect()
}

fn ks_distance(mut values: Vec<f64>, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if values.len() < 100 {
        return Err(Error::TooFewValues { required: 100, found: values.len() });
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN in KS input".into()));
    }
    values.sort_by(f64::total_cmp);
    let k = values.len() as f64;
    Ok(values.iter().enumerate().fold(0.0, |d: f64, (i, &v)| {
        let c = cdf(v);
        d.max((i as f64 + 1.0) / k - c).max(c - i as f64 / k)
    }))
}

/// Kolmogorov–Smirnov distance to `N(0, 1)`; needs at least 100 values.
pub fn ks_normality(z: &[f64]) -> Result<f64> {
    let phi = Normal::standard();
    ks_distance(z.to_vec(), |v| phi.cdf(v))
}

/// Kolmogorov–Smirnov distance to `U(0, 1)`.
pub fn ks_uniform(u: &[f64]) -> Result<f64> {
    ks_distance(u.to_vec(), |v| v.clamp(0.0, 1.0))
}

/// Berry–Esseen style report for one `(f, Θ, n, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub n: usize,
    pub m: usize,
    pub budget: u64,
    pub p_sample: f64,
    pub alpha_n: f64,
    /// `m²σ_g² + (n/N)σ_h²`.
    pub sigma2: f64,
    /// `(log(2n^m + 1))^{3m} / √n`.
    pub log_factor: f64,
    pub condition_v: f64,
    pub be: BerryEsseenDiagnostics,
}

pub fn log_factor(n: usize, m: usize) -> f64 {
    let nf = n as f64;
    (2.0 * nf.powi(m as i32) + 1.0).ln().powi(3 * m as i32) / nf.sqrt()
}

pub fn run_diagnostics(
    f: &PolyConstraint,
    model: &CovModel,
    n: usize,
    budget: u64,
    mc_draws: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    let m = f.degree();
    let moments = GaussianMoments::new(model);
    let be = wick::be_diagnostics(f, &moments, n, mc_draws, SeedStream::new(seed))?;
    let total = binomial(n, m);
    if budget == 0 || budget as f64 > total {
        return Err(Error::Config(format!("budget N = {budget} outside 1..=C({n}, {m})")));
    }
    let alpha_n = n as f64 / budget as f64;
    let mf = m as f64;
    Ok(DiagnosticReport {
        n,
        m,
        budget,
        p_sample: budget as f64 / total,
        alpha_n,
        sigma2: mf * mf * be.sigma_g2 + alpha_n * be.sigma_h2,
        log_factor: log_factor(n, m),
        condition_v: moments.wishart_cov().condition_number(),
        be,
    })
}

/// `√n |f(Θ̂) − U_n|` per replicate, on the `Data` streams `0..replicates`.
pub fn leading_term_gaps(
    f: &PolyConstraint,
    model: &CovModel,
    n: usize,
    replicates: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<f64>> {
    let h = SymmetricKernel::new(f)?;
    let seed = SeedStream::new(seed);
    with_pool(threads, || {
        (0..replicates)
            .into_par_iter()
            .map(|r| {
                let x = sample_gaussian(model, n, seed, r as u64)?;
                let plug_in = f.evaluate(&x.covariance())?;
                let u = estimators::complete_ustat(&h, &x)?;
                Ok((n as f64).sqrt() * (plug_in - u).abs())
            })
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
