//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with a plain `main` so the report is always printed; the process
//! exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use ustest::estimators::{self, binomial, BudgetPlan};
use ustest::experiments::{self, ModelSpec, SizeExperimentConfig, StatisticKind};
use ustest::kernel::{self, SymmetricKernel};
use ustest::wick::{self, mean_and_se};
use ustest::{covmodel, CovModel, Error, GaussianMoments, PairIndex, PolyConstraint, Purpose, SeedStream};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn tetrad() -> PolyConstraint {
    PolyConstraint::tetrad(4, 0, 1, 2, 3).unwrap()
}

fn figure1_model() -> CovModel {
    CovModel::one_factor_unit_diagonal(&[0.2; 4]).unwrap()
}

/// Figure 1 size curves at `R = 1000`.
fn criterion_1() -> Verdict {
    let pilot_cfg = SizeExperimentConfig { replicates: 10_000, seed: 1, ..SizeExperimentConfig::figure1() };
    let pilot = experiments::run_size_experiment(&pilot_cfg).unwrap();
    let summary = |curve: &experiments::SizeCurve| {
        StatisticKind::FIGURE
            .iter()
            .map(|&k| format!("{k}={:.4}", curve.get(k).unwrap().max_deviation()))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("    pilot R=10000: max deviation {}", summary(&pilot));

    let cfg = SizeExperimentConfig::figure1();
    let curve = experiments::run_size_experiment(&cfg).unwrap();
    let dev = |k| curve.get(k).unwrap().max_deviation();
    let (icu_std, icu_stud) = (dev(StatisticKind::IcuStd), dev(StatisticKind::IcuStud));
    let (wald, wald_hat) = (dev(StatisticKind::WaldStd), dev(StatisticKind::WaldStud));
    let a = icu_std <= 0.03 && icu_stud <= 0.03;
    let b = wald >= 0.05 && wald_hat >= 0.05 && wald_hat >= wald;
    verdict(
        a && b,
        format!(
            "R=1000 seed={}: icu_std {icu_std:.4}, icu_stud {icu_stud:.4} (<= 0.03: {a}); \
             T_f {wald:.4}, T_hat_f {wald_hat:.4} (>= 0.05 and T_hat_f >= T_f: {b})",
            cfg.seed
        ),
    )
}

fn random_model(p: usize, rng: &mut impl Rng) -> CovModel {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let theta = &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.3;
    CovModel::new(theta).unwrap()
}

fn random_constraint(p: usize, max_degree: usize, rng: &mut impl Rng) -> PolyConstraint {
    loop {
        let k = rng.random_range(1..=4);
        let terms: Vec<(f64, Vec<PairIndex>)> = (0..k)
            .map(|_| {
                let d = rng.random_range(1..=max_degree);
                let pairs = (0..d).map(|_| PairIndex::new(rng.random_range(0..p), rng.random_range(0..p))).collect();
                (rng.random_range(-1.0..1.0), pairs)
            })
            .collect();
        if let Ok(f) = PolyConstraint::new(p, rng.random_range(-0.5..0.5), terms) {
            return f;
        }
    }
}

/// Isserlis variance of `g` against `∇fᵀ V ∇f / m²`.
fn criterion_2() -> Verdict {
    let mut rng = SeedStream::new(2).rng(Purpose::Oracle, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = rng.random_range(2..=5);
        let model = random_model(p, &mut rng);
        let f = random_constraint(p, 3, &mut rng);
        let moments = GaussianMoments::new(&model);
        let g = kernel::projection_kernel(&f, &model).unwrap();
        worst = worst.max(rel(moments.kernel_variance(&g), wick::sigma_g_squared(&f, &model).unwrap()));
    }
    verdict(worst <= 1e-10, format!("50 random (f, Theta), max relative gap {worst:.2e} (<= 1e-10)"))
}

/// Exact `σ_h²` of the tetrad kernel against a Monte Carlo estimate.
fn criterion_3() -> Verdict {
    let f = tetrad();
    let h = SymmetricKernel::new(&f).unwrap();
    let draws = 1_000_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, rho) in [0.0, 0.04, 0.2, 0.5].into_iter().enumerate() {
        let model = CovModel::equicorrelation(4, rho).unwrap();
        let exact = wick::sigma_h_squared(&f, &GaussianMoments::new(&model)).unwrap();
        let x = covmodel::sample_gaussian(&model, 2 * draws, SeedStream::new(3), i as u64).unwrap();
        let vals: Vec<f64> = (0..draws).map(|k| h.eval_rows(&x, &[2 * k, 2 * k + 1])).collect();
        let mean = mean_and_se(&vals).mean;
        let centered: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = mean_and_se(&centered);
        let z = (var.mean - exact) / var.std_error;
        ok &= z.abs() <= 4.0;
        if rho == 0.0 {
            ok &= exact == 1.0;
        }
        parts.push(format!("rho={rho}: exact {exact:.6}, MC {:.6} ({z:+.2} SE)", var.mean));
    }
    verdict(ok, parts.join("; "))
}

/// Hoeffding reconstruction and canonical projections on `n = 12`.
fn criterion_4() -> Verdict {
    let cases = [
        (tetrad(), CovModel::equicorrelation(4, 0.3).unwrap()),
        (tetrad(), figure1_model()),
        (
            PolyConstraint::parse("0.1 ; 1 (1,2)(2,3)(1,3) ; -0.6 (1,1)(2,3) ; 0.4 (1,2)(3,3)", 3).unwrap(),
            CovModel::equicorrelation(3, 0.25).unwrap(),
        ),
        (
            PolyConstraint::parse("0 ; 1 (1,4)(2,3)(1,1) ; -1 (1,3)(2,4)(2,2)", 4).unwrap(),
            CovModel::one_factor(&[0.5, 0.4, 0.3, 0.6], &[1.0, 0.8, 0.9, 0.7]).unwrap(),
        ),
    ];
    let (mut worst_rec, mut worst_can): (f64, f64) = (0.0, 0.0);
    for (i, (f, model)) in cases.iter().enumerate() {
        let moments = GaussianMoments::new(model);
        let x = covmodel::sample_gaussian(model, 12, SeedStream::new(4), i as u64).unwrap();
        let m = f.degree();
        let h_sym = kernel::symmetric_kernel_symbolic(f).unwrap();
        let scale = h_sym.max_abs_coeff().max(1.0);
        let mut rebuilt = f.evaluate(model.theta()).unwrap();
        for r in 1..=m {
            let pi = kernel::hoeffding_projection_of(&h_sym, &moments, r).unwrap();
            for slot in 0..r {
                worst_can = worst_can.max(pi.integrate_slot(&moments, slot).max_abs_coeff() / scale);
            }
            rebuilt += binomial(m, r) * estimators::ustat_of_kernel(&pi, &x).unwrap();
        }
        let u = estimators::complete_ustat(&SymmetricKernel::new(f).unwrap(), &x).unwrap();
        worst_rec = worst_rec.max(rel(u, rebuilt));
    }
    verdict(
        worst_rec <= 1e-10 && worst_can <= 1e-12,
        format!(
            "m in {{2,3}}: reconstruction gap {worst_rec:.2e} (<= 1e-10), canonical residual {worst_can:.2e} (<= 1e-12)"
        ),
    )
}

/// `U′(p = 1) = U_n` and `U′ = (N/N̂) W_n`.
fn criterion_5() -> Verdict {
    let f = tetrad();
    let h = SymmetricKernel::new(&f).unwrap();
    let model = figure1_model();
    let seed = SeedStream::new(5);
    let mut exact = true;
    let mut worst: f64 = 0.0;
    for d in 0..10u64 {
        let x = covmodel::sample_gaussian(&model, 100, seed, d).unwrap();
        let full = BudgetPlan::complete(100, 2, seed, d).unwrap();
        exact &= estimators::incomplete_ustat(&h, &x, &full).unwrap().value == estimators::complete_ustat(&h, &x).unwrap();
        for k in 0..100u64 {
            let plan = BudgetPlan::new(100, 2, 200, seed, d * 100 + k).unwrap();
            let draw = estimators::incomplete_ustat(&h, &x, &plan).unwrap();
            let wb = estimators::wn_bn_decompose(&h, &x, &plan, &draw.selection).unwrap();
            worst = worst.max(rel(draw.value, plan.budget() as f64 / draw.nhat as f64 * wb.w_n));
        }
    }
    verdict(
        exact && worst <= 1e-12,
        format!("p=1 bit-exact: {exact}; 1000 draws, max relative gap {worst:.2e} (<= 1e-12)"),
    )
}

/// Normality of `√n U′/σ` at the singular point `Θ = I`.
fn criterion_6() -> Verdict {
    let cfg = SizeExperimentConfig {
        model: ModelSpec::Identity { p: 4 },
        statistics: vec![StatisticKind::IcuStd],
        replicates: 2000,
        seed: 6,
        ..SizeExperimentConfig::figure1()
    };
    let table = experiments::collect_zscores(&cfg).unwrap();
    let ks = experiments::ks_normality(&table.zscores_of(StatisticKind::IcuStd).unwrap()).unwrap();
    let refused = matches!(
        experiments::run_size_experiment(&SizeExperimentConfig {
            statistics: vec![StatisticKind::IcuStd, StatisticKind::CompleteStd],
            ..cfg.clone()
        }),
        Err(Error::Config(_))
    );
    verdict(
        ks <= 0.05 && refused,
        format!("KS {ks:.4} (<= 0.05); complete_std refused with a configuration error: {refused}"),
    )
}

/// Berry–Esseen diagnostics near the singularity.
fn criterion_7() -> Verdict {
    let f = tetrad();
    let report = experiments::run_diagnostics(&f, &figure1_model(), 100, 200, 100_000, 7).unwrap();
    let ratios: Vec<f64> = [0.04, 0.2, 0.5]
        .iter()
        .map(|&rho| {
            let model = CovModel::equicorrelation(4, rho).unwrap();
            experiments::run_diagnostics(&f, &model, 100, 200, 10_000, 7).unwrap().be.ratio
        })
        .collect();
    // Anchors recorded from the first verified run.
    let anchors = [
        (report.be.sigma_g2, 1.47456e-3),
        (report.be.sigma_h2, 1.0027008),
        (report.be.ratio, 26.076_809),
        (report.be.bound_term1, 4.474_0),
    ];
    let anchored = anchors.iter().all(|&(got, want)| rel(got, want) <= 1e-4);
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let vacuous = report.be.bound_term1 > 1.0;
    verdict(
        vacuous && decreasing && anchored && report.be.ratio > 10.0,
        format!(
            "term1 {:.4} (> 1: {vacuous}); sigma_h/sigma_g over rho 0.04, 0.2, 0.5 = {:.4}, {:.4}, {:.4} (decreasing: {decreasing}); anchors match: {anchored}",
            report.be.bound_term1, ratios[0], ratios[1], ratios[2]
        ),
    )
}

/// Median of `√n |f(Θ̂) − U_n|` shrinks from `n = 100` to `n = 400`.
fn criterion_8() -> Verdict {
    let f = tetrad();
    let model = figure1_model();
    let m100 = experiments::median(&experiments::leading_term_gaps(&f, &model, 100, 2000, 8, 0).unwrap());
    let m400 = experiments::median(&experiments::leading_term_gaps(&f, &model, 400, 2000, 8, 0).unwrap());
    let factor = m100 / m400;
    verdict(
        factor >= 1.7,
        format!("median n=100 {m100:.3e}, n=400 {m400:.3e}, factor {factor:.3} (>= 1.7)"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 figure-1 size curves", criterion_1),
        ("2 sigma_g^2 dual path", criterion_2),
        ("3 sigma_h^2 vs Monte Carlo", criterion_3),
        ("4 Hoeffding decomposition", criterion_4),
        ("5 incomplete-statistic identities", criterion_5),
        ("6 CLT at a singular point", criterion_6),
        ("7 near-singularity diagnostics", criterion_7),
        ("8 leading-term remainder", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let v = run();
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("criterion {name}: {tag} [{:.1}s] {}", start.elapsed().as_secs_f64(), v.detail);
        failed += usize::from(!v.passed);
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
