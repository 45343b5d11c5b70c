//! Size-experiment harness and diagnostics.

use rand_distr::{Distribution, StandardNormal};

use ustest::experiments::{
    self, ks_normality, run_diagnostics, run_n_sweep, run_size_experiment, Budget, ModelSpec, SizeExperimentConfig,
    StatisticKind,
};
use ustest::{CovModel, PolyConstraint, Purpose, SeedStream, Sidedness};

fn tetrad() -> PolyConstraint {
    PolyConstraint::tetrad(4, 0, 1, 2, 3).unwrap()
}

#[test]
fn harness_is_calibrated_against_exact_normals() {
    let cfg = SizeExperimentConfig {
        statistics: vec![StatisticKind::ReferenceNormal],
        replicates: 100_000,
        n: 4,
        seed: 41,
        ..SizeExperimentConfig::figure1()
    };
    let curve = run_size_experiment(&cfg).unwrap();
    let c = curve.get(StatisticKind::ReferenceNormal).unwrap();
    assert_eq!(c.replicates, 100_000);
    for p in &c.points {
        assert!((p.empirical_size - p.alpha).abs() <= 4.0 * p.se, "{p:?}");
    }
}

#[test]
fn right_sided_calibration() {
    let cfg = SizeExperimentConfig {
        statistics: vec![StatisticKind::ReferenceNormal],
        replicates: 20_000,
        n: 4,
        seed: 42,
        sided: Sidedness::Right,
        ..SizeExperimentConfig::figure1()
    };
    let curve = run_size_experiment(&cfg).unwrap();
    for p in &curve.get(StatisticKind::ReferenceNormal).unwrap().points {
        assert!((p.empirical_size - p.alpha).abs() <= 4.0 * p.se, "{p:?}");
    }
}

#[test]
fn ks_of_exact_normals_is_small() {
    let mut rng = SeedStream::new(43).rng(Purpose::Oracle, 0);
    let z: Vec<f64> = StandardNormal.sample_iter(&mut rng).take(100_000).collect();
    let d = ks_normality(&z).unwrap();
    assert!(d <= 0.006, "{d}");
}

#[test]
fn curves_are_monotone_and_schedule_invariant() {
    let base = SizeExperimentConfig { replicates: 300, seed: 44, ..SizeExperimentConfig::figure1() };
    let one = run_size_experiment(&SizeExperimentConfig { threads: 1, ..base.clone() }).unwrap();
    let many = run_size_experiment(&SizeExperimentConfig { threads: 8, ..base }).unwrap();
    assert_eq!(one, many);
    for c in &one.curves {
        assert!(c.points.windows(2).all(|w| w[0].empirical_size <= w[1].empirical_size), "{}", c.kind);
        assert!(c.points.iter().all(|p| (0.0..=1.0).contains(&p.empirical_size)));
    }
}

#[test]
fn n_sweep_resolves_budget_per_n() {
    let cfg = SizeExperimentConfig {
        statistics: vec![StatisticKind::IcuStd],
        replicates: 20,
        budget: Budget::MultipleOfN(2.0),
        ..SizeExperimentConfig::figure1()
    };
    let sweep = run_n_sweep(&cfg, &[20, 50]).unwrap();
    assert_eq!(sweep.len(), 2);
    assert_eq!(sweep[0].0, 20);
    // σ² = m²σ_g² + 2⁻¹σ_h² does not depend on n when N = 2n
    assert_eq!(sweep[0].1.truth, sweep[1].1.truth);
}

#[test]
fn first_bound_term_halves_when_n_quadruples() {
    let f = tetrad();
    let model = CovModel::equicorrelation(4, 0.2).unwrap();
    let a = run_diagnostics(&f, &model, 100, 200, 1000, 1).unwrap();
    let b = run_diagnostics(&f, &model, 400, 800, 1000, 1).unwrap();
    let ratio = a.be.bound_term1 / b.be.bound_term1;
    assert!((ratio - (399.0f64 / 99.0).sqrt()).abs() < 1e-12);
    assert!((ratio - 2.0).abs() < 0.01);
}

#[test]
fn first_bound_term_shrinks_with_rho() {
    let f = tetrad();
    let t = |rho| {
        run_diagnostics(&f, &CovModel::equicorrelation(4, rho).unwrap(), 400, 800, 1000, 1)
            .unwrap()
            .be
            .bound_term1
    };
    assert!(t(0.5) < t(0.04));
}

#[test]
fn singular_diagnostics_are_flagged_but_finite() {
    let rep = run_diagnostics(&tetrad(), &CovModel::identity(4).unwrap(), 100, 200, 1000, 1).unwrap();
    assert!(rep.be.ratio_infinite);
    assert_eq!(rep.be.sigma_g2, 0.0);
    assert_eq!(rep.be.sigma_h2, 1.0);
    assert!((rep.sigma2 - 0.5).abs() < 1e-15);
    assert!(rep.log_factor.is_finite() && rep.p_sample.is_finite());
}

#[test]
fn figure1_near_singularity_ratio() {
    let model = ModelSpec::OneFactorUnitDiagonal { loadings: vec![0.2; 4] }.build().unwrap();
    let rep = run_diagnostics(&tetrad(), &model, 100, 200, 1000, 1).unwrap();
    assert!(rep.be.ratio > 10.0);
    assert!((rep.be.ratio - 26.076_809).abs() < 1e-5);
}

#[test]
fn undefined_outcomes_are_tallied_not_counted() {
    let table = experiments::ReplicateTable {
        statistics: vec![StatisticKind::WaldStud],
        zscores: vec![vec![Some(3.0), None, Some(0.0), None]],
        redraws: 0,
        truth: ustest::estimators::TrueMoments::compute(&tetrad(), &CovModel::equicorrelation(4, 0.2).unwrap())
            .unwrap(),
    };
    let curve = experiments::size_curve_from(&table, &[0.05, 0.5], Sidedness::Two);
    let c = curve.get(StatisticKind::WaldStud).unwrap();
    assert_eq!(c.replicates, 2);
    assert_eq!(c.degenerate_count, 2);
    assert_eq!(c.points[0].empirical_size, 0.5);
}
