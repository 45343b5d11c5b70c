//! `ustest`: size experiments, exact moments and tests for polynomial
//! covariance constraints.
//!
//! Exit codes: 0 success, 1 self-check or internal consistency failure,
//! 2 invalid input, 3 degenerate design or studentizer.

mod config;
mod data;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use ustest::estimators::{self, BudgetPlan, TrueMoments};
use ustest::experiments::{self, Budget, ModelSpec, SizeExperimentConfig, StatisticKind};
use ustest::selfcheck::{run_selfcheck, SelfCheckOptions};
use ustest::wick::DEFAULT_ABS_MOMENT_DRAWS;
use ustest::{Error, PolyConstraint, SeedStream, SymmetricKernel};

#[derive(Parser)]
#[command(name = "ustest", version, about = "Tests of polynomial constraints on Gaussian covariance matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo size curves under the null.
    SimulateSize(SimulateArgs),
    /// Exact variance components and bound terms for a model.
    Moments(ProblemArgs),
    /// Test a constraint on observed data.
    Test(TestArgs),
    /// Full diagnostic report for a model.
    Diagnose(ProblemArgs),
    /// Run the exact-identity suite.
    Selfcheck(SelfcheckArgs),
}

/// Model and constraint selection.
#[derive(Args)]
struct ModelArgs {
    /// identity:P, equi:P:RHO, one-factor:L1,..[:PSI1,..] or explicit:r;r
    #[arg(long)]
    model: Option<String>,
    /// Constraint in text form, e.g. "0 ; 1 (1,4)(2,3) ; -1 (1,3)(2,4)"
    #[arg(long, conflicts_with = "tetrad")]
    constraint: Option<String>,
    /// 1-based tetrad a,b,c,d: θ_ad θ_bc − θ_ac θ_bd
    #[arg(long, value_delimiter = ',')]
    tetrad: Option<Vec<usize>>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ModelArgs,
    #[arg(long)]
    n: Option<usize>,
    /// Absolute N or xK for N = K·n.
    #[arg(long)]
    budget: Option<Budget>,
    /// Comma-separated statistic names.
    #[arg(long, value_delimiter = ',')]
    statistics: Option<Vec<StatisticKind>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// two or right
    #[arg(long)]
    sided: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_redraws: Option<usize>,
    /// Tuples per side in the studentizer, 0 for the maximum.
    #[arg(long)]
    studentizer_groups: Option<usize>,
    /// Comma-separated sample sizes to run in turn.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    /// CSV output path; a `.meta` sidecar is written next to it.
    /// Without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProblemArgs {
    #[command(flatten)]
    problem: ModelArgs,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Defaults to x2, capped at C(n, m).
    #[arg(long)]
    budget: Option<Budget>,
    /// Monte Carlo draws for E|g|³.
    #[arg(long, default_value_t = DEFAULT_ABS_MOMENT_DRAWS)]
    mc_draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TestArgs {
    /// Headed CSV, one observation per row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "tetrad")]
    constraint: Option<String>,
    #[arg(long, value_delimiter = ',')]
    tetrad: Option<Vec<usize>>,
    /// icu_stud or wald_stud
    #[arg(long, default_value = "icu_stud")]
    statistic: StatisticKind,
    #[arg(long, default_value = "x2")]
    budget: Budget,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "two")]
    sided: String,
    #[arg(long, default_value_t = 0)]
    studentizer_groups: usize,
    #[arg(long, default_value_t = experiments::DEFAULT_MAX_REDRAWS)]
    max_redraws: usize,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, hide = true)]
    perturb_kernel: Option<f64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::InternalConsistency(_)) => 1,
        Some(
            Error::RedrawBudgetExceeded(_)
            | Error::DegenerateStudentizer
            | Error::UndefinedStudentizer
            | Error::EmptySelection
            | Error::SingularHypothesis,
        ) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SimulateSize(a) => simulate(a),
        Command::Moments(a) => moments(a),
        Command::Test(a) => test(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Selfcheck(a) => selfcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn resolve_problem(args: &ModelArgs) -> Result<(ModelSpec, PolyConstraint)> {
    let model = match &args.model {
        Some(s) => s.parse::<ModelSpec>()?,
        None => SizeExperimentConfig::figure1().model,
    };
    let p = model.build()?.dim();
    let constraint = match (&args.constraint, &args.tetrad) {
        (None, None) => config::constraint_from(None, Some(&[1, 2, 3, 4]), p)?,
        (c, t) => config::constraint_from(c.as_deref(), t.as_deref(), p)?,
    };
    Ok((model, constraint))
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(path) => config::load(path)?,
        None => SizeExperimentConfig::figure1(),
    };
    let p = &a.problem;
    if let Some(m) = &p.model {
        cfg.model = m.parse()?;
    }
    let dim = cfg.model.build()?.dim();
    if p.constraint.is_some() || p.tetrad.is_some() {
        cfg.constraint = config::constraint_from(p.constraint.as_deref(), p.tetrad.as_deref(), dim)?;
    } else if dim != cfg.constraint.dim() {
        return Err(Error::Config("model dimension differs from the constraint; pass --constraint or --tetrad".into()).into());
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field.clone() { cfg.$field = v; })* };
    }
    set!(n, budget, statistics, replicates, seed, threads, max_redraws, studentizer_groups);
    if let Some(s) = &a.sided {
        cfg.sided = config::parse_sided(s)?;
    }

    let (csv, meta_extra) = match &a.sweep {
        Some(ns) => {
            let sweep = experiments::run_n_sweep(&cfg, ns)?;
            let rows: Vec<_> = sweep.iter().map(|(n, c)| (Some(*n), c)).collect();
            let redraws: usize = sweep.iter().map(|(_, c)| c.redraws).sum();
            let truth = sweep.first().map(|(_, c)| c.truth);
            let list = ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
            (output::size_csv(&rows)?, (redraws, truth, Some(list)))
        }
        None => {
            let curve = experiments::run_size_experiment(&cfg)?;
            (output::size_csv(&[(None, &curve)])?, (curve.redraws, Some(curve.truth), None))
        }
    };

    match &a.out {
        None => std::io::stdout().write_all(&csv)?,
        Some(path) => {
            let (redraws, truth, sweep) = meta_extra;
            let mut meta = vec![("version", env!("CARGO_PKG_VERSION").to_string())];
            meta.extend(config::echo(&cfg));
            if let Some(s) = sweep {
                meta.push(("sweep", s));
            }
            meta.push(("redraws", redraws.to_string()));
            if let Some(t) = truth {
                meta.extend(truth_pairs(&t));
            }
            output::write_atomic(path, &csv)?;
            output::write_atomic(&output::meta_path(path), output::key_values(&meta).as_bytes())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn truth_pairs(t: &TrueMoments) -> Vec<(&'static str, String)> {
    vec![
        ("sigma_g2", t.sigma_g2.to_string()),
        ("sigma_h2", t.sigma_h2.to_string()),
        ("wald_variance", t.wald_variance.to_string()),
    ]
}

fn report(a: &ProblemArgs) -> Result<experiments::DiagnosticReport> {
    let (model, f) = resolve_problem(&a.problem)?;
    let model = model.build()?;
    let budget = match a.budget {
        Some(b) => b.resolve(a.n),
        None => Budget::MultipleOfN(2.0).resolve(a.n).min(estimators::binomial(a.n, f.degree()) as u64),
    };
    Ok(experiments::run_diagnostics(&f, &model, a.n, budget, a.mc_draws, a.seed)?)
}

fn moments(a: ProblemArgs) -> Result<ExitCode> {
    let r = report(&a)?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["sigma_g2", "sigma_h2", "ratio", "condition_v", "bound_term1", "bound_term2"])?;
    w.write_record([
        r.be.sigma_g2.to_string(),
        r.be.sigma_h2.to_string(),
        r.be.ratio.to_string(),
        r.condition_v.to_string(),
        r.be.bound_term1.to_string(),
        r.be.bound_term2.to_string(),
    ])?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn diagnose(a: ProblemArgs) -> Result<ExitCode> {
    let (model, f) = resolve_problem(&a.problem)?;
    let r = report(&a)?;
    let be = &r.be;
    let pairs = vec![
        ("model", model.to_string()),
        ("constraint", f.to_string()),
        ("n", r.n.to_string()),
        ("m", r.m.to_string()),
        ("budget", r.budget.to_string()),
        ("p_sample", r.p_sample.to_string()),
        ("alpha_n", r.alpha_n.to_string()),
        ("sigma_g2", be.sigma_g2.to_string()),
        ("sigma_h2", be.sigma_h2.to_string()),
        ("sigma2", r.sigma2.to_string()),
        ("ratio", be.ratio.to_string()),
        ("ratio_infinite", be.ratio_infinite.to_string()),
        ("condition_v", r.condition_v.to_string()),
        ("log_factor", r.log_factor.to_string()),
        ("bound_term1", be.bound_term1.to_string()),
        ("bound_term2", be.bound_term2.to_string()),
        ("bound_term2_se", be.bound_term2_se.to_string()),
        ("abs_g3", be.abs_g3.mean.to_string()),
        ("abs_g3_se", be.abs_g3.std_error.to_string()),
        ("mc_draws", a.mc_draws.to_string()),
        ("seed", a.seed.to_string()),
    ];
    print!("{}", output::key_values(&pairs));
    Ok(ExitCode::SUCCESS)
}

fn test(a: TestArgs) -> Result<ExitCode> {
    let x = data::read_sample(&a.data)?;
    let f = config::constraint_from(
        a.constraint.as_deref(),
        match (&a.constraint, &a.tetrad) {
            (None, None) => Some(&[1, 2, 3, 4][..]),
            (_, t) => t.as_deref(),
        },
        x.p(),
    )?;
    let sided = config::parse_sided(&a.sided)?;
    let seed = SeedStream::new(a.seed);
    let outcome = match a.statistic {
        StatisticKind::WaldStud => estimators::wald_studentized(&f, &x)?,
        StatisticKind::IcuStud => {
            let h = SymmetricKernel::new(&f)?;
            let mut plan = BudgetPlan::new(x.n(), f.degree(), a.budget.resolve(x.n()), seed, 0)?;
            let mut redraws = 0;
            loop {
                match estimators::icu_studentized(&h, &x, &plan, a.studentizer_groups) {
                    Err(Error::EmptySelection) if redraws < a.max_redraws => {
                        redraws += 1;
                        plan = plan.redraw();
                    }
                    Err(Error::EmptySelection) => return Err(Error::RedrawBudgetExceeded(a.max_redraws).into()),
                    other => break other?,
                }
            }
        }
        other => {
            return Err(Error::Config(format!("{other} needs the true covariance; use icu_stud or wald_stud")).into())
        }
    };
    let mut pairs = vec![
        ("statistic", a.statistic.to_string()),
        ("n", x.n().to_string()),
        ("estimate", outcome.statistic.to_string()),
        ("zscore", outcome.zscore.to_string()),
        ("pvalue", outcome.pvalue(sided).to_string()),
        ("sided", sided.name().to_string()),
    ];
    if let Some(nhat) = outcome.nhat {
        pairs.push(("nhat", nhat.to_string()));
    }
    print!("{}", output::key_values(&pairs));
    Ok(ExitCode::SUCCESS)
}

fn selfcheck(a: SelfcheckArgs) -> Result<ExitCode> {
    let results = run_selfcheck(&SelfCheckOptions { perturb_kernel: a.perturb_kernel });
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", results.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        let code = |e: Error| exit_code(&anyhow::Error::from(e));
        assert_eq!(code(Error::InternalConsistency("x".into())), 1);
        assert_eq!(code(Error::Config("x".into())), 2);
        assert_eq!(code(Error::InsufficientSample { n: 1, required: 2 }), 2);
        assert_eq!(code(Error::Parse { pos: 0, msg: "x".into() }), 2);
        assert_eq!(code(Error::DegenerateStudentizer), 3);
        assert_eq!(code(Error::RedrawBudgetExceeded(5)), 3);
        assert_eq!(exit_code(&anyhow::Error::from(Error::EmptySelection).context("outer")), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
