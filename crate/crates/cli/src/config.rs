//! TOML run configuration for `simulate-size`.
//!
//! ```toml
//! [model]
//! spec = "one-factor:0.2,0.2,0.2,0.2"
//!
//! [constraint]
//! tetrad = [1, 2, 3, 4]          # or: text = "0 ; 1 (1,4)(2,3) ; -1 (1,3)(2,4)"
//!
//! [experiment]
//! n = 100
//! budget = "x2"                  # or an absolute integer N
//! statistics = ["wald_std", "wald_stud", "icu_std", "icu_stud", "block"]
//! replicates = 1000
//! alphas = [0.01, 0.05, 0.1]     # optional; default grid otherwise
//! seed = 20240601
//! sided = "two"                  # or "right"
//! threads = 0
//! max_redraws = 100
//! studentizer_groups = 0
//! ```
//!
//! Unknown sections and keys are rejected. Every key is optional and falls
//! back to the built-in figure-1 design.

use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use ustest::experiments::{Budget, ModelSpec, SizeExperimentConfig, StatisticKind};
use ustest::{Error, PolyConstraint, Sidedness};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelSection>,
    constraint: Option<ConstraintSection>,
    experiment: Option<ExperimentSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    spec: Spanned<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintSection {
    text: Option<Spanned<String>>,
    tetrad: Option<Spanned<Vec<usize>>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BudgetValue {
    Count(u64),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    n: Option<usize>,
    budget: Option<Spanned<BudgetValue>>,
    statistics: Option<Spanned<Vec<String>>>,
    replicates: Option<usize>,
    alphas: Option<Vec<f64>>,
    seed: Option<u64>,
    sided: Option<Spanned<String>>,
    threads: Option<usize>,
    max_redraws: Option<usize>,
    studentizer_groups: Option<usize>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn parse_sided(s: &str) -> Result<Sidedness, Error> {
    match s.trim() {
        "two" => Ok(Sidedness::Two),
        "right" => Ok(Sidedness::Right),
        other => Err(Error::Config(format!("sidedness must be \"two\" or \"right\", got {other:?}"))),
    }
}

/// Builds a constraint from either the text format or a 1-based tetrad.
pub fn constraint_from(text: Option<&str>, tetrad: Option<&[usize]>, p: usize) -> Result<PolyConstraint, Error> {
    match (text, tetrad) {
        (Some(_), Some(_)) => Err(Error::Config("give either a constraint text or a tetrad, not both".into())),
        (Some(t), None) => PolyConstraint::parse(t, p),
        (None, Some(&[a, b, c, d])) => {
            if [a, b, c, d].contains(&0) {
                return Err(Error::Config("tetrad indices are 1-based".into()));
            }
            PolyConstraint::tetrad(p, a - 1, b - 1, c - 1, d - 1)
        }
        (None, Some(other)) => Err(Error::Config(format!("a tetrad needs 4 indices, got {}", other.len()))),
        (None, None) => Err(Error::Config("no constraint given".into())),
    }
}

/// Reads a config file on top of the built-in defaults.
pub fn load(path: &Path) -> Result<SizeExperimentConfig, Error> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse(&src).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(src: &str) -> Result<SizeExperimentConfig, Error> {
    let file: FileConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let at = |span: std::ops::Range<usize>, e: Error| Error::Config(format!("line {}: {e}", line_of(src, span.start)));
    let mut cfg = SizeExperimentConfig::figure1();

    if let Some(m) = file.model {
        cfg.model = m.spec.get_ref().parse::<ModelSpec>().map_err(|e| at(m.spec.span(), e))?;
        // Default constraint only fits the default dimension.
        if cfg.model.build().map_err(|e| at(m.spec.span(), e))?.dim() != cfg.constraint.dim() && file.constraint.is_none() {
            return Err(at(m.spec.span(), Error::Config("model dimension differs from the default tetrad; add a [constraint] section".into())));
        }
    }
    let p = cfg.model.build()?.dim();
    if let Some(c) = file.constraint {
        let span = c
            .text
            .as_ref()
            .map(|t| t.span())
            .or_else(|| c.tetrad.as_ref().map(|t| t.span()))
            .unwrap_or(0..0);
        cfg.constraint = constraint_from(
            c.text.as_ref().map(|t| t.get_ref().as_str()),
            c.tetrad.as_ref().map(|t| t.get_ref().as_slice()),
            p,
        )
        .map_err(|e| at(span, e))?;
    }
    if let Some(x) = file.experiment {
        if let Some(n) = x.n {
            cfg.n = n;
        }
        if let Some(b) = x.budget {
            cfg.budget = match b.get_ref() {
                BudgetValue::Count(k) => Budget::Absolute(*k),
                BudgetValue::Text(t) => t.parse().map_err(|e| at(b.span(), e))?,
            };
        }
        if let Some(s) = x.statistics {
            cfg.statistics = s
                .get_ref()
                .iter()
                .map(|k| k.parse::<StatisticKind>())
                .collect::<Result<_, _>>()
                .map_err(|e| at(s.span(), e))?;
        }
        if let Some(r) = x.replicates {
            cfg.replicates = r;
        }
        if let Some(a) = x.alphas {
            cfg.alphas = a;
        }
        if let Some(seed) = x.seed {
            cfg.seed = seed;
        }
        if let Some(s) = x.sided {
            cfg.sided = parse_sided(s.get_ref()).map_err(|e| at(s.span(), e))?;
        }
        if let Some(t) = x.threads {
            cfg.threads = t;
        }
        if let Some(m) = x.max_redraws {
            cfg.max_redraws = m;
        }
        if let Some(g) = x.studentizer_groups {
            cfg.studentizer_groups = g;
        }
    }
    Ok(cfg)
}

/// Key-value echo of a configuration for the metadata sidecar.
pub fn echo(cfg: &SizeExperimentConfig) -> Vec<(&'static str, String)> {
    let list = |v: Vec<String>| v.join(",");
    vec![
        ("model", cfg.model.to_string()),
        ("constraint", cfg.constraint.to_string()),
        ("p", cfg.constraint.dim().to_string()),
        ("degree", cfg.constraint.degree().to_string()),
        ("n", cfg.n.to_string()),
        ("budget", cfg.budget.to_string()),
        ("budget_resolved", cfg.budget.resolve(cfg.n).to_string()),
        ("statistics", list(cfg.statistics.iter().map(|s| s.to_string()).collect())),
        ("replicates", cfg.replicates.to_string()),
        ("alphas", list(cfg.alphas.iter().map(|a| a.to_string()).collect())),
        ("master_seed", cfg.seed.to_string()),
        ("sided", cfg.sided.name().to_string()),
        ("max_redraws", cfg.max_redraws.to_string()),
        ("studentizer_groups", cfg.studentizer_groups.to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_design() {
        assert_eq!(parse("").unwrap(), SizeExperimentConfig::figure1());
    }

    #[test]
    fn bundled_figure1_matches_builtin() {
        let src = include_str!("../configs/figure1.cfg");
        assert_eq!(parse(src).unwrap(), SizeExperimentConfig::figure1());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = parse("[experiment]\nn = 50\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse("[nonsense]\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn semantic_errors_carry_a_line() {
        let err = parse("[experiment]\nn = 50\n\nstatistics = [\"icu_std\", \"nope\"]\n").unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        let err = parse("[model]\nspec = \"equi:4:1.5\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse("[constraint]\ntext = \"0 ; 1 (1,9)\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let cfg = parse(
            "[model]\nspec = \"equi:5:0.3\"\n[constraint]\ntetrad = [2, 3, 4, 5]\n[experiment]\nbudget = 150\nsided = \"right\"\n",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelSpec::Equicorrelation { p: 5, rho: 0.3 });
        assert_eq!(cfg.constraint, PolyConstraint::tetrad(5, 1, 2, 3, 4).unwrap());
        assert_eq!(cfg.budget, Budget::Absolute(150));
        assert_eq!(cfg.sided, Sidedness::Right);
    }

    #[test]
    fn constraint_sources() {
        assert!(constraint_from(Some("0 ; 1 (1,2)"), Some(&[1, 2, 3, 4]), 4).is_err());
        assert!(constraint_from(None, Some(&[0, 1, 2, 3]), 4).is_err());
        assert!(constraint_from(None, Some(&[1, 2, 3]), 4).is_err());
        assert!(constraint_from(None, None, 4).is_err());
        assert_eq!(
            constraint_from(None, Some(&[1, 2, 3, 4]), 4).unwrap(),
            PolyConstraint::tetrad(4, 0, 1, 2, 3).unwrap()
        );
    }
}
