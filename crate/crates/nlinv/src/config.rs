//! Run configuration: every hyperparameter in one place, loadable from a
//! TOML file and echoed into result records for reproducibility.

use crate::dlogic::RelaxationConfig;
use crate::extract::RationalizationConfig;
use crate::gcln::{BoundsConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Fractional-sampling ladder settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FracConfig {
    pub enabled: bool,
    /// Grid steps tried in order once integer sampling has failed.
    pub steps: Vec<f64>,
    /// Relaxed initial values range over `[init - span, init + span]`.
    pub span: f64,
    /// Parameter valuations reused for fractional runs.
    pub param_budget: usize,
    pub max_iters: usize,
}

impl Default for FracConfig {
    fn default() -> Self {
        FracConfig {
            enabled: true,
            steps: vec![0.5, 0.25],
            span: 1.0,
            param_budget: 3,
            max_iters: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Initial valuations enumerated over the precondition domain.
    pub budget: usize,
    /// Scaled-up copies of the largest accepted valuation, appended so that
    /// bounds fitting only the small-value box die early.
    pub probe_scales: Vec<u32>,
    pub max_iters: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            budget: 25,
            probe_scales: vec![2, 4, 16],
            max_iters: 50,
        }
    }
}

/// Full pipeline configuration. Defaults reproduce the reference settings:
/// `maxDeg` auto-derived per program, dropout 0.3 decreasing 0.1 per failed
/// attempt, L2 row norm 10, a 10x2 CNF model, sigma 0.1 / c1 1 / c2 50 /
/// epsilon 0.5, maximum denominators (10, 15, 30), and 60 s solver timeout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Monomial degree bound; `None` derives it from the program's
    /// postcondition and body degrees (at least 2).
    pub max_deg: Option<u32>,
    pub sampling: SamplingConfig,
    /// Target L2 norm of normalized rows.
    pub l2_norm: f64,
    /// Row normalization on/off (ablation switch).
    pub normalize: bool,
    /// Initial term-dropout probability.
    pub dropout: f64,
    /// Dropout on/off (ablation switch).
    pub dropout_enabled: bool,
    /// Unit-norm weight projection on/off (ablation switch).
    pub weight_reg: bool,
    /// Clause count of the CNF model.
    pub model_m: usize,
    /// Literals per clause.
    pub model_n: usize,
    pub gate_init_and: f64,
    pub gate_init_or: f64,
    pub relax: RelaxationConfig,
    pub train: TrainConfig,
    pub rationalize: RationalizationConfig,
    pub bounds: BoundsConfig,
    /// Gate threshold of the extraction descent.
    pub gate_threshold: f64,
    /// Explicit solver command line; `None` auto-discovers.
    pub solver: Option<String>,
    pub solver_timeout_secs: u64,
    /// Axiomatize gcd instead of downgrading to valid-modulo-gcd.
    pub gcd_axioms: bool,
    /// CEGIS attempt budget.
    pub attempts: usize,
    /// Forward steps of a consecution counterexample appended to training.
    pub cex_unroll: usize,
    /// In-round conjunct-removal repairs before retraining.
    pub max_repairs: usize,
    pub frac: FracConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_deg: None,
            sampling: SamplingConfig::default(),
            l2_norm: 10.0,
            normalize: true,
            dropout: 0.3,
            dropout_enabled: true,
            weight_reg: true,
            model_m: 10,
            model_n: 2,
            gate_init_and: 0.95,
            gate_init_or: 0.5,
            relax: RelaxationConfig::default(),
            train: TrainConfig::default(),
            rationalize: RationalizationConfig::default(),
            bounds: BoundsConfig::default(),
            gate_threshold: 0.5,
            solver: None,
            solver_timeout_secs: 60,
            gcd_axioms: false,
            attempts: 10,
            cex_unroll: 3,
            max_repairs: 8,
            frac: FracConfig::default(),
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.relax.validate().map_err(ConfigError::Invalid)?;
        self.rationalize.validate().map_err(ConfigError::Invalid)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Invalid("dropout must be in [0, 1)".into()));
        }
        if self.model_m == 0 || self.model_n == 0 {
            return Err(ConfigError::Invalid("model shape must be nonzero".into()));
        }
        if self.l2_norm <= 0.0 {
            return Err(ConfigError::Invalid("l2_norm must be positive".into()));
        }
        if let Some(d) = self.max_deg {
            if d == 0 {
                return Err(ConfigError::Invalid("max_deg must be at least 1".into()));
            }
        }
        if self.attempts == 0 {
            return Err(ConfigError::Invalid("need at least one attempt".into()));
        }
        if self.frac.steps.iter().any(|s| *s <= 0.0) {
            return Err(ConfigError::Invalid("fractional steps must be positive".into()));
        }
        Ok(())
    }

    /// Degree bound for a program: explicit override, or the largest degree
    /// appearing in its specification and body (at least 2).
    pub fn degree_for(&self, program: &crate::dsl::LoopProgram) -> u32 {
        if let Some(d) = self.max_deg {
            return d;
        }
        let mut deg = crate::poly::bool_degree(&program.post)
            .max(crate::poly::bool_degree(&program.pre))
            .max(crate::poly::bool_degree(&program.guard));
        for stmt in program.inits.iter().chain(program.body.iter()) {
            deg = deg.max(crate::poly::expr_degree(&stmt.rhs_expr()));
        }
        deg.max(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.l2_norm, 10.0);
        assert_eq!(cfg.dropout, 0.3);
        assert_eq!(cfg.model_m, 10);
        assert_eq!(cfg.model_n, 2);
        assert_eq!(cfg.relax.sigma, 0.1);
        assert_eq!(cfg.relax.c1, 1.0);
        assert_eq!(cfg.relax.c2, 50.0);
        assert_eq!(cfg.rationalize.max_denominators, vec![10, 15, 30]);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.lr_decay, 0.9996);
        assert_eq!(cfg.train.max_epochs, 5000);
        assert_eq!(cfg.train.lambda1.init, 1.0);
        assert_eq!(cfg.train.lambda1.factor, 0.999);
        assert_eq!(cfg.train.lambda1.bound, 0.1);
        assert_eq!(cfg.train.lambda2.init, 0.001);
        assert_eq!(cfg.train.lambda2.factor, 1.001);
        assert_eq!(cfg.train.lambda2.bound, 0.1);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_toml_overlays_defaults() {
        let cfg = RunConfig::from_toml_str(
            "dropout = 0.2\nmax_deg = 4\n\n[train]\nmax_epochs = 100\n\n[sampling]\nbudget = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.dropout, 0.2);
        assert_eq!(cfg.max_deg, Some(4));
        assert_eq!(cfg.train.max_epochs, 100);
        assert_eq!(cfg.sampling.budget, 5);
        // untouched fields keep their defaults
        assert_eq!(cfg.model_m, 10);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(RunConfig::from_toml_str("dropout = 1.5").is_err());
        let mut cfg = RunConfig::default();
        cfg.rationalize.max_denominators = vec![10, 5];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.relax.c1 = 100.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn degree_auto_detection() {
        let prog = crate::dsl::parse_program(
            "//pre: k >= 0\nx = 0; y = 0;\nwhile (y < k) { y += 1; x += y * y * y; }\n//post: 4 * x == k^2 * (k + 1)^2",
        )
        .unwrap();
        assert_eq!(RunConfig::default().degree_for(&prog), 4);
        let cfg = RunConfig {
            max_deg: Some(2),
            ..RunConfig::default()
        };
        assert_eq!(cfg.degree_for(&prog), 2);
    }
}
