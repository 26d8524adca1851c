//! Experiment configuration: a strict TOML schema.
//!
//! Unknown keys are rejected, not warned about; a silent typo in a benchmark
//! config corrupts the claim the output is supposed to support. Command-line
//! overrides are applied after parsing and before validation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub model: ModelConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub options: OptionsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub runs: Vec<RunConfig>,
}

/// Problem block, one table per problem type: `[problem.max_call]`,
/// `[problem.multi_stop]` or `[problem.gas_storage]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemConfig {
    MaxCall(MaxCallConfig),
    MultiStop(MultiStopConfig),
    GasStorage(GasStorageConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxCallConfig {
    pub dim: usize,
    pub epochs: usize,
    pub strike: f64,
    pub rate: f64,
    pub maturity: f64,
    /// Uniform cash-flow bound; only needed when truncation is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cash_flow_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiStopConfig {
    pub dim: usize,
    pub epochs: usize,
    pub rights: usize,
    pub strike: f64,
    pub rate: f64,
    pub maturity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cash_flow_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasStorageConfig {
    /// Capacity in trade units; fill levels run over `0..=levels`.
    pub levels: usize,
    pub epochs: usize,
    pub stride_days: f64,
    pub rate: f64,
    pub initial_level: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cash_flow_bound: Option<f64>,
}

/// Model block: `[model.gbm]` or `[model.oil_gas]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    Gbm(GbmConfig),
    OilGas(OilGasConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmConfig {
    pub dim: usize,
    pub x0: f64,
    pub rate: f64,
    pub dividend: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OilGasConfig {
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho_w: f64,
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub rho_j: f64,
    pub x0: [f64; 2],
    pub euler_steps: usize,
    /// Keep every `stride`-th Euler step as a decision epoch.
    pub stride: usize,
    #[serde(default)]
    pub floor_at_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub train_paths: usize,
    pub test_paths: usize,
    pub seed_train: u64,
    pub seed_test: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsConfig {
    /// Emit cost counters in the outputs; zeros when off.
    pub counters: bool,
    /// Clamp regressed continuations to the band `[-J*C_H, J*C_H]`.
    pub truncate: bool,
    /// Worker thread cap; 0 leaves the pool at its default size.
    pub workers: usize,
}

impl Default for OptionsConfig {
    fn default() -> Self {
        Self {
            counters: true,
            truncate: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; falls back to `LSMC_OUT_DIR`, then the working
    /// directory.
    pub dir: Option<String>,
    /// File stem for the CSV/JSON pair; falls back to the config file stem.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: MethodName,
    pub basis: BasisName,
    /// Polynomial degree; required by the polynomial bases, rejected
    /// elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// Hierarchy depth `I`; required by hrr_b, optional for hrr_a.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Adaptive stopping threshold for hrr_a, instead of a fixed depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_theta: Option<f64>,
    /// Explicit reinforcement sets, one list of control indices per
    /// control; defaults to the problem's own choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reinforce: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Standard,
    HrrA,
    HrrB,
    RrDiagonal,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Standard => "standard",
            MethodName::HrrA => "hrr_a",
            MethodName::HrrB => "hrr_b",
            MethodName::RrDiagonal => "rr_diagonal",
        }
    }

    pub fn takes_depth(self) -> bool {
        matches!(self, MethodName::HrrA | MethodName::HrrB)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisName {
    Psi1,
    Psi1g,
    Psi2,
    Psi3,
    PricePoly,
    JointPoly,
}

impl BasisName {
    pub fn needs_degree(self) -> bool {
        matches!(self, BasisName::PricePoly | BasisName::JointPoly)
    }
}

impl fmt::Display for BasisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BasisName::Psi1 => "psi1",
            BasisName::Psi1g => "psi1g",
            BasisName::Psi2 => "psi2",
            BasisName::Psi3 => "psi3",
            BasisName::PricePoly => "price_poly",
            BasisName::JointPoly => "joint_poly",
        };
        f.write_str(s)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Cross-field checks; every message names the offending key.
    pub fn validate(&self) -> Result<(), String> {
        let s = &self.sampling;
        if s.train_paths == 0 {
            return Err("sampling.train_paths must be >= 1".into());
        }
        if s.test_paths == 0 {
            return Err("sampling.test_paths must be >= 1".into());
        }
        if s.seed_train == s.seed_test {
            return Err("sampling.seed_train must differ from sampling.seed_test".into());
        }
        if self.runs.is_empty() {
            return Err("runs must contain at least one entry".into());
        }

        let (problem_dim, problem_epochs) = match &self.problem {
            ProblemConfig::MaxCall(p) => (p.dim, p.epochs),
            ProblemConfig::MultiStop(p) => (p.dim, p.epochs),
            ProblemConfig::GasStorage(p) => (2, p.epochs),
        };
        if let ProblemConfig::MultiStop(p) = &self.problem {
            if p.rights == 0 {
                return Err("problem.multi_stop.rights must be >= 1".into());
            }
        }

        match (&self.problem, &self.model) {
            (ProblemConfig::GasStorage(_), ModelConfig::OilGas(m)) => {
                if m.stride == 0 {
                    return Err("model.oil_gas.stride must be >= 1".into());
                }
                if m.stride * problem_epochs > m.euler_steps {
                    return Err("model.oil_gas.stride * problem epochs exceeds euler_steps".into());
                }
            }
            (ProblemConfig::GasStorage(_), ModelConfig::Gbm(_)) => {
                return Err("problem.gas_storage requires model.oil_gas".into());
            }
            (_, ModelConfig::Gbm(m)) => {
                if m.dim != problem_dim {
                    return Err("model.gbm.dim must match the problem dim".into());
                }
                if m.epochs != problem_epochs {
                    return Err("model.gbm.epochs must match the problem epochs".into());
                }
            }
            (_, ModelConfig::OilGas(_)) => {
                return Err("stopping problems require model.gbm".into());
            }
        }

        for (i, run) in self.runs.iter().enumerate() {
            let key = |field: &str| format!("runs[{i}].{field}");
            if run.basis.needs_degree() {
                if run.degree.is_none() {
                    return Err(format!("{} is required for {}", key("degree"), run.basis));
                }
                if problem_dim != 2 {
                    return Err(format!(
                        "runs[{i}].basis {} needs a 2-dimensional state",
                        run.basis
                    ));
                }
            } else if run.degree.is_some() {
                return Err(format!(
                    "{} is not accepted by {}",
                    key("degree"),
                    run.basis
                ));
            }
            if matches!(run.basis, BasisName::Psi1g)
                && matches!(self.problem, ProblemConfig::GasStorage(_))
            {
                return Err(format!(
                    "runs[{i}].basis psi1g needs a strike-based problem"
                ));
            }
            match run.method {
                MethodName::Standard | MethodName::RrDiagonal => {
                    if run.depth.is_some() {
                        return Err(format!(
                            "{} is not accepted by {}",
                            key("depth"),
                            run.method.as_str()
                        ));
                    }
                    if run.adaptive_theta.is_some() {
                        return Err(format!(
                            "{} is not accepted by {}",
                            key("adaptive_theta"),
                            run.method.as_str()
                        ));
                    }
                }
                MethodName::HrrB => {
                    if run.depth.is_none() {
                        return Err(format!("{} is required for hrr_b", key("depth")));
                    }
                    if run.adaptive_theta.is_some() {
                        return Err(format!(
                            "{} is not accepted by hrr_b",
                            key("adaptive_theta")
                        ));
                    }
                }
                MethodName::HrrA => {
                    if run.depth.is_some() == run.adaptive_theta.is_some() {
                        return Err(format!(
                            "hrr_a needs exactly one of {} and {}",
                            key("depth"),
                            key("adaptive_theta")
                        ));
                    }
                    if let Some(theta) = run.adaptive_theta {
                        if !(theta > 0.0) {
                            return Err(format!("{} must be positive", key("adaptive_theta")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
