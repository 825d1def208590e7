//! Experiment configuration: the TOML schema, name parsing, and the
//! observable-polynomial plumbing shared by the operator experiments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::poly::{PolyTerm, Polynomial};
use crate::wfchain::Clock;

/// Every experiment the binary can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Validate,
    SimulateChain,
    SimulateSde,
    GeneratorCheck,
    SemigroupCheck,
    TrotterCheck,
    Absorption,
    BoundCheck,
    HittingTime,
    StoppingCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Validate,
        ExperimentKind::SimulateChain,
        ExperimentKind::SimulateSde,
        ExperimentKind::GeneratorCheck,
        ExperimentKind::SemigroupCheck,
        ExperimentKind::TrotterCheck,
        ExperimentKind::Absorption,
        ExperimentKind::BoundCheck,
        ExperimentKind::HittingTime,
        ExperimentKind::StoppingCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Validate => "validate",
            ExperimentKind::SimulateChain => "simulate-chain",
            ExperimentKind::SimulateSde => "simulate-sde",
            ExperimentKind::GeneratorCheck => "generator-check",
            ExperimentKind::SemigroupCheck => "semigroup-check",
            ExperimentKind::TrotterCheck => "trotter-check",
            ExperimentKind::Absorption => "absorption",
            ExperimentKind::BoundCheck => "bound-check",
            ExperimentKind::HittingTime => "hitting-time",
            ExperimentKind::StoppingCheck => "stopping-check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                Error::Usage(format!(
                    "unknown experiment '{s}'; expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Which process a comparison experiment samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Sde,
    Chain,
}

/// Free experiment parameters. All optional; each experiment resolves the
/// ones it needs and rejects a run that leaves a required one unset.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub x0: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub alpha: Option<f64>,
    pub n: Option<u64>,
    pub n_values: Option<Vec<u64>>,
    pub n_steps_values: Option<Vec<u32>>,
    pub times: Option<Vec<f64>>,
    pub grid_resolution: Option<usize>,
    pub clock: Option<Clock>,
    pub corner_tol: Option<f64>,
    pub process: Option<ProcessKind>,
    /// Observable polynomial as a term list.
    pub f: Option<Vec<PolyTerm>>,
}

impl Params {
    /// The observable polynomial, defaulting to x_1^2 x_2.
    pub fn observable(&self, m: usize) -> Result<Polynomial> {
        match &self.f {
            Some(terms) => Polynomial::from_terms(m, terms),
            None => {
                let mut exps = vec![0u16; m];
                exps[0] = 2;
                if m > 1 {
                    exps[1] = 1;
                }
                Polynomial::monomial(m, &exps, 1.0)
            }
        }
    }
}

/// Top-level experiment file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must agree with the experiment named on
    /// the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    pub model: ModelConfig,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }
}
