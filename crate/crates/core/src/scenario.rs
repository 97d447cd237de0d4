//! JSON scenario files: model, network, experiment and output sections.
//!
//! Edges in files are 1-based node pairs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{geometric_checkpoints, AcceptanceThresholds};
use crate::ldp::Priors;
use crate::linalg::Matrix;
use crate::model::{exponential_covariance, GaussianHypothesisPair};
use crate::schedule::{ScheduleSpec, ValidationReport, WeightSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSection,
    pub network: NetworkSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// `"identity"`, `{"exponential": rho}` or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSpec {
    Named(String),
    Exponential { exponential: f64 },
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    pub covariance: CovarianceSpec,
    #[serde(default)]
    pub priors: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Static,
    AlternatingLinks,
    RandomSubgraph,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    #[default]
    Metropolis,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub topology: Topology,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub period: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub keep_probability: Option<f64>,
    #[serde(default)]
    pub weight_rule: WeightRule,
    #[serde(default)]
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Explicit checkpoints; when absent, powers of two up to `k_max`.
    pub checkpoints: Option<Vec<usize>>,
    pub k_max: usize,
    pub n_trials: u64,
    pub master_seed: u64,
    pub thresholds: AcceptanceThresholds,
    /// Number of per-trial trajectory CSVs to write (0 disables).
    pub trajectory_dumps: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            checkpoints: None,
            k_max: 512,
            n_trials: 1000,
            master_seed: 0,
            thresholds: AcceptanceThresholds::default(),
            trajectory_dumps: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

impl ScenarioConfig {
    /// Parses JSON text. Syntax and schema errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn priors(&self) -> Result<Priors> {
        match self.model.priors {
            None => Ok(Priors::default()),
            Some([p0, p1]) => Priors::new(p0, p1).map_err(|e| Error::Config(e.to_string())),
        }
    }

    pub fn checkpoints(&self) -> Result<Vec<usize>> {
        let e = &self.experiment;
        let cps = match &e.checkpoints {
            Some(c) => c.clone(),
            None => geometric_checkpoints(e.k_max),
        };
        if cps.is_empty() || cps[0] == 0 || cps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "experiment.checkpoints must be non-empty, strictly increasing and >= 1".into(),
            ));
        }
        Ok(cps)
    }

    pub fn n_sensors(&self) -> usize {
        self.model.m0.len()
    }

    pub fn covariance(&self) -> Result<Matrix<f64>> {
        let n = self.n_sensors();
        match &self.model.covariance {
            CovarianceSpec::Named(s) if s == "identity" => Ok(Matrix::identity(n)),
            CovarianceSpec::Named(s) => Err(Error::Config(format!(
                "model.covariance: unknown name {s:?} (expected \"identity\")"
            ))),
            CovarianceSpec::Exponential { exponential } => {
                Ok(exponential_covariance(n, *exponential))
            }
            CovarianceSpec::Full(rows) => {
                Matrix::from_rows(rows).map_err(|e| Error::Config(format!("model.covariance: {e}")))
            }
        }
    }

    /// Builds the hypothesis pair. Shape mismatches are configuration errors;
    /// a singular covariance or identical means are domain errors.
    pub fn build_model(&self) -> Result<GaussianHypothesisPair<f64>> {
        let cov = self.covariance()?;
        let n = self.n_sensors();
        if n == 0 || self.model.m1.len() != n || cov.rows() != n || cov.cols() != n {
            return Err(Error::Config(format!(
                "model: m0 has {n} entries, m1 has {}, covariance is {}x{}",
                self.model.m1.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        GaussianHypothesisPair::new(self.model.m0.clone(), self.model.m1.clone(), cov)
    }

    fn zero_based_edges(&self) -> Result<Vec<(usize, usize)>> {
        let n = self.n_sensors();
        self.network
            .edges
            .iter()
            .map(|&[a, b]| {
                if a == 0 || b == 0 || a > n || b > n {
                    Err(Error::Config(format!(
                        "network.edges: [{a}, {b}] outside nodes 1..={n}"
                    )))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect()
    }

    pub fn schedule_spec(&self) -> Result<ScheduleSpec<f64>> {
        let net = &self.network;
        let n = self.n_sensors();
        let explicit_rule = net.weight_rule == WeightRule::Explicit;
        if explicit_rule != (net.topology == Topology::Explicit) {
            return Err(Error::Config(
                "network.weight_rule \"explicit\" goes with topology \"explicit\" only".into(),
            ));
        }
        let edges = self.zero_based_edges()?;
        let need =
            |what: &str| Error::Config(format!("network.{what} is required for this topology"));
        Ok(match net.topology {
            Topology::Static => ScheduleSpec::Static { n, edges },
            Topology::AlternatingLinks => ScheduleSpec::AlternatingLinks {
                n,
                links: edges,
                period: net.period,
            },
            Topology::RandomSubgraph => ScheduleSpec::RandomSubgraph {
                n,
                base: edges,
                period: net.period.ok_or_else(|| need("period"))?,
                seed: net.seed.ok_or_else(|| need("seed"))?,
                keep_probability: net
                    .keep_probability
                    .ok_or_else(|| need("keep_probability"))?,
            },
            Topology::Explicit => {
                let mats = net.matrices.as_ref().ok_or_else(|| need("matrices"))?;
                let matrices = mats
                    .iter()
                    .map(|m| {
                        Matrix::from_rows(m)
                            .map_err(|e| Error::Config(format!("network.matrices: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let Some(bad) = matrices.iter().find(|m| m.rows() != n || m.cols() != n) {
                    return Err(Error::Config(format!(
                        "network.matrices: expected {n}x{n}, got {}x{}",
                        bad.rows(),
                        bad.cols()
                    )));
                }
                ScheduleSpec::Explicit { matrices }
            }
        })
    }

    pub fn build_schedule(&self) -> Result<WeightSchedule<f64>> {
        WeightSchedule::build(&self.schedule_spec()?)
    }

    /// Validation report for the network. A period with no connected window
    /// still yields a report (window taken as the full period).
    pub fn assess_schedule(&self) -> Result<ValidationReport> {
        let spec = self.schedule_spec()?;
        match WeightSchedule::build(&spec) {
            Ok(s) => Ok(s.validate()),
            Err(Error::NoConnectedWindow { .. }) => {
                let matrices: Vec<Matrix<f64>> = match spec {
                    ScheduleSpec::Explicit { matrices } => matrices,
                    other => other
                        .snapshots()?
                        .expect("generated topologies have snapshots")
                        .iter()
                        .map(crate::graph::metropolis_weights)
                        .collect(),
                };
                let w_min = matrices
                    .iter()
                    .flat_map(|w| w.as_slice().iter().copied())
                    .filter(|&x| x > 0.0)
                    .fold(f64::INFINITY, f64::min);
                let period = matrices.len();
                Ok(WeightSchedule::from_parts_unchecked(matrices, w_min, period).validate())
            }
            Err(e) => Err(e),
        }
    }
}

/// A parsed config together with the objects it describes.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: GaussianHypothesisPair<f64>,
    pub schedule: WeightSchedule<f64>,
    pub priors: Priors,
    pub checkpoints: Vec<usize>,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let priors = config.priors()?;
        let checkpoints = config.checkpoints()?;
        let model = config.build_model()?;
        let schedule = config.build_schedule()?;
        Ok(Self {
            config,
            model,
            schedule,
            priors,
            checkpoints,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(ScenarioConfig::from_json(text)?)
    }

    /// Reads and builds a scenario file. I/O failures are reported as
    /// configuration errors naming the path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn name(&self) -> &str {
        self.config.name.as_deref().unwrap_or("scenario")
    }
}
