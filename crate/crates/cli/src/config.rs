//! Experiment configuration files.
//!
//! One TOML file describes one run:
//!
//! ```toml
//! [problem]
//! family = "poisson"
//! d = 3
//! n = 100
//!
//! [architecture]
//! depth = 3
//! width = 100
//!
//! [training]
//! batch_size = 10000
//! max_iters = 50000
//! lr_start = 1e-3
//! lr_end = 1e-5
//! seed = 1
//! optimizer = "adaptive-moment"
//! eval_every = 1000
//!
//! [evaluation]
//! n_test = 10000
//! test_seed = 2
//!
//! [output]
//! directory = "out/poisson-d3"
//! formats = ["csv", "json", "checkpoint"]
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::PathBuf;

use neurolin::fnn::Architecture;
use neurolin::problems::{
    build_pbn, build_poisson, build_queueing, build_riesz, pbn_defaults, queueing_defaults,
    ProblemInstance,
};
use neurolin::solver::TrainConfig;
use neurolin::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Poisson {
        d: usize,
        n: u32,
    },
    Riesz {
        d: usize,
        n: u32,
        /// One diffusion coefficient per dimension.
        c: Vec<f64>,
        /// One fractional order in `(1, 2)` per dimension.
        alpha: Vec<f64>,
    },
    Queueing {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambdas: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        servers: Option<Vec<u32>>,
    },
    Pbn {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shifts: Option<Vec<i64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
    },
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemInstance, Error> {
        match self {
            ProblemConfig::Poisson { d, n } => build_poisson(*d, *n),
            ProblemConfig::Riesz { d, n, c, alpha } => build_riesz(*d, *n, c, alpha),
            ProblemConfig::Queueing {
                d,
                n,
                alpha,
                lambdas,
                servers,
            } => {
                let lambdas = lambdas
                    .clone()
                    .unwrap_or_else(|| vec![queueing_defaults::LAMBDA; *d]);
                let servers = servers
                    .clone()
                    .unwrap_or_else(|| queueing_defaults::servers(*d));
                build_queueing(
                    *d,
                    n.unwrap_or(queueing_defaults::N),
                    alpha.unwrap_or(queueing_defaults::ALPHA),
                    &lambdas,
                    &servers,
                )
            }
            ProblemConfig::Pbn { d, shifts, values } => build_pbn(
                *d,
                shifts.as_deref().unwrap_or(&pbn_defaults::SHIFTS),
                values.as_deref().unwrap_or(&pbn_defaults::VALUES),
            ),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemConfig::Poisson { d, .. }
            | ProblemConfig::Riesz { d, .. }
            | ProblemConfig::Queueing { d, .. }
            | ProblemConfig::Pbn { d, .. } => *d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub depth: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_test: usize,
    pub test_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// Training history, `history.csv`.
    Csv,
    /// Final metrics, `report.json`.
    Json,
    /// Trained parameters, `checkpoint.bin`.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub architecture: ArchitectureConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub output: OutputConfig,
}

/// Everything a run needs, built and checked before any output is written.
pub struct Prepared {
    pub instance: ProblemInstance,
    pub arch: Architecture,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Validates every section and builds the problem instance.
    pub fn prepare(&self) -> Result<Prepared, Error> {
        self.training.validate()?;
        if self.evaluation.n_test == 0 {
            return Err(Error::Parameter("n_test must be at least 1".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Parameter("at least one output format is required".into()));
        }
        let arch = Architecture::new(
            self.architecture.depth,
            self.architecture.width,
            self.problem.dim(),
        )?;
        let instance = self.problem.build()?;
        instance.loss.validate(instance.shape())?;
        Ok(Prepared { instance, arch })
    }
}
