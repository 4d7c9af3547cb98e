//! Benchmark configuration and target construction.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use pps_core::targets::{
    neural_weights, sk_weights, EvalMode, NeuralTarget, PoissonTarget, SkTarget, TableTarget,
    TargetError,
};
use pps_core::{SamplerKind, TargetModel};
use rand::SeedableRng;
use rand_pcg::Pcg64;
use thiserror::Error;

use crate::seed::weights_seed;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("no samplers selected")]
    NoSamplers,
    #[error("need at least one replicate")]
    NoReplicates,
    #[error("batch size must be >= 1")]
    ZeroBatch,
    #[error("steps k = {steps} must be at least twice the batch size {batch}")]
    TooFewSteps { steps: u64, batch: usize },
    #[error("dimension must be >= 1")]
    ZeroDim,
    #[error("table target needs a table file")]
    MissingTable,
    #[error("unknown {what} '{value}'")]
    Unknown { what: &'static str, value: String },
    #[error("grid point {value}: {source}")]
    Target {
        value: f64,
        #[source]
        source: TargetError,
    },
    #[error(transparent)]
    TableLoad(TargetError),
}

/// Target family swept by a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Independent Poisson components, grid over the rate.
    Poisson,
    /// Transformed Sherrington-Kirkpatrick model, grid over beta.
    Sk,
    /// Stochastic neural network, grid over the weight strength alpha.
    Neural,
    /// Fixed table from a file; the grid value is only a label.
    Table,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Sk => "sk",
            Family::Neural => "neural",
            Family::Table => "table",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "poisson" => Ok(Family::Poisson),
            "sk" => Ok(Family::Sk),
            "neural" => Ok(Family::Neural),
            "table" => Ok(Family::Table),
            _ => Err(ConfigError::Unknown {
                what: "target",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(ConfigError::Unknown {
                what: "scale",
                value: s.to_string(),
            }),
        }
    }
}

/// Neural network bias shared by every unit.
pub const NEURAL_BIAS: f64 = 5.0;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub family: Family,
    pub grid: Vec<f64>,
    pub samplers: Vec<SamplerKind>,
    pub dim: usize,
    pub steps: u64,
    pub burn_in: u64,
    pub batch_size: usize,
    pub reps: usize,
    pub seed: u64,
    pub recompute: EvalMode,
    pub table: Option<TableTarget>,
    /// Maximum number of chains run at once; `None` uses every core.
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl BenchConfig {
    /// Defaults for `family` at the given scale.
    pub fn new(family: Family, scale: Scale) -> Self {
        let (dim, steps, burn_in, reps) = match scale {
            Scale::Desk => (20, 300_000, 30_000, 5),
            Scale::Paper => (100, 9_000_000, 1_000_000, 10),
        };
        let dim = if matches!(family, Family::Poisson) { 1 } else { dim };
        Self {
            family,
            grid: default_grid(family, scale),
            samplers: SamplerKind::ALL.to_vec(),
            dim,
            steps,
            burn_in,
            batch_size: 3000,
            reps,
            seed: 0,
            recompute: EvalMode::Full,
            table: None,
            workers: None,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid.is_empty() {
            return Err(ConfigError::EmptyGrid);
        }
        if self.samplers.is_empty() {
            return Err(ConfigError::NoSamplers);
        }
        if self.reps == 0 {
            return Err(ConfigError::NoReplicates);
        }
        if self.batch_size == 0 {
            return Err(ConfigError::ZeroBatch);
        }
        if self.steps < 2 * self.batch_size as u64 {
            return Err(ConfigError::TooFewSteps {
                steps: self.steps,
                batch: self.batch_size,
            });
        }
        if self.dim == 0 {
            return Err(ConfigError::ZeroDim);
        }
        if self.family == Family::Table && self.table.is_none() {
            return Err(ConfigError::MissingTable);
        }
        Ok(())
    }

    /// Number of records a run produces.
    pub fn run_count(&self) -> usize {
        self.grid.len() * self.samplers.len() * self.reps
    }

    /// Builds the target for one grid value. Random couplings come from a
    /// stream fixed by the base seed, so every grid point and replicate
    /// shares the same `W` (scaled by the grid value where applicable).
    pub fn target(&self, value: f64) -> Result<TargetModel, ConfigError> {
        let wrap = |source| ConfigError::Target { value, source };
        let mut rng = Pcg64::seed_from_u64(weights_seed(self.seed));
        Ok(match self.family {
            Family::Poisson => PoissonTarget::new(self.dim, value).map_err(wrap)?.into(),
            Family::Sk => {
                let w = sk_weights(self.dim, &mut rng);
                SkTarget::new(value, &w, self.recompute).map_err(wrap)?.into()
            }
            Family::Neural => {
                let w = neural_weights(self.dim, &mut rng) * value;
                NeuralTarget::new(&w, vec![NEURAL_BIAS; self.dim], 0.0, 1.0, self.recompute)
                    .map_err(wrap)?
                    .into()
            }
            Family::Table => self.table.clone().ok_or(ConfigError::MissingTable)?.into(),
        })
    }
}

/// Default parameter sweeps: three points at desk scale, 21 at paper scale.
pub fn default_grid(family: Family, scale: Scale) -> Vec<f64> {
    match (family, scale) {
        (Family::Poisson, Scale::Desk) => vec![1.0, 5.0, 10.0],
        (Family::Poisson, Scale::Paper) => (0..21).map(|k| 10f64.powf(-1.0 + 0.15 * f64::from(k))).collect(),
        (Family::Sk | Family::Neural, Scale::Desk) => vec![0.25, 0.5, 1.0],
        (Family::Sk | Family::Neural, Scale::Paper) => (0..21).map(|k| 0.1 * f64::from(k)).collect(),
        (Family::Table, _) => vec![0.0],
    }
}

/// Parses a comma-separated list with `parse`.
pub fn parse_list<T, E>(s: &str, parse: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, E> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse)
        .collect()
}

pub fn load_table(path: &std::path::Path) -> Result<TableTarget, ConfigError> {
    TableTarget::load(path).map_err(ConfigError::TableLoad)
}
