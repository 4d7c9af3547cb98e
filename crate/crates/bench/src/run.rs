//! Running the benchmark grid.

use std::io;
use std::path::Path;

use pps_core::ess::{timed_run, EssAccumulator, EssError};
use pps_core::sampler::SamplerError;
use pps_core::trace::Discard;
use pps_core::{SamplerKind, TargetModel};
use rand::SeedableRng;
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, ConfigError};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    /// Sample covariance not positive definite (e.g. a frozen component).
    SingularSample,
    /// Batch-means covariance not positive definite.
    SingularAsymptotic,
    /// Fewer than two full batches were collected.
    TooFewSamples,
    /// The sampler could not start or stopped early.
    SamplerFailed,
}

/// One row of the results CSV. Column order follows field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub target: String,
    pub param: f64,
    pub sampler: String,
    pub replicate: usize,
    pub seed: u64,
    pub k: usize,
    pub b: usize,
    pub ess: Option<f64>,
    pub cpu_seconds: Option<f64>,
    pub ess_per_second: Option<f64>,
    pub status: RunStatus,
}

struct Job {
    grid: usize,
    sampler: SamplerKind,
    replicate: usize,
    seed: u64,
}

fn sampler_index(kind: SamplerKind) -> u64 {
    SamplerKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64
}

/// Runs every (grid point, sampler, replicate) cell. Rows come back in
/// configuration order whatever order the chains finish in; failed chains
/// are reported through `status` rather than dropped.
pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<RunRecord>, ConfigError> {
    config.validate()?;
    let targets = config
        .grid
        .iter()
        .map(|&v| config.target(v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut jobs = Vec::with_capacity(config.run_count());
    for grid in 0..config.grid.len() {
        for &sampler in &config.samplers {
            for replicate in 0..config.reps {
                let seed = derive_seed(config.seed, grid as u64, sampler_index(sampler), replicate as u64);
                jobs.push(Job {
                    grid,
                    sampler,
                    replicate,
                    seed,
                });
            }
        }
    }
    let work = || -> Vec<RunRecord> {
        jobs.par_iter()
            .map(|job| run_one(config, &targets[job.grid], job))
            .collect()
    };
    Ok(match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    })
}

fn run_one(config: &BenchConfig, target: &TargetModel, job: &Job) -> RunRecord {
    let mut record = RunRecord {
        target: config.family.tag().to_string(),
        param: config.grid[job.grid],
        sampler: job.sampler.tag().to_string(),
        replicate: job.replicate,
        seed: job.seed,
        k: config.steps as usize,
        b: config.batch_size,
        ess: None,
        cpu_seconds: None,
        ess_per_second: None,
        status: RunStatus::Ok,
    };
    let outcome = (|| -> Result<_, SamplerError> {
        let mut rng = Pcg64::seed_from_u64(job.seed);
        let mut chain = job.sampler.start(target)?;
        chain.run(target, config.burn_in, &mut rng, &mut Discard)?;
        let mut acc = EssAccumulator::new(target_dim(target), config.batch_size)
            .expect("batch size validated");
        let timing = timed_run(&mut chain, target, config.steps, &mut rng, &mut acc)?;
        Ok((acc.finish(), timing.seconds))
    })();
    match outcome {
        Err(_) => record.status = RunStatus::SamplerFailed,
        Ok((Err(e), seconds)) => {
            record.cpu_seconds = Some(seconds);
            record.status = match e {
                EssError::NotPositiveDefinite(pps_core::ess::Covariance::Sample) => RunStatus::SingularSample,
                EssError::NotPositiveDefinite(_) => RunStatus::SingularAsymptotic,
                _ => RunStatus::TooFewSamples,
            };
        }
        Ok((Ok(report), seconds)) => {
            let report = report.with_timing(seconds);
            record.k = report.k;
            record.ess = Some(report.ess);
            record.cpu_seconds = report.cpu_seconds;
            record.ess_per_second = report.ess_per_second;
        }
    }
    record
}

fn target_dim(target: &TargetModel) -> usize {
    use pps_core::Target;
    target.dim()
}

/// Writes records as CSV with one header row.
pub fn write_records<W: io::Write>(records: &[RunRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_to(records: &[RunRecord], path: &Path) -> csv::Result<()> {
    write_records(records, std::fs::File::create(path)?)
}

pub fn read_records<R: io::Read>(input: R) -> csv::Result<Vec<RunRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
