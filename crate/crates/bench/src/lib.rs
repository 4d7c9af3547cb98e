//! Benchmark harness comparing the point-process sampler with the
//! birth-death and Zanella samplers by multivariate ESS and ESS per CPU
//! second.

pub mod config;
pub mod run;
pub mod seed;
pub mod summary;

pub use config::{BenchConfig, ConfigError, Family, Scale};
pub use run::{read_records, run_benchmark, write_records, write_records_to, RunRecord, RunStatus};
pub use seed::derive_seed;
pub use summary::{mean_ci, summarize, write_summary, SummaryRow};
