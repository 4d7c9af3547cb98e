use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pps_bench::config::{load_table, parse_list};
use pps_bench::{
    run_benchmark, summarize, write_records, write_records_to, write_summary, BenchConfig,
    Family, RunStatus, Scale,
};
use pps_core::{EvalMode, SamplerKind};

/// Compare jump-process samplers by multivariate ESS and ESS per CPU second.
#[derive(Parser, Debug)]
#[command(name = "pps-bench", version)]
struct Cli {
    /// Target family: poisson, sk, neural or table.
    #[arg(long)]
    target: Family,
    /// Comma-separated parameter values (rate, beta or alpha).
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated sampler tags.
    #[arg(long, default_value = "pps,bd,zanella-sqrt,zanella-min,zanella-ratio")]
    samplers: String,
    #[arg(long)]
    dim: Option<usize>,
    /// Measured steps per chain.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Field evaluation: full recompute per move, or incremental updates.
    #[arg(long, default_value = "full")]
    recompute: EvalMode,
    #[arg(long, default_value = "desk")]
    scale: Scale,
    /// Results CSV; a summary is written next to it. Stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table of `count-tuple log-f` lines for --target table.
    #[arg(long)]
    table_file: Option<PathBuf>,
    /// Maximum concurrent chains.
    #[arg(long)]
    workers: Option<usize>,
}

fn build(cli: &Cli) -> Result<BenchConfig, String> {
    let mut c = BenchConfig::new(cli.target, cli.scale);
    if let Some(g) = &cli.grid {
        c.grid = parse_list(g, |s| s.parse::<f64>().map_err(|e| format!("grid value '{s}': {e}")))?;
    }
    c.samplers = parse_list(&cli.samplers, |s| s.parse::<SamplerKind>().map_err(|e| e.to_string()))?;
    if let Some(d) = cli.dim {
        c.dim = d;
    }
    if let Some(k) = cli.steps {
        c.steps = k;
    }
    if let Some(b) = cli.burnin {
        c.burn_in = b;
    }
    if let Some(b) = cli.batch_size {
        c.batch_size = b;
    }
    if let Some(r) = cli.reps {
        c.reps = r;
    }
    c.seed = cli.seed;
    c.recompute = cli.recompute;
    c.workers = cli.workers;
    c.out = cli.out.clone();
    if let Some(path) = &cli.table_file {
        let table = load_table(path).map_err(|e| e.to_string())?;
        if cli.dim.is_none() {
            c.dim = pps_core::Target::dim(&table);
        }
        c.table = Some(table);
    }
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let records = match run_benchmark(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let summary = summarize(&records);
    let written = match &config.out {
        Some(path) => write_records_to(&records, path).and_then(|_| {
            let spath = path.with_extension("summary.csv");
            write_summary(&summary, std::fs::File::create(&spath)?)
        }),
        None => write_records(&records, std::io::stdout().lock()),
    };
    if let Err(e) = written {
        eprintln!("error: writing results: {e}");
        return ExitCode::from(2);
    }
    let failed = records.iter().filter(|r| r.status != RunStatus::Ok).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", records.len());
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
