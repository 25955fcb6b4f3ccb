use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use ddmm_cli::commands::{self, Outcome};
use ddmm_cli::config::RunConfig;
use ddmm_cli::manifest::{Axis, Invocation};
use ddmm_core::segment::read_query_file;

#[derive(Parser)]
#[command(name = "ddmm", version, about = "Difference-based distance learning for time-series segment retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Input CSV (overrides dataset.path).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (overrides output).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Seeds, comma separated (overrides seeds).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Repeat the run recorded in this manifest and verify its artifacts.
    #[arg(long, conflicts_with_all = ["config", "overrides", "data", "seeds"])]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and scale a dataset and write it with a metadata sidecar.
    Preprocess(Common),
    /// Train one model and save it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank segments for given queries with a saved model.
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "manifest")]
        model: Option<PathBuf>,
        /// Query time indices, comma separated.
        #[arg(long, value_delimiter = ',')]
        query: Vec<usize>,
        /// File with one query time index per line.
        #[arg(long)]
        query_file: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Train and evaluate every configured method on every seed.
    Benchmark(Common),
    /// Repeat the benchmark over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, required_unless_present = "manifest")]
        axis: Option<Axis>,
        #[arg(long, value_delimiter = ',', required_unless_present = "manifest")]
        values: Vec<usize>,
    },
}

fn configure_threads(threads: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("configuring the thread pool: {e}"))?;
    }
    #[cfg(not(feature = "parallel"))]
    if threads > 1 {
        eprintln!("built without the parallel feature; --threads ignored");
    }
    Ok(())
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(c.config.as_deref(), &c.overrides)?;
    if let Some(d) = &c.data {
        cfg.dataset.path = d.clone();
    }
    if let Some(o) = &c.output {
        cfg.output = o.clone();
    }
    if !c.seeds.is_empty() {
        cfg.seeds = c.seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<Outcome> {
    let (common, invocation) = match cli.command {
        Command::Preprocess(c) => (c, Some(Invocation::Preprocess)),
        Command::Benchmark(c) => (c, Some(Invocation::Benchmark)),
        Command::Train { common, seed } => (common, Some(Invocation::Train { seed })),
        Command::Retrieve {
            common,
            model,
            mut query,
            query_file,
            k,
        } => {
            if let Some(f) = query_file {
                query.extend(read_query_file(&f)?);
            }
            let inv = match model {
                Some(model) if common.manifest.is_none() => {
                    if query.is_empty() {
                        bail!("give --query or --query-file");
                    }
                    Some(Invocation::Retrieve {
                        model,
                        queries: query,
                        k,
                    })
                }
                _ => None,
            };
            (common, inv)
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let inv = axis.map(|axis| Invocation::Sweep { axis, values });
            (common, inv)
        }
    };
    configure_threads(common.threads)?;
    if let Some(m) = &common.manifest {
        return commands::rerun(m, common.output.clone());
    }
    let cfg = load_config(&common)?;
    commands::run(&invocation.expect("arguments checked by clap"), &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            for m in &outcome.mismatches {
                eprintln!("artifact mismatch: {m}");
            }
            eprintln!("manifest: {}", outcome.output.join(ddmm_cli::manifest::MANIFEST_FILE).display());
            if outcome.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
