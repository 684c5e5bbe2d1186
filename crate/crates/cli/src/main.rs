//! `elastic`: plan, simulate and compare elastic-kernel scheduling, and
//! transform kernel sources.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 when a
//! simulation or a kernel verification fails.

mod config;
mod experiment;
mod plan;
mod transform;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use elastic_dsl::IndexMode;

use config::{gpu_preset, ExperimentConfig, Overrides};
use experiment::{comparison, gnuplot, policy_labels, run_cells, summary, with_baseline, write_cells};
use plan::CriticalShape;
use transform::TransformArgs;

#[derive(Parser)]
#[command(
    name = "elastic",
    version,
    about = "Elastic-kernel planning, simulation and kernel transformation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// GPU preset, overriding the config (rtx2060-like, xavier-like).
    #[arg(long, global = true)]
    gpu: Option<String>,
    /// Seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Score every elastic candidate of a model's kernels and mark the kept set.
    Plan {
        /// Model profile file or shipped profile name.
        profile: String,
        /// Co-running critical kernel as <blocks>x<threads>; repeatable.
        #[arg(long = "critical")]
        critical: Vec<CriticalShape>,
        /// Take the critical kernels from a model profile.
        #[arg(long)]
        critical_model: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate every workload under every policy and write metrics.
    Run {
        config: PathBuf,
        /// Simulate up to N (workload, policy) cells at once.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Print the elastic form of a kernel source file.
    Transform {
        file: PathBuf,
        /// Logical grid size for verification (default: the @launch header).
        #[arg(long)]
        grid: Option<u32>,
        /// Logical block size for verification (default: the @launch header).
        #[arg(long)]
        block: Option<u32>,
        /// Blocks per shard (default: every slicing-plan size).
        #[arg(long)]
        shard: Option<u32>,
        /// Physical threads per elastic block (default: a sweep up to --block).
        #[arg(long)]
        elastic_block: Option<u32>,
        /// Index mode: computation or memory.
        #[arg(long, default_value = "computation")]
        mode: IndexMode,
        /// Check the elastic kernel against the original on random inputs.
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Report latency and throughput ratios against the sequential baseline.
    Compare {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure classes mapped to exit codes.
enum CliError {
    Usage(anyhow::Error),
    Failure(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Failure(_) => 2,
        }
    }
}

fn usage<T>(r: anyhow::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Usage)
}

fn failure<T>(r: anyhow::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Failure)
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        gpu: common.gpu.clone(),
        seed: common.seed,
        out: common.out.clone(),
    }
}

fn load_config(path: &Path, common: &Common) -> Result<ExperimentConfig, CliError> {
    usage(ExperimentConfig::load(path, &overrides(common)))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        failure(std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())))?;
    }
    failure(std::fs::write(path, text).with_context(|| format!("writing {}", path.display())))
}

fn cmd_run(path: &Path, parallel: usize, common: &Common) -> Result<(), CliError> {
    let config = load_config(path, common)?;
    let Some(out) = config.out.clone() else {
        return Err(CliError::Usage(anyhow!("no output directory: set `out` or pass --out")));
    };
    let (policies, _) = with_baseline(&config.policies);
    let cells = failure(run_cells(&config, &policies, parallel))?;
    failure(write_cells(&config, &cells, &out))?;
    let text = summary(&config, &cells);
    write_file(&out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_compare(path: &Path, parallel: usize, common: &Common) -> Result<(), CliError> {
    let config = load_config(path, common)?;
    if config.policies.len() < 2 {
        return Err(CliError::Usage(anyhow!("compare needs at least two policies")));
    }
    let (policies, added) = with_baseline(&config.policies);
    let labels = policy_labels(&policies);
    let reported = &labels[usize::from(added)..];
    let cells = failure(run_cells(&config, &policies, parallel))?;
    let text = comparison(&config, &cells, reported);
    if let Some(out) = &config.out {
        write_file(&out.join("compare.txt"), &text)?;
        write_file(&out.join("compare.dat"), &gnuplot(&config, &cells, reported))?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_plan(
    profile: &str,
    critical: &[CriticalShape],
    critical_model: Option<&str>,
    common: &Common,
) -> Result<(), CliError> {
    let gpu = usage(gpu_preset(common.gpu.as_deref().unwrap_or("rtx2060-like")))?;
    let shapes: Vec<_> = critical.iter().map(|c| c.0).collect();
    let text = usage(plan::report(profile, &shapes, critical_model, &gpu))?;
    print!("{text}");
    Ok(())
}

fn cmd_transform(file: &Path, args: &TransformArgs) -> Result<(), CliError> {
    let out = usage(transform::transform(file, args))?;
    print!("{}", out.text);
    if out.verified == Some(false) {
        return Err(CliError::Failure(anyhow!("elastic kernel differs from the original")));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan {
            profile,
            critical,
            critical_model,
            common,
        } => cmd_plan(&profile, &critical, critical_model.as_deref(), &common),
        Command::Run {
            config,
            parallel,
            common,
        } => cmd_run(&config, parallel, &common),
        Command::Compare {
            config,
            parallel,
            common,
        } => cmd_compare(&config, parallel, &common),
        Command::Transform {
            file,
            grid,
            block,
            shard,
            elastic_block,
            mode,
            verify,
            common,
        } => {
            if common.gpu.is_some() || common.out.is_some() {
                return usage(Err(anyhow!("transform takes no --gpu or --out")));
            }
            let args = TransformArgs {
                grid,
                block,
                shard,
                elastic_block,
                mode,
                verify,
                seed: common.seed.unwrap_or(0),
            };
            if matches!(args.shard, Some(0)) || matches!(args.elastic_block, Some(0)) {
                return usage(Err(anyhow!("--shard and --elastic-block must be positive")));
            }
            cmd_transform(&file, &args)
        }
    }
}

/// The error chain on one line. Causes already quoted by the message above
/// them are skipped, as several library errors embed their source.
fn render(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.code();
            let (CliError::Usage(err) | CliError::Failure(err)) = e;
            eprintln!("error: {}", render(&err));
            ExitCode::from(code)
        }
    }
}
