//! `pulseforge` command line: robust pulse optimization, fidelity landscapes,
//! baselines and self-checks.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 optimizer stopped
//! without converging (results are still written), 3 self-check failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pulseforge::checks::CheckOptions;

use commands::PulseSource;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "pulseforge", version, about = "Robust quantum gate pulse design")]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true, env = "PULSEFORGE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Naive,
    Sech,
}

#[derive(Subcommand)]
enum Command {
    /// Minimax optimization over the configured grid.
    Optimize {
        config: PathBuf,
        /// Overrides `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Fidelity landscape of a pulse over a (γ, δ) rectangle.
    Landscape {
        config: PathBuf,
        /// `result.json` from `optimize` or a waveform CSV.
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        waveform: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Also write the running maximum of the errors away from δ = 0.
        #[arg(long)]
        running_max: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a reference pulse on the configured grid.
    Baseline {
        #[arg(value_enum)]
        kind: Baseline,
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized gradient, unitarity, bound and boundary checks.
    Check {
        #[arg(long, default_value_t = pulseforge::minimax::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        gradient_problems: usize,
        #[arg(long, default_value_t = 20)]
        boundary_problems: usize,
        #[arg(long, default_value_t = 10_000)]
        bound_samples: usize,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        max_harmonics: usize,
        /// Where a failing case is written.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
}

fn load(path: &PathBuf, out: Option<PathBuf>) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(out) = out {
        config.output = out;
    }
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads: must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Optimize { config, out, quiet } => commands::optimize(&load(&config, out)?, quiet),
        Command::Landscape {
            config,
            waveform,
            baseline,
            running_max,
            out,
        } => {
            let source = match (waveform, baseline) {
                (Some(path), _) => PulseSource::Waveform(path),
                (None, Some(Baseline::Naive)) => PulseSource::Naive,
                (None, Some(Baseline::Sech)) => PulseSource::Sech,
                (None, None) => anyhow::bail!("one of --waveform or --baseline is required"),
            };
            commands::landscape_cmd(&load(&config, out)?, &source, running_max)
        }
        Command::Baseline { kind, config, out } => {
            let (source, name) = match kind {
                Baseline::Naive => (PulseSource::Naive, "naive"),
                Baseline::Sech => (PulseSource::Sech, "sech"),
            };
            commands::baseline_cmd(&load(&config, out)?, &source, name)
        }
        Command::Check {
            seed,
            gradient_problems,
            boundary_problems,
            bound_samples,
            steps,
            max_harmonics,
            out,
            inject_sign_flip,
        } => {
            if steps == 0 || max_harmonics == 0 {
                anyhow::bail!("--steps and --max-harmonics must be >= 1");
            }
            let options = CheckOptions {
                seed,
                gradient_problems,
                boundary_problems,
                bound_samples,
                n_steps: steps,
                max_harmonics,
                inject_sign_flip,
            };
            commands::check_cmd(&options, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
