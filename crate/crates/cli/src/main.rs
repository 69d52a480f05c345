use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use goldmine::config::ExperimentConfig;
use goldmine::data::{read_json, write_bytes, write_json};
use goldmine::methods::Method;
use goldmine::parallel::{thread_cap_from_env, with_thread_cap, Execution};
use goldmine::pipeline::{cmd_evaluate, cmd_figure2, cmd_oracle, cmd_simulate, cmd_train, RegionRequest};
use goldmine::Result;

#[derive(Parser)]
#[command(name = "goldmine", version, about = "Likelihood-free inference with augmented simulator data")]
struct Cli {
    /// Experiment configuration (JSON); defaults to the preset of --simulator.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Preset used when no --config is given.
    #[arg(long, global = true, value_enum, default_value_t = SimulatorArg::Galton)]
    simulator: SimulatorArg,

    /// Run every batch on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimulatorArg {
    Galton,
    Lotka,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as JSON.
    Config {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate an augmented dataset with the θ sampling of --method.
    Simulate {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a surrogate on a dataset.
    Train {
        #[arg(long)]
        method: Method,
        /// Score weight; the method's default when absent.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score checkpoints against the exact oracle or an ensemble reference.
    Evaluate {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Reference checkpoints (one model, or three or more for a median ensemble).
        #[arg(long = "reference")]
        references: Vec<PathBuf>,
        /// Likelihood-ratio scan request (JSON) for a confidence-region table.
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact densities and log-ratio per Galton bin.
    Oracle {
        #[arg(long, allow_hyphen_values = true)]
        theta0: f64,
        #[arg(long, allow_hyphen_values = true)]
        theta1: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sample-size ladder and write the MSE table.
    Figure2 {
        /// Overrides the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Restricts the ladder to one method.
        #[arg(long)]
        method: Option<Method>,
        /// Overrides the score weight.
        #[arg(long)]
        alpha: Option<f64>,
        /// Restricts the ladder to one training-set size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    match &cli.config {
        Some(path) => ExperimentConfig::load(path),
        None => ExperimentConfig::preset(match cli.simulator {
            SimulatorArg::Galton => "galton",
            SimulatorArg::Lotka => "lotka",
        }),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_bytes(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Config { out } => {
            let json = serde_json::to_string_pretty(&cfg)? + "\n";
            emit(out.as_deref(), &json)
        }
        Command::Simulate { method, n, seed, out } => {
            let d = cmd_simulate(&cfg, method, n, seed, &out, exec)?;
            eprintln!(
                "wrote {} records ({} invalid) to {}",
                d.header.n_records,
                d.header.n_invalid,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            method,
            alpha,
            data,
            seed,
            out,
        } => {
            if alpha.is_some() {
                cfg.alpha = alpha;
            }
            let kind = cfg.method_kind(method)?;
            let ck = cmd_train(&cfg, kind, &data, seed, &out, exec)?;
            eprintln!("trained {kind}, weights {}", &ck.weights_digest()[..16]);
            Ok(())
        }
        Command::Evaluate {
            checkpoints,
            references,
            region,
            out,
        } => {
            let region: Option<RegionRequest> = region.as_deref().map(read_json).transpose()?;
            let report = cmd_evaluate(&cfg, &checkpoints, &references, region.as_ref(), &out, exec)?;
            print!("{}", report.report.to_csv());
            Ok(())
        }
        Command::Oracle { theta0, theta1, out } => emit(out.as_deref(), &cmd_oracle(&cfg, theta0, theta1)?),
        Command::Figure2 {
            seed,
            method,
            alpha,
            n,
            out,
        } => {
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(m) = method {
                cfg.methods = vec![m];
            }
            if alpha.is_some() {
                cfg.alpha = alpha;
            }
            if let Some(n) = n {
                cfg.sizes = vec![n];
            }
            let report = cmd_figure2(&cfg, &out, exec)?;
            write_json(&out.join("config.json"), &cfg)?;
            for s in &report.summaries {
                println!("{:<8} n={:<7} median={:.6} std={:.6}", s.method, s.n_train, s.median, s.std);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_thread_cap(thread_cap_from_env(), || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}

