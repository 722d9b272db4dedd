use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rankpair::harness::{self, ScenarioConfig, SweepParam};
use rankpair::Error;

#[derive(Parser)]
#[command(name = "rankpair", version, about = "Pairwise ranking losses for dense detection: toy experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one synthetic instance; writes trajectory.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train once per hyper-parameter value; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of delta, lambda, T, q.
        #[arg(long, default_value = "delta")]
        param: String,
        /// Comma-separated values; defaults depend on the parameter.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Run greedy NMS on a JSON input, or on a built-in fixture.
    NmsDemo {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate detections against ground truths from a JSON file.
    Eval {
        #[arg(long)]
        input: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Error> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = harness::load_config(&config)?;
            let summary = harness::run_experiment(&cfg, &out)?;
            eprintln!(
                "wrote {} and {} (final loss {})",
                out.join("trajectory.csv").display(),
                out.join("summary.json").display(),
                summary.final_loss
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = harness::load_config(&config)?;
            let param = SweepParam::parse(&param)?;
            let values = values.unwrap_or_else(|| param.default_values());
            let rows = harness::run_sweep(&cfg, param, &values, &out)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.join("sweep.csv").display());
        }
        Command::Gradcheck { config, trials } => {
            let cfg = match config {
                Some(p) => harness::load_config(&p)?,
                None => {
                    let mut c = ScenarioConfig::default();
                    c.apply_env_seed()?;
                    c
                }
            };
            let loss = harness::grad_check(&cfg, trials)?;
            let giou = harness::grad_check_giou(cfg.seed, trials)?;
            print_json(&[loss, giou])?;
        }
        Command::NmsDemo { input } => print_json(&harness::nms_demo(input.as_deref())?)?,
        Command::Eval { input } => print_json(&harness::eval_file(&input)?)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Divergence { .. } => 3,
                _ => 1,
            })
        }
    }
}
