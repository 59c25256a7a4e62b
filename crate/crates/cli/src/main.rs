use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use peer_auction::{OraclePolicy, ScenarioParams};
use peer_auction_cli::{cmd_demo, cmd_gen, cmd_oracle, cmd_run, config, CliError, Overrides};

#[derive(Parser)]
#[command(name = "peer-auction", version)]
#[command(
    about = "Ascending clock auctions among neighbouring peers, with an exact matching baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configuration of an experiment file and write CSV results
    Run {
        /// Experiment configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config file)
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Master seed for every configuration
        #[arg(long)]
        seed: Option<u64>,
        /// Replications per configuration
        #[arg(long)]
        replications: Option<usize>,
        /// Worker threads; replications are spread across them
        #[arg(long)]
        parallel: Option<usize>,
        /// off, exact or budget=SECS
        #[arg(long)]
        oracle: Option<OraclePolicy>,
    },
    /// Replay the four-peer walkthrough round by round
    Demo,
    /// Solve one instance file exactly
    Oracle {
        /// Instance file (JSON)
        instance: PathBuf,
        /// Give up after this many seconds and report the best allocation found
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Generate one random step instance
    Gen {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        #[arg(long, default_value_t = 0.2)]
        buyer_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Run {
            config: path,
            out_dir,
            seed,
            replications,
            parallel,
            oracle,
        } => {
            let overrides = Overrides {
                out_dir,
                seed,
                replications,
                parallel,
                oracle,
            };
            let cfg = config::load(&path, &overrides)?;
            let report = cmd_run(&cfg)?;
            for (id, s) in &report.summaries {
                let optimal = s
                    .optimal
                    .map(|o| format!("{:.2} ± {:.2}", o.mean, o.half_width))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "{id}: auction {:.2} ± {:.2}, optimal {optimal}, max rounds {}",
                    s.auction.mean, s.auction.half_width, s.max_rounds
                );
            }
            let _ = writeln!(out, "results written to {}", report.output_dir.display());
            Ok(())
        }
        Command::Demo => cmd_demo(&mut out),
        Command::Oracle { instance, budget } => {
            let budget = budget
                .map(|s| {
                    Duration::try_from_secs_f64(s)
                        .map_err(|_| CliError::Usage(format!("--budget {s} is not a duration")))
                })
                .transpose()?;
            cmd_oracle(&instance, budget, &mut out)
        }
        Command::Gen {
            n,
            r,
            density,
            buyer_fraction,
            seed,
            out: path,
        } => {
            let params = ScenarioParams {
                buyer_fraction,
                master_seed: seed,
                ..ScenarioParams::new(n, r, density)
            };
            cmd_gen(&params, seed, &path)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
