use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybridqos_cli::experiment::{CheckOutcome, RunOptions};
use hybridqos_cli::selftest::{self, Fault, Settings};
use hybridqos_cli::{init_threads, run_scenario, validate_scenario, CliError, Scenario};

#[derive(Parser)]
#[command(
    name = "hybridqos",
    version,
    about = "QoS-constrained rates and bounds for hybrid RF/VLC links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every figure of a scenario and write CSV files.
    Run {
        scenario: PathBuf,
        /// Output directory (default: the scenario's output.dir, else ./results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed; simulation seeds become N, N+1, ...
        #[arg(long)]
        seed: Option<u64>,
        /// Thin sweeps and shorten simulations.
        #[arg(long)]
        quick: bool,
    },
    /// Check the backlog and delay bounds of a scenario against simulation.
    Validate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quick: bool,
    },
    /// Run the built-in consistency suites.
    Selftest {
        #[arg(long)]
        quick: bool,
        /// Break a solver on purpose to confirm the suites notice.
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            quick,
        } => {
            let s = match Scenario::load(&scenario) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            match run_scenario(s, &RunOptions { out, seed, quick }) {
                Ok((dir, outputs)) => {
                    for o in &outputs {
                        println!("{} ({} rows)", dir.join(&o.file).display(), o.rows);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Validate {
            scenario,
            seed,
            quick,
        } => {
            let s = match Scenario::load(&scenario) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let checks = match validate_scenario(
                s,
                &RunOptions {
                    out: None,
                    seed,
                    quick,
                },
            ) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if checks.is_empty() {
                println!("scenario is valid; it has no delay figures to simulate");
                return ExitCode::SUCCESS;
            }
            let mut failed = 0;
            for c in &checks {
                let tag = match c.outcome {
                    CheckOutcome::Pass => "PASS",
                    CheckOutcome::Fail => {
                        failed += 1;
                        "FAIL"
                    }
                    CheckOutcome::Skip => "SKIP",
                };
                println!("{tag} {}", c.label);
            }
            println!("{} rows, {failed} failed", checks.len());
            if failed > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Selftest {
            quick,
            inject_fault,
        } => {
            let results = selftest::run(&Settings {
                quick,
                fault: inject_fault,
            });
            let mut failed = 0;
            for r in &results {
                if !r.pass {
                    failed += 1;
                }
                println!(
                    "{} {} [{:.2} s] {}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.seconds,
                    r.detail
                );
            }
            println!("{} suites, {failed} failed", results.len());
            if failed > 0 {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
