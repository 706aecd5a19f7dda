use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crbo::Method;
use crbo_cli::report::cmd_report;
use crbo_cli::runner::cmd_run;
use crbo_cli::verify::run_checks;
use crbo_cli::{CliError, ExperimentConfig, Overrides, Suite};

#[derive(Parser)]
#[command(
    name = "crbo",
    version,
    about = "Confidence-region Bayesian optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark suite and write records and tables.
    Run {
        /// TOML experiment config; defaults apply when omitted.
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated list of confidence parameters to sweep.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        gamma: Option<Vec<f64>>,
        /// gp<dim>d (e.g. gp2d, gp5d) or pendulum.
        #[arg(long)]
        suite: Option<Suite>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Worker threads; 0 uses every logical core.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved config and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Aggregate the run records of a result directory.
    Report {
        dir: PathBuf,
        /// Where to write the tables (default: the result directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Property checks on small instances.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run {
            config,
            method,
            gamma,
            suite,
            budget,
            reps,
            realizations,
            workers,
            seed,
            out,
            dry_run,
        } => {
            let mut cfg = match config {
                Some(p) => match ExperimentConfig::load(&p) {
                    Ok(c) => c,
                    Err(e) => return fail(e),
                },
                None => ExperimentConfig::default(),
            };
            cfg.apply(&Overrides {
                method,
                gammas: gamma,
                suite,
                budget,
                repetitions: reps,
                realizations,
                workers,
                seed,
                output: out,
            });
            if dry_run {
                if let Err(e) = cfg.validate() {
                    return fail(e);
                }
                print!("{}", cfg.to_toml());
                return ExitCode::SUCCESS;
            }
            match cmd_run(&cfg) {
                Ok(outcome) => {
                    print!("{}", outcome.summary);
                    for f in &outcome.failures {
                        eprintln!("failed: {f}");
                    }
                    eprintln!("{} record(s) written to {}", outcome.written, cfg.output.display());
                    ExitCode::from(outcome.exit_code())
                }
                Err(e) => fail(e),
            }
        }
        Command::Report { dir, out } => match cmd_report(&dir, out.as_deref()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Verify { seed } => {
            let checks = run_checks(seed);
            let failed = checks.iter().filter(|c| !c.pass).count();
            for c in &checks {
                println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{} passed, {failed} failed", checks.len() - failed);
            ExitCode::from(u8::from(failed > 0))
        }
    }
}
