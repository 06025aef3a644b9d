use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use renewal_mm_cli::commands::{cmd_backtest, cmd_calibrate, cmd_policy, cmd_simulate, cmd_solve};
use renewal_mm_cli::report::cmd_report;
use renewal_mm_cli::{CliResult, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "renewal-mm", version, about = "Market-making laboratory for a Markov-renewal mid-price")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate event tapes.
    Simulate(Common),
    /// Solve the value and control fields on a grid.
    Solve(Common),
    /// Export trading regions from solved fields.
    Policy(Common),
    /// Backtest hold, always-on and the model-based policy.
    Backtest(Common),
    /// Estimate the model primitives from a tape.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Tape CSV to calibrate (default: the first simulated tape).
        #[arg(long)]
        tape: Option<PathBuf>,
    },
    /// Write sections, regions and the checks table.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated or backtested paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Risk aversion.
    #[arg(long)]
    eta: Option<f64>,
    /// Solve and use the exact risk-averse control.
    #[arg(long)]
    exact: bool,
    /// Grid step in time and elapsed time.
    #[arg(long)]
    grid_dt: Option<f64>,
}

impl Common {
    fn load(&self, tape: Option<PathBuf>) -> CliResult<RunConfig> {
        let overrides = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            paths: self.paths,
            eta: self.eta,
            exact: self.exact,
            grid_dt: self.grid_dt,
            tape,
        };
        RunConfig::load(&self.config, &overrides)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let dir = match cli.command {
        Command::Simulate(c) => cmd_simulate(&c.load(None)?)?,
        Command::Solve(c) => cmd_solve(&c.load(None)?)?,
        Command::Policy(c) => cmd_policy(&c.load(None)?)?,
        Command::Backtest(c) => cmd_backtest(&c.load(None)?)?,
        Command::Calibrate { common, tape } => cmd_calibrate(&common.load(tape)?)?,
        Command::Report(c) => cmd_report(&c.load(None)?)?.0,
    };
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
