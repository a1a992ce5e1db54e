use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgeworth_cli::{
    analyze::analyze, load_config, run_experiment, run_sweep, CliResult, Overrides,
};

/// Kinetic simulations of two-good Edgeworth-box exchange.
///
/// Exit status: 0 success, 2 configuration error, 3 simulation error,
/// 4 I/O error.
#[derive(Parser)]
#[command(name = "edgeworth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Simulate(RunArgs),
    /// Report on snapshot CSV files.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Snapshot files (`t,agent_id,x,y` or `tau,particle_id,v,w`).
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
    },
    /// Run a quasi-invariant sweep, or the experiment once per value of
    /// `sweep.parameter`.
    Sweep(RunArgs),
    /// Check a configuration and list every problem found.
    ValidateConfig { config: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML).
    config: PathBuf,
    /// Master seed.
    #[arg(long, env = "EDGEWORTH_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "EDGEWORTH_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for particle runs.
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            workers: self.workers,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.overrides().apply(load_config(&args.config)?);
            let done = run_experiment(&cfg)?;
            print!("{}", done.report);
            eprintln!("wrote {}", done.dir.display());
        }
        Command::Sweep(args) => {
            let cfg = args.overrides().apply(load_config(&args.config)?);
            let done = run_sweep(&cfg)?;
            print!("{}", done.report);
            eprintln!("wrote {}", done.dir.display());
        }
        Command::Analyze { run, snapshots } => {
            let cfg = run.overrides().apply(load_config(&run.config)?);
            print!("{}", analyze(&cfg, &snapshots)?);
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(&config)?;
            println!("{}: valid {} experiment", config.display(), cfg.kind);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("error: {e}");
            if !e.to_string().ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
