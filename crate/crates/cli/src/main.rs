use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hom3_cli::commands::{self, AhArgs, ConvergenceArgs, GrowthArgs, SelftestArgs, SolveArgs};
use hom3_cli::config::{CommonArgs, FileDefaults, RunConfig};

#[derive(Parser)]
#[command(name = "hom3", version, about = "Artificial boundary conditions for random lattice media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the homogenized tensor at scale L.
    Ah(AhArgs),
    /// Run one boundary construction and persist the fields.
    Solve(SolveArgs),
    /// Convergence study over L, seeds and algorithms.
    Convergence(ConvergenceArgs),
    /// Corrector growth statistics.
    Growth(GrowthArgs),
    /// Run the invariant suite.
    Selftest(SelftestArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Ah(a) => &a.common,
            Command::Solve(a) => &a.common,
            Command::Convergence(a) => &a.common,
            Command::Growth(a) => &a.common,
            Command::Selftest(a) => &a.common,
        }
    }
}

fn init_threads(common: &CommonArgs) -> anyhow::Result<()> {
    let file = FileDefaults::load(common.config.as_deref())?;
    let cfg = RunConfig::resolve(common, &file)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = init_threads(cli.command.common()).and_then(|()| match &cli.command {
        Command::Ah(a) => commands::cmd_ah(a, &mut out),
        Command::Solve(a) => commands::cmd_solve(a, &mut out),
        Command::Convergence(a) => commands::cmd_convergence(a, &mut out),
        Command::Growth(a) => commands::cmd_growth(a, &mut out),
        Command::Selftest(a) => commands::cmd_selftest(a, &mut out),
    });
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
