use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use liekoop::harness::{
    catalog_ids, catalog_system, catalog_systems, load_config, run, run_suite, Command, RunConfig,
    RunOutcome, SystemDefinition,
};

/// Verify group-valued Koopman eigenfunctions on catalog or user systems.
#[derive(Parser, Debug)]
#[command(name = "liekoop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check that dz(V) is constant over the samples.
    Verify(RunArgs),
    /// Test rescalability and recover the speed profile alpha.
    Rescale(RunArgs),
    /// Compare dz against both lift differentials near an anchor.
    LiftCheck(RunArgs),
    /// Semiconjugacy residual along one trajectory.
    Residual(RunArgs),
    /// Run every check against the expectations of each system.
    Suite(RunArgs),
    /// List the built-in systems.
    List,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct RunArgs {
    /// Built-in system id (see `liekoop list`).
    #[arg(long, conflicts_with = "config")]
    system: Option<String>,
    /// Path to a system configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long)]
    rk4_step: Option<f64>,
    /// Seed of the random samples.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-sample CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl RunArgs {
    fn apply(
        &self,
        (mut def, mut config): (SystemDefinition, RunConfig),
    ) -> (SystemDefinition, RunConfig) {
        if let Some(t) = self.tol {
            config.tol = t;
        }
        if let Some(h) = self.fd_step {
            config.fd_step = h;
        }
        if let Some(h) = self.rk4_step {
            config.rk4_step = h;
        }
        if let Some(s) = self.seed {
            def.sampling.seed = s;
        }
        (def, config)
    }

    fn load(&self, required: bool) -> Result<Vec<(SystemDefinition, RunConfig)>> {
        let loaded = match (&self.system, &self.config) {
            (Some(id), _) => vec![catalog_system(id)?],
            (None, Some(path)) => {
                vec![load_config(path).with_context(|| format!("loading {}", path.display()))?]
            }
            (None, None) if required => bail!("one of --system or --config is required"),
            (None, None) => catalog_systems()?,
        };
        Ok(loaded.into_iter().map(|pair| self.apply(pair)).collect())
    }
}

fn write_outputs(outcome: &RunOutcome, args: &RunArgs, config: Option<&RunConfig>) -> Result<()> {
    let json = outcome.report.to_json();
    let out = args
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.out.clone()).map(PathBuf::from));
    match out {
        Some(path) => std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    let csv = args
        .csv
        .clone()
        .or_else(|| config.and_then(|c| c.csv.clone()).map(PathBuf::from));
    if let Some(path) = csv {
        std::fs::write(&path, outcome.csv.render()?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn execute(command: Command, args: &RunArgs) -> Result<i32> {
    let outcome = if command == Command::Suite {
        let systems = args.load(false)?;
        for (_, config) in &systems {
            config.validate()?;
        }
        let outcome = run_suite(&systems)?;
        write_outputs(&outcome, args, None)?;
        outcome
    } else {
        let (def, config) = args.load(true)?.remove(0);
        let outcome = run(command, &def, &config)
            .with_context(|| format!("{} on {}", command.name(), def.id))?;
        write_outputs(&outcome, args, Some(&config))?;
        outcome
    };
    Ok(outcome.exit_code())
}

fn dispatch(cli: Cli) -> Result<i32> {
    let (command, args) = match cli.command {
        Cmd::List => {
            for id in catalog_ids() {
                let (def, _) = catalog_system(id)?;
                println!("{id:<16} {:<10} {}", def.group, def.description);
            }
            return Ok(0);
        }
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Rescale(a) => (Command::Rescale, a),
        Cmd::LiftCheck(a) => (Command::LiftCheck, a),
        Cmd::Residual(a) => (Command::Residual, a),
        Cmd::Suite(a) => (Command::Suite, a),
    };
    execute(command, &args)
}

// Exit codes: 0 pass, 2 completed with a failing verdict, 1 anything else
// (including usage errors, which clap would otherwise report as 2).
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
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
