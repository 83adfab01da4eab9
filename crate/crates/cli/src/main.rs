use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wppl_cli::config::{parse_model, CliError, Overrides};
use wppl_cli::generate::{generate, MapKind};
use wppl_cli::run::{run, sweep, write_sweep, SweepParam};
use wppl_core::domain::parse_map;
use wppl_core::simulator::SimError;
use wppl_core::{ActionModel, Trajectory};

#[derive(Parser)]
#[command(name = "wppl", version, about = "Lifelong MAPF experiments with windowed PIBT + LNS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write its outputs.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Run the configuration once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated, e.g. `1,5,10` or `0,1000,250ms`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Serve the weight-tuning endpoints under /v1.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Re-check a trajectory file against a map.
    Validate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_parser = parse_model, default_value = "rotation")]
        model: ActionModel,
    },
    /// Write an example map, agents, weights and config.
    Generate {
        #[arg(long, value_enum)]
        kind: MapKind,
        #[arg(long)]
        agents: usize,
        #[arg(long, value_parser = parse_model, default_value = "rotation")]
        model: ActionModel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let conflict = matches!(
                e.downcast_ref::<CliError>(),
                Some(CliError::Sim(SimError::InvalidJointAction { .. }))
            );
            ExitCode::from(if conflict { 3 } else { 1 })
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Run { config, flags } => {
            let cfg = flags.resolve(config.as_deref())?;
            let report = run(&cfg)?;
            println!(
                "throughput {:.4} goals {} steps {} -> {}",
                report.summary.throughput,
                report.summary.goals_reached,
                report.summary.steps,
                report.dir.display()
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            flags,
        } => {
            let cfg = flags.resolve(config.as_deref())?;
            let rows = sweep(&cfg, param, &values)?;
            let path = write_sweep(&cfg, param, &rows)?;
            print!("{}", wppl_cli::run::sweep_csv(param, &rows));
            eprintln!("wrote {}", path.display());
        }
        Command::Serve { config, addr, flags } => {
            let cfg = flags.resolve(config.as_deref())?;
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(wppl_cli::serve::serve(cfg, addr))?;
        }
        Command::Validate { map, trajectory, model } => {
            let read = |p: &PathBuf| std::fs::read_to_string(p).with_context(|| p.display().to_string());
            let grid = parse_map(&read(&map)?).with_context(|| map.display().to_string())?;
            let t = Trajectory::parse(&read(&trajectory)?, &grid, model)
                .with_context(|| trajectory.display().to_string())?;
            t.validate(&grid).with_context(|| trajectory.display().to_string())?;
            println!(
                "ok: {} steps, {} agents",
                t.states.len().saturating_sub(1),
                t.states.first().map_or(0, Vec::len)
            );
        }
        Command::Generate {
            kind,
            agents,
            model,
            seed,
            out,
        } => {
            let path = generate(kind, agents, model, seed, &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
