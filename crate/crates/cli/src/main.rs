use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use vortrace::harness::{experiments, OutputDir, RunConfig, Snapshot};
use vortrace::Error;

#[derive(Parser, Debug)]
#[command(name = "vortrace", version, about = "Passive tracers in a stochastic Galerkin vorticity field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config and VORTRACE_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Continue a `simulate` run from a checkpoint.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// One path with its observables.
    Simulate,
    /// Eulerian run with a tracer and the Lagrangian round trip.
    Tracer,
    /// Drift, effective diffusivity and CLT diagnostics over an ensemble.
    Ensemble,
    /// Corrector estimates at snapshots.
    Corrector,
    /// Derivative-flow coupling with the low-mode control.
    Coupling,
    /// Moment monitors and energy balance.
    Diagnose,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Tracer => "tracer",
            Command::Ensemble => "ensemble",
            Command::Corrector => "corrector",
            Command::Coupling => "coupling",
            Command::Diagnose => "diagnose",
        }
    }
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BLOW_UP: u8 = 3;

fn resolve(cli: &Cli) -> vortrace::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.run.output = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    if cli.resume.is_some() && cli.command != Command::Simulate {
        anyhow::bail!("--resume only applies to `simulate`");
    }
    experiments::configure_threads(cfg.run.threads);
    let mut out = OutputDir::create(&cfg.run.output)
        .with_context(|| format!("creating {}", cfg.run.output.display()))?;
    match cli.command {
        Command::Simulate => {
            let snap = cli
                .resume
                .as_ref()
                .map(|p| Snapshot::load(p).with_context(|| format!("reading {}", p.display())))
                .transpose()?;
            print_json(&experiments::simulate(cfg, &mut out, snap.as_ref())?)
        }
        Command::Tracer => print_json(&experiments::tracer(cfg, &mut out)?),
        Command::Ensemble => print_json(&experiments::ensemble(cfg, &mut out)?.summary),
        Command::Corrector => print_json(&experiments::corrector_cmd(cfg, &mut out)?),
        Command::Coupling => {
            let r = experiments::coupling(cfg, &mut out)?;
            print_json(&serde_json::json!({
                "samples": r.samples,
                "n0": r.n0,
                "relative_residual": r.relative_residual,
                "extinction_time": r.extinction_time,
            }))
        }
        Command::Diagnose => print_json(&experiments::diagnose(cfg, &mut out)?),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config { .. }) => EXIT_CONFIG,
        Some(Error::BlowUp { .. }) => EXIT_BLOW_UP,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vortrace: invalid configuration: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vortrace {}: {e:#}", cli.command.name());
            if matches!(e.downcast_ref::<Error>(), Some(Error::BlowUp { .. })) {
                eprintln!("partial outputs in {}", cfg.run.output.display());
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
