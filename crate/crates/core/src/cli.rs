//! `wayfind-sim` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::{aggregate, run_batch, run_replication_observed, BatchResult, EngineError, FrameDump};
use crate::io::{write_frame_dump, write_outputs};
use crate::scenario::{bundled_station, load_scenario, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "wayfind-sim", version, about = "Agent-based simulation of signage-guided wayfinding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario against the schema and model invariants.
    Validate {
        /// Scenario JSON; the bundled station scenario if omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run all replications and write trajectories, events, metrics and heatmaps.
    Run(RunArgs),
    /// Like `run`, plus the per-sign audit table.
    Audit(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    agents: Option<u32>,
    #[arg(long)]
    dt: Option<f64>,
    /// Write the rendered view of agent 0 at each perception tick.
    #[arg(long)]
    dump_views: bool,
    /// Write the saliency, semantic, frustum and fused maps of agent 0.
    #[arg(long)]
    dump_attention: bool,
}

fn load(path: Option<&Path>) -> Result<Scenario, i32> {
    let Some(path) = path else {
        return Ok(bundled_station());
    };
    load_scenario(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        match e {
            ScenarioError::Io(_) => EXIT_IO,
            _ => EXIT_INVALID,
        }
    })
}

fn run(args: &RunArgs, with_audit: bool) -> Result<(), i32> {
    let mut sc = load(args.scenario.as_deref())?;
    let cfg = &mut sc.config;
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(a) = args.agents {
        cfg.agents_per_replication = a;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Err(m) = cfg.validate() {
        eprintln!("error: invalid configuration: {m}");
        return Err(EXIT_INVALID);
    }
    let batch = if args.dump_views || args.dump_attention {
        run_with_dumps(&sc, args)?
    } else {
        run_batch(&sc.environment, &sc.task, &sc.config).map_err(engine_exit)?
    };
    write_outputs(&batch, sc.config.master_seed, sc.config.agents_per_replication, &args.out, with_audit).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_IO
    })?;
    for leg in &batch.aggregate.legs {
        println!(
            "leg {} ({}): completion {:.3}, median travel time {}",
            leg.leg,
            leg.target_label,
            leg.completion_rate,
            leg.median_travel_time.map_or("-".into(), |t| format!("{t:.1} s"))
        );
    }
    if with_audit {
        println!("sign_id  seen_fraction  mean_attention  decisions");
        for a in &batch.aggregate.audit {
            let mean = a.mean_attention_when_visible.map_or("-".into(), |m| format!("{m:.3}"));
            println!("{:>7}  {:>13.3}  {:>14}  {:>9}", a.sign_id, a.seen_fraction, mean, a.decisions_triggered);
        }
    }
    Ok(())
}

fn engine_exit(e: EngineError) -> i32 {
    eprintln!("error: {e}");
    EXIT_INVALID
}

fn run_with_dumps(sc: &Scenario, args: &RunArgs) -> Result<BatchResult, i32> {
    let mut failure = None;
    let mut runs = Vec::new();
    for r in 0..sc.config.replications {
        let mut obs = |f: &FrameDump<'_>| {
            if failure.is_none() {
                failure = write_frame_dump(&args.out, f, args.dump_views, args.dump_attention).err();
            }
        };
        runs.push(run_replication_observed(&sc.environment, &sc.task, &sc.config, r, &mut obs).map_err(engine_exit)?);
    }
    if let Some(e) = failure {
        eprintln!("error: {e}");
        return Err(EXIT_IO);
    }
    let aggregate = aggregate(&runs, &sc.task, &sc.environment);
    Ok(BatchResult { runs, aggregate })
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Validate { scenario } => load(scenario.as_deref()).map(|sc| {
            println!(
                "ok: {} floors, {} signs, {} legs",
                sc.environment.floors.len(),
                sc.environment.signs.len(),
                sc.task.legs.len()
            );
        }),
        Command::Run(args) => run(args, false),
        Command::Audit(args) => run(args, true),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}
