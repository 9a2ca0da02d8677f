use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use branchlab::acceptance::{run_criterion, ACCEPTANCE_SEED, CRITERIA};
use branchlab::par::resolve_workers;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

mod config;
mod output;
mod run;

use config::ExperimentConfig;
use output::Artifacts;

#[derive(Parser)]
#[command(name = "branchlab", version, about = "Conditioned branching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact tail and point tables of a tree functional.
    Exact(Common),
    /// Draw trees from one of the samplers.
    Sample(Common),
    /// Conditioning on `A > n`: distance to the immortal tree along a grid.
    ConvergeTail(Common),
    /// Conditioning on `A = n`.
    ConvergePoint(Common),
    /// Forest ratio limits.
    Ratio(Common),
    /// Checks for continuous-state branching processes.
    CbVerify(Common),
    /// Brownian excursions, spinal paths and their checks.
    Continuum(Common),
    /// Exploratory subcritical probe; not part of any acceptance gate.
    ProbeConjecture(Common),
    /// Runs the acceptance criteria with the pinned seed.
    Acceptance(AcceptanceArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AcceptanceArgs {
    #[arg(long, default_value_t = ACCEPTANCE_SEED)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma separated criterion numbers; all by default.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u32>,
    /// Directory for `acceptance.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_BUDGET: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    use branchlab::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Invalid(_) | Error::ZeroProbability(_) | Error::Unsupported(_) | Error::Json(_) => EXIT_INVALID,
                Error::Budget(_) | Error::NoConvergence(_) => EXIT_BUDGET,
                Error::Io(_) | Error::Csv(_) => EXIT_FAILED,
            };
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_INVALID;
        }
    }
    EXIT_FAILED
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match cli.command {
        Command::Acceptance(a) => return acceptance(a),
        Command::Exact(c) => ("exact", c),
        Command::Sample(c) => ("sample", c),
        Command::ConvergeTail(c) => ("converge-tail", c),
        Command::ConvergePoint(c) => ("converge-point", c),
        Command::Ratio(c) => ("ratio", c),
        Command::CbVerify(c) => ("cb-verify", c),
        Command::Continuum(c) => ("continuum", c),
        Command::ProbeConjecture(c) => ("probe-conjecture", c),
    };
    match experiment(name, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn experiment(name: &str, args: Common) -> Result<(), (u8, anyhow::Error)> {
    let invalid = |e: anyhow::Error| (EXIT_INVALID, e);
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))
        .map_err(invalid)?;
    if cfg.experiment.command() != name {
        return Err(invalid(anyhow::anyhow!(
            "config describes a `{}` experiment, not `{name}`",
            cfg.experiment.command()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let workers = resolve_workers(args.workers.or(cfg.workers));
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let start = Instant::now();
    let mut art = Artifacts::new(&out).map_err(|e| (EXIT_FAILED, e))?;
    let result = run::run(&cfg.experiment, cfg.seed, workers, &mut art);
    let manifest = |status: &str, error: Option<String>, outputs: &[String], exploratory: bool| {
        json!({
            "tool": "branchlab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": name,
            "status": status,
            "error": error,
            "config": &cfg,
            "seed": cfg.seed,
            "workers": workers,
            "exploratory": exploratory,
            "wall_seconds": start.elapsed().as_secs_f64(),
            "outputs": outputs,
        })
    };
    match result {
        Ok(outcome) => {
            let mut outputs = art.names().to_vec();
            outputs.push("manifest.json".into());
            let m = manifest("ok", None, &outputs, outcome.exploratory);
            art.json("manifest.json", &m).map_err(|e| (EXIT_FAILED, e))?;
            art.commit().map_err(|e| (EXIT_FAILED, e))?;
            println!("{name}: {} (outputs in {})", outcome.summary, out.display());
            Ok(())
        }
        Err(e) => {
            let code = exit_code(&e);
            art.discard(code == EXIT_BUDGET);
            if code == EXIT_BUDGET {
                let m = manifest("budget_exhausted", Some(format!("{e:#}")), &["manifest.json".to_string()], false);
                let text = serde_json::to_string_pretty(&m).expect("serializable manifest");
                if let Err(w) = std::fs::write(out.join("manifest.json"), text + "\n") {
                    eprintln!("could not write diagnostic manifest: {w}");
                }
            }
            Err((code, e))
        }
    }
}

fn acceptance(a: AcceptanceArgs) -> ExitCode {
    let workers = resolve_workers(a.workers);
    let ids: Vec<u32> = if a.only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { a.only };
    let mut outcomes = Vec::new();
    let mut failed = 0;
    for id in ids {
        match run_criterion(id, a.seed, workers) {
            Ok(o) => {
                println!("{}", o.line());
                failed += !o.passed as u32;
                outcomes.push(o);
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL error: {e}");
                failed += 1;
            }
        }
    }
    println!("acceptance: {failed} criteria failed");
    if let Some(dir) = a.out {
        let write = std::fs::create_dir_all(&dir).and_then(|_| {
            let body = json!({ "seed": a.seed, "workers": workers, "criteria": outcomes });
            std::fs::write(dir.join("acceptance.json"), serde_json::to_string_pretty(&body)? + "\n")
        });
        if let Err(e) = write {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILED);
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}
