use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hycontrol::harness::{
    compute_metrics, read_log_csv, simulate, write_log_csv, DetectionTrace, RunOutput,
};
use hycontrol::{Mode, RunMetrics, ScenarioConfig};
use nalgebra::Vector2;

mod plot;

const SEED_ENV: &str = "VIKI_SEED";

#[derive(Debug, Parser)]
#[command(name = "hycontrol", version, about = "Hybrid visual-servo / kinematic placement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write log.csv, metrics.toml and trace.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overridden by the VIKI_SEED environment variable.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Compute metrics for an existing log against a target position.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        /// Target rear-axle position as `x,y` (m).
        #[arg(long, value_parser = parse_target, allow_hyphen_values = true)]
        target: Vector2<f64>,
    },
    /// Render trajectory and velocity plots of a log as SVG.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every mode on shared detection traces for several seeds.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Number of consecutive seeds, starting at the scenario seed.
        #[arg(long)]
        seeds: u64,
    },
}

fn parse_target(s: &str) -> Result<Vector2<f64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x, y] => {
            let x: f64 = x.parse().map_err(|e| format!("bad x: {e}"))?;
            let y: f64 = y.parse().map_err(|e| format!("bad y: {e}"))?;
            Ok(Vector2::new(x, y))
        }
        _ => Err(format!("expected `x,y`, got `{s}`")),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            let seed = v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?;
            Ok(Some(seed))
        }
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_run(out: &Path, run: &RunOutput, metrics: &RunMetrics) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = create(&out.join("log.csv"))?;
    write_log_csv(&run.log, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("trace.csv"))?;
    run.trace.write_csv(&mut w)?;
    w.flush()?;
    fs::write(out.join("metrics.toml"), metrics.to_text())?;
    Ok(())
}

fn cmd_run(scenario: &Path, seed: Option<u64>, out: &Path, mode: Option<Mode>) -> Result<()> {
    let mut cfg = load_scenario(scenario)?;
    if let Some(seed) = resolve_seed(seed)? {
        cfg.seed = seed;
    }
    if let Some(mode) = mode {
        cfg.mode = mode;
    }
    let run = simulate(&cfg, None)?;
    let metrics = if run.log.is_empty() {
        None
    } else {
        Some(run.metrics()?)
    };
    match &metrics {
        Some(m) => {
            write_run(out, &run, m)?;
            print!("{}", m.to_text());
        }
        None => {
            fs::create_dir_all(out)?;
            let mut w = create(&out.join("log.csv"))?;
            write_log_csv(&run.log, &mut w)?;
            w.flush()?;
            eprintln!("empty log (max_ticks = 0): no metrics written");
        }
    }
    println!("target = [{}, {}]", run.target.x, run.target.y);
    Ok(())
}

fn cmd_metrics(log: &Path, target: &Vector2<f64>) -> Result<()> {
    let file = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let records = read_log_csv(BufReader::new(file))?;
    print!("{}", compute_metrics(&records, target)?.to_text());
    Ok(())
}

fn cmd_plot(log: &Path, out: &Path) -> Result<()> {
    let file = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let records = read_log_csv(BufReader::new(file))?;
    if records.is_empty() {
        bail!("{} has no rows to plot", log.display());
    }
    plot::render(&records, out)
}

fn cmd_compare(scenario: &Path, seeds: u64) -> Result<()> {
    let base = load_scenario(scenario)?;
    let first = resolve_seed(None)?.unwrap_or(base.seed);
    println!(
        "{:<12} {:>6} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9} {:>6}",
        "mode", "seed", "err_x", "err_y", "mse_x", "mse_y", "zero_v", "conv", "ticks"
    );
    for seed in first..first + seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        // one detector stream per seed, replayed as the dropout pattern for every mode
        let mut reference = cfg.clone();
        reference.mode = Mode::Viki;
        let shared: DetectionTrace = simulate(&reference, None)?.trace;
        for mode in Mode::ALL {
            cfg.mode = mode;
            let run = simulate(&cfg, Some(&shared))?;
            let m = run.metrics()?;
            println!(
                "{:<12} {:>6} {:>10.4} {:>10.4} {:>10.6} {:>10.6} {:>9} {:>9} {:>6}",
                mode.as_str(),
                seed,
                m.final_err_x,
                m.final_err_y,
                m.mse_x,
                m.mse_y,
                m.zero_velocity_ticks,
                m.converged,
                m.ticks
            );
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            out,
            mode,
        } => cmd_run(&scenario, seed, &out, mode),
        Command::Metrics { log, target } => cmd_metrics(&log, &target),
        Command::Plot { log, out } => cmd_plot(&log, &out),
        Command::Compare { scenario, seeds } => cmd_compare(&scenario, seeds),
    }
}
