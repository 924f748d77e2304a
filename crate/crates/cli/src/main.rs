use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use softpod_core::metrics::absolute_percentage_errors;
use softpod_core::report::{self, ReportFormat};
use softpod_core::scenario::{self, Experiment, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(name = "softpod", version, about = "Soft quadruped mass-spring simulator")]
struct Cli {
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for sampling and proxy placement (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides `sim.workers`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured gait and write metrics, trajectory and manifest.
    Run {
        config: PathBuf,
        /// Gait preset, overriding `gait.preset`.
        #[arg(long)]
        gait: Option<String>,
        /// CSV of `label,velocity` measurements to compare against.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Pace, bounding and turning over a list of leg angles.
    SweepAlpha {
        config: PathBuf,
        /// Leg angles in degrees, comma separated.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Hollow legs against solid legs with a smaller tip.
    CompareLegs {
        config: PathBuf,
        #[arg(long)]
        solid_tip_diameter: Option<f64>,
        /// Sideways tip load for the deflection measurement (N).
        #[arg(long)]
        tip_load: Option<f64>,
    },
    /// Time physics steps of the configured robot.
    Bench {
        config: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    softpod_version: &'a str,
    command: &'a str,
    seed: u64,
    workers: usize,
    masses: Option<usize>,
    springs: Option<usize>,
    config: &'a ScenarioConfig,
}

fn load(path: &Path, cli: &Cli) -> Result<(ScenarioConfig, PathBuf)> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.sim.workers = w;
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_manifest(
    out: &Path,
    cfg: &ScenarioConfig,
    command: &str,
    masses: Option<usize>,
    springs: Option<usize>,
) -> Result<()> {
    let m = Manifest {
        softpod_version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        workers: cfg.sim.workers,
        masses,
        springs,
        config: cfg,
    };
    let text = toml::to_string(&m).context("serializing manifest")?;
    fs::write(out.join(&cfg.output.manifest_file), text)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run {
            config,
            gait,
            reference,
        } => {
            let (mut cfg, out) = load(config, &cli)?;
            if let Some(name) = gait {
                cfg.gait.preset = name.parse()?;
            }
            let preset = cfg.gait.preset;
            log::info!("running {} for {} s", preset.name(), cfg.duration);
            let outcome = scenario::run_scenario(&cfg)?;
            let label = preset.name().to_string();
            report::write_metrics_csv(
                create(out.join(&cfg.output.metrics_file))?,
                &[(label.clone(), outcome.metrics)],
            )?;
            report::write_trajectory_csv(create(out.join(&cfg.output.trajectory_file))?, &outcome.trajectory)?;
            write_manifest(&out, &cfg, "run", Some(outcome.masses), Some(outcome.springs))?;
            print!("{}", report::report(&label, &outcome.metrics, ReportFormat::Human)?);
            if let Some(path) = reference {
                let rows = report::read_reference_csv(
                    File::open(path).with_context(|| format!("opening {}", path.display()))?,
                )?;
                let ape = absolute_percentage_errors(&[(label, outcome.metrics.avg_velocity())], &rows);
                if ape.is_empty() {
                    bail!("reference {} has no row for gait `{}`", path.display(), preset.name());
                }
                report::write_ape_csv(create(out.join("ape.csv"))?, &ape)?;
                for (l, e) in &ape {
                    println!("  error vs reference  {} % ({l})", report::fmt9(*e));
                }
            }
        }
        Command::SweepAlpha { config, alphas } => {
            let (cfg, out) = load(config, &cli)?;
            let degrees = match (alphas, &cfg.experiment) {
                (Some(a), _) => a.clone(),
                (None, Experiment::AlphaSweep { alphas_deg }) => alphas_deg.clone(),
                (None, _) => vec![0.0, 10.0, 20.0, 30.0],
            };
            let radians: Vec<f64> = degrees.iter().map(|d| d.to_radians()).collect();
            let rows = scenario::alpha_sweep(&cfg, &radians)?;
            report::write_alpha_sweep_csv(create(out.join("alpha_sweep.csv"))?, &rows)?;
            write_manifest(&out, &cfg, "sweep-alpha", None, None)?;
            report::write_alpha_sweep_csv(std::io::stdout().lock(), &rows)?;
        }
        Command::CompareLegs {
            config,
            solid_tip_diameter,
            tip_load,
        } => {
            let (cfg, out) = load(config, &cli)?;
            let (tip, load) = match &cfg.experiment {
                Experiment::LegComparison {
                    solid_tip_diameter,
                    tip_load,
                } => (*solid_tip_diameter, *tip_load),
                _ => (0.040, 1.0),
            };
            let rows = scenario::leg_comparison(&cfg, solid_tip_diameter.unwrap_or(tip), tip_load.unwrap_or(load))?;
            report::write_leg_comparison_csv(create(out.join("leg_comparison.csv"))?, &rows)?;
            write_manifest(&out, &cfg, "compare-legs", None, None)?;
            report::write_leg_comparison_csv(std::io::stdout().lock(), &rows)?;
        }
        Command::Bench { config, steps } => {
            let (cfg, out) = load(config, &cli)?;
            let n = match (steps, &cfg.experiment) {
                (Some(n), _) => *n,
                (None, Experiment::Throughput { n_steps }) => *n_steps,
                (None, _) => 1000,
            };
            let r = scenario::throughput(&cfg, n)?;
            report::write_throughput_csv(create(out.join("throughput.csv"))?, &r)?;
            write_manifest(&out, &cfg, "bench", Some(r.masses), Some(r.springs))?;
            print!("{}", report::throughput_human(&r));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use softpod_core::gait::GaitPreset;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_alpha_list() {
        let cli = Cli::parse_from(["softpod", "sweep-alpha", "c.toml", "--alphas", "0,10,20"]);
        match cli.command {
            Command::SweepAlpha { alphas, .. } => assert_eq!(alphas, Some(vec![0.0, 10.0, 20.0])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_gait_rejected() {
        assert!("gallop".parse::<GaitPreset>().is_err());
    }
}
