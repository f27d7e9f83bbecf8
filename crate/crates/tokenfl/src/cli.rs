use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tokenfl_core::engine::{split_test, SimData, Simulation};
use tokenfl_core::mechanisms::{MechanismParams, RewardShape, UtilityCurve, DEFAULT_HORIZON};
use tokenfl_core::strategy::{nash_check, StrategyProfile, DEFAULT_EPS_GRID};

use crate::config::{self, RunConfig, PRESETS};
use crate::dataset::{load_mnist, mnist_checksums, resolve_dir};
use crate::metrics::{MetricsWriter, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "tokenfl",
    version,
    about = "Token-incentivized LDP federated learning simulator"
)]
pub struct Cli {
    /// Overrides the run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Built-in experiment; see `tokenfl presets`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// No per-round progress on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation from a TOML config, a manifest JSON or `--preset`.
    Run { config: Option<PathBuf> },
    /// Utility curves and collapse rounds, without training.
    Analyze {
        /// Privacy levels; pass `--eps` with no value for none.
        #[arg(long, num_args = 0.., value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "1")]
        stride: Vec<u32>,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: u32,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Brute-force check that no client gains by deviating from the profile.
    Nash {
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 3)]
        clients: u32,
        /// Privacy level every client commits to; defaults to `eps_a`.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: u32,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long)]
    cost_min: Option<f64>,
    #[arg(long)]
    cost_max: Option<f64>,
    #[arg(long)]
    eps_a: Option<f64>,
    #[arg(long)]
    model_price: Option<u32>,
    #[arg(long)]
    freshness: Option<u32>,
    #[arg(long)]
    groups: Option<u32>,
    #[arg(long, value_parser = parse_shape)]
    reward_shape: Option<RewardShape>,
}

fn parse_shape(s: &str) -> Result<RewardShape, String> {
    match s {
        "cubic" => Ok(RewardShape::Cubic),
        "inverted" => Ok(RewardShape::Inverted),
        _ => Err(format!("unknown reward shape `{s}` (cubic | inverted)")),
    }
}

impl ParamArgs {
    fn apply(&self, mut p: MechanismParams) -> anyhow::Result<MechanismParams> {
        if let Some(v) = self.cost_min {
            p.cost_min = v;
        }
        if let Some(v) = self.cost_max {
            p.cost_max = v;
        }
        if let Some(v) = self.eps_a {
            p.eps_a = v;
        }
        if let Some(v) = self.model_price {
            p.model_price = v;
        }
        if let Some(v) = self.freshness {
            p.freshness = v;
        }
        if let Some(v) = self.groups {
            p.groups = v;
        }
        if let Some(v) = self.reward_shape {
            p.reward_shape = v;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Process exit status of a completed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// `nash` found a profitable deviation.
    NotEquilibrium,
}

pub fn execute(cli: Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Run { config } => cmd_run(&cli, config.as_deref()).map(|_| Outcome::Success),
        Command::Analyze {
            eps,
            stride,
            horizon,
            params,
        } => {
            let base = base_params(&cli)?;
            let eps = eps.clone().unwrap_or_else(|| vec![15.0, 17.0, 20.0, 25.0]);
            let out = cli.out_dir.clone().unwrap_or_else(|| "out/analyze".into());
            cmd_analyze(&eps, stride, *horizon, &params.apply(base)?, &out)?;
            Ok(Outcome::Success)
        }
        Command::Nash {
            grid,
            clients,
            eps,
            horizon,
            params,
        } => {
            let p = params.apply(base_params(&cli)?)?;
            let grid = grid.clone().unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
            let profile = StrategyProfile::uniform(eps.unwrap_or(p.eps_a), *clients as usize);
            let report = nash_check(&profile, &grid, *horizon, &p)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.is_equilibrium {
                Outcome::Success
            } else {
                Outcome::NotEquilibrium
            })
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(Outcome::Success)
        }
    }
}

fn named_preset(name: &str) -> anyhow::Result<RunConfig> {
    config::preset(name)
        .with_context(|| format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")))
}

fn base_params(cli: &Cli) -> anyhow::Result<MechanismParams> {
    Ok(match &cli.preset {
        Some(name) => named_preset(name)?.mechanism,
        None => MechanismParams::default(),
    })
}

/// Writes `utility.csv` (t, eps, stride, utility) and `collapse.csv`
/// (eps, stride, collapse_round; empty when utility never turns negative).
pub fn cmd_analyze(
    eps: &[f64],
    strides: &[u32],
    horizon: u32,
    params: &MechanismParams,
    out: &Path,
) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut curves = csv::Writer::from_path(out.join("utility.csv"))?;
    let mut table = csv::Writer::from_path(out.join("collapse.csv"))?;
    curves.write_record(["t", "eps", "stride", "utility"])?;
    table.write_record(["eps", "stride", "collapse_round"])?;
    for &stride in strides {
        if stride == 0 {
            bail!("stride must be at least 1");
        }
        for &e in eps {
            let curve = UtilityCurve::new(e, stride, horizon, params);
            for (i, u) in curve.points.iter().enumerate() {
                curves.serialize((i + 1, e, stride, u))?;
            }
            table.serialize((e, stride, curve.collapse_round()))?;
        }
    }
    curves.flush()?;
    table.flush()?;
    println!("{}", out.join("utility.csv").display());
    println!("{}", out.join("collapse.csv").display());
    Ok(())
}

/// Where a run's config came from.
struct RunSource {
    name: String,
    preset: Option<String>,
    config: RunConfig,
}

fn resolve_run(cli: &Cli, path: Option<&Path>) -> anyhow::Result<RunSource> {
    match (path, &cli.preset) {
        (Some(_), Some(_)) => bail!("give either a config file or --preset, not both"),
        (None, None) => bail!("`run` needs a config file or --preset"),
        (None, Some(name)) => Ok(RunSource {
            name: name.clone(),
            preset: Some(name.clone()),
            config: named_preset(name)?,
        }),
        (Some(p), None) if p.extension().is_some_and(|e| e == "json") => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let m: RunManifest = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a run manifest", p.display()))?;
            Ok(RunSource {
                name: m.name,
                preset: m.preset,
                config: m.config,
            })
        }
        (Some(p), None) => Ok(RunSource {
            name: p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into()),
            preset: None,
            config: config::load(p)?,
        }),
    }
}

/// Runs a simulation and writes `<out>/<name>/metrics.csv` and
/// `manifest.json`. On error the rows produced so far are kept and the
/// manifest records the failure.
pub fn cmd_run(cli: &Cli, path: Option<&Path>) -> anyhow::Result<RunManifest> {
    let RunSource {
        name,
        preset,
        mut config,
    } = resolve_run(cli, path)?;
    if let Some(seed) = cli.seed {
        config.simulation.seed = seed;
    }
    let sim_config = config.sim_config();
    sim_config.validate()?;

    let data_dir = resolve_dir(&config.dataset.dir);
    let mnist = load_mnist(&data_dir).with_context(|| {
        format!(
            "loading MNIST (set dataset.dir or {}; scripts/fetch_mnist.sh downloads it)",
            crate::dataset::DATA_DIR_ENV
        )
    })?;
    let checksums = mnist_checksums(&data_dir)?;
    let (local, global) = split_test(&mnist.test, config.dataset.local_test_fraction);

    let out = cli
        .out_dir
        .clone()
        .unwrap_or_else(|| config.output.dir.clone())
        .join(&name);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("metrics.csv");
    let mut writer = MetricsWriter::new(
        fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?,
    )?;

    let data = SimData {
        train: &mnist.train,
        local_test: &local,
        global_test: &global,
    };
    let mut sim = Simulation::new(sim_config.clone(), data)?;
    let mut failure = None;
    let mut last = None;
    while let Some(step) = sim.step() {
        match step {
            Ok(rec) => {
                writer.write_round(&rec)?;
                if !cli.quiet {
                    eprintln!(
                        "round {:>3}  global {:.4}  participants {}",
                        rec.round,
                        rec.global_accuracy,
                        rec.participants.len()
                    );
                }
                last = Some(rec);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    writer.flush()?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        name,
        preset,
        seed: config.simulation.seed,
        config,
        resolved: sim_config,
        dataset_dir: data_dir,
        dataset_checksums: checksums,
        metrics_csv: csv_path.clone(),
        rounds_completed: last.as_ref().map_or(0, |r| r.round),
        error: failure.as_ref().map(ToString::to_string),
    };
    let manifest_path = out.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    if let Some(e) = failure {
        return Err(anyhow::Error::new(e).context(format!(
            "run aborted after {} rounds; partial metrics in {}",
            manifest.rounds_completed,
            csv_path.display()
        )));
    }
    if !cli.quiet {
        println!("{}", csv_path.display());
        println!("{}", manifest_path.display());
    }
    Ok(manifest)
}
