//! TOML run configuration and the built-in presets.
//!
//! ```toml
//! [dataset]
//! dir = "data/mnist"            # required; TOKENFL_DATA_DIR overrides it
//! local_test_fraction = 0.2
//!
//! [simulation]
//! mechanism = "strategic"       # baseline | strategic | strategic-grouped
//! clients = 10
//! seed = 1
//! horizon = 50
//! eps = [15.0]                  # none, one shared, or one per client
//! stop_accuracy = 0.97
//! early_stop = true             # false runs the full horizon
//! baseline_price = 1.0
//!
//! [mechanism]                   # eps_min, eps_max, eps_a, model_price, freshness,
//!                               # groups, cost_min, cost_max, eps_low, eps_high, reward_shape
//! [training]                    # batches, batch_size, lr, layers, scheme
//! [privacy]                     # enabled, mechanism, center, radius
//! [output]                      # dir
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tokenfl_core::engine::{MechanismKind, PrivacySettings, SimConfig};
use tokenfl_core::learning::{Architecture, PartitionScheme, TrainSpec};
use tokenfl_core::mechanisms::{MechanismParams, DEFAULT_HORIZON};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub mechanism: MechanismParams,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub privacy: PrivacySettings,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub dir: PathBuf,
    #[serde(default = "default_local_fraction")]
    pub local_test_fraction: f64,
}

fn default_local_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub mechanism: MechanismKind,
    pub clients: u32,
    pub seed: u64,
    pub horizon: u32,
    pub eps: Vec<f64>,
    pub stop_accuracy: f64,
    pub early_stop: bool,
    pub baseline_price: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            mechanism: MechanismKind::Strategic,
            clients: 3,
            seed: 1,
            horizon: DEFAULT_HORIZON,
            eps: Vec::new(),
            stop_accuracy: 0.97,
            early_stop: true,
            baseline_price: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub layers: Vec<usize>,
    pub scheme: PartitionScheme,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainSpec::default();
        Self {
            batches: t.batches,
            batch_size: t.batch_size,
            lr: t.lr,
            layers: Architecture::mnist_mlp().layers,
            scheme: PartitionScheme::Intermediary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// A config file that failed to parse, with the dotted path of the
/// offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            path: e.path().to_string(),
            message: e.inner().message().trim().to_owned(),
        })?;
        cfg.sim_config().validate().map_err(|e| ConfigError {
            path: String::new(),
            message: e.to_string(),
        })?;
        if !(0.0..1.0).contains(&cfg.dataset.local_test_fraction) {
            return Err(ConfigError {
                path: "dataset.local_test_fraction".into(),
                message: "must lie in [0, 1)".into(),
            });
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            mechanism: s.mechanism,
            clients: s.clients,
            params: self.mechanism.clone(),
            train: TrainSpec {
                batches: self.training.batches,
                batch_size: self.training.batch_size,
                lr: self.training.lr,
            },
            layers: self.training.layers.clone(),
            scheme: self.training.scheme,
            privacy: self.privacy,
            seed: s.seed,
            horizon: s.horizon,
            eps: s.eps.clone(),
            stop_accuracy: s.early_stop.then_some(s.stop_accuracy),
            baseline_price: s.baseline_price,
        }
    }
}

/// Names accepted by `--preset`.
pub const PRESETS: &[&str] = &[
    "baseline-3c",
    "baseline-10c",
    "strategic-3c-eps25",
    "strategic-3c-eps17",
    "strategic-3c-eps15",
    "strategic-10c-eps25",
    "strategic-10c-eps17",
    "strategic-10c-eps15",
    "strategic-10c-eps20",
    "grouped-10c-eps20",
    "grouped-10c-eps25",
];

/// Built-in experiment configurations. `mnist-` prefixed names are accepted
/// as aliases of the strategic presets.
pub fn preset(name: &str) -> Option<RunConfig> {
    let canonical = match name.strip_prefix("mnist-") {
        Some(rest) => format!("strategic-{rest}"),
        None => name.to_owned(),
    };
    if !PRESETS.contains(&canonical.as_str()) {
        return None;
    }
    let mut cfg = RunConfig {
        dataset: DatasetConfig {
            dir: "data/mnist".into(),
            local_test_fraction: default_local_fraction(),
        },
        simulation: SimulationConfig {
            early_stop: false,
            ..SimulationConfig::default()
        },
        mechanism: MechanismParams::default(),
        training: TrainingConfig::default(),
        privacy: PrivacySettings::default(),
        output: OutputConfig::default(),
    };
    let sim = &mut cfg.simulation;
    let mut parts = canonical.split('-');
    let kind = parts.next()?;
    sim.clients = parts.next()?.trim_end_matches('c').parse().ok()?;
    match kind {
        "baseline" => {
            sim.mechanism = MechanismKind::Baseline;
            sim.eps = if sim.clients == 3 {
                vec![25.0, 15.0, 1.0]
            } else {
                vec![25.0, 23.0, 20.0, 17.0, 15.0, 13.0, 10.0, 7.0, 5.0, 1.0]
            };
        }
        "strategic" => {
            sim.mechanism = MechanismKind::Strategic;
            cfg.training.scheme = PartitionScheme::Disjoint;
        }
        "grouped" => {
            sim.mechanism = MechanismKind::StrategicGrouped;
            cfg.mechanism.groups = 2;
        }
        _ => return None,
    }
    if let Some(eps) = parts.next() {
        sim.eps = vec![eps.trim_start_matches("eps").parse().ok()?];
    }
    Some(cfg)
}

pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    RunConfig::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.sim_config().validate().unwrap();
            let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert_eq!(preset("mnist-10c-eps15"), preset("strategic-10c-eps15"));
        assert!(preset("strategic-4c-eps15").is_none());
    }

    #[test]
    fn preset_contents() {
        let b = preset("baseline-3c").unwrap().sim_config();
        assert_eq!(b.mechanism, MechanismKind::Baseline);
        assert_eq!(b.eps, vec![25.0, 15.0, 1.0]);
        assert_eq!(b.scheme, PartitionScheme::Intermediary);
        let s = preset("strategic-10c-eps25").unwrap().sim_config();
        assert_eq!(
            (s.clients, s.scheme, s.eps.clone()),
            (10, PartitionScheme::Disjoint, vec![25.0])
        );
        assert_eq!(s.stop_accuracy, None);
        let g = preset("grouped-10c-eps20").unwrap().sim_config();
        assert_eq!(
            (g.mechanism, g.params.groups),
            (MechanismKind::StrategicGrouped, 2)
        );
    }

    #[test]
    fn minimal_file() {
        let cfg = RunConfig::from_toml("[dataset]\ndir = \"x\"\n").unwrap();
        assert_eq!(cfg.simulation, SimulationConfig::default());
        assert_eq!(cfg.sim_config().stop_accuracy, Some(0.97));
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_toml("[simulation]\nclients = 3\n").unwrap_err();
        assert!(e.to_string().contains("dataset"), "{e}");
        let e = RunConfig::from_toml("[dataset]\n").unwrap_err();
        assert!(e.to_string().contains("dir"), "{e}");
        let e = RunConfig::from_toml("[dataset]\ndir = \"x\"\n[training]\nlr = \"fast\"\n")
            .unwrap_err();
        assert_eq!(e.path, "training.lr");
        let e =
            RunConfig::from_toml("[dataset]\ndir = \"x\"\n[mechanism]\nepsa = 3\n").unwrap_err();
        assert!(e.path.starts_with("mechanism"), "{e}");
        assert!(e.message.contains("epsa"));
        let e = RunConfig::from_toml(
            "[dataset]\ndir = \"x\"\n[simulation]\nmechanism = \"strategic-grouped\"\nclients = 3\n",
        )
        .unwrap_err();
        assert!(e.message.contains("groups"), "{e}");
    }
}
