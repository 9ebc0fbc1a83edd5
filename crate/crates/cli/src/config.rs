use std::path::Path;

use edenet::gpr_sim::SimConfig;
use edenet::net::NetConfig;
use edenet::retrieval::DEFAULT_DIST_THRESH;
use edenet::training::TrainConfig;
use edenet::{Error, Result};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// Survey geometry of the synthetic map/query pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_locations: usize,
    pub map_epsilon: f64,
    pub query_epsilon: f64,
    /// Gaussian interference on the queries, relative to their RMS.
    pub query_noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_locations: 50,
            map_epsilon: 4.0,
            query_epsilon: 5.0,
            query_noise: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Cut-offs reported by `eval`, ascending.
    pub k: Vec<usize>,
    /// Ground-truth radius of a correct match, metres.
    pub dist_thresh: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: vec![1, 5, 10],
            dist_thresh: DEFAULT_DIST_THRESH,
        }
    }
}

/// Everything one experiment needs, as a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scene seed: which reflectors are buried where.
    pub seed: u64,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub net: NetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    /// The reference synthetic experiment: two scales (11, 5) with 16
    /// directions, 128-d descriptors over 12-frame windows, 240 Adam steps.
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            seed: 0,
            net: NetConfig::with_scales(&[11, 5], 16, 128, sim.depth_bins, sim.channels, 12),
            sim,
            dataset: DatasetConfig::default(),
            train: TrainConfig {
                learning_rate: 3e-3,
                epochs: 80,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Gradient-check sized variant of the default experiment.
    pub fn tiny() -> Self {
        let sim = SimConfig {
            depth_bins: 16,
            channels: 1,
            time_bin: 1.0,
            ..SimConfig::default()
        };
        Self {
            sim,
            net: NetConfig::tiny(),
            train: TrainConfig {
                learning_rate: 3e-3,
                epochs: 5,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        let d = &self.dataset;
        if d.n_locations < 2 {
            return Err(Error::Config(format!(
                "dataset.n_locations must be ≥ 2, got {}",
                d.n_locations
            )));
        }
        for (name, e) in [
            ("map_epsilon", d.map_epsilon),
            ("query_epsilon", d.query_epsilon),
        ] {
            if !(e >= 1.0 && e.is_finite()) {
                return Err(Error::Config(format!(
                    "dataset.{name} must be ≥ 1, got {e}"
                )));
            }
        }
        if !(d.query_noise >= 0.0 && d.query_noise.is_finite()) {
            return Err(Error::Config(
                "dataset.query_noise must be non-negative".into(),
            ));
        }
        if self.net.depth_bins != self.sim.depth_bins || self.net.channels != self.sim.channels {
            return Err(Error::Config(format!(
                "net expects D×C = {}×{} but sim renders {}×{}",
                self.net.depth_bins, self.net.channels, self.sim.depth_bins, self.sim.channels
            )));
        }
        if self.net.window > d.n_locations {
            return Err(Error::Config(format!(
                "window of {} frames exceeds the {}-frame survey",
                self.net.window, d.n_locations
            )));
        }
        let e = &self.eval;
        if e.k.is_empty() || e.k.contains(&0) || e.k.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "eval.k must be ascending positive cut-offs, got {:?}",
                e.k
            )));
        }
        if !(e.dist_thresh > 0.0 && e.dist_thresh.is_finite()) {
            return Err(Error::Config("eval.dist_thresh must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
