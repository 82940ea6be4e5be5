//! Tracker configuration, loadable from JSON. Missing fields take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::WeightInit;
use crate::cue::CueConfig;
use crate::error::{Result, TrackError};
use crate::loss::LossConfig;
use crate::pool::SamplerConfig;
use crate::trainer::TrainConfig;

/// Particle proposal around the previous state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub n_particles: usize,
    /// Center std is `min(max_center_std, center_std_ratio * h)`.
    pub max_center_std: f64,
    pub center_std_ratio: f64,
    /// Scale std is `scale_std_ratio * h`, in units of `s = h / 32`.
    pub scale_std_ratio: f64,
    /// Proposals are kept at least this tall, in pixels.
    pub min_height: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            n_particles: 1500,
            max_center_std: 10.0,
            center_std_ratio: 0.5,
            scale_std_ratio: 0.01,
            min_height: 8.0,
        }
    }
}

impl MotionConfig {
    /// `(std_x, std_y, std_scale)` for an object `h` pixels tall.
    pub fn stds(&self, h: f64) -> (f64, f64, f64) {
        let c = self.max_center_std.min(self.center_std_ratio * h);
        (c, c, self.scale_std_ratio * h)
    }
}

/// Training-sample harvest around each detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestConfig {
    /// Proposals per frame before flipping.
    pub proposals: usize,
    /// Proposal stds are the motion stds times this factor.
    pub std_multiplier: f64,
    /// Proposals drawn close to the detection instead, at `near_std_multiplier`.
    pub near_proposals: usize,
    pub near_std_multiplier: f64,
    /// Redraw wide proposals that would be labeled positive, so positives come only
    /// from the detection and the near proposals.
    pub wide_negatives_only: bool,
    /// Store a mirrored copy of every proposal.
    pub flip: bool,
    /// Use the detection itself as the first proposal.
    pub include_detection: bool,
    /// Harvest repetitions on the first frame.
    pub bootstrap_rounds: usize,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            proposals: 100,
            std_multiplier: 2.0,
            near_proposals: 20,
            near_std_multiplier: 0.1,
            wide_negatives_only: true,
            flip: true,
            include_detection: true,
            bootstrap_rounds: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub cue: CueConfig,
    pub loss: LossConfig,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    pub motion: MotionConfig,
    pub harvest: HarvestConfig,
    pub init: WeightInit,
    /// Start the fusion layer as the average of the cue heads.
    pub tie_fusion_init: bool,
    /// Measure per-frame wall time; when false the reported time is zero.
    pub record_timing: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            cue: CueConfig::default(),
            loss: LossConfig::default(),
            sampler: SamplerConfig::default(),
            train: TrainConfig::default(),
            motion: MotionConfig::default(),
            harvest: HarvestConfig::default(),
            init: WeightInit::FanIn { gain: 1.0 },
            tie_fusion_init: true,
            record_timing: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.sampler.validate()?;
        self.train.validate()?;
        if self.motion.n_particles == 0 {
            return Err(TrackError::Config("n_particles must be at least 1".into()));
        }
        if self.harvest.bootstrap_rounds == 0 {
            return Err(TrackError::Config("bootstrap_rounds must be at least 1".into()));
        }
        let fixed = self.harvest.near_proposals + usize::from(self.harvest.include_detection);
        if self.harvest.proposals == 0 || fixed > self.harvest.proposals {
            return Err(TrackError::Config(
                "harvest proposals must be positive and cover the detection and near proposals".into(),
            ));
        }
        if !(self.cue.kappa > 0.0) {
            return Err(TrackError::Config("kappa must be positive".into()));
        }
        if self.cue.lcn_radii.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(TrackError::Config("LCN radii must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
