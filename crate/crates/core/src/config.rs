//! The single JSON configuration document driving the CLI and pipeline.
//! Defaults record the motor/bearing plates, the load/speed map, task
//! recipes and every training hyperparameter.

use crate::adapt::HeadFitCfg;
use crate::episodes::{MetaSplit, TaskSpec};
use crate::error::{Error, Result};
use crate::imaging::ImagingConfig;
use crate::metalearn::{InnerMode, MetaConfig};
use crate::net::backbone::BackboneCfg;
use crate::net::optim::OptKind;
use crate::signalgen::{CorpusCfg, LOAD_SPEED_TABLE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub backbone: BackboneCfg,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub pretrain_epochs: usize,
    pub distill_epochs: usize,
    pub meta_epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub outer_kind: OptKind,
    pub rmsprop_rho: f64,
    pub rmsprop_eps: f64,
    pub clip_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub inner_mode: InnerMode,
    pub meta_batch_tasks: usize,
    pub episodes_per_epoch: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            backbone: BackboneCfg::default(),
            batch_size: 32,
            batches_per_epoch: 8,
            pretrain_epochs: 500,
            distill_epochs: 500,
            meta_epochs: 500,
            // Desk-scale ramp; LrSchedule's default 1e-6 -> 5e-5 assumes
            // ~100x more optimizer steps than these runs take.
            lr_start: 2e-4,
            lr_end: 1e-2,
            outer_kind: OptKind::RmsProp,
            rmsprop_rho: 0.9,
            rmsprop_eps: 1e-8,
            clip_norm: 5.62,
            alpha: 1.0,
            beta: 0.02,
            inner_steps: 5,
            inner_lr: 0.01,
            inner_mode: InnerMode::Full,
            meta_batch_tasks: 4,
            episodes_per_epoch: 8,
        }
    }
}

/// The noisy-environment regime: longer training with fixed step sizes
/// (inner 0.005, outer 0.01).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseRegime {
    pub epochs: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
}

impl Default for NoiseRegime {
    fn default() -> Self {
        NoiseRegime {
            epochs: 800,
            inner_lr: 0.005,
            outer_lr: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub n_way: usize,
    pub k_shots: Vec<usize>,
    pub q_per_class: usize,
    pub episodes: usize,
    pub head: String,
    pub head_fit: HeadFitCfg,
    pub metric_temperature: f64,
    pub inner_sgd_steps: usize,
    pub inner_sgd_lr: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_way: 6,
            k_shots: vec![1, 5, 10],
            q_per_class: 15,
            episodes: 600,
            head: "linear".into(),
            head_fit: HeadFitCfg::default(),
            metric_temperature: 10.0,
            inner_sgd_steps: 5,
            inner_sgd_lr: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Informational copy of the fixed load/speed map; validated, not
    /// overridable.
    pub load_speed_rpm: Vec<(f64, f64)>,
    pub corpus: CorpusCfg,
    pub imaging: ImagingConfig,
    /// Samples per task (9 classes, balanced within one).
    pub task_samples: usize,
    /// `None` uses the nine standard task recipes.
    pub task_specs: Option<Vec<TaskSpec>>,
    /// `None` uses train {0,1,2,3,5} / test {4,6,7,8}.
    pub split: Option<MetaSplit>,
    pub train: TrainSection,
    pub noise_regime: NoiseRegime,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            load_speed_rpm: LOAD_SPEED_TABLE.to_vec(),
            corpus: CorpusCfg::default(),
            // Empty chain = reshape + normalize only. On the synthetic
            // corpus every morphology chain tried (open/close, 3x3/5x5)
            // costs 10+ accuracy points; the chain stays configurable.
            imaging: ImagingConfig::identity(),
            task_samples: 3000,
            task_specs: None,
            split: None,
            train: TrainSection::default(),
            noise_regime: NoiseRegime::default(),
            eval: EvalSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.load_speed_rpm != LOAD_SPEED_TABLE.to_vec() {
            return Err(Error::InvalidConfig(
                "load_speed_rpm is the fixed measurement map and cannot be changed".into(),
            ));
        }
        if self.task_samples == 0 {
            return Err(Error::InvalidConfig("task_samples must be >= 1".into()));
        }
        self.corpus.motor.validate()?;
        self.corpus.bearing.validate()?;
        match self.eval.head.as_str() {
            "linear" | "metric" | "inner_sgd" => {}
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown eval head {other:?}; expected linear, metric or inner_sgd"
                )))
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn meta_base(&self, epochs: usize) -> MetaConfig {
        MetaConfig {
            backbone: self.train.backbone,
            seed: self.seed,
            batch_size: self.train.batch_size,
            batches_per_epoch: self.train.batches_per_epoch,
            epochs,
            lr_start: self.train.lr_start,
            lr_end: self.train.lr_end,
            outer_kind: self.train.outer_kind,
            rmsprop_rho: self.train.rmsprop_rho,
            rmsprop_eps: self.train.rmsprop_eps,
            clip_norm: self.train.clip_norm,
            inner_steps: self.train.inner_steps,
            inner_lr: self.train.inner_lr,
            inner_mode: self.train.inner_mode,
            meta_batch_tasks: self.train.meta_batch_tasks,
            episodes_per_epoch: self.train.episodes_per_epoch,
            n_way: self.eval.n_way,
            k_shot: *self.eval.k_shots.first().unwrap_or(&5),
            q_per_class: self.eval.q_per_class,
            alpha: self.train.alpha,
            beta: self.train.beta,
            diverge_checkpoint: None,
        }
    }

    pub fn pretrain_cfg(&self) -> MetaConfig {
        self.meta_base(self.train.pretrain_epochs)
    }

    pub fn distill_cfg(&self) -> MetaConfig {
        self.meta_base(self.train.distill_epochs)
    }

    pub fn metatrain_cfg(&self) -> MetaConfig {
        self.meta_base(self.train.meta_epochs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_json() {
        let cfg = PipelineConfig::default();
        let json = cfg.to_json();
        let back = PipelineConfig::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        // spot-check recorded defaults
        assert!(json.contains("\"clip_norm\": 5.62"));
        assert!(json.contains("\"batch_size\": 32"));
        assert!(json.contains("\"inner_steps\": 5"));
        assert!(json.contains("1464.0"));
        assert!(json.contains("\"beta\": 0.02"));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"seed": 99}"#).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.task_samples, 3000);
        assert_eq!(cfg.train.pretrain_epochs, 500);
    }

    #[test]
    fn tampered_load_table_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.load_speed_rpm[0].1 = 1000.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bad_head_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.eval.head = "nope".into();
        assert!(cfg.validate().is_err());
    }
}
