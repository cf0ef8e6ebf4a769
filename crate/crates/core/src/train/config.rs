use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Optimizer {
    /// Adam; `weight_decay` is added to the gradient (L2 penalty).
    Adam,
    /// Adam with decoupled weight decay.
    AdamW,
}

impl TryFrom<String> for Optimizer {
    type Error = String;

    fn try_from(name: String) -> std::result::Result<Self, String> {
        match name.as_str() {
            "adam" => Ok(Self::Adam),
            "adamw" => Ok(Self::AdamW),
            "radam" => Err("optimizer `radam` is not supported; use `adam` or `adamw`".into()),
            other => Err(format!("unknown optimizer `{other}`; expected `adam` or `adamw`")),
        }
    }
}

impl From<Optimizer> for String {
    fn from(o: Optimizer) -> String {
        match o {
            Optimizer::Adam => "adam".into(),
            Optimizer::AdamW => "adamw".into(),
        }
    }
}

/// Learning-rate schedule, indexed by epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    #[default]
    None,
    ExponentialDecay {
        gamma: f64,
    },
    StepDecay {
        period: usize,
        factor: f64,
    },
    CosineAnnealing {
        period: usize,
        #[serde(default)]
        restarts: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule: Schedule,
    pub epochs: usize,
    /// Defaults to 32 for per-column partitions and 64 otherwise.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// `null` disables early stopping.
    #[serde(default = "default_patience")]
    pub early_stop_patience: Option<usize>,
}

fn default_optimizer() -> Optimizer {
    Optimizer::Adam
}

fn default_lr() -> f64 {
    0.001
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}

fn default_eps() -> f64 {
    1e-8
}

fn default_patience() -> Option<usize> {
    Some(20)
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: default_optimizer(),
            lr: default_lr(),
            betas: default_betas(),
            eps: default_eps(),
            weight_decay: 0.0,
            schedule: Schedule::None,
            epochs: 100,
            batch_size: None,
            seed: 0,
            early_stop_patience: default_patience(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::config("train.betas", "each beta must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("train.eps", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight-decay", "must be non-negative"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("train.batch-size", "must be at least 1"));
        }
        match self.schedule {
            Schedule::None => {}
            Schedule::ExponentialDecay { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                return Err(Error::config("train.schedule.gamma", "must lie in (0, 1]"));
            }
            Schedule::StepDecay { period, factor } if period == 0 || !(factor > 0.0 && factor <= 1.0) => {
                return Err(Error::config(
                    "train.schedule",
                    "step decay needs period >= 1 and factor in (0, 1]",
                ));
            }
            Schedule::CosineAnnealing { period: 0, .. } => {
                return Err(Error::config("train.schedule.period", "must be at least 1"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn batch_size_for(&self, tabular: bool) -> usize {
        self.batch_size.unwrap_or(if tabular { 32 } else { 64 })
    }
}

/// Learning rate for epoch `t`. Without restarts the cosine schedule stays
/// at zero once `t` reaches its period.
pub fn lr_at(config: &TrainConfig, t: usize) -> f64 {
    let lr = config.lr;
    match config.schedule {
        Schedule::None => lr,
        Schedule::ExponentialDecay { gamma } => lr * gamma.powi(t.min(i32::MAX as usize) as i32),
        Schedule::StepDecay { period, factor } => lr * factor.powi((t / period).min(i32::MAX as usize) as i32),
        Schedule::CosineAnnealing { period, restarts } => {
            let phase = if restarts { t % period } else { t.min(period) };
            lr * (1.0 + (std::f64::consts::PI * phase as f64 / period as f64).cos()) / 2.0
        }
    }
}
