//! Training phases, baselines and evaluation.
//!
//! Pre-training fits the sampler alone with difficulty-aware REINFORCE on
//! similarity matrices built from the ground-truth concepts. Joint training
//! rolls out groups from a snapshot of both models, updates the query policy
//! with the clipped group-relative surrogate and the sampler with REINFORCE on
//! the accuracy reward.

mod dataset;
mod eval;
mod joint;
mod metrics;
mod pretrain;

use serde::{Deserialize, Serialize};

pub use dataset::{build_datasets, hard_subset, Datasets};
pub use eval::{evaluate, run_baseline, select_frames, EvalConfig, EvalModels, EvalReport, Method, MethodReport, QuerySource};
pub use joint::{joint_train, JointOutcome};
pub use metrics::{first_reach, quartile_means, read_metrics_csv, smooth, write_metrics_csv, StepMetrics, METRICS_HEADER};
pub use pretrain::{pretrain_sampler, PretrainOutcome};

use crate::error::{Error, Result};
use crate::rl_core::DifficultyAdvantageConfig;
use crate::usampler::DrawOptions;
use crate::videoqa_env::{OracleConfig, MAX_QUERIES};

/// Where pre-training similarity matrices get their queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PretrainQueries {
    /// Exactly the episode's ground-truth concepts.
    Relevant,
    /// Ground-truth concepts padded with unrelated ones up to the drawn query count.
    #[default]
    RelevantPadded,
    /// Queries sampled from the untrained query policy.
    BasePolicy,
}

/// Which signal drives the sampler's REINFORCE update during joint training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerAdvantage {
    /// The accuracy reward itself, 0.8 or 0.
    #[default]
    RawAccuracy,
    /// Accuracy rewards standardised within the rollout group.
    GroupNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub k_frames: usize,
    pub batch_size: usize,
    pub group_size: usize,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub lr_policy: f64,
    pub lr_sampler: f64,
    /// Sampler step size during joint training; `None` reuses `lr_sampler`.
    pub lr_sampler_joint: Option<f64>,
    pub clip_eps: f64,
    pub tau_info: f64,
    pub temperature: f64,
    pub top_p: Option<f64>,
    /// Standard deviation of the similarity noise.
    pub sim_noise: f64,
    pub oracle: OracleConfig,
    /// Inclusive range the per-question query count is drawn from.
    pub n_q_min: usize,
    pub n_q_max: usize,
    /// Frame draws per pre-training episode, sharing one forward pass.
    pub pretrain_draws: usize,
    pub pretrain_queries: PretrainQueries,
    pub sampler_advantage: SamplerAdvantage,
    pub difficulty: DifficultyAdvantageConfig,
    /// Diagonal gain of the untrained query policy.
    pub policy_gain: f64,
    pub advantage_eps: f64,
    pub pass_rate_trials: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            k_frames: 8,
            batch_size: 32,
            group_size: 8,
            pretrain_epochs: 1,
            joint_epochs: 2,
            lr_policy: 1e-6,
            lr_sampler: 1e-5,
            lr_sampler_joint: None,
            clip_eps: 0.2,
            tau_info: 10.0,
            temperature: 1.0,
            top_p: None,
            sim_noise: 0.02,
            oracle: OracleConfig::default(),
            n_q_min: 2,
            n_q_max: 4,
            pretrain_draws: 1,
            pretrain_queries: PretrainQueries::RelevantPadded,
            sampler_advantage: SamplerAdvantage::RawAccuracy,
            difficulty: DifficultyAdvantageConfig::default(),
            policy_gain: 2.0,
            advantage_eps: 1e-8,
            pass_rate_trials: 8,
        }
    }
}

impl TrainConfig {
    /// Step sizes and schedule sized for a few minutes on one CPU core.
    pub fn benchmark() -> Self {
        Self {
            batch_size: 8,
            pretrain_epochs: 20,
            joint_epochs: 8,
            lr_policy: 0.1,
            lr_sampler: 1e-3,
            lr_sampler_joint: Some(1e-4),
            pretrain_draws: 16,
            sampler_advantage: SamplerAdvantage::GroupNormalized,
            ..Self::default()
        }
    }

    pub fn joint_sampler_lr(&self) -> f64 {
        self.lr_sampler_joint.unwrap_or(self.lr_sampler)
    }

    /// Size of the uniform preview the query policy conditions on.
    pub fn n_init(&self) -> usize {
        self.k_frames / 2
    }

    pub fn draw_options(&self) -> DrawOptions {
        DrawOptions {
            temperature: self.temperature,
            top_p: self.top_p,
        }
    }

    pub fn validate(&self, n_frames: usize) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("pretrain_draws", self.pretrain_draws),
            ("pass_rate_trials", self.pass_rate_trials),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.group_size < 2 {
            return Err(Error::GroupTooSmall(self.group_size));
        }
        if self.k_frames == 0 || self.k_frames > n_frames {
            return Err(Error::SampleSize {
                k: self.k_frames,
                n: n_frames,
            });
        }
        if self.n_q_min == 0 || self.n_q_min > self.n_q_max || self.n_q_max > MAX_QUERIES {
            return Err(Error::Config(format!(
                "query count range [{}, {}] must lie within [1, {MAX_QUERIES}]",
                self.n_q_min, self.n_q_max
            )));
        }
        for (name, v) in [
            ("lr_policy", self.lr_policy),
            ("lr_sampler", self.lr_sampler),
            ("lr_sampler_joint", self.joint_sampler_lr()),
            ("tau_info", self.tau_info),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps)));
        }
        if !(self.sim_noise >= 0.0 && self.sim_noise.is_finite()) {
            return Err(Error::Config(format!("sim_noise must be non-negative, got {}", self.sim_noise)));
        }
        self.draw_options().validate()?;
        self.oracle.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_preview_size() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.group_size, c.joint_epochs), (32, 8, 2));
        assert_eq!((c.lr_policy, c.lr_sampler), (1e-6, 1e-5));
        assert_eq!(c.n_init(), 4);
        assert_eq!(TrainConfig { k_frames: 7, ..c.clone() }.n_init(), 3);
        c.validate(128).unwrap();
        TrainConfig::benchmark().validate(128).unwrap();
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let c = TrainConfig::default();
        assert!(TrainConfig { k_frames: 200, ..c.clone() }.validate(128).is_err());
        assert!(TrainConfig { group_size: 1, ..c.clone() }.validate(128).is_err());
        assert!(TrainConfig { n_q_max: 5, ..c.clone() }.validate(128).is_err());
        assert!(TrainConfig { temperature: 0.0, ..c.clone() }.validate(128).is_err());
        assert!(TrainConfig { clip_eps: 1.5, ..c }.validate(128).is_err());
    }
}
