//! Rewards and advantages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query_policy::QuerySet;
use crate::videoqa_env::SimilarityMatrix;

/// Reward for a correct answer.
pub const ACC_REWARD: f64 = 0.8;
/// Reward for a well-formed query set.
pub const FORMAT_REWARD: f64 = 0.1;
/// Scale of the informativeness reward.
pub const INFO_REWARD: f64 = 0.1;
pub const DEFAULT_TAU_INFO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub acc: f64,
    pub format: f64,
    pub info: f64,
    pub total: f64,
}

/// `0.1 * (# rows with max/min > tau) / n_queries`. The comparison is strict.
pub fn informativeness_reward(s: &SimilarityMatrix, tau_info: f64) -> Result<f64> {
    let mut peaked = 0usize;
    for row in s.rows() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in row {
            if v <= 0.0 {
                return Err(Error::NonPositive(v));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi / lo > tau_info {
            peaked += 1;
        }
    }
    Ok(INFO_REWARD * peaked as f64 / s.n_queries() as f64)
}

pub fn compute_rewards(queries: &QuerySet, s: &SimilarityMatrix, correct: bool, tau_info: f64) -> Result<RewardBreakdown> {
    let acc = if correct { ACC_REWARD } else { 0.0 };
    let format = if queries.well_formed { FORMAT_REWARD } else { 0.0 };
    let info = informativeness_reward(s, tau_info)?;
    Ok(RewardBreakdown {
        acc,
        format,
        info,
        total: acc + format + info,
    })
}

/// `(r - mean) / std` with population std; a group whose std is below `eps`
/// gets all-zero advantages.
pub fn group_advantages(rewards: &[f64], eps: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("rewards".into()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < eps {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyAdvantageConfig {
    /// Advantage for a correct answer to a question never solved under uniform sampling.
    pub zero_pass_bonus: f64,
    /// Advantage for a wrong answer to such a question.
    pub zero_pass_penalty: f64,
}

impl Default for DifficultyAdvantageConfig {
    fn default() -> Self {
        Self {
            zero_pass_bonus: 10.0,
            zero_pass_penalty: 0.0,
        }
    }
}

/// Difficulty-aware sampler advantage from the question's pass rate `c`:
/// `1/c` when correct, `-1/(1-c)` when wrong, with fixed values at `c = 0`.
pub fn difficulty_advantage(c: f64, correct: bool, config: &DifficultyAdvantageConfig) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::PassRate(c));
    }
    Ok(match (c == 0.0, correct) {
        (true, true) => config.zero_pass_bonus,
        (true, false) => config.zero_pass_penalty,
        (false, true) => 1.0 / c,
        (false, false) => -1.0 / (1.0 - c),
    })
}
