use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EpisodeSpec;
use crate::error::{Error, Result};
use crate::rng::{domain, mix, stream};

/// Answer-model stand-in: success probability interpolates linearly between
/// `chance_floor` and `p_hit` in the covered fraction of key events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub p_hit: f64,
    pub chance_floor: f64,
    pub rng_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            p_hit: 0.9,
            chance_floor: 0.25,
            rng_seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.chance_floor < self.p_hit && self.p_hit <= 1.0) {
            return Err(Error::Config(format!(
                "need chance_floor < p_hit <= 1, got {} and {}",
                self.chance_floor, self.p_hit
            )));
        }
        Ok(())
    }
}

/// Result of [`estimate_pass_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassRate {
    pub c: f64,
    pub correct: usize,
    pub trials: usize,
    /// All trials passed; such questions carry no learning signal and are dropped.
    pub excluded: bool,
}

impl PassRate {
    pub fn from_counts(correct: usize, trials: usize) -> Self {
        Self {
            c: correct as f64 / trials as f64,
            correct,
            trials,
            excluded: correct == trials,
        }
    }
}

pub fn validate_selection(frames: &[usize], n_frames: usize) -> Result<()> {
    let mut seen = vec![false; n_frames];
    for &f in frames {
        if f >= n_frames {
            return Err(Error::InvalidSelection(format!("frame {f} outside [0, {n_frames})")));
        }
        if std::mem::replace(&mut seen[f], true) {
            return Err(Error::InvalidSelection(format!("frame {f} selected twice")));
        }
    }
    Ok(())
}

/// Share of the episode's events touched by at least one selected frame.
pub fn coverage_fraction(episode: &EpisodeSpec, frames: &[usize]) -> f64 {
    if episode.events.is_empty() {
        return 0.0;
    }
    let covered = episode
        .events
        .iter()
        .filter(|e| frames.iter().any(|&f| e.contains(f)))
        .count();
    covered as f64 / episode.events.len() as f64
}

pub fn success_probability(coverage: f64, config: &OracleConfig) -> f64 {
    config.chance_floor + coverage * (config.p_hit - config.chance_floor)
}

/// Simulated answer correctness for one selection.
///
/// `call` keys a dedicated RNG stream, so two calls with the same
/// `(rng_seed, episode_id, call)` share one uniform draw and differ only
/// through coverage.
pub fn answer_oracle(
    episode: &EpisodeSpec,
    frames: &[usize],
    config: &OracleConfig,
    call: &[u64],
) -> Result<bool> {
    validate_selection(frames, episode.n_frames)?;
    let p = success_probability(coverage_fraction(episode, frames), config);
    let key = mix(episode.episode_id, call);
    let u: f64 = stream(config.rng_seed, &[domain::ORACLE, key]).random();
    Ok(u < p)
}

/// Fraction of `trials` uniformly random `k`-frame selections answered correctly.
pub fn estimate_pass_rate(
    episode: &EpisodeSpec,
    k: usize,
    trials: usize,
    config: &OracleConfig,
) -> Result<PassRate> {
    if trials == 0 {
        return Err(Error::Config("pass-rate estimation needs at least one trial".into()));
    }
    if k == 0 || k > episode.n_frames {
        return Err(Error::SampleSize { k, n: episode.n_frames });
    }
    let mut correct = 0;
    for trial in 0..trials as u64 {
        let mut rng = stream(config.rng_seed, &[domain::PASS_RATE, episode.episode_id, trial]);
        let frames = index::sample(&mut rng, episode.n_frames, k).into_vec();
        if answer_oracle(episode, &frames, config, &[domain::PASS_RATE, trial])? {
            correct += 1;
        }
    }
    Ok(PassRate::from_counts(correct, trials))
}
