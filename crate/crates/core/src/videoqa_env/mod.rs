//! Synthetic long-video QA environment.
//!
//! An episode is a video of `n_frames` dense frames with one to three planted
//! key events. A question is answered correctly with a probability that grows
//! linearly with the fraction of key events the selected frames touch.

mod episode;
mod io;
mod oracle;
mod similarity;

use serde::{Deserialize, Serialize};

pub use episode::{confusion_map, generate_dataset, generate_episode};
pub use io::{
    format_matrix, parse_matrix, parse_raw_grid, read_dataset, read_matrix, write_dataset,
    write_matrix,
};
pub use oracle::{
    answer_oracle, coverage_fraction, estimate_pass_rate, success_probability,
    validate_selection, OracleConfig, PassRate,
};
pub use similarity::{
    synthesize_similarity, SimilarityMatrix, BASELINE_SIMILARITY, MAX_QUERIES, PLATEAU_SPAN,
    S_MAX, S_MIN,
};

use crate::error::{Error, Result};

/// A planted key event occupying frames `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub concept_id: usize,
    pub start: usize,
    pub end: usize,
    /// How strongly this event's concept lights up its similarity row, in (0, 1].
    pub salience: f64,
}

impl Event {
    pub fn width(&self) -> usize {
        self.end - self.start
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }
}

/// One synthetic question about one synthetic video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub episode_id: u64,
    /// Questions sharing a group stand in for questions about the same video.
    pub group_id: u64,
    pub n_frames: usize,
    pub hop_count: usize,
    pub events: Vec<Event>,
    pub vocab_size: usize,
    pub hint: Vec<f64>,
    pub correct_option: u8,
    pub pass_rate: Option<f64>,
}

impl EpisodeSpec {
    pub fn relevant_concepts(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.concept_id).collect()
    }

    /// Checks the structural invariants of an episode.
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 16 {
            return Err(Error::Config(format!("n_frames {} < 16", self.n_frames)));
        }
        if self.hop_count != self.events.len() || !(1..=3).contains(&self.hop_count) {
            return Err(Error::Config(format!(
                "hop_count {} with {} events",
                self.hop_count,
                self.events.len()
            )));
        }
        if self.hint.len() != self.vocab_size || self.hint.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("hint must be finite with vocab_size entries".into()));
        }
        if self.correct_option >= 4 {
            return Err(Error::Config("correct_option must be in [0, 4)".into()));
        }
        let mut spans: Vec<_> = self.events.iter().collect();
        spans.sort_by_key(|e| e.start);
        for e in &spans {
            if e.start >= e.end || e.end > self.n_frames || e.concept_id >= self.vocab_size {
                return Err(Error::Config(format!("invalid event {e:?}")));
            }
        }
        if spans.windows(2).any(|w| w[0].end > w[1].start) {
            return Err(Error::Config("overlapping events".into()));
        }
        if let Some(c) = self.pass_rate {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Config(format!("pass rate {c} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Parameters of the episode generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub seed: u64,
    pub n_frames: usize,
    pub vocab_size: usize,
    /// Relative weights of 1-, 2- and 3-hop questions.
    pub hop_weights: [f64; 3],
    pub event_width_min: usize,
    pub event_width_max: usize,
    /// Standard deviation of the Gaussian noise added to every hint entry.
    pub hint_noise: f64,
    /// Extra hint mass each relevant concept leaks onto its confusable partner.
    pub hint_leak: f64,
    /// Lower bound of the per-event salience range `[salience_min, 1]`.
    pub salience_min: f64,
    pub questions_per_group: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_frames: 128,
            vocab_size: 16,
            hop_weights: [1.0, 1.0, 1.0],
            event_width_min: 4,
            event_width_max: 12,
            hint_noise: 0.3,
            hint_leak: 1.0,
            salience_min: 0.5,
            questions_per_group: 4,
        }
    }
}

impl EnvConfig {
    pub fn max_hops(&self) -> usize {
        (0..3).rev().find(|&i| self.hop_weights[i] > 0.0).map_or(0, |i| i + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 16 {
            return Err(Error::Config(format!("n_frames {} < 16", self.n_frames)));
        }
        if self.vocab_size < 8 {
            return Err(Error::Config(format!("vocab_size {} < 8", self.vocab_size)));
        }
        if self.hop_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.max_hops() == 0 {
            return Err(Error::Config("hop weights must be non-negative and not all zero".into()));
        }
        if self.event_width_min == 0 || self.event_width_min > self.event_width_max {
            return Err(Error::Config(format!(
                "event width range [{}, {}]",
                self.event_width_min, self.event_width_max
            )));
        }
        if self.max_hops() * self.event_width_max > self.n_frames {
            return Err(Error::EventsCannotFit {
                hops: self.max_hops(),
                max_width: self.event_width_max,
                n_frames: self.n_frames,
            });
        }
        if !(self.hint_noise >= 0.0 && self.hint_leak >= 0.0) {
            return Err(Error::Config("hint noise and leak must be non-negative".into()));
        }
        if !(self.salience_min > 0.0 && self.salience_min <= 1.0) {
            return Err(Error::Config(format!("salience_min {} outside (0, 1]", self.salience_min)));
        }
        if self.questions_per_group == 0 {
            return Err(Error::Config("questions_per_group must be positive".into()));
        }
        Ok(())
    }
}
