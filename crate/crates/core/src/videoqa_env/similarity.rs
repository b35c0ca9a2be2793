use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::EpisodeSpec;
use crate::error::{Error, Result};

/// Smallest similarity value; keeps max/min ratios finite.
pub const S_MIN: f64 = 0.001;
pub const S_MAX: f64 = 1.0;
/// Similarity of a frame unrelated to the query.
pub const BASELINE_SIMILARITY: f64 = 0.1;
/// Height of a fully salient event plateau above the baseline.
pub const PLATEAU_SPAN: f64 = 0.8;
pub const MAX_QUERIES: usize = 4;

/// Query x frame relevance grid, row-major, every entry in `[S_MIN, S_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n_queries: usize,
    n_frames: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n_queries: usize, n_frames: usize, values: Vec<f64>) -> Result<Self> {
        if n_queries == 0 || n_queries > MAX_QUERIES {
            return Err(Error::QueryCount(n_queries));
        }
        if n_frames == 0 || values.len() != n_queries * n_frames {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {n_queries}x{n_frames}",
                values.len()
            )));
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite("similarity matrix".into()));
            }
            if !(S_MIN..=S_MAX).contains(&v) {
                return Err(Error::OutOfRange(format!("similarity {v} outside [{S_MIN}, {S_MAX}]")));
            }
        }
        Ok(Self {
            n_queries,
            n_frames,
            values,
        })
    }

    /// Maps raw cosine similarities in `[-1, 1]` through `(s + 1) / 2` and clamps.
    pub fn from_cosine(n_queries: usize, n_frames: usize, raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cosine matrix".into()));
        }
        let values = raw.iter().map(|s| ((s + 1.0) / 2.0).clamp(S_MIN, S_MAX)).collect();
        Self::new(n_queries, n_frames, values)
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_frames..(j + 1) * self.n_frames]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_frames)
    }
}

/// Builds the similarity rows for `queries` against the episode's frames.
///
/// Each row sits at [`BASELINE_SIMILARITY`] and rises to
/// `BASELINE + PLATEAU_SPAN * salience` across the window of every event whose
/// concept matches the query. Independent Gaussian noise of standard deviation
/// `noise` is added per entry before clamping to `[S_MIN, S_MAX]`.
pub fn synthesize_similarity<R: Rng + ?Sized>(
    episode: &EpisodeSpec,
    queries: &[usize],
    noise: f64,
    rng: &mut R,
) -> Result<SimilarityMatrix> {
    if queries.is_empty() || queries.len() > MAX_QUERIES {
        return Err(Error::QueryCount(queries.len()));
    }
    if let Some(&q) = queries.iter().find(|&&q| q >= episode.vocab_size) {
        return Err(Error::Config(format!("query concept {q} outside vocabulary")));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let n = episode.n_frames;
    let mut values = vec![BASELINE_SIMILARITY; queries.len() * n];
    for (j, &q) in queries.iter().enumerate() {
        let row = &mut values[j * n..(j + 1) * n];
        for e in episode.events.iter().filter(|e| e.concept_id == q) {
            let level = BASELINE_SIMILARITY + PLATEAU_SPAN * e.salience;
            row[e.start..e.end].fill(level);
        }
        if noise > 0.0 {
            for v in row.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        for v in row.iter_mut() {
            *v = v.clamp(S_MIN, S_MAX);
        }
    }
    SimilarityMatrix::new(queries.len(), n, values)
}
