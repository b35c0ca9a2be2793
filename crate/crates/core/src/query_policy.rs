//! Linear categorical query policy trained with a clipped group-relative surrogate.
//!
//! The policy scores every concept with `weights . hint + bias` and draws up to
//! four distinct concepts by sequential masked softmax, the same scheme the
//! frame sampler uses.

use rand::Rng;

use crate::error::{Error, Result};
use crate::neuralcore::{adam_step, AdamState, Checkpoint};
use crate::usampler::{draw_logprob, greedy_select, logprob_grad, sample_without_replacement, DrawOptions};
use crate::videoqa_env::MAX_QUERIES;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    vocab: usize,
    /// `vocab x vocab`, row `c` holds the weights producing concept `c`'s logit.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(vocab: usize) -> Self {
        Self {
            vocab,
            weights: vec![0.0; vocab * vocab],
            bias: vec![0.0; vocab],
        }
    }

    /// `gain * identity`: reads the hint literally, the untrained starting point.
    pub fn prior(vocab: usize, gain: f64) -> Self {
        let mut p = Self::zeros(vocab);
        for c in 0..vocab {
            p.weights[c * vocab + c] = gain;
        }
        p
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn buffer_sizes(&self) -> Vec<usize> {
        vec![self.weights.len(), self.bias.len()]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }

    pub fn flat(&self) -> Vec<f64> {
        [self.weights.as_slice(), self.bias.as_slice()].concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.weights.len() + self.bias.len() {
            return Err(Error::Shape("policy parameter count".into()));
        }
        let (w, b) = values.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("policy");
        ck.push("weights", vec![self.vocab, self.vocab], self.weights.clone());
        ck.push("bias", vec![self.vocab], self.bias.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "policy" {
            return Err(Error::Checkpoint(format!("expected a policy checkpoint, found {:?}", ck.kind)));
        }
        let w = ck.get("weights")?;
        let b = ck.get("bias")?;
        let vocab = b.data.len();
        if b.shape != [vocab] || w.shape != [vocab, vocab] {
            return Err(Error::Checkpoint("policy tensor shapes".into()));
        }
        Ok(Self {
            vocab,
            weights: w.data.clone(),
            bias: b.data.clone(),
        })
    }
}

pub fn policy_forward(params: &PolicyParams, hint: &[f64]) -> Result<Vec<f64>> {
    if hint.len() != params.vocab {
        return Err(Error::Shape(format!(
            "hint has {} entries, policy vocabulary is {}",
            hint.len(),
            params.vocab
        )));
    }
    Ok(params
        .weights
        .chunks(params.vocab)
        .zip(&params.bias)
        .map(|(row, b)| b + row.iter().zip(hint).map(|(w, h)| w * h).sum::<f64>())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub concepts: Vec<usize>,
    pub total_logprob: f64,
    pub well_formed: bool,
}

/// Deliberate corruption of a sampled query set, for exercising the format reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryFault {
    #[default]
    None,
    /// Repeats the first concept in place of the last.
    DuplicateFirst,
    /// Replaces the last concept with an id outside the vocabulary.
    OutOfVocabulary,
}

fn check_query_count(n_q: usize, vocab: usize) -> Result<()> {
    if n_q == 0 || n_q > MAX_QUERIES.min(vocab) {
        return Err(Error::QueryCount(n_q));
    }
    Ok(())
}

fn is_well_formed(concepts: &[usize], vocab: usize) -> bool {
    let mut seen = vec![false; vocab];
    (1..=MAX_QUERIES).contains(&concepts.len())
        && concepts
            .iter()
            .all(|&c| c < vocab && !std::mem::replace(&mut seen[c], true))
}

pub fn sample_queries<R: Rng + ?Sized>(
    logits: &[f64],
    n_q: usize,
    opts: &DrawOptions,
    rng: &mut R,
) -> Result<QuerySet> {
    sample_queries_with_fault(logits, n_q, opts, rng, QueryFault::None)
}

pub fn sample_queries_with_fault<R: Rng + ?Sized>(
    logits: &[f64],
    n_q: usize,
    opts: &DrawOptions,
    rng: &mut R,
    fault: QueryFault,
) -> Result<QuerySet> {
    check_query_count(n_q, logits.len())?;
    let draw = sample_without_replacement(logits, n_q, opts, rng)?;
    let mut concepts = draw.indices;
    match fault {
        QueryFault::None => {}
        QueryFault::DuplicateFirst => {
            let first = concepts[0];
            *concepts.last_mut().expect("n_q >= 1") = first;
        }
        QueryFault::OutOfVocabulary => *concepts.last_mut().expect("n_q >= 1") = logits.len(),
    }
    Ok(QuerySet {
        well_formed: is_well_formed(&concepts, logits.len()),
        concepts,
        total_logprob: draw.total_logprob,
    })
}

/// Top-`n_q` concepts by logit, ties to the lower id.
pub fn greedy_queries(logits: &[f64], n_q: usize, opts: &DrawOptions) -> Result<QuerySet> {
    check_query_count(n_q, logits.len())?;
    let draw = greedy_select(logits, n_q, opts)?;
    Ok(QuerySet {
        well_formed: true,
        concepts: draw.indices,
        total_logprob: draw.total_logprob,
    })
}

/// Log-probability of an ordered query set under `params`.
pub fn query_logprob(params: &PolicyParams, hint: &[f64], concepts: &[usize], opts: &DrawOptions) -> Result<f64> {
    let logits = policy_forward(params, hint)?;
    Ok(draw_logprob(&logits, concepts, opts)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PolicyGrads {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        Self {
            weights: vec![0.0; params.weights.len()],
            bias: vec![0.0; params.bias.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &PolicyGrads, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += scale * b;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        [self.weights.as_slice(), self.bias.as_slice()].concat()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|&v| v == 0.0)
    }
}

/// Gradient of [`query_logprob`] with respect to the policy parameters.
pub fn query_logprob_grad(
    params: &PolicyParams,
    hint: &[f64],
    concepts: &[usize],
    opts: &DrawOptions,
) -> Result<PolicyGrads> {
    let logits = policy_forward(params, hint)?;
    let g_logits = logprob_grad(&logits, concepts, opts)?;
    let c = params.vocab;
    let mut grads = PolicyGrads::zeros_like(params);
    for (row, &g) in g_logits.iter().enumerate() {
        grads.bias[row] = g;
        for (w, &h) in grads.weights[row * c..(row + 1) * c].iter_mut().zip(hint) {
            *w = g * h;
        }
    }
    Ok(grads)
}

/// One rollout of a group, as recorded from the snapshot policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GrpoSample {
    pub hint: Vec<f64>,
    pub queries: QuerySet,
    pub old_logprob: f64,
    pub advantage: f64,
}

/// `min(r * A, clip(r, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// True when the unclipped branch is the minimum, i.e. the term has a gradient.
fn unclipped_active(ratio: f64, advantage: f64, clip_eps: f64) -> bool {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    ratio * advantage <= clipped * advantage
}

fn sample_ratio(params: &PolicyParams, s: &GrpoSample, opts: &DrawOptions) -> Result<Option<f64>> {
    if !s.queries.well_formed {
        return Ok(None);
    }
    let new = query_logprob(params, &s.hint, &s.queries.concepts, opts)?;
    Ok(Some((new - s.old_logprob).exp()))
}

/// Group mean of the clipped surrogate. Malformed samples enter with ratio 1
/// and carry no gradient.
pub fn grpo_objective(params: &PolicyParams, group: &[GrpoSample], clip_eps: f64, opts: &DrawOptions) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::GroupTooSmall(0));
    }
    let mut total = 0.0;
    for s in group {
        let ratio = sample_ratio(params, s, opts)?.unwrap_or(1.0);
        total += clipped_surrogate(ratio, s.advantage, clip_eps);
    }
    Ok(total / group.len() as f64)
}

/// Gradient (ascent direction) of [`grpo_objective`].
pub fn grpo_gradient(
    params: &PolicyParams,
    group: &[GrpoSample],
    clip_eps: f64,
    opts: &DrawOptions,
) -> Result<PolicyGrads> {
    if group.is_empty() {
        return Err(Error::GroupTooSmall(0));
    }
    let mut grads = PolicyGrads::zeros_like(params);
    let scale = 1.0 / group.len() as f64;
    for s in group {
        if s.advantage == 0.0 {
            continue;
        }
        let Some(ratio) = sample_ratio(params, s, opts)? else {
            continue;
        };
        if !unclipped_active(ratio, s.advantage, clip_eps) {
            continue;
        }
        let g = query_logprob_grad(params, &s.hint, &s.queries.concepts, opts)?;
        // d(r * A) = A * r * d log pi
        grads.add_scaled(&g, scale * s.advantage * ratio);
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrpoStats {
    pub objective: f64,
    /// No parameter moved because the gradient was exactly zero.
    pub skipped: bool,
}

/// Applies an accumulated ascent gradient with one Adam step; an all-zero
/// gradient leaves parameters and optimizer state untouched.
pub fn apply_policy_gradient(params: &mut PolicyParams, state: &mut AdamState, ascent: &PolicyGrads) -> Result<bool> {
    if ascent.is_zero() {
        return Ok(false);
    }
    let neg_w: Vec<f64> = ascent.weights.iter().map(|g| -g).collect();
    let neg_b: Vec<f64> = ascent.bias.iter().map(|g| -g).collect();
    adam_step(&mut params.buffers_mut(), &[&neg_w, &neg_b], state)?;
    Ok(true)
}

/// One GRPO step on a single group of exactly `group_size` rollouts.
pub fn grpo_update(
    params: &mut PolicyParams,
    state: &mut AdamState,
    group: &[GrpoSample],
    group_size: usize,
    clip_eps: f64,
    opts: &DrawOptions,
) -> Result<GrpoStats> {
    if group.len() != group_size {
        return Err(Error::GroupSize {
            expected: group_size,
            got: group.len(),
        });
    }
    let objective = grpo_objective(params, group, clip_eps, opts)?;
    let grads = grpo_gradient(params, group, clip_eps, opts)?;
    let stepped = apply_policy_gradient(params, state, &grads)?;
    Ok(GrpoStats {
        objective,
        skipped: !stepped,
    })
}
