//! Sequential masked-softmax sampling without replacement.
//!
//! Each step renormalises the softmax over the candidates not yet drawn, so the
//! sum of step log-probabilities is the exact log-probability of the ordered draw.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawOptions {
    pub temperature: f64,
    /// Optional nucleus truncation applied at every step. Off by default.
    pub top_p: Option<f64>,
}

impl Default for DrawOptions {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: None,
        }
    }
}

impl DrawOptions {
    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            top_p: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Temperature(self.temperature));
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("top_p {p} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// An ordered selection of distinct indices with its exact log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDraw {
    pub indices: Vec<usize>,
    pub step_logprobs: Vec<f64>,
    pub total_logprob: f64,
    pub temperature: f64,
}

/// Log-probabilities of one step over the available candidates.
/// Unavailable or truncated candidates get `-inf`.
pub(crate) fn step_log_probs(scores: &[f64], available: &[bool], opts: &DrawOptions) -> Vec<f64> {
    let t = opts.temperature;
    let max = scores
        .iter()
        .zip(available)
        .filter(|(_, &a)| a)
        .map(|(s, _)| s / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut logits: Vec<f64> = scores
        .iter()
        .zip(available)
        .map(|(s, &a)| if a { s / t - max } else { f64::NEG_INFINITY })
        .collect();
    if let Some(p) = opts.top_p {
        truncate_nucleus(&mut logits, p);
    }
    let log_z = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - log_z).collect()
}

/// Keeps the smallest highest-probability prefix whose mass reaches `p`.
fn truncate_nucleus(logits: &mut [f64], p: f64) {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let mut order: Vec<usize> = (0..logits.len()).filter(|&i| logits[i].is_finite()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    let mut keep = order.len();
    for (rank, &i) in order.iter().enumerate() {
        mass += logits[i].exp() / z;
        if mass >= p {
            keep = rank + 1;
            break;
        }
    }
    for &i in &order[keep..] {
        logits[i] = f64::NEG_INFINITY;
    }
}

fn check_inputs(scores: &[f64], k: usize, opts: &DrawOptions) -> Result<()> {
    opts.validate()?;
    if k == 0 || k > scores.len() {
        return Err(Error::SampleSize { k, n: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    Ok(())
}

fn finish(indices: Vec<usize>, step_logprobs: Vec<f64>, opts: &DrawOptions) -> FrameDraw {
    FrameDraw {
        total_logprob: step_logprobs.iter().sum(),
        indices,
        step_logprobs,
        temperature: opts.temperature,
    }
}

/// Draws `k` distinct indices from `softmax(scores / temperature)`, renormalising
/// over the remaining candidates after each draw.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    scores: &[f64],
    k: usize,
    opts: &DrawOptions,
    rng: &mut R,
) -> Result<FrameDraw> {
    check_inputs(scores, k, opts)?;
    let mut available = vec![true; scores.len()];
    let mut indices = Vec::with_capacity(k);
    let mut step_logprobs = Vec::with_capacity(k);
    for _ in 0..k {
        let logp = step_log_probs(scores, &available, opts);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = None;
        for (i, lp) in logp.iter().enumerate() {
            if lp.is_finite() {
                acc += lp.exp();
                pick = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        // rounding can leave `acc` a hair below 1; the last candidate absorbs it
        let idx = pick.expect("at least one candidate remains");
        available[idx] = false;
        indices.push(idx);
        step_logprobs.push(logp[idx]);
    }
    Ok(finish(indices, step_logprobs, opts))
}

/// Iterative argmax under the same masking; ties go to the lower index.
pub fn greedy_select(scores: &[f64], k: usize, opts: &DrawOptions) -> Result<FrameDraw> {
    check_inputs(scores, k, opts)?;
    let mut available = vec![true; scores.len()];
    let mut indices = Vec::with_capacity(k);
    let mut step_logprobs = Vec::with_capacity(k);
    for _ in 0..k {
        let logp = step_log_probs(scores, &available, opts);
        let mut best: Option<usize> = None;
        for (i, &a) in available.iter().enumerate() {
            if a && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let idx = best.expect("at least one candidate remains");
        available[idx] = false;
        indices.push(idx);
        step_logprobs.push(logp[idx]);
    }
    Ok(finish(indices, step_logprobs, opts))
}

/// Step and total log-probabilities of a given ordered draw.
pub fn draw_logprob(scores: &[f64], indices: &[usize], opts: &DrawOptions) -> Result<(Vec<f64>, f64)> {
    check_inputs(scores, indices.len(), opts)?;
    let mut available = vec![true; scores.len()];
    let mut steps = Vec::with_capacity(indices.len());
    for &idx in indices {
        if idx >= scores.len() || !available[idx] {
            return Err(Error::InvalidSelection(format!("index {idx} repeated or out of range")));
        }
        let logp = step_log_probs(scores, &available, opts);
        steps.push(logp[idx]);
        available[idx] = false;
    }
    let total = steps.iter().sum();
    Ok((steps, total))
}

/// Gradient of the ordered draw's total log-probability with respect to `scores`:
/// `(1/T) * sum_k (onehot(x_k) - p_k)`, where `p_k` is the step-k distribution.
pub fn logprob_grad(scores: &[f64], indices: &[usize], opts: &DrawOptions) -> Result<Vec<f64>> {
    check_inputs(scores, indices.len(), opts)?;
    let mut available = vec![true; scores.len()];
    let mut grad = vec![0.0; scores.len()];
    let inv_t = 1.0 / opts.temperature;
    for &idx in indices {
        if idx >= scores.len() || !available[idx] {
            return Err(Error::InvalidSelection(format!("index {idx} repeated or out of range")));
        }
        let logp = step_log_probs(scores, &available, opts);
        for (g, lp) in grad.iter_mut().zip(&logp) {
            if lp.is_finite() {
                *g -= inv_t * lp.exp();
            }
        }
        grad[idx] += inv_t;
        available[idx] = false;
    }
    Ok(grad)
}
