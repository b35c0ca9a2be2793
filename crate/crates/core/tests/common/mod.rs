//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use keyframe_core::rng::stream;
use keyframe_core::usampler::sample_without_replacement;
use keyframe_core::DrawOptions;

/// Every ordered `k`-tuple of distinct indices with its probability under
/// sequential softmax-without-replacement, computed directly from the
/// definition without the library's masking code.
pub fn enumerate_draws(scores: &[f64], k: usize, temperature: f64) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(k);
    extend(scores, k, temperature, &mut prefix, 1.0, &mut out);
    out
}

fn extend(scores: &[f64], k: usize, t: f64, prefix: &mut Vec<usize>, p: f64, out: &mut Vec<(Vec<usize>, f64)>) {
    if prefix.len() == k {
        out.push((prefix.clone(), p));
        return;
    }
    let z: f64 = (0..scores.len())
        .filter(|i| !prefix.contains(i))
        .map(|i| (scores[i] / t).exp())
        .sum();
    for i in 0..scores.len() {
        if prefix.contains(&i) {
            continue;
        }
        let step = (scores[i] / t).exp() / z;
        prefix.push(i);
        extend(scores, k, t, prefix, p * step, out);
        prefix.pop();
    }
}

/// Counts of each ordered tuple over `n` library draws.
pub fn draw_counts(scores: &[f64], k: usize, opts: &DrawOptions, n: usize, seed: u64) -> HashMap<Vec<usize>, usize> {
    let mut rng = stream(seed, &[0x5a]);
    let mut counts = HashMap::new();
    for _ in 0..n {
        let d = sample_without_replacement(scores, k, opts, &mut rng).expect("valid draw");
        *counts.entry(d.indices).or_insert(0) += 1;
    }
    counts
}

/// Number of ordered tuples whose empirical frequency lies more than
/// `bands` standard errors from its enumerated probability, and the number
/// of tuples compared.
pub fn band_exceedances(
    exact: &[(Vec<usize>, f64)],
    counts: &HashMap<Vec<usize>, usize>,
    n: usize,
    bands: f64,
) -> (usize, usize) {
    let mut bad = 0;
    for (tuple, p) in exact {
        let freq = counts.get(tuple).copied().unwrap_or(0) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        if (freq - p).abs() > bands * se {
            bad += 1;
        }
    }
    (bad, exact.len())
}

/// Pearson statistic of `counts` against the uniform distribution over `cells` outcomes.
pub fn chi_square_uniform(counts: &HashMap<Vec<usize>, usize>, cells: usize, n: usize) -> f64 {
    let expected = n as f64 / cells as f64;
    let seen: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    seen + (cells - counts.len()) as f64 * expected
}
