//! Finite-difference audit of every analytic gradient in the crate.
//!
//! Each entry compares a backward pass against central differences of a
//! scalar objective and records the worst relative error.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::neuralcore::{
    conv1d_backward, conv1d_forward, downsample2, downsample2_backward, grad_check, grad_check_piecewise, relu_backward, relu_forward,
    upsample2, upsample2_backward, ConvLayer, GradCheckOptions, GradCheckReport, Tensor1D,
};
use crate::query_policy::{grpo_gradient, policy_forward, query_logprob, sample_queries, GrpoSample, PolicyParams};
use crate::rng::{domain, stream};
use crate::usampler::{draw_logprob, reinforce_backward, sample_without_replacement, sampler_forward, DrawOptions, SamplerParams};
use crate::videoqa_env::SimilarityMatrix;

/// Deliberate corruption of an analytic gradient, for exercising the audit itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradFault {
    /// Scales every analytic bias gradient by 1.5.
    BiasGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradSuiteOptions {
    pub tolerance: f64,
    /// Random instances per elementwise layer check.
    pub layer_seeds: u64,
    /// Random instances of the full-network check.
    pub network_seeds: u64,
    /// Coordinates sampled per network layer and instance.
    pub network_coords: usize,
    pub network_frames: usize,
    /// Step reductions allowed when a network probe crosses a ReLU or pooling kink.
    pub kink_shrinks: usize,
    /// Largest tolerated fraction of network coordinates skipped at kinks.
    pub max_kink_fraction: f64,
    pub check: GradCheckOptions,
    pub fault: Option<GradFault>,
}

impl Default for GradSuiteOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            layer_seeds: 20,
            network_seeds: 2,
            network_coords: 150,
            network_frames: 48,
            kink_shrinks: 2,
            max_kink_fraction: 0.05,
            check: GradCheckOptions::default(),
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradSuiteEntry {
    pub name: String,
    pub checked_coords: usize,
    pub kink_skipped: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradSuiteReport {
    pub tolerance: f64,
    pub entries: Vec<GradSuiteEntry>,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    /// One line per entry: name, coordinates checked, worst error, verdict.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{:<16} coords={:<6} kink_skipped={:<3} max_rel_error={:.3e} {}\n",
                e.name,
                e.checked_coords,
                e.kink_skipped,
                e.max_rel_error,
                if e.passed { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

fn normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Suite<'a> {
    opts: &'a GradSuiteOptions,
    entries: Vec<GradSuiteEntry>,
}

impl Suite<'_> {
    fn record(&mut self, name: &str, report: &GradCheckReport) {
        self.entries.push(GradSuiteEntry {
            name: name.to_string(),
            checked_coords: report.checked_coords,
            kink_skipped: report.kink_skipped,
            max_rel_error: report.max_rel_error,
            passed: report.passed(self.opts.tolerance)
                && report.checked_coords > 0
                && report.kink_skipped as f64 <= self.opts.max_kink_fraction * (report.checked_coords + report.kink_skipped) as f64,
        });
    }

    fn bias_scale(&self) -> f64 {
        match self.opts.fault {
            Some(GradFault::BiasGradient) => 1.5,
            None => 1.0,
        }
    }
}

fn conv_check(suite: &mut Suite<'_>, dilation: usize) -> Result<()> {
    let mut total = GradCheckReport::empty();
    for seed in 0..suite.opts.layer_seeds {
        let mut rng = stream(seed, &[domain::GRADCHECK, 1, dilation as u64]);
        let (cin, cout, len) = (3, 2, 11);
        let mut layer = ConvLayer::init(cin, cout, 3, dilation, 1.0, &mut rng)?;
        layer.bias = normal_vec(cout, &mut rng);
        let x = Tensor1D::from_vec(cin, len, normal_vec(cin * len, &mut rng))?;
        let c = normal_vec(cout * len, &mut rng);
        let g_out = Tensor1D::from_vec(cout, len, c.clone())?;
        let (gx, gp) = conv1d_backward(&layer, &x, &g_out)?;
        let bias: Vec<f64> = gp.bias.iter().map(|b| b * suite.bias_scale()).collect();
        let analytic = [gp.weights.as_slice(), &bias, gx.values()].concat();
        let (nw, nb) = (layer.weights.len(), layer.bias.len());
        let params = [layer.weights.as_slice(), &layer.bias, x.values()].concat();
        let report = grad_check(
            |v| {
                let mut l = layer.clone();
                l.weights.copy_from_slice(&v[..nw]);
                l.bias.copy_from_slice(&v[nw..nw + nb]);
                let xi = Tensor1D::from_vec(cin, len, v[nw + nb..].to_vec()).expect("shape preserved");
                dot(conv1d_forward(&l, &xi).expect("shapes match").values(), &c)
            },
            &params,
            &analytic,
            &GradCheckOptions { seed, ..suite.opts.check },
        )?;
        total.merge(&report);
    }
    suite.record(&format!("conv_d{dilation}"), &total);
    Ok(())
}

fn elementwise_check(suite: &mut Suite<'_>) -> Result<()> {
    let (ch, len) = (3, 12);
    let mut pool = GradCheckReport::empty();
    let mut up = GradCheckReport::empty();
    let mut relu = GradCheckReport::empty();
    for seed in 0..suite.opts.layer_seeds {
        let mut rng = stream(seed, &[domain::GRADCHECK, 2]);
        let x = Tensor1D::from_vec(ch, len, normal_vec(ch * len, &mut rng))?;
        let opts = GradCheckOptions { seed, ..suite.opts.check };

        let c = normal_vec(ch * len / 2, &mut rng);
        let pooled = downsample2(&x)?;
        let g = downsample2_backward(&pooled, &Tensor1D::from_vec(ch, len / 2, c.clone())?)?;
        let r = grad_check(
            |v| dot(downsample2(&Tensor1D::from_vec(ch, len, v.to_vec()).expect("shape")).expect("even").output.values(), &c),
            x.values(),
            g.values(),
            &opts,
        )?;
        pool.merge(&r);

        let c = normal_vec(ch * len * 2, &mut rng);
        let g = upsample2_backward(&Tensor1D::from_vec(ch, len * 2, c.clone())?)?;
        let r = grad_check(
            |v| dot(upsample2(&Tensor1D::from_vec(ch, len, v.to_vec()).expect("shape")).values(), &c),
            x.values(),
            g.values(),
            &opts,
        )?;
        up.merge(&r);

        let c = normal_vec(ch * len, &mut rng);
        let g = relu_backward(&x, &Tensor1D::from_vec(ch, len, c.clone())?)?;
        let r = grad_check(
            |v| dot(relu_forward(&Tensor1D::from_vec(ch, len, v.to_vec()).expect("shape")).values(), &c),
            x.values(),
            g.values(),
            &opts,
        )?;
        relu.merge(&r);
    }
    suite.record("downsample2", &pool);
    suite.record("upsample2", &up);
    suite.record("relu", &relu);
    Ok(())
}

fn network_check(suite: &mut Suite<'_>) -> Result<()> {
    let base = SamplerParams::init_seeded(0);
    let names: Vec<String> = base.layers().into_iter().map(|(n, _)| n).collect();
    let sizes = base.buffer_sizes();
    let mut per_layer = vec![GradCheckReport::empty(); names.len()];
    let opts = DrawOptions::default();
    let n = suite.opts.network_frames;
    for seed in 0..suite.opts.network_seeds {
        let mut rng = stream(seed, &[domain::GRADCHECK, 3]);
        // nonzero biases keep every ReLU and pooling window off its kink
        let mut params = SamplerParams::init(&mut rng);
        let mut flat = params.flat();
        let mut offset = 0;
        for pair in sizes.chunks(2) {
            offset += pair[0];
            for (b, z) in flat[offset..offset + pair[1]].iter_mut().zip(normal_vec(pair[1], &mut rng)) {
                *b = 0.1 * z;
            }
            offset += pair[1];
        }
        params.set_flat(&flat)?;
        let n_q = rng.random_range(1..=4);
        let s = SimilarityMatrix::new(n_q, n, (0..n_q * n).map(|_| rng.random_range(0.001..1.0)).collect())?;
        let (scores, cache) = sampler_forward(&params, &s)?;
        let draw = sample_without_replacement(&scores.scores, 4, &opts, &mut rng)?;
        let advantage = rng.random_range(0.5..2.0);
        let grads = reinforce_backward(&params, &cache, &draw, advantage, &opts)?;
        let mut analytic = grads.flat();
        let mut offset = 0;
        for (layer, report) in per_layer.iter_mut().enumerate() {
            let (nw, nb) = (sizes[2 * layer], sizes[2 * layer + 1]);
            for b in &mut analytic[offset + nw..offset + nw + nb] {
                *b *= suite.bias_scale();
            }
            // weights and biases are sampled separately so both are always covered
            let parts = [(offset, nw, suite.opts.network_coords), (offset + nw, nb, suite.opts.network_coords / 5)];
            for (part, &(start, len, max_coords)) in parts.iter().enumerate() {
                let range = start..start + len;
                let r = grad_check_piecewise(
                    |v| {
                        let mut full = flat.clone();
                        full[range.clone()].copy_from_slice(v);
                        let mut p = params.clone();
                        p.set_flat(&full).expect("length preserved");
                        let (sc, c) = sampler_forward(&p, &s).expect("valid input");
                        let value = -advantage * draw_logprob(&sc.scores, &draw.indices, &opts).expect("valid draw").1;
                        (value, c.activation_pattern())
                    },
                    &flat[range.clone()],
                    &analytic[range.clone()],
                    &GradCheckOptions {
                        max_coords: max_coords.max(1),
                        seed: seed * 31 + 2 * layer as u64 + part as u64,
                        ..suite.opts.check
                    },
                    suite.opts.kink_shrinks,
                )?;
                report.merge(&r);
            }
            offset += nw + nb;
        }
    }
    for (name, report) in names.iter().zip(&per_layer) {
        suite.record(&format!("unet.{name}"), report);
    }
    Ok(())
}

fn grpo_check(suite: &mut Suite<'_>) -> Result<()> {
    let opts = DrawOptions::default();
    let mut total = GradCheckReport::empty();
    for seed in 0..suite.opts.layer_seeds {
        let mut rng = stream(seed, &[domain::GRADCHECK, 4]);
        let vocab = 8;
        let mut policy = PolicyParams::prior(vocab, 1.0);
        let flat: Vec<f64> = policy.flat().iter().map(|v| v + 0.3 * rng.random_range(-1.0..1.0)).collect();
        policy.set_flat(&flat)?;
        let group: Vec<GrpoSample> = (0..8)
            .map(|_| {
                let hint = normal_vec(vocab, &mut rng);
                let logits = policy_forward(&policy, &hint)?;
                let n_q = rng.random_range(1..=4);
                let queries = sample_queries(&logits, n_q, &opts, &mut rng)?;
                Ok(GrpoSample {
                    old_logprob: queries.total_logprob,
                    advantage: rng.random_range(-1.5..1.5),
                    hint,
                    queries,
                })
            })
            .collect::<Result<_>>()?;
        let mut g = grpo_gradient(&policy, &group, 0.2, &opts)?;
        for b in &mut g.bias {
            *b *= suite.bias_scale();
        }
        // at the snapshot the surrogate's gradient is that of the mean of A * log pi
        let r = grad_check(
            |v| {
                let mut p = policy.clone();
                p.set_flat(v).expect("length preserved");
                group
                    .iter()
                    .map(|s| s.advantage * query_logprob(&p, &s.hint, &s.queries.concepts, &opts).expect("valid queries"))
                    .sum::<f64>()
                    / group.len() as f64
            },
            &flat,
            &g.flat(),
            &GradCheckOptions { seed, ..suite.opts.check },
        )?;
        total.merge(&r);
    }
    suite.record("grpo_snapshot", &total);
    Ok(())
}

/// Runs every gradient check and reports the worst error per layer.
pub fn run_grad_suite(opts: &GradSuiteOptions) -> Result<GradSuiteReport> {
    let mut suite = Suite { opts, entries: Vec::new() };
    for d in [1, 2, 4, 8] {
        conv_check(&mut suite, d)?;
    }
    elementwise_check(&mut suite)?;
    network_check(&mut suite)?;
    grpo_check(&mut suite)?;
    Ok(GradSuiteReport {
        tolerance: opts.tolerance,
        entries: suite.entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> GradSuiteOptions {
        GradSuiteOptions {
            layer_seeds: 3,
            network_seeds: 1,
            network_coords: 20,
            network_frames: 16,
            ..Default::default()
        }
    }

    #[test]
    fn clean_suite_passes_and_lists_every_layer() {
        let r = run_grad_suite(&quick()).unwrap();
        assert!(r.passed(), "{}", r.to_text());
        let names: Vec<&str> = r.entries.iter().map(|e| e.name.as_str()).collect();
        for n in ["conv_d1", "conv_d8", "downsample2", "upsample2", "relu", "unet.enc0", "unet.head", "grpo_snapshot"] {
            assert!(names.contains(&n), "{n}");
        }
        assert_eq!(r.entries.len(), 4 + 3 + 9 + 1);
    }

    #[test]
    fn injected_bias_fault_is_caught() {
        let r = run_grad_suite(&GradSuiteOptions {
            fault: Some(GradFault::BiasGradient),
            ..quick()
        })
        .unwrap();
        assert!(!r.passed());
        assert!(r.entries.iter().find(|e| e.name == "conv_d1").is_some_and(|e| !e.passed));
        assert!(r.entries.iter().find(|e| e.name == "relu").is_some_and(|e| e.passed));
        // the head bias shifts every score equally, so its gradient is identically zero
        for e in r.entries.iter().filter(|e| e.name.starts_with("unet.") && e.name != "unet.head") {
            assert!(!e.passed, "{}", e.name);
        }
    }
}
