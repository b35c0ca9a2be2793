use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::mean;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::query_policy::{greedy_queries, policy_forward, PolicyParams, QuerySet};
use crate::rl_core::compute_rewards;
use crate::rng::{domain, stream};
use crate::usampler::{greedy_select, sampler_forward, DrawOptions, SamplerParams};
use crate::videoqa_env::{answer_oracle, coverage_fraction, synthesize_similarity, EpisodeSpec, OracleConfig, SimilarityMatrix};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Uniform,
    TopkAvg,
    TopkWeighted,
    LearnedFrozen,
    LearnedJoint,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Uniform,
        Method::TopkAvg,
        Method::TopkWeighted,
        Method::LearnedFrozen,
        Method::LearnedJoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::TopkAvg => "topk_avg",
            Method::TopkWeighted => "topk_weighted",
            Method::LearnedFrozen => "learned_frozen",
            Method::LearnedJoint => "learned_joint",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Where evaluation queries come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    /// Greedy queries from the query policy (the joint policy for `learned_joint`).
    #[default]
    Policy,
    /// The episode's ground-truth concepts, as seen during sampler pre-training.
    Relevant,
}

impl FromStr for QuerySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "policy" => Ok(Self::Policy),
            "relevant" => Ok(Self::Relevant),
            _ => Err(Error::Config(format!("unknown query source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    pub k_frames: usize,
    pub sim_noise: f64,
    pub tau_info: f64,
    pub oracle: OracleConfig,
    pub n_q_min: usize,
    pub n_q_max: usize,
    pub policy_gain: f64,
    pub query_source: QuerySource,
}

impl EvalConfig {
    pub fn from_train(c: &TrainConfig) -> Self {
        Self {
            seed: c.seed,
            k_frames: c.k_frames,
            sim_noise: c.sim_noise,
            tau_info: c.tau_info,
            oracle: c.oracle.clone(),
            n_q_min: c.n_q_min,
            n_q_max: c.n_q_max,
            policy_gain: c.policy_gain,
            query_source: QuerySource::Policy,
        }
    }
}

/// Trained components available to the evaluator. A missing base policy means
/// the untrained prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalModels<'a> {
    pub base_policy: Option<&'a PolicyParams>,
    pub frozen_sampler: Option<&'a SamplerParams>,
    pub joint_policy: Option<&'a PolicyParams>,
    pub joint_sampler: Option<&'a SamplerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub accuracy: f64,
    pub coverage_mean: f64,
    pub reward_mean: f64,
    pub acc_mean: f64,
    pub format_mean: f64,
    pub info_mean: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k_frames: usize,
    pub seed: u64,
    pub query_source: QuerySource,
    pub n_episodes: usize,
    pub methods: Vec<MethodReport>,
    /// Excluded from the written file so reports are byte-reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl EvalReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    Ok(greedy_select(scores, k, &DrawOptions::default())?.indices)
}

/// Frames chosen by `method` on one similarity matrix.
pub fn select_frames(method: Method, s: &SimilarityMatrix, sampler: Option<&SamplerParams>, k: usize) -> Result<Vec<usize>> {
    let n = s.n_frames();
    if k == 0 || k > n {
        return Err(Error::SampleSize { k, n });
    }
    match method {
        Method::Uniform => Ok((0..k).map(|i| i * n / k).collect()),
        Method::TopkAvg => {
            let cols: Vec<f64> = (0..n).map(|t| s.rows().map(|r| r[t]).sum::<f64>() / s.n_queries() as f64).collect();
            top_k(&cols, k)
        }
        Method::TopkWeighted => {
            let weights: Vec<f64> = s.rows().map(|r| r.iter().copied().fold(f64::MIN, f64::max)).collect();
            let total: f64 = weights.iter().sum();
            let cols: Vec<f64> = (0..n)
                .map(|t| s.rows().zip(&weights).map(|(r, w)| w * r[t]).sum::<f64>() / total)
                .collect();
            top_k(&cols, k)
        }
        Method::LearnedFrozen | Method::LearnedJoint => {
            let sampler = sampler.ok_or_else(|| Error::MissingCheckpoint(format!("{method} needs a sampler")))?;
            let (scores, _) = sampler_forward(sampler, s)?;
            top_k(&scores.scores, k)
        }
    }
}

fn eval_query_count(cfg: &EvalConfig, vocab: usize, episode_id: u64) -> usize {
    let hi = cfg.n_q_max.min(vocab);
    let lo = cfg.n_q_min.min(hi);
    stream(cfg.seed, &[domain::QUERY_COUNT, domain::EVAL, episode_id]).random_range(lo..=hi)
}

fn episode_queries(ep: &EpisodeSpec, policy: &PolicyParams, cfg: &EvalConfig) -> Result<QuerySet> {
    match cfg.query_source {
        QuerySource::Relevant => Ok(QuerySet {
            concepts: ep.relevant_concepts(),
            total_logprob: 0.0,
            well_formed: true,
        }),
        QuerySource::Policy => {
            let logits = policy_forward(policy, &ep.hint)?;
            greedy_queries(&logits, eval_query_count(cfg, ep.vocab_size, ep.episode_id), &DrawOptions::default())
        }
    }
}

/// Evaluates one method. Similarity noise and the oracle draw depend only on
/// the episode, so methods issuing the same queries see the same matrix and
/// every method faces the same answer coin.
pub fn run_baseline(method: Method, dataset: &[EpisodeSpec], models: &EvalModels<'_>, cfg: &EvalConfig) -> Result<MethodReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prior;
    let base_policy = match models.base_policy {
        Some(p) => p,
        None => {
            prior = PolicyParams::prior(dataset[0].vocab_size, cfg.policy_gain);
            &prior
        }
    };
    let (policy, sampler) = match method {
        Method::LearnedJoint => (
            models
                .joint_policy
                .ok_or_else(|| Error::MissingCheckpoint("learned_joint needs a joint policy".into()))?,
            Some(
                models
                    .joint_sampler
                    .ok_or_else(|| Error::MissingCheckpoint("learned_joint needs a joint sampler".into()))?,
            ),
        ),
        Method::LearnedFrozen => (
            base_policy,
            Some(
                models
                    .frozen_sampler
                    .ok_or_else(|| Error::MissingCheckpoint("learned_frozen needs a pretrained sampler".into()))?,
            ),
        ),
        _ => (base_policy, None),
    };

    let (mut correct, mut coverage, mut totals, mut accs, mut formats, mut infos) = (0usize, vec![], vec![], vec![], vec![], vec![]);
    for ep in dataset {
        let queries = episode_queries(ep, policy, cfg)?;
        let s = synthesize_similarity(
            ep,
            &queries.concepts,
            cfg.sim_noise,
            &mut stream(cfg.seed, &[domain::SIMILARITY, domain::EVAL, ep.episode_id]),
        )?;
        let frames = select_frames(method, &s, sampler, cfg.k_frames)?;
        let ok = answer_oracle(ep, &frames, &cfg.oracle, &[domain::EVAL, cfg.seed])?;
        let r = compute_rewards(&queries, &s, ok, cfg.tau_info)?;
        correct += ok as usize;
        coverage.push(coverage_fraction(ep, &frames));
        totals.push(r.total);
        accs.push(r.acc);
        formats.push(r.format);
        infos.push(r.info);
    }
    Ok(MethodReport {
        method,
        accuracy: correct as f64 / dataset.len() as f64,
        coverage_mean: mean(&coverage),
        reward_mean: mean(&totals),
        acc_mean: mean(&accs),
        format_mean: mean(&formats),
        info_mean: mean(&infos),
        episodes: dataset.len(),
    })
}

pub fn evaluate(dataset: &[EpisodeSpec], methods: &[Method], models: &EvalModels<'_>, cfg: &EvalConfig) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let started = Instant::now();
    let methods = methods
        .iter()
        .map(|&m| run_baseline(m, dataset, models, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        k_frames: cfg.k_frames,
        seed: cfg.seed,
        query_source: cfg.query_source,
        n_episodes: dataset.len(),
        methods,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
