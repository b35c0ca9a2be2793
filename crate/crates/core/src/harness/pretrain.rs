use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::metrics::{mean, population_std, StepMetrics};
use super::{PretrainQueries, TrainConfig};
use crate::error::{Error, Result};
use crate::neuralcore::{adam_step, AdamState};
use crate::query_policy::{policy_forward, sample_queries, PolicyParams, QuerySet};
use crate::rl_core::{compute_rewards, difficulty_advantage};
use crate::rng::{domain, stream};
use crate::usampler::{logprob_grad, sample_without_replacement, sampler_backward, sampler_forward, SamplerGrads, SamplerParams};
use crate::videoqa_env::{answer_oracle, synthesize_similarity, EpisodeSpec, MAX_QUERIES};

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub sampler: SamplerParams,
    pub metrics: Vec<StepMetrics>,
}

/// One Adam descent step; an all-zero gradient leaves everything untouched.
pub(crate) fn apply_sampler_gradient(params: &mut SamplerParams, state: &mut AdamState, grads: &SamplerGrads) -> Result<bool> {
    if grads.is_zero() {
        return Ok(false);
    }
    adam_step(&mut params.buffers_mut(), &grads.buffers(), state)?;
    Ok(true)
}

pub(crate) fn draw_query_count(config: &TrainConfig, vocab: usize, key: &[u64]) -> usize {
    let hi = config.n_q_max.min(vocab);
    let lo = config.n_q_min.min(hi);
    stream(config.seed, key).random_range(lo..=hi)
}

/// Query list for one pre-training episode.
fn pretrain_queries(episode: &EpisodeSpec, config: &TrainConfig, epoch: u64) -> Result<Vec<usize>> {
    let relevant = episode.relevant_concepts();
    let mut rng = stream(config.seed, &[domain::SHUFFLE, domain::PRETRAIN, epoch, episode.episode_id]);
    let n_q = draw_query_count(
        config,
        episode.vocab_size,
        &[domain::QUERY_COUNT, domain::PRETRAIN, epoch, episode.episode_id],
    );
    let mut queries = match config.pretrain_queries {
        PretrainQueries::Relevant => relevant,
        PretrainQueries::RelevantPadded => {
            let target = n_q.max(relevant.len()).min(MAX_QUERIES);
            let others: Vec<usize> = (0..episode.vocab_size).filter(|c| !relevant.contains(c)).collect();
            let extra = (target - relevant.len()).min(others.len());
            let mut q = relevant;
            q.extend(index::sample(&mut rng, others.len(), extra).iter().map(|i| others[i]));
            q
        }
        PretrainQueries::BasePolicy => {
            let prior = PolicyParams::prior(episode.vocab_size, config.policy_gain);
            let logits = policy_forward(&prior, &episode.hint)?;
            sample_queries(&logits, n_q, &config.draw_options(), &mut rng)?.concepts
        }
    };
    queries.shuffle(&mut rng);
    Ok(queries)
}

fn order(n: usize, seed: u64, tag: u64, epoch: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, &[domain::SHUFFLE, tag, epoch]));
    idx
}

/// Fits the sampler alone with difficulty-weighted REINFORCE.
pub fn pretrain_sampler(dataset: &[EpisodeSpec], config: &TrainConfig, init: SamplerParams) -> Result<PretrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate(dataset[0].n_frames)?;
    for ep in dataset {
        match ep.pass_rate {
            None => return Err(Error::Config(format!("episode {} has no pass rate", ep.episode_id))),
            Some(c) if !(0.0..1.0).contains(&c) => return Err(Error::PassRate(c)),
            Some(_) => {}
        }
    }
    let opts = config.draw_options();
    let mut sampler = init;
    let mut adam = AdamState::new(config.lr_sampler, &sampler.buffer_sizes());
    let mut metrics = Vec::new();

    for epoch in 0..config.pretrain_epochs as u64 {
        for batch in order(dataset.len(), config.seed, domain::PRETRAIN, epoch).chunks(config.batch_size) {
            let mut grads = SamplerGrads::zeros_like(&sampler);
            let (mut totals, mut accs, mut formats, mut infos, mut advs) = (vec![], vec![], vec![], vec![], vec![]);
            for &i in batch {
                let ep = &dataset[i];
                let c = ep.pass_rate.expect("checked above");
                let queries = pretrain_queries(ep, config, epoch)?;
                let s = synthesize_similarity(
                    ep,
                    &queries,
                    config.sim_noise,
                    &mut stream(config.seed, &[domain::SIMILARITY, domain::PRETRAIN, epoch, ep.episode_id]),
                )?;
                let query_set = QuerySet {
                    concepts: queries,
                    total_logprob: 0.0,
                    well_formed: true,
                };
                let (scores, cache) = sampler_forward(&sampler, &s)?;
                let mut rng = stream(config.seed, &[domain::ROLLOUT, domain::PRETRAIN, epoch, ep.episode_id]);
                let mut g_scores = vec![0.0; scores.scores.len()];
                for d in 0..config.pretrain_draws as u64 {
                    let draw = sample_without_replacement(&scores.scores, config.k_frames, &opts, &mut rng)?;
                    let correct = answer_oracle(ep, &draw.indices, &config.oracle, &[domain::PRETRAIN, config.seed, epoch, d])?;
                    let r = compute_rewards(&query_set, &s, correct, config.tau_info)?;
                    let a = difficulty_advantage(c, correct, &config.difficulty)?;
                    if a != 0.0 {
                        let lg = logprob_grad(&scores.scores, &draw.indices, &opts)?;
                        let scale = -a / config.pretrain_draws as f64;
                        for (g, l) in g_scores.iter_mut().zip(lg) {
                            *g += scale * l;
                        }
                    }
                    totals.push(r.total);
                    accs.push(r.acc);
                    formats.push(r.format);
                    infos.push(r.info);
                    advs.push(a);
                }
                if g_scores.iter().any(|&g| g != 0.0) {
                    let g = sampler_backward(&sampler, &cache, &g_scores)?;
                    grads.add_scaled(&g, 1.0 / batch.len() as f64);
                }
            }
            apply_sampler_gradient(&mut sampler, &mut adam, &grads)?;
            metrics.push(StepMetrics {
                step: metrics.len(),
                reward_mean: mean(&totals),
                acc_mean: mean(&accs),
                format_mean: mean(&formats),
                info_mean: mean(&infos),
                advantage_std: population_std(&advs),
            });
        }
    }
    Ok(PretrainOutcome { sampler, metrics })
}
