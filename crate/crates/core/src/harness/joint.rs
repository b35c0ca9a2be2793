use std::collections::HashMap;

use super::metrics::{mean, population_std, StepMetrics};
use super::pretrain::{apply_sampler_gradient, draw_query_count};
use super::{SamplerAdvantage, TrainConfig};
use crate::error::{Error, Result};
use crate::neuralcore::AdamState;
use crate::query_policy::{apply_policy_gradient, grpo_gradient, policy_forward, sample_queries, GrpoSample, PolicyGrads, PolicyParams};
use crate::rl_core::{compute_rewards, group_advantages, ACC_REWARD};
use crate::rng::{domain, stream};
use crate::usampler::{logprob_grad, sample_without_replacement, sampler_backward, sampler_forward, SamplerGrads, SamplerParams};
use crate::videoqa_env::{answer_oracle, synthesize_similarity, EpisodeSpec};
use rand::seq::SliceRandom;

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub policy: PolicyParams,
    pub sampler: SamplerParams,
    pub metrics: Vec<StepMetrics>,
}

/// Trains the query policy and the sampler together on shared rollouts.
///
/// Each question gets `group_size` rollouts from the batch-start snapshot of
/// both models. The policy ascends the clipped group-relative surrogate of the
/// total reward; the sampler descends `-A * log p(draw)` with `A` from the
/// accuracy reward alone.
pub fn joint_train(
    dataset: &[EpisodeSpec],
    config: &TrainConfig,
    policy: PolicyParams,
    sampler: SamplerParams,
) -> Result<JointOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate(dataset[0].n_frames)?;
    if let Some(ep) = dataset.iter().find(|e| e.vocab_size != policy.vocab()) {
        return Err(Error::Config(format!(
            "episode {} has vocabulary {}, policy has {}",
            ep.episode_id,
            ep.vocab_size,
            policy.vocab()
        )));
    }
    let opts = config.draw_options();
    let g_size = config.group_size;
    let (mut policy, mut sampler) = (policy, sampler);
    let mut policy_adam = AdamState::new(config.lr_policy, &policy.buffer_sizes());
    let mut sampler_adam = AdamState::new(config.joint_sampler_lr(), &sampler.buffer_sizes());
    let mut metrics = Vec::new();

    for epoch in 0..config.joint_epochs as u64 {
        let mut idx: Vec<usize> = (0..dataset.len()).collect();
        idx.shuffle(&mut stream(config.seed, &[domain::SHUFFLE, domain::JOINT, epoch]));
        for batch in idx.chunks(config.batch_size) {
            let batch_scale = 1.0 / batch.len() as f64;
            let mut p_grads = PolicyGrads::zeros_like(&policy);
            let mut s_grads = SamplerGrads::zeros_like(&sampler);
            let (mut totals, mut accs, mut formats, mut infos, mut advs) = (vec![], vec![], vec![], vec![], vec![]);
            for &i in batch {
                let ep = &dataset[i];
                let id = ep.episode_id;
                let n_q = draw_query_count(config, ep.vocab_size, &[domain::QUERY_COUNT, domain::JOINT, epoch, id]);
                let logits = policy_forward(&policy, &ep.hint)?;

                // rollouts sharing a query list share one similarity matrix and forward pass
                let mut forwards: HashMap<Vec<usize>, usize> = HashMap::new();
                let mut passes = Vec::new();
                let mut group = Vec::with_capacity(g_size);
                let mut rollout_acc = Vec::with_capacity(g_size);
                let mut rollouts = Vec::with_capacity(g_size);
                for g in 0..g_size as u64 {
                    let mut rng = stream(config.seed, &[domain::ROLLOUT, domain::JOINT, epoch, id, g]);
                    let queries = sample_queries(&logits, n_q, &opts, &mut rng)?;
                    let slot = match forwards.get(&queries.concepts) {
                        Some(&slot) => slot,
                        None => {
                            let s = synthesize_similarity(
                                ep,
                                &queries.concepts,
                                config.sim_noise,
                                &mut stream(config.seed, &[domain::SIMILARITY, domain::JOINT, epoch, id, g]),
                            )?;
                            let (scores, cache) = sampler_forward(&sampler, &s)?;
                            let n = scores.scores.len();
                            passes.push((s, scores, cache, vec![0.0; n]));
                            forwards.insert(queries.concepts.clone(), passes.len() - 1);
                            passes.len() - 1
                        }
                    };
                    let (s, scores, _, _) = &passes[slot];
                    let draw = sample_without_replacement(&scores.scores, config.k_frames, &opts, &mut rng)?;
                    let correct = answer_oracle(ep, &draw.indices, &config.oracle, &[domain::JOINT, config.seed, epoch, g])?;
                    let r = compute_rewards(&queries, s, correct, config.tau_info)?;
                    totals.push(r.total);
                    accs.push(r.acc);
                    formats.push(r.format);
                    infos.push(r.info);
                    rollout_acc.push(r.acc);
                    rollouts.push((slot, draw));
                    group.push(GrpoSample {
                        hint: ep.hint.clone(),
                        old_logprob: queries.total_logprob,
                        queries,
                        advantage: r.total,
                    });
                }

                let rewards: Vec<f64> = group.iter().map(|s| s.advantage).collect();
                let policy_adv = group_advantages(&rewards, config.advantage_eps)?;
                for (s, a) in group.iter_mut().zip(&policy_adv) {
                    s.advantage = *a;
                }
                advs.extend_from_slice(&policy_adv);
                let g = grpo_gradient(&policy, &group, config.clip_eps, &opts)?;
                p_grads.add_scaled(&g, batch_scale);

                let sampler_adv = match config.sampler_advantage {
                    SamplerAdvantage::RawAccuracy => rollout_acc.clone(),
                    SamplerAdvantage::GroupNormalized => group_advantages(
                        &rollout_acc.iter().map(|a| a / ACC_REWARD).collect::<Vec<_>>(),
                        config.advantage_eps,
                    )?,
                };
                for ((slot, draw), a) in rollouts.iter().zip(sampler_adv) {
                    if a == 0.0 {
                        continue;
                    }
                    let pass = &mut passes[*slot];
                    let lg = logprob_grad(&pass.1.scores, &draw.indices, &opts)?;
                    for (acc, l) in pass.3.iter_mut().zip(lg) {
                        *acc += -a * l / g_size as f64;
                    }
                }
                for (_, _, cache, g_scores) in &passes {
                    if g_scores.iter().any(|&v| v != 0.0) {
                        let g = sampler_backward(&sampler, cache, g_scores)?;
                        s_grads.add_scaled(&g, batch_scale);
                    }
                }
            }
            apply_policy_gradient(&mut policy, &mut policy_adam, &p_grads)?;
            apply_sampler_gradient(&mut sampler, &mut sampler_adam, &s_grads)?;
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
    Ok(JointOutcome { policy, sampler, metrics })
}
