use std::collections::BTreeMap;

use crate::error::Result;
use crate::videoqa_env::{estimate_pass_rate, generate_dataset, EnvConfig, EpisodeSpec, OracleConfig};

/// Generated training data: every question with its pass rate, all-pass
/// questions removed, and the hardest question of each group.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub all: Vec<EpisodeSpec>,
    pub hard: Vec<EpisodeSpec>,
    /// Questions dropped because every uniform trial answered them.
    pub excluded: usize,
}

/// Generates `count` episodes and annotates each with its uniform-sampling pass rate.
pub fn build_datasets(
    env: &EnvConfig,
    first_id: u64,
    count: usize,
    k: usize,
    trials: usize,
    oracle: &OracleConfig,
) -> Result<Datasets> {
    let mut all = Vec::with_capacity(count);
    let mut excluded = 0;
    for mut ep in generate_dataset(env, first_id, count)? {
        let rate = estimate_pass_rate(&ep, k, trials, oracle)?;
        if rate.excluded {
            excluded += 1;
            continue;
        }
        ep.pass_rate = Some(rate.c);
        all.push(ep);
    }
    let hard = hard_subset(&all);
    Ok(Datasets { all, hard, excluded })
}

/// Lowest-pass-rate question of every group, ties to the lower episode id.
pub fn hard_subset(episodes: &[EpisodeSpec]) -> Vec<EpisodeSpec> {
    let mut best: BTreeMap<u64, &EpisodeSpec> = BTreeMap::new();
    for ep in episodes {
        let c = ep.pass_rate.unwrap_or(f64::INFINITY);
        best.entry(ep.group_id)
            .and_modify(|cur| {
                let cur_c = cur.pass_rate.unwrap_or(f64::INFINITY);
                if c < cur_c || (c == cur_c && ep.episode_id < cur.episode_id) {
                    *cur = ep;
                }
            })
            .or_insert(ep);
    }
    best.into_values().cloned().collect()
}
