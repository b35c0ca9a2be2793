use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};

use super::{EnvConfig, EpisodeSpec, Event};
use crate::error::{Error, Result};
use crate::rng::{domain, stream};

/// Fixed-point-free concept permutation: `map[c]` is the concept a question
/// about `c` tends to be phrased through.
pub fn confusion_map(config: &EnvConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..config.vocab_size).collect();
    order.shuffle(&mut stream(config.seed, &[domain::CONFUSION]));
    let mut map = vec![0; config.vocab_size];
    for i in 0..order.len() {
        map[order[i]] = order[(i + 1) % order.len()];
    }
    map
}

/// Generates episode `episode_id`; deterministic in `(config.seed, episode_id)`.
pub fn generate_episode(config: &EnvConfig, episode_id: u64) -> Result<EpisodeSpec> {
    config.validate()?;
    let mut rng = stream(config.seed, &[domain::EPISODE, episode_id]);

    let hops = WeightedIndex::new(config.hop_weights)
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(&mut rng)
        + 1;
    let concepts = index::sample(&mut rng, config.vocab_size, hops).into_vec();
    let widths: Vec<usize> = (0..hops)
        .map(|_| rng.random_range(config.event_width_min..=config.event_width_max))
        .collect();

    // Uniform non-overlapping placement: choose `hops` gap markers among
    // `free + hops` slots; event i starts after the first i widths plus its gap offset.
    let free = config.n_frames - widths.iter().sum::<usize>();
    let mut markers = index::sample(&mut rng, free + hops, hops).into_vec();
    markers.sort_unstable();
    let mut events = Vec::with_capacity(hops);
    let mut consumed = 0;
    for (i, (&m, &w)) in markers.iter().zip(&widths).enumerate() {
        let start = consumed + (m - i);
        events.push(Event {
            concept_id: concepts[i],
            start,
            end: start + w,
            salience: rng.random_range(config.salience_min..=1.0),
        });
        consumed += w;
    }

    let confusion = confusion_map(config);
    let normal = Normal::new(0.0, config.hint_noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut hint = vec![0.0; config.vocab_size];
    for &c in &concepts {
        hint[c] += 1.0;
        hint[confusion[c]] += config.hint_leak;
    }
    for h in &mut hint {
        *h += normal.sample(&mut rng);
    }

    let episode = EpisodeSpec {
        episode_id,
        group_id: episode_id / config.questions_per_group,
        n_frames: config.n_frames,
        hop_count: hops,
        events,
        vocab_size: config.vocab_size,
        hint,
        correct_option: rng.random_range(0..4u8),
        pass_rate: None,
    };
    debug_assert!(episode.validate().is_ok());
    Ok(episode)
}

/// Episodes `first_id .. first_id + count`.
pub fn generate_dataset(config: &EnvConfig, first_id: u64, count: usize) -> Result<Vec<EpisodeSpec>> {
    (first_id..first_id + count as u64)
        .map(|id| generate_episode(config, id))
        .collect()
}
