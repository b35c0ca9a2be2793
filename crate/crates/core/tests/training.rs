use keyframe_core::harness::{joint_train, PretrainQueries, pretrain_sampler, select_frames, Method, TrainConfig};
use keyframe_core::usampler::{greedy_select, sampler_forward};
use keyframe_core::videoqa_env::{coverage_fraction, generate_dataset, synthesize_similarity, EnvConfig};
use keyframe_core::rng::stream;
use keyframe_core::{DrawOptions, EpisodeSpec, Event, PolicyParams, SamplerParams};

fn one_event_episode() -> EpisodeSpec {
    EpisodeSpec {
        episode_id: 0,
        group_id: 0,
        n_frames: 128,
        hop_count: 1,
        events: vec![Event { concept_id: 3, start: 77, end: 81, salience: 0.8 }],
        vocab_size: 16,
        hint: {
            let mut h = vec![0.0; 16];
            h[3] = 1.0;
            h
        },
        correct_option: 1,
        pass_rate: Some(0.25),
    }
}

#[test]
fn single_episode_overfit_covers_the_event() {
    let ep = one_event_episode();
    let cfg = TrainConfig {
        k_frames: 2,
        batch_size: 1,
        pretrain_epochs: 500,
        pretrain_draws: 4,
        pretrain_queries: PretrainQueries::Relevant,
        ..TrainConfig::benchmark()
    };
    let init = SamplerParams::init_seeded(11);
    let s = synthesize_similarity(&ep, &[3], cfg.sim_noise, &mut stream(5, &[])).unwrap();
    let out = pretrain_sampler(std::slice::from_ref(&ep), &cfg, init).unwrap();
    assert_eq!(out.metrics.len(), 500);
    let after = greedy_select(&sampler_forward(&out.sampler, &s).unwrap().0.scores, 2, &DrawOptions::default()).unwrap();
    assert_eq!(coverage_fraction(&ep, &after.indices), 1.0, "{:?}", after.indices);
}

#[test]
fn topk_average_concentrates_on_the_taller_plateau() {
    let mut ep = one_event_episode();
    ep.hop_count = 2;
    ep.events = vec![
        Event { concept_id: 3, start: 20, end: 28, salience: 1.0 },
        Event { concept_id: 5, start: 90, end: 98, salience: 0.5 },
    ];
    let s = synthesize_similarity(&ep, &[3, 5], 0.0, &mut stream(0, &[])).unwrap();
    let picked = select_frames(Method::TopkAvg, &s, None, 4).unwrap();
    assert!(picked.iter().all(|&f| (20..28).contains(&f)), "{picked:?}");
    assert_eq!(coverage_fraction(&ep, &picked), 0.5);
}

#[test]
fn pretrained_sampler_feeds_joint_training() {
    let env = EnvConfig::default();
    let mut eps = generate_dataset(&env, 0, 8).unwrap();
    for ep in &mut eps {
        ep.pass_rate = Some(0.5);
    }
    let cfg = TrainConfig {
        batch_size: 4,
        group_size: 4,
        pretrain_epochs: 1,
        joint_epochs: 1,
        pretrain_draws: 2,
        ..TrainConfig::benchmark()
    };
    let pre = pretrain_sampler(&eps, &cfg, SamplerParams::init_seeded(1)).unwrap();
    assert_eq!(pre.metrics.len(), 2);
    let joint = joint_train(&eps, &cfg, PolicyParams::prior(16, cfg.policy_gain), pre.sampler.clone()).unwrap();
    assert_eq!(joint.metrics.len(), 2);
    assert!(joint.metrics.iter().all(|m| (0.0..=1.0).contains(&m.reward_mean)));
}
