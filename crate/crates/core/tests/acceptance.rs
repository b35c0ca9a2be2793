//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use keyframe_core::gradsuite::{run_grad_suite, GradSuiteOptions};
use keyframe_core::harness::{
    build_datasets, evaluate, first_reach, joint_train, pretrain_sampler, quartile_means, smooth, EvalConfig, EvalModels, EvalReport,
    Method, QuerySource, TrainConfig,
};
use keyframe_core::query_policy::{grpo_update, policy_forward, sample_queries, sample_queries_with_fault, GrpoSample, QueryFault};
use keyframe_core::neuralcore::AdamState;
use keyframe_core::rl_core::{compute_rewards, difficulty_advantage, group_advantages, informativeness_reward, DifficultyAdvantageConfig};
use keyframe_core::rng::stream;
use keyframe_core::usampler::{draw_logprob, reinforce_backward, sample_without_replacement, sampler_forward};
use keyframe_core::videoqa_env::{generate_dataset, synthesize_similarity, EnvConfig, OracleConfig};
use keyframe_core::{DrawOptions, EpisodeSpec, Event, PolicyParams, SamplerParams, SimilarityMatrix};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

const SAMPLING_SEEDS: u64 = 20;
const SAMPLING_DRAWS: usize = 100_000;
const SAMPLING_SUM_TOL: f64 = 1e-9;
const SAMPLING_BANDS: f64 = 3.0;
const SAMPLING_SECS: f64 = 30.0;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SECS: f64 = 120.0;
const PRETRAIN_GAP: f64 = 0.10;
const PRETRAIN_SECS: f64 = 600.0;
const ORDER_GAP: f64 = 0.02;
const ORDER_SEEDS: [u64; 3] = [42, 1, 2];
const GROWTH: f64 = 0.05;
const REWARD_TARGET: f64 = 0.6;
const SMOOTH_WINDOW: usize = 10;
const CHI_SQUARE_P: f64 = 1e-3;
/// Per-cell probability of leaving a 3-SE band under the normal approximation.
const BAND_MISS_RATE: f64 = 0.0027;
const TRAIN_EPISODES: usize = 500;
const EVAL_FIRST_ID: u64 = 1_000_000;
const EVAL_EPISODES: usize = 3000;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

fn report(v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {} {}: {} ({:.1}s)", v.id, v.name, v.detail, v.secs);
}

fn sampling_equivalence() -> Verdict {
    let t0 = Instant::now();
    let opts = DrawOptions::default();
    let (mut worst_sum, mut worst_oracle, mut bad, mut cells) = (0.0f64, 0.0f64, 0usize, 0usize);
    for seed in 0..SAMPLING_SEEDS {
        let mut rng = stream(seed, &[0xacc1]);
        let n_f = rng.random_range(2..=8usize);
        let k = rng.random_range(1..=n_f.min(3));
        let normal = Normal::new(0.0, 1.5).unwrap();
        let scores: Vec<f64> = (0..n_f).map(|_| normal.sample(&mut rng)).collect();
        let oracle = common::enumerate_draws(&scores, k, opts.temperature);
        let mut total = 0.0;
        for (tuple, p) in &oracle {
            let lib = draw_logprob(&scores, tuple, &opts).unwrap().1.exp();
            worst_oracle = worst_oracle.max((lib - p).abs());
            total += lib;
        }
        worst_sum = worst_sum.max((total - 1.0).abs());
        let counts = common::draw_counts(&scores, k, &opts, SAMPLING_DRAWS, seed);
        let (b, c) = common::band_exceedances(&oracle, &counts, SAMPLING_DRAWS, SAMPLING_BANDS);
        bad += b;
        cells += c;
    }
    // Exceedances are a Binomial(cells, miss rate) count when the sampler is exact.
    let tail = if bad == 0 {
        1.0
    } else {
        Binomial::new(BAND_MISS_RATE, cells as u64).unwrap().sf(bad as u64 - 1)
    };
    let secs = t0.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "sampling oracle equivalence",
        pass: worst_sum <= SAMPLING_SUM_TOL && worst_oracle <= SAMPLING_SUM_TOL && tail > 1e-3 && secs < SAMPLING_SECS,
        detail: format!(
            "max |sum-1|={worst_sum:.2e} max |lib-oracle|={worst_oracle:.2e} band exceedances {bad}/{cells} (chance tail p={tail:.3})"
        ),
        secs,
    }
}

fn gradient_fidelity() -> Verdict {
    let t0 = Instant::now();
    let opts = GradSuiteOptions {
        tolerance: GRAD_TOL,
        ..GradSuiteOptions::default()
    };
    let rep = run_grad_suite(&opts).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let skipped: usize = rep.entries.iter().map(|e| e.kink_skipped).sum();
    Verdict {
        id: 2,
        name: "gradient fidelity",
        pass: rep.passed() && rep.max_rel_error() < GRAD_TOL && secs < GRAD_SECS,
        detail: format!(
            "{} checks, max rel error {:.2e}, kink-skipped coords {skipped}",
            rep.entries.len(),
            rep.max_rel_error()
        ),
        secs,
    }
}

fn reward_arithmetic() -> Verdict {
    let t0 = Instant::now();
    let s = SimilarityMatrix::new(2, 2, vec![0.05, 0.6, 0.3, 0.6]).unwrap();
    let info = informativeness_reward(&s, 10.0).unwrap();
    let adv = group_advantages(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0], 1e-8).unwrap();
    let want_adv = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0];
    let cfg = DifficultyAdvantageConfig::default();
    let diff: Vec<(f64, f64)> = [0.0, 0.25, 0.5]
        .iter()
        .map(|&c| (difficulty_advantage(c, true, &cfg).unwrap(), difficulty_advantage(c, false, &cfg).unwrap()))
        .collect();
    let want_diff = [(10.0, 0.0), (4.0, -4.0 / 3.0), (2.0, -2.0)];
    let pass = info == 0.05 && adv == want_adv && diff == want_diff;
    Verdict {
        id: 3,
        name: "reward arithmetic",
        pass,
        detail: format!("info={info} advantages={adv:?} difficulty={diff:?}"),
        secs: t0.elapsed().as_secs_f64(),
    }
}

fn accuracy(rep: &EvalReport, m: Method) -> f64 {
    rep.method(m).map(|r| r.accuracy).unwrap_or(f64::NAN)
}

struct SeedRun {
    seed: u64,
    report: EvalReport,
    relevant: Option<EvalReport>,
    pretrain_secs: f64,
    joint_rewards: Vec<f64>,
    fresh_rewards: Option<Vec<f64>>,
}

fn train_seed(seed: u64, with_extras: bool) -> SeedRun {
    let env = EnvConfig { seed, ..EnvConfig::default() };
    let cfg = TrainConfig { seed, ..TrainConfig::benchmark() };
    let data = build_datasets(&env, 0, TRAIN_EPISODES, cfg.k_frames, cfg.pass_rate_trials, &cfg.oracle).unwrap();
    let eval_set = generate_dataset(&env, EVAL_FIRST_ID, EVAL_EPISODES).unwrap();

    let t0 = Instant::now();
    let pre = pretrain_sampler(&data.all, &cfg, SamplerParams::init_seeded(seed)).unwrap();
    let pretrain_secs = t0.elapsed().as_secs_f64();

    let prior = PolicyParams::prior(env.vocab_size, cfg.policy_gain);
    let joint = joint_train(&data.all, &cfg, prior.clone(), pre.sampler.clone()).unwrap();
    let models = EvalModels {
        base_policy: None,
        frozen_sampler: Some(&pre.sampler),
        joint_policy: Some(&joint.policy),
        joint_sampler: Some(&joint.sampler),
    };
    let mut ecfg = EvalConfig::from_train(&cfg);
    let report = evaluate(&eval_set, &Method::ALL, &models, &ecfg).unwrap();

    let (relevant, fresh_rewards) = if with_extras {
        ecfg.query_source = QuerySource::Relevant;
        let rel = evaluate(&eval_set, &[Method::Uniform, Method::LearnedFrozen], &models, &ecfg).unwrap();
        let fresh = joint_train(&data.all, &cfg, prior, SamplerParams::init_seeded(seed)).unwrap();
        (Some(rel), Some(fresh.metrics.iter().map(|m| m.reward_mean).collect()))
    } else {
        (None, None)
    };
    SeedRun {
        seed,
        report,
        relevant,
        pretrain_secs,
        joint_rewards: joint.metrics.iter().map(|m| m.reward_mean).collect(),
        fresh_rewards,
    }
}

fn pretraining_efficacy(run: &SeedRun) -> Verdict {
    let rel = run.relevant.as_ref().expect("seed 42 carries the relevant-query report");
    let (learned, uniform) = (accuracy(rel, Method::LearnedFrozen), accuracy(rel, Method::Uniform));
    let (p_learned, p_uniform) = (accuracy(&run.report, Method::LearnedFrozen), accuracy(&run.report, Method::Uniform));
    Verdict {
        id: 4,
        name: "pre-training efficacy",
        pass: learned - uniform >= PRETRAIN_GAP && run.pretrain_secs < PRETRAIN_SECS,
        detail: format!(
            "seed {} relevant queries: learned_frozen {learned:.3} uniform {uniform:.3} gap {:.3}; policy queries: {p_learned:.3} vs {p_uniform:.3}",
            run.seed,
            learned - uniform
        ),
        secs: run.pretrain_secs,
    }
}

fn joint_ordering(runs: &[SeedRun], secs: f64) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let a = [Method::LearnedJoint, Method::LearnedFrozen, Method::TopkAvg, Method::Uniform].map(|m| accuracy(&run.report, m));
        let ordered = a[0] >= a[1] && a[1] > a[2] && a[2] > a[3];
        let gaps = a.windows(2).all(|w| w[0] - w[1] >= ORDER_GAP);
        pass &= ordered && gaps;
        parts.push(format!("seed {}: joint {:.3} frozen {:.3} topk_avg {:.3} uniform {:.3}", run.seed, a[0], a[1], a[2], a[3]));
    }
    Verdict {
        id: 5,
        name: "joint-evolution ordering",
        pass,
        detail: parts.join("; "),
        secs,
    }
}

fn reward_growth(run: &SeedRun) -> Verdict {
    let t0 = Instant::now();
    let fresh = run.fresh_rewards.as_ref().expect("seed 42 carries the fresh-init run");
    let (first, last) = quartile_means(&run.joint_rewards).unwrap();
    let reach = |r: &[f64]| first_reach(&smooth(r, SMOOTH_WINDOW), REWARD_TARGET);
    let (pre, cold) = (reach(&run.joint_rewards), reach(fresh));
    let faster = match (pre, cold) {
        (Some(p), Some(c)) => p < c,
        (Some(_), None) => true,
        _ => false,
    };
    let show = |r: Option<usize>| r.map_or("never".to_string(), |s| s.to_string());
    Verdict {
        id: 6,
        name: "reward-curve growth",
        pass: last - first >= GROWTH && faster,
        detail: format!(
            "seed {} quartile reward {first:.3} -> {last:.3} (+{:.3}); steps to {REWARD_TARGET}: pretrained {} fresh {}",
            run.seed,
            last - first,
            show(pre),
            show(cold)
        ),
        secs: t0.elapsed().as_secs_f64(),
    }
}

fn degenerate_inputs() -> Verdict {
    let t0 = Instant::now();
    let opts = DrawOptions::default();

    let counts = common::draw_counts(&[0.0; 6], 2, &opts, SAMPLING_DRAWS, 7);
    let stat = common::chi_square_uniform(&counts, 30, SAMPLING_DRAWS);
    let p = ChiSquared::new(29.0).unwrap().sf(stat);

    let ep = EpisodeSpec {
        episode_id: 0,
        group_id: 0,
        n_frames: 64,
        hop_count: 1,
        events: vec![Event { concept_id: 2, start: 30, end: 36, salience: 0.9 }],
        vocab_size: 16,
        hint: (0..16).map(|i| if i == 2 { 1.0 } else { 0.0 }).collect(),
        correct_option: 0,
        pass_rate: Some(0.0),
    };
    let mut rng = stream(3, &[]);

    // Sampler: a zero advantage yields an all-zero gradient, and a zero stream leaves weights untouched.
    let sampler = SamplerParams::init_seeded(4);
    let s = synthesize_similarity(&ep, &[2], 0.02, &mut rng).unwrap();
    let (scores, cache) = sampler_forward(&sampler, &s).unwrap();
    let draw = sample_without_replacement(&scores.scores, 8, &opts, &mut rng).unwrap();
    let zero_grad = reinforce_backward(&sampler, &cache, &draw, 0.0, &opts).unwrap().is_zero();
    let silent = TrainConfig {
        oracle: OracleConfig { p_hit: 1e-300, chance_floor: 0.0, rng_seed: 0 },
        pretrain_epochs: 2,
        ..TrainConfig::benchmark()
    };
    let pre = pretrain_sampler(&[ep.clone(), ep.clone()], &silent, sampler.clone()).unwrap();
    let sampler_same = bits(&pre.sampler.flat()) == bits(&sampler.flat());

    // Policy: a group with all-zero advantages is a no-op step.
    let mut policy = PolicyParams::prior(16, 2.0);
    let before = policy.flat();
    let logits = policy_forward(&policy, &ep.hint).unwrap();
    let group: Vec<GrpoSample> = (0..8)
        .map(|_| {
            let q = sample_queries(&logits, 2, &opts, &mut rng).unwrap();
            GrpoSample { hint: ep.hint.clone(), old_logprob: q.total_logprob, queries: q, advantage: 0.0 }
        })
        .collect();
    let mut adam = AdamState::new(0.1, &policy.buffer_sizes());
    grpo_update(&mut policy, &mut adam, &group, 8, 0.2, &opts).unwrap();
    let policy_same = bits(&policy.flat()) == bits(&before);

    let bad = sample_queries_with_fault(&logits, 2, &opts, &mut rng, QueryFault::DuplicateFirst).unwrap();
    let format = compute_rewards(&bad, &s, true, 10.0).unwrap().format;
    let flat = SimilarityMatrix::new(2, 64, vec![0.4; 128]).unwrap();
    let flat_info = informativeness_reward(&flat, 10.0).unwrap();

    Verdict {
        id: 7,
        name: "degenerate inputs",
        pass: p > CHI_SQUARE_P && zero_grad && sampler_same && policy_same && format == 0.0 && flat_info == 0.0,
        detail: format!(
            "equal-score chi-square p={p:.3}; zero-advantage sampler grad zero {zero_grad}, sampler unchanged {sampler_same}, policy unchanged {policy_same}; malformed format reward {format}; flat info reward {flat_info}"
        ),
        secs: t0.elapsed().as_secs_f64(),
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the default harness are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut verdicts = vec![sampling_equivalence(), gradient_fidelity(), reward_arithmetic()];
    verdicts.iter().for_each(report);

    let t_train = Instant::now();
    let runs: Vec<SeedRun> = ORDER_SEEDS.iter().map(|&s| train_seed(s, s == ORDER_SEEDS[0])).collect();
    let train_secs = t_train.elapsed().as_secs_f64();
    let tail = [
        pretraining_efficacy(&runs[0]),
        joint_ordering(&runs, train_secs),
        reward_growth(&runs[0]),
        degenerate_inputs(),
    ];
    tail.iter().for_each(report);
    verdicts.extend(tail);

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        verdicts.len() - failed.len(),
        verdicts.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
