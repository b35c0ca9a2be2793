//! Flat `key = value` run configuration.
//!
//! Resolution order: built-in defaults, then the preset named by `preset`,
//! then the config file, then `--set` overrides. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use keyframe_core::harness::{EvalConfig, Method, PretrainQueries, QuerySource, SamplerAdvantage, TrainConfig};
use keyframe_core::rl_core::DifficultyAdvantageConfig;
use keyframe_core::videoqa_env::{EnvConfig, OracleConfig};

pub struct KeySpec {
    pub name: &'static str,
    /// Value stated by the method's authors, where there is one.
    pub published: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, published: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec { name, published, help }
}

pub const KEYS: &[KeySpec] = &[
    key("preset", None, "published | benchmark; benchmark swaps in desk-scale step sizes and schedule"),
    key("seed", None, "global seed for data, training and evaluation"),
    key("run_id", None, "prefix of metric files"),
    key("out_dir", None, "directory for every artifact; `{out_dir}` expands in other paths"),
    key("dataset", None, "annotated training questions"),
    key("hard_dataset", None, "hardest question per group"),
    key("eval_dataset", None, "held-out questions"),
    key("train_set", None, "all | hard; which set pretrain and train read"),
    key("sampler_checkpoint", None, "pretrained sampler"),
    key("policy_checkpoint", None, "jointly trained query policy"),
    key("joint_sampler_checkpoint", None, "jointly trained sampler"),
    key("report", None, "evaluation report"),
    key("n_episodes", None, "training questions generated by gen"),
    key("n_eval_episodes", None, "held-out questions generated by gen"),
    key("eval_first_id", None, "first episode id of the held-out set"),
    key("n_frames", None, "dense frames per video"),
    key("vocab_size", None, "concept vocabulary size"),
    key("hop_weights", None, "relative weights of 1-, 2- and 3-hop questions"),
    key("event_width_min", None, "shortest planted event, in frames"),
    key("event_width_max", None, "longest planted event, in frames"),
    key("hint_noise", None, "std of the hint noise"),
    key("hint_leak", None, "hint mass leaked onto each relevant concept's confusable partner"),
    key("salience_min", None, "lower bound of event salience"),
    key("questions_per_group", None, "questions sharing one synthetic video"),
    key("k_frames", None, "frame budget K"),
    key("batch_size", Some("32"), "questions per optimizer step"),
    key("group_size", Some("8"), "rollouts per question"),
    key("pretrain_epochs", Some("1"), "sampler pre-training epochs"),
    key("joint_epochs", Some("2"), "joint training epochs"),
    key("lr_policy", Some("1e-6"), "query policy Adam step size"),
    key("lr_sampler", Some("1e-5"), "sampler Adam step size"),
    key("lr_sampler_joint", None, "sampler Adam step size during joint training, or none to reuse lr_sampler"),
    key("clip_eps", None, "surrogate clipping range"),
    key("tau_info", Some("10"), "informativeness ratio threshold"),
    key("temperature", Some("1.0"), "rollout sampling temperature"),
    key("top_p", Some("0.9"), "nucleus mass for rollout sampling, or none"),
    key("sim_noise", None, "std of the similarity noise"),
    key("p_hit", None, "answer accuracy with every key event covered"),
    key("chance_floor", None, "answer accuracy with no key event covered"),
    key("oracle_seed", None, "seed of the answer oracle"),
    key("n_q_min", None, "fewest queries per question"),
    key("n_q_max", Some("4"), "most queries per question"),
    key("pretrain_draws", None, "frame draws per pre-training question"),
    key("pretrain_queries", None, "relevant | relevant_padded | base_policy"),
    key("sampler_advantage", None, "raw_accuracy | group_normalized"),
    key("zero_pass_bonus", Some("10"), "sampler advantage for a correct answer at pass rate 0"),
    key("zero_pass_penalty", Some("0"), "sampler advantage for a wrong answer at pass rate 0"),
    key("policy_gain", None, "diagonal gain of the untrained query policy"),
    key("advantage_eps", None, "group std below which advantages are zero"),
    key("pass_rate_trials", Some("8"), "uniform-sampling trials per pass rate"),
    key("init_sampler", None, "pretrained | fresh; sampler initialization for train"),
    key("methods", None, "comma-separated evaluation methods"),
    key("query_source", None, "policy | relevant; where evaluation queries come from"),
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |p| p.to_string())
}

fn pretrain_queries_name(q: PretrainQueries) -> &'static str {
    match q {
        PretrainQueries::Relevant => "relevant",
        PretrainQueries::RelevantPadded => "relevant_padded",
        PretrainQueries::BasePolicy => "base_policy",
    }
}

fn sampler_advantage_name(a: SamplerAdvantage) -> &'static str {
    match a {
        SamplerAdvantage::RawAccuracy => "raw_accuracy",
        SamplerAdvantage::GroupNormalized => "group_normalized",
    }
}

fn defaults(preset: &str) -> Result<BTreeMap<&'static str, String>> {
    let train = match preset {
        "published" => TrainConfig::default(),
        "benchmark" => TrainConfig::benchmark(),
        other => bail!("config key `preset`: unknown preset {other:?} (expected published or benchmark)"),
    };
    let env = EnvConfig::default();
    let hop = env.hop_weights.map(|w| w.to_string()).join(",");
    let methods = Method::ALL.map(|m| m.as_str()).join(",");
    let pairs: Vec<(&'static str, String)> = vec![
        ("preset", preset.to_string()),
        ("seed", env.seed.to_string()),
        ("run_id", "run".into()),
        ("out_dir", "runs".into()),
        ("dataset", "{out_dir}/dataset_all.jsonl".into()),
        ("hard_dataset", "{out_dir}/dataset_hard.jsonl".into()),
        ("eval_dataset", "{out_dir}/dataset_eval.jsonl".into()),
        ("train_set", "all".into()),
        ("sampler_checkpoint", "{out_dir}/sampler_pretrained.ckpt".into()),
        ("policy_checkpoint", "{out_dir}/policy_joint.ckpt".into()),
        ("joint_sampler_checkpoint", "{out_dir}/sampler_joint.ckpt".into()),
        ("report", "{out_dir}/report.json".into()),
        ("n_episodes", "500".into()),
        ("n_eval_episodes", "3000".into()),
        ("eval_first_id", "1000000".into()),
        ("n_frames", env.n_frames.to_string()),
        ("vocab_size", env.vocab_size.to_string()),
        ("hop_weights", hop),
        ("event_width_min", env.event_width_min.to_string()),
        ("event_width_max", env.event_width_max.to_string()),
        ("hint_noise", env.hint_noise.to_string()),
        ("hint_leak", env.hint_leak.to_string()),
        ("salience_min", env.salience_min.to_string()),
        ("questions_per_group", env.questions_per_group.to_string()),
        ("k_frames", train.k_frames.to_string()),
        ("batch_size", train.batch_size.to_string()),
        ("group_size", train.group_size.to_string()),
        ("pretrain_epochs", train.pretrain_epochs.to_string()),
        ("joint_epochs", train.joint_epochs.to_string()),
        ("lr_policy", train.lr_policy.to_string()),
        ("lr_sampler", train.lr_sampler.to_string()),
        ("lr_sampler_joint", fmt_opt(train.lr_sampler_joint)),
        ("clip_eps", train.clip_eps.to_string()),
        ("tau_info", train.tau_info.to_string()),
        ("temperature", train.temperature.to_string()),
        ("top_p", fmt_opt(train.top_p)),
        ("sim_noise", train.sim_noise.to_string()),
        ("p_hit", train.oracle.p_hit.to_string()),
        ("chance_floor", train.oracle.chance_floor.to_string()),
        ("oracle_seed", train.oracle.rng_seed.to_string()),
        ("n_q_min", train.n_q_min.to_string()),
        ("n_q_max", train.n_q_max.to_string()),
        ("pretrain_draws", train.pretrain_draws.to_string()),
        ("pretrain_queries", pretrain_queries_name(train.pretrain_queries).into()),
        ("sampler_advantage", sampler_advantage_name(train.sampler_advantage).into()),
        ("zero_pass_bonus", train.difficulty.zero_pass_bonus.to_string()),
        ("zero_pass_penalty", train.difficulty.zero_pass_penalty.to_string()),
        ("policy_gain", train.policy_gain.to_string()),
        ("advantage_eps", train.advantage_eps.to_string()),
        ("pass_rate_trials", train.pass_rate_trials.to_string()),
        ("init_sampler", "pretrained".into()),
        ("methods", methods),
        ("query_source", "policy".into()),
    ];
    debug_assert_eq!(pairs.len(), KEYS.len());
    Ok(pairs.into_iter().collect())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_assignments(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`, found {line:?}", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    pub fn resolve(assignments: &[(String, String)]) -> Result<Self> {
        for (k, _) in assignments {
            if !KEYS.iter().any(|s| s.name == k) {
                bail!("unknown config key `{k}`");
            }
        }
        let preset = assignments
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map_or("published", |(_, v)| v.as_str());
        let mut values = defaults(preset)?;
        for (k, v) in assignments {
            let slot = values.get_mut(k.as_str()).expect("key validated above");
            *slot = v.clone();
        }
        Ok(Self { values })
    }

    /// Defaults, then `file` if given, then `overrides` (`key=value` each).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut assignments = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
            assignments.extend(parse_assignments(&text, &path.display().to_string())?);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override {o:?} is not `key=value`"))?;
            assignments.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::resolve(&assignments)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    pub fn parse<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.get(key);
        raw.parse::<T>()
            .map_err(|e| anyhow!("config key `{key}`: cannot parse {raw:?}: {e}"))
    }

    /// Like [`Self::parse`], with `none` mapping to `None`.
    pub fn parse_opt<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.get(key) {
            "none" => Ok(None),
            _ => self.parse(key).map(Some),
        }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.get(key).replace("{out_dir}", self.get("out_dir")))
    }

    pub fn env(&self) -> Result<EnvConfig> {
        let hop: Vec<f64> = self
            .get("hop_weights")
            .split(',')
            .map(|w| w.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| anyhow!("config key `hop_weights`: {e}"))?;
        let hop_weights: [f64; 3] = hop
            .try_into()
            .map_err(|_| anyhow!("config key `hop_weights`: expected three comma-separated weights"))?;
        let env = EnvConfig {
            seed: self.parse("seed")?,
            n_frames: self.parse("n_frames")?,
            vocab_size: self.parse("vocab_size")?,
            hop_weights,
            event_width_min: self.parse("event_width_min")?,
            event_width_max: self.parse("event_width_max")?,
            hint_noise: self.parse("hint_noise")?,
            hint_leak: self.parse("hint_leak")?,
            salience_min: self.parse("salience_min")?,
            questions_per_group: self.parse("questions_per_group")?,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn oracle(&self) -> Result<OracleConfig> {
        let o = OracleConfig {
            p_hit: self.parse("p_hit")?,
            chance_floor: self.parse("chance_floor")?,
            rng_seed: self.parse("oracle_seed")?,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let top_p = self.parse_opt("top_p")?;
        let pretrain_queries = match self.get("pretrain_queries") {
            "relevant" => PretrainQueries::Relevant,
            "relevant_padded" => PretrainQueries::RelevantPadded,
            "base_policy" => PretrainQueries::BasePolicy,
            other => bail!("config key `pretrain_queries`: unknown value {other:?}"),
        };
        let sampler_advantage = match self.get("sampler_advantage") {
            "raw_accuracy" => SamplerAdvantage::RawAccuracy,
            "group_normalized" => SamplerAdvantage::GroupNormalized,
            other => bail!("config key `sampler_advantage`: unknown value {other:?}"),
        };
        let train = TrainConfig {
            seed: self.parse("seed")?,
            k_frames: self.parse("k_frames")?,
            batch_size: self.parse("batch_size")?,
            group_size: self.parse("group_size")?,
            pretrain_epochs: self.parse("pretrain_epochs")?,
            joint_epochs: self.parse("joint_epochs")?,
            lr_policy: self.parse("lr_policy")?,
            lr_sampler: self.parse("lr_sampler")?,
            lr_sampler_joint: self.parse_opt("lr_sampler_joint")?,
            clip_eps: self.parse("clip_eps")?,
            tau_info: self.parse("tau_info")?,
            temperature: self.parse("temperature")?,
            top_p,
            sim_noise: self.parse("sim_noise")?,
            oracle: self.oracle()?,
            n_q_min: self.parse("n_q_min")?,
            n_q_max: self.parse("n_q_max")?,
            pretrain_draws: self.parse("pretrain_draws")?,
            pretrain_queries,
            sampler_advantage,
            difficulty: DifficultyAdvantageConfig {
                zero_pass_bonus: self.parse("zero_pass_bonus")?,
                zero_pass_penalty: self.parse("zero_pass_penalty")?,
            },
            policy_gain: self.parse("policy_gain")?,
            advantage_eps: self.parse("advantage_eps")?,
            pass_rate_trials: self.parse("pass_rate_trials")?,
        };
        train.validate(self.parse("n_frames")?)?;
        Ok(train)
    }

    pub fn eval(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            query_source: self.parse::<QuerySource>("query_source")?,
            ..EvalConfig::from_train(&self.train()?)
        })
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.get("methods")
            .split(',')
            .map(|m| m.trim().parse::<Method>().map_err(|e| anyhow!("config key `methods`: {e}")))
            .collect()
    }

    /// Resolved configuration in file syntax.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{} = {}\n", k.name, self.get(k.name))).collect()
    }
}

/// Key listing appended to `--help`.
pub fn help_text() -> String {
    let published = defaults("published").expect("built-in preset");
    let bench = defaults("benchmark").expect("built-in preset");
    let mut out = String::from(
        "Configuration keys (set in the file named by --config or $KEYFRAME_CONFIG, or with --set key=value):\n",
    );
    for k in KEYS {
        let mut line = format!("  {:<26} default {}", k.name, published[k.name]);
        if bench[k.name] != published[k.name] && k.name != "preset" {
            line.push_str(&format!(" (benchmark {})", bench[k.name]));
        }
        if let Some(p) = k.published {
            line.push_str(&format!(" [published {p}]"));
        }
        out.push_str(&format!("{line}\n      {}\n", k.help));
    }
    out
}
