//! `keyframe`: dataset generation, training, evaluation and gradient audits
//! for the synthetic key-frame sampler.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use keyframe_core::gradsuite::{run_grad_suite, GradFault, GradSuiteOptions};
use keyframe_core::harness::{
    build_datasets, evaluate, joint_train, pretrain_sampler, write_metrics_csv, EvalModels, EvalReport, Method, StepMetrics,
};
use keyframe_core::neuralcore::Checkpoint;
use keyframe_core::usampler::sampler_forward;
use keyframe_core::videoqa_env::{generate_dataset, read_dataset, read_matrix, write_dataset, EpisodeSpec};
use keyframe_core::{PolicyParams, SamplerParams};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "keyframe", version, about = "Synthetic key-frame sampler and query policy trainer")]
#[command(after_help = config::help_text())]
struct Cli {
    /// Flat `key = value` config file; defaults to $KEYFRAME_CONFIG when set.
    #[arg(short, long, global = true, env = "KEYFRAME_CONFIG")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training set, its hard subset and the held-out set.
    Gen,
    /// Pre-train the sampler with difficulty-aware REINFORCE.
    Pretrain,
    /// Jointly train the query policy and the sampler.
    Train,
    /// Evaluate the configured methods on the held-out set.
    Eval,
    /// Print evaluation reports side by side.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Finite-difference audit of every analytic gradient.
    Gradcheck {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Score every frame of a similarity matrix with the pre-trained sampler.
    Score {
        simmat: PathBuf,
        /// Sampler checkpoint; defaults to `sampler_checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the resolved configuration.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    match cli.command {
        Command::Gen => cmd_gen(&cfg)?,
        Command::Pretrain => cmd_pretrain(&cfg)?,
        Command::Train => cmd_train(&cfg)?,
        Command::Eval => cmd_eval(&cfg)?,
        Command::Compare { reports } => cmd_compare(&reports)?,
        Command::Gradcheck { inject_fault } => return cmd_gradcheck(inject_fault),
        Command::Score { simmat, checkpoint } => cmd_score(&cfg, &simmat, checkpoint)?,
        Command::Config => print!("{}", cfg.to_text()),
    }
    Ok(ExitCode::SUCCESS)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig, key: &str) -> Result<Vec<EpisodeSpec>> {
    let path = cfg.path(key);
    if !path.exists() {
        bail!("config key `{key}`: dataset {} does not exist (run `keyframe gen` first)", path.display());
    }
    read_dataset(&path).with_context(|| format!("config key `{key}`: cannot read {}", path.display()))
}

fn train_set(cfg: &RunConfig) -> Result<Vec<EpisodeSpec>> {
    match cfg.get("train_set") {
        "all" => load_dataset(cfg, "dataset"),
        "hard" => load_dataset(cfg, "hard_dataset"),
        other => bail!("config key `train_set`: unknown value {other:?} (expected all or hard)"),
    }
}

fn load_checkpoint(cfg: &RunConfig, key: &str) -> Result<Checkpoint> {
    let path = cfg.path(key);
    if !path.exists() {
        bail!("config key `{key}`: checkpoint {} does not exist", path.display());
    }
    Checkpoint::load(&path).with_context(|| format!("config key `{key}`: cannot read {}", path.display()))
}

fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    ck.save(path).with_context(|| format!("cannot write {}", path.display()))
}

fn metrics_path(cfg: &RunConfig, phase: &str) -> PathBuf {
    cfg.path("out_dir").join("metrics").join(format!("{}_{phase}.csv", cfg.get("run_id")))
}

fn write_metrics(cfg: &RunConfig, phase: &str, rows: &[StepMetrics]) -> Result<PathBuf> {
    let path = metrics_path(cfg, phase);
    ensure_parent(&path)?;
    write_metrics_csv(&path, rows).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let env = cfg.env()?;
    let train = cfg.train()?;
    let n: usize = cfg.parse("n_episodes")?;
    let n_eval: usize = cfg.parse("n_eval_episodes")?;
    let eval_first: u64 = cfg.parse("eval_first_id")?;
    if eval_first < n as u64 {
        bail!("config key `eval_first_id`: {eval_first} overlaps the {n} training episode ids");
    }
    let data = build_datasets(&env, 0, n, train.k_frames, train.pass_rate_trials, &train.oracle)?;
    let held_out = generate_dataset(&env, eval_first, n_eval)?;
    for (key, set) in [("dataset", &data.all), ("hard_dataset", &data.hard), ("eval_dataset", &held_out)] {
        let path = cfg.path(key);
        ensure_parent(&path)?;
        write_dataset(&path, set).with_context(|| format!("config key `{key}`: cannot write {}", path.display()))?;
        println!("{key}: {} episodes -> {}", set.len(), path.display());
    }
    println!("excluded (every uniform trial correct): {}", data.excluded);
    Ok(())
}

fn cmd_pretrain(cfg: &RunConfig) -> Result<()> {
    let train = cfg.train()?;
    let data = train_set(cfg)?;
    let out = pretrain_sampler(&data, &train, SamplerParams::init_seeded(train.seed))?;
    let path = cfg.path("sampler_checkpoint");
    save_checkpoint(&out.sampler.to_checkpoint(), &path)?;
    let metrics = write_metrics(cfg, "pretrain", &out.metrics)?;
    println!("steps: {}", out.metrics.len());
    println!("sampler -> {}", path.display());
    println!("metrics -> {}", metrics.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let train = cfg.train()?;
    let env = cfg.env()?;
    let data = train_set(cfg)?;
    let sampler = match cfg.get("init_sampler") {
        "pretrained" => SamplerParams::from_checkpoint(&load_checkpoint(cfg, "sampler_checkpoint")?)?,
        "fresh" => SamplerParams::init_seeded(train.seed),
        other => bail!("config key `init_sampler`: unknown value {other:?} (expected pretrained or fresh)"),
    };
    let policy = PolicyParams::prior(env.vocab_size, train.policy_gain);
    let out = joint_train(&data, &train, policy, sampler)?;
    let policy_path = cfg.path("policy_checkpoint");
    let sampler_path = cfg.path("joint_sampler_checkpoint");
    save_checkpoint(&out.policy.to_checkpoint(), &policy_path)?;
    save_checkpoint(&out.sampler.to_checkpoint(), &sampler_path)?;
    let metrics = write_metrics(cfg, "joint", &out.metrics)?;
    println!("steps: {}", out.metrics.len());
    println!("policy -> {}", policy_path.display());
    println!("sampler -> {}", sampler_path.display());
    println!("metrics -> {}", metrics.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let eval_cfg = cfg.eval()?;
    let methods = cfg.methods()?;
    let data = load_dataset(cfg, "eval_dataset")?;
    let needs = |m: Method| methods.contains(&m);
    let frozen = if needs(Method::LearnedFrozen) {
        Some(SamplerParams::from_checkpoint(&load_checkpoint(cfg, "sampler_checkpoint")?)?)
    } else {
        None
    };
    let (joint_policy, joint_sampler) = if needs(Method::LearnedJoint) {
        (
            Some(PolicyParams::from_checkpoint(&load_checkpoint(cfg, "policy_checkpoint")?)?),
            Some(SamplerParams::from_checkpoint(&load_checkpoint(cfg, "joint_sampler_checkpoint")?)?),
        )
    } else {
        (None, None)
    };
    let models = EvalModels {
        base_policy: None,
        frozen_sampler: frozen.as_ref(),
        joint_policy: joint_policy.as_ref(),
        joint_sampler: joint_sampler.as_ref(),
    };
    let report = evaluate(&data, &methods, &models, &eval_cfg)?;
    print_reports(&[("report".to_string(), report.clone())]);
    let path = cfg.path("report");
    ensure_parent(&path)?;
    report.write(&path).with_context(|| format!("config key `report`: cannot write {}", path.display()))?;
    println!("report -> {} ({:.1}s)", path.display(), report.wall_clock_secs);
    Ok(())
}

fn print_reports(reports: &[(String, EvalReport)]) {
    let mut header = format!("{:<15}", "method");
    for (name, _) in reports {
        header.push_str(&format!(" {:>22}", name));
    }
    println!("{header}");
    let mut methods: Vec<Method> = Vec::new();
    for (_, r) in reports {
        for m in &r.methods {
            if !methods.contains(&m.method) {
                methods.push(m.method);
            }
        }
    }
    for m in methods {
        let mut line = format!("{:<15}", m.as_str());
        for (_, r) in reports {
            match r.method(m) {
                Some(x) => line.push_str(&format!(" acc={:.3} cov={:.3}", x.accuracy, x.coverage_mean)),
                None => line.push_str(&format!(" {:>22}", "-")),
            }
        }
        println!("{line}");
    }
}

fn cmd_compare(paths: &[PathBuf]) -> Result<()> {
    let reports = paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            EvalReport::read(p).with_context(|| format!("cannot read report {}", p.display())).map(|r| (name, r))
        })
        .collect::<Result<Vec<_>>>()?;
    print_reports(&reports);
    Ok(())
}

fn cmd_gradcheck(inject_fault: bool) -> Result<ExitCode> {
    let opts = GradSuiteOptions {
        fault: inject_fault.then_some(GradFault::BiasGradient),
        ..GradSuiteOptions::default()
    };
    let report = run_grad_suite(&opts)?;
    print!("{}", report.to_text());
    println!("max relative error {:.3e} (tolerance {:.0e})", report.max_rel_error(), report.tolerance);
    if report.passed() {
        println!("gradcheck passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: gradcheck failed");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_score(cfg: &RunConfig, simmat: &Path, checkpoint: Option<PathBuf>) -> Result<()> {
    let ck = match checkpoint {
        Some(p) => Checkpoint::load(&p).with_context(|| format!("cannot read checkpoint {}", p.display()))?,
        None => load_checkpoint(cfg, "sampler_checkpoint")?,
    };
    let sampler = SamplerParams::from_checkpoint(&ck)?;
    let s = read_matrix(simmat).with_context(|| format!("cannot read similarity matrix {}", simmat.display()))?;
    let (scores, _) = sampler_forward(&sampler, &s)?;
    let mut out = String::with_capacity(scores.scores.len() * 24);
    for v in &scores.scores {
        out.push_str(&format!("{v:e}\n"));
    }
    print!("{out}");
    Ok(())
}
