use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use keyframe_core::harness::{EvalReport, Method};
use keyframe_core::videoqa_env::{read_dataset, write_matrix};
use keyframe_core::SimilarityMatrix;

const SMALL: &[&str] = &[
    "n_frames=64",
    "n_episodes=24",
    "n_eval_episodes=16",
    "batch_size=4",
    "group_size=2",
    "pretrain_epochs=1",
    "joint_epochs=1",
    "pretrain_draws=2",
    "pass_rate_trials=4",
];

fn keyframe(dir: &Path, args: &[&str], sets: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_keyframe"));
    cmd.current_dir(dir).env_remove("KEYFRAME_CONFIG");
    cmd.args(args);
    for s in sets {
        cmd.args(["--set", s]);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    o
}

fn config_keys(dir: &Path) -> Vec<String> {
    let out = ok(keyframe(dir, &["config"], &[]));
    stdout(&out)
        .lines()
        .map(|l| l.split(" = ").next().unwrap().to_string())
        .collect()
}

#[test]
fn help_lists_every_key_with_default_and_published_value() {
    let dir = tempfile::tempdir().unwrap();
    let help = stdout(&ok(keyframe(dir.path(), &["--help"], &[])));
    let keys = config_keys(dir.path());
    assert!(keys.len() > 40);
    for k in &keys {
        assert!(help.contains(&format!("  {k} ")), "{k} missing from help");
    }
    assert!(help.contains("[published 1e-6]"));
    assert!(help.contains("[published 32]"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = keyframe(dir.path(), &["config"], &["learning_rate=1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("learning_rate"));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn missing_dataset_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, key) in [("pretrain", "`dataset`"), ("train", "`dataset`"), ("eval", "`eval_dataset`")] {
        let out = keyframe(dir.path(), &[cmd], &["init_sampler=fresh"]);
        assert!(!out.status.success(), "{cmd}");
        let err = stderr(&out);
        assert!(err.contains(key), "{cmd}: {err}");
        assert_eq!(err.lines().count(), 1, "{err}");
    }
}

#[test]
fn config_file_env_var_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "# desk run\npreset = benchmark\nseed = 7\nk_frames = 6\n").unwrap();
    let get = |o: &Output, k: &str| {
        stdout(o)
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{k} = ")).map(str::to_string))
            .unwrap()
    };
    let o = ok(Command::new(env!("CARGO_BIN_EXE_keyframe"))
        .current_dir(dir.path())
        .env("KEYFRAME_CONFIG", &file)
        .args(["config", "--set", "seed=9"])
        .output()
        .unwrap());
    assert_eq!(get(&o, "seed"), "9");
    assert_eq!(get(&o, "k_frames"), "6");
    assert_eq!(get(&o, "batch_size"), "8");
    let o = ok(keyframe(dir.path(), &["--config", file.to_str().unwrap(), "config"], &[]));
    assert_eq!(get(&o, "seed"), "7");
    let o = ok(keyframe(dir.path(), &["config"], &[]));
    assert_eq!(get(&o, "batch_size"), "32");
    assert_eq!(get(&o, "lr_policy"), "0.000001");

    std::fs::write(&file, "seed 7\n").unwrap();
    let o = keyframe(dir.path(), &["--config", file.to_str().unwrap(), "config"], &[]);
    assert!(!o.status.success());
}

#[test]
fn gen_is_deterministic_and_hard_subset_is_hardest_per_group() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(keyframe(a.path(), &["gen"], SMALL));
    ok(keyframe(b.path(), &["gen"], SMALL));
    for f in ["dataset_all.jsonl", "dataset_hard.jsonl", "dataset_eval.jsonl"] {
        let x = std::fs::read(a.path().join("runs").join(f)).unwrap();
        let y = std::fs::read(b.path().join("runs").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let all = read_dataset(&a.path().join("runs/dataset_all.jsonl")).unwrap();
    let hard = read_dataset(&a.path().join("runs/dataset_hard.jsonl")).unwrap();
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for ep in &all {
        let c = ep.pass_rate.unwrap();
        assert!((0.0..1.0).contains(&c));
        groups.entry(ep.group_id).or_default().push(c);
    }
    assert_eq!(hard.len(), groups.len());
    for ep in &hard {
        let mut cs = groups[&ep.group_id].clone();
        cs.sort_by(f64::total_cmp);
        let median = if cs.len() % 2 == 1 {
            cs[cs.len() / 2]
        } else {
            0.5 * (cs[cs.len() / 2 - 1] + cs[cs.len() / 2])
        };
        assert!(ep.pass_rate.unwrap() <= median);
        assert_eq!(ep.pass_rate.unwrap(), cs[0]);
    }
}

#[test]
fn full_pipeline_reports_every_method_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(keyframe(d, &["gen"], SMALL));
    let pre = stdout(&ok(keyframe(d, &["pretrain"], SMALL)));
    assert!(pre.contains("steps: "));
    ok(keyframe(d, &["train"], SMALL));
    let metrics = std::fs::read_to_string(d.join("runs/metrics/run_joint.csv")).unwrap();
    assert!(metrics.starts_with("step,reward_mean"));

    let out = stdout(&ok(keyframe(d, &["eval"], SMALL)));
    for m in Method::ALL {
        let rows = out.lines().filter(|l| l.starts_with(&format!("{} ", m.as_str()))).count();
        assert_eq!(rows, 1, "{m}:\n{out}");
    }
    let first = std::fs::read(d.join("runs/report.json")).unwrap();
    let report = EvalReport::read(&d.join("runs/report.json")).unwrap();
    assert_eq!(report.methods.len(), 5);
    assert_eq!(report.n_episodes, 16);

    let mut again: Vec<&str> = SMALL.to_vec();
    again.push("report={out_dir}/again.json");
    ok(keyframe(d, &["eval"], &again));
    assert_eq!(first, std::fs::read(d.join("runs/again.json")).unwrap());

    let cmp = stdout(&ok(keyframe(
        d,
        &["compare", "runs/report.json", "runs/again.json"],
        &[],
    )));
    assert!(cmp.lines().next().unwrap().contains("again"));
    assert_eq!(cmp.lines().count(), 6);

    let n = 64;
    let values: Vec<f64> = (0..2 * n).map(|i| 0.01 + (i % 7) as f64 / 10.0).collect();
    write_matrix(&d.join("s.simmat"), &SimilarityMatrix::new(2, n, values).unwrap()).unwrap();
    let scores = stdout(&ok(keyframe(d, &["score", "s.simmat"], SMALL)));
    assert_eq!(scores.lines().count(), n);
    assert!(scores.lines().all(|l| l.parse::<f64>().is_ok_and(f64::is_finite)));
}

#[test]
fn fresh_init_trains_without_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut sets = SMALL.to_vec();
    sets.extend(["init_sampler=fresh", "train_set=hard", "run_id=fresh"]);
    ok(keyframe(dir.path(), &["gen"], &sets));
    ok(keyframe(dir.path(), &["train"], &sets));
    assert!(dir.path().join("runs/metrics/fresh_joint.csv").exists());
    let out = keyframe(dir.path(), &["train"], &["init_sampler=warm"]);
    assert!(stderr(&out).contains("`init_sampler`"));
}

#[test]
fn gradcheck_passes_clean_and_fails_on_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let clean = ok(keyframe(dir.path(), &["gradcheck"], &[]));
    let text = stdout(&clean);
    for layer in ["conv_d1", "relu", "unet.enc0", "unet.dec3", "unet.head", "grpo_snapshot"] {
        let line = text.lines().find(|l| l.starts_with(layer)).unwrap_or_else(|| panic!("{layer}"));
        assert!(line.contains("max_rel_error=") && line.ends_with("ok"), "{line}");
    }
    let faulty = keyframe(dir.path(), &["gradcheck", "--inject-fault"], &[]);
    assert!(!faulty.status.success());
    assert!(stdout(&faulty).contains("FAIL"));
}
