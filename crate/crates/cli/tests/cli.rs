use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use homopinn_cli::Summary;

const SMALL: &str = r#"{
  "problem": "ac1d",
  "net": [1, 10, 10, 1],
  "seed": 3,
  "collocation": {"n_res": 32, "n_bc": 2},
  "schedule": [0.1, 0.09, 0.08],
  "strategy": "s2",
  "phase1": {"max_epochs": 150},
  "train": {"step_epochs": 40},
  "analysis": {"kernel": true, "kernel_every": 1}
}"#;

fn homopinn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homopinn"))
        .args(args)
        .current_dir(dir)
        .env_remove("HOMOPINN_SEED")
        .output()
        .unwrap()
}

fn homopinn_with_seed(args: &[&str], dir: &Path, seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homopinn")).args(args).current_dir(dir).env("HOMOPINN_SEED", seed).output().unwrap()
}

fn write_config(dir: &Path, text: &str) {
    fs::write(dir.join("cfg.json"), text).unwrap();
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let out = homopinn(&["run", "cfg.json", "--out", "a"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = tmp.path().join("a");
    for f in ["summary.json", "history.csv", "solution.csv", "profiles.csv", "kernel.csv", "checkpoints/step_0002.json"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    let s = Summary::read(&a.join("summary.json")).unwrap();
    assert_eq!((s.status.as_str(), s.steps, s.total_epochs, s.final_eps), ("ok", 2, 150 + 2 * 40, 0.08));
    assert!(s.final_l2re.unwrap().is_finite());

    let history = fs::read_to_string(a.join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next().unwrap(), "epoch,eps,l_res,l_bc,l_heps,total,l2re");
    let epochs: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(epochs, (0..230).collect::<Vec<_>>());

    let solution = fs::read_to_string(a.join("solution.csv")).unwrap();
    assert!(solution.starts_with("x,u_pred,u_ref\n"));
    assert_eq!(solution.lines().count(), 1025);
    let kernel = fs::read_to_string(a.join("kernel.csv")).unwrap();
    assert_eq!(kernel.lines().count(), 4);
}

#[test]
fn replay_is_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    for dir in ["a", "b"] {
        assert!(homopinn(&["run", "cfg.json", "--out", dir], tmp.path()).status.success());
    }
    for f in ["history.csv", "solution.csv", "checkpoints/step_0002.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between replays");
    }
}

#[test]
fn seed_environment_variable_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let out = homopinn_with_seed(&["run", "cfg.json", "--out", "a"], tmp.path(), "11");
    assert!(out.status.success());
    assert_eq!(Summary::read(&tmp.path().join("a/summary.json")).unwrap().seed, 11);
    let out = homopinn_with_seed(&["run", "cfg.json", "--out", "b"], tmp.path(), "eleven");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn increasing_schedule_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), &SMALL.replace("[0.1, 0.09, 0.08]", "[0.08, 0.09, 0.1]"));
    let out = homopinn(&["run", "cfg.json", "--out", "a"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schedule must strictly decrease"), "{err}");
}

#[test]
fn unknown_field_exits_with_code_two_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), &SMALL.replace("\"seed\": 3", "\"sed\": 3"));
    let out = homopinn(&["run", "cfg.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sed"));
}

#[test]
fn runtime_failure_exits_with_code_one_and_leaves_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    // a huge plain gradient step blows the loss up
    write_config(tmp.path(), &SMALL.replace("\"max_epochs\": 150", "\"max_epochs\": 150, \"optimizer\": {\"kind\": \"gd\", \"lr\": 1e6}"));
    let out = homopinn(&["run", "cfg.json", "--out", "a"], tmp.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let s = Summary::read(&tmp.path().join("a/summary.json")).unwrap();
    assert_eq!(s.status, "error");
    assert!(s.error.is_some());
}

#[test]
fn empty_sweep_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let out = homopinn(&["sweep", "cfg.json", "--axis", "seed", "--values", "", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_sweep_aggregates_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), &SMALL.replace("\"max_epochs\": 150", "\"max_epochs\": 30").replace("\"step_epochs\": 40", "\"step_epochs\": 5"));
    let out = homopinn(&["sweep", "cfg.json", "--axis", "seed", "--values", "0,1,2,3,4", "--jobs", "2", "--out", "s"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = fs::read_to_string(tmp.path().join("s/aggregate.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().collect();
    assert_eq!(rows[0], "axis,value,status,final_loss,final_l2re,steps,total_epochs,dir");
    assert_eq!(rows.len(), 6);
    for (i, r) in rows[1..].iter().enumerate() {
        assert!(r.starts_with(&format!("seed,{i},ok,")), "{r}");
    }
    assert!(tmp.path().join("s/seed-4/summary.json").exists());
}

#[test]
fn preset_prints_a_loadable_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = homopinn(&["preset", "ac1d-table1"], tmp.path());
    assert!(out.status.success());
    let cfg = homopinn_cli::ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.problem, "ac1d");
    assert_eq!(homopinn(&["preset", "nope"], tmp.path()).status.code(), Some(2));
}
