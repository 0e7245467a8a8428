use std::path::Path;
use std::process::{Command, Output};

use offline_distill::dataset;
use offline_distill::env::{self, EnvConfig};
use offline_distill::expert::{value_iteration, DEFAULT_GAMMA, DEFAULT_TOL};
use offline_distill::ExperimentConfig;

const GOLDEN_ECHO: &str = include_str!("golden/config.echo.json");

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offline-distill")).args(args).output().unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn help_lists_subcommands() {
    let out = cli(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["collect", "distill", "train", "eval", "run-all", "selfcheck"] {
        assert!(text.contains(sub), "missing {sub} in\n{text}");
    }
}

#[test]
fn default_echo_matches_golden() {
    assert_eq!(ExperimentConfig::default().echo().unwrap(), GOLDEN_ECHO);
}

#[test]
fn single_greedy_collection_replays_planner() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["collect", "--episodes", "1", "--seeds", "0..0", "--epsilons", "0", "--out", &out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = dataset::load(&dir.path().join("offline.jsonl")).unwrap();
    assert_eq!(ds.meta.episode_count, 1);

    let spec = env::generate(&EnvConfig::default(), 0).unwrap();
    let table = value_iteration(&spec, DEFAULT_GAMMA, DEFAULT_TOL).unwrap();
    let mut state = spec.reset();
    for row in &ds.transitions {
        assert_eq!(row.obs, state.observe());
        let a = table.greedy_action(state.agent);
        assert_eq!(row.action, a.index());
        let step = state.step(a);
        assert_eq!(row.reward, step.reward);
        state = step.state;
    }
    assert!(state.terminated);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"root_seed": 5, "collect": {"episodes": 7, "seeds": {"first": 0, "last": 3}}}"#).unwrap();
    let out_dir = dir.path().join("run");
    let out = cli(&["collect", "--config", cfg_path.to_str().unwrap(), "--seed", "9", "--out", &out_arg(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: ExperimentConfig =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo.root_seed, 9);
    assert_eq!(echo.collect.episodes, 7);
    assert_eq!(echo.collect.seeds.last, 3);
    assert_eq!(echo.distill.epochs, 1000);
    assert_eq!(echo.output_dir, out_dir);
}

#[test]
fn eval_without_checkpoints_names_the_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_arg(dir.path());
    assert!(cli(&["collect", "--episodes", "6", "--seeds", "0..5", "--out", &o]).status.success());
    let out = cli(&["eval", "--out", &o]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bc10"), "{err}");
}

#[test]
fn bad_method_is_rejected() {
    let out = cli(&["train", "--method", "ppo"]);
    assert!(!out.status.success());
}

#[test]
fn selfcheck_fails_when_perturbed() {
    let ok = cli(&["selfcheck"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = cli(&["selfcheck", "--perturb"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn distill_flags_set_rows_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_arg(dir.path());
    assert!(cli(&["collect", "--episodes", "10", "--seeds", "0..9", "--out", &o]).status.success());
    let out = cli(&["distill", "--synthetic-size", "12", "--epochs", "3", "--out", &o]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let syn = offline_distill::distill::SyntheticDataset::load(&dir.path().join("synthetic.json")).unwrap();
    assert_eq!(syn.len(), 12);
    let csv = std::fs::read_to_string(dir.path().join("distill_loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
