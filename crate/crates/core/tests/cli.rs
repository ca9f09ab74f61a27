use std::path::Path;
use std::process::{Command, Output};

fn wav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wav"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "episodes = 3\nepisode_steps = 16\n\n[flow]\ndataset_size = 8\nsteps_per_stage = 5\nbatch_size = 4\n\n[geolab]\nhorizons = [1, 2, 3]\nn_uniform = 2000\nn_latent = 500\nrepetitions = 20\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn misspelled_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[planner]\nplannner = 3\n").unwrap();
    let out = wav(&["plan", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plannner"));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(wav(&["replan"]).status.code(), Some(2));
}

#[test]
fn plan_writes_metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = wav(&["plan", "--config", &small_config(dir.path()), "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(header(&out.join("metrics.csv")).starts_with("episode,success,final_distance"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "plan");
    assert_eq!(manifest["episodes"].as_array().unwrap().len(), 3);
}

#[test]
fn ablate_writes_one_row_per_value_and_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = wav(&[
        "ablate",
        "--config",
        &small_config(dir.path()),
        "--out",
        out.to_str().unwrap(),
        "--sweep",
        "K=0,2",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 3);
    assert_eq!(
        header(&out.join("aggregate.csv")),
        "key,value,episodes,successes,success_rate,mean_plan_ms"
    );
}

#[test]
fn reward_check_totals_match_weighted_terms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(wav(&["reward-check", "--out", out.to_str().unwrap()]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["summary"]["max_total_residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn geometry_and_train_flow_run_on_small_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let geo = dir.path().join("geo");
    assert!(wav(&["geometry", "--config", &config, "--out", geo.to_str().unwrap()]).status.success());
    assert!(header(&geo.join("metrics.csv")).starts_with("H,D,n,hits"));
    let flow = dir.path().join("flow");
    assert!(wav(&["train-flow", "--config", &config, "--out", flow.to_str().unwrap()]).status.success());
    for stage in ["video", "value", "action"] {
        assert!(flow.join(format!("flow_{stage}.bin")).exists());
    }
}
