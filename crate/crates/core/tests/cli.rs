use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"instance = "0.9, 0.7, 0.6, 0.5, 0.4, 0.3"
agents = 3
protocol = "gosine-sync"
graph = "ring"
budget = "poly:beta=3"
horizon = 3000
runs = 3
seed = 42
"#;

fn gosine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gosine")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_is_byte_identical_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "4")] {
        let o = gosine(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trajectory.csv", "summary.csv", "metrics.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn artifact_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("o");
    assert!(gosine(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert_eq!(first_line(&out.join("trajectory.csv")), "run_id,agent_id,t,cum_regret");
    assert_eq!(first_line(&out.join("summary.csv")), "t,mean_regret,ci_halfwidth,policy_label");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().last().unwrap().starts_with("3000,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 42);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["tool"], "gosine");
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["runs"], 3);
    assert_eq!(metrics["audits_passed"], 3);
    assert_eq!(metrics["message_bits"], 3);
}

#[test]
fn overrides_change_the_manifest_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("o");
    let o = gosine(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7", "--runs", "2", "--horizon", "500"]);
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 7);
    assert_eq!(manifest["config"]["horizon"], 500);
}

#[test]
fn single_run_notes_missing_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("o");
    let o = gosine(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--runs", "1"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("summary.csv skipped"));
    assert!(!out.join("summary.csv").exists());
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn config_errors_exit_nonzero_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("poly:beta=3", "poly:beta=0.5"));
    let o = gosine(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
    let cfg = write_config(dir.path(), &format!("{CONFIG}colour = 1\n"));
    let o = gosine(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 9"));
    let o = gosine(&["run", "--config", &cfg, "--protocol", "gossip"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn low_alpha_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("o");
    let o = gosine(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--alpha", "2", "--runs", "2"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("theorem requires α>3"));
}

#[test]
fn sweep_over_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("s");
    let o = gosine(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--axis", "graph", "--values", "complete,ring"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let comparison = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(comparison.lines().next(), Some("axis_value,run_id,final_t,mean_agent_regret"));
    assert_eq!(comparison.lines().count(), 1 + 2 * 3);
    assert!(out.join("graph=complete/manifest.json").exists());
    assert_eq!(
        first_line(&out.join("comparison_summary.csv")),
        "axis_value,runs,mean_final_regret,ci_halfwidth"
    );
    // the ring arm of the sweep equals a plain run of the same config
    let plain = dir.path().join("p");
    assert!(gosine(&["run", "--config", &cfg, "--out", plain.to_str().unwrap()]).status.success());
    assert_eq!(
        fs::read(plain.join("trajectory.csv")).unwrap(),
        fs::read(out.join("graph=ring/trajectory.csv")).unwrap()
    );
}

#[test]
fn sweep_reports_bad_values_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("s");
    let o = gosine(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--axis", "protocol", "--values", "baseline-nocomm,bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus: failed"));
    assert!(out.join("protocol=baseline-nocomm/trajectory.csv").exists());
}

#[test]
fn spreading_on_two_agents_takes_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sp");
    let o = gosine(&["spreading", "--graph", "complete", "--agents", "2", "--trials", "50", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("spreading.csv")).unwrap(), "steps,count\n1,50\n");
}

#[test]
fn theory_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = gosine(&["theory", "--instance", "0.95,0.85", "--agents", "2", "--out", out.to_str().unwrap(), "--trials", "50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("theory.json")).unwrap()).unwrap();
    assert!((report["lower_bound"]["kl_form"].as_f64().unwrap() - 0.71174).abs() < 1e-4);
    let cfg = write_config(dir.path(), CONFIG);
    let o = gosine(&["validate", "--config", &cfg, "--horizon", "100000"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(text.lines().all(|l| l.starts_with("pass")), "{text}");
}
