use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "bootstrap_resamples = 10\nimportance_repeats = 1\n\
                     [data]\nsource = \"synthetic\"\nn_enrollments = 300\n\
                     [models.rsf]\nn_trees = [10]\nmin_leaf = [15]\n";

fn survbench(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_survbench"));
    cmd.args(args).env_remove("SURVBENCH_OUTPUT_DIR").env("RUST_LOG", "warn");
    if let Some(dir) = env_out {
        cmd.env("SURVBENCH_OUTPUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("bench.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_exits_zero_and_honours_env_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("output_dir = \"ignored\"\n{SMALL}"));
    let out = tmp.path().join("from-env");
    let o = survbench(&["run", "-c", &cfg], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["main_benchmark.csv", "report.json", "split_audit.json", "ph_audit.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn flag_beats_env_for_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    let o = survbench(&["ph-audit", "-c", &cfg, "-o", flag.to_str().unwrap()], Some(&env));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag.join("ph_audit.csv").exists());
    assert!(!flag.join("bootstrap.csv").exists());
    assert!(!env.exists());
}

#[test]
fn invalid_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("horizons = [10, 40]\n{SMALL}"));
    let o = survbench(&["run", "-c", &cfg], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn failed_stage_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("min_leaf = [15]", "min_leaf = [10000]"));
    let o = survbench(&["bootstrap", "-c", &cfg], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(3));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["complete"], false);
}

#[test]
fn synth_tables_feed_back_into_audit_split() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let tables = tmp.path().join("tables");
    let o = survbench(&["synth", "-c", &cfg, "-o", tables.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));

    let from_tables = format!(
        "[data]\nsource = \"tables\"\nenrollments = {:?}\nactivity = {:?}\n",
        tables.join("enrollments.csv"),
        tables.join("activity.csv")
    );
    let cfg2 = write_config(tmp.path(), &from_tables);
    let audit = tmp.path().join("audit");
    let o = survbench(&["audit-split", "-c", &cfg2, "-o", audit.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(audit.join("split_audit.json")).unwrap()).unwrap();
    assert_eq!(json["n_train"].as_u64().unwrap() + json["n_test"].as_u64().unwrap(), 300);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = survbench(&["frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
}
