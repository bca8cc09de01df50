//! End-to-end runs of the `compstat` binary.

use std::process::{Command, Output};

fn compstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compstat"))
        .args(args)
        .env_remove("COMPSTAT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn analyze_slutsky_passes() {
    let o = compstat(&["analyze", "--model", "slutsky_hicks", "--at", "p=1,1", "m=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["schema_version"], 1);
    let run = &v["reports"][0];
    assert_eq!(run["outcome"], "pass");
    let d = &run["derived"][0];
    assert_eq!(d["name"], "slutsky");
    assert_eq!(d["matrix"]["rows"][0][0].as_f64(), Some(-0.25));
    assert_eq!(d["matrix"]["rows"][0][1].as_f64(), Some(0.25));
}

#[test]
fn sweep_keeps_grid_order() {
    let o = compstat(&["analyze", "--model", "slutsky_hicks", "--sweep", "p1=1:2:2", "m=1:3:3"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let pts: Vec<(f64, f64)> = v["reports"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["parameters"][0]["value"].as_f64().unwrap(), r["parameters"][2]["value"].as_f64().unwrap()))
        .collect();
    assert_eq!(pts, [(1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (2.0, 1.0), (2.0, 2.0), (2.0, 3.0)]);
}

#[test]
fn impossible_tolerance_fails_checks() {
    let o = compstat(&["analyze", "--model", "profit_cd", "--pipeline", "numeric", "--tol", "1e-15"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["reports"][0]["outcome"], "check_failure");
}

#[test]
fn config_errors_exit_3() {
    for args in [
        vec!["analyze", "--model", "nonexistent"],
        vec!["analyze", "--model", "slutsky_hicks", "--at", "q=1"],
        vec!["analyze", "--model", "slutsky_hicks", "--tol=-1"],
        vec!["analyze", "--model", "slutsky_hicks", "--tol", "-1"],
        vec!["analyze", "--frobnicate"],
        vec!["analyze", "--model", "slutsky_hicks", "--recipes", "hessian"],
        vec!["analyze"],
        vec!["verify-all", "--only", "nonexistent"],
    ] {
        let o = compstat(&args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error"), "{args:?}");
        assert!(o.stdout.is_empty(), "{args:?}");
    }
}

#[test]
fn bad_config_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "model = \"slutsky_hicks\"\nspeed = 3\n").unwrap();
    let o = compstat(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "model = \"slutsky_hicks\"\nat = [\"m=2\"]\n[method]\npipeline = \"numeric\"\n").unwrap();
    let o = compstat(&["analyze", "--config", path.to_str().unwrap(), "--at", "p1=4"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let run = &v["reports"][0];
    assert_eq!(run["pipeline"], "numeric");
    let params: Vec<f64> = run["parameters"].as_array().unwrap().iter().map(|p| p["value"].as_f64().unwrap()).collect();
    assert_eq!(params, [4.0, 1.0, 2.0]);
}

#[test]
fn solver_and_domain_failures_exit_2() {
    let o = compstat(&["analyze", "--model", "principal_agent", "--pipeline", "numeric", "--at", "BI=0.01"]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["reports"][0]["outcome"], "solver_failure");
    assert!(v["reports"][0]["error"]["kind"].is_string());
}

#[test]
fn verify_all_passes_and_filters() {
    let o = compstat(&["verify-all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 20);
    assert!(lines.iter().all(|l| l.contains("PASS")));

    let o = compstat(&["verify-all", "--only", "slutsky_hicks,market_power", "--format", "json"]);
    let v = json(&o);
    let models: Vec<&str> = v["runs"].as_array().unwrap().iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["slutsky_hicks", "slutsky_hicks", "market_power", "market_power"]);
}

#[test]
fn list_models_formats() {
    let names = stdout(&compstat(&["list-models", "--format", "names"]));
    let names: Vec<&str> = names.lines().collect();
    assert_eq!(names.len(), 10);
    assert_eq!(names[0], "slutsky_hicks");
    assert_eq!(names[9], "generic_quadratic");

    let v = json(&compstat(&["list-models", "--format", "json"]));
    assert_eq!(v[0]["m"], 2);
    assert_eq!(v[0]["parameters"], serde_json::json!(["p1", "p2", "m"]));

    let table = stdout(&compstat(&["list-models"]));
    assert!(table.starts_with("model"));
    assert_eq!(table.lines().count(), 11);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested");
    let o = Command::new(env!("CARGO_BIN_EXE_compstat"))
        .args(["analyze", "--model", "market_power", "--format", "csv"])
        .env("COMPSTAT_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(target.join("market_power.csv")).unwrap();
    assert!(csv.starts_with("# point 0 omega"));
}

#[test]
fn explicit_out_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = Command::new(env!("CARGO_BIN_EXE_compstat"))
        .args(["analyze", "--model", "pareto_allocation", "--out", out.to_str().unwrap()])
        .env("COMPSTAT_OUT_DIR", dir.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.exists());
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn reports_are_deterministic_apart_from_timings() {
    let strip = |mut v: serde_json::Value| {
        for r in v["reports"].as_array_mut().unwrap() {
            r["timings"] = serde_json::Value::Null;
        }
        v
    };
    let args = ["analyze", "--model", "efficient_portfolio", "--sweep", "target=0.5:0.7:4"];
    let a = strip(json(&compstat(&args)));
    let b = strip(json(&compstat(&args)));
    assert_eq!(a, b);
}

#[test]
fn table_output_lists_checks() {
    let o = compstat(&["analyze", "--model", "cost_constrained_profit", "--format", "table"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# point 0: cost_constrained_profit"));
    assert!(text.contains("PASS conformance"));
}
