use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn npfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npfs")).args(args).output().expect("spawn npfs")
}

fn ok(args: &[&str]) -> Output {
    let out = npfs(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn generated(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join("data.csv");
    let mut args = vec!["generate", "--output", p(&path)];
    args.extend_from_slice(extra);
    ok(&args);
    path
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    ok(&["generate", "--seed", "5", "--output", p(&a)]);
    ok(&["generate", "--seed", "5", "--output", p(&b)]);
    ok(&["generate", "--seed", "6", "--output", p(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn select_defaults_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), &["--informative", "3,8,14"]);
    let out = dir.path().join("run");
    ok(&["select", "--input", p(&data), "--output", p(&out)]);
    for f in ["report.json", "report.txt", "model.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let r = report(&out);
    assert_eq!(r["config"]["delta"], 0.005);
    assert_eq!(r["config"]["max_variables"], 20);
    assert_eq!(r["config"]["standardize"], true);
    assert_eq!(r["config"]["stratified"], true);
    let selected: Vec<u64> = r["selected"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    for f in [3, 8, 14] {
        assert!(selected.contains(&f), "{selected:?}");
    }
    assert_eq!(r["selected_names"][0], format!("f{}", selected[0]));
    assert_eq!(r["trace"].as_array().unwrap().len(), selected.len());
    assert!(r["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn max_variables_one_selects_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), &[]);
    let out = dir.path().join("run");
    ok(&["select", "--input", p(&data), "--max-variables", "1", "--output", p(&out)]);
    let r = report(&out);
    assert_eq!(r["selected"].as_array().unwrap().len(), 1);
    assert_eq!(r["stop_reason"], "MaxVariablesReached");
}

#[test]
fn rerun_and_single_thread_reproduce_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), &["--separation", "0.8", "--dim", "12"]);
    let runs: Vec<Value> = [vec![], vec![], vec!["--threads", "1"]]
        .iter()
        .enumerate()
        .map(|(i, extra)| {
            let out = dir.path().join(format!("run{i}"));
            let mut args = vec!["select", "--input", p(&data), "--seed", "11", "--output", p(&out)];
            args.extend_from_slice(extra);
            ok(&args);
            report(&out)
        })
        .collect();
    for r in &runs[1..] {
        assert_eq!(r["trace"].to_string(), runs[0]["trace"].to_string());
        assert_eq!(r["selected"], runs[0]["selected"]);
    }
    assert_eq!(runs[2]["config"]["threads"], 1);
}

#[test]
fn loo_selection_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), &["--dim", "6", "--per-class", "20"]);
    let out = dir.path().join("run");
    ok(&["select", "--input", p(&data), "--k", "loo", "--output", p(&out)]);
    assert_eq!(report(&out)["config"]["k"], "leave_one_out");
}

#[test]
fn predict_with_and_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), &["--dim", "8"]);
    let out = dir.path().join("run");
    ok(&["select", "--input", p(&data), "--output", p(&out)]);
    let model = out.join("model.json");
    let cv = report(&out)["trace"].as_array().unwrap().last().unwrap()["accuracy"].as_f64().unwrap();

    let preds = dir.path().join("pred.csv");
    let with = ok(&["predict", "--model", p(&model), "--input", p(&data), "--truth-column", "label", "--output", p(&preds)]);
    let line = String::from_utf8(with.stdout).unwrap();
    let acc: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(acc >= cv - 0.1, "{acc} vs cv {cv}");
    let written = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(written.lines().count(), 301);
    assert_eq!(written.lines().next(), Some("label"));

    // features only, matched by header name
    let features = dir.path().join("features.csv");
    let text = std::fs::read_to_string(&data).unwrap();
    let stripped: String = text.lines().map(|l| l.split_once(',').unwrap().1.to_string() + "\n").collect();
    std::fs::write(&features, stripped).unwrap();
    let without = ok(&["predict", "--model", p(&model), "--input", p(&features)]);
    assert!(String::from_utf8(without.stderr).unwrap().is_empty());
    let stdout = String::from_utf8(without.stdout).unwrap();
    assert_eq!(stdout, written);
}

#[test]
fn predict_rejects_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), &["--dim", "5"]);
    let out = dir.path().join("run");
    ok(&["select", "--input", p(&data), "--output", p(&out)]);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.0,2.0\n3.0,4.0\n").unwrap();
    let res = npfs(&["predict", "--model", p(&out.join("model.json")), "--input", p(&bad), "--no-header"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8(res.stderr).unwrap().contains("SchemaMismatch"));
}

#[test]
fn fit_then_predict_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), &["--dim", "6"]);
    let model = dir.path().join("m.json");
    ok(&["fit", "--input", p(&data), "--features", "f0,2", "--output", p(&model)]);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["selected_features"], serde_json::json!([0, 2]));
    let a = ok(&["predict", "--model", p(&model), "--input", p(&data), "--truth-column", "0"]);
    let b = ok(&["predict", "--model", p(&model), "--input", p(&data), "--truth-column", "0"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(npfs(&["fit", "--input", p(&data), "--features", "nope", "--output", p(&model)]).status.code(), Some(2));
}

#[test]
fn benchmark_flags_small_instances() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("bench.json");
    ok(&["benchmark", "--per-class", "20", "--dim", "5", "--repetitions", "2", "--output", p(&json)]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(r["n_samples"], 60);
    assert_eq!(r["small_instance"], true);
    assert!(r["speedup"].as_f64().unwrap() > 0.0);
    assert_eq!(r["naive"]["seconds"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let missing = npfs(&["select", "--input", p(&dir.path().join("none.csv")), "--output", p(&out)]);
    assert_eq!(missing.status.code(), Some(2));

    // a class with two samples cannot be scored by leave-one-out
    let tiny = dir.path().join("tiny.csv");
    std::fs::write(&tiny, "0,1.0\n0,2.0\n1,5.0\n1,6.0\n1,7.0\n").unwrap();
    let res = npfs(&["select", "--input", p(&tiny), "--no-header", "--k", "loo", "--output", p(&out)]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));

    let bad_spec = npfs(&["generate", "--dim", "3", "--informative", "7", "--output", p(&tiny)]);
    assert_eq!(bad_spec.status.code(), Some(2));
    assert!(String::from_utf8(bad_spec.stderr).unwrap().contains("SpecError"));
}
