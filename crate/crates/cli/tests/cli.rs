use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sliq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sliq")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sliq(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn blobs(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("blobs");
    ok(&[
        "gen-synth",
        "--kind",
        "color_blobs",
        "--n",
        &n.to_string(),
        "--seed",
        "3",
        "--width",
        "4",
        "--height",
        "4",
        "--out",
        s(&out),
    ]);
    out.join("manifest.json")
}

fn gauss(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("gauss");
    ok(&["gen-synth", "--kind", "two_class_gauss", "--n", &n.to_string(), "--seed", "3", "--out", s(&out)]);
    out.join("manifest.json")
}

fn train(manifest: &Path, out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--manifest", s(manifest), "--out", s(out), "--epochs", "1", "--layers", "1"];
    args.extend_from_slice(extra);
    ok(&args);
    out.join("model.json")
}

#[test]
fn gen_synth_writes_reproducible_files() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["gen-synth", "--n", "60", "--seed", "9", "--out", s(out)]);
    }
    let ppm: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".ppm"))
        .collect();
    assert_eq!(ppm.len(), 60);
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["files"].as_array().unwrap().len(), 60);
    for name in ppm.iter().chain(["manifest.json".to_string()].iter()) {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    let bad = sliq(&["gen-synth", "--n", "0", "--out", s(&dir.path().join("c"))]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn unknown_flags_and_bad_values_exit_1() {
    assert_eq!(code(&sliq(&["train", "--bogus"])), 1);
    assert_eq!(code(&sliq(&["gen-synth", "--kind", "spirals"])), 1);
    assert_eq!(code(&sliq(&["--threads", "0", "gen-synth", "--n", "1", "--out", "/nonexistent/x"])), 1);
    assert!(sliq(&["--help"]).status.success());
}

#[test]
fn missing_manifest_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere").join("manifest.json");
    let out = sliq(&["train", "--manifest", s(&missing), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = sliq(&["gen-synth", "--config", s(&dir.path().join("none.json"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_writes_model_and_history() {
    let dir = TempDir::new().unwrap();
    let manifest = blobs(dir.path(), 20);
    let model = train(&manifest, &dir.path().join("sliq"), &[]);
    let m = json(&model);
    // 48 features interweave to 96 amplitudes
    assert_eq!(m["spec"]["n_qubits"], 7);
    assert_eq!(m["loss_history"].as_array().unwrap().len(), 1);
    let history = fs::read_to_string(dir.path().join("sliq/loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.starts_with("epoch,mean_loss\n1,"));
    let split = json(&dir.path().join("sliq/split.json"));
    assert_eq!(split["train"].as_array().unwrap().len() + split["test"].as_array().unwrap().len(), 20);

    let base = json(&train(&manifest, &dir.path().join("base"), &["--mode", "baseline"]));
    assert_eq!(base["spec"]["n_qubits"], 6);
    assert_eq!(base["spec"]["measured_qubits"].as_array().unwrap().len(), 2);
}

#[test]
fn circuits_that_do_not_fit_are_resource_errors() {
    let dir = TempDir::new().unwrap();
    let manifest = blobs(dir.path(), 10);
    let run = dir.path().join("run");
    for q in ["5", "30"] {
        let out = sliq(&["train", "--manifest", s(&manifest), "--out", s(&run), "--epochs", "1", "--qubits", q]);
        assert_eq!(code(&out), 3, "{q} qubits");
    }
}

#[test]
fn eval_rank_summarises_percentiles() {
    let dir = TempDir::new().unwrap();
    let manifest = blobs(dir.path(), 20);
    let model = train(&manifest, &dir.path().join("run"), &[]);
    let out = dir.path().join("rank");
    ok(&[
        "eval-rank",
        "--model",
        s(&model),
        "--manifest",
        s(&manifest),
        "--out",
        s(&out),
        "--anchors",
        "4",
        "--candidates",
        "6",
    ]);
    let summary = json(&out.join("rank_summary.json"));
    for key in ["p25", "p50", "p75", "p100"] {
        let v = summary[key].as_f64().unwrap();
        assert!((-1.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(summary["p25"].as_f64() <= summary["p75"].as_f64());
    let rows = fs::read_to_string(out.join("ranking.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 6);

    let one =
        sliq(&["eval-rank", "--model", s(&model), "--manifest", s(&manifest), "--out", s(&out), "--candidates", "1"]);
    assert_eq!(code(&one), 1);
}

#[test]
fn eval_classify_needs_labels() {
    let dir = TempDir::new().unwrap();
    let manifest = blobs(dir.path(), 12);
    let model = train(&manifest, &dir.path().join("run"), &[]);
    let out =
        sliq(&["eval-classify", "--model", s(&model), "--manifest", s(&manifest), "--out", s(&dir.path().join("c"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn eval_classify_reports_accuracy() {
    let dir = TempDir::new().unwrap();
    let manifest = gauss(dir.path(), 60);
    let model = train(&manifest, &dir.path().join("run"), &[]);
    let out = dir.path().join("c");
    ok(&["eval-classify", "--model", s(&model), "--manifest", s(&manifest), "--out", s(&out)]);
    let summary = json(&out.join("classify_summary.json"));
    assert_eq!(summary["classes"], 2);
    assert_eq!(summary["samples"], 12);
    let acc = summary["accuracy"].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&acc));
    let rows = fs::read_to_string(out.join("classify_embeddings.csv")).unwrap();
    assert!(rows.starts_with("sample_id,label,cluster,c0,c1,c2,c3\n"));
    assert_eq!(rows.lines().count(), 13);
}

#[test]
fn eval_pvm_writes_sorted_cdf() {
    let dir = TempDir::new().unwrap();
    let manifest = blobs(dir.path(), 15);
    let model = train(&manifest, &dir.path().join("run"), &[]);
    let out = dir.path().join("pvm");
    ok(&["eval-pvm", "--model", s(&model), "--manifest", s(&manifest), "--out", s(&out), "--pairs", "25"]);
    let text = fs::read_to_string(out.join("pvm_cdf.csv")).unwrap();
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 25);
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    assert!(text.trim_end().ends_with(",1"));

    let base = train(&manifest, &dir.path().join("base"), &["--mode", "baseline"]);
    let refused = sliq(&["eval-pvm", "--model", s(&base), "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(code(&refused), 1);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("data");
    let config = dir.path().join("gen.json");
    fs::write(&config, format!(r#"{{"n": 7, "seed": 4, "out": "{}"}}"#, s(&out))).unwrap();
    ok(&["gen-synth", "--config", s(&config), "--n", "5"]);
    let resolved = json(&out.join("gen_synth_config.json"));
    assert_eq!(resolved["n"], 5);
    assert_eq!(resolved["seed"], 4);

    fs::write(&config, r#"{"samples": 7}"#).unwrap();
    assert_eq!(code(&sliq(&["gen-synth", "--config", s(&config)])), 1);
}

fn run_pipeline(root: &Path, threads: &str) {
    let t = ["--threads", threads];
    let data = root.join("data");
    let manifest = data.join("manifest.json");
    let model = root.join("run/model.json");
    let (run, rank, pvm) = (root.join("run"), root.join("rank"), root.join("pvm"));
    let steps: Vec<Vec<&str>> = vec![
        vec!["gen-synth", "--n", "30", "--seed", "2", "--width", "4", "--height", "4", "--out", s(&data)],
        vec!["train", "--manifest", s(&manifest), "--out", s(&run), "--epochs", "2", "--layers", "2", "--seed", "5"],
        vec![
            "eval-rank",
            "--model",
            s(&model),
            "--manifest",
            s(&manifest),
            "--out",
            s(&rank),
            "--anchors",
            "5",
            "--candidates",
            "8",
        ],
        vec!["eval-pvm", "--model", s(&model), "--manifest", s(&manifest), "--out", s(&pvm), "--pairs", "20"],
    ];
    for step in steps {
        let mut args = t.to_vec();
        args.extend(step);
        ok(&args);
    }
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let one = TempDir::new().unwrap();
    let four = TempDir::new().unwrap();
    run_pipeline(one.path(), "1");
    run_pipeline(four.path(), "4");
    let files = files_under(one.path());
    assert!(files.len() > 40);
    for f in files {
        let rel = f.strip_prefix(one.path()).unwrap();
        if rel.extension().is_some_and(|e| e == "json")
            && rel.file_name().unwrap().to_str().unwrap().ends_with("_config.json")
        {
            // resolved configs record the output paths
            continue;
        }
        assert_eq!(fs::read(&f).unwrap(), fs::read(four.path().join(rel)).unwrap(), "{}", rel.display());
    }
}
