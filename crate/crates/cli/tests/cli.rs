use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use stellagen_core::dataset::{load_dataset, ConditionTable};
use stellagen_core::report::{quartiles, read_csv, EvaluationRow, Metric, SummaryRow};
use stellagen_core::surface::{geometry_default, FourierSurface};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stellagen"))
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn stellagen");
    assert!(
        out.status.success(),
        "{:?} failed: {}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small but complete run configuration rooted in `dir`.
fn write_config(dir: &Path, field_source: serde_json::Value) -> PathBuf {
    let config = json!({
        "paths": {
            "dataset": dir.join("data.jsonl"),
            "pca": dir.join("pca.json"),
            "checkpoint": dir.join("checkpoint.json"),
            "samples": dir.join("samples.jsonl"),
            "evaluation": dir.join("evaluation.csv"),
            "summary": dir.join("summary.csv"),
        },
        "synth": { "count": 60, "seed": 3 },
        "n_r": 4,
        "network": {
            "hidden_width": 16,
            "hidden_layers": 2,
            "x_embed_dim": 8,
            "t_embed_dim": 8,
            "y_embed_dim": 8,
            "x_sinusoid_dim": 4,
            "t_sinusoid_dim": 8,
            "y_sinusoid_dim": 4
        },
        "schedule": { "timesteps": 20 },
        "train": { "epochs": 3, "batch_size": 16 },
        "field_source": field_source,
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn count_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.trim().is_empty()).count()
}

#[test]
fn synthetic_data_is_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        run(bin().args(["synth-data", "--seed", "4", "--n", "1000", "--out"]).arg(out));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let data = load_dataset(&a, 661).unwrap();
    assert_eq!(data.len(), 1000);
    for r in data.records() {
        let stored = r.conditions.aspect_ratio();
        assert!((3.0..=10.0).contains(&stored), "{}: A = {stored}", r.id);
        assert_eq!(r.conditions.nfp(), 2.0);
        let s = FourierSurface::unpack(&r.features, 2, 10, 10).unwrap();
        let measured = geometry_default(&s).unwrap().aspect_ratio;
        assert!((measured - stored).abs() <= 1e-6 * stored, "{}: {measured} vs {stored}", r.id);
    }
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stub = vec![
        env!("CARGO_BIN_EXE_stellagen").to_string(),
        "field-stub".into(),
        "--iota".into(),
        "0.5".into(),
    ];
    let config = write_config(d, json!({ "kind": "external", "command": stub }));
    let with_config = |args: &[&str]| {
        let mut c = bin();
        c.arg("--config").arg(&config).args(args);
        c
    };

    run(&mut with_config(&["synth-data"]));
    assert_eq!(count_lines(&d.join("data.jsonl")), 60);
    let curve = d.join("curve.csv");
    run(with_config(&["pca-fit", "--curve"]).arg(&curve));
    let curve_text = std::fs::read_to_string(&curve).unwrap();
    assert!(curve_text.starts_with("n_r,explained_fraction\n"));

    let first = d.join("first.json");
    let second = d.join("second.json");
    let other = d.join("other.json");
    run(with_config(&["train", "--seed", "42", "--out"]).arg(&first));
    run(with_config(&["train", "--seed", "42", "--out"]).arg(&second));
    run(with_config(&["train", "--seed", "43", "--out"]).arg(&other));
    let bytes = std::fs::read(&first).unwrap();
    assert_eq!(bytes, std::fs::read(&second).unwrap());
    assert_ne!(bytes, std::fs::read(&other).unwrap());
    // training from the stored PCA model gives the same checkpoint
    let from_pca = d.join("from_pca.json");
    run(with_config(&["train", "--seed", "42", "--pca"]).arg(d.join("pca.json")).arg("--out").arg(&from_pca));
    assert_eq!(bytes, std::fs::read(&from_pca).unwrap());

    let big = d.join("big.jsonl");
    run(with_config(&["sample", "--conditions", "table1-out", "--n", "64", "--checkpoint"])
        .arg(&first)
        .arg("--out")
        .arg(&big));
    assert_eq!(count_lines(&big), 512);

    run(with_config(&["sample", "--conditions", "table1", "--n", "3", "--checkpoint"]).arg(&first));
    let rows = ConditionTable::reference();
    let n_rows = rows.in_sample.len() + rows.out_of_sample.len();
    assert_eq!(count_lines(&d.join("samples.jsonl")), 3 * n_rows);

    run(&mut with_config(&["evaluate"]));
    let evaluation: Vec<EvaluationRow> = read_csv(std::fs::File::open(d.join("evaluation.csv")).unwrap()).unwrap();
    assert_eq!(evaluation.len(), 3 * n_rows);
    assert!(evaluation.iter().any(|r| r.valid));
    for r in evaluation.iter().filter(|r| r.valid) {
        // the stub reports ι̅ = 0.5 and an exactly quasisymmetric field
        let expected = (0.5 - r.target_mean_iota) / r.target_mean_iota;
        assert!((r.c_iota.unwrap() - expected).abs() < 1e-12);
        assert!(r.j_qs.unwrap() < 1e-10);
    }

    let printed = run(&mut with_config(&["report"]));
    let table = String::from_utf8(printed.stdout).unwrap();
    assert!(table.lines().next().unwrap().starts_with("group"));
    let summary: Vec<SummaryRow> = read_csv(std::fs::File::open(d.join("summary.csv")).unwrap()).unwrap();
    for s in summary.iter().filter(|s| s.metric == Metric::CAspect) {
        let group: Vec<&EvaluationRow> = evaluation
            .iter()
            .filter(|r| {
                r.set == s.set
                    && r.nfp == s.nfp
                    && r.helicity == s.helicity
                    && r.target_aspect_ratio == s.target_aspect_ratio
                    && r.target_mean_iota == s.target_mean_iota
            })
            .collect();
        assert_eq!(group.len(), s.n_samples);
        let values: Vec<f64> = group.iter().filter(|r| r.valid).filter_map(|r| r.c_aspect).collect();
        assert_eq!(values.len(), s.n_values);
        match quartiles(&values) {
            Some([q25, q50, q75]) => {
                assert_eq!((s.q25, s.q50, s.q75), (Some(q25), Some(q50), Some(q75)));
            }
            None => assert_eq!(s.q50, None),
        }
    }
}

#[test]
fn perfect_torus_scores_zero_aspect_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = write_config(d, json!({ "kind": "synthetic", "b0": 1.0, "epsilon": 0.1 }));
    let torus = FourierSurface::circular_torus(2, 10, 10, 2.0, 0.5).unwrap();
    let record = json!({
        "id": "torus",
        "set": "in-sample",
        "nfp": 2,
        "helicity": 0,
        "aspect_ratio": 4.0,
        "mean_iota": 0.4,
        "m_pol": 10,
        "n_tor": 10,
        "coeffs": torus.pack(),
    });
    let broken = json!({
        "id": "short",
        "set": "in-sample",
        "nfp": 2,
        "helicity": 0,
        "aspect_ratio": 4.0,
        "mean_iota": 0.4,
        "m_pol": 10,
        "n_tor": 10,
        "coeffs": [1.0, 2.0],
    });
    std::fs::write(d.join("samples.jsonl"), format!("{record}\n{broken}\n")).unwrap();
    run(bin().arg("--config").arg(&config).arg("evaluate"));
    let rows: Vec<EvaluationRow> = read_csv(std::fs::File::open(d.join("evaluation.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].valid);
    assert!(rows[0].c_aspect.unwrap().abs() < 1e-12);
    assert!(rows[0].j_qs.unwrap() < 1e-12);
    assert!(!rows[1].valid);
    assert!(!rows[1].note.is_empty());
}

#[test]
fn missing_or_invalid_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(dir.path().join("absent.json"))
        .arg("synth-data")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cannot read config"), "{stderr}");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{ "thresholds": { "constraint": -1.0 } }"#).unwrap();
    let out = bin().arg("--config").arg(&bad).arg("synth-data").output().unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let one = d.join("one.jsonl");
    let many = d.join("many.jsonl");
    run(bin().env("STELLAGEN_THREADS", "1").args(["synth-data", "--n", "40", "--out"]).arg(&one));
    run(bin().env("STELLAGEN_THREADS", "4").args(["synth-data", "--n", "40", "--out"]).arg(&many));
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&many).unwrap());

    let out = bin().env("STELLAGEN_THREADS", "0").args(["synth-data", "--out"]).arg(&one).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("STELLAGEN_THREADS"));
}
