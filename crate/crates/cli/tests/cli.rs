use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_causal-bma");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SPACE: &str = r#"{
  "nodes": ["W", "X", "Y"],
  "edges": [
    {"from": "W", "to": "X", "prob": 0.5},
    {"from": "W", "to": "Y", "prob": 0.5},
    {"from": "X", "to": "Y", "prob": 1.0}
  ]
}"#;

#[test]
fn gen_is_reproducible_and_feeds_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.json");
    fs::write(&space, SPACE).unwrap();
    let (a, b, model) = (
        dir.path().join("a.csv"),
        dir.path().join("b.csv"),
        dir.path().join("model.json"),
    );
    for (out, extra) in [(&a, Some(&model)), (&b, None)] {
        let mut args = vec![
            "gen",
            "--space",
            path(&space),
            "--n",
            "400",
            "--seed",
            "5",
            "--out",
            path(out),
        ];
        if let Some(m) = extra {
            args.extend(["--model-out", path(m)]);
        }
        ok(&args);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().next(), Some("W,X,Y"));
    assert_eq!(text.lines().count(), 401);

    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    let edges = model["dag"]["edges"].as_array().unwrap();
    // Edges are index pairs into `nodes`.
    let xy = edges
        .iter()
        .position(|e| e == &serde_json::json!([1, 2]))
        .expect("edge with probability one is always drawn");
    let truth = model["weights"][xy].as_f64().unwrap();

    for method in ["quasi", "vb", "k2", "full", "mc"] {
        let out = ok(&[
            "estimate",
            "--data",
            path(&a),
            "--space",
            path(&space),
            "--method",
            method,
            "--x",
            "X",
            "--y",
            "Y",
            "--x-value",
            "1",
        ]);
        let v: f64 = out.trim().parse().unwrap();
        assert!(v.is_finite(), "{method}: {v}");
        // With W→Y possible, the total effect of X equals its direct coefficient.
        assert!((v - truth).abs() < 0.3, "{method}: {v} vs {truth}");
    }

    let once: f64 = ok(&[
        "estimate",
        "--data",
        path(&a),
        "--space",
        path(&space),
        "--method",
        "quasi",
        "--x",
        "X",
        "--y",
        "Y",
        "--x-value",
        "1",
    ])
    .trim()
    .parse()
    .unwrap();
    let twice: f64 = ok(&[
        "estimate",
        "--data",
        path(&a),
        "--space",
        path(&space),
        "--method",
        "quasi",
        "--x",
        "X",
        "--y",
        "Y",
        "--x-value",
        "2",
    ])
    .trim()
    .parse()
    .unwrap();
    assert!((twice - 2.0 * once).abs() < 1e-12);
}

#[test]
fn gen_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.json");
    fs::write(&space, SPACE).unwrap();
    assert!(!run(&["gen", "--space", path(&space), "--n", "10"])
        .status
        .success());
}

#[test]
fn bench_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["r1.csv", "r2.csv"] {
        let out = dir.path().join(name);
        ok(&[
            "bench",
            "--seed",
            "3",
            "--n1",
            "1",
            "--n2",
            "1",
            "--trials",
            "8",
            "--sample-sizes",
            "30,60",
            "--estimators",
            "vb,k2,quasi",
            "--out",
            path(&out),
        ]);
        files.push(fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# "));
    assert_eq!(lines[1], "estimator,N,mse,stderr,trials");
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines[2].starts_with("k2,30,"));
    assert!(lines[7].starts_with("vb,60,"));
}

#[test]
fn bench_config_file_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"n1":1,"n2":1,"edge_prob":0.5,"sample_sizes":[40],"trials":5,
            "master_seed":999,"estimators":["full"]}"#,
    )
    .unwrap();
    let from_file = dir.path().join("a.csv");
    let from_flags = dir.path().join("b.csv");
    ok(&[
        "bench",
        "--config",
        path(&config),
        "--seed",
        "4",
        "--out",
        path(&from_file),
    ]);
    ok(&[
        "bench",
        "--seed",
        "4",
        "--n1",
        "1",
        "--n2",
        "1",
        "--edge-prob",
        "0.5",
        "--sample-sizes",
        "40",
        "--trials",
        "5",
        "--estimators",
        "full",
        "--out",
        path(&from_flags),
    ]);
    let a = fs::read_to_string(&from_file).unwrap();
    let b = fs::read_to_string(&from_flags).unwrap();
    assert_eq!(
        a.lines().skip(1).collect::<Vec<_>>(),
        b.lines().skip(1).collect::<Vec<_>>()
    );
    assert!(a.contains("\"master_seed\":4"));
    assert!(!run(&["bench", "--out", path(&from_file)]).status.success());
}

#[test]
fn bench_rejects_oversized_exact_space() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let res = run(&[
        "bench",
        "--seed",
        "1",
        "--n1",
        "5",
        "--n2",
        "5",
        "--trials",
        "1",
        "--estimators",
        "quasi",
        "--out",
        path(&out),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("cap"));
}

#[test]
fn ate_on_randomized_treatment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    // Deterministic pseudo-random rows: w uniform-ish, t alternating, y = 2t + w.
    let mut csv = String::from("w,t,y\n");
    let mut state = 12345u64;
    for i in 0..2000 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let w = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
        let t = (i % 2) as f64;
        csv.push_str(&format!("{w},{t},{}\n", 2.0 * t + w));
    }
    fs::write(&data, csv).unwrap();
    for method in ["ipw", "quasi", "vb", "k2", "full"] {
        let out = ok(&[
            "ate",
            "--data",
            path(&data),
            "--treatment",
            "t",
            "--outcome",
            "y",
            "--covariates",
            "w",
            "--method",
            method,
            "--center",
        ]);
        let v: f64 = out.trim().parse().unwrap();
        assert!((v - 2.0).abs() < 0.1, "{method}: {v}");
    }
    assert!(!run(&[
        "ate",
        "--data",
        path(&data),
        "--treatment",
        "t",
        "--outcome",
        "y",
        "--covariates",
        "w",
        "--method",
        "mc",
    ])
    .status
    .success());
}

#[test]
fn errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "a,b\n1,2\n3,\n").unwrap();
    let space = dir.path().join("s.json");
    fs::write(
        &space,
        r#"{"nodes":["a","b"],"edges":[{"from":"a","to":"b","prob":0.5}]}"#,
    )
    .unwrap();
    let res = run(&[
        "estimate",
        "--data",
        path(&data),
        "--space",
        path(&space),
        "--method",
        "vb",
        "--x",
        "a",
        "--y",
        "b",
    ]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("row") && err.contains('b'), "{err}");

    let cyclic = dir.path().join("c.json");
    fs::write(
        &cyclic,
        r#"{"nodes":["a","b"],"edges":[{"from":"a","to":"b","prob":0.5},{"from":"b","to":"a","prob":0.5}]}"#,
    )
    .unwrap();
    let res = run(&["gen", "--space", path(&cyclic), "--n", "5", "--seed", "1"]);
    assert!(!res.status.success());

    let res = run(&[
        "estimate",
        "--data",
        path(&data),
        "--space",
        path(&space),
        "--method",
        "magic",
        "--x",
        "a",
        "--y",
        "b",
    ]);
    assert!(!res.status.success());
}
