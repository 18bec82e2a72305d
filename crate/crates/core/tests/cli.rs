use std::path::Path;
use std::process::{Command, Output};

fn sno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sno")).args(args).output().expect("run sno")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn gen(out: &Path, n: &str, count: &str) {
    ok(&sno(&[
        "gen-data", "--system", "wave", "--c", "0.05", "--n", n, "--dt", "0.1", "--count", count, "--seed", "7", "--out",
        path(out),
    ]));
}

fn small_model(kind: &str) -> Vec<&str> {
    vec!["--model", kind, "--stages", "1", "--width", "4", "--depth", "2", "--k-max", "4", "--hidden", "6"]
}

#[test]
fn gen_data_writes_the_requested_pairs_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen(&a, "128", "2000");
    gen(&b, "128", "2000");
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["count"], 2000);
    assert!(a.join("gen_data_config.json").exists());
    let bytes = std::fs::read(a.join("dataset.bin")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("dataset.bin")).unwrap());
    let payload = 2000 * 4 * 128 * 8;
    assert!(bytes.len() > payload);
}

#[test]
fn cfl_violation_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sno(&["gen-data", "--c", "1", "--n", "101", "--dt", "0.02", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("CFL"), "{err}");
    assert!(!dir.path().join("dataset.bin").exists());
}

#[test]
fn unknown_flags_and_missing_files_exit_with_one() {
    assert_eq!(sno(&["gen-data", "--bogus"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ckpt");
    let out = sno(&["diagnose", "--checkpoint", path(&missing), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ckpt"));
}

#[test]
fn train_eval_and_diagnose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    gen(&data_dir, "32", "64");
    let data = data_dir.join("dataset.bin");

    let mut runs = Vec::new();
    for kind in ["sno", "fno"] {
        let out_dir = dir.path().join(kind);
        let mut args = vec!["train", "--data", path(&data), "--epochs", "1", "--batch-size", "8", "--out", path(&out_dir)];
        args.extend(small_model(kind));
        ok(&sno(&args));
        for f in ["last.ckpt", "best.ckpt", "metrics.csv", "train_config.json"] {
            assert!(out_dir.join(f).exists(), "{kind}: missing {f}");
        }
        let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 2);
        runs.push(out_dir);
    }
    let manifest = |d: &Path| {
        let c = sno::train::Checkpoint::load(d.join("last.ckpt")).unwrap();
        serde_json::to_value(&c.manifest).unwrap()
    };
    let (m_sno, m_fno) = (manifest(&runs[0]), manifest(&runs[1]));
    assert_ne!(m_sno, m_fno);
    assert_eq!(m_sno["model"]["kind"], "sno");
    assert_eq!(m_fno["model"]["kind"], "fno");

    let eval_dir = dir.path().join("eval");
    let ckpt = runs[0].join("best.ckpt");
    ok(&sno(&[
        "eval", "--checkpoint", path(&ckpt), "--steps", "1000", "--n-init", "10", "--backward", "--out", path(&eval_dir),
    ]));
    let summary = std::fs::read_to_string(eval_dir.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    let steps: Vec<usize> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    let mut expected = vec![1];
    expected.extend((1..=10).map(|k| 10 * k));
    expected.extend((2..=10).map(|k| 100 * k));
    assert_eq!(steps, expected);
    for i in 0..10 {
        assert!(eval_dir.join(format!("rollout_{i:03}.csv")).exists());
        assert!(eval_dir.join(format!("backward_{i:03}.csv")).exists());
    }
    assert!(eval_dir.join("structure.json").exists());

    let fno_eval = sno(&[
        "eval", "--checkpoint", path(&runs[1].join("last.ckpt")), "--steps", "5", "--n-init", "1", "--backward", "--out",
        path(&dir.path().join("fno_eval")),
    ]);
    assert_eq!(fno_eval.status.code(), Some(2));

    let diag_dir = dir.path().join("diag");
    ok(&sno(&["diagnose", "--checkpoint", path(&ckpt), "--out", path(&diag_dir)]));
    let report = json(&diag_dir.join("structure.json"));
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        ["inverse_residual", "model", "samples", "self_adjointness_defect", "symplectic_defect"].iter().collect::<Vec<_>>()
    );
    assert!(report["symplectic_defect"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn fresh_sno_diagnosis_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = sno(&["diagnose", "--n", "64", "--out", path(dir.path())]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["symplectic_defect", "self_adjointness_defect", "inverse_residual"] {
        let v = report[key].as_f64().unwrap();
        assert!(v <= 1e-12, "{key} = {v:e}");
    }
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    gen(&data_dir, "32", "64");
    let data = data_dir.join("dataset.bin");
    let base = |out: &Path| {
        let mut v: Vec<String> = ["train", "--data", path(&data), "--epochs", "3", "--batch-size", "8", "--seed", "4", "--out", path(out)]
            .iter()
            .map(|s| s.to_string())
            .collect();
        v.extend(small_model("sno").iter().map(|s| s.to_string()));
        v
    };
    let run = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&sno(&refs));
    };
    let full = dir.path().join("full");
    run(base(&full));

    let part = dir.path().join("part");
    let mut first = base(&part);
    first.extend(["--stop-after".to_string(), "1".to_string()]);
    run(first);
    let mut second = base(&part);
    second.push("--resume".to_string());
    run(second);

    for f in ["last.ckpt", "best.ckpt"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(part.join(f)).unwrap(), "{f}");
    }
    let losses = |d: &Path| -> Vec<String> {
        std::fs::read_to_string(d.join("metrics.csv"))
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(5).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(losses(&full), losses(&part));
}
