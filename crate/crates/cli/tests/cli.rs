//! End-to-end checks of the `cowherd` binary: exit codes, output
//! schemas, and byte determinism under a fixed seed.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn cowherd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cowherd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn generate_writes_data_model_and_manifest() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("gen");
    let res = cowherd(&[
        "generate",
        "--what",
        "synthetic",
        "--n",
        "200",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let data = String::from_utf8(read(&out.join("data.csv"))).unwrap();
    assert!(data.starts_with("m,t,s\n"));
    assert_eq!(data.lines().count(), 201);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 16);
    let model: serde_json::Value = serde_json::from_slice(&read(&out.join("model.json"))).unwrap();
    assert_eq!(model["z"][0], 0.5);
}

#[test]
fn sweights_pipeline_reads_generated_csv() {
    let dir = tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_ok(&cowherd(&[
        "generate",
        "--what",
        "synthetic",
        "--n",
        "800",
        "--seed",
        "9",
        "--out",
        gen.to_str().unwrap(),
    ]));
    let out = dir.path().join("sw");
    let res = cowherd(&[
        "sweights",
        "--data",
        gen.join("data.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&res);
    let metrics: serde_json::Value =
        serde_json::from_slice(&read(&out.join("metrics.json"))).unwrap();
    let z = metrics["metrics"]["z_hat"].as_f64().unwrap();
    assert!((z - 0.5).abs() < 0.1, "z_hat {z}");
    let curve = String::from_utf8(read(&out.join("signal_t.csv"))).unwrap();
    assert!(curve.starts_with("t,estimate,truth\n"));
}

#[test]
fn every_stochastic_verb_is_byte_deterministic() {
    let dir = tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_ok(&cowherd(&[
        "generate",
        "--what",
        "synthetic",
        "--n",
        "400",
        "--seed",
        "3",
        "--out",
        gen.to_str().unwrap(),
    ]));
    let data = gen.join("data.csv");
    let data = data.to_str().unwrap();

    // verb name, fixed args, produced files to compare.
    let runs: Vec<(&str, Vec<String>, Vec<&str>)> = vec![
        (
            "nmf",
            vec![
                "--data".into(),
                data.into(),
                "--seed".into(),
                "7".into(),
                "--bins".into(),
                "12".into(),
            ],
            vec!["metrics.json", "factors_t.csv"],
        ),
        (
            "gof",
            vec![
                "--data".into(),
                data.into(),
                "--seed".into(),
                "7".into(),
                "--b".into(),
                "99".into(),
            ],
            vec!["metrics.json"],
        ),
        (
            "band",
            vec![
                "--data".into(),
                data.into(),
                "--seed".into(),
                "7".into(),
                "--b".into(),
                "199".into(),
            ],
            vec!["metrics.json", "band_t.csv"],
        ),
    ];
    for (verb, args, files) in runs {
        let a = dir.path().join(format!("{verb}_a"));
        let b = dir.path().join(format!("{verb}_b"));
        for out in [&a, &b] {
            let mut all: Vec<String> = vec![verb.into()];
            all.extend(args.iter().cloned());
            all.push("--out".into());
            all.push(out.to_str().unwrap().into());
            let strs: Vec<&str> = all.iter().map(|s| s.as_str()).collect();
            assert_ok(&cowherd(&strs));
        }
        for name in files {
            assert_eq!(
                read(&a.join(name)),
                read(&b.join(name)),
                "{verb}: {name} differs between runs"
            );
        }
    }
}

#[test]
fn generate_is_byte_deterministic_for_every_generator() {
    let dir = tempdir().unwrap();
    for what in [
        "synthetic",
        "synthetic-fixed",
        "copula-toy",
        "ot",
        "bounds-1",
        "bounds-2",
        "condind",
        "copula-mixture",
    ] {
        let a = dir.path().join(format!("{what}_a"));
        let b = dir.path().join(format!("{what}_b"));
        for out in [&a, &b] {
            assert_ok(&cowherd(&[
                "generate",
                "--what",
                what,
                "--n",
                "150",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ]));
        }
        assert_eq!(
            read(&a.join("data.csv")),
            read(&b.join("data.csv")),
            "{what} data differs between runs"
        );
    }
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempdir().unwrap();
    // Unknown generator id.
    let res = cowherd(&[
        "generate",
        "--what",
        "nope",
        "--n",
        "100",
        "--seed",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    // Missing input file.
    let res = cowherd(&[
        "sweights",
        "--data",
        dir.path().join("missing.csv").to_str().unwrap(),
        "--out",
        dir.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    // Malformed CSV.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "m,t\n0.5,oops\n").unwrap();
    let res = cowherd(&[
        "sweights",
        "--data",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("z").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    // Missing required flag trips the arg parser.
    let res = cowherd(&["generate", "--n", "100"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempdir().unwrap();
    // Every mass value sits deep in the background tail, where the
    // signal weight is negative; the band's estimated signal mass is
    // then negative, which is a numerical breakdown, not bad input.
    let tail = dir.path().join("tail.csv");
    let mut text = String::from("m,t\n");
    for i in 0..300 {
        text.push_str(&format!(
            "{},{}\n",
            0.95 + 0.0001 * (i % 100) as f64,
            0.001 * i as f64
        ));
    }
    fs::write(&tail, text).unwrap();
    let res = cowherd(&[
        "band",
        "--data",
        tail.to_str().unwrap(),
        "--seed",
        "1",
        "--b",
        "199",
        "--out",
        dir.path().join("bd").to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn bounds_envelope_json_has_the_mask() {
    let dir = tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_ok(&cowherd(&[
        "generate",
        "--what",
        "bounds-1",
        "--n",
        "600",
        "--seed",
        "21",
        "--out",
        gen.to_str().unwrap(),
    ]));
    let env_path = dir.path().join("envelope.json");
    assert_ok(&cowherd(&[
        "bounds",
        "--data",
        gen.join("data.csv").to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        env_path.to_str().unwrap(),
    ]));
    let env: serde_json::Value = serde_json::from_slice(&read(&env_path)).unwrap();
    let lower = env["lower"].as_array().unwrap();
    let upper = env["upper"].as_array().unwrap();
    assert_eq!(lower.len(), upper.len());
    for (l, u) in lower.iter().zip(upper) {
        assert!(l.as_f64().unwrap() <= u.as_f64().unwrap() + 1e-12);
    }
    assert!(env["n_feasible"].as_u64().unwrap() > 0);
    assert!(!env["theta"].as_array().unwrap().is_empty());
}

#[test]
fn condind_verb_reads_a_matrix() {
    let dir = tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_ok(&cowherd(&[
        "generate",
        "--what",
        "condind",
        "--n",
        "600",
        "--seed",
        "31",
        "--out",
        gen.to_str().unwrap(),
    ]));
    let out = dir.path().join("ci");
    assert_ok(&cowherd(&[
        "condind",
        "--data",
        gen.join("data.csv").to_str().unwrap(),
        "--k",
        "2",
        "--sweeps",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]));
    let metrics: serde_json::Value =
        serde_json::from_slice(&read(&out.join("metrics.json"))).unwrap();
    let pi = metrics["metrics"]["pi"].as_array().unwrap();
    assert_eq!(pi.len(), 2);
    let s: f64 = pi.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((s - 1.0).abs() < 1e-6);
}

#[test]
fn optw_runs_from_a_model_file() {
    let dir = tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert_ok(&cowherd(&[
        "generate",
        "--what",
        "synthetic",
        "--n",
        "400",
        "--seed",
        "41",
        "--out",
        gen.to_str().unwrap(),
    ]));
    let out = dir.path().join("ow");
    assert_ok(&cowherd(&[
        "optw",
        "--f",
        "t",
        "--model",
        gen.join("model.json").to_str().unwrap(),
        "--data",
        gen.join("data.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let metrics: serde_json::Value =
        serde_json::from_slice(&read(&out.join("metrics.json"))).unwrap();
    let opt = metrics["metrics"]["sigma2_opt"].as_f64().unwrap();
    let splot = metrics["metrics"]["sigma2_splot"].as_f64().unwrap();
    assert!(opt <= splot + 1e-12, "sigma2 {opt} vs splot {splot}");
    assert!(metrics["metrics"]["psi_hat_opt"].is_f64());
    // Kernel targets parse too.
    assert_ok(&cowherd(&[
        "optw",
        "--f",
        "kernel:0.2,0.05",
        "--model",
        gen.join("model.json").to_str().unwrap(),
        "--out",
        dir.path().join("ow2").to_str().unwrap(),
    ]));
    let res = cowherd(&[
        "optw",
        "--f",
        "kernel:bad",
        "--model",
        gen.join("model.json").to_str().unwrap(),
        "--out",
        dir.path().join("ow3").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn run_verb_consumes_a_config_file() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"generator":"synthetic","n":500,"seed":13,"method":"sweights","params":{}}"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_ok(&cowherd(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    for name in ["metrics.json", "signal_t.csv", "data.csv"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }
    // Seedless config is refused.
    fs::write(
        &cfg,
        r#"{"generator":"synthetic","n":500,"method":"sweights","params":{}}"#,
    )
    .unwrap();
    let res = cowherd(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}
