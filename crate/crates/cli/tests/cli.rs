use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skihl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skihl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) {
    let text = format!(
        "rows = 32\ncols = 32\nseed = 3\nnoise_sigma = 1.0\nepochs = 15\n\
         raster = \"data/scene.skr\"\nlabels = \"data/labels.csv\"\ntruth = \"data/truth.pgm\"\n\
         output_dir = \"out\"\n{extra}"
    );
    fs::write(dir.join("c.toml"), text).unwrap();
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid json")
}

#[test]
fn synth_run_baseline_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, "");

    let out = skihl(dir, &["synth", "--config", "c.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["scene.skr", "labels.csv", "truth.pgm", "truth.raw", "scene.provenance.json"] {
        assert!(dir.join("data").join(f).exists(), "{f}");
    }
    let record = json(&fs::read(dir.join("data/scene.provenance.json")).unwrap());
    assert_eq!(record["config"]["seed"], 3);

    let out = skihl(dir, &["run", "--config", "c.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&fs::read(dir.join("out/report.json")).unwrap());
    assert_eq!(report["mode"], "selective");
    assert_eq!(report["levels"].as_array().unwrap().len(), 3);
    let metrics = json(&fs::read(dir.join("out/metrics.json")).unwrap());
    assert!(metrics["avu"]["t_u"].as_f64().is_some());
    for level in 0..3 {
        for kind in ["inferred", "uncertainty", "classifier"] {
            for ext in ["pgm", "raw"] {
                assert!(dir.join(format!("out/level{level}_{kind}.{ext}")).exists());
            }
        }
        assert!(dir.join(format!("out/level{level}_frontier.csv")).exists());
    }
    assert!(fs::read(dir.join("out/model.ckpt")).unwrap().starts_with(b"SKIHL-MODEL 1\n"));

    let out = skihl(dir, &["baseline", "--config", "c.toml"]);
    assert!(out.status.success());
    assert!(dir.join("out/baseline_metrics.json").exists());

    let out = skihl(
        dir,
        &[
            "eval", "--pred", "data/truth.pgm", "--truth", "data/truth.pgm", "--unc", "out/uncertainty.pgm",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ev = json(&out.stdout);
    assert_eq!(ev["accuracy"], 1.0);
    assert_eq!(ev["macro_f1"], 1.0);
}

#[test]
fn full_grounding_flag_grounds_more() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, "");
    assert!(skihl(dir, &["synth", "--config", "c.toml"]).status.success());
    assert!(skihl(dir, &["run", "--config", "c.toml"]).status.success());
    let selective = json(&fs::read(dir.join("out/report.json")).unwrap());
    assert!(skihl(dir, &["run", "--config", "c.toml", "--full-grounding"]).status.success());
    let full = json(&fs::read(dir.join("out/report.json")).unwrap());
    assert_eq!(full["mode"], "full");
    assert!(
        selective["total_ground_rules"].as_u64().unwrap() <= full["total_ground_rules"].as_u64().unwrap()
    );
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, "eta = 1\n");
    assert!(skihl(dir, &["synth", "--config", "c.toml"]).status.success());
    let out = skihl(dir, &["run", "--config", "c.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));

    let out = skihl(dir, &["run", "--config", "missing.toml"]);
    assert!(!out.status.success());

    write_config(dir, "");
    fs::write(dir.join("data/labels.csv"), "0,0,1\n0,0,0\n").unwrap();
    let out = skihl(dir, &["run", "--config", "c.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = skihl(dir, &["eval", "--pred", "x.raw", "--truth", "y.raw", "--unc", "z.raw"]);
    assert!(!out.status.success());
}
