use std::path::Path;
use std::process::{Command, Output};

fn pcdenoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcdenoise")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

const TINY: &str = r#"{
  "model": { "units": [{ "k": 4, "widths": [4, 4] }], "score_hidden": 4, "prefilter_hidden": 4, "manifold_hidden": [8] },
  "training": { "steps": 3, "batch_size": 2, "checkpoint_every": 2 },
  "data": { "shapes": ["sphere"], "n_points": 128, "patch_size": 32, "seeds": [0] }
}"#;

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();

    let gen = pcdenoise(&["gen-data", "--shapes", "sphere,plane", "--points", "256", "--noise", "1,2", "--patch-size", "64", "--seed", "3", "--out", &d("data")]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("data/dataset.json")).unwrap()).unwrap();
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["entries"][0]["n_patches"], 4);
    assert!(Path::new(&d("data/run.json")).exists());

    std::fs::write(d("cfg.json"), TINY).unwrap();
    let train = pcdenoise(&["train", "--config", &d("cfg.json"), "--out", &d("run")]);
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
    for f in ["checkpoint.bin", "checkpoint-000002.bin", "train_log.csv", "run.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("run/run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "train");
    assert_eq!(run["config"]["training"]["steps"], 3);

    let noisy = format!("{}/sphere_n2_s3_noisy.ply", d("data"));
    let den = pcdenoise(&["denoise", "--checkpoint", &d("run/checkpoint.bin"), "--in", &noisy, "--out", &d("out.xyz"), "--iterations", "2"]);
    assert_eq!(code(&den), 0, "{}", String::from_utf8_lossy(&den.stderr));
    assert_eq!(std::fs::read_to_string(d("out.xyz")).unwrap().lines().count(), 256);
    assert!(Path::new(&d("out.xyz.run.json")).exists());

    let mesh = d("sphere.off");
    let sphere = pcdenoise_core::data::generate_shape(&pcdenoise_core::data::ShapeSpec::Sphere { radius: 1.0, segments: 48, rings: 24 }).unwrap();
    pcdenoise::io::write_off(Path::new(&mesh), &sphere).unwrap();
    let clean = format!("{}/sphere_n2_s3_clean.ply", d("data"));
    let ev = pcdenoise(&["eval", "--denoised", &d("out.xyz"), "--clean", &clean, "--mesh", &mesh, "--report", &d("report.json")]);
    assert_eq!(code(&ev), 0, "{}", String::from_utf8_lossy(&ev.stderr));
    let report = pcdenoise::pipeline::MetricsReport::load(Path::new(&d("report.json"))).unwrap();
    assert!(report.aggregate.cd > 0.0 && report.aggregate.p2s > 0.0);

    let resume = pcdenoise(&["train", "--config", &d("cfg.json"), "--out", &d("run2"), "--resume", &d("run/checkpoint-000002.bin")]);
    assert_eq!(code(&resume), 0, "{}", String::from_utf8_lossy(&resume.stderr));
    assert_eq!(std::fs::read(d("run2/checkpoint.bin")).unwrap(), std::fs::read(d("run/checkpoint.bin")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pcdenoise(&[])), 1);
    assert_eq!(code(&pcdenoise(&["train", "--bogus"])), 1);
    assert_eq!(code(&pcdenoise(&["--help"])), 0);

    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"training": {"batch_size": 0}}"#).unwrap();
    let o = pcdenoise(&["train", "--config", bad_cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));

    let missing = dir.path().join("nope.bin");
    let o = pcdenoise(&["denoise", "--checkpoint", missing.to_str().unwrap(), "--in", "x.xyz", "--out", "y.xyz"]);
    assert_eq!(code(&o), 2);

    let garbage = dir.path().join("garbage.bin");
    std::fs::write(&garbage, b"not a checkpoint at all, just bytes").unwrap();
    let o = pcdenoise(&["denoise", "--checkpoint", garbage.to_str().unwrap(), "--in", "x.xyz", "--out", "y.xyz"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));

    let diverge = dir.path().join("diverge.json");
    std::fs::write(
        &diverge,
        TINY.replace(r#""steps": 3,"#, r#""steps": 30, "optimizer": {"kind": "sgd", "lr": 1e300},"#),
    )
    .unwrap();
    let o = pcdenoise(&["train", "--config", diverge.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
