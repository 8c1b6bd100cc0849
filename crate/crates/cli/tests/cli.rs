use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn c2g(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_c2g"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// The machine-readable error is the last stderr line.
fn error_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("stderr not empty");
    serde_json::from_str(last).expect("last stderr line is JSON")
}

fn synth(dir: &Path, per_class: usize, seed: &str) {
    let out = c2g(&[
        "-q",
        "--seed",
        seed,
        "synth",
        "-o",
        dir.to_str().unwrap(),
        "--per-class",
        &per_class.to_string(),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["images"], 2 * per_class);
}

#[test]
fn help_exits_zero() {
    let out = c2g(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "estimate-grid",
        "compress",
        "augment",
        "synth",
        "train",
        "eval",
        "inspect-weights",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(c2g(&["compress", "--help"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_exits_two_and_names_it() {
    let out = c2g(&["compress", "--frobnicate", "x", "-o", "y"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_line(&out);
    assert_eq!(e["error"]["kind"], "usage");
    assert!(e["error"]["message"]
        .as_str()
        .unwrap()
        .contains("--frobnicate"));
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"compress": {"d_um": 5.0, "spacing": 3}}"#).unwrap();
    let out = c2g(&[
        "--config",
        cfg.to_str().unwrap(),
        "compress",
        "in.csv",
        "-o",
        "out",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("spacing"));

    let out = c2g(&["--set", "train.bach_size=4", "eval", "-m", "m", "x.c2g"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = c2g(&[
        "-q",
        "compress",
        dir.path().join("absent.csv").to_str().unwrap(),
        "-o",
        dir.path().join("out").to_str().unwrap(),
        "--d",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"]["kind"], "data");
}

#[test]
fn compress_auto_on_synth_batch() {
    let dir = tempfile::tempdir().unwrap();
    let objs = dir.path().join("objs");
    synth(&objs, 3, "11");

    let est = stdout_json(&c2g(&["-q", "estimate-grid", objs.to_str().unwrap()]));
    let grids = dir.path().join("grids");
    let out = c2g(&[
        "-q",
        "compress",
        objs.to_str().unwrap(),
        "-o",
        grids.to_str().unwrap(),
        "--auto",
        "--report",
        "json",
    ]);
    let r = stdout_json(&out);
    assert_eq!(r["estimated"], true);
    assert_eq!(r["d_um"], est["d_um"]);
    let images = r["images"].as_array().unwrap();
    assert_eq!(images.len(), 6);
    for s in images {
        let objects = s["objects"].as_u64().unwrap();
        let kept = s["kept_in_place"].as_u64().unwrap() + s["shifted"].as_u64().unwrap();
        assert_eq!(kept + s["deleted"].as_u64().unwrap(), objects);
        assert!(objects > 3000);
    }
    assert!(r["timing"]["seconds"].is_number());

    for name in r["outputs"].as_array().unwrap() {
        let path = grids.join(name.as_str().unwrap());
        let img = c2g::container::read_c2g(&path).unwrap();
        let id = path.file_stem().unwrap().to_str().unwrap();
        let stats = images.iter().find(|s| s["id"] == id).unwrap();
        assert_eq!(
            img.occupied_count() as u64,
            stats["objects"].as_u64().unwrap() - stats["deleted"].as_u64().unwrap()
        );
        let want_label = if id.starts_with("synth_c1") { 1 } else { 0 };
        assert_eq!(img.label(), Some(want_label));
    }
    assert!(grids.join("report.json").exists());
}

#[test]
fn identical_invocations_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let objs = dir.path().join("objs");
    synth(&objs, 2, "3");
    let again = dir.path().join("objs2");
    synth(&again, 2, "3");
    for entry in fs::read_dir(&objs).unwrap() {
        let p = entry.unwrap().path();
        let q = again.join(p.file_name().unwrap());
        assert_eq!(
            fs::read(&p).unwrap(),
            fs::read(&q).unwrap(),
            "{}",
            p.display()
        );
    }

    let mut reports = Vec::new();
    for k in 0..2 {
        let grids = dir.path().join(format!("grids{k}"));
        let out = c2g(&[
            "-q",
            "compress",
            objs.to_str().unwrap(),
            "-o",
            grids.to_str().unwrap(),
            "--d",
            "5",
            "--report",
            "json",
        ]);
        let mut r = stdout_json(&out);
        r.as_object_mut().unwrap().remove("timing");
        reports.push(r);
        let aug = dir.path().join(format!("aug{k}"));
        let out = c2g(&[
            "-q",
            "--seed",
            "9",
            "augment",
            grids.to_str().unwrap(),
            "-o",
            aug.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(reports[0], reports[1]);
    for sub in ["grids", "aug"] {
        for entry in fs::read_dir(dir.path().join(format!("{sub}0"))).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "c2g") {
                let q = dir
                    .path()
                    .join(format!("{sub}1"))
                    .join(p.file_name().unwrap());
                assert_eq!(
                    fs::read(&p).unwrap(),
                    fs::read(&q).unwrap(),
                    "{}",
                    p.display()
                );
            }
        }
    }
}

#[test]
fn augment_writes_previews_and_depends_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let objs = dir.path().join("objs");
    synth(&objs, 1, "4");
    let grids = dir.path().join("grids");
    assert!(c2g(&[
        "-q",
        "compress",
        objs.to_str().unwrap(),
        "-o",
        grids.to_str().unwrap(),
        "--d",
        "5"
    ])
    .status
    .success());

    let run = |seed: &str, name: &str| {
        let aug = dir.path().join(name);
        let prev = dir.path().join(format!("{name}_prev"));
        let out = c2g(&[
            "-q",
            "--seed",
            seed,
            "augment",
            grids.to_str().unwrap(),
            "-o",
            aug.to_str().unwrap(),
            "--preview",
            prev.to_str().unwrap(),
            "--copies",
            "2",
            "--report",
            "json",
        ]);
        let records = stdout_json(&out);
        assert_eq!(records.as_array().unwrap().len(), 4);
        assert!(prev.join("synth_c0_0000.before.png").exists());
        assert!(prev.join("synth_c0_0000.aug1.png").exists());
        fs::read(aug.join("synth_c0_0000.aug0.c2g")).unwrap()
    };
    let a = run("1", "a");
    let b = run("2", "b");
    assert_ne!(a, b);

    // everything off: output equals input
    let out = c2g(&[
        "-q",
        "--set",
        "augment.translate.p=0",
        "--set",
        "augment.reflect.p=0",
        "--set",
        "augment.rotate.p=0",
        "--set",
        "augment.blackout.p=0",
        "--set",
        "augment.shuffle.p=0",
        "--set",
        "augment.channel_brightness.p=0",
        "--set",
        "augment.global_brightness.p=0",
        "--set",
        "augment.delete_pixels.p=0",
        "augment",
        grids.to_str().unwrap(),
        "-o",
        dir.path().join("id").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let before = c2g::container::read_c2g(&grids.join("synth_c0_0000.c2g")).unwrap();
    let after =
        c2g::container::read_c2g(&dir.path().join("id").join("synth_c0_0000.aug0.c2g")).unwrap();
    assert_eq!(before.data(), after.data());
    assert_eq!(before.occupancy(), after.occupancy());
}

#[test]
fn train_eval_inspect_round() {
    let dir = tempfile::tempdir().unwrap();
    let objs = dir.path().join("objs");
    synth(&objs, 3, "8");
    let grids = dir.path().join("grids");
    assert!(c2g(&[
        "-q",
        "compress",
        objs.to_str().unwrap(),
        "-o",
        grids.to_str().unwrap(),
        "--d",
        "5"
    ])
    .status
    .success());

    let model_dir = dir.path().join("model");
    let out = c2g(&[
        "-q",
        "--seed",
        "2",
        "train",
        grids.to_str().unwrap(),
        "-o",
        model_dir.to_str().unwrap(),
        "--epochs",
        "1",
        "--runs",
        "2",
        "--batch-size",
        "4",
        "--report",
        "json",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["model"], "DeepLNiNo");
    assert_eq!(report["resolution"], "135x101");
    assert_eq!(report["parameters"], 9762);
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert!(report["timing"]["mean_seconds"].is_number());
    assert!(model_dir.join("report.json").exists());

    let model = model_dir.join("run_01.c2gm");
    let e = stdout_json(&c2g(&[
        "-q",
        "eval",
        "-m",
        model.to_str().unwrap(),
        grids.to_str().unwrap(),
    ]));
    assert_eq!(e["images"], 6);
    let b = e["balanced_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&b));

    let csv = dir.path().join("w.csv");
    let png = dir.path().join("w.png");
    let w = stdout_json(&c2g(&[
        "-q",
        "inspect-weights",
        "-m",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--heatmap",
        png.to_str().unwrap(),
        "--threshold",
        "0.1",
    ]));
    assert_eq!(w["weights"].as_array().unwrap().len(), 16);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 16);
    assert!(png.exists());

    let bad = c2g(&[
        "-q",
        "eval",
        "-m",
        grids.join("synth_c0_0000.c2g").to_str().unwrap(),
        grids.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn thread_count_does_not_change_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let objs = dir.path().join("objs");
    synth(&objs, 2, "6");
    let grids = dir.path().join("grids");
    assert!(c2g(&[
        "-q",
        "compress",
        objs.to_str().unwrap(),
        "-o",
        grids.to_str().unwrap(),
        "--d",
        "5"
    ])
    .status
    .success());
    let mut models = Vec::new();
    for jobs in ["1", "3"] {
        let out_dir = dir.path().join(format!("j{jobs}"));
        let out = c2g(&[
            "-q",
            "--jobs",
            jobs,
            "--seed",
            "4",
            "train",
            grids.to_str().unwrap(),
            "-o",
            out_dir.to_str().unwrap(),
            "--epochs",
            "1",
            "--runs",
            "2",
            "--batch-size",
            "2",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        models.push([
            fs::read(out_dir.join("run_00.c2gm")).unwrap(),
            fs::read(out_dir.join("run_01.c2gm")).unwrap(),
        ]);
    }
    assert_eq!(models[0], models[1]);
}
