use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_structparse"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/treeconv")
}

/// Synthesize `count` scenes and train on them for `iterations` steps.
fn trained(dir: &Path, count: usize, iterations: usize) -> PathBuf {
    let out = run(dir, &["synth", "--count", &count.to_string(), "--out", "data"]);
    assert!(out.status.success(), "{}", stderr(&out));
    fs::write(
        dir.join("cfg.json"),
        format!(r#"{{"iterations": {iterations}, "batch_size": 2, "checkpoint_interval": 5}}"#),
    )
    .unwrap();
    let out = run(
        dir,
        &["train", "--manifest", "data/manifest.json", "--config", "cfg.json", "--out", "model.json"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("model.json")
}

#[test]
fn help_lists_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        ("synth", &["--spec", "--count", "--first", "--out"]),
        ("convert", &["--tree", "--lexicon", "--out"]),
        ("train", &["--manifest", "--config", "--out", "--log"]),
        ("parse", &["--image", "--checkpoint", "--classes", "--config", "--vocab", "--dot"]),
        ("eval", &["--manifest", "--checkpoint", "--config"]),
        ("gradcheck", &["--seed", "--eps", "--config"]),
    ];
    for (cmd, flags) in cases {
        let out = bin().args([cmd, "--help"]).output().unwrap();
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in *flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["gradcheck", "--sed", "1"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["synth", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &[]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["eval", "--manifest", "missing.json", "--checkpoint", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("c.json"), "{}", stderr(&out));

    fs::write(dir.path().join("broken.json"), "{not json").unwrap();
    let out = run(dir.path(), &["train", "--manifest", "broken.json", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("broken.json"));
    assert!(out.stdout.is_empty());

    fs::write(dir.path().join("cfg.json"), r#"{"lr": -1}"#).unwrap();
    let out = run(dir.path(), &["gradcheck", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["synth", "--count", "3", "--out", "d"]);
    fs::write(
        dir.path().join("c.json"),
        r#"{"iterations": 3, "lr": 1e300, "momentum": 0.0, "batch_size": 1}"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &["train", "--manifest", "d/manifest.json", "--config", "c.json", "--out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gradcheck", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout_json(&out);
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["seed"], 7);
}

#[test]
fn convert_reproduces_golden_trees() {
    let dir = tempfile::tempdir().unwrap();
    let lexicon = fixtures().join("lexicon.json");
    let mut seen = 0;
    for entry in fs::read_dir(fixtures()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.to_string_lossy().into_owned();
        if !name.ends_with(".tree.json") {
            continue;
        }
        let expected = fs::read(name.replace(".tree.json", ".expected.json")).unwrap();
        let out = run(dir.path(), &["convert", "--tree", &name, "--lexicon", lexicon.to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        assert_eq!(out.stdout, expected, "{name}");
        let target = dir.path().join("st.json");
        let out = run(
            dir.path(),
            &["convert", "--tree", &name, "--lexicon", lexicon.to_str().unwrap(), "--out", target.to_str().unwrap()],
        );
        assert!(out.status.success());
        assert_eq!(fs::read(&target).unwrap(), expected, "{name}");
        seen += 1;
    }
    assert!(seen >= 10);
}

#[test]
fn synth_is_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(dir.path(), &["synth", "--count", "5", "--first", "3", "--out", "data"]);
        assert!(out.status.success());
        assert_eq!(stdout_json(&out)["count"], 5);
    }
    let mut names: Vec<_> = fs::read_dir(a.path().join("data")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 16);
    for name in names {
        assert_eq!(
            fs::read(a.path().join("data").join(&name)).unwrap(),
            fs::read(b.path().join("data").join(&name)).unwrap()
        );
    }
}

#[test]
fn train_parse_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ckpt = trained(d, 6, 10);
    let log = fs::read_to_string(d.join("model.log.jsonl")).unwrap();
    let iters: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["iter"].as_u64().unwrap())
        .collect();
    assert_eq!(iters, (0..10).collect::<Vec<_>>());
    assert!(d.join("model.iter000005.json").exists());
    assert_eq!(fs::read(d.join("model.iter000010.json")).unwrap(), fs::read(&ckpt).unwrap());

    let image = d.join("data/sample_0000.ppm");
    let out = run(
        d,
        &[
            "parse",
            "--image",
            image.to_str().unwrap(),
            "--checkpoint",
            "model.json",
            "--classes",
            "1,2,3",
            "--dot",
            "t.dot",
            "--vocab",
            "data/manifest.json",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let tree = stdout_json(&out);
    assert!(tree["rel"].is_u64());
    let dot = fs::read_to_string(d.join("t.dot")).unwrap();
    assert!(dot.starts_with("digraph parse"));
    assert!(dot.contains("red") && dot.contains("green") && dot.contains("blue"));

    let out = run(d, &["parse", "--image", image.to_str().unwrap(), "--checkpoint", "model.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    stdout_json(&out);

    let out = bin()
        .current_dir(d)
        .env("STRUCTPARSE_THREADS", "1")
        .args(["eval", "--manifest", "data/manifest.json", "--checkpoint", "model.json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout_json(&out);
    assert_eq!(report["samples"], 6);
    for key in ["mean_iou", "structure_accuracy", "relation_accuracy"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(stderr(&out).contains("relation accuracy"));
}

#[test]
fn single_class_parse_merges_with_background() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d, 4, 2);
    let out = run(
        d,
        &["parse", "--image", "data/sample_0001.ppm", "--checkpoint", "model.json", "--classes", "2"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let tree = stdout_json(&out);
    let mut leaves = vec![
        tree["left"]["leaf"]["category"].as_u64().unwrap(),
        tree["right"]["leaf"]["category"].as_u64().unwrap(),
    ];
    leaves.sort();
    assert_eq!(leaves, vec![0, 2]);
}

#[test]
fn training_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    trained(a.path(), 5, 6);
    trained(b.path(), 5, 6);
    for f in ["model.json", "model.log.jsonl", "model.iter000005.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
