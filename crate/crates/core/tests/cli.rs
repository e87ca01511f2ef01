use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmlstm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmlstm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mmlstm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = r#"
hidden_sizes = [8]
ablations = ["UM", "MM_VLVL", "MM_VLL"]

[paths]
data = "data"
out = "runs"

[train]
epochs = 2
seeds = [1]

[synth]
images = 30
"#;

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("small.toml"), SMALL).unwrap();
    let cfg = ["--config", "small.toml"];

    let s = ok(d, &[&cfg[..], &["synth", "--seed", "4"]].concat());
    assert!(s.contains("30 images"), "{s}");
    assert!(d.join("data/captions.jsonl").exists());
    assert!(d.join("data/sim/synth-en-es.tsv").exists());

    ok(d, &[&cfg[..], &["validate"]].concat());

    let train = ok(d, &[&cfg[..], &["train"]].concat());
    assert!(train.contains("MM_VLL"), "{train}");
    assert!(d.join("runs/n8/MM/1.ckpt").exists());
    assert!(d.join("runs/n8/UM/1.log.jsonl").exists());

    // Recomputing from checkpoints reproduces the training report exactly.
    let grid = fs::read_to_string(d.join("runs/ppl.csv")).unwrap();
    ok(d, &[&cfg[..], &["ppl"]].concat());
    assert_eq!(fs::read_to_string(d.join("runs/ppl.csv")).unwrap(), grid);

    let sim = ok(d, &[&cfg[..], &["sim"]].concat());
    assert!(sim.contains("synth-en-es"), "{sim}");
    assert!(d.join("runs/sim.csv").exists());

    let sample = ok(
        d,
        &[&cfg[..], &["sample", "--ablation", "MM_VLVL", "--image", "img00000", "--lang", "es"]].concat(),
    );
    let first = sample.lines().next().unwrap();
    assert!(first.starts_with("un "), "{sample}");
    assert!(sample.contains("reference\t"), "{sample}");
}

#[test]
fn convert_simdata() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("men.txt"), "sun-n sunlight-n 50.0\nCar-n automobile-n 49.0\ncat-n dog-n 35\n").unwrap();
    let s = ok(d, &["convert-simdata", "men", "men.txt", "men.tsv"]);
    assert!(s.starts_with("MEN: 3 pairs"), "{s}");
    let tsv = fs::read_to_string(d.join("men.tsv")).unwrap();
    assert!(tsv.contains("car\tautomobile"), "{tsv}");
    assert!(!tsv.contains("-n"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["validate", "--profile", "huge"][..],
        &["validate", "--config", "missing.toml"],
        &["validate"],
        &["train", "--ablation", "XX"],
        &["convert-simdata", "nope", "a", "b"],
    ] {
        let out = mmlstm(d, args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{args:?}");
    }
    // Usage errors come from the argument parser.
    assert!(!mmlstm(d, &["frobnicate"]).status.success());
}
