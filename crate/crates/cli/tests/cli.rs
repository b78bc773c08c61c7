use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ino(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ino")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = ino(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_DARCY: [&str; 6] = ["--n", "9", "--fine-resolution", "31", "--resolutions", "16,31"];

fn gen_darcy(dir: &Path, out: &str) {
    let mut args = vec!["gen", "darcy", "--seed", "7", "--out", out];
    args.extend(SMALL_DARCY);
    ok(&args, dir);
}

fn train_small(dir: &Path, data: &str, out: &str, extra: &[&str]) -> String {
    let mut args = vec!["train", "--data", data, "--out", out, "--dh", "4", "--kernel", "8", "--epochs", "3"];
    if !extra.contains(&"--L") {
        args.extend(["--L", "2"]);
    }
    args.extend(extra);
    ok(&args, dir)
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn darcy_generation_is_byte_identical_and_lists_resolutions() {
    let t = tempfile::tempdir().unwrap();
    gen_darcy(t.path(), "d1");
    gen_darcy(t.path(), "d2");
    // config.json echoes the output path
    let data_only = |d: &str| tree(&t.path().join(d)).into_iter().filter(|(n, _)| n != "config.json").collect::<Vec<_>>();
    let (a, b) = (data_only("d1"), data_only("d2"));
    assert!(a.len() > 10);
    assert_eq!(a, b);
    let manifest = fs::read_to_string(t.path().join("d1/manifest")).unwrap();
    assert!(manifest.contains("resolution = 16") && manifest.contains("resolution = 31"), "{manifest}");
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("d1/config.json")).unwrap()).unwrap();
    assert_eq!(config["seed"], 7);
    assert_eq!(config["darcy"]["n_train"], 5);
}

#[test]
fn lps_needs_explicit_moduli() {
    let t = tempfile::tempdir().unwrap();
    let out = ino(&["gen", "lps", "--n", "3", "--spacing", "0.1", "--out", "l"], t.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("moduli"));
    assert!(!t.path().join("l").exists());
    let s = ok(&["gen", "lps", "--n", "3", "--spacing", "0.1", "--placeholder-moduli", "--out", "l"], t.path());
    assert!(s.contains("vector2,scalar"), "{s}");
}

#[test]
fn usage_errors_and_help() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(ino(&["train", "--no-such-flag"], t.path()).status.code(), Some(1));
    assert_eq!(ino(&["frobnicate"], t.path()).status.code(), Some(1));
    for sub in ["gen", "train", "eval", "gradcheck", "inspect"] {
        let out = ino(&[sub, "--help"], t.path());
        assert!(out.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    assert_eq!(ino(&["train"], t.path()).status.code(), Some(2));
}

#[test]
fn train_eval_and_deepen() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    gen_darcy(p, "d");
    train_small(p, "d", "t4", &["--arch", "ino-scalar", "--ntrain", "3"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("t4/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_train"], 3);
    assert_eq!(report["epochs"].as_array().unwrap().len(), 3);
    assert!(p.join("t4/checkpoint/manifest").exists());

    let s = ok(
        &[
            "eval", "--checkpoint", "t4/checkpoint", "--data", "d/res16", "--sweep", "rotate", "--Cs", "0,0.785,1.571,3.1416",
            "--trials", "2", "--check-theorems", "--cross-res", "d/res31", "--out", "e",
        ],
        p,
    );
    assert!(s.contains("check invariance") && s.contains("pass"), "{s}");
    assert!(s.contains("ratio"), "{s}");
    let csv = fs::read_to_string(p.join("e/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("e/report.json")).unwrap()).unwrap();
    assert_eq!(r["meta"]["checkpoint"], "t4/checkpoint");

    train_small(p, "d", "t8", &["--arch", "ino-scalar", "--init-from", "t4/checkpoint", "--L", "4"]);
    let s = ok(&["inspect", "t8/checkpoint"], p);
    assert!(s.contains("L 4") && s.contains("tau 0.25"), "{s}");
    let out = ino(&["train", "--data", "d", "--out", "bad", "--arch", "gno", "--init-from", "t4/checkpoint", "--epochs", "2"], p);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn augmented_baseline_quadruples_training_set() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    gen_darcy(p, "d");
    train_small(p, "d", "a", &["--arch", "gno", "--augment", "3", "--aug-translate", "1", "--aug-rotate", "6.2831853"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("a/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_train"], 20);
}

#[test]
fn layout_mismatch_names_channels() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    gen_darcy(p, "d");
    ok(&["gen", "lps", "--n", "3", "--spacing", "0.1", "--placeholder-moduli", "--out", "l"], p);
    train_small(p, "d", "t", &[]);
    let out = ino(&["eval", "--checkpoint", "t/checkpoint", "--data", "l", "--split", "all"], p);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("vector2") && err.contains("scalar"), "{err}");
}

#[test]
fn gradcheck_passes_and_rejects_corrupted_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    for arch in ["ino-scalar", "gno", "ino-vector", "ino-vector-position", "norm-ino"] {
        let s = ok(&["gradcheck", "--arch", arch, "--m", "4", "--dh", "4"], p);
        assert!(s.contains("all"), "{s}");
    }
    gen_darcy(p, "d");
    train_small(p, "d", "t", &[]);
    ok(&["gradcheck", "--checkpoint", "t/checkpoint"], p);
    let f = p.join("t/checkpoint/layer.W.bin");
    let bytes = fs::read(&f).unwrap();
    fs::write(&f, &bytes[..bytes.len() / 2]).unwrap();
    let out = ino(&["gradcheck", "--checkpoint", "t/checkpoint"], p);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_overrides() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    fs::write(
        p.join("c.json"),
        r#"{"seed": 3, "darcy": {"fine_resolution": 31, "resolutions": [16], "n_train": 2, "n_validation": 1, "n_test": 1},
            "paths": {"out": "from-file"}}"#,
    )
    .unwrap();
    ok(&["gen", "darcy", "--config", "c.json", "--out", "from-flag"], p);
    assert!(p.join("from-flag/res16/manifest").exists());
    assert!(!p.join("from-file").exists());
    let echoed = fs::read_to_string(p.join("from-flag/config.json")).unwrap();
    assert!(echoed.contains("\"from-flag\"") && echoed.contains("\"seed\": 3"), "{echoed}");
    let s = ok(&["inspect", "from-flag/res16"], p);
    assert!(s.contains("4 samples") && s.contains("seed 3"), "{s}");
}
