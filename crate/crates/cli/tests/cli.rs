use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use thermoseg_core::benchmark::{run_benchmark, BenchmarkConfig};

const SCENE: &str = "\
id = plate-a
rows = 32
cols = 32
frames = 40
frame_rate = 10
thickness = 0.004
layers = 16
pulse_energy = 2e4
defect = rect 10 11 8 9 0.0005 0.0005
noise_sigma = 0.01
seed = 3
";

fn thermoseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermoseg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = thermoseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `root` with its bytes.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.clone(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn simulated_store(tmp: &TempDir) -> PathBuf {
    let scene = tmp.path().join("scene.cfg");
    std::fs::write(&scene, SCENE).unwrap();
    let store = tmp.path().join("store");
    ok(&["simulate", p(&scene), "--out", p(&store)]);
    store
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = thermoseg(&["split", "--banana"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(thermoseg(&[]).status.code(), Some(2));
}

#[test]
fn split_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let store = simulated_store(&tmp);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["split", "--store", p(&store), "--seed", "7", "--k", "1", "--out", p(out)]);
    }
    let plan_a = std::fs::read(a.join("split.plan")).unwrap();
    assert_eq!(plan_a, std::fs::read(b.join("split.plan")).unwrap());
    assert!(String::from_utf8_lossy(&plan_a).contains("plate-a"));
    assert!(std::fs::read_to_string(a.join("run-split.cfg")).unwrap().contains("seed = 7"));

    let bad = thermoseg(&["split", "--store", p(&store), "--seed", "7", "--ratios", "0.5,0.5", "--out", p(&a)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn eval_without_ground_truth_names_file_and_field() {
    let tmp = TempDir::new().unwrap();
    let store = simulated_store(&tmp);
    let preds = tmp.path().join("preds");
    ok(&["segment", "--store", p(&store), "--ids", "plate-a", "--out", p(&preds)]);
    for entry in std::fs::read_dir(store.join("plate-a")).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap().to_string_lossy().starts_with("mask") {
            std::fs::remove_file(path).unwrap();
        }
    }
    let out = thermoseg(&["eval", "--store", p(&store), "--predictions", p(&preds), "--out", p(&tmp.path().join("ev"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("mask.pgm") && err.contains("ground_truth"), "{err}");
}

#[test]
fn stages_write_only_below_out() {
    let tmp = TempDir::new().unwrap();
    let store = simulated_store(&tmp);
    let before = snapshot(&store);
    let enh = tmp.path().join("enh");
    for method in ["pca", "ppt", "tsr"] {
        let out = ok(&["--threads", "2", "enhance", "--store", p(&store), "--method", method, "--components", "4", "--degree", "3", "--out", p(&enh)]);
        assert!(!out.stdout.is_empty());
    }
    for stack in ["pca", "ppt_phase", "ppt_amplitude", "tsr_coeff", "tsr_deriv1", "tsr_deriv2"] {
        assert!(enh.join(format!("plate-a.{stack}")).join("meta").is_file(), "{stack}");
    }

    let pre = tmp.path().join("pre");
    ok(&["preprocess", "--store", p(&store), "--warmup", "2", "--cooloff", "5", "--interval", "3", "--size", "48", "--out", p(&pre)]);
    let meta = std::fs::read_to_string(pre.join("plate-a").join("meta")).unwrap();
    // (40 - 2 - 5) / 3 = 11 frames of 48 × 48.
    assert!(meta.contains("f = 11") && meta.contains("m = 48"), "{meta}");
    assert!(pre.join("plate-a").join("mask.pgm").is_file());

    let prompts = tmp.path().join("prompts.txt");
    std::fs::write(&prompts, "# one box\nd1 8 9 19 21\n").unwrap();
    let seg = tmp.path().join("seg");
    ok(&["segment", "--store", p(&store), "--ids", "plate-a", "--prompts", p(&prompts), "--frame", "6", "--out", p(&seg)]);
    let summary = std::fs::read_to_string(seg.join("plate-a").join("summary.txt")).unwrap();
    assert!(summary.contains("d1 found"), "{summary}");
    assert!(seg.join("run-segment.cfg").is_file());

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "d1 8 9 40 21\n").unwrap();
    let out = thermoseg(&["segment", "--store", p(&store), "--ids", "plate-a", "--prompts", p(&bad), "--out", p(&seg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.txt"));

    assert_eq!(snapshot(&store), before, "inputs must not change");
    assert_eq!(thermoseg(&["--threads", "0", "split", "--store", p(&store), "--seed", "1", "--out", p(&seg)]).status.code(), Some(1));
}

#[test]
fn benchmark_pipeline_reproduces_library_report() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("bench");
    let pre = tmp.path().join("pre");
    let seg = tmp.path().join("seg");
    let ev = tmp.path().join("eval");
    ok(&["simulate", "--benchmark", "--out", p(&store)]);
    // Identity preprocessing: every frame kept at native size.
    ok(&["preprocess", "--store", p(&store), "--warmup", "0", "--cooloff", "0", "--interval", "1", "--size", "64", "--no-correct", "--out", p(&pre)]);
    ok(&["segment", "--store", p(&pre), "--out", p(&seg)]);
    ok(&["eval", "--store", p(&pre), "--predictions", p(&seg), "--out", p(&ev)]);

    let expected = run_benchmark(&BenchmarkConfig::default()).unwrap().report;
    assert_eq!(std::fs::read_to_string(ev.join("report.csv")).unwrap(), expected.to_csv());
    assert_eq!(std::fs::read_to_string(ev.join("defects.csv")).unwrap(), expected.defects_csv());
}
