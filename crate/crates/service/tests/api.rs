use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ndarray::Array3;
use serde_json::{json, Value};
use tempfile::TempDir;
use thermoseg_core::dataset::{GroundTruth, SamplingConfig, SequenceStore, ThermalSequence};
use thermoseg_core::mask::{Mask, PixelRect};
use thermoseg_core::physics::SimScene;
use thermoseg_service::{router, AppState};
use tower::ServiceExt;

const ROWS: usize = 24;
const COLS: usize = 24;
const FRAMES: usize = 40;
const DEFECT: PixelRect = PixelRect { row0: 8, col0: 9, row1: 12, col1: 14 };

/// A cooling plate with one block that stays warmer, plus ground truth.
fn plate(id: &str) -> (ThermalSequence, GroundTruth) {
    let frames = Array3::from_shape_fn((FRAMES, ROWS, COLS), |(k, r, c)| {
        let t = (k + 1) as f32;
        let base = 20.0 / t.sqrt() + 0.01 * c as f32;
        let bump = if DEFECT.contains(r, c) { 3.0 * (-(t - 8.0).powi(2) / 40.0).exp() } else { 0.0 };
        base + bump
    });
    let seq = ThermalSequence::new(id, frames, 10.0).unwrap();
    let gt = GroundTruth::from_instances(id, ROWS, COLS, vec![(1, Mask::rect(ROWS, COLS, DEFECT))]).unwrap();
    (seq, gt)
}

struct Fixture {
    dir: TempDir,
    app: Router,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let store = SequenceStore::open(dir.path()).unwrap();
        for (id, with_gt) in [("a", true), ("b", false)] {
            let (seq, gt) = plate(id);
            store.write_sequence(&seq).unwrap();
            if with_gt {
                store.write_ground_truth(&gt).unwrap();
            }
        }
        let state = Arc::new(AppState::new(store, SamplingConfig::default()));
        Fixture { dir, app: router(state) }
    }

    async fn send(&self, req: Request<Body>) -> (StatusCode, Option<String>, Vec<u8>) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string());
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, ctype, body)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, _, b) = self.send(Request::get(uri).body(Body::empty()).unwrap()).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let req = Request::post(uri)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (s, _, b) = self.send(req).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    fn snapshot(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![self.dir.path().to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }
}

fn prompt(id: &str, r: PixelRect) -> Value {
    json!({"id": id, "row0": r.row0, "col0": r.col0, "row1": r.row1, "col1": r.col1})
}

fn runs(mask: &Mask) -> Value {
    json!(thermoseg_service::dto::mask_to_runs(mask))
}

#[tokio::test]
async fn lists_sequences_with_ground_truth_flags() {
    let fx = Fixture::new();
    let (s, v) = fx.get("/sequences").await;
    assert_eq!(s, StatusCode::OK);
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert_eq!(list[0]["id"], "a");
    assert_eq!(list[0]["has_ground_truth"], true);
    assert_eq!(list[1]["has_ground_truth"], false);
    assert_eq!(list[0]["frames"], FRAMES);
    assert_eq!(list[0]["annotators"], json!([]));
}

#[tokio::test]
async fn frame_renders_png_of_sequence_size() {
    let fx = Fixture::new();
    for uri in ["/sequences/a/frames/3", "/sequences/a/frames/20?colormap=iron&corrected=true&min=-1&max=4"] {
        let (s, ctype, body) = fx.send(Request::get(uri).body(Body::empty()).unwrap()).await;
        assert_eq!(s, StatusCode::OK, "{uri}");
        assert_eq!(ctype.as_deref(), Some("image/png"));
        let img = image::load_from_memory(&body).unwrap();
        assert_eq!((img.width(), img.height()), (COLS as u32, ROWS as u32));
    }
}

#[tokio::test]
async fn frame_errors_name_the_field() {
    let fx = Fixture::new();
    let (s, v) = fx.get("/sequences/a/frames/40").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "k");
    // Frame 3 lies in the warm-up stage, which correction drops.
    let (s, v) = fx.get("/sequences/a/frames/3?corrected=true").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "k");
    let (s, v) = fx.get("/sequences/a/frames/3?colormap=jet").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "colormap");
    let (s, v) = fx.get("/sequences/a/frames/3?min=2").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "max");
    let (s, v) = fx.get("/sequences/zzz/frames/0").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not-found");
}

#[tokio::test]
async fn curve_returns_raw_and_corrected_values() {
    let fx = Fixture::new();
    let (seq, _) = plate("a");
    let (s, v) = fx.get("/sequences/a/curve?row=10&col=11").await;
    assert_eq!(s, StatusCode::OK);
    let raw: Vec<f64> = serde_json::from_value(v["raw"].clone()).unwrap();
    let expected = seq.pixel_curve(10, 11);
    assert_eq!(raw.len(), expected.len());
    assert!(raw.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
    let corrected: Vec<f64> = serde_json::from_value(v["corrected"].clone()).unwrap();
    assert_eq!(corrected.len(), FRAMES - 30);
    assert_eq!(v["first_corrected_frame"], 15);
    let tail: f64 = raw[FRAMES - 15..].iter().sum::<f64>() / 15.0;
    assert!((corrected[0] - (raw[15] - tail)).abs() < 1e-9);

    let (s, v) = fx.get("/sequences/a/curve?row=24&col=0").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "row");
}

#[tokio::test]
async fn segment_finds_the_warm_block() {
    let fx = Fixture::new();
    let before = fx.snapshot();
    let boxed = PixelRect { row0: 7, col0: 8, row1: 13, col1: 15 };
    for body in [
        json!({"prompts": [prompt("d1", boxed)]}),
        json!({"prompts": [prompt("d1", boxed)], "frame": 8}),
        json!({"prompts": [prompt("d1", boxed)], "method": "peak", "margin": 0.2}),
    ] {
        let (s, v) = fx.post("/sequences/a/segment", body.clone()).await;
        assert_eq!(s, StatusCode::OK, "{body} -> {v}");
        let p = &v["prompts"][0];
        assert_eq!(p["status"], "found");
        assert_eq!(p["runs"], runs(&Mask::rect(ROWS, COLS, DEFECT)), "{body}");
        assert_eq!(v["semantic"], p["runs"]);
    }
    assert_eq!(fx.snapshot(), before, "segmentation must not write to the store");
}

#[tokio::test]
async fn segment_rejects_bad_prompts_without_side_effects() {
    let fx = Fixture::new();
    let before = fx.snapshot();
    let ok = prompt("d1", PixelRect { row0: 1, col0: 1, row1: 3, col1: 3 });
    let bad = prompt("d2", PixelRect { row0: 1, col0: 1, row1: 24, col1: 3 });
    let (s, v) = fx.post("/sequences/a/segment", json!({"prompts": [ok, bad]})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "validation");
    assert_eq!(v["field"], "prompts[1].row1");

    let inverted = prompt("d1", PixelRect { row0: 5, col0: 1, row1: 3, col1: 3 });
    let (_, v) = fx.post("/sequences/a/segment", json!({"prompts": [inverted]})).await;
    assert_eq!(v["field"], "prompts[0].row0");
    let (_, v) = fx.post("/sequences/a/segment", json!({"prompts": [ok.clone(), ok.clone()]})).await;
    assert_eq!(v["field"], "prompts[1].id");
    let (_, v) = fx.post("/sequences/a/segment", json!({"prompts": []})).await;
    assert_eq!(v["field"], "prompts");
    let (_, v) = fx.post("/sequences/a/segment", json!({"prompts": [ok.clone()], "method": "pca"})).await;
    assert_eq!(v["error"], "not-found");
    let (_, v) = fx.post("/sequences/a/segment", json!({"prompts": [ok], "method": "fourier"})).await;
    assert_eq!(v["field"], "method");
    assert_eq!(fx.snapshot(), before);
}

#[tokio::test]
async fn annotations_are_idempotent() {
    let fx = Fixture::new();
    let mask = Mask::rect(ROWS, COLS, DEFECT);
    let body = json!({
        "sequence_id": "a",
        "annotator": "expert-1",
        "prompts": [prompt("d1", DEFECT)],
        "mask": runs(&mask),
    });
    let (s, first) = fx.post("/annotations", body.clone()).await;
    assert_eq!(s, StatusCode::OK, "{first}");
    assert_eq!(first["changed"], true);
    assert_eq!(first["record"]["pixels"], mask.count());
    let stored = fx.snapshot();

    tokio::time::sleep(Duration::from_millis(1100)).await;
    let (s, second) = fx.post("/annotations", body.clone()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(second["changed"], false);
    assert_eq!(second["record"], first["record"]);
    assert_eq!(fx.snapshot(), stored, "identical payload must not touch the store");

    let (_, listed) = fx.get("/sequences").await;
    assert_eq!(listed[0]["annotators"], json!(["expert-1"]));

    let mut changed = body;
    changed["mask"] = json!([[0, 0, 1]]);
    let (_, third) = fx.post("/annotations", changed).await;
    assert_eq!(third["changed"], true);
    assert_eq!(third["record"]["pixels"], 2);
    assert_ne!(fx.snapshot(), stored);
}

#[tokio::test]
async fn annotation_validation_and_conflicts() {
    let fx = Fixture::new();
    let base = json!({"sequence_id": "a", "annotator": "x", "mask": [[0, 0, 0]]});
    let mut bad = base.clone();
    bad["mask"] = json!([[0, 0, 0], [3, 5, 24]]);
    let (s, v) = fx.post("/annotations", bad).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "mask[1]");
    let mut bad = base.clone();
    bad["annotator"] = json!("../x");
    assert_eq!(fx.post("/annotations", bad).await.1["field"], "annotator");
    let mut bad = base.clone();
    bad["sequence_id"] = json!("missing");
    assert_eq!(fx.post("/annotations", bad).await.0, StatusCode::NOT_FOUND);

    std::fs::write(fx.dir.path().join(".lock"), b"").unwrap();
    let (s, v) = fx.post("/annotations", base.clone()).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "conflict");
    std::fs::remove_file(fx.dir.path().join(".lock")).unwrap();
    assert_eq!(fx.post("/annotations", base).await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_annotations_on_one_sequence_all_land() {
    let fx = Arc::new(Fixture::new());
    let mut tasks = Vec::new();
    for i in 0..8 {
        let fx = fx.clone();
        tasks.push(tokio::spawn(async move {
            let body = json!({"sequence_id": "a", "annotator": format!("ann{i}"), "mask": [[i, 0, i]]});
            fx.post("/annotations", body).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, listed) = fx.get("/sequences").await;
    assert_eq!(listed[0]["annotators"].as_array().unwrap().len(), 8);
}

#[tokio::test]
async fn eval_reports_metrics_and_csv() {
    let fx = Fixture::new();
    let (s, v) = fx.post("/eval", json!({"ids": ["a"]})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["images"][0]["id"], "a");
    assert_eq!(v["defect_recall"], 1.0);
    assert!(v["iou"]["mean"].as_f64().unwrap() > 0.99);
    assert!(v["csv"].as_str().unwrap().starts_with("id,iou,precision,recall,f2\n"));
    assert!(v["defects_csv"].as_str().unwrap().starts_with("id,defect,matched,iou\n"));

    let plan = "a\ttest\t0\nb\ttrain\t1\n";
    let (s, v) = fx.post("/eval", json!({"plan": plan, "split": "test"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["images"].as_array().unwrap().len(), 1);
    assert_eq!(v["images"][0]["fold"], 0);

    let (s, v) = fx.post("/eval", json!({"ids": ["b"]})).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");
    let (s, v) = fx.post("/eval", json!({"ids": ["a"], "gamma": 0})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "gamma");
    let (_, v) = fx.post("/eval", json!({"plan": plan, "split": "holdout"})).await;
    assert_eq!(v["field"], "split");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn simulate_runs_as_a_job() {
    let fx = Fixture::new();
    let mut scene = SimScene::plate(8, 8, 12);
    scene.id = "sim".into();
    scene.layers = 8;
    let (s, v) = fx.post("/simulate", json!({"scene": scene.to_config().unwrap().to_text()})).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let job = v["id"].as_u64().unwrap();
    let mut state = Value::Null;
    for _ in 0..600 {
        let (_, v) = fx.get(&format!("/jobs/{job}")).await;
        state = v;
        if state["state"] == "done" || state["state"] == "failed" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert_eq!(state["state"], "done", "{state}");
    assert_eq!(state["sequence_id"], "sim");
    let (_, listed) = fx.get("/sequences").await;
    let sim = listed.as_array().unwrap().iter().find(|s| s["id"] == "sim").unwrap();
    assert_eq!(sim["frames"], 12);
    assert_eq!(sim["has_ground_truth"], true);

    let (s, v) = fx.post("/simulate", json!({"scene": "rows = banana"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "scene");
    assert_eq!(fx.get("/jobs/999").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn repeated_eval_is_byte_identical() {
    let fx = Fixture::new();
    let body = json!({"ids": ["a"], "margin": 0.15});
    let req = || {
        Request::post("/eval")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap()
    };
    let (s1, _, first) = fx.send(req()).await;
    let (s2, _, second) = fx.send(req()).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
}

#[tokio::test]
async fn corrected_curve_of_sound_plate_decays_after_pulse() {
    let fx = Fixture::new();
    let mut scene = SimScene::plate(8, 8, 45);
    scene.id = "sound".into();
    scene.layers = 12;
    let sim = thermoseg_core::physics::simulate_sequence(&scene).unwrap();
    let store = SequenceStore::open(fx.dir.path()).unwrap();
    store.write_sequence(&sim.sequence).unwrap();

    let (s, v) = fx.get("/sequences/sound/curve?row=3&col=2").await;
    assert_eq!(s, StatusCode::OK);
    let corrected: Vec<f64> = serde_json::from_value(v["corrected"].clone()).unwrap();
    assert_eq!(corrected.len(), 45 - 30);
    assert!(corrected.windows(2).all(|w| w[1] < w[0]), "{corrected:?}");
    let raw: Vec<f64> = serde_json::from_value(v["raw"].clone()).unwrap();
    let peak = raw.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(raw[peak..].windows(2).all(|w| w[1] <= w[0]));
}
