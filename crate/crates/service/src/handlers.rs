use std::collections::HashMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use ndarray::{Array2, Axis};
use serde::Deserialize;

use thermoseg_core::benchmark::{evaluate_stored, segment_sequence};
use thermoseg_core::config::KvDocument;
use thermoseg_core::dataset::{residual_heat_correct, SequenceStore, Split, SplitPlan, ThermalSequence};
use thermoseg_core::enhance::{contrast_map, Background, EnhanceMethod, EnhancedStack};
use thermoseg_core::metrics::{EvalConfig, DEFAULT_MATCH_IOU};
use thermoseg_core::physics::{simulate_sequence, SimScene};
use thermoseg_core::promptseg::{segment_with_prompts, BoxPrompt, SegmentParams, SegmentationResult, DEFAULT_MARGIN};

use crate::dto::*;
use crate::error::{ApiError, ApiResult};
use crate::render::{render_png, Colormap};
use crate::AppState;

/// Runs blocking store or compute work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn read_sequence(store: &SequenceStore, id: &str) -> ApiResult<ThermalSequence> {
    store.read_sequence(id).map_err(|e| ApiError::from_core(e, "id"))
}

pub async fn list_sequences(State(app): State<Arc<AppState>>) -> ApiResult<Json<Vec<SequenceSummary>>> {
    blocking(move || {
        let store = &app.store;
        let ids = store.list().map_err(|e| ApiError::from_core(e, "store"))?;
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let meta = store.read_meta(&id).map_err(|e| ApiError::from_core(e, "meta"))?;
            let annotators = store
                .read_annotations(&id)
                .map_err(|e| ApiError::from_core(e, "annotations"))?
                .into_iter()
                .map(|(a, _)| a)
                .collect();
            out.push(SequenceSummary {
                has_ground_truth: store.has_ground_truth(&id),
                method: meta.extra.parse_opt::<String>("method").ok().flatten(),
                id,
                rows: meta.rows,
                cols: meta.cols,
                frames: meta.frames,
                frame_rate: meta.frame_rate,
                source: meta.source.to_string(),
                system_tag: meta.system_tag.to_string(),
                sample_tag: meta.sample_tag.to_string(),
                ambient: meta.ambient,
                annotators,
            });
        }
        Ok(Json(out))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct FrameQuery {
    colormap: Option<String>,
    corrected: Option<bool>,
    min: Option<f64>,
    max: Option<f64>,
}

/// Frame `k` as an `(m, n)` array, optionally residual-heat corrected.
fn frame_values(app: &AppState, seq: &ThermalSequence, k: usize, corrected: bool) -> ApiResult<Array2<f64>> {
    let f = seq.frame_count();
    if k >= f {
        return Err(ApiError::validation("k", format!("frame {k} out of range 0..{f}")));
    }
    if !corrected {
        return Ok(seq.frame(k).mapv(f64::from));
    }
    let out = residual_heat_correct(seq, &app.sampling).map_err(|e| ApiError::from_core(e, "corrected"))?;
    let j = out.local_index(k).ok_or_else(|| {
        ApiError::validation(
            "k",
            format!(
                "frame {k} is outside the corrected range {}..{}",
                out.first_frame,
                out.first_frame + out.frames.len_of(Axis(0))
            ),
        )
    })?;
    Ok(out.frames.index_axis(Axis(0), j).to_owned())
}

pub async fn get_frame(
    State(app): State<Arc<AppState>>,
    Path((id, k)): Path<(String, usize)>,
    Query(q): Query<FrameQuery>,
) -> ApiResult<impl IntoResponse> {
    let cmap = match q.colormap.as_deref() {
        None => Colormap::Gray,
        Some(s) => Colormap::parse(s)
            .ok_or_else(|| ApiError::validation("colormap", format!("unknown colormap `{s}`; use gray or iron")))?,
    };
    let range = match (q.min, q.max) {
        (None, None) => None,
        (Some(lo), Some(hi)) if lo < hi => Some((lo, hi)),
        (Some(_), Some(_)) => return Err(ApiError::validation("min", "min must be below max")),
        _ => return Err(ApiError::validation("max", "min and max must be given together")),
    };
    let png = blocking(move || {
        let seq = read_sequence(&app.store, &id)?;
        let frame = frame_values(&app, &seq, k, q.corrected.unwrap_or(false))?;
        Ok(render_png(frame.view(), cmap, range))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

#[derive(Debug, Deserialize)]
pub struct CurveQuery {
    row: usize,
    col: usize,
}

pub async fn get_curve(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<CurveQuery>,
) -> ApiResult<Json<Curve>> {
    blocking(move || {
        let seq = read_sequence(&app.store, &id)?;
        if q.row >= seq.rows() {
            return Err(ApiError::validation("row", format!("row {} out of range 0..{}", q.row, seq.rows())));
        }
        if q.col >= seq.cols() {
            return Err(ApiError::validation("col", format!("col {} out of range 0..{}", q.col, seq.cols())));
        }
        let (corrected, first) = match residual_heat_correct(&seq, &app.sampling) {
            Ok(out) => (Some(out.frames.slice(ndarray::s![.., q.row, q.col]).to_vec()), Some(out.first_frame)),
            Err(_) => (None, None),
        };
        Ok(Json(Curve {
            row: q.row,
            col: q.col,
            frame_rate: seq.frame_rate,
            raw: seq.pixel_curve(q.row, q.col),
            corrected,
            first_corrected_frame: first,
        }))
    })
    .await
}

fn check_prompts(prompts: &[PromptBody], rows: usize, cols: usize) -> ApiResult<Vec<BoxPrompt>> {
    let mut seen = std::collections::BTreeSet::new();
    prompts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let field = |f: &str| format!("prompts[{i}].{f}");
            if p.id.is_empty() || p.id.contains(char::is_whitespace) || p.id.contains(['/', '\\']) {
                return Err(ApiError::validation(field("id"), format!("invalid prompt id `{}`", p.id)));
            }
            if !seen.insert(p.id.clone()) {
                return Err(ApiError::validation(field("id"), format!("duplicate prompt id `{}`", p.id)));
            }
            if p.row1 >= rows {
                return Err(ApiError::validation(field("row1"), format!("{} exceeds last row {}", p.row1, rows - 1)));
            }
            if p.col1 >= cols {
                return Err(ApiError::validation(field("col1"), format!("{} exceeds last column {}", p.col1, cols - 1)));
            }
            if p.row0 > p.row1 {
                return Err(ApiError::validation(field("row0"), "row0 must not exceed row1"));
            }
            if p.col0 > p.col1 {
                return Err(ApiError::validation(field("col0"), "col0 must not exceed col1"));
            }
            Ok(BoxPrompt { id: p.id.clone(), rect: p.rect() })
        })
        .collect()
}

fn segment_response(id: String, surface: String, result: SegmentationResult) -> SegmentResponse {
    SegmentResponse {
        sequence_id: id,
        surface,
        margin: result.params.margin,
        threshold_override: result.params.threshold_override,
        semantic: mask_to_runs(&result.semantic),
        prompts: result
            .prompts
            .iter()
            .map(|p| PromptOutcome {
                id: p.prompt.id.clone(),
                status: p.status.to_string(),
                confidence: p.confidence,
                threshold: p.threshold,
                seed: [p.seed.0, p.seed.1],
                expanded: PromptBody {
                    id: p.prompt.id.clone(),
                    row0: p.expanded.row0,
                    col0: p.expanded.col0,
                    row1: p.expanded.row1,
                    col1: p.expanded.col1,
                },
                pixels: p.mask.count(),
                runs: mask_to_runs(&p.mask),
            })
            .collect(),
    }
}

pub async fn post_segment(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<SegmentRequest>,
) -> ApiResult<Json<SegmentResponse>> {
    let params = SegmentParams {
        margin: req.margin.unwrap_or(DEFAULT_MARGIN),
        threshold_override: req.threshold,
    };
    if !(params.margin.is_finite() && params.margin >= 0.0) {
        return Err(ApiError::validation("margin", "margin must be a finite value ≥ 0"));
    }
    if params.threshold_override.is_some_and(|t| !t.is_finite()) {
        return Err(ApiError::validation("threshold", "threshold must be finite"));
    }
    if req.prompts.is_empty() {
        return Err(ApiError::validation("prompts", "at least one prompt is required"));
    }
    if req.frame.is_some() && req.method.is_some() {
        return Err(ApiError::validation("method", "give either frame or method, not both"));
    }
    blocking(move || {
        let seq = read_sequence(&app.store, &id)?;
        let prompts = check_prompts(&req.prompts, seq.rows(), seq.cols())?;
        let (surface, result) = match (req.frame, req.method.as_deref()) {
            (Some(k), None) => {
                let frame = frame_values(&app, &seq, k, req.corrected)?;
                let map = contrast_map(frame.view(), &Background::FrameMedian).map_err(|e| ApiError::from_core(e, "frame"))?;
                let r = segment_with_prompts(map.image.view(), &prompts, &params).map_err(|e| ApiError::from_core(e, "prompts"))?;
                (format!("frame {k}{}", if req.corrected { " corrected" } else { "" }), r)
            }
            (None, None) | (None, Some("peak")) => {
                let r = segment_sequence(&seq, &prompts, &params).map_err(|e| ApiError::from_core(e, "prompts"))?;
                ("peak".to_string(), r)
            }
            (None, Some(m)) => {
                let method: EnhanceMethod =
                    m.parse().map_err(|e: thermoseg_core::Error| ApiError::validation("method", e.to_string()))?;
                let stack_id = format!("{id}.{method}");
                let stack = EnhancedStack::read(&app.store, &stack_id).map_err(|e| ApiError::from_core(e, "method"))?;
                let k = req.image.unwrap_or(0);
                if k >= stack.len() {
                    return Err(ApiError::validation("image", format!("image {k} out of range 0..{}", stack.len())));
                }
                if stack.images.dim().1 != seq.rows() || stack.images.dim().2 != seq.cols() {
                    return Err(ApiError::validation("method", "stored stack does not match the sequence size"));
                }
                let map = contrast_map(stack.image(k), &Background::FrameMedian).map_err(|e| ApiError::from_core(e, "image"))?;
                let r = segment_with_prompts(map.image.view(), &prompts, &params).map_err(|e| ApiError::from_core(e, "prompts"))?;
                (format!("{stack_id} image {k}"), r)
            }
            (Some(_), Some(_)) => unreachable!("rejected above"),
        };
        Ok(Json(segment_response(id, surface, result)))
    })
    .await
}

fn read_record(store: &SequenceStore, id: &str, annotator: &str) -> Option<AnnotationRecord> {
    let path = store.annotation_path(id, annotator).with_extension("json");
    let bytes = std::fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

pub async fn post_annotation(
    State(app): State<Arc<AppState>>,
    Json(req): Json<AnnotationRequest>,
) -> ApiResult<Json<AnnotationResponse>> {
    let valid_annotator = !req.annotator.is_empty()
        && !req.annotator.starts_with('.')
        && req.annotator.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !valid_annotator {
        return Err(ApiError::validation("annotator", format!("invalid annotator id `{}`", req.annotator)));
    }
    let key = req.sequence_id.clone();
    let lock = {
        let mut locks = app.annotation_locks.lock().await;
        locks.entry(key).or_default().clone()
    };
    // One writer per sequence at a time; other sequences proceed in parallel.
    let _guard = lock.lock().await;
    blocking(move || {
        let store = &app.store;
        let meta = store.read_meta(&req.sequence_id).map_err(|e| ApiError::from_core(e, "sequence_id"))?;
        check_prompts(&req.prompts, meta.rows, meta.cols)?;
        let mask = runs_to_mask(&req.mask, meta.rows, meta.cols)
            .map_err(|(i, msg)| ApiError::validation(format!("mask[{i}]"), msg))?;
        let path = store.annotation_path(&req.sequence_id, &req.annotator);
        let rel = path.strip_prefix(store.root()).unwrap_or(&path).to_string_lossy().replace('\\', "/");

        let existing = read_record(store, &req.sequence_id, &req.annotator);
        let same_mask = thermoseg_core::dataset::pgm::read(&path).is_ok_and(|m| m == mask);
        let (record, changed) = match existing {
            Some(rec) if same_mask && rec.prompts == req.prompts => (rec, false),
            _ => {
                let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                let rec = AnnotationRecord {
                    sequence_id: req.sequence_id.clone(),
                    annotator: req.annotator.clone(),
                    prompts: req.prompts.clone(),
                    mask: rel,
                    pixels: mask.count(),
                    timestamp,
                };
                let bytes = serde_json::to_vec_pretty(&rec).map_err(|e| ApiError::internal(e.to_string()))?;
                store
                    .write_annotation(&req.sequence_id, &req.annotator, &mask, Some(&bytes))
                    .map_err(|e| ApiError::from_core(e, "mask"))?;
                (rec, true)
            }
        };
        let annotators = store
            .read_annotations(&req.sequence_id)
            .map_err(|e| ApiError::from_core(e, "annotations"))?
            .into_iter()
            .map(|(a, _)| a)
            .collect();
        Ok(Json(AnnotationResponse { record, changed, annotators }))
    })
    .await
}

fn select_ids(store: &SequenceStore, req: &EvalRequest) -> ApiResult<Vec<(String, Option<usize>)>> {
    if req.ids.is_some() && req.plan.is_some() {
        return Err(ApiError::validation("plan", "give either ids or plan, not both"));
    }
    if let Some(ids) = &req.ids {
        if req.split.is_some() || req.fold.is_some() {
            return Err(ApiError::validation("split", "split and fold need a plan"));
        }
        let mut ids = ids.clone();
        ids.sort();
        ids.dedup();
        return Ok(ids.into_iter().map(|i| (i, None)).collect());
    }
    if let Some(text) = &req.plan {
        let plan = SplitPlan::parse(text).map_err(|e| ApiError::validation("plan", e.to_string()))?;
        let mut ids: Vec<String> = match (&req.split, req.fold) {
            (Some(_), Some(_)) => return Err(ApiError::validation("fold", "give either split or fold, not both")),
            (Some(s), None) => {
                let split: Split = s.parse().map_err(|_| ApiError::validation("split", format!("unknown split `{s}`")))?;
                plan.ids_in(split)
            }
            (None, Some(k)) => {
                if k >= plan.fold_count() {
                    return Err(ApiError::validation("fold", format!("fold {k} out of range 0..{}", plan.fold_count())));
                }
                plan.ids_in_fold(k)
            }
            (None, None) => plan.folds.keys().chain(plan.assignment.keys()).cloned().collect(),
        };
        ids.sort();
        ids.dedup();
        return Ok(ids.into_iter().map(|i| { let f = plan.folds.get(&i).copied(); (i, f) }).collect());
    }
    if req.split.is_some() || req.fold.is_some() {
        return Err(ApiError::validation("split", "split and fold need a plan"));
    }
    let ids = store.list().map_err(|e| ApiError::from_core(e, "store"))?;
    Ok(ids.into_iter().filter(|i| store.has_ground_truth(i)).map(|i| (i, None)).collect())
}

pub async fn post_eval(State(app): State<Arc<AppState>>, Json(req): Json<EvalRequest>) -> ApiResult<Json<EvalResponse>> {
    let eval = EvalConfig {
        gamma: req.gamma.unwrap_or(2.0),
        match_iou: req.match_iou.unwrap_or(DEFAULT_MATCH_IOU),
    };
    if !(eval.gamma.is_finite() && eval.gamma > 0.0) {
        return Err(ApiError::validation("gamma", "gamma must be > 0"));
    }
    if !(0.0..=1.0).contains(&eval.match_iou) {
        return Err(ApiError::validation("match_iou", "match_iou must lie in [0, 1]"));
    }
    let dilation = req.dilation.unwrap_or(0.1);
    if !(dilation.is_finite() && dilation >= 0.0) {
        return Err(ApiError::validation("dilation", "dilation must be ≥ 0"));
    }
    let params = SegmentParams { margin: req.margin.unwrap_or(DEFAULT_MARGIN), threshold_override: None };
    if !(params.margin.is_finite() && params.margin >= 0.0) {
        return Err(ApiError::validation("margin", "margin must be ≥ 0"));
    }
    blocking(move || {
        let entries = select_ids(&app.store, &req)?;
        if entries.is_empty() {
            return Err(ApiError::validation("ids", "no sequences selected"));
        }
        for (id, _) in &entries {
            if !app.store.contains(id) {
                return Err(ApiError::not_found(format!("sequence `{id}`")));
            }
        }
        let out = evaluate_stored(&app.store, &entries, dilation, &params, &eval).map_err(|e| ApiError::from_core(e, "ids"))?;
        let r = &out.report;
        let ms = |m: &str| {
            let (mean, std) = r.over_images(m);
            MeanStd { mean, std }
        };
        Ok(Json(EvalResponse {
            gamma: eval.gamma,
            match_iou: eval.match_iou,
            images: r
                .images
                .iter()
                .map(|s| ImageRow {
                    id: s.id.clone(),
                    fold: s.fold,
                    iou: s.iou,
                    precision: s.precision,
                    recall: s.recall,
                    f_score: s.f_score,
                    defects: s.detection.outcomes.len(),
                    matched: s.detection.matched(),
                    spurious: s.detection.spurious.len(),
                })
                .collect(),
            iou: ms("iou"),
            precision: ms("precision"),
            recall: ms("recall"),
            f_score: ms("f_score"),
            defect_recall: r.defect_recall(),
            mean_defect_iou: r.mean_defect_iou(),
            csv: r.to_csv(),
            defects_csv: r.defects_csv(),
        }))
    })
    .await
}

pub async fn post_simulate(
    State(app): State<Arc<AppState>>,
    Json(req): Json<SimulateRequest>,
) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let doc = KvDocument::parse(&req.scene).map_err(|e| ApiError::validation("scene", e.to_string()))?;
    let mut scene = SimScene::from_config(&doc).map_err(|e| ApiError::validation("scene", e.to_string()))?;
    if let Some(id) = req.id {
        scene.id = id;
    }
    scene.validate().map_err(|e| ApiError::validation("scene", e.to_string()))?;
    let probe = ThermalSequence::new(scene.id.clone(), ndarray::Array3::zeros((1, 1, 1)), 1.0);
    if probe.is_err() || scene.id.starts_with('.') {
        return Err(ApiError::validation("id", format!("invalid sequence id `{}`", scene.id)));
    }
    let job = app.jobs.create().await;
    let status = app.jobs.get(job).await.expect("job just created");
    let worker = app.clone();
    tokio::spawn(async move {
        worker.jobs.set(job, "running", None, None).await;
        let store = worker.store.clone();
        let result = tokio::task::spawn_blocking(move || -> thermoseg_core::Result<String> {
            let sim = simulate_sequence(&scene)?;
            store.write_sequence(&sim.sequence)?;
            store.write_ground_truth(&sim.ground_truth)?;
            Ok(scene.id)
        })
        .await;
        match result {
            Ok(Ok(id)) => worker.jobs.set(job, "done", Some(id), None).await,
            Ok(Err(e)) => worker.jobs.set(job, "failed", None, Some(e.to_string())).await,
            Err(e) => worker.jobs.set(job, "failed", None, Some(format!("worker failed: {e}"))).await,
        }
    });
    Ok((StatusCode::ACCEPTED, Json(status)))
}

pub async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Json<JobStatus>> {
    app.jobs.get(id).await.map(Json).ok_or_else(|| ApiError::not_found(format!("job {id}")))
}

/// Registry of simulation jobs.
#[derive(Default)]
pub struct Jobs {
    inner: tokio::sync::Mutex<(u64, HashMap<u64, JobStatus>)>,
}

impl Jobs {
    async fn create(&self) -> u64 {
        let mut g = self.inner.lock().await;
        g.0 += 1;
        let id = g.0;
        g.1.insert(id, JobStatus { id, state: "queued", sequence_id: None, error: None });
        id
    }

    async fn set(&self, id: u64, state: &'static str, sequence_id: Option<String>, error: Option<String>) {
        if let Some(s) = self.inner.lock().await.1.get_mut(&id) {
            s.state = state;
            s.sequence_id = sequence_id;
            s.error = error;
        }
    }

    async fn get(&self, id: u64) -> Option<JobStatus> {
        self.inner.lock().await.1.get(&id).cloned()
    }
}
