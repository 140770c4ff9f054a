use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ndarray::{Array3, Axis};
use thermoseg_core::benchmark::{benchmark_scene, segment_sequence};
use thermoseg_core::config::KvDocument;
use thermoseg_core::dataset::{
    pgm, residual_heat_correct, resize_frame, sample_frames, GroundTruth, SequenceStore, Split, SplitPlan, SplitRatios,
    ThermalSequence,
};
use thermoseg_core::enhance::{contrast_map, ppt_transform, sequence_pca, tsr_fit, Background, TsrConfig};
use thermoseg_core::mask::Mask;
use thermoseg_core::metrics::{evaluate, EvalConfig};
use thermoseg_core::physics::{simulate_sequence, SimScene};
use thermoseg_core::promptseg::{
    format_prompts, parse_prompts, prompts_from_ground_truth, segment_with_prompts, BoxPrompt, SegmentParams,
};
use thermoseg_core::Error;

use crate::{echo_config, EnhanceArgs, EvalArgs, MethodArg, PreprocessArgs, SegmentArgs, SimulateArgs, SplitArgs};

fn open_input(path: &Path) -> Result<SequenceStore> {
    SequenceStore::open_existing(path).with_context(|| format!("{}: cannot open store", path.display()))
}

fn select_ids(store: &SequenceStore, ids: &[String]) -> Result<Vec<String>> {
    if ids.is_empty() {
        return Ok(store.list()?);
    }
    for id in ids {
        ensure!(store.contains(id), "{}: no sequence `{id}`", store.root().display());
    }
    Ok(ids.to_vec())
}

fn missing_ground_truth(store: &SequenceStore, id: &str) -> Error {
    Error::Format {
        path: store.sequence_dir(id).join("mask.pgm"),
        field: "ground_truth".into(),
        msg: format!("sequence `{id}` has no ground-truth masks"),
    }
}

fn require_ground_truth(store: &SequenceStore, id: &str) -> Result<GroundTruth> {
    Ok(store.read_ground_truth(id)?.ok_or_else(|| missing_ground_truth(store, id))?)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let scenes: Vec<SimScene> = if a.benchmark {
        ensure!(a.flat <= a.scenes, "--flat {} exceeds --scenes {}", a.flat, a.scenes);
        (0..a.scenes).map(|i| benchmark_scene(i, i < a.flat, a.seed)).collect()
    } else {
        let Some(path) = &a.scene else { bail!("give a scene file or --benchmark") };
        vec![SimScene::read(path)?]
    };
    let store = SequenceStore::open(&a.out)?;
    let mut echo = vec![("benchmark", a.benchmark.to_string())];
    if a.benchmark {
        echo.extend([("scenes", a.scenes.to_string()), ("flat", a.flat.to_string()), ("seed", a.seed.to_string())]);
    } else {
        let scene = a.scene.as_ref().unwrap();
        echo.push(("scene", scene.display().to_string()));
        std::fs::create_dir_all(&a.out)?;
        let copy = a.out.join("run-simulate.scene");
        std::fs::copy(scene, &copy).with_context(|| format!("{}: cannot write scene copy", copy.display()))?;
    }
    echo_config(&a.out, "simulate", &echo)?;
    for scene in &scenes {
        log::info!("simulating {}", scene.id);
        let sim = simulate_sequence(scene).with_context(|| format!("scene `{}`", scene.id))?;
        store.write_sequence(&sim.sequence)?;
        store.write_ground_truth(&sim.ground_truth)?;
        println!("{}\t{} frames\t{} defects", scene.id, scene.frames, sim.ground_truth.instances.len());
    }
    Ok(())
}

/// Binary mask resize: bilinear on 0/1 values, kept where ≥ 0.5.
fn resize_mask(mask: &Mask, size: usize) -> Result<Mask> {
    let r = resize_frame(mask.to_f64().view(), (size, size))?;
    Ok(Mask::from_array(r.mapv(|v| v >= 0.5)))
}

pub fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let input = open_input(&a.store)?;
    let cfg = a.sampling.config()?;
    ensure!(a.size > 0, "--size must be at least 1");
    let ids = select_ids(&input, &a.ids)?;
    let out = SequenceStore::open(&a.out)?;
    echo_config(
        &a.out,
        "preprocess",
        &[
            ("store", a.store.display().to_string()),
            ("ids", ids.join(",")),
            ("warmup", cfg.warmup.to_string()),
            ("cooloff", cfg.cooloff.to_string()),
            ("interval", cfg.interval.to_string()),
            ("size", a.size.to_string()),
            ("correct", (!a.no_correct).to_string()),
        ],
    )?;
    for id in &ids {
        let seq = input.read_sequence(id)?;
        let f = seq.frame_count();
        let picks = sample_frames(f, &cfg).with_context(|| format!("sequence `{id}`"))?;
        ensure!(!picks.is_empty(), "sequence `{id}`: {f} frames leave no whole sampling stride");
        let retained = if a.no_correct {
            seq.to_f64().slice_move(ndarray::s![cfg.warmup..f - cfg.cooloff, .., ..])
        } else {
            residual_heat_correct(&seq, &cfg).with_context(|| format!("sequence `{id}`"))?.frames
        };
        let mut frames = Array3::<f32>::zeros((picks.len(), a.size, a.size));
        for (j, &k) in picks.iter().enumerate() {
            let r = resize_frame(retained.index_axis(Axis(0), k - cfg.warmup), (a.size, a.size))?;
            frames.index_axis_mut(Axis(0), j).assign(&r.mapv(|v| v as f32));
        }
        let mut next = ThermalSequence::new(id.clone(), frames, seq.frame_rate / cfg.interval as f64)?;
        next.source = seq.source;
        next.system_tag = seq.system_tag;
        next.sample_tag = seq.sample_tag;
        next.ambient = seq.ambient;
        let mut extra = KvDocument::new();
        extra.push("preprocess.source_frames", picks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
        extra.push("preprocess.corrected", !a.no_correct);
        out.write_sequence_with(&next, &extra)?;
        if let Some(gt) = input.read_ground_truth(id)? {
            let instances = gt
                .instances
                .iter()
                .map(|(k, m)| Ok((*k, resize_mask(m, a.size)?)))
                .collect::<Result<Vec<_>>>()?;
            out.write_ground_truth(&GroundTruth::from_instances(id, a.size, a.size, instances)?)?;
        }
        println!("{id}\t{} frames", picks.len());
    }
    Ok(())
}

pub fn enhance(a: &EnhanceArgs) -> Result<()> {
    let input = open_input(&a.store)?;
    let ids = select_ids(&input, &a.ids)?;
    let out = SequenceStore::open(&a.out)?;
    let method = format!("{:?}", a.method).to_lowercase();
    let mut echo = vec![("store", a.store.display().to_string()), ("ids", ids.join(",")), ("method", method)];
    match a.method {
        MethodArg::Pca => echo.push(("components", a.components.to_string())),
        MethodArg::Ppt => {}
        MethodArg::Tsr => echo.extend([
            ("degree", a.degree.to_string()),
            ("offset", a.offset.to_string()),
            ("first_frame", a.first_frame.to_string()),
        ]),
    }
    echo_config(&a.out, "enhance", &echo)?;
    for id in &ids {
        let seq = input.read_sequence(id)?;
        let frames = seq.to_f64();
        let stacks = match a.method {
            MethodArg::Pca => vec![sequence_pca(id, frames.view(), a.components)?],
            MethodArg::Ppt => {
                let r = ppt_transform(id, frames.view())?;
                vec![r.phase, r.amplitude]
            }
            MethodArg::Tsr => {
                let f = seq.frame_count();
                ensure!(a.first_frame < f, "--first-frame {} but `{id}` has {f} frames", a.first_frame);
                ensure!(a.first_frame > 0, "--first-frame must be ≥ 1: frame 0 is at t = 0");
                let times: Vec<f64> = (a.first_frame..f).map(|k| k as f64 / seq.frame_rate).collect();
                let cfg = TsrConfig { degree: a.degree, offset: a.offset, eval_times: Vec::new() };
                let tail = frames.slice(ndarray::s![a.first_frame.., .., ..]);
                let r = tsr_fit(id, tail, &times, &cfg)?;
                if !r.invalid.is_empty() {
                    log::warn!("{id}: {} pixels had non-positive samples", r.invalid.len());
                }
                vec![r.coefficients, r.deriv1, r.deriv2]
            }
        };
        for s in &stacks {
            for w in &s.warnings {
                log::warn!("{id}: {w}");
            }
            let stored = s.write(&out)?;
            println!("{stored}\t{} images", s.len());
        }
    }
    Ok(())
}

pub fn segment(a: &SegmentArgs) -> Result<()> {
    let store = open_input(&a.store)?;
    let ids = if a.ids.is_empty() {
        ensure!(a.prompts.is_none(), "--prompts needs exactly one --ids entry");
        store.list()?.into_iter().filter(|i| store.has_ground_truth(i)).collect()
    } else {
        select_ids(&store, &a.ids)?
    };
    ensure!(a.prompts.is_none() || ids.len() == 1, "--prompts needs exactly one --ids entry");
    ensure!(a.dilation.is_finite() && a.dilation >= 0.0, "--dilation must be ≥ 0");
    let params = SegmentParams { margin: a.margin, threshold_override: a.threshold };
    ensure!(a.margin.is_finite() && a.margin >= 0.0, "--margin must be ≥ 0");
    let mut echo = vec![
        ("store", a.store.display().to_string()),
        ("ids", ids.join(",")),
        ("margin", a.margin.to_string()),
        ("threshold", a.threshold.map_or("otsu".into(), |t| t.to_string())),
        ("surface", a.frame.map_or("peak".into(), |k| format!("frame {k}"))),
    ];
    match &a.prompts {
        Some(p) => echo.push(("prompts", p.display().to_string())),
        None => echo.push(("dilation", a.dilation.to_string())),
    }
    echo_config(&a.out, "segment", &echo)?;
    for id in &ids {
        let seq = store.read_sequence(id)?;
        let prompts: Vec<BoxPrompt> = match &a.prompts {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read", path.display()))?;
                parse_prompts(&text, seq.rows(), seq.cols()).with_context(|| format!("{}: invalid prompts", path.display()))?
            }
            None => prompts_from_ground_truth(&require_ground_truth(&store, id)?, a.dilation)?,
        };
        let result = match a.frame {
            None => segment_sequence(&seq, &prompts, &params)?,
            Some(k) => {
                ensure!(k < seq.frame_count(), "--frame {k} but `{id}` has {} frames", seq.frame_count());
                let frame = seq.frame(k).mapv(f64::from);
                let map = contrast_map(frame.view(), &Background::FrameMedian)?;
                segment_with_prompts(map.image.view(), &prompts, &params)?
            }
        };
        let dir = a.out.join(id);
        result.write(&dir)?;
        let prompt_file = dir.join("prompts.txt");
        std::fs::write(&prompt_file, format_prompts(&prompts))
            .with_context(|| format!("{}: cannot write", prompt_file.display()))?;
        let found = result.instance_masks().len();
        println!("{id}\t{found}/{} found", prompts.len());
    }
    Ok(())
}

/// Found instance masks of one `segment` output directory, in prompt order.
fn read_predictions(dir: &Path) -> Result<Vec<Mask>> {
    let summary = dir.join("summary.txt");
    let text = std::fs::read_to_string(&summary).map_err(|e| Error::Format {
        path: summary.clone(),
        field: "summary".into(),
        msg: e.to_string(),
    })?;
    let mut masks = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(prompt), Some(status)) = (parts.next(), parts.next()) else {
            bail!("{}: line {}: invalid status: expected `prompt status ...`", summary.display(), n + 1);
        };
        match status {
            "found" => masks.push(pgm::read(&dir.join(format!("prompt-{prompt}.pgm")))?),
            "no-defect-found" => {}
            other => bail!("{}: line {}: invalid status: `{other}`", summary.display(), n + 1),
        }
    }
    Ok(masks)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let store = open_input(&a.store)?;
    let cfg = EvalConfig { gamma: a.gamma, match_iou: a.match_iou };
    ensure!(a.gamma.is_finite() && a.gamma > 0.0, "--gamma must be > 0");
    ensure!((0.0..=1.0).contains(&a.match_iou), "--match-iou must lie in [0, 1]");
    let entries: Vec<(String, Option<usize>)> = match &a.split {
        Some(path) => {
            let plan = SplitPlan::read(path)?;
            let ids = match (&a.subset, a.fold) {
                (Some(s), _) => plan.ids_in(s.parse::<Split>().with_context(|| format!("--subset `{s}`"))?),
                (None, Some(k)) => {
                    ensure!(k < plan.fold_count(), "--fold {k} but the plan has {} folds", plan.fold_count());
                    plan.ids_in_fold(k)
                }
                (None, None) => {
                    let mut all: Vec<String> = plan.assignment.keys().chain(plan.folds.keys()).cloned().collect();
                    all.sort();
                    all.dedup();
                    all
                }
            };
            ids.into_iter().map(|i| { let f = plan.folds.get(&i).copied(); (i, f) }).collect()
        }
        None => {
            let mut ids = Vec::new();
            let rd = std::fs::read_dir(&a.predictions)
                .with_context(|| format!("{}: cannot read predictions", a.predictions.display()))?;
            for e in rd {
                let p = e?.path();
                if p.join("summary.txt").is_file() {
                    ids.push((p.file_name().unwrap().to_string_lossy().into_owned(), None));
                }
            }
            ids.sort();
            ids
        }
    };
    ensure!(!entries.is_empty(), "no sequences selected for evaluation");

    let mut loaded = Vec::with_capacity(entries.len());
    for (id, fold) in &entries {
        let gt = require_ground_truth(&store, id)?;
        let truth: Vec<Mask> = gt.instances.iter().map(|(_, m)| m.clone()).collect();
        let pred = read_predictions(&a.predictions.join(id))?;
        loaded.push((id.as_str(), *fold, truth, pred, gt.shape()));
    }
    let report = evaluate(loaded.iter().map(|(id, f, t, p, s)| (*id, *f, t.as_slice(), p.as_slice(), *s)), cfg)?;

    echo_config(
        &a.out,
        "eval",
        &[
            ("store", a.store.display().to_string()),
            ("predictions", a.predictions.display().to_string()),
            ("split", a.split.as_ref().map_or("-".into(), |p| p.display().to_string())),
            ("subset", a.subset.clone().unwrap_or("-".into())),
            ("fold", a.fold.map_or("-".into(), |k| k.to_string())),
            ("gamma", a.gamma.to_string()),
            ("match_iou", a.match_iou.to_string()),
        ],
    )?;
    write_text(&a.out.join("report.csv"), &report.to_csv())?;
    write_text(&a.out.join("defects.csv"), &report.defects_csv())?;
    let (iou, _) = report.over_images("iou");
    println!(
        "{} images\tiou {iou:.4}\tdefect recall {:.4}\tmean defect iou {:.4}",
        report.images.len(),
        report.defect_recall(),
        report.mean_defect_iou()
    );
    Ok(())
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("{}: cannot write", path.display()))
}

fn parse_ratios(text: &str) -> Result<SplitRatios> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("--ratios: `{s}` is not a number")))
        .collect::<Result<_>>()?;
    let [train, val, test] = v[..] else { bail!("--ratios needs three values, got {}", v.len()) };
    let r = SplitRatios { train, val, test };
    r.validate().context("--ratios")?;
    Ok(r)
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let store = open_input(&a.store)?;
    let ratios = parse_ratios(&a.ratios)?;
    let ids = store.list()?;
    ensure!(!ids.is_empty(), "{}: store holds no sequences", a.store.display());
    let plan = SplitPlan::new(&ids, a.seed, ratios, a.k)?;
    echo_config(
        &a.out,
        "split",
        &[
            ("store", a.store.display().to_string()),
            ("seed", a.seed.to_string()),
            ("ratios", a.ratios.clone()),
            ("k", a.k.to_string()),
        ],
    )?;
    let path = a.out.join("split.plan");
    plan.write(&path)?;
    println!("{}", path.display());
    Ok(())
}
