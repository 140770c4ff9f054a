//! `thermoseg`: batch entry point over the core library.
//!
//! Every subcommand writes only below its `--out` directory and echoes its
//! resolved configuration there as `run-<subcommand>.cfg`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use thermoseg_core::config::KvDocument;
use thermoseg_core::dataset::SamplingConfig;

mod pipeline;

#[derive(Parser, Debug)]
#[command(name = "thermoseg", version, about = "Thermographic defect segmentation toolkit")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scene file, or the synthetic benchmark, into a store.
    Simulate(SimulateArgs),
    /// Residual-heat correction, frame sampling and resizing.
    Preprocess(PreprocessArgs),
    /// Compute enhanced image stacks.
    Enhance(EnhanceArgs),
    /// Prompted segmentation of stored sequences.
    Segment(SegmentArgs),
    /// Score stored segmentations against ground truth.
    Eval(EvalArgs),
    /// Write a seeded train/val/test and k-fold split plan.
    Split(SplitArgs),
    /// Serve a store over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scene description (key = value).
    pub scene: Option<PathBuf>,
    /// Simulate the standard synthetic benchmark instead of a scene file.
    #[arg(long, conflicts_with = "scene")]
    pub benchmark: bool,
    /// Number of benchmark scenes.
    #[arg(long, default_value_t = 20, requires = "benchmark")]
    pub scenes: usize,
    /// How many of the benchmark scenes are flat plates.
    #[arg(long, default_value_t = 15, requires = "benchmark")]
    pub flat: usize,
    /// Benchmark seed.
    #[arg(long, default_value_t = 20240601, requires = "benchmark")]
    pub seed: u64,
    /// Output store.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SamplingArgs {
    /// Frames dropped at the start (L0).
    #[arg(long, default_value_t = 15)]
    pub warmup: usize,
    /// Frames dropped at the end and used as the residual-heat level (Lf).
    #[arg(long, default_value_t = 15)]
    pub cooloff: usize,
    /// Keep every n-th retained frame (LI).
    #[arg(long, default_value_t = 5)]
    pub interval: usize,
}

impl SamplingArgs {
    fn config(&self) -> Result<SamplingConfig> {
        Ok(SamplingConfig::new(self.warmup, self.cooloff, self.interval)?)
    }
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Sequence ids (comma-separated); default all.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Output frames are size × size pixels.
    #[arg(long, default_value_t = 1024)]
    pub size: usize,
    /// Skip residual-heat correction; frames are only sampled and resized.
    #[arg(long)]
    pub no_correct: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Pca,
    Ppt,
    Tsr,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// PCA components.
    #[arg(long, default_value_t = 10)]
    pub components: usize,
    /// TSR polynomial degree.
    #[arg(long, default_value_t = 5)]
    pub degree: usize,
    /// TSR level subtracted before taking logarithms.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub offset: f64,
    /// TSR fits frames from this index on; frame 0 is taken at the pulse.
    #[arg(long, default_value_t = 1)]
    pub first_frame: usize,
    /// Output store for the stacks (`<id>.<method>`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Sequence ids (comma-separated); default every sequence with ground truth.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    /// Prompt file (`id row0 col0 row1 col1` per line) for a single `--ids` entry.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Without `--prompts`, boxes come from ground-truth instances grown by
    /// this fraction per side.
    #[arg(long, default_value_t = 0.1)]
    pub dilation: f64,
    /// Box expansion before thresholding.
    #[arg(long, default_value_t = thermoseg_core::promptseg::DEFAULT_MARGIN)]
    pub margin: f64,
    /// Fixed threshold instead of Otsu.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Segment this frame's contrast map instead of each prompt's peak frame.
    #[arg(long)]
    pub frame: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Output directory of `segment`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Split plan selecting the sequences.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// `train`, `val` or `test` of the plan.
    #[arg(long, requires = "split", conflicts_with = "fold")]
    pub subset: Option<String>,
    /// Fold of the plan.
    #[arg(long, requires = "split")]
    pub fold: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = thermoseg_core::metrics::DEFAULT_MATCH_IOU)]
    pub match_iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Store whose sequence ids are split.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Train, val and test fractions.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    pub ratios: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

/// Writes `run-<name>.cfg` into `out`.
pub fn echo_config(out: &Path, name: &str, pairs: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("{}: cannot create output directory", out.display()))?;
    let mut doc = KvDocument::new();
    doc.push("subcommand", name);
    for (k, v) in pairs {
        doc.push(*k, v);
    }
    let path = out.join(format!("run-{name}.cfg"));
    std::fs::write(&path, doc.to_text()).with_context(|| format!("{}: cannot write run config", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate(a) => pipeline::simulate(&a),
        Command::Preprocess(a) => pipeline::preprocess(&a),
        Command::Enhance(a) => pipeline::enhance(&a),
        Command::Segment(a) => pipeline::segment(&a),
        Command::Eval(a) => pipeline::eval(&a),
        Command::Split(a) => pipeline::split(&a),
        Command::Serve(a) => serve(&a, cli.threads),
    }
}

fn serve(a: &ServeArgs, threads: Option<usize>) -> Result<()> {
    let store = thermoseg_core::dataset::SequenceStore::open(&a.store)?;
    let state = std::sync::Arc::new(thermoseg_service::AppState::new(store, a.sampling.config()?));
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        rt.worker_threads(n);
    }
    let addr = std::net::SocketAddr::new(a.host, a.port);
    rt.enable_all()
        .build()?
        .block_on(thermoseg_service::serve(state, addr))
        .with_context(|| format!("cannot serve on {addr}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::from(1)
        }
    }
}
