//! Operator surface: data synthesis, training, scoring, threshold
//! optimization, evaluation, attention-rollout export, and checkpoint
//! slimming. Every command is deterministic for a fixed config and seed.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backbone::{self, CheckpointMeta, Strictness};
use crate::config::RunConfig;
use crate::datasets::{self, LoadedSet, Manifest};
use crate::error::{Error, Result};
use crate::framework::train::{self, TrainData};
use crate::framework::{DualBranchModel, ModelConfig};
use crate::metrics::{self, VideoAdjust};
use crate::render;
use crate::threshold::{self, PredictionRecord, ScoreKind, ThresholdReport};

#[derive(Parser)]
#[command(
    name = "ffd",
    version,
    about = "Face-forgery detection pipeline: synthesize data, train the dual-branch model, score frames, and tune decision thresholds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/test/shifted splits
    Synth(SynthArgs),
    /// Train the dual-branch model and write checkpoints
    Train(TrainArgs),
    /// Score manifest frames with a trained checkpoint
    Score(ScoreArgs),
    /// Find the accuracy-optimal threshold over score dumps
    Threshold(ThresholdArgs),
    /// Evaluate score dumps at a fixed threshold
    Eval(EvalArgs),
    /// Export attention-rollout saliency maps
    Rollout(RolloutArgs),
    /// Strip a checkpoint down to the scoring branch
    ExportMain(ExportMainArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Run configuration file (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Destination directory (default: <output_dir>/synth)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Destination directory (default: <output_dir>/train)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from this run's rolling checkpoint
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Trained checkpoint (full or scoring-branch-only)
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest of frames to score
    #[arg(long)]
    manifest: PathBuf,
    /// Score dump destination
    #[arg(long)]
    out: PathBuf,
    /// Aggregate frame scores per video before writing
    #[arg(long)]
    video_level: bool,
    /// Keep only this many equal-interval frames per video
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Score dumps to optimize over (concatenated)
    #[arg(required = true)]
    scores: Vec<PathBuf>,
    /// Search over uncertainty-adjusted scores p/u instead of raw p
    #[arg(long)]
    adjusted: bool,
    /// Also run a fixed-step grid search and report it alongside
    #[arg(long)]
    grid: Option<f64>,
    /// Cross-set protocol SRC:TGT1[,TGT2...]: optimize on the SRC dataset
    /// id, apply to each target dataset id
    #[arg(long)]
    transfer: Option<String>,
    /// Report directory (default: alongside the first dump)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Score dumps to evaluate, one report row each
    #[arg(required = true)]
    scores: Vec<PathBuf>,
    /// Decision threshold
    #[arg(long)]
    tau: f64,
    /// Apply the threshold to uncertainty-adjusted scores p/u
    #[arg(long)]
    adjusted: bool,
    /// Also write the rows as a delimited file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RolloutArgs {
    /// Trained checkpoint (full or scoring-branch-only)
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest of frames to visualize
    #[arg(long)]
    manifest: PathBuf,
    /// Destination directory for heatmaps and raw matrices
    #[arg(long)]
    out: PathBuf,
    /// Visualize at most this many frames
    #[arg(long, default_value_t = 4)]
    limit: usize,
}

#[derive(Args)]
struct ExportMainArgs {
    /// Full training checkpoint to slim down
    #[arg(long)]
    checkpoint: PathBuf,
    /// Destination checkpoint
    #[arg(long)]
    out: PathBuf,
}

/// Parse arguments and dispatch. Returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land on stdout and exit 0; usage errors land
            // on stderr and exit 1.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Score(args) => cmd_score(&args),
        Command::Threshold(args) => cmd_threshold(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Rollout(args) => cmd_rollout(&args),
        Command::ExportMain(args) => cmd_export_main(&args),
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.effective_output_dir().join("synth"));
    std::fs::create_dir_all(&out)?;
    let output = datasets::generate_synthetic(&out, &cfg.synth)?;
    cfg.save_effective(&out.join("effective-config.toml"))?;
    for (name, manifest) in [
        ("train", &output.train),
        ("test", &output.test),
        ("shifted", &output.shifted),
    ] {
        println!("{name}: {}", manifest.stats());
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let base = cfg.effective_output_dir();
    let out = args.out.clone().unwrap_or_else(|| base.join("train"));
    std::fs::create_dir_all(&out)?;

    let train_manifest = cfg
        .data
        .train_manifest
        .clone()
        .unwrap_or_else(|| base.join("synth").join("train.csv"));
    let val_manifest = cfg
        .data
        .val_manifest
        .clone()
        .unwrap_or_else(|| base.join("synth").join("test.csv"));
    let normalization = cfg.normalization();
    let train_set = load_split(&train_manifest, &normalization)?;
    let val_set = load_split(&val_manifest, &normalization)?;
    require_size(&train_set, cfg.model.vit.image_size, &train_manifest)?;
    require_size(&val_set, cfg.model.vit.image_size, &val_manifest)?;

    let data = TrainData {
        train_images: train_set.images,
        train_labels: train_set.labels,
        val_images: val_set.images,
        val_labels: val_set.labels,
        normalization,
    };
    let mut model = DualBranchModel::new(&cfg.model, cfg.seed)?;
    let resume = args.resume.then(|| out.join(train::FINAL_CKPT));
    if let Some(ckpt) = &resume {
        if !ckpt.is_file() {
            return Err(Error::Config(format!(
                "nothing to resume: {} not found",
                ckpt.display()
            )));
        }
    }
    cfg.save_effective(&out.join("effective-config.toml"))?;
    let outcome = train::run_training(
        &mut model,
        &cfg.train,
        &data,
        cfg.seed,
        Some(&out),
        resume.as_deref(),
        None,
    )?;
    for record in &outcome.history {
        let val = record
            .val_auc
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "epoch {}/{}: total {:.4}, val auc {}",
            record.epoch, cfg.train.epochs, record.losses.total, val
        );
    }
    if let Some(best) = outcome.state.best {
        println!("best epoch {} (val auc {:.4})", best.epoch, best.val_auc);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let (model, meta) = load_scoring_model(&args.checkpoint)?;
    let mut manifest = datasets::load_manifest(&args.manifest)?;
    if let Some(frames) = args.frames {
        manifest = sample_videos(&manifest, frames)?;
    }
    let set = datasets::load_images(&manifest, &meta.normalization)?;
    let model_cfg = model_config(&meta)?;
    require_size(&set, model_cfg.vit.image_size, &args.manifest)?;

    let scores = train::score_images(&model, set.images.view(), 64)?;
    let mut records = Vec::with_capacity(scores.len());
    for (i, score) in scores.iter().enumerate() {
        records.push(PredictionRecord::new(
            set.sample_ids[i].clone(),
            set.video_ids[i].clone(),
            set.dataset_ids[i].clone(),
            set.labels[i],
            score.p,
            score.u,
        )?);
    }
    if args.video_level {
        records = metrics::video_aggregate(&records, VideoAdjust::RatioOfMeans)?;
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    threshold::write_scores(&args.out, &records)?;
    println!("wrote {} rows to {}", records.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct GridResult {
    step: f64,
    tau: f64,
    acc: f64,
}

#[derive(Serialize)]
struct ThresholdOutput {
    score_kind: ScoreKind,
    report: ThresholdReport,
    grid: Option<GridResult>,
}

#[derive(Serialize)]
struct TargetAcc {
    dataset: String,
    n: usize,
    acc: f64,
}

#[derive(Serialize)]
struct TransferOutput {
    score_kind: ScoreKind,
    source_dataset: String,
    source: ThresholdReport,
    targets: Vec<TargetAcc>,
}

fn cmd_threshold(args: &ThresholdArgs) -> Result<()> {
    let kind = if args.adjusted {
        ScoreKind::AdjustedP
    } else {
        ScoreKind::RawP
    };
    let records = read_dumps(&args.scores)?;
    let out = match &args.out {
        Some(dir) => dir.clone(),
        None => args.scores[0]
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    std::fs::create_dir_all(&out)?;

    if let Some(spec) = &args.transfer {
        let (source_id, target_ids) = parse_transfer(spec)?;
        let mut groups: HashMap<&str, Vec<PredictionRecord>> = HashMap::new();
        for r in &records {
            groups
                .entry(r.dataset_id.as_str())
                .or_default()
                .push(r.clone());
        }
        let source = groups
            .get(source_id.as_str())
            .ok_or_else(|| Error::Data(format!("no rows from dataset {source_id:?}")))?;
        let mut targets = Vec::new();
        for target_id in &target_ids {
            let target = groups
                .get(target_id.as_str())
                .ok_or_else(|| Error::Data(format!("no rows from dataset {target_id:?}")))?;
            let outcome = threshold::transfer_eval(source, kind, target, kind)?;
            targets.push(TargetAcc {
                dataset: target_id.clone(),
                n: target.len(),
                acc: outcome.target_acc,
            });
        }
        let report = threshold::optimal_threshold(source, kind)?;
        render::render_threshold_curve(&report, &out.join("curve.png"))?;
        println!(
            "source {source_id}: tau {:.6}, acc {:.4}",
            report.tau_ot, report.acc_at_tau
        );
        for t in &targets {
            println!("target {}: acc {:.4} over {} rows", t.dataset, t.acc, t.n);
        }
        let output = TransferOutput {
            score_kind: kind,
            source_dataset: source_id,
            source: report,
            targets,
        };
        write_json(&out.join("transfer-report.json"), &output)?;
    } else {
        let report = threshold::optimal_threshold(&records, kind)?;
        let grid = match args.grid {
            None => None,
            Some(step) => {
                let hi = records
                    .iter()
                    .map(|r| r.score(kind))
                    .fold(0.0f64, f64::max);
                let (tau, acc) = threshold::grid_threshold(
                    |tau| {
                        threshold::accuracy_at(&records, tau, kind)
                            .expect("records were validated on read")
                    },
                    hi,
                    step,
                )?;
                Some(GridResult { step, tau, acc })
            }
        };
        render::render_threshold_curve(&report, &out.join("curve.png"))?;
        println!(
            "tau {:.6}, acc {:.4} over {} rows",
            report.tau_ot,
            report.acc_at_tau,
            records.len()
        );
        if let Some(g) = &grid {
            println!("grid step {}: tau {:.6}, acc {:.4}", g.step, g.tau, g.acc);
        }
        let output = ThresholdOutput {
            score_kind: kind,
            report,
            grid,
        };
        write_json(&out.join("report.json"), &output)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let kind = if args.adjusted {
        ScoreKind::AdjustedP
    } else {
        ScoreKind::RawP
    };
    if !args.tau.is_finite() {
        return Err(Error::Config(format!("tau must be finite, got {}", args.tau)));
    }
    let mut lines = vec![format!(
        "{:<32} {:>6} {:>6} {:>8} {:>8} {:>8}",
        "file", "real", "fake", "auc", "acc", "hter"
    )];
    let mut rows = vec!["file,n_real,n_fake,auc,acc,hter,tau".to_string()];
    for path in &args.scores {
        let records = threshold::read_scores(path)?;
        let report = metrics::evaluate(&records, args.tau, kind)?;
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| {
                n.to_string_lossy().into_owned()
            });
        lines.push(format!(
            "{name:<32} {:>6} {:>6} {:>8.4} {:>8.4} {:>8.4}",
            report.n_real, report.n_fake, report.auc, report.acc, report.hter
        ));
        rows.push(format!(
            "{name},{},{},{},{},{},{}",
            report.n_real, report.n_fake, report.auc, report.acc, report.hter, report.tau
        ));
    }
    for line in &lines {
        println!("{line}");
    }
    if let Some(out) = &args.out {
        std::fs::write(out, rows.join("\n") + "\n")?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_rollout(args: &RolloutArgs) -> Result<()> {
    let (model, meta) = load_scoring_model(&args.checkpoint)?;
    let model_cfg = model_config(&meta)?;
    let mut manifest = datasets::load_manifest(&args.manifest)?;
    if args.limit == 0 {
        return Err(Error::Config("limit must be positive".into()));
    }
    manifest.entries.truncate(args.limit);
    let set = datasets::load_images(&manifest, &meta.normalization)?;
    require_size(&set, model_cfg.vit.image_size, &args.manifest)?;

    std::fs::create_dir_all(&args.out)?;
    let maps = model.rollout_heatmaps(set.images.view())?;
    let grid = model_cfg.vit.grid();
    let upscale = (256 / grid).max(1);
    for (entry, map) in manifest.entries.iter().zip(&maps) {
        let stem = entry
            .path
            .file_stem()
            .map_or_else(|| "frame".to_string(), |s| s.to_string_lossy().into_owned());
        render::render_heatmap(map.heatmap.view(), upscale, &args.out.join(format!("{stem}.heatmap.png")))?;
        render::write_matrix_csv(map.matrix.view(), &args.out.join(format!("{stem}.rollout.csv")))?;
    }
    println!("wrote {} map(s) to {}", maps.len(), args.out.display());
    Ok(())
}

fn cmd_export_main(args: &ExportMainArgs) -> Result<()> {
    let ckpt = backbone::load(&args.checkpoint)?;
    let model_cfg = model_config(&ckpt.meta)?;
    let mut model = DualBranchModel::new(&model_cfg, 0)?;
    backbone::apply_to_store(model.store_mut(), &ckpt, Strictness::Strict)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    train::export_main(&args.out, &model, &ckpt.meta)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared helpers

fn model_config(meta: &CheckpointMeta) -> Result<ModelConfig> {
    serde_json::from_value(meta.config.clone())
        .map_err(|e| Error::Config(format!("checkpoint carries an unusable config: {e}")))
}

fn load_scoring_model(path: &Path) -> Result<(DualBranchModel, CheckpointMeta)> {
    DualBranchModel::load_for_scoring(path)
}

fn load_split(path: &Path, normalization: &backbone::Normalization) -> Result<LoadedSet> {
    let manifest = datasets::load_manifest(path)?;
    println!("{}: {}", path.display(), manifest.stats());
    datasets::load_images(&manifest, normalization)
}

fn require_size(set: &LoadedSet, expected: usize, source: &Path) -> Result<()> {
    let actual = set.images.dim().1;
    if actual != expected {
        return Err(Error::Config(format!(
            "{}: frames are {actual}x{actual} but the model expects {expected}x{expected}",
            source.display()
        )));
    }
    Ok(())
}

/// Keep `frames` equal-interval frames per video, preserving manifest
/// order.
fn sample_videos(manifest: &Manifest, frames: usize) -> Result<Manifest> {
    let mut by_video: Vec<(String, Vec<usize>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        match index.get(entry.video_id.as_str()) {
            Some(&slot) => by_video[slot].1.push(i),
            None => {
                index.insert(entry.video_id.as_str(), by_video.len());
                by_video.push((entry.video_id.clone(), vec![i]));
            }
        }
    }
    let mut keep = Vec::new();
    for (_, indices) in &by_video {
        for pick in datasets::sample_frames(indices.len(), frames)? {
            keep.push(indices[pick]);
        }
    }
    keep.sort_unstable();
    Ok(Manifest {
        root: manifest.root.clone(),
        entries: keep
            .into_iter()
            .map(|i| manifest.entries[i].clone())
            .collect(),
    })
}

fn read_dumps(paths: &[PathBuf]) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(threshold::read_scores(path)?);
    }
    Ok(records)
}

fn parse_transfer(spec: &str) -> Result<(String, Vec<String>)> {
    let bad = || {
        Error::Config(format!(
            "transfer spec must look like SRC:TGT1[,TGT2...], got {spec:?}"
        ))
    };
    let (source, rest) = spec.split_once(':').ok_or_else(bad)?;
    if source.is_empty() || rest.is_empty() {
        return Err(bad());
    }
    let targets: Vec<String> = rest.split(',').map(str::to_string).collect();
    if targets.iter().any(String::is_empty) {
        return Err(bad());
    }
    Ok((source.to_string(), targets))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("report encoding failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
