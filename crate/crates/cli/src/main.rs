//! Command-line entry point for the caption-guided contrastive pipeline.
//!
//! Each subcommand is a file-to-file transform: generate synthetic data,
//! embed captions, mine nearest-neighbor pairs, filter captions, train,
//! extract saliency maps, evaluate, and merge reports. Outputs land only
//! under the declared `--out`/`--out-dir` paths, and identical invocations
//! produce byte-identical files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lgcl_core::data::binfmt::{
    read_embeddings, read_images, read_labels, read_manifest, write_embeddings, write_images,
    write_manifest,
};
use lgcl_core::data::captions::{read_captions, write_captions};
use lgcl_core::data::synth::{gen_synthetic, SynthConfig};
use lgcl_core::data::types::{ImageTensorSet, LabelTable, MaskSet};
use lgcl_core::data::{binfmt, embed_captions};
use lgcl_core::eval::{
    fewshot_eval, linear_probe, merge_reports, saliency_auc, saliency_auc_per_image,
    FewshotConfig, MetricsReport, ProbeConfig,
};
use lgcl_core::filter::{filter_captions, FilterPolicy};
use lgcl_core::nn::checkpoint::{self, Checkpoint};
use lgcl_core::nn::encoder::Encoder;
use lgcl_core::nn::gradcam::gradcam;
use lgcl_core::nn::tensor::Tensor;
use lgcl_core::objectives::ObjectiveKind;
use lgcl_core::pairs::{build_pair_manifest, manifest_stats, NNQueryConfig};
use lgcl_core::train::{train, PairSource, TrainConfig};
use lgcl_core::{Error, Result};

/// Images per chunk when extracting frozen features.
const FEATURE_CHUNK: usize = 256;

#[derive(Parser)]
#[command(
    name = "lgcl",
    about = "Caption-guided contrastive pretraining pipeline",
    disable_version_flag = true
)]
struct Cli {
    /// Worker threads for parallel sections. Defaults to all cores; results
    /// do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic captioned-image dataset with masks and labels.
    GenSynth(GenSynthArgs),
    /// Embed caption text into unit vectors with the hashing embedder.
    Embed(EmbedArgs),
    /// Mine each caption's nearest neighbor into a pair manifest.
    SamplePairs(SamplePairsArgs),
    /// Keep the better-scored caption of each record.
    FilterCaptions(FilterCaptionsArgs),
    /// Train an encoder with a contrastive objective.
    Train(TrainArgs),
    /// Write per-image saliency maps scored by a linear probe.
    Saliency(SaliencyArgs),
    /// Evaluate a checkpoint's frozen features.
    Eval(EvalArgs),
    /// Merge metric reports into a key=value dump or an aligned table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Number of classes.
    #[arg(long)]
    classes: usize,
    /// Images per class.
    #[arg(long = "per-class")]
    per_class: usize,
    /// Generator seed.
    #[arg(long)]
    seed: u64,
    /// Directory for images.img/.ids, masks.msk/.ids, captions.jsonl,
    /// labels.tsv.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Standard deviation of per-pixel image noise.
    #[arg(long = "noise-sigma", default_value_t = 0.25)]
    noise_sigma: f64,
    /// Square image side in pixels.
    #[arg(long = "image-size", default_value_t = 16)]
    image_size: usize,
    /// Image channels.
    #[arg(long, default_value_t = 3)]
    channels: usize,
}

#[derive(Args)]
struct EmbedArgs {
    /// Caption records, one JSON object per line.
    #[arg(long)]
    captions: PathBuf,
    /// Output embedding matrix.
    #[arg(long)]
    out: PathBuf,
    /// Output id sidecar, one id per line.
    #[arg(long)]
    ids: PathBuf,
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Hashing seed.
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SamplePairsArgs {
    /// Embedding matrix file.
    #[arg(long)]
    embeddings: PathBuf,
    /// Id sidecar of the embedding matrix.
    #[arg(long)]
    ids: PathBuf,
    /// Output pair manifest.
    #[arg(long)]
    out: PathBuf,
    /// Rows per search block.
    #[arg(long = "block-size", default_value_t = 256)]
    block_size: usize,
    /// Let a row match itself (similarity 1).
    #[arg(long = "no-exclude-self")]
    no_exclude_self: bool,
}

#[derive(Args)]
struct FilterCaptionsArgs {
    /// Input caption records.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output caption records.
    #[arg(long)]
    out: PathBuf,
    /// Drop records whose retained score falls below this.
    #[arg(long = "min-score")]
    min_score: Option<f64>,
    /// Key=value summary of kept and dropped counts.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum ObjectiveArg {
    Ntxent,
    Simsiam,
    Nnclr,
    Swav,
}

impl ObjectiveArg {
    fn kind(self) -> ObjectiveKind {
        match self {
            ObjectiveArg::Ntxent => ObjectiveKind::NtXent,
            ObjectiveArg::Simsiam => ObjectiveKind::SimSiam,
            ObjectiveArg::Nnclr => ObjectiveKind::Nnclr,
            ObjectiveArg::Swav => ObjectiveKind::Swav,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum PairSourceArg {
    Augment,
    Manifest,
}

impl PairSourceArg {
    fn source(self) -> PairSource {
        match self {
            PairSourceArg::Augment => PairSource::Augment,
            PairSourceArg::Manifest => PairSource::Manifest,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image tensor file; ids are read from the matching .ids sidecar.
    #[arg(long)]
    dataset: PathBuf,
    /// Caption records with class hints for validation scoring.
    #[arg(long)]
    captions: PathBuf,
    /// Pair manifest, required when pair_source is "manifest".
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory for best.ckpt, last.ckpt, history.csv, report.txt.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Run seed; overrides the config file's seed.
    #[arg(long)]
    seed: u64,
    /// Override the config's objective kind.
    #[arg(long)]
    objective: Option<ObjectiveArg>,
    /// Override the config's pair source.
    #[arg(long = "pair-source")]
    pair_source: Option<PairSourceArg>,
    /// Override the config's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the config's batch size.
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct SaliencyArgs {
    /// Trained encoder checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image tensor file; ids from the .ids sidecar.
    #[arg(long)]
    dataset: PathBuf,
    /// Tab-separated id-to-class table.
    #[arg(long)]
    labels: PathBuf,
    /// Output map tensor file (one channel per image); ids go to the
    /// matching .ids sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(subcommand)]
    task: EvalTask,
}

#[derive(Args)]
struct EvalCommonArgs {
    /// Trained encoder checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image tensor file; ids from the .ids sidecar.
    #[arg(long)]
    dataset: PathBuf,
    /// Tab-separated id-to-class table.
    #[arg(long)]
    labels: PathBuf,
    /// Output report: key=value block, blank line, aligned table.
    #[arg(long)]
    out: PathBuf,
    /// Report task name, which labels this run's column when reports are
    /// merged. Defaults to the task kind.
    #[arg(long)]
    task: Option<String>,
}

#[derive(Subcommand)]
enum EvalTask {
    /// Fit a linear probe on frozen features; every fifth image (by index)
    /// is the held-out split.
    Linear {
        #[command(flatten)]
        common: EvalCommonArgs,
    },
    /// Nearest-centroid episodes over frozen features.
    Fewshot {
        #[command(flatten)]
        common: EvalCommonArgs,
        /// Episode sampling seed.
        #[arg(long)]
        seed: u64,
        /// Classes per episode.
        #[arg(long, default_value_t = 5)]
        way: usize,
        /// Support items per class.
        #[arg(long, default_value_t = 5)]
        shot: usize,
        /// Query items per class.
        #[arg(long, default_value_t = 15)]
        query: usize,
        /// Episode count.
        #[arg(long, default_value_t = 200)]
        episodes: usize,
    },
    /// Score saliency maps against foreground masks, pixels pooled across
    /// the set.
    Saliency {
        #[command(flatten)]
        common: EvalCommonArgs,
        /// Mask tensor file; ids from the .ids sidecar.
        #[arg(long)]
        masks: PathBuf,
        /// Also report per-image mean AUCs, which weight every image
        /// equally instead of every pixel.
        #[arg(long = "per-image")]
        per_image: bool,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum ReportFormat {
    Table,
    Kv,
}

#[derive(Args)]
struct ReportArgs {
    /// Output layout: an aligned metric table or flat key=value lines.
    #[arg(long, value_enum)]
    format: ReportFormat,
    /// Output file; the rendered text is also printed.
    #[arg(long)]
    out: PathBuf,
    /// Metric report files to merge, one column per file.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::GenSynth(args) => gen_synth_cmd(args),
        Command::Embed(args) => embed_cmd(args),
        Command::SamplePairs(args) => sample_pairs_cmd(args),
        Command::FilterCaptions(args) => filter_captions_cmd(args),
        Command::Train(args) => train_cmd(args),
        Command::Saliency(args) => saliency_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Report(args) => report_cmd(args),
    }
}

/// Sidecar id file next to a binary tensor file: same path, `.ids`
/// extension.
fn ids_path(bin: &Path) -> PathBuf {
    bin.with_extension("ids")
}

fn gen_synth_cmd(args: GenSynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_classes: args.classes,
        per_class: args.per_class,
        image_shape: (args.channels, args.image_size, args.image_size),
        noise_sigma: args.noise_sigma,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let data = gen_synthetic(&cfg)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let images_bin = args.out_dir.join("images.img");
    let masks_bin = args.out_dir.join("masks.msk");
    write_images(&data.images, &images_bin, &ids_path(&images_bin))?;
    binfmt::write_masks(&data.masks, &masks_bin, &ids_path(&masks_bin))?;
    write_captions(&data.captions, &args.out_dir.join("captions.jsonl"))?;
    binfmt::write_labels(&data.labels, &args.out_dir.join("labels.tsv"))?;
    println!("images={}", data.images.len());
    println!("classes={}", data.labels.num_classes());
    println!("caption_nn_same_class_rate={}", data.nn_same_class_rate);
    Ok(())
}

fn embed_cmd(args: EmbedArgs) -> Result<()> {
    let records = read_captions(&args.captions)?;
    let (matrix, fallback_ids) = embed_captions(&records, args.dim, args.seed)?;
    write_embeddings(&matrix, &args.out, &args.ids)?;
    println!("rows={}", matrix.len());
    println!("dim={}", matrix.dim());
    println!("fallback_rows={}", fallback_ids.len());
    Ok(())
}

fn sample_pairs_cmd(args: SamplePairsArgs) -> Result<()> {
    let matrix = read_embeddings(&args.embeddings, &args.ids)?;
    let cfg = NNQueryConfig {
        exclude_self: !args.no_exclude_self,
        block_size: args.block_size,
    };
    let manifest = build_pair_manifest(&matrix, &cfg)?;
    write_manifest(&manifest, &args.out)?;
    let stats = manifest_stats(&manifest, None)?;
    println!("pairs={}", stats.pairs);
    println!("mean_similarity={}", stats.mean_similarity);
    println!("min_similarity={}", stats.min_similarity);
    Ok(())
}

fn filter_captions_cmd(args: FilterCaptionsArgs) -> Result<()> {
    let records = read_captions(&args.input)?;
    let policy = FilterPolicy { min_score: args.min_score };
    let (kept, report) = filter_captions(&records, &policy)?;
    write_captions(&kept, &args.out)?;
    fs::write(&args.report, report.to_kv()).map_err(|e| Error::io(&args.report, e))?;
    print!("{}", report.to_kv());
    Ok(())
}

fn objective_name(kind: ObjectiveKind) -> &'static str {
    match kind {
        ObjectiveKind::NtXent => "ntxent",
        ObjectiveKind::SimSiam => "simsiam",
        ObjectiveKind::Nnclr => "nnclr",
        ObjectiveKind::Swav => "swav",
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| Error::format(path, e.to_string()))?
        }
        None => TrainConfig::new(ObjectiveKind::NtXent, PairSource::Augment),
    };
    if let Some(obj) = args.objective {
        cfg.objective.kind = obj.kind();
    }
    if let Some(src) = args.pair_source {
        cfg.pair_source = src.source();
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        cfg.batch_size = batch;
    }
    cfg.seed = args.seed;

    let images = read_images(&args.dataset, &ids_path(&args.dataset))?;
    let captions = read_captions(&args.captions)?;
    let manifest = match &args.manifest {
        Some(path) => Some(read_manifest(path)?),
        None => None,
    };
    let outcome = train(&cfg, &images, &captions, manifest.as_ref())?;

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let history_path = args.out_dir.join("history.csv");
    fs::write(&history_path, outcome.history.to_csv()).map_err(|e| Error::io(&history_path, e))?;
    checkpoint::save(&outcome.checkpoint, &args.out_dir.join("best.ckpt"))?;
    checkpoint::save(&outcome.last, &args.out_dir.join("last.ckpt"))?;

    let mut report = MetricsReport::new();
    report.push("task", "train")?;
    report.push("objective", objective_name(cfg.objective.kind))?;
    report.push(
        "pair_source",
        match cfg.pair_source {
            PairSource::Augment => "augment",
            PairSource::Manifest => "manifest",
        },
    )?;
    report.push_usize("epochs", cfg.epochs)?;
    report.push_usize("batch_size", cfg.batch_size)?;
    report.push_usize("seed", cfg.seed as usize)?;
    report.push_usize("best_epoch", outcome.best_epoch)?;
    report.push_f64("metric.best_val_acc", outcome.best_val_acc)?;
    report.push_f64("metric.final_val_acc", outcome.final_val_acc)?;
    report.save(&args.out_dir.join("report.txt"))?;
    println!("best_epoch={}", outcome.best_epoch);
    println!("best_val_acc={}", outcome.best_val_acc);
    println!("final_val_acc={}", outcome.final_val_acc);
    Ok(())
}

struct SaliencyMaps {
    maps: Vec<Tensor<f32>>,
    all_zero: usize,
}

/// GradCAM map per image at its labeled class, under a linear probe fit on
/// the full set's frozen features.
fn compute_saliency_maps(
    ckpt: &Checkpoint,
    images: &ImageTensorSet,
    labels: &LabelTable,
) -> Result<SaliencyMaps> {
    let enc = Encoder::new(ckpt.spec.clone())?;
    if images.shape != enc.spec().input_shape {
        return Err(Error::Config(format!(
            "images have shape {:?} but the checkpoint expects {:?}",
            images.shape,
            enc.spec().input_shape
        )));
    }
    let class_ids = labels.classes_for(&images.ids)?;
    let (c, h, w) = images.shape;
    let all = Tensor::from_vec(
        &[images.len(), c, h, w],
        images.data.clone(),
    )?;
    let features = enc.features_batched(&ckpt.params, &all, FEATURE_CHUNK)?;
    let probe = linear_probe(&features, &class_ids, &features, &class_ids, &ProbeConfig::default())?;
    let mut maps = Vec::with_capacity(images.len());
    let mut all_zero = 0usize;
    for (i, &cid) in class_ids.iter().enumerate() {
        let image = Tensor::from_vec(&[c, h, w], images.image(i).to_vec())?;
        let row: Vec<f32> = probe
            .class_weights(cid)
            .iter()
            .map(|v| *v as f32)
            .collect();
        let out = gradcam(&enc, &ckpt.params, &image, &row, (h, w))?;
        if out.all_zero {
            all_zero += 1;
        }
        maps.push(out.map);
    }
    Ok(SaliencyMaps { maps, all_zero })
}

fn saliency_cmd(args: SaliencyArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let images = read_images(&args.dataset, &ids_path(&args.dataset))?;
    let labels = read_labels(&args.labels)?;
    let out = compute_saliency_maps(&ckpt, &images, &labels)?;
    let (_, h, w) = images.shape;
    let mut data = Vec::with_capacity(images.len() * h * w);
    for map in &out.maps {
        data.extend_from_slice(map.data());
    }
    let set = ImageTensorSet { ids: images.ids.clone(), shape: (1, h, w), data };
    write_images(&set, &args.out, &ids_path(&args.out))?;
    println!("maps={}", set.len());
    println!("all_zero_maps={}", out.all_zero);
    Ok(())
}

/// Writes an evaluation report: key=value block, blank line, aligned
/// single-column table of the metric keys.
fn write_eval_report(report: &MetricsReport, out: &Path) -> Result<()> {
    let table = merge_reports(&[("result".to_string(), report.clone())])?;
    let text = format!("{}\n{}", report.render(), table.render(true));
    fs::write(out, text).map_err(|e| Error::io(out, e))
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    match args.task {
        EvalTask::Linear { common } => {
            let ckpt = checkpoint::load(&common.checkpoint)?;
            let enc = Encoder::new(ckpt.spec.clone())?;
            let images = read_images(&common.dataset, &ids_path(&common.dataset))?;
            let labels = read_labels(&common.labels)?;
            let class_ids = labels.classes_for(&images.ids)?;
            let (c, h, w) = images.shape;
            let all = Tensor::from_vec(&[images.len(), c, h, w], images.data.clone())?;
            let features = enc.features_batched(&ckpt.params, &all, FEATURE_CHUNK)?;
            // Fixed index split: every fifth image is held out.
            let dim = features.shape()[1];
            let mut train_rows = Vec::new();
            let mut train_y = Vec::new();
            let mut eval_rows = Vec::new();
            let mut eval_y = Vec::new();
            for (i, &cid) in class_ids.iter().enumerate() {
                if i % 5 == 0 {
                    eval_rows.extend_from_slice(features.row(i));
                    eval_y.push(cid);
                } else {
                    train_rows.extend_from_slice(features.row(i));
                    train_y.push(cid);
                }
            }
            let train_x = Tensor::from_vec(&[train_y.len(), dim], train_rows)?;
            let eval_x = Tensor::from_vec(&[eval_y.len(), dim], eval_rows)?;
            let probe = linear_probe(&train_x, &train_y, &eval_x, &eval_y, &ProbeConfig::default())?;
            let mut report = MetricsReport::new();
            report.push("task", common.task.as_deref().unwrap_or("linear-probe"))?;
            report.push_f64("metric.accuracy", probe.eval_accuracy)?;
            report.push_f64("metric.train_accuracy", probe.train_accuracy)?;
            report.push("converged", if probe.converged { "true" } else { "false" })?;
            report.push_usize("iterations", probe.iterations)?;
            report.push_usize("classes", probe.num_classes)?;
            report.push_usize("train_count", train_y.len())?;
            report.push_usize("eval_count", eval_y.len())?;
            write_eval_report(&report, &common.out)?;
            println!("accuracy={}", probe.eval_accuracy);
            Ok(())
        }
        EvalTask::Fewshot { common, seed, way, shot, query, episodes } => {
            let ckpt = checkpoint::load(&common.checkpoint)?;
            let enc = Encoder::new(ckpt.spec.clone())?;
            let images = read_images(&common.dataset, &ids_path(&common.dataset))?;
            let labels = read_labels(&common.labels)?;
            let class_ids = labels.classes_for(&images.ids)?;
            let (c, h, w) = images.shape;
            let all = Tensor::from_vec(&[images.len(), c, h, w], images.data.clone())?;
            let features = enc.features_batched(&ckpt.params, &all, FEATURE_CHUNK)?;
            let cfg = FewshotConfig { way, shot, query, episodes, seed };
            let result = fewshot_eval(&features, &class_ids, &cfg)?;
            let mut report = MetricsReport::new();
            report.push("task", common.task.as_deref().unwrap_or("fewshot"))?;
            report.push_f64("metric.mean_accuracy", result.mean_accuracy)?;
            report.push_f64("metric.stderr", result.stderr)?;
            report.push_usize("way", way)?;
            report.push_usize("shot", shot)?;
            report.push_usize("query", query)?;
            report.push_usize("episodes", episodes)?;
            report.push_usize("seed", seed as usize)?;
            report.push_usize("eligible_classes", result.eligible_classes)?;
            report.push_usize("excluded_classes", result.excluded_classes.len())?;
            write_eval_report(&report, &common.out)?;
            println!("mean_accuracy={}", result.mean_accuracy);
            println!("stderr={}", result.stderr);
            Ok(())
        }
        EvalTask::Saliency { common, masks, per_image } => {
            let ckpt = checkpoint::load(&common.checkpoint)?;
            let images = read_images(&common.dataset, &ids_path(&common.dataset))?;
            let labels = read_labels(&common.labels)?;
            let mask_set = binfmt::read_masks(&masks, &ids_path(&masks))?;
            // Masks are matched to images by id, not file order.
            let mask_index = mask_set.id_index();
            let per_mask = mask_set.shape.0 * mask_set.shape.1;
            let mut data = Vec::with_capacity(images.len() * per_mask);
            for id in &images.ids {
                let &mi = mask_index.get(id.as_str()).ok_or_else(|| Error::UnknownId {
                    id: id.clone(),
                    context: "mask set".into(),
                })?;
                data.extend_from_slice(mask_set.mask(mi));
            }
            let aligned = MaskSet { ids: images.ids.clone(), shape: mask_set.shape, data };
            let out = compute_saliency_maps(&ckpt, &images, &labels)?;
            let auc = saliency_auc(&out.maps, &aligned)?;
            let mut report = MetricsReport::new();
            report.push("task", common.task.as_deref().unwrap_or("saliency"))?;
            report.push_f64("metric.auc_roc", auc.auc_roc)?;
            report.push_f64("metric.auc_pr", auc.auc_pr)?;
            if per_image {
                let pi = saliency_auc_per_image(&out.maps, &aligned)?;
                report.push_f64("metric.auc_roc_per_image", pi.mean_auc_roc)?;
                report.push_f64("metric.auc_pr_per_image", pi.mean_auc_pr)?;
                report.push_usize("scored_images", pi.scored)?;
                report.push_usize("skipped_images", pi.skipped)?;
            }
            report.push_usize("positives", auc.positives)?;
            report.push_usize("negatives", auc.negatives)?;
            report.push_usize("maps", out.maps.len())?;
            report.push_usize("all_zero_maps", out.all_zero)?;
            write_eval_report(&report, &common.out)?;
            println!("auc_roc={}", auc.auc_roc);
            println!("auc_pr={}", auc.auc_pr);
            Ok(())
        }
    }
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        reports.push((stem, MetricsReport::load(path)?));
    }
    let text = match args.format {
        ReportFormat::Table => merge_reports(&reports)?.render(true),
        ReportFormat::Kv => {
            let mut out = String::new();
            for (stem, report) in &reports {
                for (k, v) in report.entries() {
                    out.push_str(&format!("{stem}.{k}={v}\n"));
                }
            }
            out
        }
    };
    fs::write(&args.out, &text).map_err(|e| Error::io(&args.out, e))?;
    print!("{text}");
    Ok(())
}
