//! The training loop: fixed split, precomputed views, per-step optimization,
//! per-epoch validation probe, and best-epoch selection.
//!
//! Everything stochastic is keyed off `cfg.seed` through separate salted
//! streams (split, init, prototypes, views, batch order), so a run is a pure
//! function of its inputs. Views are keyed per (image, view slot) and batch
//! order is drawn once, which makes every epoch process identical batches;
//! with a zero learning rate the loss history is therefore exactly flat.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::types::{
    validate_records, CaptionRecord, ImageTensorSet, LabelTable, PairManifest,
};
use crate::error::{Error, Result};
use crate::eval::probe::{linear_probe, ProbeConfig};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::encoder::{Encoder, Forward};
use crate::nn::params::ParamSet;
use crate::nn::tensor::Tensor;
use crate::objectives::{nnclr_loss, ntxent_loss, simsiam_loss, swav_loss, ObjectiveKind, SupportQueue};
use crate::train::adamw::AdamW;
use crate::train::augment::augment_image;
use crate::train::config::{PairSource, TrainConfig};
use crate::train::schedule::lr_at;
use crate::util::mix_seed;

const SPLIT_SALT: u64 = 0x51c7;
const INIT_SALT: u64 = 0x11a9;
const PROTO_SALT: u64 = 0x9d01;
const VIEW_SALT: u64 = 0xa3fb;
const ORDER_SALT: u64 = 0x0dd5;

/// Iteration cap for the per-epoch validation probe.
const VAL_PROBE_ITERS: usize = 80;
/// Images per chunk when extracting frozen features.
const FEATURE_CHUNK: usize = 256;

/// Name of the learned cluster-prototype matrix inside the training
/// parameter set. It is optimizer state for one objective, not part of the
/// encoder, so checkpoints never contain it.
pub const PROTOTYPES_PARAM: &str = "prototypes";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    /// 0 is the untrained baseline; training epochs count from 1.
    pub epoch: usize,
    /// Mean batch loss of the epoch. Absent on the baseline row.
    pub train_loss: Option<f64>,
    /// Validation-probe accuracy at the end of the epoch.
    pub val_acc: f64,
    /// Learning rate of the epoch's last step; 0 on the baseline row.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rows: Vec<EpochRow>,
}

impl History {
    /// Epoch with the highest validation accuracy, earliest on ties. The
    /// baseline row competes too: a run that never beats random init
    /// reports epoch 0.
    #[must_use]
    pub fn best_epoch(&self) -> usize {
        let mut best = 0usize;
        let mut best_acc = f64::NEG_INFINITY;
        for row in &self.rows {
            if row.val_acc > best_acc {
                best_acc = row.val_acc;
                best = row.epoch;
            }
        }
        best
    }

    /// CSV with header `epoch,train_loss,val_acc,lr`. Numbers use the
    /// shortest round-trip form; the baseline row has an empty loss cell.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_acc,lr\n");
        for row in &self.rows {
            let loss = row.train_loss.map(|l| format!("{l}")).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", row.epoch, loss, row.val_acc, row.lr));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The checkpoint selected by `early_stop`: best validation epoch when
    /// set, final epoch otherwise.
    pub checkpoint: Checkpoint,
    /// Final-epoch checkpoint, regardless of selection.
    pub last: Checkpoint,
    pub history: History,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub final_val_acc: f64,
}

/// Dataset indices used as each training image's second view. In augment
/// mode every image pairs with itself; in manifest mode with its caption
/// neighbor.
fn second_view_sources(
    cfg: &TrainConfig,
    images: &ImageTensorSet,
    manifest: Option<&PairManifest>,
) -> Result<Vec<usize>> {
    match cfg.pair_source {
        PairSource::Augment => {
            if manifest.is_some() {
                return Err(Error::Config(
                    "a pair manifest was supplied but pair_source is \"augment\"".into(),
                ));
            }
            Ok((0..images.len()).collect())
        }
        PairSource::Manifest => {
            let manifest = manifest.ok_or_else(|| {
                Error::Config("pair_source \"manifest\" needs a pair manifest".into())
            })?;
            manifest.validate(None)?;
            let id_to_idx = images.id_index();
            let neighbor_of = manifest.neighbor_of();
            images
                .ids
                .iter()
                .map(|id| {
                    let nid = neighbor_of.get(id.as_str()).ok_or_else(|| Error::UnknownId {
                        id: id.clone(),
                        context: "query id in pair manifest".into(),
                    })?;
                    id_to_idx.get(nid).copied().ok_or_else(|| Error::UnknownId {
                        id: (*nid).to_string(),
                        context: "neighbor id in pair manifest".into(),
                    })
                })
                .collect()
        }
    }
}

/// Deterministic view of image `idx`, keyed by (seed, image, view slot).
fn make_view(
    cfg: &TrainConfig,
    images: &ImageTensorSet,
    idx: usize,
    view: u64,
) -> Result<Vec<f32>> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, VIEW_SALT, idx as u64, view]));
    augment_image(images.image(idx), images.shape, &cfg.augment, &mut rng)
}

fn batch_tensor(
    views: &HashMap<usize, Vec<f32>>,
    indices: &[usize],
    shape: (usize, usize, usize),
) -> Result<Tensor<f32>> {
    let (c, h, w) = shape;
    let mut data = Vec::with_capacity(indices.len() * c * h * w);
    for &i in indices {
        data.extend_from_slice(&views[&i]);
    }
    Tensor::from_vec(&[indices.len(), c, h, w], data)
}

/// Splits image indices into sorted (train, val) index lists.
fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let val_count = ((n as f64 * val_fraction).round() as usize).clamp(1, n.saturating_sub(2));
    if n < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 images to split off a validation set, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, SPLIT_SALT]));
    order.shuffle(&mut rng);
    let mut val: Vec<usize> = order[..val_count].to_vec();
    let mut train: Vec<usize> = order[val_count..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

fn image_subset(images: &ImageTensorSet, indices: &[usize]) -> Result<Tensor<f32>> {
    let (c, h, w) = images.shape;
    let mut data = Vec::with_capacity(indices.len() * c * h * w);
    for &i in indices {
        data.extend_from_slice(images.image(i));
    }
    Tensor::from_vec(&[indices.len(), c, h, w], data)
}

/// Copies the encoder-owned parameters (dropping trainer-only state such as
/// cluster prototypes) in layout order.
fn encoder_checkpoint(enc: &Encoder, ps: &ParamSet<f32>) -> Result<Checkpoint> {
    let mut params = ParamSet::new();
    for (name, _) in enc.param_layout() {
        params.insert(&name, ps.get(&name)?.clone())?;
    }
    Ok(Checkpoint { spec: enc.spec().clone(), params })
}

fn renormalize_prototypes(ps: &mut ParamSet<f32>) -> Result<()> {
    let protos = ps.get_mut(PROTOTYPES_PARAM)?;
    let (k, d) = (protos.shape()[0], protos.shape()[1]);
    let data = protos.data_mut();
    for r in 0..k {
        let row = &mut data[r * d..(r + 1) * d];
        let mut sq = 0.0f64;
        for v in row.iter() {
            sq += f64::from(*v) * f64::from(*v);
        }
        let norm = sq.sqrt();
        if norm < 1e-12 {
            return Err(Error::Validation(format!(
                "prototype row {r} collapsed to zero during training"
            )));
        }
        for v in row.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    Ok(())
}

struct StepGrads {
    loss: f64,
    /// Gradient on the first view's projections; `None` when the objective
    /// sends no gradient down that branch.
    dz1: Option<Tensor<f32>>,
    dz2: Tensor<f32>,
}

#[allow(clippy::too_many_arguments)]
fn objective_step(
    cfg: &TrainConfig,
    enc: &Encoder,
    ps: &mut ParamSet<f32>,
    fwd1: &Forward<f32>,
    fwd2: &Forward<f32>,
    queue: &mut Option<SupportQueue<f32>>,
) -> Result<StepGrads> {
    let obj = &cfg.objective;
    match obj.kind {
        ObjectiveKind::NtXent => {
            let out = ntxent_loss(&fwd1.projections, &fwd2.projections, obj.temperature)?;
            Ok(StepGrads { loss: out.loss, dz1: Some(out.grad_z1), dz2: out.grad_z2 })
        }
        ObjectiveKind::SimSiam => {
            let p1 = enc.predict(ps, &fwd1.projections)?;
            let p2 = enc.predict(ps, &fwd2.projections)?;
            let out = simsiam_loss(&p1.output, &p2.output, &fwd1.projections, &fwd2.projections)?;
            // The projection targets carry exact-zero gradients (stop
            // gradient); encoder gradients arrive only through the
            // predictor inputs.
            let dz1 = enc.predict_backward(ps, &p1, &out.grad_p1)?;
            let dz2 = enc.predict_backward(ps, &p2, &out.grad_p2)?;
            Ok(StepGrads { loss: out.loss, dz1: Some(dz1), dz2 })
        }
        ObjectiveKind::Nnclr => {
            let queue = queue.as_mut().ok_or_else(|| {
                Error::Config("support queue missing for the neighbor-swap objective".into())
            })?;
            if queue.is_empty() {
                // First step: seed with the current projections so lookups
                // degenerate to identity neighbors instead of failing.
                queue.push_batch(&fwd1.projections)?;
            }
            let out = nnclr_loss(&fwd1.projections, &fwd2.projections, queue, obj.temperature)?;
            Ok(StepGrads { loss: out.loss, dz1: None, dz2: out.grad_z2 })
        }
        ObjectiveKind::Swav => {
            let protos = ps.get(PROTOTYPES_PARAM)?.clone();
            let out = swav_loss(
                &fwd1.projections,
                &fwd2.projections,
                &protos,
                obj.temperature,
                obj.sinkhorn_eps,
                obj.sinkhorn_iters,
            )?;
            ps.grad_mut(PROTOTYPES_PARAM)?.add_scaled(&out.grad_prototypes, 1.0);
            Ok(StepGrads { loss: out.loss, dz1: Some(out.grad_z1), dz2: out.grad_z2 })
        }
    }
}

/// Trains an encoder on `images` and returns checkpoints plus the per-epoch
/// history.
///
/// Captions supply the per-image `class_hint` labels that score the
/// validation probe; they never influence batches, pairs, or losses. In
/// manifest mode each image's second view is its manifest neighbor, and
/// every image id must resolve.
pub fn train(
    cfg: &TrainConfig,
    images: &ImageTensorSet,
    captions: &[CaptionRecord],
    manifest: Option<&PairManifest>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    images.validate()?;
    validate_records(captions)?;
    if images.shape != cfg.encoder.input_shape {
        return Err(Error::Config(format!(
            "images have shape {:?} but the encoder expects {:?}",
            images.shape, cfg.encoder.input_shape
        )));
    }

    let by_id: HashMap<&str, &CaptionRecord> =
        captions.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut label_pairs = Vec::with_capacity(images.len());
    for id in &images.ids {
        let record = by_id.get(id.as_str()).ok_or_else(|| Error::UnknownId {
            id: id.clone(),
            context: "caption records".into(),
        })?;
        let hint = record.class_hint.as_ref().ok_or_else(|| {
            Error::Validation(format!(
                "record {id:?} has no class_hint; validation scoring needs one per image"
            ))
        })?;
        label_pairs.push((id.clone(), hint.clone()));
    }
    let labels = LabelTable::new(label_pairs)?;
    if labels.num_classes() < 2 {
        return Err(Error::Validation(
            "validation scoring needs at least 2 distinct class hints".into(),
        ));
    }

    let (train_idx, val_idx) = split_indices(images.len(), cfg.val_fraction, cfg.seed)?;
    let batch = cfg.batch_size.min(train_idx.len());
    if batch < 2 {
        return Err(Error::Validation(format!(
            "training split has {} images; need at least 2 for a batch",
            train_idx.len()
        )));
    }
    let steps_per_epoch = train_idx.len() / batch;
    let total_steps = cfg.epochs * steps_per_epoch;
    let warmup = match cfg.warmup_steps {
        Some(w) => {
            if w >= total_steps {
                return Err(Error::Config(format!(
                    "warmup_steps ({w}) must be shorter than the run ({total_steps} steps)"
                )));
            }
            w
        }
        // Default 5% of the schedule, always leaving at least one
        // post-warmup step.
        None => ((total_steps as f64 * 0.05).round() as usize).min(total_steps - 1),
    };

    let enc = Encoder::new(cfg.encoder.clone())?;
    let mut ps: ParamSet<f32> = enc.init_params(mix_seed(&[cfg.seed, INIT_SALT]))?;
    let mut queue = None;
    match cfg.objective.kind {
        ObjectiveKind::Swav => {
            let k = cfg.objective.num_prototypes;
            let d = enc.proj_dim();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, PROTO_SALT]));
            let mut data = vec![0.0f32; k * d];
            for row in data.chunks_exact_mut(d) {
                let mut sq = 0.0f64;
                let draws: Vec<f64> =
                    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                for v in &draws {
                    sq += v * v;
                }
                let norm = sq.sqrt().max(1e-12);
                for (slot, v) in row.iter_mut().zip(draws.iter()) {
                    *slot = (v / norm) as f32;
                }
            }
            ps.insert(PROTOTYPES_PARAM, Tensor::from_vec(&[k, d], data)?)?;
        }
        ObjectiveKind::Nnclr => {
            queue = Some(SupportQueue::new(cfg.objective.queue_size, enc.proj_dim())?);
        }
        _ => {}
    }

    // Views are fixed per (image, slot) for the whole run; precompute the
    // batches once since order is fixed too.
    let view2_src = second_view_sources(cfg, images, manifest)?;
    let mut order = train_idx.clone();
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, ORDER_SALT]));
    order.shuffle(&mut order_rng);
    let mut views1: HashMap<usize, Vec<f32>> = HashMap::new();
    let mut views2: HashMap<usize, Vec<f32>> = HashMap::new();
    for &i in &order {
        views1.insert(i, make_view(cfg, images, i, 1)?);
        let src = view2_src[i];
        if let Entry::Vacant(slot) = views2.entry(src) {
            slot.insert(make_view(cfg, images, src, 2)?);
        }
    }
    let mut batches: Vec<(Tensor<f32>, Tensor<f32>)> = Vec::with_capacity(steps_per_epoch);
    for s in 0..steps_per_epoch {
        let ids = &order[s * batch..(s + 1) * batch];
        let src2: Vec<usize> = ids.iter().map(|&i| view2_src[i]).collect();
        batches.push((
            batch_tensor(&views1, ids, images.shape)?,
            batch_tensor(&views2, &src2, images.shape)?,
        ));
    }

    let train_images = image_subset(images, &train_idx)?;
    let val_images = image_subset(images, &val_idx)?;
    let index_labels = |indices: &[usize]| -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|&i| labels.class_of(&images.ids[i]))
            .collect()
    };
    let train_labels = index_labels(&train_idx)?;
    let val_labels = index_labels(&val_idx)?;
    let probe_cfg = ProbeConfig { max_iters: VAL_PROBE_ITERS, ..ProbeConfig::default() };
    let val_accuracy = |ps: &ParamSet<f32>| -> Result<f64> {
        let tf = enc.features_batched(ps, &train_images, FEATURE_CHUNK)?;
        let vf = enc.features_batched(ps, &val_images, FEATURE_CHUNK)?;
        Ok(linear_probe(&tf, &train_labels, &vf, &val_labels, &probe_cfg)?.eval_accuracy)
    };

    let baseline = val_accuracy(&ps)?;
    let mut history = History::default();
    history.rows.push(EpochRow { epoch: 0, train_loss: None, val_acc: baseline, lr: 0.0 });
    let mut best_epoch = 0usize;
    let mut best_acc = baseline;
    let mut best_params = ps.clone();

    let mut opt = AdamW::new(cfg.weight_decay)?;
    let mut global_step = 0usize;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0f64;
        let mut last_lr = 0.0f64;
        for (step, (v1, v2)) in batches.iter().enumerate() {
            let lr = lr_at(global_step, total_steps, warmup, cfg.lr_peak)?;
            let fwd1 = enc.forward(&ps, v1)?;
            let fwd2 = enc.forward(&ps, v2)?;
            let grads = objective_step(cfg, &enc, &mut ps, &fwd1, &fwd2, &mut queue)?;
            if !grads.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            if let Some(dz1) = &grads.dz1 {
                enc.backward(&mut ps, &fwd1, dz1)?;
            }
            enc.backward(&mut ps, &fwd2, &grads.dz2)?;
            opt.step(&mut ps, lr)?;
            if cfg.objective.kind == ObjectiveKind::Swav {
                renormalize_prototypes(&mut ps)?;
            }
            ps.zero_grads();
            loss_sum += grads.loss;
            last_lr = lr;
            global_step += 1;
        }
        let val_acc = val_accuracy(&ps)?;
        history.rows.push(EpochRow {
            epoch,
            train_loss: Some(loss_sum / steps_per_epoch as f64),
            val_acc,
            lr: last_lr,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best_epoch = epoch;
            best_params = ps.clone();
        }
    }

    let last = encoder_checkpoint(&enc, &ps)?;
    let best = encoder_checkpoint(&enc, &best_params)?;
    let final_val_acc = history.rows.last().map(|r| r.val_acc).unwrap_or(baseline);
    Ok(TrainOutcome {
        checkpoint: if cfg.early_stop { best } else { last.clone() },
        last,
        history,
        best_epoch,
        best_val_acc: best_acc,
        final_val_acc,
    })
}
