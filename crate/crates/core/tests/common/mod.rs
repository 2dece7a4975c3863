//! Shared finite-difference harness for the gradient tests and the
//! acceptance suite.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lgcl_core::nn::encoder::{ConvBlockSpec, EncoderSpec};
use lgcl_core::nn::layers::LayerOp;
use lgcl_core::nn::params::ParamSet;
use lgcl_core::nn::tensor::Tensor;
use lgcl_core::objectives::{
    nnclr_loss, ntxent_loss, simsiam_loss, swav_loss, swav_loss_with_codes, SupportQueue,
};

/// Central-difference step.
pub const H: f64 = 1e-5;
/// Maximum allowed relative error between analytic and numeric values.
pub const REL_TOL: f64 = 1e-4;
/// Components where both values are below this are skipped: their relative
/// error is dominated by cancellation noise.
pub const SKIP_FLOOR: f64 = 1e-7;

/// Accumulates the worst relative error seen across comparisons.
#[derive(Debug, Default)]
pub struct Tracker {
    pub max_rel: f64,
    pub checked: usize,
}

impl Tracker {
    pub fn compare(&mut self, an: f64, fd: f64, what: &str) {
        if an.abs() < SKIP_FLOOR && fd.abs() < SKIP_FLOOR {
            return;
        }
        let rel = (an - fd).abs() / an.abs().max(fd.abs());
        self.max_rel = self.max_rel.max(rel);
        self.checked += 1;
        assert!(
            rel < REL_TOL,
            "{what}: analytic {an:.9e} vs finite difference {fd:.9e} (rel err {rel:.3e})"
        );
    }
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random matrix with exactly unit-norm rows.
pub fn unit_rows(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Tensor<f64> {
    let mut data = vec![0.0f64; b * d];
    for i in 0..b {
        loop {
            let row = rand_vec(rng, d);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.1 {
                for (j, v) in row.iter().enumerate() {
                    data[i * d + j] = v / norm;
                }
                break;
            }
        }
    }
    Tensor::from_vec(&[b, d], data).unwrap()
}

/// Fixed random readout weights turn a tensor output into a scalar loss,
/// so the loss gradient with respect to the output is the weight tensor.
pub fn weighted_sum(y: &Tensor<f64>, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Checks one layer instance: parameter gradients via the flattened
/// parameter vector and input gradients entry by entry.
pub fn check_layer(
    tracker: &mut Tracker,
    op: &LayerOp,
    ps: &ParamSet<f64>,
    x: &Tensor<f64>,
    rng: &mut ChaCha8Rng,
    tag: &str,
) {
    let (y, cache) = op.forward(ps, x).unwrap();
    let w = rand_vec(rng, y.data().len());
    let gy = Tensor::from_vec(y.shape(), w.clone()).unwrap();

    let mut ps_grad = ps.clone();
    let gx = op.backward(&mut ps_grad, &cache, &gy).unwrap();
    let analytic_params = ps_grad.flatten_grads();

    let flat = ps.flatten();
    for i in 0..flat.len() {
        let mut plus = ps.clone();
        let mut minus = ps.clone();
        let mut fp = flat.clone();
        fp[i] += H;
        plus.set_from_flat(&fp).unwrap();
        fp[i] -= 2.0 * H;
        minus.set_from_flat(&fp).unwrap();
        let lp = weighted_sum(&op.forward(&plus, x).unwrap().0, &w);
        let lm = weighted_sum(&op.forward(&minus, x).unwrap().0, &w);
        tracker.compare(analytic_params[i], (lp - lm) / (2.0 * H), &format!("{tag} param {i}"));
    }

    for i in 0..x.data().len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus.data_mut()[i] += H;
        minus.data_mut()[i] -= H;
        let lp = weighted_sum(&op.forward(ps, &plus).unwrap().0, &w);
        let lm = weighted_sum(&op.forward(ps, &minus).unwrap().0, &w);
        tracker.compare(gx.data()[i], (lp - lm) / (2.0 * H), &format!("{tag} input {i}"));
    }
}

/// Entry-by-entry finite differences of `f` against `analytic`, perturbing
/// one matrix while the closure rebuilds the loss.
pub fn fd_matrix(
    tracker: &mut Tracker,
    base: &Tensor<f64>,
    analytic: &Tensor<f64>,
    tag: &str,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) {
    for i in 0..base.data().len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus.data_mut()[i] += H;
        minus.data_mut()[i] -= H;
        tracker.compare(
            analytic.data()[i],
            (f(&plus) - f(&minus)) / (2.0 * H),
            &format!("{tag} entry {i}"),
        );
    }
}

/// Small encoder used by the composed-network gradient checks.
pub fn tiny_spec(pred: bool) -> EncoderSpec {
    EncoderSpec {
        input_shape: (2, 6, 6),
        conv_blocks: vec![ConvBlockSpec { out_channels: 3, stride: 1, pool: true }],
        embed_dim: 8,
        proj_dims: vec![8, 4],
        pred_dims: if pred { Some(vec![3]) } else { None },
    }
}

pub fn check_conv_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let in_ch = rng.random_range(1..=3);
        let out_ch = rng.random_range(1..=3);
        let stride = if rng.random_range(0..2) == 0 { 1 } else { 2 };
        let (b, h, w) = (rng.random_range(1..=2), rng.random_range(4..=6), rng.random_range(4..=6));
        let op = LayerOp::Conv { name: "c".into(), in_ch, out_ch, stride };
        let mut ps = ParamSet::new();
        ps.insert("c.w", Tensor::from_vec(&[out_ch, in_ch, 3, 3], rand_vec(&mut rng, out_ch * in_ch * 9)).unwrap())
            .unwrap();
        ps.insert("c.b", Tensor::from_vec(&[out_ch], rand_vec(&mut rng, out_ch)).unwrap())
            .unwrap();
        let x = Tensor::from_vec(&[b, in_ch, h, w], rand_vec(&mut rng, b * in_ch * h * w)).unwrap();
        check_layer(t, &op, &ps, &x, &mut rng, &format!("conv[{inst}]"));
    }
}

pub fn check_relu_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let n = rng.random_range(4..=12);
        // keep every activation away from the kink at zero
        let data: Vec<f64> = (0..2 * n)
            .map(|_| {
                let mag = rng.random_range(0.1..1.0);
                if rng.random_range(0..2) == 0 {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let x = Tensor::from_vec(&[2, n], data).unwrap();
        check_layer(t, &LayerOp::Relu, &ParamSet::new(), &x, &mut rng, &format!("relu[{inst}]"));
    }
}

pub fn check_maxpool_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let (b, c) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let (h, w) = (rng.random_range(4..=6), rng.random_range(4..=6));
        // distinct values with gaps far larger than the probe step, so the
        // argmax cannot flip under perturbation
        let n = b * c * h * w;
        let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.037 - 1.0).collect();
        vals.shuffle(&mut rng);
        let x = Tensor::from_vec(&[b, c, h, w], vals).unwrap();
        check_layer(t, &LayerOp::MaxPool2, &ParamSet::new(), &x, &mut rng, &format!("maxpool[{inst}]"));
    }
}

pub fn check_gap_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let (b, c) = (rng.random_range(1..=2), rng.random_range(1..=3));
        let (h, w) = (rng.random_range(2..=5), rng.random_range(2..=5));
        let x = Tensor::from_vec(&[b, c, h, w], rand_vec(&mut rng, b * c * h * w)).unwrap();
        check_layer(t, &LayerOp::GlobalAvgPool, &ParamSet::new(), &x, &mut rng, &format!("gap[{inst}]"));
    }
}

pub fn check_dense_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let in_dim = rng.random_range(3..=6);
        let out_dim = rng.random_range(2..=5);
        let b = rng.random_range(2..=3);
        let op = LayerOp::Dense { name: "d".into(), in_dim, out_dim };
        let mut ps = ParamSet::new();
        ps.insert("d.w", Tensor::from_vec(&[out_dim, in_dim], rand_vec(&mut rng, out_dim * in_dim)).unwrap())
            .unwrap();
        ps.insert("d.b", Tensor::from_vec(&[out_dim], rand_vec(&mut rng, out_dim)).unwrap())
            .unwrap();
        let x = Tensor::from_vec(&[b, in_dim], rand_vec(&mut rng, b * in_dim)).unwrap();
        check_layer(t, &op, &ps, &x, &mut rng, &format!("dense[{inst}]"));
    }
}

pub fn check_rownorm_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let (b, d) = (rng.random_range(2..=3), rng.random_range(3..=6));
        let x = Tensor::from_vec(&[b, d], rand_vec(&mut rng, b * d)).unwrap();
        check_layer(t, &LayerOp::RowNorm, &ParamSet::new(), &x, &mut rng, &format!("rownorm[{inst}]"));
    }
}

pub fn check_l2norm_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let (b, d) = (rng.random_range(2..=3), rng.random_range(3..=6));
        let x = unit_rows(&mut rng, b, d);
        check_layer(t, &LayerOp::L2Norm, &ParamSet::new(), &x, &mut rng, &format!("l2norm[{inst}]"));
    }
}

pub fn check_ntxent_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let b = rng.random_range(2..=4);
        let d = rng.random_range(3..=6);
        let tau = [0.1, 0.5, 1.0][rng.random_range(0..3)];
        let z1 = unit_rows(&mut rng, b, d);
        let z2 = unit_rows(&mut rng, b, d);
        let out = ntxent_loss(&z1, &z2, tau).unwrap();
        fd_matrix(t, &z1, &out.grad_z1, &format!("ntxent[{inst}] z1"), |z| {
            ntxent_loss(z, &z2, tau).unwrap().loss
        });
        fd_matrix(t, &z2, &out.grad_z2, &format!("ntxent[{inst}] z2"), |z| {
            ntxent_loss(&z1, z, tau).unwrap().loss
        });
    }
}

pub fn check_simsiam_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let b = rng.random_range(2..=4);
        let d = rng.random_range(3..=6);
        let p1 = unit_rows(&mut rng, b, d);
        let p2 = unit_rows(&mut rng, b, d);
        let z1 = unit_rows(&mut rng, b, d);
        let z2 = unit_rows(&mut rng, b, d);
        let out = simsiam_loss(&p1, &p2, &z1, &z2).unwrap();
        assert!(out.grad_z1.data().iter().all(|&v| v == 0.0), "simsiam grad_z1 must be exactly zero");
        assert!(out.grad_z2.data().iter().all(|&v| v == 0.0), "simsiam grad_z2 must be exactly zero");
        fd_matrix(t, &p1, &out.grad_p1, &format!("simsiam[{inst}] p1"), |p| {
            simsiam_loss(p, &p2, &z1, &z2).unwrap().loss
        });
        fd_matrix(t, &p2, &out.grad_p2, &format!("simsiam[{inst}] p2"), |p| {
            simsiam_loss(&p1, p, &z1, &z2).unwrap().loss
        });
    }
}

pub fn check_nnclr_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let b = rng.random_range(2..=4);
        let d = rng.random_range(3..=6);
        let tau = [0.1, 0.5][rng.random_range(0..2)];
        let z1 = unit_rows(&mut rng, b, d);
        let z2 = unit_rows(&mut rng, b, d);
        let seed_rows = unit_rows(&mut rng, 6, d);
        // the loss enqueues z1, so every probe evaluation needs its own queue
        let fresh_queue = || {
            let mut q = SupportQueue::new(16, d).unwrap();
            q.push_batch(&seed_rows).unwrap();
            q
        };
        let out = nnclr_loss(&z1, &z2, &mut fresh_queue(), tau).unwrap();
        assert!(
            out.grad_z1.data().iter().all(|&v| v == 0.0),
            "nnclr grad_z1 must be exactly zero (the query side is detached)"
        );
        fd_matrix(t, &z2, &out.grad_z2, &format!("nnclr[{inst}] z2"), |z| {
            nnclr_loss(&z1, z, &mut fresh_queue(), tau).unwrap().loss
        });
    }
}

pub fn check_swav_instances(t: &mut Tracker, seed: u64, instances: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for inst in 0..instances {
        let b = rng.random_range(2..=4);
        let d = rng.random_range(3..=5);
        let k = rng.random_range(2..=4);
        let tau = [0.1, 0.5][rng.random_range(0..2)];
        let z1 = unit_rows(&mut rng, b, d);
        let z2 = unit_rows(&mut rng, b, d);
        let protos = unit_rows(&mut rng, k, d);
        let out = swav_loss(&z1, &z2, &protos, tau, 0.05, 3).unwrap();

        // the full loss and the frozen-codes loss agree at the base point,
        // and the returned gradients are exactly the frozen-codes partials:
        // nothing propagates through the assignment
        let frozen = swav_loss_with_codes(&z1, &z2, &protos, &out.codes1, &out.codes2, tau).unwrap();
        assert!((out.loss - frozen.loss).abs() < 1e-12);
        assert_eq!(out.grad_z1.data(), frozen.grad_z1.data());
        assert_eq!(out.grad_z2.data(), frozen.grad_z2.data());
        assert_eq!(out.grad_prototypes.data(), frozen.grad_prototypes.data());

        let loss_frozen = |z1: &Tensor<f64>, z2: &Tensor<f64>, p: &Tensor<f64>| {
            swav_loss_with_codes(z1, z2, p, &out.codes1, &out.codes2, tau).unwrap().loss
        };
        fd_matrix(t, &z1, &out.grad_z1, &format!("swav[{inst}] z1"), |z| loss_frozen(z, &z2, &protos));
        fd_matrix(t, &z2, &out.grad_z2, &format!("swav[{inst}] z2"), |z| loss_frozen(&z1, z, &protos));
        fd_matrix(t, &protos, &out.grad_prototypes, &format!("swav[{inst}] prototypes"), |p| {
            loss_frozen(&z1, &z2, p)
        });
    }
}
