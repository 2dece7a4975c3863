//! Multinomial logistic-regression probe trained on frozen features.
//!
//! The probe is the standard readout for representation quality: features are
//! fixed, and a linear softmax classifier is fit on the training split by
//! full-batch gradient descent with a backtracking line search. All
//! arithmetic is f64 in a fixed order, and the weights start at zero, so a
//! given input always produces the same probe.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Settings for [`linear_probe`].
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Coefficient of the (lambda/2)*||W||^2 penalty on the weights. The bias
    /// is not penalized.
    pub l2: f64,
    /// Upper bound on gradient-descent iterations.
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this threshold.
    pub tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { l2: 1e-3, max_iters: 200, tol: 1e-6 }
    }
}

impl ProbeConfig {
    fn validate(&self) -> Result<()> {
        if !self.l2.is_finite() || self.l2 < 0.0 {
            return Err(Error::Config(format!("probe l2 must be finite and >= 0, got {}", self.l2)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("probe max_iters must be >= 1".into()));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::Config(format!("probe tol must be finite and > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Fitted probe together with its optimization trace.
#[derive(Debug, Clone)]
pub struct ProbeResult {
    /// Class weights, row-major `[num_classes, dim]`.
    pub weights: Vec<f64>,
    /// Per-class bias terms, length `num_classes`.
    pub bias: Vec<f64>,
    pub num_classes: usize,
    pub dim: usize,
    /// Accuracy on the probe's own training split.
    pub train_accuracy: f64,
    /// Accuracy on the held-out split.
    pub eval_accuracy: f64,
    /// Accepted-step losses, one per iteration. Strictly decreasing while the
    /// gradient norm stays above `tol`.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    /// True when the gradient norm reached `tol` before `max_iters`.
    pub converged: bool,
}

impl ProbeResult {
    /// Weight row for one class, for callers that attribute scores back
    /// through the encoder.
    pub fn class_weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    /// Class index with the highest logit for `x`, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.num_classes {
            let row = self.class_weights(c);
            let mut s = self.bias[c];
            for (w, v) in row.iter().zip(x.iter()) {
                s += w * v;
            }
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        best
    }
}

struct Design {
    x: Vec<f64>,
    y: Vec<usize>,
    n: usize,
    dim: usize,
}

fn to_design(features: &Tensor<f32>, labels: &[usize], what: &str) -> Result<Design> {
    if features.shape().len() != 2 {
        return Err(Error::Validation(format!(
            "{what} features must be 2-D, got shape {:?}",
            features.shape()
        )));
    }
    let n = features.shape()[0];
    let dim = features.shape()[1];
    if n == 0 || dim == 0 {
        return Err(Error::Validation(format!("{what} features must be non-empty")));
    }
    if labels.len() != n {
        return Err(Error::Validation(format!(
            "{what} has {n} feature rows but {} labels",
            labels.len()
        )));
    }
    if !features.all_finite() {
        return Err(Error::Validation(format!("{what} features contain non-finite values")));
    }
    let x = features.data().iter().map(|v| *v as f64).collect();
    Ok(Design { x, y: labels.to_vec(), n, dim })
}

/// Loss, gradients, and correct-count at `(w, b)`. `probs` is scratch space
/// for the n*c softmax matrix so the line search reuses one allocation.
#[allow(clippy::too_many_arguments)]
fn objective(
    d: &Design,
    c: usize,
    l2: f64,
    w: &[f64],
    b: &[f64],
    probs: &mut [f64],
    grad_w: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) -> (f64, usize) {
    let n = d.n;
    let dim = d.dim;
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..n {
        let xi = &d.x[i * dim..(i + 1) * dim];
        let row = &mut probs[i * c..(i + 1) * c];
        for (k, rk) in row.iter_mut().enumerate() {
            let wk = &w[k * dim..(k + 1) * dim];
            let mut s = b[k];
            for j in 0..dim {
                s += wk[j] * xi[j];
            }
            *rk = s;
        }
        let mut m = row[0];
        let mut arg = 0usize;
        for (k, &rk) in row.iter().enumerate() {
            if rk > m {
                m = rk;
                arg = k;
            }
        }
        if arg == d.y[i] {
            correct += 1;
        }
        let mut z = 0.0;
        for rk in row.iter_mut() {
            *rk = (*rk - m).exp();
            z += *rk;
        }
        loss -= (row[d.y[i]] / z).ln() * inv_n;
        for rk in row.iter_mut() {
            *rk /= z;
        }
    }
    let mut reg = 0.0;
    for &wi in w {
        reg += wi * wi;
    }
    loss += 0.5 * l2 * reg;
    if let (Some(gw), Some(gb)) = (grad_w, grad_b) {
        gw.fill(0.0);
        gb.fill(0.0);
        for i in 0..n {
            let xi = &d.x[i * dim..(i + 1) * dim];
            for k in 0..c {
                let mut p = probs[i * c + k];
                if k == d.y[i] {
                    p -= 1.0;
                }
                p *= inv_n;
                gb[k] += p;
                let gk = &mut gw[k * dim..(k + 1) * dim];
                for j in 0..dim {
                    gk[j] += p * xi[j];
                }
            }
        }
        for (gwi, wi) in gw.iter_mut().zip(w.iter()) {
            *gwi += l2 * wi;
        }
    }
    (loss, correct)
}

/// Fits a softmax classifier on `train` features and scores it on both
/// splits.
///
/// Labels are class indices and both splits must use the same indexing; the
/// training split must contain at least two distinct classes. Optimization is
/// full-batch gradient descent from zero weights with an Armijo backtracking
/// line search, so the recorded loss history decreases monotonically.
pub fn linear_probe(
    train_features: &Tensor<f32>,
    train_labels: &[usize],
    eval_features: &Tensor<f32>,
    eval_labels: &[usize],
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    linear_probe_from(train_features, train_labels, eval_features, eval_labels, cfg, None)
}

/// [`linear_probe`] with an explicit starting point `(weights, bias)`. The
/// objective is strictly convex for positive `l2`, so any starting point
/// reaches the same optimum; `None` starts from zero.
pub fn linear_probe_from(
    train_features: &Tensor<f32>,
    train_labels: &[usize],
    eval_features: &Tensor<f32>,
    eval_labels: &[usize],
    cfg: &ProbeConfig,
    init: Option<(&[f64], &[f64])>,
) -> Result<ProbeResult> {
    cfg.validate()?;
    let train = to_design(train_features, train_labels, "train split")?;
    let eval = to_design(eval_features, eval_labels, "eval split")?;
    if train.dim != eval.dim {
        return Err(Error::Validation(format!(
            "train features have dim {} but eval features have dim {}",
            train.dim, eval.dim
        )));
    }
    let c = match train.y.iter().max() {
        Some(&m) => m + 1,
        None => 0,
    };
    let distinct = {
        let mut seen = vec![false; c];
        for &y in &train.y {
            seen[y] = true;
        }
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(Error::Validation(format!(
            "probe training split must contain at least 2 classes, got {distinct}"
        )));
    }
    if let Some(&m) = eval.y.iter().max() {
        if m >= c {
            return Err(Error::Validation(format!(
                "eval label {m} is outside the {c} classes seen in training"
            )));
        }
    }

    let dim = train.dim;
    let mut w = vec![0.0f64; c * dim];
    let mut b = vec![0.0f64; c];
    if let Some((iw, ib)) = init {
        if iw.len() != c * dim || ib.len() != c {
            return Err(Error::Validation(format!(
                "probe init has {} weights and {} biases, expected {} and {c}",
                iw.len(),
                ib.len(),
                c * dim
            )));
        }
        if iw.iter().chain(ib.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("probe init has non-finite values".into()));
        }
        w.copy_from_slice(iw);
        b.copy_from_slice(ib);
    }
    let mut gw = vec![0.0f64; c * dim];
    let mut gb = vec![0.0f64; c];
    let mut probs = vec![0.0f64; train.n * c];
    let mut trial_w = vec![0.0f64; c * dim];
    let mut trial_b = vec![0.0f64; c];

    let mut loss_history = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut iterations = 0usize;
    let mut eta = 1.0f64;
    let (mut loss, _) = objective(&train, c, cfg.l2, &w, &b, &mut probs, Some(&mut gw), Some(&mut gb));
    for _ in 0..cfg.max_iters {
        let mut gnorm2 = 0.0;
        for g in gw.iter().chain(gb.iter()) {
            gnorm2 += g * g;
        }
        if gnorm2.sqrt() <= cfg.tol {
            converged = true;
            break;
        }
        // Armijo condition with c1 = 0.5; halve the step until the decrease
        // is sufficient. 60 halvings span the full exponent range of f64, so
        // failing all of them means no representable step helps.
        let mut accepted = None;
        for _ in 0..60 {
            for (t, (wi, gi)) in trial_w.iter_mut().zip(w.iter().zip(gw.iter())) {
                *t = wi - eta * gi;
            }
            for (t, (bi, gi)) in trial_b.iter_mut().zip(b.iter().zip(gb.iter())) {
                *t = bi - eta * gi;
            }
            let (trial_loss, _) =
                objective(&train, c, cfg.l2, &trial_w, &trial_b, &mut probs, None, None);
            if trial_loss <= loss - 0.5 * eta * gnorm2 {
                accepted = Some(trial_loss);
                break;
            }
            eta *= 0.5;
        }
        let Some(new_loss) = accepted else { break };
        std::mem::swap(&mut w, &mut trial_w);
        std::mem::swap(&mut b, &mut trial_b);
        loss = new_loss;
        loss_history.push(loss);
        iterations += 1;
        eta = (eta * 1.5).min(1e3);
        let _ = objective(&train, c, cfg.l2, &w, &b, &mut probs, Some(&mut gw), Some(&mut gb));
    }

    let (_, train_correct) = objective(&train, c, cfg.l2, &w, &b, &mut probs, None, None);
    let mut eval_probs = vec![0.0f64; eval.n * c];
    let (_, eval_correct) = objective(&eval, c, cfg.l2, &w, &b, &mut eval_probs, None, None);
    Ok(ProbeResult {
        weights: w,
        bias: b,
        num_classes: c,
        dim,
        train_accuracy: train_correct as f64 / train.n as f64,
        eval_accuracy: eval_correct as f64 / eval.n as f64,
        loss_history,
        iterations,
        converged,
    })
}
