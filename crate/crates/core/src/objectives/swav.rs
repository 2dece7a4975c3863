//! Prototype-clustering objective with balanced assignments.
//!
//! Each view's similarities to a set of prototype vectors are converted
//! into soft cluster assignments by a few rounds of Sinkhorn balancing,
//! which forces every prototype to receive an equal share of the batch.
//! The loss is the swapped cross entropy: view 1's softmax predictions
//! must match view 2's balanced codes and vice versa. Codes are computed
//! under stop-gradient, so only the softmax side backpropagates.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct SinkhornResult<T> {
    /// Doubly-balanced matrix: every column sums to 1/K, rows are close
    /// to 1/B. Entries are strictly positive.
    pub balanced: Tensor<T>,
    /// Row-renormalized `balanced`: each row sums to 1 and is usable as a
    /// soft assignment target.
    pub targets: Tensor<T>,
}

/// Sinkhorn-Knopp balancing of `exp(scores / eps)`.
///
/// Rows are shifted by their maximum before exponentiation, so arbitrary
/// score magnitudes are safe. Each round rescales rows to sum 1/B, then
/// columns to sum 1/K; after the final column step columns are exact and
/// rows carry the leftover imbalance, which the row-renormalized targets
/// absorb.
pub fn sinkhorn<T: Scalar>(scores: &Tensor<T>, eps: f64, iters: usize) -> Result<SinkhornResult<T>> {
    let sh = scores.shape();
    if sh.len() != 2 || sh[0] == 0 || sh[1] == 0 {
        return Err(Error::Validation(format!(
            "scores must be a nonempty 2-D tensor, got {sh:?}"
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Config(format!("sinkhorn eps must be positive, got {eps}")));
    }
    if iters == 0 {
        return Err(Error::Config("sinkhorn needs at least one round".into()));
    }
    if !scores.all_finite() {
        return Err(Error::Validation("scores have non-finite values".into()));
    }
    let (b, k) = (sh[0], sh[1]);
    let mut m = vec![0.0f64; b * k];
    for i in 0..b {
        let row = scores.row(i);
        let mut maxv = f64::NEG_INFINITY;
        for &v in row {
            maxv = maxv.max(v.to_f64());
        }
        for j in 0..k {
            m[i * k + j] = ((row[j].to_f64() - maxv) / eps).exp();
        }
    }

    let inv_b = 1.0 / b as f64;
    let inv_k = 1.0 / k as f64;
    for _ in 0..iters {
        for i in 0..b {
            let sum: f64 = m[i * k..(i + 1) * k].iter().sum();
            let scale = inv_b / sum;
            for j in 0..k {
                m[i * k + j] *= scale;
            }
        }
        for j in 0..k {
            let mut sum = 0.0f64;
            for i in 0..b {
                sum += m[i * k + j];
            }
            let scale = inv_k / sum;
            for i in 0..b {
                m[i * k + j] *= scale;
            }
        }
    }

    let balanced = Tensor::from_vec(&[b, k], m.iter().map(|&v| T::from_f64(v)).collect())?;
    let mut targets = vec![0.0f64; b * k];
    for i in 0..b {
        let sum: f64 = m[i * k..(i + 1) * k].iter().sum();
        for j in 0..k {
            targets[i * k + j] = m[i * k + j] / sum;
        }
    }
    let targets = Tensor::from_vec(&[b, k], targets.iter().map(|&v| T::from_f64(v)).collect())?;
    Ok(SinkhornResult { balanced, targets })
}

#[derive(Debug, Clone)]
pub struct SwavLoss<T> {
    pub loss: f64,
    pub grad_z1: Tensor<T>,
    pub grad_z2: Tensor<T>,
    pub grad_prototypes: Tensor<T>,
    /// Balanced assignment targets of each view (stop-gradient).
    pub codes1: Tensor<T>,
    pub codes2: Tensor<T>,
}

fn scores_f64<T: Scalar>(z: &Tensor<T>, prototypes: &Tensor<T>) -> Vec<f64> {
    let (b, d) = (z.shape()[0], z.shape()[1]);
    let k = prototypes.shape()[0];
    let mut out = vec![0.0f64; b * k];
    for i in 0..b {
        let zrow = z.row(i);
        for j in 0..k {
            let prow = prototypes.row(j);
            let mut acc = 0.0f64;
            for t in 0..d {
                acc += zrow[t].to_f64() * prow[t].to_f64();
            }
            out[i * k + j] = acc;
        }
    }
    out
}

/// Swapped cross entropy against fixed codes. Exposed separately so the
/// stop-gradient on codes is explicit: gradient checks perturb inputs
/// while holding `codes1`/`codes2` constant, exactly matching what the
/// returned gradients differentiate.
pub fn swav_loss_with_codes<T: Scalar>(
    z1: &Tensor<T>,
    z2: &Tensor<T>,
    prototypes: &Tensor<T>,
    codes1: &Tensor<T>,
    codes2: &Tensor<T>,
    tau: f64,
) -> Result<SwavLoss<T>> {
    let sh = z1.shape();
    if sh.len() != 2 || z2.shape() != sh {
        return Err(Error::Validation(format!(
            "views must be equal-shape 2-D tensors, got {:?} and {:?}",
            sh,
            z2.shape()
        )));
    }
    let (b, d) = (sh[0], sh[1]);
    let psh = prototypes.shape();
    if psh.len() != 2 || psh[1] != d {
        return Err(Error::Validation(format!(
            "prototypes must be [K, {d}], got {psh:?}"
        )));
    }
    let k = psh[0];
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 prototypes, got {k}")));
    }
    for (name, codes) in [("codes1", codes1), ("codes2", codes2)] {
        if codes.shape() != [b, k] {
            return Err(Error::Validation(format!(
                "{name} must be [{b}, {k}], got {:?}",
                codes.shape()
            )));
        }
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }

    let s1 = scores_f64(z1, prototypes);
    let s2 = scores_f64(z2, prototypes);
    let weight = 1.0 / (2.0 * b as f64);
    let inv_tau = 1.0 / tau;

    // softmax rows of s / tau, plus cross entropy against the swapped codes
    let mut loss = 0.0f64;
    // dLoss/dscores for each view
    let mut ds1 = vec![0.0f64; b * k];
    let mut ds2 = vec![0.0f64; b * k];
    for (scores, codes, ds) in [(&s1, codes2, &mut ds1), (&s2, codes1, &mut ds2)] {
        for i in 0..b {
            let row = &scores[i * k..(i + 1) * k];
            let mut maxv = f64::NEG_INFINITY;
            for &v in row {
                maxv = maxv.max(v * inv_tau);
            }
            let mut denom = 0.0f64;
            for &v in row {
                denom += (v * inv_tau - maxv).exp();
            }
            let lse = maxv + denom.ln();
            let mut qsum = 0.0f64;
            for (q, &v) in codes.row(i).iter().zip(row) {
                let q = q.to_f64();
                let logp = v * inv_tau - lse;
                loss -= q * logp * weight;
                qsum += q;
            }
            // dCE/dlogit = p - q (valid because each code row sums to 1)
            if (qsum - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "code row {i} sums to {qsum}, expected 1"
                )));
            }
            for j in 0..k {
                let p = (row[j] * inv_tau - lse).exp();
                let q = codes.row(i)[j].to_f64();
                ds[i * k + j] = (p - q) * weight * inv_tau;
            }
        }
    }

    // dz = ds . C, dC = ds1^T z1 + ds2^T z2
    let mut gz1 = vec![0.0f64; b * d];
    let mut gz2 = vec![0.0f64; b * d];
    let mut gc = vec![0.0f64; k * d];
    for i in 0..b {
        for j in 0..k {
            let (w1, w2) = (ds1[i * k + j], ds2[i * k + j]);
            let prow = prototypes.row(j);
            for t in 0..d {
                let p = prow[t].to_f64();
                gz1[i * d + t] += w1 * p;
                gz2[i * d + t] += w2 * p;
                gc[j * d + t] += w1 * z1.row(i)[t].to_f64() + w2 * z2.row(i)[t].to_f64();
            }
        }
    }

    let tensor = |shape: &[usize], v: Vec<f64>| -> Result<Tensor<T>> {
        Tensor::from_vec(shape, v.into_iter().map(T::from_f64).collect())
    };
    Ok(SwavLoss {
        loss,
        grad_z1: tensor(&[b, d], gz1)?,
        grad_z2: tensor(&[b, d], gz2)?,
        grad_prototypes: tensor(&[k, d], gc)?,
        codes1: codes1.clone(),
        codes2: codes2.clone(),
    })
}

/// Full objective: compute balanced codes for both views under
/// stop-gradient, then the swapped cross entropy.
pub fn swav_loss<T: Scalar>(
    z1: &Tensor<T>,
    z2: &Tensor<T>,
    prototypes: &Tensor<T>,
    tau: f64,
    eps: f64,
    iters: usize,
) -> Result<SwavLoss<T>> {
    let sh = z1.shape();
    if sh.len() != 2 || z2.shape() != sh {
        return Err(Error::Validation(format!(
            "views must be equal-shape 2-D tensors, got {:?} and {:?}",
            sh,
            z2.shape()
        )));
    }
    let s1 = scores_f64(z1, prototypes);
    let s2 = scores_f64(z2, prototypes);
    let k = prototypes.shape()[0];
    let b = sh[0];
    let t1 = Tensor::from_vec(&[b, k], s1.into_iter().map(T::from_f64).collect())?;
    let t2 = Tensor::from_vec(&[b, k], s2.into_iter().map(T::from_f64).collect())?;
    let codes1 = sinkhorn(&t1, eps, iters)?.targets;
    let codes2 = sinkhorn(&t2, eps, iters)?.targets;
    swav_loss_with_codes(z1, z2, prototypes, &codes1, &codes2, tau)
}
