//! Normalized-temperature cross entropy over two views.
//!
//! The 2B projection rows are stacked; each row is an anchor whose positive
//! is its counterpart in the other view and whose negatives are the other
//! 2B - 2 rows. The loss is the mean over anchors of
//! `logsumexp(similarities / tau) - positive / tau` with the anchor's own
//! row excluded everywhere.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};
use crate::objectives::UNIT_NORM_TOL;

#[derive(Debug, Clone)]
pub struct PairLoss<T> {
    pub loss: f64,
    pub grad_z1: Tensor<T>,
    pub grad_z2: Tensor<T>,
}

pub(crate) fn check_views<T: Scalar>(z1: &Tensor<T>, z2: &Tensor<T>) -> Result<(usize, usize)> {
    let (s1, s2) = (z1.shape(), z2.shape());
    if s1.len() != 2 || s1 != s2 {
        return Err(Error::Validation(format!(
            "views must be equal-shape 2-D tensors, got {s1:?} and {s2:?}"
        )));
    }
    let (b, d) = (s1[0], s1[1]);
    if d == 0 {
        return Err(Error::Validation("views have zero width".into()));
    }
    for (name, z) in [("view 1", z1), ("view 2", z2)] {
        for i in 0..b {
            let mut sq = 0.0f64;
            for &v in z.row(i) {
                let vf = v.to_f64();
                if !vf.is_finite() {
                    return Err(Error::Validation(format!(
                        "{name} row {i} has a non-finite value"
                    )));
                }
                sq += vf * vf;
            }
            if (sq.sqrt() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Validation(format!(
                    "{name} row {i} has norm {}, expected 1",
                    sq.sqrt()
                )));
            }
        }
    }
    Ok((b, d))
}

/// Shared core: the same symmetric loss, but the two stacked halves may be
/// any pair of row sets (the neighbor-swap objective substitutes mined
/// neighbors for the first half). Returns (loss, grad half 1, grad half 2).
pub(crate) fn ntxent_pair<T: Scalar>(
    z1: &Tensor<T>,
    z2: &Tensor<T>,
    tau: f64,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (b, d) = check_views(z1, z2)?;
    if b < 2 {
        return Err(Error::Validation(format!(
            "batch of {b} has no negatives; need at least 2 pairs"
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let n = 2 * b;
    // stacked rows in f64
    let mut u = vec![0.0f64; n * d];
    for i in 0..b {
        for j in 0..d {
            u[i * d + j] = z1.row(i)[j].to_f64();
            u[(b + i) * d + j] = z2.row(i)[j].to_f64();
        }
    }
    let dot = |p: usize, q: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..d {
            acc += u[p * d + j] * u[q * d + j];
        }
        acc
    };

    // g[i*n + j] = dLoss/dLogit(i, j); diagonal stays zero
    let mut g = vec![0.0f64; n * n];
    let mut loss = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let pos = (i + b) % n;
        let mut logits = vec![0.0f64; n];
        let mut maxl = f64::NEG_INFINITY;
        for (j, slot) in logits.iter_mut().enumerate() {
            if j == i {
                continue;
            }
            let l = dot(i, j) / tau;
            *slot = l;
            if l > maxl {
                maxl = l;
            }
        }
        let mut denom = 0.0f64;
        for (j, &l) in logits.iter().enumerate() {
            if j == i {
                continue;
            }
            denom += (l - maxl).exp();
        }
        let lse = maxl + denom.ln();
        loss += (lse - logits[pos]) * inv_n;
        for j in 0..n {
            if j == i {
                continue;
            }
            let p = (logits[j] - lse).exp();
            g[i * n + j] = (p - if j == pos { 1.0 } else { 0.0 }) * inv_n;
        }
    }

    // dLoss/dU = (G + G^T) U / tau
    let inv_tau = 1.0 / tau;
    let mut grad_u = vec![0.0f64; n * d];
    for i in 0..n {
        for j in 0..n {
            let w = (g[i * n + j] + g[j * n + i]) * inv_tau;
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                grad_u[i * d + k] += w * u[j * d + k];
            }
        }
    }

    let to_tensor = |rows: &[f64]| -> Result<Tensor<T>> {
        Tensor::from_vec(&[b, d], rows.iter().map(|&v| T::from_f64(v)).collect())
    };
    let grad_z1 = to_tensor(&grad_u[..b * d])?;
    let grad_z2 = to_tensor(&grad_u[b * d..])?;
    Ok((loss, grad_z1, grad_z2))
}

/// Symmetric contrastive loss over two views of the same batch.
pub fn ntxent_loss<T: Scalar>(z1: &Tensor<T>, z2: &Tensor<T>, tau: f64) -> Result<PairLoss<T>> {
    let (loss, grad_z1, grad_z2) = ntxent_pair(z1, z2, tau)?;
    Ok(PairLoss {
        loss,
        grad_z1,
        grad_z2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(b: usize, d: usize, hots: &[usize]) -> Tensor<f64> {
        let mut data = vec![0.0; b * d];
        for (i, &h) in hots.iter().enumerate() {
            data[i * d + h] = 1.0;
        }
        Tensor::from_vec(&[b, d], data).unwrap()
    }

    #[test]
    fn orthogonal_identical_views_match_closed_form() {
        // both views are [e1; e2] at tau = 1: each anchor sees its positive
        // at similarity 1 and two negatives at 0, so the loss per anchor is
        // ln(e + 2) - 1
        let z = basis(2, 3, &[0, 1]);
        let out = ntxent_loss(&z, &z, 1.0).unwrap();
        let expected = (1.0f64 + 2.0 / std::f64::consts::E).ln();
        assert!(
            (out.loss - expected).abs() < 1e-12,
            "loss {} expected {expected}",
            out.loss
        );
    }

    #[test]
    fn loss_is_symmetric_in_views() {
        let z1 = basis(3, 4, &[0, 1, 2]);
        let z2 = basis(3, 4, &[1, 2, 3]);
        let a = ntxent_loss(&z1, &z2, 0.5).unwrap();
        let b = ntxent_loss(&z2, &z1, 0.5).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        assert_eq!(a.grad_z1.data(), b.grad_z2.data());
    }

    #[test]
    fn gradient_descent_direction_reduces_loss() {
        let z1 = basis(2, 3, &[0, 1]);
        let z2 = basis(2, 3, &[1, 2]);
        let out = ntxent_loss(&z1, &z2, 0.5).unwrap();
        let step = 1e-4;
        let mut z1b = z1.clone();
        z1b.add_scaled(&out.grad_z1, -step);
        // renormalize rows so the precondition still holds
        for i in 0..2 {
            let n = crate::nn::tensor::norm_f64(z1b.row(i));
            for v in z1b.row_mut(i) {
                *v /= n;
            }
        }
        let after = ntxent_loss(&z1b, &z2, 0.5).unwrap();
        assert!(after.loss < out.loss);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let z = basis(1, 2, &[0]);
        assert!(ntxent_loss(&z, &z, 0.1).is_err());
    }

    #[test]
    fn non_unit_rows_are_rejected() {
        let mut z = basis(2, 2, &[0, 1]);
        z.data_mut()[0] = 0.5;
        let err = ntxent_loss(&z, &z, 0.1).unwrap_err();
        assert!(err.to_string().contains("norm"), "{err}");
    }

    #[test]
    fn zero_temperature_is_rejected() {
        let z = basis(2, 2, &[0, 1]);
        assert!(ntxent_loss(&z, &z, 0.0).is_err());
    }
}
