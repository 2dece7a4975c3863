//! Stop-gradient cosine objective.
//!
//! Each view's predictor output chases the other view's projection, but
//! the projection side is detached: `grad_z1` and `grad_z2` come back as
//! exact zeros and only the predictor outputs receive gradient. Collapse
//! is avoided by that asymmetry, not by negatives, so a batch of one is
//! legal.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// Rows with norm at or below this cannot be cosine-normalized.
pub const MIN_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SimsiamLoss<T> {
    pub loss: f64,
    pub grad_p1: Tensor<T>,
    pub grad_p2: Tensor<T>,
    /// Exact zeros: the projections are stop-gradient targets.
    pub grad_z1: Tensor<T>,
    /// Exact zeros: the projections are stop-gradient targets.
    pub grad_z2: Tensor<T>,
}

fn row_f64<T: Scalar>(t: &Tensor<T>, i: usize) -> Vec<f64> {
    t.row(i).iter().map(|v| v.to_f64()).collect()
}

/// Negative-cosine loss and its gradient with respect to `a`, with `b`
/// held constant.
fn neg_cos_grad(a: &[f64], b: &[f64], name: &str, row: usize) -> Result<(f64, Vec<f64>)> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na <= MIN_ROW_NORM || nb <= MIN_ROW_NORM {
        return Err(Error::Validation(format!(
            "{name} row {row} has zero norm; cosine is undefined"
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = dot / (na * nb);
    // d(-cos)/da = -(b_hat - cos * a_hat) / |a|
    let grad = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| -(bi / nb - cos * ai / na) / na)
        .collect();
    Ok((-cos, grad))
}

/// `p1`, `p2` are predictor outputs; `z1`, `z2` are the detached
/// projections they chase. Loss is the mean of the two negative cosines,
/// halved per the symmetric form.
pub fn simsiam_loss<T: Scalar>(
    p1: &Tensor<T>,
    p2: &Tensor<T>,
    z1: &Tensor<T>,
    z2: &Tensor<T>,
) -> Result<SimsiamLoss<T>> {
    let shape = p1.shape();
    if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 {
        return Err(Error::Validation(format!(
            "expected nonempty 2-D predictor output, got {shape:?}"
        )));
    }
    for (name, t) in [("p2", p2), ("z1", z1), ("z2", z2)] {
        if t.shape() != shape {
            return Err(Error::Validation(format!(
                "{name} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
    }
    for (name, t) in [("p1", p1), ("p2", p2), ("z1", z1), ("z2", z2)] {
        if !t.all_finite() {
            return Err(Error::Validation(format!("{name} has non-finite values")));
        }
    }
    let (b, d) = (shape[0], shape[1]);
    let weight = 1.0 / (2.0 * b as f64);

    let mut loss = 0.0f64;
    let mut grad_p1 = Tensor::zeros(shape);
    let mut grad_p2 = Tensor::zeros(shape);
    for i in 0..b {
        let (l1, g1) = neg_cos_grad(&row_f64(p1, i), &row_f64(z2, i), "p1", i)?;
        let (l2, g2) = neg_cos_grad(&row_f64(p2, i), &row_f64(z1, i), "p2", i)?;
        loss += (l1 + l2) * weight;
        for j in 0..d {
            grad_p1.row_mut(i)[j] = T::from_f64(g1[j] * weight);
            grad_p2.row_mut(i)[j] = T::from_f64(g2[j] * weight);
        }
    }
    Ok(SimsiamLoss {
        loss,
        grad_p1,
        grad_p2,
        grad_z1: Tensor::zeros(shape),
        grad_z2: Tensor::zeros(shape),
    })
}
