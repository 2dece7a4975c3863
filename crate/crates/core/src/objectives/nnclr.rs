//! Neighbor-swap contrastive objective.
//!
//! Instead of attracting two views of the same image, each anchor attracts
//! the nearest neighbor of its first view drawn from a FIFO queue of past
//! projections. The neighbor lookup is a hard, non-differentiable
//! substitution: the swapped-in rows are constants, so `grad_z1` is exactly
//! zero and only the second view trains through the loss. The first view's
//! rows are pushed into the queue afterwards.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};
use crate::objectives::ntxent::ntxent_pair;
use crate::objectives::UNIT_NORM_TOL;

/// FIFO buffer of unit-norm projection rows.
#[derive(Debug, Clone)]
pub struct SupportQueue<T> {
    capacity: usize,
    dim: usize,
    rows: VecDeque<Vec<T>>,
}

impl<T: Scalar> SupportQueue<T> {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "support queue needs positive capacity and dim, got {capacity} and {dim}"
            )));
        }
        Ok(SupportQueue {
            capacity,
            dim,
            rows: VecDeque::with_capacity(capacity),
        })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[must_use]
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends every row of a [B, dim] tensor, dropping the oldest rows
    /// once capacity is exceeded. Rows drifting off unit norm are
    /// renormalized on the way in; zero rows are rejected.
    pub fn push_batch(&mut self, z: &Tensor<T>) -> Result<()> {
        let sh = z.shape();
        if sh.len() != 2 || sh[1] != self.dim {
            return Err(Error::Validation(format!(
                "queue push expects [B, {}], got {sh:?}",
                self.dim
            )));
        }
        for i in 0..sh[0] {
            let mut row: Vec<T> = z.row(i).to_vec();
            let norm = row.iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt();
            if norm <= 1e-12 {
                return Err(Error::Validation(format!(
                    "queue push: row {i} has zero norm"
                )));
            }
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                for v in &mut row {
                    *v = T::from_f64(v.to_f64() / norm);
                }
            }
            if self.rows.len() == self.capacity {
                self.rows.pop_front();
            }
            self.rows.push_back(row);
        }
        Ok(())
    }

    /// Index and cosine similarity of the entry closest to `query`.
    /// Candidates are scanned oldest-first and ties keep the lowest index.
    pub fn nearest(&self, query: &[T]) -> Result<(usize, f64)> {
        if self.rows.is_empty() {
            return Err(Error::EmptyQueue);
        }
        if query.len() != self.dim {
            return Err(Error::Validation(format!(
                "query has length {}, queue holds dim {}",
                query.len(),
                self.dim
            )));
        }
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, row) in self.rows.iter().enumerate() {
            let mut s = 0.0f64;
            for j in 0..self.dim {
                s += row[j].to_f64() * query[j].to_f64();
            }
            if s > best.1 {
                best = (i, s);
            }
        }
        Ok(best)
    }

    #[must_use]
    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i]
    }
}

#[derive(Debug, Clone)]
pub struct NnclrLoss<T> {
    pub loss: f64,
    /// Exact zeros: the first view only selects neighbors.
    pub grad_z1: Tensor<T>,
    pub grad_z2: Tensor<T>,
    /// Which queue entry replaced each first-view row.
    pub neighbor_indices: Vec<usize>,
}

/// Swaps each `z1` row for its nearest queue entry, scores the swapped
/// batch against `z2` with the symmetric InfoNCE loss, then enqueues the
/// original `z1` rows.
pub fn nnclr_loss<T: Scalar>(
    z1: &Tensor<T>,
    z2: &Tensor<T>,
    queue: &mut SupportQueue<T>,
    tau: f64,
) -> Result<NnclrLoss<T>> {
    if queue.is_empty() {
        return Err(Error::EmptyQueue);
    }
    let sh = z1.shape();
    if sh.len() != 2 || z2.shape() != sh {
        return Err(Error::Validation(format!(
            "views must be equal-shape 2-D tensors, got {:?} and {:?}",
            sh,
            z2.shape()
        )));
    }
    let (b, d) = (sh[0], sh[1]);

    let mut neighbor_indices = Vec::with_capacity(b);
    let mut swapped = Tensor::zeros(&[b, d]);
    for i in 0..b {
        let (idx, _) = queue.nearest(z1.row(i))?;
        neighbor_indices.push(idx);
        let row = queue.row(idx).to_vec();
        swapped.row_mut(i).copy_from_slice(&row);
    }

    let (loss, _grad_neighbors, grad_z2) = ntxent_pair(&swapped, z2, tau)?;
    queue.push_batch(z1)?;
    Ok(NnclrLoss {
        loss,
        grad_z1: Tensor::zeros(sh),
        grad_z2,
        neighbor_indices,
    })
}
