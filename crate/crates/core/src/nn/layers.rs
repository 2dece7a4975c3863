//! Layer primitives: 3x3 convolution, ReLU, 2x2 max pooling, global average
//! pooling, dense, per-row standardization, and L2 row normalization.
//!
//! Each op exposes `forward` (returning the output plus a cache) and
//! `backward` (consuming the cache, accumulating parameter gradients with
//! `+=`, and returning the input gradient). All loops run in a fixed order
//! so results do not depend on thread count.

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::nn::tensor::{dot_f64, Scalar, Tensor};

/// Variance floor for row standardization; keeps 1/sigma finite on
/// constant rows.
pub const ROWNORM_EPS: f64 = 1e-6;

/// Norm floor for L2 row normalization; a zero row passes through as zeros
/// instead of erroring, so an all-zero parameter set still has a defined
/// forward pass.
pub const L2NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    /// 3x3 convolution, zero padding 1, given stride. Parameters
    /// `{name}.w` with shape `[out_ch, in_ch, 3, 3]` and `{name}.b` with
    /// shape `[out_ch]`.
    Conv {
        name: String,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
    },
    Relu,
    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2,
    /// [B, C, H, W] -> [B, C] spatial mean.
    GlobalAvgPool,
    /// Affine map on 2-D inputs. Parameters `{name}.w` with shape
    /// `[out_dim, in_dim]` and `{name}.b` with shape `[out_dim]`.
    Dense {
        name: String,
        in_dim: usize,
        out_dim: usize,
    },
    /// Per-row standardization: subtract the row mean, divide by the row
    /// standard deviation (variance floored at [`ROWNORM_EPS`]).
    RowNorm,
    /// Per-row L2 normalization.
    L2Norm,
}

#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Conv { input: Tensor<T> },
    Relu { input: Tensor<T> },
    MaxPool2 { in_shape: Vec<usize>, argmax: Vec<usize> },
    GlobalAvgPool { in_shape: Vec<usize> },
    Dense { input: Tensor<T> },
    RowNorm { y: Tensor<T>, inv_sigma: Vec<T> },
    L2Norm { y: Tensor<T>, inv_norm: Vec<T> },
}

impl LayerOp {
    /// Short label used in shape-mismatch errors.
    #[must_use]
    pub fn label(&self) -> String {
        match self {
            LayerOp::Conv { name, .. } => name.clone(),
            LayerOp::Relu => "relu".into(),
            LayerOp::MaxPool2 => "maxpool".into(),
            LayerOp::GlobalAvgPool => "gap".into(),
            LayerOp::Dense { name, .. } => name.clone(),
            LayerOp::RowNorm => "rownorm".into(),
            LayerOp::L2Norm => "l2norm".into(),
        }
    }

    fn shape_err(&self, msg: impl Into<String>) -> Error {
        Error::Shape {
            layer: self.label(),
            msg: msg.into(),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        match self {
            LayerOp::Conv {
                name,
                in_ch,
                out_ch,
                stride,
            } => {
                let s = *stride;
                let sh = x.shape();
                if sh.len() != 4 || sh[1] != *in_ch {
                    return Err(self.shape_err(format!(
                        "expected input [B, {in_ch}, H, W], got {sh:?}"
                    )));
                }
                let (bsz, h, w) = (sh[0], sh[2], sh[3]);
                let (oh, ow) = ((h - 1) / s + 1, (w - 1) / s + 1);
                let wt = ps.get(&format!("{name}.w"))?;
                let bias = ps.get(&format!("{name}.b"))?;
                let mut y = Tensor::zeros(&[bsz, *out_ch, oh, ow]);
                let xd = x.data();
                let wd = wt.data();
                let bd = bias.data();
                let yd = y.data_mut();
                for b in 0..bsz {
                    for oc in 0..*out_ch {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = bd[oc];
                                for ic in 0..*in_ch {
                                    for ky in 0..3 {
                                        let iy = (oy * s + ky) as isize - 1;
                                        if iy < 0 || iy as usize >= h {
                                            continue;
                                        }
                                        for kx in 0..3 {
                                            let ix = (ox * s + kx) as isize - 1;
                                            if ix < 0 || ix as usize >= w {
                                                continue;
                                            }
                                            let xi = ((b * in_ch + ic) * h + iy as usize) * w
                                                + ix as usize;
                                            let wi = ((oc * in_ch + ic) * 3 + ky) * 3 + kx;
                                            acc += wd[wi] * xd[xi];
                                        }
                                    }
                                }
                                yd[((b * out_ch + oc) * oh + oy) * ow + ox] = acc;
                            }
                        }
                    }
                }
                Ok((y, LayerCache::Conv { input: x.clone() }))
            }
            LayerOp::Relu => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    if *v < T::ZERO {
                        *v = T::ZERO;
                    }
                }
                Ok((y, LayerCache::Relu { input: x.clone() }))
            }
            LayerOp::MaxPool2 => {
                let sh = x.shape();
                if sh.len() != 4 {
                    return Err(self.shape_err(format!("expected 4-D input, got {sh:?}")));
                }
                let (bsz, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
                let (oh, ow) = (h / 2, w / 2);
                if oh == 0 || ow == 0 {
                    return Err(self.shape_err(format!("spatial size {h}x{w} too small to pool")));
                }
                let xd = x.data();
                let mut y = Tensor::zeros(&[bsz, c, oh, ow]);
                let mut argmax = vec![0usize; bsz * c * oh * ow];
                let yd = y.data_mut();
                for b in 0..bsz {
                    for ch in 0..c {
                        let base = (b * c + ch) * h * w;
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best_i = base + (2 * oy) * w + 2 * ox;
                                let mut best = xd[best_i];
                                for ky in 0..2 {
                                    for kx in 0..2 {
                                        let i = base + (2 * oy + ky) * w + 2 * ox + kx;
                                        // strict >: first maximum wins ties
                                        if xd[i] > best {
                                            best = xd[i];
                                            best_i = i;
                                        }
                                    }
                                }
                                let o = ((b * c + ch) * oh + oy) * ow + ox;
                                yd[o] = best;
                                argmax[o] = best_i;
                            }
                        }
                    }
                }
                Ok((
                    y,
                    LayerCache::MaxPool2 {
                        in_shape: sh.to_vec(),
                        argmax,
                    },
                ))
            }
            LayerOp::GlobalAvgPool => {
                let sh = x.shape();
                if sh.len() != 4 {
                    return Err(self.shape_err(format!("expected 4-D input, got {sh:?}")));
                }
                let (bsz, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
                let area = T::from_f64((h * w) as f64);
                let xd = x.data();
                let mut y = Tensor::zeros(&[bsz, c]);
                let yd = y.data_mut();
                for b in 0..bsz {
                    for ch in 0..c {
                        let base = (b * c + ch) * h * w;
                        let mut acc = T::ZERO;
                        for i in 0..h * w {
                            acc += xd[base + i];
                        }
                        yd[b * c + ch] = acc / area;
                    }
                }
                Ok((
                    y,
                    LayerCache::GlobalAvgPool {
                        in_shape: sh.to_vec(),
                    },
                ))
            }
            LayerOp::Dense {
                name,
                in_dim,
                out_dim,
            } => {
                let sh = x.shape();
                if sh.len() != 2 || sh[1] != *in_dim {
                    return Err(self.shape_err(format!(
                        "expected input [B, {in_dim}], got {sh:?}"
                    )));
                }
                let bsz = sh[0];
                let wt = ps.get(&format!("{name}.w"))?;
                let bias = ps.get(&format!("{name}.b"))?;
                let xd = x.data();
                let wd = wt.data();
                let bd = bias.data();
                let mut y = Tensor::zeros(&[bsz, *out_dim]);
                let yd = y.data_mut();
                for b in 0..bsz {
                    let xrow = &xd[b * in_dim..(b + 1) * in_dim];
                    for o in 0..*out_dim {
                        let wrow = &wd[o * in_dim..(o + 1) * in_dim];
                        let mut acc = bd[o];
                        for i in 0..*in_dim {
                            acc += wrow[i] * xrow[i];
                        }
                        yd[b * out_dim + o] = acc;
                    }
                }
                Ok((y, LayerCache::Dense { input: x.clone() }))
            }
            LayerOp::RowNorm => {
                let sh = x.shape();
                if sh.len() != 2 || sh[1] == 0 {
                    return Err(self.shape_err(format!("expected nonempty 2-D input, got {sh:?}")));
                }
                let (bsz, dim) = (sh[0], sh[1]);
                let n = dim as f64;
                let mut y = Tensor::zeros(&[bsz, dim]);
                let mut inv_sigma = Vec::with_capacity(bsz);
                for b in 0..bsz {
                    let xrow = x.row(b);
                    let mu = xrow.iter().map(|v| v.to_f64()).sum::<f64>() / n;
                    let var = xrow
                        .iter()
                        .map(|v| {
                            let d = v.to_f64() - mu;
                            d * d
                        })
                        .sum::<f64>()
                        / n;
                    let isig = 1.0 / (var + ROWNORM_EPS).sqrt();
                    inv_sigma.push(T::from_f64(isig));
                    let yrow = y.row_mut(b);
                    for i in 0..dim {
                        yrow[i] = T::from_f64((xrow[i].to_f64() - mu) * isig);
                    }
                }
                Ok((y.clone(), LayerCache::RowNorm { y, inv_sigma }))
            }
            LayerOp::L2Norm => {
                let sh = x.shape();
                if sh.len() != 2 || sh[1] == 0 {
                    return Err(self.shape_err(format!("expected nonempty 2-D input, got {sh:?}")));
                }
                let (bsz, dim) = (sh[0], sh[1]);
                let mut y = Tensor::zeros(&[bsz, dim]);
                let mut inv_norm = Vec::with_capacity(bsz);
                for b in 0..bsz {
                    let xrow = x.row(b);
                    let norm = dot_f64(xrow, xrow).sqrt().max(L2NORM_EPS);
                    inv_norm.push(T::from_f64(1.0 / norm));
                    let yrow = y.row_mut(b);
                    for i in 0..dim {
                        yrow[i] = T::from_f64(xrow[i].to_f64() / norm);
                    }
                }
                Ok((y.clone(), LayerCache::L2Norm { y, inv_norm }))
            }
        }
    }

    /// Accumulates parameter gradients into `ps` and returns the gradient
    /// with respect to the op input.
    pub fn backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        cache: &LayerCache<T>,
        gy: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        match (self, cache) {
            (
                LayerOp::Conv {
                    name,
                    in_ch,
                    out_ch,
                    stride,
                },
                LayerCache::Conv { input },
            ) => {
                let s = *stride;
                let sh = input.shape();
                let (bsz, h, w) = (sh[0], sh[2], sh[3]);
                let osh = gy.shape();
                let (oh, ow) = (osh[2], osh[3]);
                let wt = ps.get(&format!("{name}.w"))?.clone();
                let mut gx = Tensor::zeros(sh);
                let mut gw = Tensor::zeros(wt.shape());
                let mut gb = vec![T::ZERO; *out_ch];
                {
                    let xd = input.data();
                    let wd = wt.data();
                    let gyd = gy.data();
                    let gxd = gx.data_mut();
                    let gwd = gw.data_mut();
                    for b in 0..bsz {
                        for oc in 0..*out_ch {
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let g = gyd[((b * out_ch + oc) * oh + oy) * ow + ox];
                                    gb[oc] += g;
                                    for ic in 0..*in_ch {
                                        for ky in 0..3 {
                                            let iy = (oy * s + ky) as isize - 1;
                                            if iy < 0 || iy as usize >= h {
                                                continue;
                                            }
                                            for kx in 0..3 {
                                                let ix = (ox * s + kx) as isize - 1;
                                                if ix < 0 || ix as usize >= w {
                                                    continue;
                                                }
                                                let xi = ((b * in_ch + ic) * h + iy as usize) * w
                                                    + ix as usize;
                                                let wi =
                                                    ((oc * in_ch + ic) * 3 + ky) * 3 + kx;
                                                gwd[wi] += g * xd[xi];
                                                gxd[xi] += g * wd[wi];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                ps.grad_mut(&format!("{name}.w"))?.add_scaled(&gw, T::ONE);
                {
                    let gbt = ps.grad_mut(&format!("{name}.b"))?;
                    for (a, &b) in gbt.data_mut().iter_mut().zip(gb.iter()) {
                        *a += b;
                    }
                }
                Ok(gx)
            }
            (LayerOp::Relu, LayerCache::Relu { input }) => {
                let mut gx = gy.clone();
                for (g, &x) in gx.data_mut().iter_mut().zip(input.data().iter()) {
                    if x <= T::ZERO {
                        *g = T::ZERO;
                    }
                }
                Ok(gx)
            }
            (LayerOp::MaxPool2, LayerCache::MaxPool2 { in_shape, argmax }) => {
                let mut gx = Tensor::zeros(in_shape);
                let gxd = gx.data_mut();
                for (o, &i) in argmax.iter().enumerate() {
                    gxd[i] += gy.data()[o];
                }
                Ok(gx)
            }
            (LayerOp::GlobalAvgPool, LayerCache::GlobalAvgPool { in_shape }) => {
                let (bsz, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
                let inv_area = T::from_f64(1.0 / (h * w) as f64);
                let mut gx = Tensor::zeros(in_shape);
                let gxd = gx.data_mut();
                for b in 0..bsz {
                    for ch in 0..c {
                        let g = gy.data()[b * c + ch] * inv_area;
                        let base = (b * c + ch) * h * w;
                        for i in 0..h * w {
                            gxd[base + i] = g;
                        }
                    }
                }
                Ok(gx)
            }
            (
                LayerOp::Dense {
                    name,
                    in_dim,
                    out_dim,
                },
                LayerCache::Dense { input },
            ) => {
                let bsz = input.shape()[0];
                let wt = ps.get(&format!("{name}.w"))?.clone();
                let xd = input.data();
                let wd = wt.data();
                let gyd = gy.data();
                let mut gx = Tensor::zeros(input.shape());
                let mut gw = Tensor::zeros(wt.shape());
                let mut gb = vec![T::ZERO; *out_dim];
                {
                    let gxd = gx.data_mut();
                    let gwd = gw.data_mut();
                    for b in 0..bsz {
                        for o in 0..*out_dim {
                            let g = gyd[b * out_dim + o];
                            gb[o] += g;
                            for i in 0..*in_dim {
                                gwd[o * in_dim + i] += g * xd[b * in_dim + i];
                                gxd[b * in_dim + i] += g * wd[o * in_dim + i];
                            }
                        }
                    }
                }
                ps.grad_mut(&format!("{name}.w"))?.add_scaled(&gw, T::ONE);
                {
                    let gbt = ps.grad_mut(&format!("{name}.b"))?;
                    for (a, &b) in gbt.data_mut().iter_mut().zip(gb.iter()) {
                        *a += b;
                    }
                }
                Ok(gx)
            }
            (LayerOp::RowNorm, LayerCache::RowNorm { y, inv_sigma }) => {
                let dim = y.shape()[1];
                let n = dim as f64;
                let mut gx = Tensor::zeros(y.shape());
                for (b, isig) in inv_sigma.iter().enumerate() {
                    let yrow = y.row(b);
                    let grow = gy.row(b);
                    let mean_g = grow.iter().map(|v| v.to_f64()).sum::<f64>() / n;
                    let mean_gy = dot_f64(grow, yrow) / n;
                    let isig = isig.to_f64();
                    let gxrow = gx.row_mut(b);
                    for i in 0..dim {
                        gxrow[i] = T::from_f64(
                            isig * (grow[i].to_f64() - mean_g - yrow[i].to_f64() * mean_gy),
                        );
                    }
                }
                Ok(gx)
            }
            (LayerOp::L2Norm, LayerCache::L2Norm { y, inv_norm }) => {
                let dim = y.shape()[1];
                let mut gx = Tensor::zeros(y.shape());
                for (b, inv) in inv_norm.iter().enumerate() {
                    let yrow = y.row(b);
                    let grow = gy.row(b);
                    let gdoty = dot_f64(grow, yrow);
                    let inv = inv.to_f64();
                    let gxrow = gx.row_mut(b);
                    for i in 0..dim {
                        gxrow[i] =
                            T::from_f64(inv * (grow[i].to_f64() - gdoty * yrow[i].to_f64()));
                    }
                }
                Ok(gx)
            }
            _ => Err(Error::Validation(format!(
                "layer {} got a cache from a different op",
                self.label()
            ))),
        }
    }
}
