//! Class-conditioned saliency maps.
//!
//! The map for a class is built from the last conv block activation A and
//! the gradient of that class's linear-probe score with respect to A:
//! per-channel weights are the spatial means of the gradient, the raw map
//! is the weighted channel sum, and the heatmap is ReLU of that, upsampled
//! bilinearly to the image size and scaled so its maximum is 1. A map that
//! is zero everywhere is left as zeros and flagged instead of normalized.

use crate::error::{Error, Result};
use crate::nn::encoder::Encoder;
use crate::nn::params::ParamSet;
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct GradcamMap<T> {
    /// ReLU'd, upsampled, max-normalized map at image resolution [H, W].
    pub map: Tensor<T>,
    /// Weighted channel sum before ReLU, at tap resolution. Negating the
    /// probe row negates this exactly.
    pub raw: Tensor<T>,
    /// True when the ReLU'd map was zero everywhere (no positive evidence);
    /// `map` is all zeros in that case.
    pub all_zero: bool,
}

/// Saliency map for one image under a linear scoring head.
///
/// `probe_row` is the weight row of the scored class, length `embed_dim`;
/// the bias does not affect gradients. `out_hw` is the output resolution,
/// normally the input image size.
pub fn gradcam<T: Scalar>(
    enc: &Encoder,
    ps: &ParamSet<T>,
    image: &Tensor<T>,
    probe_row: &[T],
    out_hw: (usize, usize),
) -> Result<GradcamMap<T>> {
    let (c, h, w) = (
        enc.spec().input_shape.0,
        enc.spec().input_shape.1,
        enc.spec().input_shape.2,
    );
    let x = match image.shape() {
        [ic, ih, iw] if [*ic, *ih, *iw] == [c, h, w] => {
            Tensor::from_vec(&[1, c, h, w], image.data().to_vec())?
        }
        [1, ic, ih, iw] if [*ic, *ih, *iw] == [c, h, w] => image.clone(),
        sh => {
            return Err(Error::Shape {
                layer: "input".into(),
                msg: format!("expected [{c}, {h}, {w}] image, got {sh:?}"),
            })
        }
    };
    if probe_row.len() != enc.feature_dim() {
        return Err(Error::Validation(format!(
            "probe row has length {}, expected {}",
            probe_row.len(),
            enc.feature_dim()
        )));
    }

    let fwd = enc.forward(ps, &x)?;
    let dfeat = Tensor::from_vec(&[1, enc.feature_dim()], probe_row.to_vec())?;
    // Backprop only through gap and fc: run a scratch copy so accumulated
    // parameter gradients are thrown away.
    let mut scratch = ps.clone();
    let grad_tap = enc.backward_to_tap(&mut scratch, &fwd, &dfeat)?;

    let a = fwd.tap_output();
    let (tc, th, tw) = (a.shape()[1], a.shape()[2], a.shape()[3]);
    let area = (th * tw) as f64;
    let mut raw = Tensor::zeros(&[th, tw]);
    for ch in 0..tc {
        let base = ch * th * tw;
        let mut wsum = 0.0f64;
        for i in 0..th * tw {
            wsum += grad_tap.data()[base + i].to_f64();
        }
        let weight = T::from_f64(wsum / area);
        for i in 0..th * tw {
            raw.data_mut()[i] += weight * a.data()[base + i];
        }
    }

    let mut clipped = raw.clone();
    for v in clipped.data_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
    let mut map = upsample_bilinear(&clipped, out_hw.0, out_hw.1)?;
    let mut maxv = T::ZERO;
    for &v in map.data() {
        if v > maxv {
            maxv = v;
        }
    }
    let all_zero = maxv == T::ZERO;
    if !all_zero {
        let inv = T::ONE / maxv;
        map.scale(inv);
    }
    Ok(GradcamMap { map, raw, all_zero })
}

/// Corner-aligned bilinear resize of a [H, W] tensor.
pub fn upsample_bilinear<T: Scalar>(src: &Tensor<T>, oh: usize, ow: usize) -> Result<Tensor<T>> {
    let sh = src.shape();
    if sh.len() != 2 || sh[0] == 0 || sh[1] == 0 {
        return Err(Error::Validation(format!(
            "bilinear resize expects a nonempty 2-D map, got {sh:?}"
        )));
    }
    if oh == 0 || ow == 0 {
        return Err(Error::Validation("bilinear resize target is empty".into()));
    }
    let (ih, iw) = (sh[0], sh[1]);
    let sy = if oh > 1 && ih > 1 {
        (ih - 1) as f64 / (oh - 1) as f64
    } else {
        0.0
    };
    let sx = if ow > 1 && iw > 1 {
        (iw - 1) as f64 / (ow - 1) as f64
    } else {
        0.0
    };
    let mut out = Tensor::zeros(&[oh, ow]);
    let sd = src.data();
    for y in 0..oh {
        let fy = y as f64 * sy;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(ih - 1);
        let ty = fy - y0 as f64;
        for x in 0..ow {
            let fx = x as f64 * sx;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(iw - 1);
            let tx = fx - x0 as f64;
            let v00 = sd[y0 * iw + x0].to_f64();
            let v01 = sd[y0 * iw + x1].to_f64();
            let v10 = sd[y1 * iw + x0].to_f64();
            let v11 = sd[y1 * iw + x1].to_f64();
            let top = v00 + (v01 - v00) * tx;
            let bot = v10 + (v11 - v10) * tx;
            out.data_mut()[y * ow + x] = T::from_f64(top + (bot - top) * ty);
        }
    }
    Ok(out)
}
