//! Encoder assembly: a stack of conv blocks, global average pooling, and a
//! dense embedding layer, followed by a projection head and an optional
//! predictor head.
//!
//! The backbone output (after `fc`) is the feature vector used by all
//! evaluations. The projection head ends in L2 normalization and feeds the
//! contrastive objectives. The predictor maps projections to unnormalized
//! vectors and exists only for the stop-gradient objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{LayerCache, LayerOp};
use crate::nn::params::ParamSet;
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub out_channels: usize,
    pub stride: usize,
    /// Append 2x2 max pooling after the activation.
    #[serde(default)]
    pub pool: bool,
}

/// Architecture description. Kernel size is fixed at 3 (padding 1) and the
/// activation is always ReLU; only widths, strides, and pooling vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    /// (channels, height, width) of every input image.
    pub input_shape: (usize, usize, usize),
    pub conv_blocks: Vec<ConvBlockSpec>,
    /// Feature dimension after global average pooling and the `fc` layer.
    pub embed_dim: usize,
    /// Projection head widths. Hidden layers use row standardization and
    /// ReLU; the final output is L2-normalized. Empty means the head is
    /// just L2 normalization of the features.
    #[serde(default)]
    pub proj_dims: Vec<usize>,
    /// Hidden widths of the predictor head; its output dimension always
    /// equals the projection dimension. Required by the stop-gradient
    /// objective, absent otherwise.
    #[serde(default)]
    pub pred_dims: Option<Vec<usize>>,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            input_shape: (3, 16, 16),
            conv_blocks: vec![
                ConvBlockSpec {
                    out_channels: 8,
                    stride: 1,
                    pool: true,
                },
                ConvBlockSpec {
                    out_channels: 16,
                    stride: 1,
                    pool: true,
                },
            ],
            embed_dim: 32,
            proj_dims: vec![32, 16],
            pred_dims: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncoderSpec,
    backbone: Vec<LayerOp>,
    /// Index into `backbone` of the op whose output is the last conv
    /// block activation (the saliency tap point).
    tap: usize,
    /// Spatial size at the tap point.
    tap_hw: (usize, usize),
    head: Vec<LayerOp>,
    predictor: Option<Vec<LayerOp>>,
    proj_dim: usize,
}

/// Forward-pass record: outputs plus the per-layer caches needed to run the
/// backward pass. `version` pins the parameter set state the caches were
/// computed against.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub features: Tensor<T>,
    pub projections: Tensor<T>,
    backbone_caches: Vec<LayerCache<T>>,
    head_caches: Vec<LayerCache<T>>,
    tap_output: Tensor<T>,
    version: u64,
}

impl<T> Forward<T> {
    /// Activation of the last conv block, shape [B, C, H, W].
    #[must_use]
    pub fn tap_output(&self) -> &Tensor<T> {
        &self.tap_output
    }
}

#[derive(Debug, Clone)]
pub struct PredForward<T> {
    pub output: Tensor<T>,
    caches: Vec<LayerCache<T>>,
    version: u64,
}

impl Encoder {
    pub fn new(spec: EncoderSpec) -> Result<Encoder> {
        if spec.conv_blocks.is_empty() {
            return Err(Error::Config("encoder needs at least one conv block".into()));
        }
        if spec.embed_dim < 8 {
            return Err(Error::Config(format!(
                "embed_dim must be at least 8, got {}",
                spec.embed_dim
            )));
        }
        let (c, mut h, mut w) = spec.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!(
                "input shape {:?} has a zero dimension",
                spec.input_shape
            )));
        }

        let mut backbone = Vec::new();
        let mut in_ch = c;
        for (i, blk) in spec.conv_blocks.iter().enumerate() {
            if blk.out_channels == 0 {
                return Err(Error::Config(format!("conv block {i} has zero channels")));
            }
            if blk.stride == 0 {
                return Err(Error::Config(format!("conv block {i} has zero stride")));
            }
            backbone.push(LayerOp::Conv {
                name: format!("conv{i}"),
                in_ch,
                out_ch: blk.out_channels,
                stride: blk.stride,
            });
            h = (h - 1) / blk.stride + 1;
            w = (w - 1) / blk.stride + 1;
            backbone.push(LayerOp::Relu);
            if blk.pool {
                if h < 2 || w < 2 {
                    return Err(Error::Config(format!(
                        "conv block {i}: spatial size {h}x{w} too small for pooling"
                    )));
                }
                backbone.push(LayerOp::MaxPool2);
                h /= 2;
                w /= 2;
            }
            in_ch = blk.out_channels;
        }
        let tap = backbone.len() - 1;
        let tap_hw = (h, w);
        backbone.push(LayerOp::GlobalAvgPool);
        backbone.push(LayerOp::Dense {
            name: "fc".into(),
            in_dim: in_ch,
            out_dim: spec.embed_dim,
        });

        let mut head = Vec::new();
        let mut cur = spec.embed_dim;
        let n = spec.proj_dims.len();
        for (j, &d) in spec.proj_dims.iter().enumerate() {
            if d == 0 {
                return Err(Error::Config(format!("projection width {j} is zero")));
            }
            head.push(LayerOp::Dense {
                name: format!("proj{j}"),
                in_dim: cur,
                out_dim: d,
            });
            if j + 1 < n {
                head.push(LayerOp::RowNorm);
                head.push(LayerOp::Relu);
            }
            cur = d;
        }
        head.push(LayerOp::L2Norm);
        let proj_dim = cur;

        let predictor = match &spec.pred_dims {
            None => None,
            Some(dims) => {
                let mut ops = Vec::new();
                let mut pc = proj_dim;
                for (j, &d) in dims.iter().enumerate() {
                    if d == 0 {
                        return Err(Error::Config(format!("predictor width {j} is zero")));
                    }
                    ops.push(LayerOp::Dense {
                        name: format!("pred{j}"),
                        in_dim: pc,
                        out_dim: d,
                    });
                    ops.push(LayerOp::RowNorm);
                    ops.push(LayerOp::Relu);
                    pc = d;
                }
                ops.push(LayerOp::Dense {
                    name: "pred_out".into(),
                    in_dim: pc,
                    out_dim: proj_dim,
                });
                Some(ops)
            }
        };

        Ok(Encoder {
            spec,
            backbone,
            tap,
            tap_hw,
            head,
            predictor,
            proj_dim,
        })
    }

    #[must_use]
    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    #[must_use]
    pub fn feature_dim(&self) -> usize {
        self.spec.embed_dim
    }

    #[must_use]
    pub fn proj_dim(&self) -> usize {
        self.proj_dim
    }

    #[must_use]
    pub fn has_predictor(&self) -> bool {
        self.predictor.is_some()
    }

    /// Spatial size of the saliency tap activation.
    #[must_use]
    pub fn tap_hw(&self) -> (usize, usize) {
        self.tap_hw
    }

    fn all_ops(&self) -> impl Iterator<Item = &LayerOp> {
        self.backbone
            .iter()
            .chain(self.head.iter())
            .chain(self.predictor.iter().flatten())
    }

    /// Parameter names and shapes in creation order.
    #[must_use]
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for op in self.all_ops() {
            match op {
                LayerOp::Conv {
                    name,
                    in_ch,
                    out_ch,
                    ..
                } => {
                    out.push((format!("{name}.w"), vec![*out_ch, *in_ch, 3, 3]));
                    out.push((format!("{name}.b"), vec![*out_ch]));
                }
                LayerOp::Dense {
                    name,
                    in_dim,
                    out_dim,
                } => {
                    out.push((format!("{name}.w"), vec![*out_dim, *in_dim]));
                    out.push((format!("{name}.b"), vec![*out_dim]));
                }
                _ => {}
            }
        }
        out
    }

    /// Fresh parameters: uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights,
    /// zero biases. Draws happen in `f64` so the stream is identical for
    /// `f32` and `f64` parameter sets.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParamSet<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        for (name, shape) in self.param_layout() {
            let tensor = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..shape.iter().product::<usize>())
                    .map(|_| T::from_f64(rng.random_range(-bound..bound)))
                    .collect();
                Tensor::from_vec(&shape, data)?
            };
            ps.insert(&name, tensor)?;
        }
        Ok(ps)
    }

    /// Runs backbone and projection head. Fails if the batch shape does
    /// not match `spec.input_shape`.
    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<Forward<T>> {
        let (c, h, w) = self.spec.input_shape;
        let sh = x.shape();
        if sh.len() != 4 || sh[1] != c || sh[2] != h || sh[3] != w || sh[0] == 0 {
            return Err(Error::Shape {
                layer: "input".into(),
                msg: format!("expected [B, {c}, {h}, {w}] with B >= 1, got {sh:?}"),
            });
        }
        let mut cur = x.clone();
        let mut backbone_caches = Vec::with_capacity(self.backbone.len());
        let mut tap_output = None;
        for (i, op) in self.backbone.iter().enumerate() {
            let (y, cache) = op.forward(ps, &cur)?;
            backbone_caches.push(cache);
            cur = y;
            if i == self.tap {
                tap_output = Some(cur.clone());
            }
        }
        let features = cur.clone();
        let mut head_caches = Vec::with_capacity(self.head.len());
        for op in &self.head {
            let (y, cache) = op.forward(ps, &cur)?;
            head_caches.push(cache);
            cur = y;
        }
        Ok(Forward {
            features,
            projections: cur,
            backbone_caches,
            head_caches,
            tap_output: tap_output.expect("backbone is nonempty"),
            version: ps.version(),
        })
    }

    /// Backpropagates a gradient on the projections through the head and
    /// backbone, accumulating parameter gradients. Calling twice without
    /// zeroing doubles the accumulated gradients.
    pub fn backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        fwd: &Forward<T>,
        grad_projections: &Tensor<T>,
    ) -> Result<()> {
        if fwd.version != ps.version() {
            return Err(Error::StaleCache {
                cached: fwd.version,
                current: ps.version(),
            });
        }
        let mut g = grad_projections.clone();
        for (op, cache) in self.head.iter().zip(fwd.head_caches.iter()).rev() {
            g = op.backward(ps, cache, &g)?;
        }
        for (op, cache) in self.backbone.iter().zip(fwd.backbone_caches.iter()).rev() {
            g = op.backward(ps, cache, &g)?;
        }
        Ok(())
    }

    /// Backpropagates a gradient on the features through only the layers
    /// between the tap point and the features (pooling and `fc`), returning
    /// the gradient at the last conv block activation. Parameter gradients
    /// accumulate into `ps` as a side effect; callers that do not want them
    /// pass a scratch copy.
    pub fn backward_to_tap<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        fwd: &Forward<T>,
        grad_features: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if fwd.version != ps.version() {
            return Err(Error::StaleCache {
                cached: fwd.version,
                current: ps.version(),
            });
        }
        let mut g = grad_features.clone();
        for i in (self.tap + 1..self.backbone.len()).rev() {
            g = self.backbone[i].backward(ps, &fwd.backbone_caches[i], &g)?;
        }
        Ok(g)
    }

    /// Runs the predictor head on (usually detached) projections.
    pub fn predict<T: Scalar>(&self, ps: &ParamSet<T>, z: &Tensor<T>) -> Result<PredForward<T>> {
        let ops = self
            .predictor
            .as_ref()
            .ok_or_else(|| Error::Config("encoder has no predictor head".into()))?;
        let mut cur = z.clone();
        let mut caches = Vec::with_capacity(ops.len());
        for op in ops {
            let (y, cache) = op.forward(ps, &cur)?;
            caches.push(cache);
            cur = y;
        }
        Ok(PredForward {
            output: cur,
            caches,
            version: ps.version(),
        })
    }

    /// Backpropagates through the predictor, accumulating its parameter
    /// gradients, and returns the gradient with respect to its input.
    pub fn predict_backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        pf: &PredForward<T>,
        grad_output: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if pf.version != ps.version() {
            return Err(Error::StaleCache {
                cached: pf.version,
                current: ps.version(),
            });
        }
        let ops = self
            .predictor
            .as_ref()
            .ok_or_else(|| Error::Config("encoder has no predictor head".into()))?;
        let mut g = grad_output.clone();
        for (op, cache) in ops.iter().zip(pf.caches.iter()).rev() {
            g = op.backward(ps, cache, &g)?;
        }
        Ok(g)
    }

    /// Feature vectors for a full image set, processed in fixed-size
    /// chunks. Output is [N, embed_dim].
    pub fn features_batched<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        images: &Tensor<T>,
        chunk: usize,
    ) -> Result<Tensor<T>> {
        let sh = images.shape();
        if sh.len() != 4 {
            return Err(Error::Shape {
                layer: "input".into(),
                msg: format!("expected 4-D image set, got {sh:?}"),
            });
        }
        let n = sh[0];
        let per_image = sh[1] * sh[2] * sh[3];
        let chunk = chunk.max(1);
        let mut out = Tensor::zeros(&[n, self.spec.embed_dim]);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let batch = Tensor::from_vec(
                &[end - start, sh[1], sh[2], sh[3]],
                images.data()[start * per_image..end * per_image].to_vec(),
            )?;
            let fwd = self.forward(ps, &batch)?;
            out.data_mut()[start * self.spec.embed_dim..end * self.spec.embed_dim]
                .copy_from_slice(fwd.features.data());
            start = end;
        }
        Ok(out)
    }
}
