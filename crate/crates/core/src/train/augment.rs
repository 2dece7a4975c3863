//! Stochastic image views: random resized crop, horizontal flip, per-channel
//! intensity jitter, and additive Gaussian noise, in that order.
//!
//! The caller supplies the RNG, one per (sample, view), so a view is a pure
//! function of the dataset seed and the sample identity. Draw order is fixed
//! and every transform always consumes its draws (noise excepted when its
//! sigma is zero), keeping streams aligned across config changes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::gradcam::upsample_bilinear;
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Smallest crop area as a fraction of the image; 1.0 disables cropping.
    #[serde(default = "default_crop_min_scale")]
    pub crop_min_scale: f64,
    /// Probability of a horizontal flip.
    #[serde(default = "default_flip_prob")]
    pub flip_prob: f64,
    /// Per-channel multiplicative jitter: each channel scales by a factor in
    /// [1 - jitter, 1 + jitter].
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Standard deviation of per-pixel additive Gaussian noise.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
}

fn default_crop_min_scale() -> f64 {
    0.6
}
fn default_flip_prob() -> f64 {
    0.5
}
fn default_jitter() -> f64 {
    0.2
}
fn default_noise_sigma() -> f64 {
    0.05
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            crop_min_scale: default_crop_min_scale(),
            flip_prob: default_flip_prob(),
            jitter: default_jitter(),
            noise_sigma: default_noise_sigma(),
        }
    }
}

impl AugmentSpec {
    /// Spec producing the identity transform, byte-for-byte.
    #[must_use]
    pub fn identity() -> Self {
        AugmentSpec {
            crop_min_scale: 1.0,
            flip_prob: 0.0,
            jitter: 0.0,
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.crop_min_scale.is_finite()
            || self.crop_min_scale <= 0.0
            || self.crop_min_scale > 1.0
        {
            return Err(Error::Config(format!(
                "crop_min_scale must be in (0, 1], got {}",
                self.crop_min_scale
            )));
        }
        if !self.flip_prob.is_finite() || !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!(
                "flip_prob must be in [0, 1], got {}",
                self.flip_prob
            )));
        }
        if !self.jitter.is_finite() || !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "jitter must be in [0, 1), got {}",
                self.jitter
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// One augmented view of a (C, H, W) image.
///
/// Crop first: a uniform area fraction in [crop_min_scale, 1] picks the crop
/// size (same linear scale on both axes), a uniform offset places it, and
/// corner-aligned bilinear resampling returns it to (H, W). A full-size crop
/// at offset zero resamples to itself exactly, so the identity spec returns
/// the input bits unchanged.
pub fn augment_image(
    image: &[f32],
    shape: (usize, usize, usize),
    spec: &AugmentSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f32>> {
    spec.validate()?;
    let (c, h, w) = shape;
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::Validation(format!("image shape {shape:?} has a zero dimension")));
    }
    if image.len() != c * h * w {
        return Err(Error::Validation(format!(
            "image has {} values, shape {shape:?} needs {}",
            image.len(),
            c * h * w
        )));
    }

    let area = rng.random_range(spec.crop_min_scale..=1.0);
    let side = area.sqrt();
    let ch = ((h as f64 * side).round() as usize).clamp(1, h);
    let cw = ((w as f64 * side).round() as usize).clamp(1, w);
    let y0 = rng.random_range(0..=h - ch);
    let x0 = rng.random_range(0..=w - cw);
    let mut out = Vec::with_capacity(c * h * w);
    if (ch, cw, y0, x0) == (h, w, 0, 0) {
        out.extend_from_slice(image);
    } else {
        for ci in 0..c {
            let plane = &image[ci * h * w..(ci + 1) * h * w];
            let mut crop = Vec::with_capacity(ch * cw);
            for y in y0..y0 + ch {
                crop.extend_from_slice(&plane[y * w + x0..y * w + x0 + cw]);
            }
            let src = Tensor::from_vec(&[ch, cw], crop)?;
            out.extend_from_slice(upsample_bilinear(&src, h, w)?.data());
        }
    }

    let flip_draw: f64 = rng.random();
    if flip_draw < spec.flip_prob {
        for ci in 0..c {
            let plane = &mut out[ci * h * w..(ci + 1) * h * w];
            for row in plane.chunks_exact_mut(w) {
                row.reverse();
            }
        }
    }

    for ci in 0..c {
        let factor = 1.0 + rng.random_range(-spec.jitter..=spec.jitter);
        if factor != 1.0 {
            for v in &mut out[ci * h * w..(ci + 1) * h * w] {
                *v = (f64::from(*v) * factor) as f32;
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        for v in &mut out {
            let n: f64 = rng.sample(StandardNormal);
            *v = (f64::from(*v) + spec.noise_sigma * n) as f32;
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ramp(c: usize, h: usize, w: usize) -> Vec<f32> {
        (0..c * h * w).map(|i| i as f32 * 0.01).collect()
    }

    #[test]
    fn identity_spec_returns_the_input_bits() {
        let img = ramp(3, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = augment_image(&img, (3, 8, 8), &AugmentSpec::identity(), &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn same_rng_stream_reproduces_the_view() {
        let img = ramp(3, 8, 8);
        let spec = AugmentSpec::default();
        let a = augment_image(&img, (3, 8, 8), &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = augment_image(&img, (3, 8, 8), &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_streams_give_different_views() {
        let img = ramp(3, 8, 8);
        let spec = AugmentSpec::default();
        let a = augment_image(&img, (3, 8, 8), &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = augment_image(&img, (3, 8, 8), &spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn forced_flip_mirrors_rows() {
        let img = ramp(1, 2, 3);
        let spec = AugmentSpec { flip_prob: 1.0, ..AugmentSpec::identity() };
        let out = augment_image(&img, (1, 2, 3), &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, vec![img[2], img[1], img[0], img[5], img[4], img[3]]);
    }

    #[test]
    fn jitter_scales_each_channel_by_one_factor() {
        let img = ramp(2, 4, 4);
        let spec = AugmentSpec { jitter: 0.2, ..AugmentSpec::identity() };
        let out = augment_image(&img, (2, 4, 4), &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for ci in 0..2 {
            // Recover the factor from the first nonzero pixel and check the
            // rest of the channel agrees.
            let base = ci * 16 + 1;
            let factor = f64::from(out[base]) / f64::from(img[base]);
            assert!((0.8..=1.2).contains(&factor));
            for j in 0..16 {
                let expected = (f64::from(img[ci * 16 + j]) * factor) as f32;
                assert!((out[ci * 16 + j] - expected).abs() < 2e-7);
            }
        }
    }

    #[test]
    fn shape_is_preserved_and_values_stay_finite() {
        let img = ramp(3, 16, 16);
        let spec = AugmentSpec::default();
        let out =
            augment_image(&img, (3, 16, 16), &spec, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(out.len(), img.len());
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_buffer_size_is_rejected() {
        let img = ramp(1, 4, 4);
        let err = augment_image(
            &img,
            (1, 4, 5),
            &AugmentSpec::identity(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(err.is_err());
    }

    #[test]
    fn crop_bounds_hold_at_the_minimum_scale() {
        // Small images and a tiny min scale must not underflow offsets.
        let img = ramp(1, 8, 8);
        let spec = AugmentSpec { crop_min_scale: 0.05, ..AugmentSpec::identity() };
        for seed in 0..50 {
            let out =
                augment_image(&img, (1, 8, 8), &spec, &mut ChaCha8Rng::seed_from_u64(seed))
                    .unwrap();
            assert_eq!(out.len(), 64);
            assert!(out.iter().all(|v| v.is_finite()));
        }
    }
}
