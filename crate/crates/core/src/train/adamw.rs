//! AdamW optimizer with decoupled weight decay.
//!
//! Moment state lives in f64 regardless of the parameter type, and every
//! update walks parameters in insertion order, so a training run is a pure
//! function of its inputs. Decay multiplies the old parameter by
//! `1 - lr * wd` before the adaptive step is subtracted, which keeps it
//! exactly decoupled: with zero gradients the adaptive term vanishes and
//! parameters scale by that factor alone.

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::nn::tensor::Scalar;

#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    /// Completed steps; bias correction uses t+1 on the next call.
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    /// Standard betas (0.9, 0.999) and eps 1e-8.
    pub fn new(weight_decay: f64) -> Result<Self> {
        AdamW::with_betas(weight_decay, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(weight_decay: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !weight_decay.is_finite() || weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be finite and >= 0, got {weight_decay}"
            )));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !eps.is_finite() || eps <= 0.0 {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    #[must_use]
    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update using the gradients currently stored in `params`.
    ///
    /// State is allocated on first use and is tied to the parameter layout;
    /// changing the layout between steps is an error. A non-finite gradient
    /// aborts before any parameter is touched.
    pub fn step<T: Scalar>(&mut self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {lr}")));
        }
        if self.m.is_empty() {
            for e in params.entries() {
                self.m.push(vec![0.0; e.value.len()]);
                self.v.push(vec![0.0; e.value.len()]);
            }
        } else if self.m.len() != params.entries().len()
            || self
                .m
                .iter()
                .zip(params.entries())
                .any(|(m, e)| m.len() != e.value.len())
        {
            return Err(Error::Config(
                "parameter layout changed between optimizer steps".into(),
            ));
        }
        for e in params.entries() {
            if !e.grad.all_finite() {
                return Err(Error::NonFiniteGrad {
                    param: e.name.clone(),
                });
            }
        }

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        for (i, e) in params.entries_mut().iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let value = e.value.data_mut();
            let grad = e.grad.data();
            for j in 0..value.len() {
                let g = grad[j].to_f64();
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                let theta = value[j].to_f64();
                let next = theta * decay - lr * mhat / (vhat.sqrt() + self.eps);
                value[j] = T::from_f64(next);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn single_param(value: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::from_vec(&[1], vec![value]).unwrap())
            .unwrap();
        ps
    }

    fn set_grad(ps: &mut ParamSet<f64>, g: f64) {
        ps.grad_mut("w").unwrap().data_mut()[0] = g;
    }

    #[test]
    fn zero_grads_without_decay_are_a_fixed_point() {
        let mut ps = single_param(0.7);
        let mut opt = AdamW::new(0.0).unwrap();
        for _ in 0..3 {
            opt.step(&mut ps, 0.1).unwrap();
        }
        assert_eq!(ps.get("w").unwrap().data()[0], 0.7);
    }

    #[test]
    fn zero_grads_scale_by_exactly_one_minus_lr_wd() {
        let mut ps = single_param(0.3);
        let mut opt = AdamW::new(0.01).unwrap();
        opt.step(&mut ps, 0.1).unwrap();
        assert_eq!(ps.get("w").unwrap().data()[0], 0.3 * (1.0 - 0.1 * 0.01));
    }

    /// Scalar reference evaluation of the update formulas, kept independent
    /// of the implementation's loop structure.
    fn reference_steps(theta0: f64, grads: &[f64], lr: f64, wd: f64) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t as i32 + 1));
            let vhat = v / (1.0 - b2.powi(t as i32 + 1));
            theta = theta * (1.0 - lr * wd) - lr * mhat / (vhat.sqrt() + eps);
        }
        theta
    }

    #[test]
    fn three_hand_set_steps_match_the_reference_formula() {
        let grads = [0.5, -1.25, 2.0];
        let mut ps = single_param(1.0);
        let mut opt = AdamW::new(0.01).unwrap();
        for &g in &grads {
            set_grad(&mut ps, g);
            opt.step(&mut ps, 0.05).unwrap();
        }
        let expected = reference_steps(1.0, &grads, 0.05, 0.01);
        assert_eq!(ps.get("w").unwrap().data()[0], expected);
    }

    #[test]
    fn zero_decay_matches_plain_adam_step_for_step() {
        let grads = [1.0, 1.0, -0.5, 0.25, 3.0];
        let mut ps = single_param(-0.4);
        let mut opt = AdamW::new(0.0).unwrap();
        let mut expected = -0.4;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            set_grad(&mut ps, g);
            opt.step(&mut ps, 0.1).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t as i32 + 1));
            let vhat = v / (1.0 - b2.powi(t as i32 + 1));
            expected -= 0.1 * mhat / (vhat.sqrt() + eps);
            assert_eq!(ps.get("w").unwrap().data()[0], expected, "step {t}");
        }
    }

    #[test]
    fn constant_gradient_moves_about_lr_per_step() {
        // With a constant gradient the bias-corrected ratio is 1, so each
        // step moves by almost exactly lr.
        let mut ps = single_param(1.0);
        let mut opt = AdamW::new(0.0).unwrap();
        for _ in 0..3 {
            set_grad(&mut ps, 2.5);
            opt.step(&mut ps, 0.1).unwrap();
        }
        assert!((ps.get("w").unwrap().data()[0] - 0.7).abs() < 1e-7);
    }

    #[test]
    fn non_finite_grad_names_the_parameter() {
        let mut ps = single_param(1.0);
        let mut opt = AdamW::new(0.0).unwrap();
        set_grad(&mut ps, f64::NAN);
        let err = opt.step(&mut ps, 0.1).unwrap_err();
        match err {
            Error::NonFiniteGrad { param } => assert_eq!(param, "w"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn layout_change_is_rejected() {
        let mut ps = single_param(1.0);
        let mut opt = AdamW::new(0.0).unwrap();
        opt.step(&mut ps, 0.1).unwrap();
        ps.insert("extra", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(opt.step(&mut ps, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn lr_zero_changes_nothing() {
        let mut ps = single_param(0.9);
        let mut opt = AdamW::new(0.01).unwrap();
        set_grad(&mut ps, 5.0);
        opt.step(&mut ps, 0.0).unwrap();
        assert_eq!(ps.get("w").unwrap().data()[0], 0.9);
    }
}
