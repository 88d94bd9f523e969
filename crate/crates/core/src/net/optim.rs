//! Optimizers with global-norm gradient clipping, and the linear
//! learning-rate ramp.

use crate::error::{Error, Result};
use crate::net::tensor::{Real, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptKind {
    Sgd,
    RmsProp,
}

/// Optimizer state: kind, step size, RMSprop accumulators, clip threshold.
#[derive(Debug, Clone)]
pub struct OptimizerState<R: Real> {
    pub kind: OptKind,
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    accum: Vec<Tensor<R>>,
}

impl<R: Real> OptimizerState<R> {
    pub fn sgd(lr: f64, clip_norm: f64) -> Result<Self> {
        Self::new(OptKind::Sgd, lr, 0.9, 1e-8, clip_norm)
    }

    pub fn rmsprop(lr: f64, rho: f64, epsilon: f64, clip_norm: f64) -> Result<Self> {
        Self::new(OptKind::RmsProp, lr, rho, epsilon, clip_norm)
    }

    pub fn new(kind: OptKind, lr: f64, rho: f64, epsilon: f64, clip_norm: f64) -> Result<Self> {
        if clip_norm <= 0.0 {
            return Err(Error::InvalidConfig("clip_norm must be > 0".into()));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidConfig("rho must be in [0, 1)".into()));
        }
        Ok(OptimizerState {
            kind,
            lr,
            rho,
            epsilon,
            clip_norm,
            accum: Vec::new(),
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Global L2 norm over a gradient set, accumulated in f64.
    pub fn global_norm(grads: &[&Tensor<R>]) -> f64 {
        grads.iter().map(|g| g.sq_norm_f64()).sum::<f64>().sqrt()
    }

    /// Clip the gradient set to the global-norm threshold, then apply one
    /// optimizer step. Returns the pre-clip norm. Fails fast on NaN/Inf.
    pub fn clip_and_step(
        &mut self,
        params: &mut [&mut Tensor<R>],
        grads: &[Tensor<R>],
    ) -> Result<f64> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors vs {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape != g.shape {
                return Err(Error::ShapeMismatch(format!(
                    "param {:?} vs grad {:?}",
                    p.shape, g.shape
                )));
            }
            g.assert_finite("gradient")?;
        }
        if self.accum.len() != params.len() {
            self.accum = params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        }

        let refs: Vec<&Tensor<R>> = grads.iter().collect();
        let norm = Self::global_norm(&refs);
        let scale = if norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        let scale_r = R::from_f64(scale);
        let lr = R::from_f64(self.lr);

        match self.kind {
            OptKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                        *pv -= lr * (*gv * scale_r);
                    }
                }
            }
            OptKind::RmsProp => {
                let rho = R::from_f64(self.rho);
                let one_minus = R::from_f64(1.0 - self.rho);
                let eps = R::from_f64(self.epsilon);
                for ((p, g), a) in params.iter_mut().zip(grads).zip(self.accum.iter_mut()) {
                    for ((pv, gv), av) in p.data.iter_mut().zip(&g.data).zip(a.data.iter_mut()) {
                        let gc = *gv * scale_r;
                        *av = rho * *av + one_minus * gc * gc;
                        *pv -= lr * gc / (*av + eps).sqrt();
                    }
                }
            }
        }
        Ok(norm)
    }
}

/// Linear learning-rate ramp from `start` to `end` over `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
    pub total_epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            start: 1e-6,
            end: 5e-5,
            total_epochs: 500,
        }
    }
}

impl LrSchedule {
    pub fn new(start: f64, end: f64, total_epochs: usize) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidConfig(format!(
                "schedule start {start} must not exceed end {end}"
            )));
        }
        if total_epochs < 1 {
            return Err(Error::InvalidConfig("schedule needs >= 1 epoch".into()));
        }
        Ok(LrSchedule {
            start,
            end,
            total_epochs,
        })
    }

    /// Rate at an epoch; out-of-range epochs clamp with a warning.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let e = if epoch > self.total_epochs {
            eprintln!(
                "warning: epoch {epoch} beyond schedule end {}; clamping",
                self.total_epochs
            );
            self.total_epochs
        } else {
            epoch
        };
        self.start + (self.end - self.start) * e as f64 / self.total_epochs as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v).unwrap()
    }

    #[test]
    fn clip_halves_when_norm_doubles_threshold() {
        let mut opt = OptimizerState::<f64>::sgd(1.0, 5.62).unwrap();
        // One tensor with norm 11.24 = 2 * 5.62.
        let mut p = tensor(vec![0.0, 0.0]);
        let g = Tensor::from_vec(&[2], vec![11.24, 0.0]).unwrap();
        let norm = opt.clip_and_step(&mut [&mut p], &[g]).unwrap();
        assert!((norm - 11.24).abs() < 1e-12);
        // after clipping the applied gradient is 5.62 -> p = -5.62
        assert!((p.data[0] + 5.62).abs() < 1e-12);
    }

    #[test]
    fn sgd_step_matches_definition_below_clip() {
        let mut opt = OptimizerState::<f64>::sgd(1.0, 5.62).unwrap();
        let mut p = tensor(vec![1.0, -2.0, 0.5]);
        let g = tensor(vec![1.0, -2.0, 0.5]);
        opt.clip_and_step(&mut [&mut p], &[g]).unwrap();
        assert!(p.data.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let lr = 0.01;
        let rho = 0.9;
        let eps = 1e-8;
        let mut opt = OptimizerState::<f64>::rmsprop(lr, rho, eps, 100.0).unwrap();
        let g0 = 0.3f64;
        let mut p = tensor(vec![1.0]);
        opt.clip_and_step(&mut [&mut p], &[tensor(vec![g0])]).unwrap();
        let expect = 1.0 - lr * g0 / ((1.0 - rho) * g0 * g0 + eps).sqrt();
        assert!((p.data[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let mut opt = OptimizerState::<f64>::sgd(0.1, 1.0).unwrap();
        let mut p = tensor(vec![0.0]);
        let g = tensor(vec![f64::NAN]);
        assert!(opt.clip_and_step(&mut [&mut p], &[g]).is_err());
    }

    #[test]
    fn clipping_never_increases_norm() {
        let mut opt = OptimizerState::<f64>::sgd(1.0, 5.62).unwrap();
        for raw in [0.5f64, 3.0, 5.62, 6.0, 50.0] {
            let mut p = tensor(vec![0.0]);
            let g = tensor(vec![raw]);
            opt.clip_and_step(&mut [&mut p], &[g]).unwrap();
            let applied = p.data[0].abs();
            assert!(applied <= 5.62 + 1e-12);
            if raw <= 5.62 {
                assert!((applied - raw).abs() < 1e-12, "identity below threshold");
            }
        }
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(0), 1e-6);
        assert!((s.lr_at(500) - 5e-5).abs() < 1e-18);
        assert!((s.lr_at(250) - 2.55e-5).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(LrSchedule::new(1.0, 0.5, 10).is_err());
        assert!(LrSchedule::new(0.1, 0.5, 0).is_err());
    }
}
