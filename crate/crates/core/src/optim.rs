//! LION, Adam and SGD over flat parameter vectors, the polynomial learning
//! rate decay, and the alternating two-step group schedule.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sign-momentum optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LionConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
}

impl Default for LionConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.99, weight_decay: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Lion(LionConfig),
    Adam(AdamConfig),
    Sgd,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Lion(LionConfig::default())
    }
}

impl OptimizerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Lion(_) => "lion",
            OptimizerConfig::Adam(_) => "adam",
            OptimizerConfig::Sgd => "sgd",
        }
    }
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// θ ← θ - lr·(sign(β1 m + (1-β1) g) + λθ), then m ← β2 m + (1-β2) g.
pub fn lion_step<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], lr: T, cfg: &LionConfig) {
    let (b1, b2, wd) = (T::of(cfg.beta1), T::of(cfg.beta2), T::of(cfg.weight_decay));
    for ((p, &g), mk) in params.iter_mut().zip(grads).zip(m.iter_mut()) {
        let c = b1 * *mk + (T::one() - b1) * g;
        *p -= lr * (sign(c) + wd * *p);
        *mk = b2 * *mk + (T::one() - b2) * g;
    }
}

/// Adam with bias correction; `step` is the 1-based count including this update.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], step: u64, lr: T, cfg: &AdamConfig) {
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::one() - T::of(cfg.beta1.powf(step as f64));
    let c2 = T::one() - T::of(cfg.beta2.powf(step as f64));
    let eps = T::of(cfg.eps);
    for (((p, &g), mk), vk) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mk = b1 * *mk + (T::one() - b1) * g;
        *vk = b2 * *vk + (T::one() - b2) * g * g;
        *p -= lr * (*mk / c1) / ((*vk / c2).sqrt() + eps);
    }
}

pub fn sgd_step<T: Real>(params: &mut [T], grads: &[T], lr: T) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Optimizer with its moment buffers; buffers match the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub steps: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Self {
        let v = if matches!(config, OptimizerConfig::Adam(_)) { vec![T::zero(); num_params] } else { Vec::new() };
        let m = if matches!(config, OptimizerConfig::Sgd) { Vec::new() } else { vec![T::zero(); num_params] };
        Self { config, m, v, steps: 0 }
    }

    /// Restores saved buffers, checking their shapes.
    pub fn from_state(config: OptimizerConfig, num_params: usize, m: Vec<T>, v: Vec<T>, steps: u64) -> Result<Self> {
        let fresh = Self::new(config, num_params);
        if m.len() != fresh.m.len() || v.len() != fresh.v.len() {
            return Err(Error::Parameter(format!(
                "optimizer state has buffers of length {}/{}, expected {}/{}",
                m.len(),
                v.len(),
                fresh.m.len(),
                fresh.v.len()
            )));
        }
        Ok(Self { config, m, v, steps })
    }

    /// One update. With `active`, only those index ranges (and their moment
    /// buffers) change; everything else stays bit-identical.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: T, active: Option<&[Range<usize>]>) {
        self.steps += 1;
        let full = [0..params.len()];
        let ranges = active.unwrap_or(&full);
        for r in ranges {
            let (p, g) = (&mut params[r.clone()], &grads[r.clone()]);
            match &self.config {
                OptimizerConfig::Lion(c) => lion_step(p, g, &mut self.m[r.clone()], lr, c),
                OptimizerConfig::Adam(c) => {
                    adam_step(p, g, &mut self.m[r.clone()], &mut self.v[r.clone()], self.steps, lr, c)
                }
                OptimizerConfig::Sgd => sgd_step(p, g, lr),
            }
        }
    }
}

/// lr(t) = lr_end + (lr_start - lr_end)(1 - t/T)^power, clamped to lr_end past T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_steps: usize,
    pub power: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { lr_start: 1e-3, lr_end: 8e-6, total_steps: 100_000, power: 1.0 }
    }
}

pub fn poly_lr(s: &LrSchedule, t: usize) -> f64 {
    if s.total_steps == 0 || t >= s.total_steps {
        return s.lr_end;
    }
    let frac = 1.0 - t as f64 / s.total_steps as f64;
    s.lr_end + (s.lr_start - s.lr_end) * frac.powf(s.power)
}

/// Which TRBFN parameter group trains during an epoch of two-step training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoStepPhase {
    /// c and α.
    Combination,
    /// s and h.
    Base,
}

/// Epochs [0, phase) train the combination group, [phase, 2·phase) the base group, repeating.
pub fn two_step_schedule(epoch: usize, phase: usize) -> TwoStepPhase {
    if (epoch / phase.max(1)) % 2 == 0 {
        TwoStepPhase::Combination
    } else {
        TwoStepPhase::Base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lion_sign_step() {
        let mut p = [1.0f64];
        let mut m = [0.0];
        lion_step(&mut p, &[2.0], &mut m, 0.01, &LionConfig::default());
        assert_eq!(p[0], 1.0 - 0.01);
        let mut p = [1.0f64];
        let mut m = [0.0];
        lion_step(&mut p, &[0.0], &mut m, 0.01, &LionConfig::default());
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn lion_quadratic() {
        // constant-lr sign steps settle into a band a few lr wide
        let mut p = [1.0f64];
        let mut opt = Optimizer::new(OptimizerConfig::default(), 1);
        for _ in 0..200 {
            let g = [2.0 * p[0]];
            opt.step(&mut p, &g, 0.01, None);
        }
        assert!(p[0].abs() <= 0.03, "{}", p[0]);
    }

    #[test]
    fn sgd_one_step() {
        let mut p = [1.0f64];
        sgd_step(&mut p, &[2.0], 0.1);
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr() {
        for scale in [1e-4, 1.0, 1e4] {
            let mut p = [1.0f64];
            let mut opt = Optimizer::new(OptimizerConfig::Adam(AdamConfig::default()), 1);
            opt.step(&mut p, &[scale], 0.01, None);
            assert!(((1.0 - p[0]) - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_quadratic() {
        let mut p = [1.0f64];
        let mut opt = Optimizer::new(OptimizerConfig::Adam(AdamConfig::default()), 1);
        for _ in 0..500 {
            let g = [2.0 * p[0]];
            opt.step(&mut p, &g, 0.01, None);
        }
        assert!(p[0].abs() <= 0.02, "{}", p[0]);
    }

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::default();
        assert_eq!(poly_lr(&s, 0), 1e-3);
        assert_eq!(poly_lr(&s, s.total_steps), 8e-6);
        assert_eq!(poly_lr(&s, s.total_steps + 5), 8e-6);
        assert!((poly_lr(&s, s.total_steps / 2) - 0.5 * (1e-3 + 8e-6)).abs() < 1e-18);
    }

    #[test]
    fn two_step_phases() {
        assert_eq!(two_step_schedule(0, 100), TwoStepPhase::Combination);
        assert_eq!(two_step_schedule(99, 100), TwoStepPhase::Combination);
        assert_eq!(two_step_schedule(150, 100), TwoStepPhase::Base);
        assert_eq!(two_step_schedule(200, 100), TwoStepPhase::Combination);
    }

    #[test]
    fn masked_step_freezes_the_rest() {
        let mut p = vec![1.0f64, 2.0, 3.0, 4.0];
        let before = p.clone();
        let mut opt = Optimizer::new(OptimizerConfig::default(), 4);
        opt.step(&mut p, &[1.0, 1.0, 1.0, 1.0], 0.1, Some(&[1..3]));
        assert_eq!(p[0].to_bits(), before[0].to_bits());
        assert_eq!(p[3].to_bits(), before[3].to_bits());
        assert_eq!(opt.m[0], 0.0);
        assert_eq!(opt.m[3], 0.0);
        assert!(p[1] < before[1] && p[2] < before[2]);
    }

    proptest! {
        #[test]
        fn lion_ignores_gradient_scale(g in prop::collection::vec(-10.0f64..10.0, 1..20), k in 0.001f64..1000.0) {
            let mut a = vec![0.5; g.len()];
            let mut b = a.clone();
            let scaled: Vec<f64> = g.iter().map(|v| v * k).collect();
            lion_step(&mut a, &g, &mut vec![0.0; g.len()], 0.01, &LionConfig::default());
            lion_step(&mut b, &scaled, &mut vec![0.0; g.len()], 0.01, &LionConfig::default());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn schedule_is_monotone(t in 0usize..1000, power in 0.5f64..3.0) {
            let s = LrSchedule { lr_start: 1e-3, lr_end: 8e-6, total_steps: 1000, power };
            prop_assert!(poly_lr(&s, t) >= poly_lr(&s, t + 1));
            prop_assert!(poly_lr(&s, t) <= s.lr_start && poly_lr(&s, t) >= s.lr_end);
        }

        #[test]
        fn optimizers_are_deterministic(g in prop::collection::vec(-1.0f64..1.0, 1..10)) {
            for cfg in [OptimizerConfig::default(), OptimizerConfig::Adam(AdamConfig::default()), OptimizerConfig::Sgd] {
                let mut a = vec![0.1; g.len()];
                let mut b = a.clone();
                let mut oa = Optimizer::new(cfg, g.len());
                let mut ob = Optimizer::new(cfg, g.len());
                for _ in 0..3 {
                    oa.step(&mut a, &g, 0.01, None);
                    ob.step(&mut b, &g, 0.01, None);
                }
                prop_assert_eq!(&a, &b);
            }
        }
    }
}
