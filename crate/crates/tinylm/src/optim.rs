//! AdamW with decoupled weight decay, warmup/cosine learning-rate schedule and
//! global-norm gradient clipping.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::layout::ParamLayout;
use crate::{Scalar, Schedule, TrainConfig};

/// Learning rate as a function of the optimizer step (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub min_lr_ratio: f64,
    pub kind: Schedule,
}

impl LrSchedule {
    pub fn from_config(tc: &TrainConfig, total_steps: u64) -> Self {
        Self {
            peak: tc.lr,
            warmup_steps: tc.warmup_steps,
            total_steps,
            min_lr_ratio: tc.min_lr_ratio,
            kind: tc.schedule,
        }
    }

    /// Linear ramp reaching `peak` exactly at `warmup_steps`, then either flat or
    /// a half-cosine down to `min_lr_ratio * peak` at `total_steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps > 0 && step <= self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        match self.kind {
            Schedule::WarmupConstant => self.peak,
            Schedule::WarmupCosine => {
                let floor = self.peak * self.min_lr_ratio;
                let span = self.total_steps.saturating_sub(self.warmup_steps);
                if span == 0 {
                    return self.peak;
                }
                let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
                floor + 0.5 * (self.peak - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm<F: Scalar>(grads: &mut [F], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = F::lit(max_norm / (norm + 1e-6));
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<F>,
    pub v: Vec<F>,
    decay: Vec<Range<usize>>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(layout: &ParamLayout, tc: &TrainConfig) -> Self {
        let decay = layout
            .tensors()
            .iter()
            .filter(|t| ParamLayout::decays(t.kind))
            .map(|t| t.range.clone())
            .collect();
        Self {
            beta1: tc.beta1,
            beta2: tc.beta2,
            eps: tc.eps,
            weight_decay: tc.weight_decay,
            step: 0,
            m: vec![F::zero(); layout.total()],
            v: vec![F::zero(); layout.total()],
            decay,
        }
    }

    pub(crate) fn with_state(mut self, step: u64, m: Vec<F>, v: Vec<F>) -> Self {
        self.step = step;
        self.m = m;
        self.v = v;
        self
    }

    pub fn update(&mut self, params: &mut [F], grads: &[F], lr: f64) {
        self.step += 1;
        let b1 = F::lit(self.beta1);
        let b2 = F::lit(self.beta2);
        let one = F::one();
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = F::lit(lr / bc1);
        let bc2_sqrt = F::lit(bc2.sqrt());
        let eps = F::lit(self.eps);

        if self.weight_decay > 0.0 {
            let shrink = F::lit(1.0 - lr * self.weight_decay);
            for r in &self.decay {
                params[r.clone()].iter_mut().for_each(|p| *p *= shrink);
            }
        }
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let denom = self.v[i].sqrt() / bc2_sqrt + eps;
            params[i] -= step_size * self.m[i] / denom;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(kind: Schedule) -> LrSchedule {
        LrSchedule {
            peak: 6e-4,
            warmup_steps: 50,
            total_steps: 150,
            min_lr_ratio: 0.1,
            kind,
        }
    }

    #[test]
    fn warmup_reaches_peak_exactly() {
        let s = sched(Schedule::WarmupCosine);
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(25) - 3e-4).abs() < 1e-18);
        assert_eq!(s.lr_at(50), 6e-4);
        assert!(s.lr_at(51) < 6e-4);
        assert!((s.lr_at(100) - (0.6e-4 + 0.5 * 5.4e-4)).abs() < 1e-12);
        assert!((s.lr_at(150) - 0.6e-4).abs() < 1e-15);
        assert!((s.lr_at(1000) - 0.6e-4).abs() < 1e-15);
        assert_eq!(sched(Schedule::WarmupConstant).lr_at(120), 6e-4);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut g = vec![3.0f64, 4.0];
        let before = clip_grad_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        let after = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((after - 1.0).abs() < 1e-6);
        let mut small = vec![0.1f64, 0.1];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        use crate::{init_params, TinyLmConfig, TinyLmParams};
        let cfg = TinyLmConfig::new(5, 4, 1, 1, 4);
        let mut p: TinyLmParams<f64> = init_params(&cfg, 0).unwrap();
        let mut tc = TrainConfig::reference();
        tc.weight_decay = 0.0;
        tc.eps = 1e-12;
        let mut opt = AdamW::new(p.layout(), &tc);
        let before = p.as_slice().to_vec();
        let grads: Vec<f64> = (0..p.len()).map(|i| if i % 2 == 0 { 0.5 } else { -2.0 }).collect();
        opt.update(p.as_mut_slice(), &grads, 1e-3);
        for ((a, b), g) in p.as_slice().iter().zip(&before).zip(&grads) {
            // Bias-corrected first step is lr * sign(g).
            assert!(((b - a) - 1e-3 * g.signum()).abs() < 1e-9);
        }
    }
}
