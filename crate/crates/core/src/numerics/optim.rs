//! AdamW with a linear-warmup / inverse-square-root learning-rate schedule.

use super::array::Array2;
use super::params::ParamStore;
use serde::{Deserialize, Serialize};

/// `peak · min(step / warmup, sqrt(warmup / step))`, with `step` counted from 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupSchedule {
    pub peak: f64,
    pub warmup: u64,
}

impl WarmupSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        if step == 0 {
            return 0.0;
        }
        if self.warmup == 0 {
            return self.peak;
        }
        let s = step as f64;
        let w = self.warmup as f64;
        if step <= self.warmup {
            self.peak * s / w
        } else {
            self.peak * (w / s).sqrt()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state: first/second moments aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub skipped: u64,
    pub m: Vec<Array2>,
    pub v: Vec<Array2>,
}

/// What happened on a call to [`AdamW::step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Applied { lr: f64 },
    SkippedNonFinite,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Array2::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            skipped: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Apply one update from the gradients stored in `store`, using the
    /// scheduled learning rate for the new step count.
    pub fn step(&mut self, store: &mut ParamStore, schedule: &WarmupSchedule) -> StepOutcome {
        if !store.iter().all(|p| p.grad.all_finite()) {
            self.skipped += 1;
            log::warn!(
                "non-finite gradient at optimizer step {}, update skipped ({} so far)",
                self.step + 1,
                self.skipped
            );
            return StepOutcome::SkippedNonFinite;
        }
        self.step += 1;
        let lr = schedule.lr(self.step);
        self.apply(store, lr);
        StepOutcome::Applied { lr }
    }

    fn apply(&mut self, store: &mut ParamStore, lr: f64) {
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (w, g) = (p.value.as_mut_slice(), p.grad.as_slice());
            for i in 0..w.len() {
                let gi = g[i];
                let mi = beta1 * m.as_slice()[i] + (1.0 - beta1) * gi;
                let vi = beta2 * v.as_slice()[i] + (1.0 - beta2) * gi * gi;
                m.as_mut_slice()[i] = mi;
                v.as_mut_slice()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                w[i] = w[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Scale all stored gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .map(|p| p.grad.sum_squares())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm.is_finite() && norm > max_norm {
        let s = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.scale(s);
        }
    }
    norm
}
