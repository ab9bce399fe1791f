use super::{Grads, NnError, ParamStore};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// Exponential decay from `start` to `end` over `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.start;
        }
        let frac = (step as f64 / self.total_steps as f64).min(1.0);
        self.start * (self.end / self.start).powf(frac)
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    m: Grads<T>,
    v: Grads<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        Self { config, m: store.zero_grads(), v: store.zero_grads(), t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>, lr: f64) -> Result<(), NnError> {
        for (slot, g) in grads.slots.iter().enumerate() {
            if g.weights.iter().chain(&g.bias).any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(store.canonical_path(slot).to_string()));
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let step = T::lit(lr / c1);
        let c2s = T::lit(c2);
        let eps = T::lit(eps);
        for slot in 0..grads.slots.len() {
            let spec = store.spec_mut(slot);
            let g = &grads.slots[slot];
            let (m, v) = (&mut self.m.slots[slot], &mut self.v.slots[slot]);
            let params = spec.weights.iter_mut().chain(spec.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &gv), mv), vv) in params.zip(gs).zip(ms).zip(vs) {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                *p -= step * *mv / ((*vv / c2s).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Exponential decay from `lr_start` to `lr_end` over all steps.
    pub fn schedule(&self, steps_per_epoch: usize) -> LrSchedule {
        LrSchedule { start: self.lr_start, end: self.lr_end, total_steps: self.epochs * steps_per_epoch }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, lr_start: 8e-4, lr_end: 2e-5, seed: 0 }
    }
}

/// Mean loss in bits per coded symbol before training and after each epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub initial_loss: f64,
    pub epoch_loss: Vec<f64>,
}
