use super::params::Params;
use crate::selection::ChannelSelector;

/// Weight decay applies to weight matrices only, not biases or norm parameters.
fn decays(name: &str) -> bool {
    name.ends_with(".w")
}

/// `p ← p (1 − lr·wd) − lr·g` for every tensor.
pub fn sgd_step(params: &mut Params, grads: &Params, lr: f64, weight_decay: f64) {
    let names = params.names();
    let gs = grads.tensors();
    for ((p, g), name) in params.tensors_mut().into_iter().zip(gs).zip(names) {
        let shrink = if decays(&name) { 1.0 - lr * weight_decay } else { 1.0 };
        for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
            *x = *x * shrink - lr * d;
        }
    }
}

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

#[allow(clippy::too_many_arguments)]
fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: AdamConfig, t: i32, lr: f64, wd: f64) {
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] = p[i] * (1.0 - lr * wd) - lr * mh / (vh.sqrt() + cfg.eps);
    }
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamConfig,
    pub weight_decay: f64,
    step: i32,
    m: Params,
    v: Params,
}

impl AdamW {
    pub fn new(params: &Params, config: AdamConfig, weight_decay: f64) -> Self {
        Self { config, weight_decay, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.step += 1;
        let names = params.names();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((p, g), m), v), name) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs).zip(names) {
            let wd = if decays(&name) { self.weight_decay } else { 0.0 };
            adam_update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), self.config, self.step, lr, wd);
        }
    }
}

/// Plain gradient step on the architecture parameters of every selector.
pub fn alpha_sgd_step(selectors: &mut [Option<ChannelSelector>], grads: &[Option<Vec<f64>>], lr: f64) {
    for (sel, g) in selectors.iter_mut().zip(grads) {
        if let (Some(s), Some(g)) = (sel, g) {
            for (a, d) in s.alpha.iter_mut().zip(g) {
                *a -= lr * d;
            }
        }
    }
}
