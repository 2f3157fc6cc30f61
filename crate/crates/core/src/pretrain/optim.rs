use crate::autodiff::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Linear warmup from 0 to `peak` over `warmup` steps, then linear decay to
/// 0 at `total`.
pub fn lr_at(step: u64, peak: f64, warmup: u64, total: u64) -> Result<f64> {
    if step > total {
        return Err(Error::invalid(format!("step {step} beyond {total}")));
    }
    if step < warmup {
        return Ok(peak * step as f64 / warmup as f64);
    }
    if total == warmup {
        return Ok(peak);
    }
    Ok(peak * (total - step) as f64 / (total - warmup) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// Bias-corrected Adam with decoupled weight decay on parameters flagged
/// `decay`. Moments are kept per parameter in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(store: &ParamStore<f32>) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Adam { step: 0, m: zeros(), v: zeros() }
    }

    /// One update at learning rate `lr`. A non-finite gradient aborts before
    /// anything is modified.
    pub fn update(&mut self, store: &mut ParamStore<f32>, grads: &Gradients<f32>, lr: f64, cfg: &AdamConfig) -> Result<()> {
        for (id, p) in store.iter() {
            if let Some(g) = grads.get(id) {
                if !g.is_finite() {
                    return Err(Error::invalid(format!("adam_step: gradient of {} is not finite", p.name)));
                }
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let i = id.index();
            let decay = if p.decay { cfg.weight_decay } else { 0.0 };
            let g = grads.get(id);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (k, w) in p.value.data_mut().iter_mut().enumerate() {
                let gk = g.map_or(0.0, |g| g.data()[k]);
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mhat = m[k] as f64 / bc1;
                let vhat = v[k] as f64 / bc2;
                let upd = mhat / (vhat.sqrt() + cfg.eps) + decay * *w as f64;
                *w = (*w as f64 - lr * upd) as f32;
            }
        }
        Ok(())
    }
}
