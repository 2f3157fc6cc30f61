use crate::autodiff::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Shadow copy of the trainable parameters, updated as
/// `shadow ← α·shadow + (1−α)·param`.
///
/// With `warmup` set, the update count `t` caps the decay at
/// `(1 + t) / (10 + t)`, so early shadows track the parameters instead of
/// their initial values.
#[derive(Clone, Debug, PartialEq)]
pub struct Ema<T> {
    pub decay: f64,
    pub warmup: bool,
    pub updates: u64,
    pub shadow: Vec<Tensor<T>>,
}

impl<T: Real> Ema<T> {
    pub fn new(store: &ParamStore<T>, decay: f64, warmup: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::Config(format!("ema decay {decay} outside [0, 1]")));
        }
        Ok(Ema { decay, warmup, updates: 0, shadow: store.iter().map(|(_, p)| p.value.clone()).collect() })
    }

    /// Decay used by the next update.
    pub fn next_decay(&self) -> f64 {
        if self.warmup {
            let t = self.updates as f64;
            self.decay.min((1.0 + t) / (10.0 + t))
        } else {
            self.decay
        }
    }

    pub fn update(&mut self, store: &ParamStore<T>) -> Result<()> {
        if store.len() != self.shadow.len() {
            return Err(Error::shape("ema_update", format!("{} shadows for {} params", self.shadow.len(), store.len())));
        }
        for ((_, p), s) in store.iter().zip(&self.shadow) {
            if p.value.shape() != s.shape() {
                return Err(Error::shape("ema_update", format!("{}: {:?} vs {:?}", p.name, s.shape(), p.value.shape())));
            }
        }
        let a = T::from_f64c(self.next_decay());
        let b = T::one() - a;
        for ((_, p), s) in store.iter().zip(self.shadow.iter_mut()) {
            if !p.trainable {
                continue;
            }
            for (sv, &pv) in s.data_mut().iter_mut().zip(p.value.data()) {
                *sv = a * *sv + b * pv;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// A copy of `store` holding the shadow values.
    pub fn apply(&self, store: &ParamStore<T>) -> ParamStore<T> {
        let mut out = store.clone();
        let ids: Vec<_> = out.ids().collect();
        for (id, s) in ids.into_iter().zip(&self.shadow) {
            *out.value_mut(id) = s.clone();
        }
        out
    }
}
