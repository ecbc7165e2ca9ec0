use crate::autodiff::{Grads, Mat, ParamStore};
use serde::{Deserialize, Serialize};

/// RMSProp with a running mean of squared gradients:
/// `v ← ρ·v + (1−ρ)·g²`, `θ ← θ − lr·g / (√v + ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub smoothing: f64,
    pub eps: f64,
    square_avg: Vec<Mat>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, lr: f64, smoothing: f64, eps: f64) -> Self {
        Self {
            lr,
            smoothing,
            eps,
            square_avg: store.zeros_like(),
        }
    }

    pub fn square_avg(&self) -> &[Mat] {
        &self.square_avg
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        assert_eq!(self.square_avg.len(), store.len(), "optimizer/store mismatch");
        for (id, g) in grads.iter() {
            let v = &mut self.square_avg[id.0];
            let p = store.get_mut(id);
            let (rho, lr, eps) = (self.smoothing, self.lr, self.eps);
            ndarray::Zip::from(p).and(v).and(g).for_each(|p, v, &g| {
                *v = rho * *v + (1.0 - rho) * g * g;
                *p -= lr * g / (v.sqrt() + eps);
            });
        }
    }
}
