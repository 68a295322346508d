use std::collections::HashMap;

use crate::float::Float;
use crate::param::{Module, ParamId};
use crate::tensor::Tensor;
use crate::var::Grads;

/// Adam with optional decoupled weight decay and global-norm clipping.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    state: HashMap<ParamId, (Tensor<T>, Tensor<T>)>,
}

impl<T: Float> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: None,
            step: 0,
            state: HashMap::new(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn with_clip_norm(mut self, norm: f64) -> Self {
        self.clip_norm = Some(norm);
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<M: Module<T>>(&mut self, model: &mut M, grads: &Grads<T>) {
        self.step += 1;
        let mut scale = 1.0;
        if let Some(max_norm) = self.clip_norm {
            let mut sq = 0.0;
            model.visit(&mut |_, p| {
                if let Some(g) = grads.param(p.id()) {
                    sq += g
                        .data()
                        .iter()
                        .map(|v| v.as_f64() * v.as_f64())
                        .sum::<f64>();
                }
            });
            let norm = sq.sqrt();
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr_t = T::of(self.lr * bc2.sqrt() / bc1);
        let wd = T::of(self.lr * self.weight_decay);
        let (tb1, tb2, teps, tscale) = (
            T::of(b1),
            T::of(b2),
            T::of(self.eps * bc2.sqrt()),
            T::of(scale),
        );
        let state = &mut self.state;
        model.visit_mut(&mut |_, p| {
            if !p.is_trainable() {
                return;
            }
            let Some(g) = grads.param(p.id()) else { return };
            let (m, v) = state
                .entry(p.id())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let md = m.data_mut();
            let vd = v.data_mut();
            let value = p.value_mut().data_mut();
            for i in 0..value.len() {
                let gi = g.data()[i] * tscale;
                md[i] = tb1 * md[i] + (T::one() - tb1) * gi;
                vd[i] = tb2 * vd[i] + (T::one() - tb2) * gi * gi;
                value[i] -= lr_t * md[i] / (vd[i].sqrt() + teps) + wd * value[i];
            }
        });
    }
}

/// Plain stochastic gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step<T: Float, M: Module<T>>(&self, model: &mut M, grads: &Grads<T>) {
        let lr = T::of(self.lr);
        model.visit_mut(&mut |_, p| {
            if !p.is_trainable() {
                return;
            }
            if let Some(g) = grads.param(p.id()) {
                let value = p.value_mut().data_mut();
                for (w, &gi) in value.iter_mut().zip(g.data()) {
                    *w -= lr * gi;
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{Ctx, Param};

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Param::<f64>::new(Tensor::from_f64(&[2], &[3.0, -2.0]));
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let ctx = Ctx::<f64>::train(0);
            let x = ctx.param(&p);
            let loss = x.mul(&x).sum();
            let g = loss.backward();
            opt.step(&mut p, &g);
        }
        assert!(p.value().max_abs() < 1e-3, "{:?}", p.value());
    }
}
