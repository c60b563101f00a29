//! AdamW with two learning-rate groups, linear warmup and global-norm
//! gradient clipping.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{ParamGroup, ParamId, ParamStore};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Learning-rate multiplier at 1-based `step`: `step / warmup` during
/// warmup, 1 afterwards.
pub fn warmup_factor(step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        1.0
    } else {
        step as f64 / warmup as f64
    }
}

/// Scale gradients so their joint L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut HashMap<ParamId, Array2<f64>>, max_norm: f64) -> f64 {
    let mut ids: Vec<ParamId> = grads.keys().copied().collect();
    ids.sort();
    let norm = ids.iter().map(|id| grads[id].iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.mapv_inplace(|x| x * s);
        }
    }
    norm
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub weight_decay: f64,
    pub warmup: usize,
    pub step: usize,
    m: HashMap<usize, Array2<f64>>,
    v: HashMap<usize, Array2<f64>>,
}

impl AdamW {
    pub fn new(lr_encoder: f64, lr_heads: f64, weight_decay: f64, warmup: usize) -> Self {
        Self { lr_encoder, lr_heads, weight_decay, warmup, step: 0, m: HashMap::new(), v: HashMap::new() }
    }

    pub fn lr(&self, group: ParamGroup, step: usize) -> f64 {
        let base = match group {
            ParamGroup::Encoder => self.lr_encoder,
            ParamGroup::Heads => self.lr_heads,
        };
        base * warmup_factor(step, self.warmup)
    }

    /// One update of every parameter that has a gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &HashMap<ParamId, Array2<f64>>) {
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        let mut ids: Vec<&ParamId> = grads.keys().collect();
        ids.sort();
        for id in ids {
            let g = &grads[id];
            let lr = self.lr(store.entry(*id).group, self.step);
            let m = self.m.entry(id.0).or_insert_with(|| Array2::zeros(g.dim()));
            let v = self.v.entry(id.0).or_insert_with(|| Array2::zeros(g.dim()));
            m.zip_mut_with(g, |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            v.zip_mut_with(g, |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            let p = store.get_mut(*id);
            let decay = 1.0 - lr * self.weight_decay;
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p = *p * decay - lr * (m / c1) / ((v / c2).sqrt() + EPS);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_linear_then_flat() {
        assert_eq!(warmup_factor(50, 200), 0.25);
        assert_eq!(warmup_factor(200, 200), 1.0);
        assert_eq!(warmup_factor(1000, 200), 1.0);
        assert_eq!(warmup_factor(3, 0), 1.0);
        let opt = AdamW::new(2e-5, 3e-4, 0.0, 200);
        assert!((opt.lr(ParamGroup::Heads, 100) - 1.5e-4).abs() < 1e-18);
        assert!((opt.lr(ParamGroup::Encoder, 100) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = HashMap::new();
        g.insert(ParamId(0), Array2::from_elem((1, 2), 3.0));
        g.insert(ParamId(1), Array2::from_elem((1, 2), 4.0));
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - 50f64.sqrt()).abs() < 1e-12);
        let after = g.values().map(|a| a.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamGroup::Heads, Array2::from_elem((1, 2), 1.0));
        let mut opt = AdamW::new(0.0, 0.1, 0.0, 0);
        let mut g = HashMap::new();
        g.insert(id, ndarray::array![[2.0, -0.5]]);
        opt.update(&mut store, &g);
        let w = store.get(id);
        assert!((w[[0, 0]] - 0.9).abs() < 1e-6 && (w[[0, 1]] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient_signal() {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamGroup::Heads, Array2::from_elem((1, 1), 2.0));
        let mut opt = AdamW::new(0.0, 0.1, 0.5, 0);
        let mut g = HashMap::new();
        g.insert(id, Array2::zeros((1, 1)));
        opt.update(&mut store, &g);
        assert!((store.get(id)[[0, 0]] - 2.0 * 0.95).abs() < 1e-12);
    }
}
