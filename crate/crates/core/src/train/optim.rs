//! Adam and plain SGD with an L2 penalty `l2 · Σ w²` on regularized
//! parameters.

use crate::error::{Error, Result};
use crate::params::{check_finite, ParamGrads, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(OptimizerKind::Adam),
            1 => Some(OptimizerKind::Sgd),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            OptimizerKind::Adam => 0,
            OptimizerKind::Sgd => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Optimizer moments and step count; everything needed to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    /// Adam steps taken so far.
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        OptimizerState { kind: OptimizerKind::Adam, step: 0, m: zeros(), v: zeros() }
    }

    fn check_layout(&self, store: &ParamStore) -> Result<()> {
        let ok = self.m.len() == store.len()
            && self.v.len() == store.len()
            && store.iter().zip(&self.m).zip(&self.v).all(|((p, m), v)| {
                m.shape() == p.value.shape() && v.shape() == p.value.shape()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }

    /// Gradient of the data term plus `2 · l2 · w` for regularized params.
    fn total_grad(store: &ParamStore, grads: &ParamGrads, l2: f64) -> Vec<Tensor> {
        store
            .iter()
            .zip(grads.iter())
            .map(|(p, g)| {
                let mut g = g.clone();
                if p.regularized && l2 > 0.0 {
                    g.add_scaled(&p.value, 2.0 * l2);
                }
                g
            })
            .collect()
    }

    /// One Adam update. Parameters are left untouched if any gradient is
    /// non-finite.
    pub fn adam_step(&mut self, store: &mut ParamStore, grads: &ParamGrads, l2: f64, s: AdamSettings) -> Result<()> {
        self.check_layout(store)?;
        check_finite(store, grads)?;
        self.kind = OptimizerKind::Adam;
        let total = Self::total_grad(store, grads, l2);
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - s.beta1.powi(t);
        let c2 = 1.0 - s.beta2.powi(t);
        for (((p, g), m), v) in store.iter_mut().zip(&total).zip(&mut self.m).zip(&mut self.v) {
            let w = p.value.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for i in 0..w.len() {
                let gi = g.data()[i];
                m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * gi;
                v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                w[i] -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
            }
        }
        Ok(())
    }

    /// One SGD update `w ← w − lr · (g + 2·l2·w)`.
    pub fn sgd_step(&mut self, store: &mut ParamStore, grads: &ParamGrads, l2: f64, lr: f64) -> Result<()> {
        self.check_layout(store)?;
        check_finite(store, grads)?;
        self.kind = OptimizerKind::Sgd;
        let total = Self::total_grad(store, grads, l2);
        for (p, g) in store.iter_mut().zip(&total) {
            p.value.add_scaled(g, -lr);
        }
        Ok(())
    }
}

/// The L2 penalty `l2 · Σ w²` over regularized parameters.
pub fn l2_penalty(store: &ParamStore, l2: f64) -> f64 {
    l2 * store
        .iter()
        .filter(|p| p.regularized)
        .map(|p| p.value.data().iter().map(|w| w * w).sum::<f64>())
        .sum::<f64>()
}
