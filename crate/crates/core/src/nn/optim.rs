use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::param::{Module, Param};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, lr: 3e-4, weight_decay: 1e-6, momentum: 0.9, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str| Err(Error::Config(format!("optimizer.{f} out of range")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2");
        }
        if !(self.eps > 0.0) {
            return bad("eps");
        }
        Ok(())
    }
}

/// Adam (with coupled L2 weight decay) or SGD with momentum. Per-parameter
/// state is keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    pub step: u64,
    pub first: BTreeMap<String, Vec<T>>,
    pub second: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Self { config, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    /// Applies one update with learning rate `lr` to every trainable parameter.
    pub fn apply(&mut self, module: &mut impl Module<T>, lr: f64) {
        self.step += 1;
        let cfg = self.config.clone();
        let t = self.step as i32;
        let lr_t = T::lit(lr);
        let wd = T::lit(cfg.weight_decay);
        let first = &mut self.first;
        let second = &mut self.second;
        match cfg.kind {
            OptimizerKind::Adam => {
                let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
                let c1 = T::lit(1.0 - cfg.beta1.powi(t));
                let c2 = T::lit(1.0 - cfg.beta2.powi(t));
                let eps = T::lit(cfg.eps);
                module.visit_mut(&mut |p: &mut Param<T>| {
                    if !p.trainable {
                        return;
                    }
                    let m = first.entry(p.name.clone()).or_insert_with(|| vec![T::zero(); p.len()]);
                    let v = second.entry(p.name.clone()).or_insert_with(|| vec![T::zero(); p.len()]);
                    for i in 0..p.len() {
                        let g = p.grad[i] + wd * p.value[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * g;
                        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p.value[i] -= lr_t * mh / (vh.sqrt() + eps);
                    }
                });
            }
            OptimizerKind::Sgd => {
                let mom = T::lit(cfg.momentum);
                module.visit_mut(&mut |p: &mut Param<T>| {
                    if !p.trainable {
                        return;
                    }
                    let fresh = !first.contains_key(&p.name);
                    let buf = first.entry(p.name.clone()).or_insert_with(|| vec![T::zero(); p.len()]);
                    for i in 0..p.len() {
                        let g = p.grad[i] + wd * p.value[i];
                        buf[i] = if fresh { g } else { mom * buf[i] + g };
                        p.value[i] -= lr_t * buf[i];
                    }
                });
            }
        }
    }
}
