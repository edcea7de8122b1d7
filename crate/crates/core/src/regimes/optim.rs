use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{c, Element, NamedParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.05,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    /// Settings for reconstruction phases.
    pub fn for_mim() -> Self {
        Self { beta2: 0.95, ..Self::default() }
    }
}

/// Layernorm gains, biases and the class token are not decayed.
pub fn decay_exempt(path: &str) -> bool {
    path.ends_with(".bias") || path.ends_with(".gain") || path.ends_with("cls_token")
}

/// AdamW with decoupled weight decay and bias-corrected moments. Moments
/// are kept in `f64`.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// First and second moments of `path`, if it has been updated.
    pub fn moments(&self, path: &str) -> Option<(&[f64], &[f64])> {
        self.moments.get(path).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// One update of every trainable parameter. A zero rate leaves the value
    /// unchanged while the moments still advance. A parameter that took no
    /// part in the loss gets a zero gradient.
    pub fn step<T: Element>(&mut self, store: &mut NamedParamStore<T>, lr: &dyn Fn(&str) -> f64) -> Result<()> {
        let mut work = Vec::new();
        for (path, t) in store.iter() {
            if !t.requires_grad() {
                continue;
            }
            let rate = lr(path);
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::invalid("adamw_step", format!("{path}: learning rate {rate}")));
            }
            let g = t.grad_vec().unwrap_or_else(|| vec![T::zero(); t.numel()]);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGrad(path.to_string()));
            }
            work.push((path.to_string(), rate, g));
        }

        self.step += 1;
        let cfg = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (path, rate, g) in work {
            let param = store.get(&path)?;
            let shape = param.shape().to_vec();
            let (m, v) = self
                .moments
                .entry(path.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let decay = if decay_exempt(&path) { 0.0 } else { cfg.weight_decay };
            let data: Vec<T> = param
                .data()
                .iter()
                .zip(&g)
                .zip(m.iter_mut().zip(v.iter_mut()))
                .map(|((&p, &gi), (mi, vi))| {
                    let gi = gi.as_f64();
                    let mut p = p.as_f64();
                    if decay != 0.0 {
                        p *= 1.0 - rate * decay;
                    }
                    *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                    *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    c::<T>(p - rate * mhat / (vhat.sqrt() + cfg.eps))
                })
                .collect();
            store.replace(&path, Tensor::parameter(&shape, data)?)?;
        }
        Ok(())
    }
}
