//! Named parameter storage and the Adam optimizer with global-norm
//! gradient clipping.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Ordered map of named parameters. Iteration order is the name order,
/// which keeps every pass over the parameters deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    map: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.map.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn set(&mut self, name: &str, t: Tensor) {
        let old = self
            .map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"));
        assert_eq!(old.shape(), t.shape(), "parameter {name:?} shape changed");
        *old = t;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }
}

/// Global L2 norm over a gradient map.
pub fn global_norm(grads: &BTreeMap<String, Tensor>) -> f64 {
    grads
        .values()
        .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients so the global norm is at most `clip`. Returns the
/// pre-clip norm. Never increases the norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, clip: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip && norm > 0.0 {
        let factor = clip / norm;
        for t in grads.values_mut() {
            let scaled: Vec<f64> = t.data().iter().map(|v| v * factor).collect();
            *t = Tensor::new(t.shape().to_vec(), scaled);
        }
    }
    norm
}

/// What one optimizer step did.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub pre_clip_norm: f64,
    /// True when non-finite gradients made the step a no-op.
    pub skipped: bool,
}

/// Adam with bias correction and global-norm clipping applied before the
/// moment updates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, clip_norm: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        assert!(clip_norm > 0.0, "clip norm must be positive");
        Adam {
            learning_rate,
            clip_norm,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Applies one update. Gradients missing for a parameter are treated
    /// as zero; non-finite gradients skip the whole step and flag it.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<StepStats> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Ok(StepStats {
                    pre_clip_norm: f64::NAN,
                    skipped: true,
                });
            }
            if params.try_get(name).is_none() {
                return Err(Error::invalid(
                    "optimizer_step",
                    format!("gradient for unknown parameter {name:?}"),
                ));
            }
        }
        let mut grads = grads.clone();
        let pre_clip_norm = clip_global_norm(&mut grads, self.clip_norm);

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        let names: Vec<String> = grads.keys().cloned().collect();
        for name in names {
            let g = &grads[&name];
            let p = params.get(&name);
            let n = p.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let mut out = p.data().to_vec();
            for j in 0..n {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                out[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            let shape = p.shape().to_vec();
            params.set(&name, Tensor::new(shape, out));
        }
        Ok(StepStats {
            pre_clip_norm,
            skipped: false,
        })
    }
}
