use crate::tensor::{Scalar, Tensor};
use std::collections::HashMap;

/// Adam with bias correction; moments are keyed by parameter name so the
/// optimizer survives checkpointing and parameter-visit order changes.
pub struct Adam<S: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: HashMap<String, (Tensor<S>, Tensor<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Starts one optimizer step; call once, then [`Adam::update`] for every
    /// parameter.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// `θ ← θ − lr · m̂ / (√v̂ + ε)` with bias-corrected moments.
    pub fn update(&mut self, name: &str, value: &mut Tensor<S>, grad: &Tensor<S>) {
        assert!(self.step > 0, "begin_step before update");
        let (m, v) = self
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (Tensor::zeros(grad.shape()), Tensor::zeros(grad.shape())));
        let t = self.step as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((theta, g), (mi, vi)) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            let g = g.as_f64();
            let m_new = b1 * mi.as_f64() + (1.0 - b1) * g;
            let v_new = b2 * vi.as_f64() + (1.0 - b2) * g * g;
            *mi = S::from_f64(m_new);
            *vi = S::from_f64(v_new);
            let m_hat = m_new / correction1;
            let v_hat = v_new / correction2;
            *theta = S::from_f64(theta.as_f64() - self.lr * m_hat / (v_hat.sqrt() + self.eps));
        }
    }

    /// Moment tensors in a stable order, for checkpointing.
    pub fn export_state(&self) -> Vec<(String, Tensor<S>, Tensor<S>)> {
        let mut names: Vec<&String> = self.moments.keys().collect();
        names.sort();
        names
            .into_iter()
            .map(|n| {
                let (m, v) = &self.moments[n];
                (n.clone(), m.clone(), v.clone())
            })
            .collect()
    }

    pub fn import_state(&mut self, step: u64, entries: Vec<(String, Tensor<S>, Tensor<S>)>) {
        self.step = step;
        self.moments = entries.into_iter().map(|(n, m, v)| (n, (m, v))).collect();
    }
}
