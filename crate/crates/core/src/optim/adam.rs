use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Param;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if self.eps <= 0.0 {
            return Err(Error::config("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments. Moment buffers are created on the
/// first step from the parameter shapes; later steps must pass parameters
/// of the same shapes in the same order.
#[derive(Clone, Debug)]
pub struct Adam<T = f32> {
    config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Element> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    /// Updates every parameter from its gradient slot.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        let mut values = Vec::with_capacity(params.len());
        let mut grads = Vec::with_capacity(params.len());
        for p in params.iter_mut() {
            let p: &mut Param<T> = p;
            let grad = p
                .grad()
                .cloned()
                .ok_or_else(|| Error::State("Adam step on a parameter without a gradient".into()))?;
            grads.push(grad);
            values.push(&mut p.value);
        }
        let grad_refs: Vec<&Tensor<T>> = grads.iter().collect();
        self.step_tensors(&mut values, &grad_refs)
    }

    /// `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`,
    /// `θ ← θ − lr·m̂/(√v̂ + ε)` with `m̂ = m/(1−β1ᵗ)`, `v̂ = v/(1−β2ᵗ)`.
    pub fn step_tensors(&mut self, values: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if values.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameters but {} gradients",
                values.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = values.iter().map(|v| Tensor::zeros(v.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != values.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                values.len()
            )));
        }
        for (i, (value, grad)) in values.iter().zip(grads).enumerate() {
            if value.shape() != grad.shape() || value.shape() != self.m[i].shape() {
                return Err(Error::shape(format!(
                    "parameter {i}: value {:?}, gradient {:?}, moments {:?}",
                    value.shape(),
                    grad.shape(),
                    self.m[i].shape()
                )));
            }
        }

        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let bc1 = T::from_f64(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.eps));

        for ((value, grad), (m, v)) in values
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let theta = value.data_mut();
            for (((th, &g), mi), vi) in theta
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *th -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
