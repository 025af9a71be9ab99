use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, idx: usize) -> Option<&[f64]> {
        self.first.get(idx).map(Vec::as_slice)
    }

    pub fn second_moment(&self, idx: usize) -> Option<&[f64]> {
        self.second.get(idx).map(Vec::as_slice)
    }

    /// Applies one update to every trainable parameter using its `grad`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for (_, p) in params.iter() {
            if p.requires_grad && p.grad.is_none() {
                return Err(Error::MissingGrad(p.name.clone()));
            }
        }
        if self.first.len() != params.len() {
            self.first = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (idx, p) in params.iter_mut().enumerate() {
            if !p.requires_grad {
                continue;
            }
            let g = p.grad.as_ref().expect("checked above");
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            for (((x, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Scales all gradients by `max_norm / norm` when their joint L2 norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// [`clip_global_norm`] over the gradients held by a parameter store.
pub fn clip_param_grads(params: &mut ParamStore, max_norm: f64) -> f64 {
    let mut bufs: Vec<&mut [f64]> = params
        .iter_mut()
        .filter_map(|p| p.grad.as_deref_mut())
        .collect();
    clip_global_norm(&mut bufs, max_norm)
}
