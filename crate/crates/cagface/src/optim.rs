//! Adam optimizer over a parameter set.

use crate::error::{Error, Result};
use crate::graph::ParamSet;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

struct Slot<T> {
    m_w: Vec<T>,
    v_w: Vec<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
}

pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    slots: Vec<Slot<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let slots = params
            .iter()
            .map(|(_, e)| Slot {
                m_w: vec![T::zero(); e.conv.weights.len()],
                v_w: vec![T::zero(); e.conv.weights.len()],
                m_b: vec![T::zero(); e.conv.bias.len()],
                v_b: vec![T::zero(); e.conv.bias.len()],
            })
            .collect();
        Adam { config, step: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from the accumulated gradients. Frozen parameters
    /// are skipped entirely (their moments stay untouched). A non-finite
    /// gradient anywhere aborts before any parameter moves.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        for (_, e) in params.iter() {
            if !e.trainable {
                continue;
            }
            let finite = e.grad_w.iter().chain(e.grad_b.iter()).all(|g| g.is_finite());
            if !finite {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {} at optimizer step {}",
                    e.name,
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        // bias-corrected step size, folded into one scalar
        let corr = c.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let (b1, b2) = (T::of_f64(c.beta1), T::of_f64(c.beta2));
        let (nb1, nb2) = (T::of_f64(1.0 - c.beta1), T::of_f64(1.0 - c.beta2));
        let alpha = T::of_f64(corr);
        let eps = T::of_f64(c.eps);

        for ((_, e), slot) in params.iter_mut().zip(self.slots.iter_mut()) {
            if !e.trainable {
                continue;
            }
            update(&mut e.conv.weights, &e.grad_w, &mut slot.m_w, &mut slot.v_w, b1, b2, nb1, nb2, alpha, eps);
            update(&mut e.conv.bias, &e.grad_b, &mut slot.m_b, &mut slot.v_b, b1, b2, nb1, nb2, alpha, eps);
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update<T: Scalar>(
    p: &mut [T],
    g: &[T],
    m: &mut [T],
    v: &mut [T],
    b1: T,
    b2: T,
    nb1: T,
    nb2: T,
    alpha: T,
    eps: T,
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + nb1 * g[i];
        v[i] = b2 * v[i] + nb2 * g[i] * g[i];
        p[i] = p[i] - alpha * m[i] / (v[i].sqrt() + eps);
    }
}
