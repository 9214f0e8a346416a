//! Adam with bias correction. Gaussian moments are shaped exactly like the
//! Gaussians; only Gaussians that were rendered in an iteration are stepped,
//! each with its own step counter.

use serde::{Deserialize, Serialize};

use crate::gaussian::{Gaussian4D, ParamGroup};
use crate::scalar::Scalar;

use super::LearningRates;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

/// One bias-corrected Adam update of a scalar; `step` counts from 1.
#[inline]
pub fn adam_scalar<T: Scalar>(p: &mut T, g: T, m: &mut T, v: &mut T, step: u64, lr: T, hp: &AdamParams) {
    let b1 = T::of(hp.beta1);
    let b2 = T::of(hp.beta2);
    *m = b1 * *m + (T::one() - b1) * g;
    *v = b2 * *v + (T::one() - b2) * g * g;
    let c1 = T::one() - T::of(hp.beta1.powi(step as i32));
    let c2 = T::one() - T::of(hp.beta2.powi(step as i32));
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= lr * m_hat / (v_hat.sqrt() + T::of(hp.eps));
}

/// Moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatAdam<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> FlatAdam<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0 }
    }

    /// `adam_step`: updates `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64, hp: &AdamParams) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
        assert_eq!(params.len(), self.m.len(), "parameter/moment length mismatch");
        self.step += 1;
        let lr = T::of(lr);
        for i in 0..params.len() {
            adam_scalar(&mut params[i], grads[i], &mut self.m[i], &mut self.v[i], self.step, lr, hp);
        }
    }
}

/// Moments for a list of Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianAdam<T> {
    pub m: Vec<Gaussian4D<T>>,
    pub v: Vec<Gaussian4D<T>>,
    pub steps: Vec<u64>,
}

impl<T: Scalar> GaussianAdam<T> {
    pub fn new(gaussians: &[Gaussian4D<T>]) -> Self {
        Self {
            m: gaussians.iter().map(|g| g.zeros_like()).collect(),
            v: gaussians.iter().map(|g| g.zeros_like()).collect(),
            steps: vec![0; gaussians.len()],
        }
    }

    /// Steps Gaussian `i` with per-group learning rates.
    pub fn step(&mut self, i: usize, g: &mut Gaussian4D<T>, grad: &Gaussian4D<T>, lr: &LearningRates, hp: &AdamParams) {
        self.steps[i] += 1;
        let step = self.steps[i];
        let (m, v) = (&mut self.m[i], &mut self.v[i]);
        let mut groups = Vec::with_capacity(g.param_count());
        grad.for_each(|group, _| groups.push(group));
        for (k, group) in groups.into_iter().enumerate() {
            let rate = T::of(lr.for_group(group));
            adam_scalar(g.param_mut(k), grad.param(k), m.param_mut(k), v.param_mut(k), step, rate, hp);
        }
    }

    /// Keeps only the entries whose flag is `true`.
    pub fn retain(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.m.retain(|_| *it.next().expect("mask length"));
        let mut it = keep.iter();
        self.v.retain(|_| *it.next().expect("mask length"));
        let mut it = keep.iter();
        self.steps.retain(|_| *it.next().expect("mask length"));
    }
}

impl LearningRates {
    pub fn for_group(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Position => self.position,
            ParamGroup::TemporalCenter => self.temporal_center,
            ParamGroup::Rotation => self.rotation,
            ParamGroup::LogScales => self.log_scales,
            ParamGroup::OpacityLogit => self.opacity_logit,
            ParamGroup::Sh => self.sh,
        }
    }
}
