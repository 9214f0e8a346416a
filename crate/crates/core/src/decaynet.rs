//! Learned opacity decay.
//!
//! A small MLP maps per-Gaussian attributes (normalized center, stored
//! opacity, both rotation quaternions) to a decay factor `τ ∈ (0, 1)` that
//! multiplies the temporally weighted opacity of visible Gaussians.
//! Invisible Gaussians instead receive a fixed factor `β`, and ablation
//! variants replace the network with hand-written functions of opacity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Aabb;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::visibility::VisibleSet;

pub const INPUT_DIM: usize = 12;
pub const HIDDEN_DIM: usize = 64;

const W1: usize = 0;
const B1: usize = W1 + HIDDEN_DIM * INPUT_DIM;
const W2: usize = B1 + HIDDEN_DIM;
const B2: usize = W2 + HIDDEN_DIM * HIDDEN_DIM;
const W3: usize = B2 + HIDDEN_DIM;
const B3: usize = W3 + HIDDEN_DIM;

/// `12·64+64 + 64·64+64 + 64+1`.
pub const PARAM_COUNT: usize = B3 + 1;

/// Output bias at initialization; `logistic(4) ≈ 0.982`.
pub const INIT_OUTPUT_BIAS: f64 = 4.0;

/// Network input: normalized position (3), stored opacity (1), unit
/// left quaternion (4), unit right quaternion (4).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayInput<T> {
    pub values: [T; INPUT_DIM],
}

impl<T: Scalar> DecayInput<T> {
    pub fn assemble(position: &[T; 3], opacity: T, unit_left: &[T; 4], unit_right: &[T; 4], bounds: &Aabb) -> Self {
        let p = bounds.normalize(position);
        let mut values = [T::zero(); INPUT_DIM];
        values[..3].copy_from_slice(&p);
        values[3] = opacity;
        values[4..8].copy_from_slice(unit_left);
        values[8..12].copy_from_slice(unit_right);
        Self { values }
    }
}

/// Dense `12 → 64 → 64 → 1` network with ReLU hidden layers and a logistic
/// output. Parameters live in one flat buffer: `W1` (row-major, out×in),
/// `b1`, `W2`, `b2`, `W3`, `b3`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayNet<T> {
    pub params: Vec<T>,
    /// Box used to normalize positions to `[-1, 1]³`.
    pub bounds: Aabb,
}

/// Forward activations needed by the backward pass.
#[derive(Clone, Debug)]
pub struct DecayTrace<T> {
    pub input: DecayInput<T>,
    h1: [T; HIDDEN_DIM],
    h2: [T; HIDDEN_DIM],
    pub tau: T,
}

impl<T: Scalar> DecayNet<T> {
    pub fn zeros(bounds: Aabb) -> Self {
        Self { params: vec![T::zero(); PARAM_COUNT], bounds }
    }

    /// Uniform `±1/√fan_in` weights, zero hidden biases, output bias
    /// [`INIT_OUTPUT_BIAS`].
    pub fn initialized<R: Rng>(rng: &mut R, bounds: Aabb) -> Self {
        let mut net = Self::zeros(bounds);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for v in &mut net.params[range] {
                *v = T::of(rng.gen_range(-a..a));
            }
        };
        fill(W1..B1, INPUT_DIM);
        fill(W2..B2, HIDDEN_DIM);
        fill(W3..B3, HIDDEN_DIM);
        net.params[B3] = T::of(INIT_OUTPUT_BIAS);
        net
    }

    pub fn output_bias_mut(&mut self) -> &mut T {
        &mut self.params[B3]
    }

    pub fn cast<U: Scalar>(&self) -> DecayNet<U> {
        DecayNet { params: self.params.iter().map(|&v| crate::scalar::cast(v)).collect(), bounds: self.bounds }
    }

    pub fn trace(&self, input: &DecayInput<T>) -> Result<DecayTrace<T>> {
        if input.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite decay-network input"));
        }
        let p = &self.params;
        let mut h1 = [T::zero(); HIDDEN_DIM];
        for (j, h) in h1.iter_mut().enumerate() {
            let row = &p[W1 + j * INPUT_DIM..W1 + (j + 1) * INPUT_DIM];
            let mut z = p[B1 + j];
            for (w, x) in row.iter().zip(&input.values) {
                z += *w * *x;
            }
            *h = z.max(T::zero());
        }
        let mut h2 = [T::zero(); HIDDEN_DIM];
        for (j, h) in h2.iter_mut().enumerate() {
            let row = &p[W2 + j * HIDDEN_DIM..W2 + (j + 1) * HIDDEN_DIM];
            let mut z = p[B2 + j];
            for (w, x) in row.iter().zip(&h1) {
                z += *w * *x;
            }
            *h = z.max(T::zero());
        }
        let mut z3 = p[B3];
        for (w, x) in p[W3..B3].iter().zip(&h2) {
            z3 += *w * *x;
        }
        Ok(DecayTrace { input: *input, h1, h2, tau: sigmoid(z3) })
    }
}

/// `τ = logistic(W3 relu(W2 relu(W1 x + b1) + b2) + b3)`.
pub fn decay_forward<T: Scalar>(net: &DecayNet<T>, input: &DecayInput<T>) -> Result<T> {
    Ok(net.trace(input)?.tau)
}

/// Reverse-mode gradients of `τ` scaled by `dl_dtau`. Parameter gradients are
/// accumulated into `grad_params`; input gradients are returned.
pub fn decay_backward<T: Scalar>(
    net: &DecayNet<T>,
    trace: &DecayTrace<T>,
    input: &DecayInput<T>,
    dl_dtau: T,
    grad_params: &mut [T],
) -> Result<[T; INPUT_DIM]> {
    if trace.input != *input {
        return Err(Error::usage("decay backward called without the matching forward activations"));
    }
    if grad_params.len() != PARAM_COUNT {
        return Err(Error::usage(format!("gradient buffer has {} entries, expected {PARAM_COUNT}", grad_params.len())));
    }
    let mut grad_in = [T::zero(); INPUT_DIM];
    if dl_dtau == T::zero() {
        return Ok(grad_in);
    }
    let p = &net.params;
    let dz3 = dl_dtau * trace.tau * (T::one() - trace.tau);
    grad_params[B3] += dz3;
    let mut dz2 = [T::zero(); HIDDEN_DIM];
    for j in 0..HIDDEN_DIM {
        grad_params[W3 + j] += dz3 * trace.h2[j];
        if trace.h2[j] > T::zero() {
            dz2[j] = dz3 * p[W3 + j];
        }
    }
    let mut dh1 = [T::zero(); HIDDEN_DIM];
    for (j, &d) in dz2.iter().enumerate() {
        if d == T::zero() {
            continue;
        }
        grad_params[B2 + j] += d;
        let base = W2 + j * HIDDEN_DIM;
        for k in 0..HIDDEN_DIM {
            grad_params[base + k] += d * trace.h1[k];
            dh1[k] += d * p[base + k];
        }
    }
    for (j, &dh) in dh1.iter().enumerate() {
        if !(trace.h1[j] > T::zero()) || dh == T::zero() {
            continue;
        }
        grad_params[B1 + j] += dh;
        let base = W1 + j * INPUT_DIM;
        for k in 0..INPUT_DIM {
            grad_params[base + k] += dh * input.values[k];
            grad_in[k] += dh * p[base + k];
        }
    }
    Ok(grad_in)
}

/// `o_eff = τ · ω · o`.
#[inline]
pub fn apply_decay<T: Scalar>(tau: T, omega: T, opacity: T) -> T {
    tau * omega * opacity
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayVariant {
    None,
    Constant,
    Pow,
    Exp,
    Neural,
}

impl DecayVariant {
    pub const ALL: [DecayVariant; 5] =
        [DecayVariant::None, DecayVariant::Constant, DecayVariant::Pow, DecayVariant::Exp, DecayVariant::Neural];

    pub fn name(self) -> &'static str {
        match self {
            DecayVariant::None => "none",
            DecayVariant::Constant => "constant",
            DecayVariant::Pow => "pow",
            DecayVariant::Exp => "exp",
            DecayVariant::Neural => "neural",
        }
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl std::str::FromStr for DecayVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown decay variant '{s}'")))
    }
}

impl std::fmt::Display for DecayVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayPolicy {
    pub variant: DecayVariant,
    pub constant_tau: f64,
    pub beta_invisible: f64,
    /// `τ = 1 − a (1 − o)^p`.
    pub pow_a: f64,
    pub pow_p: f64,
    /// `τ = 1 − a exp(−b o)`.
    pub exp_a: f64,
    pub exp_b: f64,
}

impl Default for DecayPolicy {
    fn default() -> Self {
        Self {
            variant: DecayVariant::Neural,
            constant_tau: 0.9,
            beta_invisible: 0.999,
            pow_a: 0.1,
            pow_p: 2.0,
            exp_a: 0.1,
            exp_b: 5.0,
        }
    }
}

impl DecayPolicy {
    pub fn with_variant(variant: DecayVariant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_invisible > 0.0 && self.beta_invisible <= 1.0) {
            return Err(Error::invalid("beta_invisible must lie in (0, 1]"));
        }
        if !(self.constant_tau > 0.0 && self.constant_tau <= 1.0) {
            return Err(Error::invalid("constant_tau must lie in (0, 1]"));
        }
        if !(self.pow_a >= 0.0 && self.pow_a < 1.0 && self.exp_a >= 0.0 && self.exp_a < 1.0) {
            return Err(Error::invalid("pow/exp amplitudes must lie in [0, 1)"));
        }
        if !(self.pow_p > 0.0 && self.exp_b >= 0.0) {
            return Err(Error::invalid("pow exponent must be positive and exp rate non-negative"));
        }
        Ok(())
    }
}

/// Closed-form `τ(o)` for the non-neural variants, with `dτ/do`.
/// The neural variant is not a function of `o` alone and yields `(1, 0)`.
pub fn variant_tau_with_grad<T: Scalar>(policy: &DecayPolicy, opacity: T) -> (T, T) {
    let one = T::one();
    match policy.variant {
        DecayVariant::None | DecayVariant::Neural => (one, T::zero()),
        DecayVariant::Constant => (T::of(policy.constant_tau), T::zero()),
        DecayVariant::Pow => {
            let a = T::of(policy.pow_a);
            let p = T::of(policy.pow_p);
            let u = one - opacity;
            (one - a * u.powf(p), a * p * u.powf(p - one))
        }
        DecayVariant::Exp => {
            let a = T::of(policy.exp_a);
            let b = T::of(policy.exp_b);
            let e = (-b * opacity).exp();
            (one - a * e, a * b * e)
        }
    }
}

pub fn variant_tau<T: Scalar>(policy: &DecayPolicy, opacity: T) -> T {
    variant_tau_with_grad(policy, opacity).0
}

/// Separate decay: the variant's factor for visible Gaussians, `β` for the rest.
pub fn select_tau<T: Scalar>(
    g_index: usize,
    visible: &VisibleSet,
    net: &DecayNet<T>,
    inputs: &[DecayInput<T>],
    policy: &DecayPolicy,
) -> Result<T> {
    if g_index >= visible.scene_len() || g_index >= inputs.len() {
        return Err(Error::usage(format!("Gaussian index {g_index} out of range")));
    }
    if !visible.contains(g_index) {
        return Ok(T::of(policy.beta_invisible));
    }
    match policy.variant {
        DecayVariant::Neural => decay_forward(net, &inputs[g_index]),
        _ => Ok(variant_tau(policy, inputs[g_index].values[3])),
    }
}
