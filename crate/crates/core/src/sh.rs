//! Time-dependent color from 4D spherical harmonics: a tensor product of a
//! cosine Fourier series in time and real spherical harmonics in the viewing
//! direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Vec3};
use crate::scalar::Scalar;

pub const MAX_SH_DEGREE: usize = 3;
/// `(MAX_SH_DEGREE + 1)²`.
pub const MAX_SH_COEFFS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShConfig {
    /// Maximum SH degree `L`, in `0..=3`.
    pub degree: usize,
    /// Maximum Fourier order `N`.
    pub n_fourier: usize,
    /// Fourier period in normalized time.
    pub period: f64,
}

impl Default for ShConfig {
    fn default() -> Self {
        Self { degree: 1, n_fourier: 1, period: 1.0 }
    }
}

impl ShConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree > MAX_SH_DEGREE {
            return Err(Error::invalid(format!("SH degree {} exceeds {MAX_SH_DEGREE}", self.degree)));
        }
        if !(self.period > 0.0) {
            return Err(Error::invalid("Fourier period must be positive"));
        }
        Ok(())
    }

    /// `(L + 1)²`.
    #[inline]
    pub fn basis_len(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    /// Coefficients per channel: `(N + 1)(L + 1)²`.
    #[inline]
    pub fn per_channel(&self) -> usize {
        (self.n_fourier + 1) * self.basis_len()
    }

    /// Total coefficients per Gaussian: `3 (N + 1)(L + 1)²`.
    #[inline]
    pub fn coeff_count(&self) -> usize {
        3 * self.per_channel()
    }

    #[inline]
    pub fn index(&self, channel: usize, n: usize, l: usize, m: i32) -> usize {
        let lm = (l * l + l) as i32 + m;
        channel * self.per_channel() + n * self.basis_len() + lm as usize
    }

    /// `cos(2π n t / T)` for `n = 0..=N`.
    pub fn fourier_weights<T: Scalar>(&self, t: T) -> Vec<T> {
        let w = T::two() * T::PI() * t / T::of(self.period);
        (0..=self.n_fourier).map(|n| (T::of(n as f64) * w).cos()).collect()
    }
}

/// Polar angle `theta` from `+z`, azimuth `phi` from `+x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewDirection<T> {
    pub theta: T,
    pub phi: T,
}

impl<T: Scalar> ViewDirection<T> {
    pub fn from_vector(v: &Vec3<T>) -> Result<Self> {
        let n = linalg::norm(v);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::invalid("view direction must be a nonzero finite vector"));
        }
        let z = (v[2] / n).max(-T::one()).min(T::one());
        Ok(Self { theta: z.acos(), phi: v[1].atan2(v[0]) })
    }

    pub fn unit_vector(&self) -> Vec3<T> {
        let s = self.theta.sin();
        [s * self.phi.cos(), s * self.phi.sin(), self.theta.cos()]
    }
}

/// Real SH normalization constants.
pub mod consts {
    pub const C0: f64 = 0.282_094_791_773_878_14; // 1/(2√π)
    pub const C1: f64 = 0.488_602_511_902_919_9; // √(3/4π)
    pub const C2A: f64 = 1.092_548_430_592_079_2; // √(15/π)/2
    pub const C2B: f64 = 0.315_391_565_252_520_05; // √(5/π)/4
    pub const C2D: f64 = 0.546_274_215_296_039_6; // √(15/π)/4
    pub const C3E: f64 = 0.590_043_589_926_643_5; // √(35/2π)/4
    pub const C3F: f64 = 2.890_611_442_640_554; // √(105/π)/2
    pub const C3G: f64 = 0.457_045_799_464_465_8; // √(21/2π)/4
    pub const C3H: f64 = 0.373_176_332_590_115_4; // √(7/π)/4
}

/// Real orthonormal SH basis up to `degree`, indexed `l² + l + m`, evaluated
/// at a unit vector. Also returns the Euclidean gradient of each basis
/// polynomial (its homogeneous extension) for the backward pass.
pub fn sh_basis_with_grad<T: Scalar>(degree: usize, d: &Vec3<T>) -> ([T; MAX_SH_COEFFS], [Vec3<T>; MAX_SH_COEFFS]) {
    use consts::*;
    let mut y = [T::zero(); MAX_SH_COEFFS];
    let mut g = [[T::zero(); 3]; MAX_SH_COEFFS];
    let [x, yy, z] = *d;
    let k = T::of;
    y[0] = k(C0);
    if degree >= 1 {
        let c1 = k(C1);
        y[1] = c1 * yy;
        g[1] = [T::zero(), c1, T::zero()];
        y[2] = c1 * z;
        g[2] = [T::zero(), T::zero(), c1];
        y[3] = c1 * x;
        g[3] = [c1, T::zero(), T::zero()];
    }
    if degree >= 2 {
        let (a, b, dd) = (k(C2A), k(C2B), k(C2D));
        let two = T::two();
        y[4] = a * x * yy;
        g[4] = [a * yy, a * x, T::zero()];
        y[5] = a * yy * z;
        g[5] = [T::zero(), a * z, a * yy];
        y[6] = b * (two * z * z - x * x - yy * yy);
        g[6] = [-two * b * x, -two * b * yy, k(4.0) * b * z];
        y[7] = a * x * z;
        g[7] = [a * z, T::zero(), a * x];
        y[8] = dd * (x * x - yy * yy);
        g[8] = [two * dd * x, -two * dd * yy, T::zero()];
    }
    if degree >= 3 {
        let (e, f, gg, h) = (k(C3E), k(C3F), k(C3G), k(C3H));
        let (two, three, four, six) = (T::two(), k(3.0), k(4.0), k(6.0));
        let (x2, y2, z2) = (x * x, yy * yy, z * z);
        y[9] = e * yy * (three * x2 - y2);
        g[9] = [six * e * x * yy, three * e * (x2 - y2), T::zero()];
        y[10] = f * x * yy * z;
        g[10] = [f * yy * z, f * x * z, f * x * yy];
        let q = four * z2 - x2 - y2;
        y[11] = gg * yy * q;
        g[11] = [-two * gg * x * yy, gg * (q - two * y2), k(8.0) * gg * yy * z];
        y[12] = h * z * (two * z2 - three * x2 - three * y2);
        g[12] = [-six * h * x * z, -six * h * yy * z, h * (six * z2 - three * x2 - three * y2)];
        y[13] = gg * x * q;
        g[13] = [gg * (q - two * x2), -two * gg * x * yy, k(8.0) * gg * x * z];
        let hf = f * T::half();
        y[14] = hf * z * (x2 - y2);
        g[14] = [two * hf * x * z, -two * hf * yy * z, hf * (x2 - y2)];
        y[15] = e * x * (x2 - three * y2);
        g[15] = [e * (three * x2 - three * y2), -six * e * x * yy, T::zero()];
    }
    (y, g)
}

/// Real spherical harmonic `Y_lm` with orthonormal normalization.
pub fn sh_basis<T: Scalar>(l: usize, m: i32, dir: &ViewDirection<T>) -> Result<T> {
    if l > MAX_SH_DEGREE || m.unsigned_abs() as usize > l {
        return Err(Error::invalid(format!("no spherical harmonic with l={l}, m={m}")));
    }
    let (y, _) = sh_basis_with_grad(l, &dir.unit_vector());
    let idx = (l * l + l) as i32 + m;
    Ok(y[idx as usize])
}

/// Pre-activation color `Σ_{n,l,m} k · cos(2πn t/T) · Y_lm` per channel.
pub fn raw_color<T: Scalar>(coeffs: &[T], t_query: T, unit_dir: &Vec3<T>, cfg: &ShConfig) -> Result<[T; 3]> {
    if coeffs.len() != cfg.coeff_count() {
        return Err(Error::invalid(format!(
            "expected {} SH coefficients, got {}",
            cfg.coeff_count(),
            coeffs.len()
        )));
    }
    let (y, _) = sh_basis_with_grad(cfg.degree, unit_dir);
    let fw = cfg.fourier_weights(t_query);
    let nb = cfg.basis_len();
    let mut rgb = [T::zero(); 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        let base = c * cfg.per_channel();
        for (n, &w) in fw.iter().enumerate() {
            let row = &coeffs[base + n * nb..base + (n + 1) * nb];
            let mut s = T::zero();
            for (k, &yk) in row.iter().zip(&y[..nb]) {
                s += *k * yk;
            }
            *out += w * s;
        }
    }
    Ok(rgb)
}

/// `clamp(raw + 0.5, 0, 1)`.
#[inline]
pub fn activate<T: Scalar>(raw: T) -> T {
    (raw + T::half()).max(T::zero()).min(T::one())
}

/// Activated color for a view direction.
pub fn eval_color<T: Scalar>(coeffs: &[T], t_query: T, dir: &ViewDirection<T>, cfg: &ShConfig) -> Result<[T; 3]> {
    Ok(raw_color(coeffs, t_query, &dir.unit_vector(), cfg)?.map(activate))
}

/// Backward of the activated color. Accumulates coefficient gradients into
/// `grad_coeffs` and returns the gradient w.r.t. the unit direction.
pub fn color_backward<T: Scalar>(
    coeffs: &[T],
    t_query: T,
    unit_dir: &Vec3<T>,
    cfg: &ShConfig,
    raw: &[T; 3],
    grad_rgb: &[T; 3],
    grad_coeffs: &mut [T],
) -> Vec3<T> {
    let (y, gy) = sh_basis_with_grad(cfg.degree, unit_dir);
    let fw = cfg.fourier_weights(t_query);
    let nb = cfg.basis_len();
    let mut grad_dir = [T::zero(); 3];
    for c in 0..3 {
        let v = raw[c] + T::half();
        // subgradient 0 outside the clamp interval
        if !(v >= T::zero() && v <= T::one()) {
            continue;
        }
        let gc = grad_rgb[c];
        if gc == T::zero() {
            continue;
        }
        let base = c * cfg.per_channel();
        for (n, &w) in fw.iter().enumerate() {
            for k in 0..nb {
                let idx = base + n * nb + k;
                grad_coeffs[idx] += gc * w * y[k];
                let s = gc * w * coeffs[idx];
                for a in 0..3 {
                    grad_dir[a] += s * gy[k][a];
                }
            }
        }
    }
    grad_dir
}
