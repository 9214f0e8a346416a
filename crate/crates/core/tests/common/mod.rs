//! Shared generators and independent reference implementations for the
//! integration and acceptance suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod reference;
#[allow(unused_imports)]
pub use reference::{reference_render, ReferenceImage};

use splat4d::camera::Camera;
use splat4d::gaussian::Gaussian4D;
use splat4d::image::Image;
use splat4d::sh::ShConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_quat(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.2 && n <= 1.0 {
            return q.map(|v| v / n);
        }
    }
}

/// Random Gaussian inside the unit cube with moderate scales.
pub fn random_gaussian(rng: &mut impl Rng, sh: &ShConfig) -> Gaussian4D<f64> {
    let mut g = Gaussian4D::zeros(sh.coeff_count());
    g.position = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    g.temporal_center = rng.gen_range(0.0..1.0);
    g.rot_left = unit_quat(rng);
    g.rot_right = unit_quat(rng);
    for k in 0..3 {
        g.log_scales[k] = rng.gen_range(0.03f64..0.35).ln();
    }
    g.log_scales[3] = rng.gen_range(0.1f64..0.6).ln();
    g.opacity_logit = rng.gen_range(-2.0..3.0);
    for c in &mut g.sh_coeffs {
        *c = rng.gen_range(-0.4..0.4);
    }
    g
}

pub fn random_scene(rng: &mut impl Rng, n: usize, sh: &ShConfig) -> Vec<Gaussian4D<f64>> {
    (0..n).map(|_| random_gaussian(rng, sh)).collect()
}

/// Camera on a sphere of radius 3–5 around the origin, looking at it.
pub fn random_camera(rng: &mut impl Rng, size: u32) -> Camera {
    loop {
        let d: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        // keep away from the up axis so the look-at basis is well defined
        if n < 0.3 || n > 1.0 || (d[1] / n).abs() > 0.9 {
            continue;
        }
        let r = rng.gen_range(3.0..5.0);
        let eye = d.map(|v| v / n * r);
        let target: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.2..0.2));
        let fov = rng.gen_range(35.0..60.0);
        return Camera::look_at(eye, target, [0.0, 1.0, 0.0], fov, size, size, 0.1, 100.0).expect("valid camera");
    }
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> Image<f64> {
    Image::from_data(w, h, (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------------------
// Exact conditional Gaussian
// ---------------------------------------------------------------------------

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn f(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

/// Conditional mean and covariance of a 4D Gaussian at time `t`, evaluated in
/// exact rational arithmetic from the (exactly representable) f64 inputs and
/// rounded once at the end.
pub fn schur_oracle(cov: &[[f64; 4]; 4], position: &[f64; 3], mu_t: f64, t: f64) -> ([f64; 3], [[f64; 3]; 3]) {
    let c: Vec<Vec<BigRational>> = cov.iter().map(|row| row.iter().map(|&v| q(v)).collect()).collect();
    let c44 = c[3][3].clone();
    assert!(!c44.is_zero());
    let dt = q(t) - q(mu_t);
    let mean = std::array::from_fn(|i| f(&(q(position[i]) + &c[i][3] * &dt / &c44)));
    let cov3 = std::array::from_fn(|i| std::array::from_fn(|j| f(&(&c[i][j] - &c[i][3] * &c[3][j] / &c44))));
    (mean, cov3)
}

/// `Σ = M Mᵀ` with `M = R · diag(s)` in exact arithmetic, given `R`'s f64
/// entries.
pub fn exact_cov4(rotation: &[[f64; 4]; 4], scales: &[f64; 4]) -> [[f64; 4]; 4] {
    let m: Vec<Vec<BigRational>> =
        (0..4).map(|i| (0..4).map(|j| q(rotation[i][j]) * q(scales[j])).collect()).collect();
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut s = BigRational::from_integer(BigInt::from(0));
            for k in 0..4 {
                s += &m[i][k] * &m[j][k];
            }
            f(&s)
        })
    })
}

/// Hamilton product of quaternions stored as `(w, x, y, z)`.
pub fn hamilton(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    let [a0, a1, a2, a3] = *a;
    let [b0, b1, b2, b3] = *b;
    [
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ]
}

/// The 4D rotation `x ↦ q_l ⊗ x ⊗ q_r` of unit quaternions, built column by
/// column from basis quaternions.
pub fn rotation_oracle(q_l: &[f64; 4], q_r: &[f64; 4]) -> [[f64; 4]; 4] {
    let nl = q_l.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nr = q_r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let l = q_l.map(|v| v / nl);
    let r = q_r.map(|v| v / nr);
    let mut m = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        let col = hamilton(&hamilton(&l, &e), &r);
        for i in 0..4 {
            m[i][j] = col[i];
        }
    }
    m
}

pub fn matmul4(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum()))
}

// ---------------------------------------------------------------------------
// Reference SSIM
// ---------------------------------------------------------------------------

/// Direct (non-separable) SSIM: a 2D 11×11 Gaussian window (σ = 1.5)
/// normalized as a whole, two-pass central moments at every valid window
/// position, averaged over positions and channels.
pub fn reference_ssim(a: &Image<f64>, b: &Image<f64>, data_range: f64) -> f64 {
    const N: usize = 11;
    const SIGMA: f64 = 1.5;
    let c1 = (0.01 * data_range) * (0.01 * data_range);
    let c2 = (0.03 * data_range) * (0.03 * data_range);
    let mut w = [[0.0f64; N]; N];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * SIGMA * SIGMA)).exp();
            total += *v;
        }
    }
    for row in &mut w {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let (width, height) = (a.width, a.height);
    let mut sum = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for y0 in 0..=height - N {
            for x0 in 0..=width - N {
                let px = |img: &Image<f64>, i: usize, j: usize| img.data[3 * ((y0 + i) * width + x0 + j) + ch];
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..N {
                    for j in 0..N {
                        mx += w[i][j] * px(a, i, j);
                        my += w[i][j] * px(b, i, j);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..N {
                    for j in 0..N {
                        let dx = px(a, i, j) - mx;
                        let dy = px(b, i, j) - my;
                        vx += w[i][j] * dx * dx;
                        vy += w[i][j] * dy * dy;
                        cxy += w[i][j] * dx * dy;
                    }
                }
                sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    sum / count as f64
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Real spherical harmonics
// ---------------------------------------------------------------------------

/// Associated Legendre `P_l^m(x)` for `m ≥ 0` without the Condon–Shortley
/// phase, by the standard upward recurrence in `l`.
pub fn legendre(l: usize, m: usize, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 0..m {
        pmm *= (2 * k + 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pl = 0.0;
    for ll in (m + 2)..=l {
        pl = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = pl;
    }
    pl
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Real orthonormal `Y_lm(θ, φ)` from its textbook definition.
pub fn y_oracle(l: usize, m: i32, theta: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs() as usize;
    let k = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt();
    let p = legendre(l, am, theta.cos());
    match m {
        0 => k * p,
        m if m > 0 => 2f64.sqrt() * k * p * (m as f64 * phi).cos(),
        _ => 2f64.sqrt() * k * p * (am as f64 * phi).sin(),
    }
}
