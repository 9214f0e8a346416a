//! Straightforward per-pixel renderer written from the model definition:
//! dense 4×4 covariance, conditional Gaussian by the Schur complement,
//! first-order perspective projection, textbook spherical harmonics and
//! front-to-back compositing over every Gaussian at every pixel.

use std::f64::consts::PI;

use splat4d::camera::Camera;
use splat4d::gaussian::Gaussian4D;
use splat4d::raster::{Gating, RenderSettings};

use super::{rotation_oracle, y_oracle};

pub struct ReferenceImage {
    pub width: usize,
    pub height: usize,
    pub color: Vec<f64>,
    pub alpha: Vec<f64>,
}

struct Splat {
    mean: [f64; 2],
    conic: [f64; 3],
    depth: f64,
    color: [f64; 3],
    opacity: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `tau(i, opacity)` gives the decay factor of scene Gaussian `i`, or `None`
/// for the undecayed temporal opacity.
pub fn reference_render(
    scene: &[Gaussian4D<f64>],
    camera: &Camera,
    t: f64,
    settings: &RenderSettings,
    tau: impl Fn(usize, f64) -> Option<f64>,
) -> ReferenceImage {
    let w = camera.world_to_camera;
    let rot = [[w[0][0], w[0][1], w[0][2]], [w[1][0], w[1][1], w[1][2]], [w[2][0], w[2][1], w[2][2]]];
    let trans = [w[0][3], w[1][3], w[2][3]];
    let to_cam = |p: &[f64; 3]| -> [f64; 3] {
        std::array::from_fn(|i| rot[i][0] * p[0] + rot[i][1] * p[1] + rot[i][2] * p[2] + trans[i])
    };
    let eye: [f64; 3] = std::array::from_fn(|i| -(rot[0][i] * trans[0] + rot[1][i] * trans[1] + rot[2][i] * trans[2]));
    let rc = settings.raster;
    let sh = settings.sh;

    let mut splats = Vec::new();
    for (i, g) in scene.iter().enumerate() {
        let r = rotation_oracle(&g.rot_left, &g.rot_right);
        let s2: [f64; 4] = std::array::from_fn(|k| (2.0 * g.log_scales[k]).exp());
        let cov: [[f64; 4]; 4] =
            std::array::from_fn(|a| std::array::from_fn(|b| (0..4).map(|k| r[a][k] * s2[k] * r[b][k]).sum()));
        let dt = t - g.temporal_center;
        let omega = (-0.5 * dt * dt / cov[3][3]).exp();
        let mean: [f64; 3] = std::array::from_fn(|a| g.position[a] + cov[a][3] / cov[3][3] * dt);
        let cov3: [[f64; 3]; 3] =
            std::array::from_fn(|a| std::array::from_fn(|b| cov[a][b] - cov[a][3] * cov[b][3] / cov[3][3]));
        let pc = to_cam(&mean);
        let in_depth = pc[2] > camera.near && pc[2] < camera.far;
        let keep = match settings.gating {
            Gating::Visibility(v) => {
                if omega < v.eps_t || !in_depth {
                    false
                } else {
                    let u = camera.fx * pc[0] / pc[2] + camera.cx;
                    let vv = camera.fy * pc[1] / pc[2] + camera.cy;
                    let m = v.margin;
                    u >= -m && u < camera.width as f64 + m && vv >= -m && vv < camera.height as f64 + m
                }
            }
            Gating::AllProjectable => in_depth,
        };
        if !keep {
            continue;
        }
        let z = pc[2];
        let j = [[camera.fx / z, 0.0, -camera.fx * pc[0] / (z * z)], [0.0, camera.fy / z, -camera.fy * pc[1] / (z * z)]];
        let jw: [[f64; 3]; 2] = std::array::from_fn(|a| std::array::from_fn(|b| (0..3).map(|k| j[a][k] * rot[k][b]).sum()));
        let mut c2 = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..3 {
                    for l in 0..3 {
                        c2[a][b] += jw[a][k] * cov3[k][l] * jw[b][l];
                    }
                }
            }
        }
        let (ca, cb, cc) = (c2[0][0] + rc.lowpass, 0.5 * (c2[0][1] + c2[1][0]), c2[1][1] + rc.lowpass);
        let det = ca * cc - cb * cb;
        if det <= 0.0 {
            continue;
        }
        let d: [f64; 3] = std::array::from_fn(|k| mean[k] - eye[k]);
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let theta = (d[2] / n).clamp(-1.0, 1.0).acos();
        let phi = d[1].atan2(d[0]);
        let color = std::array::from_fn(|c| {
            let mut raw = 0.0;
            for nf in 0..=sh.n_fourier {
                let f = (2.0 * PI * nf as f64 * t / sh.period).cos();
                for l in 0..=sh.degree {
                    for m in -(l as i32)..=l as i32 {
                        raw += g.sh_coeffs[sh.index(c, nf, l, m)] * f * y_oracle(l, m, theta, phi);
                    }
                }
            }
            (raw + 0.5).clamp(0.0, 1.0)
        });
        let o = sigmoid(g.opacity_logit);
        let opacity = tau(i, o).unwrap_or(1.0) * omega * o;
        splats.push(Splat {
            mean: [camera.fx * pc[0] / z + camera.cx, camera.fy * pc[1] / z + camera.cy],
            conic: [cc / det, -cb / det, ca / det],
            depth: z,
            color,
            opacity,
        });
    }
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth));

    let (width, height) = (camera.width as usize, camera.height as usize);
    let mut color = vec![0.0; width * height * 3];
    let mut alpha = vec![0.0; width * height];
    let extent2 = rc.extent_sigma * rc.extent_sigma;
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut tr = 1.0;
            let mut acc = [0.0; 3];
            for s in &splats {
                let (dx, dy) = (px - s.mean[0], py - s.mean[1]);
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q > extent2 {
                    continue;
                }
                let a = (s.opacity * (-0.5 * q).exp()).min(rc.alpha_max);
                if a < rc.alpha_min {
                    continue;
                }
                if tr * (1.0 - a) < rc.transmittance_min {
                    break;
                }
                for c in 0..3 {
                    acc[c] += tr * a * s.color[c];
                }
                tr *= 1.0 - a;
            }
            let p = y * width + x;
            for c in 0..3 {
                color[3 * p + c] = acc[c] + tr * settings.background[c];
            }
            alpha[p] = 1.0 - tr;
        }
    }
    ReferenceImage { width, height, color, alpha }
}
