//! Image quality metrics: PSNR, SSIM and DSSIM.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5), `k₁ = 0.01`, `k₂ = 0.03`,
//! is evaluated at every window position that lies fully inside the image
//! and is averaged over positions and channels. All arithmetic is `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `10 log10(1 / MSE)` over all pixels and channels, capped at [`PSNR_CAP`].
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.data.is_empty() {
        return Err(Error::usage("PSNR of an empty image"));
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.to_f64_lossless() - y.to_f64_lossless();
            d * d
        })
        .sum::<f64>()
        / a.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Valid-mode separable filtering of a `w×h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * plane[y * w + x + i];
            }
            rows[y * ow + x] = s;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a `(w−10)×(h−10)` map back to `w×h`.
fn filter_valid_adjoint(map: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = map[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                rows[(y + i) * ow + x] += kv * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = rows[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += kv * v;
            }
        }
    }
    out
}

fn check_ssim_inputs<T: Scalar>(a: &Image<T>, b: &Image<T>, data_range: f64) -> Result<()> {
    a.ensure_same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::usage(format!(
            "image {}×{} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window",
            a.width, a.height
        )));
    }
    if !(data_range > 0.0) {
        return Err(Error::invalid("SSIM data range must be positive"));
    }
    Ok(())
}

/// Mean SSIM and, if requested, its gradient with respect to `a`.
fn ssim_impl<T: Scalar>(a: &Image<T>, b: &Image<T>, data_range: f64, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    check_ssim_inputs(a, b, data_range)?;
    let (w, h) = (a.width, a.height);
    let k = gaussian_window();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let npos = (w - SSIM_WINDOW + 1) * (h - SSIM_WINDOW + 1);
    let norm = 1.0 / (npos * 3) as f64;

    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; a.data.len()] } else { Vec::new() };
    for c in 0..3 {
        let x: Vec<f64> = a.channel_plane(c).iter().map(|v| v.to_f64_lossless()).collect();
        let y: Vec<f64> = b.channel_plane(c).iter().map(|v| v.to_f64_lossless()).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let mxx = filter_valid(&xx, w, h, &k);
        let myy = filter_valid(&yy, w, h, &k);
        let mxy = filter_valid(&xy, w, h, &k);

        let mut g1 = vec![0.0; npos];
        let mut g2 = vec![0.0; npos];
        let mut g3 = vec![0.0; npos];
        for i in 0..npos {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            let a1 = 2.0 * ux * uy + c1;
            let a2 = 2.0 * cxy + c2;
            let b1 = ux * ux + uy * uy + c1;
            let b2 = vx + vy + c2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let f_ux = 2.0 * uy * a2 / (b1 * b2) - s * 2.0 * ux / b1;
                let f_vx = -s / b2;
                let f_cxy = 2.0 * a1 / (b1 * b2);
                // chain through vx = E[x²] − ux², cxy = E[xy] − ux uy
                g1[i] = norm * (f_ux - 2.0 * ux * f_vx - uy * f_cxy);
                g2[i] = norm * f_vx;
                g3[i] = norm * f_cxy;
            }
        }
        if want_grad {
            let s1 = filter_valid_adjoint(&g1, w, h, &k);
            let s2 = filter_valid_adjoint(&g2, w, h, &k);
            let s3 = filter_valid_adjoint(&g3, w, h, &k);
            for p in 0..w * h {
                grad[3 * p + c] = s1[p] + 2.0 * x[p] * s2[p] + y[p] * s3[p];
            }
        }
    }
    Ok((total / (npos * 3) as f64, grad))
}

pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>, data_range: f64) -> Result<f64> {
    Ok(ssim_impl(a, b, data_range, false)?.0)
}

/// SSIM and `∂SSIM/∂a` (interleaved like the image).
pub fn ssim_with_grad<T: Scalar>(a: &Image<T>, b: &Image<T>, data_range: f64) -> Result<(f64, Vec<f64>)> {
    ssim_impl(a, b, data_range, true)
}

/// `(1 − SSIM) / 2` when `halved`, else `1 − SSIM`.
pub fn dssim<T: Scalar>(a: &Image<T>, b: &Image<T>, data_range: f64, halved: bool) -> Result<f64> {
    Ok(dssim_from_ssim(ssim(a, b, data_range)?, halved))
}

#[inline]
pub fn dssim_from_ssim(s: f64, halved: bool) -> f64 {
    if halved {
        (1.0 - s) / 2.0
    } else {
        1.0 - s
    }
}

/// Per-frame quality of one rendered image against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: String,
    pub psnr: f64,
    pub dssim1: f64,
    pub dssim2: f64,
}

impl FrameMetrics {
    pub fn compute<T: Scalar>(frame: impl Into<String>, render: &Image<T>, gt: &Image<T>, halved: bool) -> Result<Self> {
        Ok(Self {
            frame: frame.into(),
            psnr: psnr(render, gt)?,
            dssim1: dssim(render, gt, 1.0, halved)?,
            dssim2: dssim(render, gt, 2.0, halved)?,
        })
    }
}

/// Per-frame table plus the mean row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
}

impl MetricReport {
    pub fn mean(&self) -> FrameMetrics {
        let n = self.frames.len().max(1) as f64;
        let mut m = FrameMetrics { frame: "mean".into(), psnr: 0.0, dssim1: 0.0, dssim2: 0.0 };
        for f in &self.frames {
            m.psnr += f.psnr / n;
            m.dssim1 += f.dssim1 / n;
            m.dssim2 += f.dssim2 / n;
        }
        m
    }

    /// Tab-separated table: header, one row per frame, then the mean row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("frame\tpsnr_db\tdssim1\tdssim2\n");
        for f in self.frames.iter().chain(std::iter::once(&self.mean())) {
            s.push_str(&format!("{}\t{:.6}\t{:.8}\t{:.8}\n", f.frame, f.psnr, f.dssim1, f.dssim2));
        }
        s
    }
}
