//! Photometric training loss `(1 − λ) L1 + λ DSSIM` (DSSIM at data range 1).

use crate::error::Result;
use crate::image::Image;
use crate::metrics::{dssim_from_ssim, ssim_with_grad};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    /// Mean absolute error over pixels and channels.
    pub l1: f64,
    pub dssim: f64,
}

/// Loss terms and `∂loss/∂render`. With `halved`, DSSIM is `(1 − SSIM)/2`.
pub fn photometric_loss<T: Scalar>(
    render: &Image<T>,
    gt: &Image<T>,
    lambda: f64,
    halved: bool,
) -> Result<(LossTerms, Image<T>)> {
    render.ensure_same_shape(gt)?;
    let n = render.data.len() as f64;
    let mut l1 = 0.0;
    let mut grad = Vec::with_capacity(render.data.len());
    for (r, g) in render.data.iter().zip(&gt.data) {
        let d = r.to_f64_lossless() - g.to_f64_lossless();
        l1 += d.abs();
        let s = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.push((1.0 - lambda) * s / n);
    }
    l1 /= n;
    let (dssim, ssim_grad) = if lambda != 0.0 {
        let (s, g) = ssim_with_grad(render, gt, 1.0)?;
        (dssim_from_ssim(s, halved), g)
    } else {
        (dssim_from_ssim(crate::metrics::ssim(render, gt, 1.0)?, halved), Vec::new())
    };
    if lambda != 0.0 {
        let scale = if halved { -0.5 } else { -1.0 } * lambda;
        for (a, b) in grad.iter_mut().zip(&ssim_grad) {
            *a += scale * b;
        }
    }
    let total = (1.0 - lambda) * l1 + lambda * dssim;
    let grad = Image::from_data(render.width, render.height, grad.into_iter().map(T::of).collect())?;
    Ok((LossTerms { total, l1, dssim }, grad))
}
