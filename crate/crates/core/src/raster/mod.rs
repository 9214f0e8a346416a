//! Differentiable tile-based splatting.
//!
//! Pipeline per view and time: visibility gating, temporal slicing, color
//! evaluation, decay selection, opacity modulation, perspective projection,
//! a global depth sort, 16×16 tile binning and front-to-back compositing.
//! The backward pass recomputes each pixel's contributors back to front from
//! the stored final transmittance.

mod backward;
mod forward;
mod oracle;
mod prepare;
mod project;

use serde::{Deserialize, Serialize};

use crate::decaynet::{DecayNet, DecayPolicy};
use crate::gaussian::Gaussian4D;
use crate::image::Image;
use crate::sh::ShConfig;
use crate::visibility::{VisibilityConfig, VisibleSet};

pub use backward::render_backward;
pub use forward::render_forward;
pub use oracle::oracle_render;
pub use prepare::Prepared;
pub use project::{project, project_backward, Projection, Splat2D};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Per-splat alpha clamp.
    pub alpha_max: f64,
    /// Splats with alpha below this contribute nothing to a pixel.
    pub alpha_min: f64,
    /// Compositing stops before transmittance would drop below this.
    pub transmittance_min: f64,
    /// Added to the diagonal of every projected covariance (pixels²).
    pub lowpass: f64,
    /// Footprint radius in standard deviations (Mahalanobis distance).
    pub extent_sigma: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            transmittance_min: 1e-4,
            lowpass: 0.3,
            extent_sigma: 3.0,
        }
    }
}

/// Which Gaussians enter the render.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gating {
    /// Spatio-temporal visibility detection; only `G_m` is rendered.
    Visibility(VisibilityConfig),
    /// Every Gaussian whose center depth lies in `(near, far)`.
    AllProjectable,
}

impl Default for Gating {
    fn default() -> Self {
        Gating::Visibility(VisibilityConfig::default())
    }
}

/// How the decay factor `τ` enters the opacity of rendered Gaussians.
#[derive(Clone, Copy, Debug)]
pub enum DecayStage<'a, T> {
    /// Plain temporal opacity `ω · o`, no `τ` at all.
    Baseline,
    /// Closed-form variant (`none` gives `τ ≡ 1`).
    Fixed(DecayPolicy),
    /// `τ` from the decay network.
    Neural(&'a DecayNet<T>),
}

impl<T> DecayStage<'_, T> {
    pub fn is_neural(&self) -> bool {
        matches!(self, DecayStage::Neural(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub raster: RasterConfig,
    pub gating: Gating,
    pub sh: ShConfig,
    pub background: [f64; 3],
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            raster: RasterConfig::default(),
            gating: Gating::default(),
            sh: ShConfig::default(),
            background: [0.0; 3],
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput<T> {
    pub color: Image<T>,
    /// `1 − T_final` per pixel.
    pub alpha: Vec<T>,
    /// Alpha-normalized expected depth per pixel (0 where nothing was hit).
    pub depth: Vec<T>,
    /// Number of pixels each scene Gaussian contributed to.
    pub contributions: Vec<u32>,
    /// The Gaussians that entered the render.
    pub rendered: VisibleSet,
}

/// Forward state consumed by [`render_backward`].
#[derive(Clone, Debug)]
pub struct RenderCache<T> {
    pub(crate) prepared: Vec<Prepared<T>>,
    /// Global compositing order (indices into `prepared`).
    pub(crate) order: Vec<usize>,
    pub(crate) tiles: Vec<Vec<u32>>,
    pub(crate) final_t: Vec<T>,
    pub(crate) last: Vec<u32>,
    pub(crate) camera: crate::camera::Camera,
    pub(crate) t_query: T,
    pub(crate) settings: RenderSettings,
    pub(crate) fingerprint: u64,
    pub(crate) scene_len: usize,
}

impl<T> RenderCache<T> {
    pub fn prepared(&self) -> &[Prepared<T>] {
        &self.prepared
    }

    /// Rendered Gaussians' scene indices, front to back.
    pub fn depth_order(&self) -> Vec<usize> {
        self.order.iter().map(|&k| self.prepared[k].index).collect()
    }
}

/// Gradients of a scalar image loss.
#[derive(Clone, Debug)]
pub struct RenderGrads<T> {
    /// One entry per scene Gaussian; zero for Gaussians that were not rendered.
    pub gaussians: Vec<Gaussian4D<T>>,
    /// Decay-network gradients (all zeros unless the stage is neural).
    pub net: Vec<T>,
    /// `∂L/∂τ` for each rendered Gaussian, by scene index.
    pub d_tau: Vec<(usize, T)>,
}

/// Bit-level fingerprint of every parameter, used to detect stale caches.
pub(crate) fn scene_fingerprint<T: crate::scalar::Scalar>(scene: &[Gaussian4D<T>]) -> u64 {
    use std::hash::{DefaultHasher, Hasher};
    let mut h = DefaultHasher::new();
    h.write_usize(scene.len());
    for g in scene {
        g.for_each(|_, v| h.write_u64(v.to_f64_lossless().to_bits()));
    }
    h.finish()
}

/// Tile/oracle shared per-pixel evaluation of one splat.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PixelHit<T> {
    pub alpha: T,
    pub dx: T,
    pub dy: T,
    /// `alpha` came from the `alpha_max` clamp.
    pub clamped: bool,
}

#[inline]
pub(crate) fn eval_splat<T: crate::scalar::Scalar>(
    s: &Splat2D<T>,
    px: T,
    py: T,
    extent2: T,
    alpha_max: T,
    alpha_min: T,
) -> Option<PixelHit<T>> {
    let dx = px - s.mean2[0];
    let dy = py - s.mean2[1];
    let [a, b, c] = s.conic;
    let maha = a * dx * dx + T::two() * b * dx * dy + c * dy * dy;
    if !(maha <= extent2) {
        return None;
    }
    let raw = s.alpha_base * (-T::half() * maha).exp();
    let clamped = raw > alpha_max;
    let alpha = if clamped { alpha_max } else { raw };
    if alpha < alpha_min {
        return None;
    }
    Some(PixelHit { alpha, dx, dy, clamped })
}

/// Global compositing order: depth, then position bits, then a content hash.
/// Storage order only matters for exact duplicates.
pub(crate) fn sort_key_cmp<T: crate::scalar::Scalar>(a: &Prepared<T>, b: &Prepared<T>) -> std::cmp::Ordering {
    let da = a.splat.depth.to_f64_lossless();
    let db = b.splat.depth.to_f64_lossless();
    da.total_cmp(&db)
        .then_with(|| {
            let pa = a.position_bits();
            let pb = b.position_bits();
            pa.cmp(&pb)
        })
        .then_with(|| a.content_hash.cmp(&b.content_hash))
        .then_with(|| a.index.cmp(&b.index))
}

impl<T: crate::scalar::Scalar> RenderCache<T> {
    /// Smallest relative distance, over every (pixel, rendered splat) pair,
    /// from a non-differentiable point of the compositing rule: the footprint
    /// edge, the alpha floor and clamp, and the color clamp. Finite-difference
    /// checks are only meaningful when this comfortably exceeds the step.
    pub fn kink_margin(&self) -> f64 {
        let rc = &self.settings.raster;
        let extent2 = rc.extent_sigma * rc.extent_sigma;
        let mut margin = f64::INFINITY;
        for p in &self.prepared {
            for raw in p.raw_color {
                let v = raw.to_f64_lossless() + 0.5;
                margin = margin.min(v.abs()).min((v - 1.0).abs());
            }
        }
        for y in 0..self.camera.height {
            for x in 0..self.camera.width {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                for p in &self.prepared {
                    let s = &p.splat;
                    let dx = px - s.mean2[0].to_f64_lossless();
                    let dy = py - s.mean2[1].to_f64_lossless();
                    let [a, b, c] = s.conic.map(|v| v.to_f64_lossless());
                    let maha = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
                    margin = margin.min((maha - extent2).abs() / extent2);
                    if maha <= extent2 {
                        let alpha = s.alpha_base.to_f64_lossless() * (-0.5 * maha).exp();
                        margin = margin
                            .min((alpha - rc.alpha_min).abs() / rc.alpha_min)
                            .min((alpha - rc.alpha_max).abs() / rc.alpha_max);
                    }
                }
            }
        }
        margin
    }
}
