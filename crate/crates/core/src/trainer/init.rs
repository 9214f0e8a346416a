//! Training initialization from a ground-truth scene: position noise,
//! opacity reset and uniformly scattered distractor Gaussians.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bounds::Aabb;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian4D;
use crate::scalar::logit;
use crate::sh::consts::C0;
use crate::sh::ShConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Standard deviation of the position noise as a fraction of the AABB
    /// extent along each axis.
    pub position_noise: f64,
    /// Opacity every Gaussian starts from.
    pub opacity_reset: f64,
    /// Distractor count as a fraction of the ground-truth count.
    pub distractor_fraction: f64,
    /// Spatial standard deviation of distractors (world units).
    pub distractor_sigma: f64,
    /// Temporal standard deviation of distractors (normalized time).
    pub distractor_sigma_t: f64,
    /// Start from the exact ground-truth parameters: no noise, no opacity
    /// reset, no distractors.
    pub exact: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            position_noise: 0.05,
            opacity_reset: 0.1,
            distractor_fraction: 0.25,
            distractor_sigma: 0.09,
            distractor_sigma_t: 0.25,
            exact: false,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.position_noise >= 0.0 && self.distractor_fraction >= 0.0) {
            return Err(Error::invalid("noise and distractor fraction must be non-negative"));
        }
        if !(self.opacity_reset > 0.0 && self.opacity_reset < 1.0) {
            return Err(Error::invalid("opacity_reset must lie in (0, 1)"));
        }
        if !(self.distractor_sigma > 0.0 && self.distractor_sigma_t > 0.0) {
            return Err(Error::invalid("distractor scales must be positive"));
        }
        Ok(())
    }
}

/// Returns the initial Gaussians and their distractor tags.
pub fn init_from_gt<R: Rng>(
    gt: &[Gaussian4D<f64>],
    aabb: &Aabb,
    sh: &ShConfig,
    cfg: &InitConfig,
    rng: &mut R,
) -> Result<(Vec<Gaussian4D<f64>>, Vec<bool>)> {
    cfg.validate()?;
    if cfg.exact {
        return Ok((gt.to_vec(), vec![false; gt.len()]));
    }
    let extent = aabb.extent();
    let reset = logit(cfg.opacity_reset);
    let mut out = Vec::with_capacity(gt.len());
    for g in gt {
        let mut g = g.clone();
        for (i, p) in g.position.iter_mut().enumerate() {
            let sd = cfg.position_noise * extent[i];
            if sd > 0.0 {
                *p += Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?.sample(rng);
            }
        }
        g.opacity_logit = reset;
        out.push(g);
    }
    let mut tags = vec![false; out.len()];
    let n_distractors = (cfg.distractor_fraction * gt.len() as f64).round() as usize;
    for _ in 0..n_distractors {
        let mut d = Gaussian4D::zeros(sh.coeff_count());
        d.position = std::array::from_fn(|i| rng.gen_range(aabb.min[i]..aabb.max[i]));
        d.temporal_center = rng.gen_range(0.0..1.0);
        d.rot_left = [1.0, 0.0, 0.0, 0.0];
        d.rot_right = [1.0, 0.0, 0.0, 0.0];
        let ls = cfg.distractor_sigma.ln();
        d.log_scales = [ls, ls, ls, cfg.distractor_sigma_t.ln()];
        d.opacity_logit = reset;
        for c in 0..3 {
            let color: f64 = rng.gen_range(0.0..1.0);
            d.sh_coeffs[sh.index(c, 0, 0, 0)] = (color - 0.5) / C0;
        }
        out.push(d);
        tags.push(true);
    }
    Ok((out, tags))
}
