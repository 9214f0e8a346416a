//! Spatio-temporal visibility: a temporal filter on `ω` followed by a
//! frustum test on the time-conditioned centers.

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{build_cov4, slice_mean, temporal_weight, Gaussian4D};
use crate::linalg::Vec3;
use crate::scalar::Scalar;

/// Sorted, duplicate-free indices into a scene of `scene_len` Gaussians.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VisibleSet {
    indices: Vec<usize>,
    scene_len: usize,
}

impl VisibleSet {
    pub fn from_sorted(indices: Vec<usize>, scene_len: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::usage("visible indices must be strictly increasing"));
        }
        if indices.last().is_some_and(|&i| i >= scene_len) {
            return Err(Error::usage("visible index out of range"));
        }
        Ok(Self { indices, scene_len })
    }

    pub fn all(scene_len: usize) -> Self {
        Self { indices: (0..scene_len).collect(), scene_len }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn scene_len(&self) -> usize {
        self.scene_len
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// `G − G_m`.
    pub fn complement(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.scene_len - self.indices.len());
        let mut it = self.indices.iter().peekable();
        for i in 0..self.scene_len {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisibilityConfig {
    /// Minimum temporal weight `ω` for a Gaussian to count as active.
    pub eps_t: f64,
    /// Extra pixels around the image accepted by the frustum test.
    pub margin: f64,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        Self { eps_t: 0.05, margin: 0.0 }
    }
}

/// Indices whose temporal weight at `t_query` is at least `eps_t`.
pub fn temporal_filter<T: Scalar>(t_query: T, scene: &[Gaussian4D<T>], eps_t: f64) -> Result<Vec<usize>> {
    let eps = T::of(eps_t);
    let mut out = Vec::new();
    for (i, g) in scene.iter().enumerate() {
        let cov = build_cov4(g)?;
        if temporal_weight(cov.temporal_variance(), g.temporal_center, t_query)? >= eps {
            out.push(i);
        }
    }
    Ok(out)
}

/// Whether a world-space center falls inside the camera frustum.
#[inline]
pub fn center_in_view<T: Scalar>(camera: &Camera, center: &Vec3<T>, margin: f64) -> bool {
    let pc = camera.to_camera(center);
    if !(pc[2] > T::of(camera.near) && pc[2] < T::of(camera.far)) {
        return false;
    }
    let [u, v] = camera.project_cam(&pc);
    let m = T::of(margin);
    u >= -m && u < T::of(camera.width as f64) + m && v >= -m && v < T::of(camera.height as f64) + m
}

/// Indices (into `means`) whose centers lie in the frustum.
pub fn view_filter<T: Scalar>(camera: &Camera, means: &[Vec3<T>], margin: f64) -> Result<Vec<usize>> {
    camera.validate()?;
    Ok(means
        .iter()
        .enumerate()
        .filter(|(_, m)| center_in_view(camera, m, margin))
        .map(|(i, _)| i)
        .collect())
}

/// `G_m = Z_V(camera, centers(t), Z_T(t, G))`.
pub fn visible_set<T: Scalar>(
    camera: &Camera,
    t_query: T,
    scene: &[Gaussian4D<T>],
    cfg: &VisibilityConfig,
) -> Result<VisibleSet> {
    let active = temporal_filter(t_query, scene, cfg.eps_t)?;
    let mut means = Vec::with_capacity(active.len());
    for &i in &active {
        let g = &scene[i];
        let cov = build_cov4(g)?;
        means.push(slice_mean(&cov, &g.position, g.temporal_center, t_query)?);
    }
    let kept = view_filter(camera, &means, cfg.margin)?;
    VisibleSet::from_sorted(kept.into_iter().map(|k| active[k]).collect(), scene.len())
}
