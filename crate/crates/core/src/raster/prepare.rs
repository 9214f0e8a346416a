use std::hash::{DefaultHasher, Hasher};

use crate::camera::Camera;
use crate::decaynet::{decay_backward, variant_tau_with_grad, DecayInput, DecayTrace, INPUT_DIM};
use crate::error::{Error, Result};
use crate::gaussian::{slice_backward, slice_with, Gaussian4D, GeometryTrace, SliceGrad, SlicedGaussian};
use crate::linalg::{self, Vec3};
use crate::scalar::{sigmoid, Scalar};
use crate::sh::{activate, color_backward, raw_color};
use crate::visibility::{visible_set, VisibleSet};

use super::project::{conic_backward, conic_of, project, project_backward, Projection, Splat2D};
use super::{DecayStage, Gating, RenderSettings};

/// A rendered Gaussian with every forward intermediate its backward needs.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    pub index: usize,
    pub sliced: SlicedGaussian<T>,
    pub opacity: T,
    pub tau: T,
    pub splat: Splat2D<T>,
    pub(crate) trace: GeometryTrace<T>,
    pub(crate) proj: Projection<T>,
    pub(crate) unit_dir: Vec3<T>,
    pub(crate) dir_norm: T,
    pub(crate) raw_color: [T; 3],
    pub(crate) dtau_do: T,
    pub(crate) decay: Option<DecayTrace<T>>,
    pub(crate) content_hash: u64,
    trace_position: Vec3<T>,
}

impl<T: Scalar> Prepared<T> {
    pub(crate) fn position_bits(&self) -> [u64; 3] {
        self.trace_position.map(|v| v.to_f64_lossless().to_bits())
    }
}

/// Per-splat screen-space gradients accumulated over pixels.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SplatGrad<T> {
    pub mean2: [T; 2],
    pub conic: [T; 3],
    pub color: [T; 3],
    pub alpha_base: T,
}

impl<T: Scalar> SplatGrad<T> {
    pub fn add(&mut self, o: &Self) {
        for i in 0..2 {
            self.mean2[i] += o.mean2[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.alpha_base += o.alpha_base;
    }
}

pub(crate) fn check_finite<T: Scalar>(scene: &[Gaussian4D<T>]) -> Result<()> {
    for (index, g) in scene.iter().enumerate() {
        if let Some(field) = g.first_non_finite() {
            return Err(Error::NonFinite { index, field });
        }
    }
    Ok(())
}

/// Indices of the Gaussians that enter the render.
pub(crate) fn render_set<T: Scalar>(
    scene: &[Gaussian4D<T>],
    camera: &Camera,
    t_query: T,
    gating: &Gating,
) -> Result<VisibleSet> {
    match gating {
        Gating::Visibility(cfg) => visible_set(camera, t_query, scene, cfg),
        Gating::AllProjectable => {
            camera.validate()?;
            let mut keep = Vec::new();
            for (i, g) in scene.iter().enumerate() {
                let tr = GeometryTrace::new(g)?;
                let m = crate::gaussian::slice_mean(&tr.cov4, &g.position, g.temporal_center, t_query)?;
                let z = camera.to_camera(&m)[2];
                if z > T::of(camera.near) && z < T::of(camera.far) {
                    keep.push(i);
                }
            }
            VisibleSet::from_sorted(keep, scene.len())
        }
    }
}

fn content_hash<T: Scalar>(g: &Gaussian4D<T>) -> u64 {
    let mut h = DefaultHasher::new();
    g.for_each(|_, v| h.write_u64(v.to_f64_lossless().to_bits()));
    h.finish()
}

pub(crate) fn prepare<T: Scalar>(
    g: &Gaussian4D<T>,
    index: usize,
    camera: &Camera,
    t_query: T,
    stage: &DecayStage<'_, T>,
    settings: &RenderSettings,
) -> Result<Option<Prepared<T>>> {
    let trace = GeometryTrace::new(g)?;
    let sliced = slice_with(&trace.cov4, g, t_query)?;
    let proj = project(camera, &sliced.mean3, &sliced.cov3, T::of(settings.raster.lowpass))?;
    let Some(conic) = conic_of(&proj.cov2) else {
        return Ok(None);
    };
    let dir = linalg::sub(&sliced.mean3, &camera.center::<T>());
    let (unit_dir, dir_norm) = linalg::normalize(&dir);
    let raw = raw_color(&g.sh_coeffs, t_query, &unit_dir, &settings.sh)?;
    let opacity = sigmoid(g.opacity_logit);
    let omega = sliced.temporal_weight;

    let (tau, dtau_do, decay, alpha_base) = match stage {
        DecayStage::Baseline => (T::one(), T::zero(), None, omega * opacity),
        DecayStage::Fixed(policy) => {
            let (tau, d) = variant_tau_with_grad(policy, opacity);
            (tau, d, None, tau * omega * opacity)
        }
        DecayStage::Neural(net) => {
            let input = DecayInput::assemble(&g.position, opacity, &trace.unit_left, &trace.unit_right, &net.bounds);
            let tr = net.trace(&input)?;
            let tau = tr.tau;
            (tau, T::zero(), Some(tr), tau * omega * opacity)
        }
    };

    let radius = T::of(settings.raster.extent_sigma) * linalg::sym2_max_eigen(&proj.cov2).sqrt();
    let splat = Splat2D {
        mean2: proj.mean2,
        cov2: proj.cov2,
        conic,
        depth: proj.depth,
        color: raw.map(activate),
        alpha_base,
        radius,
    };
    Ok(Some(Prepared {
        index,
        sliced,
        opacity,
        tau,
        splat,
        trace_position: g.position,
        trace,
        proj,
        unit_dir,
        dir_norm,
        raw_color: raw,
        dtau_do,
        decay,
        content_hash: content_hash(g),
    }))
}

/// Chains screen-space gradients back to the Gaussian's parameters
/// (accumulated into `out`) and, for the neural stage, into `net_grad`.
/// Returns `∂L/∂τ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn prepared_backward<T: Scalar>(
    p: &Prepared<T>,
    g: &Gaussian4D<T>,
    camera: &Camera,
    t_query: T,
    stage: &DecayStage<'_, T>,
    settings: &RenderSettings,
    sg: &SplatGrad<T>,
    out: &mut Gaussian4D<T>,
    net_grad: &mut [T],
) -> Result<T> {
    let omega = p.sliced.temporal_weight;
    let o = p.opacity;
    let g_ab = sg.alpha_base;

    let (g_tau, g_omega, mut g_o) = match stage {
        DecayStage::Baseline => (T::zero(), g_ab * o, g_ab * omega),
        _ => (g_ab * omega * o, g_ab * p.tau * o, g_ab * p.tau * omega),
    };

    match stage {
        DecayStage::Baseline => {}
        DecayStage::Fixed(_) => g_o += g_tau * p.dtau_do,
        DecayStage::Neural(net) => {
            let tr = p
                .decay
                .as_ref()
                .ok_or_else(|| Error::usage("neural decay stage without cached activations"))?;
            let input = tr.input;
            let gin: [T; INPUT_DIM] = decay_backward(net, tr, &input, g_tau, net_grad)?;
            let sc = net.bounds.normalize_scale::<T>();
            for i in 0..3 {
                out.position[i] += gin[i] * sc[i];
            }
            g_o += gin[3];
            let gl = [gin[4], gin[5], gin[6], gin[7]];
            let gr = [gin[8], gin[9], gin[10], gin[11]];
            p.trace.backward_unit_quats(&gl, &gr, out);
        }
    }
    out.opacity_logit += g_o * o * (T::one() - o);

    let g_unit = color_backward(
        &g.sh_coeffs,
        t_query,
        &p.unit_dir,
        &settings.sh,
        &p.raw_color,
        &sg.color,
        &mut out.sh_coeffs,
    );
    let g_dir = linalg::normalize_backward(&p.unit_dir, p.dir_norm, &g_unit);

    let g_cov2 = conic_backward(&p.splat.cov2, &sg.conic);
    let (g_mean3, g_cov3) = project_backward(camera, &p.proj, &p.sliced.cov3, &sg.mean2, &g_cov2);

    let up = SliceGrad { mean3: linalg::add(&g_mean3, &g_dir), cov3: g_cov3, temporal_weight: g_omega };
    slice_backward(&p.trace, g, t_query, &up, out);
    Ok(g_tau)
}
