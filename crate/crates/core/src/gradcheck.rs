//! Finite-difference verification of every hand-written backward pass.
//!
//! Each suite builds a small seeded problem in `f64`, evaluates a scalar
//! objective, and compares the analytic gradient with central differences.
//! An entry passes when `|a − n| ≤ abs_floor` or
//! `|a − n| / max(|a|, |n|) < rel_tol`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::Aabb;
use crate::camera::Camera;
use crate::decaynet::{decay_backward, DecayInput, DecayNet, DecayPolicy, DecayVariant, INPUT_DIM, PARAM_COUNT};
use crate::error::Result;
use crate::gaussian::{Gaussian4D, ParamGroup};
use crate::image::Image;
use crate::loss::photometric_loss;
use crate::raster::{render_backward, render_forward, DecayStage, RenderSettings};
use crate::sh::ShConfig;

pub const FD_STEP: f64 = 1e-5;
pub const RENDER_REL_TOL: f64 = 1e-3;
pub const DECAYNET_REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;
/// Scenes are resampled until no pixel sits this close (relatively) to a
/// compositing kink.
const MIN_KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassResult {
    pub class: String,
    pub count: usize,
    /// Largest relative error among entries whose gradient magnitude exceeds
    /// the absolute floor (entries below it cannot fail).
    pub max_rel: f64,
    pub max_abs: f64,
    /// Largest `|numeric|`, to show the check is not vacuous.
    pub max_magnitude: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub suite: String,
    pub classes: Vec<ClassResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.classes.iter().all(|c| c.failures == 0 && c.count > 0)
    }

    pub fn max_rel(&self) -> f64 {
        self.classes.iter().map(|c| c.max_rel).fold(0.0, f64::max)
    }
}

struct Accumulator {
    rel_tol: f64,
    classes: Vec<ClassResult>,
}

impl Accumulator {
    fn new(rel_tol: f64) -> Self {
        Self { rel_tol, classes: Vec::new() }
    }

    fn push(&mut self, class: &str, analytic: f64, numeric: f64) {
        let idx = match self.classes.iter().position(|c| c.class == class) {
            Some(i) => i,
            None => {
                self.classes.push(ClassResult {
                    class: class.to_string(),
                    count: 0,
                    max_rel: 0.0,
                    max_abs: 0.0,
                    max_magnitude: 0.0,
                    failures: 0,
                });
                self.classes.len() - 1
            }
        };
        let c = &mut self.classes[idx];
        c.count += 1;
        let err = (analytic - numeric).abs();
        c.max_abs = c.max_abs.max(err);
        c.max_magnitude = c.max_magnitude.max(numeric.abs());
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale > ABS_FLOOR { err / scale } else { 0.0 };
        if scale > ABS_FLOOR || !err.is_finite() {
            c.max_rel = c.max_rel.max(if err.is_finite() { rel } else { f64::INFINITY });
        }
        if !(err <= ABS_FLOOR) && !(rel < self.rel_tol) {
            c.failures += 1;
        }
    }

    fn finish(self, suite: &str) -> GradcheckReport {
        GradcheckReport { suite: suite.to_string(), classes: self.classes }
    }
}

/// Which opacity path the render suite exercises.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StageKind {
    Baseline,
    Fixed(DecayVariant),
    Neural,
}

fn unit_quat(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.2 && n <= 1.0 {
            return q.map(|v| v / n);
        }
    }
}

/// A small random Gaussian near the origin, active around `t = 0.5`.
pub fn random_gaussian(rng: &mut impl Rng, sh: &ShConfig) -> Gaussian4D<f64> {
    let mut g = Gaussian4D::zeros(sh.coeff_count());
    g.position = std::array::from_fn(|_| rng.gen_range(-0.4..0.4));
    g.temporal_center = rng.gen_range(0.4..0.6);
    // slightly off-unit quaternions exercise the normalization backward
    g.rot_left = unit_quat(rng).map(|v| v * rng.gen_range(0.8..1.2));
    g.rot_right = unit_quat(rng);
    for k in 0..3 {
        g.log_scales[k] = rng.gen_range(0.15f64..0.35).ln();
    }
    g.log_scales[3] = rng.gen_range(0.2f64..0.5).ln();
    g.opacity_logit = rng.gen_range(-0.5..1.0);
    for c in &mut g.sh_coeffs {
        *c = rng.gen_range(-0.25..0.25);
    }
    g
}

pub fn gradcheck_camera(size: u32) -> Camera {
    Camera::look_at([0.3, 0.4, 4.0], [0.0; 3], [0.0, 1.0, 0.0], 50.0, size, size, 0.1, 100.0)
        .expect("valid camera")
}

struct RenderProblem {
    scene: Vec<Gaussian4D<f64>>,
    net: DecayNet<f64>,
    weights: Image<f64>,
    camera: Camera,
    t: f64,
    settings: RenderSettings,
}

impl RenderProblem {
    fn stage<'a>(&self, kind: StageKind, net: &'a DecayNet<f64>) -> DecayStage<'a, f64> {
        match kind {
            StageKind::Baseline => DecayStage::Baseline,
            StageKind::Fixed(v) => DecayStage::Fixed(DecayPolicy::with_variant(v)),
            StageKind::Neural => DecayStage::Neural(net),
        }
    }

    fn loss(&self, scene: &[Gaussian4D<f64>], net: &DecayNet<f64>, kind: StageKind) -> Result<f64> {
        let (out, _) = render_forward(scene, &self.camera, self.t, &self.stage(kind, net), &self.settings)?;
        Ok(out.color.data.iter().zip(&self.weights.data).map(|(c, w)| c * w).sum())
    }
}

fn render_problem(seed: u64, n: usize, size: u32, kind: StageKind) -> Result<RenderProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = RenderSettings::default();
    let camera = gradcheck_camera(size);
    loop {
        let scene: Vec<_> = (0..n).map(|_| random_gaussian(&mut rng, &settings.sh)).collect();
        let mut net = DecayNet::initialized(&mut rng, Aabb::default());
        *net.output_bias_mut() = 1.0;
        let weights = Image::from_data(
            size as usize,
            size as usize,
            (0..size * size * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )?;
        let p = RenderProblem { scene, net, weights, camera: camera.clone(), t: 0.5, settings };
        let stage = p.stage(kind, &p.net);
        let (out, cache) = render_forward(&p.scene, &p.camera, p.t, &stage, &p.settings)?;
        if out.rendered.len() == n && cache.kink_margin() > MIN_KINK_MARGIN {
            return Ok(p);
        }
    }
}

fn central<F: FnMut(f64) -> Result<f64>>(x0: f64, mut f: F) -> Result<f64> {
    let h = FD_STEP;
    Ok((f(x0 + h)? - f(x0 - h)?) / (2.0 * h))
}

/// Full-render check: `L = Σ w ⊙ render` for random weights `w`, on an
/// `n`-Gaussian `size×size` view.
pub fn render_suite(seed: u64, kind: StageKind) -> Result<GradcheckReport> {
    render_suite_sized(seed, kind, 3, 16)
}

pub fn render_suite_sized(seed: u64, kind: StageKind, n: usize, size: u32) -> Result<GradcheckReport> {
    let p = render_problem(seed, n, size, kind)?;
    let stage = p.stage(kind, &p.net);
    let (_, cache) = render_forward(&p.scene, &p.camera, p.t, &stage, &p.settings)?;
    let grads = render_backward(&p.scene, &cache, &stage, &p.weights)?;

    let mut acc = Accumulator::new(RENDER_REL_TOL);
    for gi in 0..p.scene.len() {
        let mut classes = Vec::new();
        p.scene[gi].for_each(|group, _| classes.push(group));
        for (k, group) in classes.into_iter().enumerate() {
            let mut scene = p.scene.clone();
            let x0 = scene[gi].param(k);
            let numeric = central(x0, |x| {
                *scene[gi].param_mut(k) = x;
                p.loss(&scene, &p.net, kind)
            })?;
            acc.push(group.name(), grads.gaussians[gi].param(k), numeric);
        }
    }
    if kind == StageKind::Neural {
        let mut net = p.net.clone();
        for k in 0..PARAM_COUNT {
            let x0 = net.params[k];
            let numeric = central(x0, |x| {
                net.params[k] = x;
                p.loss(&p.scene, &net, kind)
            })?;
            net.params[k] = x0;
            acc.push("decay_net", grads.net[k], numeric);
        }
    }
    let name = match kind {
        StageKind::Baseline => "render/baseline".to_string(),
        StageKind::Fixed(v) => format!("render/{}", v.name()),
        StageKind::Neural => "render/neural".to_string(),
    };
    Ok(acc.finish(&name))
}

/// Decay-network check: `τ` against every parameter and every input.
pub fn decaynet_suite(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DecayNet::<f64>::initialized(&mut rng, Aabb::default());
    *net.output_bias_mut() = 0.3;
    let mut acc = Accumulator::new(DECAYNET_REL_TOL);
    for _ in 0..4 {
        let values: [f64; INPUT_DIM] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let input = DecayInput { values };
        let trace = net.trace(&input)?;
        let mut gp = vec![0.0; PARAM_COUNT];
        let gin = decay_backward(&net, &trace, &input, 1.0, &mut gp)?;
        let mut probe = net.clone();
        for k in 0..PARAM_COUNT {
            let x0 = probe.params[k];
            let numeric = central(x0, |x| {
                probe.params[k] = x;
                Ok(probe.trace(&input)?.tau)
            })?;
            probe.params[k] = x0;
            acc.push("decay_net/params", gp[k], numeric);
        }
        for k in 0..INPUT_DIM {
            let mut inp = input;
            let numeric = central(values[k], |x| {
                inp.values[k] = x;
                Ok(net.trace(&inp)?.tau)
            })?;
            acc.push("decay_net/inputs", gin[k], numeric);
        }
    }
    Ok(acc.finish("decay_net"))
}

/// Photometric-loss check: `(1−λ) L1 + λ DSSIM` against every rendered value.
pub fn loss_suite(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (16, 14);
    let gt = Image::from_data(w, h, (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect())?;
    // keep |render − gt| away from the L1 kink
    let render = Image::from_data(
        w,
        h,
        gt.data
            .iter()
            .map(|&g| g + if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.01..0.2))
            .collect(),
    )?;
    let lambda = 0.2;
    let (_, grad) = photometric_loss(&render, &gt, lambda, true)?;
    let mut acc = Accumulator::new(RENDER_REL_TOL);
    let mut probe = render.clone();
    for k in 0..render.data.len() {
        let x0 = probe.data[k];
        let numeric = central(x0, |x| {
            probe.data[k] = x;
            Ok(photometric_loss(&probe, &gt, lambda, true)?.0.total)
        })?;
        probe.data[k] = x0;
        acc.push("loss/image", grad.data[k], numeric);
    }
    Ok(acc.finish("photometric_loss"))
}

/// Every suite the command-line `gradcheck` runs.
pub fn all_suites(seed: u64) -> Result<Vec<GradcheckReport>> {
    Ok(vec![
        render_suite(seed, StageKind::Neural)?,
        render_suite(seed, StageKind::Baseline)?,
        render_suite(seed, StageKind::Fixed(DecayVariant::Pow))?,
        render_suite(seed, StageKind::Fixed(DecayVariant::Exp))?,
        decaynet_suite(seed)?,
        loss_suite(seed)?,
    ])
}

impl ParamGroup {
    /// All groups in parameter order.
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Position,
        ParamGroup::TemporalCenter,
        ParamGroup::Rotation,
        ParamGroup::LogScales,
        ParamGroup::OpacityLogit,
        ParamGroup::Sh,
    ];
}
