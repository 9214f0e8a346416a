//! Joint optimization of the Gaussians and the decay network.
//!
//! Per iteration: sample a training frame, find the visible set, apply the
//! persistent `β` decay to every invisible Gaussian, render with the active
//! decay stage (plain temporal opacity during warm-up), take an Adam step on
//! the rendered Gaussians (and on the network once warm-up is over) and
//! periodically prune transparent Gaussians.

mod adam;
mod init;
mod model;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Aabb;
use crate::camera::Camera;
use crate::decaynet::{DecayNet, DecayPolicy, DecayVariant, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian4D;
use crate::image::Image;
use crate::io::{load_checkpoint, Checkpoint, RngState};
use crate::loss::photometric_loss;
use crate::metrics::{psnr, MetricReport};
use crate::raster::{render_backward, render_forward, DecayStage, Gating, RasterConfig, RenderSettings};
use crate::scalar::{logit, sigmoid, Scalar};
use crate::scenegen::{Dataset, Split};
use crate::sh::ShConfig;
use crate::visibility::{visible_set, VisibilityConfig};

pub use adam::{adam_scalar, AdamParams, FlatAdam, GaussianAdam};
pub use init::{init_from_gt, InitConfig};
pub use model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub temporal_center: f64,
    pub rotation: f64,
    pub log_scales: f64,
    pub opacity_logit: f64,
    pub sh: f64,
    pub decay_net: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            temporal_center: 1.6e-4,
            rotation: 1e-3,
            log_scales: 5e-3,
            opacity_logit: 5e-2,
            sh: 2.5e-3,
            decay_net: 1e-3,
        }
    }
}

impl LearningRates {
    fn all(&self) -> [f64; 7] {
        [self.position, self.temporal_center, self.rotation, self.log_scales, self.opacity_logit, self.sh, self.decay_net]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub warmup_iters: usize,
    pub lr: LearningRates,
    pub adam: AdamParams,
    /// `λ` in `(1 − λ) L1 + λ DSSIM`.
    pub loss_lambda: f64,
    pub dssim_halved: bool,
    /// Temporal visibility threshold on `ω`.
    pub eps_t: f64,
    /// Frustum margin in pixels for the center test.
    pub frustum_margin: f64,
    /// When off, every projectable Gaussian is treated as visible: the decay
    /// stage applies to all of them and no `β` decay happens.
    pub visibility_detection: bool,
    /// Variant, `β` and closed-form variant shapes.
    pub decay: DecayPolicy,
    pub prune_opacity: f64,
    pub prune_every: usize,
    /// Also commit the visible-branch `τ` to stored opacity every iteration.
    pub commit_visible_decay: bool,
    /// Hold the `β` decay until warm-up ends.
    pub beta_after_warmup: bool,
    pub rng_seed: u64,
    /// Held-out evaluation period in iterations (0 disables).
    pub eval_every: usize,
    pub init: InitConfig,
    pub raster: RasterConfig,
    pub background: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            warmup_iters: 500,
            lr: LearningRates::default(),
            adam: AdamParams::default(),
            loss_lambda: 0.2,
            dssim_halved: true,
            eps_t: 0.05,
            frustum_margin: 0.0,
            visibility_detection: true,
            decay: DecayPolicy::default(),
            prune_opacity: 0.005,
            prune_every: 500,
            commit_visible_decay: false,
            beta_after_warmup: false,
            rng_seed: 0,
            eval_every: 500,
            init: InitConfig::default(),
            raster: RasterConfig::default(),
            background: [0.0; 3],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_iters > self.iterations {
            return Err(Error::invalid(format!(
                "warmup_iters ({}) exceeds iterations ({})",
                self.warmup_iters, self.iterations
            )));
        }
        if self.lr.all().iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("all learning rates must be positive"));
        }
        if !(0.0..=1.0).contains(&self.loss_lambda) {
            return Err(Error::invalid("loss_lambda must lie in [0, 1]"));
        }
        if !(self.eps_t > 0.0 && self.eps_t < 1.0) {
            return Err(Error::invalid("eps_t must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.prune_opacity) {
            return Err(Error::invalid("prune_opacity must lie in [0, 1)"));
        }
        self.decay.validate()?;
        self.init.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn visibility(&self) -> VisibilityConfig {
        VisibilityConfig { eps_t: self.eps_t, margin: self.frustum_margin }
    }

    pub fn render_settings(&self, sh: ShConfig) -> RenderSettings {
        RenderSettings {
            raster: self.raster,
            gating: if self.visibility_detection { Gating::Visibility(self.visibility()) } else { Gating::AllProjectable },
            sh,
            background: self.background,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Per-iteration training record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
    /// Training-view PSNR of this iteration's render.
    pub psnr: f64,
    /// Size of the rendered set.
    pub visible: usize,
    pub gaussians: usize,
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Train(LossReport),
    Eval { iteration: usize, split: Split, psnr: f64, dssim1: f64, dssim2: f64 },
}

/// Stored opacity multiplied by `factor`, re-encoded as a logit.
///
/// Evaluated in `f64` and rounded once, so repeated decay of single-precision
/// parameters does not accumulate the rounding of `factor` or of the
/// intermediate opacity.
#[inline]
pub fn decay_logit<T: Scalar>(logit_value: T, factor: f64) -> T {
    T::of(logit(sigmoid(logit_value.to_f64_lossless()) * factor))
}

/// Complete optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub cfg: TrainConfig,
    pub sh: ShConfig,
    pub aabb: Aabb,
    pub gaussians: Vec<Gaussian4D<T>>,
    pub distractor: Vec<bool>,
    pub net: DecayNet<T>,
    pub adam: GaussianAdam<T>,
    pub net_adam: FlatAdam<T>,
    pub rng: ChaCha8Rng,
    /// Iterations completed.
    pub iteration: usize,
}

impl<T: Scalar> Trainer<T> {
    /// Initializes from a ground-truth scene per `cfg.init`. The decay network
    /// and all later sampling draw from the same seeded stream.
    pub fn from_ground_truth(cfg: TrainConfig, gt: &[Gaussian4D<f64>], sh: ShConfig, aabb: Aabb) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let (gaussians, distractor) = init_from_gt(gt, &aabb, &sh, &cfg.init, &mut rng)?;
        let net = DecayNet::<f64>::initialized(&mut rng, aabb).cast();
        Self::new(cfg, gaussians.iter().map(|g| g.cast()).collect(), distractor, net, sh, aabb, rng)
    }

    /// Parameters are taken as given (quaternions need not be unit length;
    /// rendering normalizes them), so an exact copy of a scene renders exactly
    /// like it.
    pub fn new(
        cfg: TrainConfig,
        gaussians: Vec<Gaussian4D<T>>,
        distractor: Vec<bool>,
        net: DecayNet<T>,
        sh: ShConfig,
        aabb: Aabb,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        sh.validate()?;
        if distractor.len() != gaussians.len() {
            return Err(Error::invalid("one distractor tag per Gaussian is required"));
        }
        if net.params.len() != PARAM_COUNT {
            return Err(Error::invalid("decay network has the wrong parameter count"));
        }
        for g in &gaussians {
            g.check_shape(&sh)?;
        }
        Ok(Self {
            adam: GaussianAdam::new(&gaussians),
            net_adam: FlatAdam::new(PARAM_COUNT),
            cfg,
            sh,
            aabb,
            gaussians,
            distractor,
            net,
            rng,
            iteration: 0,
        })
    }

    /// Loads the dataset's ground-truth scene and initializes from it.
    pub fn from_dataset(cfg: TrainConfig, dataset: &Dataset) -> Result<Self> {
        let gt = load_checkpoint(dataset.gt_scene_path())?;
        let scene: Vec<Gaussian4D<f64>> = gt.gaussians.iter().map(|g| g.cast()).collect();
        Self::from_ground_truth(cfg, &scene, gt.sh, dataset.manifest.aabb)
    }

    pub fn render_settings(&self) -> RenderSettings {
        self.cfg.render_settings(self.sh)
    }

    pub fn in_warmup(&self) -> bool {
        self.iteration < self.cfg.warmup_iters
    }

    /// Decay stage used for rendering at the current iteration.
    pub fn stage(&self) -> DecayStage<'_, T> {
        if self.in_warmup() {
            return DecayStage::Baseline;
        }
        match self.cfg.decay.variant {
            DecayVariant::Neural => DecayStage::Neural(&self.net),
            _ => DecayStage::Fixed(self.cfg.decay),
        }
    }

    /// Samples a training frame uniformly and runs one iteration on it.
    pub fn step(&mut self, dataset: &Dataset) -> Result<LossReport> {
        let train: Vec<usize> = (0..dataset.frames.len())
            .filter(|&i| dataset.frames[i].record.split == Split::Train)
            .collect();
        if train.is_empty() {
            return Err(Error::invalid("dataset has no training frames"));
        }
        let frame = &dataset.frames[train[self.rng.gen_range(0..train.len())]];
        let gt = frame.image.cast::<T>().quantized();
        self.step_on(dataset.camera(frame), T::of(frame.record.time), &gt)
    }

    /// One iteration against a given view, time and reference image.
    pub fn step_on(&mut self, camera: &Camera, t: T, gt: &Image<T>) -> Result<LossReport> {
        let it = self.iteration;
        self.step_inner(camera, t, gt).map_err(|e| Error::Training { iteration: it, source: Box::new(e) })
    }

    fn step_inner(&mut self, camera: &Camera, t: T, gt: &Image<T>) -> Result<LossReport> {
        let it = self.iteration;
        let warm = self.in_warmup();
        let cfg = self.cfg.clone();

        if cfg.visibility_detection && !(cfg.beta_after_warmup && warm) && cfg.decay.beta_invisible != 1.0 {
            let visible = visible_set(camera, t, &self.gaussians, &cfg.visibility())?;
            let beta = cfg.decay.beta_invisible;
            for i in visible.complement() {
                let g = &mut self.gaussians[i];
                g.opacity_logit = decay_logit(g.opacity_logit, beta);
            }
        }

        let settings = self.render_settings();
        let (out, cache, grads) = {
            let stage = self.stage();
            let (out, cache) = render_forward(&self.gaussians, camera, t, &stage, &settings)?;
            let (terms, grad_img) = photometric_loss(&out.color, gt, cfg.loss_lambda, cfg.dssim_halved)?;
            if !terms.total.is_finite() {
                return Err(Error::invalid("loss is not finite"));
            }
            let grads = render_backward(&self.gaussians, &cache, &stage, &grad_img)?;
            ((out, terms), cache, grads)
        };
        let (out, terms) = out;
        let neural = !warm && cfg.decay.variant == DecayVariant::Neural;

        for &i in out.rendered.indices() {
            self.adam.step(i, &mut self.gaussians[i], &grads.gaussians[i], &cfg.lr, &cfg.adam);
            self.gaussians[i].normalize_rotations()?;
        }
        if neural {
            self.net_adam.step(&mut self.net.params, &grads.net, cfg.lr.decay_net, &cfg.adam);
        }
        if neural && cfg.commit_visible_decay {
            for p in cache.prepared() {
                let g = &mut self.gaussians[p.index];
                g.opacity_logit = decay_logit(g.opacity_logit, p.tau.to_f64_lossless());
            }
        }

        let report = LossReport {
            iteration: it,
            loss: terms.total,
            l1: terms.l1,
            dssim: terms.dssim,
            psnr: psnr(&out.color, gt)?,
            visible: out.rendered.len(),
            gaussians: self.gaussians.len(),
        };
        self.iteration += 1;
        if !warm && cfg.prune_every > 0 && self.iteration % cfg.prune_every == 0 {
            self.prune();
        }
        Ok(report)
    }

    /// Removes Gaussians whose stored opacity is below `prune_opacity`.
    pub fn prune(&mut self) -> usize {
        let thr = T::of(self.cfg.prune_opacity);
        let keep: Vec<bool> = self.gaussians.iter().map(|g| !(g.opacity() < thr)).collect();
        let removed = keep.iter().filter(|k| !**k).count();
        if removed == 0 {
            return 0;
        }
        let mut it = keep.iter();
        self.gaussians.retain(|_| *it.next().expect("mask length"));
        let mut it = keep.iter();
        self.distractor.retain(|_| *it.next().expect("mask length"));
        self.adam.retain(&keep);
        removed
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            sh: self.sh,
            aabb: self.aabb,
            iterations: self.iteration as u64,
            decay_variant: self.cfg.decay.variant,
            gaussians: self.gaussians.iter().map(|g| g.cast()).collect(),
            distractor: self.distractor.clone(),
            net: self.net.cast(),
            config_json: self.cfg.to_json(),
            rng: RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos(),
            },
        }
    }

    /// Evaluation model of the current state.
    pub fn model(&self) -> Result<Model> {
        Model::from_checkpoint(&self.checkpoint())
    }

    /// Distractors whose stored opacity exceeds `threshold`.
    pub fn surviving_distractors(&self, threshold: f64) -> usize {
        self.gaussians
            .iter()
            .zip(&self.distractor)
            .filter(|(g, d)| **d && g.opacity().to_f64_lossless() > threshold)
            .count()
    }
}

/// Trains for `cfg.iterations`, calling `log` with every record.
pub fn train(
    dataset: &Dataset,
    cfg: TrainConfig,
    mut log: impl FnMut(&LogRecord) -> Result<()>,
) -> Result<Trainer<f32>> {
    let mut trainer = Trainer::<f32>::from_dataset(cfg, dataset)?;
    while trainer.iteration < trainer.cfg.iterations {
        let report = trainer.step(dataset)?;
        log(&LogRecord::Train(report))?;
        let every = trainer.cfg.eval_every;
        if every > 0 && (trainer.iteration % every == 0 || trainer.iteration == trainer.cfg.iterations) {
            let m = trainer.model()?.evaluate(dataset, Split::Test, trainer.cfg.dssim_halved)?.mean();
            log(&LogRecord::Eval {
                iteration: trainer.iteration,
                split: Split::Test,
                psnr: m.psnr,
                dssim1: m.dssim1,
                dssim2: m.dssim2,
            })?;
        }
    }
    Ok(trainer)
}

/// The six ablation arms: every decay variant, plus neural decay with
/// visibility detection disabled (the network then applies to every
/// projectable Gaussian and no `β` decay happens).
pub fn ablation_arms(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut arms: Vec<(String, TrainConfig)> = DecayVariant::ALL
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            cfg.decay.variant = v;
            cfg.visibility_detection = true;
            (v.name().to_string(), cfg)
        })
        .collect();
    let mut novis = base.clone();
    novis.decay.variant = DecayVariant::Neural;
    novis.visibility_detection = false;
    arms.push(("neural_novis".to_string(), novis));
    arms
}

/// Held-out report for a trained state.
pub fn evaluate_trainer<T: Scalar>(trainer: &Trainer<T>, dataset: &Dataset, split: Split) -> Result<MetricReport> {
    trainer.model()?.evaluate(dataset, split, trainer.cfg.dssim_halved)
}
