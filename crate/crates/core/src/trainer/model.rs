use rayon::prelude::*;

use crate::bounds::Aabb;
use crate::camera::Camera;
use crate::decaynet::{DecayNet, DecayVariant};
use crate::error::Result;
use crate::gaussian::Gaussian4D;
use crate::image::Image;
use crate::io::Checkpoint;
use crate::metrics::{FrameMetrics, MetricReport};
use crate::raster::{render_forward, DecayStage, RenderOutput, RenderSettings};
use crate::scenegen::{Dataset, Frame, Split};
use crate::sh::ShConfig;

use super::TrainConfig;

/// A trained (or ground-truth) scene ready for rendering and evaluation.
///
/// Rendering happens in `f64` with the tiled rasterizer; the decay stage is
/// the one training ended in (plain temporal opacity before warm-up ends).
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: TrainConfig,
    pub sh: ShConfig,
    pub aabb: Aabb,
    pub iterations: u64,
    pub gaussians: Vec<Gaussian4D<f64>>,
    pub distractor: Vec<bool>,
    pub net: DecayNet<f64>,
}

impl Model {
    /// Restores the scene. A checkpoint whose config blob is not a training
    /// config (the ground-truth scene) falls back to default settings.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut cfg: TrainConfig = serde_json::from_str(&ckpt.config_json).unwrap_or_default();
        cfg.decay.variant = ckpt.decay_variant;
        ckpt.sh.validate()?;
        let gaussians: Vec<Gaussian4D<f64>> = ckpt.gaussians.iter().map(|g| g.cast()).collect();
        for g in &gaussians {
            g.check_shape(&ckpt.sh)?;
        }
        Ok(Self {
            cfg,
            sh: ckpt.sh,
            aabb: ckpt.aabb,
            iterations: ckpt.iterations,
            gaussians,
            distractor: ckpt.distractor.clone(),
            net: ckpt.net.cast(),
        })
    }

    pub fn stage(&self) -> DecayStage<'_, f64> {
        if self.iterations < self.cfg.warmup_iters as u64 {
            return DecayStage::Baseline;
        }
        match self.cfg.decay.variant {
            DecayVariant::Neural => DecayStage::Neural(&self.net),
            _ => DecayStage::Fixed(self.cfg.decay),
        }
    }

    pub fn render_settings(&self) -> RenderSettings {
        self.cfg.render_settings(self.sh)
    }

    /// Unquantized color, alpha and depth.
    pub fn render_output(&self, camera: &Camera, t: f64) -> Result<RenderOutput<f64>> {
        Ok(render_forward(&self.gaussians, camera, t, &self.stage(), &self.render_settings())?.0)
    }

    /// Render quantized to 8 bits, as it would be written to disk.
    pub fn render(&self, camera: &Camera, t: f64) -> Result<Image<f64>> {
        Ok(self.render_output(camera, t)?.color.quantized())
    }

    /// Per-frame PSNR / DSSIM over one split of a dataset, in manifest order.
    pub fn evaluate(&self, dataset: &Dataset, split: Split, halved: bool) -> Result<MetricReport> {
        let selected: Vec<&Frame> = dataset.split(split).collect();
        let frames = selected
            .par_iter()
            .map(|frame| {
                let render = self.render(dataset.camera(frame), frame.record.time)?;
                let gt = frame.image.cast::<f64>().quantized();
                FrameMetrics::compute(frame.record.path.clone(), &render, &gt, halved)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricReport { frames })
    }
}
