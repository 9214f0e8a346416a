use crate::camera::Camera;
use crate::decaynet::DecayNet;
use crate::error::Result;
use crate::gaussian::Gaussian4D;
use crate::image::Image;
use crate::scalar::Scalar;

use super::forward::{composite_pixel, prepare_all};
use super::{DecayStage, RenderOutput, RenderSettings};

/// Reference renderer: the same per-pixel compositing rule as
/// [`render_forward`](super::render_forward) but in `f64`, without tiling,
/// scanning the whole depth-sorted list at every pixel.
pub fn oracle_render<T: Scalar>(
    scene: &[Gaussian4D<T>],
    camera: &Camera,
    t_query: T,
    stage: &DecayStage<'_, T>,
    settings: &RenderSettings,
) -> Result<RenderOutput<f64>> {
    let scene: Vec<Gaussian4D<f64>> = scene.iter().map(|g| g.cast()).collect();
    let net: Option<DecayNet<f64>> = match stage {
        DecayStage::Neural(n) => Some(n.cast()),
        _ => None,
    };
    let stage64 = match (stage, &net) {
        (DecayStage::Baseline, _) => DecayStage::Baseline,
        (DecayStage::Fixed(p), _) => DecayStage::Fixed(*p),
        (DecayStage::Neural(_), Some(n)) => DecayStage::Neural(n),
        (DecayStage::Neural(_), None) => unreachable!("network cast above"),
    };
    let t = t_query.to_f64_lossless();
    let (prepared, order, rendered) = prepare_all(&scene, camera, t, &stage64, settings)?;
    let list: Vec<u32> = order.iter().map(|&k| k as u32).collect();
    let w = camera.width as usize;
    let h = camera.height as usize;
    let mut color = Image::new(w, h);
    let mut alpha = vec![0.0; w * h];
    let mut depth = vec![0.0; w * h];
    let mut contributions = vec![0u32; scene.len()];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let r = composite_pixel(&prepared, &list, x as f64 + 0.5, y as f64 + 0.5, settings, |pos| {
                contributions[prepared[list[pos] as usize].index] += 1
            });
            color.data[3 * p..3 * p + 3].copy_from_slice(&r.color);
            let a = 1.0 - r.final_t;
            alpha[p] = a;
            depth[p] = if a > 0.0 { r.depth_sum / a } else { 0.0 };
        }
    }
    Ok(RenderOutput { color, alpha, depth, contributions, rendered })
}
