use rayon::prelude::*;

use crate::decaynet::PARAM_COUNT;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian4D;
use crate::image::Image;
use crate::scalar::Scalar;

use super::forward::tile_pixels;
use super::prepare::{prepared_backward, SplatGrad};
use super::{eval_splat, scene_fingerprint, DecayStage, RenderCache, RenderGrads};

/// Gaussians per decay-network gradient partial sum. Partial sums are formed
/// in scene-index order and added sequentially, so results do not depend on
/// the thread count.
const NET_GRAD_CHUNK: usize = 32;

/// Backpropagates `∂L/∂color` (same layout as the rendered image) through the
/// render described by `cache`. `scene` and `stage` must be exactly those the
/// cache was produced with.
pub fn render_backward<T: Scalar>(
    scene: &[Gaussian4D<T>],
    cache: &RenderCache<T>,
    stage: &DecayStage<'_, T>,
    grad_color: &Image<T>,
) -> Result<RenderGrads<T>> {
    if scene.len() != cache.scene_len || scene_fingerprint(scene) != cache.fingerprint {
        return Err(Error::usage("render cache does not match the scene (stale cache)"));
    }
    let camera = &cache.camera;
    let w = camera.width as usize;
    let h = camera.height as usize;
    if grad_color.width != w || grad_color.height != h {
        return Err(Error::invalid(format!(
            "gradient image is {}×{}, render is {w}×{h}",
            grad_color.width, grad_color.height
        )));
    }
    let neural_cache = cache.prepared.iter().any(|p| p.decay.is_some());
    if !cache.prepared.is_empty() && neural_cache != stage.is_neural() {
        return Err(Error::usage("decay stage differs from the one used in the forward pass"));
    }

    let settings = &cache.settings;
    let rc = &settings.raster;
    let ts = rc.tile_size;
    let extent2 = T::of(rc.extent_sigma * rc.extent_sigma);
    let amax = T::of(rc.alpha_max);
    let amin = T::of(rc.alpha_min);
    let bg = settings.background.map(T::of);
    let prepared = &cache.prepared;

    // Screen-space gradients, tile-local first.
    let tile_grads: Vec<Vec<SplatGrad<T>>> = cache
        .tiles
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let mut local = vec![SplatGrad::default(); list.len()];
            for (x, y) in tile_pixels(tile, camera, ts) {
                let p = y * w + x;
                let g = [grad_color.data[3 * p], grad_color.data[3 * p + 1], grad_color.data[3 * p + 2]];
                if g.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                let px = T::of(x as f64 + 0.5);
                let py = T::of(y as f64 + 0.5);
                let mut trans = cache.final_t[p];
                let mut behind = bg;
                for pos in (0..cache.last[p] as usize).rev() {
                    let s = &prepared[list[pos] as usize].splat;
                    let Some(hit) = eval_splat(s, px, py, extent2, amax, amin) else {
                        continue;
                    };
                    let a = hit.alpha;
                    trans /= T::one() - a;
                    let sg = &mut local[pos];
                    let mut d_alpha = T::zero();
                    for c in 0..3 {
                        sg.color[c] += trans * a * g[c];
                        d_alpha += g[c] * (s.color[c] - behind[c]);
                        behind[c] = a * s.color[c] + (T::one() - a) * behind[c];
                    }
                    d_alpha *= trans;
                    if hit.clamped {
                        continue;
                    }
                    // α = α_base · exp(−½ q)
                    let e = a / s.alpha_base;
                    sg.alpha_base += d_alpha * e;
                    let d_q = -T::half() * a * d_alpha;
                    let (dx, dy) = (hit.dx, hit.dy);
                    let [ca, cb, cc] = s.conic;
                    sg.conic[0] += d_q * dx * dx;
                    sg.conic[1] += d_q * T::two() * dx * dy;
                    sg.conic[2] += d_q * dy * dy;
                    sg.mean2[0] -= d_q * T::two() * (ca * dx + cb * dy);
                    sg.mean2[1] -= d_q * T::two() * (cb * dx + cc * dy);
                }
            }
            local
        })
        .collect();

    let mut splat_grads = vec![SplatGrad::<T>::default(); prepared.len()];
    for (list, local) in cache.tiles.iter().zip(&tile_grads) {
        for (&k, g) in list.iter().zip(local) {
            splat_grads[k as usize].add(g);
        }
    }

    let n_coeffs = settings.sh.coeff_count();
    let chunks: Vec<Result<(Vec<(usize, Gaussian4D<T>, T)>, Vec<T>)>> = prepared
        .par_chunks(NET_GRAD_CHUNK)
        .zip(splat_grads.par_chunks(NET_GRAD_CHUNK))
        .map(|(ps, sgs)| {
            let mut net = if stage.is_neural() { vec![T::zero(); PARAM_COUNT] } else { Vec::new() };
            let mut out = Vec::with_capacity(ps.len());
            for (p, sg) in ps.iter().zip(sgs) {
                let mut g = Gaussian4D::zeros(n_coeffs);
                let d_tau = prepared_backward(
                    p,
                    &scene[p.index],
                    camera,
                    cache.t_query,
                    stage,
                    settings,
                    sg,
                    &mut g,
                    &mut net,
                )?;
                out.push((p.index, g, d_tau));
            }
            Ok((out, net))
        })
        .collect();

    let mut gaussians: Vec<Gaussian4D<T>> = scene.iter().map(|g| g.zeros_like()).collect();
    let mut net = vec![T::zero(); PARAM_COUNT];
    let mut d_tau = Vec::with_capacity(prepared.len());
    for chunk in chunks {
        let (out, partial) = chunk?;
        for (i, g, dt) in out {
            gaussians[i] = g;
            d_tau.push((i, dt));
        }
        for (a, b) in net.iter_mut().zip(&partial) {
            *a += *b;
        }
    }
    Ok(RenderGrads { gaussians, net, d_tau })
}
