use rayon::prelude::*;

use crate::camera::Camera;
use crate::decaynet::PARAM_COUNT;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian4D;
use crate::image::Image;
use crate::scalar::Scalar;

use super::prepare::{check_finite, prepare, render_set, Prepared};
use super::{eval_splat, scene_fingerprint, sort_key_cmp, DecayStage, RenderCache, RenderOutput, RenderSettings};

/// Result of compositing one pixel over an ordered list of splats.
pub(crate) struct PixelResult<T> {
    pub color: [T; 3],
    pub final_t: T,
    pub depth_sum: T,
    /// Number of list entries consumed (one past the last contributor).
    pub last: u32,
}

/// Front-to-back compositing of the splats `list` (indices into `prepared`)
/// at pixel center `(px, py)`. `hit` is called for every contributor with its
/// list position.
pub(crate) fn composite_pixel<T: Scalar>(
    prepared: &[Prepared<T>],
    list: &[u32],
    px: T,
    py: T,
    settings: &RenderSettings,
    mut hit: impl FnMut(usize),
) -> PixelResult<T> {
    let rc = &settings.raster;
    let extent2 = T::of(rc.extent_sigma * rc.extent_sigma);
    let amax = T::of(rc.alpha_max);
    let amin = T::of(rc.alpha_min);
    let tmin = T::of(rc.transmittance_min);
    let mut trans = T::one();
    let mut color = [T::zero(); 3];
    let mut depth_sum = T::zero();
    let mut last = 0u32;
    for (pos, &k) in list.iter().enumerate() {
        let s = &prepared[k as usize].splat;
        let Some(h) = eval_splat(s, px, py, extent2, amax, amin) else {
            continue;
        };
        let t_next = trans * (T::one() - h.alpha);
        if t_next < tmin {
            break;
        }
        let w = trans * h.alpha;
        for c in 0..3 {
            color[c] += w * s.color[c];
        }
        depth_sum += w * s.depth;
        trans = t_next;
        last = pos as u32 + 1;
        hit(pos);
    }
    let bg = settings.background;
    for c in 0..3 {
        color[c] += trans * T::of(bg[c]);
    }
    PixelResult { color, final_t: trans, depth_sum, last }
}

/// Validates inputs, gates, prepares and globally sorts the rendered set.
pub(crate) fn prepare_all<T: Scalar>(
    scene: &[Gaussian4D<T>],
    camera: &Camera,
    t_query: T,
    stage: &DecayStage<'_, T>,
    settings: &RenderSettings,
) -> Result<(Vec<Prepared<T>>, Vec<usize>, crate::visibility::VisibleSet)> {
    camera.validate()?;
    settings.sh.validate()?;
    if !t_query.is_finite() {
        return Err(Error::invalid("query time must be finite"));
    }
    if let DecayStage::Neural(net) = stage {
        if net.params.len() != PARAM_COUNT {
            return Err(Error::invalid(format!(
                "decay network has {} parameters, expected {PARAM_COUNT}",
                net.params.len()
            )));
        }
    }
    if let DecayStage::Fixed(policy) = stage {
        policy.validate()?;
    }
    check_finite(scene)?;
    for g in scene {
        g.check_shape(&settings.sh)?;
    }
    let rendered = render_set(scene, camera, t_query, &settings.gating)?;
    let mut prepared = Vec::with_capacity(rendered.len());
    for &i in rendered.indices() {
        if let Some(p) = prepare(&scene[i], i, camera, t_query, stage, settings)? {
            prepared.push(p);
        }
    }
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.sort_by(|&a, &b| sort_key_cmp(&prepared[a], &prepared[b]));
    Ok((prepared, order, rendered))
}

fn bin_tiles<T: Scalar>(prepared: &[Prepared<T>], order: &[usize], camera: &Camera, ts: usize) -> Vec<Vec<u32>> {
    let w = camera.width as usize;
    let h = camera.height as usize;
    let tx = w.div_ceil(ts);
    let ty = h.div_ceil(ts);
    let mut tiles = vec![Vec::new(); tx * ty];
    for &k in order {
        let s = &prepared[k].splat;
        let r = s.radius.to_f64_lossless();
        let (mx, my) = (s.mean2[0].to_f64_lossless(), s.mean2[1].to_f64_lossless());
        if !(r.is_finite() && mx.is_finite() && my.is_finite()) {
            continue;
        }
        // pixel x is covered iff |x + 0.5 − mx| ≤ r
        let x0 = (mx - r - 0.5).floor();
        let x1 = (mx + r - 0.5).ceil();
        let y0 = (my - r - 0.5).floor();
        let y1 = (my + r - 0.5).ceil();
        if x1 < 0.0 || y1 < 0.0 || x0 >= w as f64 || y0 >= h as f64 {
            continue;
        }
        let x0 = x0.max(0.0) as usize / ts;
        let y0 = y0.max(0.0) as usize / ts;
        let x1 = (x1.min(w as f64 - 1.0) as usize) / ts;
        let y1 = (y1.min(h as f64 - 1.0) as usize) / ts;
        for ty_ in y0..=y1 {
            for tx_ in x0..=x1 {
                tiles[ty_ * tx + tx_].push(k as u32);
            }
        }
    }
    tiles
}

/// Pixel coordinates of tile `tile`.
pub(crate) fn tile_pixels(tile: usize, camera: &Camera, ts: usize) -> impl Iterator<Item = (usize, usize)> {
    let w = camera.width as usize;
    let h = camera.height as usize;
    let tx = w.div_ceil(ts);
    let (bx, by) = ((tile % tx) * ts, (tile / tx) * ts);
    (by..(by + ts).min(h)).flat_map(move |y| (bx..(bx + ts).min(w)).map(move |x| (x, y)))
}

struct TileOut<T> {
    pixels: Vec<(usize, PixelResult<T>)>,
    counts: Vec<u32>,
}

/// Renders `scene` at time `t_query` and returns the image together with the
/// cache needed for [`render_backward`](super::render_backward).
pub fn render_forward<T: Scalar>(
    scene: &[Gaussian4D<T>],
    camera: &Camera,
    t_query: T,
    stage: &DecayStage<'_, T>,
    settings: &RenderSettings,
) -> Result<(RenderOutput<T>, RenderCache<T>)> {
    let ts = settings.raster.tile_size;
    if ts == 0 {
        return Err(Error::invalid("tile size must be positive"));
    }
    let (prepared, order, rendered) = prepare_all(scene, camera, t_query, stage, settings)?;
    let tiles = bin_tiles(&prepared, &order, camera, ts);
    let w = camera.width as usize;
    let h = camera.height as usize;

    let outs: Vec<TileOut<T>> = tiles
        .par_iter()
        .enumerate()
        .map(|(tile, list)| {
            let mut counts = vec![0u32; list.len()];
            let pixels = tile_pixels(tile, camera, ts)
                .map(|(x, y)| {
                    let px = T::of(x as f64 + 0.5);
                    let py = T::of(y as f64 + 0.5);
                    let r = composite_pixel(&prepared, list, px, py, settings, |pos| counts[pos] += 1);
                    (y * w + x, r)
                })
                .collect();
            TileOut { pixels, counts }
        })
        .collect();

    let mut color = Image::new(w, h);
    let mut alpha = vec![T::zero(); w * h];
    let mut depth = vec![T::zero(); w * h];
    let mut final_t = vec![T::one(); w * h];
    let mut last = vec![0u32; w * h];
    let mut contributions = vec![0u32; scene.len()];
    for (tile, out) in outs.into_iter().enumerate() {
        for (pos, &k) in tiles[tile].iter().enumerate() {
            contributions[prepared[k as usize].index] += out.counts[pos];
        }
        for (p, r) in out.pixels {
            color.data[3 * p..3 * p + 3].copy_from_slice(&r.color);
            let a = T::one() - r.final_t;
            alpha[p] = a;
            depth[p] = if a > T::zero() { r.depth_sum / a } else { T::zero() };
            final_t[p] = r.final_t;
            last[p] = r.last;
        }
    }

    let cache = RenderCache {
        prepared,
        order,
        tiles,
        final_t,
        last,
        camera: camera.clone(),
        t_query,
        settings: *settings,
        fingerprint: scene_fingerprint(scene),
        scene_len: scene.len(),
    };
    Ok((RenderOutput { color, alpha, depth, contributions, rendered }, cache))
}
