//! Synthetic ground truth: camera rigs, 4D Gaussian scenes and rendered
//! datasets with a JSON manifest.
//!
//! Curved motion is represented the way 4D Gaussians represent it: a chain
//! of short-lived Gaussians, each moving linearly through its conditional
//! mean, whose temporal weights hand over from one to the next.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Aabb;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{isoclinic_decompose, Gaussian4D};
use crate::image::Image;
use crate::io::{read_ppm, write_ppm};
use crate::raster::{oracle_render, DecayStage, RenderSettings};
use crate::scalar::logit;
use crate::sh::consts::C0;
use crate::sh::ShConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GT_SCENE_FILE: &str = "gt_scene.ckpt";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigSpec {
    pub n_train_cameras: usize,
    pub n_test_cameras: usize,
    /// Angular extent of the training arc, degrees.
    pub span_deg: f64,
    pub radius: f64,
    /// Height of the arc above the target, as an elevation angle in degrees.
    pub elevation_deg: f64,
    pub target: [f64; 3],
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            n_train_cameras: 4,
            n_test_cameras: 4,
            span_deg: 110.0,
            radius: 4.0,
            elevation_deg: 15.0,
            target: [0.0; 3],
            width: 96,
            height: 96,
            fov_deg: 50.0,
            near: 0.1,
            far: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split '{s}' (expected train or test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigCamera {
    pub id: usize,
    pub split: Split,
    /// Azimuth on the arc, degrees (0 faces the target along `−z`).
    pub angle_deg: f64,
    pub camera: Camera,
}

/// Azimuths of the training cameras: `−span/2 + k·span/(n−1)`.
pub fn train_angles(rig: &RigSpec) -> Vec<f64> {
    let n = rig.n_train_cameras;
    if n == 1 {
        return vec![0.0];
    }
    let gap = rig.span_deg / (n - 1) as f64;
    (0..n).map(|k| -0.5 * rig.span_deg + k as f64 * gap).collect()
}

/// Azimuths of the held-out cameras: midpoints `−span/2 + (k + ½)·gap` of
/// the training arc, continuing past its end when there are more test
/// cameras than gaps.
pub fn test_angles(rig: &RigSpec) -> Vec<f64> {
    let gap = if rig.n_train_cameras > 1 {
        rig.span_deg / (rig.n_train_cameras - 1) as f64
    } else {
        rig.span_deg
    };
    (0..rig.n_test_cameras).map(|k| -0.5 * rig.span_deg + (k as f64 + 0.5) * gap).collect()
}

fn rig_camera(rig: &RigSpec, angle_deg: f64) -> Result<Camera> {
    let (a, e) = (angle_deg.to_radians(), rig.elevation_deg.to_radians());
    let eye = [
        rig.target[0] + rig.radius * e.cos() * a.sin(),
        rig.target[1] + rig.radius * e.sin(),
        rig.target[2] + rig.radius * e.cos() * a.cos(),
    ];
    Camera::look_at(eye, rig.target, [0.0, 1.0, 0.0], rig.fov_deg, rig.width, rig.height, rig.near, rig.far)
}

/// Training cameras first (ids `0..n_train`), then the held-out cameras.
pub fn make_rig(rig: &RigSpec) -> Result<Vec<RigCamera>> {
    if !(rig.span_deg > 0.0 && rig.span_deg <= 360.0) {
        return Err(Error::invalid(format!("arc span {}° is outside (0, 360]", rig.span_deg)));
    }
    if rig.n_train_cameras == 0 {
        return Err(Error::invalid("at least one training camera is required"));
    }
    if !(rig.radius > 0.0) || rig.width == 0 || rig.height == 0 {
        return Err(Error::invalid("rig radius and image size must be positive"));
    }
    let mut cams = Vec::new();
    for (split, angles) in [(Split::Train, train_angles(rig)), (Split::Test, test_angles(rig))] {
        for a in angles {
            cams.push(RigCamera { id: cams.len(), split, angle_deg: a, camera: rig_camera(rig, a)? });
        }
    }
    Ok(cams)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    /// Clusters circling the target.
    Orbit,
    /// Static clusters whose color changes per temporal segment.
    Pulse,
    /// Clusters translating at constant velocity.
    Linear,
}

impl std::str::FromStr for PresetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbit" => Ok(PresetKind::Orbit),
            "pulse" => Ok(PresetKind::Pulse),
            "linear" => Ok(PresetKind::Linear),
            _ => Err(Error::usage(format!("unknown preset '{s}' (expected orbit, pulse or linear)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePreset {
    pub kind: PresetKind,
    pub objects: usize,
    pub gaussians_per_object: usize,
    /// Temporal segments per trajectory (1 for `linear`).
    pub segments: usize,
    pub frames: usize,
    /// Angle swept by each orbiting cluster over the sequence, degrees.
    pub orbit_sweep_deg: f64,
    /// Speed of `linear` clusters, world units per normalized time.
    pub linear_speed: f64,
    /// Spatial standard deviation of every ground-truth Gaussian.
    pub spatial_sigma: f64,
    /// Radius of the ball a cluster's points are drawn from.
    pub cluster_radius: f64,
    pub opacity: f64,
}

impl ScenePreset {
    pub fn new(kind: PresetKind) -> Self {
        let segments = match kind {
            PresetKind::Orbit => 8,
            PresetKind::Pulse => 4,
            PresetKind::Linear => 1,
        };
        Self {
            kind,
            objects: 3,
            gaussians_per_object: 10,
            segments,
            frames: 30,
            orbit_sweep_deg: 120.0,
            linear_speed: 0.8,
            spatial_sigma: 0.09,
            cluster_radius: 0.25,
            opacity: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects == 0 || self.gaussians_per_object == 0 || self.segments == 0 || self.frames == 0 {
            return Err(Error::invalid("preset counts must be positive"));
        }
        if self.kind == PresetKind::Linear && self.segments != 1 {
            return Err(Error::invalid("the linear preset uses a single segment"));
        }
        if !(self.spatial_sigma > 0.0 && self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::invalid("spatial sigma must be positive and opacity in (0, 1)"));
        }
        Ok(())
    }

    /// Temporal standard deviation of each segment: `duration / segments`.
    pub fn segment_sigma(&self) -> f64 {
        1.0 / self.segments as f64
    }

    /// Normalized time of frame `f`.
    pub fn frame_time(&self, f: usize) -> f64 {
        if self.frames == 1 {
            0.0
        } else {
            f as f64 / (self.frames - 1) as f64
        }
    }
}

/// Ground-truth scene. Parameters are exactly representable in `f32`, so a
/// checkpoint of the scene renders bit-identically to the dataset frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GtScene {
    pub gaussians: Vec<Gaussian4D<f64>>,
    pub aabb: Aabb,
    pub sh: ShConfig,
}

/// World box that contains every ground-truth trajectory.
pub const SCENE_AABB: Aabb = Aabb { min: [-1.5; 3], max: [1.5; 3] };

/// Gaussian whose time-`t` slice has mean `p + v (t − μ_t)` and spatial
/// covariance `s² I`, with temporal variance `s_t²`:
/// `Σ = [[s² I + v vᵀ s_t², v s_t²], [s_t² vᵀ, s_t²]]`.
pub fn moving_gaussian(
    p: [f64; 3],
    v: [f64; 3],
    mu_t: f64,
    sigma: f64,
    sigma_t: f64,
    opacity: f64,
    sh_coeffs: Vec<f64>,
) -> Gaussian4D<f64> {
    let st2 = sigma_t * sigma_t;
    let mut m = Matrix4::<f64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = v[i] * v[j] * st2 + if i == j { sigma * sigma } else { 0.0 };
        }
        m[(i, 3)] = v[i] * st2;
        m[(3, i)] = v[i] * st2;
    }
    m[(3, 3)] = st2;
    let eig = SymmetricEigen::new(m);
    let mut rot = [[0.0; 4]; 4];
    for (i, row) in rot.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = eig.eigenvectors[(i, j)];
        }
    }
    if eig.eigenvectors.determinant() < 0.0 {
        for row in &mut rot {
            row[0] = -row[0];
        }
    }
    let (ql, qr) = isoclinic_decompose(&rot);
    Gaussian4D {
        position: p,
        temporal_center: mu_t,
        rot_left: ql,
        rot_right: qr,
        log_scales: std::array::from_fn(|k| 0.5 * eig.eigenvalues[k].max(1e-300).ln()),
        opacity_logit: logit(opacity),
        sh_coeffs,
    }
}

const PALETTE: [[f64; 3]; 6] = [
    [0.95, 0.25, 0.2],
    [0.2, 0.85, 0.3],
    [0.25, 0.4, 0.95],
    [0.95, 0.85, 0.2],
    [0.85, 0.3, 0.9],
    [0.2, 0.9, 0.9],
];

/// DC-only coefficients producing `rgb` (plus an optional first-order
/// Fourier DC term `pulse`).
fn dc_coeffs(sh: &ShConfig, rgb: [f64; 3], pulse: [f64; 3]) -> Vec<f64> {
    let mut k = vec![0.0; sh.coeff_count()];
    for c in 0..3 {
        k[sh.index(c, 0, 0, 0)] = (rgb[c] - 0.5) / C0;
        if sh.n_fourier >= 1 {
            k[sh.index(c, 1, 0, 0)] = pulse[c] / C0;
        }
    }
    k
}

fn ball_point(rng: &mut impl Rng, radius: f64) -> [f64; 3] {
    loop {
        let p: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return p.map(|v| v * radius);
        }
    }
}

/// Circle center, radius, height and phase of orbiting object `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitPath {
    pub radius: f64,
    pub height: f64,
    pub phase: f64,
    /// Signed sweep over the whole sequence, radians.
    pub sweep: f64,
}

impl OrbitPath {
    pub fn angle(&self, t: f64) -> f64 {
        self.phase + self.sweep * t
    }

    /// Position of the cluster center at time `t`.
    pub fn center(&self, t: f64) -> [f64; 3] {
        let a = self.angle(t);
        [self.radius * a.cos(), self.height, self.radius * a.sin()]
    }

    pub fn velocity(&self, t: f64) -> [f64; 3] {
        let a = self.angle(t);
        [-self.radius * self.sweep * a.sin(), 0.0, self.radius * self.sweep * a.cos()]
    }
}

pub fn orbit_paths(preset: &ScenePreset, seed: u64) -> Vec<OrbitPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f72_6269_74);
    (0..preset.objects)
        .map(|k| OrbitPath {
            radius: rng.gen_range(0.7..1.0),
            height: rng.gen_range(-0.4..0.4),
            phase: std::f64::consts::TAU * k as f64 / preset.objects as f64,
            sweep: preset.orbit_sweep_deg.to_radians() * if k % 2 == 0 { 1.0 } else { -1.0 },
        })
        .collect()
}

pub fn make_scene(preset: &ScenePreset, seed: u64) -> Result<GtScene> {
    preset.validate()?;
    let sh = ShConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let st = preset.segment_sigma();
    let mut gaussians = Vec::new();
    match preset.kind {
        PresetKind::Orbit => {
            for (k, path) in orbit_paths(preset, seed).iter().enumerate() {
                let base = PALETTE[k % PALETTE.len()];
                for _ in 0..preset.gaussians_per_object {
                    let offset = ball_point(&mut rng, preset.cluster_radius);
                    let rgb = base.map(|c| c + rng.gen_range(-0.05..0.05));
                    for s in 0..preset.segments {
                        let mu = (s as f64 + 0.5) / preset.segments as f64;
                        let c = path.center(mu);
                        let p = [c[0] + offset[0], c[1] + offset[1], c[2] + offset[2]];
                        let g = moving_gaussian(
                            p,
                            path.velocity(mu),
                            mu,
                            preset.spatial_sigma,
                            st,
                            preset.opacity,
                            dc_coeffs(&sh, rgb, [0.0; 3]),
                        );
                        gaussians.push(g);
                    }
                }
            }
        }
        PresetKind::Pulse => {
            for k in 0..preset.objects {
                let center = ball_point(&mut rng, 0.9);
                let base = PALETTE[k % PALETTE.len()];
                let pulses: Vec<[f64; 3]> = (0..preset.segments)
                    .map(|_| std::array::from_fn(|_| rng.gen_range(-0.3..0.3)))
                    .collect();
                for _ in 0..preset.gaussians_per_object {
                    let o = ball_point(&mut rng, preset.cluster_radius);
                    let p = [center[0] + o[0], center[1] + o[1], center[2] + o[2]];
                    for (s, pulse) in pulses.iter().enumerate() {
                        let mu = (s as f64 + 0.5) / preset.segments as f64;
                        let g = moving_gaussian(
                            p,
                            [0.0; 3],
                            mu,
                            preset.spatial_sigma,
                            st,
                            preset.opacity,
                            dc_coeffs(&sh, base, *pulse),
                        );
                        gaussians.push(g);
                    }
                }
            }
        }
        PresetKind::Linear => {
            for k in 0..preset.objects {
                let center = ball_point(&mut rng, 0.6);
                let dir = rng.gen_range(0.0..std::f64::consts::TAU);
                let v = [preset.linear_speed * dir.cos(), 0.0, preset.linear_speed * dir.sin()];
                let base = PALETTE[k % PALETTE.len()];
                for _ in 0..preset.gaussians_per_object {
                    let o = ball_point(&mut rng, preset.cluster_radius);
                    let p = [center[0] + o[0], center[1] + o[1], center[2] + o[2]];
                    let rgb = base.map(|c| c + rng.gen_range(-0.05..0.05));
                    let g = moving_gaussian(
                        p,
                        v,
                        0.5,
                        preset.spatial_sigma,
                        st,
                        preset.opacity,
                        dc_coeffs(&sh, rgb, [0.0; 3]),
                    );
                    gaussians.push(g);
                }
            }
        }
    }
    // Snap to f32 so checkpoints reproduce the scene exactly.
    let gaussians = gaussians.iter().map(|g| g.cast::<f32>().cast::<f64>()).collect();
    Ok(GtScene { gaussians, aabb: SCENE_AABB, sh })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Relative to the dataset directory.
    pub path: String,
    pub camera_id: usize,
    pub split: Split,
    /// Frame index within the sequence.
    pub index: usize,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub preset: ScenePreset,
    pub rig: RigSpec,
    pub aabb: Aabb,
    pub sh: ShConfig,
    pub render: RenderSettings,
    pub cameras: Vec<RigCamera>,
    pub frames: Vec<FrameRecord>,
    /// Ground-truth scene checkpoint, relative to the dataset directory.
    pub gt_scene: String,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Json { path: path.into(), source: e })?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!("manifest version {} is not supported", m.version)));
        }
        for f in &m.frames {
            if f.camera_id >= m.cameras.len() {
                return Err(Error::invalid(format!("frame {} references unknown camera {}", f.path, f.camera_id)));
            }
        }
        Ok(m)
    }

    pub fn camera(&self, id: usize) -> Result<&Camera> {
        self.cameras
            .get(id)
            .map(|c| &c.camera)
            .ok_or_else(|| Error::usage(format!("camera id {id} out of range (0..{})", self.cameras.len())))
    }
}

/// Frame file name for a camera and frame index.
pub fn frame_path(camera_id: usize, index: usize) -> String {
    format!("frames/cam{camera_id:02}_f{index:03}.ppm")
}

/// Renders the ground truth from every rig camera at every frame time and
/// writes frames, the scene checkpoint and the manifest into `out_dir`.
pub fn build_dataset(
    preset: &ScenePreset,
    rig: &RigSpec,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    let scene = make_scene(preset, seed)?;
    let cameras = make_rig(rig)?;
    let render = RenderSettings { sh: scene.sh, ..RenderSettings::default() };
    let frames_dir = out_dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let mut frames = Vec::new();
    for cam in &cameras {
        for f in 0..preset.frames {
            frames.push(FrameRecord {
                path: frame_path(cam.id, f),
                camera_id: cam.id,
                split: cam.split,
                index: f,
                time: preset.frame_time(f),
            });
        }
    }
    frames.par_iter().try_for_each(|rec| -> Result<()> {
        let img = render_gt_frame(&scene, &cameras[rec.camera_id].camera, rec.time, &render)?;
        write_ppm(out_dir.join(&rec.path), &img)
    })?;

    crate::io::save_checkpoint(out_dir.join(GT_SCENE_FILE), &gt_checkpoint(&scene, preset.kind))?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed,
        preset: preset.clone(),
        rig: rig.clone(),
        aabb: scene.aabb,
        sh: scene.sh,
        render,
        cameras,
        frames,
        gt_scene: GT_SCENE_FILE.into(),
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Ground-truth frame: reference renderer, plain temporal opacity.
pub fn render_gt_frame(scene: &GtScene, camera: &Camera, t: f64, settings: &RenderSettings) -> Result<Image<f64>> {
    Ok(oracle_render(&scene.gaussians, camera, t, &DecayStage::Baseline, settings)?.color)
}

/// Checkpoint holding the ground-truth scene (zero iterations, no network).
pub fn gt_checkpoint(scene: &GtScene, kind: PresetKind) -> crate::io::Checkpoint {
    crate::io::Checkpoint {
        sh: scene.sh,
        aabb: scene.aabb,
        iterations: 0,
        decay_variant: crate::decaynet::DecayVariant::None,
        gaussians: scene.gaussians.iter().map(|g| g.cast()).collect(),
        distractor: vec![false; scene.gaussians.len()],
        net: crate::decaynet::DecayNet::zeros(scene.aabb),
        config_json: serde_json::json!({ "ground_truth": kind }).to_string(),
        rng: Default::default(),
    }
}

/// One frame of a loaded dataset.
#[derive(Clone, Debug)]
pub struct Frame {
    pub record: FrameRecord,
    pub image: Image<f32>,
}

/// Manifest plus decoded frames.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
        let frames = manifest
            .frames
            .par_iter()
            .map(|rec| -> Result<Frame> {
                let image: Image<f32> = read_ppm(dir.join(&rec.path))?;
                let cam = &manifest.cameras[rec.camera_id].camera;
                if image.width != cam.width as usize || image.height != cam.height as usize {
                    return Err(Error::invalid(format!("{}: size does not match camera {}", rec.path, rec.camera_id)));
                }
                Ok(Frame { record: rec.clone(), image })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dir, manifest, frames })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(move |f| f.record.split == split)
    }

    pub fn camera(&self, frame: &Frame) -> &Camera {
        &self.manifest.cameras[frame.record.camera_id].camera
    }

    pub fn gt_scene_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.gt_scene)
    }
}
