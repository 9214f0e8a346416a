//! The 4D Gaussian primitive and its temporal conditioning.
//!
//! A primitive is a Gaussian over `(x, y, z, t)` with covariance
//! `Σ = R S Sᵀ Rᵀ`, where `R ∈ SO(4)` is built from a left/right unit
//! quaternion pair and `S = diag(exp(log_scales))`. Conditioning on a query
//! time yields a 3D Gaussian (mean shifted linearly in time, Schur-complement
//! covariance) plus a temporal weight `ω` that scales opacity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Mat4, Vec3};
use crate::scalar::{sigmoid, Scalar};
use crate::sh::ShConfig;

/// `Σ₄₄` below this is rejected rather than clamped.
pub const TEMPORAL_VARIANCE_GUARD: f64 = 1e-12;

/// One spatio-temporal primitive. Also used as the gradient / optimizer-moment
/// container, since those are shaped exactly like the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian4D<T> {
    pub position: [T; 3],
    /// Normalized sequence time in `[0, 1]`.
    pub temporal_center: T,
    /// Quaternions are stored `(w, x, y, z)`.
    pub rot_left: [T; 4],
    pub rot_right: [T; 4],
    /// `(s_x, s_y, s_z, s_t)` as natural logs.
    pub log_scales: [T; 4],
    pub opacity_logit: T,
    /// Indexed `[channel][fourier n][sh index l² + l + m]`, flattened.
    pub sh_coeffs: Vec<T>,
}

impl<T: Scalar> Gaussian4D<T> {
    /// All-zero container with `n_coeffs` SH entries.
    pub fn zeros(n_coeffs: usize) -> Self {
        Self {
            position: [T::zero(); 3],
            temporal_center: T::zero(),
            rot_left: [T::zero(); 4],
            rot_right: [T::zero(); 4],
            log_scales: [T::zero(); 4],
            opacity_logit: T::zero(),
            sh_coeffs: vec![T::zero(); n_coeffs],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.sh_coeffs.len())
    }

    /// Stored opacity `o = logistic(opacity_logit)`.
    #[inline]
    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    #[inline]
    pub fn scales(&self) -> [T; 4] {
        self.log_scales.map(|s| s.exp())
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        3 + 1 + 4 + 4 + 4 + 1 + self.sh_coeffs.len()
    }

    /// Visits every scalar in a fixed order shared by all containers.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(ParamGroup, &mut T)) {
        self.position.iter_mut().for_each(|v| f(ParamGroup::Position, v));
        f(ParamGroup::TemporalCenter, &mut self.temporal_center);
        self.rot_left.iter_mut().for_each(|v| f(ParamGroup::Rotation, v));
        self.rot_right.iter_mut().for_each(|v| f(ParamGroup::Rotation, v));
        self.log_scales.iter_mut().for_each(|v| f(ParamGroup::LogScales, v));
        f(ParamGroup::OpacityLogit, &mut self.opacity_logit);
        self.sh_coeffs.iter_mut().for_each(|v| f(ParamGroup::Sh, v));
    }

    pub fn for_each(&self, mut f: impl FnMut(ParamGroup, T)) {
        self.position.iter().for_each(|&v| f(ParamGroup::Position, v));
        f(ParamGroup::TemporalCenter, self.temporal_center);
        self.rot_left.iter().for_each(|&v| f(ParamGroup::Rotation, v));
        self.rot_right.iter().for_each(|&v| f(ParamGroup::Rotation, v));
        self.log_scales.iter().for_each(|&v| f(ParamGroup::LogScales, v));
        f(ParamGroup::OpacityLogit, self.opacity_logit);
        self.sh_coeffs.iter().for_each(|&v| f(ParamGroup::Sh, v));
    }

    /// Flattened parameter `k` in [`Self::for_each`] order.
    pub fn param_mut(&mut self, k: usize) -> &mut T {
        match k {
            0..=2 => &mut self.position[k],
            3 => &mut self.temporal_center,
            4..=7 => &mut self.rot_left[k - 4],
            8..=11 => &mut self.rot_right[k - 8],
            12..=15 => &mut self.log_scales[k - 12],
            16 => &mut self.opacity_logit,
            _ => &mut self.sh_coeffs[k - 17],
        }
    }

    pub fn param(&self, k: usize) -> T {
        match k {
            0..=2 => self.position[k],
            3 => self.temporal_center,
            4..=7 => self.rot_left[k - 4],
            8..=11 => self.rot_right[k - 8],
            12..=15 => self.log_scales[k - 12],
            16 => self.opacity_logit,
            _ => self.sh_coeffs[k - 17],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        let mut vals = Vec::with_capacity(other.param_count());
        other.for_each(|_, v| vals.push(v));
        let mut it = vals.into_iter();
        self.for_each_mut(|_, v| *v += it.next().unwrap());
    }

    /// Rescale both quaternions to unit length.
    pub fn normalize_rotations(&mut self) -> Result<()> {
        for q in [&mut self.rot_left, &mut self.rot_right] {
            let n = linalg::norm(q);
            if !(n > T::zero()) || !n.is_finite() {
                return Err(Error::invalid("zero-norm quaternion"));
            }
            *q = linalg::scale(q, T::one() / n);
        }
        Ok(())
    }

    /// First non-finite field, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let mut bad = None;
        self.for_each(|g, v| {
            if bad.is_none() && !v.is_finite() {
                bad = Some(g.name());
            }
        });
        bad
    }

    pub fn check_shape(&self, sh: &ShConfig) -> Result<()> {
        if self.sh_coeffs.len() != sh.coeff_count() {
            return Err(Error::invalid(format!(
                "sh_coeffs has {} entries, expected {}",
                self.sh_coeffs.len(),
                sh.coeff_count()
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Gaussian4D<U> {
        use crate::scalar::{cast, cast_arr};
        Gaussian4D {
            position: cast_arr(self.position),
            temporal_center: cast(self.temporal_center),
            rot_left: cast_arr(self.rot_left),
            rot_right: cast_arr(self.rot_right),
            log_scales: cast_arr(self.log_scales),
            opacity_logit: cast(self.opacity_logit),
            sh_coeffs: self.sh_coeffs.iter().map(|&v| cast(v)).collect(),
        }
    }
}

/// Optimizer parameter groups; each has its own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    TemporalCenter,
    Rotation,
    LogScales,
    OpacityLogit,
    Sh,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::TemporalCenter => "temporal_center",
            ParamGroup::Rotation => "rotation",
            ParamGroup::LogScales => "log_scales",
            ParamGroup::OpacityLogit => "opacity_logit",
            ParamGroup::Sh => "sh_coeffs",
        }
    }
}

/// Matrix of `x ↦ q·x` (Hamilton product) acting on 4-vectors.
#[inline]
pub fn left_isoclinic<T: Scalar>(q: &[T; 4]) -> Mat4<T> {
    let [a, b, c, d] = *q;
    [
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ]
}

/// Matrix of `x ↦ x·q` acting on 4-vectors.
#[inline]
pub fn right_isoclinic<T: Scalar>(q: &[T; 4]) -> Mat4<T> {
    let [p, q1, r, s] = *q;
    [
        [p, -q1, -r, -s],
        [q1, p, s, -r],
        [r, -s, p, q1],
        [s, r, -q1, p],
    ]
}

/// 4D rotation `R = L(q_l)·R(q_r)`. Both quaternions are normalized first.
pub fn build_rotation4<T: Scalar>(rot_left: &[T; 4], rot_right: &[T; 4]) -> Result<Mat4<T>> {
    let (l, nl) = linalg::normalize(rot_left);
    let (r, nr) = linalg::normalize(rot_right);
    if !(nl > T::zero()) || !(nr > T::zero()) {
        return Err(Error::invalid("zero-norm quaternion"));
    }
    Ok(linalg::matmul(&left_isoclinic(&l), &right_isoclinic(&r)))
}

/// Recovers a unit quaternion pair `(q_l, q_r)` with
/// `build_rotation4(q_l, q_r) == rot` for any `rot ∈ SO(4)`.
///
/// Uses the associate matrix `M_kl = ¼⟨L(e_k)R(e_l), rot⟩`, which equals the
/// rank-one outer product `q_l q_rᵀ`.
pub fn isoclinic_decompose<T: Scalar>(rot: &Mat4<T>) -> ([T; 4], [T; 4]) {
    let basis = |k: usize| {
        let mut e = [T::zero(); 4];
        e[k] = T::one();
        e
    };
    let mut assoc = [[T::zero(); 4]; 4];
    for (k, row) in assoc.iter_mut().enumerate() {
        let lk = left_isoclinic(&basis(k));
        for (l, cell) in row.iter_mut().enumerate() {
            let m = linalg::matmul(&lk, &right_isoclinic(&basis(l)));
            *cell = linalg::frob(&m, rot) * T::of(0.25);
        }
    }
    let best = (0..4)
        .max_by(|&a, &b| {
            linalg::norm(&assoc[a])
                .partial_cmp(&linalg::norm(&assoc[b]))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let (right, _) = linalg::normalize(&assoc[best]);
    let left = linalg::mat_vec(&assoc, &right);
    let (left, _) = linalg::normalize(&left);
    (left, right)
}

/// Symmetric 4×4 covariance stored as its upper triangle, row by row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covariance4<T> {
    pub sym: [T; 10],
}

const SYM4_INDEX: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];

impl<T: Scalar> Covariance4<T> {
    pub fn from_matrix(m: &Mat4<T>) -> Self {
        let mut sym = [T::zero(); 10];
        for i in 0..4 {
            for j in i..4 {
                sym[SYM4_INDEX[i][j]] = T::half() * (m[i][j] + m[j][i]);
            }
        }
        Self { sym }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.sym[SYM4_INDEX[i][j]]
    }

    pub fn matrix(&self) -> Mat4<T> {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(i, j);
            }
        }
        m
    }

    /// `Σ₄₄`.
    #[inline]
    pub fn temporal_variance(&self) -> T {
        self.get(3, 3)
    }

    /// `Σ_{1:3,4}`.
    #[inline]
    pub fn space_time(&self) -> Vec3<T> {
        [self.get(0, 3), self.get(1, 3), self.get(2, 3)]
    }

    fn guarded_temporal_variance(&self) -> Result<T> {
        let c = self.temporal_variance();
        if c > T::of(TEMPORAL_VARIANCE_GUARD) {
            Ok(c)
        } else {
            Err(Error::DegenerateCovariance(c.to_f64_lossless()))
        }
    }
}

/// `Σ = R S Sᵀ Rᵀ`.
pub fn build_cov4<T: Scalar>(g: &Gaussian4D<T>) -> Result<Covariance4<T>> {
    Ok(GeometryTrace::new(g)?.cov4)
}

/// Conditional mean `σ + Σ_{1:3,4} Σ₄₄⁻¹ (t − μ_t)`.
pub fn slice_mean<T: Scalar>(
    cov: &Covariance4<T>,
    position: &Vec3<T>,
    temporal_center: T,
    t_query: T,
) -> Result<Vec3<T>> {
    let c = cov.guarded_temporal_variance()?;
    let k = (t_query - temporal_center) / c;
    let b = cov.space_time();
    Ok([position[0] + b[0] * k, position[1] + b[1] * k, position[2] + b[2] * k])
}

/// `ω = exp(−½ (t − μ_t)² / Σ₄₄)`.
pub fn temporal_weight<T: Scalar>(temporal_variance: T, temporal_center: T, t_query: T) -> Result<T> {
    if !(temporal_variance > T::of(TEMPORAL_VARIANCE_GUARD)) {
        return Err(Error::DegenerateCovariance(temporal_variance.to_f64_lossless()));
    }
    let dt = t_query - temporal_center;
    Ok((-T::half() * dt * dt / temporal_variance).exp())
}

/// Schur complement `Σ_{1:3,1:3} − Σ_{1:3,4} Σ₄₄⁻¹ Σ_{4,1:3}`.
pub fn slice_cov<T: Scalar>(cov: &Covariance4<T>) -> Result<Mat3<T>> {
    let c = cov.guarded_temporal_variance()?;
    let b = cov.space_time();
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = cov.get(i, j) - b[i] * b[j] / c;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// The 3D Gaussian obtained by conditioning on a query time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicedGaussian<T> {
    pub mean3: Vec3<T>,
    pub cov3: Mat3<T>,
    pub temporal_weight: T,
}

pub fn slice<T: Scalar>(g: &Gaussian4D<T>, t_query: T) -> Result<SlicedGaussian<T>> {
    let cov = build_cov4(g)?;
    slice_with(&cov, g, t_query)
}

pub fn slice_with<T: Scalar>(
    cov: &Covariance4<T>,
    g: &Gaussian4D<T>,
    t_query: T,
) -> Result<SlicedGaussian<T>> {
    Ok(SlicedGaussian {
        mean3: slice_mean(cov, &g.position, g.temporal_center, t_query)?,
        cov3: slice_cov(cov)?,
        temporal_weight: temporal_weight(cov.temporal_variance(), g.temporal_center, t_query)?,
    })
}

/// Forward intermediates of `Σ = R S Sᵀ Rᵀ`, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GeometryTrace<T> {
    pub unit_left: [T; 4],
    pub unit_right: [T; 4],
    pub norm_left: T,
    pub norm_right: T,
    left: Mat4<T>,
    right: Mat4<T>,
    /// `R`.
    pub rotation: Mat4<T>,
    pub scales: [T; 4],
    /// `M = R S`, so that `Σ = M Mᵀ`.
    factor: Mat4<T>,
    pub cov4: Covariance4<T>,
}

impl<T: Scalar> GeometryTrace<T> {
    pub fn new(g: &Gaussian4D<T>) -> Result<Self> {
        let (unit_left, norm_left) = linalg::normalize(&g.rot_left);
        let (unit_right, norm_right) = linalg::normalize(&g.rot_right);
        if !(norm_left > T::zero()) || !(norm_right > T::zero()) {
            return Err(Error::invalid("zero-norm quaternion"));
        }
        let left = left_isoclinic(&unit_left);
        let right = right_isoclinic(&unit_right);
        let rotation = linalg::matmul(&left, &right);
        let scales = g.scales();
        let mut factor = rotation;
        for row in factor.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= scales[j];
            }
        }
        let full = linalg::matmul(&factor, &linalg::transpose(&factor));
        Ok(Self {
            unit_left,
            unit_right,
            norm_left,
            norm_right,
            left,
            right,
            rotation,
            scales,
            factor,
            cov4: Covariance4::from_matrix(&full),
        })
    }

    /// Backpropagates a gradient w.r.t. the entries of `Σ` (treated as 16
    /// independent entries) into the quaternions and log-scales.
    pub fn backward_cov4(&self, grad_sigma: &Mat4<T>, out: &mut Gaussian4D<T>) {
        // Σ = M Mᵀ  ⇒  ∂L/∂M = (G + Gᵀ) M
        let sym = linalg::add_mat(grad_sigma, &linalg::transpose(grad_sigma));
        let grad_m = linalg::matmul(&sym, &self.factor);
        // M = R diag(s)
        let mut grad_r = grad_m;
        let mut grad_s = [T::zero(); 4];
        for i in 0..4 {
            for j in 0..4 {
                grad_r[i][j] = grad_m[i][j] * self.scales[j];
                grad_s[j] += grad_m[i][j] * self.rotation[i][j];
            }
        }
        for k in 0..4 {
            out.log_scales[k] += grad_s[k] * self.scales[k];
        }
        // R = L(q_l) R(q_r); both maps are linear in their quaternion.
        let grad_left = linalg::matmul(&grad_r, &linalg::transpose(&self.right));
        let grad_right = linalg::matmul(&linalg::transpose(&self.left), &grad_r);
        let mut gl = [T::zero(); 4];
        let mut gr = [T::zero(); 4];
        for k in 0..4 {
            let mut e = [T::zero(); 4];
            e[k] = T::one();
            gl[k] = linalg::frob(&grad_left, &left_isoclinic(&e));
            gr[k] = linalg::frob(&grad_right, &right_isoclinic(&e));
        }
        self.backward_unit_quats(&gl, &gr, out);
    }

    /// Routes gradients w.r.t. the normalized quaternions to the raw ones.
    pub fn backward_unit_quats(&self, grad_left: &[T; 4], grad_right: &[T; 4], out: &mut Gaussian4D<T>) {
        let gl = linalg::normalize_backward(&self.unit_left, self.norm_left, grad_left);
        let gr = linalg::normalize_backward(&self.unit_right, self.norm_right, grad_right);
        for k in 0..4 {
            out.rot_left[k] += gl[k];
            out.rot_right[k] += gr[k];
        }
    }
}

/// Upstream gradients arriving at a sliced Gaussian.
#[derive(Clone, Copy, Debug)]
pub struct SliceGrad<T> {
    pub mean3: Vec3<T>,
    /// Gradient w.r.t. the full 3×3 conditional covariance.
    pub cov3: Mat3<T>,
    pub temporal_weight: T,
}

/// Backward of [`slice_with`] into `out` (accumulating).
pub fn slice_backward<T: Scalar>(
    trace: &GeometryTrace<T>,
    g: &Gaussian4D<T>,
    t_query: T,
    up: &SliceGrad<T>,
    out: &mut Gaussian4D<T>,
) {
    let cov = &trace.cov4;
    let c = cov.temporal_variance();
    let b = cov.space_time();
    let dt = t_query - g.temporal_center;
    let omega = (-T::half() * dt * dt / c).exp();

    let mut grad_sigma = [[T::zero(); 4]; 4];
    let mut grad_b = [T::zero(); 3];
    let mut grad_c = T::zero();
    let mut grad_dt = T::zero();

    // cov3 = A − b bᵀ / c
    for i in 0..3 {
        for j in 0..3 {
            let gij = up.cov3[i][j];
            grad_sigma[i][j] += gij;
            grad_b[i] -= gij * b[j] / c;
            grad_b[j] -= gij * b[i] / c;
            grad_c += gij * b[i] * b[j] / (c * c);
        }
    }
    // mean3 = σ + b Δt / c
    let mut gm_dot_b = T::zero();
    for i in 0..3 {
        out.position[i] += up.mean3[i];
        grad_b[i] += up.mean3[i] * dt / c;
        gm_dot_b += up.mean3[i] * b[i];
    }
    grad_c -= gm_dot_b * dt / (c * c);
    grad_dt += gm_dot_b / c;
    // ω = exp(−½ Δt² / c)
    grad_dt -= up.temporal_weight * omega * dt / c;
    grad_c += up.temporal_weight * omega * dt * dt / (T::two() * c * c);

    out.temporal_center -= grad_dt;
    for i in 0..3 {
        grad_sigma[i][3] += grad_b[i];
    }
    grad_sigma[3][3] += grad_c;
    trace.backward_cov4(&grad_sigma, out);
}
