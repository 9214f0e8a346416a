use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Mat3, Vec3};
use crate::scalar::Scalar;

/// Screen-space splat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D<T> {
    pub mean2: [T; 2],
    /// Projected covariance including the low-pass term.
    pub cov2: Mat2<T>,
    /// Inverse of `cov2` as `(a, b, c)` for `[[a, b], [b, c]]`.
    pub conic: [T; 3],
    pub depth: T,
    pub color: [T; 3],
    /// Effective opacity `τ ω o`.
    pub alpha_base: T,
    /// Pixel radius of the footprint's bounding circle.
    pub radius: T,
}

/// Perspective projection of a 3D Gaussian with the first-order (EWA)
/// covariance approximation `J W Σ Wᵀ Jᵀ`.
#[derive(Clone, Copy, Debug)]
pub struct Projection<T> {
    pub mean2: [T; 2],
    pub cov2: Mat2<T>,
    pub depth: T,
    /// Camera-space mean.
    pub cam: Vec3<T>,
    /// `J W`.
    jw: [[T; 3]; 2],
}

pub fn project<T: Scalar>(camera: &Camera, mean3: &Vec3<T>, cov3: &Mat3<T>, lowpass: T) -> Result<Projection<T>> {
    let pc = camera.to_camera(mean3);
    let z = pc[2];
    if !(z > T::zero()) {
        return Err(Error::BehindCamera(z.to_f64_lossless()));
    }
    let fx = T::of(camera.fx);
    let fy = T::of(camera.fy);
    let j = [[fx / z, T::zero(), -fx * pc[0] / (z * z)], [T::zero(), fy / z, -fy * pc[1] / (z * z)]];
    let jw = linalg::matmul(&j, &camera.rotation::<T>());
    let mut cov2 = linalg::matmul(&linalg::matmul(&jw, cov3), &linalg::transpose(&jw));
    // exact symmetry
    let off = T::half() * (cov2[0][1] + cov2[1][0]);
    cov2[0][1] = off;
    cov2[1][0] = off;
    cov2[0][0] += lowpass;
    cov2[1][1] += lowpass;
    Ok(Projection { mean2: camera.project_cam(&pc), cov2, depth: z, cam: pc, jw })
}

/// `(a, b, c)` of the inverse of a symmetric 2×2 matrix.
#[inline]
pub fn conic_of<T: Scalar>(cov2: &Mat2<T>) -> Option<[T; 3]> {
    let det = cov2[0][0] * cov2[1][1] - cov2[0][1] * cov2[0][1];
    if !(det > T::zero()) {
        return None;
    }
    Some([cov2[1][1] / det, -cov2[0][1] / det, cov2[0][0] / det])
}

/// Gradient of the conic `(a, b, c)` mapped to the symmetric covariance
/// gradient (off-diagonal split evenly).
#[inline]
pub fn conic_backward<T: Scalar>(cov2: &Mat2<T>, grad_conic: &[T; 3]) -> Mat2<T> {
    let (a, b, c) = (cov2[0][0], cov2[0][1], cov2[1][1]);
    let det = a * c - b * b;
    let d2 = det * det;
    let two = T::two();
    let [ga, gb, gc] = *grad_conic;
    // conic = (c, −b, a) / det
    let da = ga * (-c * c / d2) + gb * (b * c / d2) + gc * (T::one() / det - a * c / d2);
    let db = ga * (two * b * c / d2) + gb * (-T::one() / det - two * b * b / d2) + gc * (two * a * b / d2);
    let dc = ga * (T::one() / det - a * c / d2) + gb * (a * b / d2) + gc * (-a * a / d2);
    [[da, T::half() * db], [T::half() * db, dc]]
}

/// Backward of [`project`]: returns `(∂L/∂mean3, ∂L/∂cov3)` given gradients
/// w.r.t. the pixel mean and the (symmetric) projected covariance.
pub fn project_backward<T: Scalar>(
    camera: &Camera,
    proj: &Projection<T>,
    cov3: &Mat3<T>,
    grad_mean2: &[T; 2],
    grad_cov2: &Mat2<T>,
) -> (Vec3<T>, Mat3<T>) {
    let fx = T::of(camera.fx);
    let fy = T::of(camera.fy);
    let [x, y, z] = proj.cam;
    let z2 = z * z;
    let z3 = z2 * z;
    let two = T::two();

    let jwt = linalg::transpose(&proj.jw);
    let grad_cov3 = linalg::matmul(&linalg::matmul(&jwt, grad_cov2), &proj.jw);

    // ∂L/∂(JW) = 2 G (JW) Σ for symmetric G and Σ; ∂L/∂J = ∂L/∂(JW) Wᵀ
    let g_jw = linalg::matmul(&linalg::matmul(grad_cov2, &proj.jw), cov3);
    let g_jw = [linalg::scale(&g_jw[0], two), linalg::scale(&g_jw[1], two)];
    let g_j = linalg::matmul(&g_jw, &linalg::transpose(&camera.rotation::<T>()));

    let mut g_pc = [T::zero(); 3];
    // u = fx x/z + cx, v = fy y/z + cy
    g_pc[0] += grad_mean2[0] * fx / z;
    g_pc[1] += grad_mean2[1] * fy / z;
    g_pc[2] -= grad_mean2[0] * fx * x / z2 + grad_mean2[1] * fy * y / z2;
    // J = [[fx/z, 0, −fx x/z²], [0, fy/z, −fy y/z²]]
    g_pc[0] -= g_j[0][2] * fx / z2;
    g_pc[1] -= g_j[1][2] * fy / z2;
    g_pc[2] += -g_j[0][0] * fx / z2 + g_j[0][2] * two * fx * x / z3 - g_j[1][1] * fy / z2
        + g_j[1][2] * two * fy * y / z3;

    let grad_mean3 = linalg::mat_vec(&linalg::transpose(&camera.rotation::<T>()), &g_pc);
    (grad_mean3, grad_cov3)
}
