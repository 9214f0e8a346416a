//! Pinhole camera: right-handed camera frame with `+z` forward, `+x` right
//! and `+y` down, pixel `(u, v)` covering `[u, u+1) × [v, v+1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major `[R | t]` mapping world points to camera space.
    pub world_to_camera: [[f64; 4]; 3],
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fov_y_deg: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let fwd = linalg::sub(&target, &eye);
        if !(linalg::norm(&fwd) > 0.0) {
            return Err(Error::InvalidCamera("eye coincides with target".into()));
        }
        let (z, _) = linalg::normalize(&fwd);
        let down = linalg::scale(&up, -1.0);
        let x_raw = linalg::cross(&down, &z);
        if !(linalg::norm(&x_raw) > 1e-12) {
            return Err(Error::InvalidCamera("up vector is parallel to the viewing direction".into()));
        }
        let (x, _) = linalg::normalize(&x_raw);
        let y = linalg::cross(&z, &x);
        let rot = [x, y, z];
        let t = linalg::scale(&linalg::mat_vec(&rot, &eye), -1.0);
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        let cam = Self {
            fx: fy,
            fy,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            world_to_camera: [
                [rot[0][0], rot[0][1], rot[0][2], t[0]],
                [rot[1][0], rot[1][1], rot[1][2], t[1]],
                [rot[2][0], rot[2][1], rot[2][2], t[2]],
            ],
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCamera(m.into()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return bad("require 0 < near < far");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be nonzero");
        }
        if self.world_to_camera.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite extrinsics");
        }
        let r = self.rotation::<f64>();
        let rrt = linalg::matmul(&r, &linalg::transpose(&r));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                if (rrt[i][j] - want).abs() > 1e-9 {
                    return bad("rotation block is not orthonormal");
                }
            }
        }
        let det = linalg::dot(&r[0], &linalg::cross(&r[1], &r[2]));
        if (det - 1.0).abs() > 1e-9 {
            return bad("rotation block is not a proper rotation");
        }
        Ok(())
    }

    pub fn rotation<T: Scalar>(&self) -> Mat3<T> {
        let w = &self.world_to_camera;
        let mut r = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = T::of(w[i][j]);
            }
        }
        r
    }

    pub fn translation<T: Scalar>(&self) -> Vec3<T> {
        let w = &self.world_to_camera;
        [T::of(w[0][3]), T::of(w[1][3]), T::of(w[2][3])]
    }

    /// Camera center in world space, `−Rᵀ t`.
    pub fn center<T: Scalar>(&self) -> Vec3<T> {
        let r = self.rotation::<T>();
        let t = self.translation::<T>();
        linalg::scale(&linalg::mat_vec(&linalg::transpose(&r), &t), -T::one())
    }

    #[inline]
    pub fn to_camera<T: Scalar>(&self, p: &Vec3<T>) -> Vec3<T> {
        let w = &self.world_to_camera;
        let mut out = [T::zero(); 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = T::of(w[i][0]) * p[0] + T::of(w[i][1]) * p[1] + T::of(w[i][2]) * p[2] + T::of(w[i][3]);
        }
        out
    }

    /// Pinhole projection of a camera-space point.
    #[inline]
    pub fn project_cam<T: Scalar>(&self, pc: &Vec3<T>) -> [T; 2] {
        [T::of(self.fx) * pc[0] / pc[2] + T::of(self.cx), T::of(self.fy) * pc[1] / pc[2] + T::of(self.cy)]
    }

    /// Unit viewing ray through the principal point, in world space.
    pub fn forward(&self) -> [f64; 3] {
        let w = &self.world_to_camera;
        [w[2][0], w[2][1], w[2][2]]
    }
}
