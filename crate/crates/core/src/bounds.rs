use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Axis-aligned world box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Aabb {
    fn default() -> Self {
        Self { min: [-1.0; 3], max: [1.0; 3] }
    }
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Maps the box to `[-1, 1]³`.
    #[inline]
    pub fn normalize<T: Scalar>(&self, p: &[T; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for i in 0..3 {
            let lo = T::of(self.min[i]);
            let w = T::of(self.max[i] - self.min[i]);
            out[i] = T::two() * (p[i] - lo) / w - T::one();
        }
        out
    }

    /// `∂ normalize(p)_i / ∂ p_i`.
    #[inline]
    pub fn normalize_scale<T: Scalar>(&self) -> [T; 3] {
        let e = self.extent();
        [T::of(2.0 / e[0]), T::of(2.0 / e[1]), T::of(2.0 / e[2])]
    }
}
