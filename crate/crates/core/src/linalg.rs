//! Fixed-size dense helpers. Matrices are row-major nested arrays.

use crate::scalar::Scalar;

pub type Vec3<T> = [T; 3];
pub type Mat2<T> = [[T; 2]; 2];
pub type Mat3<T> = [[T; 3]; 3];
pub type Mat4<T> = [[T; 4]; 4];

#[inline]
pub fn zeros<T: Scalar, const R: usize, const C: usize>() -> [[T; C]; R] {
    [[T::zero(); C]; R]
}

#[inline]
pub fn identity<T: Scalar, const N: usize>() -> [[T; N]; N] {
    let mut m = [[T::zero(); N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

#[inline]
pub fn matmul<T: Scalar, const R: usize, const K: usize, const C: usize>(
    a: &[[T; K]; R],
    b: &[[T; C]; K],
) -> [[T; C]; R] {
    let mut out = [[T::zero(); C]; R];
    for i in 0..R {
        for k in 0..K {
            let aik = a[i][k];
            for j in 0..C {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

#[inline]
pub fn transpose<T: Scalar, const R: usize, const C: usize>(a: &[[T; C]; R]) -> [[T; R]; C] {
    let mut out = [[T::zero(); R]; C];
    for i in 0..R {
        for j in 0..C {
            out[j][i] = a[i][j];
        }
    }
    out
}

#[inline]
pub fn add_mat<T: Scalar, const R: usize, const C: usize>(
    a: &[[T; C]; R],
    b: &[[T; C]; R],
) -> [[T; C]; R] {
    let mut out = *a;
    for i in 0..R {
        for j in 0..C {
            out[i][j] += b[i][j];
        }
    }
    out
}

#[inline]
pub fn mat_vec<T: Scalar, const R: usize, const C: usize>(a: &[[T; C]; R], v: &[T; C]) -> [T; R] {
    let mut out = [T::zero(); R];
    for i in 0..R {
        for j in 0..C {
            out[i] += a[i][j] * v[j];
        }
    }
    out
}

#[inline]
pub fn dot<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> T {
    let mut s = T::zero();
    for i in 0..N {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm<T: Scalar, const N: usize>(a: &[T; N]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> [T; N] {
    let mut out = *a;
    for i in 0..N {
        out[i] -= b[i];
    }
    out
}

#[inline]
pub fn add<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> [T; N] {
    let mut out = *a;
    for i in 0..N {
        out[i] += b[i];
    }
    out
}

#[inline]
pub fn scale<T: Scalar, const N: usize>(a: &[T; N], s: T) -> [T; N] {
    a.map(|x| x * s)
}

#[inline]
pub fn cross<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Frobenius inner product.
#[inline]
pub fn frob<T: Scalar, const R: usize, const C: usize>(a: &[[T; C]; R], b: &[[T; C]; R]) -> T {
    let mut s = T::zero();
    for i in 0..R {
        for j in 0..C {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Unit vector and the norm it was divided by.
#[inline]
pub fn normalize<T: Scalar, const N: usize>(a: &[T; N]) -> ([T; N], T) {
    let n = norm(a);
    (scale(a, T::one() / n), n)
}

/// Backward of `normalize`: maps the gradient w.r.t. the unit vector `u`
/// (obtained by dividing by `n`) to the gradient w.r.t. the raw vector.
#[inline]
pub fn normalize_backward<T: Scalar, const N: usize>(u: &[T; N], n: T, grad_u: &[T; N]) -> [T; N] {
    let proj = dot(u, grad_u);
    let mut out = [T::zero(); N];
    for i in 0..N {
        out[i] = (grad_u[i] - u[i] * proj) / n;
    }
    out
}

/// Largest eigenvalue of a symmetric 2×2 matrix.
#[inline]
pub fn sym2_max_eigen<T: Scalar>(m: &Mat2<T>) -> T {
    let mid = T::half() * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (mid * mid - det).max(T::zero()).sqrt();
    mid + disc
}
