//! Small fixed-size vector helpers over `[f64; 3]`.

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn length_sq(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn length(a: Vec3) -> f64 {
    length_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: Vec3, b: Vec3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// Returns `None` for vectors shorter than `1e-12`.
#[inline]
pub fn normalize(a: Vec3) -> Option<Vec3> {
    let len = length(a);
    if len < 1e-12 {
        None
    } else {
        Some(scale(a, 1.0 / len))
    }
}

/// 3x3 matrix stored row-major.
pub type Mat3 = [f64; 9];

#[inline]
pub fn mat3_mul_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
        m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
        m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
    ]
}

#[inline]
pub fn mat3_transpose(m: &Mat3) -> Mat3 {
    [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]]
}

/// Max absolute entry of RᵀR − I; zero for an orthonormal matrix.
pub fn orthonormality_residual(m: &Mat3) -> f64 {
    let t = mat3_transpose(m);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += t[i * 3 + k] * m[k * 3 + j];
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - expect).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_right_handed() {
        assert_eq!(cross([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_is_orthonormal() {
        let id: Mat3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(orthonormality_residual(&id), 0.0);
    }
}
