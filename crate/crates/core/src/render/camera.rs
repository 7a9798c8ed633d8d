//! Weak-perspective camera: axis-angle rotation, uniform scale, 2D shift.

use crate::geom::{
    mat_mul, mat_t_vec, mat_vec, skew, Mat3, Vec2, Vec3, IDENTITY3,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// Axis-angle rotation (radians times unit axis).
    pub rotation: Vec3,
    /// Translation in normalized image units.
    pub translation: Vec2,
    pub log_scale: f64,
}

impl Camera {
    pub const IDENTITY: Camera = Camera {
        rotation: [0.0; 3],
        translation: [0.0; 2],
        log_scale: 0.0,
    };

    pub fn from_params(p: &[f64; 6]) -> Self {
        Self {
            rotation: [p[0], p[1], p[2]],
            translation: [p[3], p[4]],
            log_scale: p[5],
        }
    }

    pub fn to_params(&self) -> [f64; 6] {
        let [a, b, c] = self.rotation;
        let [x, y] = self.translation;
        [a, b, c, x, y, self.log_scale]
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }
}

const SERIES_ANGLE: f64 = 1e-6;
const DERIVATIVE_SERIES_ANGLE: f64 = 1e-2;

/// `R = I + a K + b K^2` with `K = [w]x`; returns `(a, b)`.
fn rodrigues_coeffs(theta: f64) -> (f64, f64) {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let h = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * h * h / (theta * theta))
    }
}

/// `(a'(θ)/θ, b'(θ)/θ)`, the radial derivatives of the Rodrigues coefficients.
fn rodrigues_coeff_derivs(theta: f64) -> (f64, f64) {
    let t2 = theta * theta;
    if theta < DERIVATIVE_SERIES_ANGLE {
        (-1.0 / 3.0 + t2 / 30.0, -1.0 / 12.0 + t2 / 180.0)
    } else {
        let (s, c) = theta.sin_cos();
        (
            (theta * c - s) / (t2 * theta),
            (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    }
}

pub fn rotation_matrix(w: Vec3) -> Mat3 {
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let (a, b) = rodrigues_coeffs(theta);
    let k = skew(w);
    let k2 = mat_mul(&k, &k);
    let mut r = IDENTITY3;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// Partial derivatives `dR/dw_k` for `k = 0, 1, 2`.
pub fn rotation_jacobian(w: Vec3) -> [Mat3; 3] {
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let (a, b) = rodrigues_coeffs(theta);
    let (a1, b1) = rodrigues_coeff_derivs(theta);
    let k = skew(w);
    let k2 = mat_mul(&k, &k);
    std::array::from_fn(|axis| {
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let ek = skew(e);
        let ek_k = mat_mul(&ek, &k);
        let k_ek = mat_mul(&k, &ek);
        let mut d = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] = a * ek[i][j]
                    + b * (ek_k[i][j] + k_ek[i][j])
                    + w[axis] * (a1 * k[i][j] + b1 * k2[i][j]);
            }
        }
        d
    })
}

/// Result of projecting a vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Screen positions in the `[-1, 1]^2` viewport.
    pub screen: Vec<Vec2>,
    /// View-space depth; smaller is nearer.
    pub depth: Vec<f64>,
    /// Rotated (view-space) vertices, before scale and shift.
    pub view: Vec<Vec3>,
}

/// `v' = R v`, `screen = exp(log_scale) v'_xy + translation`, `depth = v'_z`.
pub fn project(vertices: &[Vec3], cam: &Camera) -> Projection {
    let r = rotation_matrix(cam.rotation);
    let s = cam.scale();
    let view: Vec<Vec3> = vertices.iter().map(|&v| mat_vec(&r, v)).collect();
    let screen = view
        .iter()
        .map(|v| [s * v[0] + cam.translation[0], s * v[1] + cam.translation[1]])
        .collect();
    let depth = view.iter().map(|v| v[2]).collect();
    Projection {
        screen,
        depth,
        view,
    }
}

/// Pullback of [`project`].
///
/// `d_view` holds cotangents on the rotated vertices (the depth cotangent is
/// its z component); it may be empty. Returns vertex cotangents and the
/// camera cotangent in `p_c` layout.
pub fn project_pullback(
    vertices: &[Vec3],
    cam: &Camera,
    d_screen: &[Vec2],
    d_view: &[Vec3],
) -> (Vec<Vec3>, [f64; 6]) {
    let r = rotation_matrix(cam.rotation);
    let s = cam.scale();
    let mut d_cam = [0.0; 6];
    let mut g = [[0.0; 3]; 3];
    let mut d_vertices = Vec::with_capacity(vertices.len());
    for (i, &v) in vertices.iter().enumerate() {
        let vp = mat_vec(&r, v);
        let ds = d_screen[i];
        let mut dvp = if d_view.is_empty() { [0.0; 3] } else { d_view[i] };
        dvp[0] += s * ds[0];
        dvp[1] += s * ds[1];
        d_cam[3] += ds[0];
        d_cam[4] += ds[1];
        d_cam[5] += s * (vp[0] * ds[0] + vp[1] * ds[1]);
        for a in 0..3 {
            for b in 0..3 {
                g[a][b] += dvp[a] * v[b];
            }
        }
        d_vertices.push(mat_t_vec(&r, dvp));
    }
    let jac = rotation_jacobian(cam.rotation);
    for k in 0..3 {
        d_cam[k] = (0..3)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| g[a][b] * jac[k][a][b])
            .sum();
    }
    (d_vertices, d_cam)
}
