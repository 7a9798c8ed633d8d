//! Per-pixel Phong shading over interpolated rasterizer buffers.

use crate::geom::{
    add3, cross3, dot3, normalize3, normalize3_pullback, scale3, sub3, Vec3,
};

/// White directional light. Gains are clamped at zero when used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Light {
    /// Direction from the surface towards the light; normalized when used.
    pub direction: Vec3,
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
}

impl Light {
    pub fn from_params(p: &[f64; 6]) -> Self {
        Self {
            direction: [p[0], p[1], p[2]],
            ambient: p[3],
            diffuse: p[4],
            specular: p[5],
        }
    }

    pub fn to_params(&self) -> [f64; 6] {
        let [a, b, c] = self.direction;
        [a, b, c, self.ambient, self.diffuse, self.specular]
    }

    pub fn ambient_only(ambient: f64) -> Self {
        Self {
            direction: [0.0, 0.0, -1.0],
            ambient,
            diffuse: 0.0,
            specular: 0.0,
        }
    }
}

/// Light with the direction normalized and gains clamped, plus what the
/// pullback needs to undo both.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EffectiveLight {
    pub dir: Vec3,
    dir_len: f64,
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    raw: Light,
}

impl EffectiveLight {
    pub fn new(light: &Light) -> Self {
        let (dir, dir_len) = normalize3(light.direction);
        Self {
            dir,
            dir_len,
            ambient: light.ambient.max(0.0),
            diffuse: light.diffuse.max(0.0),
            specular: light.specular.max(0.0),
            raw: *light,
        }
    }

    /// Maps cotangents on the effective quantities back to `p_l` layout.
    pub fn pullback(&self, d_dir: Vec3, d_gains: [f64; 3]) -> [f64; 6] {
        let dd = normalize3_pullback(self.dir, self.dir_len, d_dir);
        // Right derivative at zero, so a gain projected onto zero can recover.
        let pass = |raw: f64, g: f64| if raw >= 0.0 { g } else { 0.0 };
        [
            dd[0],
            dd[1],
            dd[2],
            pass(self.raw.ambient, d_gains[0]),
            pass(self.raw.diffuse, d_gains[1]),
            pass(self.raw.specular, d_gains[2]),
        ]
    }
}

/// Shading of one pixel: `clamp(c (ka + kd max(0, n.l)) + ks max(0, r.v)^alpha)`.
#[inline]
pub(crate) fn shade_pixel(c: Vec3, n: Vec3, light: &EffectiveLight, view: Vec3, shininess: f64) -> Vec3 {
    let ndl = dot3(n, light.dir);
    let lit = light.ambient + light.diffuse * ndl.max(0.0);
    let rdv = 2.0 * ndl * dot3(n, view) - dot3(light.dir, view);
    let spec = if rdv > 0.0 { light.specular * rdv.powf(shininess) } else { 0.0 };
    [
        (c[0] * lit + spec).clamp(0.0, 1.0),
        (c[1] * lit + spec).clamp(0.0, 1.0),
        (c[2] * lit + spec).clamp(0.0, 1.0),
    ]
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PixelGrad {
    pub color: Vec3,
    pub normal: Vec3,
    pub dir: Vec3,
    /// Ambient, diffuse, specular.
    pub gains: [f64; 3],
}

pub(crate) fn shade_pixel_pullback(
    c: Vec3,
    n: Vec3,
    light: &EffectiveLight,
    view: Vec3,
    shininess: f64,
    d_out: Vec3,
) -> PixelGrad {
    let ndl = dot3(n, light.dir);
    let diff = ndl.max(0.0);
    let lit = light.ambient + light.diffuse * diff;
    let ndv = dot3(n, view);
    let rdv = 2.0 * ndl * ndv - dot3(light.dir, view);
    let pow = if rdv > 0.0 { rdv.powf(shininess) } else { 0.0 };
    let spec = light.specular * pow;

    let mut g = [0.0; 3];
    for ch in 0..3 {
        let pre = c[ch] * lit + spec;
        if (0.0..=1.0).contains(&pre) {
            g[ch] = d_out[ch];
        }
    }
    let d_lit = g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
    let d_spec = g[0] + g[1] + g[2];

    let mut out = PixelGrad {
        color: scale3(g, lit),
        gains: [d_lit, d_lit * diff, d_spec * pow],
        ..Default::default()
    };
    let mut d_ndl = if ndl > 0.0 { d_lit * light.diffuse } else { 0.0 };
    if rdv > 0.0 {
        let d_rdv = d_spec * light.specular * shininess * rdv.powf(shininess - 1.0);
        d_ndl += d_rdv * 2.0 * ndv;
        out.normal = scale3(view, d_rdv * 2.0 * ndl);
        out.dir = scale3(view, -d_rdv);
    }
    out.normal = add3(out.normal, scale3(light.dir, d_ndl));
    out.dir = add3(out.dir, scale3(n, d_ndl));
    out
}

/// Area-weighted vertex normals; vertices with no incident area get `(0, 0, 1)`.
pub fn vertex_normals(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![[0.0; 3]; vertices.len()];
    for t in triangles {
        let fnorm = face_cross(vertices, t);
        for &i in t {
            acc[i] = add3(acc[i], fnorm);
        }
    }
    acc.into_iter()
        .map(|m| {
            if dot3(m, m) > 0.0 {
                normalize3(m).0
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}

#[inline]
fn face_cross(vertices: &[Vec3], t: &[usize; 3]) -> Vec3 {
    let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    cross3(sub3(b, a), sub3(c, a))
}

pub fn vertex_normals_pullback(
    vertices: &[Vec3],
    triangles: &[[usize; 3]],
    d_normals: &[Vec3],
) -> Vec<Vec3> {
    let mut acc = vec![[0.0; 3]; vertices.len()];
    for t in triangles {
        let fnorm = face_cross(vertices, t);
        for &i in t {
            acc[i] = add3(acc[i], fnorm);
        }
    }
    let d_acc: Vec<Vec3> = acc
        .iter()
        .zip(d_normals)
        .map(|(&m, &g)| {
            if dot3(m, m) > 0.0 {
                let (u, len) = normalize3(m);
                normalize3_pullback(u, len, g)
            } else {
                [0.0; 3]
            }
        })
        .collect();
    let mut out = vec![[0.0; 3]; vertices.len()];
    for t in triangles {
        let g = add3(add3(d_acc[t[0]], d_acc[t[1]]), d_acc[t[2]]);
        let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        let (e1, e2) = (sub3(b, a), sub3(c, a));
        // (e1 x e2) . g = e1 . (e2 x g) = e2 . (g x e1)
        let d1 = cross3(e2, g);
        let d2 = cross3(g, e1);
        out[t[0]] = sub3(out[t[0]], add3(d1, d2));
        out[t[1]] = add3(out[t[1]], d1);
        out[t[2]] = add3(out[t[2]], d2);
    }
    out
}

/// Interpolated attributes of one covered pixel.
#[inline]
pub(crate) fn interpolate(bary: [f64; 3], tri: &[usize; 3], attr: &[Vec3]) -> Vec3 {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let a = attr[tri[k]];
        for ch in 0..3 {
            out[ch] += bary[k] * a[ch];
        }
    }
    out
}
