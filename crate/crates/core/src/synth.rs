//! Synthetic morphable model and rendered dataset.
//!
//! The mesh is the front half (facing `-z`) of a subdivided icosphere. Bases
//! are smooth random sinusoidal fields; backgrounds are noisy gradients.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::Landmarks;
use crate::geom::{cross3, norm3, sub3, Vec3};
use crate::image::{Image, Plane};
use crate::morphable::{
    landmark_vertices, sample_shape, sample_texture, Basis, MorphableModel, ParamSet, LANDMARK_COUNT,
};
use crate::render::{form_image, project, vertex_normals, Camera, RenderConfig};
use crate::uvtex::{unwrap, UvMap};

/// Binary attribute derived from the ground-truth coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeRule {
    /// Sign of the first identity coefficient.
    #[default]
    IdSign,
    /// Sign of the first texture coefficient.
    TexSign,
}

impl AttributeRule {
    pub fn label(&self, params: &ParamSet) -> i8 {
        let v = match self {
            Self::IdSign => params.p_i[0],
            Self::TexSign => params.p_t.as_ref().map_or(0.0, |t| t[0]),
        };
        if v >= 0.0 {
            1
        } else {
            -1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_subdiv: usize,
    pub k_i: usize,
    pub k_e: usize,
    pub k_t: usize,
    pub n_samples: usize,
    pub image_size: usize,
    pub uv_size: usize,
    pub coefficient_scale: f64,
    pub attribute_rule: AttributeRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_subdiv: 3,
            k_i: 8,
            k_e: 4,
            k_t: 8,
            n_samples: 200,
            image_size: 64,
            uv_size: 64,
            coefficient_scale: 3.0,
            attribute_rule: AttributeRule::IdSign,
        }
    }
}

impl SynthConfig {
    /// Checks the model-building fields; `n_samples` is checked by
    /// [`make_dataset`].
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_i", self.k_i),
            ("k_e", self.k_e),
            ("k_t", self.k_t),
            ("image_size", self.image_size),
            ("uv_size", self.uv_size),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(2..=6).contains(&self.n_subdiv) {
            return Err(Error::invalid(format!("n_subdiv must lie in 2..=6, got {}", self.n_subdiv)));
        }
        if !(self.coefficient_scale >= 0.0) {
            return Err(Error::invalid("coefficient_scale must be non-negative"));
        }
        Ok(())
    }
}

fn icosphere(subdiv: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| unit(*v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn unit(v: Vec3) -> Vec3 {
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Keeps the triangles whose vertices all lie in the `z <= 0` half and
/// compacts the vertex list.
fn front_half(verts: &[Vec3], faces: &[[usize; 3]]) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let keep = |i: usize| verts[i][2] <= 1e-9;
    let mut remap = vec![usize::MAX; verts.len()];
    let mut out_v = Vec::new();
    let mut out_f = Vec::new();
    for f in faces {
        if f.iter().all(|&i| keep(i)) {
            let mapped = f.map(|i| {
                if remap[i] == usize::MAX {
                    remap[i] = out_v.len();
                    out_v.push(verts[i]);
                }
                remap[i]
            });
            out_f.push(mapped);
        }
    }
    (out_v, out_f)
}

/// Sum of a few random sinusoids of the vertex position, one field per
/// output channel, normalized to unit length.
fn smooth_field(verts: &[Vec3], rng: &mut ChaCha8Rng, max_freq: f64, support: impl Fn(Vec3) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; 3 * verts.len()];
    for _ in 0..3 {
        let freq: Vec3 = [0, 1, 2].map(|_| rng.random_range(-max_freq..max_freq));
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp: Vec3 = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
        for (i, v) in verts.iter().enumerate() {
            let s = (freq[0] * v[0] + freq[1] * v[1] + freq[2] * v[2] + phase).sin() * support(*v);
            for ch in 0..3 {
                out[3 * i + ch] += amp[ch] * s;
            }
        }
    }
    let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Farthest-point sampling seeded at the vertex nearest the front pole.
fn spread_landmarks(verts: &[Vec3]) -> Vec<usize> {
    let dist2 = |a: Vec3, b: Vec3| {
        let d = sub3(a, b);
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    };
    let first = (0..verts.len())
        .min_by(|&a, &b| dist2(verts[a], [0.0, 0.0, -1.0]).total_cmp(&dist2(verts[b], [0.0, 0.0, -1.0])))
        .expect("non-empty mesh");
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = verts.iter().map(|&v| dist2(v, verts[first])).collect();
    while chosen.len() < LANDMARK_COUNT {
        let next = (0..verts.len())
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .expect("non-empty mesh");
        chosen.push(next);
        for (i, v) in verts.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(*v, verts[next]));
        }
    }
    chosen
}

/// Builds the synthetic face-proxy model. Deterministic in `cfg.seed`.
pub fn make_model(cfg: &SynthConfig) -> Result<MorphableModel> {
    cfg.validate()?;
    let (sphere, faces) = icosphere(cfg.n_subdiv);
    let (verts, triangles) = front_half(&sphere, &faces);
    if verts.len() < LANDMARK_COUNT {
        return Err(Error::invalid("mesh too coarse for 68 landmarks"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // A slightly narrow, shallow ellipsoid.
    let shape: Vec<Vec3> = verts.iter().map(|v| [0.8 * v[0], v[1], 0.7 * v[2]]).collect();
    let mean_shape_id: Vec<f64> = shape.iter().flatten().copied().collect();
    let mean_shape_expr = vec![0.0; mean_shape_id.len()];
    let uv_coords: Vec<[f64; 2]> = verts
        .iter()
        .map(|v| {
            let u = 0.5 + v[0].atan2(-v[2]) / std::f64::consts::PI;
            [u.clamp(0.0, 1.0), ((1.0 - v[1]) / 2.0).clamp(0.0, 1.0)]
        })
        .collect();
    let mean_texture: Vec<f64> = verts
        .iter()
        .flat_map(|v| {
            let shade = 0.08 * v[1] - 0.05 * v[0];
            [0.78 + shade, 0.58 + 0.8 * shade, 0.48 + 0.6 * shade]
        })
        .collect();
    let rows = 3 * verts.len();
    let id: Vec<Vec<f64>> = (0..cfg.k_i).map(|_| smooth_field(&verts, &mut rng, 2.0, |_| 1.0)).collect();
    // Expression fields concentrate on the lower half.
    let expr: Vec<Vec<f64>> = (0..cfg.k_e)
        .map(|_| smooth_field(&verts, &mut rng, 3.0, |v| (0.5 - 0.5 * v[1]).powi(2)))
        .collect();
    let tex: Vec<Vec<f64>> = (0..cfg.k_t).map(|_| smooth_field(&verts, &mut rng, 2.5, |_| 1.0)).collect();
    let model = MorphableModel {
        mean_shape_id,
        mean_shape_expr,
        mean_texture,
        id_basis: Basis::from_columns(rows, &id)?,
        expr_basis: Basis::from_columns(rows, &expr)?,
        tex_basis: Basis::from_columns(rows, &tex)?,
        triangles,
        uv_coords,
        landmark_indices: spread_landmarks(&verts),
    };
    model.validate()?;
    Ok(model)
}

/// One generated sample with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub image: Image,
    pub params: ParamSet,
    /// Hard coverage of the ground-truth mesh.
    pub silhouette: Plane,
    pub uv: UvMap,
    pub landmarks: Landmarks,
    pub label: i8,
}

fn background(size: usize, rng: &mut ChaCha8Rng) -> Image {
    let c0: Vec3 = [0, 1, 2].map(|_| rng.random_range(0.0..1.0));
    let c1: Vec3 = [0, 1, 2].map(|_| rng.random_range(0.0..1.0));
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    const G: usize = 5;
    let grid: Vec<f64> = (0..G * G).map(|_| rng.random_range(-0.15..0.15)).collect();
    let mut img = Image::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
            let t = (0.5 + 0.5 * ((fx - 0.5) * dx + (fy - 0.5) * dy) * 2f64.sqrt()).clamp(0.0, 1.0);
            let (gx, gy) = (fx * (G - 1) as f64, fy * (G - 1) as f64);
            let (ix, iy) = ((gx as usize).min(G - 2), (gy as usize).min(G - 2));
            let (ax, ay) = (gx - ix as f64, gy - iy as f64);
            let noise = (1.0 - ay) * ((1.0 - ax) * grid[iy * G + ix] + ax * grid[iy * G + ix + 1])
                + ay * ((1.0 - ax) * grid[(iy + 1) * G + ix] + ax * grid[(iy + 1) * G + ix + 1]);
            img.set_pixel(x, y, [0, 1, 2].map(|c| ((1.0 - t) * c0[c] + t * c1[c] + noise).clamp(0.0, 1.0)));
        }
    }
    img
}

/// Screen-space scale at which the face proxy fills most of the viewport.
pub const FACE_SCALE: f64 = 0.7;

/// Mean face, frontal and centered, lit head-on with mid gains.
pub fn frontal_params(model: &MorphableModel) -> ParamSet {
    model.neutral_params([0.0, 0.0, 0.0, 0.0, 0.0, FACE_SCALE.ln()], [0.0, 0.0, -1.0, 0.6, 0.6, 0.6])
}

fn draw_params(model: &MorphableModel, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut coeffs = |k: usize| -> Vec<f64> {
        if cfg.coefficient_scale == 0.0 {
            return vec![0.0; k];
        }
        let d = Normal::new(0.0, cfg.coefficient_scale).expect("positive scale");
        (0..k).map(|_| d.sample(rng)).collect()
    };
    let p_i = coeffs(model.k_id());
    let p_e = coeffs(model.k_expr());
    let p_t = coeffs(model.k_tex());
    let mut rot: Vec3 = [rng.random_range(-0.35..0.35), rng.random_range(-0.35..0.35), rng.random_range(-0.15..0.15)];
    let r = norm3(rot);
    if r > 0.5 {
        rot = rot.map(|v| v * 0.5 / r);
    }
    let p_c = [
        rot[0],
        rot[1],
        rot[2],
        rng.random_range(-0.08..0.08),
        rng.random_range(-0.08..0.08),
        FACE_SCALE.ln() + rng.random_range(-0.08..0.08),
    ];
    let p_l = [
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.6..0.6),
        -1.0,
        rng.random_range(0.2..1.0),
        rng.random_range(0.2..1.0),
        rng.random_range(0.2..1.0),
    ];
    ParamSet {
        p_i,
        p_e,
        p_c,
        p_l,
        p_t: Some(p_t),
    }
}

/// Renders one sample from its parameters: the linear texture unwrapped into
/// a UV map, the image formed from that map, and the render composited over
/// a background by hard coverage.
pub fn render_sample(
    model: &MorphableModel,
    params: &ParamSet,
    uv_size: usize,
    image_size: usize,
    bg: &Image,
) -> Result<(Image, Plane, UvMap)> {
    let p_t = params.p_t.as_deref().ok_or_else(|| Error::invalid("sample parameters need p_t"))?;
    let colors = sample_texture(model, p_t)?;
    let uv = unwrap(&colors, &model.uv_coords, uv_size, uv_size)?;
    let out = form_image(model, &uv, params, &RenderConfig::with_size(image_size, image_size))?;
    let coverage = out.coverage();
    let image = crate::gan::blend(&coverage, &out.image, bg)?;
    Ok((image, coverage, uv))
}

/// Projected ground-truth landmarks; a landmark is visible when its vertex
/// normal faces the viewer.
pub fn project_landmarks(model: &MorphableModel, params: &ParamSet) -> Result<Landmarks> {
    let shape = sample_shape(model, &params.p_i, &params.p_e)?;
    let cam = Camera::from_params(&params.p_c);
    let proj = project(&shape, &cam);
    let normals = vertex_normals(&proj.view, &model.triangles);
    let lm = landmark_vertices(model, &shape)?;
    let points = project(&lm, &cam).screen;
    let visible = model.landmark_indices.iter().map(|&i| normals[i][2] < 0.0).collect();
    Ok(Landmarks { points, visible })
}

/// Draws and renders `cfg.n_samples` samples. Sample `i` uses its own RNG
/// stream, so the result does not depend on scheduling.
pub fn make_dataset(model: &MorphableModel, cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    model.validate()?;
    if cfg.n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let params = draw_params(model, cfg, &mut rng);
            let bg = background(cfg.image_size, &mut rng);
            let (image, silhouette, uv) = render_sample(model, &params, cfg.uv_size, cfg.image_size, &bg)?;
            Ok(SynthSample {
                landmarks: project_landmarks(model, &params)?,
                label: cfg.attribute_rule.label(&params),
                image,
                params,
                silhouette,
                uv,
            })
        })
        .collect()
}

/// Smallest triangle area of the model's mean shape.
pub fn min_triangle_area(model: &MorphableModel) -> f64 {
    let v: Vec<Vec3> = model.mean_shape_id.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    model
        .triangles
        .iter()
        .map(|t| 0.5 * norm3(cross3(sub3(v[t[1]], v[t[0]]), sub3(v[t[2]], v[t[0]]))))
        .fold(f64::INFINITY, f64::min)
}
