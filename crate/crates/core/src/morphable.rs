//! Linear statistical face model with an identity/expression split.
//!
//! Shape is `S = S̄_id + S̄_expr + E_id p_i + E_expr p_e` and texture is
//! `T = T̄ + E_tex p_t`, both stored as flattened `3n` vectors
//! (`x0 y0 z0 x1 ...`).

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geom::Vec3;

pub const LANDMARK_COUNT: usize = 68;
pub const CAMERA_DIM: usize = 6;
pub const LIGHT_DIM: usize = 6;

/// Dense row-major `rows x cols` matrix whose columns are basis vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Basis {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("basis buffer", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            check_dim("basis column", rows, col.len())?;
            for (r, &v) in col.iter().enumerate() {
                data[r * cols + j] = v;
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + j]).collect()
    }

    /// `out += B c`
    pub fn apply_add(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(coeffs).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `B^T g`
    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &b) in out.iter_mut().zip(row) {
                *o += b * gr;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    pub mean_shape_id: Vec<f64>,
    pub mean_shape_expr: Vec<f64>,
    pub mean_texture: Vec<f64>,
    pub id_basis: Basis,
    pub expr_basis: Basis,
    pub tex_basis: Basis,
    pub triangles: Vec<[usize; 3]>,
    pub uv_coords: Vec<[f64; 2]>,
    pub landmark_indices: Vec<usize>,
}

impl MorphableModel {
    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        let n = self.uv_coords.len();
        check_dim("mean_shape_id", 3 * n, self.mean_shape_id.len())?;
        check_dim("mean_shape_expr", 3 * n, self.mean_shape_expr.len())?;
        check_dim("mean_texture", 3 * n, self.mean_texture.len())?;
        for (what, basis) in [
            ("id_basis rows", &self.id_basis),
            ("expr_basis rows", &self.expr_basis),
            ("tex_basis rows", &self.tex_basis),
        ] {
            check_dim(what, 3 * n, basis.rows())?;
            if basis.cols() == 0 {
                return Err(Error::invalid(format!("{what}: basis needs at least one column")));
            }
        }
        check_dim("landmark_indices", LANDMARK_COUNT, self.landmark_indices.len())?;
        if let Some(t) = self.triangles.iter().position(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(format!("triangle {t} references a vertex >= {n}")));
        }
        if let Some(l) = self.landmark_indices.iter().position(|&i| i >= n) {
            return Err(Error::invalid(format!("landmark {l} references a vertex >= {n}")));
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if let Some(i) = self.uv_coords.iter().position(|c| !in_unit(c[0]) || !in_unit(c[1])) {
            return Err(Error::invalid(format!("uv coordinate {i} outside [0,1]^2")));
        }
        if let Some(i) = self.mean_texture.iter().position(|&v| !in_unit(v)) {
            return Err(Error::invalid(format!("mean_texture component {i} outside [0,1]")));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.uv_coords.len()
    }

    pub fn k_id(&self) -> usize {
        self.id_basis.cols()
    }

    pub fn k_expr(&self) -> usize {
        self.expr_basis.cols()
    }

    pub fn k_tex(&self) -> usize {
        self.tex_basis.cols()
    }

    /// Zero coefficients with the given camera and light.
    pub fn neutral_params(&self, p_c: [f64; CAMERA_DIM], p_l: [f64; LIGHT_DIM]) -> ParamSet {
        ParamSet {
            p_i: vec![0.0; self.k_id()],
            p_e: vec![0.0; self.k_expr()],
            p_c,
            p_l,
            p_t: Some(vec![0.0; self.k_tex()]),
        }
    }
}

/// Per-image coefficients.
///
/// `p_c` is axis-angle rotation (3), image-plane translation (2), log-scale (1).
/// `p_l` is light direction (3), ambient, diffuse and specular gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    pub p_i: Vec<f64>,
    pub p_e: Vec<f64>,
    pub p_c: [f64; CAMERA_DIM],
    pub p_l: [f64; LIGHT_DIM],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_t: Option<Vec<f64>>,
}

impl ParamSet {
    pub fn validate(&self, model: &MorphableModel) -> Result<()> {
        check_dim("p_i", model.k_id(), self.p_i.len())?;
        check_dim("p_e", model.k_expr(), self.p_e.len())?;
        if let Some(p_t) = &self.p_t {
            check_dim("p_t", model.k_tex(), p_t.len())?;
        }
        Ok(())
    }

    /// Flattens into `[p_i, p_e, p_c, p_l, p_t?]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(&self.p_i);
        v.extend_from_slice(&self.p_e);
        v.extend_from_slice(&self.p_c);
        v.extend_from_slice(&self.p_l);
        if let Some(p_t) = &self.p_t {
            v.extend_from_slice(p_t);
        }
        v
    }

    /// Inverse of [`ParamSet::to_vec`], using `self` for the layout.
    pub fn with_values(&self, v: &[f64]) -> ParamSet {
        let (ki, ke) = (self.p_i.len(), self.p_e.len());
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &v[at..at + n];
            at += n;
            s.to_vec()
        };
        let p_i = take(ki);
        let p_e = take(ke);
        let p_c = take(CAMERA_DIM).try_into().unwrap();
        let p_l = take(LIGHT_DIM).try_into().unwrap();
        let p_t = self.p_t.as_ref().map(|t| take(t.len()));
        ParamSet {
            p_i,
            p_e,
            p_c,
            p_l,
            p_t,
        }
    }
}

fn to_rows(flat: Vec<f64>) -> Vec<Vec3> {
    flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn flatten(rows: &[Vec3]) -> Vec<f64> {
    rows.iter().flat_map(|r| r.iter().copied()).collect()
}

/// Vertex positions for identity/expression coefficients.
pub fn sample_shape(model: &MorphableModel, p_i: &[f64], p_e: &[f64]) -> Result<Vec<Vec3>> {
    check_dim("p_i", model.k_id(), p_i.len())?;
    check_dim("p_e", model.k_expr(), p_e.len())?;
    let mut flat: Vec<f64> = model
        .mean_shape_id
        .iter()
        .zip(&model.mean_shape_expr)
        .map(|(a, b)| a + b)
        .collect();
    model.id_basis.apply_add(p_i, &mut flat);
    model.expr_basis.apply_add(p_e, &mut flat);
    Ok(to_rows(flat))
}

/// Pullback of [`sample_shape`]: returns `(d p_i, d p_e)`.
pub fn sample_shape_pullback(model: &MorphableModel, d_shape: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
    let g = flatten(d_shape);
    (model.id_basis.apply_transpose(&g), model.expr_basis.apply_transpose(&g))
}

/// Per-vertex colors `T̄ + E_tex p_t`, unclamped.
pub fn sample_texture(model: &MorphableModel, p_t: &[f64]) -> Result<Vec<Vec3>> {
    check_dim("p_t", model.k_tex(), p_t.len())?;
    let mut flat = model.mean_texture.clone();
    model.tex_basis.apply_add(p_t, &mut flat);
    Ok(to_rows(flat))
}

pub fn sample_texture_pullback(model: &MorphableModel, d_colors: &[Vec3]) -> Vec<f64> {
    model.tex_basis.apply_transpose(&flatten(d_colors))
}

/// Gathers the landmark rows of `shape`, in landmark order.
pub fn landmark_vertices(model: &MorphableModel, shape: &[Vec3]) -> Result<Vec<Vec3>> {
    check_dim("shape rows", model.vertex_count(), shape.len())?;
    Ok(model.landmark_indices.iter().map(|&i| shape[i]).collect())
}

/// Scatters landmark cotangents back onto all vertices.
pub fn landmark_vertices_pullback(model: &MorphableModel, d_landmarks: &[Vec3]) -> Vec<Vec3> {
    let mut out = vec![[0.0; 3]; model.vertex_count()];
    for (&i, d) in model.landmark_indices.iter().zip(d_landmarks) {
        for k in 0..3 {
            out[i][k] += d[k];
        }
    }
    out
}
