//! Differentiable image formation.
//!
//! Geometry runs through a hard z-buffer ([`rasterize`]) whose barycentrics
//! drive color interpolation and Phong shading, so texture and light
//! gradients are exact and geometry gradients are interior-only. Boundary
//! sensitivity comes from the separate [`soft_silhouette`].
//!
//! The viewport is the square `[-1, 1]^2`; smaller view-space z is nearer.

mod camera;
mod raster;
mod shade;
mod silhouette;

pub use camera::{project, project_pullback, rotation_jacobian, rotation_matrix, Camera, Projection};
pub use raster::{barycentric, barycentric_pullback, pixel_center, rasterize, Raster};
pub use shade::{vertex_normals, vertex_normals_pullback, Light};
pub use silhouette::{soft_silhouette, soft_silhouette_pullback};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize3, normalize3_pullback, Vec2, Vec3};
use crate::image::{Image, Plane};
use crate::morphable::{sample_shape, sample_shape_pullback, MorphableModel, ParamSet};
use crate::uvtex::{UvMap, UvSampler};
use shade::{interpolate, shade_pixel, shade_pixel_pullback, EffectiveLight};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Soft-silhouette temperature in squared normalized screen units.
    pub sigma: f64,
    pub background: [f64; 3],
    pub shininess: f64,
    /// Direction from the surface towards the viewer.
    pub view_dir: Vec3,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            sigma: 1e-4,
            background: [0.5; 3],
            shininess: 16.0,
            view_dir: [0.0, 0.0, -1.0],
        }
    }
}

impl RenderConfig {
    pub fn with_size(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("render size must be at least 1x1"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: Image,
    pub silhouette: Plane,
    /// `-1` marks background.
    pub tri_id: Vec<i32>,
    pub bary: Vec<[f64; 3]>,
    /// `+inf` on background pixels.
    pub depth: Vec<f64>,
}

impl RenderOutput {
    /// Hard coverage mask (1 where a triangle was rasterized).
    pub fn coverage(&self) -> Plane {
        let data = self.tri_id.iter().map(|&t| if t >= 0 { 1.0 } else { 0.0 }).collect();
        Plane::from_vec(self.image.width(), self.image.height(), data).expect("sized from image")
    }
}

/// Phong shading of rasterized buffers with per-vertex colors and normals.
pub fn shade(
    raster: &Raster,
    triangles: &[[usize; 3]],
    colors: &[Vec3],
    normals: &[Vec3],
    light: &Light,
    cfg: &RenderConfig,
) -> Image {
    let pixel_normals = interpolate_normals(raster, triangles, normals);
    shade_buffers(raster, triangles, &pixel_normals, colors, light, cfg)
}

fn interpolate_normals(raster: &Raster, triangles: &[[usize; 3]], normals: &[Vec3]) -> Vec<(Vec3, f64)> {
    raster
        .tri_id
        .iter()
        .zip(&raster.bary)
        .map(|(&t, &b)| {
            if t < 0 {
                return ([0.0; 3], 0.0);
            }
            normalize3(interpolate(b, &triangles[t as usize], normals))
        })
        .collect()
}

fn shade_buffers(
    raster: &Raster,
    triangles: &[[usize; 3]],
    pixel_normals: &[(Vec3, f64)],
    colors: &[Vec3],
    light: &Light,
    cfg: &RenderConfig,
) -> Image {
    let light = EffectiveLight::new(light);
    let mut img = Image::filled(raster.width, raster.height, cfg.background);
    for (p, &t) in raster.tri_id.iter().enumerate() {
        if t < 0 {
            continue;
        }
        let c = interpolate(raster.bary[p], &triangles[t as usize], colors);
        let out = shade_pixel(c, pixel_normals[p].0, &light, cfg.view_dir, cfg.shininess);
        img.set_pixel(p % raster.width, p / raster.width, out);
    }
    img
}

/// Cotangents produced by [`Frame::pullback`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrads {
    /// With respect to the (unclamped) per-vertex colors.
    pub colors: Vec<Vec3>,
    pub p_i: Vec<f64>,
    pub p_e: Vec<f64>,
    pub p_c: [f64; 6],
    pub p_l: [f64; 6],
}

/// The geometry pass of one render: shape, projection, rasterizer buffers,
/// normals and the soft silhouette. Shading different colors or lights
/// through the same frame is cheap, which is what texture fitting and GAN
/// training do.
#[derive(Debug, Clone)]
pub struct Frame {
    cfg: RenderConfig,
    triangles: Vec<[usize; 3]>,
    shape: Vec<Vec3>,
    camera: Camera,
    projection: Projection,
    normals: Vec<Vec3>,
    raster: Raster,
    pixel_normals: Vec<(Vec3, f64)>,
    silhouette: Plane,
}

impl Frame {
    pub fn new(model: &MorphableModel, params: &ParamSet, cfg: &RenderConfig) -> Result<Self> {
        cfg.validate()?;
        let shape = sample_shape(model, &params.p_i, &params.p_e)?;
        let camera = Camera::from_params(&params.p_c);
        let projection = project(&shape, &camera);
        let normals = vertex_normals(&projection.view, &model.triangles);
        let raster = rasterize(&projection.screen, &projection.depth, &model.triangles, cfg.width, cfg.height);
        let pixel_normals = interpolate_normals(&raster, &model.triangles, &normals);
        let silhouette = soft_silhouette(&projection.screen, &model.triangles, cfg.width, cfg.height, cfg.sigma);
        Ok(Self {
            cfg: *cfg,
            triangles: model.triangles.clone(),
            shape,
            camera,
            projection,
            normals,
            raster,
            pixel_normals,
            silhouette,
        })
    }

    pub fn config(&self) -> &RenderConfig {
        &self.cfg
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn silhouette(&self) -> &Plane {
        &self.silhouette
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn coverage(&self) -> Plane {
        Plane::from_vec(self.cfg.width, self.cfg.height, self.raster.hard_mask()).expect("sized from config")
    }

    /// Shades per-vertex colors (clamped into `[0, 1]` first).
    pub fn shade(&self, colors: &[Vec3], light: &Light) -> Result<Image> {
        if colors.len() != self.shape.len() {
            return Err(Error::Dimension {
                what: "vertex colors",
                expected: self.shape.len(),
                actual: colors.len(),
            });
        }
        let clamped = clamp_colors(colors);
        Ok(shade_buffers(&self.raster, &self.triangles, &self.pixel_normals, &clamped, light, &self.cfg))
    }

    pub fn render(&self, colors: &[Vec3], light: &Light) -> Result<RenderOutput> {
        Ok(RenderOutput {
            image: self.shade(colors, light)?,
            silhouette: self.silhouette.clone(),
            tri_id: self.raster.tri_id.clone(),
            bary: self.raster.bary.clone(),
            depth: self.raster.depth.clone(),
        })
    }

    /// Pullback of [`Frame::shade`] onto the vertex colors and light only.
    pub fn color_pullback(&self, colors: &[Vec3], light: &Light, d_image: &Image) -> (Vec<Vec3>, [f64; 6]) {
        let (d_colors, d_light, _, _) = self.shade_pullback(colors, light, d_image, false);
        (d_colors, d_light)
    }

    /// Full pullback of a render with cotangents on the image and the
    /// silhouette (`d_silhouette` may be `None`).
    pub fn pullback(
        &self,
        model: &MorphableModel,
        colors: &[Vec3],
        light: &Light,
        d_image: &Image,
        d_silhouette: Option<&Plane>,
    ) -> RenderGrads {
        let (d_colors, p_l, mut d_screen, d_normals) = self.shade_pullback(colors, light, d_image, true);
        if let Some(ds) = d_silhouette {
            let g = soft_silhouette_pullback(
                &self.projection.screen,
                &self.triangles,
                self.cfg.width,
                self.cfg.height,
                self.cfg.sigma,
                ds.data(),
            );
            for (a, b) in d_screen.iter_mut().zip(g) {
                a[0] += b[0];
                a[1] += b[1];
            }
        }
        let d_view = vertex_normals_pullback(&self.projection.view, &self.triangles, &d_normals);
        let (d_shape, p_c) = project_pullback(&self.shape, &self.camera, &d_screen, &d_view);
        let (p_i, p_e) = sample_shape_pullback(model, &d_shape);
        RenderGrads {
            colors: d_colors,
            p_i,
            p_e,
            p_c,
            p_l,
        }
    }

    /// Returns `(d colors, d light, d screen, d vertex normals)`; the
    /// geometry cotangents are only filled when `geometry` is set.
    fn shade_pullback(
        &self,
        colors: &[Vec3],
        light: &Light,
        d_image: &Image,
        geometry: bool,
    ) -> (Vec<Vec3>, [f64; 6], Vec<Vec2>, Vec<Vec3>) {
        let n = self.shape.len();
        let eff = EffectiveLight::new(light);
        let clamped = clamp_colors(colors);
        let mut d_colors = vec![[0.0; 3]; n];
        let mut d_screen = vec![[0.0; 2]; if geometry { n } else { 0 }];
        let mut d_normals = vec![[0.0; 3]; if geometry { n } else { 0 }];
        let mut d_dir = [0.0; 3];
        let mut d_gains = [0.0; 3];
        let (w, h) = (self.cfg.width, self.cfg.height);
        for (p, &t) in self.raster.tri_id.iter().enumerate() {
            if t < 0 {
                continue;
            }
            let g_out = d_image.at(p);
            if g_out == [0.0; 3] {
                continue;
            }
            let tri = &self.triangles[t as usize];
            let bary = self.raster.bary[p];
            let c = interpolate(bary, tri, &clamped);
            let (nrm, len) = self.pixel_normals[p];
            let g = shade_pixel_pullback(c, nrm, &eff, self.cfg.view_dir, self.cfg.shininess, g_out);
            for k in 0..3 {
                for ch in 0..3 {
                    d_colors[tri[k]][ch] += bary[k] * g.color[ch];
                }
            }
            for ch in 0..3 {
                d_dir[ch] += g.dir[ch];
                d_gains[ch] += g.gains[ch];
            }
            if geometry {
                let dm = normalize3_pullback(nrm, len, g.normal);
                let mut d_bary = [0.0; 3];
                for k in 0..3 {
                    let (ck, nk) = (clamped[tri[k]], self.normals[tri[k]]);
                    for ch in 0..3 {
                        d_normals[tri[k]][ch] += bary[k] * dm[ch];
                        d_bary[k] += g.color[ch] * ck[ch] + dm[ch] * nk[ch];
                    }
                }
                let s = &self.projection.screen;
                let pts = [s[tri[0]], s[tri[1]], s[tri[2]]];
                let d_pts = barycentric_pullback(pixel_center(p % w, p / w, w, h), pts, d_bary);
                for k in 0..3 {
                    d_screen[tri[k]][0] += d_pts[k][0];
                    d_screen[tri[k]][1] += d_pts[k][1];
                }
            }
        }
        for (d, c) in d_colors.iter_mut().zip(colors) {
            for ch in 0..3 {
                if !(0.0..=1.0).contains(&c[ch]) {
                    d[ch] = 0.0;
                }
            }
        }
        (d_colors, eff.pullback(d_dir, d_gains), d_screen, d_normals)
    }
}

fn clamp_colors(colors: &[Vec3]) -> Vec<Vec3> {
    colors.iter().map(|c| c.map(|v| v.clamp(0.0, 1.0))).collect()
}

/// Renders per-vertex colors under `params`.
pub fn render_colors(
    model: &MorphableModel,
    colors: &[Vec3],
    params: &ParamSet,
    cfg: &RenderConfig,
) -> Result<RenderOutput> {
    Frame::new(model, params, cfg)?.render(colors, &Light::from_params(&params.p_l))
}

/// The full image formation: sample the UV map at the model's texture
/// coordinates, build the mesh, project, rasterize and shade.
pub fn form_image(model: &MorphableModel, map: &UvMap, params: &ParamSet, cfg: &RenderConfig) -> Result<RenderOutput> {
    let sampler = UvSampler::new(&model.uv_coords, map.width(), map.height())?;
    let colors = sampler.sample(map)?;
    render_colors(model, &colors, params, cfg)
}

/// Pullback of [`form_image`]: cotangent of the UV map pixels plus all
/// parameter cotangents.
pub fn form_image_pullback(
    model: &MorphableModel,
    map: &UvMap,
    params: &ParamSet,
    cfg: &RenderConfig,
    d_image: &Image,
    d_silhouette: Option<&Plane>,
) -> Result<(Image, RenderGrads)> {
    let sampler = UvSampler::new(&model.uv_coords, map.width(), map.height())?;
    let colors = sampler.sample(map)?;
    let frame = Frame::new(model, params, cfg)?;
    let grads = frame.pullback(model, &colors, &Light::from_params(&params.p_l), d_image, d_silhouette);
    Ok((sampler.pullback(&grads.colors), grads))
}
