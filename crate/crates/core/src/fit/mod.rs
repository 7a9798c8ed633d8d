//! Analysis-by-synthesis fitting of shape, camera, texture and light.

mod adam;
mod energy;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use energy::{e_lm, e_lm_with_grad, e_pix, e_pix_grad, l1_loss, l1_loss_grad, Landmarks};

use crate::error::{check_dim, Error, Result};
use crate::gan::Generator;
use crate::geom::Vec3;
use crate::image::Image;
use crate::morphable::{sample_shape_pullback, sample_texture, sample_texture_pullback, MorphableModel, ParamSet};
use crate::render::{Camera, Frame, Light, RenderConfig, RenderOutput};
use crate::uvtex::UvSampler;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Initial Adam learning rate.
    pub lr: f64,
    /// The rate decays exponentially to `lr * lr_final_ratio` at the last step.
    pub lr_final_ratio: f64,
    pub steps: usize,
    pub lambda_pix: f64,
    pub lambda_lm: f64,
    /// Weight of an optional L2 prior on the model coefficients.
    pub prior_weight: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            lr_final_ratio: 0.1,
            steps: 200,
            lambda_pix: 1.0,
            lambda_lm: 1.0,
            prior_weight: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return Err(Error::invalid("lr_final_ratio must lie in (0, 1]"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        for (name, w) in [
            ("lambda_pix", self.lambda_pix),
            ("lambda_lm", self.lambda_lm),
            ("prior_weight", self.prior_weight),
        ] {
            if !(w >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        Ok(())
    }

    /// Learning rate used at `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let frac = if self.steps > 1 { step as f64 / (self.steps - 1) as f64 } else { 0.0 };
        self.lr * self.lr_final_ratio.powf(frac)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// One row of a shape-fitting loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub e_pix: f64,
    pub e_lm: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ShapeFit {
    /// Best iterate encountered, always with `p_t` filled in.
    pub params: ParamSet,
    pub loss: f64,
    /// Loss at the iterate each step started from; `steps` rows.
    pub trace: Vec<TraceRow>,
}

struct Evaluation {
    row: TraceRow,
    grad: Vec<f64>,
}

fn evaluate_shape(
    target: &Image,
    landmarks: &Landmarks,
    model: &MorphableModel,
    params: &ParamSet,
    cfg: &FitConfig,
    rcfg: &RenderConfig,
    step: usize,
) -> Result<Evaluation> {
    let p_t = params.p_t.as_deref().expect("p_t filled in by fit_shape");
    let frame = Frame::new(model, params, rcfg)?;
    let colors = sample_texture(model, p_t)?;
    let light = Light::from_params(&params.p_l);
    let image = frame.shade(&colors, &light)?;
    // The mask follows the current mesh but is held constant for the gradient.
    let mask = frame.coverage();
    let e_pix_value = e_pix(target, &image, &mask)?;
    let mut d_image = e_pix_grad(target, &image, &mask)?;
    d_image.data_mut().iter_mut().for_each(|g| *g *= cfg.lambda_pix);
    let g = frame.pullback(model, &colors, &light, &d_image, None);

    let shape = crate::morphable::sample_shape(model, &params.p_i, &params.p_e)?;
    let cam = Camera::from_params(&params.p_c);
    let (e_lm_value, d_shape, d_cam) = e_lm_with_grad(landmarks, &shape, &cam, model)?;
    let (lm_i, lm_e) = sample_shape_pullback(model, &d_shape);
    let d_t = sample_texture_pullback(model, &g.colors);

    let prior: f64 = params.p_i.iter().chain(&params.p_e).chain(p_t).map(|c| c * c).sum();
    let total = cfg.lambda_pix * e_pix_value + cfg.lambda_lm * e_lm_value + cfg.prior_weight * prior;

    let mut grad = Vec::with_capacity(params.to_vec().len());
    let pw = 2.0 * cfg.prior_weight;
    grad.extend((0..params.p_i.len()).map(|k| g.p_i[k] + cfg.lambda_lm * lm_i[k] + pw * params.p_i[k]));
    grad.extend((0..params.p_e.len()).map(|k| g.p_e[k] + cfg.lambda_lm * lm_e[k] + pw * params.p_e[k]));
    grad.extend((0..6).map(|k| g.p_c[k] + cfg.lambda_lm * d_cam[k]));
    grad.extend_from_slice(&g.p_l);
    grad.extend((0..p_t.len()).map(|k| d_t[k] + pw * p_t[k]));
    Ok(Evaluation {
        row: TraceRow {
            step,
            e_pix: e_pix_value,
            e_lm: e_lm_value,
            total,
        },
        grad,
    })
}

/// Keeps the light gains (the last three light entries) non-negative. The
/// renderer clamps them at zero, so a negative gain would get no gradient.
fn project_gains(light: &mut [f64]) {
    light[3..6].iter_mut().for_each(|g| *g = g.max(0.0));
}

/// Jointly fits identity, expression, camera, light and linear texture
/// coefficients to `target` and its landmarks with Adam. The render size is
/// taken from the target image. Returns the best iterate seen, including the
/// final one.
pub fn fit_shape(
    target: &Image,
    landmarks: &Landmarks,
    model: &MorphableModel,
    init: &ParamSet,
    cfg: &FitConfig,
    render: &RenderConfig,
) -> Result<ShapeFit> {
    cfg.validate()?;
    init.validate(model)?;
    landmarks.validate()?;
    let rcfg = RenderConfig {
        width: target.width(),
        height: target.height(),
        ..*render
    };
    let mut layout = init.clone();
    layout.p_t.get_or_insert_with(|| vec![0.0; model.k_tex()]);
    let mut x = layout.to_vec();
    let light_at = layout.p_i.len() + layout.p_e.len() + 6;
    project_gains(&mut x[light_at..light_at + 6]);
    let mut state = AdamState::new(x.len());
    let adam = cfg.adam();

    let mut trace = Vec::with_capacity(cfg.steps);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for step in 0..=cfg.steps {
        let params = layout.with_values(&x);
        let eval = evaluate_shape(target, landmarks, model, &params, cfg, &rcfg, step)?;
        if best.as_ref().is_none_or(|(l, _)| eval.row.total < *l) {
            best = Some((eval.row.total, x.clone()));
        }
        if step == cfg.steps {
            break;
        }
        trace.push(eval.row);
        adam_step(&mut x, &eval.grad, &mut state, &AdamConfig { lr: cfg.lr_at(step), ..adam })?;
        project_gains(&mut x[light_at..light_at + 6]);
    }
    let (loss, bx) = best.expect("at least one evaluation");
    Ok(ShapeFit {
        params: layout.with_values(&bx),
        loss,
        trace,
    })
}

/// Where the texture comes from during texture and light fitting.
#[derive(Debug, Clone, Copy)]
pub enum TextureSource<'a> {
    /// Linear texture model coefficients `p_t`.
    Linear,
    /// Latent vector of a fixed generator producing a UV map.
    Latent(&'a Generator),
}

#[derive(Debug, Clone)]
pub struct TextureFit {
    /// Optimized `p_t` or latent.
    pub texture: Vec<f64>,
    pub light: [f64; 6],
    /// Mean per-pixel L1 over the foreground at the returned iterate.
    pub loss: f64,
    pub output: RenderOutput,
    pub trace: Vec<f64>,
}

/// Fits texture parameters and light with geometry and camera held fixed,
/// minimizing the foreground L1 distance.
pub fn fit_texture_light(
    target: &Image,
    params: &ParamSet,
    model: &MorphableModel,
    source: TextureSource<'_>,
    init_texture: &[f64],
    cfg: &FitConfig,
    render: &RenderConfig,
) -> Result<TextureFit> {
    cfg.validate()?;
    params.validate(model)?;
    let rcfg = RenderConfig {
        width: target.width(),
        height: target.height(),
        ..*render
    };
    let frame = Frame::new(model, params, &rcfg)?;
    let mask = frame.coverage();
    let tex_dim = match source {
        TextureSource::Linear => model.k_tex(),
        TextureSource::Latent(g) => g.latent_dim(),
    };
    check_dim("initial texture parameters", tex_dim, init_texture.len())?;
    let sampler = match source {
        TextureSource::Linear => None,
        TextureSource::Latent(g) => Some(UvSampler::new(&model.uv_coords, g.uv_width(), g.uv_height())?),
    };

    let colors_of = |t: &[f64]| -> Result<Vec<Vec3>> {
        match (source, &sampler) {
            (TextureSource::Latent(g), Some(s)) => s.sample(&g.generate(t)?),
            _ => sample_texture(model, t),
        }
    };

    let mut x: Vec<f64> = init_texture.iter().copied().chain(params.p_l).collect();
    project_gains(&mut x[tex_dim..]);
    let mut state = AdamState::new(x.len());
    let adam = cfg.adam();
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for step in 0..=cfg.steps {
        let (t, l) = x.split_at(tex_dim);
        let light = Light::from_params(l.try_into().expect("six light parameters"));
        let colors = colors_of(t)?;
        let image = frame.shade(&colors, &light)?;
        let loss = l1_loss(target, &image, &mask)?;
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, x.clone()));
        }
        if step == cfg.steps {
            break;
        }
        trace.push(loss);
        let d_image = l1_loss_grad(target, &image, &mask)?;
        let (d_colors, d_light) = frame.color_pullback(&colors, &light, &d_image);
        let d_t = match (source, &sampler) {
            (TextureSource::Latent(g), Some(s)) => g.latent_pullback(t, &s.pullback(&d_colors))?,
            _ => sample_texture_pullback(model, &d_colors),
        };
        let grad: Vec<f64> = d_t.into_iter().chain(d_light).collect();
        adam_step(&mut x, &grad, &mut state, &AdamConfig { lr: cfg.lr_at(step), ..adam })?;
        project_gains(&mut x[tex_dim..]);
    }
    let (loss, bx) = best.expect("at least one evaluation");
    let (t, l) = bx.split_at(tex_dim);
    let light: [f64; 6] = l.try_into().expect("six light parameters");
    let output = frame.render(&colors_of(t)?, &Light::from_params(&light))?;
    Ok(TextureFit {
        texture: t.to_vec(),
        light,
        loss,
        output,
        trace,
    })
}
