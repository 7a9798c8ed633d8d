//! Render-in-the-loop adversarial training of a UV-map generator.

mod train;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use train::{CompositeSource, GanConfig, StepRecord, TrainSample, Trainer};

use crate::error::{check_dim, Error, Result};
use crate::geom::{logistic, softplus};
use crate::image::{Image, Plane};
use crate::nn::{Layer, Network, Shape, Trace};
use crate::uvtex::UvMap;

const SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorArch {
    pub latent_dim: usize,
    /// Channels of the 4x4 seed feature map; halved at each upsampling stage.
    pub base_channels: usize,
    pub min_channels: usize,
    /// Output UV resolution; must be 4 times a power of two.
    pub uv_size: usize,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            base_channels: 32,
            min_channels: 8,
            uv_size: 32,
        }
    }
}

impl GeneratorArch {
    pub fn network(&self) -> Result<Network> {
        if self.latent_dim == 0 || self.base_channels == 0 || self.min_channels == 0 {
            return Err(Error::invalid("generator sizes must be positive"));
        }
        if self.uv_size < 4 || !self.uv_size.is_multiple_of(4) || !(self.uv_size / 4).is_power_of_two() {
            return Err(Error::invalid(format!("uv_size {} is not 4 times a power of two", self.uv_size)));
        }
        let stages = (self.uv_size / 4).trailing_zeros() as usize;
        let mut layers = vec![
            Layer::Dense {
                out: Shape::new(self.base_channels, 4, 4),
            },
            Layer::LeakyRelu(SLOPE),
        ];
        let mut c = self.base_channels;
        for _ in 0..stages {
            layers.push(Layer::Upsample2);
            layers.push(Layer::Conv {
                out_channels: c,
                kernel: 3,
                stride: 1,
            });
            layers.push(Layer::LeakyRelu(SLOPE));
            c = (c / 2).max(self.min_channels);
        }
        layers.push(Layer::Conv {
            out_channels: 3,
            kernel: 1,
            stride: 1,
        });
        layers.push(Layer::Sigmoid);
        Network::new(Shape::flat(self.latent_dim), layers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorArch {
    pub image_size: usize,
    /// Channels of the first strided convolution; doubled per stage.
    pub base_channels: usize,
    pub max_channels: usize,
    /// Number of stride-2 convolution stages; zero gives a linear model.
    pub stages: usize,
}

impl Default for DiscriminatorArch {
    fn default() -> Self {
        Self {
            image_size: 64,
            base_channels: 16,
            max_channels: 32,
            stages: 3,
        }
    }
}

impl DiscriminatorArch {
    pub fn network(&self) -> Result<Network> {
        if self.image_size == 0 || (self.stages > 0 && (self.base_channels == 0 || self.max_channels == 0)) {
            return Err(Error::invalid("discriminator sizes must be positive"));
        }
        let mut layers = Vec::new();
        let mut c = self.base_channels;
        for _ in 0..self.stages {
            layers.push(Layer::Conv {
                out_channels: c.min(self.max_channels),
                kernel: 3,
                stride: 2,
            });
            layers.push(Layer::LeakyRelu(SLOPE));
            c *= 2;
        }
        layers.push(Layer::Dense { out: Shape::flat(1) });
        Network::new(Shape::new(3, self.image_size, self.image_size), layers)
    }
}

/// Interleaved `H x W x 3` to planar `3 x H x W`.
pub fn to_planar(img: &Image) -> Vec<f64> {
    let n = img.pixel_count();
    let mut out = vec![0.0; 3 * n];
    for (p, px) in img.data().chunks_exact(3).enumerate() {
        for ch in 0..3 {
            out[ch * n + p] = px[ch];
        }
    }
    out
}

pub fn from_planar(width: usize, height: usize, planar: &[f64]) -> Image {
    let n = width * height;
    let mut data = vec![0.0; 3 * n];
    for p in 0..n {
        for ch in 0..3 {
            data[3 * p + ch] = planar[ch * n + p];
        }
    }
    Image::from_vec(width, height, data).expect("sized from arguments")
}

#[derive(Debug, Clone)]
pub struct Generator {
    arch: GeneratorArch,
    net: Network,
    params: Vec<f64>,
}

impl Generator {
    pub fn new<R: Rng>(arch: GeneratorArch, rng: &mut R) -> Result<Self> {
        let net = arch.network()?;
        let params = net.init_params(rng);
        Ok(Self { arch, net, params })
    }

    pub fn from_params(arch: GeneratorArch, params: Vec<f64>) -> Result<Self> {
        let net = arch.network()?;
        check_dim("generator parameters", net.param_count(), params.len())?;
        Ok(Self { arch, net, params })
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn uv_width(&self) -> usize {
        self.arch.uv_size
    }

    pub fn uv_height(&self) -> usize {
        self.arch.uv_size
    }

    pub fn forward(&self, z: &[f64]) -> Result<(UvMap, Trace)> {
        check_dim("latent", self.arch.latent_dim, z.len())?;
        let trace = self.net.forward(&self.params, z)?;
        let s = self.arch.uv_size;
        Ok((UvMap::new(from_planar(s, s, trace.output()))?, trace))
    }

    pub fn generate(&self, z: &[f64]) -> Result<UvMap> {
        Ok(self.forward(z)?.0)
    }

    /// Accumulates the parameter gradient for UV-map cotangent `d_map` and
    /// returns the latent cotangent.
    pub fn backward(&self, trace: &Trace, d_map: &Image, d_params: &mut [f64]) -> Result<Vec<f64>> {
        let s = self.arch.uv_size;
        if d_map.width() != s || d_map.height() != s {
            return Err(Error::Dimension {
                what: "uv map cotangent",
                expected: s * s,
                actual: d_map.pixel_count(),
            });
        }
        self.net.backward(&self.params, trace, &to_planar(d_map), d_params)
    }

    pub fn latent_pullback(&self, z: &[f64], d_map: &Image) -> Result<Vec<f64>> {
        let (_, trace) = self.forward(z)?;
        let mut scratch = vec![0.0; self.params.len()];
        self.backward(&trace, d_map, &mut scratch)
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    arch: DiscriminatorArch,
    net: Network,
    params: Vec<f64>,
}

impl Discriminator {
    pub fn new<R: Rng>(arch: DiscriminatorArch, rng: &mut R) -> Result<Self> {
        let net = arch.network()?;
        let params = net.init_params(rng);
        Ok(Self { arch, net, params })
    }

    pub fn from_params(arch: DiscriminatorArch, params: Vec<f64>) -> Result<Self> {
        let net = arch.network()?;
        check_dim("discriminator parameters", net.param_count(), params.len())?;
        Ok(Self { arch, net, params })
    }

    pub fn arch(&self) -> &DiscriminatorArch {
        &self.arch
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Zeroes the final dense layer so the logit is identically zero.
    pub fn zero_last_layer(&mut self) {
        let last = self.net.layers().len() - 1;
        let (w, b) = self.net.layer_params(last).expect("dense head");
        self.params[w].fill(0.0);
        self.params[b].fill(0.0);
    }

    fn trace(&self, x: &Image) -> Result<Trace> {
        let s = self.arch.image_size;
        if x.width() != s || x.height() != s {
            return Err(Error::Dimension {
                what: "discriminator input",
                expected: s * s,
                actual: x.pixel_count(),
            });
        }
        let t = self.net.forward(&self.params, &to_planar(x))?;
        if !t.output()[0].is_finite() {
            return Err(Error::NonFinite { what: "discriminator logit", index: 0 });
        }
        Ok(t)
    }

    pub fn logit(&self, x: &Image) -> Result<f64> {
        Ok(self.trace(x)?.output()[0])
    }

    /// Gradient of the logit with respect to the input pixels.
    pub fn input_gradient(&self, x: &Image) -> Result<Image> {
        let t = self.trace(x)?;
        let mut scratch = vec![0.0; self.params.len()];
        let g = self.net.backward(&self.params, &t, &[1.0], &mut scratch)?;
        Ok(from_planar(x.width(), x.height(), &g))
    }
}

/// How the background is handled before images reach the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MaskStrategy {
    /// Composite the rendered face over a real background.
    #[serde(rename = "composite_bg")]
    CompositeRealBackground,
    /// Replace the real image's background with a flat color.
    #[default]
    #[serde(rename = "mask_real")]
    MaskRealForeground,
}

/// `sil * a + (1 - sil) * b` per pixel.
pub fn blend(sil: &Plane, a: &Image, b: &Image) -> Result<Image> {
    a.same_size(b)?;
    sil.same_size(a)?;
    let mut out = a.clone();
    for (p, (px, s)) in out.data_mut().chunks_exact_mut(3).zip(sil.data()).enumerate() {
        let q = b.at(p);
        for ch in 0..3 {
            px[ch] = s * px[ch] + (1.0 - s) * q[ch];
        }
    }
    Ok(out)
}

/// Images the discriminator sees for one real/fake pair.
///
/// `real_sil` is the real sample's silhouette; `fake_sil` the soft
/// silhouette of the render. `background` is required for
/// [`MaskStrategy::CompositeRealBackground`].
pub fn apply_mask(
    strategy: MaskStrategy,
    real: &Image,
    real_sil: &Plane,
    rendered: &Image,
    fake_sil: &Plane,
    background: Option<&Image>,
    bg_color: [f64; 3],
) -> Result<(Image, Image)> {
    real.same_size(rendered)?;
    match strategy {
        MaskStrategy::MaskRealForeground => {
            let flat = Image::filled(real.width(), real.height(), bg_color);
            Ok((blend(real_sil, real, &flat)?, blend(fake_sil, rendered, &flat)?))
        }
        MaskStrategy::CompositeRealBackground => {
            let bg = background.ok_or_else(|| Error::invalid("composite strategy needs a background image"))?;
            Ok((real.clone(), blend(fake_sil, rendered, bg)?))
        }
    }
}

/// Pullback of the fake branch of [`apply_mask`] onto the rendered pixels.
/// Both strategies scale by the fake silhouette.
pub fn apply_mask_pullback(fake_sil: &Plane, d_fake: &Image) -> Image {
    let mut d = d_fake.clone();
    for (px, s) in d.data_mut().chunks_exact_mut(3).zip(fake_sil.data()) {
        px.iter_mut().for_each(|v| *v *= s);
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DLoss {
    pub total: f64,
    pub adversarial: f64,
    pub r1: f64,
}

/// `(gamma / 2) * |grad_x D(x)|^2`.
pub fn r1_penalty(d: &Discriminator, x: &Image, gamma: f64) -> Result<f64> {
    let g = d.input_gradient(x)?;
    Ok(0.5 * gamma * g.data().iter().map(|v| v * v).sum::<f64>())
}

fn check_batch(reals: &[Image], fakes: &[Image], gamma: f64) -> Result<()> {
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_dim("fake batch", reals.len(), fakes.len())?;
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma_r1 must be non-negative"));
    }
    Ok(())
}

/// Non-saturating discriminator loss with R1 on the reals, batch mean.
pub fn d_loss(d: &Discriminator, reals: &[Image], fakes: &[Image], gamma: f64) -> Result<DLoss> {
    check_batch(reals, fakes, gamma)?;
    let n = reals.len() as f64;
    let mut adv = 0.0;
    let mut r1 = 0.0;
    for (r, f) in reals.iter().zip(fakes) {
        adv += softplus(-d.logit(r)?) + softplus(d.logit(f)?);
        if gamma > 0.0 {
            r1 += r1_penalty(d, r, gamma)?;
        }
    }
    Ok(DLoss {
        total: (adv + r1) / n,
        adversarial: adv / n,
        r1: r1 / n,
    })
}

/// [`d_loss`] and its gradient with respect to the discriminator parameters.
///
/// The R1 parameter gradient differentiates the directional derivative
/// `J(theta) v` at `v = grad_x D`, held fixed: a reverse pass through the
/// tangent map of a forward-mode pass.
pub fn d_loss_grad(d: &Discriminator, reals: &[Image], fakes: &[Image], gamma: f64) -> Result<(DLoss, Vec<f64>)> {
    check_batch(reals, fakes, gamma)?;
    let np = d.params.len();
    let per: Vec<(f64, f64, Vec<f64>)> = reals
        .par_iter()
        .zip(fakes)
        .map(|(r, f)| -> Result<_> {
            let mut grad = vec![0.0; np];
            let tr = d.trace(r)?;
            let a = tr.output()[0];
            // With cotangent 1 this yields both d a / d theta and grad_x D.
            let mut da = vec![0.0; np];
            let gx = d.net.backward(&d.params, &tr, &[1.0], &mut da)?;
            let wa = -logistic(-a);
            grad.iter_mut().zip(&da).for_each(|(g, v)| *g += wa * v);
            let tf = d.trace(f)?;
            let b = tf.output()[0];
            d.net.backward(&d.params, &tf, &[logistic(b)], &mut grad)?;
            let mut r1 = 0.0;
            if gamma > 0.0 {
                r1 = 0.5 * gamma * gx.iter().map(|v| v * v).sum::<f64>();
                let tans = d.net.tangent(&d.params, &tr, &gx)?;
                d.net.tangent_backward(&d.params, &tr, &tans, &[gamma], &mut grad)?;
            }
            Ok((softplus(-a) + softplus(b), r1, grad))
        })
        .collect::<Result<_>>()?;
    let n = reals.len() as f64;
    let mut grad = vec![0.0; np];
    let (mut adv, mut r1) = (0.0, 0.0);
    for (a, r, g) in &per {
        adv += a;
        r1 += r;
        grad.iter_mut().zip(g).for_each(|(t, v)| *t += v / n);
    }
    Ok((
        DLoss {
            total: (adv + r1) / n,
            adversarial: adv / n,
            r1: r1 / n,
        },
        grad,
    ))
}

/// Non-saturating generator loss `softplus(-D(fake))`, batch mean.
pub fn g_loss(d: &Discriminator, fakes: &[Image]) -> Result<f64> {
    if fakes.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut s = 0.0;
    for f in fakes {
        s += softplus(-d.logit(f)?);
    }
    Ok(s / fakes.len() as f64)
}

/// [`g_loss`] and its gradient with respect to each fake image.
pub fn g_loss_grad(d: &Discriminator, fakes: &[Image]) -> Result<(f64, Vec<Image>)> {
    if fakes.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = fakes.len() as f64;
    let per: Vec<(f64, Image)> = fakes
        .par_iter()
        .map(|f| -> Result<_> {
            let t = d.trace(f)?;
            let b = t.output()[0];
            let mut scratch = vec![0.0; d.params.len()];
            let g = d.net.backward(&d.params, &t, &[-logistic(-b) / n], &mut scratch)?;
            Ok((softplus(-b), from_planar(f.width(), f.height(), &g)))
        })
        .collect::<Result<_>>()?;
    let loss = per.iter().map(|(l, _)| l).sum::<f64>() / n;
    Ok((loss, per.into_iter().map(|(_, g)| g).collect()))
}
