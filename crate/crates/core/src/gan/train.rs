use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    apply_mask, apply_mask_pullback, d_loss_grad, g_loss_grad, Discriminator, DiscriminatorArch, Generator,
    GeneratorArch, MaskStrategy,
};
use crate::error::{Error, Result};
use crate::fit::{adam_step, AdamConfig, AdamState};
use crate::geom::Vec3;
use crate::image::{Image, Plane};
use crate::morphable::{MorphableModel, ParamSet};
use crate::render::{Frame, Light, RenderConfig};
use crate::uvtex::UvSampler;

/// Which real background a fake is composited over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeSource {
    /// The real image whose parameters drove the render.
    #[default]
    OwnSample,
    /// A different, randomly drawn real image.
    OtherSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma_r1: f64,
    pub mask_strategy: MaskStrategy,
    pub composite_source: CompositeSource,
    pub bg_color: [f64; 3],
    pub generator: GeneratorArch,
    pub discriminator: DiscriminatorArch,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 8,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            gamma_r1: 10.0,
            mask_strategy: MaskStrategy::MaskRealForeground,
            composite_source: CompositeSource::OwnSample,
            bg_color: [0.5; 3],
            generator: GeneratorArch::default(),
            discriminator: DiscriminatorArch::default(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::invalid("lr must be non-negative"));
        }
        if !(self.gamma_r1 >= 0.0) {
            return Err(Error::invalid("gamma_r1 must be non-negative"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.bg_color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("bg_color must lie in [0, 1]"));
        }
        self.generator.network()?;
        self.discriminator.network()?;
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}

/// A real image with its fitted parameters and silhouette.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Image,
    pub params: ParamSet,
    pub silhouette: Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub d_loss: f64,
    pub r1: f64,
    pub g_loss: f64,
    /// Euclidean norm of the generator gradient.
    pub g_grad_norm: f64,
}

struct Prepared {
    frame: Frame,
    light: Light,
    /// What the discriminator sees for this real sample.
    real_for_d: Image,
}

/// Owns both networks, their optimizer states and the per-sample geometry.
pub struct Trainer {
    cfg: GanConfig,
    generator: Generator,
    discriminator: Discriminator,
    g_state: AdamState,
    d_state: AdamState,
    step: u64,
    samples: Vec<TrainSample>,
    prepared: Vec<Prepared>,
    sampler: UvSampler,
}

/// Per-step RNG; independent of how many draws earlier steps made.
pub(crate) fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step + 1);
    rng
}

impl Trainer {
    /// Fresh networks initialized from `cfg.seed`.
    pub fn new(model: &MorphableModel, samples: Vec<TrainSample>, cfg: GanConfig, render: &RenderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = step_rng(cfg.seed, u64::MAX - 1);
        let generator = Generator::new(cfg.generator, &mut rng)?;
        let discriminator = Discriminator::new(cfg.discriminator, &mut rng)?;
        Self::resume(model, samples, cfg, render, generator, discriminator, 0)
    }

    /// Continues from existing networks; optimizer moments restart at zero.
    pub fn resume(
        model: &MorphableModel,
        samples: Vec<TrainSample>,
        cfg: GanConfig,
        render: &RenderConfig,
        generator: Generator,
        discriminator: Discriminator,
        step: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let size = cfg.discriminator.image_size;
        let rcfg = RenderConfig {
            width: size,
            height: size,
            background: cfg.bg_color,
            ..*render
        };
        let prepared = samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| -> Result<Prepared> {
                if s.image.width() != size || s.image.height() != size {
                    return Err(Error::invalid(format!(
                        "sample {i} is {}x{}, the discriminator expects {size}x{size}",
                        s.image.width(),
                        s.image.height()
                    )));
                }
                s.params.validate(model)?;
                let frame = Frame::new(model, &s.params, &rcfg)?;
                let real_for_d = match cfg.mask_strategy {
                    MaskStrategy::MaskRealForeground => {
                        let flat = Image::filled(size, size, cfg.bg_color);
                        super::blend(&s.silhouette, &s.image, &flat)?
                    }
                    MaskStrategy::CompositeRealBackground => s.image.clone(),
                };
                Ok(Prepared {
                    frame,
                    light: Light::from_params(&s.params.p_l),
                    real_for_d,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sampler = UvSampler::new(&model.uv_coords, generator.uv_width(), generator.uv_height())?;
        Ok(Self {
            g_state: AdamState::new(generator.param_count()),
            d_state: AdamState::new(discriminator.params().len()),
            cfg,
            generator,
            discriminator,
            step,
            samples,
            prepared,
            sampler,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &GanConfig {
        &self.cfg
    }

    /// Renders `z` through sample `i`'s fitted geometry, camera and light.
    pub fn render_sample(&self, i: usize, z: &[f64]) -> Result<Image> {
        let p = &self.prepared[i];
        let map = self.generator.generate(z)?;
        p.frame.shade(&self.sampler.sample(&map)?, &p.light)
    }

    fn fake(&self, i: usize, bg: usize, rendered: &Image) -> Result<(Image, Image)> {
        let p = &self.prepared[i];
        let s = &self.samples[i];
        let background = (self.cfg.mask_strategy == MaskStrategy::CompositeRealBackground).then(|| &self.samples[bg].image);
        apply_mask(
            self.cfg.mask_strategy,
            &s.image,
            &s.silhouette,
            rendered,
            p.frame.silhouette(),
            background,
            self.cfg.bg_color,
        )
    }

    /// Sample indices, composite-background indices and latents for `step`.
    fn draw_batch(&self, step: u64) -> Vec<(usize, usize, Vec<f64>)> {
        let mut rng = step_rng(self.cfg.seed, step);
        let n = self.samples.len();
        (0..self.cfg.batch_size)
            .map(|_| {
                let i = rng.random_range(0..n);
                let other = rng.random_range(0..n);
                let bg = match self.cfg.composite_source {
                    CompositeSource::OwnSample => i,
                    CompositeSource::OtherSample => other,
                };
                let z: Vec<f64> = (0..self.generator.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
                (i, bg, z)
            })
            .collect()
    }

    fn fakes(&self, generator: &Generator, batch: &[(usize, usize, Vec<f64>)]) -> Result<Vec<Fake>> {
        batch
            .par_iter()
            .map(|(i, bg, z)| -> Result<Fake> {
                let (map, trace) = generator.forward(z)?;
                let colors = self.sampler.sample(&map)?;
                let p = &self.prepared[*i];
                let rendered = p.frame.shade(&colors, &p.light)?;
                let (_, fake) = self.fake(*i, *bg, &rendered)?;
                Ok(Fake { trace, colors, fake })
            })
            .collect()
    }

    fn generator_grad(
        &self,
        generator: &Generator,
        batch: &[(usize, usize, Vec<f64>)],
        fakes: &[Fake],
    ) -> Result<(f64, Vec<f64>)> {
        let images: Vec<Image> = fakes.iter().map(|f| f.fake.clone()).collect();
        let (gl, d_fakes) = g_loss_grad(&self.discriminator, &images)?;
        let np = generator.param_count();
        let per: Vec<Vec<f64>> = batch
            .par_iter()
            .zip(fakes)
            .zip(&d_fakes)
            .map(|(((i, _, _), f), d_fake)| -> Result<Vec<f64>> {
                let p = &self.prepared[*i];
                let d_rendered = apply_mask_pullback(p.frame.silhouette(), d_fake);
                let (d_colors, _) = p.frame.color_pullback(&f.colors, &p.light, &d_rendered);
                let d_map = self.sampler.pullback(&d_colors);
                let mut g = vec![0.0; np];
                generator.backward(&f.trace, &d_map, &mut g)?;
                Ok(g)
            })
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0; np];
        for g in &per {
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok((gl, grad))
    }

    /// Generator loss and its parameter gradient on the batch drawn at
    /// `step`, against the current discriminator.
    pub fn generator_objective(&self, generator: &Generator, step: u64) -> Result<(f64, Vec<f64>)> {
        if generator.arch() != self.generator.arch() {
            return Err(Error::invalid("generator architecture differs from the trainer's"));
        }
        let batch = self.draw_batch(step);
        let fakes = self.fakes(generator, &batch)?;
        self.generator_grad(generator, &batch, &fakes)
    }

    /// One alternating update: discriminator with R1, then generator
    /// against the updated discriminator.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let batch = self.draw_batch(self.step);
        let fakes = self.fakes(&self.generator, &batch)?;
        let reals: Vec<Image> = batch.iter().map(|(i, _, _)| self.prepared[*i].real_for_d.clone()).collect();
        let fake_images: Vec<Image> = fakes.iter().map(|f| f.fake.clone()).collect();

        let (dl, d_grad) = d_loss_grad(&self.discriminator, &reals, &fake_images, self.cfg.gamma_r1)?;
        let adam = self.cfg.adam();
        adam_step(self.discriminator.params_mut(), &d_grad, &mut self.d_state, &adam)?;

        let (gl, g_grad) = self.generator_grad(&self.generator, &batch, &fakes)?;
        let g_grad_norm = g_grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        adam_step(self.generator.params_mut(), &g_grad, &mut self.g_state, &adam)?;

        let record = StepRecord {
            step: self.step,
            d_loss: dl.total,
            r1: dl.r1,
            g_loss: gl,
            g_grad_norm,
        };
        self.step += 1;
        Ok(record)
    }
}

struct Fake {
    trace: crate::nn::Trace,
    colors: Vec<Vec3>,
    fake: Image,
}
