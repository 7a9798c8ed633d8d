use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use uvforge::gan::{blend, Generator};
use uvforge::io::{load_checkpoint, load_dataset, load_model, write_json, DatasetSample};
use uvforge::metrics::{fid, gaussian_stats, mask_image, FeatureExtractor, GaussianStats, MetricReport};
use uvforge::{form_image, Image, MorphableModel, RenderConfig};

use crate::error::{CliError, Result};

fn features(
    extractor: &FeatureExtractor,
    masked: bool,
    bg_color: [f64; 3],
    image: &Image,
    s: &DatasetSample,
) -> Result<Vec<f64>> {
    let img = if masked {
        mask_image(image, &s.silhouette, bg_color)?
    } else {
        image.clone()
    };
    Ok(extractor.extract(&img)?)
}

/// Where the fake textures come from.
#[derive(Debug, Clone, Copy)]
pub enum TextureSource<'a> {
    /// One generated UV map per sample, from fixed latents.
    Generator(&'a Generator),
    /// The dataset's own ground-truth UV maps.
    GroundTruth,
}

/// FID between real samples and fakes rendered with the same parameters.
///
/// Fakes are composited over the real image by hard coverage and quantized
/// to 8 bits like the stored reals. The masked variant replaces the
/// background of both with `bg_color` using the real silhouette.
pub struct FidProbe<'a> {
    samples: &'a [DatasetSample],
    extractor: FeatureExtractor,
    masked: bool,
    bg_color: [f64; 3],
    seed: u64,
    real: GaussianStats,
}

impl<'a> FidProbe<'a> {
    pub fn new(
        samples: &'a [DatasetSample],
        extractor: FeatureExtractor,
        masked: bool,
        bg_color: [f64; 3],
        seed: u64,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(CliError::invalid(format!("FID needs at least 2 samples, got {}", samples.len())));
        }
        let feats = samples
            .par_iter()
            .map(|s| features(&extractor, masked, bg_color, &s.image, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            real: gaussian_stats(&feats)?,
            extractor,
            masked,
            bg_color,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The fixed evaluation latents, one per sample.
    pub fn latents(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.samples.len())
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    pub fn score(&self, model: &MorphableModel, source: TextureSource<'_>) -> Result<f64> {
        let latents = match source {
            TextureSource::Generator(g) => self.latents(g.latent_dim()),
            TextureSource::GroundTruth => Vec::new(),
        };
        let feats = self
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| -> Result<Vec<f64>> {
                let map = match source {
                    TextureSource::Generator(g) => g.generate(&latents[i])?,
                    TextureSource::GroundTruth => s
                        .uv
                        .clone()
                        .ok_or_else(|| CliError::invalid(format!("dataset sample {i} has no UV map")))?,
                };
                let rcfg = RenderConfig {
                    background: self.bg_color,
                    ..RenderConfig::with_size(s.image.width(), s.image.height())
                };
                let out = form_image(model, &map, &s.params, &rcfg)?;
                let fake = blend(&out.coverage(), &out.image, &s.image)?.quantized();
                features(&self.extractor, self.masked, self.bg_color, &fake, s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(fid(&self.real, &gaussian_stats(&feats)?)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    pub model: PathBuf,
    /// Required unless `ground_truth` is set.
    pub checkpoint: Option<PathBuf>,
    pub ground_truth: bool,
    pub masked: bool,
    pub extractor: String,
    /// Number of samples (the first `n` of the dataset); all when absent.
    pub n: Option<usize>,
    pub seed: u64,
    pub bg_color: [f64; 3],
    pub out: PathBuf,
}

/// Writes `metrics.json`: an array with the unmasked FID and, with
/// `masked`, the masked FID.
pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<MetricReport>> {
    let model = load_model(&args.model)?;
    let (manifest, samples) = load_dataset(&args.dataset, &model)?;
    let n = args.n.unwrap_or(samples.len());
    if n < 2 {
        return Err(CliError::invalid(format!("--n must be at least 2, got {n}")));
    }
    if n > samples.len() {
        return Err(CliError::invalid(format!("--n {n} exceeds the {} dataset samples", samples.len())));
    }
    let extractor = FeatureExtractor::by_name(&args.extractor, manifest.image_size, manifest.image_size)?;
    let checkpoint = match (&args.checkpoint, args.ground_truth) {
        (_, true) => None,
        (Some(p), false) => Some(load_checkpoint(p)?.1),
        (None, false) => return Err(CliError::invalid("a checkpoint is required unless ground-truth UV maps are used")),
    };
    let source = match &checkpoint {
        Some(g) => TextureSource::Generator(g),
        None => TextureSource::GroundTruth,
    };
    let mut reports = Vec::new();
    let variants: &[bool] = if args.masked { &[false, true] } else { &[false] };
    for &masked in variants {
        let probe = FidProbe::new(&samples[..n], extractor.clone(), masked, args.bg_color, args.seed)?;
        reports.push(MetricReport {
            metric: if masked { "masked_fid" } else { "fid" }.into(),
            value: probe.score(&model, source)?,
            n_samples: n,
            extractor: extractor.name(),
            seed: args.seed,
        });
    }
    write_json(&args.out, &reports)?;
    Ok(reports)
}
