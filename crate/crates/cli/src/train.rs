use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uvforge::gan::{
    CompositeSource, DiscriminatorArch, GanConfig, GeneratorArch, MaskStrategy, TrainSample, Trainer,
};
use uvforge::io::{create_dir, load_checkpoint, load_dataset, load_model, read_json, save_checkpoint, write_json};
use uvforge::metrics::FeatureExtractor;
use uvforge::RenderConfig;

use crate::error::{CliError, Result};
use crate::evaluate::{FidProbe, TextureSource};
use crate::plot::{line_chart, Series};
use crate::write_csv;

/// Training run settings; the GAN fields mirror [`GanConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total step count; a resumed run stops here too.
    pub steps: u64,
    /// Zero disables intermediate checkpoints (initial and final are kept).
    pub checkpoint_every: u64,
    /// Zero disables the masked-FID proxy.
    pub eval_every: u64,
    pub eval_samples: usize,
    /// The last `holdout` dataset samples are excluded from training and
    /// used for evaluation instead.
    pub holdout: usize,
    pub extractor: String,
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

impl Default for TrainConfig {
    fn default() -> Self {
        let g = GanConfig::default();
        Self {
            steps: 2000,
            checkpoint_every: 500,
            eval_every: 250,
            eval_samples: 100,
            holdout: 0,
            extractor: "downsample".into(),
            seed: g.seed,
            batch_size: g.batch_size,
            lr: g.lr,
            beta1: g.beta1,
            beta2: g.beta2,
            gamma_r1: g.gamma_r1,
            mask_strategy: g.mask_strategy,
            composite_source: g.composite_source,
            bg_color: g.bg_color,
            generator: g.generator,
            discriminator: g.discriminator,
        }
    }
}

impl TrainConfig {
    pub fn gan(&self) -> GanConfig {
        GanConfig {
            seed: self.seed,
            batch_size: self.batch_size,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            gamma_r1: self.gamma_r1,
            mask_strategy: self.mask_strategy,
            composite_source: self.composite_source,
            bg_color: self.bg_color,
            generator: self.generator,
            discriminator: self.discriminator,
        }
    }
}

/// One line of `metrics.csv`; step 0 carries only the initial evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub d_loss: Option<f64>,
    pub r1: Option<f64>,
    pub g_loss: Option<f64>,
    pub g_grad_norm: Option<f64>,
    pub masked_fid: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub config: Option<PathBuf>,
    pub steps: Option<u64>,
    pub resume: Option<PathBuf>,
    pub out: PathBuf,
    pub plot: bool,
}

pub fn checkpoint_dir(out: &Path, step: u64) -> PathBuf {
    out.join("checkpoints").join(format!("step_{step:06}"))
}

/// Writes `config.json`, `checkpoints/step_NNNNNN/` (including the starting
/// point), `metrics.csv` and, with `plot`, `losses.png` and `masked_fid.png`.
pub fn cmd_train(args: &TrainArgs) -> Result<Vec<MetricsRow>> {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.steps = args.steps.unwrap_or(cfg.steps);
    let gan = cfg.gan();
    gan.validate()?;

    let model = load_model(&args.model)?;
    let (manifest, samples) = load_dataset(&args.dataset, &model)?;
    if manifest.image_size != cfg.discriminator.image_size {
        return Err(CliError::invalid(format!(
            "config field 'discriminator.image_size' is {} but the dataset images are {}x{}",
            cfg.discriminator.image_size, manifest.image_size, manifest.image_size
        )));
    }
    if cfg.holdout >= samples.len() {
        return Err(CliError::invalid(format!(
            "config field 'holdout' ({}) leaves no training samples out of {}",
            cfg.holdout,
            samples.len()
        )));
    }
    let n_train = samples.len() - cfg.holdout;
    let eval_pool = if cfg.holdout > 0 { &samples[n_train..] } else { &samples[..n_train] };
    let eval_set = &eval_pool[..cfg.eval_samples.min(eval_pool.len())];
    let probe = if cfg.eval_every > 0 {
        let extractor = FeatureExtractor::by_name(&cfg.extractor, manifest.image_size, manifest.image_size)?;
        Some(FidProbe::new(eval_set, extractor, true, cfg.bg_color, cfg.seed)?)
    } else {
        None
    };

    let train: Vec<TrainSample> = samples[..n_train]
        .iter()
        .map(|s| TrainSample {
            image: s.image.clone(),
            params: s.params.clone(),
            silhouette: s.silhouette.clone(),
        })
        .collect();
    let rcfg = RenderConfig::default();
    let mut trainer = match &args.resume {
        Some(dir) => {
            let (m, g, d) = load_checkpoint(dir)?;
            if m.generator != cfg.generator || m.discriminator != cfg.discriminator {
                return Err(CliError::invalid(format!(
                    "{}: network architecture differs from the config",
                    dir.display()
                )));
            }
            Trainer::resume(&model, train, gan, &rcfg, g, d, m.step)?
        }
        None => Trainer::new(&model, train, gan, &rcfg)?,
    };

    create_dir(&args.out)?;
    write_json(args.out.join("config.json"), &cfg)?;
    let metrics_path = args.out.join("metrics.csv");
    let save = |t: &Trainer| save_checkpoint(checkpoint_dir(&args.out, t.step()), t.generator(), t.discriminator(), t.step(), cfg.seed);
    let evaluate = |t: &Trainer| -> Result<Option<f64>> {
        probe.as_ref().map(|p| p.score(&model, TextureSource::Generator(t.generator()))).transpose()
    };

    let mut rows = Vec::new();
    save(&trainer)?;
    if probe.is_some() {
        rows.push(MetricsRow {
            step: trainer.step(),
            d_loss: None,
            r1: None,
            g_loss: None,
            g_grad_norm: None,
            masked_fid: evaluate(&trainer)?,
        });
    }
    while trainer.step() < cfg.steps {
        let rec = trainer.train_step()?;
        let step = trainer.step();
        let last = step == cfg.steps;
        let due = |every: u64| every > 0 && step % every == 0;
        let masked_fid = if due(cfg.eval_every) || (last && cfg.eval_every > 0) {
            evaluate(&trainer)?
        } else {
            None
        };
        rows.push(MetricsRow {
            step,
            d_loss: Some(rec.d_loss),
            r1: Some(rec.r1),
            g_loss: Some(rec.g_loss),
            g_grad_norm: Some(rec.g_grad_norm),
            masked_fid,
        });
        if due(cfg.checkpoint_every) || last {
            save(&trainer)?;
            write_csv(&metrics_path, &rows)?;
        }
    }
    write_csv(&metrics_path, &rows)?;
    if args.plot {
        let pick = |f: fn(&MetricsRow) -> Option<f64>| -> Series {
            rows.iter().filter_map(|r| f(r).map(|v| (r.step as f64, v))).collect()
        };
        line_chart(&[pick(|r| r.d_loss), pick(|r| r.g_loss)], &args.out.join("losses.png"))?;
        line_chart(&[pick(|r| r.masked_fid)], &args.out.join("masked_fid.png"))?;
    }
    Ok(rows)
}
