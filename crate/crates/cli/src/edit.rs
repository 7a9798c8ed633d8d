use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uvforge::gan::Generator;
use uvforge::io::{create_dir, load_checkpoint, load_model, read_json, write_json};
use uvforge::latent::{edit, fit_svm, Hyperplane, LabeledLatents};
use uvforge::metrics::FeatureExtractor;
use uvforge::{form_image, Image, MorphableModel, ParamSet, RenderConfig};

use crate::error::{CliError, Result};
use crate::write_csv;

#[derive(Debug, Clone, Default)]
pub struct EditArgs {
    pub model: PathBuf,
    pub checkpoint: PathBuf,
    /// Labeled latents: an SVM is fitted on them, and a linear probe on the
    /// extractor features of their renders.
    pub labels: Option<PathBuf>,
    /// A ready hyperplane; no probe is available then.
    pub hyperplane: Option<PathBuf>,
    pub latent: PathBuf,
    pub params: PathBuf,
    pub alphas: Vec<f64>,
    pub lambda: f64,
    pub svm_steps: usize,
    pub extractor: String,
    pub size: usize,
    pub bg_color: [f64; 3],
    pub out: PathBuf,
}

/// One line of `scores.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub alpha: f64,
    /// Latent hyperplane score of the edited latent.
    pub score: f64,
    /// Linear-probe score of the edited render; empty without labels.
    pub probe_score: Option<f64>,
}

struct Renderer<'a> {
    model: &'a MorphableModel,
    generator: &'a Generator,
    params: &'a ParamSet,
    cfg: RenderConfig,
}

impl Renderer<'_> {
    fn render(&self, z: &[f64]) -> Result<Image> {
        let map = self.generator.generate(z)?;
        Ok(form_image(self.model, &map, self.params, &self.cfg)?.image)
    }
}

/// Writes `hyperplane.json`, `probe.json` (with labels), `edit_NN.png` per
/// alpha and `scores.csv`.
pub fn cmd_edit(args: &EditArgs) -> Result<Vec<ScoreRow>> {
    let model = load_model(&args.model)?;
    let (_, generator, _) = load_checkpoint(&args.checkpoint)?;
    let params: ParamSet = read_json(&args.params)?;
    params.validate(&model).map_err(|e| uvforge::Error::Format {
        path: args.params.clone(),
        message: e.to_string(),
    })?;
    let latent: Vec<f64> = read_json(&args.latent)?;
    if latent.len() != generator.latent_dim() {
        return Err(uvforge::Error::Format {
            path: args.latent.clone(),
            message: format!("latent has {} entries, the generator expects {}", latent.len(), generator.latent_dim()),
        }
        .into());
    }
    if args.alphas.is_empty() {
        return Err(CliError::invalid("at least one alpha is required"));
    }
    let renderer = Renderer {
        model: &model,
        generator: &generator,
        params: &params,
        cfg: RenderConfig {
            background: args.bg_color,
            ..RenderConfig::with_size(args.size, args.size)
        },
    };
    let extractor = FeatureExtractor::by_name(&args.extractor, args.size, args.size)?;

    let labeled: Option<LabeledLatents> = args.labels.as_ref().map(read_json).transpose()?;
    let hyperplane: Hyperplane = match (&args.hyperplane, &labeled) {
        (Some(p), _) => {
            let h: Hyperplane = read_json(p)?;
            h.validate()?;
            h
        }
        (None, Some(data)) => fit_svm(data, args.lambda, args.svm_steps)?,
        (None, None) => return Err(CliError::invalid("either labels or a hyperplane is required")),
    };
    if hyperplane.normal.len() != generator.latent_dim() {
        return Err(CliError::invalid(format!(
            "hyperplane has dimension {}, the generator expects {}",
            hyperplane.normal.len(),
            generator.latent_dim()
        )));
    }
    let probe = match &labeled {
        Some(data) => {
            let latents = data
                .latents
                .par_iter()
                .map(|z| Ok(extractor.extract(&renderer.render(z)?)?))
                .collect::<Result<Vec<_>>>()?;
            let features = LabeledLatents {
                latents,
                labels: data.labels.clone(),
            };
            Some(fit_svm(&features, args.lambda, args.svm_steps)?)
        }
        None => None,
    };

    create_dir(&args.out)?;
    write_json(args.out.join("hyperplane.json"), &hyperplane)?;
    if let Some(p) = &probe {
        write_json(args.out.join("probe.json"), p)?;
    }
    let mut rows = Vec::with_capacity(args.alphas.len());
    for (k, &alpha) in args.alphas.iter().enumerate() {
        let z = edit(&latent, &hyperplane, alpha)?;
        let image = renderer.render(&z)?;
        image.save_png(args.out.join(format!("edit_{k:02}.png")))?;
        let probe_score = probe.as_ref().map(|p| p.score(&extractor.extract(&image)?)).transpose()?;
        rows.push(ScoreRow {
            alpha,
            score: hyperplane.score(&z)?,
            probe_score,
        });
    }
    write_csv(&args.out.join("scores.csv"), &rows)?;
    Ok(rows)
}
