use std::path::{Path, PathBuf};

use uvforge::io::{dataset_manifest, load_model, read_json, save_dataset, save_model, DatasetSample};
use uvforge::synth::{make_dataset, make_model, SynthConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOutput {
    pub model_dir: PathBuf,
    pub dataset_dir: PathBuf,
}

/// Builds the synthetic model and dataset into `out/model` and `out/dataset`.
///
/// The dataset is rendered from the model as reloaded from disk, so it is
/// consistent with what later commands will load.
pub fn cmd_synth(config: Option<&Path>, out: &Path) -> Result<SynthOutput> {
    let cfg: SynthConfig = match config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    cfg.validate()?;
    if cfg.n_samples == 0 {
        return Err(CliError::invalid("config field 'n_samples' must be at least 1"));
    }
    let model_dir = out.join("model");
    let dataset_dir = out.join("dataset");
    save_model(&model_dir, &make_model(&cfg)?, Some(cfg.seed))?;
    let model = load_model(&model_dir)?;
    let samples: Vec<DatasetSample> = make_dataset(&model, &cfg)?
        .into_iter()
        .map(|s| DatasetSample {
            image: s.image,
            params: s.params,
            silhouette: s.silhouette,
            landmarks: s.landmarks,
            uv: Some(s.uv),
            label: s.label,
        })
        .collect();
    let rule = serde_json::to_value(cfg.attribute_rule).expect("enum serializes");
    let manifest = dataset_manifest(
        cfg.n_samples,
        cfg.image_size,
        cfg.uv_size,
        cfg.seed,
        rule.as_str().unwrap_or_default(),
    );
    save_dataset(&dataset_dir, &manifest, &samples)?;
    Ok(SynthOutput { model_dir, dataset_dir })
}
