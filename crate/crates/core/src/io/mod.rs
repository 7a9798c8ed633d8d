//! On-disk formats: model containers, datasets and GAN checkpoints.

mod obj;
mod tensor;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use obj::{format_obj, parse_obj, read_obj, write_obj, ObjMesh};
pub use tensor::{decode_tensor, encode_tensor, read_tensor, read_tensor_shaped, write_tensor, VERSION as TENSOR_VERSION};

use crate::error::{Error, Result};
use crate::fit::Landmarks;
use crate::gan::{Discriminator, DiscriminatorArch, Generator, GeneratorArch};
use crate::image::{Image, Plane};
use crate::morphable::{Basis, MorphableModel, ParamSet};
use crate::uvtex::UvMap;

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub k_id: usize,
    pub k_expr: usize,
    pub k_tex: usize,
    pub landmark_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

const MODEL_FORMAT: &str = "uvforge-model";
const DATASET_FORMAT: &str = "uvforge-dataset";
const CHECKPOINT_FORMAT: &str = "uvforge-checkpoint";

fn check_format(path: &Path, found: &str, expected: &str, version: u32) -> Result<()> {
    if found != expected {
        return Err(Error::format(path, format!("field 'format': expected '{expected}', found '{found}'")));
    }
    if version != 1 {
        return Err(Error::format(path, format!("field 'version': unsupported version {version}")));
    }
    Ok(())
}

/// Writes `manifest.json`, `mesh.obj` (mean identity shape, UVs, faces) and
/// one tensor file per remaining array.
pub fn save_model(dir: impl AsRef<Path>, model: &MorphableModel, seed: Option<u64>) -> Result<()> {
    let dir = dir.as_ref();
    model.validate()?;
    create_dir(dir)?;
    let n = model.vertex_count();
    let manifest = ModelManifest {
        format: MODEL_FORMAT.into(),
        version: 1,
        vertex_count: n,
        triangle_count: model.triangles.len(),
        k_id: model.k_id(),
        k_expr: model.k_expr(),
        k_tex: model.k_tex(),
        landmark_indices: model.landmark_indices.clone(),
        seed,
    };
    write_json(dir.join("manifest.json"), &manifest)?;
    let mesh = ObjMesh {
        vertices: model.mean_shape_id.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        uvs: model.uv_coords.clone(),
        triangles: model.triangles.clone(),
    };
    write_obj(dir.join("mesh.obj"), &mesh)?;
    write_tensor(dir.join("mean_shape_expr.uvtf"), &[n, 3], &model.mean_shape_expr)?;
    write_tensor(dir.join("mean_texture.uvtf"), &[n, 3], &model.mean_texture)?;
    for (name, b) in [
        ("id_basis", &model.id_basis),
        ("expr_basis", &model.expr_basis),
        ("tex_basis", &model.tex_basis),
    ] {
        write_tensor(dir.join(format!("{name}.uvtf")), &[b.rows(), b.cols()], b.data())?;
    }
    Ok(())
}

pub fn load_model_manifest(dir: impl AsRef<Path>) -> Result<ModelManifest> {
    let path = dir.as_ref().join("manifest.json");
    let m: ModelManifest = read_json(&path)?;
    check_format(&path, &m.format, MODEL_FORMAT, m.version)?;
    Ok(m)
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<MorphableModel> {
    let dir = dir.as_ref();
    let m = load_model_manifest(dir)?;
    let mesh_path = dir.join("mesh.obj");
    let mesh = read_obj(&mesh_path)?;
    let n = m.vertex_count;
    if mesh.vertices.len() != n {
        return Err(Error::format(
            &mesh_path,
            format!("{} vertices, manifest field 'vertex_count' says {n}", mesh.vertices.len()),
        ));
    }
    if mesh.triangles.len() != m.triangle_count {
        return Err(Error::format(
            &mesh_path,
            format!("{} faces, manifest field 'triangle_count' says {}", mesh.triangles.len(), m.triangle_count),
        ));
    }
    let basis = |name: &str, k: usize| -> Result<Basis> {
        let data = read_tensor_shaped(dir.join(format!("{name}.uvtf")), &[3 * n, k])?;
        Basis::from_row_major(3 * n, k, data)
    };
    let model = MorphableModel {
        mean_shape_id: mesh.vertices.iter().flatten().copied().collect(),
        mean_shape_expr: read_tensor_shaped(dir.join("mean_shape_expr.uvtf"), &[n, 3])?,
        mean_texture: read_tensor_shaped(dir.join("mean_texture.uvtf"), &[n, 3])?,
        id_basis: basis("id_basis", m.k_id)?,
        expr_basis: basis("expr_basis", m.k_expr)?,
        tex_basis: basis("tex_basis", m.k_tex)?,
        triangles: mesh.triangles,
        uv_coords: mesh.uvs,
        landmark_indices: m.landmark_indices,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub n_samples: usize,
    pub image_size: usize,
    pub uv_size: usize,
    pub seed: u64,
    pub attribute_rule: String,
    pub generator: String,
}

/// One sample as stored on disk.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub image: Image,
    pub params: ParamSet,
    pub silhouette: Plane,
    pub landmarks: Landmarks,
    pub uv: Option<UvMap>,
    pub label: i8,
}

pub fn sample_name(i: usize) -> String {
    format!("{i:04}")
}

pub struct SamplePaths {
    pub image: PathBuf,
    pub silhouette: PathBuf,
    pub params: PathBuf,
    pub landmarks: PathBuf,
    pub uv: PathBuf,
}

pub fn sample_paths(dir: &Path, i: usize) -> SamplePaths {
    let n = sample_name(i);
    SamplePaths {
        image: dir.join("images").join(format!("{n}.png")),
        silhouette: dir.join("silhouettes").join(format!("{n}.png")),
        params: dir.join("params").join(format!("{n}.json")),
        landmarks: dir.join("landmarks").join(format!("{n}.json")),
        uv: dir.join("uv").join(format!("{n}.png")),
    }
}

/// Writes `images/`, `silhouettes/`, `params/`, `landmarks/`, `uv/`,
/// `labels.json` and `manifest.json`.
pub fn save_dataset(dir: impl AsRef<Path>, manifest: &DatasetManifest, samples: &[DatasetSample]) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["images", "silhouettes", "params", "landmarks", "uv"] {
        create_dir(dir.join(sub))?;
    }
    for (i, s) in samples.iter().enumerate() {
        let p = sample_paths(dir, i);
        s.image.save_png(&p.image)?;
        s.silhouette.save_png(&p.silhouette)?;
        write_json(&p.params, &s.params)?;
        write_json(&p.landmarks, &s.landmarks)?;
        if let Some(uv) = &s.uv {
            uv.save_png(&p.uv)?;
        }
    }
    let labels: Vec<i8> = samples.iter().map(|s| s.label).collect();
    write_json(dir.join("labels.json"), &labels)?;
    write_json(dir.join("manifest.json"), manifest)
}

pub fn load_dataset_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = dir.as_ref().join("manifest.json");
    let m: DatasetManifest = read_json(&path)?;
    check_format(&path, &m.format, DATASET_FORMAT, m.version)?;
    if m.n_samples == 0 {
        return Err(Error::format(&path, "field 'n_samples' must be at least 1"));
    }
    Ok(m)
}

pub fn dataset_manifest(n_samples: usize, image_size: usize, uv_size: usize, seed: u64, rule: &str) -> DatasetManifest {
    DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: 1,
        n_samples,
        image_size,
        uv_size,
        seed,
        attribute_rule: rule.into(),
        generator: format!("uvforge {}", env!("CARGO_PKG_VERSION")),
    }
}

/// Loads the dataset, checking every sample against the manifest and `model`.
pub fn load_dataset(dir: impl AsRef<Path>, model: &MorphableModel) -> Result<(DatasetManifest, Vec<DatasetSample>)> {
    let dir = dir.as_ref();
    let m = load_dataset_manifest(dir)?;
    let labels_path = dir.join("labels.json");
    let labels: Vec<i8> = read_json(&labels_path)?;
    if labels.len() != m.n_samples {
        return Err(Error::format(&labels_path, format!("{} labels for {} samples", labels.len(), m.n_samples)));
    }
    let mut samples = Vec::with_capacity(m.n_samples);
    for (i, label) in labels.into_iter().enumerate() {
        let p = sample_paths(dir, i);
        let image = Image::load_png(&p.image)?;
        if image.width() != m.image_size || image.height() != m.image_size {
            return Err(Error::format(&p.image, format!("expected {0}x{0} pixels", m.image_size)));
        }
        let silhouette = Plane::load_png(&p.silhouette)?;
        silhouette.same_size(&image).map_err(|e| Error::format(&p.silhouette, e.to_string()))?;
        let params: ParamSet = read_json(&p.params)?;
        params.validate(model).map_err(|e| Error::format(&p.params, e.to_string()))?;
        let landmarks: Landmarks = read_json(&p.landmarks)?;
        let uv = if p.uv.exists() { Some(UvMap::load_png(&p.uv)?) } else { None };
        samples.push(DatasetSample {
            image,
            params,
            silhouette,
            landmarks,
            uv,
            label,
        });
    }
    Ok((m, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub seed: u64,
    pub generator: GeneratorArch,
    pub discriminator: DiscriminatorArch,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, g: &Generator, d: &Discriminator, step: u64, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    write_tensor(dir.join("generator.uvtf"), &[g.params().len()], g.params())?;
    write_tensor(dir.join("discriminator.uvtf"), &[d.params().len()], d.params())?;
    write_json(
        dir.join("manifest.json"),
        &CheckpointManifest {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            step,
            seed,
            generator: *g.arch(),
            discriminator: *d.arch(),
        },
    )
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(CheckpointManifest, Generator, Discriminator)> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let m: CheckpointManifest = read_json(&path)?;
    check_format(&path, &m.format, CHECKPOINT_FORMAT, m.version)?;
    let gp = dir.join("generator.uvtf");
    let (_, g) = read_tensor(&gp)?;
    let g = Generator::from_params(m.generator, g).map_err(|e| Error::format(&gp, e.to_string()))?;
    let dp = dir.join("discriminator.uvtf");
    let (_, d) = read_tensor(&dp)?;
    let d = Discriminator::from_params(m.discriminator, d).map_err(|e| Error::format(&dp, e.to_string()))?;
    Ok((m, g, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_dataset, make_model, SynthConfig};
    use rand::SeedableRng;

    #[test]
    fn model_round_trip_is_close_and_stable() {
        let cfg = SynthConfig {
            n_subdiv: 2,
            ..SynthConfig::default()
        };
        let model = make_model(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(dir.path(), &model, Some(3)).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.triangles, model.triangles);
        assert_eq!(back.uv_coords, model.uv_coords);
        assert_eq!(back.mean_shape_id, model.mean_shape_id);
        for (a, b) in back.id_basis.data().iter().zip(model.id_basis.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        // A second save of the reloaded model reproduces the same bytes.
        let dir2 = tempfile::tempdir().unwrap();
        save_model(dir2.path(), &back, Some(3)).unwrap();
        for f in ["manifest.json", "mesh.obj", "id_basis.uvtf", "mean_texture.uvtf"] {
            assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(dir2.path().join(f)).unwrap());
        }
    }

    #[test]
    fn manifest_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("manifest.json"), r#"{"format":"uvforge-model","version":1,"bogus":1}"#).unwrap();
        let err = load_model(dir.path()).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn dataset_and_checkpoint_round_trip() {
        let cfg = SynthConfig {
            n_subdiv: 2,
            n_samples: 3,
            image_size: 16,
            uv_size: 8,
            ..SynthConfig::default()
        };
        let model = make_model(&cfg).unwrap();
        let samples: Vec<DatasetSample> = make_dataset(&model, &cfg)
            .unwrap()
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
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &dataset_manifest(3, 16, 8, 0, "id_sign"), &samples).unwrap();
        let (m, back) = load_dataset(dir.path(), &model).unwrap();
        assert_eq!(m.n_samples, 3);
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.params, b.params);
            assert_eq!(a.silhouette, b.silhouette);
            assert_eq!(a.image.quantized(), b.image);
            assert_eq!(a.label, b.label);
        }

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let g = Generator::new(GeneratorArch::default(), &mut rng).unwrap();
        let d = Discriminator::new(DiscriminatorArch::default(), &mut rng).unwrap();
        save_checkpoint(dir.path().join("ckpt"), &g, &d, 7, 1).unwrap();
        let (m, g2, d2) = load_checkpoint(dir.path().join("ckpt")).unwrap();
        assert_eq!(m.step, 7);
        assert!(g.params().iter().zip(g2.params()).all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(d.params().len(), d2.params().len());
    }
}
