//! Differentiable inverse-graphics toolkit for UV-texture generative models.
//!
//! The pipeline: a linear morphable face model ([`morphable`]) produces a
//! mesh whose vertices pick up colors from a UV map ([`uvtex`]); the mesh is
//! rendered with a hard z-buffer, Phong shading and a soft silhouette
//! ([`render`]). Parameters are recovered by analysis-by-synthesis
//! ([`fit`]); a toy generator is trained adversarially through the renderer
//! ([`gan`]); results are scored with Fréchet distances and reconstruction
//! metrics ([`metrics`]); latent codes are interpolated and edited along
//! linear-SVM hyperplanes ([`latent`]). [`synth`] builds a synthetic model
//! and dataset so all of it runs without scan data.

pub mod error;
pub mod fit;
pub mod gan;
pub mod geom;
pub mod grad;
pub mod image;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod morphable;
pub mod nn;
pub mod render;
pub mod synth;
pub mod uvtex;

pub use error::{Error, Result};
pub use image::{Image, Plane};
pub use morphable::{MorphableModel, ParamSet};
pub use render::{form_image, Camera, Frame, Light, RenderConfig, RenderOutput};
pub use uvtex::UvMap;
