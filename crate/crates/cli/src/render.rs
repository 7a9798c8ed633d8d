use std::path::PathBuf;

use uvforge::io::{create_dir, load_model, read_json};
use uvforge::morphable::sample_texture;
use uvforge::render::render_colors;
use uvforge::{form_image, ParamSet, RenderConfig, RenderOutput, UvMap};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct RenderArgs {
    pub params: PathBuf,
    pub model: PathBuf,
    /// UV texture; without it the linear texture `p_t` from the params is used.
    pub uv: Option<PathBuf>,
    pub size: usize,
    pub bg_color: [f64; 3],
    pub out: PathBuf,
}

/// Writes `render.png` and `silhouette.png` (the soft silhouette).
pub fn cmd_render(args: &RenderArgs) -> Result<RenderOutput> {
    let model = load_model(&args.model)?;
    let params: ParamSet = read_json(&args.params)?;
    params.validate(&model).map_err(|e| uvforge::Error::Format {
        path: args.params.clone(),
        message: e.to_string(),
    })?;
    let cfg = RenderConfig {
        background: args.bg_color,
        ..RenderConfig::with_size(args.size, args.size)
    };
    let out = match (&args.uv, &params.p_t) {
        (Some(uv), _) => form_image(&model, &UvMap::load_png(uv)?, &params, &cfg)?,
        (None, Some(p_t)) => render_colors(&model, &sample_texture(&model, p_t)?, &params, &cfg)?,
        (None, None) => {
            return Err(CliError::invalid(format!(
                "{}: no p_t in the parameters and no UV map given",
                args.params.display()
            )))
        }
    };
    create_dir(&args.out)?;
    out.image.save_png(args.out.join("render.png"))?;
    out.silhouette.save_png(args.out.join("silhouette.png"))?;
    Ok(out)
}
