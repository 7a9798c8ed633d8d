use std::path::PathBuf;

use uvforge::fit::{fit_shape, FitConfig, Landmarks, ShapeFit};
use uvforge::io::{create_dir, load_model, read_json, write_json};
use uvforge::morphable::sample_texture;
use uvforge::render::render_colors;
use uvforge::synth::frontal_params;
use uvforge::{Image, ParamSet, RenderConfig};

use crate::error::Result;
use crate::plot::{line_chart, Series};
use crate::write_csv;

#[derive(Debug, Clone, Default)]
pub struct FitArgs {
    pub image: PathBuf,
    pub landmarks: PathBuf,
    pub model: PathBuf,
    /// Starting parameters; the frontal mean face when absent.
    pub init: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub lambda_pix: Option<f64>,
    pub lambda_lm: Option<f64>,
    pub out: PathBuf,
    pub plot: bool,
}

/// Writes `params.json`, `render.png`, `trace.csv` and, with `plot`, `trace.png`.
pub fn cmd_fit(args: &FitArgs) -> Result<ShapeFit> {
    let model = load_model(&args.model)?;
    let target = Image::load_png(&args.image)?;
    let landmarks: Landmarks = read_json(&args.landmarks)?;
    let init: ParamSet = match &args.init {
        Some(p) => {
            let init: ParamSet = read_json(p)?;
            init.validate(&model).map_err(|e| uvforge::Error::Format {
                path: p.clone(),
                message: e.to_string(),
            })?;
            init
        }
        None => frontal_params(&model),
    };
    let mut cfg: FitConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    cfg.steps = args.steps.unwrap_or(cfg.steps);
    cfg.lr = args.lr.unwrap_or(cfg.lr);
    cfg.lambda_pix = args.lambda_pix.unwrap_or(cfg.lambda_pix);
    cfg.lambda_lm = args.lambda_lm.unwrap_or(cfg.lambda_lm);
    cfg.validate()?;

    let fit = fit_shape(&target, &landmarks, &model, &init, &cfg, &RenderConfig::default())?;
    create_dir(&args.out)?;
    write_json(args.out.join("params.json"), &fit.params)?;
    let rcfg = RenderConfig::with_size(target.width(), target.height());
    let colors = sample_texture(&model, fit.params.p_t.as_deref().unwrap_or_default())?;
    render_colors(&model, &colors, &fit.params, &rcfg)?
        .image
        .save_png(args.out.join("render.png"))?;
    write_csv(&args.out.join("trace.csv"), &fit.trace)?;
    if args.plot {
        let series = |f: fn(&uvforge::fit::TraceRow) -> f64| -> Series {
            fit.trace.iter().map(|r| (r.step as f64, f(r))).collect()
        };
        let lines = [series(|r| r.e_pix), series(|r| r.e_lm), series(|r| r.total)];
        line_chart(&lines, &args.out.join("trace.png"))?;
    }
    Ok(fit)
}
