use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use uvforge::io::{create_dir, load_checkpoint, load_model, read_json};
use uvforge::latent::{bilerp, complete_parallelogram, lerp};
use uvforge::{form_image, Image, ParamSet, RenderConfig};

use crate::error::{CliError, Result};

/// One interpolation endpoint: 3D parameters plus a generator latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corner {
    pub params: ParamSet,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct InterpArgs {
    pub model: PathBuf,
    pub checkpoint: PathBuf,
    /// Two corners give a row; three or four give a grid (top-left,
    /// top-right, bottom-left[, bottom-right]).
    pub corners: Vec<PathBuf>,
    /// Columns, and rows for grids.
    pub steps: (usize, usize),
    pub size: usize,
    pub bg_color: [f64; 3],
    pub out: PathBuf,
}

fn t_at(k: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        k as f64 / (n - 1) as f64
    }
}

/// Pastes equally sized tiles row by row.
fn tile(tiles: &[Image], cols: usize) -> Image {
    let (w, h) = (tiles[0].width(), tiles[0].height());
    let rows = tiles.len().div_ceil(cols);
    let mut out = Image::new(w * cols, h * rows);
    for (k, t) in tiles.iter().enumerate() {
        let (ox, oy) = ((k % cols) * w, (k / cols) * h);
        for y in 0..h {
            for x in 0..w {
                out.set_pixel(ox + x, oy + y, t.pixel(x, y));
            }
        }
    }
    out
}

/// Writes `images.png` (renders) and `uv.png` (generated UV maps), with the
/// first corner at the top left. Parameters and latents are interpolated
/// with the same weights.
pub fn cmd_interp(args: &InterpArgs) -> Result<(Image, Image)> {
    if !(2..=4).contains(&args.corners.len()) {
        return Err(CliError::invalid(format!("expected 2 to 4 corners, got {}", args.corners.len())));
    }
    let model = load_model(&args.model)?;
    let (_, generator, _) = load_checkpoint(&args.checkpoint)?;
    let mut corners = Vec::new();
    for path in &args.corners {
        let c: Corner = read_json(path)?;
        let bad = |e: uvforge::Error| uvforge::Error::Format {
            path: path.clone(),
            message: e.to_string(),
        };
        c.params.validate(&model).map_err(bad)?;
        if c.latent.len() != generator.latent_dim() {
            return Err(bad(uvforge::Error::Dimension {
                what: "latent",
                expected: generator.latent_dim(),
                actual: c.latent.len(),
            })
            .into());
        }
        corners.push((c.params.to_vec(), c.latent, c.params));
    }
    let layout = corners[0].2.clone();
    if corners.iter().any(|c| c.0.len() != corners[0].0.len()) {
        return Err(CliError::invalid("corners disagree on whether p_t is present"));
    }

    let (cols, rows) = match corners.len() {
        2 => (args.steps.0.max(1), 1),
        _ => (args.steps.0.max(1), args.steps.1.max(1)),
    };
    let mut points = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let (u, v) = (t_at(c, cols), t_at(r, rows));
            let point = match &corners[..] {
                [a, b] => (lerp(&a.0, &b.0, u)?, lerp(&a.1, &b.1, u)?),
                [tl, tr, bl, rest @ ..] => {
                    let (br_p, br_z) = match rest {
                        [br] => (br.0.clone(), br.1.clone()),
                        _ => (complete_parallelogram(&tl.0, &tr.0, &bl.0)?, complete_parallelogram(&tl.1, &tr.1, &bl.1)?),
                    };
                    (bilerp(&tl.0, &tr.0, &bl.0, &br_p, u, v)?, bilerp(&tl.1, &tr.1, &bl.1, &br_z, u, v)?)
                }
                _ => unreachable!("corner count checked above"),
            };
            points.push(point);
        }
    }

    let rcfg = RenderConfig {
        background: args.bg_color,
        ..RenderConfig::with_size(args.size, args.size)
    };
    let mut renders = Vec::with_capacity(points.len());
    let mut maps = Vec::with_capacity(points.len());
    for (p, z) in &points {
        let map = generator.generate(z)?;
        renders.push(form_image(&model, &map, &layout.with_values(p), &rcfg)?.image);
        maps.push(map.into_image());
    }
    let images = tile(&renders, cols);
    let uv = tile(&maps, cols);
    create_dir(&args.out)?;
    images.save_png(args.out.join("images.png"))?;
    uv.save_png(args.out.join("uv.png"))?;
    Ok((images, uv))
}
