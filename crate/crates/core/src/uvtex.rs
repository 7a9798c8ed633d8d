//! UV maps and the differentiable bilinear sampler that assigns texture
//! colors to mesh vertices, plus the inverse splatting "unwrap".
//!
//! Coordinate convention: `c = (u, v)` addresses the texel-center grid with
//! `column = u * (W - 1)` and `row = v * (H - 1)`; coordinates are clamped
//! into `[0, 1]^2` (clamp-to-edge addressing).

use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};
use crate::image::Image;

/// An `H x W x 3` texture with every channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UvMap {
    image: Image,
}

impl UvMap {
    pub fn new(image: Image) -> Result<Self> {
        if let Some(i) = image
            .data()
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid(format!("uv map value {i} is outside [0, 1]")));
        }
        Ok(Self { image })
    }

    pub fn uniform(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Self::new(Image::filled(width, height, color))
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn into_image(self) -> Image {
        self.image
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Image::load_png(path)?)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.image.save_png(path)
    }
}

/// Bilinear taps of one coordinate: four texel indices and their weights,
/// plus the weight derivatives with respect to `u` and `v`.
#[derive(Debug, Clone, Copy)]
struct Taps {
    idx: [usize; 4],
    w: [f64; 4],
    dw_du: [f64; 4],
    dw_dv: [f64; 4],
}

fn taps(width: usize, height: usize, c: Vec2) -> Result<Taps> {
    if !c[0].is_finite() || !c[1].is_finite() {
        return Err(Error::NonFinite { what: "uv coordinate", index: 0 });
    }
    let axis = |t: f64, size: usize| -> (usize, usize, f64, f64) {
        let inside = (0.0..=1.0).contains(&t);
        let t = t.clamp(0.0, 1.0);
        if size < 2 {
            return (0, 0, 0.0, 0.0);
        }
        let span = (size - 1) as f64;
        let x = t * span;
        let i0 = (x.floor() as usize).min(size - 2);
        let f = x - i0 as f64;
        // Clamped coordinates have zero derivative.
        let df = if inside { span } else { 0.0 };
        (i0, i0 + 1, f, df)
    };
    let (x0, x1, fx, dfx) = axis(c[0], width);
    let (y0, y1, fy, dfy) = axis(c[1], height);
    Ok(Taps {
        idx: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
        w: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        dw_du: [-(1.0 - fy) * dfx, (1.0 - fy) * dfx, -fy * dfx, fy * dfx],
        dw_dv: [-(1.0 - fx) * dfy, -fx * dfy, (1.0 - fx) * dfy, fx * dfy],
    })
}

/// Bilinearly samples `map` at `c`.
pub fn sample(map: &UvMap, c: Vec2) -> Result<Vec3> {
    let t = taps(map.width(), map.height(), c)?;
    Ok(gather(map.image(), &t))
}

fn gather(img: &Image, t: &Taps) -> Vec3 {
    let mut out = [0.0; 3];
    for k in 0..4 {
        let px = img.at(t.idx[k]);
        for ch in 0..3 {
            out[ch] += t.w[k] * px[ch];
        }
    }
    out
}

/// Pullback of [`sample`] onto the coordinate `c`.
pub fn sample_pullback_coord(map: &UvMap, c: Vec2, d_color: Vec3) -> Result<Vec2> {
    let t = taps(map.width(), map.height(), c)?;
    let mut g = [0.0; 2];
    for k in 0..4 {
        let px = map.image().at(t.idx[k]);
        let s: f64 = (0..3).map(|ch| px[ch] * d_color[ch]).sum();
        g[0] += t.dw_du[k] * s;
        g[1] += t.dw_dv[k] * s;
    }
    Ok(g)
}

/// Precomputed bilinear taps for a fixed set of coordinates on a fixed map
/// size. Sampling and its pullback into the map are then allocation-light.
#[derive(Debug, Clone)]
pub struct UvSampler {
    width: usize,
    height: usize,
    taps: Vec<Taps>,
}

impl UvSampler {
    pub fn new(coords: &[Vec2], width: usize, height: usize) -> Result<Self> {
        let taps = coords
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                taps(width, height, c).map_err(|_| Error::NonFinite {
                    what: "uv coordinate",
                    index: i,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            width,
            height,
            taps,
        })
    }

    pub fn sample(&self, map: &UvMap) -> Result<Vec<Vec3>> {
        if map.width() != self.width || map.height() != self.height {
            return Err(Error::invalid(format!(
                "uv map is {}x{}, sampler expects {}x{}",
                map.width(),
                map.height(),
                self.width,
                self.height
            )));
        }
        Ok(self.taps.iter().map(|t| gather(map.image(), t)).collect())
    }

    /// Adds `J^T d_colors` into `out`, a cotangent buffer shaped like the map.
    pub fn pullback_into(&self, d_colors: &[Vec3], out: &mut [f64]) {
        for (t, d) in self.taps.iter().zip(d_colors) {
            for k in 0..4 {
                let base = 3 * t.idx[k];
                for ch in 0..3 {
                    out[base + ch] += t.w[k] * d[ch];
                }
            }
        }
    }

    /// Cotangent of the map pixels, laid out as an image.
    pub fn pullback(&self, d_colors: &[Vec3]) -> Image {
        let mut out = Image::new(self.width, self.height);
        self.pullback_into(d_colors, out.data_mut());
        out
    }
}

/// Samples every coordinate; row `i` equals `sample(map, coords[i])`.
pub fn sample_all(map: &UvMap, coords: &[Vec2]) -> Result<Vec<Vec3>> {
    UvSampler::new(coords, map.width(), map.height())?.sample(map)
}

/// Pullback of [`sample_all`] onto the map pixels.
pub fn sample_all_pullback(map: &UvMap, coords: &[Vec2], d_colors: &[Vec3]) -> Result<Image> {
    Ok(UvSampler::new(coords, map.width(), map.height())?.pullback(d_colors))
}

/// Splats per-vertex colors into a `width x height` map with bilinear
/// weights and normalizes by the accumulated weight. Texels that receive no
/// weight copy their nearest written texel (4-connected breadth-first fill).
pub fn unwrap(colors: &[Vec3], coords: &[Vec2], width: usize, height: usize) -> Result<UvMap> {
    if colors.len() != coords.len() {
        return Err(Error::Dimension {
            what: "unwrap colors",
            expected: coords.len(),
            actual: colors.len(),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("uv map size must be at least 1x1"));
    }
    let texels = width * height;
    let mut acc = vec![[0.0f64; 3]; texels];
    let mut weight = vec![0.0f64; texels];
    for (i, (&c, col)) in coords.iter().zip(colors).enumerate() {
        let t = taps(width, height, c).map_err(|_| Error::NonFinite {
            what: "uv coordinate",
            index: i,
        })?;
        for k in 0..4 {
            if t.w[k] > 0.0 {
                weight[t.idx[k]] += t.w[k];
                for ch in 0..3 {
                    acc[t.idx[k]][ch] += t.w[k] * col[ch];
                }
            }
        }
    }

    let mut filled = vec![false; texels];
    let mut queue = VecDeque::new();
    let mut img = Image::new(width, height);
    for p in 0..texels {
        if weight[p] > 0.0 {
            let c = acc[p].map(|v| (v / weight[p]).clamp(0.0, 1.0));
            img.set_pixel(p % width, p / width, c);
            filled[p] = true;
            queue.push_back(p);
        }
    }
    if queue.is_empty() {
        return Err(Error::invalid("unwrap needs at least one vertex"));
    }
    while let Some(p) = queue.pop_front() {
        let (x, y) = (p % width, p / width);
        let color = img.pixel(x, y);
        let neighbors = [
            (y > 0).then(|| p - width),
            (x > 0).then(|| p - 1),
            (x + 1 < width).then(|| p + 1),
            (y + 1 < height).then(|| p + width),
        ];
        for q in neighbors.into_iter().flatten() {
            if !filled[q] {
                filled[q] = true;
                img.set_pixel(q % width, q / width, color);
                queue.push_back(q);
            }
        }
    }
    UvMap::new(img)
}
