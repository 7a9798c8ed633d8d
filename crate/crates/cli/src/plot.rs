//! Minimal PNG line charts for loss traces and metric logs.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;

/// `(x, y)` points of one line; non-finite points are skipped.
pub type Series = Vec<(f64, f64)>;

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: u32 = 24;
const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let pts = series.iter().flatten().filter(|(x, y)| x.is_finite() && y.is_finite());
    let mut b: Option<(f64, f64, f64, f64)> = None;
    for &(x, y) in pts {
        b = Some(match b {
            None => (x, x, y, y),
            Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
        });
    }
    b.map(|(x0, x1, y0, y1)| {
        let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        (x0, x1, y0, y1)
    })
}

fn line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
    let (mut x, mut y) = a;
    let (dx, dy) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let (sx, sy) = (if a.0 < b.0 { 1 } else { -1 }, if a.1 < b.1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        if (0..WIDTH as i64).contains(&x) && (0..HEIGHT as i64).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws every series into one frame with shared autoscaled axes, a light
/// grid and a color key (series order) in the top-right corner.
pub fn line_chart(series: &[Series], path: &Path) -> Result<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (l, r, t, b) = (MARGIN as i64, (WIDTH - MARGIN) as i64, MARGIN as i64, (HEIGHT - MARGIN) as i64);
    let grid = Rgb([225, 225, 225]);
    for k in 1..5 {
        let y = t + (b - t) * k / 5;
        line(&mut img, (l, y), (r, y), grid);
        let x = l + (r - l) * k / 5;
        line(&mut img, (x, t), (x, b), grid);
    }
    let frame = Rgb([90, 90, 90]);
    for (p, q) in [((l, t), (r, t)), ((r, t), (r, b)), ((r, b), (l, b)), ((l, b), (l, t))] {
        line(&mut img, p, q, frame);
    }
    if let Some((x0, x1, y0, y1)) = bounds(series) {
        let to_px = |(x, y): (f64, f64)| {
            let px = l as f64 + (x - x0) / (x1 - x0) * (r - l) as f64;
            let py = b as f64 - (y - y0) / (y1 - y0) * (b - t) as f64;
            (px.round() as i64, py.round() as i64)
        };
        for (i, s) in series.iter().enumerate() {
            let color = Rgb(PALETTE[i % PALETTE.len()]);
            let pts: Vec<_> = s.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).map(to_px).collect();
            if let [only] = pts[..] {
                line(&mut img, only, only, color);
            }
            for w in pts.windows(2) {
                line(&mut img, w[0], w[1], color);
            }
            let kx = r - 10 - 12 * (series.len() - 1 - i) as i64;
            for dy in 0..6 {
                line(&mut img, (kx, t + 4 + dy), (kx + 6, t + 4 + dy), color);
            }
        }
    }
    img.save(path).map_err(|e| uvforge::Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_lines_inside_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let s: Series = (0..50).map(|i| (i as f64, (i as f64 * 0.2).sin())).collect();
        line_chart(&[s, vec![(0.0, f64::NAN), (3.0, 0.5)]], &p).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (WIDTH, HEIGHT));
        let blue = img.pixels().filter(|px| px.0 == PALETTE[0]).count();
        assert!(blue > 100, "{blue}");
    }

    #[test]
    fn empty_and_flat_series_do_not_panic() {
        let dir = tempfile::tempdir().unwrap();
        line_chart(&[], &dir.path().join("a.png")).unwrap();
        line_chart(&[vec![(1.0, 2.0), (1.0, 2.0)]], &dir.path().join("b.png")).unwrap();
    }
}
