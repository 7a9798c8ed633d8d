//! Hard z-buffer rasterization into triangle-id, barycentric and depth buffers.

use crate::geom::{cross2, cross2_pullback, sub2, Vec2};

/// Center of pixel `(x, y)` in the `[-1, 1]^2` viewport; row 0 is the top.
#[inline]
pub fn pixel_center(x: usize, y: usize, width: usize, height: usize) -> Vec2 {
    [
        -1.0 + (2 * x + 1) as f64 / width as f64,
        1.0 - (2 * y + 1) as f64 / height as f64,
    ]
}

/// Inclusive pixel-index range whose centers may fall in `[lo, hi]` along x.
pub(crate) fn column_range(lo: f64, hi: f64, width: usize) -> Option<(usize, usize)> {
    // center_x = -1 + (2x + 1)/W  =>  x = ((c + 1) W - 1) / 2
    let a = (((lo + 1.0) * width as f64 - 1.0) / 2.0).ceil();
    let b = (((hi + 1.0) * width as f64 - 1.0) / 2.0).floor();
    clamp_range(a, b, width)
}

/// Inclusive row range whose centers may fall in `[lo, hi]` along y.
pub(crate) fn row_range(lo: f64, hi: f64, height: usize) -> Option<(usize, usize)> {
    // center_y = 1 - (2y + 1)/H  =>  y = ((1 - c) H - 1) / 2
    let a = (((1.0 - hi) * height as f64 - 1.0) / 2.0).ceil();
    let b = (((1.0 - lo) * height as f64 - 1.0) / 2.0).floor();
    clamp_range(a, b, height)
}

fn clamp_range(a: f64, b: f64, size: usize) -> Option<(usize, usize)> {
    // One pixel of slack on each side absorbs rounding in the inversion.
    let a = (a - 1.0).max(0.0);
    let b = (b + 1.0).min(size as f64 - 1.0);
    if !(a <= b) {
        return None;
    }
    Some((a as usize, b as usize))
}

/// Barycentric coordinates of `p`, or `None` for a zero-area triangle.
///
/// Uses the sub-triangle edge functions normalized by their sum, so the
/// coordinates sum to one up to rounding.
#[inline]
pub fn barycentric(p: Vec2, tri: [Vec2; 3]) -> Option<[f64; 3]> {
    let w = edge_functions(p, tri);
    let e = w[0] + w[1] + w[2];
    if e == 0.0 || !e.is_finite() {
        return None;
    }
    Some([w[0] / e, w[1] / e, w[2] / e])
}

#[inline]
fn edge_functions(p: Vec2, tri: [Vec2; 3]) -> [f64; 3] {
    let d = [sub2(tri[0], p), sub2(tri[1], p), sub2(tri[2], p)];
    [cross2(d[1], d[2]), cross2(d[2], d[0]), cross2(d[0], d[1])]
}

/// Pullback of [`barycentric`] onto the three triangle vertices.
pub fn barycentric_pullback(p: Vec2, tri: [Vec2; 3], d_bary: [f64; 3]) -> [Vec2; 3] {
    let w = edge_functions(p, tri);
    let e = w[0] + w[1] + w[2];
    let lam = [w[0] / e, w[1] / e, w[2] / e];
    let mean: f64 = (0..3).map(|k| d_bary[k] * lam[k]).sum();
    let gw = [(d_bary[0] - mean) / e, (d_bary[1] - mean) / e, (d_bary[2] - mean) / e];
    let d = [sub2(tri[0], p), sub2(tri[1], p), sub2(tri[2], p)];
    let mut out = [[0.0; 2]; 3];
    // w_k = cross(d_{k+1}, d_{k+2})
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let (ga, gb) = cross2_pullback(d[i], d[j], gw[k]);
        out[i][0] += ga[0];
        out[i][1] += ga[1];
        out[j][0] += gb[0];
        out[j][1] += gb[1];
    }
    out
}

/// Per-pixel triangle ids (`-1` = background), barycentrics and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub tri_id: Vec<i32>,
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl Raster {
    pub fn coverage(&self) -> usize {
        self.tri_id.iter().filter(|&&t| t >= 0).count()
    }

    pub fn hard_mask(&self) -> Vec<f64> {
        self.tri_id.iter().map(|&t| if t >= 0 { 1.0 } else { 0.0 }).collect()
    }
}

/// Rasterizes `triangles` at pixel centers.
///
/// A pixel is covered when all barycentrics are non-negative; the nearest
/// (smallest interpolated depth) covering triangle wins and exact depth ties
/// go to the lower triangle index. Zero-area triangles are skipped.
pub fn rasterize(
    screen: &[Vec2],
    depth: &[f64],
    triangles: &[[usize; 3]],
    width: usize,
    height: usize,
) -> Raster {
    let px = width * height;
    let mut out = Raster {
        width,
        height,
        tri_id: vec![-1; px],
        bary: vec![[0.0; 3]; px],
        depth: vec![f64::INFINITY; px],
    };
    for (t, tri) in triangles.iter().enumerate() {
        let v = [screen[tri[0]], screen[tri[1]], screen[tri[2]]];
        if cross2(sub2(v[1], v[0]), sub2(v[2], v[0])) == 0.0 {
            continue;
        }
        let lo = [v[0][0].min(v[1][0]).min(v[2][0]), v[0][1].min(v[1][1]).min(v[2][1])];
        let hi = [v[0][0].max(v[1][0]).max(v[2][0]), v[0][1].max(v[1][1]).max(v[2][1])];
        let (Some((x0, x1)), Some((y0, y1))) =
            (column_range(lo[0], hi[0], width), row_range(lo[1], hi[1], height))
        else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let Some(b) = barycentric(pixel_center(x, y, width, height), v) else {
                    continue;
                };
                if b[0] < 0.0 || b[1] < 0.0 || b[2] < 0.0 {
                    continue;
                }
                let z = b[0] * depth[tri[0]] + b[1] * depth[tri[1]] + b[2] * depth[tri[2]];
                let p = y * width + x;
                if z < out.depth[p] {
                    out.depth[p] = z;
                    out.tri_id[p] = t as i32;
                    out.bary[p] = b;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{gradcheck, FnOp};

    #[test]
    fn full_viewport_triangle_covers_everything() {
        let screen = [[-3.0, -3.0], [5.0, -3.0], [-3.0, 5.0]];
        let r = rasterize(&screen, &[0.0; 3], &[[0, 1, 2]], 7, 5);
        assert!(r.tri_id.iter().all(|&t| t == 0));
        assert_eq!(r.coverage(), 35);
        for b in &r.bary {
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mesh_is_background() {
        let r = rasterize(&[], &[], &[], 4, 4);
        assert!(r.tri_id.iter().all(|&t| t == -1));
    }

    #[test]
    fn degenerate_triangle_is_skipped() {
        let screen = [[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0]];
        let r = rasterize(&screen, &[0.0; 3], &[[0, 1, 2]], 8, 8);
        assert_eq!(r.coverage(), 0);
    }

    #[test]
    fn nearer_triangle_wins_and_ties_go_to_lower_index() {
        let screen = [[-3.0, -3.0], [5.0, -3.0], [-3.0, 5.0]];
        let s: Vec<Vec2> = screen.iter().chain(screen.iter()).copied().collect();
        let tris = [[0, 1, 2], [3, 4, 5]];
        let r = rasterize(&s, &[1.0, 1.0, 1.0, 0.5, 0.5, 0.5], &tris, 4, 4);
        assert!(r.tri_id.iter().all(|&t| t == 1));
        let r = rasterize(&s, &[0.5; 6], &tris, 4, 4);
        assert!(r.tri_id.iter().all(|&t| t == 0));
    }

    #[test]
    fn barycentric_gradient_matches_finite_differences() {
        let p = [0.1, 0.05];
        let wts = [0.7, -1.3, 0.4];
        let f = |x: &[f64]| {
            let tri = [[x[0], x[1]], [x[2], x[3]], [x[4], x[5]]];
            let b = barycentric(p, tri).unwrap();
            vec![b[0] * wts[0] + b[1] * wts[1] + b[2] * wts[2]]
        };
        let g = |x: &[f64], ct: &[f64]| {
            let tri = [[x[0], x[1]], [x[2], x[3]], [x[4], x[5]]];
            let d = barycentric_pullback(p, tri, [wts[0] * ct[0], wts[1] * ct[0], wts[2] * ct[0]]);
            d.iter().flatten().copied().collect()
        };
        let r = gradcheck(&FnOp::new(f, g), &[-0.5, -0.4, 0.6, -0.3, 0.0, 0.7], 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn pixel_ranges_bracket_centers() {
        let (w, h) = (16, 9);
        for (lo, hi) in [(-0.3, 0.2), (-2.0, -1.5), (0.9, 3.0), (0.01, 0.02)] {
            let cols: Vec<usize> = (0..w)
                .filter(|&x| {
                    let c = pixel_center(x, 0, w, h)[0];
                    c >= lo && c <= hi
                })
                .collect();
            if let Some(&first) = cols.first() {
                let (a, b) = column_range(lo, hi, w).unwrap();
                assert!(a <= first && b >= *cols.last().unwrap());
            }
            let rows: Vec<usize> = (0..h)
                .filter(|&y| {
                    let c = pixel_center(0, y, w, h)[1];
                    c >= lo && c <= hi
                })
                .collect();
            if let Some(&first) = rows.first() {
                let (a, b) = row_range(lo, hi, h).unwrap();
                assert!(a <= first && b >= *rows.last().unwrap());
            }
        }
    }
}
