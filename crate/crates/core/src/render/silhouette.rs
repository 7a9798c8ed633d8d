//! Soft silhouette: each triangle contributes a logistic of its signed
//! squared distance, and contributions combine as a probabilistic union.

use super::raster::{barycentric, column_range, pixel_center, row_range};
use crate::geom::{dot2, sub2, Vec2};
use crate::geom::logistic;
use crate::image::Plane;

/// Logit below which a triangle's contribution is dropped (`e^-40 ≈ 4e-18`).
const CULL_LOGIT: f64 = 40.0;

struct Nearest {
    /// Signed distance, positive inside the triangle.
    signed: f64,
    edge: usize,
    t: f64,
    /// Unit vector from the nearest boundary point towards the pixel.
    dir: Vec2,
}

fn nearest_boundary(p: Vec2, tri: [Vec2; 3]) -> Option<Nearest> {
    let b = barycentric(p, tri)?;
    let inside = b.iter().all(|&x| x >= 0.0);
    let mut best: Option<Nearest> = None;
    for e in 0..3 {
        let (a, c) = (tri[e], tri[(e + 1) % 3]);
        let ab = sub2(c, a);
        let len2 = dot2(ab, ab);
        let t = if len2 > 0.0 { (dot2(sub2(p, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
        let diff = sub2(p, q);
        let d = dot2(diff, diff).sqrt();
        if best.as_ref().is_none_or(|n| d < n.signed.abs()) {
            let dir = if d > 0.0 { [diff[0] / d, diff[1] / d] } else { [0.0, 0.0] };
            best = Some(Nearest {
                signed: if inside { d } else { -d },
                edge: e,
                t,
                dir,
            });
        }
    }
    best
}

/// Visits every (pixel, triangle) pair whose contribution is not culled,
/// passing the pixel index, triangle index, nearest-boundary data and the
/// logit `signed * |signed| / sigma`.
fn for_each_contribution(
    screen: &[Vec2],
    triangles: &[[usize; 3]],
    width: usize,
    height: usize,
    sigma: f64,
    mut visit: impl FnMut(usize, usize, &Nearest, f64),
) {
    let margin = (CULL_LOGIT * sigma).sqrt();
    for (t, tri) in triangles.iter().enumerate() {
        let v = [screen[tri[0]], screen[tri[1]], screen[tri[2]]];
        let lo = [
            v[0][0].min(v[1][0]).min(v[2][0]) - margin,
            v[0][1].min(v[1][1]).min(v[2][1]) - margin,
        ];
        let hi = [
            v[0][0].max(v[1][0]).max(v[2][0]) + margin,
            v[0][1].max(v[1][1]).max(v[2][1]) + margin,
        ];
        let (Some((x0, x1)), Some((y0, y1))) =
            (column_range(lo[0], hi[0], width), row_range(lo[1], hi[1], height))
        else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let Some(n) = nearest_boundary(pixel_center(x, y, width, height), v) else {
                    continue;
                };
                let logit = n.signed * n.signed.abs() / sigma;
                if logit < -CULL_LOGIT {
                    continue;
                }
                visit(y * width + x, t, &n, logit);
            }
        }
    }
}

/// Per-pixel product of the non-zero `(1 - D_j)` factors and the number of
/// exactly-zero factors.
fn union_products(
    screen: &[Vec2],
    triangles: &[[usize; 3]],
    width: usize,
    height: usize,
    sigma: f64,
) -> (Vec<f64>, Vec<u32>) {
    let mut prod = vec![1.0; width * height];
    let mut zeros = vec![0u32; width * height];
    for_each_contribution(screen, triangles, width, height, sigma, |p, _, _, logit| {
        let f = 1.0 - logistic(logit);
        if f == 0.0 {
            zeros[p] += 1;
        } else {
            prod[p] *= f;
        }
    });
    (prod, zeros)
}

/// `1 - prod_j (1 - logistic(sign(d_j) d_j^2 / sigma))` per pixel, where
/// `d_j` is the distance from the pixel center to triangle `j`'s boundary.
pub fn soft_silhouette(
    screen: &[Vec2],
    triangles: &[[usize; 3]],
    width: usize,
    height: usize,
    sigma: f64,
) -> Plane {
    let (prod, zeros) = union_products(screen, triangles, width, height, sigma);
    let data = prod
        .iter()
        .zip(&zeros)
        .map(|(&p, &z)| if z > 0 { 1.0 } else { 1.0 - p })
        .collect();
    Plane::from_vec(width, height, data).expect("buffer sized from dimensions")
}

/// Pullback of [`soft_silhouette`] onto the screen positions.
pub fn soft_silhouette_pullback(
    screen: &[Vec2],
    triangles: &[[usize; 3]],
    width: usize,
    height: usize,
    sigma: f64,
    d_sil: &[f64],
) -> Vec<Vec2> {
    let mut grad = vec![[0.0; 2]; screen.len()];
    if d_sil.iter().all(|&g| g == 0.0) {
        return grad;
    }
    let (prod, zeros) = union_products(screen, triangles, width, height, sigma);
    for_each_contribution(screen, triangles, width, height, sigma, |p, t, n, logit| {
        if d_sil[p] == 0.0 {
            return;
        }
        let d = logistic(logit);
        let f = 1.0 - d;
        let others = match (zeros[p], f == 0.0) {
            (0, _) => prod[p] / f,
            (1, true) => prod[p],
            _ => 0.0,
        };
        // sil = 1 - f * others  =>  dsil/dD = others
        let d_signed = d_sil[p] * others * d * f * 2.0 * n.signed.abs() / sigma;
        if d_signed == 0.0 {
            return;
        }
        // dd/da = -(1-t) dir, dd/db = -t dir for the nearest edge (a, b).
        let sign = if n.signed >= 0.0 { 1.0 } else { -1.0 };
        let g = d_signed * sign;
        let tri = triangles[t];
        let (ia, ib) = (tri[n.edge], tri[(n.edge + 1) % 3]);
        for k in 0..2 {
            grad[ia][k] -= g * (1.0 - n.t) * n.dir[k];
            grad[ib][k] -= g * n.t * n.dir[k];
        }
    });
    grad
}
