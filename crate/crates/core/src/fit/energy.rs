//! Pixel and landmark energies for analysis-by-synthesis fitting.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geom::Vec3;
use crate::image::{Image, Plane};
use crate::morphable::{landmark_vertices, landmark_vertices_pullback, MorphableModel, LANDMARK_COUNT};
use crate::render::{project, project_pullback, Camera};

/// Target 2D landmarks in screen coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmarks {
    pub points: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl Landmarks {
    pub fn all_visible(points: Vec<[f64; 2]>) -> Self {
        let visible = vec![true; points.len()];
        Self { points, visible }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("landmark points", LANDMARK_COUNT, self.points.len())?;
        check_dim("landmark visibility", LANDMARK_COUNT, self.visible.len())?;
        if let Some(i) = self.points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite { what: "landmark", index: i });
        }
        Ok(())
    }
}

fn foreground(mask: &Plane) -> impl Iterator<Item = usize> + '_ {
    mask.data().iter().enumerate().filter(|(_, &m)| m > 0.5).map(|(p, _)| p)
}

fn check_pair(target: &Image, rendered: &Image, mask: &Plane) -> Result<usize> {
    target.same_size(rendered)?;
    mask.same_size(target)?;
    match foreground(mask).count() {
        0 => Err(Error::EmptyForeground),
        n => Ok(n),
    }
}

/// Mean over the foreground of the per-pixel RGB Euclidean distance.
pub fn e_pix(target: &Image, rendered: &Image, mask: &Plane) -> Result<f64> {
    let count = check_pair(target, rendered, mask)?;
    let sum: f64 = foreground(mask)
        .map(|p| {
            let (a, b) = (target.at(p), rendered.at(p));
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(sum / count as f64)
}

/// Gradient of [`e_pix`] with respect to the rendered pixels. Pixels with
/// zero residual take the zero subgradient.
pub fn e_pix_grad(target: &Image, rendered: &Image, mask: &Plane) -> Result<Image> {
    let count = check_pair(target, rendered, mask)? as f64;
    let mut g = Image::new(target.width(), target.height());
    for p in foreground(mask) {
        let (a, b) = (target.at(p), rendered.at(p));
        let r = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if norm > 0.0 {
            g.data_mut()[3 * p..3 * p + 3].copy_from_slice(&r.map(|v| v / (norm * count)));
        }
    }
    Ok(g)
}

/// Mean over the foreground of the per-pixel L1 (sum over channels) distance.
pub fn l1_loss(target: &Image, rendered: &Image, mask: &Plane) -> Result<f64> {
    let count = check_pair(target, rendered, mask)?;
    let sum: f64 = foreground(mask)
        .map(|p| {
            let (a, b) = (target.at(p), rendered.at(p));
            (0..3).map(|ch| (a[ch] - b[ch]).abs()).sum::<f64>()
        })
        .sum();
    Ok(sum / count as f64)
}

pub fn l1_loss_grad(target: &Image, rendered: &Image, mask: &Plane) -> Result<Image> {
    let count = check_pair(target, rendered, mask)? as f64;
    let mut g = Image::new(target.width(), target.height());
    for p in foreground(mask) {
        let (a, b) = (target.at(p), rendered.at(p));
        for ch in 0..3 {
            let d = b[ch] - a[ch];
            g.data_mut()[3 * p + ch] = if d > 0.0 {
                1.0 / count
            } else if d < 0.0 {
                -1.0 / count
            } else {
                0.0
            };
        }
    }
    Ok(g)
}

/// Mean over visible landmarks of the distance between target and
/// projected landmark vertices.
pub fn e_lm(target: &Landmarks, shape: &[Vec3], cam: &Camera, model: &MorphableModel) -> Result<f64> {
    Ok(landmark_terms(target, shape, cam, model)?.0)
}

/// Value and gradient of [`e_lm`] as `(value, d shape, d p_c)`.
pub fn e_lm_with_grad(
    target: &Landmarks,
    shape: &[Vec3],
    cam: &Camera,
    model: &MorphableModel,
) -> Result<(f64, Vec<Vec3>, [f64; 6])> {
    let (value, lm, d_screen) = landmark_terms(target, shape, cam, model)?;
    let (d_lm, d_cam) = project_pullback(&lm, cam, &d_screen, &[]);
    Ok((value, landmark_vertices_pullback(model, &d_lm), d_cam))
}

#[allow(clippy::type_complexity)]
fn landmark_terms(
    target: &Landmarks,
    shape: &[Vec3],
    cam: &Camera,
    model: &MorphableModel,
) -> Result<(f64, Vec<Vec3>, Vec<[f64; 2]>)> {
    target.validate()?;
    let visible = target.visible.iter().filter(|&&v| v).count();
    if visible == 0 {
        return Err(Error::NoVisibleLandmarks);
    }
    let lm = landmark_vertices(model, shape)?;
    let proj = project(&lm, cam);
    let mut sum = 0.0;
    let mut d_screen = vec![[0.0; 2]; lm.len()];
    for (j, (&t, &s)) in target.points.iter().zip(&proj.screen).enumerate() {
        if !target.visible[j] {
            continue;
        }
        let r = [s[0] - t[0], s[1] - t[1]];
        let d = (r[0] * r[0] + r[1] * r[1]).sqrt();
        sum += d;
        if d > 0.0 {
            d_screen[j] = [r[0] / (d * visible as f64), r[1] / (d * visible as f64)];
        }
    }
    Ok((sum / visible as f64, lm, d_screen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{gradcheck, FnOp};
    use crate::morphable::{sample_shape, sample_shape_pullback, tests::random_model};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
        Image::from_vec(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn identical_images_have_zero_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(5, 4, &mut rng);
        let m = Plane::filled(5, 4, 1.0);
        assert_eq!(e_pix(&a, &a, &m).unwrap(), 0.0);
        assert!(e_pix_grad(&a, &a, &m).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn black_versus_white_is_sqrt_three() {
        let black = Image::new(4, 4);
        let white = Image::filled(4, 4, [1.0; 3]);
        let e = e_pix(&black, &white, &Plane::filled(4, 4, 1.0)).unwrap();
        assert!((e - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (random_image(7, 6, &mut rng), random_image(7, 6, &mut rng));
        let mask = Plane::from_vec(7, 6, (0..42).map(|i| (i % 3 != 0) as u8 as f64).collect()).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in 0..6 {
            for x in 0..7 {
                if mask.get(x, y) == 1.0 {
                    let (p, q) = (a.pixel(x, y), b.pixel(x, y));
                    sum += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                    n += 1.0;
                }
            }
        }
        assert!((e_pix(&a, &b, &mask).unwrap() - sum / n).abs() < 1e-10);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let a = Image::new(2, 2);
        assert!(matches!(e_pix(&a, &a, &Plane::filled(2, 2, 0.0)), Err(Error::EmptyForeground)));
    }

    #[test]
    fn pixel_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = random_image(6, 5, &mut rng);
        let mask = Plane::from_vec(6, 5, (0..30).map(|i| (i % 4 != 1) as u8 as f64).collect()).unwrap();
        let x0 = random_image(6, 5, &mut rng).into_vec();
        let f = |x: &[f64]| vec![e_pix(&target, &Image::from_vec(6, 5, x.to_vec()).unwrap(), &mask).unwrap()];
        let b = |x: &[f64], ct: &[f64]| {
            let g = e_pix_grad(&target, &Image::from_vec(6, 5, x.to_vec()).unwrap(), &mask).unwrap();
            g.data().iter().map(|v| v * ct[0]).collect()
        };
        let r = gradcheck(&FnOp::new(f, b), &x0, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        let f1 = |x: &[f64]| vec![l1_loss(&target, &Image::from_vec(6, 5, x.to_vec()).unwrap(), &mask).unwrap()];
        let b1 = |x: &[f64], ct: &[f64]| {
            let g = l1_loss_grad(&target, &Image::from_vec(6, 5, x.to_vec()).unwrap(), &mask).unwrap();
            g.data().iter().map(|v| v * ct[0]).collect()
        };
        let r = gradcheck(&FnOp::new(f1, b1), &x0, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }

    fn projected_landmarks(model: &MorphableModel, cam: &Camera, p_i: &[f64], p_e: &[f64]) -> Vec<[f64; 2]> {
        let s = sample_shape(model, p_i, p_e).unwrap();
        project(&landmark_vertices(model, &s).unwrap(), cam).screen
    }

    #[test]
    fn landmark_energy_unit_cases() {
        let m = random_model(80, [3, 2, 2], 4);
        let cam = Camera::from_params(&[0.1, 0.2, -0.1, 0.05, 0.0, -0.2]);
        let pts = projected_landmarks(&m, &cam, &[0.0; 3], &[0.0; 2]);
        let s = sample_shape(&m, &[0.0; 3], &[0.0; 2]).unwrap();
        assert_eq!(e_lm(&Landmarks::all_visible(pts.clone()), &s, &cam, &m).unwrap(), 0.0);
        let shifted: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + 1.0, p[1]]).collect();
        let e = e_lm(&Landmarks::all_visible(shifted), &s, &cam, &m).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        let mut hidden = Landmarks::all_visible(pts);
        hidden.visible = vec![false; 68];
        assert!(matches!(e_lm(&hidden, &s, &cam, &m), Err(Error::NoVisibleLandmarks)));
    }

    #[test]
    fn landmark_gradient_matches_finite_differences() {
        let m = random_model(80, [4, 3, 2], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<[f64; 2]> = (0..68).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let mut target = Landmarks::all_visible(pts);
        target.visible[3] = false;
        // x = [p_i(4), p_e(3), p_c(6)]
        let f = |x: &[f64]| {
            let s = sample_shape(&m, &x[..4], &x[4..7]).unwrap();
            vec![e_lm(&target, &s, &Camera::from_params(&x[7..13].try_into().unwrap()), &m).unwrap()]
        };
        let b = |x: &[f64], ct: &[f64]| {
            let s = sample_shape(&m, &x[..4], &x[4..7]).unwrap();
            let cam = Camera::from_params(&x[7..13].try_into().unwrap());
            let (_, ds, dc) = e_lm_with_grad(&target, &s, &cam, &m).unwrap();
            let (gi, ge) = sample_shape_pullback(&m, &ds);
            gi.iter().chain(&ge).chain(&dc).map(|v| v * ct[0]).collect()
        };
        let x = [0.2, -0.1, 0.3, 0.05, 0.1, -0.2, 0.0, 0.2, -0.3, 0.1, 0.05, -0.1, 0.1];
        let r = gradcheck(&FnOp::new(f, b), &x, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
