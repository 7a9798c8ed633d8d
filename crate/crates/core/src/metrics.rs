//! Evaluation metrics: Frechet distance, masked features, L2,1 error and
//! cosine similarity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::image::{Image, Plane};

/// Mean and covariance (row-major `dim x dim`) of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        check_dim("covariance", mean.len() * mean.len(), cov.len())?;
        let d = mean.len();
        for i in 0..d {
            for j in 0..i {
                if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-8 {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        Ok(Self { mean, cov })
    }

    fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.cov)
    }
}

/// Sample mean and unbiased covariance of `features` (one row per sample).
pub fn gaussian_stats(features: &[Vec<f64>]) -> Result<GaussianStats> {
    if features.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 feature vectors, got {}", features.len())));
    }
    let d = features[0].len();
    for f in features {
        check_dim("feature vector", d, f.len())?;
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        mean.iter_mut().zip(f).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    for f in features {
        let c: Vec<f64> = f.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(GaussianStats { mean, cov })
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen("symmetric eigendecomposition did not converge".into()))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Frechet distance between two Gaussians. The trace of the matrix square
/// root uses the symmetric form `(S_r^1/2 S_g S_r^1/2)^1/2`.
pub fn fid(r: &GaussianStats, g: &GaussianStats) -> Result<f64> {
    check_dim("feature dimension", r.dim(), g.dim())?;
    let mean_term: f64 = r.mean.iter().zip(&g.mean).map(|(a, b)| (a - b).powi(2)).sum();
    let (sr, sg) = (r.matrix(), g.matrix());
    let er = eigen(symmetrize(&sr))?;
    let root_vals = er.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = &er.eigenvectors * DMatrix::from_diagonal(&root_vals) * er.eigenvectors.transpose();
    let inner = symmetrize(&(&root * &sg * &root));
    let tr_sqrt: f64 = eigen(inner)?.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let value = mean_term + sr.trace() + sg.trace() - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}

/// Deterministic image features.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureExtractor {
    /// Grayscale block averages on a `k x k` grid.
    Downsample { k: usize },
    /// Fixed Gaussian projection of all pixel values, scaled by `1/sqrt(n)`.
    Projection {
        width: usize,
        height: usize,
        seed: u64,
        matrix: Vec<f64>,
        dim: usize,
    },
}

impl FeatureExtractor {
    pub fn downsample(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("downsample grid must be at least 1"));
        }
        Ok(Self::Downsample { k })
    }

    pub fn projection(width: usize, height: usize, dim: usize, seed: u64) -> Self {
        let n = width * height * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        let matrix = (0..dim * n)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        Self::Projection {
            width,
            height,
            seed,
            matrix,
            dim,
        }
    }

    /// `"downsample"` (8x8, d = 64) or `"projection"` (d = 128, seed 0).
    pub fn by_name(name: &str, width: usize, height: usize) -> Result<Self> {
        match name {
            "downsample" => Self::downsample(8),
            "projection" => Ok(Self::projection(width, height, 128, 0)),
            other => Err(Error::invalid(format!("unknown extractor '{other}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Downsample { k } => format!("downsample{k}x{k}"),
            Self::Projection { dim, seed, .. } => format!("projection{dim}_seed{seed}"),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Downsample { k } => k * k,
            Self::Projection { dim, .. } => *dim,
        }
    }

    pub fn extract(&self, img: &Image) -> Result<Vec<f64>> {
        match self {
            Self::Downsample { k } => {
                let (w, h) = (img.width(), img.height());
                if w < *k || h < *k {
                    return Err(Error::invalid(format!("image {w}x{h} is smaller than the {k}x{k} grid")));
                }
                let mut out = vec![0.0; k * k];
                for by in 0..*k {
                    let (y0, y1) = (by * h / k, (by + 1) * h / k);
                    for bx in 0..*k {
                        let (x0, x1) = (bx * w / k, (bx + 1) * w / k);
                        let mut s = 0.0;
                        for y in y0..y1 {
                            for x in x0..x1 {
                                let p = img.pixel(x, y);
                                s += (p[0] + p[1] + p[2]) / 3.0;
                            }
                        }
                        out[by * k + bx] = s / ((y1 - y0) * (x1 - x0)) as f64;
                    }
                }
                Ok(out)
            }
            Self::Projection {
                width,
                height,
                matrix,
                dim,
                ..
            } => {
                if img.width() != *width || img.height() != *height {
                    return Err(Error::invalid(format!(
                        "projection extractor built for {width}x{height}, got {}x{}",
                        img.width(),
                        img.height()
                    )));
                }
                let x = img.data();
                Ok(matrix
                    .chunks_exact(x.len())
                    .take(*dim)
                    .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                    .collect())
            }
        }
    }
}

/// `sil * image + (1 - sil) * bg_color`.
pub fn mask_image(image: &Image, silhouette: &Plane, bg_color: [f64; 3]) -> Result<Image> {
    silhouette.same_size(image)?;
    let mut out = image.clone();
    for (px, s) in out.data_mut().chunks_exact_mut(3).zip(silhouette.data()) {
        for ch in 0..3 {
            px[ch] = s * px[ch] + (1.0 - s) * bg_color[ch];
        }
    }
    Ok(out)
}

pub fn masked_features(
    extractor: &FeatureExtractor,
    image: &Image,
    silhouette: &Plane,
    bg_color: [f64; 3],
) -> Result<Vec<f64>> {
    extractor.extract(&mask_image(image, silhouette, bg_color)?)
}

/// Mean over the mask of the per-pixel RGB Euclidean error.
pub fn l21_error(target: &Image, rendered: &Image, mask: &Plane) -> Result<f64> {
    crate::fit::e_pix(target, rendered, mask)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("feature vector", a.len(), b.len())?;
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Ok(c.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n_samples: usize,
    pub extractor: String,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn stats(mean: Vec<f64>, cov: Vec<f64>) -> GaussianStats {
        GaussianStats::new(mean, cov).unwrap()
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
            }
        }
        c
    }

    #[test]
    fn two_point_stats() {
        let (a, b) = (vec![1.0, 2.0, -1.0], vec![3.0, -2.0, 0.5]);
        let s = gaussian_stats(&[a.clone(), b.clone()]).unwrap();
        for i in 0..3 {
            assert!((s.mean[i] - (a[i] + b[i]) / 2.0).abs() < 1e-15);
            for j in 0..3 {
                let expect = (a[i] - b[i]) * (a[j] - b[j]) / 2.0;
                assert!((s.cov[i * 3 + j] - expect).abs() < 1e-14);
            }
        }
        let same = gaussian_stats(&[a.clone(), a.clone(), a]).unwrap();
        assert!(same.cov.iter().all(|&c| c == 0.0));
        assert!(gaussian_stats(&[vec![1.0]]).is_err());
    }

    #[test]
    fn stats_match_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let s = gaussian_stats(&rows).unwrap();
        for i in 0..5 {
            let mi: f64 = rows.iter().map(|r| r[i]).sum::<f64>() / 100.0;
            assert!((s.mean[i] - mi).abs() <= 1e-10);
            for j in 0..5 {
                let mj: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / 100.0;
                let c: f64 = rows.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / 99.0;
                assert!((s.cov[i * 5 + j] - c).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn fid_unit_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = stats(vec![0.3, -0.1, 2.0, 0.0], random_spd(4, &mut rng));
        assert!(fid(&s, &s).unwrap().abs() < 1e-8);
        let a = stats(vec![0.0], vec![1.0]);
        let b = stats(vec![1.0], vec![1.0]);
        assert!((fid(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let i2 = vec![1.0, 0.0, 0.0, 1.0];
        let a = stats(vec![0.0, 0.0], i2.clone());
        let b = stats(vec![2.0, 0.0], i2);
        assert!((fid(&a, &b).unwrap() - 4.0).abs() < 1e-12);
        assert!(fid(&a, &stats(vec![0.0], vec![1.0])).is_err());
    }

    #[test]
    fn fid_matches_closed_form_for_commuting_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 4;
        // Random orthogonal basis from the eigenvectors of an SPD matrix.
        let q = eigen(DMatrix::from_row_slice(d, d, &random_spd(d, &mut rng))).unwrap().eigenvectors;
        let lr: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
        let lg: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
        let build = |l: &[f64]| {
            let m = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(l)) * q.transpose();
            let m = symmetrize(&m);
            m.transpose().as_slice().to_vec()
        };
        let mr: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mg: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expect: f64 = mr.iter().zip(&mg).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + lr.iter().zip(&lg).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>();
        let r = stats(mr, build(&lr));
        let g = stats(mg, build(&lg));
        assert!((fid(&r, &g).unwrap() - expect).abs() < 1e-8);
        assert!((fid(&r, &g).unwrap() - fid(&g, &r).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn l21_three_four_five() {
        let a = Image::new(10, 10);
        let mut b = a.clone();
        b.set_pixel(3, 4, [0.3, 0.0, 0.4]);
        let e = l21_error(&a, &b, &Plane::filled(10, 10, 1.0)).unwrap();
        assert!((e - 0.005).abs() < 1e-15);
        assert_eq!(l21_error(&a, &a, &Plane::filled(10, 10, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn cosine_cases() {
        let f = [1.0, -2.0, 0.5];
        assert_eq!(cosine_similarity(&f, &f).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&f, &f.map(|v| -v)).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn masked_features_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Image::from_vec(16, 16, (0..16 * 16 * 3).map(|_| rng.random()).collect()).unwrap();
        let other = Image::from_vec(16, 16, (0..16 * 16 * 3).map(|_| rng.random()).collect()).unwrap();
        for ex in [FeatureExtractor::downsample(8).unwrap(), FeatureExtractor::projection(16, 16, 128, 0)] {
            let f = masked_features(&ex, &img, &Plane::filled(16, 16, 1.0), [0.5; 3]).unwrap();
            assert_eq!(f, ex.extract(&img).unwrap());
            assert_eq!(f.len(), ex.dim());
            let zero = Plane::filled(16, 16, 0.0);
            assert_eq!(
                masked_features(&ex, &img, &zero, [0.2; 3]).unwrap(),
                masked_features(&ex, &other, &zero, [0.2; 3]).unwrap()
            );
            let sil = Plane::from_vec(16, 16, (0..256).map(|_| rng.random()).collect()).unwrap();
            let mut blended = img.clone();
            for y in 0..16 {
                for x in 0..16 {
                    let s = sil.get(x, y);
                    let p = img.pixel(x, y);
                    blended.set_pixel(x, y, [0, 1, 2].map(|c| s * p[c] + (1.0 - s) * 0.3));
                }
            }
            assert_eq!(masked_features(&ex, &img, &sil, [0.3; 3]).unwrap(), ex.extract(&blended).unwrap());
        }
    }

    proptest! {
        #[test]
        fn fid_is_symmetric_and_zero_on_the_diagonal(seed in 0u64..1000, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = stats((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), random_spd(d, &mut rng));
            let g = stats((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), random_spd(d, &mut rng));
            prop_assert!((fid(&r, &g).unwrap() - fid(&g, &r).unwrap()).abs() < 1e-8);
            prop_assert!(fid(&r, &r).unwrap().abs() < 1e-8);
        }

        #[test]
        fn l21_ignores_pixels_outside_the_mask(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Image::from_vec(6, 6, (0..108).map(|_| rng.random()).collect()).unwrap();
            let b = Image::from_vec(6, 6, (0..108).map(|_| rng.random()).collect()).unwrap();
            let mask = Plane::from_vec(6, 6, (0..36).map(|i| (i % 2) as f64).collect()).unwrap();
            let mut c = b.clone();
            for p in (0..36).filter(|p| p % 2 == 0) {
                c.data_mut()[3 * p] = rng.random();
            }
            prop_assert_eq!(l21_error(&a, &b, &mask).unwrap(), l21_error(&a, &c, &mask).unwrap());
        }

        #[test]
        fn cosine_is_scale_invariant(v in prop::collection::vec(-5.0f64..5.0, 4), w in prop::collection::vec(-5.0f64..5.0, 4), s in 0.01f64..100.0) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3) && w.iter().any(|x| x.abs() > 1e-3));
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            let c0 = cosine_similarity(&v, &w).unwrap();
            prop_assert!((cosine_similarity(&scaled, &w).unwrap() - c0).abs() < 1e-12);
        }
    }
}
