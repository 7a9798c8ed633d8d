//! Latent interpolation and hyperplane-based attribute editing.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("interpolation weight {t} outside [0, 1]")));
    }
    Ok(())
}

/// `(1 - t) a + t b`; exact at both endpoints.
pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Result<Vec<f64>> {
    check_dim("interpolation endpoint", a.len(), b.len())?;
    check_t(t)?;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if t == 1.0 {
                y
            } else {
                (1.0 - t) * x + t * y
            }
        })
        .collect())
}

/// `lerp(lerp(tl, tr, u), lerp(bl, br, u), v)`.
pub fn bilerp(tl: &[f64], tr: &[f64], bl: &[f64], br: &[f64], u: f64, v: f64) -> Result<Vec<f64>> {
    let top = lerp(tl, tr, u)?;
    let bottom = lerp(bl, br, u)?;
    lerp(&top, &bottom, v)
}

/// Fourth corner of the parallelogram spanned at `tl`: `tr + bl - tl`.
pub fn complete_parallelogram(tl: &[f64], tr: &[f64], bl: &[f64]) -> Result<Vec<f64>> {
    check_dim("corner", tl.len(), tr.len())?;
    check_dim("corner", tl.len(), bl.len())?;
    Ok((0..tl.len()).map(|i| tr[i] + bl[i] - tl[i]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub bias: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, bias: f64) -> Result<Self> {
        let h = Self { normal, bias };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.norm() == 0.0 || !self.norm().is_finite() {
            return Err(Error::invalid("hyperplane normal must be finite and nonzero"));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.normal.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Signed classifier score `normal . x + bias`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim("latent", self.normal.len(), x.len())?;
        Ok(self.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledLatents {
    pub latents: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
}

impl LabeledLatents {
    pub fn validate(&self) -> Result<usize> {
        check_dim("labels", self.latents.len(), self.labels.len())?;
        let d = self.latents.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::invalid("no latents"));
        }
        for l in &self.latents {
            check_dim("latent", d, l.len())?;
        }
        if let Some(bad) = self.labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::invalid(format!("label {bad} is not -1 or +1")));
        }
        if !self.labels.contains(&1) || !self.labels.contains(&-1) {
            return Err(Error::invalid("labels contain a single class"));
        }
        Ok(d)
    }
}

/// Linear SVM by full-batch subgradient descent on
/// `lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))` with step `1 / (lambda t)`.
/// Returns the iterate with the lowest objective.
pub fn fit_svm(data: &LabeledLatents, lambda: f64, steps: usize) -> Result<Hyperplane> {
    let d = data.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    let n = data.latents.len() as f64;
    let objective = |w: &[f64], b: f64| -> (f64, Vec<f64>, f64) {
        let mut hinge = 0.0;
        let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
        let mut gb = 0.0;
        for (x, &y) in data.latents.iter().zip(&data.labels) {
            let y = y as f64;
            let margin = y * (w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b);
            if margin < 1.0 {
                hinge += 1.0 - margin;
                gw.iter_mut().zip(x).for_each(|(g, c)| *g -= y * c / n);
                gb -= y / n;
            }
        }
        let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
        (reg + hinge / n, gw, gb)
    };
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (f64::INFINITY, w.clone(), b);
    for t in 1..=steps {
        let (obj, gw, gb) = objective(&w, b);
        if obj < best.0 && w.iter().any(|&v| v != 0.0) {
            best = (obj, w.clone(), b);
        }
        let eta = 1.0 / (lambda * t as f64);
        w.iter_mut().zip(&gw).for_each(|(v, g)| *v -= eta * g);
        b -= eta * gb;
    }
    let (obj, _, _) = objective(&w, b);
    if obj < best.0 && w.iter().any(|&v| v != 0.0) {
        best = (obj, w, b);
    }
    Hyperplane::new(best.1, best.2)
}

/// Moves `w` by `alpha` along the unit normal of `h`.
pub fn edit(w: &[f64], h: &Hyperplane, alpha: f64) -> Result<Vec<f64>> {
    check_dim("latent", h.normal.len(), w.len())?;
    h.validate()?;
    let n = h.norm();
    Ok(w.iter().zip(&h.normal).map(|(x, v)| x + alpha * v / n).collect())
}
