use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalMap;
use crate::error::{Error, Result};

/// Coarse conic support: a box in `y` times a box in the components of `η̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicBox {
    pub y_lo: Vec<f64>,
    pub y_hi: Vec<f64>,
    pub dir_lo: Vec<f64>,
    pub dir_hi: Vec<f64>,
}

impl ConicBox {
    pub fn new(y_lo: Vec<f64>, y_hi: Vec<f64>, dir_lo: Vec<f64>, dir_hi: Vec<f64>) -> Result<Self> {
        let n = y_lo.len();
        if [y_hi.len(), dir_lo.len(), dir_hi.len()].iter().any(|&l| l != n) {
            return Err(Error::Dimension("conic box bounds of differing length".into()));
        }
        Ok(ConicBox { y_lo, y_hi, dir_lo, dir_hi })
    }

    /// A box around `y` of half-width `ry` and all directions.
    pub fn around(y: &DVector<f64>, ry: f64) -> Self {
        let n = y.len();
        ConicBox {
            y_lo: y.iter().map(|v| v - ry).collect(),
            y_hi: y.iter().map(|v| v + ry).collect(),
            dir_lo: vec![-1.0; n],
            dir_hi: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.y_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim()).any(|k| self.y_lo[k] > self.y_hi[k] || self.dir_lo[k] > self.dir_hi[k])
    }

    pub fn contains(&self, y: &DVector<f64>, eta: &DVector<f64>) -> bool {
        let r = eta.norm();
        r > 0.0
            && (0..self.dim()).all(|k| {
                let h = eta[k] / r;
                (self.y_lo[k]..=self.y_hi[k]).contains(&y[k]) && (self.dir_lo[k]..=self.dir_hi[k]).contains(&h)
            })
    }

    pub fn intersect(&self, other: &ConicBox) -> ConicBox {
        let pick = |a: &[f64], b: &[f64], f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
        ConicBox {
            y_lo: pick(&self.y_lo, &other.y_lo, f64::max),
            y_hi: pick(&self.y_hi, &other.y_hi, f64::min),
            dir_lo: pick(&self.dir_lo, &other.dir_lo, f64::max),
            dir_hi: pick(&self.dir_hi, &other.dir_hi, f64::min),
        }
    }

    /// Points of the box on a grid with `per_dim` nodes along each of the `2n`
    /// axes; directions are normalized and zero directions skipped.
    pub fn sample(&self, per_dim: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let per = per_dim.max(2);
        let lerp = |lo: f64, hi: f64, j: usize| lo + (hi - lo) * j as f64 / (per - 1) as f64;
        let total = per.pow(2 * n as u32);
        let mut out = Vec::new();
        for mut idx in 0..total {
            let mut y = DVector::zeros(n);
            let mut h = DVector::zeros(n);
            for k in 0..2 * n {
                let j = idx % per;
                idx /= per;
                if k < n {
                    y[k] = lerp(self.y_lo[k], self.y_hi[k], j);
                } else {
                    h[k - n] = lerp(self.dir_lo[k - n], self.dir_hi[k - n], j);
                }
            }
            if h.norm() > 1e-9 {
                let h = h.normalize();
                if (0..n).all(|k| (self.dir_lo[k] - 1e-12..=self.dir_hi[k] + 1e-12).contains(&h[k])) {
                    out.push((y, h));
                }
            }
        }
        out
    }

    /// Bounding box of the sampled image, widened by `margin` (relative).
    pub fn image(&self, map: &dyn CanonicalMap, per_dim: usize, margin: f64) -> Result<ConicBox> {
        let n = self.dim();
        let mut b = ConicBox {
            y_lo: vec![f64::INFINITY; n],
            y_hi: vec![f64::NEG_INFINITY; n],
            dir_lo: vec![f64::INFINITY; n],
            dir_hi: vec![f64::NEG_INFINITY; n],
        };
        let samples = self.sample(per_dim);
        if samples.is_empty() {
            return Err(Error::Domain("empty conic box".into()));
        }
        for (y, h) in samples {
            let (x, xi) = map.eval(&y, &h)?;
            let d = xi.normalize();
            for k in 0..n {
                b.y_lo[k] = b.y_lo[k].min(x[k]);
                b.y_hi[k] = b.y_hi[k].max(x[k]);
                b.dir_lo[k] = b.dir_lo[k].min(d[k]);
                b.dir_hi[k] = b.dir_hi[k].max(d[k]);
            }
        }
        for k in 0..n {
            let wy = (b.y_hi[k] - b.y_lo[k]).max(1e-3) * margin;
            let wd = (b.dir_hi[k] - b.dir_lo[k]).max(1e-3) * margin;
            b.y_lo[k] -= wy;
            b.y_hi[k] += wy;
            b.dir_lo[k] = (b.dir_lo[k] - wd).max(-1.0);
            b.dir_hi[k] = (b.dir_hi[k] + wd).min(1.0);
        }
        Ok(b)
    }

    pub fn preimage(&self, map: &dyn CanonicalMap, per_dim: usize, margin: f64) -> Result<ConicBox> {
        self.image(map.inverse()?.as_ref(), per_dim, margin)
    }
}

/// `cone supp(V₂*V₁) ⊂ supp V₁ ∩ Φ⁻¹(supp V₂)` with `Φ = Φ₂⁻¹∘Φ₁`, i.e.
/// the preimage of `supp V₂` under `Φ` is its image under `Φ⁻¹ = Φ₁⁻¹∘Φ₂`.
pub fn star_support(
    supp1: &ConicBox,
    supp2: &ConicBox,
    phi: &dyn CanonicalMap,
    per_dim: usize,
) -> Result<ConicBox> {
    Ok(supp1.intersect(&supp2.preimage(phi, per_dim, 0.1)?))
}
