//! Diffeomorphisms of coordinate patches with first and second derivatives.
//!
//! These serve both as coordinate changes (for transforming Lagrangian frames)
//! and as the base maps of cotangent lifts.

use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Formula;

pub trait Diffeo: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, y: &DVector<f64>) -> Result<DVector<f64>>;
    /// `J[(k, i)] = ∂f_k/∂y_i`.
    fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// One symmetric matrix per component: `H[k][(i, j)] = ∂²f_k/∂y_i∂y_j`.
    fn hessians(&self, y: &DVector<f64>) -> Result<Vec<DMatrix<f64>>>;
    fn describe(&self) -> String;

    /// Solve `f(y) = x` by damped Newton iteration started at `guess`.
    fn inverse_value(&self, x: &DVector<f64>, guess: &DVector<f64>) -> Result<DVector<f64>> {
        let mut y = guess.clone();
        let mut r = self.value(&y)? - x;
        for _ in 0..100 {
            let scale = 1.0 + x.amax();
            if r.amax() < 1e-14 * scale {
                return Ok(y);
            }
            let j = self.jacobian(&y)?;
            let step = j
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::NoConvergence(format!("{}: singular Jacobian", self.describe())))?;
            let mut t = 1.0;
            loop {
                let cand = &y - &step * t;
                let rc = self.value(&cand)? - x;
                if rc.norm() < r.norm() || t < 1e-6 {
                    y = cand;
                    r = rc;
                    break;
                }
                t *= 0.5;
            }
        }
        if r.amax() < 1e-10 * (1.0 + x.amax()) {
            return Ok(y);
        }
        Err(Error::NoConvergence(format!("inverse of {} at {:?}", self.describe(), x.as_slice())))
    }
}

/// Variable names used by expression diffeomorphisms of dimension `n`.
pub fn coordinate_names(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|k| format!("{prefix}{k}")).collect()
    }
}

/// Diffeomorphism given by component expressions, differentiated symbolically.
#[derive(Debug, Clone)]
pub struct ExprDiffeo {
    comps: Vec<Formula>,
    first: Vec<Vec<Formula>>,
    second: Vec<Vec<Vec<Formula>>>,
}

impl ExprDiffeo {
    /// Components are expressions in `y` (n = 1) or `y1, y2, …`.
    pub fn new(components: &[&str]) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::Config("diffeomorphism needs at least one component".into()));
        }
        let names = coordinate_names("y", n);
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let comps = components
            .iter()
            .map(|c| Formula::parse(c, &vars))
            .collect::<Result<Vec<_>>>()?;
        if let Some(c) = comps.iter().find(|c| !c.is_real()) {
            return Err(Error::Config(format!("diffeomorphism component '{c}' must be real")));
        }
        let first: Vec<Vec<Formula>> = comps.iter().map(|c| (0..n).map(|i| c.derivative(i)).collect()).collect();
        let second = first
            .iter()
            .map(|row| row.iter().map(|d| (0..n).map(|j| d.derivative(j)).collect()).collect())
            .collect();
        Ok(ExprDiffeo { comps, first, second })
    }
}

impl Diffeo for ExprDiffeo {
    fn dim(&self) -> usize {
        self.comps.len()
    }

    fn value(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let v: Vec<f64> = self.comps.iter().map(|c| c.eval(y.as_slice())).collect::<Result<_>>()?;
        let out = DVector::from_vec(v);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("{} is not finite at {:?}", self.describe(), y.as_slice())));
        }
        Ok(out)
    }

    fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            for i in 0..n {
                j[(k, i)] = self.first[k][i].eval(y.as_slice())?;
            }
        }
        Ok(j)
    }

    fn hessians(&self, y: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim();
        (0..n)
            .map(|k| {
                let mut h = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        h[(i, j)] = self.second[k][i][j].eval(y.as_slice())?;
                    }
                }
                Ok((&h + h.transpose()) * 0.5)
            })
            .collect()
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self.comps.iter().map(|c| c.source.clone()).collect();
        format!("diffeo[{}]", parts.join(", "))
    }
}

#[derive(Debug, Clone)]
pub struct LinearDiffeo {
    pub l: DMatrix<f64>,
    pub l_inv: DMatrix<f64>,
}

impl LinearDiffeo {
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::Dimension("linear map must be square".into()));
        }
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("linear map is singular".into()))?;
        Ok(LinearDiffeo { l, l_inv })
    }
}

impl Diffeo for LinearDiffeo {
    fn dim(&self) -> usize {
        self.l.nrows()
    }
    fn value(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.l * y)
    }
    fn jacobian(&self, _y: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.l.clone())
    }
    fn hessians(&self, _y: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim();
        Ok(vec![DMatrix::zeros(n, n); n])
    }
    fn inverse_value(&self, x: &DVector<f64>, _guess: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.l_inv * x)
    }
    fn describe(&self) -> String {
        format!("linear{:?}", self.l.as_slice())
    }
}

/// `x̃ = x + ½ Σ_k e_k (x − x₀)ᵀ H_k (x − x₀)`: a chart change with prescribed
/// second derivatives at `x₀` and identity Jacobian there.
#[derive(Debug, Clone)]
pub struct QuadraticChart {
    pub center: DVector<f64>,
    pub hessians: Vec<DMatrix<f64>>,
}

impl QuadraticChart {
    pub fn new(center: DVector<f64>, hessians: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = center.len();
        if hessians.len() != n || hessians.iter().any(|h| h.shape() != (n, n)) {
            return Err(Error::Dimension("quadratic chart needs n symmetric n x n Hessians".into()));
        }
        let hessians = hessians.into_iter().map(|h| (&h + h.transpose()) * 0.5).collect();
        Ok(QuadraticChart { center, hessians })
    }

    /// Chart in which the covector `xi` at `center` sees the symmetric matrix `a`
    /// as the second-derivative term: `Σ_k ξ_k H_k = a`.
    pub fn with_covector_hessian(center: DVector<f64>, xi: &DVector<f64>, a: &DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        let norm2 = xi.norm_squared();
        if norm2 == 0.0 {
            return Err(Error::Domain("covector must be nonzero".into()));
        }
        let hessians = (0..n).map(|k| a * (xi[k] / norm2)).collect();
        QuadraticChart::new(center, hessians)
    }
}

impl Diffeo for QuadraticChart {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = x - &self.center;
        Ok(DVector::from_fn(self.dim(), |k, _| x[k] + 0.5 * d.dot(&(&self.hessians[k] * &d))))
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let d = x - &self.center;
        let mut j = DMatrix::identity(n, n);
        for k in 0..n {
            let row = &self.hessians[k] * &d;
            for i in 0..n {
                j[(k, i)] += row[i];
            }
        }
        Ok(j)
    }
    fn hessians(&self, _x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.hessians.clone())
    }
    fn describe(&self) -> String {
        format!("quadratic-chart@{:?}", self.center.as_slice())
    }
}

/// Second derivatives of the inverse map, `∂²y_k/∂x_i∂x_j`, from forward data at `y`.
pub fn inverse_hessians(j: &DMatrix<f64>, forward: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let n = j.nrows();
    let ji = j
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular Jacobian".into()))?;
    // pulled back forward Hessians: P_l = J⁻ᵀ H_l J⁻¹
    let pulled: Vec<DMatrix<f64>> = forward.iter().map(|h| ji.transpose() * h * &ji).collect();
    Ok((0..n)
        .map(|k| {
            let mut out = DMatrix::zeros(n, n);
            for (l, p) in pulled.iter().enumerate() {
                out -= p * ji[(k, l)];
            }
            out
        })
        .collect())
}

pub type SharedDiffeo = Arc<dyn Diffeo>;

/// Inverse of a diffeomorphism, evaluated by Newton iteration.
#[derive(Debug, Clone)]
pub struct InverseDiffeo {
    pub inner: SharedDiffeo,
}

impl InverseDiffeo {
    pub fn new(inner: SharedDiffeo) -> Self {
        InverseDiffeo { inner }
    }
}

impl Diffeo for InverseDiffeo {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.inner.inverse_value(x, x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let y = self.value(x)?;
        self.inner
            .jacobian(&y)?
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular Jacobian".into()))
    }
    fn hessians(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let y = self.value(x)?;
        inverse_hessians(&self.inner.jacobian(&y)?, &self.inner.hessians(&y)?)
    }
    fn inverse_value(&self, y: &DVector<f64>, _guess: &DVector<f64>) -> Result<DVector<f64>> {
        self.inner.value(y)
    }
    fn describe(&self) -> String {
        format!("inverse({})", self.inner.describe())
    }
}
