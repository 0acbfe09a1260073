use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

use super::{finite_difference_jacobian, CanonicalMap, Jacobian, MapPoint, Provenance, SharedMap};
use crate::diffeo::{InverseDiffeo, SharedDiffeo};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Identity {
    pub n: usize,
}

impl CanonicalMap for Identity {
    fn name(&self) -> String {
        "identity".into()
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn provenance(&self) -> Provenance {
        Provenance::AnalyticCatalog
    }
    fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((y.clone(), eta.clone()))
    }
    fn jacobian(&self, _y: &DVector<f64>, _eta: &DVector<f64>) -> Result<Jacobian> {
        Ok(Jacobian::identity(self.n))
    }
    fn inverse(&self) -> Result<SharedMap> {
        Ok(Arc::new(self.clone()))
    }
}

/// Cotangent lift `(y, η) ↦ (f(y), Df(y)⁻ᵀ η)`.
#[derive(Debug, Clone)]
pub struct Lift {
    pub label: String,
    pub f: SharedDiffeo,
}

impl Lift {
    pub fn new(label: &str, f: SharedDiffeo) -> Self {
        Lift { label: label.into(), f }
    }

    fn df_inv(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.f
            .jacobian(y)?
            .try_inverse()
            .ok_or_else(|| Error::Domain(format!("{} has singular Jacobian at {:?}", self.f.describe(), y.as_slice())))
    }
}

impl CanonicalMap for Lift {
    fn name(&self) -> String {
        format!("{}({})", self.label, self.f.describe())
    }
    fn dim(&self) -> usize {
        self.f.dim()
    }
    fn provenance(&self) -> Provenance {
        Provenance::AnalyticCatalog
    }
    fn in_domain(&self, y: &DVector<f64>, eta: &DVector<f64>) -> bool {
        eta.norm() > 0.0
            && self
                .f
                .jacobian(y)
                .map(|j| j.determinant().abs() > 1e-12)
                .unwrap_or(false)
    }
    fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((self.f.value(y)?, self.df_inv(y)?.transpose() * eta))
    }
    fn jacobian(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Jacobian> {
        let n = self.dim();
        let x_y = self.f.jacobian(y)?;
        let g_t = self.df_inv(y)?.transpose();
        let xi = &g_t * eta;
        let mut contracted = DMatrix::zeros(n, n);
        for (k, h) in self.f.hessians(y)?.iter().enumerate() {
            contracted += h * xi[k];
        }
        Ok(Jacobian {
            x_y,
            x_eta: DMatrix::zeros(n, n),
            xi_y: -&g_t * contracted,
            xi_eta: g_t,
        })
    }
    fn inverse(&self) -> Result<SharedMap> {
        Ok(Arc::new(Lift {
            label: self.label.clone(),
            f: Arc::new(InverseDiffeo::new(self.f.clone())),
        }))
    }
}

/// Half-wave translation `x⋆ = y + t η/|η|`, `ξ⋆ = η`.
#[derive(Debug, Clone)]
pub struct HalfWave {
    pub n: usize,
    pub t: f64,
}

impl CanonicalMap for HalfWave {
    fn name(&self) -> String {
        format!("half_wave(t={})", self.t)
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn provenance(&self) -> Provenance {
        Provenance::AnalyticCatalog
    }
    fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((y + eta * (self.t / eta.norm()), eta.clone()))
    }
    fn jacobian(&self, _y: &DVector<f64>, eta: &DVector<f64>) -> Result<Jacobian> {
        let n = self.n;
        let r = eta.norm();
        let hat = eta / r;
        let p = DMatrix::identity(n, n) - &hat * hat.transpose();
        Ok(Jacobian {
            x_y: DMatrix::identity(n, n),
            x_eta: p * (self.t / r),
            xi_y: DMatrix::zeros(n, n),
            xi_eta: DMatrix::identity(n, n),
        })
    }
    fn inverse(&self) -> Result<SharedMap> {
        Ok(Arc::new(HalfWave { n: self.n, t: -self.t }))
    }
}

/// `second ∘ first`.
#[derive(Debug, Clone)]
pub struct ComposedMap {
    pub first: SharedMap,
    pub second: SharedMap,
}

impl ComposedMap {
    pub fn new(first: SharedMap, second: SharedMap) -> Self {
        ComposedMap { first, second }
    }
}

impl CanonicalMap for ComposedMap {
    fn name(&self) -> String {
        format!("{} o {}", self.second.name(), self.first.name())
    }
    fn dim(&self) -> usize {
        self.first.dim()
    }
    fn provenance(&self) -> Provenance {
        Provenance::Composed
    }
    fn in_domain(&self, y: &DVector<f64>, eta: &DVector<f64>) -> bool {
        self.first.in_domain(y, eta)
            && self
                .first
                .eval(y, eta)
                .map(|(x, xi)| self.second.in_domain(&x, &xi))
                .unwrap_or(false)
    }
    fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (z, zeta) = self.first.eval(y, eta)?;
        self.second.check_domain(&z, &zeta)?;
        self.second.eval(&z, &zeta)
    }
    fn jacobian(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Jacobian> {
        Ok(self.point(y, eta)?.jac)
    }
    fn point(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<MapPoint> {
        let p1 = self.first.point(y, eta)?;
        let p2 = self.second.point(&p1.x, &p1.xi)?;
        Ok(MapPoint { y: y.clone(), eta: eta.clone(), x: p2.x, xi: p2.xi, jac: p2.jac.after(&p1.jac) })
    }
    fn inverse(&self) -> Result<SharedMap> {
        Ok(Arc::new(ComposedMap { first: self.second.inverse()?, second: self.first.inverse()? }))
    }
}

pub type EvalFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> + Send + Sync;

/// User-supplied map whose Jacobian comes from central differences.
#[derive(Clone)]
pub struct FiniteDifferenceMap {
    pub label: String,
    pub n: usize,
    pub eval: Arc<EvalFn>,
    pub inverse: Option<SharedMap>,
    pub rel_step: f64,
}

impl FiniteDifferenceMap {
    pub fn new(label: &str, n: usize, eval: Arc<EvalFn>) -> Self {
        FiniteDifferenceMap { label: label.into(), n, eval, inverse: None, rel_step: 1e-5 }
    }
}

impl fmt::Debug for FiniteDifferenceMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteDifferenceMap").field("label", &self.label).field("n", &self.n).finish()
    }
}

impl CanonicalMap for FiniteDifferenceMap {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn provenance(&self) -> Provenance {
        Provenance::FiniteDifference
    }
    fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        (self.eval)(y, eta)
    }
    fn jacobian(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Jacobian> {
        finite_difference_jacobian(self, y, eta, self.rel_step)
    }
    fn inverse(&self) -> Result<SharedMap> {
        self.inverse
            .clone()
            .ok_or_else(|| Error::Domain(format!("{} has no registered inverse", self.label)))
    }
}
