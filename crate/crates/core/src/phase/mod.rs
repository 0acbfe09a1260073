//! Phase functions of the admissible class for a canonical map: the real chart
//! phase `(x − x⋆)·ξ⋆`, its gaussian regularization, and validation of
//! homogeneity, the second-order expansion and nondegeneracy.

mod registry;

pub use registry::{chart_from_json, PhaseBuilder, PhaseRegistry};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

use crate::canonical::{compose_maps, Lift, MapPoint, SharedMap};
use crate::diffeo::SharedDiffeo;
use crate::error::{Error, Result};
use crate::lagrangian::{BasePoint, LagrangianFrame};

pub type CMatrix = DMatrix<Complex64>;

pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    RealChart,
    Gaussian,
    Custom,
}

/// Second-order data of a phase at `x = x⋆(y, η)`.
#[derive(Debug, Clone)]
pub struct PhaseJet {
    pub y: DVector<f64>,
    pub eta: DVector<f64>,
    pub x_star: DVector<f64>,
    pub xi_star: DVector<f64>,
    pub x_eta: DMatrix<f64>,
    pub xi_eta: DMatrix<f64>,
    pub phi_xx: CMatrix,
    pub phi_x_eta: CMatrix,
    pub phi_eta_eta: CMatrix,
}

impl PhaseJet {
    /// Fills `φ_xη` and `φ_ηη` from `φ_xx` through the identities forced by the
    /// expansion `φ = (x − x⋆)·ξ⋆ + O(|x − x⋆|²)`.
    pub fn from_point(p: &MapPoint, phi_xx: CMatrix) -> Self {
        let phi_x_eta = complexify(&p.jac.xi_eta) - &phi_xx * complexify(&p.jac.x_eta);
        let phi_eta_eta = -complexify(&p.jac.x_eta.transpose()) * &phi_x_eta;
        PhaseJet {
            y: p.y.clone(),
            eta: p.eta.clone(),
            x_star: p.x.clone(),
            xi_star: p.xi.clone(),
            x_eta: p.jac.x_eta.clone(),
            xi_eta: p.jac.xi_eta.clone(),
            phi_xx,
            phi_x_eta,
            phi_eta_eta,
        }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// `φ_ηη + (x⋆_η)ᵀ φ_xη`, which vanishes for admissible phases.
    pub fn identity_residual(&self) -> f64 {
        (&self.phi_eta_eta + complexify(&self.x_eta.transpose()) * &self.phi_x_eta)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.phi_xx.iter().chain(self.phi_x_eta.iter()).all(|z| z.im.abs() <= tol)
    }
}

pub trait PhaseFunction: Send + Sync + fmt::Debug {
    fn kind(&self) -> PhaseKind;
    fn describe(&self) -> String;
    /// The canonical map expressed in the phase's target chart.
    fn map(&self) -> &SharedMap;

    /// `φ(x; y, η)` given the map data at `(y, η)`.
    fn value_at(&self, x: &DVector<f64>, p: &MapPoint) -> Complex64;

    /// `φ_xη(x; y, η)` away from the stationary set, as needed by kernels.
    fn phi_x_eta_at(&self, x: &DVector<f64>, p: &MapPoint) -> Result<CMatrix>;

    /// `φ_xx(x⋆; y, η)`.
    fn phi_xx_star(&self, p: &MapPoint) -> Result<CMatrix>;

    fn value(&self, x: &DVector<f64>, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Complex64> {
        let p = self.map().point(y, eta)?;
        Ok(self.value_at(x, &p))
    }

    fn jet(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<PhaseJet> {
        if eta.norm() == 0.0 {
            return Err(Error::Domain("phase jets need eta != 0".into()));
        }
        let p = self.map().point(y, eta)?;
        Ok(PhaseJet::from_point(&p, self.phi_xx_star(&p)?))
    }
}

pub type SharedPhase = Arc<dyn PhaseFunction>;

/// `φ = (x − x⋆)·ξ⋆` in a chosen target chart.
#[derive(Debug, Clone)]
pub struct RealChartPhase {
    pub chart: String,
    map: SharedMap,
}

impl RealChartPhase {
    pub fn new(map: SharedMap) -> Self {
        RealChartPhase { chart: "default".into(), map }
    }

    /// Uses the target coordinates `x̃ = χ(x)`; the map becomes the lift of `χ`
    /// composed with the original map.
    pub fn in_chart(map: SharedMap, name: &str, chart: SharedDiffeo) -> Result<Self> {
        let lifted = compose_maps(map, Arc::new(Lift::new("chart", chart)))?;
        Ok(RealChartPhase { chart: name.into(), map: lifted })
    }
}

impl PhaseFunction for RealChartPhase {
    fn kind(&self) -> PhaseKind {
        PhaseKind::RealChart
    }
    fn describe(&self) -> String {
        format!("real_chart[{}]", self.chart)
    }
    fn map(&self) -> &SharedMap {
        &self.map
    }
    fn value_at(&self, x: &DVector<f64>, p: &MapPoint) -> Complex64 {
        Complex64::new((x - &p.x).dot(&p.xi), 0.0)
    }
    fn phi_x_eta_at(&self, _x: &DVector<f64>, p: &MapPoint) -> Result<CMatrix> {
        Ok(complexify(&p.jac.xi_eta))
    }
    fn phi_xx_star(&self, p: &MapPoint) -> Result<CMatrix> {
        let n = p.x.len();
        Ok(CMatrix::zeros(n, n))
    }
}

/// `φ = (x − x⋆)·ξ⋆ + (i/2)|η| |x − x⋆|²`.
#[derive(Debug, Clone)]
pub struct GaussianPhase {
    map: SharedMap,
}

impl GaussianPhase {
    pub fn new(map: SharedMap) -> Self {
        GaussianPhase { map }
    }
}

impl PhaseFunction for GaussianPhase {
    fn kind(&self) -> PhaseKind {
        PhaseKind::Gaussian
    }
    fn describe(&self) -> String {
        "gaussian".into()
    }
    fn map(&self) -> &SharedMap {
        &self.map
    }
    fn value_at(&self, x: &DVector<f64>, p: &MapPoint) -> Complex64 {
        let d = x - &p.x;
        Complex64::new(d.dot(&p.xi), 0.5 * p.eta.norm() * d.norm_squared())
    }
    fn phi_x_eta_at(&self, x: &DVector<f64>, p: &MapPoint) -> Result<CMatrix> {
        let r = p.eta.norm();
        let d = x - &p.x;
        let hat = &p.eta / r;
        let im = &d * hat.transpose() - &p.jac.x_eta * r;
        Ok(CMatrix::from_fn(d.len(), d.len(), |i, j| Complex64::new(p.jac.xi_eta[(i, j)], im[(i, j)])))
    }
    fn phi_xx_star(&self, p: &MapPoint) -> Result<CMatrix> {
        let n = p.x.len();
        Ok(CMatrix::identity(n, n) * Complex64::new(0.0, p.eta.norm()))
    }
}

pub type PhaseFn = dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> Complex64 + Send + Sync;

/// A user phase `φ(x; y, η)`; derivatives come from finite differences. Only
/// accepted for validation.
#[derive(Clone)]
pub struct CustomPhase {
    pub label: String,
    map: SharedMap,
    f: Arc<PhaseFn>,
    pub step: f64,
}

impl fmt::Debug for CustomPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPhase").field("label", &self.label).finish()
    }
}

impl CustomPhase {
    pub fn new(label: &str, map: SharedMap, f: Arc<PhaseFn>) -> Self {
        CustomPhase { label: label.into(), map, f, step: 1e-4 }
    }

    fn hessian_x(&self, x: &DVector<f64>, p: &MapPoint) -> CMatrix {
        let n = x.len();
        let h = self.step;
        let f = |v: &DVector<f64>| (self.f)(v, &p.y, &p.eta);
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let at = |si: f64, sj: f64| {
                    let mut v = x.clone();
                    v[i] += si * h;
                    v[j] += sj * h;
                    f(&v)
                };
                m[(i, j)] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
            }
        }
        m
    }
}

impl PhaseFunction for CustomPhase {
    fn kind(&self) -> PhaseKind {
        PhaseKind::Custom
    }
    fn describe(&self) -> String {
        format!("custom[{}]", self.label)
    }
    fn map(&self) -> &SharedMap {
        &self.map
    }
    fn value_at(&self, x: &DVector<f64>, p: &MapPoint) -> Complex64 {
        (self.f)(x, &p.y, &p.eta)
    }
    fn phi_x_eta_at(&self, x: &DVector<f64>, p: &MapPoint) -> Result<CMatrix> {
        let n = x.len();
        let hx = self.step;
        let he = self.step * p.eta.norm();
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let at = |si: f64, sj: f64| {
                    let mut v = x.clone();
                    v[i] += si * hx;
                    let mut e = p.eta.clone();
                    e[j] += sj * he;
                    (self.f)(&v, &p.y, &e)
                };
                m[(i, j)] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * hx * he);
            }
        }
        Ok(m)
    }
    fn phi_xx_star(&self, p: &MapPoint) -> Result<CMatrix> {
        Ok(self.hessian_x(&p.x, p))
    }
    /// Computed directly from the phase, so the jet identities become checks.
    fn jet(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<PhaseJet> {
        let p = self.map.point(y, eta)?;
        let mut jet = PhaseJet::from_point(&p, self.phi_xx_star(&p)?);
        jet.phi_x_eta = self.phi_x_eta_at(&p.x, &p)?;
        jet.phi_eta_eta = phi_eta_eta_by_differences(self, &p.x, y, eta, self.step)?;
        Ok(jet)
    }
}

/// Central-difference `φ_ηη(x; y, η)` at a fixed `x`.
pub fn phi_eta_eta_by_differences(
    phase: &dyn PhaseFunction,
    x: &DVector<f64>,
    y: &DVector<f64>,
    eta: &DVector<f64>,
    rel_step: f64,
) -> Result<CMatrix> {
    let n = eta.len();
    let h = rel_step * eta.norm();
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut vals = [Complex64::new(0.0, 0.0); 4];
            for (slot, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                let mut e = eta.clone();
                e[i] += si * h;
                e[j] += sj * h;
                vals[slot] = phase.value(x, y, &e)?;
            }
            m[(i, j)] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h);
        }
    }
    Ok(m)
}

pub fn det_c(m: &CMatrix) -> Complex64 {
    m.clone().determinant()
}

fn c_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleVerdict {
    pub euler_residual: f64,
    pub remainder_growth: f64,
    pub det_margin: f64,
    pub homogeneous: bool,
    pub quadratic: bool,
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub phase: String,
    pub samples: Vec<SampleVerdict>,
    pub homogeneous: bool,
    pub quadratic: bool,
    pub nondegenerate: bool,
    /// Samples where the chart's `ξ⋆_η` is singular, the obstruction to a real
    /// chart phase there.
    pub chart_degenerate: Vec<usize>,
}

impl PhaseReport {
    pub fn pass(&self) -> bool {
        self.homogeneous && self.quadratic && self.nondegenerate
    }
}

/// Off-diagonal test offset used for the homogeneity check.
fn offset(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| 0.13 + 0.07 * i as f64)
}

/// Checks positive homogeneity (Euler identity at an off-diagonal `x`), the
/// quadratic remainder of the expansion at `x⋆`, and `det φ_xη ≠ 0`.
pub fn validate_phase(phase: &dyn PhaseFunction, samples: &[(DVector<f64>, DVector<f64>)], tol: f64) -> Result<PhaseReport> {
    let mut out = Vec::with_capacity(samples.len());
    let mut degenerate = Vec::new();
    for (idx, (y, eta)) in samples.iter().enumerate() {
        let p = phase.map().point(y, eta)?;
        let n = y.len();

        // homogeneity: η·∇_η φ = φ by central differences
        let x = &p.x + offset(n);
        let h = 1e-5 * eta.norm();
        let mut euler = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let mut ep = eta.clone();
            let mut em = eta.clone();
            ep[k] += h;
            em[k] -= h;
            euler += (phase.value(&x, y, &ep)? - phase.value(&x, y, &em)?) / (2.0 * h) * eta[k];
        }
        let v = phase.value_at(&x, &p);
        let euler_residual = (euler - v).norm() / (1.0 + v.norm());

        // quadratic remainder: (φ − (x − x⋆)·ξ⋆)/|x − x⋆|² stays bounded as the offset halves
        let dir = offset(n).normalize();
        let mut q = Vec::new();
        for k in 0..5 {
            let s = 1e-4 / f64::powi(2.0, k);
            let xs = &p.x + &dir * s;
            let lin = (&xs - &p.x).dot(&p.xi);
            let rem = phase.value_at(&xs, &p) - lin;
            let floor = 1e-13 * (1.0 + p.xi.norm() * s);
            q.push(if rem.norm() <= floor { 0.0 } else { rem.norm() / (s * s) });
        }
        let q0 = q[0].max(1.0);
        let remainder_growth = q.iter().fold(0.0f64, |m, v| m.max(*v)) / q0;

        // nondegenerate φ_xη
        let pxe = phase.phi_x_eta_at(&p.x, &p)?;
        let det_margin = det_c(&pxe).norm() / c_norm(&pxe).max(1e-300).powi(n as i32);

        if p.jac.xi_eta.determinant().abs() <= tol * p.jac.xi_eta.norm().powi(n as i32) {
            degenerate.push(idx);
        }
        out.push(SampleVerdict {
            euler_residual,
            remainder_growth,
            det_margin,
            homogeneous: euler_residual < 1e-6,
            quadratic: remainder_growth < 4.0,
            nondegenerate: det_margin > tol,
        });
    }
    Ok(PhaseReport {
        phase: phase.describe(),
        homogeneous: out.iter().all(|s| s.homogeneous),
        quadratic: out.iter().all(|s| s.quadratic),
        nondegenerate: out.iter().all(|s| s.nondegenerate),
        samples: out,
        chart_degenerate: degenerate,
    })
}

/// For phases with positive definite `Im φ_xx`: confirms `det φ_xη ≠ 0` at all
/// samples and returns the smallest `|det φ_xη|`.
pub fn complex_nondegeneracy_check(phase: &dyn PhaseFunction, samples: &[(DVector<f64>, DVector<f64>)]) -> Result<(bool, f64)> {
    let mut margin = f64::INFINITY;
    for (y, eta) in samples {
        let jet = phase.jet(y, eta)?;
        let im = jet.phi_xx.map(|z| z.im);
        if im.clone().cholesky().is_none() {
            return Err(Error::InvalidPhase(format!("{}: Im phi_xx is not positive definite", phase.describe())));
        }
        margin = margin.min(det_c(&jet.phi_x_eta).norm());
    }
    Ok((margin > 0.0, margin))
}

/// The horizontal `{X·∇_x − (Re φ_xx) X·∇_ξ}` at `Φ(ϑ)`.
pub fn horizontal_of_phase(phase: &dyn PhaseFunction, y: &DVector<f64>, eta: &DVector<f64>) -> Result<LagrangianFrame> {
    let jet = phase.jet(y, eta)?;
    let n = jet.dim();
    Ok(LagrangianFrame {
        b: DMatrix::identity(n, n),
        c: -jet.phi_xx.map(|z| z.re),
        base: BasePoint::new(jet.x_star.clone(), jet.xi_star.clone()),
    })
}

#[cfg(test)]
mod tests;
