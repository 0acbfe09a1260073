//! Homogeneous canonical transformations `(y, η) ↦ (x⋆, ξ⋆)`.

mod catalog;
mod flow;
mod registry;

pub use catalog::{ComposedMap, FiniteDifferenceMap, HalfWave, Identity, Lift};
pub use flow::{FlowSpec, HamDerivs, Hamiltonian, HamiltonianFlow, MetricHamiltonian};
pub use registry::{MapBuilder, MapRegistry};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lagrangian::{BasePoint, LagrangianFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AnalyticCatalog,
    NumericFlow,
    Composed,
    FiniteDifference,
}

/// The four `n × n` Jacobian blocks of a canonical map.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub x_y: DMatrix<f64>,
    pub x_eta: DMatrix<f64>,
    pub xi_y: DMatrix<f64>,
    pub xi_eta: DMatrix<f64>,
}

impl Jacobian {
    pub fn identity(n: usize) -> Self {
        Jacobian {
            x_y: DMatrix::identity(n, n),
            x_eta: DMatrix::zeros(n, n),
            xi_y: DMatrix::zeros(n, n),
            xi_eta: DMatrix::identity(n, n),
        }
    }

    pub fn full(&self) -> DMatrix<f64> {
        let n = self.x_y.nrows();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.x_y);
        m.view_mut((0, n), (n, n)).copy_from(&self.x_eta);
        m.view_mut((n, 0), (n, n)).copy_from(&self.xi_y);
        m.view_mut((n, n), (n, n)).copy_from(&self.xi_eta);
        m
    }

    pub fn from_full(m: &DMatrix<f64>) -> Self {
        let n = m.nrows() / 2;
        Jacobian {
            x_y: m.view((0, 0), (n, n)).into_owned(),
            x_eta: m.view((0, n), (n, n)).into_owned(),
            xi_y: m.view((n, 0), (n, n)).into_owned(),
            xi_eta: m.view((n, n), (n, n)).into_owned(),
        }
    }

    /// Chain rule for `second ∘ first`: `self` belongs to `second`.
    pub fn after(&self, first: &Jacobian) -> Jacobian {
        Jacobian::from_full(&(self.full() * first.full()))
    }
}

/// Evaluation of a canonical map at `(y, η)` together with its Jacobian.
#[derive(Debug, Clone)]
pub struct MapPoint {
    pub y: DVector<f64>,
    pub eta: DVector<f64>,
    pub x: DVector<f64>,
    pub xi: DVector<f64>,
    pub jac: Jacobian,
}

pub trait CanonicalMap: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn provenance(&self) -> Provenance;

    /// Conic domain test; the default excludes only the zero section.
    fn in_domain(&self, _y: &DVector<f64>, eta: &DVector<f64>) -> bool {
        eta.norm() > 0.0
    }

    fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)>;
    fn jacobian(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Jacobian>;

    fn point(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<MapPoint> {
        self.check_domain(y, eta)?;
        let (x, xi) = self.eval(y, eta)?;
        let jac = self.jacobian(y, eta)?;
        Ok(MapPoint { y: y.clone(), eta: eta.clone(), x, xi, jac })
    }

    fn inverse(&self) -> Result<SharedMap>;

    fn check_domain(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<()> {
        if y.len() != self.dim() || eta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "{} expects points of dimension {}",
                self.name(),
                self.dim()
            )));
        }
        if !self.in_domain(y, eta) {
            return Err(Error::Domain(format!(
                "({:?}, {:?}) outside the domain of {}",
                y.as_slice(),
                eta.as_slice(),
                self.name()
            )));
        }
        Ok(())
    }
}

pub type SharedMap = Arc<dyn CanonicalMap>;

#[derive(Debug, Clone, Default, Serialize)]
pub struct CanonicalReport {
    pub symplectic_y: f64,
    pub symplectic_eta: f64,
    pub symplectic_cross: f64,
    pub euler_x: f64,
    pub euler_xi: f64,
    pub one_form_eta: f64,
    pub one_form_y: f64,
    pub samples: usize,
    pub tol: f64,
    pub pass: bool,
}

impl CanonicalReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.symplectic_y,
            self.symplectic_eta,
            self.symplectic_cross,
            self.euler_x,
            self.euler_xi,
            self.one_form_eta,
            self.one_form_y,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("symplectic (y block)", self.symplectic_y),
            ("symplectic (eta block)", self.symplectic_eta),
            ("symplectic (cross block)", self.symplectic_cross),
            ("euler x", self.euler_x),
            ("euler xi", self.euler_xi),
            ("one-form (eta)", self.one_form_eta),
            ("one-form (y)", self.one_form_y),
        ]
    }
}

/// Residuals of the symplectic, homogeneity and one-form identities at one point.
pub fn residuals_at(p: &MapPoint) -> [f64; 7] {
    let j = &p.jac;
    let n = p.y.len();
    let a_y = j.xi_y.transpose() * &j.x_y - j.x_y.transpose() * &j.xi_y;
    let a_eta = j.xi_eta.transpose() * &j.x_eta - j.x_eta.transpose() * &j.xi_eta;
    let b = j.xi_eta.transpose() * &j.x_y - j.x_eta.transpose() * &j.xi_y - DMatrix::identity(n, n);
    let ex = &j.x_eta * &p.eta;
    let exi = &j.xi_eta * &p.eta - &p.xi;
    let of_eta = j.x_eta.transpose() * &p.xi;
    let of_y = j.x_y.transpose() * &p.xi - &p.eta;
    [a_y.amax(), a_eta.amax(), b.amax(), ex.amax(), exi.amax(), of_eta.amax(), of_y.amax()]
}

pub fn validate_canonical(map: &dyn CanonicalMap, samples: &[(DVector<f64>, DVector<f64>)], tol: f64) -> Result<CanonicalReport> {
    let mut worst = [0.0f64; 7];
    for (y, eta) in samples {
        let p = map.point(y, eta).map_err(|e| {
            Error::Domain(format!("{} failed at y={:?}, eta={:?}: {e}", map.name(), y.as_slice(), eta.as_slice()))
        })?;
        for (w, r) in worst.iter_mut().zip(residuals_at(&p)) {
            *w = w.max(r);
        }
    }
    let mut rep = CanonicalReport {
        symplectic_y: worst[0],
        symplectic_eta: worst[1],
        symplectic_cross: worst[2],
        euler_x: worst[3],
        euler_xi: worst[4],
        one_form_eta: worst[5],
        one_form_y: worst[6],
        samples: samples.len(),
        tol,
        pass: false,
    };
    rep.pass = rep.max_residual() < tol;
    Ok(rep)
}

/// Random `(y, η)` with `y ∈ [-r, r]ⁿ` and `|η| ∈ [0.5, 2]`.
pub fn random_samples<R: Rng>(rng: &mut R, n: usize, count: usize, r: f64) -> Vec<(DVector<f64>, DVector<f64>)> {
    (0..count)
        .map(|_| {
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-r..r));
            let mut dir = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            while dir.norm() < 1e-3 {
                dir = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            }
            let eta = dir.normalize() * rng.gen_range(0.5..2.0);
            (y, eta)
        })
        .collect()
}

/// The frame `dΦ(V_ϑ) = (x⋆_η; ξ⋆_η)` at `Φ(ϑ)`.
pub fn image_of_vertical(map: &dyn CanonicalMap, y: &DVector<f64>, eta: &DVector<f64>) -> Result<LagrangianFrame> {
    let p = map.point(y, eta)?;
    Ok(frame_of_point(&p))
}

pub fn frame_of_point(p: &MapPoint) -> LagrangianFrame {
    LagrangianFrame {
        b: p.jac.x_eta.clone(),
        c: p.jac.xi_eta.clone(),
        base: BasePoint::new(p.x.clone(), p.xi.clone()),
    }
}

/// `second ∘ first`.
pub fn compose_maps(first: SharedMap, second: SharedMap) -> Result<SharedMap> {
    if first.dim() != second.dim() {
        return Err(Error::Dimension("composed maps have different dimensions".into()));
    }
    Ok(Arc::new(ComposedMap::new(first, second)))
}

/// Central finite-difference Jacobian of `eval`, relative step `1e-5`.
pub fn finite_difference_jacobian(map: &dyn CanonicalMap, y: &DVector<f64>, eta: &DVector<f64>, rel_step: f64) -> Result<Jacobian> {
    let n = y.len();
    let mut full = DMatrix::zeros(2 * n, 2 * n);
    let scale_eta = eta.norm();
    for col in 0..2 * n {
        let (h, plus, minus) = if col < n {
            let h = rel_step * (1.0 + y[col].abs());
            let mut a = y.clone();
            let mut b = y.clone();
            a[col] += h;
            b[col] -= h;
            (h, map.eval(&a, eta)?, map.eval(&b, eta)?)
        } else {
            let k = col - n;
            let h = rel_step * scale_eta;
            let mut a = eta.clone();
            let mut b = eta.clone();
            a[k] += h;
            b[k] -= h;
            (h, map.eval(y, &a)?, map.eval(y, &b)?)
        };
        for r in 0..n {
            full[(r, col)] = (plus.0[r] - minus.0[r]) / (2.0 * h);
            full[(n + r, col)] = (plus.1[r] - minus.1[r]) / (2.0 * h);
        }
    }
    Ok(Jacobian::from_full(&full))
}
