use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

use super::{CanonicalMap, Jacobian, MapPoint, Provenance, SharedMap};
use crate::diffeo::coordinate_names;
use crate::error::{Error, Result};
use crate::expr::Formula;

/// Value and derivatives of a Hamiltonian up to second order.
#[derive(Debug, Clone)]
pub struct HamDerivs {
    pub h: f64,
    pub h_x: DVector<f64>,
    pub h_xi: DVector<f64>,
    pub h_xx: DMatrix<f64>,
    /// `[(i, j)] = ∂²h/∂x_i∂ξ_j`
    pub h_xxi: DMatrix<f64>,
    pub h_xixi: DMatrix<f64>,
}

pub trait Hamiltonian: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn derivs(&self, x: &DVector<f64>, xi: &DVector<f64>) -> Result<HamDerivs>;
    fn describe(&self) -> String;
}

/// `h(x, ξ) = sqrt(ξᵀ g(x)⁻¹ ξ)` for a Riemannian metric given entrywise.
#[derive(Debug, Clone)]
pub struct MetricHamiltonian {
    n: usize,
    g: Vec<Vec<Formula>>,
    dg: Vec<Vec<Vec<Formula>>>,
    ddg: Vec<Vec<Vec<Vec<Formula>>>>,
}

impl MetricHamiltonian {
    /// Entries are expressions in `x` (n = 1) or `x1, x2`.
    pub fn new(metric: &[Vec<String>]) -> Result<Self> {
        let n = metric.len();
        if n == 0 || metric.iter().any(|row| row.len() != n) {
            return Err(Error::Config("metric must be a square array of expressions".into()));
        }
        let names = coordinate_names("x", n);
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let g = metric
            .iter()
            .map(|row| row.iter().map(|e| Formula::parse(e, &vars)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let dg: Vec<Vec<Vec<Formula>>> =
            (0..n).map(|k| g.iter().map(|row| row.iter().map(|e| e.derivative(k)).collect()).collect()).collect();
        let ddg = (0..n)
            .map(|k| {
                (0..n)
                    .map(|l| dg[k].iter().map(|row| row.iter().map(|e| e.derivative(l)).collect()).collect())
                    .collect()
            })
            .collect();
        Ok(MetricHamiltonian { n, g, dg, ddg })
    }

    pub fn euclidean(n: usize) -> Self {
        let m: Vec<Vec<String>> =
            (0..n).map(|i| (0..n).map(|j| if i == j { "1".to_string() } else { "0".to_string() }).collect()).collect();
        MetricHamiltonian::new(&m).expect("constant metric parses")
    }

    fn eval_matrix(&self, m: &[Vec<Formula>], x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = m[i][j].eval(x.as_slice())?;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }
}

impl Hamiltonian for MetricHamiltonian {
    fn dim(&self) -> usize {
        self.n
    }

    fn derivs(&self, x: &DVector<f64>, xi: &DVector<f64>) -> Result<HamDerivs> {
        let n = self.n;
        let g = self.eval_matrix(&self.g, x)?;
        let ginv = g
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain(format!("metric not positive definite at {:?}", x.as_slice())))?
            .inverse();
        let dg: Vec<DMatrix<f64>> = (0..n).map(|k| self.eval_matrix(&self.dg[k], x)).collect::<Result<_>>()?;
        // ∂G = −G ∂g G for G = g⁻¹
        let dginv: Vec<DMatrix<f64>> = dg.iter().map(|d| -(&ginv * d * &ginv)).collect();
        let q = xi.dot(&(&ginv * xi));
        if q <= 0.0 {
            return Err(Error::Domain("Hamiltonian evaluated on the zero section".into()));
        }
        let h = q.sqrt();
        let gxi = &ginv * xi;
        let qk: Vec<f64> = dginv.iter().map(|d| xi.dot(&(d * xi))).collect();
        let dgxi: Vec<DVector<f64>> = dginv.iter().map(|d| d * xi).collect();

        let h_xi = &gxi / h;
        let h_x = DVector::from_fn(n, |k, _| qk[k] / (2.0 * h));
        let h_xixi = &ginv / h - (&gxi * gxi.transpose()) / (h * h * h);
        let mut h_xxi = DMatrix::zeros(n, n);
        for k in 0..n {
            for i in 0..n {
                h_xxi[(k, i)] = dgxi[k][i] / h - gxi[i] * qk[k] / (2.0 * h * h * h);
            }
        }
        let mut h_xx = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in k..n {
                let ddg = self.eval_matrix(&self.ddg[k][l], x)?;
                let ddginv = &ginv * &dg[k] * &ginv * &dg[l] * &ginv + &ginv * &dg[l] * &ginv * &dg[k] * &ginv
                    - &ginv * ddg * &ginv;
                let v = xi.dot(&(ddginv * xi)) / (2.0 * h) - qk[k] * qk[l] / (4.0 * h * h * h);
                h_xx[(k, l)] = v;
                h_xx[(l, k)] = v;
            }
        }
        Ok(HamDerivs { h, h_x, h_xi, h_xx, h_xxi, h_xixi })
    }

    fn describe(&self) -> String {
        let rows: Vec<String> = self
            .g
            .iter()
            .map(|r| format!("[{}]", r.iter().map(|e| e.source.clone()).collect::<Vec<_>>().join(", ")))
            .collect();
        format!("metric[{}]", rows.join(", "))
    }
}

#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub hamiltonian: Arc<dyn Hamiltonian>,
    pub time: f64,
    pub steps: usize,
    /// Trajectories must keep `|x_k| ≤ chart_radius`.
    pub chart_radius: f64,
}

impl FlowSpec {
    pub fn new(hamiltonian: Arc<dyn Hamiltonian>, time: f64, steps: usize) -> Self {
        FlowSpec { hamiltonian, time, steps, chart_radius: 1e6 }
    }
}

/// Time-`t` map of a degree-1 homogeneous Hamiltonian, integrated by the
/// implicit midpoint rule. The Jacobian is the exact derivative of the
/// discrete map, so the result is symplectic and homogeneous to rounding.
#[derive(Debug, Clone)]
pub struct HamiltonianFlow {
    pub spec: FlowSpec,
}

impl HamiltonianFlow {
    pub fn new(spec: FlowSpec) -> Result<Self> {
        if spec.steps == 0 {
            return Err(Error::Config("flow needs at least one step".into()));
        }
        let n = spec.hamiltonian.dim();
        // Euler identity h_ξ·ξ = h on a few rays
        for k in 0..4 {
            let x = DVector::from_fn(n, |i, _| 0.1 * (k as f64 + 1.0) * (i as f64 + 1.0));
            let xi = DVector::from_fn(n, |i, _| ((k * 3 + i) as f64).cos() + 0.2);
            let d = spec.hamiltonian.derivs(&x, &xi)?;
            let e = (d.h_xi.dot(&xi) - d.h).abs();
            if e > 1e-10 * (1.0 + d.h) {
                return Err(Error::NotCanonical(format!(
                    "Hamiltonian fails the Euler identity (residual {e:.3e}); it must be homogeneous of degree 1"
                )));
            }
        }
        Ok(HamiltonianFlow { spec })
    }

    fn vector_field(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.spec.hamiltonian.dim();
        let x = z.rows(0, n).into_owned();
        let xi = z.rows(n, n).into_owned();
        let d = self.spec.hamiltonian.derivs(&x, &xi)?;
        let mut f = DVector::zeros(2 * n);
        f.rows_mut(0, n).copy_from(&d.h_xi);
        f.rows_mut(n, n).copy_from(&(-&d.h_x));
        let mut df = DMatrix::zeros(2 * n, 2 * n);
        df.view_mut((0, 0), (n, n)).copy_from(&d.h_xxi.transpose());
        df.view_mut((0, n), (n, n)).copy_from(&d.h_xixi);
        df.view_mut((n, 0), (n, n)).copy_from(&(-&d.h_xx));
        df.view_mut((n, n), (n, n)).copy_from(&(-&d.h_xxi));
        Ok((f, df))
    }

    fn integrate(&self, y: &DVector<f64>, eta: &DVector<f64>, with_jac: bool) -> Result<MapPoint> {
        let n = y.len();
        let dt = self.spec.time / self.spec.steps as f64;
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(y);
        z.rows_mut(n, n).copy_from(eta);
        let mut m = DMatrix::identity(2 * n, 2 * n);
        let id = DMatrix::<f64>::identity(2 * n, 2 * n);
        if dt != 0.0 {
            for step in 0..self.spec.steps {
                let (f0, _) = self.vector_field(&z)?;
                let mut z1 = &z + &f0 * dt;
                let mut converged = false;
                let mut df_mid = DMatrix::zeros(2 * n, 2 * n);
                for _ in 0..30 {
                    let mid = (&z + &z1) * 0.5;
                    let (f, df) = self.vector_field(&mid)?;
                    let g = &z1 - &z - &f * dt;
                    let dg = &id - &df * (0.5 * dt);
                    let delta = dg
                        .lu()
                        .solve(&g)
                        .ok_or_else(|| Error::NoConvergence("singular midpoint system".into()))?;
                    z1 -= &delta;
                    df_mid = df;
                    if delta.amax() <= 1e-15 * (1.0 + z1.amax()) {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::NoConvergence(format!("implicit midpoint at step {step}")));
                }
                if with_jac {
                    let mid = (&z + &z1) * 0.5;
                    df_mid = self.vector_field(&mid)?.1;
                    let lhs = &id - &df_mid * (0.5 * dt);
                    let rhs = (&id + &df_mid * (0.5 * dt)) * &m;
                    m = lhs
                        .lu()
                        .solve(&rhs)
                        .ok_or_else(|| Error::NoConvergence("singular variational step".into()))?;
                }
                let _ = &df_mid;
                z = z1;
                if z.rows(0, n).amax() > self.spec.chart_radius {
                    return Err(Error::ChartExit(dt * (step + 1) as f64));
                }
            }
        }
        Ok(MapPoint {
            y: y.clone(),
            eta: eta.clone(),
            x: z.rows(0, n).into_owned(),
            xi: z.rows(n, n).into_owned(),
            jac: Jacobian::from_full(&m),
        })
    }
}

impl CanonicalMap for HamiltonianFlow {
    fn name(&self) -> String {
        format!("flow({}, t={}, steps={})", self.spec.hamiltonian.describe(), self.spec.time, self.spec.steps)
    }
    fn dim(&self) -> usize {
        self.spec.hamiltonian.dim()
    }
    fn provenance(&self) -> Provenance {
        Provenance::NumericFlow
    }
    fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_domain(y, eta)?;
        let p = self.integrate(y, eta, false)?;
        Ok((p.x, p.xi))
    }
    fn jacobian(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Jacobian> {
        Ok(self.point(y, eta)?.jac)
    }
    fn point(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<MapPoint> {
        self.check_domain(y, eta)?;
        self.integrate(y, eta, true)
    }
    fn inverse(&self) -> Result<SharedMap> {
        let mut spec = self.spec.clone();
        spec.time = -spec.time;
        Ok(Arc::new(HamiltonianFlow { spec }))
    }
}
