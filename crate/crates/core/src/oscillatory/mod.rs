//! Numerical oracle for the symbol calculus: kernels of FIOs by η-quadrature,
//! singular symbols from windowed Fourier coefficients over a λ-sweep, and
//! compositions through a z-grid pairing.
//!
//! Windows are gaussian, `ρ(x) = exp(−|x − x₀|²/2σ²)`, so `ρ(x₀) = 1` and
//! the Fourier transform of `ρ` is available in closed form.

mod compose;
mod egorov;
mod quad;

pub use compose::{
    composed_phase_check, composition_hessian, compose_numeric, solve_xi_hat, ComposedPhaseReport, CompositionMode,
    CompositionReport, HessianReport,
};
pub use egorov::{egorov_numeric, EgorovReport};
pub use quad::{ball_rule, gauss_legendre, gl_box, gl_interval, smooth_step, trapezoid_box};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use crate::canonical::{CanonicalMap, MapPoint, SharedMap};
use crate::error::{Error, Result};
use crate::inertia::{inertia, symmetrize};
use crate::phase::{det_c, GaussianPhase, PhaseFunction, PhaseKind, RealChartPhase, SharedPhase};
use crate::symbols::{ipow_int, Amplitude};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Cutoffs of the kernel integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffSpec {
    /// Low-frequency cutoff: 0 for `|η| ≤ r0/2`, 1 for `|η| ≥ r0`.
    pub r0: f64,
    /// `ς = 1` for `|x − x⋆| ≤ inner`, `ς = 0` for `|x − x⋆| ≥ outer`.
    pub inner: f64,
    pub outer: f64,
    /// Roll-off `exp(−(|η|/R)⁸)` used when a kernel is synthesized pointwise.
    pub rolloff: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec { r0: 1.0, inner: 1.0, outer: 2.0, rolloff: 64.0 }
    }
}

impl CutoffSpec {
    pub fn low(&self, r: f64) -> f64 {
        smooth_step((r - 0.5 * self.r0) / (0.5 * self.r0))
    }

    pub fn spatial(&self, dist: f64) -> f64 {
        1.0 - smooth_step((dist - self.inner) / (self.outer - self.inner))
    }

    pub fn rolloff_window(&self, r: f64) -> f64 {
        (-(r / self.rolloff).powi(8)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes along `|η|` (along the η-segment at n = 1).
    pub radial: usize,
    /// Trapezoid nodes on the η-circle (n = 2).
    pub angular: usize,
    /// Gauss–Legendre nodes per x-axis on grid routes.
    pub spatial: usize,
    /// Truncation radius in units of the gaussian envelope width.
    pub ball_sigmas: f64,
    /// Largest number of integrand evaluations allowed per λ.
    pub budget: u64,
    /// Use the x-grid even where the x-integral is known in closed form.
    pub force_grid: bool,
}

impl QuadratureSpec {
    pub fn for_dim(n: usize) -> Self {
        QuadratureSpec {
            radial: 256,
            angular: if n == 1 { 1 } else { 256 },
            spatial: if n == 1 { 64 } else { 32 },
            ball_sigmas: 6.5,
            budget: 400_000_000,
            force_grid: false,
        }
    }

    fn eta_nodes(&self, n: usize) -> u64 {
        if n == 1 {
            self.radial as u64
        } else {
            (self.radial * self.angular) as u64
        }
    }

    fn check(&self, evaluations: u64, what: &str) -> Result<()> {
        if evaluations > self.budget {
            return Err(Error::Budget(format!(
                "{what}: {evaluations} integrand evaluations (radial {}, angular {}, spatial {}) exceed {}",
                self.radial, self.angular, self.spatial, self.budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// `𝒱(x, y)` itself.
    Direct,
    /// The kernel `conj(𝒱(y, x))` of `V*`, associated with `Φ⁻¹`.
    Adjoint,
}

/// Data of one FIO kernel.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub phase: SharedPhase,
    pub amplitude: Amplitude,
    pub order: f64,
    pub cutoff: CutoffSpec,
    pub quadrature: QuadratureSpec,
    pub form: KernelForm,
}

impl KernelSpec {
    pub fn new(phase: SharedPhase, amplitude: Amplitude, order: f64) -> Self {
        let n = phase.map().dim();
        KernelSpec {
            phase,
            amplitude,
            order,
            cutoff: CutoffSpec::default(),
            quadrature: QuadratureSpec::for_dim(n),
            form: KernelForm::Direct,
        }
    }

    /// Unit amplitude, order 0, real phase.
    pub fn real(map: SharedMap) -> Self {
        KernelSpec::new(Arc::new(RealChartPhase::new(map)), Amplitude::constant(Complex64::new(1.0, 0.0)), 0.0)
    }

    /// Unit amplitude, order 0, gaussian phase.
    pub fn gaussian(map: SharedMap) -> Self {
        KernelSpec::new(Arc::new(GaussianPhase::new(map)), Amplitude::constant(Complex64::new(1.0, 0.0)), 0.0)
    }

    pub fn with_amplitude(mut self, amplitude: Amplitude, order: f64) -> Self {
        self.amplitude = amplitude;
        self.order = order;
        self
    }

    pub fn with_quadrature(mut self, q: QuadratureSpec) -> Self {
        self.quadrature = q;
        self
    }

    pub fn adjoint(mut self) -> Self {
        self.form = match self.form {
            KernelForm::Direct => KernelForm::Adjoint,
            KernelForm::Adjoint => KernelForm::Direct,
        };
        self
    }

    pub fn map(&self) -> &SharedMap {
        self.phase.map()
    }

    pub fn dim(&self) -> usize {
        self.map().dim()
    }

    /// The canonical map the kernel is associated with.
    pub fn kernel_map(&self) -> Result<SharedMap> {
        match self.form {
            KernelForm::Direct => Ok(self.map().clone()),
            KernelForm::Adjoint => self.map().inverse(),
        }
    }

    fn is_real(&self) -> bool {
        self.phase.kind() == PhaseKind::RealChart
    }

    /// `e^{iφ} p |det φ_xη|^{1/2} ς` at `x` for the map data `p`.
    pub fn integrand(&self, x: &DVector<f64>, p: &MapPoint) -> Result<Complex64> {
        let s = self.cutoff.spatial((x - &p.x).norm());
        if s == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let d = det_c(&self.phase.phi_x_eta_at(x, p)?).norm();
        let phase = self.phase.value_at(x, p);
        Ok((I * phase).exp() * self.amplitude.eval(&p.y, &p.eta) * d.sqrt() * s)
    }

    /// Samples the conditions on `ς`: degree-0 homogeneity, `ς = 1` near
    /// `x = x⋆`, and on `supp ς` the bounds `|det φ_xη| > 0` and
    /// `|φ_η| ≥ c |x − x⋆|` with `c > 0`.
    pub fn validate_cutoff(&self, samples: &[(DVector<f64>, DVector<f64>)]) -> Result<CutoffReport> {
        let map = self.map();
        let mut rep = CutoffReport { homogeneity: 0.0, inner_value: 1.0, min_det: f64::INFINITY, min_ratio: f64::INFINITY, samples: 0, pass: false };
        let dirs: Vec<f64> = (0..8).map(|k| k as f64 * PI / 4.0).collect();
        for (y, eta) in samples {
            let p = map.point(y, eta)?;
            let n = y.len();
            for &th in &dirs {
                for &rad in &[0.05 * self.cutoff.inner, 0.5 * self.cutoff.inner, 0.5 * (self.cutoff.inner + self.cutoff.outer), 0.98 * self.cutoff.outer] {
                    let mut dx = DVector::zeros(n);
                    if n > 1 {
                        dx[0] = rad * th.cos();
                        dx[1] = rad * th.sin();
                    } else {
                        dx[0] = if th.cos() < 0.0 { -rad } else { rad };
                    }
                    let x = &p.x + &dx;
                    for s in [2.0, 10.0] {
                        let q = map.point(y, &(eta * s))?;
                        let diff = (self.cutoff.spatial((&x - &q.x).norm()) - self.cutoff.spatial(rad)).abs();
                        rep.homogeneity = rep.homogeneity.max(diff);
                    }
                    if rad <= self.cutoff.inner {
                        rep.inner_value = rep.inner_value.min(self.cutoff.spatial(rad));
                    }
                    let d = det_c(&self.phase.phi_x_eta_at(&x, &p)?).norm() / det_c(&self.phase.phi_x_eta_at(&p.x, &p)?).norm();
                    rep.min_det = rep.min_det.min(d);
                    let g = phi_eta_by_differences(self.phase.as_ref(), &x, y, eta)?;
                    rep.min_ratio = rep.min_ratio.min(g / rad);
                    rep.samples += 1;
                }
            }
        }
        rep.pass = rep.homogeneity < 1e-9 && rep.inner_value == 1.0 && rep.min_det > 1e-6 && rep.min_ratio > 1e-6;
        Ok(rep)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffReport {
    pub homogeneity: f64,
    pub inner_value: f64,
    /// Smallest `|det φ_xη(x)| / |det φ_xη(x⋆)|` on the support.
    pub min_det: f64,
    /// Smallest `|φ_η(x)| / |x − x⋆|` on the support.
    pub min_ratio: f64,
    pub samples: usize,
    pub pass: bool,
}

fn phi_eta_by_differences(phase: &dyn PhaseFunction, x: &DVector<f64>, y: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
    let h = 1e-5 * eta.norm();
    let mut g2 = 0.0;
    for k in 0..eta.len() {
        let mut a = eta.clone();
        let mut b = eta.clone();
        a[k] += h;
        b[k] -= h;
        let d = (phase.value(x, y, &a)? - phase.value(x, y, &b)?) / (2.0 * h);
        g2 += d.norm_sqr();
    }
    Ok(g2.sqrt())
}

/// Value of the kernel at `(x, y)`: polar η-quadrature with the low-frequency
/// cutoff and the roll-off `exp(−(|η|/R)⁸)`.
pub fn synthesize_kernel(spec: &KernelSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<Complex64> {
    let n = spec.dim();
    if n > 2 {
        return Err(Error::Dimension("kernel synthesis supports n <= 2".into()));
    }
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!("kernel points must have dimension {n}")));
    }
    let (x, y) = match spec.form {
        KernelForm::Direct => (x, y),
        KernelForm::Adjoint => (y, x),
    };
    let q = &spec.quadrature;
    q.check(q.eta_nodes(n), "kernel synthesis")?;
    let c = &spec.cutoff;
    // exp(−(r/R)⁸) < 1e−16 beyond 1.6 R
    let radial = gl_interval(q.radial, 0.5 * c.r0, 1.6 * c.rolloff);
    let dirs: Vec<(DVector<f64>, f64)> = if n == 1 {
        vec![(DVector::from_element(1, 1.0), 1.0), (DVector::from_element(1, -1.0), 1.0)]
    } else {
        let dth = 2.0 * PI / q.angular as f64;
        (0..q.angular).map(|k| {
            let th = k as f64 * dth;
            (DVector::from_vec(vec![th.cos(), th.sin()]), dth)
        })
        .collect()
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for (r, wr) in &radial {
        let wgt = wr * r.powi(n as i32 - 1) * c.low(*r) * c.rolloff_window(*r);
        if wgt == 0.0 {
            continue;
        }
        for (d, wd) in &dirs {
            let eta = d * *r;
            let p = spec.map().point(y, &eta)?;
            acc += spec.integrand(x, &p)? * (wgt * wd);
        }
    }
    let v = acc / (2.0 * PI).powi(n as i32);
    Ok(match spec.form {
        KernelForm::Direct => v,
        KernelForm::Adjoint => v.conj(),
    })
}

/// Probe data: base point, gaussian window width and λ-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionSpec {
    pub y0: Vec<f64>,
    pub eta0: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub lambdas: Vec<f64>,
    /// Error bars above this fraction of `|s|` raise the low-confidence flag.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_sigma() -> f64 {
    0.5
}

fn default_confidence() -> f64 {
    0.02
}

impl ExtractionSpec {
    pub fn new(y0: &[f64], eta0: &[f64], lambdas: &[f64]) -> Self {
        ExtractionSpec { y0: y0.to_vec(), eta0: eta0.to_vec(), sigma: default_sigma(), lambdas: lambdas.to_vec(), confidence: default_confidence() }
    }

    pub fn y0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y0)
    }

    pub fn eta0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.eta0)
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.y0.len() != n || self.eta0.len() != n {
            return Err(Error::Dimension(format!("probe point must have dimension {n}")));
        }
        if self.lambdas.len() < 3 || self.lambdas.windows(2).any(|w| w[1] <= w[0]) || self.lambdas[0] <= 0.0 {
            return Err(Error::Config("lambda grid must hold at least 3 increasing positive values".into()));
        }
        if self.sigma <= 0.0 || self.eta0.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("probe needs sigma > 0 and eta0 != 0".into()));
        }
        Ok(())
    }
}

/// Which sign the `κ₋` exponent of the extraction constant carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `i^{−κ₋((x⋆_η)ᵀξ⋆_η)}`, confirmed by the stationary-phase computation.
    MinusKappa,
    /// `i^{+κ₋((x⋆_η)ᵀξ⋆_η)}`, the opposite sign.
    PlusKappa,
}

/// `c = e^{−iλx₀·ξ₀} i^{∓κ₋((x⋆_η)ᵀξ⋆_η)} |det ξ⋆_η|^{−1/2}` at the probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeConstant {
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub kappa_minus: usize,
    pub abs_det: f64,
}

impl ProbeConstant {
    pub fn at(map: &dyn CanonicalMap, y0: &DVector<f64>, eta0: &DVector<f64>) -> Result<Self> {
        let p = map.point(y0, eta0)?;
        let abs_det = p.jac.xi_eta.determinant().abs();
        if abs_det < 1e-10 * p.jac.xi_eta.norm().powi(p.x.len() as i32).max(1e-300) {
            return Err(Error::ChartDegenerate { at: 0.0 });
        }
        let s = symmetrize(&(p.jac.x_eta.transpose() * &p.jac.xi_eta));
        let tol = 1e-9 * (1.0 + s.norm());
        let k = inertia(&s, tol)?;
        Ok(ProbeConstant { x0: p.x.iter().copied().collect(), xi0: p.xi.iter().copied().collect(), kappa_minus: k.kappa_minus, abs_det })
    }

    pub fn value(&self, lambda: f64, conv: Convention) -> Complex64 {
        let dot: f64 = self.x0.iter().zip(&self.xi0).map(|(a, b)| a * b).sum();
        let k = self.kappa_minus as i64;
        let pow = match conv {
            Convention::MinusKappa => ipow_int(-k),
            Convention::PlusKappa => ipow_int(k),
        };
        (-I * (lambda * dot)).exp() * pow / self.abs_det.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaSample {
    pub lambda: f64,
    /// The probe integral `∫ e^{−iλx·ξ₀} ρ(x) 𝒱(x, y₀) dx`.
    pub integral: Complex64,
    /// `integral / (c ρ(x₀) λᵐ)`, corrected convention.
    pub normalized: Complex64,
}

/// Extracted singular symbol with its fit diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Extraction {
    pub value: Complex64,
    pub error: f64,
    /// The same fit with the `+κ₋` constant.
    pub plus_kappa: Complex64,
    /// Coefficient of `λ⁻¹` in the fit.
    pub c1: Complex64,
    /// Fitted exponent of `|integral|` against λ.
    pub exponent: f64,
    pub order: f64,
    pub low_confidence: bool,
    pub constant: ProbeConstant,
    pub samples: Vec<LambdaSample>,
    pub route: String,
}

impl Extraction {
    pub fn phase_degrees(&self) -> f64 {
        self.value.arg().to_degrees()
    }
}

/// Least squares `v_k ≈ s + c₁/λ_k`; returns `(s, c₁, residual norm)`.
pub fn fit_leading(lambdas: &[f64], values: &[Complex64]) -> (Complex64, Complex64, f64) {
    let n = lambdas.len() as f64;
    let u: Vec<f64> = lambdas.iter().map(|l| 1.0 / l).collect();
    let su: f64 = u.iter().sum();
    let suu: f64 = u.iter().map(|x| x * x).sum();
    let sv: Complex64 = values.iter().sum();
    let suv: Complex64 = u.iter().zip(values).map(|(a, v)| v * *a).sum();
    let det = n * suu - su * su;
    let s = (sv * suu - suv * su) / det;
    let c1 = (suv * n - sv * su) / det;
    let res = u.iter().zip(values).map(|(a, v)| (v - s - c1 * *a).norm_sqr()).sum::<f64>().sqrt();
    (s, c1, res)
}

/// Slope of `ln|v|` against `ln λ`.
pub fn fit_exponent(lambdas: &[f64], values: &[Complex64]) -> f64 {
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.norm().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Turns raw probe integrals into an [`Extraction`].
///
/// The error bar is the larger of the fit residual norm and the shift of the
/// extrapolated value when the smallest λ is dropped.
pub fn finish_extraction(
    raw: &[(f64, Complex64)],
    constant: ProbeConstant,
    order: f64,
    confidence: f64,
    route: &str,
) -> Extraction {
    let lambdas: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let norm = |conv| -> Vec<Complex64> {
        raw.iter().map(|(l, v)| v / (constant.value(*l, conv) * l.powf(order))).collect()
    };
    let vals = norm(Convention::MinusKappa);
    let (s, c1, res) = fit_leading(&lambdas, &vals);
    let mut error = res;
    if raw.len() >= 4 {
        let (s2, _, _) = fit_leading(&lambdas[1..], &vals[1..]);
        error = error.max((s2 - s).norm());
    }
    let (plus_kappa, _, _) = fit_leading(&lambdas, &norm(Convention::PlusKappa));
    let ints: Vec<Complex64> = raw.iter().map(|r| r.1).collect();
    let exponent = fit_exponent(&lambdas, &ints);
    let samples = raw
        .iter()
        .zip(&vals)
        .map(|((l, v), nv)| LambdaSample { lambda: *l, integral: *v, normalized: *nv })
        .collect();
    Extraction {
        value: s,
        error,
        plus_kappa,
        c1,
        exponent,
        order,
        low_confidence: error > confidence * s.norm().max(1e-12),
        constant,
        samples,
        route: route.into(),
    }
}

/// `∫ ρ(x) e^{ix·q} dx` for the gaussian window centred at `x0`.
pub(crate) fn window_ft(x0: &[f64], sigma: f64, q: &[f64]) -> Complex64 {
    let n = x0.len() as i32;
    let q2: f64 = q.iter().map(|v| v * v).sum();
    let dot: f64 = x0.iter().zip(q).map(|(a, b)| a * b).sum();
    (I * dot).exp() * (2.0 * PI * sigma * sigma).powf(n as f64 / 2.0) * (-0.5 * sigma * sigma * q2).exp()
}

/// `1 / σ_min(ξ⋆_η)` at a point.
pub(crate) fn inverse_scale(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    1.0 / sv.min()
}

fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Estimates `s_V(y₀, η₀)` by the λ-sweep of the probe integral.
pub fn extract_symbol(spec: &KernelSpec, probe: &ExtractionSpec) -> Result<Extraction> {
    let n = spec.dim();
    if n > 2 {
        return Err(Error::Dimension("extraction supports n <= 2".into()));
    }
    probe.check(n)?;
    let kmap = spec.kernel_map()?;
    let constant = ProbeConstant::at(kmap.as_ref(), &probe.y0(), &probe.eta0())?;
    let mut raw = Vec::with_capacity(probe.lambdas.len());
    let route = match spec.form {
        KernelForm::Adjoint => "adjoint-plane-waves",
        KernelForm::Direct if spec.is_real() && !spec.quadrature.force_grid => "real-closed-form",
        KernelForm::Direct => "x-grid",
    };
    for &lambda in &probe.lambdas {
        let v = match spec.form {
            KernelForm::Adjoint => {
                let f = FieldSource::new(probe.sigma, &constant.x0, &constant.xi0, lambda);
                let waves = apply_ti(spec, &f, false)?;
                waves.eval(&probe.y0).conj()
            }
            KernelForm::Direct if route == "real-closed-form" => probe_real(spec, probe, &constant, lambda)?,
            KernelForm::Direct => probe_grid(spec, probe, &constant, lambda)?,
        };
        raw.push((lambda, v));
    }
    Ok(finish_extraction(&raw, constant, spec.order, probe.confidence, route))
}

/// Real phase: the x-integral against `ρ` is `window_ft(ξ⋆ − λξ₀)`.
fn probe_real(spec: &KernelSpec, probe: &ExtractionSpec, c: &ProbeConstant, lambda: f64) -> Result<Complex64> {
    let n = spec.dim();
    let q = &spec.quadrature;
    let y0 = probe.y0();
    let eta0 = probe.eta0();
    let p0 = spec.map().point(&y0, &eta0)?;
    let radius = q.ball_sigmas / probe.sigma * inverse_scale(&p0.jac.xi_eta);
    let center: Vec<f64> = eta0.iter().map(|v| v * lambda).collect();
    let nodes = ball_rule(&center, radius, q.radial, q.angular);
    q.check(nodes.len() as u64, "probe integral")?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (eta, w) in nodes {
        let r = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let low = spec.cutoff.low(r);
        if low == 0.0 {
            continue;
        }
        let p = spec.map().point(&y0, &dvec(&eta))?;
        let det = p.jac.xi_eta.determinant().abs();
        if det < 1e-12 {
            return Err(Error::ChartDegenerate { at: lambda });
        }
        let zeta: Vec<f64> = (0..n).map(|k| p.xi[k] - lambda * c.xi0[k]).collect();
        let phase = -p.x.dot(&p.xi);
        let amp = spec.amplitude.eval(&y0, &p.eta) * det.sqrt() * low;
        acc += amp * (I * phase).exp() * window_ft(&c.x0, probe.sigma, &zeta) * w;
    }
    Ok(acc / (2.0 * PI).powi(n as i32))
}

/// Any phase: per η node, a Gauss–Legendre x-box around the centre of the
/// gaussian part of the integrand.
fn probe_grid(spec: &KernelSpec, probe: &ExtractionSpec, c: &ProbeConstant, lambda: f64) -> Result<Complex64> {
    let n = spec.dim();
    let q = &spec.quadrature;
    let y0 = probe.y0();
    let eta0 = probe.eta0();
    let p0 = spec.map().point(&y0, &eta0)?;
    let s2 = probe.sigma * probe.sigma;
    let decay = if spec.phase.kind() == PhaseKind::Gaussian { 1.0 } else { 0.0 };
    let lam_r = lambda * eta0.norm();
    let a_ball = 1.0 / s2 + decay * (lam_r + q.ball_sigmas * lam_r.sqrt());
    let radius = q.ball_sigmas * a_ball.sqrt() * inverse_scale(&p0.jac.xi_eta);
    let center: Vec<f64> = eta0.iter().map(|v| v * lambda).collect();
    let nodes = ball_rule(&center, radius, q.radial, q.angular);
    let h_mid = q.ball_sigmas / (1.0 / s2 + decay * lam_r).sqrt();
    let widest = spatial_nodes(q.spatial, radius * p0.jac.xi_eta.norm() * h_mid);
    q.check(nodes.len() as u64 * (widest as u64).pow(n as u32), "probe integral")?;
    let xi0 = dvec(&c.xi0);
    let x0 = dvec(&c.x0);
    let mut rules: HashMap<usize, Vec<(Vec<f64>, f64)>> = HashMap::new();
    let mut acc = Complex64::new(0.0, 0.0);
    for (eta, w) in nodes {
        let r = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let low = spec.cutoff.low(r);
        if low == 0.0 {
            continue;
        }
        let p = spec.map().point(&y0, &dvec(&eta))?;
        let a = 1.0 / s2 + decay * r;
        let centre: Vec<f64> = (0..n).map(|k| (decay * r * p.x[k] + x0[k] / s2) / a).collect();
        let h = q.ball_sigmas / a.sqrt();
        let freq = (0..n).map(|k| (p.xi[k] - lambda * xi0[k]).powi(2)).sum::<f64>().sqrt();
        let per_dim = spatial_nodes(q.spatial, freq * h);
        let mut inner = Complex64::new(0.0, 0.0);
        let rule = rules.entry(per_dim).or_insert_with(|| gl_box(&vec![0.0; n], 1.0, per_dim));
        for (t, wt) in rule.iter() {
            let x: Vec<f64> = (0..n).map(|k| centre[k] + h * t[k]).collect();
            let wx = wt * h.powi(n as i32);
            let xv = dvec(&x);
            let rho = (-(&xv - &x0).norm_squared() / (2.0 * s2)).exp();
            inner += spec.integrand(&xv, &p)? * (-I * (lambda * xv.dot(&xi0))).exp() * (rho * wx);
        }
        acc += inner * (low * w);
    }
    Ok(acc / (2.0 * PI).powi(n as i32))
}

/// Gauss–Legendre nodes per axis for a box of half-width `h` carrying the
/// oscillation `e^{ikx}` with `kh = phase_span`.
pub(crate) fn spatial_nodes(base: usize, phase_span: f64) -> usize {
    let n = base.max((0.7 * phase_span).ceil() as usize + base / 2);
    // round up so that the rule cache stays small
    n.next_multiple_of(8)
}

/// The test function `f = ρ e^{iλx·ξ₀}` of a probe.
#[derive(Debug, Clone)]
pub(crate) struct FieldSource {
    pub sigma: f64,
    pub x0: Vec<f64>,
    /// `λ ξ₀`.
    pub freq: Vec<f64>,
}

impl FieldSource {
    pub fn new(sigma: f64, x0: &[f64], xi0: &[f64], lambda: f64) -> Self {
        FieldSource { sigma, x0: x0.to_vec(), freq: xi0.iter().map(|v| v * lambda).collect() }
    }
}

/// `Σ a_j e^{i z·k_j}`.
#[derive(Debug, Clone, Default)]
pub(crate) struct PlaneWaves {
    pub k: Vec<Vec<f64>>,
    pub a: Vec<Complex64>,
}

impl PlaneWaves {
    pub fn eval(&self, z: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, a) in self.k.iter().zip(&self.a) {
            let dot: f64 = k.iter().zip(z).map(|(u, v)| u * v).sum();
            acc += a * Complex64::from_polar(1.0, dot);
        }
        acc
    }

    /// Largest `|k − centre|`.
    pub fn spread(&self, centre: &[f64]) -> f64 {
        self.k
            .iter()
            .map(|k| k.iter().zip(centre).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Checks `x⋆(y + a, η) = x⋆(y, η) + a`, `ξ⋆(y + a, η) = ξ⋆(y, η)` and that
/// the amplitude does not depend on `y`.
pub fn translation_invariant(spec: &KernelSpec) -> bool {
    let n = spec.dim();
    let map = spec.map();
    let pts: [(f64, f64, f64); 3] = [(0.3, 0.8, -0.4), (-1.1, 0.2, 0.9), (0.7, -0.6, 1.7)];
    pts.iter().all(|&(a, b, c)| {
        let y = DVector::from_fn(n, |k, _| if k == 0 { a } else { b });
        let shift = DVector::from_element(n, c);
        let eta = DVector::from_fn(n, |k, _| if k == 0 { 1.0 + a.abs() } else { b - 0.2 });
        match (map.eval(&y, &eta), map.eval(&(&y + &shift), &eta)) {
            (Ok((x1, xi1)), Ok((x2, xi2))) => {
                (x2 - x1 - &shift).amax() < 1e-12
                    && (xi2 - xi1).amax() < 1e-12
                    && (spec.amplitude.eval(&y, &eta) - spec.amplitude.eval(&(&y + &shift), &eta)).norm() < 1e-12
            }
            _ => false,
        }
    })
}

/// For a translation-invariant real-phase kernel, `(V f)(z)` (or `(Vᵀ f̄)(z)`
/// when `transpose`) as a plane-wave sum: the x-integral is `window_ft`.
pub(crate) fn apply_ti(spec: &KernelSpec, f: &FieldSource, transpose: bool) -> Result<PlaneWaves> {
    if !spec.is_real() || !translation_invariant(spec) {
        return Err(Error::CompositionUndefined(
            "closed-form application needs a translation-invariant map, a real phase and a y-independent amplitude".into(),
        ));
    }
    let n = spec.dim();
    let q = &spec.quadrature;
    let map = spec.map();
    let zero = DVector::zeros(n);
    // input covector: h(η_c) = λξ₀ for V, and the preimage of λξ₀ for Vᵀ
    let center: Vec<f64> = if transpose {
        let (_, zeta) = map.inverse()?.eval(&dvec(&f.x0), &dvec(&f.freq))?;
        zeta.iter().copied().collect()
    } else {
        f.freq.clone()
    };
    let pc = map.point(&zero, &dvec(&center))?;
    let radius = q.ball_sigmas / f.sigma * inverse_scale(&pc.jac.xi_eta);
    let nodes = ball_rule(&center, radius, q.radial, q.angular);
    q.check(nodes.len() as u64, "kernel application")?;
    let mut out = PlaneWaves::default();
    for (eta, w) in nodes {
        let r = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let low = spec.cutoff.low(r);
        if low == 0.0 {
            continue;
        }
        let p = map.point(&zero, &dvec(&eta))?;
        let det = p.jac.xi_eta.determinant().abs();
        let h: Vec<f64> = p.xi.iter().copied().collect();
        let gh = p.x.dot(&p.xi);
        let amp = spec.amplitude.eval(&zero, &p.eta) * det.sqrt() * low * w / (2.0 * PI).powi(n as i32);
        if transpose {
            let q: Vec<f64> = (0..n).map(|k| h[k] - f.freq[k]).collect();
            out.a.push(amp * (-I * gh).exp() * window_ft(&f.x0, f.sigma, &q));
            out.k.push(h.iter().map(|v| -v).collect());
        } else {
            let q: Vec<f64> = (0..n).map(|k| f.freq[k] - h[k]).collect();
            out.a.push(amp * (-I * gh).exp() * window_ft(&f.x0, f.sigma, &q));
            out.k.push(h);
        }
    }
    Ok(out)
}

/// `(V f)(z)` for a real-phase kernel with a general map, accurate for
/// `|z − x⋆| ≤ reach`. The η-integral is rewritten over the output covector
/// `ξ = ξ⋆(x, η)`, so every ξ node is one plane wave with coefficient
/// `∫ f(x) e^{−i x⋆·ξ} p |det ξ_η|^{-1/2} dx`. Since `∂_x(x⋆·ξ) = η`, the x-phase
/// turns at `|λξ₀ − η(x, ξ)|` only.
pub(crate) fn apply_grid(spec: &KernelSpec, f: &FieldSource, reach: f64) -> Result<PlaneWaves> {
    if !spec.is_real() {
        return Err(Error::CompositionUndefined("grid application needs a real phase".into()));
    }
    let n = spec.dim();
    let q = &spec.quadrature;
    let map = spec.map();
    let x0 = dvec(&f.x0);
    let freq = dvec(&f.freq);
    let h = q.ball_sigmas * f.sigma;
    let eta_radius = q.ball_sigmas / f.sigma;
    // ξ-support: images of the η-ball over the window
    let mut xi_radius: f64 = 0.0;
    let p0 = map.point(&x0, &freq)?;
    let centre: Vec<f64> = p0.xi.iter().copied().collect();
    for t in [-1.0, -0.5, 0.5, 1.0] {
        let xt = x0.map(|v| v + t * h);
        let pt = map.point(&xt, &freq)?;
        let shift = (&pt.xi - &p0.xi).norm();
        xi_radius = xi_radius.max(shift + eta_radius * pt.jac.xi_eta.norm());
    }
    xi_radius = xi_radius.max(eta_radius * p0.jac.xi_eta.norm());
    let radial = spatial_nodes(q.spatial / 2, xi_radius * reach);
    let xis = ball_rule(&centre, xi_radius, radial, q.angular);
    let mut out = PlaneWaves::default();
    let mut guess = freq.clone();
    let mut evaluations = 0u64;
    let mut rules: HashMap<usize, Vec<(Vec<f64>, f64)>> = HashMap::new();
    for (xi, wxi) in &xis {
        let xiv = dvec(xi);
        // the x-rate is |λξ₀ − η(x, ξ)|, sampled at the box ends
        let mut rate: f64 = 1.0 / f.sigma;
        let mut solved = Vec::new();
        for t in [-1.0, 0.0, 1.0] {
            let xt = x0.map(|v| v + t * h);
            match compose::solve_xi_hat(map, &xt, &xiv, &guess) {
                Ok((eta, _)) => {
                    rate = rate.max((&eta - &freq).norm());
                    solved.push(eta);
                }
                Err(_) => rate = rate.max(xi_radius),
            }
        }
        if let Some(mid) = solved.get(solved.len() / 2) {
            guess = mid.clone();
        }
        let per_dim = spatial_nodes(q.spatial, rate * h);
        let rule = rules.entry(per_dim).or_insert_with(|| gl_box(&vec![0.0; n], 1.0, per_dim));
        evaluations += rule.len() as u64;
        q.check(evaluations, "kernel application")?;
        let mut coeff = Complex64::new(0.0, 0.0);
        let mut warm = guess.clone();
        for (t, wt) in rule.iter() {
            let x: Vec<f64> = (0..n).map(|k| f.x0[k] + h * t[k]).collect();
            let xv = dvec(&x);
            let Ok((eta, _)) = compose::solve_xi_hat(map, &xv, &xiv, &warm) else {
                continue;
            };
            warm = eta.clone();
            let low = spec.cutoff.low(eta.norm());
            if low == 0.0 {
                continue;
            }
            let p = map.point(&xv, &eta)?;
            let det = p.jac.xi_eta.determinant().abs();
            if det < 1e-12 {
                return Err(Error::ChartDegenerate { at: eta.norm() });
            }
            let rho = (-(&xv - &x0).norm_squared() / (2.0 * f.sigma * f.sigma)).exp();
            let phase = xv.dot(&freq) - p.x.dot(&xiv);
            coeff += spec.amplitude.eval(&xv, &eta) * (I * phase).exp() * (rho * low * wt * h.powi(n as i32) / det.sqrt());
        }
        out.a.push(coeff * *wxi / (2.0 * PI).powi(n as i32));
        out.k.push(xi.clone());
    }
    Ok(out)
}

/// `|extract(real) − extract(gaussian)|` for two specs of the same operator.
pub fn phase_independence_residual(spec_real: &KernelSpec, spec_gaussian: &KernelSpec, probe: &ExtractionSpec) -> Result<PhaseIndependence> {
    let a = extract_symbol(spec_real, probe)?;
    let b = extract_symbol(spec_gaussian, probe)?;
    Ok(PhaseIndependence { residual: (a.value - b.value).norm(), combined_error: a.error + b.error, real: a, gaussian: b })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseIndependence {
    pub residual: f64,
    pub combined_error: f64,
    pub real: Extraction,
    pub gaussian: Extraction,
}

/// Writes a complex grid as `FIOK`, rank (u32), dims (u64 each), dtype tag
/// `c128`, then row-major little-endian `(re, im)` pairs.
pub fn dump_kernel_grid<W: Write>(out: &mut W, dims: &[usize], values: &[Complex64]) -> std::io::Result<()> {
    let total: usize = dims.iter().product();
    if total != values.len() {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "grid size does not match dims"));
    }
    out.write_all(b"FIOK")?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        out.write_all(&(*d as u64).to_le_bytes())?;
    }
    out.write_all(b"c128")?;
    for v in values {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}
