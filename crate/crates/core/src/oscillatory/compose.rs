use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{
    apply_grid, apply_ti, ball_rule, spatial_nodes, dvec, finish_extraction, inverse_scale, translation_invariant, trapezoid_box,
    Extraction, ExtractionSpec, FieldSource, KernelForm, KernelSpec, PlaneWaves, ProbeConstant, I,
};
use crate::canonical::{compose_maps, SharedMap};
use crate::error::{Error, Result};
use crate::inertia::{inertia, symmetrize, Inertia};
use crate::phase::PhaseKind;
use crate::symbols::PrincipalSymbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    /// `V₂*V₁`, associated with `Φ₂⁻¹∘Φ₁`.
    Star,
    /// `V₂V₁`, associated with `Φ₂∘Φ₁`.
    Plain,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompositionReport {
    pub mode: CompositionMode,
    pub extraction: Extraction,
    /// `|s₁|` at `ϑ` and `|s₂|` at the point where the composition evaluates it.
    pub symbol_moduli: (f64, f64),
    /// `| |extracted| − |s₁||s₂| |`.
    pub modulus_defect: f64,
    pub z_nodes: usize,
    /// Largest boundary value of the z-integrand relative to its maximum.
    pub edge_ratio: f64,
}

/// Evaluator of `𝒱₁(z, y₀)` restricted to frequencies near `λζ₀`, optionally
/// with a ψDO applied in `z`.
pub(crate) type PsiFn<'a> = &'a (dyn Fn(&[f64], &[f64]) -> Complex64 + Sync + Send);

enum V1Field<'a> {
    Waves(PlaneWaves),
    Psi(PlaneWaves, PsiFn<'a>),
    Direct { spec: KernelSpec, points: Vec<(crate::canonical::MapPoint, f64)> },
}

impl V1Field<'_> {
    fn eval(&self, z: &[f64]) -> Result<Complex64> {
        match self {
            V1Field::Waves(w) => Ok(w.eval(z)),
            V1Field::Psi(w, a) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, amp) in w.k.iter().zip(&w.a) {
                    let dot: f64 = k.iter().zip(z).map(|(u, v)| u * v).sum();
                    acc += amp * a(z, k) * Complex64::from_polar(1.0, dot);
                }
                Ok(acc)
            }
            V1Field::Direct { spec, points } => {
                let zv = dvec(z);
                let mut acc = Complex64::new(0.0, 0.0);
                for (p, w) in points {
                    acc += spec.integrand(&zv, p)? * *w;
                }
                Ok(acc)
            }
        }
    }
}

fn v1_field<'a>(
    spec: &KernelSpec,
    y0: &DVector<f64>,
    center: &[f64],
    radius: f64,
    reach: f64,
    psi: Option<PsiFn<'a>>,
) -> Result<V1Field<'a>> {
    let n = spec.dim();
    let q = &spec.quadrature;
    // the η-phase (z − x⋆)·ξ⋆ turns at ‖ξ_η‖ reach
    let scale = spec.map().point(y0, &dvec(center))?.jac.xi_eta.norm();
    let radial = if n == 1 { q.radial.max(spatial_nodes(q.radial / 4, radius * scale * reach)) } else { q.radial };
    let nodes = ball_rule(center, radius, radial, q.angular);
    let norm = (2.0 * PI).powi(n as i32);
    if spec.phase.kind() == PhaseKind::RealChart {
        let mut w = PlaneWaves::default();
        for (eta, wt) in nodes {
            let r = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
            let low = spec.cutoff.low(r);
            if low == 0.0 {
                continue;
            }
            let p = spec.map().point(y0, &dvec(&eta))?;
            let det = p.jac.xi_eta.determinant().abs();
            if det < 1e-12 {
                return Err(Error::ChartDegenerate { at: r });
            }
            let amp = spec.amplitude.eval(y0, &p.eta) * det.sqrt() * low * wt / norm;
            w.a.push(amp * (-I * p.x.dot(&p.xi)).exp());
            w.k.push(p.xi.iter().copied().collect());
        }
        return Ok(match psi {
            Some(a) => V1Field::Psi(w, a),
            None => V1Field::Waves(w),
        });
    }
    if psi.is_some() {
        return Err(Error::CompositionUndefined("a ψDO factor needs a real phase for V1".into()));
    }
    let mut points = Vec::with_capacity(nodes.len());
    for (eta, wt) in nodes {
        let r = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let low = spec.cutoff.low(r);
        if low == 0.0 {
            continue;
        }
        points.push((spec.map().point(y0, &dvec(&eta))?, low * wt / norm));
    }
    Ok(V1Field::Direct { spec: spec.clone(), points })
}

/// Shared machinery of [`compose_numeric`] and the Egorov oracle:
/// `I(λ) = Σ_z w_z 𝒱₁(z, y₀) G(z)` with `G = conj(V₂ f)` (star) or `V₂ᵀ f̄`
/// (plain), `f = ρ e^{iλx·ξ₀}` at the probe of the composed map.
pub(crate) struct Pairing {
    pub raw: Vec<(f64, Complex64)>,
    pub constant: ProbeConstant,
    pub z_nodes: usize,
    pub edge_ratio: f64,
}

pub(crate) fn pair_kernels(
    spec1: &KernelSpec,
    spec2: &KernelSpec,
    mode: CompositionMode,
    composed: &SharedMap,
    probe: &ExtractionSpec,
    psi: Option<PsiFn<'_>>,
) -> Result<Pairing> {
    let n = spec1.dim();
    if spec2.dim() != n || n > 2 {
        return Err(Error::Dimension("compositions need equal dimensions n <= 2".into()));
    }
    if spec1.form != KernelForm::Direct || spec2.form != KernelForm::Direct {
        return Err(Error::CompositionUndefined("compose the underlying kernels, not adjoint forms".into()));
    }
    probe.check(n)?;
    let y0 = probe.y0();
    let eta0 = probe.eta0();
    let constant = ProbeConstant::at(composed.as_ref(), &y0, &eta0)?;
    let p1 = spec1.map().point(&y0, &eta0)?;
    let z0: Vec<f64> = p1.x.iter().copied().collect();
    let ti = translation_invariant(spec2);
    if mode == CompositionMode::Plain && !ti {
        return Err(Error::CompositionUndefined("V2V1 needs a translation-invariant V2".into()));
    }
    let q1 = &spec1.quadrature;
    let mut raw = Vec::new();
    let mut z_nodes = 0;
    let mut edge_ratio: f64 = 0.0;
    for &lambda in &probe.lambdas {
        let f = FieldSource::new(probe.sigma, &constant.x0, &constant.xi0, lambda);
        let stretch = p1.jac.x_y.norm().max(1.0);
        let half = 1.5 * q1.ball_sigmas * probe.sigma * stretch;
        let g = match (mode, ti) {
            (CompositionMode::Star, true) => apply_ti(spec2, &f, false)?,
            (CompositionMode::Star, false) => {
                let (x2, _) = spec2.map().eval(&dvec(&f.x0), &dvec(&f.freq))?;
                let offset = (x2 - dvec(&z0)).norm();
                apply_grid(spec2, &f, half * (n as f64).sqrt() + offset)?
            }
            (CompositionMode::Plain, _) => apply_ti(spec2, &f, true)?,
        };
        let carrier: Vec<f64> = p1.xi.iter().map(|v| v * lambda).collect();
        let g_spread = g.spread(&match mode {
            CompositionMode::Star => carrier.clone(),
            CompositionMode::Plain => carrier.iter().map(|v| -v).collect(),
        });
        // V1 frequencies must cover the spectrum of G; a gaussian phase
        // broadens each plane wave by about sqrt(λ)
        let extra = if spec1.phase.kind() == PhaseKind::Gaussian {
            q1.ball_sigmas * (lambda * eta0.norm()).sqrt()
        } else {
            0.0
        };
        let k1 = 1.5 * g_spread + extra;
        let radius1 = k1 * inverse_scale(&p1.jac.xi_eta);
        let center1: Vec<f64> = eta0.iter().map(|v| v * lambda).collect();
        let v1 = v1_field(spec1, &y0, &center1, radius1, half * (n as f64).sqrt(), psi)?;
        let v1_spread = match &v1 {
            V1Field::Waves(w) | V1Field::Psi(w, _) => w.spread(&carrier),
            V1Field::Direct { .. } => k1 + extra,
        };
        // the carriers cancel in the product; trapezoid is exact below 2π/Δz
        let band = g_spread + v1_spread;
        let dz = 2.0 * PI / (1.25 * band);
        let grid = trapezoid_box(&z0, half, dz);
        q1.check((grid.len() * (g.k.len() + 1024)) as u64, "z-grid pairing")?;
        z_nodes = grid.len();
        let conj = mode == CompositionMode::Star;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut peak: f64 = 0.0;
        let mut edge: f64 = 0.0;
        for (z, w) in &grid {
            let gz = if conj { g.eval(z).conj() } else { g.eval(z) };
            let term = v1.eval(z)? * gz;
            let m = term.norm();
            peak = peak.max(m);
            if z.iter().zip(&z0).any(|(a, b)| ((a - b).abs() - half).abs() < 1e-9 * half) {
                edge = edge.max(m);
            }
            acc += term * *w;
        }
        edge_ratio = edge_ratio.max(if peak > 0.0 { edge / peak } else { 0.0 });
        raw.push((lambda, acc));
    }
    Ok(Pairing { raw, constant, z_nodes, edge_ratio })
}

/// Symbol of `V₂*V₁` or `V₂V₁` from the kernel composition, by the λ-sweep.
///
/// `V₂` must have a real phase; star compositions accept a general `V₂` at
/// `n = 1`, otherwise `V₂` must be translation-invariant.
pub fn compose_numeric(
    spec1: &KernelSpec,
    spec2: &KernelSpec,
    mode: CompositionMode,
    probe: &ExtractionSpec,
) -> Result<CompositionReport> {
    let composed = match mode {
        CompositionMode::Star => compose_maps(spec1.map().clone(), spec2.map().inverse()?)?,
        CompositionMode::Plain => compose_maps(spec1.map().clone(), spec2.map().clone())?,
    };
    let pr = pair_kernels(spec1, spec2, mode, &composed, probe, None)?;
    let ext = finish_extraction(&pr.raw, pr.constant.clone(), spec1.order + spec2.order, probe.confidence, match mode {
        CompositionMode::Star => "z-grid star",
        CompositionMode::Plain => "z-grid plain",
    });
    let y0 = probe.y0();
    let eta0 = probe.eta0();
    let s1 = PrincipalSymbol::new(spec1.order, spec1.amplitude.clone(), spec1.map().clone()).with_phase(spec1.phase.clone());
    let s2 = PrincipalSymbol::new(spec2.order, spec2.amplitude.clone(), spec2.map().clone()).with_phase(spec2.phase.clone());
    let m1 = s1.singular_value(&y0, &eta0)?.norm();
    let (at, at_eta) = match mode {
        CompositionMode::Star => (dvec(&pr.constant.x0), dvec(&pr.constant.xi0)),
        CompositionMode::Plain => spec1.map().eval(&y0, &eta0)?,
    };
    let m2 = s2.singular_value(&at, &at_eta)?.norm();
    Ok(CompositionReport {
        mode,
        modulus_defect: (ext.value.norm() - m1 * m2).abs(),
        symbol_moduli: (m1, m2),
        extraction: ext,
        z_nodes: pr.z_nodes,
        edge_ratio: pr.edge_ratio,
    })
}

/// `ξ̂(x; y, η)`: the solution of `ζ⁽²⁾(x, ξ) = ζ⁽¹⁾(y, η)` by damped Newton
/// iteration from `guess`. Returns the solution and the iteration count.
pub fn solve_xi_hat(phi2: &SharedMap, x: &DVector<f64>, target: &DVector<f64>, guess: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let scale = 1.0 + target.norm();
    let resid = |xi: &DVector<f64>| -> Result<DVector<f64>> { Ok(phi2.eval(x, xi)?.1 - target) };
    let mut xi = guess.clone();
    let mut r = resid(&xi)?;
    for it in 0..60 {
        if r.norm() <= 1e-14 * scale {
            return Ok((xi, it));
        }
        let j = phi2.jacobian(x, &xi)?.xi_eta;
        let step = j.lu().solve(&r).ok_or_else(|| Error::NoConvergence("singular zeta_xi in the xi-hat solve".into()))?;
        let mut t = 1.0;
        loop {
            let cand = &xi - &step * t;
            let rc = resid(&cand)?;
            if rc.norm() < r.norm() || t < 1e-6 {
                xi = cand;
                r = rc;
                break;
            }
            t *= 0.5;
        }
    }
    if r.norm() <= 1e-12 * scale {
        return Ok((xi, 60));
    }
    Err(Error::NoConvergence(format!("xi-hat residual {:.3e} after 60 steps", r.norm())))
}

/// Residuals of the identities satisfied by the composed phase
/// `φ(x; y, η) = (z⁽²⁾(x, ξ̂) − z⁽¹⁾(y, η))·ζ⁽¹⁾(y, η)` of `V₂*V₁`.
#[derive(Debug, Clone, Serialize)]
pub struct ComposedPhaseReport {
    /// `|ξ̂(x⋆) − ξ⋆|`.
    pub xi_hat_at_star: f64,
    /// `|φ(x⋆)|`.
    pub phi_zero: f64,
    /// `|φ_x(x⋆) − ξ⋆|`.
    pub phi_x: f64,
    /// `‖φ_xη − (ζ⁽²⁾_ξ)⁻¹ζ⁽¹⁾_η‖` at `x⋆`.
    pub phi_x_eta: f64,
    /// `‖φ_ηη − (ζ⁽¹⁾_η)ᵀ(z⁽²⁾_ξ(ζ⁽²⁾_ξ)⁻¹ − z⁽¹⁾_η(ζ⁽¹⁾_η)⁻¹)ζ⁽¹⁾_η‖` at `x⋆`.
    pub phi_eta_eta: f64,
    pub phi_eta_eta_asymmetry: f64,
    pub newton_iterations: usize,
}

impl ComposedPhaseReport {
    pub fn max_residual(&self) -> f64 {
        [self.xi_hat_at_star, self.phi_zero, self.phi_x, self.phi_x_eta, self.phi_eta_eta, self.phi_eta_eta_asymmetry]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Fourth-order central difference of `f` along unit vector `k` of `at`.
fn d5<F: Fn(&DVector<f64>) -> Result<f64>>(f: &F, at: &DVector<f64>, k: usize, h: f64) -> Result<f64> {
    let shift = |s: f64| {
        let mut v = at.clone();
        v[k] += s * h;
        v
    };
    Ok((f(&shift(-2.0))? - 8.0 * f(&shift(-1.0))? + 8.0 * f(&shift(1.0))? - f(&shift(2.0))?) / (12.0 * h))
}

/// Builds the composed phase of `V₂*V₁` at `(y, η)` numerically and checks its
/// value, first derivatives and second-order blocks at `x⋆`.
pub fn composed_phase_check(phi1: &SharedMap, phi2: &SharedMap, y: &DVector<f64>, eta: &DVector<f64>) -> Result<ComposedPhaseReport> {
    let n = y.len();
    let phi = compose_maps(phi1.clone(), phi2.inverse()?)?;
    let (x_star, xi_star) = phi.eval(y, eta)?;
    let p1 = phi1.point(y, eta)?;
    let (xi_hat, iters) = solve_xi_hat(phi2, &x_star, &p1.xi, &xi_star)?;
    let r = eta.norm();
    // ξ̂ is homogeneous of degree 1 in η; the Newton guess is scaled along
    let unit_guess = &xi_star / r;
    let value = |x: &DVector<f64>, e: &DVector<f64>| -> Result<f64> {
        let (_, zeta1) = phi1.eval(y, e)?;
        let guess = &unit_guess * e.norm();
        let (xi, _) = solve_xi_hat(phi2, x, &zeta1, &guess)?;
        let (z2, _) = phi2.eval(x, &xi)?;
        let (z1, _) = phi1.eval(y, e)?;
        Ok((z2 - z1).dot(&zeta1))
    };
    let hx = 1e-3 * (1.0 + x_star.norm());
    let he = 1e-3 * r;
    let grad_x = |x: &DVector<f64>, e: &DVector<f64>| -> Result<DVector<f64>> {
        let mut g = DVector::zeros(n);
        for k in 0..n {
            g[k] = d5(&|xx: &DVector<f64>| value(xx, e), x, k, hx)?;
        }
        Ok(g)
    };
    let grad_e = |x: &DVector<f64>, e: &DVector<f64>| -> Result<DVector<f64>> {
        let mut g = DVector::zeros(n);
        for k in 0..n {
            g[k] = d5(&|ee: &DVector<f64>| value(x, ee), e, k, he)?;
        }
        Ok(g)
    };
    let phi_zero = value(&x_star, eta)?.abs();
    let gx = grad_x(&x_star, eta)?;
    let mut phi_x_eta = DMatrix::zeros(n, n);
    let mut phi_eta_eta = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            phi_x_eta[(i, j)] = d5(&|ee: &DVector<f64>| Ok(grad_x(&x_star, ee)?[i]), eta, j, he)?;
            phi_eta_eta[(i, j)] = d5(&|ee: &DVector<f64>| Ok(grad_e(&x_star, ee)?[i]), eta, j, he)?;
        }
    }
    let p2 = phi2.point(&x_star, &xi_hat)?;
    let z2xi_inv = p2.jac.xi_eta.clone().try_inverse().ok_or_else(|| Error::ChartDegenerate { at: 0.0 })?;
    let z1eta_inv = p1.jac.xi_eta.clone().try_inverse().ok_or_else(|| Error::ChartDegenerate { at: 0.0 })?;
    let want_xe = &z2xi_inv * &p1.jac.xi_eta;
    let mid = &p2.jac.x_eta * &z2xi_inv - &p1.jac.x_eta * &z1eta_inv;
    let want_ee = p1.jac.xi_eta.transpose() * mid * &p1.jac.xi_eta;
    Ok(ComposedPhaseReport {
        xi_hat_at_star: (&xi_hat - &xi_star).norm(),
        phi_zero,
        phi_x: (gx - &xi_star).norm(),
        phi_x_eta: (&phi_x_eta - want_xe).amax(),
        phi_eta_eta: (&phi_eta_eta - want_ee).amax(),
        phi_eta_eta_asymmetry: (&phi_eta_eta - phi_eta_eta.transpose()).amax(),
        newton_iterations: iters,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianReport {
    pub hessian: Vec<Vec<f64>>,
    pub inertia: Inertia,
}

/// The `(z, ξ)` Hessian `[[0, ζ⁽²⁾_ξ], [(ζ⁽²⁾_ξ)ᵀ, ψ_ξξ]]` of the composition
/// phase at its stationary point, with `ψ_ξξ = (z⁽²⁾_ξ)ᵀ ζ⁽²⁾_ξ`, and its
/// inertia.
pub fn composition_hessian(phi1: &SharedMap, phi2: &SharedMap, y: &DVector<f64>, eta: &DVector<f64>) -> Result<HessianReport> {
    let n = y.len();
    let phi = compose_maps(phi1.clone(), phi2.inverse()?)?;
    let (x, xi) = phi.eval(y, eta)?;
    let p2 = phi2.point(&x, &xi)?;
    let b = &p2.jac.xi_eta;
    let d = symmetrize(&(p2.jac.x_eta.transpose() * b));
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, n), (n, n)).copy_from(b);
    h.view_mut((n, 0), (n, n)).copy_from(&b.transpose());
    h.view_mut((n, n), (n, n)).copy_from(&d);
    let tol = 1e-9 * (1.0 + h.norm());
    let inertia = inertia(&h, tol)?;
    let rows = (0..2 * n).map(|i| (0..2 * n).map(|j| h[(i, j)]).collect()).collect();
    Ok(HessianReport { hessian: rows, inertia })
}
