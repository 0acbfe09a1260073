//! Singular and classical principal symbols of FIOs and their calculus:
//! adjoints, `V₂*V₁`, `V₂V₁`, Egorov conjugation and the composition index.

mod conic;

pub use conic::{star_support, ConicBox};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::canonical::{image_of_vertical, Identity, SharedMap};
use crate::error::{Error, Result};
use crate::expr::Formula;
use crate::lagrangian::{modified_kashiwara, KashiwaraTriple};
use crate::maslov::{branch_state, theta_s, PathSpec, DEFAULT_TOL};
use crate::phase::{complexify, det_c, GaussianPhase, PhaseFunction, RealChartPhase, SharedPhase};

/// `iᶿ = exp(iπθ/2)`.
pub fn ipow(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, FRAC_PI_2 * theta)
}

pub fn ipow_int(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

pub type AmplitudeFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> Complex64 + Send + Sync;

/// Leading homogeneous amplitude term `p_m(y, η)`.
#[derive(Clone)]
pub struct Amplitude {
    pub label: String,
    f: Arc<AmplitudeFn>,
}

impl fmt::Debug for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Amplitude({})", self.label)
    }
}

/// Variable names for amplitude expressions: `y`, `h` (= η̂) and `r` (= |η|)
/// at n = 1, `y1.., h1.., r` otherwise. `eta`/`eta1..` are accepted too.
fn amplitude_vars(n: usize) -> Vec<String> {
    let mut v = Vec::new();
    if n == 1 {
        v.extend(["y", "h", "eta"].map(String::from));
    } else {
        for p in ["y", "h", "eta"] {
            v.extend((1..=n).map(|k| format!("{p}{k}")));
        }
    }
    v.push("r".into());
    v
}

impl Amplitude {
    pub fn new(label: &str, f: Arc<AmplitudeFn>) -> Self {
        Amplitude { label: label.into(), f }
    }

    pub fn constant(c: Complex64) -> Self {
        Amplitude::new(&format!("{c}"), Arc::new(move |_, _| c))
    }

    /// Parses an expression in `(y, η̂, |η|)`; `i` is the imaginary unit.
    pub fn parse(source: &str, n: usize) -> Result<Self> {
        let names = amplitude_vars(n);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let formula = Formula::parse(source, &refs)?;
        let f = move |y: &DVector<f64>, eta: &DVector<f64>| {
            let r = eta.norm();
            let mut vals: Vec<f64> = y.iter().copied().collect();
            vals.extend(eta.iter().map(|e| e / r));
            vals.extend(eta.iter().copied());
            vals.push(r);
            formula.eval_complex(&vals)
        };
        Ok(Amplitude::new(source, Arc::new(f)))
    }

    pub fn eval(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Complex64 {
        (self.f)(y, eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolView {
    Singular,
    ClassicalBranch { anchor_y: Vec<f64>, anchor_eta: Vec<f64> },
}

/// A principal symbol: order, leading amplitude, the canonical map and the
/// phase function the amplitude refers to.
#[derive(Debug, Clone)]
pub struct PrincipalSymbol {
    pub order: f64,
    pub amplitude: Amplitude,
    pub map: SharedMap,
    pub phase: SharedPhase,
    pub view: SymbolView,
}

impl PrincipalSymbol {
    /// Amplitude given for the real phase in the map's own coordinates.
    pub fn new(order: f64, amplitude: Amplitude, map: SharedMap) -> Self {
        let phase: SharedPhase = Arc::new(RealChartPhase::new(map.clone()));
        PrincipalSymbol { order, amplitude, map, phase, view: SymbolView::Singular }
    }

    /// Reinterprets the amplitude as belonging to another phase of the same map.
    pub fn with_phase(mut self, phase: SharedPhase) -> Self {
        self.phase = phase;
        self
    }

    /// Unit amplitude of order 0.
    pub fn unit(map: SharedMap) -> Self {
        PrincipalSymbol::new(0.0, Amplitude::constant(Complex64::new(1.0, 0.0)), map)
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    /// Largest relative deviation from `p(y, λη) = λᵐ p(y, η)` over the rays.
    pub fn homogeneity_defect(&self, rays: &[(DVector<f64>, DVector<f64>)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (y, eta) in rays {
            let base = self.amplitude.eval(y, eta);
            for lam in [0.5, 2.0, 7.5] {
                let scaled = self.amplitude.eval(y, &(eta * lam));
                let want = base * lam.powf(self.order);
                worst = worst.max((scaled - want).norm() / (1.0 + want.norm()));
            }
        }
        worst
    }

    pub fn check_homogeneous(&self, rays: &[(DVector<f64>, DVector<f64>)], tol: f64) -> Result<()> {
        let d = self.homogeneity_defect(rays);
        if d > tol {
            return Err(Error::Domain(format!(
                "amplitude '{}' is not homogeneous of degree {} (defect {d:.3e})",
                self.amplitude.label, self.order
            )));
        }
        Ok(())
    }

    /// `s_V(y, η) = i^{−Θˢ} p_m(y, η)` with the symbol's phase.
    pub fn singular_value(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Complex64> {
        singular_from_amplitude(&self.amplitude, self.phase.as_ref(), y, eta)
    }

    pub fn with_view(mut self, view: SymbolView) -> Self {
        self.view = view;
        self
    }

    /// Value in the symbol's own view: singular, or the branch anchored at the
    /// stored point (straight path from the anchor).
    pub fn value(&self, y: &DVector<f64>, eta: &DVector<f64>) -> Result<Complex64> {
        match &self.view {
            SymbolView::Singular => self.singular_value(y, eta),
            SymbolView::ClassicalBranch { anchor_y, anchor_eta } => {
                let a = (DVector::from_vec(anchor_y.clone()), DVector::from_vec(anchor_eta.clone()));
                classical_branch(self, &a, &(y.clone(), eta.clone()), None)
            }
        }
    }
}

/// `i^{−Θˢ_φ(y,η)} p_m(y, η)` for a phase of the admissible class.
pub fn singular_from_amplitude(
    p: &Amplitude,
    phase: &dyn PhaseFunction,
    y: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<Complex64> {
    let jet = phase.jet(y, eta)?;
    Ok(ipow(-theta_s(&jet, DEFAULT_TOL)?) * p.eval(y, eta))
}

/// `i^{ΔΘʳ}` with `ΔΘʳ` the continued change of `π⁻¹ arg det φ_xη(x⋆)` along
/// `φ_xx(τ) = (1−τ) φ_xx^from + τ φ_xx^to`, `τ ∈ [0, 1]`.
///
/// Multiplying an amplitude for `from` by this factor gives the amplitude of
/// the same operator for `to`: the classical symbol `i^{−Θʳ}p` is unchanged
/// along the homotopy because `Θ_Φ` is integer-valued and continuous.
pub fn amplitude_transfer_factor(
    from: &dyn PhaseFunction,
    to: &dyn PhaseFunction,
    y: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<Complex64> {
    let ja = from.jet(y, eta)?;
    let jb = to.jet(y, eta)?;
    let det_at = |tau: f64| {
        let xx = &ja.phi_xx * Complex64::new(1.0 - tau, 0.0) + &jb.phi_xx * Complex64::new(tau, 0.0);
        let m = complexify(&ja.xi_eta) - xx * complexify(&ja.x_eta);
        det_c(&m)
    };
    const STEPS: usize = 256;
    let mut prev = det_at(0.0);
    let mut total = 0.0;
    for k in 1..=STEPS {
        let d = det_at(k as f64 / STEPS as f64);
        if d.norm() == 0.0 || prev.norm() == 0.0 {
            return Err(Error::ChartDegenerate { at: k as f64 / STEPS as f64 });
        }
        let inc = (d / prev).arg();
        if inc.abs() >= FRAC_PI_2 {
            return Err(Error::RefinementNeeded { at: k as f64 / STEPS as f64, increment: inc });
        }
        total += inc;
        prev = d;
    }
    Ok(ipow(total / std::f64::consts::PI))
}

const BRANCH_SAMPLES: usize = 16;

/// `σ_{V,ϑ}(q) = i^{−Θ_{Φ,ϑ}(q)} s_V(q)` with the branch that vanishes at the
/// anchor, continued along `path` (default: the straight segment).
pub fn classical_branch(
    s: &PrincipalSymbol,
    anchor: &(DVector<f64>, DVector<f64>),
    query: &(DVector<f64>, DVector<f64>),
    path: Option<&PathSpec>,
) -> Result<Complex64> {
    let sq = s.singular_value(&query.0, &query.1)?;
    if anchor == query {
        return Ok(sq);
    }
    let straight;
    let path = match path {
        Some(p) => p,
        None => {
            straight = PathSpec::new(vec![anchor.clone(), query.clone()], BRANCH_SAMPLES);
            &straight
        }
    };
    let st = branch_state(&GaussianPhase::new(s.map.clone()), path, 0, DEFAULT_TOL)?;
    let theta = *st.theta_phi.last().expect("non-empty path");
    Ok(ipow_int(-theta) * sq)
}

/// Composition index together with the triple it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexReport {
    pub value: i64,
    pub kappa: i64,
    pub r: i64,
}

impl From<KashiwaraTriple> for IndexReport {
    fn from(t: KashiwaraTriple) -> Self {
        IndexReport { value: t.varkappa, kappa: t.kappa, r: t.r }
    }
}

const INDEX_SEED: u64 = 0x6b61_7368;

/// `k(ϑ) = ϰ(dΦ₁(V_ϑ), dΦ₂(V_{Φ(ϑ)}))` at `Φ₁(ϑ)`, where `Φ = Φ₂⁻¹∘Φ₁`.
///
/// Graph forms are taken against a horizontal transversal to both images and
/// the result is cross-checked against `(κ + r)/2` from the Gram signature.
pub fn composition_index(
    phi1: &SharedMap,
    phi2: &SharedMap,
    y: &DVector<f64>,
    eta: &DVector<f64>,
    tol: f64,
) -> Result<IndexReport> {
    if phi1.dim() != phi2.dim() {
        return Err(Error::Dimension("composition of maps of different dimension".into()));
    }
    let (z, zeta) = phi1.eval(y, eta)?;
    let (x, xi) = phi2.inverse()?.eval(&z, &zeta)?;
    let l1 = image_of_vertical(phi1.as_ref(), y, eta)?;
    let mut l2 = image_of_vertical(phi2.as_ref(), &x, &xi)?;
    // both frames sit over Φ₁(ϑ); a numeric inverse lands there only approximately
    l2.base = l1.base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(INDEX_SEED);
    Ok(modified_kashiwara(&l1, &l2, &mut rng, tol)?.into())
}

/// `s_{V₂*V₁}(ϑ) = i^{k(ϑ)} s_{V₁}(ϑ) conj(s_{V₂}(Φ(ϑ)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarComposition {
    pub value: Complex64,
    pub index: i64,
    pub order: f64,
}

pub fn star_composition(
    s1: &PrincipalSymbol,
    s2: &PrincipalSymbol,
    y: &DVector<f64>,
    eta: &DVector<f64>,
    tol: f64,
) -> Result<StarComposition> {
    let k = composition_index(&s1.map, &s2.map, y, eta, tol)?.value;
    let (z, zeta) = s1.map.eval(y, eta)?;
    let (x, xi) = s2.map.inverse()?.eval(&z, &zeta)?;
    let v = ipow_int(k) * s1.singular_value(y, eta)? * s2.singular_value(&x, &xi)?.conj();
    Ok(StarComposition { value: v, index: k, order: s1.order + s2.order })
}

/// Adjoint symbol at `θ` by both candidate routes.
///
/// `with_index` is `V*` computed as `V*·I` through the composition theorem, so it
/// carries `ϰ(V_θ, dΦ(V_{Φ⁻¹θ}))`; `without_index` drops that index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdjointSymbol {
    pub with_index: Complex64,
    pub without_index: Complex64,
    pub index: i64,
    pub order: f64,
}

pub fn adjoint_symbol(s: &PrincipalSymbol, y: &DVector<f64>, eta: &DVector<f64>, tol: f64) -> Result<AdjointSymbol> {
    let id = PrincipalSymbol::unit(Arc::new(Identity { n: s.dim() }));
    let star = star_composition(&id, s, y, eta, tol)?;
    Ok(AdjointSymbol {
        with_index: star.value,
        without_index: star.value * ipow_int(-star.index),
        index: star.index,
        order: s.order,
    })
}

/// Symbol of `V₂V₁` at `ϑ`.
///
/// `uncorrected` uses `k = ϰ(dΦ₁(V_ϑ), dΦ₂⁻¹(V_{Φ(ϑ)}))` alone. Writing
/// `V₂V₁ = (V₂*)*V₁` and expanding `s_{V₂*}` with the composition theorem
/// brings in `k_a = ϰ(V_{Φ(ϑ)}, dΦ₂(V_{Φ₁(ϑ)}))`, and `corrected` uses `k − k_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositionSymbol {
    pub uncorrected: Complex64,
    pub corrected: Complex64,
    pub k: i64,
    pub k_adjoint: i64,
    pub order: f64,
}

pub fn composition_symbol(
    s1: &PrincipalSymbol,
    s2: &PrincipalSymbol,
    y: &DVector<f64>,
    eta: &DVector<f64>,
    tol: f64,
) -> Result<CompositionSymbol> {
    let inv2 = s2.map.inverse()?;
    let k = composition_index(&s1.map, &inv2, y, eta, tol)?.value;
    let (z, zeta) = s1.map.eval(y, eta)?;
    let (x, xi) = s2.map.eval(&z, &zeta)?;
    let id: SharedMap = Arc::new(Identity { n: s1.dim() });
    let k_a = composition_index(&id, &s2.map, &x, &xi, tol)?.value;
    let prod = s1.singular_value(y, eta)? * s2.singular_value(&z, &zeta)?;
    Ok(CompositionSymbol {
        uncorrected: ipow_int(k) * prod,
        corrected: ipow_int(k - k_a) * prod,
        k,
        k_adjoint: k_a,
        order: s1.order + s2.order,
    })
}

pub type PsiSymbolFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> Complex64 + Send + Sync;

/// `σ_B(q) = σ_{V₁,ϑ}(q) a(Φ(q)) conj(σ_{V₂,ϑ}(q))` for `B = V₂* A V₁`.
pub fn egorov_symbol(
    v1: &PrincipalSymbol,
    v2: &PrincipalSymbol,
    a: &PsiSymbolFn,
    anchor: &(DVector<f64>, DVector<f64>),
    query: &(DVector<f64>, DVector<f64>),
) -> Result<Complex64> {
    if v1.map.name() != v2.map.name() {
        return Err(Error::CompositionUndefined(format!(
            "Egorov conjugation needs one canonical map, got {} and {}",
            v1.map.name(),
            v2.map.name()
        )));
    }
    let s1 = classical_branch(v1, anchor, query, None)?;
    let s2 = classical_branch(v2, anchor, query, None)?;
    let (x, xi) = v1.map.eval(&query.0, &query.1)?;
    Ok(s1 * a(&x, &xi) * s2.conj())
}

#[cfg(test)]
mod tests;
