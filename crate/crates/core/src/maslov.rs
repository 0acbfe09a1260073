//! Θˢ, the branch-continued Θʳ, the integer invariant Θ_Φ along paths, the
//! Maslov index of a path and the cocycle numbers between real phases.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::inertia::{det_plus_arg, inertia, ComplexSymMatrix};
use crate::phase::{det_c, PhaseFunction, PhaseJet};

pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_DEPTH: u32 = 12;
const EVENT_TOL: f64 = 1e-6;
const INTEGER_TOL: f64 = 1e-6;

fn rel_rank(m: &DMatrix<f64>, thresh: f64) -> usize {
    m.clone().singular_values().iter().filter(|s| **s > thresh).count()
}

/// `π⁻¹ arg det₊(φ_ηη / i) − rank(x⋆_η)/2`.
pub fn theta_s(jet: &PhaseJet, tol: f64) -> Result<f64> {
    let scale_x = jet.x_eta.norm().max(1.0);
    let rank = rel_rank(&jet.x_eta, tol * scale_x);
    let c = jet.phi_eta_eta.map(|z| z * Complex64::new(0.0, -1.0));
    let c = ComplexSymMatrix::from_complex(&c);
    let arg = det_plus_arg(&c, tol * (1.0 + c.norm())).map_err(|e| match e {
        Error::Domain(m) => Error::InvalidPhase(format!("phi_eta_eta / i has {m}")),
        other => other,
    })?;
    Ok(arg / PI - rank as f64 / 2.0)
}

/// `−κ₊(φ_ηη)`, valid when the phase is real at `x⋆`.
pub fn theta_s_real(jet: &PhaseJet, tol: f64) -> Result<i64> {
    let re = jet.phi_eta_eta.map(|z| z.re);
    Ok(-(inertia(&re, tol * (1.0 + re.norm()))?.kappa_plus as i64))
}

/// A piecewise linear path in `(y, η)` through waypoints, parametrized by
/// `s ∈ [0, number of segments]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSpec {
    pub waypoints: Vec<(Vec<f64>, Vec<f64>)>,
    pub samples_per_segment: usize,
}

impl PathSpec {
    pub fn new(waypoints: Vec<(DVector<f64>, DVector<f64>)>, samples_per_segment: usize) -> Self {
        PathSpec {
            waypoints: waypoints.into_iter().map(|(y, e)| (y.as_slice().to_vec(), e.as_slice().to_vec())).collect(),
            samples_per_segment,
        }
    }

    pub fn segments(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.waypoints.first().map(|w| w.0.len()).unwrap_or(0)
    }

    pub fn check(&self) -> Result<()> {
        if self.waypoints.len() < 2 || self.samples_per_segment == 0 {
            return Err(Error::Config("a path needs two waypoints and at least one sample per segment".into()));
        }
        let n = self.dim();
        if self.waypoints.iter().any(|(y, e)| y.len() != n || e.len() != n) {
            return Err(Error::Dimension("waypoints of differing dimension".into()));
        }
        Ok(())
    }

    pub fn at(&self, s: f64) -> (DVector<f64>, DVector<f64>) {
        let m = self.segments();
        let s = s.clamp(0.0, m as f64);
        let k = (s.floor() as usize).min(m - 1);
        let f = s - k as f64;
        let (y0, e0) = &self.waypoints[k];
        let (y1, e1) = &self.waypoints[k + 1];
        let lerp = |a: &Vec<f64>, b: &Vec<f64>| DVector::from_fn(a.len(), |i, _| a[i] + f * (b[i] - a[i]));
        (lerp(y0, y1), lerp(e0, e1))
    }

    pub fn params(&self) -> Vec<f64> {
        let total = self.segments() * self.samples_per_segment;
        (0..=total).map(|k| k as f64 / self.samples_per_segment as f64).collect()
    }

    /// The same route with twice as many samples.
    pub fn refined(&self) -> PathSpec {
        PathSpec { waypoints: self.waypoints.clone(), samples_per_segment: 2 * self.samples_per_segment }
    }
}

fn wrap(mut d: f64) -> f64 {
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d
}

fn det_phi_x_eta(phase: &dyn PhaseFunction, path: &PathSpec, s: f64, tol: f64) -> Result<Complex64> {
    let (y, eta) = path.at(s);
    let jet = phase.jet(&y, &eta)?;
    let d = det_c(&jet.phi_x_eta);
    let scale = jet.phi_x_eta.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    if d.norm() <= tol * scale.powi(jet.dim() as i32) {
        return Err(Error::ChartDegenerate { at: s });
    }
    Ok(d)
}

/// Argument increment of `det φ_xη` over `[a, b]`, subdividing until every
/// piece moves by less than `π/2`.
fn arg_increment(
    phase: &dyn PhaseFunction,
    path: &PathSpec,
    (a, da): (f64, Complex64),
    (b, db): (f64, Complex64),
    depth: u32,
    tol: f64,
) -> Result<f64> {
    let d = wrap((db / da).arg());
    let real_flip = da.im == 0.0 && db.im == 0.0 && da.re * db.re < 0.0;
    if real_flip {
        // a real determinant can only change sign through zero
        return Err(Error::ChartDegenerate { at: 0.5 * (a + b) });
    }
    if d.abs() < FRAC_PI_2 / 2.0 {
        return Ok(d);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::RefinementNeeded { at: a, increment: d });
    }
    let m = 0.5 * (a + b);
    let dm = det_phi_x_eta(phase, path, m, tol)?;
    Ok(arg_increment(phase, path, (a, da), (m, dm), depth + 1, tol)?
        + arg_increment(phase, path, (m, dm), (b, db), depth + 1, tol)?)
}

/// Continuous branch of `(2π)⁻¹ arg det² φ_xη = π⁻¹ arg det φ_xη` along the
/// path samples, starting at `anchor`.
pub fn theta_r_continued(phase: &dyn PhaseFunction, path: &PathSpec, anchor: f64, tol: f64) -> Result<Vec<f64>> {
    path.check()?;
    let params = path.params();
    let mut dets = Vec::with_capacity(params.len());
    for &s in &params {
        dets.push(det_phi_x_eta(phase, path, s, tol)?);
    }
    let mut out = vec![anchor];
    for k in 1..params.len() {
        let inc = arg_increment(phase, path, (params[k - 1], dets[k - 1]), (params[k], dets[k]), 0, tol)?;
        out.push(out[k - 1] + inc / PI);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankEvent {
    pub at: f64,
    pub rank_before: usize,
    pub rank_at: usize,
    pub rank_after: usize,
}

/// Branch-tracked invariants along a sampled path.
#[derive(Debug, Clone, Serialize)]
pub struct BranchState {
    pub phase: String,
    pub params: Vec<f64>,
    pub theta_r: Vec<f64>,
    pub theta_s: Vec<f64>,
    pub theta_phi: Vec<i64>,
    pub ranks: Vec<usize>,
    pub events: Vec<RankEvent>,
}

impl BranchState {
    /// `−(Θ_Φ(end) − Θ_Φ(start))`.
    pub fn maslov_index(&self) -> i64 {
        -(self.theta_phi.last().copied().unwrap_or(0) - self.theta_phi.first().copied().unwrap_or(0))
    }

    /// Rows `(s, Θʳ, Θˢ, Θ_Φ, rank x⋆_η)`.
    pub fn rows(&self) -> Vec<(f64, f64, f64, i64, usize)> {
        (0..self.params.len())
            .map(|k| (self.params[k], self.theta_r[k], self.theta_s[k], self.theta_phi[k], self.ranks[k]))
            .collect()
    }
}

struct RankProbe<'a> {
    phase: &'a dyn PhaseFunction,
    path: &'a PathSpec,
    thresh: f64,
}

impl RankProbe<'_> {
    fn x_eta_and_frame(&self, s: f64) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        let (y, eta) = self.path.at(s);
        let p = self.phase.map().point(&y, &eta)?;
        Ok((p.jac.x_eta, p.xi, eta))
    }

    /// `det(x⋆_η + ξ̂⋆η̂ᵀ)`: nonzero exactly when `rank x⋆_η = n − 1`.
    fn indicator(&self, s: f64) -> Result<f64> {
        let (xe, xi, eta) = self.x_eta_and_frame(s)?;
        let m = xe + (xi.normalize()) * eta.normalize().transpose();
        Ok(m.determinant())
    }

    fn raw_rank(&self, s: f64, factor: f64) -> Result<usize> {
        Ok(rel_rank(&self.x_eta_and_frame(s)?.0, self.thresh * factor))
    }

    fn bisect<F: Fn(f64) -> Result<bool>>(&self, mut a: f64, mut b: f64, left: F) -> Result<f64> {
        while b - a > EVENT_TOL {
            let m = 0.5 * (a + b);
            if left(m)? {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Tracks Θʳ, Θˢ and Θ_Φ along the path with `Θ_Φ(start) = anchor`.
pub fn branch_state(phase: &dyn PhaseFunction, path: &PathSpec, anchor: i64, tol: f64) -> Result<BranchState> {
    path.check()?;
    let params = path.params();
    let mut jets = Vec::with_capacity(params.len());
    for &s in &params {
        let (y, eta) = path.at(s);
        jets.push(phase.jet(&y, &eta)?);
    }
    let n = path.dim();
    let max_xe = jets.iter().map(|j| j.x_eta.norm()).fold(0.0, f64::max);
    let probe = RankProbe { phase, path, thresh: tol.max(1e-12) * max_xe.max(1e-300) };

    // ranks with a 10x hysteresis band
    let mut ranks: Vec<usize> = Vec::with_capacity(params.len());
    for (k, j) in jets.iter().enumerate() {
        let sv = j.x_eta.clone().singular_values();
        let upper = sv.iter().filter(|v| **v > probe.thresh).count();
        let lower = sv.iter().filter(|v| **v > 10.0 * probe.thresh).count();
        let r = if k == 0 { lower } else { ranks[k - 1].clamp(lower, upper) };
        ranks.push(r);
    }

    let mut events = Vec::new();
    let mut indic = Vec::with_capacity(params.len());
    for &s in &params {
        indic.push(probe.indicator(s)?);
    }
    let ind_scale = indic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for k in 1..params.len() {
        let (a, b) = (params[k - 1], params[k]);
        if ranks[k - 1] != ranks[k] {
            let before = ranks[k - 1];
            let at = probe.bisect(a, b, |m| Ok(probe.raw_rank(m, 3.0)? == before))?;
            events.push(RankEvent { at, rank_before: before, rank_at: before.min(ranks[k]), rank_after: ranks[k] });
        } else if ranks[k] == n - 1 && n > 1 && indic[k - 1] * indic[k] < 0.0 {
            let sign = indic[k - 1].signum();
            let at = probe.bisect(a, b, |m| Ok(probe.indicator(m)?.signum() == sign))?;
            events.push(RankEvent { at, rank_before: ranks[k - 1], rank_at: n - 2, rank_after: ranks[k] });
        }
    }
    let end = *params.last().unwrap();
    for e in &events {
        if e.at < 2.0 * EVENT_TOL || e.at > end - 2.0 * EVENT_TOL {
            return Err(Error::EndpointOnEvent(e.at));
        }
    }
    let generic = n > 1 && ranks.iter().any(|r| *r == n - 1);
    for (s, v) in [(params[0], indic[0]), (end, indic[indic.len() - 1])] {
        if generic && v.abs() < 1e-9 * ind_scale {
            return Err(Error::EndpointOnEvent(s));
        }
    }

    let mut theta_s_v = Vec::with_capacity(params.len());
    for j in &jets {
        theta_s_v.push(theta_s(j, tol)?);
    }
    let theta_r0 = anchor as f64 + theta_s_v[0];
    // Θʳ at the start is fixed by the anchor; it must agree with arg det φ_xη mod 1
    let d0 = det_c(&jets[0].phi_x_eta);
    let frac = d0.arg() / PI - theta_r0;
    if (frac - frac.round()).abs() > INTEGER_TOL {
        return Err(Error::NonIntegralTheta(frac - frac.round()));
    }
    let theta_r = theta_r_continued(phase, path, theta_r0, tol)?;

    let mut theta_phi = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let v = theta_r[k] - theta_s_v[k];
        if (v - v.round()).abs() > INTEGER_TOL {
            return Err(Error::NonIntegralTheta(v - v.round()));
        }
        theta_phi.push(v.round() as i64);
    }
    for k in 1..params.len() {
        if theta_phi[k] != theta_phi[k - 1] && !events.iter().any(|e| e.at >= params[k - 1] && e.at <= params[k]) {
            return Err(Error::UnresolvedEvent(params[k]));
        }
    }
    Ok(BranchState { phase: phase.describe(), params, theta_r, theta_s: theta_s_v, theta_phi, ranks, events })
}

/// Maslov index of the path, `−∫ dΘ_Φ`.
pub fn maslov_index_of_path(phase: &dyn PhaseFunction, path: &PathSpec, tol: f64) -> Result<i64> {
    Ok(branch_state(phase, path, 0, tol)?.maslov_index())
}

/// `½ sgn(φ_j)_ηη − ½ sgn(φ_k)_ηη` over common samples; must be a constant integer.
pub fn cocycle_number(
    phi_j: &dyn PhaseFunction,
    phi_k: &dyn PhaseFunction,
    samples: &[(DVector<f64>, DVector<f64>)],
    tol: f64,
) -> Result<i64> {
    let mut value: Option<i64> = None;
    for (y, eta) in samples {
        let (jj, jk) = (phi_j.jet(y, eta)?, phi_k.jet(y, eta)?);
        if !jj.is_real(1e-12) || !jk.is_real(1e-12) {
            return Err(Error::InvalidPhase("cocycle numbers need real phases".into()));
        }
        for (j, name) in [(&jj, phi_j.describe()), (&jk, phi_k.describe())] {
            if det_c(&j.phi_x_eta).norm() <= tol * (1.0 + j.xi_eta.norm()).powi(j.dim() as i32) {
                return Err(Error::InvalidPhase(format!(
                    "{name} is degenerate at y={:?}, eta={:?}",
                    y.as_slice(),
                    eta.as_slice()
                )));
            }
        }
        let sg = |j: &PhaseJet| -> Result<i64> {
            let re = j.phi_eta_eta.map(|z| z.re);
            Ok(inertia(&re, tol * (1.0 + re.norm()))?.sgn)
        };
        let diff = sg(&jj)? - sg(&jk)?;
        if diff % 2 != 0 {
            return Err(Error::NonIntegralTheta(0.5));
        }
        let m = diff / 2;
        match value {
            None => value = Some(m),
            Some(v) if v != m => {
                return Err(Error::InvalidPhase(format!(
                    "cocycle value changes from {v} to {m} at y={:?}, eta={:?}",
                    y.as_slice(),
                    eta.as_slice()
                )))
            }
            _ => {}
        }
    }
    value.ok_or_else(|| Error::Config("no overlap samples".into()))
}

/// Path index assembled from two real chart phases: `φ_j` covers the start,
/// `φ_k` covers the end and `m_jk` is their cocycle number on the overlap.
/// With `Θ_Φ = m + κ₊(φ_ηη)` on each chart this gives
/// `−(κ₊(φ_k,ηη(end)) − κ₊(φ_j,ηη(start)) + m_jk)`.
pub fn cech_path_index(
    phi_j: &dyn PhaseFunction,
    phi_k: &dyn PhaseFunction,
    start: &(DVector<f64>, DVector<f64>),
    end: &(DVector<f64>, DVector<f64>),
    m_jk: i64,
    tol: f64,
) -> Result<i64> {
    let kj = -theta_s_real(&phi_j.jet(&start.0, &start.1)?, tol)?;
    let kk = -theta_s_real(&phi_k.jet(&end.0, &end.1)?, tol)?;
    Ok(-(kk - kj + m_jk))
}

#[cfg(test)]
mod tests;
