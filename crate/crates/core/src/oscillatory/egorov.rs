use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use super::compose::{pair_kernels, CompositionMode};
use super::{finish_extraction, Extraction, ExtractionSpec, KernelSpec};
use crate::canonical::compose_maps;
use crate::error::{Error, Result};
use crate::symbols::{egorov_symbol, PrincipalSymbol, PsiSymbolFn};

#[derive(Debug, Clone, Serialize)]
pub struct EgorovReport {
    pub extraction: Extraction,
    /// `σ_{V₁}(ϑ) a(Φ(ϑ)) conj(σ_{V₂}(ϑ))` at the probe.
    pub predicted: Complex64,
    /// Normalized probe value at the largest λ of the sweep.
    pub at_largest_lambda: Complex64,
    /// `|at_largest_lambda − predicted| / |predicted|`.
    pub relative_deviation: f64,
}

/// Principal symbol of `B = V₂* A V₁` at the probe, with `A = a(x, D)` applied
/// to the plane-wave expansion of `𝒱₁(·, y₀)`.
pub fn egorov_numeric(v1: &KernelSpec, v2: &KernelSpec, a: &PsiSymbolFn, probe: &ExtractionSpec) -> Result<EgorovReport> {
    if v1.dim() != 1 {
        return Err(Error::Dimension("the Egorov oracle runs at n = 1".into()));
    }
    let composed = compose_maps(v1.map().clone(), v2.map().inverse()?)?;
    let psi = |z: &[f64], k: &[f64]| a(&DVector::from_column_slice(z), &DVector::from_column_slice(k));
    let pr = pair_kernels(v1, v2, CompositionMode::Star, &composed, probe, Some(&psi))?;
    let ext = finish_extraction(&pr.raw, pr.constant, v1.order + v2.order, probe.confidence, "z-grid egorov");
    let s1 = PrincipalSymbol::new(v1.order, v1.amplitude.clone(), v1.map().clone()).with_phase(v1.phase.clone());
    let s2 = PrincipalSymbol::new(v2.order, v2.amplitude.clone(), v2.map().clone()).with_phase(v2.phase.clone());
    let q = (probe.y0(), probe.eta0());
    let predicted = egorov_symbol(&s1, &s2, a, &q, &q)?;
    let last = ext.samples.last().expect("non-empty sweep").normalized;
    Ok(EgorovReport {
        relative_deviation: (last - predicted).norm() / predicted.norm().max(1e-300),
        at_largest_lambda: last,
        predicted,
        extraction: ext,
    })
}
