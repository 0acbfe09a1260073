mod compose;
mod extract;
mod indices;
mod maslov;
mod suite;
mod validate;

use fiocalc_core::canonical::{MapRegistry, SharedMap};
use fiocalc_core::phase::{PhaseRegistry, SharedPhase};
use fiocalc_core::symbols::{Amplitude, PrincipalSymbol};
use nalgebra::DVector;
use serde::Deserialize;
use serde_json::Value;

use crate::config::{Loaded, Task};
use crate::error::{CliError, Result};
use crate::report::Report;

/// Everything a task needs besides its own parameters.
pub struct Ctx {
    pub tol: Option<f64>,
    pub seed: u64,
    pub maps: MapRegistry,
    pub phases: PhaseRegistry,
}

impl Ctx {
    pub fn map(&self, spec: &Value, hint: Option<usize>) -> Result<SharedMap> {
        Ok(self.maps.build(spec, hint)?)
    }

    pub fn phase(&self, spec: &Value, map: SharedMap) -> Result<SharedPhase> {
        Ok(self.phases.build(spec, map)?)
    }
}

pub fn run(cfg: Loaded) -> Result<Report> {
    let ctx = Ctx { tol: cfg.tol, seed: cfg.seed, maps: MapRegistry::default(), phases: PhaseRegistry::default() };
    match cfg.task {
        Task::ValidateMap => validate::run(&ctx, cfg.body),
        Task::Indices => indices::run(&ctx, cfg.body),
        Task::MaslovPath => maslov::run(&ctx, cfg.body),
        Task::ComposeSymbols => compose::run(&ctx, cfg.body),
        Task::ExtractSymbol => extract::run(&ctx, cfg.body),
        Task::VerifySuite => suite::run(&ctx, cfg.body),
    }
}

/// A cotangent point `(y, η)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCfg {
    pub y: Vec<f64>,
    pub eta: Vec<f64>,
}

impl PointCfg {
    pub fn vectors(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.y.is_empty() || self.y.len() != self.eta.len() {
            return Err(CliError::Config(format!(
                "point needs y and eta of equal positive length, got {} and {}",
                self.y.len(),
                self.eta.len()
            )));
        }
        Ok((DVector::from_column_slice(&self.y), DVector::from_column_slice(&self.eta)))
    }
}

pub(crate) fn default_phase() -> Value {
    Value::String("real_chart".into())
}

pub(crate) fn default_amplitude() -> String {
    "1".into()
}

/// A principal symbol: map, phase, amplitude formula and order.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolCfg {
    pub map: Value,
    #[serde(default = "default_phase")]
    pub phase: Value,
    #[serde(default = "default_amplitude")]
    pub amplitude: String,
    #[serde(default)]
    pub order: f64,
}

impl SymbolCfg {
    pub fn parts(&self, ctx: &Ctx, n: usize) -> Result<(SharedPhase, Amplitude)> {
        let map = ctx.map(&self.map, Some(n))?;
        require_dim(&map, n)?;
        let phase = ctx.phase(&self.phase, map)?;
        Ok((phase, Amplitude::parse(&self.amplitude, n)?))
    }

    pub fn symbol(&self, ctx: &Ctx, n: usize) -> Result<PrincipalSymbol> {
        let (phase, amp) = self.parts(ctx, n)?;
        Ok(PrincipalSymbol::new(self.order, amp, phase.map().clone()).with_phase(phase))
    }
}

/// Explicit `n`, else the dimension of the first point.
pub fn dim_hint(n: Option<usize>, first: Option<&PointCfg>) -> Option<usize> {
    n.or(first.map(|p| p.y.len()))
}

pub fn require_dim(map: &SharedMap, n: usize) -> Result<()> {
    if map.dim() != n {
        return Err(CliError::Config(format!("map {} has dimension {}, points have {n}", map.name(), map.dim())));
    }
    Ok(())
}
