use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::sync::Arc;

use super::{GaussianPhase, RealChartPhase, SharedPhase};
use crate::canonical::SharedMap;
use crate::diffeo::{ExprDiffeo, LinearDiffeo, QuadraticChart, SharedDiffeo};
use crate::error::{Error, Result};

pub type PhaseBuilder = Box<dyn Fn(&Value, SharedMap) -> Result<SharedPhase> + Send + Sync>;

/// Named phase constructors selected at runtime.
pub struct PhaseRegistry {
    builders: BTreeMap<String, PhaseBuilder>,
}

impl std::fmt::Debug for PhaseRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseRegistry").field("names", &self.names()).finish()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RealChartCfg {
    #[allow(dead_code)]
    phase: String,
    #[serde(default)]
    chart: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianCfg {
    #[allow(dead_code)]
    phase: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum ChartCfg {
    F(Vec<String>),
    Linear(Vec<Vec<f64>>),
    Quadratic { center: Vec<f64>, xi: Vec<f64>, a: Vec<Vec<f64>> },
}

fn square(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config("expected a square matrix".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `"default"` (or absent) keeps the map's own coordinates; otherwise one of
/// `{"f": [...]}`, `{"linear": [[...]]}` or
/// `{"quadratic": {"center": [...], "xi": [...], "a": [[...]]}}`.
pub fn chart_from_json(v: Option<&Value>) -> Result<Option<(String, SharedDiffeo)>> {
    let v = match v {
        None => return Ok(None),
        Some(Value::String(s)) if s == "default" => return Ok(None),
        Some(Value::String(s)) => return Err(Error::Config(format!("unknown chart '{s}'"))),
        Some(v) => v,
    };
    let cfg: ChartCfg = serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("chart: {e}")))?;
    let d: SharedDiffeo = match cfg {
        ChartCfg::F(comps) => {
            let refs: Vec<&str> = comps.iter().map(String::as_str).collect();
            Arc::new(ExprDiffeo::new(&refs)?)
        }
        ChartCfg::Linear(rows) => Arc::new(LinearDiffeo::new(square(&rows)?)?),
        ChartCfg::Quadratic { center, xi, a } => Arc::new(QuadraticChart::with_covector_hessian(
            DVector::from_vec(center),
            &DVector::from_vec(xi),
            &square(&a)?,
        )?),
    };
    Ok(Some((d.describe(), d)))
}

impl PhaseRegistry {
    pub fn empty() -> Self {
        PhaseRegistry { builders: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, builder: PhaseBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> Vec<String> {
        self.builders.keys().cloned().collect()
    }

    /// Accepts `"gaussian"` or `{"phase": "real_chart", "chart": ...}`.
    pub fn build(&self, spec: &Value, map: SharedMap) -> Result<SharedPhase> {
        let owned;
        let spec = match spec {
            Value::String(s) => {
                owned = serde_json::json!({ "phase": s });
                &owned
            }
            v => v,
        };
        let name = spec
            .get("phase")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config(format!("phase spec needs a \"phase\" name: {spec}")))?;
        let b = self
            .builders
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown phase '{name}'; known: {}", self.names().join(", "))))?;
        b(spec, map)
    }
}

impl Default for PhaseRegistry {
    fn default() -> Self {
        let mut r = PhaseRegistry::empty();
        r.register(
            "real_chart",
            Box::new(|v, map| {
                let c: RealChartCfg = serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?;
                Ok(match chart_from_json(c.chart.as_ref())? {
                    None => Arc::new(RealChartPhase::new(map)),
                    Some((name, d)) => Arc::new(RealChartPhase::in_chart(map, &name, d)?),
                })
            }),
        );
        r.register(
            "gaussian",
            Box::new(|v, map| {
                let _: GaussianCfg = serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?;
                Ok(Arc::new(GaussianPhase::new(map)))
            }),
        );
        r
    }
}
