use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::sync::Arc;

use super::{compose_maps, FlowSpec, HalfWave, HamiltonianFlow, Identity, Lift, MetricHamiltonian, SharedMap};
use crate::diffeo::{ExprDiffeo, LinearDiffeo};
use crate::error::{Error, Result};

/// Builds a map from its JSON description. The dimension hint comes from the
/// surrounding experiment (for example the length of a probe point).
pub type MapBuilder = Box<dyn Fn(&MapRegistry, &Value, Option<usize>) -> Result<SharedMap> + Send + Sync>;

/// Named constructors for canonical maps, selected at runtime.
pub struct MapRegistry {
    builders: BTreeMap<String, MapBuilder>,
}

impl std::fmt::Debug for MapRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MapRegistry").field("names", &self.names()).finish()
    }
}

fn parse<T: DeserializeOwned>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("{e} in {v}")))
}

fn dim_of(explicit: Option<usize>, hint: Option<usize>) -> Result<usize> {
    let n = explicit.or(hint).unwrap_or(1);
    if n == 0 || n > 4 {
        return Err(Error::Config(format!("unsupported dimension {n}")));
    }
    Ok(n)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityCfg {
    #[allow(dead_code)]
    map: String,
    n: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HalfWaveCfg {
    #[allow(dead_code)]
    map: String,
    n: Option<usize>,
    /// Defaults to 1 so a bare `"half_wave"` names the unit-time map.
    #[serde(default = "unit_time")]
    t: f64,
}

fn unit_time() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Components {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftCfg {
    #[allow(dead_code)]
    map: String,
    f: Components,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearCfg {
    #[allow(dead_code)]
    map: String,
    l: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowCfg {
    #[allow(dead_code)]
    map: String,
    metric: Option<Vec<Vec<String>>>,
    n: Option<usize>,
    t: f64,
    #[serde(default = "default_steps")]
    steps: usize,
    chart_radius: Option<f64>,
}

fn default_steps() -> usize {
    1000
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComposeCfg {
    #[allow(dead_code)]
    map: String,
    first: Value,
    second: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InverseCfg {
    #[allow(dead_code)]
    map: String,
    of: Value,
}

impl MapRegistry {
    pub fn empty() -> Self {
        MapRegistry { builders: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, builder: MapBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> Vec<String> {
        self.builders.keys().cloned().collect()
    }

    /// Accepts either a bare name (`"identity"`) or an object with a `"map"` key.
    pub fn build(&self, spec: &Value, hint: Option<usize>) -> Result<SharedMap> {
        let owned;
        let spec = match spec {
            Value::String(s) => {
                owned = serde_json::json!({ "map": s });
                &owned
            }
            v => v,
        };
        let name = spec
            .get("map")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config(format!("map spec needs a \"map\" name: {spec}")))?;
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown map '{name}'; known: {}", self.names().join(", "))))?;
        builder(self, spec, hint)
    }
}

impl Default for MapRegistry {
    fn default() -> Self {
        let mut r = MapRegistry::empty();
        r.register(
            "identity",
            Box::new(|_, v, hint| {
                let c: IdentityCfg = parse(v)?;
                Ok(Arc::new(Identity { n: dim_of(c.n, hint)? }))
            }),
        );
        r.register(
            "half_wave",
            Box::new(|_, v, hint| {
                let c: HalfWaveCfg = parse(v)?;
                Ok(Arc::new(HalfWave { n: dim_of(c.n, hint)?, t: c.t }))
            }),
        );
        r.register(
            "lift",
            Box::new(|_, v, _| {
                let c: LiftCfg = parse(v)?;
                let comps = match c.f {
                    Components::One(s) => vec![s],
                    Components::Many(v) => v,
                };
                let refs: Vec<&str> = comps.iter().map(String::as_str).collect();
                Ok(Arc::new(Lift::new("lift", Arc::new(ExprDiffeo::new(&refs)?))))
            }),
        );
        r.register(
            "linear",
            Box::new(|_, v, _| {
                let c: LinearCfg = parse(v)?;
                let n = c.l.len();
                if n == 0 || c.l.iter().any(|row| row.len() != n) {
                    return Err(Error::Config("linear map needs a square matrix".into()));
                }
                let l = DMatrix::from_fn(n, n, |i, j| c.l[i][j]);
                Ok(Arc::new(Lift::new("linear", Arc::new(LinearDiffeo::new(l)?))))
            }),
        );
        r.register(
            "flow",
            Box::new(|_, v, hint| {
                let c: FlowCfg = parse(v)?;
                let h = match c.metric {
                    Some(m) => MetricHamiltonian::new(&m)?,
                    None => MetricHamiltonian::euclidean(dim_of(c.n, hint)?),
                };
                let mut spec = FlowSpec::new(Arc::new(h), c.t, c.steps);
                if let Some(r) = c.chart_radius {
                    spec.chart_radius = r;
                }
                Ok(Arc::new(HamiltonianFlow::new(spec)?))
            }),
        );
        r.register(
            "compose",
            Box::new(|reg, v, hint| {
                let c: ComposeCfg = parse(v)?;
                compose_maps(reg.build(&c.first, hint)?, reg.build(&c.second, hint)?)
            }),
        );
        r.register(
            "inverse",
            Box::new(|reg, v, hint| {
                let c: InverseCfg = parse(v)?;
                reg.build(&c.of, hint)?.inverse()
            }),
        );
        r
    }
}
