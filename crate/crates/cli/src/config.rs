//! Experiment configs: a JSON object with a handful of common keys and the
//! task's own parameters. Unknown keys are rejected everywhere.

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};
use std::fmt;
use std::path::PathBuf;

use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "FIOCALC_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "fiocalc-out";
pub const DEFAULT_SEED: u64 = 20240611;

const COMMON_KEYS: [&str; 4] = ["task", "seed", "tol", "out"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    ValidateMap,
    Indices,
    MaslovPath,
    ComposeSymbols,
    ExtractSymbol,
    VerifySuite,
}

impl Task {
    pub const ALL: [Task; 6] =
        [Task::ValidateMap, Task::Indices, Task::MaslovPath, Task::ComposeSymbols, Task::ExtractSymbol, Task::VerifySuite];

    pub fn name(self) -> &'static str {
        match self {
            Task::ValidateMap => "validate-map",
            Task::Indices => "indices",
            Task::MaslovPath => "maslov-path",
            Task::ComposeSymbols => "compose-symbols",
            Task::ExtractSymbol => "extract-symbol",
            Task::VerifySuite => "verify-suite",
        }
    }

    /// File stem for the task's outputs.
    pub fn stem(self) -> String {
        self.name().replace('-', "_")
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s || t.stem() == s)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line values that take precedence over the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub task: Task,
    pub tol: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub body: Map<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Common {
    task: Option<String>,
    seed: Option<u64>,
    tol: Option<f64>,
    out: Option<PathBuf>,
}

/// Splits the common keys off `raw` and resolves the task, tolerance, seed
/// and output directory. Precedence: flag, config, `FIOCALC_OUT_DIR`, default.
pub fn load(raw: Value, subcommand: Option<Task>, ov: &Overrides, env_out: Option<PathBuf>) -> Result<Loaded> {
    let Value::Object(mut body) = raw else {
        return Err(CliError::Config("config must be a JSON object".into()));
    };
    let mut common = Map::new();
    for k in COMMON_KEYS {
        if let Some(v) = body.remove(k) {
            common.insert(k.to_string(), v);
        }
    }
    let common: Common = parse_value(Value::Object(common))?;
    let named = match &common.task {
        Some(s) => Some(Task::parse(s).ok_or_else(|| {
            CliError::Config(format!(
                "unknown task '{s}'; expected one of {}",
                Task::ALL.map(Task::name).join(", ")
            ))
        })?),
        None => None,
    };
    let task = match (subcommand, named) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Config(format!("config is for task '{b}' but the subcommand is '{a}'")));
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(CliError::Config("config has no \"task\" and no subcommand was given".into())),
    };
    let tol = ov.tol.or(common.tol);
    if let Some(t) = tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Config(format!("tolerance must be positive, got {t}")));
        }
    }
    let out = ov
        .out
        .clone()
        .or(common.out)
        .or(env_out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok(Loaded { task, tol, seed: ov.seed.or(common.seed).unwrap_or(DEFAULT_SEED), out, body })
}

pub fn parse_value<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}

pub fn parse_body<T: DeserializeOwned>(body: Map<String, Value>) -> Result<T> {
    parse_value(Value::Object(body))
}

/// Shorthand `{"map": "half_wave", "t": 1}`: when `map` is a bare name, keys
/// the task does not know are moved into the map spec, where the map builder
/// still rejects anything it does not know.
pub fn absorb_map_params(body: &mut Map<String, Value>, own: &[&str]) {
    let Some(Value::String(name)) = body.get("map").cloned() else {
        return;
    };
    let foreign: Vec<String> = body.keys().filter(|k| !own.contains(&k.as_str())).cloned().collect();
    if foreign.is_empty() {
        return;
    }
    let mut spec = Map::new();
    spec.insert("map".into(), Value::String(name));
    for k in foreign {
        let v = body.remove(&k).expect("key listed above");
        spec.insert(k, v);
    }
    body.insert("map".into(), Value::Object(spec));
}
