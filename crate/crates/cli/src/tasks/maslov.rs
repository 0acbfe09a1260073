use fiocalc_core::maslov::{branch_state, PathSpec, DEFAULT_TOL};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{dim_hint, require_dim, Ctx, PointCfg};
use crate::config::{absorb_map_params, parse_body, Task};
use crate::error::{CliError, Result};
use crate::report::{Mismatch, Report, Table};

const OWN: [&str; 9] =
    ["map", "phase", "waypoints", "samples_per_segment", "anchor", "refinement_check", "compare_phase", "expect_index", "n"];

fn default_phase() -> Value {
    Value::String("gaussian".into())
}

fn default_samples() -> usize {
    64
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Cfg {
    map: Value,
    #[serde(default = "default_phase")]
    phase: Value,
    waypoints: Vec<PointCfg>,
    #[serde(default = "default_samples")]
    samples_per_segment: usize,
    #[serde(default)]
    anchor: i64,
    /// Recompute on the 2x refined path and require the same index.
    #[serde(default = "yes")]
    refinement_check: bool,
    /// A second phase whose Theta_Phi curve must coincide with the first.
    compare_phase: Option<Value>,
    expect_index: Option<i64>,
    n: Option<usize>,
}

pub fn run(ctx: &Ctx, mut body: Map<String, Value>) -> Result<Report> {
    absorb_map_params(&mut body, &OWN);
    let cfg: Cfg = parse_body(body)?;
    if cfg.waypoints.len() < 2 {
        return Err(CliError::Config("maslov-path needs at least two waypoints".into()));
    }
    let n = dim_hint(cfg.n, cfg.waypoints.first()).expect("waypoints are non-empty");
    let map = ctx.map(&cfg.map, Some(n))?;
    require_dim(&map, n)?;
    let waypoints = cfg.waypoints.iter().map(PointCfg::vectors).collect::<Result<Vec<_>>>()?;
    let path = PathSpec::new(waypoints, cfg.samples_per_segment);
    let tol = ctx.tol.unwrap_or(DEFAULT_TOL);
    let phase = ctx.phase(&cfg.phase, map.clone())?;
    let st = branch_state(phase.as_ref(), &path, cfg.anchor, tol)?;
    let index = st.maslov_index();

    let mut out = Report::new(Task::MaslovPath);
    let mut curve = Table::new("maslov_path", &["s", "theta_r", "theta_s", "theta_phi", "rank"]);
    for (s, tr, ts, tp, rank) in st.rows() {
        curve.push(vec![s.into(), tr.into(), ts.into(), tp.into(), rank.into()]);
    }
    let mut events = Table::new("maslov_events", &["at", "rank_before", "rank_at", "rank_after"]);
    for e in &st.events {
        events.push(vec![e.at.into(), e.rank_before.into(), e.rank_at.into(), e.rank_after.into()]);
    }
    out.tables.extend([curve, events]);
    out.note(format!(
        "{} with {}: {} samples, {} rank events, Maslov index {index}",
        map.name(),
        st.phase,
        st.params.len(),
        st.events.len()
    ));
    let mut data = json!({"map": map.name(), "phase": st.phase, "index": index, "events": st.events});

    if cfg.refinement_check {
        let fine = branch_state(phase.as_ref(), &path.refined(), cfg.anchor, tol)?.maslov_index();
        data["refined_index"] = json!(fine);
        if fine != index {
            out.fail(Mismatch::new(
                "maslov_index_of_path",
                "stability under path refinement",
                format!("index {index} on the path, {fine} on the 2x refined path"),
            ));
        }
    }
    if let Some(spec) = &cfg.compare_phase {
        let other = ctx.phase(spec, map.clone())?;
        let so = branch_state(other.as_ref(), &path, cfg.anchor, tol)?;
        let first_diff = st.theta_phi.iter().zip(&so.theta_phi).position(|(a, b)| a != b);
        data["compare_phase"] = json!({"phase": so.phase, "index": so.maslov_index(), "first_difference": first_diff});
        if let Some(k) = first_diff {
            out.fail(Mismatch::new(
                "branch_state",
                "phase independence of Theta_Phi",
                format!(
                    "at s={}: {} gives {}, {} gives {}",
                    st.params[k], st.phase, st.theta_phi[k], so.phase, so.theta_phi[k]
                ),
            ));
        } else {
            out.note(format!("Theta_Phi agrees with {} at all {} samples", so.phase, st.params.len()));
        }
    }
    if let Some(want) = cfg.expect_index {
        if want != index {
            out.fail(Mismatch::new("maslov_index_of_path", "expected index", format!("index {index}, expected {want}")));
        }
    }
    out.data = data;
    Ok(out)
}
