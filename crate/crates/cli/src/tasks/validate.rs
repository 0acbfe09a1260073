use fiocalc_core::canonical::{random_samples, validate_canonical, Provenance};
use fiocalc_core::phase::validate_phase;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::Ctx;
use crate::config::{absorb_map_params, parse_body, Task};
use crate::error::{CliError, Result};
use crate::report::{Cell, Mismatch, Report, Table};

const OWN: [&str; 6] = ["map", "phase", "samples", "radius", "n", "phase_tol"];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Cfg {
    map: Value,
    phase: Option<Value>,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default = "default_radius")]
    radius: f64,
    n: Option<usize>,
    #[serde(default = "default_phase_tol")]
    phase_tol: f64,
}

fn default_samples() -> usize {
    100
}

fn default_radius() -> f64 {
    1.0
}

fn default_phase_tol() -> f64 {
    1e-8
}

/// Closed-form maps are held to round-off, integrated and composed ones to
/// integrator accuracy.
fn default_tol(p: Provenance) -> f64 {
    match p {
        Provenance::AnalyticCatalog => 1e-10,
        _ => 1e-6,
    }
}

pub fn run(ctx: &Ctx, mut body: Map<String, Value>) -> Result<Report> {
    absorb_map_params(&mut body, &OWN);
    let cfg: Cfg = parse_body(body)?;
    if cfg.samples == 0 || !(cfg.radius > 0.0) {
        return Err(CliError::Config("validate-map needs samples > 0 and radius > 0".into()));
    }
    let map = ctx.map(&cfg.map, cfg.n)?;
    let tol = ctx.tol.unwrap_or_else(|| default_tol(map.provenance()));
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let samples = random_samples(&mut rng, map.dim(), cfg.samples, cfg.radius);
    let rep = validate_canonical(map.as_ref(), &samples, tol)?;

    let mut out = Report::new(Task::ValidateMap);
    let mut table = Table::new("validate_map", &["check", "residual", "tol", "pass"]);
    for (name, r) in rep.rows() {
        let ok = r < tol;
        table.push(vec![name.into(), r.into(), tol.into(), ok.into()]);
        if !ok {
            out.fail(Mismatch::new("validate_canonical", name, format!("residual {r:.3e} exceeds tol {tol:.1e} for {}", map.name())));
        }
    }
    out.tables.push(table);
    out.note(format!(
        "{} (n={}, {:?}): max residual {:.3e} over {} samples, tol {tol:.1e}: {}",
        map.name(),
        map.dim(),
        map.provenance(),
        rep.max_residual(),
        rep.samples,
        if rep.pass { "pass" } else { "FAIL" }
    ));
    let mut data = json!({"map": map.name(), "dim": map.dim(), "provenance": map.provenance(), "canonical": rep});

    if let Some(spec) = &cfg.phase {
        let phase = ctx.phase(spec, map.clone())?;
        let pr = validate_phase(phase.as_ref(), &samples, cfg.phase_tol)?;
        let mut t = Table::new("validate_phase", &["condition", "worst", "pass"]);
        let worst = |f: fn(&fiocalc_core::phase::SampleVerdict) -> f64, max: bool| {
            let it = pr.samples.iter().map(f);
            if max {
                it.fold(0.0, f64::max)
            } else {
                it.fold(f64::INFINITY, f64::min)
            }
        };
        let rows = [
            ("homogeneity", "euler residual", worst(|s| s.euler_residual, true), pr.homogeneous),
            ("quadratic remainder", "remainder growth", worst(|s| s.remainder_growth, true), pr.quadratic),
            ("nondegenerate phi_x_eta", "det margin", worst(|s| s.det_margin, false), pr.nondegenerate),
        ];
        for (anchor, what, w, ok) in rows {
            t.push(vec![Cell::from(anchor), w.into(), ok.into()]);
            if !ok {
                out.fail(Mismatch::new("validate_phase", anchor, format!("{} fails: worst {what} {w:.3e}", pr.phase)));
            }
        }
        out.tables.push(t);
        out.note(format!(
            "phase {}: {} ({} samples with singular xi_eta)",
            pr.phase,
            if pr.pass() { "pass" } else { "FAIL" },
            pr.chart_degenerate.len()
        ));
        data["phase"] = json!({"phase": pr.phase, "homogeneous": pr.homogeneous, "quadratic": pr.quadratic, "nondegenerate": pr.nondegenerate, "chart_degenerate": pr.chart_degenerate});
    }
    out.data = data;
    Ok(out)
}
