use fiocalc_core::lagrangian::DEFAULT_TOL;
use fiocalc_core::oscillatory::{compose_numeric, CompositionMode, ExtractionSpec, KernelSpec, QuadratureSpec};
use fiocalc_core::symbols::{adjoint_symbol, composition_symbol, star_composition};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{Ctx, PointCfg, SymbolCfg};
use crate::config::{parse_body, Task};
use crate::error::{CliError, Result};
use crate::report::{complex_cells, complex_json, coord_names, Cell, Mismatch, Report, Table};

fn default_sigma() -> f64 {
    0.5
}

fn default_confidence() -> f64 {
    0.02
}

fn default_rel_tol() -> f64 {
    0.03
}

/// Numerical check of the symbol formulas by kernel quadrature.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleCfg {
    mode: CompositionMode,
    lambdas: Vec<f64>,
    #[serde(default = "default_sigma")]
    sigma: f64,
    #[serde(default = "default_confidence")]
    confidence: f64,
    #[serde(default = "default_rel_tol")]
    rel_tol: f64,
    quadrature: Option<QuadratureSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Cfg {
    first: SymbolCfg,
    second: SymbolCfg,
    point: Option<PointCfg>,
    #[serde(default)]
    points: Vec<PointCfg>,
    oracle: Option<OracleCfg>,
}

fn kernel(s: &SymbolCfg, ctx: &Ctx, n: usize, q: &Option<QuadratureSpec>) -> Result<KernelSpec> {
    let (phase, amp) = s.parts(ctx, n)?;
    let k = KernelSpec::new(phase, amp, s.order);
    Ok(match q {
        Some(q) => k.with_quadrature(q.clone()),
        None => k,
    })
}

fn nearer(v: Complex64, a: Complex64, b: Complex64) -> &'static str {
    if (v - a).norm() <= (v - b).norm() {
        "corrected"
    } else {
        "uncorrected"
    }
}

pub fn run(ctx: &Ctx, body: Map<String, Value>) -> Result<Report> {
    let cfg: Cfg = parse_body(body)?;
    let points: Vec<PointCfg> = cfg.point.into_iter().chain(cfg.points).collect();
    if points.is_empty() {
        return Err(CliError::Config("compose-symbols needs \"point\" or \"points\"".into()));
    }
    let n = points[0].y.len();
    let s1 = cfg.first.symbol(ctx, n)?;
    let s2 = cfg.second.symbol(ctx, n)?;
    let tol = ctx.tol.unwrap_or(DEFAULT_TOL);

    let mut out = Report::new(Task::ComposeSymbols);
    let mut header = coord_names("y", n);
    header.extend(coord_names("eta", n));
    header.extend(
        [
            "k_star", "star_re", "star_im", "k", "k_adjoint", "plain_corrected_re", "plain_corrected_im", "plain_uncorrected_re",
            "plain_uncorrected_im", "adjoint_index", "adjoint_with_index_re", "adjoint_with_index_im", "adjoint_without_index_re",
            "adjoint_without_index_im",
        ]
        .map(String::from),
    );
    let mut table = Table::new("compose_symbols", &header);
    let mut oracle_table = cfg.oracle.as_ref().map(|_| {
        let mut h = coord_names("y", n);
        h.extend(coord_names("eta", n));
        h.extend(["mode", "numeric_re", "numeric_im", "error", "predicted_re", "predicted_im", "relative_deviation", "nearer"].map(String::from));
        Table::new("compose_oracle", &h)
    });
    let kernels = match &cfg.oracle {
        Some(o) => Some((kernel(&cfg.first, ctx, n, &o.quadrature)?, kernel(&cfg.second, ctx, n, &o.quadrature)?)),
        None => None,
    };
    let mut data = Vec::new();
    for p in &points {
        let (y, eta) = p.vectors()?;
        if y.len() != n {
            return Err(CliError::Config("all points must share one dimension".into()));
        }
        let star = star_composition(&s1, &s2, &y, &eta, tol)?;
        let plain = composition_symbol(&s1, &s2, &y, &eta, tol)?;
        let adj = adjoint_symbol(&s1, &y, &eta, tol)?;
        let mut row: Vec<Cell> = p.y.iter().chain(&p.eta).map(|v| Cell::F(*v)).collect();
        row.push(star.index.into());
        row.extend(complex_cells(star.value));
        row.extend([plain.k.into(), plain.k_adjoint.into()]);
        row.extend(complex_cells(plain.corrected));
        row.extend(complex_cells(plain.uncorrected));
        row.push(adj.index.into());
        row.extend(complex_cells(adj.with_index));
        row.extend(complex_cells(adj.without_index));
        table.push(row);
        let at = format!("y={:?}, eta={:?}", p.y, p.eta);
        out.note(format!(
            "{at}: star {:.6}{:+.6}i (k={}), plain {:.6}{:+.6}i (k={}, k_a={})",
            star.value.re, star.value.im, star.index, plain.corrected.re, plain.corrected.im, plain.k, plain.k_adjoint
        ));
        let mut entry = json!({"y": p.y, "eta": p.eta, "star": star, "plain": plain, "adjoint": adj});

        if let (Some(o), Some((k1, k2)), Some(t)) = (&cfg.oracle, &kernels, oracle_table.as_mut()) {
            let probe = ExtractionSpec { y0: p.y.clone(), eta0: p.eta.clone(), sigma: o.sigma, lambdas: o.lambdas.clone(), confidence: o.confidence };
            let rep = compose_numeric(k1, k2, o.mode, &probe)?;
            let v = rep.extraction.value;
            let (pred, other, anchor) = match o.mode {
                CompositionMode::Star => (star.value, star.value, "composition theorem for V2* V1"),
                CompositionMode::Plain => (plain.corrected, plain.uncorrected, "symbol of V2 V1 with index k - k_a"),
            };
            let dev = (v - pred).norm() / pred.norm().max(f64::MIN_POSITIVE);
            let verdict = match o.mode {
                CompositionMode::Star => "-",
                CompositionMode::Plain => nearer(v, plain.corrected, plain.uncorrected),
            };
            let mut row: Vec<Cell> = p.y.iter().chain(&p.eta).map(|v| Cell::F(*v)).collect();
            row.push(Cell::from(format!("{:?}", o.mode).to_lowercase()));
            row.extend(complex_cells(v));
            row.push(rep.extraction.error.into());
            row.extend(complex_cells(pred));
            row.extend([dev.into(), verdict.into()]);
            t.push(row);
            out.note(format!(
                "{at}: numeric {:?} {:.6}{:+.6}i +/- {:.2e}, relative deviation {dev:.2e}{}",
                o.mode,
                v.re,
                v.im,
                rep.extraction.error,
                if verdict == "-" { String::new() } else { format!(", nearer the {verdict} index") }
            ));
            if dev > o.rel_tol {
                out.fail(Mismatch::new(
                    "compose_numeric",
                    anchor,
                    format!("at {at}: numeric {:.5}{:+.5}i vs {:.5}{:+.5}i, relative deviation {dev:.2e} > {}", v.re, v.im, pred.re, pred.im, o.rel_tol),
                ));
            }
            if rep.extraction.low_confidence {
                out.note(format!("{at}: low-confidence extraction (error {:.2e})", rep.extraction.error));
            }
            entry["oracle"] = json!({"numeric": complex_json(v), "error": rep.extraction.error, "predicted": complex_json(pred),
                                     "alternative": complex_json(other), "relative_deviation": dev, "nearer": verdict,
                                     "z_nodes": rep.z_nodes, "edge_ratio": rep.edge_ratio});
        }
        data.push(entry);
    }
    out.tables.push(table);
    out.tables.extend(oracle_table);
    out.data = json!({"first": s1.map.name(), "second": s2.map.name(), "order": s1.order + s2.order, "points": data});
    Ok(out)
}
