use fiocalc_core::lagrangian::DEFAULT_TOL;
use fiocalc_core::oscillatory::{
    dump_kernel_grid, extract_symbol, synthesize_kernel, CutoffSpec, ExtractionSpec, KernelForm, KernelSpec, QuadratureSpec,
};
use fiocalc_core::symbols::{adjoint_symbol, PrincipalSymbol};
use nalgebra::DVector;
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{default_amplitude, default_phase, Ctx, SymbolCfg};
use crate::config::{parse_body, Task};
use crate::error::{CliError, Result};
use crate::report::{complex_cells, complex_json, Cell, Mismatch, Report, Table};

fn default_form() -> KernelForm {
    KernelForm::Direct
}

fn default_rel_tol() -> f64 {
    0.03
}

fn default_grid_file() -> String {
    "kernel.fiok".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelCfg {
    map: Value,
    #[serde(default = "default_phase")]
    phase: Value,
    #[serde(default = "default_amplitude")]
    amplitude: String,
    #[serde(default)]
    order: f64,
    #[serde(default = "default_form")]
    form: KernelForm,
    cutoff: Option<CutoffSpec>,
    quadrature: Option<QuadratureSpec>,
}

impl KernelCfg {
    fn symbol(&self) -> SymbolCfg {
        SymbolCfg { map: self.map.clone(), phase: self.phase.clone(), amplitude: self.amplitude.clone(), order: self.order }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Segment {
    from: Vec<f64>,
    to: Vec<f64>,
    count: usize,
}

/// Grid axis: explicit points, or `count` equispaced points on a segment.
#[derive(Deserialize)]
#[serde(untagged)]
enum Axis {
    Points(Vec<Vec<f64>>),
    Segment(Segment),
}

impl Axis {
    fn points(&self, n: usize) -> Result<Vec<DVector<f64>>> {
        let pts: Vec<Vec<f64>> = match self {
            Axis::Points(p) => p.clone(),
            Axis::Segment(s) => {
                if s.count < 2 || s.from.len() != s.to.len() {
                    return Err(CliError::Config("grid segment needs count >= 2 and matching endpoints".into()));
                }
                (0..s.count)
                    .map(|k| {
                        let t = k as f64 / (s.count - 1) as f64;
                        s.from.iter().zip(&s.to).map(|(a, b)| a + t * (b - a)).collect()
                    })
                    .collect()
            }
        };
        if pts.is_empty() || pts.iter().any(|p| p.len() != n) {
            return Err(CliError::Config(format!("grid points must be non-empty and of dimension {n}")));
        }
        Ok(pts.into_iter().map(DVector::from_vec).collect())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridCfg {
    x: Axis,
    y: Axis,
    #[serde(default = "default_grid_file")]
    file: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Cfg {
    kernel: KernelCfg,
    probe: ExtractionSpec,
    #[serde(default = "default_rel_tol")]
    rel_tol: f64,
    grid: Option<GridCfg>,
}

pub fn run(ctx: &Ctx, body: Map<String, Value>) -> Result<Report> {
    let cfg: Cfg = parse_body(body)?;
    let n = cfg.probe.y0.len();
    let (phase, amp) = cfg.kernel.symbol().parts(ctx, n)?;
    let mut spec = KernelSpec::new(phase.clone(), amp.clone(), cfg.kernel.order);
    if let Some(c) = &cfg.kernel.cutoff {
        spec.cutoff = c.clone();
    }
    if let Some(q) = &cfg.kernel.quadrature {
        spec.quadrature = q.clone();
    }
    if cfg.kernel.form == KernelForm::Adjoint {
        spec = spec.adjoint();
    }
    let tol = ctx.tol.unwrap_or(DEFAULT_TOL);
    let (y0, eta0) = (cfg.probe.y0(), cfg.probe.eta0());
    let e = extract_symbol(&spec, &cfg.probe)?;

    let sym = PrincipalSymbol::new(cfg.kernel.order, amp, phase.map().clone()).with_phase(phase);
    // (prediction, alternative, anchor)
    let (pred, alt, anchor) = match cfg.kernel.form {
        KernelForm::Direct => {
            let s = sym.singular_value(&y0, &eta0)?;
            (s, None, "stationary-phase extraction of the singular symbol")
        }
        KernelForm::Adjoint => {
            let a = adjoint_symbol(&sym, &y0, &eta0, tol)?;
            (a.with_index, Some(a.without_index), "adjoint symbol through the composition theorem")
        }
    };

    let mut out = Report::new(Task::ExtractSymbol);
    let mut samples = Table::new("extract_symbol", &["lambda", "integral_re", "integral_im", "normalized_re", "normalized_im"]);
    for s in &e.samples {
        let mut row = vec![Cell::F(s.lambda)];
        row.extend(complex_cells(s.integral));
        row.extend(complex_cells(s.normalized));
        samples.push(row);
    }
    let mut fit = Table::new("extract_fit", &["quantity", "re", "im", "abs", "arg_deg"]);
    let mut line = |label: &str, z: Complex64| {
        fit.push(vec![label.into(), z.re.into(), z.im.into(), z.norm().into(), z.arg().to_degrees().into()]);
    };
    line("extracted", e.value);
    line("extracted (plus-kappa constant)", e.plus_kappa);
    line("c1", e.c1);
    line("predicted", pred);
    if let Some(a) = alt {
        line("predicted without adjoint index", a);
    }
    out.tables.extend([samples, fit]);

    let dev = (e.value - pred).norm() / pred.norm().max(f64::MIN_POSITIVE);
    out.note(format!(
        "{} ({:?}, {}): s = {:.6}{:+.6}i +/- {:.2e} ({:.2} deg), predicted {:.6}{:+.6}i, relative deviation {dev:.2e}",
        spec.phase.describe(),
        cfg.kernel.form,
        e.route,
        e.value.re,
        e.value.im,
        e.error,
        e.phase_degrees(),
        pred.re,
        pred.im
    ));
    out.note(format!("fitted exponent {:+.4} (order {})", e.exponent, e.order));
    if e.low_confidence {
        out.note(format!("low confidence: error bar {:.2e} exceeds {} of |s|", e.error, cfg.probe.confidence));
    }
    if dev > cfg.rel_tol {
        out.fail(Mismatch::new(
            "extract_symbol",
            anchor,
            format!("extracted {:.5}{:+.5}i vs predicted {:.5}{:+.5}i, relative deviation {dev:.2e} > {}", e.value.re, e.value.im, pred.re, pred.im, cfg.rel_tol),
        ));
    }
    let mut data = json!({
        "extraction": e,
        "predicted": complex_json(pred),
        "relative_deviation": dev,
    });
    if let Some(a) = alt {
        let nearer = if (e.value - pred).norm() <= (e.value - a).norm() { "with adjoint index" } else { "without adjoint index" };
        out.note(format!("adjoint: extraction is nearer the prediction {nearer}"));
        data["without_adjoint_index"] = complex_json(a);
        data["nearer"] = json!(nearer);
    }

    if let Some(g) = &cfg.grid {
        if g.file.is_empty() || g.file.contains(['/', '\\']) || g.file.starts_with('.') {
            return Err(CliError::Config(format!("grid file '{}' must be a plain file name", g.file)));
        }
        let xs = g.x.points(n)?;
        let ys = g.y.points(n)?;
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for x in &xs {
            for y in &ys {
                values.push(synthesize_kernel(&spec, x, y)?);
            }
        }
        let mut bytes = Vec::new();
        dump_kernel_grid(&mut bytes, &[xs.len(), ys.len()], &values).expect("sizes match");
        out.note(format!("kernel grid {}x{} written to {}", xs.len(), ys.len(), g.file));
        out.blobs.push((g.file.clone(), bytes));
    }
    out.data = data;
    Ok(out)
}
