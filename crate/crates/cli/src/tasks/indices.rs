use fiocalc_core::canonical::image_of_vertical;
use fiocalc_core::lagrangian::{kashiwara_direct, rank_correction, DEFAULT_TOL};
use fiocalc_core::symbols::composition_index;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{dim_hint, require_dim, Ctx, PointCfg};
use crate::config::{parse_body, Task};
use crate::error::{CliError, Result};
use crate::report::{coord_names, Cell, Mismatch, Report, Table};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexPoint {
    y: Vec<f64>,
    eta: Vec<f64>,
    /// Expected `k`, checked when given.
    k: Option<i64>,
}

impl IndexPoint {
    fn at(&self) -> PointCfg {
        PointCfg { y: self.y.clone(), eta: self.eta.clone() }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Cfg {
    maps: Vec<Value>,
    point: Option<IndexPoint>,
    #[serde(default)]
    points: Vec<IndexPoint>,
    n: Option<usize>,
}

pub fn run(ctx: &Ctx, body: Map<String, Value>) -> Result<Report> {
    let cfg: Cfg = parse_body(body)?;
    let [m1, m2] = cfg.maps.as_slice() else {
        return Err(CliError::Config(format!("indices needs exactly two maps, got {}", cfg.maps.len())));
    };
    let points: Vec<IndexPoint> = cfg.point.into_iter().chain(cfg.points).collect();
    if points.is_empty() {
        return Err(CliError::Config("indices needs \"point\" or \"points\"".into()));
    }
    let n = dim_hint(cfg.n, Some(&points[0].at())).expect("points are non-empty");
    let phi1 = ctx.map(m1, Some(n))?;
    let phi2 = ctx.map(m2, Some(n))?;
    require_dim(&phi1, n)?;
    require_dim(&phi2, n)?;
    let tol = ctx.tol.unwrap_or(DEFAULT_TOL);

    let mut out = Report::new(Task::Indices);
    let mut header = coord_names("y", n);
    header.extend(coord_names("eta", n));
    header.extend(["k", "kappa", "r"].map(String::from));
    let mut table = Table::new("indices", &header);
    let mut data = Vec::new();
    for p in &points {
        let (y, eta) = p.at().vectors()?;
        require_dim(&phi1, y.len())?;
        let rep = composition_index(&phi1, &phi2, &y, &eta, tol)?;

        // the same frames through the Gram signature alone
        let (z, zeta) = phi1.eval(&y, &eta)?;
        let (x, xi) = phi2.inverse()?.eval(&z, &zeta)?;
        let l1 = image_of_vertical(phi1.as_ref(), &y, &eta)?;
        let mut l2 = image_of_vertical(phi2.as_ref(), &x, &xi)?;
        l2.base = l1.base.clone();
        let kappa = kashiwara_direct(&l1, &l2, tol)?;
        let r = rank_correction(&l1, &l2, tol)?;
        let at = format!("y={:?}, eta={:?}", p.y, p.eta);
        if 2 * rep.value != kappa + r {
            out.fail(Mismatch::new(
                "composition_index",
                "modified index = (kappa + r)/2",
                format!("at {at}: k={} but Gram signature {kappa} and r={r}", rep.value),
            ));
        }
        if let Some(k) = p.k {
            if k != rep.value {
                out.fail(Mismatch::new("composition_index", "expected k", format!("at {at}: k={} expected {k}", rep.value)));
            }
        }
        let mut row: Vec<Cell> = p.y.iter().chain(&p.eta).map(|v| Cell::F(*v)).collect();
        row.extend([rep.value.into(), rep.kappa.into(), rep.r.into()]);
        table.push(row);
        out.note(format!("{at}: k={} (kappa {}, r {})", rep.value, rep.kappa, rep.r));
        data.push(json!({"y": p.y, "eta": p.eta, "k": rep.value, "kappa": rep.kappa, "r": rep.r}));
    }
    out.tables.push(table);
    out.data = json!({"maps": [phi1.name(), phi2.name()], "dim": n, "tol": tol, "points": data});
    Ok(out)
}
