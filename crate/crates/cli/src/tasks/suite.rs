use fiocalc_core::verify::{criterion_ids, run_criterion, SuiteConfig};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::Ctx;
use crate::config::{parse_body, Task};
use crate::error::{CliError, Result};
use crate::report::{Mismatch, Report, Table};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Cfg {
    /// Criterion ids; empty runs the whole battery.
    #[serde(default)]
    only: Vec<String>,
}

pub fn run(ctx: &Ctx, body: Map<String, Value>) -> Result<Report> {
    let cfg: Cfg = parse_body(body)?;
    let ids: Vec<String> = if cfg.only.is_empty() { criterion_ids().into_iter().map(String::from).collect() } else { cfg.only };
    let known = criterion_ids();
    if let Some(bad) = ids.iter().find(|i| !known.iter().any(|k| k.eq_ignore_ascii_case(i))) {
        return Err(CliError::Config(format!("unknown criterion '{bad}'; known: {}", known.join(", "))));
    }
    let mut sc = SuiteConfig { seed: ctx.seed, ..SuiteConfig::default() };
    if let Some(t) = ctx.tol {
        sc.tol = t;
    }
    let mut out = Report::new(Task::VerifySuite);
    // timings stay out of the CSV so reruns are byte-identical
    let mut table = Table::new("verify_suite", &["id", "title", "pass"]);
    let mut outcomes = Vec::new();
    for id in &ids {
        let o = run_criterion(id, &sc)?;
        table.push(vec![o.id.as_str().into(), o.title.as_str().into(), o.pass.into()]);
        out.note(o.line());
        if !o.pass {
            out.fail(Mismatch::new("verify_suite", &format!("{} {}", o.id, o.title), o.detail.clone()));
        }
        outcomes.push(o);
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    out.note(format!("acceptance: {passed} passed, {} failed", outcomes.len() - passed));
    out.tables.push(table);
    out.data = json!({"seed": sc.seed, "tol": sc.tol, "outcomes": outcomes});
    Ok(out)
}
