//! `decay` and `compare`: coherence curves from one or more engines.

use anyhow::{anyhow, Context, Result};
use telegraph_core::analytic::coherence_schedule;
use telegraph_core::curve::{DecayCurve, Engine};
use telegraph_core::lindblad::{build_liouvillian, initial_density, lindblad_dd, ElectronSpin, RegisterHamiltonian};
use telegraph_core::stochastic::mc_coherence;

use crate::config::{Resolved, RunConfig};
use crate::output::{Cell, Document};

pub fn run_engine(engine: Engine, r: &Resolved, config: &RunConfig) -> Result<DecayCurve> {
    let p = &r.params;
    let curve = match engine {
        Engine::Analytic => {
            let values = coherence_schedule(p, r.init, &r.schedule, &r.times)?;
            DecayCurve::new(Engine::Analytic, r.times.clone(), values)?
        }
        Engine::Mc => {
            let seed = config.engine.seed.ok_or_else(|| anyhow!("engine.seed is required for mc"))?;
            mc_coherence(p, r.init, &r.schedule, &r.times, config.engine.traj, seed)?.to_curve()
        }
        Engine::Lindblad => {
            let h = RegisterHamiltonian::from_params(p);
            let l = build_liouvillian(&h, p.t1())?;
            let rho = initial_density(ElectronSpin::from_levels(p.levels()), r.init)?;
            lindblad_dd(&l, &rho, &r.schedule, &r.times)?
        }
    };
    Ok(curve)
}

fn run_all(r: &Resolved, config: &RunConfig) -> Result<Vec<DecayCurve>> {
    r.engines
        .iter()
        .map(|&e| run_engine(e, r, config).with_context(|| format!("{e} engine failed")))
        .collect()
}

pub fn decay(config: &RunConfig, r: &Resolved) -> Result<Document> {
    let mut curves = run_all(r, config)?;
    let single = curves.len() == 1;
    let has_se = curves.iter().any(|c| c.std_err.is_some());
    let columns: Vec<&str> = match (single, has_se) {
        (true, false) => vec!["t_us", "re", "im", "abs"],
        (true, true) => vec!["t_us", "re", "im", "abs", "se"],
        (false, _) => vec!["engine", "t_us", "re", "im", "abs", "se"],
    };
    let mut doc = Document::new("decay", serde_json::to_value(config)?, &columns);
    for c in &mut curves {
        let name = c.engine.name();
        match c.one_over_e() {
            Ok(t) => doc.note(format!("t_1e_us.{name}"), crate::output::num(t)),
            Err(e) => doc.note(format!("t_1e_us.{name}"), e),
        }
        let fit = match config.output.fit.as_deref() {
            None => None,
            Some("exp") => Some(c.fit_envelope().map(|f| f.report())),
            Some("osc") => Some(c.fit_fringe().map(|f| f.report())),
            Some(other) => return Err(anyhow!("invalid config: output.fit: expected exp or osc, got '{other}'")),
        };
        match fit {
            Some(Ok(report)) => doc.note(format!("fit.{name}"), report),
            Some(Err(e)) => doc.note(format!("fit.{name}"), format!("failed: {e}")),
            None => {}
        }
    }
    for c in &curves {
        for (k, (&t, z)) in c.times.iter().zip(&c.values).enumerate() {
            let se: Cell = c.std_err.as_ref().map(|s| s[k]).into();
            let mut row = vec![t.into(), z.re.into(), z.im.into(), z.norm().into()];
            if !single {
                row.insert(0, c.engine.name().into());
                row.push(se);
            } else if has_se {
                row.push(se);
            }
            doc.row(row);
        }
    }
    Ok(doc)
}

/// One engine-pair check.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCheck {
    pub a: Engine,
    pub b: Engine,
    /// `max_abs_dev` between deterministic engines, `max_se` against MC.
    pub metric: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl PairCheck {
    pub fn pass(&self) -> bool {
        self.value <= self.tolerance
    }
}

fn max_se(det: &DecayCurve, mc: &DecayCurve) -> f64 {
    let se = mc.std_err.as_ref().expect("mc curves carry standard errors");
    det.values
        .iter()
        .zip(&mc.values)
        .zip(se)
        .map(|((a, b), s)| {
            let d = (a - b).norm();
            if d == 0.0 {
                0.0
            } else {
                d / s
            }
        })
        .fold(0.0, f64::max)
}

pub fn pair_checks(curves: &[DecayCurve], config: &RunConfig) -> Result<Vec<PairCheck>> {
    let mut out = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let (a, b) = (&curves[i], &curves[j]);
            let check = match (a.engine, b.engine) {
                (Engine::Mc, _) => PairCheck {
                    a: b.engine,
                    b: a.engine,
                    metric: "max_se",
                    value: max_se(b, a),
                    tolerance: config.compare.tol_se,
                },
                (_, Engine::Mc) => PairCheck {
                    a: a.engine,
                    b: b.engine,
                    metric: "max_se",
                    value: max_se(a, b),
                    tolerance: config.compare.tol_se,
                },
                _ => PairCheck {
                    a: a.engine,
                    b: b.engine,
                    metric: "max_abs_dev",
                    value: a.max_abs_deviation(b)?,
                    tolerance: config.compare.tol_abs,
                },
            };
            out.push(check);
        }
    }
    Ok(out)
}

/// Returns the report and whether every check passed.
pub fn compare(config: &RunConfig, r: &Resolved) -> Result<(Document, bool)> {
    let curves = run_all(r, config)?;
    let checks = pair_checks(&curves, config)?;
    let mut doc = Document::new(
        "compare",
        serde_json::to_value(config)?,
        &["engine_a", "engine_b", "metric", "value", "tolerance", "pass"],
    );
    doc.note("samples", r.times.len());
    for c in &checks {
        doc.row(vec![
            c.a.name().into(),
            c.b.name().into(),
            c.metric.into(),
            c.value.into(),
            c.tolerance.into(),
            c.pass().into(),
        ]);
    }
    Ok((doc, checks.iter().all(PairCheck::pass)))
}
