//! `sweep`: effective coherence time against pulse spacing.

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use telegraph_core::analytic::{sweep_t2_vs_tau, t2_star, SweepRow, T2Options};
use telegraph_core::curve::Engine;
use telegraph_core::fit::one_over_e_time;
use telegraph_core::sequence::PulseSchedule;
use telegraph_core::stochastic::mc_coherence;
use telegraph_core::{make_params, Drive, Error, FluctuatorParams, InitState};

use crate::config::{parse_drive, parse_engines, parse_init, RunConfig};
use crate::output::{num, Cell, Document};

fn value(row: &SweepRow) -> Result<Option<f64>> {
    match &row.t2 {
        Ok(t) => Ok(Some(*t)),
        Err(Error::NoCrossing { .. }) => Ok(None),
        Err(e) => Err(anyhow!("tau = {} us: {e}", row.tau)),
    }
}

fn mc_t2(p: &FluctuatorParams, init: InitState, tau: f64, horizon: f64, traj: u64, seed: u64) -> Result<Option<f64>> {
    let n = (horizon / tau).ceil().max(1.0) as usize;
    let s = PulseSchedule::cpmg(n, tau, Drive::Dq, 0.0)?;
    // Echo points between pulses, as in the analytic search.
    let times: Vec<f64> = (0..=n).step_by((n / 300).max(1)).map(|j| j as f64 * tau).collect();
    let r = mc_coherence(p, init, &s, &times, traj, seed)?;
    let env: Vec<(f64, f64)> = times.iter().zip(&r.mean).map(|(&t, z)| (t, z.norm())).collect();
    Ok(one_over_e_time(&env).ok())
}

pub fn sweep(config: &RunConfig) -> Result<Document> {
    let m = &config.model;
    crate::config::params(m)?;
    let p2 = make_params(2, m.t1, m.hyperfine_mhz)?;
    let p3 = make_params(3, m.t1, m.hyperfine_mhz)?;
    let init = parse_init(&m.init)?;
    p2.check_state(init)
        .map_err(|e| anyhow!("invalid config: model.init: sweep covers two-level fluctuators too: {e}"))?;
    let sq = match parse_drive(&config.sequence.drive)? {
        d @ (Drive::SqPlus | Drive::SqMinus) => d,
        _ => Drive::SqMinus,
    };
    let taus_ns = &config.sweep.taus_ns;
    if taus_ns.is_empty() {
        return Err(anyhow!("invalid config: sweep.taus_ns: empty"));
    }
    if taus_ns.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(anyhow!("invalid config: sweep.taus_ns: values must be positive"));
    }
    let with_mc = parse_engines(&config.engine.engine)?.contains(&Engine::Mc);
    let seed = match (with_mc, config.engine.seed) {
        (true, None) => return Err(anyhow!("invalid config: engine.seed: required when the mc engine is selected")),
        (_, s) => s.unwrap_or(0),
    };

    let taus: Vec<f64> = taus_ns.iter().map(|t| t * 1e-3).collect();
    let opts = T2Options::default();
    let two = sweep_t2_vs_tau(&p2, init, Drive::Dq, &taus, &opts)?;
    let dq = sweep_t2_vs_tau(&p3, init, Drive::Dq, &taus, &opts)?;
    let sqr = sweep_t2_vs_tau(&p3, init, sq, &taus, &opts)?;

    let mc: Vec<Option<f64>> = if with_mc {
        let traj = config.engine.traj;
        taus.par_iter()
            .zip(&two)
            .map(|(&tau, row)| match value(row)? {
                Some(t2) => mc_t2(&p2, init, tau, 3.0 * t2, traj, seed),
                None => Ok(None),
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut columns = vec!["tau_ns", "t2_2lf_us", "t2_3lf_dq_us", "t2_3lf_sq_us", "no_crossing"];
    if with_mc {
        columns.push("t2_2lf_mc_us");
    }
    let mut doc = Document::new("sweep", serde_json::to_value(config)?, &columns);
    for (name, p) in [("t2star_2lf_us", &p2), ("t2star_3lf_us", &p3)] {
        match t2_star(p, init) {
            Ok(t) => doc.note(name, num(t)),
            Err(e) => doc.note(name, e),
        }
    }
    doc.note("sq_drive", sq);
    for k in 0..taus.len() {
        let vals = [value(&two[k])?, value(&dq[k])?, value(&sqr[k])?];
        let flags: Vec<&str> = ["2lf", "3lf_dq", "3lf_sq"]
            .iter()
            .zip(&vals)
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| *n)
            .collect();
        let mut row: Vec<Cell> = vec![taus_ns[k].into()];
        row.extend(vals.iter().map(|&v| Cell::from(v)));
        row.push(flags.join(" ").into());
        if with_mc {
            row.push(mc[k].into());
        }
        doc.row(row);
    }
    Ok(doc)
}
