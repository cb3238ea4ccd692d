//! `traces`: engineered fluctuator trace ensembles.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use telegraph_core::stochastic::{engineered_traces, TraceEnsemble};

use crate::config::{parse_drive, pulsed_schedule, RunConfig};
use crate::output::{num, Document};

fn generate(config: &RunConfig) -> Result<TraceEnsemble> {
    let t = &config.traces;
    let seed = config
        .engine
        .seed
        .ok_or_else(|| anyhow!("invalid config: engine.seed: required to generate traces"))?;
    let t1 = config.model.t1;
    if !(t1 > 0.0) {
        return Err(anyhow!("invalid config: model.t1: must be positive, got {t1}"));
    }
    if t.n_traces == 0 {
        return Err(anyhow!("invalid config: traces.n_traces: must be at least 1"));
    }
    let horizon = t.horizon_us.unwrap_or(10.0 * t1);
    let schedule = pulsed_schedule(&config.sequence, parse_drive(&config.sequence.drive)?)?;
    Ok(engineered_traces(t1, t.n_traces, horizon, t.t_p_ns * 1e-3, schedule.as_ref(), seed)?)
}

/// Generate (or load) an ensemble, optionally persist it, and report its
/// statistics.
pub fn traces(config: &mut RunConfig, load: Option<&Path>, save: Option<&Path>) -> Result<Document> {
    let ensemble = match load {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            TraceEnsemble::read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?
        }
        None => {
            let e = generate(config)?;
            config.traces.horizon_us = Some(e.horizon);
            e
        }
    };
    if let Some(p) = save {
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        ensemble.write_jsonl(BufWriter::new(f))?;
    }

    let n = 400;
    let times: Vec<f64> = (0..=n).map(|i| ensemble.horizon * i as f64 / n as f64).collect();
    let diff = ensemble.population_difference(&times);
    let mut doc = Document::new("traces", serde_json::to_value(&*config)?, &["t_us", "population_difference"]);
    if let Some(p) = load {
        doc.note("loaded_from", p.display());
    }
    doc.note("n_traces", ensemble.len());
    doc.note("discarded", ensemble.discarded);
    doc.note("cancelled", ensemble.cancelled);
    doc.note("discard_rate", num(ensemble.discard_rate()));
    match ensemble.fit_t1(&times) {
        Ok(f) => {
            doc.note("fitted_t1_us", num(f.decay_time.value));
            doc.note("fitted_t1_ci95_us", num(f.decay_time.ci95));
        }
        Err(e) => doc.note("fitted_t1_us", format!("failed: {e}")),
    }
    doc.note("digest", ensemble.digest());
    for (t, d) in times.iter().zip(diff) {
        doc.row(vec![(*t).into(), d.into()]);
    }
    Ok(doc)
}
