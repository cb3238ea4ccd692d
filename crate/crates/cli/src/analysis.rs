//! `fit` and `parse-seq`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use telegraph_core::fit::{
    best_fixed_model, fit_exponential, fit_osc_exponential, joint_model_compare, one_over_e_time, RatioModel,
};
use telegraph_core::sequence::{expand, parse, validate, Severity};
use telegraph_core::Drive;

use crate::output::{num, Cell, Document};

/// Options of the `fit` command, embedded in its output.
#[derive(Debug, Clone, Serialize)]
pub struct FitOptions {
    pub input: String,
    pub time_column: String,
    pub column: String,
    pub select_engine: Option<String>,
    pub model: String,
    pub joint: Option<String>,
}

/// `(t, y)` pairs from a CSV table; `#` lines are skipped and the first
/// remaining line names the columns.
pub fn read_points(path: &Path, time_column: &str, column: &str, engine: Option<&str>) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| anyhow!("{}: no header line", path.display()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| anyhow!("{}: no column '{name}' (have {})", path.display(), names.join(", ")))
    };
    let it = find(time_column)?;
    let iy = find(column)?;
    let ie = match engine {
        Some(_) => Some(find("engine")?),
        None => None,
    };
    let mut out = Vec::new();
    for (ln, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if let (Some(ie), Some(want)) = (ie, engine) {
            if cells.get(ie) != Some(&want) {
                continue;
            }
        }
        let get = |i: usize| -> Result<Option<f64>> {
            match cells.get(i) {
                None | Some(&"") => Ok(None),
                Some(s) => s
                    .parse()
                    .map(Some)
                    .with_context(|| format!("{}:{}: bad number '{s}'", path.display(), ln + 1)),
            }
        };
        if let (Some(t), Some(y)) = (get(it)?, get(iy)?) {
            out.push((t, y));
        }
    }
    if out.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(out)
}

pub fn fit(opts: &FitOptions) -> Result<Document> {
    let config = serde_json::to_value(opts)?;
    let pts = read_points(Path::new(&opts.input), &opts.time_column, &opts.column, opts.select_engine.as_deref())?;
    if let Some(second) = &opts.joint {
        let pts2 = read_points(Path::new(second), &opts.time_column, &opts.column, opts.select_engine.as_deref())?;
        let models = [RatioModel::Fixed(1.5), RatioModel::Fixed(2.0), RatioModel::Fixed(1.0), RatioModel::Free];
        let rows = joint_model_compare(&pts, &pts2, &models)?;
        let mut doc = Document::new(
            "fit",
            config,
            &["model", "ratio", "t1", "sigma_t1", "sigma_ratio", "mse", "converged", "error"],
        );
        let label = |m: RatioModel| match m {
            RatioModel::Fixed(r) => format!("fixed {r}"),
            RatioModel::Free => "free".to_string(),
        };
        match best_fixed_model(&rows) {
            Some(i) => doc.note("best_fixed_model", label(rows[i].model)),
            None => doc.note("best_fixed_model", "none"),
        }
        for r in &rows {
            doc.row(vec![
                label(r.model).into(),
                r.ratio.into(),
                r.t1.into(),
                r.sigma_t1.into(),
                r.sigma_ratio.into(),
                r.mse.into(),
                r.converged.into(),
                r.error.clone().map_or(Cell::Null, Cell::Text),
            ]);
        }
        return Ok(doc);
    }

    let f = match opts.model.as_str() {
        "exp" => fit_exponential(&pts)?,
        "osc" => fit_osc_exponential(&pts)?,
        other => bail!("unknown fit model '{other}' (expected exp or osc)"),
    };
    let mut doc = Document::new("fit", config, &["parameter", "value", "ci95"]);
    doc.note("model", f.model);
    doc.note("mse", num(f.mse));
    doc.note("n_points", f.n_points);
    doc.note("iterations", f.iterations);
    doc.note("converged", f.converged);
    for w in &f.warnings {
        doc.note("warning", w);
    }
    match one_over_e_time(&pts) {
        Ok(t) => doc.note("t_1e", num(t)),
        Err(e) => doc.note("t_1e", e),
    }
    for (name, e) in [
        ("amplitude", f.amplitude),
        ("decay_time", f.decay_time),
        ("frequency", f.frequency),
        ("phase", f.phase),
        ("offset", f.offset),
    ] {
        doc.row(vec![name.into(), e.value.into(), e.ci95.into()]);
    }
    Ok(doc)
}

/// Options of the `parse-seq` command, embedded in its output.
#[derive(Debug, Clone, Serialize)]
pub struct SeqOptions {
    pub seq: String,
    pub tau_ns: f64,
    pub pulse_width_ns: f64,
    pub drive: String,
    pub repeats: usize,
    pub hyperfine_mhz: Option<f64>,
}

/// Returns the report, the schedule text and whether validation found
/// no errors.
pub fn parse_seq(opts: &SeqOptions) -> Result<(Document, String, bool)> {
    let ast = parse(&opts.seq)?;
    let drive: Drive = opts.drive.parse()?;
    if opts.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let one = expand(&ast, opts.tau_ns * 1e-3, opts.pulse_width_ns * 1e-3, drive, 1)?;
    let s = expand(&ast, opts.tau_ns * 1e-3, opts.pulse_width_ns * 1e-3, drive, opts.repeats)?;
    let report = validate(&s, opts.hyperfine_mhz);
    let mut doc = Document::new("parse-seq", serde_json::to_value(opts)?, &["severity", "message"]);
    doc.note("canonical", &ast);
    doc.note("pulses_per_pass", one.pulse_count());
    doc.note("pulses", s.pulse_count());
    doc.note("duration_us", num(s.total_duration()));
    for f in &report.findings {
        let sev = match f.severity {
            Severity::Note => "note",
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        doc.row(vec![sev.into(), f.message.clone().into()]);
    }
    Ok((doc, s.to_text(), !report.has_errors()))
}
