//! Run configuration: defaults, TOML file, flag overrides and validation.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use telegraph_core::analytic::t2_star;
use telegraph_core::curve::Engine;
use telegraph_core::sequence::{expand, parse, PulseSchedule};
use telegraph_core::{make_params, Drive, FluctuatorParams, InitState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub levels: usize,
    /// Fluctuator relaxation time (us).
    pub t1: f64,
    pub hyperfine_mhz: f64,
    /// `0`, `+1`, `-1` or `eq`.
    pub init: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            levels: 2,
            t1: 10.0,
            hyperfine_mhz: 2.16,
            init: "-1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSection {
    /// Sequence text; CPMG with `pulses` pulses when absent.
    pub seq: Option<String>,
    pub tau_ns: f64,
    /// Total pulse count; zero means free evolution (or one pass of `seq`).
    pub pulses: usize,
    /// `qubit`, `dq`, `sq+` or `sq-`.
    pub drive: String,
    pub pulse_width_ns: f64,
}

impl Default for SequenceSection {
    fn default() -> Self {
        Self {
            seq: None,
            tau_ns: 200.0,
            pulses: 0,
            drive: "dq".into(),
            pulse_width_ns: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    /// Comma-separated engine names, or `all`.
    pub engine: String,
    pub traj: u64,
    pub seed: Option<u64>,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            engine: "analytic".into(),
            traj: 10_000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Explicit sample times (us); overrides `t_max_us` and `points`.
    pub times_us: Option<Vec<f64>>,
    /// Last sample time; the schedule length, or three free-decay times.
    pub t_max_us: Option<f64>,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            times_us: None,
            t_max_us: None,
            points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracesSection {
    pub n_traces: usize,
    /// Trace length; ten T1 by default.
    pub horizon_us: Option<f64>,
    /// Length of a fluctuator flip pulse.
    pub t_p_ns: f64,
}

impl Default for TracesSection {
    fn default() -> Self {
        Self {
            n_traces: 200,
            horizon_us: None,
            t_p_ns: 44.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub taus_ns: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            taus_ns: vec![100.0, 200.0, 260.0, 280.0, 300.0, 400.0, 600.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Largest allowed absolute deviation between deterministic engines.
    pub tol_abs: f64,
    /// Largest allowed Monte Carlo deviation, in standard errors.
    pub tol_se: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            tol_abs: 1e-3,
            tol_se: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// `csv` or `json`.
    pub format: String,
    /// Fit attached to each curve: `exp` or `osc`.
    pub fit: Option<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            format: "csv".into(),
            fit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub sequence: SequenceSection,
    pub engine: EngineSection,
    pub grid: GridSection,
    pub traces: TracesSection,
    pub sweep: SweepSection,
    pub compare: CompareSection,
    pub output: OutputSection,
}

/// Prefix of the line carrying the resolved config in CSV output.
pub const CONFIG_PREFIX: &str = "# config = ";

impl RunConfig {
    /// Load a TOML config, or the config embedded in an earlier CSV or JSON
    /// output.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_text(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        if let Some(line) = text.lines().find_map(|l| l.strip_prefix(CONFIG_PREFIX)) {
            return Ok(serde_json::from_str(line)?);
        }
        if text.trim_start().starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(text)?;
            let config = v.get("config").ok_or_else(|| anyhow!("JSON output has no 'config' field"))?;
            return Ok(serde_json::from_value(config.clone())?);
        }
        Ok(toml::from_str(text)?)
    }
}

fn field(path: &str, msg: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("invalid config: {path}: {msg}")
}

/// Config checked and turned into engine inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: FluctuatorParams,
    pub init: InitState,
    pub schedule: PulseSchedule,
    pub engines: Vec<Engine>,
    pub times: Vec<f64>,
}

pub fn parse_init(s: &str) -> Result<InitState> {
    s.parse().map_err(|_| field("model.init", format!("expected 0, +1, -1 or eq, got '{s}'")))
}

pub fn parse_drive(s: &str) -> Result<Drive> {
    s.parse().map_err(|_| field("sequence.drive", format!("expected qubit, dq, sq+ or sq-, got '{s}'")))
}

pub fn parse_engines(s: &str) -> Result<Vec<Engine>> {
    if s.trim() == "all" {
        return Ok(vec![Engine::Analytic, Engine::Mc, Engine::Lindblad]);
    }
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let e: Engine = name
            .parse()
            .map_err(|_| field("engine.engine", format!("unknown engine '{name}'")))?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    if out.is_empty() {
        return Err(field("engine.engine", "no engine selected"));
    }
    Ok(out)
}

pub fn params(m: &ModelSection) -> Result<FluctuatorParams> {
    if m.levels != 2 && m.levels != 3 {
        return Err(field("model.levels", format!("must be 2 or 3, got {}", m.levels)));
    }
    if !(m.t1 > 0.0) {
        return Err(field("model.t1", format!("must be positive, got {}", m.t1)));
    }
    if !(m.hyperfine_mhz >= 0.0) || !m.hyperfine_mhz.is_finite() {
        return Err(field("model.hyperfine_mhz", format!("must be finite and >= 0, got {}", m.hyperfine_mhz)));
    }
    Ok(make_params(m.levels, m.t1, m.hyperfine_mhz)?)
}

/// Pulse schedule from the sequence section, if it has any pulses.
pub fn pulsed_schedule(s: &SequenceSection, drive: Drive) -> Result<Option<PulseSchedule>> {
    if !(s.tau_ns > 0.0) || !s.tau_ns.is_finite() {
        return Err(field("sequence.tau_ns", format!("must be positive, got {}", s.tau_ns)));
    }
    if !(s.pulse_width_ns >= 0.0) {
        return Err(field("sequence.pulse_width_ns", format!("must be >= 0, got {}", s.pulse_width_ns)));
    }
    let tau = s.tau_ns * 1e-3;
    let width = s.pulse_width_ns * 1e-3;
    match &s.seq {
        Some(text) => {
            let ast = parse(text).map_err(|e| field("sequence.seq", e))?;
            let one = expand(&ast, tau, width, drive, 1).map_err(|e| field("sequence.seq", e))?;
            let per = one.pulse_count();
            let repeats = if s.pulses == 0 {
                1
            } else if per == 0 || s.pulses % per != 0 {
                return Err(field(
                    "sequence.pulses",
                    format!("{} is not a multiple of the {per} pulses in one pass of the sequence", s.pulses),
                ));
            } else {
                s.pulses / per
            };
            Ok(Some(expand(&ast, tau, width, drive, repeats).map_err(|e| field("sequence.seq", e))?))
        }
        None if s.pulses > 0 => Ok(Some(
            PulseSchedule::cpmg(s.pulses, tau, drive, width).map_err(|e| field("sequence", e))?,
        )),
        None => Ok(None),
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(field("grid", "empty time grid"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(field("grid.times_us", "times must be finite and >= 0"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(field("grid.times_us", "times must be strictly increasing"));
    }
    Ok(())
}

/// Validate a config for curve commands. Defaults that depend on the
/// physics (`grid.t_max_us`) are written back so the embedded config
/// reproduces the run exactly.
pub fn resolve(config: &mut RunConfig) -> Result<Resolved> {
    let params = params(&config.model)?;
    let init = parse_init(&config.model.init)?;
    params.check_state(init).map_err(|e| field("model.init", e))?;
    let drive = parse_drive(&config.sequence.drive)?;
    drive.check(params.levels()).map_err(|e| field("sequence.drive", e))?;
    let engines = parse_engines(&config.engine.engine)?;
    if engines.contains(&Engine::Mc) {
        if config.engine.seed.is_none() {
            return Err(field("engine.seed", "required when the mc engine is selected"));
        }
        if config.engine.traj == 0 {
            return Err(field("engine.traj", "must be at least 1"));
        }
    }
    let pulsed = pulsed_schedule(&config.sequence, drive)?;

    let times = match &config.grid.times_us {
        Some(t) => t.clone(),
        None => {
            if config.grid.points < 2 {
                return Err(field("grid.points", format!("need at least 2, got {}", config.grid.points)));
            }
            let t_max = match (config.grid.t_max_us, &pulsed) {
                (Some(t), _) => t,
                (None, Some(s)) => s.total_duration(),
                (None, None) => t2_star(&params, init).map(|t| 3.0 * t).unwrap_or(10.0 * params.t1()),
            };
            if !(t_max > 0.0) || !t_max.is_finite() {
                return Err(field("grid.t_max_us", format!("must be positive, got {t_max}")));
            }
            config.grid.t_max_us = Some(t_max);
            let n = config.grid.points - 1;
            (0..=n).map(|i| if i == n { t_max } else { t_max * i as f64 / n as f64 }).collect()
        }
    };
    check_times(&times)?;
    let end = *times.last().unwrap();
    let schedule = match pulsed {
        Some(s) => {
            if end > s.total_duration() * (1.0 + 1e-12) {
                return Err(field(
                    "grid",
                    format!("last sample {end} us is past the end of the sequence ({} us)", s.total_duration()),
                ));
            }
            s
        }
        None => PulseSchedule::free(end.max(f64::MIN_POSITIVE))?,
    };
    Ok(Resolved {
        params,
        init,
        schedule,
        engines,
        times,
    })
}

pub fn check_format(config: &RunConfig) -> Result<()> {
    match config.output.format.as_str() {
        "csv" | "json" => Ok(()),
        other => bail!("invalid config: output.format: expected csv or json, got '{other}'"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_and_defaults() {
        let c: RunConfig = toml::from_str("[model]\nlevels = 3\nt1 = 4300.0\n[engine]\nseed = 4\n").unwrap();
        assert_eq!(c.model.levels, 3);
        assert_eq!(c.model.hyperfine_mhz, 2.16);
        assert_eq!(c.engine.seed, Some(4));
        assert!(toml::from_str::<RunConfig>("[model]\nt2 = 1.0\n").is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.model.t1 = -1.0;
        assert!(resolve(&mut c).unwrap_err().to_string().contains("model.t1"));
        let mut c = RunConfig::default();
        c.engine.engine = "mc".into();
        assert!(resolve(&mut c).unwrap_err().to_string().contains("engine.seed"));
        let mut c = RunConfig::default();
        c.grid.times_us = Some(vec![]);
        assert!(resolve(&mut c).unwrap_err().to_string().contains("empty time grid"));
        let mut c = RunConfig::default();
        c.grid.times_us = Some(vec![0.0, 2.0, 1.0]);
        assert!(resolve(&mut c).is_err());
        let mut c = RunConfig::default();
        c.model.init = "0".into();
        assert!(resolve(&mut c).unwrap_err().to_string().contains("model.init"));
    }

    #[test]
    fn default_grid_is_written_back() {
        let mut c = RunConfig::default();
        let r = resolve(&mut c).unwrap();
        assert_eq!(r.times.len(), 101);
        assert_eq!(c.grid.t_max_us, Some(*r.times.last().unwrap()));
        let again = resolve(&mut c.clone()).unwrap();
        assert_eq!(again.times, r.times);
    }

    #[test]
    fn sequence_pulse_count() {
        let mut c = RunConfig::default();
        c.sequence.seq = Some("KDDXY16".into());
        c.sequence.pulses = 40_000;
        c.sequence.drive = "qubit".into();
        let r = resolve(&mut c).unwrap();
        assert_eq!(r.schedule.pulse_count(), 40_000);
        c.sequence.pulses = 100;
        assert!(resolve(&mut c).unwrap_err().to_string().contains("sequence.pulses"));
    }

    #[test]
    fn embedded_config_is_found() {
        let c = RunConfig::default();
        let text = format!("# telegraph-spin\n{CONFIG_PREFIX}{}\nt_us\n", serde_json::to_string(&c).unwrap());
        assert_eq!(RunConfig::from_text(&text).unwrap(), c);
        let json = serde_json::json!({ "config": c }).to_string();
        assert_eq!(RunConfig::from_text(&json).unwrap(), c);
    }
}
