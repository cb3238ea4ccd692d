use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mc::McResult;
use crate::analytic::propagate_schedule;
use crate::curve::{DecayCurve, Engine};
use crate::error::{Error, Result};
use crate::model::{FluctuatorParams, InitState, Level};
use crate::sequence::PulseSchedule;

/// Ramsey measurement settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyConfig {
    /// Detuning of the readout frame (rad/us).
    pub detuning: f64,
    /// Phase of the second π/2 pulse: 0 or π.
    pub phase: f64,
    /// Fluctuator level the readout is conditioned on; the walker starts here.
    pub original: Level,
    pub times: Vec<f64>,
    /// Pulses applied between the π/2 pulses; free evolution if `None`.
    pub schedule: Option<PulseSchedule>,
}

/// Common-mode readout error: an additive signal proportional to the
/// population of each fluctuator level at readout, independent of the
/// qubit phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutErrorModel {
    /// Indexed by [`Level::index`].
    pub common_mode: [f64; 3],
}

impl Default for ReadoutErrorModel {
    fn default() -> Self {
        Self {
            common_mode: [0.0, 0.5, 0.25],
        }
    }
}

/// Coherence and populations resolved by physical fluctuator level.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSeries {
    pub times: Vec<f64>,
    pub coherence: Vec<[Complex64; 3]>,
    pub populations: Vec<[f64; 3]>,
}

impl From<&McResult> for ManifoldSeries {
    fn from(r: &McResult) -> Self {
        Self {
            times: r.times.clone(),
            coherence: r.by_level.clone(),
            populations: r.populations.clone(),
        }
    }
}

/// Level-resolved series from the analytic engine. Populations come from
/// the same propagation with zero coupling.
pub fn analytic_manifolds(
    params: &FluctuatorParams,
    init: InitState,
    schedule: &PulseSchedule,
    times: &[f64],
) -> Result<ManifoldSeries> {
    let coherence = propagate_schedule(params, init, schedule, times)?
        .iter()
        .map(|s| s.manifold_coherence())
        .collect();
    let blind = FluctuatorParams::from_rates(params.levels(), params.gamma(), 0.0)?;
    let populations = propagate_schedule(&blind, init, schedule, times)?
        .iter()
        .map(|s| s.manifold_coherence().map(|z| z.re))
        .collect();
    Ok(ManifoldSeries {
        times: times.to_vec(),
        coherence,
        populations,
    })
}

/// Raw and differential Ramsey signals.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialReadout {
    pub times: Vec<f64>,
    /// Signal with the configured second-pulse phase.
    pub signal: Vec<f64>,
    /// Signal with the opposite phase.
    pub signal_opposite: Vec<f64>,
    /// `signal - signal_opposite`.
    pub difference: Vec<f64>,
    /// Coherence carried by walkers in the original level, in the readout
    /// frame.
    pub conditioned: Vec<Complex64>,
}

impl DifferentialReadout {
    /// The difference as a curve; its envelope is `|conditioned|`.
    pub fn difference_curve(&self, engine: Engine) -> DecayCurve {
        let sign = if self.signal.first() >= self.signal_opposite.first() { 1.0 } else { -1.0 };
        let values = self
            .difference
            .iter()
            .zip(&self.conditioned)
            .map(|(&d, c)| Complex64::new(d, sign * c.im))
            .collect();
        DecayCurve::new(engine, self.times.clone(), values).expect("lengths agree")
    }
}

fn check_phase(phase: f64) -> Result<f64> {
    if phase == 0.0 {
        Ok(0.0)
    } else if (phase - PI).abs() < 1e-12 {
        Ok(PI)
    } else {
        Err(Error::InvalidPhase(phase))
    }
}

/// Combine level-resolved data into the two Ramsey signals
///
/// `S(θ) = p₀/2 + Re(e^{i(δt+θ)} c₀)/2 + Σ_l ε_l p_l`,
///
/// where `c₀, p₀` belong to the original level. The common-mode terms are
/// the same for both phases and drop out of the difference.
pub fn differential_from_manifolds(
    series: &ManifoldSeries,
    config: &RamseyConfig,
    errors: &ReadoutErrorModel,
) -> Result<DifferentialReadout> {
    let theta = check_phase(config.phase)?;
    let o = config.original.index();
    let n = series.times.len();
    let mut out = DifferentialReadout {
        times: series.times.clone(),
        signal: Vec::with_capacity(n),
        signal_opposite: Vec::with_capacity(n),
        difference: Vec::with_capacity(n),
        conditioned: Vec::with_capacity(n),
    };
    for k in 0..n {
        let t = series.times[k];
        let c = series.coherence[k][o] * Complex64::from_polar(1.0, config.detuning * t);
        let p = &series.populations[k];
        let common: f64 = (0..3).map(|l| errors.common_mode[l] * p[l]).sum();
        let s = |th: f64| 0.5 * p[o] + 0.5 * (c * Complex64::from_polar(1.0, th)).re + common;
        let (a, b) = (s(theta), s(theta + PI));
        out.signal.push(a);
        out.signal_opposite.push(b);
        out.difference.push(a - b);
        out.conditioned.push(c);
    }
    Ok(out)
}

/// Differential readout computed with the analytic engine.
pub fn differential_signal(
    params: &FluctuatorParams,
    config: &RamseyConfig,
    errors: &ReadoutErrorModel,
) -> Result<DifferentialReadout> {
    check_phase(config.phase)?;
    let end = config.times.last().copied().unwrap_or(0.0);
    let free;
    let schedule = match &config.schedule {
        Some(s) => s,
        None => {
            free = PulseSchedule::free(end.max(f64::MIN_POSITIVE))?;
            &free
        }
    };
    let series = analytic_manifolds(params, InitState::Definite(config.original), schedule, &config.times)?;
    differential_from_manifolds(&series, config, errors)
}
