use num_complex::Complex64;

use super::trace::RtnTrace;
use crate::analytic::level_permutation;
use crate::error::{Error, Result};
use crate::model::{Drive, FluctuatorParams, Level};
use crate::sequence::PulseSchedule;

/// Phase-accumulation velocity (rad/us) per fluctuator level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityMap([f64; 3]);

impl VelocityMap {
    /// Indexed by [`Level::index`].
    pub fn new(v: [f64; 3]) -> Self {
        Self(v)
    }

    pub fn from_params(params: &FluctuatorParams) -> Self {
        Self([Level::Minus, Level::Zero, Level::Plus].map(|l| params.velocity(l)))
    }

    pub fn get(&self, level: Level) -> f64 {
        self.0[level.index()]
    }
}

const IDENTITY: [Level; 3] = [Level::Minus, Level::Zero, Level::Plus];

/// `outer ∘ inner`.
fn compose(outer: &[Level; 3], inner: &[Level; 3]) -> [Level; 3] {
    inner.map(|l| outer[l.index()])
}

/// Walk a trajectory through a pulse train and report `e^{iφ}` and the
/// physical fluctuator level at each (ascending) sample time.
///
/// Pulses relabel the walker by [`level_permutation`]: for qubit and DQ
/// pulses this is the same as toggling the sign of the accumulated rate,
/// SQ pulses move the walker between `|0⟩` and one of `|±1⟩`. A sample at a
/// pulse center sees the state before that pulse.
pub(crate) fn integrate<J, E>(
    initial: Level,
    mut next_jump: J,
    pulses: &[(f64, Drive)],
    vel: &VelocityMap,
    times: &[f64],
    mut emit: E,
) where
    J: FnMut() -> Option<(f64, Level)>,
    E: FnMut(usize, Complex64, Level),
{
    let mut level = initial;
    let mut frame = IDENTITY;
    let mut physical = IDENTITY;
    let mut t = 0.0;
    let mut phi = 0.0;
    let mut jump = next_jump();
    let mut pulse_idx = 0;
    let mut rate = vel.get(frame[level.index()]);

    for (k, &ts) in times.iter().enumerate() {
        loop {
            let tj = jump.map_or(f64::INFINITY, |j| j.0);
            let tp = pulses.get(pulse_idx).map_or(f64::INFINITY, |p| p.0);
            if tj < ts && tj <= tp {
                phi += rate * (tj - t);
                t = tj;
                level = jump.unwrap().1;
                jump = next_jump();
            } else if tp < ts {
                phi += rate * (tp - t);
                t = tp;
                let perm = level_permutation(pulses[pulse_idx].1);
                frame = compose(&perm, &frame);
                if pulses[pulse_idx].1 != Drive::Qubit {
                    physical = compose(&perm, &physical);
                }
                pulse_idx += 1;
            } else {
                break;
            }
            rate = vel.get(frame[level.index()]);
        }
        phi += rate * (ts - t);
        t = ts;
        emit(k, Complex64::from_polar(1.0, phi), physical[level.index()]);
    }
}

pub(crate) fn pulse_list(schedule: &PulseSchedule) -> Vec<(f64, Drive)> {
    schedule.pulses().map(|p| (p.center, p.target)).collect()
}

/// `e^{iφ}` at the end of the schedule for one trajectory.
pub fn phase_integrate(trace: &RtnTrace, schedule: &PulseSchedule, vel: &VelocityMap) -> Result<Complex64> {
    let end = schedule.total_duration();
    Ok(phase_integrate_at(trace, schedule, vel, &[end])?[0].0)
}

/// `e^{iφ}` and the physical level at each ascending sample time.
pub fn phase_integrate_at(
    trace: &RtnTrace,
    schedule: &PulseSchedule,
    vel: &VelocityMap,
    times: &[f64],
) -> Result<Vec<(Complex64, Level)>> {
    if schedule.total_duration() > trace.horizon() * (1.0 + 1e-12) {
        return Err(Error::LengthMismatch(format!(
            "schedule lasts {} us but the trace ends at {} us",
            schedule.total_duration(),
            trace.horizon()
        )));
    }
    check_times(times, trace.horizon())?;
    let mut jumps = trace.jumps();
    let mut out = vec![(Complex64::new(1.0, 0.0), trace.initial()); times.len()];
    integrate(
        trace.initial(),
        || jumps.next(),
        &pulse_list(schedule),
        vel,
        times,
        |k, z, l| out[k] = (z, l),
    );
    Ok(out)
}

pub(crate) fn check_times(times: &[f64], end: f64) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite);
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidParams("sample times must be ascending".into()));
    }
    if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
        if first < 0.0 || last > end * (1.0 + 1e-12) {
            return Err(Error::LengthMismatch(format!(
                "sample times [{first}, {last}] us exceed [0, {end}] us"
            )));
        }
    }
    Ok(())
}
