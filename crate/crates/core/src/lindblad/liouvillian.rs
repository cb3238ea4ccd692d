use std::collections::HashMap;

use num_complex::Complex64;

use super::density::{nuclear_coherence, DensityMatrix, QUBIT_PAIR};
use super::register::{hermiticity_error, ElectronSpin, RegisterHamiltonian, NUCLEAR_DIM};
use crate::curve::{DecayCurve, Engine};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, ExpPropagator};
use crate::model::{Drive, Level};
use crate::sequence::{Event, PulseSchedule};

/// Vectorised master-equation generator `dvec(ρ)/dt = 𝓛 vec(ρ)`
/// (column stacking).
#[derive(Debug, Clone)]
pub struct Liouvillian {
    matrix: CMat,
    spin: ElectronSpin,
    /// Number of electron jump operators `Γ|m⟩⟨m'|`.
    n_jumps: usize,
    /// `Γ²`, the rate of each jump.
    jump_rate: f64,
}

impl Liouvillian {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn spin(&self) -> ElectronSpin {
        self.spin
    }

    pub fn dim(&self) -> usize {
        self.spin.dim() * NUCLEAR_DIM
    }

    pub fn n_jumps(&self) -> usize {
        self.n_jumps
    }

    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    /// Largest entry of `vec(I)† 𝓛`: the adjoint applied to the identity.
    pub fn trace_preservation_error(&self) -> f64 {
        let d = self.dim();
        (0..d * d)
            .map(|col| (0..d).map(|i| self.matrix[(i * d + i, col)]).sum::<Complex64>().norm())
            .fold(0.0, f64::max)
    }
}

/// Build `𝓛 = -i[H, ·] + Σ_k D[L_k]` with `L_k = Γ|m⟩⟨m'|` for every
/// ordered pair of electron levels, `Γ² = 1/((2S+1) T1)`. The Hamiltonian
/// is taken in the nuclear rotating frame. `t1 = ∞` leaves only the
/// Hamiltonian part.
pub fn build_liouvillian(h: &RegisterHamiltonian, t1: f64) -> Result<Liouvillian> {
    if !(t1 > 0.0) {
        return Err(Error::InvalidParams(format!("T1 must be positive, got {t1}")));
    }
    let hm = h.rotating_matrix()?;
    let scale = hm.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let herr = hermiticity_error(&hm);
    if herr > 1e-12 * scale {
        return Err(Error::NonHermitian(herr));
    }
    let d = h.dim();
    let id = CMat::identity(d, d);
    let mut l = (id.kronecker(&hm) - hm.transpose().kronecker(&id)) * c(0.0, -1.0);

    let de = h.spin.dim();
    let jump_rate = if t1.is_finite() { 1.0 / (de as f64 * t1) } else { 0.0 };
    let mut n_jumps = 0;
    if jump_rate > 0.0 {
        let idn = CMat::identity(NUCLEAR_DIM, NUCLEAR_DIM);
        let g = jump_rate.sqrt();
        for m in 0..de {
            for mp in 0..de {
                if m == mp {
                    continue;
                }
                let mut e = CMat::zeros(de, de);
                e[(m, mp)] = c(g, 0.0);
                let lk = e.kronecker(&idn);
                let ldl = lk.adjoint() * &lk;
                l += lk.conjugate().kronecker(&lk)
                    - id.kronecker(&ldl) * c(0.5, 0.0)
                    - ldl.transpose().kronecker(&id) * c(0.5, 0.0);
                n_jumps += 1;
            }
        }
    }
    Ok(Liouvillian {
        matrix: l,
        spin: h.spin,
        n_jumps,
        jump_rate,
    })
}

/// `ρ(t) = e^{𝓛t} ρ(0)` with Hermiticity and trace restored.
pub fn propagate(l: &Liouvillian, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    Ok(propagate_with_report(l, rho0, t)?.0)
}

/// As [`propagate`], also returning the largest correction applied when
/// restoring Hermiticity and trace.
pub fn propagate_with_report(l: &Liouvillian, rho0: &DensityMatrix, t: f64) -> Result<(DensityMatrix, f64)> {
    check_state(l, rho0)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParams(format!("time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok((rho0.clone(), 0.0));
    }
    let prop = ExpPropagator::new(&l.matrix)?;
    let v = prop.at(t)? * rho0.vec();
    let mut rho = DensityMatrix::from_vec(&v, l.dim());
    let dev = rho.restore();
    Ok((rho, dev))
}

fn check_state(l: &Liouvillian, rho0: &DensityMatrix) -> Result<()> {
    if rho0.dim() != l.dim() {
        return Err(Error::InvalidDensityMatrix(format!(
            "dimension {} does not match the register ({})",
            rho0.dim(),
            l.dim()
        )));
    }
    DensityMatrix::new(rho0.matrix().clone()).map(|_| ())
}

/// `π` rotation about `cos φ x + sin φ y` on the `a ↔ b` transition of a
/// `n`-level space.
fn pi_rotation(n: usize, a: usize, b: usize, phase: f64) -> CMat {
    let mut u = CMat::identity(n, n);
    u[(a, a)] = c(0.0, 0.0);
    u[(b, b)] = c(0.0, 0.0);
    u[(a, b)] = Complex64::from_polar(1.0, -phase) * c(0.0, -1.0);
    u[(b, a)] = Complex64::from_polar(1.0, phase) * c(0.0, -1.0);
    u
}

/// Unitary of an ideal pulse on the register. Qubit pulses act on the
/// nuclear `0 ↔ +1` transition, DQ on electron `-1 ↔ +1` (`-1/2 ↔ +1/2`),
/// SQ± on electron `0 ↔ ±1`.
pub fn pulse_unitary(spin: ElectronSpin, drive: Drive, phase: f64) -> Result<CMat> {
    let de = spin.dim();
    let ide = CMat::identity(de, de);
    let idn = CMat::identity(NUCLEAR_DIM, NUCLEAR_DIM);
    let electron = |a: Level, b: Level| -> Result<CMat> {
        let (ia, ib) = spin
            .index_of(a)
            .zip(spin.index_of(b))
            .ok_or_else(|| Error::UnknownTransition(format!("{drive} on a {de}-level electron")))?;
        Ok(pi_rotation(de, ia, ib, phase).kronecker(&idn))
    };
    match drive {
        Drive::Qubit => Ok(ide.kronecker(&pi_rotation(
            NUCLEAR_DIM,
            QUBIT_PAIR.0.index(),
            QUBIT_PAIR.1.index(),
            phase,
        ))),
        Drive::Dq => electron(Level::Minus, Level::Plus),
        Drive::SqPlus => electron(Level::Zero, Level::Plus),
        Drive::SqMinus => electron(Level::Zero, Level::Minus),
    }
}

/// Superoperator of `ρ ↦ UρU†`.
fn conjugation(u: &CMat) -> CMat {
    u.conjugate().kronecker(u)
}

/// Propagate through a pulse schedule and sample `ρ` at ascending times.
/// A sample at a pulse center sees the state before that pulse.
pub fn propagate_schedule_density(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    schedule: &PulseSchedule,
    times: &[f64],
) -> Result<Vec<DensityMatrix>> {
    check_state(l, rho0)?;
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidParams("sample times must be ascending".into()));
    }
    let end = schedule.total_duration();
    if times.first().is_some_and(|&t| t < 0.0) || times.last().is_some_and(|&t| t > end * (1.0 + 1e-12)) {
        return Err(Error::LengthMismatch(format!("sample times exceed the schedule (0..{end} us)")));
    }
    let prop = ExpPropagator::new(&l.matrix)?;
    let mut cache: HashMap<u64, CMat> = HashMap::new();
    let mut advance = |v: &nalgebra::DVector<Complex64>, dt: f64| -> Result<nalgebra::DVector<Complex64>> {
        if dt <= 0.0 {
            return Ok(v.clone());
        }
        let key = dt.to_bits();
        if !cache.contains_key(&key) {
            cache.insert(key, prop.at(dt)?);
        }
        Ok(&cache[&key] * v)
    };
    let mut pulse_cache: HashMap<(Drive, u64), CMat> = HashMap::new();

    let d = l.dim();
    let mut v = rho0.vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    let sample = |v: &nalgebra::DVector<Complex64>, out: &mut Vec<DensityMatrix>| {
        let mut r = DensityMatrix::from_vec(v, d);
        r.restore();
        out.push(r);
    };
    for ev in schedule.events() {
        match ev {
            Event::Delay(dt) => {
                let t_end = t + dt;
                while next < times.len() && times[next] < t_end {
                    v = advance(&v, times[next] - t)?;
                    t = times[next];
                    sample(&v, &mut out);
                    next += 1;
                }
                v = advance(&v, t_end - t)?;
                t = t_end;
            }
            Event::Pulse(p) => {
                while next < times.len() && times[next] <= t {
                    sample(&v, &mut out);
                    next += 1;
                }
                let key = (p.target, p.phase.to_bits());
                if !pulse_cache.contains_key(&key) {
                    pulse_cache.insert(key, conjugation(&pulse_unitary(l.spin, p.target, p.phase)?));
                }
                v = &pulse_cache[&key] * &v;
            }
        }
    }
    while next < times.len() {
        sample(&v, &mut out);
        next += 1;
    }
    Ok(out)
}

/// Nuclear qubit coherence under a pulse schedule, normalised by its
/// initial value.
pub fn lindblad_dd(l: &Liouvillian, rho0: &DensityMatrix, schedule: &PulseSchedule, times: &[f64]) -> Result<DecayCurve> {
    let c0 = nuclear_coherence(rho0, QUBIT_PAIR);
    if c0.norm() < 1e-14 {
        return Err(Error::InvalidDensityMatrix("initial state carries no nuclear coherence".into()));
    }
    let values = propagate_schedule_density(l, rho0, schedule, times)?
        .iter()
        .map(|r| nuclear_coherence(r, QUBIT_PAIR) / c0)
        .collect();
    Ok(DecayCurve::new(Engine::Lindblad, times.to_vec(), values)?.with_provenance("jump_rate", l.jump_rate))
}

/// Free-evolution nuclear coherence, normalised by its initial value.
pub fn lindblad_free(l: &Liouvillian, rho0: &DensityMatrix, times: &[f64]) -> Result<DecayCurve> {
    let end = times.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    lindblad_dd(l, rho0, &PulseSchedule::free(end)?, times)
}
