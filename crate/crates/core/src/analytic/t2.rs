use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use super::eigen::sin_over_w;
use super::propagate::cycle_block;
use crate::error::{Error, Result};
use crate::linalg::{mat_pow, CMat, ExpPropagator};
use crate::model::{generator, initial_vector, Drive, FluctuatorParams, InitState, Levels};

/// Search limits for coherence-time extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T2Options {
    /// Largest number of DD cycles examined.
    pub max_cycles: u64,
    /// Cycles stepped one at a time before switching to geometric bracketing.
    pub linear_cycles: u64,
    /// Largest number of fine time steps in a free-decay scan.
    pub max_free_steps: u64,
}

impl Default for T2Options {
    fn default() -> Self {
        Self {
            max_cycles: 10_000_000,
            linear_cycles: 4096,
            max_free_steps: 50_000_000,
        }
    }
}

fn threshold() -> f64 {
    (-1.0f64).exp()
}

fn amp(x: &DVector<Complex64>) -> f64 {
    x[0].norm()
}

/// Fractional position of the 1/e crossing between two magnitudes, by
/// linear interpolation of their logarithms.
fn log_fraction(a_lo: f64, a_hi: f64) -> f64 {
    let (l0, l1, target) = (a_lo.ln(), a_hi.max(f64::MIN_POSITIVE).ln(), -1.0);
    if l1 == l0 {
        return 1.0;
    }
    ((target - l0) / (l1 - l0)).clamp(0.0, 1.0)
}

/// Effective coherence time under CPMG-spaced ideal π pulses: the time `Nτ`
/// at which |coherence| first drops to 1/e, interpolated log-linearly
/// between the bracketing cycle counts.
pub fn effective_t2(params: &FluctuatorParams, init: InitState, drive: Drive, tau: f64) -> Result<f64> {
    effective_t2_with(params, init, drive, tau, &T2Options::default())
}

pub fn effective_t2_with(
    params: &FluctuatorParams,
    init: InitState,
    drive: Drive,
    tau: f64,
    opts: &T2Options,
) -> Result<f64> {
    let thr = threshold();
    let b = cycle_block(params, drive, tau)?;
    let mut x = initial_vector(params, init)?.into_entries();
    let mut n: u64 = 0;

    let linear = opts.linear_cycles.min(opts.max_cycles);
    while n < linear {
        let y = &b * &x;
        n += 1;
        if amp(&y) <= thr {
            return Ok((n as f64 - 1.0 + log_fraction(amp(&x), amp(&y))) * tau);
        }
        x = y;
    }

    let mut step = n.max(1);
    let mut b_step = mat_pow(&b, step);
    loop {
        if n >= opts.max_cycles {
            return Err(Error::NoCrossing {
                lower_bound: opts.max_cycles as f64 * tau,
            });
        }
        let (s, y) = if n + step > opts.max_cycles {
            let s = opts.max_cycles - n;
            (s, mat_pow(&b, s) * &x)
        } else {
            (step, &b_step * &x)
        };
        if amp(&y) <= thr {
            return Ok(bisect_cycles(&b, n, x, n + s, y) * tau);
        }
        n += s;
        x = y;
        b_step = &b_step * &b_step;
        step *= 2;
    }
}

/// Narrow a bracket `[lo, hi]` of cycle counts down to adjacent counts and
/// interpolate. Returns the crossing in units of cycles.
fn bisect_cycles(b: &CMat, mut lo: u64, mut x_lo: DVector<Complex64>, mut hi: u64, mut x_hi: DVector<Complex64>) -> f64 {
    let thr = threshold();
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let x_mid = mat_pow(b, mid - lo) * &x_lo;
        if amp(&x_mid) <= thr {
            hi = mid;
            x_hi = x_mid;
        } else {
            lo = mid;
            x_lo = x_mid;
        }
    }
    lo as f64 + log_fraction(amp(&x_lo), amp(&x_hi))
}

/// Free-decay coherence time: first time at which |coherence| = 1/e.
pub fn t2_star(params: &FluctuatorParams, init: InitState) -> Result<f64> {
    t2_star_with(params, init, &T2Options::default())
}

pub fn t2_star_with(params: &FluctuatorParams, init: InitState, opts: &T2Options) -> Result<f64> {
    let thr = threshold();
    let x0 = initial_vector(params, init)?.into_entries();
    if params.v() == 0.0 {
        return Err(Error::NoCrossing {
            lower_bound: f64::INFINITY,
        });
    }
    // The step resolves both the phase rotation and the jump dynamics; the
    // crossing is then refined continuously inside the bracketing step.
    let scale = params.v().max(params.levels().count() as f64 * params.gamma());
    let h = 0.1 / scale;
    let prop = ExpPropagator::new(generator(params).matrix())?;
    let e_h = prop.at(h)?;

    let mut x = x0;
    let mut k: u64 = 0;
    loop {
        if k >= opts.max_free_steps {
            return Err(Error::NoCrossing {
                lower_bound: k as f64 * h,
            });
        }
        let y = &e_h * &x;
        if amp(&y) <= thr {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if amp(&(prop.at(mid)? * &x)) <= thr {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(k as f64 * h + 0.5 * (lo + hi));
        }
        x = y;
        k += 1;
    }
}

/// Per-cycle decay rate of a strongly coupled two-level fluctuator under
/// CPMG pulses:
///
/// `1/T2 = γ - (1/τ) ln[(γ sin Wτ + sqrt(v² - γ² cos² Wτ)) / W]`,
/// `W = sqrt(v² - γ²)`.
///
/// The bracket equals `γ s + sqrt(1 + γ² s²)` with `s = sin(Wτ)/W`, which is
/// real for either sign of `v² - γ²` and smooth through `v = γ`.
pub fn t2_rate_2lf(params: &FluctuatorParams, tau: f64) -> Result<f64> {
    if params.levels() != Levels::Two {
        return Err(Error::InvalidParams("t2_rate_2lf needs a two-level fluctuator".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParams(format!("tau must be positive, got {tau}")));
    }
    let g = params.gamma();
    let v = params.v();
    let s = sin_over_w(v * v - g * g, tau);
    Ok(g - (g * s).asinh() / tau)
}

/// Dominant-eigenvalue approximation of the free-decay time of a
/// three-level fluctuator:
///
/// `1/T2* = 2γ - (3γ² - v²)/(3^{1/3} K) - K/3^{2/3}`,
/// `K = (9γ³ + √3 v sqrt(v⁴ - 9v²γ² + 27γ⁴))^{1/3}`.
///
/// The radicand has no real roots in `v²`, so `K` is real and positive;
/// the principal complex root is taken regardless and its real part kept.
pub fn weak_t2star_3lf(params: &FluctuatorParams) -> Result<f64> {
    if params.levels() != Levels::Three {
        return Err(Error::InvalidParams("weak_t2star_3lf needs a three-level fluctuator".into()));
    }
    let g = params.gamma();
    let v = params.v();
    let rad = Complex64::new(v.powi(4) - 9.0 * v * v * g * g + 27.0 * g.powi(4), 0.0).sqrt();
    let k = (Complex64::new(9.0 * g.powi(3), 0.0) + 3f64.sqrt() * v * rad).powf(1.0 / 3.0);
    let rate = Complex64::new(2.0 * g, 0.0)
        - Complex64::new(3.0 * g * g - v * v, 0.0) / (3f64.cbrt() * k)
        - k / 3f64.powf(2.0 / 3.0);
    let rate = rate.re;
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

/// Free-decay time in the strong-coupling limit, independent of `v`.
pub fn strong_limit_t2star(levels: Levels, t1: f64) -> f64 {
    match levels {
        Levels::Two => 2.0 * t1,
        Levels::Three => 1.5 * t1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    /// Effective coherence time, or the error (typically `NoCrossing`).
    pub t2: Result<f64>,
}

/// Effective coherence time for each pulse spacing.
pub fn sweep_t2_vs_tau(
    params: &FluctuatorParams,
    init: InitState,
    drive: Drive,
    taus: &[f64],
    opts: &T2Options,
) -> Result<Vec<SweepRow>> {
    if let Some(bad) = taus.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParams(format!("tau must be positive, got {bad}")));
    }
    drive.check(params.levels())?;
    Ok(taus
        .par_iter()
        .map(|&tau| SweepRow {
            tau,
            t2: effective_t2_with(params, init, drive, tau, opts),
        })
        .collect())
}
