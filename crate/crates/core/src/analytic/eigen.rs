use num_complex::Complex64;

use super::propagate::cycle_block;
use crate::error::{Error, Result};
use crate::linalg::eig;
use crate::model::{initial_vector, Drive, FluctuatorParams, InitState, Levels};

/// Spectral decomposition of the per-cycle block `B`: the coherence after
/// `N` cycles is `Σ c_i λ_i^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    pub tau: f64,
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    pub coefficients: Vec<Complex64>,
    /// `-ln|λ| / τ` per eigenvalue.
    pub decay_rates: Vec<f64>,
    /// Set when the eigenvector matrix is ill conditioned (block close to
    /// defective); the expansion is then unreliable.
    pub degenerate: bool,
}

impl EigenReport {
    /// `Σ c_i λ_i^N`.
    pub fn reconstruct(&self, n: u32) -> Complex64 {
        self.eigenvalues
            .iter()
            .zip(&self.coefficients)
            .map(|(l, c)| c * l.powu(n))
            .sum()
    }

    /// Index of the eigenvalue with the largest coefficient magnitude.
    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.coefficients.iter().enumerate() {
            if c.norm() > self.coefficients[best].norm() {
                best = i;
            }
        }
        best
    }
}

pub fn eigen_report(params: &FluctuatorParams, init: InitState, drive: Drive, tau: f64) -> Result<EigenReport> {
    let b = cycle_block(params, drive, tau)?;
    let x0 = initial_vector(params, init)?.into_entries();
    let e = eig(&b).ok_or_else(|| Error::NonConvergence("eigendecomposition of the cycle block failed".into()))?;
    let proj = &e.inverse * &x0;
    let mut terms: Vec<(Complex64, Complex64)> = e
        .values
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, e.vectors[(0, i)] * proj[i]))
        .collect();
    terms.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
    let eigenvalues: Vec<Complex64> = terms.iter().map(|t| t.0).collect();
    let coefficients = terms.iter().map(|t| t.1).collect();
    let decay_rates = eigenvalues.iter().map(|l| -l.norm().ln() / tau).collect();
    Ok(EigenReport {
        tau,
        eigenvalues,
        coefficients,
        decay_rates,
        degenerate: !e.is_well_conditioned(),
    })
}

/// Closed-form eigenvalues and expansion coefficients of the two-level
/// cycle block.
///
/// `λ± = e^{-γτ}(γ sin Wτ ± sqrt(v² - γ² cos² Wτ))/W`. With initial
/// `(P, p) = (1, p)` the coherence is
/// `(p c₁ + c₃) λ₊^N + (-p c₁ + c₄) λ₋^N`, where
/// `c₁ = i v γ sin²(Wτ/2)/(W S)`, `c₃,₄ = 1/2 ± (v² - γ² cos Wτ)/(2 W S)`,
/// `S = sqrt(v² - γ² cos² Wτ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelClosedForm {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub c1: Complex64,
    pub c3: f64,
    pub c4: f64,
    pub coeff_plus: Complex64,
    pub coeff_minus: Complex64,
}

pub fn closed_form_2lf(params: &FluctuatorParams, init: InitState, tau: f64) -> Result<TwoLevelClosedForm> {
    if params.levels() != Levels::Two {
        return Err(Error::InvalidParams("closed_form_2lf needs a two-level fluctuator".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParams(format!("tau must be positive, got {tau}")));
    }
    let g = params.gamma();
    let v = params.v();
    let w2 = v * v - g * g;
    // Everything is expressed through sin(Wτ)/W and (1 - cos Wτ)/W², which
    // are real and smooth in W² of either sign.
    let s = sin_over_w(w2, tau);
    let sh = sin_over_w(w2, tau / 2.0);
    let q = 2.0 * sh * sh;
    let r = (1.0 + g * g * s * s).sqrt();
    let decay = (-g * tau).exp();
    let c1 = Complex64::new(0.0, v * g * q / (2.0 * r));
    let a = (1.0 + g * g * q) / (2.0 * r);
    let c3 = 0.5 + a;
    let c4 = 0.5 - a;
    let p = initial_vector(params, init)?.entries()[1];
    Ok(TwoLevelClosedForm {
        lambda_plus: decay * (g * s + r),
        lambda_minus: decay * (g * s - r),
        c1,
        c3,
        c4,
        coeff_plus: p * c1 + c3,
        coeff_minus: -p * c1 + c4,
    })
}

/// `sin(Wτ)/W` with `W² = w2`, continued to `sinh(|W|τ)/|W|` for `w2 < 0`.
pub(crate) fn sin_over_w(w2: f64, tau: f64) -> f64 {
    let w = w2.abs().sqrt();
    let x = w * tau;
    if x < 1e-4 {
        tau * (1.0 - w2.signum() * x * x / 6.0 + x.powi(4) / 120.0)
    } else if w2 > 0.0 {
        x.sin() / w
    } else {
        x.sinh() / w
    }
}
