//! Least-squares decay fits, 1/e extraction and joint model comparison.

mod joint;
mod lm;

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use lm::{levenberg_marquardt, LmOutcome};

pub use joint::{best_fixed_model, joint_model_compare, ModelRow, RatioModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// `a e^{-t/T} + c`
    Exponential,
    /// `a e^{-t/T} cos(ωt + φ) + c`
    OscExponential,
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitModel::Exponential => "exponential",
            FitModel::OscExponential => "osc_exponential",
        })
    }
}

/// Fitted parameter with its 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci95: f64,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Self { value, ci95: 0.0 }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.ci95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub amplitude: Estimate,
    pub decay_time: Estimate,
    /// Angular frequency; zero for the plain exponential.
    pub frequency: Estimate,
    pub phase: Estimate,
    pub offset: Estimate,
    /// `SSE / (n - p)`.
    pub mse: f64,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    /// SSE after each accepted refinement step.
    #[serde(skip)]
    pub sse_history: Vec<f64>,
}

impl FitResult {
    /// Evaluate the fitted model.
    pub fn eval(&self, t: f64) -> f64 {
        let decay = (-t / self.decay_time.value).exp();
        let osc = match self.model {
            FitModel::Exponential => 1.0,
            FitModel::OscExponential => (self.frequency.value * t + self.phase.value).cos(),
        };
        self.amplitude.value * decay * osc + self.offset.value
    }

    /// Plain-text report with a fixed field order.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, name: &str, e: &Estimate| {
            writeln!(s, "{name} = {:.10e} +/- {:.10e}", e.value, e.ci95).unwrap();
        };
        writeln!(s, "model = {}", self.model).unwrap();
        row(&mut s, "amplitude", &self.amplitude);
        row(&mut s, "decay_time", &self.decay_time);
        row(&mut s, "frequency", &self.frequency);
        row(&mut s, "phase", &self.phase);
        row(&mut s, "offset", &self.offset);
        writeln!(s, "mse = {:.10e}", self.mse).unwrap();
        writeln!(s, "n_points = {}", self.n_points).unwrap();
        writeln!(s, "iterations = {}", self.iterations).unwrap();
        writeln!(s, "converged = {}", self.converged).unwrap();
        for w in &self.warnings {
            writeln!(s, "warning = {w}").unwrap();
        }
        s
    }
}

/// Two-sided 95% Student-t quantile.
pub(crate) fn t95(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof.max(1) as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

/// 95% half-widths from the Jacobian at the optimum. Returns NaN entries if
/// the normal matrix is singular.
pub(crate) fn ci_half_widths(jac: &DMatrix<f64>, sse: f64, n: usize) -> Vec<f64> {
    let p = jac.ncols();
    let dof = n.saturating_sub(p);
    let s2 = if dof > 0 { sse / dof as f64 } else { f64::NAN };
    let q = t95(dof);
    match (jac.transpose() * jac).try_inverse() {
        Some(cov) => (0..p).map(|i| q * (s2 * cov[(i, i)]).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; p],
    }
}

fn check_points(points: &[(f64, f64)], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::InvalidParams(format!(
            "need at least {min} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Least-squares solution of `X β = y` (column-pivoted via SVD).
pub(crate) fn linear_lsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(y, 1e-12).ok()?;
    let sse = (x * &beta - y).norm_squared();
    sse.is_finite().then_some((beta, sse))
}

/// Log-spaced grid of candidate decay times covering the sampled span.
pub(crate) fn time_grid(points: &[(f64, f64)], n: usize) -> Vec<f64> {
    let tmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let tmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = (tmax - tmin).max(f64::MIN_POSITIVE);
    let lo = (span / 1000.0).ln();
    let hi = (span * 100.0).ln();
    (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn exp_model<'a>(points: &'a [(f64, f64)], w: &[f64]) -> impl Fn(&[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> + 'a {
    let w = w.to_vec();
    move |p: &[f64]| {
        let (a, tt, c) = (p[0], p[1], p[2]);
        if !(tt > 0.0) {
            return None;
        }
        let n = points.len();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 3);
        for (i, &(t, y)) in points.iter().enumerate() {
            let e = (-t / tt).exp();
            r[i] = w[i] * (a * e + c - y);
            j[(i, 0)] = w[i] * e;
            j[(i, 1)] = w[i] * a * e * t / (tt * tt);
            j[(i, 2)] = w[i];
        }
        Some((r, j))
    }
}

/// Fit `a e^{-t/T} + c` by unweighted least squares.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<FitResult> {
    fit_exponential_weighted(points, None)
}

/// Fit `a e^{-t/T} + c`, optionally weighting each residual by `1/σ_i`.
pub fn fit_exponential_weighted(points: &[(f64, f64)], sigma: Option<&[f64]>) -> Result<FitResult> {
    check_points(points, 4)?;
    let w = weights(points.len(), sigma)?;
    let y = DVector::from_iterator(points.len(), points.iter().zip(&w).map(|((_, y), w)| y * w));
    if y.iter().all(|v| (v - y[0]).abs() <= 1e-14 * y[0].abs().max(1e-300)) {
        return Err(Error::NonConvergence("data are constant; no decay to fit".into()));
    }

    // Variable projection over T: for each grid value the amplitude and
    // offset follow from a linear solve.
    let grid = time_grid(points, 200);
    let mut candidates: Vec<(f64, f64, f64, f64)> = Vec::new();
    for &tt in &grid {
        let x = DMatrix::from_fn(points.len(), 2, |i, k| {
            w[i] * if k == 0 { (-points[i].0 / tt).exp() } else { 1.0 }
        });
        if let Some((beta, sse)) = linear_lsq(&x, &y) {
            candidates.push((sse, beta[0], tt, beta[1]));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let model = exp_model(points, &w);
    let best = candidates
        .iter()
        .take(3)
        .filter_map(|&(_, a, tt, c)| levenberg_marquardt(&model, &[a, tt, c]))
        .min_by(|a, b| a.sse.total_cmp(&b.sse))
        .ok_or_else(|| Error::NonConvergence("no start produced a finite fit".into()))?;

    let (a, tt, c) = (best.params[0], best.params[1], best.params[2]);
    if tt >= 0.99 * grid[grid.len() - 1] || a.abs() < 1e-12 * y.amax() {
        return Err(Error::NonConvergence(format!("decay time diverges (T = {tt:e})")));
    }
    let ci = ci_half_widths(&best.jacobian, best.sse, points.len());
    Ok(FitResult {
        model: FitModel::Exponential,
        amplitude: Estimate { value: a, ci95: ci[0] },
        decay_time: Estimate { value: tt, ci95: ci[1] },
        frequency: Estimate::exact(0.0),
        phase: Estimate::exact(0.0),
        offset: Estimate { value: c, ci95: ci[2] },
        mse: best.sse / (points.len() - 3) as f64,
        n_points: points.len(),
        iterations: best.iterations,
        converged: best.converged,
        warnings: Vec::new(),
        sse_history: best.history,
    })
}

fn weights(n: usize, sigma: Option<&[f64]>) -> Result<Vec<f64>> {
    match sigma {
        None => Ok(vec![1.0; n]),
        Some(s) if s.len() != n => Err(Error::InvalidParams(format!(
            "{} uncertainties for {n} points",
            s.len()
        ))),
        Some(s) if s.iter().any(|x| !(*x > 0.0) || !x.is_finite()) => {
            Err(Error::InvalidParams("uncertainties must be positive".into()))
        }
        Some(s) => Ok(s.iter().map(|x| 1.0 / x).collect()),
    }
}

/// Power of the mean-removed data at angular frequency `omega`.
fn periodogram(points: &[(f64, f64)], mean: f64, omega: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for &(t, y) in points {
        let (s, c) = (omega * t).sin_cos();
        re += (y - mean) * c;
        im += (y - mean) * s;
    }
    re * re + im * im
}

fn osc_model(points: &[(f64, f64)]) -> impl Fn(&[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> + '_ {
    move |p: &[f64]| {
        let (a, tt, w, phi, c) = (p[0], p[1], p[2], p[3], p[4]);
        if !(tt > 0.0) {
            return None;
        }
        let n = points.len();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 5);
        for (i, &(t, y)) in points.iter().enumerate() {
            let e = (-t / tt).exp();
            let (s, co) = (w * t + phi).sin_cos();
            r[i] = a * e * co + c - y;
            j[(i, 0)] = e * co;
            j[(i, 1)] = a * e * co * t / (tt * tt);
            j[(i, 2)] = -a * e * s * t;
            j[(i, 3)] = -a * e * s;
            j[(i, 4)] = 1.0;
        }
        Some((r, j))
    }
}

/// Fit `a e^{-t/T} cos(ωt + φ) + c`.
///
/// The frequency is seeded from the periodogram peak of the mean-removed
/// data. If two peaks lie within 3 dB the result carries a warning. Data
/// without a resolvable oscillation fall back to the plain exponential with
/// `ω = 0`.
pub fn fit_osc_exponential(points: &[(f64, f64)]) -> Result<FitResult> {
    check_points(points, 8)?;
    let n = points.len();
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let span = sorted[n - 1].0 - sorted[0].0;
    if !(span > 0.0) {
        return Err(Error::InvalidParams("sample times must span a positive interval".into()));
    }
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1].0 - w[0].0).filter(|g| *g > 0.0).collect();
    gaps.sort_by(f64::total_cmp);
    let dt = gaps[gaps.len() / 2];
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n as f64;

    let nyquist = std::f64::consts::PI / dt;
    let d_omega = std::f64::consts::PI / span / 4.0;
    let n_omega = ((nyquist / d_omega) as usize).clamp(8, 20_000);
    let spectrum: Vec<(f64, f64)> = (1..=n_omega)
        .map(|k| {
            let w = k as f64 * nyquist / n_omega as f64;
            (w, periodogram(points, mean, w))
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (0..spectrum.len())
        .filter(|&i| {
            let left = if i == 0 { periodogram(points, mean, 0.0) } else { spectrum[i - 1].1 };
            let right = spectrum.get(i + 1).map_or(f64::NEG_INFINITY, |s| s.1);
            spectrum[i].1 >= left && spectrum[i].1 > right
        })
        .map(|i| spectrum[i])
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));

    let exp_fit = fit_exponential(points).ok();
    let Some(&(omega0, power0)) = peaks.first() else {
        return degrade(exp_fit);
    };
    let mut warnings = Vec::new();
    if let Some(&(omega1, power1)) = peaks.get(1) {
        if power1 >= 0.5 * power0 {
            warnings.push(format!(
                "ambiguous frequency: spectral peaks at {omega0:.6e} and {omega1:.6e} rad/us are within 3 dB"
            ));
        }
    }

    // Variable projection over (T, ω near the peak): the rest is linear in
    // (a cos φ, -a sin φ, c).
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let grid = time_grid(points, 120);
    let mut candidates = Vec::new();
    for k in -4..=4 {
        let w = omega0 + k as f64 * d_omega / 4.0;
        if w <= 0.0 {
            continue;
        }
        for &tt in &grid {
            let x = DMatrix::from_fn(n, 3, |i, col| {
                let t = points[i].0;
                let e = (-t / tt).exp();
                match col {
                    0 => e * (w * t).cos(),
                    1 => e * (w * t).sin(),
                    _ => 1.0,
                }
            });
            if let Some((beta, sse)) = linear_lsq(&x, &y) {
                let a = beta[0].hypot(beta[1]);
                let phi = (-beta[1]).atan2(beta[0]);
                candidates.push((sse, [a, tt, w, phi, beta[2]]));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let model = osc_model(points);
    let best: Option<LmOutcome> = candidates
        .iter()
        .take(5)
        .filter_map(|(_, p0)| levenberg_marquardt(&model, p0))
        .min_by(|a, b| a.sse.total_cmp(&b.sse));
    let Some(best) = best else {
        return degrade(exp_fit);
    };

    // Keep the oscillating model only if it clearly beats the plain decay.
    if let Some(e) = &exp_fit {
        let exp_sse = e.mse * (n - 3) as f64;
        let osc_mse = best.sse / (n - 5) as f64;
        if osc_mse >= e.mse || best.sse >= 0.999 * exp_sse {
            return degrade(exp_fit);
        }
    }

    let mut p = best.params.clone();
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += std::f64::consts::PI;
    }
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    p[3] = p[3].rem_euclid(2.0 * std::f64::consts::PI);
    if !(p[1] > 0.0) || p[1] >= 0.99 * grid[grid.len() - 1] {
        return Err(Error::NonConvergence(format!("decay time diverges (T = {:e})", p[1])));
    }
    let ci = ci_half_widths(&best.jacobian, best.sse, n);
    Ok(FitResult {
        model: FitModel::OscExponential,
        amplitude: Estimate { value: p[0], ci95: ci[0] },
        decay_time: Estimate { value: p[1], ci95: ci[1] },
        frequency: Estimate { value: p[2], ci95: ci[2] },
        phase: Estimate { value: p[3], ci95: ci[3] },
        offset: Estimate { value: p[4], ci95: ci[4] },
        mse: best.sse / (n - 5) as f64,
        n_points: n,
        iterations: best.iterations,
        converged: best.converged,
        warnings,
        sse_history: best.history,
    })
}

fn degrade(exp_fit: Option<FitResult>) -> Result<FitResult> {
    match exp_fit {
        Some(mut f) => {
            f.model = FitModel::OscExponential;
            f.warnings
                .push("no resolvable oscillation; fitted as a plain exponential with zero frequency".into());
            Ok(f)
        }
        None => Err(Error::NonConvergence("neither oscillating nor plain exponential fit converged".into())),
    }
}

/// First time at which the samples fall to 1/e, interpolating `ln y`
/// linearly between the bracketing samples.
pub fn one_over_e_time(points: &[(f64, f64)]) -> Result<f64> {
    let thr = (-1.0f64).exp();
    let Some(first) = points.first() else {
        return Err(Error::InvalidParams("no samples".into()));
    };
    if !(first.1 > thr) {
        return Err(Error::InvalidParams(format!(
            "first sample {} is not above 1/e",
            first.1
        )));
    }
    for w in points.windows(2) {
        let ((t0, y0), (t1, y1)) = (w[0], w[1]);
        if y1 <= thr {
            if y1 <= 0.0 {
                return Ok(t0 + (t1 - t0) * (y0 - thr) / (y0 - y1));
            }
            let f = (-1.0 - y0.ln()) / (y1.ln() - y0.ln());
            return Ok(t0 + f * (t1 - t0));
        }
    }
    Err(Error::NoCrossing {
        lower_bound: points[points.len() - 1].0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn exp_points(a: f64, tt: f64, c: f64, n: usize, tmax: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let t = tmax * i as f64 / (n - 1) as f64;
                (t, a * (-t / tt).exp() + c)
            })
            .collect()
    }

    #[test]
    fn noiseless_exponential_is_exact() {
        let pts = exp_points(1.0, 10.0, 0.0, 50, 40.0);
        let f = fit_exponential(&pts).unwrap();
        assert!((f.decay_time.value - 10.0).abs() < 1e-3 * 10.0);
        assert!(f.amplitude.value > 0.999 && f.offset.value.abs() < 1e-6);
        assert!(f.mse >= 0.0 && f.decay_time.ci95 >= 0.0);
        assert!(f.converged);
    }

    #[test]
    fn constant_data_do_not_converge() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 0.3)).collect();
        assert!(matches!(fit_exponential(&pts), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn too_few_points() {
        assert!(fit_exponential(&[(0.0, 1.0), (1.0, 0.5), (2.0, 0.2)]).is_err());
        let pts = exp_points(1.0, 1.0, 0.0, 7, 5.0);
        assert!(fit_osc_exponential(&pts).is_err());
    }

    // Per-replicate coverage is Bernoulli(0.95); 1000 replicates keep the
    // sampling scatter of the rate well inside the 93% floor.
    #[test]
    fn ci_coverage_is_calibrated() {
        let mut covered = 0;
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.02).unwrap();
            let pts: Vec<(f64, f64)> = exp_points(1.0, 10.0, 0.0, 60, 50.0)
                .into_iter()
                .map(|(t, y)| (t, y + noise.sample(&mut rng)))
                .collect();
            let f = fit_exponential(&pts).unwrap();
            if f.decay_time.contains(10.0) {
                covered += 1;
            }
        }
        assert!(covered >= 930, "coverage {covered}/1000");
    }

    #[test]
    fn weighted_fit_matches_unweighted_for_equal_sigma() {
        let pts = exp_points(0.8, 5.0, 0.1, 30, 20.0);
        let a = fit_exponential(&pts).unwrap();
        let b = fit_exponential_weighted(&pts, Some(&[0.5; 30])).unwrap();
        assert!((a.decay_time.value - b.decay_time.value).abs() < 1e-8);
        assert!(fit_exponential_weighted(&pts, Some(&[0.5; 3])).is_err());
    }

    #[test]
    fn oscillating_fit_recovers_parameters() {
        let pts: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let t = i as f64 * 0.5;
                (t, 0.45 * (-t / 40.0).exp() * (0.9 * t + 0.3).cos() + 0.5)
            })
            .collect();
        let f = fit_osc_exponential(&pts).unwrap();
        assert_eq!(f.model, FitModel::OscExponential);
        assert!((f.decay_time.value - 40.0).abs() < 1e-6 * 40.0, "{}", f.report());
        assert!((f.frequency.value - 0.9).abs() < 1e-8);
        assert!((f.phase.value - 0.3).abs() < 1e-6);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn zero_frequency_degrades_to_exponential() {
        let pts = exp_points(1.0, 5.0, 0.2, 60, 30.0);
        let f = fit_osc_exponential(&pts).unwrap();
        assert_eq!(f.frequency.value, 0.0);
        assert!((f.decay_time.value - 5.0).abs() < 1e-3);
        assert!(!f.warnings.is_empty());
    }

    #[test]
    fn two_close_peaks_warn() {
        let pts: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                let t = i as f64 * 0.25;
                (t, (-t / 500.0).exp() * ((1.0 * t).cos() + 0.95 * (2.0 * t).cos()))
            })
            .collect();
        let f = fit_osc_exponential(&pts).unwrap();
        assert!(f.warnings.iter().any(|w| w.contains("ambiguous")), "{:?}", f.warnings);
    }

    #[test]
    fn one_over_e_exact() {
        let pts: Vec<(f64, f64)> = (0..=200).map(|i| (i as f64 * 0.1, (-(i as f64) * 0.01).exp())).collect();
        assert!((one_over_e_time(&pts).unwrap() - 10.0).abs() < 1e-9);
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.9)).collect();
        assert_eq!(one_over_e_time(&flat), Err(Error::NoCrossing { lower_bound: 9.0 }));
        assert!(one_over_e_time(&[(0.0, 0.2), (1.0, 0.1)]).is_err());
    }

    #[test]
    fn report_field_order() {
        let f = fit_exponential(&exp_points(1.0, 3.0, 0.0, 20, 10.0)).unwrap();
        let report = f.report();
        let keys: Vec<&str> = report.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(
            keys,
            ["model", "amplitude", "decay_time", "frequency", "phase", "offset", "mse", "n_points", "iterations", "converged"]
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn sse_never_increases(tt in 1.0f64..50.0, a in 0.2f64..2.0, c in -0.5f64..0.5, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let noise = Normal::new(0.0, 0.02).unwrap();
                let pts: Vec<(f64, f64)> = exp_points(a, tt, c, 40, 3.0 * tt)
                    .into_iter()
                    .map(|(t, y)| (t, y + noise.sample(&mut rng)))
                    .collect();
                let f = fit_exponential(&pts).unwrap();
                prop_assert!(f.sse_history.windows(2).all(|w| w[1] <= w[0]));
            }

            #[test]
            fn one_over_e_dense_sampling(tt in 0.1f64..1e3) {
                // 20 samples per decade on a log grid over five decades.
                let pts: Vec<(f64, f64)> = std::iter::once((0.0, 1.0))
                    .chain((0..=100).map(|k| {
                        let t = tt * 1e-3 * 10f64.powf(k as f64 / 20.0);
                        (t, (-t / tt).exp())
                    }))
                    .collect();
                let got = one_over_e_time(&pts).unwrap();
                prop_assert!((got / tt - 1.0).abs() < 5e-3);
            }
        }
    }
}
