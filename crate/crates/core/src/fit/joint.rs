use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::levenberg_marquardt;
use super::{ci_half_widths, linear_lsq, time_grid};
use crate::error::{Error, Result};

/// Relation between the two decay times in a joint fit: `T2 = r · T1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RatioModel {
    Fixed(f64),
    Free,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: RatioModel,
    /// Fitted T1 (NaN if the fit failed).
    pub t1: f64,
    /// 95% half-width of T1.
    pub sigma_t1: f64,
    /// Fixed ratio, or the fitted one for the free model.
    pub ratio: f64,
    /// 95% half-width of the ratio (zero when fixed).
    pub sigma_ratio: f64,
    /// `SSE / (n - p)` over both datasets.
    pub mse: f64,
    pub converged: bool,
    pub error: Option<String>,
}

impl ModelRow {
    fn failed(model: RatioModel, e: Error) -> Self {
        Self {
            model,
            t1: f64::NAN,
            sigma_t1: f64::NAN,
            ratio: match model {
                RatioModel::Fixed(r) => r,
                RatioModel::Free => f64::NAN,
            },
            sigma_ratio: f64::NAN,
            mse: f64::NAN,
            converged: false,
            error: Some(e.to_string()),
        }
    }
}

/// Fit `a₁e^{-t/T1}+c₁` to `t1_points` and `a₂e^{-t/(r·T1)}+c₂` to
/// `t2_points` simultaneously, once per ratio model. Rows come back in the
/// order of `models`; failed fits are flagged rather than aborting the table.
pub fn joint_model_compare(
    t1_points: &[(f64, f64)],
    t2_points: &[(f64, f64)],
    models: &[RatioModel],
) -> Result<Vec<ModelRow>> {
    for pts in [t1_points, t2_points] {
        if pts.len() < 4 {
            return Err(Error::InvalidParams(format!("need at least 4 points per dataset, got {}", pts.len())));
        }
        if pts.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(models
        .iter()
        .map(|&m| fit_one(t1_points, t2_points, m).unwrap_or_else(|e| ModelRow::failed(m, e)))
        .collect())
}

/// Parameter layout: `[T1, a1, c1, a2, c2]` plus `r` last for the free model.
fn fit_one(d1: &[(f64, f64)], d2: &[(f64, f64)], model: RatioModel) -> Result<ModelRow> {
    let free = model == RatioModel::Free;
    if let RatioModel::Fixed(r) = model {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParams(format!("ratio must be positive, got {r}")));
        }
    }
    let ratio_of = |p: &[f64]| match model {
        RatioModel::Fixed(r) => r,
        RatioModel::Free => p[5],
    };
    let n = d1.len() + d2.len();
    let np = if free { 6 } else { 5 };
    if n <= np {
        return Err(Error::InvalidParams("not enough points for the joint model".into()));
    }

    let residuals = |p: &[f64]| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (t1, r) = (p[0], ratio_of(p));
        if !(t1 > 0.0) || !(r > 0.0) {
            return None;
        }
        let t2 = r * t1;
        let mut res = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, np);
        for (i, &(t, y)) in d1.iter().enumerate() {
            let e = (-t / t1).exp();
            res[i] = p[1] * e + p[2] - y;
            jac[(i, 0)] = p[1] * e * t / (t1 * t1);
            jac[(i, 1)] = e;
            jac[(i, 2)] = 1.0;
        }
        for (k, &(t, y)) in d2.iter().enumerate() {
            let i = d1.len() + k;
            let e = (-t / t2).exp();
            res[i] = p[3] * e + p[4] - y;
            // d/dT1 and d/dr of e^{-t/(r T1)}
            jac[(i, 0)] = p[3] * e * t / (t2 * t1);
            jac[(i, 3)] = e;
            jac[(i, 4)] = 1.0;
            if free {
                jac[(i, 5)] = p[3] * e * t / (t2 * r);
            }
        }
        Some((res, jac))
    };

    // Coarse grid over T1 (and r): the amplitudes and offsets are linear.
    let project = |d: &[(f64, f64)], tt: f64| -> Option<(f64, f64, f64)> {
        let x = DMatrix::from_fn(d.len(), 2, |i, k| if k == 0 { (-d[i].0 / tt).exp() } else { 1.0 });
        let y = DVector::from_iterator(d.len(), d.iter().map(|p| p.1));
        linear_lsq(&x, &y).map(|(b, sse)| (b[0], b[1], sse))
    };
    let ratios: Vec<f64> = match model {
        RatioModel::Fixed(r) => vec![r],
        RatioModel::Free => (0..25).map(|k| 0.25 * 1.2f64.powi(k)).collect(),
    };
    let mut starts = Vec::new();
    for &t1 in &time_grid(d1, 80) {
        let Some((a1, c1, s1)) = project(d1, t1) else { continue };
        for &r in &ratios {
            let Some((a2, c2, s2)) = project(d2, r * t1) else { continue };
            let mut p = vec![t1, a1, c1, a2, c2];
            if free {
                p.push(r);
            }
            starts.push((s1 + s2, p));
        }
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = starts
        .iter()
        .take(5)
        .filter_map(|(_, p0)| levenberg_marquardt(&residuals, p0))
        .min_by(|a, b| a.sse.total_cmp(&b.sse))
        .ok_or_else(|| Error::NonConvergence("no start produced a finite joint fit".into()))?;

    let ci = ci_half_widths(&best.jacobian, best.sse, n);
    Ok(ModelRow {
        model,
        t1: best.params[0],
        sigma_t1: ci[0],
        ratio: ratio_of(&best.params),
        sigma_ratio: if free { ci[5] } else { 0.0 },
        mse: best.sse / (n - np) as f64,
        converged: best.converged,
        error: None,
    })
}

/// Index of the fixed-ratio row with the smallest MSE. The free model has
/// extra freedom and is excluded from the selection.
pub fn best_fixed_model(rows: &[ModelRow]) -> Option<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| matches!(r.model, RatioModel::Fixed(_)) && r.mse.is_finite())
        .min_by(|a, b| a.1.mse.total_cmp(&b.1.mse).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) const MODELS: [RatioModel; 4] = [
        RatioModel::Fixed(1.5),
        RatioModel::Fixed(2.0),
        RatioModel::Fixed(1.0),
        RatioModel::Free,
    ];

    fn synthetic(ratio: f64, sigma: f64, seed: u64) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
        let mut draw = |t: f64, tt: f64| (-t / tt).exp() + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let t1 = 10.0;
        let d1 = (0..40).map(|i| i as f64 * 1.0).map(|t| (t, draw(t, t1))).collect();
        let d2 = (0..40).map(|i| i as f64 * 1.5).map(|t| (t, draw(t, ratio * t1))).collect();
        (d1, d2)
    }

    #[test]
    fn noiseless_planted_ratio_two() {
        let (d1, d2) = synthetic(2.0, 0.0, 0);
        let rows = joint_model_compare(&d1, &d2, &MODELS).unwrap();
        assert!(rows[1].mse < 1e-20, "{rows:?}");
        assert!(rows[0].mse > 1e-8 && rows[2].mse > 1e-8);
        assert!((rows[1].t1 - 10.0).abs() < 1e-6);
        assert!((rows[3].ratio - 2.0).abs() < 1e-6);
        assert_eq!(best_fixed_model(&rows), Some(1));
    }

    #[test]
    fn ratio_one_and_a_half_is_selected() {
        let (d1, d2) = synthetic(1.5, 0.02, 7);
        let rows = joint_model_compare(&d1, &d2, &MODELS).unwrap();
        assert_eq!(best_fixed_model(&rows), Some(0));
        let fixed_sigma = rows[..3].iter().map(|r| r.sigma_t1);
        assert!(fixed_sigma.clone().all(|s| s >= rows[0].sigma_t1), "{rows:?}");
        let free = &rows[3];
        assert!((free.ratio - 1.5).abs() <= free.sigma_ratio, "{free:?}");
    }

    #[test]
    fn planted_ratio_recovered_in_most_replicates() {
        let hits = (0..100u64)
            .filter(|&seed| {
                let (d1, d2) = synthetic(1.5, 0.02, 1000 + seed);
                let rows = joint_model_compare(&d1, &d2, &MODELS).unwrap();
                best_fixed_model(&rows) == Some(0)
            })
            .count();
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn bad_ratio_row_is_flagged() {
        let (d1, d2) = synthetic(1.5, 0.0, 0);
        let rows = joint_model_compare(&d1, &d2, &[RatioModel::Fixed(-1.0)]).unwrap();
        assert!(!rows[0].converged && rows[0].error.is_some());
        assert!(joint_model_compare(&d1[..3], &d2, &MODELS).is_err());
    }
}
