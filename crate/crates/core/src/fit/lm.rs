use nalgebra::{DMatrix, DVector};

/// Outcome of a damped Gauss–Newton (Levenberg–Marquardt) minimisation.
#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub sse: f64,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// SSE after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

pub(crate) const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-10;

/// Minimise `Σ r_i(p)²`. `model` returns residuals and their Jacobian, or
/// `None` when `p` is outside the model's domain. A step is accepted only if
/// it lowers the SSE, so the SSE history is non-increasing.
pub(crate) fn levenberg_marquardt<F>(model: F, p0: &[f64]) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    let np = p0.len();
    let mut p = p0.to_vec();
    let (mut r, mut j) = model(&p)?;
    let mut sse = r.norm_squared();
    if !sse.is_finite() {
        return None;
    }
    let mut history = vec![sse];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = a.cholesky().map(|ch| ch.solve(&(-&g))) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            if let Some((rt, jt)) = model(&trial) {
                let s = rt.norm_squared();
                if s.is_finite() && s < sse {
                    let small = delta
                        .iter()
                        .zip(&p)
                        .all(|(d, x)| d.abs() <= STEP_TOL * (x.abs() + STEP_TOL));
                    let stalled = sse - s <= 1e-15 * sse;
                    p = trial;
                    r = rt;
                    j = jt;
                    sse = s;
                    history.push(sse);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if small || stalled {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    Some(LmOutcome {
        params: p,
        sse,
        jacobian: j,
        iterations,
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_like_least_squares() {
        // r = (1 - x, 10 (y - x²)), minimum at (1, 1).
        let model = |p: &[f64]| {
            let (x, y) = (p[0], p[1]);
            let r = DVector::from_vec(vec![1.0 - x, 10.0 * (y - x * x)]);
            let j = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x, 10.0]);
            Some((r, j))
        };
        let out = levenberg_marquardt(model, &[-1.2, 1.0]).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 1.0).abs() < 1e-8);
        assert!((out.params[1] - 1.0).abs() < 1e-8);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
