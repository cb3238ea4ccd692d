use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phase::{check_times, integrate, pulse_list, VelocityMap};
use super::trace::{start_level, stream_rng, JumpProcess};
use crate::curve::{DecayCurve, Engine};
use crate::error::{Error, Result};
use crate::model::{FluctuatorParams, InitState};
use crate::sequence::PulseSchedule;

/// Trajectories per work item. Fixed so the reduction order, and hence the
/// result, does not depend on the number of threads.
const CHUNK: u64 = 512;

/// Ensemble averages over Monte Carlo trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub times: Vec<f64>,
    /// Mean `e^{iφ}`.
    pub mean: Vec<Complex64>,
    /// Contribution of trajectories sitting in each physical level
    /// `[minus, zero, plus]` at the sample time; sums to `mean`.
    pub by_level: Vec<[Complex64; 3]>,
    /// Fraction of trajectories in each physical level.
    pub populations: Vec<[f64; 3]>,
    /// Standard error of the complex mean, `sqrt(E|z - m|² / (n - 1))/sqrt(n)`.
    pub std_err: Vec<f64>,
    pub n_traj: u64,
    pub seed: u64,
}

impl McResult {
    pub fn to_curve(&self) -> DecayCurve {
        DecayCurve::new(Engine::Mc, self.times.clone(), self.mean.clone())
            .and_then(|c| c.with_std_err(self.std_err.clone()))
            .expect("lengths agree")
            .with_provenance("n_traj", self.n_traj)
            .with_provenance("seed", self.seed)
    }
}

#[derive(Clone)]
struct Acc {
    by_level: Vec<[Complex64; 3]>,
    counts: Vec<[u64; 3]>,
    abs2: Vec<f64>,
}

impl Acc {
    fn new(n: usize) -> Self {
        Self {
            by_level: vec![[Complex64::new(0.0, 0.0); 3]; n],
            counts: vec![[0; 3]; n],
            abs2: vec![0.0; n],
        }
    }

    fn merge(&mut self, other: &Acc) {
        for k in 0..self.abs2.len() {
            for l in 0..3 {
                self.by_level[k][l] += other.by_level[k][l];
                self.counts[k][l] += other.counts[k][l];
            }
            self.abs2[k] += other.abs2[k];
        }
    }
}

/// Average `e^{iφ}` over `n_traj` sampled trajectories at ascending
/// `times` within the schedule. Trajectory `i` draws from its own stream
/// of the seeded generator, so the result is bit-identical for any thread
/// count.
pub fn mc_coherence(
    params: &FluctuatorParams,
    init: InitState,
    schedule: &PulseSchedule,
    times: &[f64],
    n_traj: u64,
    seed: u64,
) -> Result<McResult> {
    params.check_state(init)?;
    if n_traj == 0 {
        return Err(Error::InvalidParams("need at least one trajectory".into()));
    }
    check_times(times, schedule.total_duration())?;
    let pulses = pulse_list(schedule);
    let vel = VelocityMap::from_params(params);
    let n_times = times.len();
    let horizon = times.last().copied().unwrap_or(0.0);

    let n_chunks = n_traj.div_ceil(CHUNK);
    let partial: Vec<Acc> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc::new(n_times);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                let mut rng = stream_rng(seed, i);
                let start = start_level(params, init, &mut rng);
                let mut process = JumpProcess::new(params, start);
                let mut next = || process.next(&mut rng).filter(|j| j.0 <= horizon);
                integrate(start, &mut next, &pulses, &vel, times, |k, z, level| {
                    let l = level.index();
                    acc.by_level[k][l] += z;
                    acc.counts[k][l] += 1;
                    acc.abs2[k] += z.norm_sqr();
                });
            }
            acc
        })
        .collect();
    let mut total = Acc::new(n_times);
    for p in &partial {
        total.merge(p);
    }

    let n = n_traj as f64;
    let by_level: Vec<[Complex64; 3]> = total.by_level.iter().map(|b| b.map(|z| z / n)).collect();
    let mean: Vec<Complex64> = by_level.iter().map(|b| b[0] + b[1] + b[2]).collect();
    let populations = total.counts.iter().map(|c| c.map(|x| x as f64 / n)).collect();
    let std_err = mean
        .iter()
        .zip(&total.abs2)
        .map(|(m, s)| {
            if n_traj < 2 {
                return f64::NAN;
            }
            let var = ((s / n - m.norm_sqr()) * n / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(McResult {
        times: times.to_vec(),
        mean,
        by_level,
        populations,
        std_err,
        n_traj,
        seed,
    })
}
