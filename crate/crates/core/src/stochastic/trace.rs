use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FluctuatorParams, InitState, Level, Levels};

/// Piecewise-constant fluctuator history on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtnTrace {
    jump_times: Vec<f64>,
    /// One level per segment, `jump_times.len() + 1` entries.
    levels: Vec<Level>,
    horizon: f64,
    seed: u64,
}

impl RtnTrace {
    /// Build from an initial level and `(time, new level)` jumps.
    pub fn new(initial: Level, jumps: &[(f64, Level)], horizon: f64, seed: u64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
        }
        let mut levels = Vec::with_capacity(jumps.len() + 1);
        levels.push(initial);
        let mut last = 0.0;
        for (i, &(t, level)) in jumps.iter().enumerate() {
            if !(t > last || (i == 0 && t >= 0.0)) || !(t < horizon) {
                return Err(Error::InvalidParams(format!(
                    "jump {i} at {t} us is out of order or outside [0, {horizon})"
                )));
            }
            if level == levels[levels.len() - 1] {
                return Err(Error::InvalidParams(format!("jump {i} at {t} us does not change the level")));
            }
            levels.push(level);
            last = t;
        }
        Ok(Self {
            jump_times: jumps.iter().map(|j| j.0).collect(),
            levels,
            horizon,
            seed,
        })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn initial(&self) -> Level {
        self.levels[0]
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    /// `(time, new level)` pairs.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, Level)> + '_ {
        self.jump_times.iter().copied().zip(self.levels[1..].iter().copied())
    }

    /// Level occupied at time `t` (the new level at a jump instant).
    pub fn level_at(&self, t: f64) -> Level {
        let k = self.jump_times.partition_point(|&j| j <= t);
        self.levels[k]
    }

    /// Rename every level; `f` must be injective on the levels used.
    pub fn relabel(&self, f: impl Fn(Level) -> Level) -> Self {
        Self {
            jump_times: self.jump_times.clone(),
            levels: self.levels.iter().map(|&l| f(l)).collect(),
            horizon: self.horizon,
            seed: self.seed,
        }
    }
}

/// Counter-based generator for trajectory `index` of a run seeded by `seed`.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Lazily sampled continuous-time Markov chain. A two-level fluctuator
/// flips at rate `γ`; a three-level one leaves at total rate `2γ` to either
/// other level with equal probability.
pub(crate) struct JumpProcess {
    levels: Levels,
    holding: Option<Exp<f64>>,
    level: Level,
    t: f64,
}

impl JumpProcess {
    pub fn new(params: &FluctuatorParams, start: Level) -> Self {
        let exit = match params.levels() {
            Levels::Two => params.gamma(),
            Levels::Three => 2.0 * params.gamma(),
        };
        Self {
            levels: params.levels(),
            holding: (exit > 0.0).then(|| Exp::new(exit).expect("positive rate")),
            level: start,
            t: 0.0,
        }
    }

    pub fn next<R: Rng>(&mut self, rng: &mut R) -> Option<(f64, Level)> {
        let holding = self.holding.as_ref()?;
        self.t += holding.sample(rng);
        self.level = match (self.levels, self.level) {
            (Levels::Two, Level::Minus) => Level::Plus,
            (Levels::Two, _) => Level::Minus,
            (Levels::Three, l) => {
                let i = l.index();
                let step = if rng.random_bool(0.5) { 1 } else { 2 };
                Level::from_index((i + step) % 3)
            }
        };
        Some((self.t, self.level))
    }
}

/// Draw the starting level.
pub(crate) fn start_level<R: Rng>(params: &FluctuatorParams, init: InitState, rng: &mut R) -> Level {
    match init {
        InitState::Definite(l) => l,
        InitState::Equilibrium => {
            let set = params.level_set();
            set[rng.random_range(0..set.len())]
        }
    }
}

/// Sample one fluctuator history up to `horizon`.
pub fn sample_trace(params: &FluctuatorParams, init: InitState, horizon: f64, seed: u64) -> Result<RtnTrace> {
    params.check_state(init)?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    let mut rng = stream_rng(seed, 0);
    let start = start_level(params, init, &mut rng);
    let mut process = JumpProcess::new(params, start);
    let mut jump_times = Vec::new();
    let mut levels = vec![start];
    while let Some((t, l)) = process.next(&mut rng) {
        if t >= horizon {
            break;
        }
        jump_times.push(t);
        levels.push(l);
    }
    Ok(RtnTrace {
        jump_times,
        levels,
        horizon,
        seed,
    })
}
