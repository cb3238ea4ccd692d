//! Fluctuator parameters, the k = -1 probability vector and its generator.
//!
//! Units: time in microseconds, rates in 1/us, phase velocities in rad/us.
//! Hyperfine couplings are accepted in MHz (cycles/us) and converted to
//! angular units with a factor 2π.
//!
//! The probability vector is the Fourier component at k = -1 of the walker's
//! phase distribution, so its first entry is the qubit coherence ⟨e^{iφ}⟩.
//! Two-level basis: `(P, p)` with `p = p_r - p_l`. Three-level basis:
//! `(P, p⁺, p)` with `p⁺ = p_l + p_r`, where `r`/`l` are the levels whose
//! phase velocity is `+v`/`-v` and the third level is at rest.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Levels {
    Two,
    Three,
}

impl Levels {
    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Levels::Two),
            3 => Ok(Levels::Three),
            _ => Err(Error::InvalidParams(format!("levels must be 2 or 3, got {n}"))),
        }
    }

    pub fn count(self) -> usize {
        match self {
            Levels::Two => 2,
            Levels::Three => 3,
        }
    }
}

/// A definite fluctuator level, labelled by its spin projection.
///
/// `Plus` moves the walker at `+v`, `Minus` at `-v` and `Zero` rests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Minus,
    Zero,
    Plus,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Minus, Level::Zero, Level::Plus];

    pub fn index(self) -> usize {
        match self {
            Level::Minus => 0,
            Level::Zero => 1,
            Level::Plus => 2,
        }
    }

    pub fn from_index(i: usize) -> Level {
        Level::ALL[i]
    }

    pub fn ms(self) -> i8 {
        match self {
            Level::Minus => -1,
            Level::Zero => 0,
            Level::Plus => 1,
        }
    }

    pub fn from_ms(ms: i64) -> Option<Level> {
        match ms {
            -1 => Some(Level::Minus),
            0 => Some(Level::Zero),
            1 => Some(Level::Plus),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Minus => write!(f, "-1"),
            Level::Zero => write!(f, "0"),
            Level::Plus => write!(f, "+1"),
        }
    }
}

/// Initial fluctuator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitState {
    Definite(Level),
    /// Uniform mixture over the fluctuator's levels.
    Equilibrium,
}

impl Default for InitState {
    fn default() -> Self {
        InitState::Definite(Level::Minus)
    }
}

impl fmt::Display for InitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitState::Definite(l) => write!(f, "{l}"),
            InitState::Equilibrium => write!(f, "eq"),
        }
    }
}

impl FromStr for InitState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "-1" | "minus" => Ok(InitState::Definite(Level::Minus)),
            "0" | "zero" => Ok(InitState::Definite(Level::Zero)),
            "+1" | "1" | "plus" => Ok(InitState::Definite(Level::Plus)),
            "eq" | "equilibrium" => Ok(InitState::Equilibrium),
            other => Err(Error::InvalidState {
                state: other.to_string(),
                levels: 0,
            }),
        }
    }
}

/// Target of an ideal π pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Drive {
    /// π pulse on the qubit itself.
    Qubit,
    /// Double-quantum fluctuator pulse `|+1⟩ ↔ |-1⟩` (the only flip of a 2LF).
    Dq,
    /// Single-quantum fluctuator pulse `|0⟩ ↔ |+1⟩`.
    SqPlus,
    /// Single-quantum fluctuator pulse `|0⟩ ↔ |-1⟩`.
    SqMinus,
}

impl Drive {
    pub fn name(self) -> &'static str {
        match self {
            Drive::Qubit => "qubit",
            Drive::Dq => "dq",
            Drive::SqPlus => "sq+",
            Drive::SqMinus => "sq-",
        }
    }

    pub fn check(self, levels: Levels) -> Result<()> {
        match (self, levels) {
            (Drive::SqPlus | Drive::SqMinus, Levels::Two) => Err(Error::InvalidDrive {
                drive: self.name().to_string(),
                levels: 2,
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Drive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Drive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qubit" | "q" => Ok(Drive::Qubit),
            "dq" => Ok(Drive::Dq),
            "sq+" | "sqplus" | "sq_plus" => Ok(Drive::SqPlus),
            "sq-" | "sqminus" | "sq_minus" => Ok(Drive::SqMinus),
            other => Err(Error::InvalidParams(format!("unknown drive '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuatorParams {
    levels: Levels,
    gamma: f64,
    v: f64,
    t1: f64,
    hyperfine_mhz: Option<f64>,
}

/// Pairwise jump rate for a given relaxation time: `1/(2 T1)` for a 2LF,
/// `1/(3 T1)` for a 3LF.
pub fn gamma_from_t1(levels: Levels, t1: f64) -> f64 {
    1.0 / (levels.count() as f64 * t1)
}

/// Phase velocity from a hyperfine coupling in MHz: `2π·A/2` for a 2LF
/// (spin-1/2 fluctuator), `2π·A` for a 3LF.
pub fn velocity_from_hyperfine(levels: Levels, hyperfine_mhz: f64) -> f64 {
    match levels {
        Levels::Two => TWO_PI * hyperfine_mhz / 2.0,
        Levels::Three => TWO_PI * hyperfine_mhz,
    }
}

/// Build parameters from a relaxation time (us) and hyperfine coupling (MHz).
pub fn make_params(levels: usize, t1: f64, hyperfine_mhz: f64) -> Result<FluctuatorParams> {
    let levels = Levels::from_count(levels)?;
    if !(t1 > 0.0) {
        return Err(Error::InvalidParams(format!("t1 must be positive, got {t1}")));
    }
    if !(hyperfine_mhz >= 0.0) || !hyperfine_mhz.is_finite() {
        return Err(Error::InvalidParams(format!(
            "hyperfine coupling must be finite and non-negative, got {hyperfine_mhz}"
        )));
    }
    Ok(FluctuatorParams {
        levels,
        gamma: gamma_from_t1(levels, t1),
        v: velocity_from_hyperfine(levels, hyperfine_mhz),
        t1,
        hyperfine_mhz: Some(hyperfine_mhz),
    })
}

impl FluctuatorParams {
    /// Build parameters directly from the jump rate and phase velocity.
    pub fn from_rates(levels: Levels, gamma: f64, v: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParams(format!("v must be finite and >= 0, got {v}")));
        }
        let t1 = if gamma > 0.0 {
            1.0 / (levels.count() as f64 * gamma)
        } else {
            f64::INFINITY
        };
        Ok(Self {
            levels,
            gamma,
            v,
            t1,
            hyperfine_mhz: None,
        })
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// Hyperfine coupling in MHz, recovered from `v` if not given explicitly.
    pub fn hyperfine_mhz(&self) -> f64 {
        self.hyperfine_mhz.unwrap_or_else(|| match self.levels {
            Levels::Two => 2.0 * self.v / TWO_PI,
            Levels::Three => self.v / TWO_PI,
        })
    }

    pub fn check_state(&self, init: InitState) -> Result<()> {
        match (self.levels, init) {
            (Levels::Two, InitState::Definite(Level::Zero)) => Err(Error::InvalidState {
                state: init.to_string(),
                levels: 2,
            }),
            _ => Ok(()),
        }
    }

    /// Levels the fluctuator can occupy.
    pub fn level_set(&self) -> &'static [Level] {
        match self.levels {
            Levels::Two => &[Level::Minus, Level::Plus],
            Levels::Three => &[Level::Minus, Level::Zero, Level::Plus],
        }
    }

    /// Phase velocity of the qubit while the fluctuator sits in `level`.
    pub fn velocity(&self, level: Level) -> f64 {
        level.ms() as f64 * self.v
    }
}

/// Fourier-space probability vector at k = -1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    levels: Levels,
    entries: DVector<Complex64>,
}

impl ProbVector {
    pub fn new(levels: Levels, entries: DVector<Complex64>) -> Self {
        assert_eq!(entries.len(), levels.count());
        Self { levels, entries }
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn entries(&self) -> &DVector<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DVector<Complex64> {
        self.entries
    }

    pub fn coherence(&self) -> Complex64 {
        self.entries[0]
    }

    /// Per-level components `[minus, zero, plus]`. At k = -1 these are the
    /// coherence carried by trajectories currently in each level; at k = 0
    /// they are the level populations. The zero slot is always 0 for a 2LF.
    pub fn occupancies(&self) -> [Complex64; 3] {
        occupancies(self.levels, self.entries.as_slice())
    }

    pub fn from_occupancies(levels: Levels, occ: [Complex64; 3]) -> Self {
        let [m, z, p] = occ;
        let entries = match levels {
            Levels::Two => vec![m + p, p - m],
            Levels::Three => vec![m + z + p, m + p, p - m],
        };
        Self::new(levels, DVector::from_vec(entries))
    }
}

pub fn occupancies(levels: Levels, entries: &[Complex64]) -> [Complex64; 3] {
    let zero = c(0.0, 0.0);
    match levels {
        Levels::Two => {
            let (big_p, p) = (entries[0], entries[1]);
            [(big_p - p) * 0.5, zero, (big_p + p) * 0.5]
        }
        Levels::Three => {
            let (big_p, pp, p) = (entries[0], entries[1], entries[2]);
            [(pp - p) * 0.5, big_p - pp, (pp + p) * 0.5]
        }
    }
}

pub fn initial_vector(params: &FluctuatorParams, init: InitState) -> Result<ProbVector> {
    params.check_state(init)?;
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    let levels = params.levels();
    let occ = match init {
        InitState::Definite(level) => {
            let mut occ = [zero; 3];
            occ[level.index()] = one;
            occ
        }
        InitState::Equilibrium => match levels {
            Levels::Two => [c(0.5, 0.0), zero, c(0.5, 0.0)],
            Levels::Three => [c(1.0 / 3.0, 0.0); 3],
        },
    };
    Ok(ProbVector::from_occupancies(levels, occ))
}

/// Generator `M_{-1}` of the probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    levels: Levels,
    matrix: CMat,
}

impl GeneratorMatrix {
    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.levels.count()
    }
}

pub fn generator(params: &FluctuatorParams) -> GeneratorMatrix {
    generator_at_k(params, -1.0)
}

/// Generator at Fourier index `k`. Only k = -1 (coherence) and k = 0
/// (populations) are used.
pub(crate) fn generator_at_k(params: &FluctuatorParams, k: f64) -> GeneratorMatrix {
    let g = params.gamma();
    let ikv = c(0.0, -k * params.v());
    let zero = c(0.0, 0.0);
    let matrix = match params.levels() {
        Levels::Two => CMat::from_row_slice(2, 2, &[zero, ikv, ikv, c(-2.0 * g, 0.0)]),
        Levels::Three => CMat::from_row_slice(
            3,
            3,
            &[
                zero, zero, ikv,
                c(2.0 * g, 0.0), c(-3.0 * g, 0.0), ikv,
                zero, ikv, c(-3.0 * g, 0.0),
            ],
        ),
    };
    GeneratorMatrix {
        levels: params.levels(),
        matrix,
    }
}

/// Level-population rate matrix in the `[minus, zero, plus]` occupancy basis
/// (restricted to the levels that exist).
pub fn occupancy_rate_matrix(params: &FluctuatorParams) -> nalgebra::DMatrix<f64> {
    let set = params.level_set();
    let n = set.len();
    let g = params.gamma();
    nalgebra::DMatrix::from_fn(n, n, |i, j| if i == j { -(n as f64 - 1.0) * g } else { g })
}
