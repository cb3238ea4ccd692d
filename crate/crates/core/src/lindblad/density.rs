use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::register::{ElectronSpin, NUCLEAR_DIM};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::model::{InitState, Level};

const TOL: f64 = 1e-10;

/// Density matrix of the register, electron ⊗ nuclear, index
/// `electron · 3 + nuclear`; nuclear basis `m_I = -1, 0, +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    /// Validate Hermiticity, unit trace and positivity to 1e-10.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDensityMatrix(format!("shape {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidDensityMatrix("non-finite entry".into()));
        }
        let herm = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > TOL {
            return Err(Error::InvalidDensityMatrix(format!("not hermitian (deviation {herm:e})")));
        }
        let tr = m.trace();
        if (tr - c(1.0, 0.0)).norm() > TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace is {tr}")));
        }
        let min = min_eigenvalue(&m);
        if min < -TOL {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    /// Column-stacked vector.
    pub fn vec(&self) -> DVector<Complex64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub(crate) fn from_vec(v: &DVector<Complex64>, dim: usize) -> Self {
        Self(CMat::from_column_slice(dim, dim, v.as_slice()))
    }

    /// Force exact Hermiticity and unit trace; returns the largest change.
    pub(crate) fn restore(&mut self) -> f64 {
        let sym = (&self.0 + self.0.adjoint()) * c(0.5, 0.0);
        let tr = sym.trace().re;
        let fixed = sym / c(tr, 0.0);
        let dev = (&fixed - &self.0).iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.0 = fixed;
        dev
    }

    /// Reduced nuclear state `Tr_e ρ`.
    pub fn nuclear(&self) -> CMat {
        let de = self.dim() / NUCLEAR_DIM;
        CMat::from_fn(NUCLEAR_DIM, NUCLEAR_DIM, |a, b| {
            (0..de).map(|e| self.0[(e * NUCLEAR_DIM + a, e * NUCLEAR_DIM + b)]).sum()
        })
    }

    /// Electron populations in basis order.
    pub fn electron_populations(&self) -> Vec<f64> {
        let de = self.dim() / NUCLEAR_DIM;
        (0..de)
            .map(|e| (0..NUCLEAR_DIM).map(|n| self.0[(e * NUCLEAR_DIM + n, e * NUCLEAR_DIM + n)].re).sum())
            .collect()
    }

    /// Row-major text: a `dim N` line, then one line of `re im` pairs per row.
    pub fn to_text(&self) -> String {
        let n = self.dim();
        let mut s = format!("dim {n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:?} {:?}", self.0[(i, j)].re, self.0[(i, j)].im)).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let corrupt = |line: usize, message: String| Error::CorruptRecord { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| corrupt(1, "empty input".into()))?;
        let n: usize = head
            .strip_prefix("dim ")
            .and_then(|x| x.trim().parse().ok())
            .ok_or_else(|| corrupt(1, format!("expected 'dim N', got '{head}'")))?;
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            let (ln, line) = lines.next().ok_or_else(|| corrupt(i + 2, "missing row".into()))?;
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|e| corrupt(ln + 1, e.to_string())))
                .collect::<Result<_>>()?;
            if nums.len() != 2 * n {
                return Err(corrupt(ln + 1, format!("expected {} numbers, got {}", 2 * n, nums.len())));
            }
            for j in 0..n {
                m[(i, j)] = c(nums[2 * j], nums[2 * j + 1]);
            }
        }
        Self::new(m)
    }
}

fn min_eigenvalue(m: &CMat) -> f64 {
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    // Real symmetric embedding [[A, -B], [B, A]] of A + iB has the same
    // eigenvalues, each twice.
    let n = herm.nrows();
    let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = herm[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    emb.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `(|0⟩ + |+1⟩)/√2` nuclear state.
fn nuclear_superposition() -> CMat {
    let mut n = CMat::zeros(NUCLEAR_DIM, NUCLEAR_DIM);
    for a in 1..3 {
        for b in 1..3 {
            n[(a, b)] = c(0.5, 0.0);
        }
    }
    n
}

/// Electron in a definite level or the uniform mixture, nucleus in
/// `(|0⟩ + |+1⟩)/√2`.
pub fn initial_density(spin: ElectronSpin, init: InitState) -> Result<DensityMatrix> {
    let de = spin.dim();
    let mut e = CMat::zeros(de, de);
    match init {
        InitState::Definite(level) => {
            let i = spin.index_of(level).ok_or_else(|| Error::InvalidState {
                state: level.to_string(),
                levels: de,
            })?;
            e[(i, i)] = c(1.0, 0.0);
        }
        InitState::Equilibrium => {
            for i in 0..de {
                e[(i, i)] = c(1.0 / de as f64, 0.0);
            }
        }
    }
    DensityMatrix::new(e.kronecker(&nuclear_superposition()))
}

/// Electron in the normalised pure state `amplitudes` (basis order),
/// nucleus in `(|0⟩ + |+1⟩)/√2`.
pub fn superposition_density(spin: ElectronSpin, amplitudes: &[Complex64]) -> Result<DensityMatrix> {
    if amplitudes.len() != spin.dim() {
        return Err(Error::InvalidDensityMatrix(format!(
            "{} amplitudes for a {}-level electron",
            amplitudes.len(),
            spin.dim()
        )));
    }
    let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidDensityMatrix("zero state vector".into()));
    }
    let psi = DVector::from_iterator(spin.dim(), amplitudes.iter().map(|a| a / norm));
    DensityMatrix::new((&psi * psi.adjoint()).kronecker(&nuclear_superposition()))
}

/// `⟨a|Tr_e ρ|b⟩` for nuclear levels `a, b`.
pub fn nuclear_coherence(rho: &DensityMatrix, pair: (Level, Level)) -> Complex64 {
    rho.nuclear()[(pair.0.index(), pair.1.index())]
}

/// The qubit coherence pair `(0, +1)`.
pub const QUBIT_PAIR: (Level, Level) = (Level::Zero, Level::Plus);
