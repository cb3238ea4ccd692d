use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::model::{FluctuatorParams, Level, Levels, TWO_PI};

/// Electron spin quantum number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElectronSpin {
    Half,
    One,
}

impl ElectronSpin {
    pub fn from_levels(levels: Levels) -> Self {
        match levels {
            Levels::Two => ElectronSpin::Half,
            Levels::Three => ElectronSpin::One,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ElectronSpin::Half => 2,
            ElectronSpin::One => 3,
        }
    }

    fn s(self) -> f64 {
        match self {
            ElectronSpin::Half => 0.5,
            ElectronSpin::One => 1.0,
        }
    }

    /// Basis index of a fluctuator level: `|-1/2⟩, |+1/2⟩` stand for the
    /// two-level `minus, plus`.
    pub fn index_of(self, level: Level) -> Option<usize> {
        match (self, level) {
            (ElectronSpin::Half, Level::Minus) => Some(0),
            (ElectronSpin::Half, Level::Plus) => Some(1),
            (ElectronSpin::Half, Level::Zero) => None,
            (ElectronSpin::One, l) => Some(l.index()),
        }
    }

    pub fn level_of(self, index: usize) -> Level {
        match self {
            ElectronSpin::Half => [Level::Minus, Level::Plus][index],
            ElectronSpin::One => Level::from_index(index),
        }
    }
}

/// Nuclear spin dimension (I = 1).
pub const NUCLEAR_DIM: usize = 3;

/// Gyromagnetic ratios in MHz/G.
const GAMMA_E_MHZ_PER_G: f64 = 2.8025;
const GAMMA_N_MHZ_PER_G: f64 = 3.077e-4;
/// Default bias field (G).
pub const DEFAULT_FIELD_G: f64 = 424.0;
/// Default zero-field splitting (MHz).
pub const DEFAULT_ZFS_MHZ: f64 = 2870.0;

/// Electron–nuclear register Hamiltonian
/// `D S_z² + ω_e S_z + ω_n I_z + S·𝒜·I`, all angular (rad/us).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterHamiltonian {
    pub spin: ElectronSpin,
    /// Zero-field splitting; ignored for spin 1/2.
    pub d: f64,
    pub omega_e: f64,
    pub omega_n: f64,
    /// Hyperfine tensor, rows `S_x, S_y, S_z`, columns `I_x, I_y, I_z`.
    pub hyperfine: [[f64; 3]; 3],
}

impl RegisterHamiltonian {
    /// Secular coupling `𝒜_zz S_z I_z` with default splittings.
    pub fn secular(spin: ElectronSpin, a_zz: f64) -> Self {
        let mut hyperfine = [[0.0; 3]; 3];
        hyperfine[2][2] = a_zz;
        Self {
            spin,
            d: if spin == ElectronSpin::One { TWO_PI * DEFAULT_ZFS_MHZ } else { 0.0 },
            omega_e: TWO_PI * GAMMA_E_MHZ_PER_G * DEFAULT_FIELD_G,
            omega_n: TWO_PI * GAMMA_N_MHZ_PER_G * DEFAULT_FIELD_G,
            hyperfine,
        }
    }

    /// Register whose secular coupling reproduces the fluctuator velocity:
    /// level `m_S` shifts the `0 ↔ +1` nuclear coherence at `𝒜_zz m_S`.
    pub fn from_params(params: &FluctuatorParams) -> Self {
        let spin = ElectronSpin::from_levels(params.levels());
        let a_zz = match spin {
            ElectronSpin::Half => 2.0 * params.v(),
            ElectronSpin::One => params.v(),
        };
        Self::secular(spin, a_zz)
    }

    pub fn dim(&self) -> usize {
        self.spin.dim() * NUCLEAR_DIM
    }

    /// Full Hamiltonian.
    pub fn matrix(&self) -> Result<CMat> {
        let [sx, sy, sz] = spin_ops(self.spin.s());
        let [ix, iy, iz] = spin_ops(1.0);
        let ide = CMat::identity(self.spin.dim(), self.spin.dim());
        let idn = CMat::identity(NUCLEAR_DIM, NUCLEAR_DIM);
        let mut h = (&sz * &sz * c(self.d, 0.0) + &sz * c(self.omega_e, 0.0)).kronecker(&idn)
            + ide.kronecker(&(&iz * c(self.omega_n, 0.0)));
        let s = [&sx, &sy, &sz];
        let i = [&ix, &iy, &iz];
        for a in 0..3 {
            for b in 0..3 {
                let k = self.hyperfine[a][b];
                if !k.is_finite() {
                    return Err(Error::NonFinite);
                }
                if k != 0.0 {
                    h += s[a].kronecker(i[b]) * c(k, 0.0);
                }
            }
        }
        if [self.d, self.omega_e, self.omega_n].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(h)
    }

    /// Hamiltonian in the frame rotating at `ω_n` about the nuclear axis.
    pub fn rotating_matrix(&self) -> Result<CMat> {
        let [_, _, iz] = spin_ops(1.0);
        let ide = CMat::identity(self.spin.dim(), self.spin.dim());
        Ok(self.matrix()? - ide.kronecker(&(&iz * c(self.omega_n, 0.0))))
    }
}

/// `[S_x, S_y, S_z]` for spin `s` in the ascending `m` basis.
pub fn spin_ops(s: f64) -> [CMat; 3] {
    let n = (2.0 * s).round() as usize + 1;
    let m = |i: usize| -s + i as f64;
    let mut plus = CMat::zeros(n, n);
    for i in 0..n - 1 {
        plus[(i + 1, i)] = c((s * (s + 1.0) - m(i) * (m(i) + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let sx = (&plus + &minus) * c(0.5, 0.0);
    let sy = (&plus - &minus) * c(0.0, -0.5);
    let sz = CMat::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| c(m(i), 0.0)));
    [sx, sy, sz]
}

/// Largest `|H - H†|` entry.
pub fn hermiticity_error(h: &CMat) -> f64 {
    let diff: DMatrix<Complex64> = h - h.adjoint();
    diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;

    #[test]
    fn spin_algebra() {
        for s in [0.5, 1.0] {
            let [x, y, z] = spin_ops(s);
            let comm = &x * &y - &y * &x;
            let err = (comm - &z * c(0.0, 1.0)).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(err < 1e-14);
            let cas = &x * &x + &y * &y + &z * &z;
            let n = cas.nrows();
            assert!((cas - CMat::identity(n, n) * c(s * (s + 1.0), 0.0)).iter().all(|v| v.norm() < 1e-14));
        }
    }

    #[test]
    fn hermitian_and_secular() {
        for levels in [2, 3] {
            let h = RegisterHamiltonian::from_params(&make_params(levels, 10.0, 2.16).unwrap());
            let m = h.matrix().unwrap();
            assert!(hermiticity_error(&m) < 1e-12);
            let [_, _, sz] = spin_ops(if levels == 2 { 0.5 } else { 1.0 });
            let szf = sz.kronecker(&CMat::identity(3, 3));
            let comm = &m * &szf - &szf * &m;
            assert!(comm.iter().all(|v| v.norm() < 1e-9));
        }
    }

    #[test]
    fn full_tensor_is_hermitian() {
        let mut h = RegisterHamiltonian::secular(ElectronSpin::One, 1.0);
        h.hyperfine = [[0.3, 0.1, 0.0], [0.1, 0.3, 0.2], [0.0, 0.2, 1.0]];
        assert!(hermiticity_error(&h.matrix().unwrap()) < 1e-12);
    }
}
