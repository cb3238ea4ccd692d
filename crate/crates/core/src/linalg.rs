//! Small dense complex linear algebra: matrix exponential, eigendecomposition
//! and integer powers.
//!
//! The matrices that appear in this crate are tiny (2x2 or 3x3 generators,
//! at most 81x81 Liouvillians), so everything is dense and allocation is not
//! a concern.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

/// Eigenvector matrices with a 1-norm condition number above this are not
/// trusted for exponentiation; scaling-and-squaring is used instead.
pub const EIG_CONDITION_LIMIT: f64 = 1e6;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Eigendecomposition `m = V diag(values) V^-1`.
#[derive(Debug, Clone)]
pub struct Eig {
    pub values: Vec<Complex64>,
    pub vectors: CMat,
    pub inverse: CMat,
    /// 1-norm condition number of `vectors`.
    pub condition: f64,
}

impl Eig {
    pub fn is_well_conditioned(&self) -> bool {
        self.condition.is_finite() && self.condition < EIG_CONDITION_LIMIT
    }

    /// `V f(Λ) V^-1` for a scalar function applied to the eigenvalues.
    pub fn apply<F: Fn(Complex64) -> Complex64>(&self, f: F) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= w);
        }
        scaled * &self.inverse
    }
}

/// Eigendecomposition through a complex Schur form followed by
/// back-substitution on the triangular factor.
///
/// Returns `None` if the Schur iteration fails or the eigenvector matrix is
/// singular. A returned decomposition may still be ill conditioned; callers
/// check [`Eig::condition`].
pub fn eig(m: &CMat) -> Option<Eig> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eig requires a square matrix");
    if n == 0 {
        return None;
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)?;
    let (q, t) = schur.unpack();

    let scale = one_norm(m).max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * scale).max(f64::MIN_POSITIVE * 1e10);

    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = c(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = c(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < smin {
                d = c(smin, 0.0);
            }
            y[(i, k)] = -acc / d;
        }
    }
    let mut vectors = q * y;
    for j in 0..n {
        let norm = vectors.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        vectors.column_mut(j).iter_mut().for_each(|z| *z /= norm);
    }
    let inverse = vectors.clone().try_inverse()?;
    let condition = one_norm(&vectors) * one_norm(&inverse);
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();

    // Residual guard: a clamped denominator can yield vectors that are
    // well conditioned but wrong.
    let mut resid = m * &vectors;
    for (j, &lambda) in values.iter().enumerate() {
        for i in 0..n {
            resid[(i, j)] -= vectors[(i, j)] * lambda;
        }
    }
    let condition = if one_norm(&resid) > 1e-9 * scale.max(1.0) {
        f64::INFINITY
    } else {
        condition
    };

    Some(Eig {
        values,
        vectors,
        inverse,
        condition,
    })
}

/// `e^A` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm_pade(a: &CMat) -> CMat {
    let n = a.nrows();
    let ident = CMat::identity(n, n);
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * c(0.5f64.powi(s), 0.0);
    let b = |k: usize| c(PADE13[k], 0.0);

    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_poly = &a6 * inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1);
    let u = &a * u_poly;
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).unwrap_or_else(|| ident.clone());
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `e^{m t}`.
///
/// Uses the eigendecomposition when its eigenvector matrix is well
/// conditioned, otherwise scaling-and-squaring with Padé(13).
pub fn mat_exp(m: &CMat, t: f64) -> Result<CMat> {
    check_finite(m)?;
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "mat_exp requires a square matrix");
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    if t == 0.0 {
        return Ok(CMat::identity(n, n));
    }
    if n == 1 {
        return Ok(CMat::from_element(1, 1, (m[(0, 0)] * t).exp()));
    }
    if let Some(e) = eig(m) {
        if e.is_well_conditioned() {
            return Ok(e.apply(|l| (l * t).exp()));
        }
    }
    Ok(expm_pade(&(m * c(t, 0.0))))
}

/// Reusable `t -> e^{m t}` for a fixed generator.
#[derive(Debug, Clone)]
pub struct ExpPropagator {
    m: CMat,
    eig: Option<Eig>,
}

impl ExpPropagator {
    pub fn new(m: &CMat) -> Result<Self> {
        check_finite(m)?;
        let eig = eig(m).filter(Eig::is_well_conditioned);
        Ok(Self { m: m.clone(), eig })
    }

    pub fn at(&self, t: f64) -> Result<CMat> {
        match &self.eig {
            Some(e) if t.is_finite() => Ok(e.apply(|l| (l * t).exp())),
            _ => mat_exp(&self.m, t),
        }
    }
}

/// `m^n` by binary exponentiation.
pub fn mat_pow(m: &CMat, mut n: u64) -> CMat {
    let dim = m.nrows();
    let mut result = CMat::identity(dim, dim);
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Largest entry-wise modulus of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
