use crate::error::Result;
use crate::linalg::{c, CMat};
use crate::model::{Drive, Level, Levels};

/// Ideal π pulse acting on the probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseOperator {
    pub drive: Drive,
    pub levels: Levels,
    pub matrix: CMat,
}

/// Matrix of an ideal π pulse in the `(P, p)` / `(P, p⁺, p)` basis.
///
/// Qubit and double-quantum pulses swap the `±v` levels (`p → -p`).
/// Single-quantum pulses swap `|0⟩` with `|+1⟩` (`SqPlus`) or `|-1⟩`
/// (`SqMinus`), conjugated from the occupancy basis.
pub fn pulse_operator(levels: Levels, drive: Drive) -> Result<PulseOperator> {
    drive.check(levels)?;
    let r = |x: f64| c(x, 0.0);
    let matrix = match (levels, drive) {
        (Levels::Two, _) => CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![r(1.0), r(-1.0)])),
        (Levels::Three, Drive::Qubit | Drive::Dq) => {
            CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![r(1.0), r(1.0), r(-1.0)]))
        }
        (Levels::Three, Drive::SqPlus) => CMat::from_row_slice(
            3,
            3,
            &[r(1.0), r(0.0), r(0.0), r(1.0), r(-0.5), r(-0.5), r(1.0), r(-1.5), r(0.5)],
        ),
        (Levels::Three, Drive::SqMinus) => CMat::from_row_slice(
            3,
            3,
            &[r(1.0), r(0.0), r(0.0), r(1.0), r(-0.5), r(0.5), r(-1.0), r(1.5), r(0.5)],
        ),
    };
    Ok(PulseOperator { drive, levels, matrix })
}

/// Level relabelling performed by a pulse, indexed by [`Level::index`]:
/// a walker in level `l` before the pulse is in `perm[l]` afterwards.
///
/// For a qubit pulse this is the toggling-frame relabelling (the fluctuator
/// itself does not move).
pub fn level_permutation(drive: Drive) -> [Level; 3] {
    use Level::*;
    match drive {
        Drive::Qubit | Drive::Dq => [Plus, Zero, Minus],
        Drive::SqPlus => [Minus, Plus, Zero],
        Drive::SqMinus => [Zero, Minus, Plus],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{occupancies, ProbVector};

    fn is_identity(m: &CMat) -> bool {
        let n = m.nrows();
        m == &CMat::identity(n, n)
    }

    #[test]
    fn involutions_are_exact() {
        for (levels, drive) in [
            (Levels::Two, Drive::Qubit),
            (Levels::Two, Drive::Dq),
            (Levels::Three, Drive::Qubit),
            (Levels::Three, Drive::Dq),
            (Levels::Three, Drive::SqPlus),
            (Levels::Three, Drive::SqMinus),
        ] {
            let u = pulse_operator(levels, drive).unwrap().matrix;
            assert!(is_identity(&(&u * &u)), "{levels:?} {drive:?}");
        }
    }

    #[test]
    fn sq_rejected_for_two_levels() {
        assert!(pulse_operator(Levels::Two, Drive::SqPlus).is_err());
        assert!(pulse_operator(Levels::Two, Drive::SqMinus).is_err());
    }

    /// Build the swap in the occupancy basis and conjugate it into the
    /// `(P, p⁺, p)` basis through the explicit change-of-basis matrices.
    fn conjugated_swap(a: usize, b: usize) -> CMat {
        let r = |x: f64| c(x, 0.0);
        // occupancy (m, z, p) -> (P, p+, p)
        let to_p = CMat::from_row_slice(
            3,
            3,
            &[r(1.), r(1.), r(1.), r(1.), r(0.), r(1.), r(-1.), r(0.), r(1.)],
        );
        let from_p = to_p.clone().try_inverse().unwrap();
        let mut swap = CMat::identity(3, 3);
        swap.swap_rows(a, b);
        to_p * swap * from_p
    }

    #[test]
    fn sq_matches_occupancy_swap() {
        let want_plus = conjugated_swap(Level::Zero.index(), Level::Plus.index());
        let want_minus = conjugated_swap(Level::Zero.index(), Level::Minus.index());
        let got_plus = pulse_operator(Levels::Three, Drive::SqPlus).unwrap().matrix;
        let got_minus = pulse_operator(Levels::Three, Drive::SqMinus).unwrap().matrix;
        assert!(crate::linalg::max_abs_diff(&want_plus, &got_plus) < 1e-15);
        assert!(crate::linalg::max_abs_diff(&want_minus, &got_minus) < 1e-15);
        let dq = conjugated_swap(Level::Minus.index(), Level::Plus.index());
        assert!(crate::linalg::max_abs_diff(&dq, &pulse_operator(Levels::Three, Drive::Dq).unwrap().matrix) < 1e-15);
    }

    #[test]
    fn pulses_permute_occupancies_and_keep_total() {
        let occ = [c(0.2, 0.1), c(0.5, -0.3), c(0.3, 0.05)];
        for drive in [Drive::Dq, Drive::SqPlus, Drive::SqMinus] {
            let x = ProbVector::from_occupancies(Levels::Three, occ);
            let u = pulse_operator(Levels::Three, drive).unwrap().matrix;
            let y = &u * x.entries();
            assert_eq!(y[0], x.entries()[0]);
            let after = occupancies(Levels::Three, y.as_slice());
            let perm = level_permutation(drive);
            for l in Level::ALL {
                assert!((after[perm[l.index()].index()] - occ[l.index()]).norm() < 1e-15);
            }
        }
    }
}
