//! Replacing the corner `T12` by an equivalent operator `S1 T12 S2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::opcore::dense::{max_abs, numerical_rank, singular_values, Mat};
use crate::opcore::RANK_TOL;
use crate::{Error, Result, C64};

const SVD_EPS: f64 = 1e-15;
const MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquivalenceMode {
    PsdDiagonal,
    Projection,
}

impl EquivalenceMode {
    pub fn name(self) -> &'static str {
        match self {
            EquivalenceMode::PsdDiagonal => "psd_diagonal",
            EquivalenceMode::Projection => "projection",
        }
    }
}

impl std::str::FromStr for EquivalenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psd_diagonal" => Ok(EquivalenceMode::PsdDiagonal),
            "projection" => Ok(EquivalenceMode::Projection),
            _ => Err(Error::Config(format!("unknown equivalence mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Equivalence {
    pub mode: EquivalenceMode,
    pub s1: Mat,
    pub s2: Mat,
    pub b: Mat,
    pub gap: f64,
    pub singular_values: Vec<f64>,
    pub s1_cond: f64,
    pub s2_cond: f64,
    /// `max |S1 T12 S2 - B|`.
    pub defect: f64,
    /// `max |B^2 - B|` for the recomputed product; 0 is not expected for
    /// the diagonal mode.
    pub idempotency: f64,
    pub rank: usize,
}

fn cond(m: &Mat) -> Result<f64> {
    let s = singular_values(m)?;
    let lo = s.last().copied().unwrap_or(0.0);
    Ok(if lo > 0.0 { s[0] / lo } else { f64::INFINITY })
}

/// `T12 = U diag(s) V*` with `s` descending.
fn ordered_svd(t: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    let svd = nalgebra::SVD::try_new(t.clone(), true, true, SVD_EPS, MAX_ITER)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let n = t.nrows();
    let mut uo = Mat::zeros(n, n);
    let mut vo = Mat::zeros(n, n);
    let v = vt.adjoint();
    for (c, &i) in order.iter().enumerate() {
        uo.set_column(c, &u.column(i));
        vo.set_column(c, &v.column(i));
    }
    let s = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    Ok((uo, s, vo))
}

/// `gap` defaults to `1e-4 * sigma_max`.
pub fn equivalence_replace(t12: &Mat, mode: EquivalenceMode, gap: Option<f64>) -> Result<Equivalence> {
    let n = t12.nrows();
    if n != t12.ncols() {
        return Err(Error::Precondition(format!(
            "corner is {}x{}; only square corners are replaced",
            t12.nrows(),
            t12.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::Precondition("empty corner".into()));
    }
    let (u, s, v) = ordered_svd(t12)?;
    let top = s[0];
    let gap = gap.unwrap_or(1e-4 * top);
    let tol = RANK_TOL * top;
    let (s1, b) = match mode {
        EquivalenceMode::PsdDiagonal => {
            let b = Mat::from_diagonal(&s.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>().into());
            (u.adjoint(), b)
        }
        EquivalenceMode::Projection => {
            if let Some(&sigma) = s.iter().find(|&&x| x > tol && x <= gap) {
                return Err(Error::RangeNotClosed { sigma, tol, gap });
            }
            let d_inv: Vec<C64> = s.iter().map(|&x| C64::new(if x > gap { 1.0 / x } else { 1.0 }, 0.0)).collect();
            let s1 = Mat::from_diagonal(&d_inv.into()) * u.adjoint();
            let b = Mat::from_diagonal(
                &s.iter().map(|&x| C64::new(if x > gap { 1.0 } else { 0.0 }, 0.0)).collect::<Vec<_>>().into(),
            );
            (s1, b)
        }
    };
    let product = &s1 * t12 * &v;
    let defect = max_abs(&(&product - &b));
    let idempotency = max_abs(&(&product * &product - &product));
    let rank = numerical_rank(t12, RANK_TOL)?.rank;
    Ok(Equivalence {
        mode,
        s1_cond: cond(&s1)?,
        s2_cond: cond(&v)?,
        s1,
        s2: v,
        b,
        gap,
        singular_values: s,
        defect,
        idempotency,
        rank,
    })
}

/// Largest rank of `S2^-1 R S1^-1` over `pairs` seeded invertible pairs.
///
/// `S1` is a dense well-conditioned draw on the column side; `S2` is unit
/// upper bidiagonal so its inverse stays cheap on tall corners.
pub fn rank_under_equivalence(r: &Mat, pairs: usize, seed: u64) -> Result<usize> {
    let (rows, cols) = r.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0;
    for _ in 0..pairs {
        let mut s1 = Mat::from_fn(cols, cols, |_, _| C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
        for i in 0..cols {
            s1[(i, i)] += C64::new(cols as f64, 0.0);
        }
        let s1_inv = s1.try_inverse().ok_or_else(|| Error::Numerical("random S1 is singular".into()))?;
        let sup: Vec<C64> = (0..rows).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let mut x = r * s1_inv;
        // Back substitution with the unit upper bidiagonal S2.
        for c in 0..cols {
            for i in (0..rows.saturating_sub(1)).rev() {
                let below = x[(i + 1, c)];
                x[(i, c)] -= sup[i] * below;
            }
        }
        worst = worst.max(numerical_rank(&x, RANK_TOL)?.rank);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(n: usize, m: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(n, m, &v.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn identity_is_already_a_projection() {
        let e = equivalence_replace(&Mat::identity(3, 3), EquivalenceMode::Projection, None).unwrap();
        assert_eq!(e.b, Mat::identity(3, 3));
        assert!(e.defect < 1e-14 && e.idempotency < 1e-14);
    }

    #[test]
    fn diagonal_mode_on_diag_two_one() {
        let e = equivalence_replace(&real(2, 2, &[2.0, 0.0, 0.0, 1.0]), EquivalenceMode::PsdDiagonal, None).unwrap();
        assert_eq!(e.b, real(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        assert!(e.defect < 1e-14);
        assert!((e.s1_cond - 1.0).abs() < 1e-12 && (e.s2_cond - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_block_becomes_identity() {
        // Q1 diag(s) Q2 with sigma_min = 0.5, built from independent QR factors.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draw = || Mat::from_fn(4, 4, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q1 = draw().qr().q();
        let q2 = draw().qr().q();
        let s = real(4, 4, &[3.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        let t = &q1 * s * q2.adjoint();
        let e = equivalence_replace(&t, EquivalenceMode::Projection, Some(0.1)).unwrap();
        assert_eq!(e.b, Mat::identity(4, 4));
        let p = &e.s1 * &t * &e.s2;
        assert!(max_abs(&(&p * &p - &p)) < 1e-10);
        assert!(max_abs(&(p - Mat::identity(4, 4))) < 1e-10);
    }

    #[test]
    fn gap_violation() {
        let t = real(2, 2, &[1.0, 0.0, 0.0, 1e-5]);
        let err = equivalence_replace(&t, EquivalenceMode::Projection, None).unwrap_err();
        assert!(matches!(err, Error::RangeNotClosed { .. }));
        let e = equivalence_replace(&real(2, 2, &[1.0, 0.0, 0.0, 0.0]), EquivalenceMode::Projection, None).unwrap();
        assert_eq!(e.b, real(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            equivalence_replace(&Mat::zeros(2, 3), EquivalenceMode::PsdDiagonal, None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn rank_one_survives_equivalence() {
        let u = Mat::from_fn(30, 1, |i, _| C64::new(1.0 / (i + 1) as f64, 0.0));
        let v = Mat::from_fn(5, 1, |i, _| C64::new(0.0, (i + 1) as f64));
        let r = &u * v.adjoint();
        assert_eq!(rank_under_equivalence(&r, 100, 3).unwrap(), 1);
        assert_eq!(rank_under_equivalence(&Mat::zeros(30, 5), 10, 3).unwrap(), 0);
    }
}
