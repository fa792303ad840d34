//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

pub type Mat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const SVD_EPS: f64 = 1e-15;
const MAX_ITER: usize = 10_000;

/// Rank report: count above threshold plus the full descending spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    // Tall and thin matrices go through a QR first; the SVD then runs on k x k.
    let (r, c) = m.shape();
    let work = if r > 2 * c {
        m.clone().qr().r()
    } else if c > 2 * r {
        m.adjoint().qr().r()
    } else {
        m.clone()
    };
    let svd = nalgebra::SVD::try_new(work, false, false, SVD_EPS, MAX_ITER)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().map(|x| x.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Count of singular values above `tol` relative to the largest one.
pub fn numerical_rank(m: &Mat, tol: f64) -> Result<RankInfo> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Precondition(format!("rank tolerance {tol} outside (0, 1)")));
    }
    let s = singular_values(m)?;
    Ok(RankInfo { rank: rank_from_values(&s, tol), singular_values: s })
}

pub fn rank_from_values(s: &[f64], tol: f64) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    let threshold = if top > 0.0 { tol * top } else { tol };
    s.iter().filter(|&&x| x > threshold).count()
}

/// Rank of a block of an operator with norm `scale`: values above `tol`
/// relative to the block's largest one, ignoring rounding-level values below
/// `RANK_FLOOR * scale`.
pub fn block_rank(s: &[f64], tol: f64, scale: f64) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    let threshold = (tol * top).max(crate::opcore::RANK_FLOOR * scale);
    s.iter().filter(|&&x| x > threshold).count()
}

pub fn operator_norm(m: &Mat) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Ascending eigenvalues of a Hermitian matrix (only the lower triangle is trusted).
pub fn hermitian_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::try_new(sym, SVD_EPS, MAX_ITER)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Eigenvalues of a general square matrix through the complex Schur form.
pub fn eigenvalues(m: &Mat) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = nalgebra::Schur::try_new(m.clone(), SVD_EPS, MAX_ITER)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest magnitude off the main diagonal.
pub fn max_off_diagonal(m: &Mat) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// Conjugate-linear in the first argument.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.norm()))
}

/// Columns of `m` restricted to the listed rows.
pub fn select_rows(m: &Mat, rows: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_cols(m: &Mat, cols: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

pub fn submatrix(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Sort complex numbers by real part, then imaginary part.
pub fn sort_complex(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Largest distance in an optimal-greedy pairing of two equal-size multisets.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].norm().total_cmp(&a[i].norm()));
    for i in order {
        let mut best = None;
        for (j, bj) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (a[i] - bj).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            used[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rank_of_zero_and_outer_product() {
        let z = Mat::zeros(4, 3);
        assert_eq!(numerical_rank(&z, 1e-8).unwrap().rank, 0);
        let u = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)]);
        let v = CVec::from_vec(vec![c(0.5, 0.5), c(3.0, 0.0)]);
        let m = &u * v.adjoint();
        assert_eq!(numerical_rank(&m, 1e-8).unwrap().rank, 1);
    }

    #[test]
    fn threshold_semantics() {
        let m = Mat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), c(1e-14, 0.0)]));
        let info = numerical_rank(&m, 1e-10).unwrap();
        assert_eq!(info.rank, 1);
        assert!((info.singular_values[0] - 1.0).abs() < 1e-15);
        assert!((info.singular_values[1] - 1e-14).abs() < 1e-28);
    }

    #[test]
    fn norms_of_simple_matrices() {
        assert!((operator_norm(&Mat::identity(5, 5)).unwrap() - 1.0).abs() < 1e-14);
        let d = Mat::from_diagonal(&CVec::from_vec(vec![c(3.0, 0.0), c(0.0, -4.0)]));
        assert!((operator_norm(&d).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn tall_matrix_goes_through_qr() {
        let m = Mat::from_fn(50, 3, |i, j| c(((i * 7 + j * 3) % 11) as f64, (i as f64 - j as f64) * 0.1));
        let direct = nalgebra::SVD::new(m.clone(), false, false);
        let mut want: Vec<f64> = direct.singular_values.iter().copied().collect();
        want.sort_by(|a, b| b.total_cmp(a));
        let got = singular_values(&m).unwrap();
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).abs() < 1e-12 * want[0]);
        }
    }

    #[test]
    fn schur_eigenvalues_of_triangular() {
        let m = Mat::from_row_slice(2, 2, &[c(1.0, 0.0), c(5.0, 0.0), c(0.0, 0.0), c(0.0, 2.0)]);
        let mut ev = eigenvalues(&m).unwrap();
        sort_complex(&mut ev);
        assert!((ev[0] - c(0.0, 2.0)).norm() < 1e-12);
        assert!((ev[1] - c(1.0, 0.0)).norm() < 1e-12);
    }
}
