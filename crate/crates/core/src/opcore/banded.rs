//! Banded complex matrices and a partial-pivoting band LU.

use crate::opcore::dense::Mat;
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Row-major band storage: row `i` holds columns `i - kl ..= i + ku`.
#[derive(Clone, Debug, PartialEq)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<C64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Banded { n, kl, ku, data: vec![ZERO; n * (kl + ku + 1)] }
    }

    pub fn from_diagonal(d: &[C64]) -> Self {
        let mut b = Banded::zeros(d.len(), 0, 0);
        b.data.copy_from_slice(d);
        b
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || j + self.kl < i || j > i + self.ku {
            return None;
        }
        Some(i * self.width() + (j + self.kl - i))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.slot(i, j).map_or(ZERO, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("({i}, {j}) outside band"));
        self.data[s] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("({i}, {j}) outside band"));
        self.data[s] += v;
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `self - lambda * I`.
    pub fn shifted(&self, lambda: C64) -> Banded {
        let mut b = self.clone();
        for i in 0..self.n {
            b.add_to(i, i, -lambda);
        }
        b
    }

    pub fn scaled(&self, s: C64) -> Banded {
        let mut b = self.clone();
        b.data.iter_mut().for_each(|x| *x *= s);
        b
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Banded {
        let mut b = Banded::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n) {
                b.set(j, i, self.get(i, j).conj());
            }
        }
        b
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            let row = &self.data[i * self.width()..(i + 1) * self.width()];
            let mut acc = ZERO;
            for j in lo..hi {
                acc += row[j + self.kl - i] * x[j];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            for j in lo..hi {
                y[j] += self.get(i, j).conj() * x[i];
            }
        }
        y
    }

    /// Principal submatrix on sorted, distinct indices; the band does not widen.
    pub fn principal(&self, idx: &[usize]) -> Banded {
        let k = idx.len();
        let mut b = Banded::zeros(k, self.kl, self.ku);
        for a in 0..k {
            let lo = a.saturating_sub(self.kl);
            let hi = (a + self.ku + 1).min(k);
            for c in lo..hi {
                b.set(a, c, self.get(idx[a], idx[c]));
            }
        }
        b
    }

    /// True when row `j` and column `j` vanish off the diagonal.
    pub fn is_isolated(&self, j: usize) -> bool {
        let lo = j.saturating_sub(self.kl.max(self.ku));
        let hi = (j + self.kl.max(self.ku) + 1).min(self.n);
        (lo..hi).all(|k| k == j || (self.get(j, k) == ZERO && self.get(k, j) == ZERO))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, x| a.max(x.norm()))
    }

    /// Induced 1-norm (largest column sum).
    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0f64; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n) {
                col[j] += self.get(i, j).norm();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                (i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n))
                    .map(|j| self.get(i, j).norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Mat {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// LU with row interchanges; `U` gets `kl` extra superdiagonals of fill.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    // row i stores columns i - kl ..= i + kl + ku
    rows: Vec<C64>,
    piv: Vec<usize>,
    min_pivot: f64,
}

impl BandLu {
    /// Fails with `SingularResolvent(shift)` when a pivot falls below
    /// `64 eps max|a_ij|`; `shift` only labels the error.
    pub fn factor(a: &Banded, shift: C64) -> Result<BandLu> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let w = 2 * kl + ku + 1;
        let mut rows = vec![ZERO; n * w];
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                rows[i * w + (j + kl - i)] = a.get(i, j);
            }
        }
        let at = |i: usize, j: usize| i * w + (j + kl - i);
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let threshold = 64.0 * f64::EPSILON * scale;
        let mut piv = vec![0usize; n];
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = rows[at(k, k)].norm();
            for i in k + 1..=last {
                let v = rows[at(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            min_pivot = min_pivot.min(best);
            if best <= threshold {
                return Err(Error::SingularResolvent(shift));
            }
            let cend = (k + kl + ku + 1).min(n);
            if p != k {
                for j in k..cend {
                    rows.swap(at(k, j), at(p, j));
                }
            }
            let pivot = rows[at(k, k)];
            for i in k + 1..=last {
                let l = rows[at(i, k)] / pivot;
                rows[at(i, k)] = l;
                if l != ZERO {
                    for j in k + 1..cend {
                        let u = rows[at(k, j)];
                        rows[at(i, j)] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, rows, piv, min_pivot })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.rows[i * (2 * self.kl + self.ku + 1) + (j + self.kl - i)]
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..(k + kl + 1).min(n) {
                b[i] -= self.at(i, k) * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..(k + kl + ku + 1).min(n) {
                acc -= self.at(k, j) * b[j];
            }
            b[k] = acc / self.at(k, k);
        }
    }

    /// Solves `A* x = b`.
    pub fn solve_adjoint_in_place(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let mut acc = b[k];
            for i in k.saturating_sub(kl + ku)..k {
                acc -= self.at(i, k).conj() * b[i];
            }
            b[k] = acc / self.at(k, k).conj();
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for i in k + 1..(k + kl + 1).min(n) {
                acc -= self.at(i, k).conj() * b[i];
            }
            b[k] = acc;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_adjoint_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> Banded {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Banded::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                b.set(i, j, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        b
    }

    fn residual(a: &Mat, x: &[C64], b: &[C64]) -> f64 {
        let xv = nalgebra::DVector::from_column_slice(x);
        let bv = nalgebra::DVector::from_column_slice(b);
        // normwise backward error
        (a * &xv - &bv).norm() / (a.norm() * xv.norm() + bv.norm())
    }

    #[test]
    fn solve_matches_dense_with_pivoting() {
        for (seed, kl, ku) in [(1u64, 1, 0), (2, 0, 2), (3, 2, 1), (4, 3, 3)] {
            let a = random_band(30, kl, ku, seed);
            let lu = BandLu::factor(&a, C64::new(0.0, 0.0)).unwrap();
            let b: Vec<C64> = (0..30).map(|i| C64::new(i as f64, 1.0)).collect();
            let dense = a.to_dense();
            assert!(residual(&dense, &lu.solve(&b), &b) < 1e-14);
            assert!(residual(&dense.adjoint(), &lu.solve_adjoint(&b), &b) < 1e-14);
        }
    }

    #[test]
    fn singular_pivot_is_reported() {
        let a = Banded::from_diagonal(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let err = BandLu::factor(&a, C64::new(1.0, 0.0)).unwrap_err();
        assert_eq!(err, Error::SingularResolvent(C64::new(1.0, 0.0)));
    }

    #[test]
    fn principal_keeps_band_entries() {
        let a = random_band(10, 1, 2, 9);
        let idx = [0, 2, 3, 7, 8];
        let p = a.principal(&idx);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                assert_eq!(p.get(r, c), a.get(i, j));
            }
        }
    }

    #[test]
    fn adjoint_apply_agrees() {
        let a = random_band(12, 2, 1, 5);
        let x: Vec<C64> = (0..12).map(|i| C64::new(1.0, i as f64)).collect();
        let y1 = a.apply_adjoint(&x);
        let y2 = a.adjoint().apply(&x);
        for (p, q) in y1.iter().zip(&y2) {
            assert!((p - q).norm() < 1e-13);
        }
    }
}
