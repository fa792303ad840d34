//! Banded-plus-low-rank operators `B + U V*` and their shifted solves.

use nalgebra::LU;

use crate::opcore::banded::{BandLu, Banded};
use crate::opcore::dense::{select_rows, CVec, Mat};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredOp {
    base: Banded,
    u: Mat,
    v: Mat,
}

impl StructuredOp {
    pub fn banded(base: Banded) -> Self {
        let n = base.dim();
        StructuredOp { base, u: Mat::zeros(n, 0), v: Mat::zeros(n, 0) }
    }

    pub fn new(base: Banded, u: Mat, v: Mat) -> Result<Self> {
        let n = base.dim();
        if u.nrows() != n || v.nrows() != n || u.ncols() != v.ncols() {
            return Err(Error::Precondition(format!(
                "low-rank factors {}x{} and {}x{} do not fit dimension {n}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        Ok(StructuredOp { base, u, v })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn base(&self) -> &Banded {
        &self.base
    }

    pub fn factors(&self) -> (&Mat, &Mat) {
        (&self.u, &self.v)
    }

    /// Adds `x y*` to the low-rank part.
    pub fn with_update(&self, x: &Mat, y: &Mat) -> Result<Self> {
        let n = self.dim();
        if x.nrows() != n || y.nrows() != n || x.ncols() != y.ncols() {
            return Err(Error::Precondition("low-rank update shape mismatch".into()));
        }
        let r = self.rank() + x.ncols();
        let mut u = Mat::zeros(n, r);
        let mut v = Mat::zeros(n, r);
        u.columns_mut(0, self.rank()).copy_from(&self.u);
        v.columns_mut(0, self.rank()).copy_from(&self.v);
        u.columns_mut(self.rank(), x.ncols()).copy_from(x);
        v.columns_mut(self.rank(), y.ncols()).copy_from(y);
        Ok(StructuredOp { base: self.base.clone(), u, v })
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let mut acc = self.base.get(i, j);
        for k in 0..self.rank() {
            acc += self.u[(i, k)] * self.v[(j, k)].conj();
        }
        acc
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        let mut y = CVec::from_vec(self.base.apply(x.as_slice()));
        if self.rank() > 0 {
            let c = self.v.ad_mul(x);
            y.gemv(C64::new(1.0, 0.0), &self.u, &c, C64::new(1.0, 0.0));
        }
        y
    }

    pub fn apply_adjoint(&self, x: &CVec) -> CVec {
        let mut y = CVec::from_vec(self.base.apply_adjoint(x.as_slice()));
        if self.rank() > 0 {
            let c = self.u.ad_mul(x);
            y.gemv(C64::new(1.0, 0.0), &self.v, &c, C64::new(1.0, 0.0));
        }
        y
    }

    pub fn apply_mat(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.dim(), x.ncols());
        for j in 0..x.ncols() {
            out.set_column(j, &self.apply(&x.column(j).into_owned()));
        }
        out
    }

    pub fn apply_adjoint_mat(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.dim(), x.ncols());
        for j in 0..x.ncols() {
            out.set_column(j, &self.apply_adjoint(&x.column(j).into_owned()));
        }
        out
    }

    /// Column `j` of the operator.
    pub fn column(&self, j: usize) -> CVec {
        let mut e = CVec::zeros(self.dim());
        e[j] = C64::new(1.0, 0.0);
        self.apply(&e)
    }

    /// Row `i` of the operator.
    pub fn row(&self, i: usize) -> CVec {
        let mut e = CVec::zeros(self.dim());
        e[i] = C64::new(1.0, 0.0);
        self.apply_adjoint(&e).map(|z| z.conj())
    }

    pub fn adjoint(&self) -> StructuredOp {
        StructuredOp { base: self.base.adjoint(), u: self.v.clone(), v: self.u.clone() }
    }

    pub fn shifted(&self, lambda: C64) -> StructuredOp {
        StructuredOp { base: self.base.shifted(lambda), u: self.u.clone(), v: self.v.clone() }
    }

    /// Principal submatrix on sorted, distinct indices.
    pub fn principal(&self, idx: &[usize]) -> StructuredOp {
        let r = self.rank();
        StructuredOp {
            base: self.base.principal(idx),
            u: Mat::from_fn(idx.len(), r, |i, k| self.u[(idx[i], k)]),
            v: Mat::from_fn(idx.len(), r, |i, k| self.v[(idx[i], k)]),
        }
    }

    /// Dense submatrix of the listed rows and columns.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Mat {
        let mut out = Mat::from_fn(rows.len(), cols.len(), |a, b| self.base.get(rows[a], cols[b]));
        if self.rank() > 0 {
            let ur = select_rows(&self.u, rows);
            let vc = select_rows(&self.v, cols);
            out += ur * vc.adjoint();
        }
        out
    }

    /// Coordinates on which the operator acts as a diagonal reducing block.
    pub fn isolated_coordinates(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&j| {
                self.base.is_isolated(j)
                    && (0..self.rank()).all(|k| self.u[(j, k)] == ZERO && self.v[(j, k)] == ZERO)
            })
            .collect()
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = self.base.to_dense();
        if self.rank() > 0 {
            m += &self.u * self.v.adjoint();
        }
        m
    }

    /// Upper bound on the spectral norm: band bound plus factor norms.
    pub fn norm_bound(&self) -> f64 {
        let band = (self.base.norm_one() * self.base.norm_inf()).sqrt();
        let lr = if self.rank() > 0 { self.u.norm() * self.v.norm() } else { 0.0 };
        band + lr
    }

    /// Factorization of `self - lambda I`.
    pub fn factor_shifted(&self, lambda: C64) -> Result<ShiftedLu> {
        let shifted = self.shifted(lambda);
        let lu = BandLu::factor(&shifted.base, lambda)?;
        let r = self.rank();
        let n = self.dim();
        let mut z = Mat::zeros(n, r);
        let mut zt = Mat::zeros(n, r);
        for k in 0..r {
            let col: Vec<C64> = self.u.column(k).iter().copied().collect();
            z.set_column(k, &CVec::from_vec(lu.solve(&col)));
            let col: Vec<C64> = self.v.column(k).iter().copied().collect();
            zt.set_column(k, &CVec::from_vec(lu.solve_adjoint(&col)));
        }
        let cap = if r > 0 {
            let c = Mat::identity(r, r) + self.v.ad_mul(&z);
            let scale = c.iter().fold(1.0f64, |a, x| a.max(x.norm()));
            let lu_c = LU::new(c);
            let umin = (0..r).map(|i| lu_c.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
            if umin <= 64.0 * f64::EPSILON * scale {
                return Err(Error::SingularResolvent(lambda));
            }
            Some(lu_c)
        } else {
            None
        };
        let cap_t = cap.as_ref().map(|_| LU::new(Mat::identity(r, r) + self.u.ad_mul(&zt)));
        Ok(ShiftedLu { op: shifted, lu, z, zt, cap, cap_t })
    }
}

/// Woodbury solver for `B + U V*` on top of a band LU of `B`.
#[derive(Clone, Debug)]
pub struct ShiftedLu {
    op: StructuredOp,
    lu: BandLu,
    z: Mat,
    zt: Mat,
    cap: Option<LU<C64, nalgebra::Dyn, nalgebra::Dyn>>,
    cap_t: Option<LU<C64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl ShiftedLu {
    pub fn operator(&self) -> &StructuredOp {
        &self.op
    }

    fn solve_once(&self, b: &CVec) -> CVec {
        let mut x = CVec::from_vec(self.lu.solve(b.as_slice()));
        if let Some(cap) = &self.cap {
            let rhs = self.op.v.ad_mul(&x);
            if let Some(c) = cap.solve(&rhs) {
                x.gemv(C64::new(-1.0, 0.0), &self.z, &c, C64::new(1.0, 0.0));
            }
        }
        x
    }

    fn solve_adjoint_once(&self, b: &CVec) -> CVec {
        let mut x = CVec::from_vec(self.lu.solve_adjoint(b.as_slice()));
        if let Some(cap) = &self.cap_t {
            let rhs = self.op.u.ad_mul(&x);
            if let Some(c) = cap.solve(&rhs) {
                x.gemv(C64::new(-1.0, 0.0), &self.zt, &c, C64::new(1.0, 0.0));
            }
        }
        x
    }

    /// Solve with two steps of iterative refinement.
    pub fn solve(&self, b: &CVec) -> CVec {
        let mut x = self.solve_once(b);
        for _ in 0..2 {
            let r = b - self.op.apply(&x);
            x += self.solve_once(&r);
        }
        x
    }

    pub fn solve_adjoint(&self, b: &CVec) -> CVec {
        let mut x = self.solve_adjoint_once(b);
        for _ in 0..2 {
            let r = b - self.op.apply_adjoint(&x);
            x += self.solve_adjoint_once(&r);
        }
        x
    }

    /// 1-norm condition estimate of the shifted operator.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.op.dim();
        let a = one_norm_estimate(n, |x| self.op.apply(x), |x| self.op.apply_adjoint(x));
        let ai = one_norm_estimate(n, |x| self.solve_once(x), |x| self.solve_adjoint_once(x));
        a * ai
    }
}

/// Hager's estimator with Higham's alternating-sign safeguard.
pub fn one_norm_estimate<F, G>(n: usize, apply: F, apply_adjoint: G) -> f64
where
    F: Fn(&CVec) -> CVec,
    G: Fn(&CVec) -> CVec,
{
    if n == 0 {
        return 0.0;
    }
    let l1 = |v: &CVec| v.iter().map(|z| z.norm()).sum::<f64>();
    let mut x = CVec::from_element(n, C64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = apply(&x);
        est = est.max(l1(&y));
        let xi = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) });
        let z = apply_adjoint(&xi);
        let (j, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        let ztx = z.dotc(&x).re;
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = CVec::zeros(n);
        x[j] = C64::new(1.0, 0.0);
    }
    let denom = (n.max(2) - 1) as f64;
    let alt = CVec::from_fn(n, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        C64::new(s * (1.0 + i as f64 / denom), 0.0)
    });
    let alt_est = 2.0 * l1(&apply(&alt)) / (3.0 * n as f64);
    est.max(alt_est)
}
