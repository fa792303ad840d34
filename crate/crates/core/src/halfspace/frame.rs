use crate::halfspace::system::{AlmostOrthogonalSystem, RIESZ_LOWER};
use crate::opcore::dense::{operator_norm, singular_values, CVec, Mat};
use crate::opcore::structured::StructuredOp;
use crate::{Error, Result, C64};

/// `Q = I - V T V*` from a Householder QR (compact WY form).
#[derive(Clone, Debug)]
pub struct HouseholderQ {
    pub v: Mat,
    pub t: Mat,
}

impl HouseholderQ {
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        x - &self.v * (&self.t * self.v.ad_mul(x))
    }

    pub fn apply_adjoint(&self, x: &CVec) -> CVec {
        x - &self.v * (self.t.adjoint() * self.v.ad_mul(x))
    }
}

/// Householder QR of a tall matrix: `a = Q R`, returns `Q` and the leading
/// `m x m` block of `R`.
pub fn householder_qr(a: &Mat) -> (HouseholderQ, Mat) {
    let (n, m) = a.shape();
    let mut w = a.clone();
    let mut v = Mat::zeros(n, m);
    let mut tau = vec![C64::new(0.0, 0.0); m];
    for k in 0..m {
        let alpha = w[(k, k)];
        let xnorm = w.view((k + 1, k), (n - k - 1, 1)).norm();
        v[(k, k)] = C64::new(1.0, 0.0);
        if xnorm == 0.0 && alpha.im == 0.0 {
            continue;
        }
        let mag = (alpha.norm_sqr() + xnorm * xnorm).sqrt();
        let beta = if alpha.re >= 0.0 { -mag } else { mag };
        tau[k] = (C64::new(beta, 0.0) - alpha) / beta;
        let scale = C64::new(1.0, 0.0) / (alpha - beta);
        for i in k + 1..n {
            v[(i, k)] = w[(i, k)] * scale;
            w[(i, k)] = C64::new(0.0, 0.0);
        }
        w[(k, k)] = C64::new(beta, 0.0);
        // H* = I - conj(tau) v v* on the remaining columns.
        let vk = v.column(k).rows(k, n - k).into_owned();
        for j in k + 1..m {
            let mut col = w.view_mut((k, j), (n - k, 1));
            let s = vk.dotc(&col) * tau[k].conj();
            col -= &vk * s;
        }
    }
    let mut t = Mat::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = tau[i];
        if i > 0 {
            let vi = v.column(i).into_owned();
            let prod = v.columns(0, i).ad_mul(&vi);
            let col = t.view((0, 0), (i, i)) * prod * (-tau[i]);
            t.view_mut((0, i), (i, 1)).copy_from(&col);
        }
    }
    let r = w.view((0, 0), (m, m)).into_owned();
    (HouseholderQ { v, t }, r)
}

/// Orthonormal basis `f_k = Q e_k * sign(R_kk)` of the selected system.
#[derive(Clone, Debug)]
pub struct Orthonormal {
    pub q: HouseholderQ,
    /// Leading block of `Q* L`; upper triangular.
    pub r: Mat,
    pub f: Mat,
    /// `max |F* F - I|`.
    pub gram_defect: f64,
    /// Largest distance of `l_j` from `span{f_1..f_j}`.
    pub nesting_defect: f64,
    /// `||f_1 - e||`.
    pub probe_defect: f64,
}

pub fn orthonormalize(sys: &AlmostOrthogonalSystem) -> Result<Orthonormal> {
    let l = sys.l_matrix();
    let (n, m) = l.shape();
    let (q, r) = householder_qr(&l);
    let mut f = Mat::zeros(n, m);
    for k in 0..m {
        if r[(k, k)].norm() < 1e-12 {
            return Err(Error::Construction(format!("selected vector {} is dependent", k + 1)));
        }
        let mut ek = CVec::zeros(n);
        ek[k] = C64::new(r[(k, k)].re.signum(), 0.0);
        f.set_column(k, &q.apply(&ek));
    }
    let probe_defect = (f.column(0) - &sys.l_vectors[0]).norm();
    f.set_column(0, &sys.l_vectors[0]);
    let gram = f.ad_mul(&f) - Mat::identity(m, m);
    let gram_defect = gram.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if gram_defect > 1e-8 {
        return Err(Error::Numerical(format!("orthonormal basis lost orthogonality ({gram_defect:e})")));
    }
    let mut nesting_defect: f64 = 0.0;
    for j in 0..m {
        let fj = f.columns(0, j + 1);
        let lj = l.column(j);
        let resid = lj - fj * fj.ad_mul(&lj);
        nesting_defect = nesting_defect.max(resid.norm());
    }
    Ok(Orthonormal { q, r, f, gram_defect, nesting_defect, probe_defect })
}

/// `S = L F* + (I - F F*)`, kept in factored form.
#[derive(Clone, Debug)]
pub struct SimilarityMap {
    pub l: Mat,
    pub f: Mat,
    /// `(F* L)^-1`.
    pub fl_inv: Mat,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Singular values of `S` restricted to `span F`.
    pub restricted: Vec<f64>,
    /// `||S S^-1 - I||`.
    pub inverse_defect: f64,
    /// `max_k ||S f_k - l_k||`.
    pub map_defect: f64,
}

impl SimilarityMap {
    pub fn identity(n: usize) -> SimilarityMap {
        SimilarityMap {
            l: Mat::zeros(n, 0),
            f: Mat::zeros(n, 0),
            fl_inv: Mat::zeros(0, 0),
            sigma_min: 1.0,
            sigma_max: 1.0,
            restricted: Vec::new(),
            inverse_defect: 0.0,
            map_defect: 0.0,
        }
    }

    pub fn rank(&self) -> usize {
        self.f.ncols()
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        if self.rank() == 0 {
            return x.clone();
        }
        x + (&self.l - &self.f) * self.f.ad_mul(x)
    }

    pub fn apply_inverse(&self, x: &CVec) -> CVec {
        if self.rank() == 0 {
            return x.clone();
        }
        x - (&self.l - &self.f) * (&self.fl_inv * self.f.ad_mul(x))
    }

    /// `S^-* x`.
    pub fn apply_inverse_adjoint(&self, x: &CVec) -> CVec {
        if self.rank() == 0 {
            return x.clone();
        }
        x - &self.f * (self.fl_inv.adjoint() * (&self.l - &self.f).ad_mul(x))
    }

    /// Entrywise conjugate embedded along `order` (working index -> original).
    pub fn embedded_conjugate(&self, order: &[usize], n: usize) -> SimilarityMap {
        let place = |m: &Mat| {
            let mut out = Mat::zeros(n, m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out[(order[i], j)] = m[(i, j)].conj();
                }
            }
            out
        };
        SimilarityMap {
            l: place(&self.l),
            f: place(&self.f),
            fl_inv: self.fl_inv.map(|z| z.conj()),
            ..self.clone()
        }
    }
}

pub fn build_similarity(sys: &AlmostOrthogonalSystem, ortho: &Orthonormal) -> Result<SimilarityMap> {
    let l = sys.l_matrix();
    let f = ortho.f.clone();
    let m = l.ncols();
    let fl = f.ad_mul(&l);
    let fl_inv = fl
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Construction("F* L is singular".into()))?;
    let restricted = singular_values(&l)?;
    let smin = restricted.last().copied().unwrap_or(1.0);
    let smax = restricted.first().copied().unwrap_or(1.0);
    if smin < RIESZ_LOWER.sqrt() / 2.0 {
        return Err(Error::Construction(format!("similarity has sigma_min {smin:e}")));
    }
    let a = &l - &f;
    let middle = Mat::identity(m, m) - &fl_inv - f.ad_mul(&a) * &fl_inv;
    let inverse_defect = operator_norm(&(&a * middle))?;
    let sf = &f + &a * f.ad_mul(&f);
    let map_defect = (0..m).map(|k| (sf.column(k) - l.column(k)).norm()).fold(0.0, f64::max);
    Ok(SimilarityMap {
        l,
        f,
        fl_inv,
        sigma_min: smin.min(1.0),
        sigma_max: smax.max(1.0),
        restricted,
        inverse_defect,
        map_defect,
    })
}

/// Change of coordinates `Z` from working coordinates to the original basis.
#[derive(Clone, Debug)]
pub enum Frame {
    Identity { n: usize },
    /// `Z = Q diag(R, I)`, so `Z e_k = l_k` for `k < m`.
    Householder { q: HouseholderQ, r: Mat, r_inv: Mat },
    /// Inner frame on the first `inner_dim` working coordinates, identity on
    /// the rest, optionally conjugated entrywise; `order` maps working to
    /// original indices.
    Embedded { inner: Box<Frame>, order: Vec<usize>, inner_dim: usize, conjugate: bool },
}

impl Frame {
    pub fn dim(&self) -> usize {
        match self {
            Frame::Identity { n } => *n,
            Frame::Householder { q, .. } => q.dim(),
            Frame::Embedded { order, .. } => order.len(),
        }
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        match self {
            Frame::Identity { .. } => x.clone(),
            Frame::Householder { q, r, .. } => {
                let m = r.nrows();
                let mut y = x.clone();
                let top = r * x.rows(0, m);
                y.rows_mut(0, m).copy_from(&top);
                q.apply(&y)
            }
            Frame::Embedded { inner, order, inner_dim, conjugate } => {
                let mut xin = x.rows(0, *inner_dim).into_owned();
                if *conjugate {
                    xin = xin.map(|z| z.conj());
                }
                let mut z = inner.apply(&xin);
                if *conjugate {
                    z = z.map(|v| v.conj());
                }
                let mut y = CVec::zeros(order.len());
                for (i, &o) in order.iter().enumerate() {
                    y[o] = if i < *inner_dim { z[i] } else { x[i] };
                }
                y
            }
        }
    }

    /// `Z* y`, mapping the original basis to working coordinates.
    pub fn apply_adjoint(&self, y: &CVec) -> CVec {
        match self {
            Frame::Identity { .. } => y.clone(),
            Frame::Householder { q, r, .. } => {
                let m = r.nrows();
                let mut w = q.apply_adjoint(y);
                let top = r.adjoint() * w.rows(0, m);
                w.rows_mut(0, m).copy_from(&top);
                w
            }
            Frame::Embedded { inner, order, inner_dim, conjugate } => {
                let mut yin = CVec::from_fn(*inner_dim, |i, _| y[order[i]]);
                if *conjugate {
                    yin = yin.map(|z| z.conj());
                }
                let mut z = inner.apply_adjoint(&yin);
                if *conjugate {
                    z = z.map(|v| v.conj());
                }
                CVec::from_fn(order.len(), |i, _| if i < *inner_dim { z[i] } else { y[order[i]] })
            }
        }
    }

    /// `Z^-* x`, mapping working coordinates to the original basis.
    pub fn apply_inverse_adjoint(&self, x: &CVec) -> CVec {
        match self {
            Frame::Identity { .. } => x.clone(),
            Frame::Householder { q, r_inv, .. } => {
                let m = r_inv.nrows();
                let mut y = x.clone();
                let top = r_inv.adjoint() * x.rows(0, m);
                y.rows_mut(0, m).copy_from(&top);
                q.apply(&y)
            }
            Frame::Embedded { inner, order, inner_dim, conjugate } => {
                let mut xin = x.rows(0, *inner_dim).into_owned();
                if *conjugate {
                    xin = xin.map(|z| z.conj());
                }
                let mut z = inner.apply_inverse_adjoint(&xin);
                if *conjugate {
                    z = z.map(|v| v.conj());
                }
                let mut y = CVec::zeros(order.len());
                for (i, &o) in order.iter().enumerate() {
                    y[o] = if i < *inner_dim { z[i] } else { x[i] };
                }
                y
            }
        }
    }

    pub fn apply_inverse(&self, y: &CVec) -> CVec {
        match self {
            Frame::Identity { .. } => y.clone(),
            Frame::Householder { q, r_inv, .. } => {
                let m = r_inv.nrows();
                let mut x = q.apply_adjoint(y);
                let top = r_inv * x.rows(0, m);
                x.rows_mut(0, m).copy_from(&top);
                x
            }
            Frame::Embedded { inner, order, inner_dim, conjugate } => {
                let mut yin = CVec::from_fn(*inner_dim, |i, _| y[order[i]]);
                if *conjugate {
                    yin = yin.map(|z| z.conj());
                }
                let mut z = inner.apply_inverse(&yin);
                if *conjugate {
                    z = z.map(|v| v.conj());
                }
                CVec::from_fn(order.len(), |i, _| if i < *inner_dim { z[i] } else { y[order[i]] })
            }
        }
    }
}

/// `G = Z^-1 T Z` for `Z = Q diag(R, I)`, as a structured operator.
pub fn conjugate_operator(op: &StructuredOp, q: &HouseholderQ, r: &Mat, r_inv: &Mat) -> Result<StructuredOp> {
    let n = op.dim();
    let m = r.nrows();
    let v = &q.v;
    let t = &q.t;
    let av = op.apply_mat(v);
    let asv = op.apply_adjoint_mat(v);
    let vav = v.ad_mul(&av);
    let x1 = -(&av * t) + v * (t.adjoint() * vav * t);
    let x2 = -(v * t.adjoint());
    let x = concat_cols(&[&x1, &x2]);
    let y = concat_cols(&[v, &asv]);
    let a2 = op.with_update(&x, &y)?;

    let mut e1 = Mat::zeros(n, m);
    for k in 0..m {
        e1[(k, k)] = C64::new(1.0, 0.0);
    }
    let a2e1 = a2.apply_mat(&e1);
    let mut v1 = a2.apply_adjoint_mat(&e1);
    let top = r.adjoint() * v1.rows(0, m);
    v1.rows_mut(0, m).copy_from(&top);
    let eye = Mat::identity(m, m);
    let mut u1 = Mat::zeros(n, m);
    u1.view_mut((0, 0), (m, m)).copy_from(&(r_inv - &eye));
    let u2 = a2e1 * (r - &eye);
    a2.with_update(&concat_cols(&[&u1, &u2]), &concat_cols(&[&v1, &e1]))
}

pub fn concat_cols(parts: &[&Mat]) -> Mat {
    let n = parts.first().map_or(0, |p| p.nrows());
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(n, total);
    let mut at = 0;
    for p in parts {
        out.view_mut((0, at), (n, p.ncols())).copy_from(*p);
        at += p.ncols();
    }
    out
}

/// Inverse of an upper triangular matrix.
pub fn upper_inverse(r: &Mat) -> Result<Mat> {
    let m = r.nrows();
    let mut inv = Mat::identity(m, m);
    if !r.solve_upper_triangular_mut(&mut inv) {
        return Err(Error::Construction("triangular factor is singular".into()));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::banded::Banded;
    use rand::{Rng, SeedableRng};

    fn random_mat(n: usize, m: usize, seed: u64) -> Mat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, m, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn householder_reconstructs() {
        let a = random_mat(20, 5, 1);
        let (q, r) = householder_qr(&a);
        for k in 0..5 {
            let mut top = CVec::zeros(20);
            top.rows_mut(0, 5).copy_from(&r.column(k));
            assert!((q.apply(&top) - a.column(k)).norm() < 1e-13);
        }
        for i in 0..5 {
            for j in 0..i {
                assert!(r[(i, j)].norm() < 1e-14);
            }
        }
        let x = random_mat(20, 1, 2).column(0).into_owned();
        assert!((q.apply_adjoint(&q.apply(&x)) - &x).norm() < 1e-13);
    }

    #[test]
    fn two_vector_gram_schmidt() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut l0 = CVec::zeros(3);
        l0[0] = C64::new(1.0, 0.0);
        let l1 = CVec::from_vec(vec![C64::new(s, 0.0), C64::new(s, 0.0), C64::new(0.0, 0.0)]);
        let sys = AlmostOrthogonalSystem {
            selected: vec![None, Some(0)],
            l_vectors: vec![l0, l1],
            gram: Mat::identity(2, 2),
            lambdas: vec![C64::new(0.0, 0.0); 2],
            alphas: vec![0.0; 2],
            dd: false,
        };
        let o = orthonormalize(&sys).unwrap();
        assert!((o.f[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((o.f[(1, 1)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(o.f[(0, 1)].norm() < 1e-15 && o.f[(2, 1)].norm() < 1e-15);
        let s = build_similarity(&sys, &o).unwrap();
        let x = CVec::from_vec(vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 2.0)]);
        assert!((s.apply(&x) - &x).norm() < 1e-15);
        assert!(s.inverse_defect < 1e-14 && s.map_defect < 1e-15);
    }

    #[test]
    fn conjugation_matches_dense() {
        let n = 12;
        let mut b = Banded::zeros(n, 1, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                b.set(i, j, C64::new(rng.random_range(-1.0..1.0), 0.0));
            }
        }
        let op = StructuredOp::new(b, random_mat(n, 1, 6), random_mat(n, 1, 7)).unwrap();
        let mut l = random_mat(n, 3, 8);
        l.set_column(0, &(l.column(0) / C64::new(l.column(0).norm(), 0.0)));
        let (q, r) = householder_qr(&l);
        let r_inv = upper_inverse(&r).unwrap();
        let g = conjugate_operator(&op, &q, &r, &r_inv).unwrap();
        let frame = Frame::Householder { q, r, r_inv };
        let dense = op.to_dense();
        for k in 0..n {
            let mut ek = CVec::zeros(n);
            ek[k] = C64::new(1.0, 0.0);
            let want = frame.apply_inverse(&(&dense * frame.apply(&ek)));
            assert!((g.column(k) - want).norm() < 1e-12, "column {k}");
        }
        for k in 0..3 {
            let mut ek = CVec::zeros(n);
            ek[k] = C64::new(1.0, 0.0);
            assert!((frame.apply(&ek) - l.column(k)).norm() < 1e-13);
        }
        let x = random_mat(n, 1, 9).column(0).into_owned();
        let y = random_mat(n, 1, 10).column(0).into_owned();
        assert!((frame.apply_adjoint(&y).dotc(&x) - y.dotc(&frame.apply(&x))).norm() < 1e-12);
        assert!((frame.apply_adjoint(&frame.apply_inverse_adjoint(&x)) - &x).norm() < 1e-12);
        let emb = Frame::Embedded { inner: Box::new(frame), order: (0..n + 2).rev().collect(), inner_dim: n, conjugate: true };
        let x2 = random_mat(n + 2, 1, 11).column(0).into_owned();
        let y2 = random_mat(n + 2, 1, 12).column(0).into_owned();
        assert!((emb.apply_adjoint(&y2).dotc(&x2) - y2.dotc(&emb.apply(&x2))).norm() < 1e-12);
        assert!((emb.apply_adjoint(&emb.apply_inverse_adjoint(&x2)) - &x2).norm() < 1e-12);
    }
}
