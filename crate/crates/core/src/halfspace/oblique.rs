//! Blocks of `T' - beta` itself along `S[M] + S[M^perp]`, taken with the
//! idempotent `E = S P_M S^-1`.

use crate::halfspace::decompose::HalfSpaceDecomposition2x2;
use crate::halfspace::frame::householder_qr;
use crate::opcore::dense::{eigenvalues, multiset_distance, operator_norm, block_rank, singular_values, CVec, Mat};
use crate::opcore::RANK_TOL;
use crate::{Error, Result, C64};

#[derive(Clone, Debug)]
pub struct ObliqueDecomposition {
    /// Basis `S f` of `M^`, one column per element of M.
    pub m_hat: Mat,
    /// `W` with `E = m_hat W*`.
    pub w: Mat,
    /// Orthonormal basis of `M^`.
    pub q_hat: Mat,
    pub t11_hat: Mat,
    /// `(I - E) T q_hat`, in original coordinates.
    pub r_hat: Mat,
    /// `q_hat* E T (I - E)`, as rows over original coordinates.
    pub t12_hat: Mat,
    /// Bound on `||E^2 - E||`.
    pub idempotency: f64,
    pub r_hat_rank: usize,
    pub r_hat_singular: Vec<f64>,
    pub spectrum_t11: Vec<C64>,
    pub spectrum_t11_hat: Vec<C64>,
    pub spectrum_distance: f64,
}

pub fn oblique_form(dec: &HalfSpaceDecomposition2x2) -> Result<ObliqueDecomposition> {
    let n = dec.dim;
    let ms = &dec.blocks.m_set;
    let k = ms.len();
    let mut m_hat = Mat::zeros(n, k);
    let mut w = Mat::zeros(n, k);
    for (c, &i) in ms.iter().enumerate() {
        let mut e = CVec::zeros(n);
        e[i] = C64::new(1.0, 0.0);
        m_hat.set_column(c, &dec.frame.apply(&e));
        w.set_column(c, &dec.frame.apply_inverse_adjoint(&e));
    }
    let wb = w.ad_mul(&m_hat) - Mat::identity(k, k);
    let idempotency = operator_norm(&m_hat)? * operator_norm(&wb)? * operator_norm(&w)?;
    if idempotency > 1e-6 {
        return Err(Error::Numerical(format!("E is not idempotent ({idempotency:e})")));
    }

    let (q, _) = householder_qr(&m_hat);
    let mut q_hat = Mat::zeros(n, k);
    for c in 0..k {
        let mut e = CVec::zeros(n);
        e[c] = C64::new(1.0, 0.0);
        q_hat.set_column(c, &q.apply(&e));
    }
    let tq = dec.op.apply_mat(&q_hat);
    let wtq = w.ad_mul(&tq);
    let t11_hat = q_hat.ad_mul(&m_hat) * &wtq;
    let r_hat = &tq - &m_hat * &wtq;
    let c = &w * m_hat.ad_mul(&q_hat);
    let d = dec.op.apply_adjoint_mat(&c);
    let x = &d - &w * m_hat.ad_mul(&d);
    let t12_hat = x.adjoint();

    let sv = singular_values(&r_hat)?;
    let r_hat_rank = block_rank(&sv, RANK_TOL, dec.certs.op_norm);
    let spectrum_t11: Vec<C64> = (0..k).map(|i| dec.blocks.t11[(i, i)]).collect();
    let spectrum_t11_hat = eigenvalues(&t11_hat)?;
    let spectrum_distance = multiset_distance(&spectrum_t11, &spectrum_t11_hat);
    Ok(ObliqueDecomposition {
        m_hat,
        w,
        q_hat,
        t11_hat,
        r_hat,
        t12_hat,
        idempotency,
        r_hat_rank,
        r_hat_singular: sv.into_iter().take(4).collect(),
        spectrum_t11,
        spectrum_t11_hat,
        spectrum_distance,
    })
}
