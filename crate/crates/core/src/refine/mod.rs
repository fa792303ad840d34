//! Three-block refinement of a half-space decomposition and the commutator
//! certificate built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Warning;
use crate::halfspace::decompose::complement;
use crate::halfspace::{
    decompose, decompose_2x2, decompose_nilpotent, run_case1, ApproachPlan, EngineSettings, HalfSpaceDecomposition2x2,
    Outcome,
};
use crate::ideals::{matrix_ideal_norm, IdealKind, IdealSpec};
use crate::opcore::dense::{max_abs, max_off_diagonal, operator_norm, block_rank, select_cols, select_rows, singular_values, CVec, Mat};
use crate::opcore::RANK_TOL;
use crate::spectra::{ApproachKind, CaseTag, CaseVariant};
use crate::{Error, OperatorSpec, Result, StructuredOp, C64};

/// Smallest half-space that can be split into two infinite parts at truncation scale.
pub const MIN_SPLIT: usize = 8;
/// Size each of the three index sets should reach at acceptance scale.
pub const MIN_BLOCK: usize = 4;

/// `N1` (second, fourth, ... element of the T11 eigenbasis) and `N2` (the rest).
pub fn split_halfspace(dec: &HalfSpaceDecomposition2x2) -> Result<(Vec<usize>, Vec<usize>)> {
    split_indices(dec.m_indices())
}

pub fn split_indices(m: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if m.len() < MIN_SPLIT {
        return Err(Error::BudgetExhausted(format!(
            "half-space of dimension {} is too small to split (needs {MIN_SPLIT})",
            m.len()
        )));
    }
    let n1 = m.iter().skip(1).step_by(2).copied().collect();
    let n2 = m.iter().step_by(2).copied().collect();
    Ok((n1, n2))
}

#[derive(Clone, Debug)]
pub struct Certificates3x3 {
    pub r21_rank: usize,
    pub r31_rank: usize,
    pub r32_rank: usize,
    pub r21_singular: Vec<f64>,
    pub r31_singular: Vec<f64>,
    pub r32_singular: Vec<f64>,
    pub t11_norm: f64,
    pub t11_ideal: f64,
    pub t11_trace: f64,
    pub t11_offdiag: f64,
    pub t33_norm: f64,
    pub t33_ideal: f64,
    pub t33_trace: f64,
    pub t33_offdiag: f64,
    /// Smallest diagonal magnitude of T11 restricted to N1 and N2.
    pub n1_tail: f64,
    pub n2_tail: f64,
    /// Largest `||H x - blocks x|| / ||T||` over the test vectors.
    pub reassembly: f64,
    /// `max |(T33*)* - T^11|` and the same for the corner.
    pub adjoint_roundtrip: f64,
    pub dims: [usize; 3],
    pub sizes_ok: bool,
    pub op_norm: f64,
}

/// Blocks of `S2^-1 S1^-1 S^-1 (T' - beta) S S1 S2` along `N1 + K2 + K1`.
///
/// Index sets are working coordinates of the outer construction; `S1` acts
/// as `Z_in^-*` on the complement `J` of `N1`, and `S2` is the identity since
/// both diagonal blocks come out diagonal in the stored bases.
#[derive(Clone, Debug)]
pub struct BlockForm3x3 {
    pub n1: Vec<usize>,
    pub n2: Vec<usize>,
    pub j_set: Vec<usize>,
    pub k2: Vec<usize>,
    pub k1: Vec<usize>,
    pub t11: Mat,
    pub t12: Mat,
    pub t13: Mat,
    pub r21: Mat,
    pub t22: StructuredOp,
    pub t23: Mat,
    pub r31: Mat,
    pub r32: Mat,
    pub t33: Mat,
    pub certs: Certificates3x3,
    pub outer: HalfSpaceDecomposition2x2,
    /// 2x2 construction for `(T~22)*` with `beta = 0`, in J-local coordinates.
    pub inner: HalfSpaceDecomposition2x2,
    pub warnings: Vec<Warning>,
}

fn gather(x: &CVec, idx: &[usize]) -> CVec {
    CVec::from_fn(idx.len(), |i, _| x[idx[i]])
}

fn scatter(out: &mut CVec, idx: &[usize], v: &CVec) {
    for (i, &k) in idx.iter().enumerate() {
        out[k] = v[i];
    }
}

impl BlockForm3x3 {
    pub fn dim(&self) -> usize {
        self.outer.dim
    }

    /// The conjugated operator applied through the stored similarities.
    pub fn apply_conjugated(&self, x: &CVec) -> CVec {
        let zin = &self.inner.frame;
        let mut y = x.clone();
        scatter(&mut y, &self.j_set, &zin.apply_inverse_adjoint(&gather(x, &self.j_set)));
        let f = &self.outer.frame;
        let mut u = f.apply_inverse(&self.outer.op.apply(&f.apply(&y)));
        let uj = zin.apply_adjoint(&gather(&u, &self.j_set));
        scatter(&mut u, &self.j_set, &uj);
        u
    }

    /// The assembled 3x3 matrix applied block by block.
    pub fn apply_blocks(&self, x: &CVec) -> CVec {
        let (x1, x2, x3) = (gather(x, &self.n1), gather(x, &self.k2), gather(x, &self.k1));
        let o1 = &self.t11 * &x1 + &self.t12 * &x2 + &self.t13 * &x3;
        let o2 = &self.r21 * &x1 + self.t22.apply(&x2) + &self.t23 * &x3;
        let o3 = &self.r31 * &x1 + &self.r32 * &x2 + &self.t33 * &x3;
        let mut out = CVec::zeros(x.len());
        scatter(&mut out, &self.n1, &o1);
        scatter(&mut out, &self.k2, &o2);
        scatter(&mut out, &self.k1, &o3);
        out
    }

    /// Dense assembled matrix; meant for small dimensions.
    pub fn to_dense(&self) -> Mat {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for k in 0..n {
            let mut e = CVec::zeros(n);
            e[k] = C64::new(1.0, 0.0);
            m.set_column(k, &self.apply_blocks(&e));
        }
        m
    }
}

/// Runs the 2x2 pipeline on `spec` and refines it.
pub fn refine_spec(spec: &OperatorSpec, dim: usize, s: &EngineSettings) -> Result<BlockForm3x3> {
    match decompose(spec, dim, s)? {
        Outcome::Decomposed(d) => refine_3x3(*d, s),
        Outcome::Deferred(tag) => Err(Error::Precondition(format!(
            "refinement needs case 1, 2 or the nilpotent case, got {}",
            tag.variant.name()
        ))),
    }
}

fn inner_decomposition(outer: &HalfSpaceDecomposition2x2, a_in: StructuredOp, s: &EngineSettings) -> Result<HalfSpaceDecomposition2x2> {
    let zero = C64::new(0.0, 0.0);
    if outer.case.variant == CaseVariant::Case3Nilpotent {
        let tag = CaseTag { variant: CaseVariant::Case3Nilpotent, beta: zero };
        return decompose_nilpotent(tag, a_in, s);
    }
    let plan = match outer.run.as_ref().map(|r| &r.approach) {
        Some(a) if a.kind != ApproachKind::Secular => {
            let mut a = a.clone();
            a.beta = zero;
            ApproachPlan::Given(a)
        }
        _ => ApproachPlan::Secular,
    };
    let mut inner_settings = s.clone();
    inner_settings.target = None;
    let run = run_case1(&a_in, zero, plan, &inner_settings)?;
    decompose_2x2(CaseTag { variant: CaseVariant::Case1, beta: zero }, a_in, run, &inner_settings)
}

fn stage(e: Error, name: &str) -> Error {
    match e {
        Error::Construction(m) => Error::Construction(format!("{name}: {m}")),
        Error::BudgetExhausted(m) => Error::BudgetExhausted(format!("{name}: {m}")),
        Error::Precondition(m) => Error::Precondition(format!("{name}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{name}: {m}")),
        Error::Approach(m) => Error::Approach(format!("{name}: {m}")),
        other => other,
    }
}

fn top(s: &[f64]) -> Vec<f64> {
    s.iter().take(4).copied().collect()
}

fn diag_min(m: &Mat) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].norm()).fold(f64::INFINITY, f64::min)
}

pub fn refine_3x3(outer: HalfSpaceDecomposition2x2, s: &EngineSettings) -> Result<BlockForm3x3> {
    let (n1, n2) = split_halfspace(&outer)?;
    let n = outer.dim;
    let g = &outer.g;
    let j_set = complement(n, &n1);
    let a_in = g.principal(&j_set).adjoint();
    let inner = inner_decomposition(&outer, a_in, s).map_err(|e| stage(e, "inner"))?;
    let zin = &inner.frame;
    let k1: Vec<usize> = inner.blocks.m_set.iter().map(|&i| j_set[i]).collect();
    let k2: Vec<usize> = inner.blocks.mc_set.iter().map(|&i| j_set[i]).collect();
    let (k1_local, k2_local) = (&inner.blocks.m_set, &inner.blocks.mc_set);

    let t11 = g.block(&n1, &n1);
    let mut top_rows = Mat::zeros(n1.len(), j_set.len());
    let mut left_cols = Mat::zeros(j_set.len(), n1.len());
    for (a, &i) in n1.iter().enumerate() {
        let row = gather(&g.row(i), &j_set).map(|z| z.conj());
        top_rows.set_row(a, &zin.apply_inverse(&row).map(|z| z.conj()).transpose());
        let col = gather(&g.column(i), &j_set);
        left_cols.set_column(a, &zin.apply_adjoint(&col));
    }
    let t12 = select_cols(&top_rows, k2_local);
    let t13 = select_cols(&top_rows, k1_local);
    let r21 = select_rows(&left_cols, k2_local);
    let r31 = select_rows(&left_cols, k1_local);
    let t22 = inner.blocks.t22.adjoint();
    let t23 = inner.blocks.t12.adjoint();
    let r32 = inner.blocks.r.adjoint();
    let t33 = inner.blocks.t11.adjoint();

    let mut warnings = outer.warnings.clone();
    for w in &inner.warnings {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    let tail_n1 = diag_min(&select_rows(&select_cols(&outer.blocks.t11, &positions(&outer.blocks.m_set, &n1)), &positions(&outer.blocks.m_set, &n1)));
    let tail_n2 = diag_min(&select_rows(&select_cols(&outer.blocks.t11, &positions(&outer.blocks.m_set, &n2)), &positions(&outer.blocks.m_set, &n2)));
    let mut form = BlockForm3x3 {
        n1,
        n2,
        j_set,
        k2,
        k1,
        t11,
        t12,
        t13,
        r21,
        t22,
        t23,
        r31,
        r32,
        t33,
        certs: Certificates3x3 {
            r21_rank: 0,
            r31_rank: 0,
            r32_rank: 0,
            r21_singular: Vec::new(),
            r31_singular: Vec::new(),
            r32_singular: Vec::new(),
            t11_norm: 0.0,
            t11_ideal: 0.0,
            t11_trace: 0.0,
            t11_offdiag: 0.0,
            t33_norm: 0.0,
            t33_ideal: 0.0,
            t33_trace: 0.0,
            t33_offdiag: 0.0,
            n1_tail: tail_n1,
            n2_tail: tail_n2,
            reassembly: 0.0,
            adjoint_roundtrip: 0.0,
            dims: [0; 3],
            sizes_ok: false,
            op_norm: 0.0,
        },
        outer,
        inner,
        warnings,
    };
    form.certs = certify_3x3(&form, s.seed)?;
    let c = &form.certs;
    let eps = s.epsilon;
    let fail = |what: String| Err(Error::Construction(format!("3x3 certificate failed: {what}")));
    if c.r21_rank > 1 || c.r31_rank > 1 || c.r32_rank > 1 {
        return fail(format!("corner ranks {} {} {}", c.r21_rank, c.r31_rank, c.r32_rank));
    }
    if c.t11_offdiag > 1e-10 || c.t33_offdiag > 1e-10 {
        return fail(format!("off-diagonal {:e} {:e}", c.t11_offdiag, c.t33_offdiag));
    }
    if !(c.t11_norm < eps && c.t33_norm < eps && c.t11_ideal < eps && c.t33_ideal < eps) {
        return fail(format!("diagonal blocks {:e} {:e} vs epsilon {eps}", c.t11_norm, c.t33_norm));
    }
    if matches!(s.ideal.kind, IdealKind::Trace) && !(c.t11_trace < eps && c.t33_trace < eps) {
        return fail("trace norms".into());
    }
    if c.reassembly > 1e-8 {
        return fail(format!("reassembly residual {:e}", c.reassembly));
    }
    Ok(form)
}

/// Local positions of `sub` inside `set`.
fn positions(set: &[usize], sub: &[usize]) -> Vec<usize> {
    sub.iter().map(|x| set.iter().position(|y| y == x).expect("subset")).collect()
}

fn certify_3x3(f: &BlockForm3x3, seed: u64) -> Result<Certificates3x3> {
    let ideal = f.outer.ideal;
    let trace = IdealSpec::trace();
    let sv21 = singular_values(&f.r21)?;
    let sv31 = singular_values(&f.r31)?;
    let sv32 = singular_values(&f.r32)?;
    let op_norm = f.outer.op.norm_bound().max(f64::MIN_POSITIVE);

    let n = f.dim();
    let mut tests: Vec<CVec> = f
        .n1
        .iter()
        .chain(&f.k1)
        .map(|&k| {
            let mut e = CVec::zeros(n);
            e[k] = C64::new(1.0, 0.0);
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..4 {
        let v = CVec::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let nv = v.norm();
        tests.push(v / C64::new(nv, 0.0));
    }
    let reassembly = tests
        .iter()
        .map(|x| (f.apply_conjugated(x) - f.apply_blocks(x)).norm() / op_norm)
        .fold(0.0, f64::max);
    let adjoint_roundtrip = max_abs(&(f.t33.adjoint() - &f.inner.blocks.t11)).max(max_abs(&(f.r32.adjoint() - &f.inner.blocks.r)));
    let dims = [f.n1.len(), f.k2.len(), f.k1.len()];
    Ok(Certificates3x3 {
        r21_rank: block_rank(&sv21, RANK_TOL, op_norm),
        r31_rank: block_rank(&sv31, RANK_TOL, op_norm),
        r32_rank: block_rank(&sv32, RANK_TOL, op_norm),
        r21_singular: top(&sv21),
        r31_singular: top(&sv31),
        r32_singular: top(&sv32),
        t11_norm: operator_norm(&f.t11)?,
        t11_ideal: matrix_ideal_norm(&f.t11, &ideal)?,
        t11_trace: matrix_ideal_norm(&f.t11, &trace)?,
        t11_offdiag: max_off_diagonal(&f.t11),
        t33_norm: operator_norm(&f.t33)?,
        t33_ideal: matrix_ideal_norm(&f.t33, &ideal)?,
        t33_trace: matrix_ideal_norm(&f.t33, &trace)?,
        t33_offdiag: max_off_diagonal(&f.t33),
        n1_tail: f.certs.n1_tail,
        n2_tail: f.certs.n2_tail,
        reassembly,
        adjoint_roundtrip,
        dims,
        sizes_ok: dims.iter().all(|&d| d >= MIN_BLOCK),
        op_norm,
    })
}

/// Commutator `(3,1)` entry and its split into a rank-4 part and a part
/// controlled by the diagonal blocks.
#[derive(Clone, Debug)]
pub struct DerivationCertificate {
    pub c31: Mat,
    pub f: Mat,
    pub a: Mat,
    /// `max |C31 - F - A| / (||X|| ||T||)`.
    pub split_residual: f64,
    /// `max |C31 - (HX - XH)[K1, N1]| / (||X|| ||T||)` with `H` assembled densely.
    pub direct_residual: f64,
    pub f_rank: usize,
    pub a_trace: f64,
    pub bound: f64,
    pub x_norm: f64,
    pub c31_singular: Vec<f64>,
    pub a_singular: Vec<f64>,
    /// `max_k s_{k+4}(C31) - s_k(A)`.
    pub interlacing_gap: f64,
    /// `C31` measured in the smaller and larger ideal of the pair.
    pub c31_trace: f64,
    pub c31_hilbert_schmidt: f64,
    pub pass: bool,
}

/// Seeded test operator with entries uniform in the unit square, scaled by `n^-1/2`.
pub fn random_test_operator(n: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (n as f64).sqrt();
    Mat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0) / s, rng.random_range(-1.0..1.0) / s))
}

pub fn derivation_certificate(form: &BlockForm3x3, x: &Mat) -> Result<DerivationCertificate> {
    let n = form.dim();
    if x.shape() != (n, n) {
        return Err(Error::Config(format!("X is {}x{}, the block form has dimension {n}", x.nrows(), x.ncols())));
    }
    let blk = |r: &[usize], c: &[usize]| select_cols(&select_rows(x, r), c);
    let (n1, k2, k1) = (&form.n1, &form.k2, &form.k1);
    let (x11, x21, x31) = (blk(n1, n1), blk(k2, n1), blk(k1, n1));
    let (x32, x33) = (blk(k1, k2), blk(k1, k1));
    let f = &form.r31 * &x11 + &form.r32 * &x21 - &x32 * &form.r21 - &x33 * &form.r31;
    let a = &form.t33 * &x31 - &x31 * &form.t11;
    let c31 = &form.r31 * &x11 + &form.r32 * &x21 + &form.t33 * &x31 - &x31 * &form.t11 - &x32 * &form.r21 - &x33 * &form.r31;

    let x_norm = operator_norm(x)?;
    let scale = (x_norm * form.certs.op_norm).max(f64::MIN_POSITIVE);
    let split_residual = max_abs(&(&c31 - &f - &a)) / scale;
    let h = form.to_dense();
    let comm = &h * x - x * &h;
    let direct_residual = max_abs(&(&c31 - select_cols(&select_rows(&comm, k1), n1))) / scale;

    let trace = IdealSpec::trace();
    let f_sv = singular_values(&f)?;
    let c_sv = singular_values(&c31)?;
    let a_sv = singular_values(&a)?;
    let a_trace: f64 = a_sv.iter().sum();
    let bound = x_norm * (matrix_ideal_norm(&form.t11, &trace)? + matrix_ideal_norm(&form.t33, &trace)?);
    let interlacing_gap = (0..c_sv.len().saturating_sub(4))
        .map(|k| c_sv[k + 4] - a_sv.get(k).copied().unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let f_rank = block_rank(&f_sv, RANK_TOL, scale);
    let c31_trace = c_sv.iter().sum();
    let c31_hilbert_schmidt = c_sv.iter().map(|s| s * s).sum::<f64>().sqrt();
    let pass = split_residual <= 1e-12
        && f_rank <= 4
        && a_trace <= bound + 1e-10
        && !(interlacing_gap > 1e-10);
    Ok(DerivationCertificate {
        c31,
        f,
        a,
        split_residual,
        direct_residual,
        f_rank,
        a_trace,
        bound,
        x_norm,
        c31_singular: c_sv,
        a_singular: a_sv,
        interlacing_gap,
        c31_trace,
        c31_hilbert_schmidt,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_parity() {
        let (n1, n2) = split_indices(&[1, 3, 5, 7, 9, 11, 13, 15]).unwrap();
        assert_eq!(n1, vec![3, 7, 11, 15]);
        assert_eq!(n2, vec![1, 5, 9, 13]);
        assert!(matches!(split_indices(&[1, 3, 5, 7]), Err(Error::BudgetExhausted(_))));
    }

    #[test]
    fn nilpotent_refinement_is_degenerate() {
        let s = EngineSettings::new(IdealSpec::trace(), 0.01);
        let f = refine_spec(&OperatorSpec::nilpotent_pair(1.0), 128, &s).unwrap();
        assert_eq!((f.r21.norm(), f.r31.norm(), f.r32.norm()), (0.0, 0.0, 0.0));
        assert_eq!(f.certs.reassembly, 0.0);
        assert!(f.certs.sizes_ok);
    }

    #[test]
    fn commutator_with_identity_vanishes() {
        let s = EngineSettings::new(IdealSpec::trace(), 0.01);
        let f = refine_spec(&OperatorSpec::nilpotent_pair(1.0), 64, &s).unwrap();
        let d = derivation_certificate(&f, &Mat::identity(64, 64)).unwrap();
        assert_eq!(d.c31.norm(), 0.0);
        assert!(d.pass);
        assert!(matches!(derivation_certificate(&f, &Mat::identity(3, 3)), Err(Error::Config(_))));
    }
}
