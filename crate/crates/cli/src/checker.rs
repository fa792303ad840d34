//! Independent re-check of every certificate from raw matrices, frames and
//! the truncated operator. Nothing here reads a pipeline certificate field
//! except to report agreement.

use halfspace_core::halfspace::system::{RIESZ_LOWER, RIESZ_UPPER};
use halfspace_core::halfspace::{Frame, HalfSpaceDecomposition2x2, ObliqueDecomposition};
use halfspace_core::ideals::{sequence_norm, IdealKind};
use halfspace_core::opcore::dd::{self, Dd};
use halfspace_core::opcore::dense::{block_rank, eigenvalues, hermitian_eigenvalues, max_abs, multiset_distance, select_cols, select_rows, singular_values};
use halfspace_core::refine::{random_test_operator, BlockForm3x3, DerivationCertificate, MIN_BLOCK};
use halfspace_core::spectra::CaseVariant;
use halfspace_core::{CVec, Mat, Result as CoreResult, StructuredOp, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ToleranceOverrides;
use crate::report::{Check, Relation};
use crate::CliError;

pub const TOL_SCALE_ENV: &str = "HALFSPACE_TOL_SCALE";

/// Certificate tolerances. All are multiplied by the global scale; the
/// epsilon budget and the integer rank bounds are not.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub rank: f64,
    pub offdiag: f64,
    pub block_action: f64,
    pub residual: f64,
    pub idempotency: f64,
    pub spectrum: f64,
    pub reassembly: f64,
    pub split: f64,
    pub bound: f64,
    pub pattern: f64,
    pub roundtrip: f64,
    pub riesz_slack: f64,
    pub agreement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-8,
            offdiag: 1e-10,
            block_action: 1e-8,
            residual: 1e-9,
            idempotency: 1e-8,
            spectrum: 1e-8,
            reassembly: 1e-8,
            split: 1e-12,
            bound: 1e-10,
            pattern: 1e-6,
            roundtrip: 1e-12,
            riesz_slack: 1e-12,
            agreement: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn from_overrides(o: &ToleranceOverrides, scale: f64) -> Tolerances {
        let d = Tolerances::default();
        let pick = |v: Option<f64>, base: f64| v.unwrap_or(base) * scale;
        Tolerances {
            rank: pick(o.rank, d.rank),
            offdiag: pick(o.offdiag, d.offdiag),
            block_action: pick(o.block_action, d.block_action),
            residual: pick(o.residual, d.residual),
            idempotency: pick(o.idempotency, d.idempotency),
            spectrum: pick(o.spectrum, d.spectrum),
            reassembly: pick(o.reassembly, d.reassembly),
            split: pick(o.split, d.split),
            bound: pick(o.bound, d.bound),
            pattern: d.pattern * scale,
            roundtrip: d.roundtrip * scale,
            riesz_slack: d.riesz_slack * scale,
            agreement: d.agreement * scale,
        }
    }
}

/// Global multiplier from the environment; 1 when unset.
pub fn env_scale() -> Result<f64, CliError> {
    match std::env::var(TOL_SCALE_ENV) {
        Err(_) => Ok(1.0),
        Ok(v) => parse_scale(&v),
    }
}

pub fn parse_scale(v: &str) -> Result<f64, CliError> {
    match v.trim().parse::<f64>() {
        Ok(s) if s.is_finite() && s > 0.0 => Ok(s),
        _ => Err(CliError::Config(format!("{TOL_SCALE_ENV}: {v:?} is not a positive number"))),
    }
}

fn unit(n: usize, k: usize) -> CVec {
    let mut e = CVec::zeros(n);
    e[k] = C64::new(1.0, 0.0);
    e
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    let v = CVec::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let nv = v.norm();
    v / C64::new(nv, 0.0)
}

fn offdiag(m: &Mat) -> f64 {
    let mut w: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                w = w.max(m[(i, j)].norm());
            }
        }
    }
    w
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// Norms of one block measured against the epsilon budget.
fn budget_checks(stage: &str, name: &str, m: &Mat, eps: f64, kind: IdealKind, op_norm: f64, tol: &Tolerances, out: &mut Vec<Check>) -> CoreResult<(f64, usize)> {
    let sv = singular_values(m)?;
    let norm = sv.first().copied().unwrap_or(0.0);
    let ideal = halfspace_core::IdealSpec { kind };
    out.push(Check::new(stage, &format!("{name}.norm"), &format!("||{name}|| < epsilon"), norm, Relation::Lt, eps));
    out.push(Check::new(
        stage,
        &format!("{name}.ideal"),
        &format!("{} norm of {name} < epsilon", ideal.name()),
        sequence_norm(&sv, &ideal),
        Relation::Lt,
        eps,
    ));
    if matches!(kind, IdealKind::Trace) {
        let trace: f64 = sv.iter().sum();
        out.push(Check::new(stage, &format!("{name}.trace"), &format!("trace norm of {name} < epsilon"), trace, Relation::Lt, eps));
    }
    Ok((norm, block_rank(&sv, tol.rank, op_norm)))
}

/// The operator the Case 1 construction ran on: `T' - beta` itself, or for
/// the eigenvector branch the adjoint of the reducing restriction.
pub fn run_operator(dec: &HalfSpaceDecomposition2x2) -> StructuredOp {
    match &dec.frame {
        Frame::Embedded { order, inner_dim, .. } => {
            let mut idx: Vec<usize> = order[..*inner_dim].to_vec();
            idx.sort_unstable();
            debug_assert_eq!(idx, order[..*inner_dim]);
            dec.op.principal(&idx).adjoint()
        }
        _ => dec.op.clone(),
    }
}

pub fn check_decompose(dec: &HalfSpaceDecomposition2x2, tol: &Tolerances, seed: u64) -> CoreResult<Vec<Check>> {
    let st = "decompose2";
    let mut out = Vec::new();
    let op_norm = dec.op.norm_bound().max(f64::MIN_POSITIVE);
    let eps = dec.epsilon;

    if let Some(run) = &dec.run {
        let t = run_operator(dec);
        let seq = &run.seq;
        let mut worst: f64 = 0.0;
        for (k, h) in seq.vectors.iter().enumerate() {
            let lam = seq.lambdas[k];
            let r = t.apply(h) - h * lam - &seq.probe * C64::new(seq.alphas[k], 0.0);
            worst = worst.max(r.norm() / seq.kappas[k].max(1.0));
        }
        out.push(Check::new(st, "near.residual", "||T h - lambda h - alpha e|| <= tol * kappa", worst, Relation::Le, tol.residual));

        let sys = &run.sys;
        let m = sys.len();
        let mut gram = Mat::zeros(m, m);
        match &seq.dd {
            Some(d) => {
                let get = |s: Option<usize>| -> &Vec<Dd> {
                    match s {
                        None => &d.probe,
                        Some(n) => &d.vectors[n],
                    }
                };
                for j in 0..m {
                    for k in 0..m {
                        gram[(j, k)] = C64::new(dd::dot(get(sys.selected[j]), get(sys.selected[k])).to_f64(), 0.0);
                    }
                }
            }
            None => {
                let get = |s: Option<usize>| match s {
                    None => &seq.probe,
                    Some(n) => &seq.vectors[n],
                };
                for j in 0..m {
                    for k in 0..m {
                        gram[(j, k)] = get(sys.selected[j]).dotc(get(sys.selected[k]));
                    }
                }
            }
        }
        let mut pairing: f64 = 0.0;
        for j in 0..m {
            for k in 0..m {
                if j != k {
                    pairing = pairing.max(gram[(j, k)].norm() / 4f64.powi(-((j + k + 2) as i32)));
                }
            }
        }
        out.push(Check::new(st, "gram.pairing", "|<l_j, l_k>| / 4^-(j+k) < 1", pairing, Relation::Lt, 1.0));
        out.push(Check::new(st, "gram.size", "selected system size >= 2", m as f64, Relation::Ge, 2.0));
        let eig = hermitian_eigenvalues(&gram)?;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(Check::new(st, "riesz.lower", "Gram spectrum >= 43/45", lo, Relation::Ge, RIESZ_LOWER - tol.riesz_slack));
        out.push(Check::new(st, "riesz.upper", "Gram spectrum <= 47/45", hi, Relation::Le, RIESZ_UPPER + tol.riesz_slack));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..1000 {
            let b = random_unit(m, &mut rng);
            let q = b.dotc(&(&gram * &b)).re;
            dmin = dmin.min(q);
            dmax = dmax.max(q);
        }
        out.push(Check::new(st, "riesz.draw_min", "random ||sum b_k l_k||^2 >= 43/45", dmin, Relation::Ge, RIESZ_LOWER - tol.riesz_slack));
        out.push(Check::new(st, "riesz.draw_max", "random ||sum b_k l_k||^2 <= 47/45", dmax, Relation::Le, RIESZ_UPPER + tol.riesz_slack));

        let idx: Vec<usize> = (0..m).collect();
        let core_block = run.g.block(&idx, &idx);
        let mut pattern: f64 = 0.0;
        for j in 1..m {
            for k in 1..m {
                if j != k {
                    pattern = pattern.max(core_block[(j, k)].norm());
                }
            }
        }
        let t_norm = t.norm_bound().max(f64::MIN_POSITIVE);
        out.push(Check::new(st, "core.pattern", "core entries off row 1, column 1 and diagonal <= tol * ||T||", pattern / t_norm, Relation::Le, tol.pattern));
    }

    let b = &dec.blocks;
    if dec.case.variant == CaseVariant::Case3Nilpotent {
        out.push(Check::new(st, "t11.zero", "T11 = 0", max_abs(&b.t11), Relation::Le, 0.0));
        out.push(Check::new(st, "r.zero", "R = 0", max_abs(&b.r), Relation::Le, 0.0));
    }
    let kind = dec.ideal.kind;
    let (t11_norm, _) = budget_checks(st, "t11", &b.t11, eps, kind, op_norm, tol, &mut out)?;
    let (r_norm, r_rank) = budget_checks(st, "r", &b.r, eps, kind, op_norm, tol, &mut out)?;
    out.push(Check::new(st, "r.rank", "rank(R) <= 1", r_rank as f64, Relation::Le, 1.0));
    out.push(Check::new(st, "t11.offdiag", "T11 diagonal", offdiag(&b.t11), Relation::Le, tol.offdiag));

    let n = dec.dim;
    let mut pos = vec![usize::MAX; n];
    for (a, &i) in b.mc_set.iter().enumerate() {
        pos[i] = a;
    }
    let mut action: f64 = 0.0;
    for (col, &k) in b.m_set.iter().enumerate() {
        let got = dec.frame.apply_inverse(&dec.op.apply(&dec.frame.apply(&unit(n, k))));
        let mut want = CVec::zeros(n);
        for (a, &i) in b.m_set.iter().enumerate() {
            want[i] = b.t11[(a, col)];
        }
        for &i in &b.mc_set {
            want[i] = b.r[(pos[i], col)];
        }
        action = action.max((got - want).norm() / op_norm);
    }
    out.push(Check::new(st, "block.action", "S^-1 T S on M matches [T11; R] within tol * ||T||", action, Relation::Le, tol.block_action));
    out.push(Check::new(st, "dims.m", "dim M >= 1", b.m_set.len() as f64, Relation::Ge, 1.0));
    out.push(Check::new(st, "dims.partition", "M and its complement partition the coordinates", (b.m_set.len() + b.mc_set.len()) as f64, Relation::Ge, n as f64));

    let c = &dec.certs;
    out.push(Check::new(st, "agree.r_rank", "checker and pipeline agree on rank(R)", (r_rank as f64 - c.r_rank as f64).abs(), Relation::Le, 0.0));
    out.push(Check::new(st, "agree.t11_norm", "checker and pipeline agree on ||T11||", relative_gap(t11_norm, c.t11_norm), Relation::Le, tol.agreement));
    out.push(Check::new(st, "agree.r_norm", "checker and pipeline agree on ||R||", relative_gap(r_norm, c.r_norm), Relation::Le, tol.agreement));
    Ok(out)
}

pub fn check_oblique(o: &ObliqueDecomposition, dec: &HalfSpaceDecomposition2x2, tol: &Tolerances, seed: u64) -> CoreResult<Vec<Check>> {
    let st = "oblique";
    let mut out = Vec::new();
    let n = dec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b11);
    let e = |x: &CVec| &o.m_hat * o.w.ad_mul(x);
    let mut idem: f64 = 0.0;
    for _ in 0..4 {
        let x = random_unit(n, &mut rng);
        let ex = e(&x);
        idem = idem.max((e(&ex) - ex).norm());
    }
    out.push(Check::new(st, "e.idempotent", "||E^2 x - E x|| <= tol for unit x", idem, Relation::Le, tol.idempotency));
    let op_norm = dec.op.norm_bound().max(f64::MIN_POSITIVE);
    let sv = singular_values(&o.r_hat)?;
    out.push(Check::new(st, "r_hat.rank", "rank(R^) <= 1", block_rank(&sv, tol.rank, op_norm) as f64, Relation::Le, 1.0));
    let want: Vec<C64> = (0..dec.blocks.t11.nrows()).map(|i| dec.blocks.t11[(i, i)]).collect();
    let got = eigenvalues(&o.t11_hat)?;
    out.push(Check::new(st, "spectrum", "sigma(T^11) = sigma(T11)", multiset_distance(&want, &got), Relation::Le, tol.spectrum));
    Ok(out)
}

pub fn check_refine(f: &BlockForm3x3, tol: &Tolerances, seed: u64) -> CoreResult<Vec<Check>> {
    let st = "refine3";
    let mut out = Vec::new();
    let op_norm = f.outer.op.norm_bound().max(f64::MIN_POSITIVE);
    let eps = f.outer.epsilon;
    let kind = f.outer.ideal.kind;
    for (name, m) in [("r21", &f.r21), ("r31", &f.r31), ("r32", &f.r32)] {
        let sv = singular_values(m)?;
        out.push(Check::new(st, &format!("{name}.rank"), &format!("rank({}) <= 1", name.to_uppercase()), block_rank(&sv, tol.rank, op_norm) as f64, Relation::Le, 1.0));
    }
    for (name, m) in [("t11", &f.t11), ("t33", &f.t33)] {
        budget_checks(st, name, m, eps, kind, op_norm, tol, &mut out)?;
        out.push(Check::new(st, &format!("{name}.offdiag"), &format!("{} diagonal", name.to_uppercase()), offdiag(m), Relation::Le, tol.offdiag));
    }
    let n = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3333);
    let mut tests: Vec<CVec> = f.n1.iter().chain(&f.k1).map(|&k| unit(n, k)).collect();
    tests.extend((0..4).map(|_| random_unit(n, &mut rng)));
    let reassembly = tests
        .iter()
        .map(|x| (f.apply_conjugated(x) - f.apply_blocks(x)).norm() / op_norm)
        .fold(0.0, f64::max);
    out.push(Check::new(st, "reassembly", "assembled blocks = conjugated operator within tol * ||T||", reassembly, Relation::Le, tol.reassembly));
    let mut seen = vec![0u8; n];
    for &i in f.n1.iter().chain(&f.k2).chain(&f.k1) {
        seen[i] += 1;
    }
    let bad = seen.iter().filter(|&&c| c != 1).count();
    out.push(Check::new(st, "partition", "N1, K2, K1 partition the coordinates", bad as f64, Relation::Le, 0.0));
    let smallest = f.n1.len().min(f.k2.len()).min(f.k1.len());
    out.push(Check::new(st, "sizes", "each index set has at least 4 elements", smallest as f64, Relation::Ge, MIN_BLOCK as f64));
    let roundtrip = max_abs(&(f.t33.adjoint() - &f.inner.blocks.t11)).max(max_abs(&(f.r32.adjoint() - &f.inner.blocks.r)));
    out.push(Check::new(st, "adjoint.roundtrip", "double adjoint of the inner blocks returns them", roundtrip, Relation::Le, tol.roundtrip));
    Ok(out)
}

/// Recomputes the commutator split for each seed from the dense assembled matrix.
pub fn check_derivation(
    f: &BlockForm3x3,
    seeds: std::ops::Range<u64>,
    pipeline: &[DerivationCertificate],
    tol: &Tolerances,
) -> CoreResult<Vec<Check>> {
    let st = "derivation";
    let h = f.to_dense();
    let n = h.nrows();
    let t_norm = f.outer.op.norm_bound().max(f64::MIN_POSITIVE);
    let trace = |m: &Mat| -> CoreResult<f64> { Ok(singular_values(m)?.iter().sum()) };
    let t11_trace = trace(&f.t11)?;
    let t33_trace = trace(&f.t33)?;
    let (mut split, mut frank, mut excess, mut gap) = (0.0f64, 0usize, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut count = 0usize;
    for seed in seeds {
        let x = random_test_operator(n, seed);
        let blk = |r: &[usize], c: &[usize]| select_cols(&select_rows(&x, r), c);
        let (n1, k2, k1) = (&f.n1, &f.k2, &f.k1);
        let c31 = select_cols(&select_rows(&(&h * &x - &x * &h), k1), n1);
        let fpart = &f.r31 * blk(n1, n1) + &f.r32 * blk(k2, n1) - blk(k1, k2) * &f.r21 - blk(k1, k1) * &f.r31;
        let apart = &f.t33 * blk(k1, n1) - blk(k1, n1) * &f.t11;
        let x_sv = singular_values(&x)?;
        let x_norm = x_sv[0];
        split = split.max(max_abs(&(&c31 - &fpart - &apart)) / (x_norm * t_norm));
        let f_sv = singular_values(&fpart)?;
        frank = frank.max(block_rank(&f_sv, tol.rank, x_norm * t_norm));
        let a_sv = singular_values(&apart)?;
        excess = excess.max(a_sv.iter().sum::<f64>() - x_norm * (t11_trace + t33_trace));
        let c_sv = singular_values(&c31)?;
        for k in 0..c_sv.len().saturating_sub(4) {
            gap = gap.max(c_sv[k + 4] - a_sv.get(k).copied().unwrap_or(0.0));
        }
        count += 1;
    }
    let excess = if count == 0 { f64::NAN } else { excess };
    let gap = if gap == f64::NEG_INFINITY { 0.0 } else { gap };
    out_push_derivation(st, split, frank, excess, gap, count, pipeline, tol)
}

#[allow(clippy::too_many_arguments)]
fn out_push_derivation(
    st: &str,
    split: f64,
    frank: usize,
    excess: f64,
    gap: f64,
    count: usize,
    pipeline: &[DerivationCertificate],
    tol: &Tolerances,
) -> CoreResult<Vec<Check>> {
    let passed = pipeline.iter().filter(|d| d.pass).count();
    Ok(vec![
        Check::new(st, "split", "C31 = F + A up to tol * ||X|| ||T||", split, Relation::Le, tol.split),
        Check::new(st, "f.rank", "rank(F) <= 4", frank as f64, Relation::Le, 4.0),
        Check::new(st, "a.trace", "||A||_1 - ||X|| (|||T11|||_1 + |||T33|||_1) <= tol", excess, Relation::Le, tol.bound),
        Check::new(st, "interlacing", "s_(k+4)(C31) - s_k(A) <= tol", gap, Relation::Le, tol.bound),
        Check::new(st, "draws", "test operators checked", count as f64, Relation::Ge, 1.0),
        Check::new(st, "agree.pass", "pipeline certificates that failed", (pipeline.len() - passed) as f64, Relation::Le, 0.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_parsing() {
        assert_eq!(parse_scale("2").unwrap(), 2.0);
        assert!(parse_scale("-1").is_err());
        assert!(parse_scale("abc").is_err());
        let t = Tolerances::from_overrides(&ToleranceOverrides { rank: Some(0.25), ..Default::default() }, 2.0);
        assert_eq!(t.rank, 0.5);
        assert_eq!(t.offdiag, 2e-10);
    }
}
