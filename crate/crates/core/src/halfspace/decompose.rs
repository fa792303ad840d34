use crate::halfspace::core::{assemble_core, choose_halfspace, CoreMatrix, Halfspace};
use crate::halfspace::frame::{build_similarity, conjugate_operator, orthonormalize, upper_inverse, Frame, Orthonormal, SimilarityMap};
use crate::halfspace::near::{near_eigenvectors, ApproachSequence};
use crate::halfspace::system::{riesz_certificate, select_up_to, AlmostOrthogonalSystem, RieszCertificate};
use crate::ideals::{matrix_ideal_norm, IdealKind, IdealSpec};
use crate::opcore::banded::Banded;
use crate::opcore::dense::{operator_norm, singular_values, CVec, Mat};
use crate::opcore::spec::{Family, OperatorSpec};
use crate::opcore::structured::StructuredOp;
use crate::opcore::truncation::build_truncation;
use crate::opcore::RANK_TOL;
use crate::spectra::probe::{growth_from_norms, ProbeScore};
use crate::spectra::{
    generate_approach, probe_candidates, secular_approach, secular_probe, select_beta, select_probe, spectral_oracle,
    Approach, CaseTag, CaseVariant, GrowthCertificate,
};
use crate::{Error, Result, Warning, C64};

/// Target size of the almost-orthogonal system: `2 floor(log2 N)`.
pub fn default_target(n: usize) -> usize {
    2 * (usize::BITS - 1 - n.max(2).leading_zeros()) as usize
}

/// Length of the analytic approach sequences: `ceil(log2 N) + 20`.
pub fn analytic_count(n: usize) -> usize {
    n.max(2).next_power_of_two().trailing_zeros() as usize + 20
}

#[derive(Clone, Debug)]
pub struct EngineSettings {
    pub ideal: IdealSpec,
    pub epsilon: f64,
    /// Overrides [`default_target`].
    pub target: Option<usize>,
    pub approach_budget: f64,
    /// Overrides the approach length (4x target for secular sequences).
    pub approach_count: Option<usize>,
    pub seed: u64,
}

impl EngineSettings {
    pub fn new(ideal: IdealSpec, epsilon: f64) -> Self {
        EngineSettings { ideal, epsilon, target: None, approach_budget: 1.0, approach_count: None, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

pub enum ApproachPlan {
    /// Secular roots for the probe supported on reducing coordinates.
    Secular,
    /// A given sequence; the probe is searched among the fixed candidates.
    Given(Approach),
}

/// Every artifact of one run of the Case 1 construction.
#[derive(Clone, Debug)]
pub struct Case1Run {
    pub approach: Approach,
    pub probe_scores: Vec<ProbeScore>,
    pub growth: GrowthCertificate,
    pub seq: ApproachSequence,
    pub sys: AlmostOrthogonalSystem,
    pub target: usize,
    pub riesz: RieszCertificate,
    pub ortho: Orthonormal,
    pub similarity: SimilarityMap,
    pub frame: Frame,
    /// `S^-1 T S` in f-coordinates.
    pub g: StructuredOp,
    pub core: CoreMatrix,
    pub half: Halfspace,
    pub warnings: Vec<Warning>,
}

/// Case 1 construction for an already shifted operator `op = T' - beta`.
pub fn run_case1(op: &StructuredOp, beta: C64, plan: ApproachPlan, s: &EngineSettings) -> Result<Case1Run> {
    s.validate()?;
    let n = op.dim();
    let target = s.target.unwrap_or_else(|| default_target(n));
    let mut warnings = Vec::new();
    let (approach, probe, probe_scores) = match plan {
        ApproachPlan::Secular => {
            let probe = secular_probe(op)?;
            let pdd = probe.dd.as_ref().expect("secular probe carries dd data");
            let count = s.approach_count.unwrap_or(4 * target);
            let a = secular_approach(
                beta,
                &pdd.poles,
                &pdd.values,
                &pdd.isolated_values,
                count,
                &s.ideal,
                s.approach_budget,
            )?;
            (a, probe, Vec::new())
        }
        ApproachPlan::Given(a) => {
            let candidates = probe_candidates(n, s.seed);
            let choice = select_probe(op, &a.lambdas, candidates, |p| {
                near_eigenvectors(op, &a, p).map(|seq| select_up_to(&seq, target).len())
            })?;
            (a, choice.probe, choice.scores)
        }
    };
    let seq = near_eigenvectors(op, &approach, &probe)?;
    warnings.extend(seq.warnings.iter().cloned());
    let growth = growth_from_norms(seq.resolvent_norms());
    warnings.extend(growth.warning.clone());

    let sys = select_up_to(&seq, target);
    if sys.len() < 2 {
        return Err(Error::SelectionExhausted { found: sys.len(), target });
    }
    if sys.len() < target {
        warnings.push(Warning::SelectionShort { found: sys.len(), target });
    }
    let riesz = riesz_certificate(&sys, s.seed)?;
    if !riesz.pass {
        return Err(Error::Construction(format!(
            "Riesz window violated: Gram spectrum [{:e}, {:e}]",
            riesz.lower, riesz.upper
        )));
    }
    let ortho = orthonormalize(&sys)?;
    let similarity = build_similarity(&sys, &ortho)?;
    let r_inv = upper_inverse(&ortho.r)?;
    let g = conjugate_operator(op, &ortho.q, &ortho.r, &r_inv)?;
    let frame = Frame::Householder { q: ortho.q.clone(), r: ortho.r.clone(), r_inv };
    let core = assemble_core(&g, op, &sys, &similarity)?;
    let half = choose_halfspace(&core, &s.ideal, s.epsilon)?;
    Ok(Case1Run {
        approach,
        probe_scores,
        growth,
        seq,
        sys,
        target,
        riesz,
        ortho,
        similarity,
        frame,
        g,
        core,
        half,
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct Blocks2x2 {
    /// Working coordinates spanning M, and the rest.
    pub m_set: Vec<usize>,
    pub mc_set: Vec<usize>,
    pub t11: Mat,
    pub t12: Mat,
    pub r: Mat,
    pub t22: StructuredOp,
}

impl Blocks2x2 {
    pub fn from_operator(g: &StructuredOp, m_set: Vec<usize>) -> Blocks2x2 {
        let mc_set = complement(g.dim(), &m_set);
        Blocks2x2 {
            t11: g.block(&m_set, &m_set),
            t12: g.block(&m_set, &mc_set),
            r: g.block(&mc_set, &m_set),
            t22: g.principal(&mc_set),
            m_set,
            mc_set,
        }
    }
}

pub fn complement(n: usize, set: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in set {
        mark[i] = true;
    }
    (0..n).filter(|&i| !mark[i]).collect()
}

#[derive(Clone, Debug)]
pub struct Certificates2x2 {
    pub t11_norm: f64,
    pub t11_ideal: f64,
    pub t11_trace: f64,
    pub t11_offdiag: f64,
    pub r_norm: f64,
    pub r_ideal: f64,
    pub r_trace: f64,
    pub r_rank: usize,
    pub r_singular: Vec<f64>,
    /// Relative part of `R` outside the row of `f_1`.
    pub r_off_direction: f64,
    /// Largest `||S^-1 T S f - block action f|| / ||T||` over the basis of M.
    pub block_action: f64,
    pub dim_m: usize,
    pub dim_mc: usize,
    pub t12_square: bool,
    pub op_norm: f64,
}

fn max_offdiag(m: &Mat) -> f64 {
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

fn certify(
    blocks: &Blocks2x2,
    op: &StructuredOp,
    frame: &Frame,
    ideal: &IdealSpec,
    epsilon: f64,
    probe_row: Option<usize>,
) -> Result<Certificates2x2> {
    let op_norm = op.norm_bound().max(f64::MIN_POSITIVE);
    let trace = IdealSpec::trace();
    let r_singular = singular_values(&blocks.r)?;
    let r_rank = crate::opcore::dense::block_rank(&r_singular, RANK_TOL, op_norm);
    let r_norm = r_singular.first().copied().unwrap_or(0.0);
    let t11_norm = operator_norm(&blocks.t11)?;
    let t11_ideal = matrix_ideal_norm(&blocks.t11, ideal)?;
    let t11_trace = matrix_ideal_norm(&blocks.t11, &trace)?;
    let r_ideal = crate::ideals::sequence_norm(&r_singular, ideal);
    let r_trace = r_singular.iter().sum();
    let t11_offdiag = max_offdiag(&blocks.t11);

    let r_off_direction = match probe_row {
        Some(p) if r_norm > 0.0 => {
            let row = blocks.mc_set.iter().position(|&i| i == p);
            let mut rest = blocks.r.clone();
            if let Some(row) = row {
                rest.row_mut(row).fill(C64::new(0.0, 0.0));
            }
            rest.norm() / r_norm
        }
        _ => 0.0,
    };

    let n = op.dim();
    let mut pos = vec![usize::MAX; n];
    for (a, &i) in blocks.mc_set.iter().enumerate() {
        pos[i] = a;
    }
    let mut block_action: f64 = 0.0;
    for (b, &k) in blocks.m_set.iter().enumerate() {
        let mut ek = CVec::zeros(n);
        ek[k] = C64::new(1.0, 0.0);
        let u = frame.apply_inverse(&op.apply(&frame.apply(&ek)));
        let mut want = CVec::zeros(n);
        for (a, &i) in blocks.m_set.iter().enumerate() {
            want[i] = blocks.t11[(a, b)];
        }
        for &i in &blocks.mc_set {
            want[i] = blocks.r[(pos[i], b)];
        }
        block_action = block_action.max((u - want).norm() / op_norm);
    }

    let certs = Certificates2x2 {
        t11_norm,
        t11_ideal,
        t11_trace,
        t11_offdiag,
        r_norm,
        r_ideal,
        r_trace,
        r_rank,
        r_singular: r_singular.into_iter().take(4).collect(),
        r_off_direction,
        block_action,
        dim_m: blocks.m_set.len(),
        dim_mc: blocks.mc_set.len(),
        t12_square: blocks.m_set.len() == blocks.mc_set.len(),
        op_norm,
    };
    let fail = |what: &str| Err(Error::Construction(format!("certificate failed: {what}")));
    if certs.r_rank > 1 {
        return fail(&format!("rank(R) = {} > 1", certs.r_rank));
    }
    if certs.t11_offdiag > 1e-10 {
        return fail(&format!("T11 off-diagonal {:e}", certs.t11_offdiag));
    }
    if !(certs.t11_norm < epsilon && certs.r_norm < epsilon) {
        return fail(&format!("norms ||T11|| = {:e}, ||R|| = {:e} vs epsilon {epsilon}", certs.t11_norm, certs.r_norm));
    }
    if !(certs.t11_ideal < epsilon && certs.r_ideal < epsilon) {
        return fail(&format!("ideal norms {:e}, {:e} vs epsilon {epsilon}", certs.t11_ideal, certs.r_ideal));
    }
    if matches!(ideal.kind, IdealKind::Trace) && !(certs.t11_trace < epsilon && certs.r_trace < epsilon) {
        return fail("trace norms");
    }
    if certs.block_action > 1e-8 {
        return fail(&format!("block action defect {:e}", certs.block_action));
    }
    Ok(certs)
}

#[derive(Clone, Debug)]
pub struct HalfSpaceDecomposition2x2 {
    pub case: CaseTag,
    pub dim: usize,
    pub ideal: IdealSpec,
    pub epsilon: f64,
    /// Cutoff of the half-space; 1 for the nilpotent branch.
    pub k: usize,
    pub blocks: Blocks2x2,
    pub certs: Certificates2x2,
    pub similarity: SimilarityMap,
    pub frame: Frame,
    /// The shifted truncation `T' - beta` in original coordinates.
    pub op: StructuredOp,
    /// `S^-1 (T' - beta) S` in working coordinates.
    pub g: StructuredOp,
    pub run: Option<Box<Case1Run>>,
    pub warnings: Vec<Warning>,
}

impl HalfSpaceDecomposition2x2 {
    pub fn m_indices(&self) -> &[usize] {
        &self.blocks.m_set
    }
}

/// Outcome of the 2x2 pipeline on a spec.
#[derive(Clone, Debug)]
pub enum Outcome {
    Decomposed(Box<HalfSpaceDecomposition2x2>),
    /// The quasinilpotent, non-nilpotent branch is not constructed.
    Deferred(CaseTag),
}

fn secular_applicable(spec: &OperatorSpec, op: &StructuredOp) -> bool {
    matches!(spec.family, Family::Diagonal { .. })
        && spec.perturbation.is_empty()
        && op.base().diagonal().iter().all(|z| z.im == 0.0)
}

pub fn decompose(spec: &OperatorSpec, dim: usize, s: &EngineSettings) -> Result<Outcome> {
    s.validate()?;
    let tag = select_beta(spec)?;
    let dec = match tag.variant {
        CaseVariant::Case1 => decompose_case1(spec, &tag, dim, s)?,
        CaseVariant::Case2 => decompose_case2(spec, &tag, dim, s)?,
        CaseVariant::Case3Nilpotent => decompose_case3(spec, &tag, dim, s)?,
        CaseVariant::Case3Deferred => return Ok(Outcome::Deferred(tag)),
    };
    Ok(Outcome::Decomposed(Box::new(dec)))
}

pub fn decompose_case1(spec: &OperatorSpec, tag: &CaseTag, dim: usize, s: &EngineSettings) -> Result<HalfSpaceDecomposition2x2> {
    if tag.variant != CaseVariant::Case1 {
        return Err(Error::Precondition(format!("expected case 1, got {}", tag.variant.name())));
    }
    let t = build_truncation(spec, dim)?;
    let op = t.op.shifted(tag.beta);
    let plan = if secular_applicable(spec, &op) {
        ApproachPlan::Secular
    } else {
        let count = s.approach_count.unwrap_or_else(|| analytic_count(dim));
        ApproachPlan::Given(generate_approach(spec, tag, &s.ideal, count, s.approach_budget)?)
    };
    let run = run_case1(&op, tag.beta, plan, s)?;
    decompose_2x2(*tag, op, run, s)
}

/// Blocks and certificates of a finished Case 1 run.
pub fn decompose_2x2(tag: CaseTag, op: StructuredOp, run: Case1Run, s: &EngineSettings) -> Result<HalfSpaceDecomposition2x2> {
    let blocks = Blocks2x2::from_operator(&run.g, run.half.positions.clone());
    let certs = certify(&blocks, &op, &run.frame, &s.ideal, s.epsilon, Some(0))?;
    let mut warnings = run.warnings.clone();
    dedup_warnings(&mut warnings);
    Ok(HalfSpaceDecomposition2x2 {
        case: tag,
        dim: op.dim(),
        ideal: s.ideal,
        epsilon: s.epsilon,
        k: run.half.k,
        blocks,
        certs,
        similarity: run.similarity.clone(),
        frame: run.frame.clone(),
        g: run.g.clone(),
        op,
        run: Some(Box::new(run)),
        warnings,
    })
}

fn dedup_warnings(w: &mut Vec<Warning>) {
    let mut out: Vec<Warning> = Vec::new();
    for x in w.drain(..) {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    *w = out;
}

/// Entrywise conjugate of `g`, padded with zero rows and columns to `n`.
fn pad_conjugate(g: &StructuredOp, n: usize) -> Result<StructuredOp> {
    let b = g.base();
    let k = g.dim();
    let mut base = Banded::zeros(n, b.lower(), b.upper());
    for i in 0..k {
        for j in i.saturating_sub(b.lower())..(i + b.upper() + 1).min(k) {
            base.set(i, j, b.get(i, j).conj());
        }
    }
    let (u, v) = g.factors();
    let pad = |m: &Mat| {
        let mut out = Mat::zeros(n, m.ncols());
        out.rows_mut(0, k).copy_from(&m.map(|z| z.conj()));
        out
    };
    StructuredOp::new(base, pad(u), pad(v))
}

pub fn decompose_case2(spec: &OperatorSpec, tag: &CaseTag, dim: usize, s: &EngineSettings) -> Result<HalfSpaceDecomposition2x2> {
    if tag.variant != CaseVariant::Case2 {
        return Err(Error::Precondition(format!("expected case 2, got {}", tag.variant.name())));
    }
    let info = spectral_oracle(spec)?;
    let gen = info
        .eigenpairs
        .ok_or_else(|| Error::OracleIncomplete("no eigenpair generator for case 2".into()))?;
    if !gen.accumulates_at(tag.beta) {
        return Err(Error::OracleIncomplete(format!("eigenvalues do not accumulate at {}", tag.beta)));
    }
    let t = build_truncation(spec, dim)?;
    let op = t.op.shifted(tag.beta);
    let mut eig = Vec::new();
    let mut kernel = Vec::new();
    for n in 1..=dim {
        let (lambda, idx) = gen.pair(n)?;
        if idx > dim {
            continue;
        }
        if (lambda - tag.beta).norm() > 0.0 {
            eig.push(idx - 1);
        } else {
            kernel.push(idx - 1);
        }
    }
    let isolated = op.isolated_coordinates();
    if eig.iter().any(|j| isolated.binary_search(j).is_err()) || eig.len() < 4 {
        return Err(Error::Precondition("eigenvector span does not reduce the truncation".into()));
    }
    let restricted = op.principal(&eig);
    // For a diagonal restriction the adjoint is the entrywise conjugate, so
    // the conclusions map back by conjugation without moving R.
    let adjoint = restricted.adjoint();
    let run = run_case1(&adjoint, C64::new(0.0, 0.0), ApproachPlan::Secular, s)?;

    let inner_dim = eig.len();
    let mut order = eig.clone();
    order.extend(&kernel);
    let g = pad_conjugate(&run.g, dim)?;
    let frame = Frame::Embedded { inner: Box::new(run.frame.clone()), order: order.clone(), inner_dim, conjugate: true };
    let similarity = run.similarity.embedded_conjugate(&order, dim);
    let blocks = Blocks2x2::from_operator(&g, run.half.positions.clone());
    let certs = certify(&blocks, &op, &frame, &s.ideal, s.epsilon, Some(0))?;
    let mut warnings = run.warnings.clone();
    dedup_warnings(&mut warnings);
    Ok(HalfSpaceDecomposition2x2 {
        case: *tag,
        dim,
        ideal: s.ideal,
        epsilon: s.epsilon,
        k: run.half.k,
        blocks,
        certs,
        similarity,
        frame,
        op,
        g,
        run: Some(Box::new(run)),
        warnings,
    })
}

/// Nilpotent branch: M is every other kernel basis vector, `T11 = R = 0`.
pub fn decompose_case3(spec: &OperatorSpec, tag: &CaseTag, dim: usize, s: &EngineSettings) -> Result<HalfSpaceDecomposition2x2> {
    if tag.variant != CaseVariant::Case3Nilpotent {
        return Err(Error::Precondition(format!("expected nilpotent case 3, got {}", tag.variant.name())));
    }
    let t = build_truncation(spec, dim)?;
    decompose_nilpotent(*tag, t.op.shifted(tag.beta), s)
}

/// Nilpotent split of an already shifted operator along its zero columns.
pub fn decompose_nilpotent(tag: CaseTag, op: StructuredOp, s: &EngineSettings) -> Result<HalfSpaceDecomposition2x2> {
    let dim = op.dim();
    let kernel: Vec<usize> = (0..dim).filter(|&j| op.column(j).norm() == 0.0).collect();
    let m_set: Vec<usize> = kernel.iter().step_by(2).copied().collect();
    if m_set.len() < 2 {
        return Err(Error::Construction("kernel too small to split".into()));
    }
    let frame = Frame::Identity { n: dim };
    let blocks = Blocks2x2::from_operator(&op, m_set);
    let certs = certify(&blocks, &op, &frame, &s.ideal, s.epsilon, None)?;
    Ok(HalfSpaceDecomposition2x2 {
        case: tag,
        dim,
        ideal: s.ideal,
        epsilon: s.epsilon,
        k: 1,
        blocks,
        certs,
        similarity: SimilarityMap::identity(dim),
        frame,
        g: op.clone(),
        op,
        run: None,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets() {
        assert_eq!(default_target(256), 16);
        assert_eq!(default_target(4096), 24);
        assert_eq!(default_target(1000), 18);
        assert_eq!(analytic_count(4096), 32);
        assert_eq!(analytic_count(1000), 30);
    }

    #[test]
    fn nilpotent_blocks_vanish() {
        let spec = OperatorSpec::nilpotent_pair(1.0);
        let s = EngineSettings::new(IdealSpec::trace(), 0.01);
        let Outcome::Decomposed(d) = decompose(&spec, 64, &s).unwrap() else { panic!() };
        assert_eq!(d.blocks.t11, Mat::zeros(16, 16));
        assert_eq!(d.blocks.r.norm(), 0.0);
        assert_eq!(d.blocks.m_set[..3], [1, 5, 9]);
        assert!(d.blocks.t12.norm() > 0.0);
    }

    #[test]
    fn deferred_case() {
        let spec = OperatorSpec::new(Family::Diagonal {
            entries: crate::opcore::spec::SeqRule::Constant { value: crate::opcore::spec::CNum::real(2.0) },
        });
        let s = EngineSettings::new(IdealSpec::trace(), 0.01);
        assert!(matches!(decompose(&spec, 32, &s).unwrap(), Outcome::Deferred(_)));
    }

    #[test]
    fn case2_rejects_case1_spec() {
        let spec = OperatorSpec::harmonic();
        let tag = select_beta(&spec).unwrap();
        let s = EngineSettings::new(IdealSpec::trace(), 0.01);
        assert!(matches!(decompose_case2(&spec, &tag, 64, &s), Err(Error::Precondition(_))));
    }
}
