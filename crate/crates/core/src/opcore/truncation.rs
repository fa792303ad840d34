//! Principal-corner truncations and resolvent solves.

use crate::opcore::banded::Banded;
use crate::opcore::dense::{CVec, Mat};
use crate::opcore::spec::{Family, OperatorSpec};
use crate::opcore::structured::StructuredOp;
use crate::{Error, Result, Warning, C64};

pub const CONVENTION: &str = "principal_corner";

/// Finite section `P_N T P_N` of a specified operator.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperator {
    pub dim: usize,
    pub op: StructuredOp,
    pub spec: OperatorSpec,
    pub convention: &'static str,
}

impl TruncatedOperator {
    /// Wraps an operator that did not come from a spec (inner applications, tests).
    pub fn from_op(op: StructuredOp, spec: OperatorSpec) -> Self {
        TruncatedOperator { dim: op.dim(), op, spec, convention: CONVENTION }
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.op.entry(i, j)
    }

    pub fn to_dense(&self) -> Mat {
        self.op.to_dense()
    }

    pub fn norm_bound(&self) -> f64 {
        self.op.norm_bound()
    }
}

fn band_of(family: &Family, n: usize, bound: Option<f64>) -> Result<Banded> {
    let check = |v: C64, k: usize| -> Result<C64> {
        if let Some(b) = bound {
            if v.norm() > b * (1.0 + 1e-12) {
                return Err(Error::Spec(format!("|value| = {} at n = {k} exceeds declared bound {b}", v.norm())));
            }
        }
        Ok(v)
    };
    let one = C64::new(1.0, 0.0);
    Ok(match family {
        Family::Diagonal { entries } => {
            let d = (1..=n).map(|k| entries.eval(k).and_then(|v| check(v, k))).collect::<Result<Vec<_>>>()?;
            Banded::from_diagonal(&d)
        }
        Family::UnilateralShift => {
            let mut b = Banded::zeros(n, 1, 0);
            for i in 0..n - 1 {
                b.set(i + 1, i, one);
            }
            b
        }
        Family::AdjointShift => {
            let mut b = Banded::zeros(n, 0, 1);
            for i in 0..n - 1 {
                b.set(i, i + 1, one);
            }
            b
        }
        Family::WeightedShift { weights } => {
            let mut b = Banded::zeros(n, 1, 0);
            for i in 0..n - 1 {
                b.set(i + 1, i, check(weights.eval(i + 1)?, i + 1)?);
            }
            b
        }
        Family::Band { coefficients } => {
            let kl = coefficients.iter().map(|c| (-c.offset).max(0) as usize).max().unwrap_or(0);
            let ku = coefficients.iter().map(|c| c.offset.max(0) as usize).max().unwrap_or(0);
            let mut b = Banded::zeros(n, kl, ku);
            for c in coefficients {
                for i in 0..n {
                    let j = i as i64 + c.offset;
                    if (0..n as i64).contains(&j) {
                        b.add_to(i, j as usize, c.value.0);
                    }
                }
            }
            b
        }
        Family::NilpotentPair { weight } => {
            let mut b = Banded::zeros(n, 1, 0);
            for i in (0..n - 1).step_by(2) {
                b.set(i + 1, i, weight.0);
            }
            b
        }
        Family::Perturbed { base } => band_of(base, n, bound)?,
    })
}

/// Principal `dim x dim` corner of the spec's infinite matrix.
pub fn build_truncation(spec: &OperatorSpec, dim: usize) -> Result<TruncatedOperator> {
    if dim < 2 {
        return Err(Error::Config(format!("truncation dimension {dim} < 2")));
    }
    let base = band_of(&spec.family, dim, spec.bound)?;
    let r = spec.perturbation.len();
    let mut u = Mat::zeros(dim, r);
    let mut v = Mat::zeros(dim, r);
    for (k, p) in spec.perturbation.iter().enumerate() {
        for &(idx, c) in &p.u {
            if idx == 0 {
                return Err(Error::Spec("perturbation indices are 1-based".into()));
            }
            if idx <= dim {
                u[(idx - 1, k)] += p.coefficient.0 * c.0;
            }
        }
        for &(idx, c) in &p.v {
            if idx == 0 {
                return Err(Error::Spec("perturbation indices are 1-based".into()));
            }
            if idx <= dim {
                v[(idx - 1, k)] += c.0;
            }
        }
    }
    let op = StructuredOp::new(base, u, v)?;
    Ok(TruncatedOperator { dim, op, spec: spec.clone(), convention: CONVENTION })
}

/// Solution of `(T - lambda) x = e` with its diagnostics.
#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub x: CVec,
    pub kappa: f64,
    pub residual: f64,
    pub warning: Option<Warning>,
}

pub const DEFAULT_KAPPA_CAP: f64 = 1e12;

pub fn resolvent_solve(t: &TruncatedOperator, lambda: C64, e: &CVec, kappa_cap: f64) -> Result<ResolventSolution> {
    resolvent_solve_op(&t.op, lambda, e, kappa_cap)
}

pub fn resolvent_solve_op(op: &StructuredOp, lambda: C64, e: &CVec, kappa_cap: f64) -> Result<ResolventSolution> {
    if e.len() != op.dim() {
        return Err(Error::Precondition(format!("probe length {} != {}", e.len(), op.dim())));
    }
    if (e.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("probe norm {} is not 1", e.norm())));
    }
    let f = op.factor_shifted(lambda)?;
    let x = f.solve(e);
    let residual = (f.operator().apply(&x) - e).norm();
    let kappa = f.condition_estimate();
    let warning = (kappa > kappa_cap).then_some(Warning::IllConditioned { lambda, kappa });
    Ok(ResolventSolution { x, kappa, residual, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::spec::{CNum, RankOne};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn diagonal_corner() {
        let t = build_truncation(&OperatorSpec::harmonic(), 3).unwrap();
        let d = t.to_dense();
        assert_eq!(d[(0, 0)], c(1.0));
        assert_eq!(d[(1, 1)], c(0.5));
        assert_eq!(d[(2, 2)], c(1.0 / 3.0));
        assert_eq!(d[(0, 1)], c(0.0));
    }

    #[test]
    fn shift_corner() {
        let d = build_truncation(&OperatorSpec::shift(), 3).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j + 1 { 1.0 } else { 0.0 };
                assert_eq!(d[(i, j)], c(want));
            }
        }
    }

    #[test]
    fn perturbed_corner() {
        let spec = OperatorSpec::harmonic().with_perturbation(RankOne {
            u: vec![(1, CNum::real(1.0))],
            v: vec![(2, CNum::real(1.0))],
            coefficient: CNum::real(0.5),
        });
        let d = build_truncation(&spec, 2).unwrap().to_dense();
        assert_eq!(d, Mat::from_row_slice(2, 2, &[c(1.0), c(0.5), c(0.0), c(0.5)]));
    }

    #[test]
    fn dimension_below_two_is_config_error() {
        assert!(matches!(build_truncation(&OperatorSpec::harmonic(), 1), Err(Error::Config(_))));
    }

    #[test]
    fn diagonal_resolvent() {
        let t = build_truncation(&OperatorSpec::harmonic(), 3).unwrap();
        let mut e = CVec::zeros(3);
        e[0] = c(1.0);
        let s = resolvent_solve(&t, c(-0.1), &e, DEFAULT_KAPPA_CAP).unwrap();
        assert!((s.x[0] - c(1.0 / 1.1)).norm() < 1e-15);
        assert!(s.x[1].norm() == 0.0 && s.x[2].norm() == 0.0);
    }

    #[test]
    fn eigenvalue_shift_is_singular() {
        let spec = OperatorSpec::new(Family::Diagonal {
            entries: crate::opcore::spec::SeqRule::Geometric { scale: CNum::real(2.0), ratio: CNum::real(0.5) },
        });
        let t = build_truncation(&spec, 2).unwrap();
        let mut e = CVec::zeros(2);
        e[0] = c(1.0);
        assert_eq!(resolvent_solve(&t, c(1.0), &e, DEFAULT_KAPPA_CAP).unwrap_err(), Error::SingularResolvent(c(1.0)));
    }

    #[test]
    fn shift_resolvent_geometric_series() {
        let n = 256;
        let t = build_truncation(&OperatorSpec::shift(), n).unwrap();
        let mut e = CVec::zeros(n);
        e[0] = c(1.0);
        let lam = 1.05f64;
        let s = resolvent_solve(&t, c(lam), &e, DEFAULT_KAPPA_CAP).unwrap();
        // (S - lam) x = e1 gives x_k = -lam^{-k}, k = 1..n.
        let want: f64 = (1..=n).map(|k| lam.powi(-2 * k as i32)).sum::<f64>().sqrt();
        assert!((s.x.norm() - want).abs() < 1e-8);
        for k in 0..n {
            assert!((s.x[k] - c(-lam.powi(-(k as i32 + 1)))).norm() < 1e-12);
        }
    }
}
