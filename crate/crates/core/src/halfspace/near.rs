use crate::opcore::dd::{self, Dd};
use crate::opcore::dense::CVec;
use crate::opcore::structured::StructuredOp;
use crate::opcore::truncation::DEFAULT_KAPPA_CAP;
use crate::spectra::{Approach, ApproachKind, Probe};
use crate::{Error, Result, Warning, C64};

/// Double-double copies of the probe and of the `h_n` on the probe support.
#[derive(Clone, Debug)]
pub struct DdVectors {
    pub support: Vec<usize>,
    pub probe: Vec<Dd>,
    pub vectors: Vec<Vec<Dd>>,
    pub alphas: Vec<Dd>,
}

#[derive(Clone, Debug)]
pub struct ApproachSequence {
    pub beta: C64,
    pub kind: ApproachKind,
    pub lambdas: Vec<C64>,
    pub probe: CVec,
    pub probe_label: String,
    pub alphas: Vec<f64>,
    pub vectors: Vec<CVec>,
    /// `||T h_n - lambda_n h_n - alpha_n e||`.
    pub residuals: Vec<f64>,
    pub kappas: Vec<f64>,
    pub dd: Option<DdVectors>,
    pub warnings: Vec<Warning>,
}

impl ApproachSequence {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `||(T - lambda_n)^-1 e||`.
    pub fn resolvent_norms(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| 1.0 / a).collect()
    }
}

/// Unit vectors `h_n = alpha_n (T - lambda_n)^-1 e` for an already shifted `T`.
pub fn near_eigenvectors(op: &StructuredOp, approach: &Approach, probe: &Probe) -> Result<ApproachSequence> {
    let n = op.dim();
    if probe.vector.len() != n {
        return Err(Error::Precondition(format!("probe length {} != {n}", probe.vector.len())));
    }
    if (probe.vector.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("probe norm {} is not 1", probe.vector.norm())));
    }
    let e = &probe.vector;
    let scale = op.norm_bound().max(1.0);
    let count = approach.len();
    let mut alphas = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    let mut kappas = Vec::with_capacity(count);
    let mut warnings = Vec::new();
    let mut dd_out = None;

    match (&approach.lambdas_dd, &probe.dd) {
        (Some(ldd), Some(pdd)) => {
            let mut dvecs = Vec::with_capacity(count);
            let mut dalphas = Vec::with_capacity(count);
            for (k, l) in ldd.iter().enumerate() {
                let raw: Vec<Dd> = pdd.values.iter().zip(&pdd.poles).map(|(v, p)| *v / (Dd::from(*p) - *l)).collect();
                let alpha = dd::norm(&raw).recip();
                let h: Vec<Dd> = raw.iter().map(|x| *x * alpha).collect();
                let mut hv = CVec::zeros(n);
                for (&j, x) in pdd.support.iter().zip(&h) {
                    hv[j] = C64::new(x.to_f64(), 0.0);
                }
                let lambda = approach.lambdas[k];
                let f = op.factor_shifted(lambda)?;
                let kappa = f.condition_estimate();
                if kappa > DEFAULT_KAPPA_CAP {
                    warnings.push(Warning::IllConditioned { lambda, kappa });
                }
                let a = alpha.to_f64();
                let res = (op.apply(&hv) - &hv * lambda - e * C64::new(a, 0.0)).norm();
                alphas.push(a);
                vectors.push(hv);
                residuals.push(res);
                kappas.push(kappa);
                dvecs.push(h);
                dalphas.push(alpha);
            }
            dd_out = Some(DdVectors {
                support: pdd.support.clone(),
                probe: pdd.values.clone(),
                vectors: dvecs,
                alphas: dalphas,
            });
        }
        _ => {
            for &lambda in &approach.lambdas {
                let sol = crate::opcore::truncation::resolvent_solve_op(op, lambda, e, DEFAULT_KAPPA_CAP)?;
                if let Some(w) = sol.warning {
                    warnings.push(w);
                }
                let xn = sol.x.norm();
                let a = 1.0 / xn;
                let h = &sol.x * C64::new(a, 0.0);
                let res = (op.apply(&h) - &h * lambda - e * C64::new(a, 0.0)).norm();
                alphas.push(a);
                vectors.push(h);
                residuals.push(res);
                kappas.push(sol.kappa);
            }
        }
    }
    for (k, (r, kappa)) in residuals.iter().zip(&kappas).enumerate() {
        if *r > 1e-6 * scale || *r > 1e-9 * kappa.max(1.0) {
            return Err(Error::Construction(format!("near-eigenvector {k} has identity defect {r:e}")));
        }
    }
    Ok(ApproachSequence {
        beta: approach.beta,
        kind: approach.kind,
        lambdas: approach.lambdas.clone(),
        probe: e.clone(),
        probe_label: probe.label.clone(),
        alphas,
        vectors,
        residuals,
        kappas,
        dd: dd_out,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideals::certify_membership;
    use crate::opcore::banded::Banded;
    use crate::IdealSpec;

    fn given(lambdas: Vec<C64>) -> Approach {
        let mags: Vec<f64> = lambdas.iter().map(|l| l.norm()).collect();
        Approach {
            kind: ApproachKind::Ray,
            beta: C64::new(0.0, 0.0),
            margins: mags.clone(),
            membership: certify_membership(&mags, &IdealSpec::compact(), 10.0),
            lambdas,
            lambdas_dd: None,
        }
    }

    fn unit(n: usize, k: usize) -> Probe {
        let mut v = CVec::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        Probe { label: format!("e{}", k + 1), vector: v, dd: None }
    }

    #[test]
    fn one_term_diagonal() {
        let d: Vec<C64> = (1..=8).map(|k| C64::new(1.0 / k as f64, 0.0)).collect();
        let op = StructuredOp::banded(Banded::from_diagonal(&d));
        let s = near_eigenvectors(&op, &given(vec![C64::new(-0.5, 0.0)]), &unit(8, 0)).unwrap();
        assert!((s.alphas[0] - 1.5).abs() < 1e-15);
        assert!((s.vectors[0][0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn shift_geometric_form() {
        let n = 128;
        let mut b = Banded::zeros(n, 1, 0);
        for i in 0..n - 1 {
            b.set(i + 1, i, C64::new(1.0, 0.0));
        }
        let op = StructuredOp::banded(b);
        let l = C64::new(1.1, 0.0);
        let s = near_eigenvectors(&op, &given(vec![l]), &unit(n, 0)).unwrap();
        let h = &s.vectors[0];
        for k in 1..n {
            assert!((h[k] / h[k - 1] - 1.0 / l).norm() < 1e-12);
        }
        assert!(s.residuals[0] <= 1e-10);
        assert!((h.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_unit_probe_rejected() {
        let op = StructuredOp::banded(Banded::from_diagonal(&[C64::new(1.0, 0.0); 4]));
        let mut p = unit(4, 0);
        p.vector *= C64::new(2.0, 0.0);
        assert!(matches!(
            near_eigenvectors(&op, &given(vec![C64::new(-1.0, 0.0)]), &p),
            Err(Error::Precondition(_))
        ));
    }
}
