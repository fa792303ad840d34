use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::opcore::dd::{self, Dd};
use crate::opcore::dense::CVec;
use crate::opcore::structured::StructuredOp;
use crate::opcore::truncation::{resolvent_solve_op, DEFAULT_KAPPA_CAP};
use crate::{Error, Result, Warning, C64};

/// Growth factors below this raise a warning.
pub const WEAK_GROWTH: f64 = 10.0;

/// Probe restricted to a set of isolated real diagonal coordinates, with
/// double-double entries.
#[derive(Clone, Debug)]
pub struct DdProbe {
    pub support: Vec<usize>,
    pub values: Vec<Dd>,
    /// Shifted diagonal values on the support.
    pub poles: Vec<f64>,
    /// Shifted diagonal values on every isolated coordinate.
    pub isolated_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub label: String,
    pub vector: CVec,
    pub dd: Option<DdProbe>,
}

#[derive(Clone, Debug)]
pub struct GrowthCertificate {
    /// `||(T - lambda_n)^-1 e||` for every n.
    pub norms: Vec<f64>,
    pub factor: f64,
    /// First index from which the norms never decrease.
    pub monotone_from: usize,
    pub warning: Option<Warning>,
}

/// `e` proportional to `T 1_S`, S every other isolated coordinate.
pub fn secular_probe(op: &StructuredOp) -> Result<Probe> {
    let isolated = op.isolated_coordinates();
    let diag = op.base().diagonal();
    if let Some(&j) = isolated.iter().find(|&&j| diag[j].im != 0.0) {
        return Err(Error::Precondition(format!("isolated coordinate {j} has a non-real diagonal entry")));
    }
    let support: Vec<usize> = isolated.iter().step_by(2).copied().filter(|&j| diag[j].re != 0.0).collect();
    if support.len() < 2 {
        return Err(Error::Precondition("fewer than two reducing coordinates for the probe".into()));
    }
    let poles: Vec<f64> = support.iter().map(|&j| diag[j].re).collect();
    let raw: Vec<Dd> = poles.iter().map(|&p| Dd::from(p)).collect();
    let nrm = dd::norm(&raw);
    let values: Vec<Dd> = raw.iter().map(|&x| x / nrm).collect();
    let mut vector = CVec::zeros(op.dim());
    for (&j, v) in support.iter().zip(&values) {
        vector[j] = C64::new(v.to_f64(), 0.0);
    }
    let isolated_values = isolated.iter().map(|&j| diag[j].re).collect();
    Ok(Probe {
        label: "reducing".into(),
        vector,
        dd: Some(DdProbe { support, values, poles, isolated_values }),
    })
}

fn normalized(v: CVec) -> CVec {
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Fixed candidate list: `e_1..e_8`, the harmonic vector, eight seeded
/// random vectors and the first four zero-mean cosine modes.
pub fn probe_candidates(n: usize, seed: u64) -> Vec<Probe> {
    let mut out = Vec::new();
    let plain = |label: String, vector: CVec| Probe { label, vector, dd: None };
    for k in 0..n.min(8) {
        let mut v = CVec::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        out.push(plain(format!("e{}", k + 1), v));
    }
    out.push(plain(
        "harmonic".into(),
        normalized(CVec::from_fn(n, |i, _| C64::new(1.0 / (i + 1) as f64, 0.0))),
    ));
    for k in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
        let v = CVec::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        out.push(plain(format!("random{k}"), normalized(v)));
    }
    for j in 1..=4 {
        let v = CVec::from_fn(n, |i, _| {
            C64::new((j as f64 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos(), 0.0)
        });
        out.push(plain(format!("cos{j}"), normalized(v)));
    }
    out
}

pub fn growth_certificate(op: &StructuredOp, lambdas: &[C64], e: &CVec) -> Result<GrowthCertificate> {
    let mut norms = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        norms.push(resolvent_solve_op(op, l, e, DEFAULT_KAPPA_CAP)?.x.norm());
    }
    Ok(growth_from_norms(norms))
}

pub fn growth_from_norms(norms: Vec<f64>) -> GrowthCertificate {
    let factor = match (norms.first(), norms.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        _ => 1.0,
    };
    let mut monotone_from = norms.len().saturating_sub(1);
    while monotone_from > 0 && norms[monotone_from - 1] <= norms[monotone_from] * (1.0 + 1e-12) {
        monotone_from -= 1;
    }
    let warning = (factor < WEAK_GROWTH).then_some(Warning::WeakGrowth { factor });
    GrowthCertificate { norms, factor, monotone_from, warning }
}

#[derive(Clone, Debug)]
pub struct ProbeScore {
    pub label: String,
    pub system_size: usize,
    pub terminal_norm: f64,
}

#[derive(Clone, Debug)]
pub struct ProbeChoice {
    pub probe: Probe,
    pub growth: GrowthCertificate,
    pub scores: Vec<ProbeScore>,
}

/// Best candidate by (system size, terminal resolvent norm); earlier
/// candidates win ties.
pub fn select_probe<F>(op: &StructuredOp, lambdas: &[C64], candidates: Vec<Probe>, mut size_of: F) -> Result<ProbeChoice>
where
    F: FnMut(&Probe) -> Result<usize>,
{
    let mut best: Option<(usize, f64, Probe, GrowthCertificate)> = None;
    let mut scores = Vec::new();
    let mut last_err = None;
    for p in candidates {
        let growth = match growth_certificate(op, lambdas, &p.vector) {
            Ok(g) => g,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let size = match size_of(&p) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let terminal = *growth.norms.last().unwrap_or(&0.0);
        scores.push(ProbeScore { label: p.label.clone(), system_size: size, terminal_norm: terminal });
        let better = match &best {
            None => true,
            Some((s, t, _, _)) => size > *s || (size == *s && terminal > *t),
        };
        if better {
            best = Some((size, terminal, p, growth));
        }
    }
    match best {
        Some((_, _, probe, growth)) => Ok(ProbeChoice { probe, growth, scores }),
        None => Err(last_err.unwrap_or_else(|| Error::Precondition("no probe candidates".into()))),
    }
}
