use crate::ideals::{certify_membership, IdealSpec, MembershipCertificate};
use crate::opcore::dd::Dd;
use crate::opcore::spec::{Family, OperatorSpec};
use crate::spectra::{spectral_oracle, CaseTag, CaseVariant};
use crate::{Error, Result, C64};

/// Shortest sequence accepted by the pipeline.
pub const MIN_APPROACH: usize = 8;

/// A point keeps this fraction of `|lambda|` as distance from the spectrum.
pub const MARGIN_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApproachKind {
    /// Roots of the secular equation of a reducing diagonal block.
    Secular,
    /// Outward along the normal of a disk boundary, `|lambda_n| = 2^-(n+n0)`.
    Radial,
    /// Along a fixed direction, `|lambda_n| = 2 b 3^-n`.
    Ray,
}

impl ApproachKind {
    pub fn name(&self) -> &'static str {
        match self {
            ApproachKind::Secular => "secular",
            ApproachKind::Radial => "radial",
            ApproachKind::Ray => "ray",
        }
    }
}

/// Points `lambda_n -> 0` of the resolvent set of `T = T' - beta`, ordered by
/// decreasing modulus.
#[derive(Clone, Debug)]
pub struct Approach {
    pub kind: ApproachKind,
    pub beta: C64,
    pub lambdas: Vec<C64>,
    /// Double-double values, present for secular sequences.
    pub lambdas_dd: Option<Vec<Dd>>,
    /// Distance of each `beta + lambda_n` from the spectrum.
    pub margins: Vec<f64>,
    pub membership: MembershipCertificate,
}

impl Approach {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

fn shift_like(f: &Family) -> bool {
    matches!(f, Family::UnilateralShift | Family::AdjointShift | Family::WeightedShift { .. })
}

/// Analytic approach sequence for a Case 1 spec.
pub fn generate_approach(
    spec: &OperatorSpec,
    tag: &CaseTag,
    ideal: &IdealSpec,
    count: usize,
    budget: f64,
) -> Result<Approach> {
    if tag.variant != CaseVariant::Case1 {
        return Err(Error::Precondition(format!("approach requires case 1, got {}", tag.variant.name())));
    }
    if count < MIN_APPROACH {
        return Err(Error::Approach(format!("{count} points requested, at least {MIN_APPROACH} needed")));
    }
    if !(budget > 0.0) {
        return Err(Error::Config(format!("approach budget {budget} must be positive")));
    }
    let info = spectral_oracle(spec)?;
    let beta = tag.beta;
    let radial = shift_like(spec.family.core()) && matches!(info.sigma, crate::spectra::Region::Disk { .. });

    let (kind, dir, mags) = if radial {
        let dir = if beta.norm() > 0.0 { beta / beta.norm() } else { C64::new(1.0, 0.0) };
        let mags_for = |n0: i32| -> Vec<f64> { (1..=count as i32).map(|n| 2f64.powi(-(n + n0))).collect() };
        let n0 = (0..60)
            .find(|&n0| certify_membership(&mags_for(n0), ideal, budget).pass)
            .ok_or_else(|| Error::Approach("no radial scale meets the budget".into()))?;
        (ApproachKind::Radial, dir, mags_for(n0))
    } else {
        let mags: Vec<f64> = (1..=count as i32).map(|n| 2.0 * budget * 3f64.powi(-n)).collect();
        // First of 16 directions, starting at the negative real axis, that
        // leaves the spectrum at every scale.
        let dir = (0..16)
            .map(|k| {
                let (s, c) = (std::f64::consts::PI * (1.0 - k as f64 / 8.0)).sin_cos();
                let snap = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
                C64::new(snap(c), snap(s))
            })
            .find(|d| mags.iter().all(|&t| info.sigma.distance(beta + d * t) >= MARGIN_FRACTION * t))
            .ok_or_else(|| Error::Approach("no direction leaves the spectrum".into()))?;
        (ApproachKind::Ray, dir, mags)
    };

    let lambdas: Vec<C64> = mags.iter().map(|&t| dir * t).collect();
    let margins: Vec<f64> = lambdas.iter().map(|&l| info.sigma.distance(beta + l)).collect();
    for (l, m) in lambdas.iter().zip(&margins) {
        if !(*m >= MARGIN_FRACTION * l.norm()) {
            return Err(Error::Approach(format!("lambda {l} within {m:e} of the spectrum")));
        }
    }
    let membership = certify_membership(&mags, ideal, budget);
    if !membership.pass {
        return Err(Error::Approach(format!("ideal norm {:e} exceeds budget {budget:e}", membership.norm_value)));
    }
    Ok(Approach { kind, beta, lambdas, lambdas_dd: None, margins, membership })
}

fn secular_f64(poles: &[f64], w: &[f64], l: f64) -> f64 {
    poles.iter().zip(w).map(|(p, w)| w / (p - l)).sum()
}

fn secular_dd(poles: &[f64], w: &[Dd], l: Dd) -> (Dd, Dd) {
    let mut s = Dd::ZERO;
    let mut ds = Dd::ZERO;
    for (p, w) in poles.iter().zip(w) {
        let r = (Dd::from(*p) - l).recip();
        let t = *w * r;
        s += t;
        ds += t * r;
    }
    (s, ds)
}

/// Root of `sum w_j / (p_j - lambda)` strictly between consecutive poles.
fn gap_root(poles: &[f64], w_dd: &[Dd], w: &[f64], a: f64, b: f64) -> Dd {
    let (mut lo, mut hi) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular_f64(poles, w, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a_dd, b_dd) = (Dd::from(a), Dd::from(b));
    let mut l = Dd::from(0.5 * (lo + hi));
    for _ in 0..6 {
        let (s, ds) = secular_dd(poles, w_dd, l);
        let step = s / ds;
        let next = l - step;
        if !(next > a_dd && next < b_dd) {
            break;
        }
        l = next;
        if step.abs().to_f64() <= 1e-33 * l.abs().to_f64() {
            break;
        }
    }
    l
}

/// Secular approach for an isolated real diagonal block.
///
/// `poles[j]` are the shifted diagonal values on the probe support and
/// `weights[j]` the probe entries there; `avoid` lists every isolated value
/// of the operator, used for the margins.
pub fn secular_approach(
    beta: C64,
    poles: &[f64],
    weights: &[Dd],
    avoid: &[f64],
    count: usize,
    ideal: &IdealSpec,
    budget: f64,
) -> Result<Approach> {
    if count < MIN_APPROACH {
        return Err(Error::Approach(format!("{count} points requested, at least {MIN_APPROACH} needed")));
    }
    let mut pw: Vec<(f64, Dd)> = poles
        .iter()
        .zip(weights)
        .filter(|(_, w)| w.to_f64() != 0.0)
        .map(|(p, w)| (*p, *w * *w))
        .collect();
    pw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, Dd)> = Vec::with_capacity(pw.len());
    for (p, w) in pw {
        match merged.last_mut() {
            Some(last) if last.0 == p => last.1 += w,
            _ => merged.push((p, w)),
        }
    }
    let p: Vec<f64> = merged.iter().map(|x| x.0).collect();
    let w_dd: Vec<Dd> = merged.iter().map(|x| x.1).collect();
    let w: Vec<f64> = w_dd.iter().map(|x| x.to_f64()).collect();

    let mut gaps: Vec<(f64, f64, f64)> = p
        .windows(2)
        .map(|g| {
            let d = if g[0] <= 0.0 && g[1] >= 0.0 { 0.0 } else { g[0].abs().min(g[1].abs()) };
            (d, g[0], g[1])
        })
        .collect();
    if gaps.len() < count {
        return Err(Error::Approach(format!("{} pole gaps for {count} points", gaps.len())));
    }
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    gaps.truncate(count);

    let mut roots: Vec<Dd> = gaps.iter().map(|&(_, a, b)| gap_root(&p, &w_dd, &w, a, b)).collect();
    roots.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap_or(std::cmp::Ordering::Equal));

    let lambdas: Vec<C64> = roots.iter().map(|r| C64::new(r.to_f64(), 0.0)).collect();
    let margins: Vec<f64> = roots
        .iter()
        .map(|r| avoid.iter().map(|&d| (Dd::from(d) - *r).abs().to_f64()).fold(f64::INFINITY, f64::min))
        .collect();
    if let Some(i) = margins.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::Approach(format!("secular root {} falls on the spectrum", lambdas[i])));
    }
    let mags: Vec<f64> = lambdas.iter().map(|l| l.norm()).collect();
    let membership = certify_membership(&mags, ideal, budget);
    Ok(Approach { kind: ApproachKind::Secular, beta, lambdas, lambdas_dd: Some(roots), margins, membership })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::select_beta;

    #[test]
    fn short_sequence_fails() {
        let spec = OperatorSpec::harmonic();
        let tag = select_beta(&spec).unwrap();
        assert!(matches!(
            generate_approach(&spec, &tag, &IdealSpec::trace(), 2, 0.1),
            Err(Error::Approach(_))
        ));
    }

    #[test]
    fn harmonic_ray() {
        let spec = OperatorSpec::harmonic();
        let tag = select_beta(&spec).unwrap();
        let a = generate_approach(&spec, &tag, &IdealSpec::trace(), 20, 0.1).unwrap();
        assert_eq!(a.kind, ApproachKind::Ray);
        for (n, l) in a.lambdas.iter().enumerate() {
            let want = -0.2 * 3f64.powi(-(n as i32 + 1));
            assert!((l - C64::new(want, 0.0)).norm() <= 1e-16 * want.abs());
        }
        assert!(a.membership.norm_value <= 0.1);
    }

    #[test]
    fn shift_radial() {
        let spec = OperatorSpec::shift();
        let tag = select_beta(&spec).unwrap();
        let a = generate_approach(&spec, &tag, &IdealSpec::compact(), 16, 0.01).unwrap();
        assert_eq!(a.kind, ApproachKind::Radial);
        assert_eq!(a.lambdas[0], C64::new(0.5, 0.0));
        for (l, m) in a.lambdas.iter().zip(&a.margins) {
            assert!((m - l.norm()).abs() < 1e-15);
        }
        let t = generate_approach(&spec, &tag, &IdealSpec::trace(), 16, 0.01).unwrap();
        assert!(t.lambdas.iter().map(|l| l.norm()).sum::<f64>() <= 0.01);
    }

    #[test]
    fn secular_roots_interlace() {
        let poles: Vec<f64> = (0..40).map(|k| 1.0 / (2 * k + 1) as f64).collect();
        let nrm = poles.iter().map(|p| p * p).sum::<f64>().sqrt();
        let w: Vec<Dd> = poles.iter().map(|p| Dd::from(*p) / Dd::from(nrm)).collect();
        let avoid: Vec<f64> = (1..=80).map(|k| 1.0 / k as f64).collect();
        let a = secular_approach(C64::new(0.0, 0.0), &poles, &w, &avoid, 10, &IdealSpec::trace(), 1.0).unwrap();
        let l = a.lambdas_dd.as_ref().unwrap();
        for k in 1..l.len() {
            assert!(l[k].to_f64() < l[k - 1].to_f64());
        }
        // Residual of the secular equation is at double-double level.
        let pw: Vec<(f64, Dd)> = poles.iter().zip(&w).map(|(p, w)| (*p, *w * *w)).collect();
        for r in l {
            let mut s = Dd::ZERO;
            let mut mag = 0.0;
            for (p, w) in &pw {
                let t = *w / (Dd::from(*p) - *r);
                s += t;
                mag += t.abs().to_f64();
            }
            assert!(s.abs().to_f64() <= 1e-28 * mag);
        }
        assert!(a.margins.iter().all(|m| *m > 0.0));
    }
}
