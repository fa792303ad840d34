//! Analytic spectral data per family, choice of the shift `beta` and the
//! approach sequences `lambda_n -> 0` of `T = T' - beta`.

pub mod approach;
pub mod probe;
pub mod region;

use crate::opcore::spec::{Family, Hits, LimitKind, OperatorSpec, SeqRule};
use crate::{Error, Result, C64};

pub use approach::{generate_approach, secular_approach, Approach, ApproachKind};
pub use probe::{growth_certificate, probe_candidates, secular_probe, select_probe, GrowthCertificate, Probe};
pub use region::Region;

/// Three-valued membership answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PointSpectrum {
    Empty,
    /// The values of a diagonal rule.
    Sequence(SeqRule),
    OpenDisk { center: C64, radius: f64 },
    Points(Vec<C64>),
    Unknown,
}

impl PointSpectrum {
    pub fn contains(&self, z: C64) -> Membership {
        match self {
            PointSpectrum::Empty => Membership::No,
            PointSpectrum::Sequence(rule) => match rule.solve(z) {
                Hits::Unknown => Membership::Unknown,
                h if h.is_empty() => Membership::No,
                _ => Membership::Yes,
            },
            PointSpectrum::OpenDisk { center, radius } => {
                if (z - center).norm() < *radius {
                    Membership::Yes
                } else {
                    Membership::No
                }
            }
            PointSpectrum::Points(p) => {
                if p.iter().any(|q| (q - z).norm() <= 1e-14 * (1.0 + q.norm())) {
                    Membership::Yes
                } else {
                    Membership::No
                }
            }
            PointSpectrum::Unknown => Membership::Unknown,
        }
    }
}

/// Families whose eigenvectors are basis vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum EigenpairGenerator {
    /// `n -> (d_n, e_n)`.
    Diagonal(SeqRule),
    /// `n -> (0, e_{2n})`.
    NilpotentKernel,
}

impl EigenpairGenerator {
    /// `(eigenvalue, 1-based basis index)` of the n-th pair.
    pub fn pair(&self, n: usize) -> Result<(C64, usize)> {
        match self {
            EigenpairGenerator::Diagonal(rule) => Ok((rule.eval(n)?, n)),
            EigenpairGenerator::NilpotentKernel => Ok((C64::new(0.0, 0.0), 2 * n)),
        }
    }

    /// Whether eigenvalues different from `z` accumulate at `z`.
    pub fn accumulates_at(&self, z: C64) -> bool {
        match self {
            EigenpairGenerator::Diagonal(rule) => accumulates_at(rule, z),
            EigenpairGenerator::NilpotentKernel => false,
        }
    }
}

pub fn accumulates_at(rule: &SeqRule, z: C64) -> bool {
    let zero = C64::new(0.0, 0.0);
    match rule {
        SeqRule::Constant { .. } => false,
        SeqRule::Power { scale, exponent, .. } => scale.0 != zero && *exponent > 0.0 && z.norm() == 0.0,
        SeqRule::Geometric { scale, ratio } => {
            scale.0 != zero && ratio.0 != zero && ratio.0.norm() < 1.0 && z.norm() == 0.0
        }
        SeqRule::Parity { even, odd } => accumulates_at(even, z) || accumulates_at(odd, z),
        SeqRule::Offset { base, shift } => accumulates_at(base, z - shift.0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralInfo {
    pub sigma: Region,
    pub sigma_e: Region,
    pub point_spectrum: PointSpectrum,
    pub eigenpairs: Option<EigenpairGenerator>,
}

impl SpectralInfo {
    /// Sample points of the boundary of the essential spectrum.
    pub fn boundary_e(&self) -> Vec<C64> {
        self.sigma_e.boundary_samples()
    }

    pub fn in_point_spectrum(&self, z: C64) -> Membership {
        self.point_spectrum.contains(z)
    }
}

fn hermitian_band_range(coeffs: &[crate::opcore::spec::BandCoefficient]) -> Result<(f64, f64, bool)> {
    use std::collections::BTreeMap;
    let mut by_offset: BTreeMap<i64, C64> = BTreeMap::new();
    for c in coeffs {
        *by_offset.entry(c.offset).or_insert(C64::new(0.0, 0.0)) += c.value.0;
    }
    for (&k, &a) in &by_offset {
        let b = by_offset.get(&-k).copied().unwrap_or(C64::new(0.0, 0.0));
        if (a - b.conj()).norm() > 1e-14 * (1.0 + a.norm()) {
            return Err(Error::Spec("non-Hermitian band: no analytic spectral data".into()));
        }
    }
    let symbol = |t: f64| -> f64 {
        by_offset.iter().map(|(&k, &a)| (a * C64::from_polar(1.0, k as f64 * t)).re).sum()
    };
    let samples = 8192;
    let mut lo = (f64::INFINITY, 0.0);
    let mut hi = (f64::NEG_INFINITY, 0.0);
    for i in 0..samples {
        let t = std::f64::consts::TAU * i as f64 / samples as f64;
        let v = symbol(t);
        if v < lo.0 {
            lo = (v, t);
        }
        if v > hi.0 {
            hi = (v, t);
        }
    }
    // Golden-section refinement around the sampled extrema.
    let h = std::f64::consts::TAU / samples as f64;
    let refine = |t0: f64, sign: f64| -> f64 {
        let (mut a, mut b) = (t0 - h, t0 + h);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if sign * symbol(c) < sign * symbol(d) {
                b = d;
            } else {
                a = c;
            }
        }
        symbol(0.5 * (a + b))
    };
    let min = refine(lo.1, 1.0).min(lo.0);
    let max = refine(hi.1, -1.0).max(hi.0);
    let constant = by_offset.iter().all(|(&k, a)| k == 0 || a.norm() == 0.0);
    Ok((min, max, constant))
}

fn family_oracle(family: &Family) -> Result<SpectralInfo> {
    let zero = C64::new(0.0, 0.0);
    Ok(match family {
        Family::Diagonal { entries } => {
            let limits: Vec<C64> = entries.limits()?.into_iter().map(|(p, _)| p).collect();
            SpectralInfo {
                sigma: Region::SequenceClosure { rule: entries.clone() },
                sigma_e: Region::Points { points: limits },
                point_spectrum: PointSpectrum::Sequence(entries.clone()),
                eigenpairs: Some(EigenpairGenerator::Diagonal(entries.clone())),
            }
        }
        Family::UnilateralShift => SpectralInfo {
            sigma: Region::Disk { center: zero, radius: 1.0 },
            sigma_e: Region::Circle { center: zero, radius: 1.0 },
            point_spectrum: PointSpectrum::Empty,
            eigenpairs: None,
        },
        Family::AdjointShift => SpectralInfo {
            sigma: Region::Disk { center: zero, radius: 1.0 },
            sigma_e: Region::Circle { center: zero, radius: 1.0 },
            point_spectrum: PointSpectrum::OpenDisk { center: zero, radius: 1.0 },
            eigenpairs: None,
        },
        Family::WeightedShift { weights } => {
            if !weights.solve(zero).is_empty() {
                return Err(Error::Spec("weighted shift with vanishing weights is not supported".into()));
            }
            let limits = weights.limits()?;
            let r = limits.first().map(|(p, _)| p.norm()).unwrap_or(0.0);
            if limits.iter().any(|(p, _)| (p.norm() - r).abs() > 1e-14 * (1.0 + r)) {
                return Err(Error::Spec("weighted shift weights must have a single limit modulus".into()));
            }
            if r == 0.0 {
                SpectralInfo {
                    sigma: Region::Points { points: vec![zero] },
                    sigma_e: Region::Points { points: vec![zero] },
                    point_spectrum: PointSpectrum::Empty,
                    eigenpairs: None,
                }
            } else {
                SpectralInfo {
                    sigma: Region::Disk { center: zero, radius: r },
                    sigma_e: Region::Circle { center: zero, radius: r },
                    point_spectrum: PointSpectrum::Empty,
                    eigenpairs: None,
                }
            }
        }
        Family::Band { coefficients } => {
            let (min, max, constant) = hermitian_band_range(coefficients)?;
            let seg = Region::Segment { a: C64::new(min, 0.0), b: C64::new(max, 0.0) };
            SpectralInfo {
                sigma: seg.clone(),
                sigma_e: seg,
                point_spectrum: if constant {
                    PointSpectrum::Points(vec![C64::new(min, 0.0)])
                } else {
                    PointSpectrum::Empty
                },
                eigenpairs: None,
            }
        }
        Family::NilpotentPair { .. } => SpectralInfo {
            sigma: Region::Points { points: vec![zero] },
            sigma_e: Region::Points { points: vec![zero] },
            point_spectrum: PointSpectrum::Points(vec![zero]),
            eigenpairs: Some(EigenpairGenerator::NilpotentKernel),
        },
        Family::Perturbed { base } => {
            let inner = family_oracle(base)?;
            SpectralInfo {
                sigma: Region::Unknown,
                sigma_e: inner.sigma_e,
                point_spectrum: PointSpectrum::Unknown,
                eigenpairs: None,
            }
        }
    })
}

/// Analytic spectral data; refuses specs it cannot describe exactly.
pub fn spectral_oracle(spec: &OperatorSpec) -> Result<SpectralInfo> {
    if !spec.perturbation.is_empty() && !matches!(spec.family, Family::Perturbed { .. }) {
        return Err(Error::Spec(format!(
            "family {} carries a perturbation; declare it as perturbed to use the oracle",
            spec.family.name()
        )));
    }
    family_oracle(&spec.family)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseVariant {
    Case1,
    Case2,
    Case3Nilpotent,
    Case3Deferred,
}

impl CaseVariant {
    pub fn name(&self) -> &'static str {
        match self {
            CaseVariant::Case1 => "case1",
            CaseVariant::Case2 => "case2",
            CaseVariant::Case3Nilpotent => "case3_nilpotent",
            CaseVariant::Case3Deferred => "case3_deferred",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseTag {
    pub variant: CaseVariant,
    pub beta: C64,
}

pub fn select_beta(spec: &OperatorSpec) -> Result<CaseTag> {
    let info = spectral_oracle(spec)?;
    select_beta_from(spec, &info)
}

pub fn select_beta_from(spec: &OperatorSpec, info: &SpectralInfo) -> Result<CaseTag> {
    let samples = info.boundary_e();
    let mut unknown = 0;
    for &z in &samples {
        match info.in_point_spectrum(z) {
            Membership::No => return Ok(CaseTag { variant: CaseVariant::Case1, beta: z }),
            Membership::Unknown => unknown += 1,
            Membership::Yes => {}
        }
    }
    if samples.is_empty() || unknown == samples.len() {
        return Err(Error::OracleIncomplete(format!(
            "point spectrum undecided on all {} boundary samples",
            samples.len()
        )));
    }
    if let Some(gen) = &info.eigenpairs {
        for &z in &samples {
            if info.in_point_spectrum(z) == Membership::Yes && gen.accumulates_at(z) {
                return Ok(CaseTag { variant: CaseVariant::Case2, beta: z });
            }
        }
    }
    let beta = samples[0];
    if matches!(spec.family, Family::NilpotentPair { .. }) {
        return Ok(CaseTag { variant: CaseVariant::Case3Nilpotent, beta });
    }
    Ok(CaseTag { variant: CaseVariant::Case3Deferred, beta })
}

/// Limit points of a diagonal rule with their kinds (re-exported for reports).
pub fn diagonal_limits(rule: &SeqRule) -> Result<Vec<(C64, LimitKind)>> {
    rule.limits()
}
