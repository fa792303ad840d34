use std::f64::consts::TAU;

use crate::opcore::spec::SeqRule;
use crate::C64;

/// Number of samples per boundary curve.
pub const CURVE_SAMPLES: usize = 64;

/// Terms of a sequence scanned when measuring distance to its closure.
const SEQUENCE_SCAN: usize = 100_000;

/// Closed subsets of the plane with exact descriptions.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Points { points: Vec<C64> },
    /// Closure of the value set of a rule.
    SequenceClosure { rule: SeqRule },
    Disk { center: C64, radius: f64 },
    Circle { center: C64, radius: f64 },
    Segment { a: C64, b: C64 },
    Union { parts: Vec<Region> },
    Unknown,
}

impl Region {
    /// Euclidean distance from `z`; NaN for an unknown region.
    pub fn distance(&self, z: C64) -> f64 {
        match self {
            Region::Points { points } => points.iter().map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min),
            Region::SequenceClosure { rule } => {
                let mut d = rule
                    .limits()
                    .map(|l| l.iter().map(|(p, _)| (p - z).norm()).fold(f64::INFINITY, f64::min))
                    .unwrap_or(f64::INFINITY);
                for n in 1..=SEQUENCE_SCAN {
                    if let Ok(v) = rule.eval(n) {
                        d = d.min((v - z).norm());
                    }
                }
                d
            }
            Region::Disk { center, radius } => ((z - center).norm() - radius).max(0.0),
            Region::Circle { center, radius } => ((z - center).norm() - radius).abs(),
            Region::Segment { a, b } => {
                let ab = b - a;
                let len2 = ab.norm_sqr();
                let t = if len2 == 0.0 { 0.0 } else { ((z - a) * ab.conj()).re / len2 };
                (a + ab * t.clamp(0.0, 1.0) - z).norm()
            }
            Region::Union { parts } => parts.iter().map(|p| p.distance(z)).fold(f64::INFINITY, f64::min),
            Region::Unknown => f64::NAN,
        }
    }

    pub fn contains(&self, z: C64, tol: f64) -> bool {
        self.distance(z) <= tol
    }

    /// Deterministic samples of the boundary. Curves start at angle 0.
    pub fn boundary_samples(&self) -> Vec<C64> {
        match self {
            Region::Points { points } => points.clone(),
            Region::SequenceClosure { rule } => rule.limits().map(|l| l.into_iter().map(|(p, _)| p).collect()).unwrap_or_default(),
            Region::Disk { center, radius } | Region::Circle { center, radius } => (0..CURVE_SAMPLES)
                .map(|k| center + C64::from_polar(*radius, TAU * k as f64 / CURVE_SAMPLES as f64))
                .collect(),
            Region::Segment { a, b } => (0..CURVE_SAMPLES)
                .map(|k| a + (b - a) * (k as f64 / (CURVE_SAMPLES - 1) as f64))
                .collect(),
            Region::Union { parts } => parts.iter().flat_map(Region::boundary_samples).collect(),
            Region::Unknown => Vec::new(),
        }
    }

    /// Short human-readable description for reports.
    pub fn describe(&self) -> String {
        let c = |z: &C64| format!("{}{:+}i", z.re, z.im);
        match self {
            Region::Points { points } => format!("points[{}]", points.iter().map(c).collect::<Vec<_>>().join(", ")),
            Region::SequenceClosure { .. } => "closure of diagonal values".into(),
            Region::Disk { center, radius } => format!("closed disk |z - {}| <= {radius}", c(center)),
            Region::Circle { center, radius } => format!("circle |z - {}| = {radius}", c(center)),
            Region::Segment { a, b } => format!("segment [{}, {}]", c(a), c(b)),
            Region::Union { parts } => parts.iter().map(Region::describe).collect::<Vec<_>>().join(" u "),
            Region::Unknown => "unknown".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        let z = C64::new(2.0, 0.0);
        let o = C64::new(0.0, 0.0);
        assert_eq!(Region::Disk { center: o, radius: 1.0 }.distance(z), 1.0);
        assert_eq!(Region::Circle { center: o, radius: 1.0 }.distance(o), 1.0);
        let seg = Region::Segment { a: C64::new(-1.0, 0.0), b: C64::new(1.0, 0.0) };
        assert!((seg.distance(C64::new(0.5, 2.0)) - 2.0).abs() < 1e-15);
        let h = Region::SequenceClosure { rule: crate::opcore::spec::harmonic_rule() };
        assert!((h.distance(C64::new(-0.25, 0.0)) - 0.25).abs() < 1e-15);
        assert!(h.distance(C64::new(0.3, 0.0)) > 0.03);
    }

    #[test]
    fn circle_samples_start_at_one() {
        let s = Region::Circle { center: C64::new(0.0, 0.0), radius: 1.0 }.boundary_samples();
        assert_eq!(s.len(), CURVE_SAMPLES);
        assert_eq!(s[0], C64::new(1.0, 0.0));
    }
}
