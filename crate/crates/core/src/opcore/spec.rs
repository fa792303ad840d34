//! Symbolic operator descriptions.
//!
//! Indices are 1-based as in the sequence notation `d_n`, `w_n`.
//! Complex values are written either as a bare number or as `[re, im]`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result, C64};

/// Complex number with a lenient serde form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CNum(pub C64);

impl CNum {
    pub fn real(re: f64) -> Self {
        CNum(C64::new(re, 0.0))
    }
}

impl Serialize for CNum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.im == 0.0 {
            s.serialize_f64(self.0.re)
        } else {
            [self.0.re, self.0.im].serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for CNum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Real(f64),
            Pair([f64; 2]),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Int(i) => CNum(C64::new(i as f64, 0.0)),
            Raw::Real(r) => CNum(C64::new(r, 0.0)),
            Raw::Pair([re, im]) => CNum(C64::new(re, im)),
        })
    }
}

fn one() -> f64 {
    1.0
}

fn zero() -> f64 {
    0.0
}

/// Closed-form rule `n -> value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeqRule {
    Constant { value: CNum },
    /// `scale * (stride * n + offset)^(-exponent)`.
    Power {
        scale: CNum,
        #[serde(default = "one")]
        exponent: f64,
        #[serde(default = "one")]
        stride: f64,
        #[serde(default = "zero")]
        offset: f64,
    },
    /// `scale * ratio^n`.
    Geometric { scale: CNum, ratio: CNum },
    Parity { even: Box<SeqRule>, odd: Box<SeqRule> },
    Offset { base: Box<SeqRule>, shift: CNum },
}

/// How a limit point of a sequence is approached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitKind {
    /// Values converge to the point without (eventually) attaining it.
    Accumulating,
    /// The point is attained infinitely often.
    Repeated,
}

/// Solutions of `rule(n) = z`.
#[derive(Clone, Debug, PartialEq)]
pub enum Hits {
    None,
    Finite(Vec<usize>),
    Infinite,
    Unknown,
}

impl Hits {
    fn union(self, other: Hits) -> Hits {
        match (self, other) {
            (Hits::Unknown, _) | (_, Hits::Unknown) => Hits::Unknown,
            (Hits::Infinite, _) | (_, Hits::Infinite) => Hits::Infinite,
            (Hits::None, h) | (h, Hits::None) => h,
            (Hits::Finite(mut a), Hits::Finite(b)) => {
                a.extend(b);
                a.sort_unstable();
                a.dedup();
                Hits::Finite(a)
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Hits::None) || matches!(self, Hits::Finite(v) if v.is_empty())
    }
}

fn close(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-13 * (1.0 + a.norm().max(b.norm()))
}

impl SeqRule {
    pub fn eval(&self, n: usize) -> Result<C64> {
        let x = n as f64;
        let v = match self {
            SeqRule::Constant { value } => value.0,
            SeqRule::Power { scale, exponent, stride, offset } => {
                let base = stride * x + offset;
                if base <= 0.0 {
                    return Err(Error::Spec(format!("power rule base {base} not positive at n = {n}")));
                }
                scale.0 * base.powf(-exponent)
            }
            SeqRule::Geometric { scale, ratio } => scale.0 * ratio.0.powu(n as u32),
            SeqRule::Parity { even, odd } => {
                if n % 2 == 0 {
                    even.eval(n)?
                } else {
                    odd.eval(n)?
                }
            }
            SeqRule::Offset { base, shift } => base.eval(n)? + shift.0,
        };
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Spec(format!("rule produced a non-finite value at n = {n}")));
        }
        Ok(v)
    }

    /// Limit points of the sequence; errors for rules whose limit set is not a
    /// finite point set.
    pub fn limits(&self) -> Result<Vec<(C64, LimitKind)>> {
        let zero = C64::new(0.0, 0.0);
        Ok(match self {
            SeqRule::Constant { value } => vec![(value.0, LimitKind::Repeated)],
            SeqRule::Power { scale, exponent, .. } => {
                if scale.0 == zero {
                    vec![(zero, LimitKind::Repeated)]
                } else if *exponent > 0.0 {
                    vec![(zero, LimitKind::Accumulating)]
                } else if *exponent == 0.0 {
                    vec![(scale.0, LimitKind::Repeated)]
                } else {
                    return Err(Error::Spec("power rule with negative exponent is unbounded".into()));
                }
            }
            SeqRule::Geometric { scale, ratio } => {
                let r = ratio.0.norm();
                if scale.0 == zero || ratio.0 == zero {
                    vec![(zero, LimitKind::Repeated)]
                } else if r < 1.0 {
                    vec![(zero, LimitKind::Accumulating)]
                } else if ratio.0 == C64::new(1.0, 0.0) {
                    vec![(scale.0, LimitKind::Repeated)]
                } else {
                    return Err(Error::Spec("geometric rule with |ratio| >= 1 has no point limit set".into()));
                }
            }
            SeqRule::Parity { even, odd } => {
                let mut v = even.limits()?;
                for (p, k) in odd.limits()? {
                    if let Some(slot) = v.iter_mut().find(|(q, _)| close(*q, p)) {
                        if k == LimitKind::Repeated {
                            slot.1 = LimitKind::Repeated;
                        }
                    } else {
                        v.push((p, k));
                    }
                }
                v
            }
            SeqRule::Offset { base, shift } => {
                base.limits()?.into_iter().map(|(p, k)| (p + shift.0, k)).collect()
            }
        })
    }

    /// Indices `n >= 1` with `rule(n) = z`.
    pub fn solve(&self, z: C64) -> Hits {
        let zero = C64::new(0.0, 0.0);
        let verify = |n: usize| -> Hits {
            match self.eval(n) {
                Ok(v) if close(v, z) => Hits::Finite(vec![n]),
                Ok(_) => Hits::None,
                Err(_) => Hits::Unknown,
            }
        };
        match self {
            SeqRule::Constant { value } => {
                if close(value.0, z) {
                    Hits::Infinite
                } else {
                    Hits::None
                }
            }
            SeqRule::Power { scale, exponent, stride, offset } => {
                if scale.0 == zero || *exponent == 0.0 {
                    return if close(scale.0, z) { Hits::Infinite } else { Hits::None };
                }
                if z == zero {
                    return Hits::None;
                }
                let w = scale.0 / z;
                if w.im.abs() > 1e-13 * w.norm() || w.re <= 0.0 {
                    return Hits::None;
                }
                let x = (w.re.powf(1.0 / exponent) - offset) / stride;
                if !x.is_finite() || x < 0.5 {
                    return Hits::None;
                }
                verify(x.round() as usize)
            }
            SeqRule::Geometric { scale, ratio } => {
                if scale.0 == zero || ratio.0 == zero {
                    return if z == zero { Hits::Infinite } else { Hits::None };
                }
                if z == zero {
                    return Hits::None;
                }
                let r = ratio.0.norm();
                if r == 1.0 {
                    if ratio.0 == C64::new(1.0, 0.0) {
                        return if close(scale.0, z) { Hits::Infinite } else { Hits::None };
                    }
                    return Hits::Unknown;
                }
                let x = (z / scale.0).norm().ln() / r.ln();
                if !x.is_finite() || x < 0.5 || x > 1e6 {
                    return Hits::None;
                }
                verify(x.round() as usize)
            }
            SeqRule::Parity { even, odd } => {
                let keep = |h: Hits, parity: usize| match h {
                    Hits::Finite(v) => {
                        let v: Vec<usize> = v.into_iter().filter(|n| n % 2 == parity).collect();
                        if v.is_empty() {
                            Hits::None
                        } else {
                            Hits::Finite(v)
                        }
                    }
                    other => other,
                };
                keep(even.solve(z), 0).union(keep(odd.solve(z), 1))
            }
            SeqRule::Offset { base, shift } => base.solve(z - shift.0),
        }
    }
}

/// Toeplitz coefficient: `T[i][i + offset] = value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandCoefficient {
    pub offset: i64,
    pub value: CNum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Diagonal { entries: SeqRule },
    UnilateralShift,
    AdjointShift,
    /// `T e_n = w_n e_{n+1}`.
    WeightedShift { weights: SeqRule },
    Band { coefficients: Vec<BandCoefficient> },
    /// `T e_{2i-1} = w e_{2i}`, `T e_{2i} = 0`.
    NilpotentPair { weight: CNum },
    Perturbed { base: Box<Family> },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Diagonal { .. } => "diagonal",
            Family::UnilateralShift => "unilateral_shift",
            Family::AdjointShift => "adjoint_shift",
            Family::WeightedShift { .. } => "weighted_shift",
            Family::Band { .. } => "band",
            Family::NilpotentPair { .. } => "nilpotent_pair",
            Family::Perturbed { .. } => "perturbed",
        }
    }

    /// Innermost non-perturbed family.
    pub fn core(&self) -> &Family {
        match self {
            Family::Perturbed { base } => base.core(),
            f => f,
        }
    }
}

/// Sparse vector entry `(index, value)` with a 1-based index.
pub type SparseEntry = (usize, CNum);

/// The matrix `coefficient * u v*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankOne {
    pub u: Vec<SparseEntry>,
    pub v: Vec<SparseEntry>,
    pub coefficient: CNum,
}

impl RankOne {
    pub fn norm(&self) -> f64 {
        let n2 = |x: &[SparseEntry]| x.iter().map(|(_, c)| c.0.norm_sqr()).sum::<f64>().sqrt();
        self.coefficient.0.norm() * n2(&self.u) * n2(&self.v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbation: Vec<RankOne>,
    /// Declared bound on generated sequence moduli.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl OperatorSpec {
    pub fn new(family: Family) -> Self {
        OperatorSpec { family, perturbation: Vec::new(), bound: None }
    }

    pub fn with_perturbation(mut self, p: RankOne) -> Self {
        self.perturbation.push(p);
        self
    }

    pub fn harmonic() -> Self {
        OperatorSpec::new(Family::Diagonal { entries: harmonic_rule() })
    }

    pub fn shift() -> Self {
        OperatorSpec::new(Family::UnilateralShift)
    }

    /// `0` on even indices and `1/n` on odd ones.
    pub fn odd_harmonic() -> Self {
        OperatorSpec::new(Family::Diagonal {
            entries: SeqRule::Parity {
                even: Box::new(SeqRule::Constant { value: CNum::real(0.0) }),
                odd: Box::new(harmonic_rule()),
            },
        })
    }

    pub fn nilpotent_pair(weight: f64) -> Self {
        OperatorSpec::new(Family::NilpotentPair { weight: CNum::real(weight) })
    }

    pub fn perturbation_norm(&self) -> f64 {
        self.perturbation.iter().map(RankOne::norm).sum()
    }
}

pub fn harmonic_rule() -> SeqRule {
    SeqRule::Power { scale: CNum::real(1.0), exponent: 1.0, stride: 1.0, offset: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rule_values_and_limits() {
        let r = harmonic_rule();
        assert_eq!(r.eval(4).unwrap(), C64::new(0.25, 0.0));
        assert_eq!(r.limits().unwrap(), vec![(C64::new(0.0, 0.0), LimitKind::Accumulating)]);
        assert_eq!(r.solve(C64::new(0.2, 0.0)), Hits::Finite(vec![5]));
        assert_eq!(r.solve(C64::new(0.0, 0.0)), Hits::None);
        assert_eq!(r.solve(C64::new(0.3, 0.0)), Hits::None);
    }

    #[test]
    fn parity_rule_repeats_zero() {
        let OperatorSpec { family: Family::Diagonal { entries }, .. } = OperatorSpec::odd_harmonic() else {
            unreachable!()
        };
        assert_eq!(entries.eval(2).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(entries.eval(3).unwrap(), C64::new(1.0 / 3.0, 0.0));
        assert_eq!(entries.limits().unwrap(), vec![(C64::new(0.0, 0.0), LimitKind::Repeated)]);
        assert_eq!(entries.solve(C64::new(0.0, 0.0)), Hits::Infinite);
        assert_eq!(entries.solve(C64::new(0.5, 0.0)), Hits::None);
        assert_eq!(entries.solve(C64::new(1.0 / 3.0, 0.0)), Hits::Finite(vec![3]));
    }

    #[test]
    fn geometric_solve() {
        let r = SeqRule::Geometric { scale: CNum::real(1.0), ratio: CNum::real(0.5) };
        assert_eq!(r.solve(C64::new(0.125, 0.0)), Hits::Finite(vec![3]));
    }

    #[test]
    fn power_rule_rejects_nonpositive_base() {
        let r = SeqRule::Power { scale: CNum::real(1.0), exponent: 1.0, stride: 1.0, offset: -3.0 };
        assert!(matches!(r.eval(3), Err(Error::Spec(_))));
    }
}
