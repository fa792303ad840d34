//! Concrete operator ideals and their norms on finite sequences.

use serde::{Deserialize, Serialize};

use crate::opcore::dense::{singular_values, Mat};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdealKind {
    Compact,
    Schatten { p: f64 },
    Trace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealSpec {
    pub kind: IdealKind,
}

impl IdealSpec {
    pub fn compact() -> Self {
        IdealSpec { kind: IdealKind::Compact }
    }

    pub fn trace() -> Self {
        IdealSpec { kind: IdealKind::Trace }
    }

    pub fn schatten(p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::Config(format!("Schatten exponent {p} must be a finite number >= 1")));
        }
        Ok(IdealSpec { kind: IdealKind::Schatten { p } })
    }

    pub fn name(&self) -> String {
        match self.kind {
            IdealKind::Compact => "compact".into(),
            IdealKind::Trace => "trace".into(),
            IdealKind::Schatten { p } => format!("schatten:{p}"),
        }
    }

    /// Exponent of the norm; `None` for the sup norm.
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            IdealKind::Compact => None,
            IdealKind::Trace => Some(1.0),
            IdealKind::Schatten { p } => Some(p),
        }
    }
}

pub fn ideal_from_name(name: &str) -> Result<IdealSpec> {
    match name.trim() {
        "compact" => Ok(IdealSpec::compact()),
        "trace" => Ok(IdealSpec::trace()),
        other => {
            let p = other
                .strip_prefix("schatten:")
                .ok_or_else(|| Error::Config(format!("unknown ideal {other:?}")))?
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad Schatten exponent in {other:?}")))?;
            IdealSpec::schatten(p)
        }
    }
}

/// Ideal norm of the diagonal operator with these (nonnegative) entries.
pub fn sequence_norm(seq: &[f64], ideal: &IdealSpec) -> f64 {
    let mut s: Vec<f64> = seq.iter().map(|x| x.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    match ideal.exponent() {
        None => s.first().copied().unwrap_or(0.0),
        Some(p) if p == 1.0 => s.iter().rev().sum(),
        Some(p) if p == 2.0 => {
            let top = s.first().copied().unwrap_or(0.0);
            if top == 0.0 {
                return 0.0;
            }
            top * s.iter().rev().map(|x| (x / top).powi(2)).sum::<f64>().sqrt()
        }
        Some(p) => {
            let top = s.first().copied().unwrap_or(0.0);
            if top == 0.0 {
                return 0.0;
            }
            top * s.iter().rev().map(|x| (x / top).powf(p)).sum::<f64>().powf(1.0 / p)
        }
    }
}

pub fn matrix_ideal_norm(m: &Mat, ideal: &IdealSpec) -> Result<f64> {
    Ok(sequence_norm(&singular_values(m)?, ideal))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipCertificate {
    pub ideal: IdealSpec,
    pub sequence: Vec<f64>,
    pub norm_value: f64,
    pub budget: f64,
    pub pass: bool,
}

/// For the compact kind the finite-scale criterion is the tail maximum past
/// index `ceil(len / 2)`.
pub fn certify_membership(seq: &[f64], ideal: &IdealSpec, budget: f64) -> MembershipCertificate {
    let norm_value = match ideal.kind {
        IdealKind::Compact => {
            let start = seq.len().div_ceil(2);
            seq[start.min(seq.len())..].iter().fold(0.0f64, |a, x| a.max(x.abs()))
        }
        _ => sequence_norm(seq, ideal),
    };
    MembershipCertificate { ideal: *ideal, sequence: seq.to_vec(), norm_value, budget, pass: norm_value <= budget }
}
