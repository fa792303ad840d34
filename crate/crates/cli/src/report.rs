//! Verification report: canonical JSON with sorted keys and 17 significant
//! digits for every float.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};

use crate::CliError;

pub const REPORT_SCHEMA: &str = "halfspace-report";
pub const REPORT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// `measured <= threshold`
    Le,
    /// `measured < threshold`
    Lt,
    /// `measured >= threshold`
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Lt => "<",
            Relation::Ge => ">=",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        match s {
            "<=" => Some(Relation::Le),
            "<" => Some(Relation::Lt),
            ">=" => Some(Relation::Ge),
            _ => None,
        }
    }

    /// NaN never passes.
    pub fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Relation::Le => measured <= threshold,
            Relation::Lt => measured < threshold,
            Relation::Ge => measured >= threshold,
        }
    }
}

/// One invariant, measured value against its threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub id: String,
    pub stage: String,
    pub invariant: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(stage: &str, id: &str, invariant: &str, measured: f64, relation: Relation, threshold: f64) -> Check {
        Check {
            id: format!("{stage}.{id}"),
            stage: stage.into(),
            invariant: invariant.into(),
            measured,
            relation,
            threshold,
            pass: relation.holds(measured, threshold),
        }
    }

    fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("id".into(), self.id.clone().into());
        m.insert("stage".into(), self.stage.clone().into());
        m.insert("invariant".into(), self.invariant.clone().into());
        m.insert("measured".into(), num(self.measured));
        m.insert("relation".into(), self.relation.symbol().into());
        m.insert("threshold".into(), num(self.threshold));
        m.insert("pass".into(), self.pass.into());
        Value::Object(m)
    }

    fn from_value(v: &Value) -> Result<Check, CliError> {
        let field = |k: &str| v.get(k).ok_or_else(|| CliError::ReportVersion(format!("check without {k:?}")));
        let text = |k: &str| -> Result<String, CliError> {
            field(k)?
                .as_str()
                .map(String::from)
                .ok_or_else(|| CliError::ReportVersion(format!("check field {k:?} is not a string")))
        };
        let relation = Relation::parse(&text("relation")?)
            .ok_or_else(|| CliError::ReportVersion("unknown relation".into()))?;
        Ok(Check {
            id: text("id")?,
            stage: text("stage")?,
            invariant: text("invariant")?,
            measured: read_num(field("measured")?)?,
            relation,
            threshold: read_num(field("threshold")?)?,
            pass: field("pass")?
                .as_bool()
                .ok_or_else(|| CliError::ReportVersion("check pass is not a boolean".into()))?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Ok,
    Failed,
    Deferred,
    Skipped,
}

impl StageStatus {
    pub fn name(self) -> &'static str {
        match self {
            StageStatus::Ok => "ok",
            StageStatus::Failed => "failed",
            StageStatus::Deferred => "deferred",
            StageStatus::Skipped => "skipped",
        }
    }

    fn parse(s: &str) -> Option<StageStatus> {
        match s {
            "ok" => Some(StageStatus::Ok),
            "failed" => Some(StageStatus::Failed),
            "deferred" => Some(StageStatus::Deferred),
            "skipped" => Some(StageStatus::Skipped),
            _ => None,
        }
    }
}

/// Error class recorded for a failed stage; drives the exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureClass {
    Invariant,
    Config,
    Numerical,
}

impl FailureClass {
    pub fn name(self) -> &'static str {
        match self {
            FailureClass::Invariant => "invariant",
            FailureClass::Config => "config",
            FailureClass::Numerical => "numerical",
        }
    }

    fn parse(s: &str) -> Option<FailureClass> {
        match s {
            "invariant" => Some(FailureClass::Invariant),
            "config" => Some(FailureClass::Config),
            "numerical" => Some(FailureClass::Numerical),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<(FailureClass, String)>,
    /// Pipeline-side values, reported for context only.
    pub certificates: Value,
}

impl StageRecord {
    pub fn skipped(name: &str) -> StageRecord {
        StageRecord { name: name.into(), status: StageStatus::Skipped, error: None, certificates: Value::Object(Map::new()) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub scenario: Value,
    pub stamp: Value,
    pub stages: Vec<StageRecord>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub timing: BTreeMap<String, f64>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.stages.iter().all(|s| s.error.is_none())
    }

    /// Config errors outrank numerical failures, which outrank failed invariants.
    pub fn exit_code(&self) -> i32 {
        let classes: Vec<FailureClass> = self.stages.iter().filter_map(|s| s.error.as_ref().map(|e| e.0)).collect();
        if classes.contains(&FailureClass::Config) {
            EXIT_CONFIG
        } else if classes.contains(&FailureClass::Numerical) {
            EXIT_NUMERICAL
        } else if !classes.is_empty() || self.checks.iter().any(|c| !c.pass) {
            EXIT_INVARIANT
        } else {
            EXIT_OK
        }
    }

    pub fn to_value(&self) -> Value {
        let mut root = Map::new();
        root.insert("schema".into(), REPORT_SCHEMA.into());
        root.insert("schema_version".into(), REPORT_VERSION.into());
        root.insert("scenario".into(), self.scenario.clone());
        root.insert("stamp".into(), self.stamp.clone());
        let stages = self
            .stages
            .iter()
            .map(|s| {
                let mut m = Map::new();
                m.insert("name".into(), s.name.clone().into());
                m.insert("status".into(), s.status.name().into());
                if let Some((class, msg)) = &s.error {
                    let mut e = Map::new();
                    e.insert("class".into(), class.name().into());
                    e.insert("message".into(), msg.clone().into());
                    m.insert("error".into(), Value::Object(e));
                }
                m.insert("certificates".into(), s.certificates.clone());
                Value::Object(m)
            })
            .collect();
        root.insert("stages".into(), Value::Array(stages));
        root.insert("checks".into(), Value::Array(self.checks.iter().map(Check::to_value).collect()));
        root.insert("warnings".into(), Value::Array(self.warnings.iter().cloned().map(Value::from).collect()));
        let timing = self.timing.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
        root.insert("timing".into(), Value::Object(timing));
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        let mut summary = Map::new();
        summary.insert("checks".into(), self.checks.len().into());
        summary.insert("failed".into(), failed.into());
        summary.insert("pass".into(), self.all_pass().into());
        summary.insert("exit_code".into(), self.exit_code().into());
        root.insert("summary".into(), Value::Object(summary));
        Value::Object(root)
    }

    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        write_canonical(&self.to_value(), 0, &mut out);
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Report, CliError> {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::ReportVersion(format!("unreadable report: {e}")))?;
        if v.get("schema").and_then(Value::as_str) != Some(REPORT_SCHEMA) {
            return Err(CliError::ReportVersion("missing report schema tag".into()));
        }
        match v.get("schema_version").and_then(Value::as_u64) {
            Some(REPORT_VERSION) => {}
            other => return Err(CliError::ReportVersion(format!("unsupported schema version {other:?}"))),
        }
        let arr = |k: &str| {
            v.get(k)
                .and_then(Value::as_array)
                .ok_or_else(|| CliError::ReportVersion(format!("report without {k:?}")))
        };
        let checks = arr("checks")?.iter().map(Check::from_value).collect::<Result<Vec<_>, _>>()?;
        let stages = arr("stages")?
            .iter()
            .map(|s| {
                let name = s.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
                let status = s
                    .get("status")
                    .and_then(Value::as_str)
                    .and_then(StageStatus::parse)
                    .ok_or_else(|| CliError::ReportVersion(format!("stage {name:?} has no valid status")))?;
                let error = match s.get("error") {
                    None => None,
                    Some(e) => {
                        let class = e
                            .get("class")
                            .and_then(Value::as_str)
                            .and_then(FailureClass::parse)
                            .ok_or_else(|| CliError::ReportVersion("stage error without class".into()))?;
                        let msg = e.get("message").and_then(Value::as_str).unwrap_or_default().to_string();
                        Some((class, msg))
                    }
                };
                let certificates = s.get("certificates").cloned().unwrap_or(Value::Null);
                Ok(StageRecord { name, status, error, certificates })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let warnings = arr("warnings")?.iter().filter_map(|w| w.as_str().map(String::from)).collect();
        let timing = v
            .get("timing")
            .and_then(Value::as_object)
            .map(|m| m.iter().filter_map(|(k, x)| read_num(x).ok().map(|f| (k.clone(), f))).collect())
            .unwrap_or_default();
        Ok(Report {
            scenario: v.get("scenario").cloned().unwrap_or(Value::Null),
            stamp: v.get("stamp").cloned().unwrap_or(Value::Null),
            stages,
            checks,
            warnings,
            timing,
        })
    }
}

/// Outcome of re-evaluating a stored report.
#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    /// Checks whose stored flag disagrees with the re-evaluated one.
    pub mismatched: Vec<String>,
    pub failed: Vec<String>,
    pub exit_code: i32,
}

pub fn verify_text(text: &str) -> Result<Verification, CliError> {
    let mut report = Report::from_text(text)?;
    let mut mismatched = Vec::new();
    for c in &mut report.checks {
        let now = c.relation.holds(c.measured, c.threshold);
        if now != c.pass {
            mismatched.push(c.id.clone());
            c.pass = now;
        }
    }
    let failed = report.checks.iter().filter(|c| !c.pass).map(|c| c.id.clone()).collect();
    let mut exit_code = report.exit_code();
    if exit_code == EXIT_OK && !mismatched.is_empty() {
        exit_code = EXIT_INVARIANT;
    }
    Ok(Verification { mismatched, failed, exit_code })
}

pub fn verify_report(path: &Path) -> Result<Verification, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    verify_text(&text)
}

/// JSON value for a float; non-finite values become strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else if x.is_nan() {
        Value::from("nan")
    } else if x > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

pub fn read_num(v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| CliError::ReportVersion("number out of range".into())),
        Value::String(s) => match s.as_str() {
            "nan" => Ok(f64::NAN),
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => Err(CliError::ReportVersion(format!("expected a number, found {s:?}"))),
        },
        _ => Err(CliError::ReportVersion("expected a number".into())),
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_string(s: &str, out: &mut String) {
    out.push_str(&serde_json::to_string(s).expect("strings serialize"));
}

/// Two-space indentation, keys in byte order, floats with 17 significant digits.
pub fn write_canonical(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize, out: &mut String| out.push_str(&" ".repeat(n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(indent + 2, out);
                write_canonical(x, indent + 2, out);
                if i + 1 < a.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(indent + 2, out);
                write_string(k, out);
                out.push_str(": ");
                write_canonical(&m[k.as_str()], indent + 2, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            scenario: serde_json::json!({"dim": 64, "epsilon": 0.01}),
            stamp: serde_json::json!({"created": "fixed"}),
            stages: vec![StageRecord::skipped("oblique")],
            checks: vec![
                Check::new("decompose2", "r.rank", "rank(R) <= 1", 1.0, Relation::Le, 1.0),
                Check::new("decompose2", "t11.norm", "||T11|| < epsilon", 2.5e-4, Relation::Lt, 0.01),
            ],
            warnings: vec!["weak growth".into()],
            timing: BTreeMap::new(),
        }
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(1.0 / 3.0), "3.3333333333333331e-1");
        let text = sample().to_canonical();
        assert!(text.contains("\"measured\": 2.5000000000000001e-4"));
        assert!(text.contains("\"epsilon\": 1.0000000000000000e-2"));
    }

    #[test]
    fn round_trip_preserves_verdicts() {
        let r = sample();
        let text = r.to_canonical();
        let back = Report::from_text(&text).unwrap();
        assert_eq!(back.checks, r.checks);
        assert_eq!(back.to_canonical(), text);
        let v = verify_text(&text).unwrap();
        assert_eq!(v.exit_code, EXIT_OK);
        assert!(v.mismatched.is_empty());
    }

    #[test]
    fn edited_value_fails() {
        let text = sample().to_canonical().replace("2.5000000000000001e-4", "2.5000000000000001e-1");
        let v = verify_text(&text).unwrap();
        assert_eq!(v.exit_code, EXIT_INVARIANT);
        assert_eq!(v.mismatched, vec!["decompose2.t11.norm".to_string()]);
    }

    #[test]
    fn truncated_or_foreign_reports() {
        let text = sample().to_canonical();
        assert!(matches!(verify_text(&text[..text.len() / 2]), Err(CliError::ReportVersion(_))));
        let other = text.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(verify_text(&other), Err(CliError::ReportVersion(_))));
    }

    #[test]
    fn non_finite_values() {
        assert_eq!(read_num(&num(f64::NEG_INFINITY)).unwrap(), f64::NEG_INFINITY);
        assert!(read_num(&num(f64::NAN)).unwrap().is_nan());
        assert!(!Relation::Le.holds(f64::NAN, 1.0));
    }
}
