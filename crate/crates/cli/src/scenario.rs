//! Runs the configured stages, records pipeline values and the checker's
//! verdicts, and writes the CSV dumps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use halfspace_core::halfspace::{decompose, oblique_form, EngineSettings, HalfSpaceDecomposition2x2, Outcome};
use halfspace_core::opcore::csv::write_csv;
use halfspace_core::refine::{derivation_certificate, random_test_operator, refine_3x3, BlockForm3x3};
use halfspace_core::{Error, ErrorClass, Mat, C64};
use serde_json::{Map, Value};

use crate::checker::{check_decompose, check_derivation, check_oblique, check_refine, Tolerances};
use crate::config::{ScenarioConfig, Stage};
use crate::report::{num, Check, FailureClass, Report, StageRecord, StageStatus};
use crate::CliError;

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Replaces the creation time and drops timings so reruns are byte-identical.
    pub fixed_stamp: bool,
    pub tol_scale: f64,
    pub blocks_out: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { fixed_stamp: false, tol_scale: 1.0, blocks_out: None }
    }
}

fn obj(pairs: Vec<(&str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

fn cnum(z: C64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn idx(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|&x| x.into()).collect())
}

fn class(e: &Error) -> FailureClass {
    match e.class() {
        ErrorClass::Config => FailureClass::Config,
        ErrorClass::Numerical => FailureClass::Numerical,
        ErrorClass::Invariant => FailureClass::Invariant,
    }
}

fn failed(name: &str, e: &Error) -> StageRecord {
    StageRecord {
        name: name.into(),
        status: StageStatus::Failed,
        error: Some((class(e), format!("{name}: {e}"))),
        certificates: Value::Object(Map::new()),
    }
}

fn ok(name: &str, certificates: Value) -> StageRecord {
    StageRecord { name: name.into(), status: StageStatus::Ok, error: None, certificates }
}

fn decompose_values(d: &HalfSpaceDecomposition2x2) -> Value {
    let c = &d.certs;
    let mut pairs = vec![
        ("case", obj(vec![("variant", d.case.variant.name().into()), ("beta", cnum(d.case.beta))])),
        ("k", d.k.into()),
        ("m_set", idx(&d.blocks.m_set)),
        (
            "blocks",
            obj(vec![
                ("t11_norm", num(c.t11_norm)),
                ("t11_ideal", num(c.t11_ideal)),
                ("t11_trace", num(c.t11_trace)),
                ("t11_offdiag", num(c.t11_offdiag)),
                ("r_norm", num(c.r_norm)),
                ("r_ideal", num(c.r_ideal)),
                ("r_trace", num(c.r_trace)),
                ("r_rank", c.r_rank.into()),
                ("r_singular", nums(&c.r_singular)),
                ("r_off_direction", num(c.r_off_direction)),
                ("block_action", num(c.block_action)),
                ("dim_m", c.dim_m.into()),
                ("dim_mc", c.dim_mc.into()),
                ("t12_square", c.t12_square.into()),
                ("op_norm", num(c.op_norm)),
            ]),
        ),
    ];
    if let Some(run) = &d.run {
        let a = &run.approach;
        let seq = &run.seq;
        let worst = seq.residuals.iter().zip(&seq.kappas).map(|(r, k)| r / k.max(1.0)).fold(0.0, f64::max);
        pairs.push((
            "approach",
            obj(vec![
                ("kind", format!("{:?}", a.kind).to_lowercase().into()),
                ("count", a.len().into()),
                ("first", cnum(a.lambdas.first().copied().unwrap_or_default())),
                ("last", cnum(a.lambdas.last().copied().unwrap_or_default())),
                ("membership_budget", num(a.membership.budget)),
                ("membership_norm", num(a.membership.norm_value)),
            ]),
        ));
        pairs.push(("probe", obj(vec![("label", seq.probe_label.clone().into()), ("candidates", run.probe_scores.len().into())])));
        pairs.push(("near", obj(vec![("max_residual_over_kappa", num(worst)), ("max_kappa", num(seq.kappas.iter().copied().fold(0.0, f64::max)))])));
        pairs.push(("growth", obj(vec![("factor", num(run.growth.factor)), ("monotone_from", run.growth.monotone_from.into())])));
        pairs.push((
            "gram",
            obj(vec![
                ("size", run.sys.len().into()),
                ("target", run.target.into()),
                ("pairing_ratio", num(run.sys.pairing_ratio())),
                ("double_double", run.sys.dd.into()),
                ("selected", Value::Array(run.sys.selected.iter().map(|s| s.map_or(Value::Null, |n| n.into())).collect())),
            ]),
        ));
        let r = &run.riesz;
        pairs.push((
            "riesz",
            obj(vec![
                ("lower", num(r.lower)),
                ("upper", num(r.upper)),
                ("draw_min", num(r.draw_min)),
                ("draw_max", num(r.draw_max)),
                ("draws", r.draws.into()),
            ]),
        ));
        pairs.push((
            "core",
            obj(vec![
                ("size", run.core.size().into()),
                ("off_pattern", num(run.core.off_pattern)),
                ("model_defect", num(run.core.model_defect)),
                ("beta_defect", num(run.core.beta_defect)),
            ]),
        ));
        let h = &run.half;
        pairs.push((
            "halfspace",
            obj(vec![("k", h.k.into()), ("lambda_sup", num(h.lambda_sup)), ("lambda_ideal", num(h.lambda_ideal)), ("alpha_l2", num(h.alpha_l2))]),
        ));
    }
    let s = &d.similarity;
    pairs.push((
        "similarity",
        obj(vec![("sigma_min", num(s.sigma_min)), ("sigma_max", num(s.sigma_max)), ("inverse_defect", num(s.inverse_defect)), ("map_defect", num(s.map_defect))]),
    ));
    obj(pairs)
}

fn refine_values(f: &BlockForm3x3) -> Value {
    let c = &f.certs;
    obj(vec![
        ("dims", idx(&c.dims)),
        ("ranks", idx(&[c.r21_rank, c.r31_rank, c.r32_rank])),
        ("r21_singular", nums(&c.r21_singular)),
        ("r31_singular", nums(&c.r31_singular)),
        ("r32_singular", nums(&c.r32_singular)),
        ("t11_norm", num(c.t11_norm)),
        ("t11_ideal", num(c.t11_ideal)),
        ("t11_trace", num(c.t11_trace)),
        ("t11_offdiag", num(c.t11_offdiag)),
        ("t33_norm", num(c.t33_norm)),
        ("t33_ideal", num(c.t33_ideal)),
        ("t33_trace", num(c.t33_trace)),
        ("t33_offdiag", num(c.t33_offdiag)),
        ("n1_tail", num(c.n1_tail)),
        ("n2_tail", num(c.n2_tail)),
        ("reassembly", num(c.reassembly)),
        ("adjoint_roundtrip", num(c.adjoint_roundtrip)),
        ("n1", idx(&f.n1)),
        ("k1", idx(&f.k1)),
        ("inner_case", f.inner.case.variant.name().into()),
    ])
}

struct Dumper {
    dir: Option<PathBuf>,
}

impl Dumper {
    fn new(dir: Option<PathBuf>) -> Result<Dumper, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
        }
        Ok(Dumper { dir })
    }

    fn write(&self, name: &str, m: &Mat) -> Result<(), CliError> {
        if let Some(d) = &self.dir {
            let path: PathBuf = Path::new(d).join(format!("{name}.csv"));
            write_csv(&path, m).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

struct Run {
    stages: Vec<StageRecord>,
    checks: Vec<Check>,
    warnings: Vec<String>,
    timing: BTreeMap<String, f64>,
}

impl Run {
    fn checked(&mut self, name: &str, got: halfspace_core::Result<Vec<Check>>) {
        match got {
            Ok(c) => self.checks.extend(c),
            Err(e) => self.stages.push(failed(&format!("{name}.checker"), &e)),
        }
    }
}

fn scenario_echo(cfg: &ScenarioConfig, tol: &Tolerances, scale: f64) -> Result<Value, CliError> {
    let mut echo = cfg.clone();
    // Output locations do not change the result.
    echo.output = Default::default();
    let mut v = serde_json::to_value(&echo).map_err(|e| CliError::Config(e.to_string()))?;
    if let Value::Object(m) = &mut v {
        m.insert("stages".into(), Value::Array(cfg.stages().iter().map(|s| s.name().into()).collect()));
        m.insert("tolerance_scale".into(), num(scale));
        m.insert(
            "effective_tolerances".into(),
            obj(vec![
                ("rank", num(tol.rank)),
                ("offdiag", num(tol.offdiag)),
                ("block_action", num(tol.block_action)),
                ("residual", num(tol.residual)),
                ("idempotency", num(tol.idempotency)),
                ("spectrum", num(tol.spectrum)),
                ("reassembly", num(tol.reassembly)),
                ("split", num(tol.split)),
                ("bound", num(tol.bound)),
                ("pattern", num(tol.pattern)),
                ("roundtrip", num(tol.roundtrip)),
                ("riesz_slack", num(tol.riesz_slack)),
                ("agreement", num(tol.agreement)),
            ]),
        );
    }
    Ok(v)
}

fn stamp(fixed: bool) -> Value {
    let created: Value = if fixed {
        "fixed".into()
    } else {
        let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        secs.into()
    };
    obj(vec![
        ("tool", "halfspace".into()),
        ("version", env!("CARGO_PKG_VERSION").into()),
        ("os", std::env::consts::OS.into()),
        ("arch", std::env::consts::ARCH.into()),
        ("created", created),
    ])
}

/// Executes the configured stages. Stage failures land in the report; only
/// configuration and I/O problems are returned as errors.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Report, CliError> {
    cfg.validate()?;
    let tol = Tolerances::from_overrides(&cfg.tolerances, opts.tol_scale);
    let spec = cfg.operator()?;
    let mut settings = EngineSettings::new(cfg.ideal_spec()?, cfg.epsilon);
    settings.seed = cfg.seeds.engine;
    let stages = cfg.stages();
    let dump = Dumper::new(opts.blocks_out.clone().or_else(|| cfg.output.blocks_dir.clone()))?;
    let seed = cfg.seeds.engine;
    let mut run = Run { stages: Vec::new(), checks: Vec::new(), warnings: Vec::new(), timing: BTreeMap::new() };
    let mut clock = Instant::now();
    let mut lap = |run: &mut Run, name: &str| {
        run.timing.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let dec = match decompose(&spec, cfg.dim, &settings) {
        Err(e) => {
            run.stages.push(failed("decompose2", &e));
            None
        }
        Ok(Outcome::Deferred(tag)) => {
            run.stages.push(StageRecord {
                name: "decompose2".into(),
                status: StageStatus::Deferred,
                error: None,
                certificates: obj(vec![("case", obj(vec![("variant", tag.variant.name().into()), ("beta", cnum(tag.beta))]))]),
            });
            None
        }
        Ok(Outcome::Decomposed(d)) => {
            run.stages.push(ok("decompose2", decompose_values(&d)));
            run.warnings.extend(d.warnings.iter().map(|w| format!("decompose2: {w}")));
            lap(&mut run, "decompose2");
            run.checked("decompose2", check_decompose(&d, &tol, seed));
            dump.write("t11", &d.blocks.t11)?;
            dump.write("t12", &d.blocks.t12)?;
            dump.write("r", &d.blocks.r)?;
            Some(d)
        }
    };
    lap(&mut run, "decompose2.checker");

    if stages.contains(&Stage::Oblique) {
        match &dec {
            None => run.stages.push(StageRecord::skipped("oblique")),
            Some(d) => match oblique_form(d) {
                Err(e) => run.stages.push(failed("oblique", &e)),
                Ok(o) => {
                    let v = obj(vec![
                        ("idempotency", num(o.idempotency)),
                        ("r_hat_rank", o.r_hat_rank.into()),
                        ("r_hat_singular", nums(&o.r_hat_singular)),
                        ("spectrum_distance", num(o.spectrum_distance)),
                    ]);
                    run.stages.push(ok("oblique", v));
                    lap(&mut run, "oblique");
                    run.checked("oblique", check_oblique(&o, d, &tol, seed));
                    dump.write("t11_hat", &o.t11_hat)?;
                    dump.write("r_hat", &o.r_hat)?;
                    dump.write("t12_hat", &o.t12_hat)?;
                    lap(&mut run, "oblique.checker");
                }
            },
        }
    }

    let mut form = None;
    if stages.contains(&Stage::Refine3) {
        match dec {
            None => run.stages.push(StageRecord::skipped("refine3")),
            Some(d) => match refine_3x3(*d, &settings) {
                Err(e) => run.stages.push(failed("refine3", &e)),
                Ok(f) => {
                    run.stages.push(ok("refine3", refine_values(&f)));
                    run.warnings.extend(f.warnings.iter().map(|w| format!("refine3: {w}")));
                    lap(&mut run, "refine3");
                    run.checked("refine3", check_refine(&f, &tol, seed));
                    for (name, m) in [
                        ("n1_t11", &f.t11),
                        ("n1_t12", &f.t12),
                        ("n1_t13", &f.t13),
                        ("k2_r21", &f.r21),
                        ("k2_t23", &f.t23),
                        ("k1_r31", &f.r31),
                        ("k1_r32", &f.r32),
                        ("k1_t33", &f.t33),
                    ] {
                        dump.write(name, m)?;
                    }
                    lap(&mut run, "refine3.checker");
                    form = Some(f);
                }
            },
        }
    }

    if stages.contains(&Stage::Derivation) {
        match &form {
            None => run.stages.push(StageRecord::skipped("derivation")),
            Some(f) => {
                let seeds = cfg.seeds.x_seed..cfg.seeds.x_seed + cfg.seeds.x_count as u64;
                let certs: halfspace_core::Result<Vec<_>> =
                    seeds.clone().map(|s| derivation_certificate(f, &random_test_operator(f.dim(), s))).collect();
                match certs {
                    Err(e) => run.stages.push(failed("derivation", &e)),
                    Ok(certs) => {
                        let max = |g: &dyn Fn(&halfspace_core::refine::DerivationCertificate) -> f64| {
                            certs.iter().map(g).fold(f64::NEG_INFINITY, f64::max)
                        };
                        let v = obj(vec![
                            ("x_seed", cfg.seeds.x_seed.into()),
                            ("x_count", cfg.seeds.x_count.into()),
                            ("passed", certs.iter().filter(|c| c.pass).count().into()),
                            ("max_split_residual", num(max(&|c| c.split_residual))),
                            ("max_direct_residual", num(max(&|c| c.direct_residual))),
                            ("max_f_rank", num(max(&|c| c.f_rank as f64))),
                            ("max_trace_excess", num(max(&|c| c.a_trace - c.bound))),
                            ("max_interlacing_gap", num(max(&|c| c.interlacing_gap))),
                            ("max_c31_trace", num(max(&|c| c.c31_trace))),
                            ("max_c31_hilbert_schmidt", num(max(&|c| c.c31_hilbert_schmidt))),
                        ]);
                        run.stages.push(ok("derivation", v));
                        lap(&mut run, "derivation");
                        run.checked("derivation", check_derivation(f, seeds, &certs, &tol));
                        lap(&mut run, "derivation.checker");
                    }
                }
            }
        }
    }

    Ok(Report {
        scenario: scenario_echo(cfg, &tol, opts.tol_scale)?,
        stamp: stamp(opts.fixed_stamp),
        stages: run.stages,
        checks: run.checks,
        warnings: run.warnings,
        timing: if opts.fixed_stamp { BTreeMap::new() } else { run.timing },
    })
}
