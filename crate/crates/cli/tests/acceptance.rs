//! Acceptance gate: one pass/fail line per criterion, every verdict taken
//! from the independent checker or recomputed here from raw matrices.
//! Runs without the test harness so the lines are never captured.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use halfspace_cli::checker::{check_decompose, check_derivation, check_oblique, check_refine, Tolerances};
use halfspace_cli::Check;
use halfspace_core::halfspace::{decompose, equivalence_replace, oblique_form, EngineSettings, EquivalenceMode, HalfSpaceDecomposition2x2, Outcome};
use halfspace_core::opcore::dense::{max_abs, singular_values};
use halfspace_core::refine::{derivation_certificate, random_test_operator, refine_3x3};
use halfspace_core::{CaseVariant, IdealSpec, Mat, OperatorSpec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn settings(eps: f64) -> EngineSettings {
    EngineSettings::new(IdealSpec::trace(), eps)
}

fn decomposed(spec: &OperatorSpec, n: usize, s: &EngineSettings) -> Result<HalfSpaceDecomposition2x2, String> {
    match decompose(spec, n, s).map_err(|e| e.to_string())? {
        Outcome::Decomposed(d) => Ok(*d),
        Outcome::Deferred(t) => Err(format!("deferred: {}", t.variant.name())),
    }
}

fn find<'a>(checks: &'a [Check], id: &str) -> Result<&'a Check, String> {
    checks.iter().find(|c| c.id == id).ok_or_else(|| format!("no check {id}"))
}

/// Requires the named checks to exist and pass; every other check must pass too.
fn require(checks: &[Check], ids: &[&str]) -> Result<(), String> {
    for id in ids {
        let c = find(checks, id)?;
        if !c.pass {
            return Err(format!("{id}: measured {:e} vs {:e}", c.measured, c.threshold));
        }
    }
    match checks.iter().find(|c| !c.pass) {
        Some(c) => Err(format!("{}: measured {:e} vs {:e}", c.id, c.measured, c.threshold)),
        None => Ok(()),
    }
}

fn criterion_1() -> Verdict {
    let mut s = settings(1e-2);
    s.approach_count = Some(20);
    let start = Instant::now();
    let d = decomposed(&OperatorSpec::harmonic(), 1024, &s)?;
    let checks = check_decompose(&d, &Tolerances::default(), 0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let run = d.run.as_ref().ok_or("no Case 1 run")?;
    if run.seq.len() != 20 {
        return Err(format!("{} lambdas", run.seq.len()));
    }
    let c = find(&checks, "decompose2.near.residual")?;
    if !c.pass || c.threshold != 1e-9 {
        return Err(format!("residual/kappa {:e}", c.measured));
    }
    if secs >= 10.0 {
        return Err(format!("{secs:.1} s"));
    }
    Ok(format!("max residual/kappa {:.2e} over 20 lambdas, {secs:.2} s", c.measured))
}

fn criterion_2() -> Verdict {
    let s = settings(1e-2);
    let a = decomposed(&OperatorSpec::harmonic(), 4096, &s)?;
    let b = decomposed(&OperatorSpec::harmonic(), 4096, &s)?;
    let (ra, rb) = (a.run.as_ref().ok_or("no run")?, b.run.as_ref().ok_or("no run")?);
    let checks = check_decompose(&a, &Tolerances::default(), 0).map_err(|e| e.to_string())?;
    let pairing = find(&checks, "decompose2.gram.pairing")?;
    let size = ra.sys.len();
    if size < 12 {
        return Err(format!("system size {size}"));
    }
    if !pairing.pass {
        return Err(format!("pairing ratio {:e}", pairing.measured));
    }
    if ra.sys.selected != rb.sys.selected || ra.sys.lambdas != rb.sys.lambdas {
        return Err("selection differs between runs".into());
    }
    Ok(format!("size {size}, max |g_jk| 4^(j+k) = {:.2e}, deterministic", pairing.measured))
}

fn criterion_3() -> Verdict {
    let mut notes = Vec::new();
    for (name, spec) in [("harmonic", OperatorSpec::harmonic()), ("shift", OperatorSpec::shift())] {
        let d = decomposed(&spec, 4096, &settings(1e-2))?;
        let checks = check_decompose(&d, &Tolerances::default(), 7).map_err(|e| e.to_string())?;
        let ids = ["decompose2.riesz.lower", "decompose2.riesz.upper", "decompose2.riesz.draw_min", "decompose2.riesz.draw_max"];
        for id in ids {
            let c = find(&checks, id)?;
            if !c.pass {
                return Err(format!("{name} {id}: {:e}", c.measured));
            }
        }
        let lo = find(&checks, ids[0])?.measured;
        let hi = find(&checks, ids[1])?.measured;
        notes.push(format!("{name} [{lo:.6}, {hi:.6}]"));
    }
    Ok(format!("Gram spectra {} with 1000 draws inside", notes.join(", ")))
}

const FORM_IDS: [&str; 7] = [
    "decompose2.r.rank",
    "decompose2.t11.offdiag",
    "decompose2.t11.norm",
    "decompose2.r.norm",
    "decompose2.t11.trace",
    "decompose2.r.trace",
    "decompose2.block.action",
];

fn criterion_4() -> Verdict {
    let mut notes = Vec::new();
    for (name, spec) in [("harmonic", OperatorSpec::harmonic()), ("shift", OperatorSpec::shift())] {
        let d = decomposed(&spec, 4096, &settings(1e-2))?;
        let checks = check_decompose(&d, &Tolerances::default(), 0).map_err(|e| format!("{name}: {e}"))?;
        require(&checks, &FORM_IDS).map_err(|e| format!("{name}: {e}"))?;
        notes.push(format!("{name} |||R|||_1 {:.2e}", find(&checks, "decompose2.r.trace")?.measured));
    }
    Ok(notes.join(", "))
}

fn criterion_5() -> Verdict {
    let d = decomposed(&OperatorSpec::odd_harmonic(), 2048, &settings(1e-2))?;
    if d.case.variant != CaseVariant::Case2 {
        return Err(format!("odd_harmonic took {}", d.case.variant.name()));
    }
    let checks = check_decompose(&d, &Tolerances::default(), 0).map_err(|e| e.to_string())?;
    require(&checks, &FORM_IDS).map_err(|e| format!("case 2: {e}"))?;
    let z = decomposed(&OperatorSpec::nilpotent_pair(1.0), 256, &settings(1e-2))?;
    if z.case.variant != CaseVariant::Case3Nilpotent {
        return Err(format!("nilpotent_pair took {}", z.case.variant.name()));
    }
    let checks = check_decompose(&z, &Tolerances::default(), 0).map_err(|e| e.to_string())?;
    require(&checks, &["decompose2.t11.zero", "decompose2.r.zero"]).map_err(|e| format!("case 3: {e}"))?;
    Ok(format!("case 2 with beta = {}, case 3 with T11 = R = 0", d.case.beta))
}

fn criterion_6() -> Verdict {
    let mut notes = Vec::new();
    for (name, spec) in [("harmonic", OperatorSpec::harmonic()), ("shift", OperatorSpec::shift())] {
        let d = decomposed(&spec, 4096, &settings(1e-2))?;
        let o = oblique_form(&d).map_err(|e| e.to_string())?;
        let checks = check_oblique(&o, &d, &Tolerances::default(), 0).map_err(|e| e.to_string())?;
        require(&checks, &["oblique.e.idempotent", "oblique.r_hat.rank", "oblique.spectrum"]).map_err(|e| format!("{name}: {e}"))?;
        for id in ["oblique.e.idempotent", "oblique.spectrum"] {
            if find(&checks, id)?.threshold != 1e-8 {
                return Err(format!("{id} threshold drifted"));
            }
        }
        notes.push(format!("{name} idempotency {:.1e}", find(&checks, "oblique.e.idempotent")?.measured));
    }
    Ok(notes.join(", "))
}

/// `Q1 diag(s) Q2*` with prescribed singular values.
fn block_with_singular_values(s: &[f64], rng: &mut ChaCha8Rng) -> Mat {
    let n = s.len();
    let mut draw = || Mat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let q1 = draw().qr().q();
    let q2 = draw().qr().q();
    let d = Mat::from_diagonal(&s.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>().into());
    q1 * d * q2.adjoint()
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut diag_defect, mut idem): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let t = block_with_singular_values(&s, &mut rng);
        let sv = singular_values(&t).map_err(|e| e.to_string())?;
        if sv[n - 1] < 0.1 - 1e-12 {
            return Err(format!("sigma_min {}", sv[n - 1]));
        }
        let p = equivalence_replace(&t, EquivalenceMode::PsdDiagonal, None).map_err(|e| e.to_string())?;
        let b = &p.s1 * &t * &p.s2;
        for i in 0..n {
            for j in 0..n {
                let z = b[(i, j)];
                let bad = if i == j { (-z.re).max(0.0).max(z.im.abs()) } else { z.norm() };
                diag_defect = diag_defect.max(bad);
            }
        }
        let q = equivalence_replace(&t, EquivalenceMode::Projection, None).map_err(|e| e.to_string())?;
        let e = &q.s1 * &t * &q.s2;
        idem = idem.max(max_abs(&(&e * &e - &e)));
    }
    if diag_defect > 1e-10 || idem > 1e-10 {
        return Err(format!("diagonal defect {diag_defect:e}, idempotency {idem:e}"));
    }
    Ok(format!("50 blocks: diagonal defect {diag_defect:.1e}, idempotency {idem:.1e}"))
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let s = settings(1e-2);
    let d = decomposed(&OperatorSpec::harmonic(), 4096, &s)?;
    let f = refine_3x3(d, &s).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let checks = check_refine(&f, &Tolerances::default(), 0).map_err(|e| e.to_string())?;
    require(
        &checks,
        &[
            "refine3.r21.rank",
            "refine3.r31.rank",
            "refine3.r32.rank",
            "refine3.t11.offdiag",
            "refine3.t33.offdiag",
            "refine3.t11.norm",
            "refine3.t33.norm",
            "refine3.t11.trace",
            "refine3.t33.trace",
            "refine3.reassembly",
        ],
    )?;
    if secs >= 60.0 {
        return Err(format!("{secs:.1} s"));
    }
    Ok(format!("dims {:?}, reassembly {:.1e}, {secs:.1} s", f.certs.dims, find(&checks, "refine3.reassembly")?.measured))
}

fn criterion_9() -> Verdict {
    let s = settings(0.1);
    let d = decomposed(&OperatorSpec::harmonic(), 256, &s)?;
    let f = refine_3x3(d, &s).map_err(|e| e.to_string())?;
    let seeds = 0..100u64;
    let certs = seeds.clone().map(|k| derivation_certificate(&f, &random_test_operator(256, k))).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let checks = check_derivation(&f, seeds, &certs, &Tolerances::default()).map_err(|e| e.to_string())?;
    require(&checks, &["derivation.split", "derivation.f.rank", "derivation.a.trace", "derivation.interlacing"])?;
    if find(&checks, "derivation.draws")?.measured != 100.0 {
        return Err("not 100 draws".into());
    }
    Ok(format!(
        "100 X: split {:.1e}, rank F <= {}, trace excess {:.1e}",
        find(&checks, "derivation.split")?.measured,
        find(&checks, "derivation.f.rank")?.measured,
        find(&checks, "derivation.a.trace")?.measured
    ))
}

fn criterion_10() -> Verdict {
    let s = settings(0.05);
    let mut prev: Option<([f64; 4], usize, usize)> = None;
    let mut notes = Vec::new();
    for n in [512, 1024, 2048, 4096] {
        let d = decomposed(&OperatorSpec::harmonic(), n, &s)?;
        let t = singular_values(&d.blocks.t11).map_err(|e| e.to_string())?;
        let r = singular_values(&d.blocks.r).map_err(|e| e.to_string())?;
        let vals = [t[0], r.first().copied().unwrap_or(0.0), t.iter().sum(), r.iter().sum()];
        let (m, mc) = (d.blocks.m_set.len(), d.blocks.mc_set.len());
        if let Some((pv, pm, pmc)) = prev {
            if vals.iter().zip(&pv).any(|(a, b)| a > b) {
                return Err(format!("N = {n}: certificate values {vals:?} exceed {pv:?}"));
            }
            if m <= pm || mc <= pmc {
                return Err(format!("N = {n}: dims ({m}, {mc}) after ({pm}, {pmc})"));
            }
        }
        notes.push(format!("{n}:{m}"));
        prev = Some((vals, m, mc));
    }
    Ok(format!("non-increasing norms, dim M {}", notes.join(" ")))
}

fn criterion_11() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_11");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let cfg = dir.join("scenario.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\nspec = \"harmonic\"\ndim = 256\nepsilon = 0.1\npipeline = [\"oblique\", \"derivation\"]\n\n[seeds]\nx_seed = 3\nx_count = 5\n",
    )
    .map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_halfspace");
    let mut texts = Vec::new();
    for k in 0..2 {
        let out = dir.join(format!("report{k}.json"));
        let status = Command::new(bin)
            .args(["run", "--spec"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .arg("--fixed-stamp")
            .env_remove("HALFSPACE_TOL_SCALE")
            .status()
            .map_err(|e| e.to_string())?;
        if status.code() != Some(0) {
            return Err(format!("run {k} exited {status}"));
        }
        texts.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    if texts[0] != texts[1] {
        return Err("reports differ".into());
    }
    let status = Command::new(bin).arg("verify").arg(dir.join("report0.json")).status().map_err(|e| e.to_string())?;
    if status.code() != Some(0) {
        return Err(format!("verify exited {status}"));
    }
    Ok(format!("two runs byte-identical ({} bytes), verify exit 0", texts[0].len()))
}

fn main() {
    let criteria: [(usize, fn() -> Verdict); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failed = Vec::new();
    for (k, f) in criteria {
        match f() {
            Ok(msg) => println!("criterion {k:>2}: PASS  {msg}"),
            Err(msg) => {
                println!("criterion {k:>2}: FAIL  {msg}");
                failed.push(k);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
