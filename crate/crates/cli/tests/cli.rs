use std::path::PathBuf;
use std::process::{Command, Output};

use halfspace_core::opcore::csv::from_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_halfspace"));
    c.env_remove("HALFSPACE_TOL_SCALE");
    c
}

fn tmp(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn config_errors_exit_3() {
    let d = tmp("config");
    let cfg = d.join("bad.toml");
    std::fs::write(&cfg, "schema_version = 1\nspec = \"harmonic\"\ndim = 256\nepsilon = 1.5\n").unwrap();
    let o = bin().args(["run", "--spec"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));

    let o = bin().args(["decompose", "--spec", "torus"]).output().unwrap();
    assert_eq!(code(&o), 3);
    let o = bin().args(["decompose"]).output().unwrap();
    assert_eq!(code(&o), 3);
    let o = bin().args(["decompose", "--spec", "harmonic", "--dim", "256", "--ideal", "schatten:0.5"]).output().unwrap();
    assert_eq!(code(&o), 3);
    let o = bin().args(["decompose", "--spec", "harmonic", "--dim", "256"]).env("HALFSPACE_TOL_SCALE", "zero").output().unwrap();
    assert_eq!(code(&o), 3);
}

#[test]
fn tolerance_scale_tightens_checks() {
    let o = bin().args(["decompose", "--spec", "harmonic", "--dim", "256"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let o = bin().args(["decompose", "--spec", "harmonic", "--dim", "256"]).env("HALFSPACE_TOL_SCALE", "1e-40").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_stage_is_reported() {
    let d = tmp("stage");
    let out = d.join("shift.json");
    let o = bin().args(["refine3", "--spec", "shift", "--dim", "256", "--fixed-stamp", "--out"]).arg(&out).output().unwrap();
    assert_eq!(code(&o), 2);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"status\": \"failed\""));
    assert!(text.contains("\"class\": \"invariant\""));
}

#[test]
fn edited_and_truncated_reports() {
    let d = tmp("verify");
    let out = d.join("report.json");
    let o = bin().args(["decompose", "--spec", "nilpotent_pair", "--dim", "128", "--fixed-stamp", "--out"]).arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"created\": \"fixed\""));
    assert_eq!(code(&bin().arg("verify").arg(&out).output().unwrap()), 0);

    // Raise the stored T11 = 0 measurement above its threshold.
    let at = text.find("\"id\": \"decompose2.t11.zero\"").unwrap();
    let m = at + text[at..].find("\"measured\": ").unwrap() + "\"measured\": ".len();
    let end = m + text[m..].find(',').unwrap();
    let edited = format!("{}1.0{}", &text[..m], &text[end..]);
    let path = d.join("edited.json");
    std::fs::write(&path, edited).unwrap();
    assert_eq!(code(&bin().arg("verify").arg(&path).output().unwrap()), 2);

    let path = d.join("truncated.json");
    std::fs::write(&path, &text[..text.len() / 3]).unwrap();
    assert_eq!(code(&bin().arg("verify").arg(&path).output().unwrap()), 3);
    assert_eq!(code(&bin().arg("verify").arg(d.join("missing.json")).output().unwrap()), 3);
}

#[test]
fn block_dumps_round_trip() {
    let d = tmp("blocks");
    let o = bin()
        .args(["decompose", "--spec", "harmonic", "--dim", "512", "--oblique", "--out"])
        .arg(d.join("r.json"))
        .arg("--blocks-out")
        .arg(&d)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let t11 = from_csv(&std::fs::read_to_string(d.join("t11.csv")).unwrap()).unwrap();
    let r = from_csv(&std::fs::read_to_string(d.join("r.csv")).unwrap()).unwrap();
    let hat = from_csv(&std::fs::read_to_string(d.join("t11_hat.csv")).unwrap()).unwrap();
    assert_eq!(t11.nrows(), t11.ncols());
    assert_eq!(r.ncols(), t11.ncols());
    assert_eq!(t11.nrows() + r.nrows(), 512);
    assert_eq!(hat.shape(), t11.shape());
}

#[test]
fn shipped_scenarios_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        halfspace_cli::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
}
