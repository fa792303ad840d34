use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use halfspace_cli::config::{load_config, ScenarioConfig, SpecEntry, Stage};
use halfspace_cli::{env_scale, run_scenario, verify_report, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "halfspace", version, about = "Half-space block forms of truncated operators with certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 2x2 block form, optionally with the oblique blocks.
    Decompose {
        #[arg(long)]
        oblique: bool,
        #[command(flatten)]
        common: Common,
    },
    /// 3x3 refinement of the 2x2 form.
    Refine3 {
        #[command(flatten)]
        common: Common,
    },
    /// Commutator certificates for seeded test operators.
    Derivation {
        #[arg(long)]
        x_seed: Option<u64>,
        #[arg(long)]
        x_count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Every stage listed in the scenario's pipeline.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Re-evaluates a stored report.
    Verify { report: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML), or one of the presets harmonic, shift,
    /// odd_harmonic, nilpotent_pair.
    #[arg(long)]
    spec: String,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    ideal: Option<String>,
    /// Report destination; stdout when neither this nor the scenario names one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    blocks_out: Option<PathBuf>,
    #[arg(long)]
    fixed_stamp: bool,
}

const PRESET_DIM: usize = 1024;
const PRESET_EPSILON: f64 = 0.01;

fn scenario(c: &Common) -> Result<ScenarioConfig, CliError> {
    let path = Path::new(&c.spec);
    let mut cfg = if path.is_file() {
        load_config(path)?
    } else {
        let entry = SpecEntry::Preset(c.spec.clone());
        entry.resolve().map_err(|_| CliError::Config(format!("--spec: {:?} is neither a file nor a preset", c.spec)))?;
        ScenarioConfig::new(entry, PRESET_DIM, PRESET_EPSILON)
    };
    if let Some(d) = c.dim {
        cfg.dim = d;
    }
    if let Some(e) = c.epsilon {
        cfg.epsilon = e;
    }
    if let Some(i) = &c.ideal {
        cfg.ideal = i.clone();
    }
    Ok(cfg)
}

fn execute(cfg: ScenarioConfig, c: &Common) -> Result<i32, CliError> {
    cfg.validate()?;
    let opts = RunOptions { fixed_stamp: c.fixed_stamp, tol_scale: env_scale()?, blocks_out: c.blocks_out.clone() };
    let report = run_scenario(&cfg, &opts)?;
    let text = report.to_canonical();
    match c.out.clone().or_else(|| cfg.output.report.clone()) {
        Some(p) => std::fs::write(&p, &text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.id.as_str()).collect();
    for s in &report.stages {
        if let Some((class, msg)) = &s.error {
            eprintln!("{} failed ({}): {msg}", s.name, class.name());
        }
    }
    eprintln!("{} checks, {} failed{}", report.checks.len(), failed.len(), if failed.is_empty() { String::new() } else { format!(": {}", failed.join(", ")) });
    Ok(report.exit_code())
}

fn main_inner(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Decompose { oblique, common } => {
            let mut cfg = scenario(&common)?;
            cfg.pipeline = if oblique { vec![Stage::Decompose2, Stage::Oblique] } else { vec![Stage::Decompose2] };
            execute(cfg, &common)
        }
        Command::Refine3 { common } => {
            let mut cfg = scenario(&common)?;
            cfg.pipeline = vec![Stage::Refine3];
            execute(cfg, &common)
        }
        Command::Derivation { x_seed, x_count, common } => {
            let mut cfg = scenario(&common)?;
            cfg.pipeline = vec![Stage::Derivation];
            if let Some(s) = x_seed {
                cfg.seeds.x_seed = s;
            }
            if let Some(n) = x_count {
                cfg.seeds.x_count = n;
            }
            execute(cfg, &common)
        }
        Command::Run { common } => {
            let cfg = scenario(&common)?;
            execute(cfg, &common)
        }
        Command::Verify { report } => {
            let v = verify_report(&report)?;
            for id in &v.mismatched {
                eprintln!("{id}: stored verdict disagrees with the stored measurement");
            }
            for id in &v.failed {
                eprintln!("{id}: fails");
            }
            eprintln!("exit {}", v.exit_code);
            Ok(v.exit_code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; 2 is reserved for failed invariants.
            return ExitCode::from(if e.use_stderr() { halfspace_cli::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let code = match main_inner(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
