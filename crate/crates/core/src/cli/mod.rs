//! The `run`, `validate` and `report` commands behind the binary.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    Config, ExperimentConfig, LawConfig, Plan, ReferenceConfig, Validated, EXPERIMENT_KINDS, SCHEMA_VERSION,
};

use crate::error::{config_err, Error, Result};
use crate::experiments::{
    berry_esseen, census_experiment, corrector_sublinearity, ergodicity_rate, homog_error_elliptic,
    homog_error_parabolic, mu_decay, Check, ExperimentReport,
};

pub const TABLE_FILE: &str = "table.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.txt";

/// Exit status of `run`: success, acceptance failure or error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ACCEPTANCE: i32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub seed: u64,
    pub config_digest: String,
    pub fit: Option<FitSummary>,
    pub ladder: Vec<(f64, f64)>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub warnings: Vec<String>,
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub schema_version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_seconds: f64,
    /// SHA-256 of each artifact.
    pub artifacts: Vec<(String, String)>,
    /// The parsed configuration, enough to repeat the run.
    pub config: Config,
}

/// What `run` produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
    pub exit_code: i32,
}

/// Run directory: the override, else `output_dir` from the config, else
/// `runs/<kind>-<digest prefix>`, both relative to the config file.
pub fn run_dir(cfg: &Config, config_path: &Path, out: Option<&Path>) -> PathBuf {
    if let Some(o) = out {
        return o.to_path_buf();
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    match &cfg.output_dir {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => base.join(p),
        None => base.join("runs").join(format!("{}-{}", cfg.kind(), &cfg.digest()[..12])),
    }
}

/// Run a validated configuration on a pool of `workers` threads.
pub fn execute(v: &Validated) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(v.config.workers)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &v.plan {
        Plan::HomogElliptic(s) => homog_error_elliptic(s),
        Plan::HomogParabolic(s) => homog_error_parabolic(s),
        Plan::Corrector(s) => corrector_sublinearity(s),
        Plan::Ergodicity(s) => ergodicity_rate(s),
        Plan::BerryEsseen(s) => berry_esseen(s),
        Plan::Census(s) => census_experiment(s),
        Plan::MuDecay(s) => mu_decay(s),
    })
}

fn summarize(cfg: &Config, rep: &ExperimentReport) -> Summary {
    Summary {
        kind: rep.kind.clone(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        fit: rep.fit.as_ref().map(|f| FitSummary { slope: f.slope, intercept: f.intercept, r2: f.r2 }),
        ladder: rep.ladder.clone(),
        checks: rep.checks.clone(),
        passed: rep.passed(),
        warnings: rep.warnings.clone(),
        extra: rep.extra.clone(),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `run <config>`: validate, execute and write the table, summary, manifest
/// and rendered report under the run directory.
pub fn run(config_path: &Path, out: Option<&Path>) -> Result<RunOutcome> {
    let start = Instant::now();
    let cfg = Config::load(config_path)?;
    let v = cfg.validate()?;
    let rep = execute(&v)?;
    let dir = run_dir(&cfg, config_path, out);
    fs::create_dir_all(&dir)?;
    let mut table = Vec::new();
    rep.table.write_csv(&mut table)?;
    let summary = summarize(&cfg, &rep);
    let mut summary_bytes = serde_json::to_vec_pretty(&summary)?;
    summary_bytes.push(b'\n');
    fs::write(dir.join(TABLE_FILE), &table)?;
    fs::write(dir.join(SUMMARY_FILE), &summary_bytes)?;
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        config_digest: cfg.digest(),
        seed: cfg.seed,
        workers: cfg.workers,
        wall_seconds: start.elapsed().as_secs_f64(),
        artifacts: vec![(TABLE_FILE.into(), sha256_hex(&table)), (SUMMARY_FILE.into(), sha256_hex(&summary_bytes))],
        config: cfg.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(dir.join(REPORT_FILE), render(&summary))?;
    let exit_code = if summary.passed { EXIT_OK } else { EXIT_ACCEPTANCE };
    Ok(RunOutcome { dir, summary, exit_code })
}

/// `validate <config>`: schema and invariant checks, no computation.
pub fn validate(config_path: &Path) -> Result<String> {
    let cfg = Config::load(config_path)?;
    cfg.validate()?;
    Ok("ok".into())
}

/// `report <run-dir>`: re-render the summary of a finished run.
pub fn report(dir: &Path) -> Result<String> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let summary: Summary = serde_json::from_str(&text)?;
    let out = render(&summary);
    fs::write(dir.join(REPORT_FILE), &out)?;
    Ok(out)
}

pub fn render(s: &Summary) -> String {
    let mut out =
        format!("{} (seed {}, config {})\n", s.kind, s.seed, &s.config_digest[..12.min(s.config_digest.len())]);
    for (x, y) in &s.ladder {
        out.push_str(&format!("  {x:>10}  {y:.6e}\n"));
    }
    match &s.fit {
        Some(f) => out.push_str(&format!("fit: slope {:.4}, intercept {:.4}, r2 {:.4}\n", f.slope, f.intercept, f.r2)),
        None => out.push_str("fit: none\n"),
    }
    for c in &s.checks {
        out.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    for w in &s.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out.push_str(if s.passed { "result: pass\n" } else { "result: fail\n" });
    out
}
