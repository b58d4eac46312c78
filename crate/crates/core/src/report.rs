//! CSV and JSON renderings of experiment results. Every file is written to a
//! temporary sibling first and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{sdwec_method, RunResult, SweepRow, TimingStudy};

pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const TIMING_FIT_CSV: &str = "timing_fit.csv";

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn diagnostics_file_name(dataset: &str, preset: &str, seed: u64) -> String {
    format!("diagnostics-{}-{}-{seed}.csv", sanitize(dataset), sanitize(preset))
}

/// One row per repetition and method, then one `mean` row per method.
/// Timings are left out so reruns produce identical bytes.
pub fn results_csv(result: &RunResult) -> String {
    let mut out = String::from("repetition,seed,method,accuracy,sparsity\n");
    let sparsity_of = |method: &str, sparsity: &std::collections::BTreeMap<String, f64>| {
        result
            .config
            .presets
            .iter()
            .find(|p| sdwec_method(&p.name) == method)
            .and_then(|p| sparsity.get(&p.name))
            .map(|v| v.to_string())
            .unwrap_or_default()
    };
    for rep in &result.repetitions {
        for (method, acc) in &rep.accuracy {
            let _ = writeln!(
                out,
                "{},{},{method},{acc},{}",
                rep.repetition,
                rep.seed,
                sparsity_of(method, &rep.sparsity)
            );
        }
    }
    for (method, acc) in &result.mean_accuracy {
        let _ = writeln!(out, "mean,,{method},{acc},{}", sparsity_of(method, &result.mean_sparsity));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda,beta,gamma,epsilon,mean_sparsity,mean_accuracy\n");
    for r in rows {
        let p = &r.params;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.lambda, p.beta, p.gamma, p.epsilon, r.mean_sparsity, r.mean_accuracy
        );
    }
    out
}

pub fn timing_csv(study: &TimingStudy) -> String {
    let mut out = String::from("m,l,seconds\n");
    for r in &study.rows {
        let _ = writeln!(out, "{},{},{}", r.m, r.l, r.seconds);
    }
    out
}

pub fn timing_fit_csv(study: &TimingStudy) -> String {
    let mut out = String::from("axis,fixed,slope,intercept,r_squared\n");
    for f in &study.fits {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.axis, f.fixed, f.fit.slope, f.fit.intercept, f.fit.r_squared
        );
    }
    out
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes results.json, results.csv and one diagnostics CSV per fit.
/// Returns the paths written.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let path = dir.join(RESULTS_JSON);
    write_atomic(&path, serde_json::to_string_pretty(result)?.as_bytes())?;
    written.push(path);
    let path = dir.join(RESULTS_CSV);
    write_atomic(&path, results_csv(result).as_bytes())?;
    written.push(path);
    for rep in &result.repetitions {
        for (preset, diag) in &rep.diagnostics {
            let path = dir.join(diagnostics_file_name(&result.dataset, preset, rep.seed));
            write_atomic(&path, diag.to_csv().as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(SWEEP_CSV);
    write_atomic(&path, sweep_csv(rows).as_bytes())?;
    Ok(path)
}

/// timing.csv, plus timing_fit.csv when any axis had two or more sizes.
pub fn write_timing(dir: &Path, study: &TimingStudy) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = vec![dir.join(TIMING_CSV)];
    write_atomic(&written[0], timing_csv(study).as_bytes())?;
    if !study.fits.is_empty() {
        let path = dir.join(TIMING_FIT_CSV);
        write_atomic(&path, timing_fit_csv(study).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
