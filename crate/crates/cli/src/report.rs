//! Run reports and their serialized forms (json, csv, plotdata).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::commands::CommandResults;

/// One complete run: scenario identity, the tolerance ledger, and the
/// per-command results. Deterministic given scenario + version (fixed seeds
/// and iteration orders; wall-clock timing goes to the log, not the report).
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub command: String,
    pub tool_version: String,
    pub tolerances: BTreeMap<String, f64>,
    /// Diagnostics that exceeded the --tol quality gate.
    pub tolerance_flags: Vec<String>,
    pub results: CommandResults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Plotdata,
}

/// Write the report in the requested format; returns the created paths.
/// Files are written atomically (temp + rename).
pub fn emit(report: &RunReport, format: Format, out_dir: &Path) -> Result<Vec<PathBuf>, String> {
    fs::create_dir_all(out_dir).map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
    let stem = format!("{}_{}", sanitize(&report.scenario), report.command);
    match format {
        Format::Json => {
            let path = out_dir.join(format!("{stem}.json"));
            let mut body = serde_json::to_string_pretty(report)
                .map_err(|e| format!("serialization failed: {e}"))?;
            body.push('\n');
            write_atomic(&path, body.as_bytes())?;
            Ok(vec![path])
        }
        Format::Csv => {
            let path = out_dir.join(format!("{stem}.csv"));
            let mut body = String::from("section,alpha,quantity,value,tolerance\n");
            for row in report.results.csv_rows() {
                body.push_str(&row);
                body.push('\n');
            }
            write_atomic(&path, body.as_bytes())?;
            Ok(vec![path])
        }
        Format::Plotdata => {
            let mut paths = vec![];
            for (suffix, header, series) in report.results.plots() {
                let path = out_dir.join(format!("{stem}_{suffix}.dat"));
                let mut body = format!("# {header}\n");
                for (x, y) in series {
                    body.push_str(&format!("{x:.17e} {y:.17e}\n"));
                }
                write_atomic(&path, body.as_bytes())?;
                paths.push(path);
            }
            Ok(paths)
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| format!("cannot write {}: {e}", tmp.display()))?;
        f.write_all(bytes)
            .map_err(|e| format!("cannot write {}: {e}", tmp.display()))?;
        f.sync_all().ok();
    }
    fs::rename(&tmp, path).map_err(|e| format!("cannot move into place {}: {e}", path.display()))
}

/// The fixed tolerance ledger recorded in every report.
pub fn tolerance_ledger(quad_tol: f64) -> BTreeMap<String, f64> {
    let mut ledger = BTreeMap::new();
    ledger.insert("quad_tol".into(), quad_tol);
    ledger.insert("root_rel_tol".into(), 1e-13);
    ledger.insert("norm_rel_tol".into(), 1e-8);
    ledger.insert("rigidity_diag_tol".into(), 1e-6);
    ledger.insert("mass_tol".into(), 1e-8);
    ledger
}
