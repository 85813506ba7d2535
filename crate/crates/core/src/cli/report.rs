//! Reports, plot data and run manifests.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::inference::{ParameterDiagnostics, PrevalenceSummary, SensitivityGrid};

use super::io::read_file;
use super::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        Ok(FileHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&read_file(path)?),
        })
    }
}

/// Record of one command invocation: what went in and what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub software_version: String,
    pub seed: Option<u64>,
    pub config: toml::Table,
    pub inputs: Vec<FileHash>,
    /// Output files by name within the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}-manifest.toml")
}

/// Hashes `outputs` (names inside `dir`) and writes the manifest there.
pub fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: &C,
    inputs: Vec<FileHash>,
    outputs: &[&str],
) -> Result<(), CliError> {
    let outputs = outputs
        .iter()
        .map(|name| {
            Ok(FileHash {
                path: name.to_string(),
                sha256: sha256_hex(&read_file(&dir.join(name))?),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let m = Manifest {
        command: command.to_string(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: toml::Table::try_from(config).map_err(|e| CliError::Usage(e.to_string()))?,
        inputs,
        outputs,
    };
    super::io::write_file(&dir.join(manifest_name(command)), to_toml(&m)?.as_bytes())
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Usage(format!("cannot serialize report: {e}")))
}

// ---------------------------------------------------------------------------
// Prevalence reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeReport {
    pub scope: String,
    pub mean: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
    pub adults: f64,
}

pub fn scope_reports(s: &PrevalenceSummary) -> Vec<ScopeReport> {
    let mut v = vec![ScopeReport {
        scope: "statewide".into(),
        mean: s.mean,
        hpd_lower: s.hpd.0,
        hpd_upper: s.hpd.1,
        adults: s.adults,
    }];
    v.extend(s.regions.iter().map(|r| ScopeReport {
        scope: r.region.clone(),
        mean: r.mean,
        hpd_lower: r.hpd.0,
        hpd_upper: r.hpd.1,
        adults: r.adults,
    }));
    v
}

fn write_rows(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn scope_fields(r: &ScopeReport) -> Vec<String> {
    vec![
        r.scope.clone(),
        r.mean.to_string(),
        r.hpd_lower.to_string(),
        r.hpd_upper.to_string(),
        r.adults.to_string(),
    ]
}

const SCOPE_HEADER: [&str; 5] = ["scope", "mean", "hpd_lower", "hpd_upper", "adults"];

/// Machine-readable prevalence table: statewide first, then regions.
pub fn summary_csv(s: &PrevalenceSummary) -> Vec<u8> {
    write_rows(&SCOPE_HEADER, scope_reports(s).iter().map(scope_fields))
}

pub fn sensitivity_csv(grid: &SensitivityGrid) -> Vec<u8> {
    let mut header = vec!["lambda"];
    header.extend(SCOPE_HEADER);
    write_rows(
        &header,
        grid.entries.iter().flat_map(|e| {
            scope_reports(&e.summary).into_iter().map(move |r| {
                let mut f = vec![e.lambda.to_string()];
                f.extend(scope_fields(&r));
                f
            })
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub name: String,
    pub mean: f64,
    pub ess: f64,
    /// Absent with a single chain.
    pub rhat: Option<f64>,
    pub converged: bool,
}

pub fn diagnostics_csv(d: &[DiagnosticRecord]) -> Vec<u8> {
    write_rows(
        &["parameter", "mean", "ess", "rhat", "converged"],
        d.iter().map(|r| {
            vec![
                r.name.clone(),
                r.mean.to_string(),
                r.ess.to_string(),
                r.rhat.map_or_else(|| "NA".to_string(), |x| x.to_string()),
                r.converged.to_string(),
            ]
        }),
    )
}

pub fn diagnostic_record(d: &ParameterDiagnostics, rhat_max: f64, ess_min: f64) -> DiagnosticRecord {
    DiagnosticRecord {
        name: d.name.clone(),
        mean: d.mean,
        ess: d.ess,
        rhat: d.rhat,
        converged: d.converged(rhat_max, ess_min),
    }
}

pub fn participant_probs_csv(ids: &[String], probs: &[f64]) -> Vec<u8> {
    write_rows(
        &["id", "probability"],
        ids.iter().zip(probs).map(|(id, p)| vec![id.clone(), p.to_string()]),
    )
}

// ---------------------------------------------------------------------------
// Sensitivity figure
// ---------------------------------------------------------------------------

/// Static SVG of the sweep: posterior mean and HPD bar per lambda.
pub fn sensitivity_svg(grid: &SensitivityGrid) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 30.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let lambdas: Vec<f64> = grid.entries.iter().map(|e| e.lambda).collect();
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (xmin, xmax) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let ytop = grid
        .entries
        .iter()
        .map(|e| e.summary.hpd.1 * 100.0)
        .fold(0.0, f64::max)
        .max(1e-6);
    let ymax = nice_ceiling(ytop * 1.1);
    let x = |l: f64| left + 0.05 * pw + 0.9 * pw * (l - xmin) / (xmax - xmin);
    let y = |p: f64| top + ph * (1.0 - p * 100.0 / ymax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = top + ph,
        r = left + pw
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{b}" stroke="black"/>"#, b = top + ph);
    for i in 0..=5 {
        let v = ymax * i as f64 / 5.0;
        let yy = y(v / 100.0);
        let _ = writeln!(
            s,
            r#"<line x1="{a:.2}" y1="{yy:.2}" x2="{left}" y2="{yy:.2}" stroke="black"/><text x="{t:.2}" y="{ty:.2}" text-anchor="end">{v:.1}</text>"#,
            a = left - 5.0,
            t = left - 8.0,
            ty = yy + 4.0
        );
    }
    for e in &grid.entries {
        let xx = x(e.lambda);
        let _ = writeln!(
            s,
            r#"<line x1="{xx:.2}" y1="{a:.2}" x2="{xx:.2}" y2="{b:.2}" stroke="black"/><line x1="{xx:.2}" y1="{b:.2}" x2="{xx:.2}" y2="{c:.2}" stroke="black"/><text x="{xx:.2}" y="{ty:.2}" text-anchor="middle">{l}</text>"#,
            a = top + ph,
            b = top + ph + 5.0,
            c = top + ph + 5.0,
            ty = top + ph + 20.0,
            l = e.lambda
        );
        let _ = writeln!(
            s,
            r#"<line x1="{xx:.2}" y1="{y1:.2}" x2="{xx:.2}" y2="{y2:.2}" stroke="steelblue" stroke-width="2"/><circle cx="{xx:.2}" cy="{ym:.2}" r="4" fill="steelblue"/>"#,
            y1 = y(e.summary.hpd.0),
            y2 = y(e.summary.hpd.1),
            ym = y(e.summary.mean)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{cx:.2}" y="{by:.2}" text-anchor="middle">Prevalence ratio, non-responders to responders</text>"#,
        cx = left + pw / 2.0,
        by = h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 18 {cy:.2})">Prevalence (%)</text>"#,
        cy = top + ph / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Smallest of 1, 2, 2.5, 5 times a power of ten at or above `v`.
fn nice_ceiling(v: f64) -> f64 {
    let p = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * p >= v {
            return m * p;
        }
    }
    10.0 * p
}
