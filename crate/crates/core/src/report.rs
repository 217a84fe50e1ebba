//! Versioned run reports.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::linalg::CMat;
use crate::pnt::EigenspaceReportRow;

pub const SCHEMA: &str = "pntkit.report/1";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub model: String,
    /// SHA-256 of the model document bytes.
    pub model_digest: String,
    /// Every resolved setting of the run.
    pub config: Value,
    /// Seconds since the Unix epoch, only when requested.
    pub timestamp: Option<u64>,
}

impl RunManifest {
    pub fn new(model: &str, document: &str, config: Value) -> Self {
        RunManifest {
            tool: "pntkit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model: model.into(),
            model_digest: digest(document.as_bytes()),
            config,
            timestamp: None,
        }
    }
}

pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub manifest: RunManifest,
    pub result: Value,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, manifest: RunManifest, result: Value, warnings: Vec<String>) -> Self {
        Report { schema: SCHEMA, command: command.into(), manifest, result, warnings }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Matrix as rows of `[re, im]` pairs.
pub fn matrix_json(m: &CMat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| serde_json::json!([m[(i, j)].re, m[(i, j)].im])).collect())).collect())
}

const TABLE_HEADER: &str = "l,eps,d,particles_needed,dim_F,dim_hol,stagnation_order,flags";

/// Comma-separated eigenspace table, one row per eigenspace.
pub fn rows_csv(rows: &[EigenspaceReportRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let stag = r.stagnation_order.map_or(String::new(), |k| k.to_string());
        let flags = r.flags.join("; ").replace(',', ";");
        out.push_str(&format!("{},{},{},{},{},{},{},{}\n", r.label, fmt_eps(r.eigenvalue), r.degeneracy, r.particles_needed, r.dim_f, r.dim_hol, stag, flags));
    }
    out
}

/// Aligned plain-text table.
pub fn rows_text(rows: &[EigenspaceReportRow]) -> String {
    let mut out = format!("{:>4} {:>10} {:>4} {:>5} {:>7} {:>8}\n", "l", "eps", "d", "<=N", "dim F", "dim Hol");
    for r in rows {
        out.push_str(&format!(
            "{:>4} {:>10} {:>4} {:>5} {:>7} {:>8}{}\n",
            r.label,
            fmt_eps(r.eigenvalue),
            r.degeneracy,
            r.particles_needed,
            r.dim_f,
            r.dim_hol,
            if r.flags.is_empty() { String::new() } else { format!("  [{}]", r.flags.join("; ")) }
        ));
    }
    out
}

fn fmt_eps(e: f64) -> String {
    let r = e.round();
    if (e - r).abs() < 1e-9 {
        format!("{}", r as i64)
    } else {
        format!("{e:.6}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        assert_eq!(fmt_eps(-0.0), "0");
        assert_eq!(fmt_eps(-1e-17), "0");
    }
}
