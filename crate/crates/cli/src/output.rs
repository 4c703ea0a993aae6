//! Deterministic CSV/JSON writers.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes. Absent values are empty cells.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use tailwalk_core::CertificateKind;

use crate::error::CliError;

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<PathBuf, CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(path.to_path_buf())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Dependency(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Dependency(format!("{} is unreadable: {e}", path.display())))
}

pub fn certificate_name(kind: CertificateKind, epsilon: f64) -> String {
    format!("certificate_{kind}_eps{epsilon}.json")
}

pub fn certificate_failure_name(kind: CertificateKind, epsilon: f64) -> String {
    format!("certificate_{kind}_eps{epsilon}.failed.json")
}

pub fn margins_name(kind: CertificateKind, epsilon: f64) -> String {
    format!("margins_{kind}_eps{epsilon}.csv")
}

pub fn drift_check_name(kind: CertificateKind, epsilon: f64) -> String {
    format!("drift_check_{kind}_eps{epsilon}.csv")
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    unix_time_secs: u64,
    threads: usize,
    config: String,
    outputs: Vec<String>,
}

/// Run metadata, kept apart from the reproducible outputs.
pub fn write_metadata(
    out: &Path,
    command: &str,
    config: &Path,
    outputs: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let unix_time_secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        unix_time_secs,
        threads: rayon::current_num_threads(),
        config: config.display().to_string(),
        outputs: outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    write_json(&out.join(format!("metadata_{command}.json")), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 2.5e10, -0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(num(0.5), "0.5");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn file_names() {
        assert_eq!(
            certificate_name(CertificateKind::Sub, 0.25),
            "certificate_sub_eps0.25.json"
        );
        assert_eq!(margins_name(CertificateKind::Super, 0.5), "margins_super_eps0.5.csv");
    }

    #[test]
    fn csv_is_crlf_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a", "b"], vec![vec![num(1.5), opt(None)]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\r\n1.5,\r\n");
    }
}
