//! CSV tables and their JSON manifest sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use qfi_lab::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// `nan`/`inf` spelled for plain-text consumers; finite values in the
/// shortest form that round-trips.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 || (1e-5..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Header plus rows of already formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            csv.write_record(r).map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect()).map_err(csv_err))
            .collect::<Result<_>>()?;
        Ok(Self { header, rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Reproducibility record written next to every output file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Validated inputs of the run (parameter bundle, grid, orders, …).
    pub params: Value,
    /// Sampler configuration, when the run sampled.
    #[serde(default)]
    pub sampler: Option<Value>,
    pub build_id: String,
    pub wall_time_s: f64,
    pub seed: u64,
    /// Command-specific results (fit summary, TV distance, …).
    #[serde(default)]
    pub extra: Value,
}

pub fn build_id() -> String {
    format!("qfi-lab {} ({})", env!("CARGO_PKG_VERSION"), option_env!("QFI_LAB_GIT_REV").unwrap_or("unknown"))
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_manifest(out: &Path, m: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(m).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(out), json + "\n")?;
    Ok(())
}

pub fn read_manifest(out: &Path) -> Result<Option<RunManifest>> {
    let p = sidecar_path(out);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p)?;
    serde_json::from_str(&text).map(Some).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
}

/// Writes the table to `out` (plus manifest) or to stdout.
pub fn emit(table: &Table, out: Option<&Path>, manifest: &RunManifest) -> Result<()> {
    match out {
        Some(path) => {
            let tmp = path.with_extension("csv.partial");
            table.write(fs::File::create(&tmp)?)?;
            fs::rename(&tmp, path)?;
            write_manifest(path, manifest)
        }
        None => table.write(std::io::stdout().lock()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_cells() {
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-20), "1e-20");
        assert_eq!(fmt_f64(-2.5e-7).parse::<f64>().unwrap(), -2.5e-7);
        let x = 52.128_400_000_000_01;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(vec!["a".into(), "status".into()]);
        t.push(vec!["1".into(), "error: numerical: x, y".into()]);
        t.write(fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(Table::read(&path).unwrap(), t);
        assert_eq!(t.column("status"), Some(1));
    }
}
