//! CSV tables and the run manifest. Numbers are written with 17 significant
//! digits so every value round-trips exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::PathRecord;
use crate::error::Result;
use crate::spectral::EigenConvention;

/// `{:.16e}`: 17 significant digits, `.` as the decimal separator.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// In-memory CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    body: String,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            body: String::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(","));
        s.push_str(&self.body);
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

fn quote(h: &str) -> String {
    if h.contains([',', '"', '\n']) {
        format!("\"{}\"", h.replace('"', "\"\""))
    } else {
        h.to_string()
    }
}

/// Observable series of a record; the header carries the eigenvalue
/// convention and the nonlinearity switch.
pub fn observables_table(
    record: &PathRecord,
    convention: EigenConvention,
    nonlinear: bool,
) -> CsvTable {
    let mut t = CsvTable::new([
        "t".to_string(),
        "energy".to_string(),
        "h1_sq".to_string(),
        format!("dissipation[convention={}]", convention.name()),
        format!("psi_1[nonlinear={nonlinear}]"),
        format!("psi_2[nonlinear={nonlinear}]"),
    ]);
    for o in &record.observables {
        t.push(&[o.t, o.energy, o.h1_sq, o.dissipation, o.psi[0], o.psi[1]]);
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub package: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub outputs: Vec<String>,
}

/// Output directory writer that remembers what it produced.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        table.write(&self.path(name))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| crate::Error::Format(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        std::fs::write(self.path(name), data)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json` listing every file produced so far.
    pub fn manifest<C: Serialize>(&mut self, command: &str, config: &C) -> Result<()> {
        let m = Manifest {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            outputs: self.written.clone(),
        };
        self.json("manifest.json", &m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn table_renders_header_and_rows() {
        let mut t = CsvTable::new(["a", "b,c"]);
        t.push(&[1.0, 2.0]);
        assert_eq!(
            t.render(),
            "a,\"b,c\"\n1.0000000000000000e0,2.0000000000000000e0\n"
        );
    }
}
