//! Artifact formats: CSV tables with 17 significant digits, the JSON sidecar
//! of grid functions, atomic file writes and the long-format plot grid.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cgf_engine::{CgfEvaluation, Method};
use crate::error::{Error, Result};
use crate::legendre::{ConvexGridFunction, GridSidecar};

/// Scientific notation with 17 significant digits, enough to reproduce `v`
/// exactly; non-finite values print as `inf`, `-inf`, `nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => t.parse::<f64>().map_err(|e| Error::Parse(format!("bad number {t:?}: {e}"))),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// A CSV table with a header row and numeric cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row has {} cells, header has {}",
                    record.len(),
                    header.len()
                )));
            }
            rows.push(record.iter().map(parse_f64).collect::<Result<Vec<_>>>()?);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name:?}")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.iter().map(String::as_str).eq(expected.iter().copied()) {
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected columns {:?}, found {:?}",
                expected, self.header
            )))
        }
    }
}

pub const CGF_HEADER: [&str; 3] = ["lambda", "delta", "phi"];
pub const GRID_HEADER: [&str; 2] = ["x", "value"];

pub fn cgf_to_csv(eval: &CgfEvaluation) -> String {
    let mut t = Table::new(&CGF_HEADER);
    for i in 0..eval.lambda_grid.len() {
        t.push(vec![eval.lambda_grid[i], eval.log_mgf[i], eval.phi_values[i]]);
    }
    t.to_csv()
}

/// Parses a `lambda,delta,phi` table. The method is not stored in the CSV
/// and has to be supplied.
pub fn cgf_from_csv(text: &str, method: Method) -> Result<CgfEvaluation> {
    let t = Table::from_csv(text)?;
    t.expect_header(&CGF_HEADER)?;
    Ok(CgfEvaluation {
        lambda_grid: t.column("lambda")?,
        log_mgf: t.column("delta")?,
        phi_values: t.column("phi")?,
        method,
    })
}

pub fn grid_function_to_csv(f: &ConvexGridFunction) -> String {
    xy_to_csv(f.grid(), f.values())
}

pub fn xy_to_csv(x: &[f64], y: &[f64]) -> String {
    let mut t = Table::new(&GRID_HEADER);
    for (a, b) in x.iter().zip(y) {
        t.push(vec![*a, *b]);
    }
    t.to_csv()
}

/// Parses an `x,value` table, applying the sidecar when given.
pub fn grid_function_from_csv(text: &str, sidecar: Option<&GridSidecar>) -> Result<ConvexGridFunction> {
    let t = Table::from_csv(text)?;
    t.expect_header(&GRID_HEADER)?;
    let f = ConvexGridFunction::new(t.column("x")?, t.column("value")?)?;
    match sidecar {
        Some(s) => f.apply_sidecar(s),
        None => Ok(f),
    }
}

/// `conj.csv` -> `conj.csv.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn sidecar_to_json(s: &GridSidecar) -> Result<String> {
    let mut text = serde_json::to_string_pretty(s)?;
    text.push('\n');
    Ok(text)
}

/// Reads `path` and, if present, its sidecar.
pub fn read_grid_function(path: &Path) -> Result<ConvexGridFunction> {
    let text = std::fs::read_to_string(path)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        Some(serde_json::from_str::<GridSidecar>(&std::fs::read_to_string(side)?)?)
    } else {
        None
    };
    grid_function_from_csv(&text, sidecar.as_ref())
}

/// Output of [`render_plot_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlotGrid {
    pub csv: String,
    pub series: Vec<String>,
    pub warnings: Vec<String>,
}

/// Merges artifacts into one long-format `series,x,y` CSV. `lambda,delta,phi`
/// tables contribute the series `delta` and `phi`; two-column `x,<name>`
/// tables contribute one series named after the input's label (typically
/// the file stem). Repeated names get `_2`, `_3`, ... and a warning.
pub fn render_plot_grid(inputs: &[(String, String)]) -> Result<PlotGrid> {
    let mut out = String::from("series,x,y\n");
    let mut series: Vec<String> = Vec::new();
    let mut warnings = Vec::new();
    for (label, text) in inputs {
        let t = Table::from_csv(text)?;
        let parts: Vec<(String, usize, usize)> = if t.header.iter().map(String::as_str).eq(CGF_HEADER) {
            vec![("delta".into(), 0, 1), ("phi".into(), 0, 2)]
        } else if t.header.len() == 2 && t.header[0] == "x" {
            vec![(label.clone(), 0, 1)]
        } else {
            return Err(Error::Parse(format!(
                "{label}: unrecognized columns {:?} (expected lambda,delta,phi or x,<value>)",
                t.header
            )));
        };
        for (name, xi, yi) in parts {
            let mut unique = name.clone();
            let mut k = 2;
            while series.contains(&unique) {
                unique = format!("{name}_{k}");
                k += 1;
            }
            if unique != name {
                warnings.push(format!("duplicate series {name:?} renamed to {unique:?}"));
            }
            for row in &t.rows {
                out.push_str(&format!("{unique},{},{}\n", fmt_f64(row[xi]), fmt_f64(row[yi])));
            }
            series.push(unique);
        }
    }
    Ok(PlotGrid { csv: out, series, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -0.0, 1.0, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::INFINITY, f64::NEG_INFINITY] {
            let s = fmt_f64(v);
            assert_eq!(parse_f64(&s).unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert!(parse_f64("abc").is_err());
    }

    #[test]
    fn table_round_trip_and_errors() {
        let mut t = Table::new(&["x", "value"]);
        t.push(vec![1.0, f64::INFINITY]);
        t.push(vec![2.0, 0.1]);
        let back = Table::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(Table::from_csv("x,value\n1,2,3\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn plot_grid_merges_and_disambiguates() {
        let cgf = "lambda,delta,phi\n1,0.5,0.5\n".to_string();
        let conj = "x,value\n0,0\n1,0.5\n".to_string();
        let g = render_plot_grid(&[("cgf".into(), cgf), ("conjugate".into(), conj.clone()), ("conjugate".into(), conj)])
            .unwrap();
        assert_eq!(g.series, vec!["delta", "phi", "conjugate", "conjugate_2"]);
        assert_eq!(g.warnings.len(), 1);
        assert!(g.csv.starts_with("series,x,y\ndelta,"));
        let empty = render_plot_grid(&[]).unwrap();
        assert_eq!(empty.csv, "series,x,y\n");
        assert!(render_plot_grid(&[("bad".into(), "a,b,c\n1,2,3\n".into())]).is_err());
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(sidecar_path(Path::new("out/conj.csv")), PathBuf::from("out/conj.csv.json"));
    }
}
