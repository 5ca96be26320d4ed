//! On-disk formats.
//!
//! * Instance data: headerless CSV, one row of `Y` per line, `d` columns of
//!   shortest round-trip decimal floats.
//! * Truth sidecar: JSON `{params, seed, mu, kstar, b}` next to the CSV with
//!   the extension replaced by `.json`. `kstar` is 0-based.
//! * Templates: the `nodes r` / `u v` text format of `Template::to_text`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lowdeg_core::linalg::Matrix;
use lowdeg_core::model::{Instance, ModelParams};
use lowdeg_core::multigraph::Template;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub params: ModelParams,
    pub seed: u64,
    pub mu: Vec<Vec<f64>>,
    pub kstar: Vec<usize>,
    pub b: Vec<i8>,
}

impl Sidecar {
    pub fn new(inst: &Instance, params: &ModelParams, seed: u64) -> Sidecar {
        Sidecar {
            params: *params,
            seed,
            mu: (0..inst.mu.rows()).map(|k| inst.mu.row(k).to_vec()).collect(),
            kstar: inst.kstar.clone(),
            b: inst.b.clone(),
        }
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_matrix_csv(path: &Path, y: &Matrix) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    for i in 0..y.rows() {
        w.write_record(y.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: line {}", path.display(), lineno + 1))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .with_context(|| format!("{}: line {}: bad number", path.display(), lineno + 1))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(Matrix::from_rows(&rows)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Write the data CSV and its truth sidecar.
pub fn write_instance(path: &Path, inst: &Instance, params: &ModelParams, seed: u64) -> Result<()> {
    write_matrix_csv(path, &inst.y)?;
    write_json(&sidecar_path(path), &Sidecar::new(inst, params, seed))
}

pub fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let text =
        std::fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?;
    Ok(Some(serde_json::from_str(&text)?))
}

pub fn read_template(path: &Path) -> Result<Template> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Template::from_text(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lowdeg_core::model::sample_instance;

    #[test]
    fn instance_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.csv");
        let p = ModelParams::new(9, 3, 2, 1.5).unwrap();
        let inst = sample_instance(&p, 4).unwrap();
        write_instance(&path, &inst, &p, 4).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), inst.y);
        let side = read_sidecar(&path).unwrap().unwrap();
        assert_eq!(side.kstar, inst.kstar);
        assert_eq!(side.params, p);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
        std::fs::write(&path, "1,x\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
    }
}
