//! CSV writers for mesh fields and paired exact/approximate series, and the
//! run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::averaging::MesoField;
use crate::error::{Error, Result};

pub const MESO_FIELD_SCHEMA: &str = "beta,x_beta,value,boundary_affected";
pub const PAIRED_SCHEMA: &str = "beta,x_beta,exact,approx,abs_err";
pub const CHECKPOINT_SCHEMA: &str = "j,q,v";
pub const FINE_FIELD_SCHEMA: &str = "i,x_i,value";
pub const SCHEMA_VERSION: u32 = 1;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `beta,x_beta,value,boundary_affected` with `beta` counted from 1.
pub fn write_meso_field(path: &Path, field: &MesoField) -> Result<()> {
    let mut out = String::with_capacity(48 * field.values.len());
    out.push_str(MESO_FIELD_SCHEMA);
    out.push('\n');
    for (beta, (x, v)) in field.centers().iter().zip(&field.values).enumerate() {
        out.push_str(&format!(
            "{},{:e},{:e},{}\n",
            beta + 1,
            x,
            v,
            field.boundary_affected[beta] as u8
        ));
    }
    write_text(path, &out)
}

/// Reads a file written by [`write_meso_field`] into `(x_beta, value)` rows.
pub fn read_meso_values(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MESO_FIELD_SCHEMA) {
        return Err(Error::Parse {
            path: path.into(),
            reason: "unexpected header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(row, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: Option<&&str>| s.and_then(|c| c.trim().parse::<f64>().ok());
            match (parse(cols.get(1)), parse(cols.get(2))) {
                (Some(x), Some(v)) => Ok((x, v)),
                _ => Err(Error::Parse {
                    path: path.into(),
                    reason: format!("bad row {}", row + 2),
                }),
            }
        })
        .collect()
}

/// `beta,x_beta,exact,approx,abs_err`.
pub fn write_paired(path: &Path, exact: &MesoField, approx: &MesoField) -> Result<()> {
    if exact.mesh != approx.mesh {
        return Err(Error::param("approx", "mesh differs from the exact series"));
    }
    let mut out = String::with_capacity(64 * exact.values.len());
    out.push_str(PAIRED_SCHEMA);
    out.push('\n');
    for (beta, x) in exact.centers().iter().enumerate() {
        let (e, a) = (exact.values[beta], approx.values[beta]);
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            beta + 1,
            x,
            e,
            a,
            (e - a).abs()
        ));
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub schema: String,
    pub schema_version: u32,
}

/// Files emitted by a run, written as `manifest.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            files: Vec::new(),
        }
    }

    /// Records `path` relative to `root` when possible.
    pub fn add(&mut self, root: &Path, path: &Path, schema: &str) {
        let rel = path.strip_prefix(root).unwrap_or(path).to_path_buf();
        self.files.push(ManifestEntry {
            path: rel,
            schema: schema.into(),
            schema_version: SCHEMA_VERSION,
        });
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        write_text(&path, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::Quantity;
    use crate::window::{MesoMesh, WindowFunction};

    #[test]
    fn meso_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = MesoMesh::new(4, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.25, 1.0).unwrap();
        let f = MesoField::new(mesh, &w, Quantity::Density, vec![1.0, 1.5, 0.25, 2.0]).unwrap();
        let p = dir.path().join("rho.csv");
        write_meso_field(&p, &f).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("beta,x_beta,value,boundary_affected\n1,1.25e-1,1e0,1\n"));
        let rows = read_meso_values(&p).unwrap();
        assert_eq!(rows.iter().map(|r| r.1).collect::<Vec<_>>(), f.values);

        let g = MesoField::new(mesh, &w, Quantity::Density, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let pp = dir.path().join("pair.csv");
        write_paired(&pp, &f, &g).unwrap();
        let text = std::fs::read_to_string(&pp).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "2,3.75e-1,1.5e0,1e0,5e-1");
    }
}
