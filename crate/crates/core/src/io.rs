//! Field files and CSV tables.
//!
//! Binary layout: `b"SLABF1"`, then `nx, ny, nz` as little-endian `u32`, one
//! parity byte, then `nx*ny*nz` little-endian `f64` values, x fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Parity, ScalarField, Shape, SlabGrid};

pub const MAGIC: &[u8; 6] = b"SLABF1";

pub fn encode_field(field: &ScalarField) -> Vec<u8> {
    let s = field.shape;
    let mut out = Vec::with_capacity(6 + 13 + 8 * s.len());
    out.extend_from_slice(MAGIC);
    for n in [s.nx, s.ny, s.nz] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.push(field.parity.code());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<ScalarField> {
    if bytes.len() < 19 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing SLABF1 header".into()));
    }
    let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let shape = Shape {
        nx: dim(6),
        ny: dim(10),
        nz: dim(14),
    };
    let parity = Parity::from_code(bytes[18])?;
    let body = &bytes[19..];
    if body.len() != 8 * shape.len() {
        return Err(Error::Format(format!(
            "expected {} values, found {} bytes",
            shape.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ScalarField {
        shape,
        values,
        parity,
    })
}

/// Write `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_field(path: &Path, field: &ScalarField) -> Result<()> {
    write_atomic(path, &encode_field(field))
}

pub fn load_field(path: &Path) -> Result<ScalarField> {
    decode_field(&fs::read(path)?)
}

/// One row per node: `x,y,z,value`.
pub fn field_csv(field: &ScalarField, grid: &SlabGrid) -> String {
    let s = field.shape;
    let mut out = String::from("x,y,z,value\n");
    for k in 0..s.nz {
        for j in 0..s.ny {
            for i in 0..s.nx {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    grid.x[i],
                    grid.y[j],
                    grid.z[k],
                    field.values[s.idx(i, j, k)]
                ));
            }
        }
    }
    out
}

/// Minimal CSV table builder with a fixed header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| fmt_num(*v)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Shortest round-trip formatting, so equal values give equal text.
pub fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}
