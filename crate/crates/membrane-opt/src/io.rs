//! Field and mask serialization.
//!
//! Fields travel as `x,y,value` CSV rows, one interior cell per row in
//! domain order, with floats printed in Rust's shortest round-trip form so a
//! read-back reproduces the values bit for bit. Fields also render as 16-bit
//! P2 PGM images (min–max scaled, the scale reported to the manifest); cell
//! sets render as 0/1 P2 masks over the full bounding grid. Identical inputs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use membrane_core::{Domain, ScalarField};

/// Maximum gray value of field PGMs.
const PGM_MAX: u32 = 65535;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{0}")]
    Field(#[from] membrane_core::Error),
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Write a field as `x,y,value` rows in domain order.
pub fn write_field_csv(path: &Path, field: &ScalarField) -> Result<(), IoError> {
    let domain = field.domain();
    let mut out = String::with_capacity(field.len() * 24 + 16);
    out.push_str("x,y,value\n");
    for (k, (x, y)) in domain.centroids().enumerate() {
        writeln!(out, "{},{},{}", x, y, field.values()[k]).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a field written by [`write_field_csv`]: rows must follow domain
/// order and their coordinates must match the cell centroids.
pub fn read_field_csv(path: &Path, domain: &Arc<Domain>) -> Result<ScalarField, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("x,y,value") => {}
        _ => return Err(format_err(path, "missing x,y,value header")),
    }
    let coord_tol = 1e-9 * domain.spacing();
    let mut values = Vec::with_capacity(domain.num_cells());
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64, IoError> {
            s.ok_or_else(|| format_err(path, format!("row {k}: expected 3 columns")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| format_err(path, format!("row {k}: {e}")))
        };
        let x = parse(fields.next())?;
        let y = parse(fields.next())?;
        let v = parse(fields.next())?;
        if fields.next().is_some() {
            return Err(format_err(path, format!("row {k}: expected 3 columns")));
        }
        if k >= domain.num_cells() {
            return Err(format_err(path, "more rows than domain cells"));
        }
        let (cx, cy) = domain.centroid(k);
        if (x - cx).abs() > coord_tol || (y - cy).abs() > coord_tol {
            return Err(format_err(
                path,
                format!("row {k}: coordinates ({x}, {y}) do not match cell centroid ({cx}, {cy})"),
            ));
        }
        values.push(v);
    }
    if values.len() != domain.num_cells() {
        return Err(format_err(
            path,
            format!(
                "{} rows for a domain with {} cells",
                values.len(),
                domain.num_cells()
            ),
        ));
    }
    Ok(ScalarField::new(Arc::clone(domain), values)?)
}

/// Write a field as a 16-bit P2 PGM, min–max scaled onto 0..=65535.
/// Exterior cells render as 0. Returns the (min, max) scale for the
/// manifest.
pub fn write_field_pgm(path: &Path, field: &ScalarField) -> Result<(f64, f64), IoError> {
    let domain = field.domain();
    let (nx, ny) = domain.grid_extent();
    let lo = field.min_value();
    let hi = field.max_value();
    let span = hi - lo;
    let mut out = String::with_capacity(nx * ny * 6 + 32);
    writeln!(out, "P2\n{nx} {ny}\n{PGM_MAX}").expect("string write");
    for j in (0..ny).rev() {
        let mut first = true;
        for i in 0..nx {
            let level = match domain.cell_at(i, j) {
                Some(cell) if span > 0.0 => {
                    ((field.values()[cell] - lo) / span * PGM_MAX as f64).round() as u32
                }
                Some(_) => 0,
                None => 0,
            };
            if !first {
                out.push(' ');
            }
            write!(out, "{level}").expect("string write");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok((lo, hi))
}

/// Write a cell set as a 0/1 P2 mask over the bounding grid.
pub fn write_mask_pgm(path: &Path, domain: &Domain, cells: &[usize]) -> Result<(), IoError> {
    let (nx, ny) = domain.grid_extent();
    let mut marks = vec![false; domain.num_cells()];
    for &c in cells {
        marks[c] = true;
    }
    let mut out = String::with_capacity(nx * ny * 2 + 32);
    writeln!(out, "P2\n{nx} {ny}\n1").expect("string write");
    for j in (0..ny).rev() {
        let mut first = true;
        for i in 0..nx {
            let bit = domain
                .cell_at(i, j)
                .map(|cell| marks[cell] as u8)
                .unwrap_or(0);
            if !first {
                out.push(' ');
            }
            write!(out, "{bit}").expect("string write");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read back a mask written by [`write_mask_pgm`] as a sorted cell set.
/// Nonzero pixels must lie on interior cells of the domain.
pub fn read_mask_pgm(path: &Path, domain: &Domain) -> Result<Vec<usize>, IoError> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text
        .split(|c: char| c.is_ascii_whitespace())
        .filter(|t| !t.is_empty());
    if tokens.next() != Some("P2") {
        return Err(format_err(path, "not a P2 PGM"));
    }
    let mut next_usize = |what: &str| -> Result<usize, IoError> {
        tokens
            .next()
            .ok_or_else(|| format_err(path, format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|e| format_err(path, format!("bad {what}: {e}")))
    };
    let nx = next_usize("width")?;
    let ny = next_usize("height")?;
    let _maxval = next_usize("maxval")?;
    if (nx, ny) != domain.grid_extent() {
        return Err(format_err(
            path,
            format!(
                "grid {nx}x{ny} does not match the domain's {:?}",
                domain.grid_extent()
            ),
        ));
    }
    let mut cells = Vec::new();
    for j in (0..ny).rev() {
        for i in 0..nx {
            let v = next_usize("pixel")?;
            if v > 0 {
                match domain.cell_at(i, j) {
                    Some(cell) => cells.push(cell),
                    None => {
                        return Err(format_err(
                            path,
                            format!("set pixel ({i}, {j}) lies outside the domain mask"),
                        ))
                    }
                }
            }
        }
    }
    cells.sort_unstable();
    Ok(cells)
}
