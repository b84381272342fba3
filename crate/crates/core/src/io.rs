//! Binary field format and CSV export.
//!
//! Layout: magic bytes "HLF1", little-endian u32 n, u32 N, u8 kind
//! (0 = scalar, 1 = density, 2 = hermitian), then a payload of little-endian
//! f64. For kind 2 the payload holds n^2 complex entries per point as
//! interleaved re/im, row-major. Set masks travel as kind 0 with 0/1 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::field::{DensityField, HermitianHessianField, ScalarField, SetMask};
use crate::grid::TorusGrid;

pub const MAGIC: [u8; 4] = *b"HLF1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Scalar = 0,
    Density = 1,
    Hermitian = 2,
}

#[derive(Debug)]
pub enum AnyField {
    Scalar(ScalarField),
    Density(DensityField),
    Hermitian(HermitianHessianField),
}

fn write_header(w: &mut impl Write, grid: TorusGrid, kind: FieldKind) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&(grid.points_per_axis() as u32).to_le_bytes())?;
    w.write_all(&[kind as u8])?;
    Ok(())
}

fn write_f64s(w: &mut impl Write, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, f.grid(), FieldKind::Scalar)?;
    write_f64s(&mut w, f.values().iter().copied())?;
    w.flush()?;
    Ok(())
}

/// Densities are clamped at zero on output.
pub fn write_density(path: &Path, f: &DensityField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, f.grid(), FieldKind::Density)?;
    write_f64s(&mut w, f.values().iter().map(|v| v.max(0.0)))?;
    w.flush()?;
    Ok(())
}

pub fn write_hermitian(path: &Path, f: &HermitianHessianField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, f.grid(), FieldKind::Hermitian)?;
    write_f64s(
        &mut w,
        f.entries().iter().flat_map(|c| [c.re, c.im]),
    )?;
    w.flush()?;
    Ok(())
}

pub fn write_mask(path: &Path, mask: &SetMask) -> Result<()> {
    let field = ScalarField::from_values(
        mask.grid(),
        mask.mask().iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
    )?;
    write_scalar(path, &field)
}

fn read_exact_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|_| CoreError::Format("truncated payload".into()))?;
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => return Err(CoreError::Format("trailing bytes after payload".into())),
        Err(e) => return Err(e.into()),
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_field(path: &Path) -> Result<AnyField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| CoreError::Format("file too short for header".into()))?;
    if magic != MAGIC {
        return Err(CoreError::Format(format!(
            "magic mismatch: expected HLF1, got {:?}",
            magic
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| CoreError::Format("file too short for header".into()))?;
    let n = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)
        .map_err(|_| CoreError::Format("file too short for header".into()))?;
    let n_pts = u32::from_le_bytes(u32buf) as usize;
    let mut kind_byte = [0u8; 1];
    r.read_exact(&mut kind_byte)
        .map_err(|_| CoreError::Format("file too short for header".into()))?;
    if n < 1 || n > 3 {
        return Err(CoreError::Format(format!("unsupported dimension n = {n}")));
    }
    let grid = TorusGrid::new(n, n_pts)?;
    let total = grid.total_points();
    match kind_byte[0] {
        0 => {
            let values = read_exact_f64s(&mut r, total)?;
            Ok(AnyField::Scalar(ScalarField::from_values(grid, values)?))
        }
        1 => {
            let values = read_exact_f64s(&mut r, total)?;
            Ok(AnyField::Density(DensityField::from_values(grid, values)?))
        }
        2 => {
            let raw = read_exact_f64s(&mut r, total * n * n * 2)?;
            let entries = raw
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect();
            Ok(AnyField::Hermitian(HermitianHessianField::from_entries(
                grid, entries,
            )?))
        }
        k => Err(CoreError::Format(format!("unknown field kind {k}"))),
    }
}

pub fn read_scalar(path: &Path) -> Result<ScalarField> {
    match read_field(path)? {
        AnyField::Scalar(f) => Ok(f),
        AnyField::Density(f) => Ok(f.as_scalar()),
        AnyField::Hermitian(_) => Err(CoreError::Format(
            "expected a scalar field, found a hermitian field".into(),
        )),
    }
}

pub fn read_density(path: &Path) -> Result<DensityField> {
    match read_field(path)? {
        AnyField::Density(f) => Ok(f),
        AnyField::Scalar(f) => Ok(DensityField::from_scalar(&f)),
        AnyField::Hermitian(_) => Err(CoreError::Format(
            "expected a density field, found a hermitian field".into(),
        )),
    }
}

pub fn read_mask(path: &Path) -> Result<SetMask> {
    let f = read_scalar(path)?;
    SetMask::from_mask(f.grid(), f.values().iter().map(|v| *v > 0.5).collect())
}

/// CSV export: one row per grid point, integer lattice coordinates then value.
pub fn write_csv_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = f.grid();
    let axes = grid.axes();
    for idx in 0..grid.total_points() {
        let coords = grid.coords_of(idx);
        for c in coords.iter().take(axes) {
            write!(w, "{c},")?;
        }
        writeln!(w, "{}", f.values()[idx])?;
    }
    w.flush()?;
    Ok(())
}
