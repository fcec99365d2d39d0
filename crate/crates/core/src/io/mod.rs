//! File formats: statistics tables, legacy VTK fields and coefficient arrays.

pub mod stats;
pub mod vtk;

use std::path::Path;

use crate::{Error, Result};

/// Writes one value per line in round-trip exponent notation.
pub fn write_coefficients(path: &Path, values: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(values.len() * 24);
    for v in values {
        s.push_str(&format!("{v:e}\n"));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_coefficients(path: &Path) -> Result<Vec<f64>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}
