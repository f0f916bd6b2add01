//! 16-bit binary PGM export with a linear grey map.

use std::io::Write;

use crate::error::{Error, Result};

/// Linear map of [lo, hi] onto 0..=65535; values outside are clipped.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GreyMap {
    pub lo: f64,
    pub hi: f64,
}

impl GreyMap {
    /// Range spanning the finite values of `values`.
    pub fn fit(values: &[f64]) -> Self {
        let (lo, hi) = values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if lo.is_finite() {
            GreyMap { lo, hi }
        } else {
            GreyMap { lo: 0.0, hi: 1.0 }
        }
    }

    pub fn level(&self, v: f64) -> u16 {
        if !(self.hi > self.lo) || !v.is_finite() {
            return 0;
        }
        let t = ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        (t * 65535.0).round() as u16
    }
}

pub fn write_pgm<W: Write>(mut w: W, rows: usize, cols: usize, values: &[f64], map: GreyMap) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::Data(format!(
            "image of {rows}x{cols} needs {} values, got {}",
            rows * cols,
            values.len()
        )));
    }
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    let mut buf = Vec::with_capacity(2 * values.len());
    for &v in values {
        buf.extend_from_slice(&map.level(v).to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}
