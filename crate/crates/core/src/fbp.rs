//! Straight-ray filtered backprojection over the full [0, 2π) scan.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::Sinogram;
use crate::model::{GridSpec, MaterialField, ScanGeometry};
use crate::vec2::Vec2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    #[default]
    SheppLogan,
    RamLak,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Band limit as a fraction of the Nyquist frequency 1/(2Δs).
    pub cutoff: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            kind: FilterKind::SheppLogan,
            cutoff: 1.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(Error::Config(format!("filter cutoff {} outside (0, 1]", self.cutoff)));
        }
        Ok(())
    }

    /// Spatial kernel sampled at n·Δs: the inverse Fourier transform of the
    /// band-limited ramp (optionally sinc-windowed).
    pub fn tap(&self, n: i64, ds: f64) -> f64 {
        let w = self.cutoff / (2.0 * ds);
        match self.kind {
            FilterKind::SheppLogan => {
                let b = 2.0 * self.cutoff * n as f64;
                let s = (0.5 * PI * b).sin();
                let part = |num: f64, den: f64| if den.abs() < 1e-9 { 0.0 } else { num / den };
                let i = 0.5 * (part(1.0 + s, 1.0 + b) + part(1.0 - s, 1.0 - b));
                8.0 * w * w / (PI * PI) * i
            }
            FilterKind::RamLak => {
                if n == 0 {
                    return w * w;
                }
                let k = 2.0 * PI * n as f64 * ds;
                2.0 * (w * (k * w).sin() / k + ((k * w).cos() - 1.0) / (k * k))
            }
        }
    }
}

/// Filtered projections, one row of 2q+1 samples per angle.
pub struct Filtered {
    geometry: ScanGeometry,
    rows: Vec<Vec<f64>>,
}

impl Filtered {
    /// Convolves every angle's projection with the filter kernel.
    pub fn new(geometry: ScanGeometry, projections: &[f64], filter: &FilterSpec) -> Result<Self> {
        filter.validate()?;
        if geometry.p < 2 {
            return Err(Error::Geometry(format!("backprojection needs p >= 2 angles, got {}", geometry.p)));
        }
        let m = geometry.offsets_per_angle();
        if projections.len() != geometry.len() {
            return Err(Error::Data(format!(
                "{} projections for a scan of {} rays",
                projections.len(),
                geometry.len()
            )));
        }
        let ds = geometry.radius / geometry.q as f64;
        let taps: Vec<f64> = (0..2 * m as i64 - 1)
            .map(|k| filter.tap(k - (m as i64 - 1), ds) * ds)
            .collect();
        let rows = projections
            .par_chunks(m)
            .map(|proj| {
                (0..m)
                    .map(|j| {
                        proj.iter()
                            .enumerate()
                            .map(|(k, v)| taps[j + m - 1 - k] * v)
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(Filtered { geometry, rows })
    }

    /// (π/p) Σᵢ qᵢ(⟨x, ω(φᵢ)⟩) with linear interpolation in s.
    pub fn backproject(&self, x: Vec2) -> f64 {
        let g = &self.geometry;
        let ds = g.radius / g.q as f64;
        let last = (2 * g.q) as f64;
        let mut acc = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let s = x.dot(Vec2::from_angle(g.angle(i + 1)));
            let u = s / ds + g.q as f64;
            if !(0.0..=last).contains(&u) {
                continue;
            }
            let k = (u.floor() as usize).min(2 * g.q - 1);
            let frac = u - k as f64;
            acc += (1.0 - frac) * row[k] + frac * row[k + 1];
        }
        acc * PI / g.p as f64
    }
}

/// Reconstructs n − 1 from d and α from ln(1/τ). Invalid rays and rays
/// with τ ≤ 0 contribute zero.
pub fn fbp_reconstruct(sino: &Sinogram, grid: &GridSpec, filter: &FilterSpec) -> Result<MaterialField> {
    let g_ref: Vec<f64> = sino
        .records
        .iter()
        .map(|r| if r.valid { r.d } else { 0.0 })
        .collect();
    let g_abs: Vec<f64> = sino
        .g_abs()
        .into_iter()
        .map(|v| v.unwrap_or(0.0))
        .collect();
    let n_minus_1 = reconstruct_channel(sino.geometry, &g_ref, grid, filter)?;
    let alpha = reconstruct_channel(sino.geometry, &g_abs, grid, filter)?;
    MaterialField::from_channels(*grid, n_minus_1, alpha)
}

pub fn reconstruct_channel(
    geometry: ScanGeometry,
    projections: &[f64],
    grid: &GridSpec,
    filter: &FilterSpec,
) -> Result<Vec<f64>> {
    let filtered = Filtered::new(geometry, projections, filter)?;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|mu| {
            let c = grid.pixel_center(mu);
            if c.norm() >= grid.radius {
                0.0
            } else {
                filtered.backproject(c)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::simulate;
    use crate::geometry::InterfaceSet;
    use crate::phantom::Phantom;

    #[test]
    fn shepp_logan_taps_match_closed_form() {
        let f = FilterSpec::default();
        for n in -6..=6i64 {
            let ds = 0.7;
            let expected = 2.0 / (PI * PI * ds * ds * (1.0 - 4.0 * (n * n) as f64));
            assert!((f.tap(n, ds) - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
        // half band: b = ±1 hits the removable singularity
        let half = FilterSpec { cutoff: 0.5, ..f };
        assert!(half.tap(1, 1.0).is_finite());
    }

    #[test]
    fn ram_lak_taps() {
        let f = FilterSpec { kind: FilterKind::RamLak, cutoff: 1.0 };
        let ds = 1.0;
        assert!((f.tap(0, ds) - 0.25).abs() < 1e-15);
        // odd taps −1/(π² n² Δs²), even taps vanish
        assert!((f.tap(1, ds) + 1.0 / (PI * PI)).abs() < 1e-12);
        assert!(f.tap(2, ds).abs() < 1e-12);
        assert!((f.tap(-3, ds) + 1.0 / (9.0 * PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let geom = ScanGeometry::new(1, 4, 10.0).unwrap();
        assert!(matches!(
            Filtered::new(geom, &[0.0; 9], &FilterSpec::default()),
            Err(Error::Geometry(_))
        ));
        let geom = ScanGeometry::new(4, 4, 10.0).unwrap();
        let bad = FilterSpec { cutoff: 0.0, ..FilterSpec::default() };
        assert!(Filtered::new(geom, &[0.0; 36], &bad).is_err());
    }

    fn paper_sino(p: usize, q: usize) -> (Sinogram, GridSpec) {
        let ph = Phantom::paper();
        let grid = GridSpec::covering(ph.radius, 47).unwrap();
        let field = ph.rasterize(&grid);
        let geom = ScanGeometry::new(p, q, ph.radius).unwrap();
        (simulate(&field, &InterfaceSet::empty(ph.radius), &geom).unwrap(), grid)
    }

    #[test]
    fn zero_in_zero_out() {
        let grid = GridSpec::covering(10.0, 16).unwrap();
        let geom = ScanGeometry::new(8, 6, 10.0).unwrap();
        let field = MaterialField::air(grid);
        let sino = simulate(&field, &InterfaceSet::empty(10.0), &geom).unwrap();
        let out = fbp_reconstruct(&sino, &grid, &FilterSpec::default()).unwrap();
        assert!(out.n_minus_1.iter().chain(&out.alpha).all(|&v| v == 0.0));
    }

    #[test]
    fn linear_in_path_difference() {
        let (s1, grid) = paper_sino(24, 20);
        let mut s2 = s1.clone();
        for (k, r) in s2.records.iter_mut().enumerate() {
            r.d = (k as f64 * 0.37).sin() * 3.0;
        }
        let combo = s1.combine(1.5, &s2, -0.75).unwrap();
        let f = FilterSpec::default();
        let a = fbp_reconstruct(&s1, &grid, &f).unwrap().n_minus_1;
        let b = fbp_reconstruct(&s2, &grid, &f).unwrap().n_minus_1;
        let c = fbp_reconstruct(&combo, &grid, &f).unwrap().n_minus_1;
        for mu in 0..grid.len() {
            assert!((c[mu] - (1.5 * a[mu] - 0.75 * b[mu])).abs() < 1e-10);
        }
    }

    #[test]
    fn rotating_the_data_rotates_the_image() {
        let (sino, _) = paper_sino(30, 20);
        let geom = sino.geometry;
        let m = geom.offsets_per_angle();
        let d = sino.path_difference();
        // shift angle i → i+1: the object rotated by one angular step
        let mut shifted = vec![0.0; d.len()];
        for i in 0..geom.p {
            let dst = (i + 1) % geom.p;
            shifted[dst * m..(dst + 1) * m].copy_from_slice(&d[i * m..(i + 1) * m]);
        }
        let f = FilterSpec::default();
        let a = Filtered::new(geom, &d, &f).unwrap();
        let b = Filtered::new(geom, &shifted, &f).unwrap();
        let step = std::f64::consts::TAU / geom.p as f64;
        for k in 0..40 {
            let x = Vec2::new(-40.0 + 2.0 * k as f64, 15.0 - 0.7 * k as f64);
            let rotated = x.rotated(step);
            assert!((b.backproject(rotated) - a.backproject(x)).abs() < 1e-9);
        }
    }
}
