//! Measurement model: reconstruction grid, material field, scan geometry and
//! the conversions between physical observables.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Speed of light in vacuum, mm/s.
pub const C0_MM_PER_S: f64 = 299_792_458_000.0;
/// Speed of light in vacuum, cm/s.
pub const C0_CM_PER_S: f64 = 29_979_245_800.0;
/// Frequency used when reporting κ.
pub const DEFAULT_FREQUENCY_HZ: f64 = 100e9;

/// Absorption coefficient per cm → per mm.
pub fn alpha_cm_to_mm(alpha_per_cm: f64) -> f64 {
    alpha_per_cm / 10.0
}

pub fn alpha_mm_to_cm(alpha_per_mm: f64) -> f64 {
    alpha_per_mm * 10.0
}

/// κ = α·c₀/(4πf), with α in cm⁻¹ and c₀ in cm/s.
pub fn kappa_from_alpha(alpha_per_cm: f64, frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) {
        return Err(Error::Domain(format!("frequency {frequency_hz} Hz must be positive")));
    }
    Ok(alpha_per_cm * C0_CM_PER_S / (4.0 * PI * frequency_hz))
}

pub fn alpha_from_kappa(kappa: f64, frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) {
        return Err(Error::Domain(format!("frequency {frequency_hz} Hz must be positive")));
    }
    Ok(kappa * 4.0 * PI * frequency_hz / C0_CM_PER_S)
}

/// Lambert-Beer absorbance ln(1/τ); `None` marks an unusable measurement.
pub fn absorbance_from_tau(tau: f64) -> Option<f64> {
    (tau > 0.0 && tau.is_finite()).then(|| -tau.ln())
}

/// Square pixel grid centred on the disk Ω = {‖x‖ < R}.
///
/// Pixel μ = row·cols + col; row 0 is the top (largest y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Disk radius R, mm.
    pub radius: f64,
    pub rows: usize,
    pub cols: usize,
    /// Pixel side h, mm.
    pub pixel: f64,
}

impl GridSpec {
    pub fn new(radius: f64, rows: usize, cols: usize, pixel: f64) -> Result<Self> {
        let g = GridSpec {
            radius,
            rows,
            cols,
            pixel,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid of `n × n` pixels that exactly covers the disk.
    pub fn covering(radius: f64, n: usize) -> Result<Self> {
        GridSpec::new(radius, n, n, 2.0 * radius / n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.pixel > 0.0) || self.rows == 0 || self.cols == 0 {
            return Err(Error::Geometry(format!("degenerate grid {self:?}")));
        }
        // relative slack: h = 2R/n may round below exact coverage
        let need = 2.0 * self.radius * (1.0 - 1e-12);
        if (self.rows as f64) * self.pixel < need || (self.cols as f64) * self.pixel < need {
            return Err(Error::Geometry(format!(
                "grid {}x{} with pixel {} does not cover the disk of radius {}",
                self.rows, self.cols, self.pixel, self.radius
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.pixel
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.pixel
    }

    pub fn x_min(&self) -> f64 {
        -0.5 * self.width()
    }

    pub fn y_max(&self) -> f64 {
        0.5 * self.height()
    }

    pub fn pixel_center(&self, mu: usize) -> Vec2 {
        let (r, c) = (mu / self.cols, mu % self.cols);
        Vec2::new(
            self.x_min() + (c as f64 + 0.5) * self.pixel,
            self.y_max() - (r as f64 + 0.5) * self.pixel,
        )
    }

    /// Pixel containing `p`, if any.
    pub fn pixel_of(&self, p: Vec2) -> Option<usize> {
        let cf = ((p.x - self.x_min()) / self.pixel).floor();
        let rf = ((self.y_max() - p.y) / self.pixel).floor();
        if cf < 0.0 || rf < 0.0 || cf >= self.cols as f64 || rf >= self.rows as f64 {
            return None;
        }
        Some(rf as usize * self.cols + cf as usize)
    }

    /// Whether the pixel square overlaps the open disk Ω.
    pub fn pixel_touches_disk(&self, mu: usize) -> bool {
        let c = self.pixel_center(mu);
        let h = 0.5 * self.pixel;
        let dx = (c.x.abs() - h).max(0.0);
        let dy = (c.y.abs() - h).max(0.0);
        dx.hypot(dy) < self.radius
    }

    /// Same disk with every pixel split into `factor × factor` sub-pixels.
    pub fn refined(&self, factor: usize) -> GridSpec {
        GridSpec {
            radius: self.radius,
            rows: self.rows * factor,
            cols: self.cols * factor,
            pixel: self.pixel / factor as f64,
        }
    }
}

/// Anything that reports the real refractive index n at a point.
pub trait IndexField: Sync {
    fn index_at(&self, p: Vec2) -> f64;
}

/// Pixel grid of (n − 1, α) over Ω. α is stored in mm⁻¹.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    pub grid: GridSpec,
    pub n_minus_1: Vec<f64>,
    pub alpha: Vec<f64>,
    pub frequency_hz: f64,
}

impl MaterialField {
    pub fn air(grid: GridSpec) -> Self {
        MaterialField {
            grid,
            n_minus_1: vec![0.0; grid.len()],
            alpha: vec![0.0; grid.len()],
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        }
    }

    pub fn from_channels(grid: GridSpec, n_minus_1: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if n_minus_1.len() != grid.len() || alpha.len() != grid.len() {
            return Err(Error::Data(format!(
                "channel sizes {} / {} do not match grid of {} pixels",
                n_minus_1.len(),
                alpha.len(),
                grid.len()
            )));
        }
        Ok(MaterialField {
            grid,
            n_minus_1,
            alpha,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        })
    }

    /// Checks the physical constraints n ≥ 1 and α ≥ 0 up to `tol`, and that
    /// pixels outside Ω are air.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        for mu in 0..self.grid.len() {
            let (dn, a) = (self.n_minus_1[mu], self.alpha[mu]);
            if dn < -tol || a < -tol {
                return Err(Error::Data(format!(
                    "pixel {mu} has n-1 = {dn}, alpha = {a} below physical bounds"
                )));
            }
            if !self.grid.pixel_touches_disk(mu) && (dn != 0.0 || a != 0.0) {
                return Err(Error::Data(format!("pixel {mu} lies outside the disk but is not air")));
            }
        }
        Ok(())
    }

    /// The integrand of the path difference: the n − 1 channel.
    pub fn path_difference_integrand(&self) -> &[f64] {
        &self.n_minus_1
    }

    /// κ per pixel for display at the field's frequency.
    pub fn kappa(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .map(|&a| a * 10.0 * C0_CM_PER_S / (4.0 * PI * self.frequency_hz))
            .collect()
    }
}

impl IndexField for MaterialField {
    fn index_at(&self, p: Vec2) -> f64 {
        if p.norm() >= self.grid.radius {
            return 1.0;
        }
        match self.grid.pixel_of(p) {
            Some(mu) => 1.0 + self.n_minus_1[mu],
            None => 1.0,
        }
    }
}

/// Parallel scan: angles φᵢ = 2π(i−1)/p for i = 1..p and offsets
/// sⱼ = (R/q)·j for j = −q..q. Ray ν enumerates angle-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub p: usize,
    pub q: usize,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayId {
    /// 1-based angle index.
    pub i: usize,
    /// Offset index in −q..=q.
    pub j: i64,
    pub phi: f64,
    pub s: f64,
}

impl ScanGeometry {
    pub fn new(p: usize, q: usize, radius: f64) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::Config(format!("scan needs p >= 1 and q >= 1, got p={p}, q={q}")));
        }
        if !(radius > 0.0) {
            return Err(Error::Config(format!("scan radius {radius} must be positive")));
        }
        Ok(ScanGeometry { p, q, radius })
    }

    pub fn offsets_per_angle(&self) -> usize {
        2 * self.q + 1
    }

    pub fn len(&self) -> usize {
        self.p * self.offsets_per_angle()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn angle(&self, i: usize) -> f64 {
        TAU * (i - 1) as f64 / self.p as f64
    }

    pub fn offset(&self, j: i64) -> f64 {
        // j/q first so that s_q is exactly R
        self.radius * (j as f64 / self.q as f64)
    }

    pub fn ray(&self, nu: usize) -> RayId {
        let per = self.offsets_per_angle();
        let i = nu / per + 1;
        let j = (nu % per) as i64 - self.q as i64;
        RayId {
            i,
            j,
            phi: self.angle(i),
            s: self.offset(j),
        }
    }

    pub fn rays(&self) -> impl Iterator<Item = RayId> + '_ {
        (0..self.len()).map(move |nu| self.ray(nu))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelHeader {
    rows: usize,
    cols: usize,
    h: f64,
    #[serde(rename = "R")]
    radius: f64,
    channel: String,
    units: String,
}

fn channel_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let mut json = prefix.as_os_str().to_owned();
    json.push(".json");
    let mut bin = prefix.as_os_str().to_owned();
    bin.push(".bin");
    (PathBuf::from(json), PathBuf::from(bin))
}

/// Writes one channel as `<prefix>.bin` (little-endian f64, row-major) and a
/// `<prefix>.json` header.
pub fn write_channel(
    prefix: &Path,
    grid: &GridSpec,
    channel: &str,
    units: &str,
    values: &[f64],
) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Data(format!(
            "{} values for a grid of {} pixels",
            values.len(),
            grid.len()
        )));
    }
    let header = ChannelHeader {
        rows: grid.rows,
        cols: grid.cols,
        h: grid.pixel,
        radius: grid.radius,
        channel: channel.to_owned(),
        units: units.to_owned(),
    };
    let (json, bin) = channel_paths(prefix);
    fs::write(json, serde_json::to_string_pretty(&header)? + "\n")?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(bin, bytes)?;
    Ok(())
}

/// Reads a channel written by [`write_channel`]; returns grid, channel name,
/// units and values.
pub fn read_channel(prefix: &Path) -> Result<(GridSpec, String, String, Vec<f64>)> {
    let (json, bin) = channel_paths(prefix);
    let header: ChannelHeader = serde_json::from_str(&fs::read_to_string(json)?)?;
    let grid = GridSpec::new(header.radius, header.rows, header.cols, header.h)?;
    let bytes = fs::read(bin)?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Data(format!(
            "channel payload has {} bytes, expected {}",
            bytes.len(),
            grid.len() * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((grid, header.channel, header.units, values))
}

/// Writes the field as `<prefix>_n.{json,bin}` (n − 1) and
/// `<prefix>_alpha.{json,bin}` (α in cm⁻¹).
pub fn write_field(prefix: &Path, field: &MaterialField) -> Result<()> {
    let base = prefix.as_os_str().to_owned();
    let mut n = base.clone();
    n.push("_n");
    let mut a = base;
    a.push("_alpha");
    write_channel(Path::new(&n), &field.grid, "n_minus_1", "1", &field.n_minus_1)?;
    let alpha_cm: Vec<f64> = field.alpha.iter().map(|&v| alpha_mm_to_cm(v)).collect();
    write_channel(Path::new(&a), &field.grid, "alpha", "cm^-1", &alpha_cm)
}

pub fn read_field(prefix: &Path) -> Result<MaterialField> {
    let base = prefix.as_os_str().to_owned();
    let mut n = base.clone();
    n.push("_n");
    let mut a = base;
    a.push("_alpha");
    let (grid, _, _, dn) = read_channel(Path::new(&n))?;
    let (grid_a, _, units, alpha_cm) = read_channel(Path::new(&a))?;
    if grid != grid_a {
        return Err(Error::Data("n and alpha channels have different grids".into()));
    }
    if units != "cm^-1" {
        return Err(Error::Data(format!("alpha channel in unexpected units {units}")));
    }
    MaterialField::from_channels(grid, dn, alpha_cm.into_iter().map(alpha_cm_to_mm).collect())
}
