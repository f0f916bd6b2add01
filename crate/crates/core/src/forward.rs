//! Synthetic measurements: refracted-ray transmission and path difference.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::InterfaceSet;
use crate::model::{absorbance_from_tau, IndexField, MaterialField, ScanGeometry};
use crate::raytrace::{trace, traverse_pixels, TraceOptions};

/// One measured ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayRecord {
    pub i: usize,
    pub j: i64,
    pub phi: f64,
    pub s: f64,
    /// Transmission coefficient τ = I/I₀.
    pub tau: f64,
    /// Path difference d, mm.
    pub d: f64,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub geometry: ScanGeometry,
    pub records: Vec<RayRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub trace: TraceOptions,
    /// When set, rays whose exit direction deviates from the emitted
    /// direction by more than this angle (rad) miss the detector: τ = 0.
    pub miss_angle: Option<f64>,
}

impl ForwardOptions {
    pub fn for_field(field: &MaterialField) -> Self {
        ForwardOptions {
            trace: TraceOptions::for_grid(&field.grid),
            miss_angle: None,
        }
    }
}

/// Simulates the scan with indices probed from the pixel field itself.
pub fn simulate(field: &MaterialField, set: &InterfaceSet, geom: &ScanGeometry) -> Result<Sinogram> {
    simulate_with_probe(field, set, geom, field, &ForwardOptions::for_field(field))
}

/// Simulates the scan, taking refractive indices at interfaces from `probe`
/// (e.g. an analytic phantom) and line integrals from `field`.
pub fn simulate_with_probe<P: IndexField + ?Sized>(
    field: &MaterialField,
    set: &InterfaceSet,
    geom: &ScanGeometry,
    probe: &P,
    opts: &ForwardOptions,
) -> Result<Sinogram> {
    let r = geom.radius;
    if (field.grid.radius - r).abs() > 1e-9 * r || (set.radius() - r).abs() > 1e-9 * r {
        return Err(Error::Config(format!(
            "scan radius {r} does not match grid radius {} / interface radius {}",
            field.grid.radius,
            set.radius()
        )));
    }
    let records = (0..geom.len())
        .into_par_iter()
        .map(|nu| {
            let id = geom.ray(nu);
            let path = trace(set, probe, id.phi, id.s, r, &opts.trace)?;
            let row = traverse_pixels(&path, &field.grid);
            let attenuation = (-row.dot(&field.alpha)).exp();
            let mut tau = attenuation * row.c_abs;
            if let Some(limit) = opts.miss_angle {
                let emitted = path.partials[0].direction();
                let exit = path.exit_direction();
                if emitted.dot(exit).clamp(-1.0, 1.0).acos() > limit {
                    tau = 0.0;
                }
            }
            Ok(RayRecord {
                i: id.i,
                j: id.j,
                phi: id.phi,
                s: id.s,
                tau,
                d: row.dot(&field.n_minus_1),
                valid: row.valid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sinogram {
        geometry: *geom,
        records,
    })
}

impl Sinogram {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tau(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tau).collect()
    }

    pub fn path_difference(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.d).collect()
    }

    /// g_ref = d.
    pub fn g_ref(&self) -> Vec<f64> {
        self.path_difference()
    }

    /// g_abs = ln(1/τ); `None` where τ is zero or the ray is invalid.
    pub fn g_abs(&self) -> Vec<Option<f64>> {
        self.records
            .iter()
            .map(|r| if r.valid { absorbance_from_tau(r.tau) } else { None })
            .collect()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.valid).collect()
    }

    /// Element-wise `a·self + b·other` on τ and d; validity is the conjunction.
    pub fn combine(&self, a: f64, other: &Sinogram, b: f64) -> Result<Sinogram> {
        if self.geometry != other.geometry {
            return Err(Error::Data("sinograms have different scan geometries".into()));
        }
        let records = self
            .records
            .iter()
            .zip(&other.records)
            .map(|(x, y)| RayRecord {
                tau: a * x.tau + b * y.tau,
                d: a * x.d + b * y.d,
                valid: x.valid && y.valid,
                ..*x
            })
            .collect();
        Ok(Sinogram {
            geometry: self.geometry,
            records,
        })
    }

    /// Adds zero-mean uniform noise to τ and d, scaled so that each channel's
    /// relative ℓ2 perturbation over valid rays equals `level`. τ is clamped
    /// to [0, 1] and the scale of its noise is solved for after clamping.
    pub fn add_noise(&self, level: f64, seed: u64) -> Result<Sinogram> {
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::Config(format!("noise level {level} must be non-negative")));
        }
        let mut out = self.clone();
        if level == 0.0 {
            return Ok(out);
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&k| self.records[k].valid).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u_tau: Vec<f64> = idx.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let u_d: Vec<f64> = idx.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();

        let d: Vec<f64> = idx.iter().map(|&k| self.records[k].d).collect();
        let (dn, un) = (norm(&d), norm(&u_d));
        if dn > 0.0 && un > 0.0 {
            let c = level * dn / un;
            for (&k, u) in idx.iter().zip(&u_d) {
                out.records[k].d += c * u;
            }
        }

        let tau: Vec<f64> = idx.iter().map(|&k| self.records[k].tau).collect();
        let tn = norm(&tau);
        if tn > 0.0 {
            let c = calibrate_clamped(&tau, &u_tau, level * tn);
            for (&k, u) in idx.iter().zip(&u_tau) {
                out.records[k].tau = (self.records[k].tau + c * u).clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }

    /// Writes the `i,j,phi_rad,s_mm,tau,d_mm,valid` CSV. Floats use the
    /// shortest representation that reads back bit-exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(CsvRow::from(r))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Sinogram> {
        let mut rd = csv::Reader::from_reader(r);
        let mut records = Vec::new();
        for row in rd.deserialize::<CsvRow>() {
            records.push(row?.into_record()?);
        }
        if records.is_empty() {
            return Err(Error::Data("sinogram has no records".into()));
        }
        let p = records.iter().map(|r| r.i).max().unwrap_or(0);
        let q = records.iter().map(|r| r.j).max().unwrap_or(0);
        if q < 1 {
            return Err(Error::Data("sinogram needs offsets j = -q..q with q >= 1".into()));
        }
        let radius = records
            .iter()
            .find(|r| r.j == q)
            .map(|r| r.s)
            .ok_or_else(|| Error::Data("no record with j = q".into()))?;
        let geometry = ScanGeometry::new(p, q as usize, radius)
            .map_err(|e| Error::Data(format!("inconsistent scan geometry: {e}")))?;
        if records.len() != geometry.len() {
            return Err(Error::Data(format!(
                "expected {} records for p={p}, q={q}, found {}",
                geometry.len(),
                records.len()
            )));
        }
        for (nu, r) in records.iter().enumerate() {
            let id = geometry.ray(nu);
            if id.i != r.i || id.j != r.j {
                return Err(Error::Data(format!(
                    "record {nu} is (i={}, j={}), expected (i={}, j={})",
                    r.i, r.j, id.i, id.j
                )));
            }
            if (id.phi - r.phi).abs() > 1e-9 || (id.s - r.s).abs() > 1e-9 * radius {
                return Err(Error::Data(format!("record {nu} does not lie on the parallel scan grid")));
            }
        }
        Ok(Sinogram { geometry, records })
    }
}

/// Relative ℓ2 difference ‖a − b‖ / ‖b‖.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Finds c with ‖clamp(τ + c·u, 0, 1) − τ‖ = target by bisection; the map is
/// continuous and non-decreasing in c.
fn calibrate_clamped(tau: &[f64], u: &[f64], target: f64) -> f64 {
    let perturbation = |c: f64| {
        tau.iter()
            .zip(u)
            .map(|(&t, &x)| {
                let e = (t + c * x).clamp(0.0, 1.0) - t;
                e * e
            })
            .sum::<f64>()
            .sqrt()
    };
    let un = norm(u);
    if un == 0.0 {
        return 0.0;
    }
    let mut hi = target / un;
    let mut grow = 0;
    while perturbation(hi) < target && grow < 60 {
        hi *= 2.0;
        grow += 1;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if perturbation(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsvRow {
    i: usize,
    j: i64,
    phi_rad: f64,
    s_mm: f64,
    tau: f64,
    d_mm: f64,
    valid: u8,
}

impl From<&RayRecord> for CsvRow {
    fn from(r: &RayRecord) -> Self {
        CsvRow {
            i: r.i,
            j: r.j,
            phi_rad: r.phi,
            s_mm: r.s,
            tau: r.tau,
            d_mm: r.d,
            valid: u8::from(r.valid),
        }
    }
}

impl CsvRow {
    fn into_record(self) -> Result<RayRecord> {
        let valid = match self.valid {
            0 => false,
            1 => true,
            v => return Err(Error::Data(format!("valid flag must be 0 or 1, got {v}"))),
        };
        if !self.d_mm.is_finite() || !self.tau.is_finite() {
            return Err(Error::Data(format!("non-finite measurement at i={}, j={}", self.i, self.j)));
        }
        Ok(RayRecord {
            i: self.i,
            j: self.j,
            phi: self.phi_rad,
            s: self.s_mm,
            tau: self.tau,
            d: self.d_mm,
            valid,
        })
    }
}
