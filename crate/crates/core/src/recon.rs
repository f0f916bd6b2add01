//! Kaczmarz-based reconstruction: conventional ART on straight rays and the
//! refraction-aware variant that rebuilds ray paths between outer sweeps.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::Sinogram;
use crate::geometry::InterfaceSet;
use crate::model::{GridSpec, IndexField, MaterialField, ScanGeometry};
use crate::raytrace::{trace, traverse_pixels, SparseRow, TraceOptions, DEFAULT_REFRACTION_CAP};

/// Rows a^ν in ray order together with their squared norms.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrix {
    pub rows: Vec<SparseRow>,
    pub norms_sq: Vec<f64>,
}

impl SystemMatrix {
    /// Traces every ray of `geom` through `set`, probing indices in `probe`.
    /// Rows that are truncated, have zero norm, or lose all intensity to
    /// reflection are marked invalid.
    pub fn build<P: IndexField + ?Sized>(
        set: &InterfaceSet,
        probe: &P,
        geom: &ScanGeometry,
        grid: &GridSpec,
        opts: &TraceOptions,
    ) -> Result<Self> {
        let rows = (0..geom.len())
            .into_par_iter()
            .map(|nu| {
                let id = geom.ray(nu);
                let path = trace(set, probe, id.phi, id.s, geom.radius, opts)?;
                let mut row = traverse_pixels(&path, grid);
                if row.norm_sq() == 0.0 || !(row.c_abs > 0.0) {
                    row.valid = false;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let norms_sq = rows.iter().map(SparseRow::norm_sq).collect();
        Ok(SystemMatrix { rows, norms_sq })
    }

    /// Straight lines, no Fresnel losses.
    pub fn straight(geom: &ScanGeometry, grid: &GridSpec) -> Result<Self> {
        struct Air;
        impl IndexField for Air {
            fn index_at(&self, _: crate::vec2::Vec2) -> f64 {
                1.0
            }
        }
        let set = InterfaceSet::empty(geom.radius);
        SystemMatrix::build(&set, &Air, geom, grid, &TraceOptions::for_grid(grid))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(values)).collect()
    }
}

/// Row visiting order within a Kaczmarz pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    #[default]
    Natural,
    /// One seeded random permutation, reused by every pass.
    Random,
}

fn row_order(n: usize, order: SweepOrder, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if order == SweepOrder::Random {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    idx
}

/// F ← F + λ (g^ν − ⟨a^ν, F⟩)/‖a^ν‖² · a^ν for every active row, repeated
/// `iterations` times. λ = 0 leaves F untouched.
pub fn kaczmarz_sweep(
    f: &mut [f64],
    a: &SystemMatrix,
    g: &[f64],
    active: &[bool],
    lambda: f64,
    iterations: usize,
    order: &[usize],
) {
    if lambda == 0.0 {
        return;
    }
    for _ in 0..iterations {
        for &nu in order {
            if active[nu] {
                kaczmarz_update(f, &a.rows[nu], a.norms_sq[nu], g[nu], lambda);
            }
        }
    }
}

#[inline]
fn kaczmarz_update(f: &mut [f64], row: &SparseRow, norm_sq: f64, g: f64, lambda: f64) {
    let residual = g - row.dot(f);
    let step = lambda * residual / norm_sq;
    for &(mu, a) in &row.entries {
        f[mu] += step * a;
    }
}

/// Both channels in one pass over the rows.
#[allow(clippy::too_many_arguments)]
fn dual_kaczmarz(
    f_ref: &mut [f64],
    f_abs: &mut [f64],
    a: &SystemMatrix,
    g_ref: &[f64],
    g_abs: &[f64],
    active: &[bool],
    lambda_ref: f64,
    lambda_abs: f64,
    iterations: usize,
    order: &[usize],
) {
    for _ in 0..iterations {
        for &nu in order {
            if !active[nu] {
                continue;
            }
            let (row, norm_sq) = (&a.rows[nu], a.norms_sq[nu]);
            if lambda_ref != 0.0 {
                kaczmarz_update(f_ref, row, norm_sq, g_ref[nu], lambda_ref);
            }
            if lambda_abs != 0.0 {
                kaczmarz_update(f_abs, row, norm_sq, g_abs[nu], lambda_abs);
            }
        }
    }
}

/// Rays kept after the miss filter: valid and τ > ε_miss.
pub fn filter_rays(sino: &Sinogram, eps_miss: f64) -> Vec<bool> {
    sino.records
        .iter()
        .map(|r| r.valid && r.tau > eps_miss)
        .collect()
}

fn check_lambda(l: f64) -> Result<()> {
    if !(0.0..2.0).contains(&l) {
        return Err(Error::Config(format!("relaxation {l} outside [0, 2)")));
    }
    Ok(())
}

fn check_eps_miss(e: f64) -> Result<()> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::Config(format!("eps_miss {e} outside [0, 1)")));
    }
    Ok(())
}

fn check_grid(sino: &Sinogram, grid: &GridSpec) -> Result<()> {
    let r = sino.geometry.radius;
    if (grid.radius - r).abs() > 1e-9 * r {
        return Err(Error::Config(format!(
            "grid radius {} does not match scan radius {r}",
            grid.radius
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtConfig {
    pub iterations: usize,
    pub lambda_ref: f64,
    pub lambda_abs: f64,
    pub eps_miss: f64,
    pub order: SweepOrder,
    pub seed: u64,
}

impl Default for ArtConfig {
    fn default() -> Self {
        ArtConfig {
            iterations: 15,
            lambda_ref: 0.005,
            lambda_abs: 0.005,
            eps_miss: 0.05,
            order: SweepOrder::Natural,
            seed: 0,
        }
    }
}

impl ArtConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda_ref)?;
        check_lambda(self.lambda_abs)?;
        check_eps_miss(self.eps_miss)
    }
}

/// Straight-ray ART on g_ref = d and g_abs = ln(1/τ).
pub fn conventional_art(sino: &Sinogram, grid: &GridSpec, cfg: &ArtConfig) -> Result<MaterialField> {
    cfg.validate()?;
    check_grid(sino, grid)?;
    let a = SystemMatrix::straight(&sino.geometry, grid)?;
    let mut active = filter_rays(sino, cfg.eps_miss);
    for (flag, row) in active.iter_mut().zip(&a.rows) {
        *flag &= row.valid;
    }
    if !active.iter().any(|&v| v) {
        return Err(Error::EmptyData);
    }
    let g_ref = sino.path_difference();
    let g_abs: Vec<f64> = sino.records.iter().map(|r| absorbance(1.0, r.tau)).collect();
    let order = row_order(a.len(), cfg.order, cfg.seed);
    let mut f_ref = vec![0.0; grid.len()];
    let mut f_abs = vec![0.0; grid.len()];
    dual_kaczmarz(
        &mut f_ref,
        &mut f_abs,
        &a,
        &g_ref,
        &g_abs,
        &active,
        cfg.lambda_ref,
        cfg.lambda_abs,
        cfg.iterations,
        &order,
    );
    MaterialField::from_channels(*grid, f_ref, f_abs)
}

/// ln(C/τ), zero for rays that will not be used.
fn absorbance(c_abs: f64, tau: f64) -> f64 {
    if tau > 0.0 && c_abs > 0.0 {
        (c_abs / tau).ln()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Inner Kaczmarz passes per outer sweep; its length is Ψ.
    pub psi: Vec<usize>,
    pub lambda_ref: Vec<f64>,
    pub lambda_abs: Vec<f64>,
    pub eps_miss: f64,
    pub exterior_reset: bool,
    pub order: SweepOrder,
    pub seed: u64,
    /// Divide the measured transmission by the modelled Fresnel losses.
    pub fresnel_correction: bool,
    pub refraction_cap: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            psi: vec![3, 3, 5, 7, 5],
            lambda_ref: vec![0.01, 0.01, 0.006, 0.002, 0.0],
            lambda_abs: vec![0.002, 0.004, 0.004, 0.004, 0.003],
            eps_miss: 0.05,
            exterior_reset: true,
            order: SweepOrder::Natural,
            seed: 0,
            fresnel_correction: true,
            refraction_cap: DEFAULT_REFRACTION_CAP,
        }
    }
}

impl ReconConfig {
    pub fn sweeps(&self) -> usize {
        self.psi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.psi.len();
        if k == 0 {
            return Err(Error::Config("at least one outer sweep is required".into()));
        }
        if self.lambda_ref.len() != k || self.lambda_abs.len() != k {
            return Err(Error::Config(format!(
                "psi has {k} entries but lambda_ref has {} and lambda_abs has {}",
                self.lambda_ref.len(),
                self.lambda_abs.len()
            )));
        }
        for &l in self.lambda_ref.iter().chain(&self.lambda_abs) {
            check_lambda(l)?;
        }
        check_eps_miss(self.eps_miss)?;
        if self.refraction_cap == 0 {
            return Err(Error::Config("refraction cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Data residuals after one outer sweep, over the rays used in that sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepLog {
    pub sweep: usize,
    pub active_rays: usize,
    pub residual_ref: f64,
    pub residual_abs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconOutput {
    pub field: MaterialField,
    pub log: Vec<SweepLog>,
}

/// Refraction-aware ART.
///
/// Each outer sweep traces all rays through the current index estimate,
/// corrects the absorption data for the modelled Fresnel losses, zeroes the
/// estimate outside the object footprint and runs the inner passes on both
/// channels. The first sweep starts from air, so it sees straight rays.
pub fn modified_art(
    sino: &Sinogram,
    set: &InterfaceSet,
    grid: &GridSpec,
    cfg: &ReconConfig,
) -> Result<ReconOutput> {
    cfg.validate()?;
    check_grid(sino, grid)?;
    let n = grid.len();
    let measured = filter_rays(sino, cfg.eps_miss);
    if !measured.iter().any(|&v| v) {
        return Err(Error::EmptyData);
    }
    let exterior: Option<Vec<bool>> = (cfg.exterior_reset && !set.is_empty())
        .then(|| set.footprint(grid).into_iter().map(|inside| !inside).collect());
    let reset = |f: &mut MaterialField| {
        if let Some(mask) = &exterior {
            for mu in (0..n).filter(|&mu| mask[mu]) {
                f.n_minus_1[mu] = 0.0;
                f.alpha[mu] = 0.0;
            }
        }
    };

    let g_ref = sino.path_difference();
    let order = row_order(sino.len(), cfg.order, cfg.seed);
    let opts = TraceOptions {
        cap: cfg.refraction_cap,
        probe_eps: 0.5 * grid.pixel,
    };
    let mut field = MaterialField::air(*grid);
    let mut log = Vec::with_capacity(cfg.sweeps());

    for sweep in 0..cfg.sweeps() {
        let a = SystemMatrix::build(set, &field, &sino.geometry, grid, &opts)?;
        let active: Vec<bool> = measured.iter().zip(&a.rows).map(|(&m, r)| m && r.valid).collect();
        let active_rays = active.iter().filter(|&&v| v).count();
        if active_rays == 0 {
            return Err(Error::EmptyData);
        }
        let g_abs: Vec<f64> = sino
            .records
            .iter()
            .zip(&a.rows)
            .map(|(r, row)| {
                let c = if cfg.fresnel_correction { row.c_abs } else { 1.0 };
                absorbance(c, r.tau)
            })
            .collect();

        reset(&mut field);
        dual_kaczmarz(
            &mut field.n_minus_1,
            &mut field.alpha,
            &a,
            &g_ref,
            &g_abs,
            &active,
            cfg.lambda_ref[sweep],
            cfg.lambda_abs[sweep],
            cfg.psi[sweep],
            &order,
        );
        // keeps the exterior at zero between sweeps as well
        reset(&mut field);

        let residual = |g: &[f64], f: &[f64]| {
            (0..a.len())
                .filter(|&nu| active[nu])
                .map(|nu| {
                    let r = g[nu] - a.rows[nu].dot(f);
                    r * r
                })
                .sum::<f64>()
                .sqrt()
        };
        let entry = SweepLog {
            sweep: sweep + 1,
            active_rays,
            residual_ref: residual(&g_ref, &field.n_minus_1),
            residual_abs: residual(&g_abs, &field.alpha),
        };
        log::info!(
            "sweep {}: {} rays, residual ref {:.6e}, abs {:.6e}",
            entry.sweep,
            entry.active_rays,
            entry.residual_ref,
            entry.residual_abs
        );
        log.push(entry);
    }
    Ok(ReconOutput { field, log })
}
