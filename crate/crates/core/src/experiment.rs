//! Reproducible comparison runs: phantom → noisy sinogram → FBP, ART and
//! modified ART, with error maps and a summary table.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::{fbp_reconstruct, FilterSpec};
use crate::forward::{simulate_with_probe, ForwardOptions, Sinogram};
use crate::geometry::{InterfaceSet, DEFAULT_TOL_GEOM};
use crate::image::{write_pgm, GreyMap};
use crate::model::{alpha_mm_to_cm, write_channel, write_field, GridSpec, MaterialField, ScanGeometry};
use crate::phantom::{Phantom, GLUED_BLOCK_DEFAULT_ALPHA, GLUED_BLOCK_DEFAULT_N, PAPER_RADIUS};
use crate::raytrace::{TraceOptions, DEFAULT_REFRACTION_CAP};
use crate::recon::{conventional_art, modified_art, ArtConfig, ReconConfig, SweepLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    /// `builtin:paper`, `builtin:glued-block`, `builtin:air`, or a phantom
    /// file path relative to the manifest.
    pub phantom: String,
    pub geometry: ScanGeometry,
    /// Reconstruction grid is `grid_size × grid_size` pixels covering Ω.
    pub grid_size: usize,
    /// The forward model runs on a grid this many times finer.
    #[serde(default = "default_refine")]
    pub forward_refine: usize,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub mart: ReconConfig,
    #[serde(default)]
    pub art: ArtConfig,
    #[serde(default)]
    pub fbp: FilterSpec,
    /// Interior masks exclude pixels closer than this many pixels to an interface.
    #[serde(default = "default_margin")]
    pub interior_margin: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_refine() -> usize {
    2
}

fn default_margin() -> f64 {
    2.0
}

impl ExperimentManifest {
    /// The circle-and-rectangle experiment at full scale.
    pub fn paper() -> Self {
        ExperimentManifest {
            phantom: "builtin:paper".into(),
            geometry: ScanGeometry {
                p: 360,
                q: 70,
                radius: PAPER_RADIUS,
            },
            grid_size: 141,
            forward_refine: 2,
            noise: NoiseSpec {
                level: 0.05,
                seed: 2024,
            },
            mart: ReconConfig::default(),
            art: ArtConfig::default(),
            fbp: FilterSpec::default(),
            interior_margin: 2.0,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ExperimentManifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        ScanGeometry::new(self.geometry.p, self.geometry.q, self.geometry.radius)?;
        if self.grid_size == 0 || self.forward_refine == 0 {
            return Err(Error::Config("grid_size and forward_refine must be positive".into()));
        }
        if !(self.noise.level >= 0.0) {
            return Err(Error::Config(format!("noise level {} must be >= 0", self.noise.level)));
        }
        self.mart.validate()?;
        self.art.validate()?;
        self.fbp.validate()
    }

    pub fn load_phantom(&self, base: &Path) -> Result<Phantom> {
        let ph = match self.phantom.as_str() {
            "builtin:paper" => Phantom::paper(),
            "builtin:glued-block" => Phantom::glued_block(GLUED_BLOCK_DEFAULT_N, GLUED_BLOCK_DEFAULT_ALPHA),
            "builtin:air" => Phantom::air(self.geometry.radius),
            path => Phantom::from_json(&fs::read_to_string(base.join(path))?)?,
        };
        if (ph.radius - self.geometry.radius).abs() > 1e-9 * ph.radius {
            return Err(Error::Config(format!(
                "phantom radius {} differs from scan radius {}",
                ph.radius, self.geometry.radius
            )));
        }
        Ok(ph)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::covering(self.geometry.radius, self.grid_size)
    }
}

/// Everything the three methods share.
pub struct Prepared {
    pub phantom: Phantom,
    pub interfaces: InterfaceSet,
    pub grid: GridSpec,
    pub truth: MaterialField,
    pub clean: Sinogram,
    pub sinogram: Sinogram,
}

/// Rasterizes the phantom, simulates on the refined grid with the analytic
/// index probe and adds the configured noise.
pub fn prepare(m: &ExperimentManifest, base: &Path) -> Result<Prepared> {
    m.validate()?;
    let phantom = m.load_phantom(base)?;
    let interfaces = phantom.interfaces(DEFAULT_TOL_GEOM)?;
    let grid = m.grid()?;
    let truth = phantom.rasterize(&grid);
    let fine = phantom.rasterize(&grid.refined(m.forward_refine));
    let opts = ForwardOptions {
        trace: TraceOptions {
            cap: DEFAULT_REFRACTION_CAP,
            probe_eps: 1e-3 * fine.grid.pixel,
        },
        miss_angle: None,
    };
    let clean = simulate_with_probe(&fine, &interfaces, &m.geometry, &phantom, &opts)?;
    let sinogram = clean.add_noise(m.noise.level, m.noise.seed)?;
    Ok(Prepared {
        phantom,
        interfaces,
        grid,
        truth,
        clean,
        sinogram,
    })
}

/// Pixels whose centre lies inside a phantom region and at least
/// `margin_px` pixels away from every interface.
pub fn interior_mask(phantom: &Phantom, set: &InterfaceSet, grid: &GridSpec, margin_px: f64) -> Vec<bool> {
    (0..grid.len())
        .map(|mu| {
            let c = grid.pixel_center(mu);
            c.norm() < grid.radius
                && phantom.region_at(c).is_some()
                && set.distance_to(c) >= margin_px * grid.pixel
        })
        .collect()
}

/// ‖rec − truth‖₂ / ‖truth‖₂ over the masked pixels; the absolute norm when
/// the truth vanishes there.
pub fn relative_error(rec: &[f64], truth: &[f64], mask: Option<&[bool]>) -> f64 {
    let keep = |mu: usize| mask.is_none_or(|m| m[mu]);
    let (mut num, mut den) = (0.0, 0.0);
    for mu in (0..truth.len()).filter(|&mu| keep(mu)) {
        num += (rec[mu] - truth[mu]).powi(2);
        den += truth[mu].powi(2);
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub channel: String,
    pub rel_l2_interior: f64,
    pub rel_l2_global: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<SummaryRow>,
    pub mart_log: Vec<SweepLog>,
}

impl CompareReport {
    pub fn error(&self, method: &str, channel: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.channel == channel)
    }
}

#[derive(Serialize)]
struct ImageEntry {
    file: String,
    lo: f64,
    hi: f64,
    units: String,
}

/// Runs all three methods on the same sinogram and writes the results to
/// `out`. A non-empty `out` is only reused with `force`.
pub fn run_compare(m: &ExperimentManifest, base: &Path, out: &Path, force: bool) -> Result<CompareReport> {
    if out.exists() && fs::read_dir(out)?.next().is_some() && !force {
        return Err(Error::Config(format!(
            "output directory {} is not empty (use force to overwrite)",
            out.display()
        )));
    }
    let prep = prepare(m, base)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.json"), m.to_json()?)?;
    prep.sinogram
        .write_csv(BufWriter::new(fs::File::create(out.join("sinogram.csv"))?))?;
    write_field(&out.join("truth"), &prep.truth)?;

    let fbp_sino = prep.sinogram.clone();
    let fbp = fbp_reconstruct(&fbp_sino, &prep.grid, &m.fbp)?;
    let art = conventional_art(&prep.sinogram, &prep.grid, &m.art)?;
    let mart = modified_art(&prep.sinogram, &prep.interfaces, &prep.grid, &m.mart)?;

    let interior = interior_mask(&prep.phantom, &prep.interfaces, &prep.grid, m.interior_margin);
    let inside: Vec<bool> = (0..prep.grid.len())
        .map(|mu| prep.grid.pixel_center(mu).norm() < prep.grid.radius)
        .collect();
    let mut rows = Vec::new();
    let mut images = Vec::new();
    let truth_alpha_cm: Vec<f64> = prep.truth.alpha.iter().map(|&a| alpha_mm_to_cm(a)).collect();
    let n_map = GreyMap::fit(&prep.truth.n_minus_1);
    let a_map = GreyMap::fit(&truth_alpha_cm);
    for (name, field) in [("fbp", &fbp), ("art", &art), ("mart", &mart.field)] {
        write_field(&out.join(name), field)?;
        let alpha_cm: Vec<f64> = field.alpha.iter().map(|&a| alpha_mm_to_cm(a)).collect();
        for (channel, rec, truth, map, units) in [
            ("n", &field.n_minus_1, &prep.truth.n_minus_1, n_map, "1"),
            ("alpha", &alpha_cm, &truth_alpha_cm, a_map, "1/cm"),
        ] {
            rows.push(SummaryRow {
                method: name.into(),
                channel: channel.into(),
                rel_l2_interior: relative_error(rec, truth, Some(&interior)),
                rel_l2_global: relative_error(rec, truth, Some(&inside)),
            });
            let err: Vec<f64> = rec.iter().zip(truth.iter()).map(|(r, t)| (r - t).abs()).collect();
            let err_map = GreyMap::fit(&err);
            write_channel(&out.join(format!("{name}_{channel}_abserr")), &prep.grid, channel, units, &err)?;
            for (file, values, map) in [
                (format!("{name}_{channel}.pgm"), rec.as_slice(), map),
                (format!("{name}_{channel}_abserr.pgm"), err.as_slice(), err_map),
            ] {
                write_pgm(
                    BufWriter::new(fs::File::create(out.join(&file))?),
                    prep.grid.rows,
                    prep.grid.cols,
                    values,
                    map,
                )?;
                images.push(ImageEntry {
                    file,
                    lo: map.lo,
                    hi: map.hi,
                    units: units.into(),
                });
            }
        }
    }
    fs::write(out.join("images.json"), serde_json::to_string_pretty(&images)?)?;

    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_sweep_log(&out.join("mart_residuals.csv"), &mart.log)?;

    Ok(CompareReport {
        rows,
        mart_log: mart.log,
    })
}

pub fn write_sweep_log(path: &Path, log: &[SweepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for entry in log {
        w.serialize(entry)?;
    }
    w.flush()?;
    Ok(())
}
