use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use thz_core::experiment::{run_compare, write_sweep_log, ExperimentManifest};
use thz_core::fbp::{fbp_reconstruct, FilterKind, FilterSpec};
use thz_core::forward::{simulate_with_probe, ForwardOptions, Sinogram};
use thz_core::geometry::DEFAULT_TOL_GEOM;
use thz_core::image::{write_pgm, GreyMap};
use thz_core::model::{alpha_mm_to_cm, read_field, write_field};
use thz_core::phantom::{Phantom, GLUED_BLOCK_DEFAULT_ALPHA, GLUED_BLOCK_DEFAULT_N};
use thz_core::raytrace::{trace, TraceOptions, DEFAULT_REFRACTION_CAP};
use thz_core::recon::{conventional_art, modified_art, ArtConfig, ReconConfig, SweepOrder};
use thz_core::{Error, GridSpec, IndexField, InterfaceSet, MaterialField, ScanGeometry};

/// Refraction-aware terahertz tomography: phantoms, forward simulation and
/// reconstruction with FBP, ART and modified ART.
#[derive(Parser)]
#[command(name = "thz", version)]
struct Cli {
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a phantom and write its grids, interfaces and images.
    Phantom(PhantomArgs),
    /// Simulate a (noisy) sinogram of a phantom.
    Forward(ForwardArgs),
    /// Reconstruct (n − 1, α) from a sinogram.
    Recon(ReconArgs),
    /// Run FBP, ART and modified ART on one manifest and compare them.
    Compare(CompareArgs),
    /// Dump the refracted polyline of a single ray as CSV.
    TraceDebug(TraceArgs),
}

#[derive(Args)]
struct PhantomSource {
    /// `builtin:paper`, `builtin:glued-block`, `builtin:air` or a phantom JSON file.
    #[arg(long, default_value = "builtin:paper")]
    phantom: String,
    /// Indices of the five glued blocks, left to right.
    #[arg(long, value_delimiter = ',')]
    block_n: Option<Vec<f64>>,
    /// Absorption of the five glued blocks in 1/cm.
    #[arg(long, value_delimiter = ',')]
    block_alpha: Option<Vec<f64>>,
}

impl PhantomSource {
    fn load(&self) -> Result<Phantom, Error> {
        let five = |v: &Option<Vec<f64>>, default: [f64; 5]| -> Result<[f64; 5], Error> {
            match v {
                None => Ok(default),
                Some(v) => v
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Config("glued block needs exactly five values".into())),
            }
        };
        let ph = match self.phantom.as_str() {
            "builtin:paper" => Phantom::paper(),
            "builtin:air" => Phantom::air(Phantom::paper().radius),
            "builtin:glued-block" => Phantom::glued_block(
                five(&self.block_n, GLUED_BLOCK_DEFAULT_N)?,
                five(&self.block_alpha, GLUED_BLOCK_DEFAULT_ALPHA)?,
            ),
            path => Phantom::from_json(&fs::read_to_string(path)?)?,
        };
        ph.validate()?;
        Ok(ph)
    }
}

#[derive(Args)]
struct PhantomArgs {
    #[command(flatten)]
    source: PhantomSource,
    /// Pixels per side of the square grid covering the disk.
    #[arg(long, default_value_t = 141)]
    size: usize,
    /// Output prefix; writes `<out>_n.*`, `<out>_alpha.*`, `<out>_interfaces.json`,
    /// `<out>_phantom.json` and PGM images.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForwardArgs {
    #[command(flatten)]
    source: PhantomSource,
    /// Number of angles over [0, 2π).
    #[arg(long, default_value_t = 360)]
    p: usize,
    /// Offsets per side; 2q+1 offsets per angle.
    #[arg(long, default_value_t = 70)]
    q: usize,
    /// Pixels per side of the simulation grid (before refinement).
    #[arg(long, default_value_t = 141)]
    size: usize,
    /// Simulate on a grid this many times finer.
    #[arg(long, default_value_t = 2)]
    refine: usize,
    /// Relative ℓ2 noise level per channel.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rays bent by more than this angle (rad) miss the detector.
    #[arg(long)]
    miss_angle: Option<f64>,
    /// Output sinogram CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Fbp,
    Art,
    Mart,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Natural,
    Random,
}

#[derive(Args)]
struct ReconArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    sinogram: PathBuf,
    /// Interface file (JSON list of segments and arcs); required for mart.
    #[arg(long)]
    interfaces: Option<PathBuf>,
    /// Reconstruction grid as rows,cols,h (mm). Defaults to 141 pixels covering the disk.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Inner iterations per outer sweep (mart) or the single iteration count (art).
    #[arg(long, value_delimiter = ',')]
    psi: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    lambda_ref: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambda_abs: Option<Vec<f64>>,
    #[arg(long)]
    eps_miss: Option<f64>,
    #[arg(long)]
    exterior_reset: bool,
    /// Skip the Fresnel-loss correction of the absorption data.
    #[arg(long)]
    no_fresnel: bool,
    #[arg(long, value_enum, default_value = "natural")]
    order: Order,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// FBP filter.
    #[arg(long, default_value = "shepp-logan")]
    filter: String,
    #[arg(long, default_value_t = 1.0)]
    cutoff: f64,
    /// JSON config whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; falls back to the manifest's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    source: PhantomSource,
    /// Trace through a reconstructed field (prefix of `_n`/`_alpha` files)
    /// with the given interface file instead of the analytic phantom.
    #[arg(long, requires = "interfaces")]
    field: Option<PathBuf>,
    #[arg(long)]
    interfaces: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    phi: f64,
    #[arg(long, allow_negative_numbers = true)]
    s: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Geometry(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
        Error::EmptyData | Error::Domain(_) | Error::GrazingIncidence | Error::DegenerateCorner { .. } => 4,
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_images(prefix: &Path, field: &MaterialField) -> Result<(), Error> {
    let alpha_cm: Vec<f64> = field.alpha.iter().map(|&a| alpha_mm_to_cm(a)).collect();
    let mut ranges = serde_json::Map::new();
    for (suffix, values) in [("_n.pgm", &field.n_minus_1), ("_alpha.pgm", &alpha_cm)] {
        let map = GreyMap::fit(values);
        let path = with_suffix(prefix, suffix);
        write_pgm(
            BufWriter::new(fs::File::create(&path)?),
            field.grid.rows,
            field.grid.cols,
            values,
            map,
        )?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        ranges.insert(name, serde_json::to_value(map)?);
    }
    fs::write(with_suffix(prefix, "_images.json"), serde_json::to_string_pretty(&ranges)?)?;
    Ok(())
}

fn cmd_phantom(a: &PhantomArgs) -> Result<(), Error> {
    let ph = a.source.load()?;
    let grid = GridSpec::covering(ph.radius, a.size)?;
    let field = ph.rasterize(&grid);
    write_field(&a.out, &field)?;
    fs::write(
        with_suffix(&a.out, "_interfaces.json"),
        ph.interfaces(DEFAULT_TOL_GEOM)?.to_json()?,
    )?;
    fs::write(with_suffix(&a.out, "_phantom.json"), ph.to_json()?)?;
    write_images(&a.out, &field)
}

fn cmd_forward(a: &ForwardArgs) -> Result<(), Error> {
    let ph = a.source.load()?;
    let geom = ScanGeometry::new(a.p, a.q, ph.radius)?;
    if a.refine == 0 {
        return Err(Error::Config("refine must be at least 1".into()));
    }
    let grid = GridSpec::covering(ph.radius, a.size)?.refined(a.refine);
    let field = ph.rasterize(&grid);
    let set = ph.interfaces(DEFAULT_TOL_GEOM)?;
    let opts = ForwardOptions {
        trace: TraceOptions {
            cap: DEFAULT_REFRACTION_CAP,
            probe_eps: 1e-3 * grid.pixel,
        },
        miss_angle: a.miss_angle,
    };
    let sino = simulate_with_probe(&field, &set, &geom, &ph, &opts)?.add_noise(a.noise, a.seed)?;
    let invalid = sino.records.iter().filter(|r| !r.valid).count();
    log::info!("{} rays simulated, {invalid} truncated", sino.len());
    sino.write_csv(BufWriter::new(fs::File::create(&a.out)?))
}

/// Applies the keys of a JSON config file on top of a flag-derived value.
fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: T, config: Option<&Path>) -> Result<T, Error> {
    let Some(path) = config else {
        return Ok(base);
    };
    let mut value = serde_json::to_value(base)?;
    let patch: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let (Value::Object(target), Value::Object(patch)) = (&mut value, patch) else {
        return Err(Error::Config(format!("{} must contain a JSON object", path.display())));
    };
    for (k, v) in patch {
        target.insert(k, v);
    }
    Ok(serde_json::from_value(value)?)
}

fn cmd_recon(a: &ReconArgs) -> Result<(), Error> {
    let sino = Sinogram::read_csv(io::BufReader::new(fs::File::open(&a.sinogram)?))?;
    let radius = sino.geometry.radius;
    let grid = match &a.grid {
        None => GridSpec::covering(radius, 141)?,
        Some(g) => {
            if g.len() != 3 {
                return Err(Error::Config("--grid takes rows,cols,h".into()));
            }
            let whole = |v: f64| -> Result<usize, Error> {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Config(format!("grid dimension {v} is not a positive integer")))
                }
            };
            GridSpec::new(radius, whole(g[0])?, whole(g[1])?, g[2])?
        }
    };
    let order = match a.order {
        Order::Natural => SweepOrder::Natural,
        Order::Random => SweepOrder::Random,
    };
    let field = match a.method {
        Method::Fbp => {
            let kind = match a.filter.as_str() {
                "shepp-logan" => FilterKind::SheppLogan,
                "ram-lak" => FilterKind::RamLak,
                other => return Err(Error::Config(format!("unknown filter {other}"))),
            };
            let spec = overlay(FilterSpec { kind, cutoff: a.cutoff }, a.config.as_deref())?;
            fbp_reconstruct(&sino, &grid, &spec)?
        }
        Method::Art => {
            let d = ArtConfig::default();
            let first = |v: &Option<Vec<f64>>, fallback: f64| v.as_ref().and_then(|v| v.first().copied()).unwrap_or(fallback);
            let cfg = ArtConfig {
                iterations: a.psi.as_ref().and_then(|p| p.first().copied()).unwrap_or(d.iterations),
                lambda_ref: first(&a.lambda_ref, d.lambda_ref),
                lambda_abs: first(&a.lambda_abs, d.lambda_abs),
                eps_miss: a.eps_miss.unwrap_or(d.eps_miss),
                order,
                seed: a.seed,
            };
            let cfg = overlay(cfg, a.config.as_deref())?;
            conventional_art(&sino, &grid, &cfg)?
        }
        Method::Mart => {
            let path = a
                .interfaces
                .as_ref()
                .ok_or_else(|| Error::Config("--interfaces is required for mart".into()))?;
            let set = InterfaceSet::from_json(&fs::read_to_string(path)?, radius, DEFAULT_TOL_GEOM)?;
            let d = ReconConfig::default();
            let cfg = ReconConfig {
                psi: a.psi.clone().unwrap_or(d.psi),
                lambda_ref: a.lambda_ref.clone().unwrap_or(d.lambda_ref),
                lambda_abs: a.lambda_abs.clone().unwrap_or(d.lambda_abs),
                eps_miss: a.eps_miss.unwrap_or(d.eps_miss),
                exterior_reset: a.exterior_reset,
                order,
                seed: a.seed,
                fresnel_correction: !a.no_fresnel,
                refraction_cap: d.refraction_cap,
            };
            let cfg = overlay(cfg, a.config.as_deref())?;
            let out = modified_art(&sino, &set, &grid, &cfg)?;
            write_sweep_log(&with_suffix(&a.out, "_residuals.csv"), &out.log)?;
            out.field
        }
    };
    write_field(&a.out, &field)?;
    write_images(&a.out, &field)
}

fn cmd_compare(a: &CompareArgs) -> Result<(), Error> {
    let m = ExperimentManifest::from_json(&fs::read_to_string(&a.manifest)?)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let out = a
        .out
        .clone()
        .or_else(|| m.output.as_ref().map(|o| base.join(o)))
        .ok_or_else(|| Error::Config("no output directory: pass --out or set `output`".into()))?;
    let report = run_compare(&m, base, &out, a.force)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "method,channel,rel_l2_interior,rel_l2_global")?;
    for r in &report.rows {
        writeln!(stdout, "{},{},{},{}", r.method, r.channel, r.rel_l2_interior, r.rel_l2_global)?;
    }
    Ok(())
}

fn cmd_trace(a: &TraceArgs) -> Result<(), Error> {
    let ph;
    let field;
    let (set, probe, radius): (InterfaceSet, &dyn IndexField, f64) = match (&a.field, &a.interfaces) {
        (Some(prefix), Some(ifaces)) => {
            field = read_field(prefix)?;
            let r = field.grid.radius;
            (InterfaceSet::from_json(&fs::read_to_string(ifaces)?, r, DEFAULT_TOL_GEOM)?, &field, r)
        }
        _ => {
            ph = a.source.load()?;
            let set = match &a.interfaces {
                Some(path) => InterfaceSet::from_json(&fs::read_to_string(path)?, ph.radius, DEFAULT_TOL_GEOM)?,
                None => ph.interfaces(DEFAULT_TOL_GEOM)?,
            };
            (set, &ph, ph.radius)
        }
    };
    let opts = TraceOptions {
        cap: DEFAULT_REFRACTION_CAP,
        probe_eps: 1e-3,
    };
    let path = trace(&set, probe, a.phi, a.s, radius, &opts)?;
    match &a.out {
        Some(p) => path.write_csv(BufWriter::new(fs::File::create(p)?)),
        None => path.write_csv(io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Forward(a) => cmd_forward(a),
        Command::Recon(a) => cmd_recon(a),
        Command::Compare(a) => cmd_compare(a),
        Command::TraceDebug(a) => cmd_trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
