//! Refracted ray paths and their pixel traversal lengths.
//!
//! A ray enters the disk Ω on the straight line Γ(t) = s·ω(φ) + t·ω⊥(φ).
//! At every interface crossing the indices on both sides are probed from the
//! current field, Snell's law gives the refraction angle and the direction
//! angle is rotated by ±(γ₁ − γ₂). The next partial ray is again stored as an
//! (angle, offset) pair, so each partial is a straight chord in the same
//! parametrization as the first.

use std::f64::consts::TAU;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{HitFeature, InterfaceSet};
use crate::model::{GridSpec, IndexField};
use crate::optics::{probe_two_sided, snell, RefractionEvent};
use crate::vec2::Vec2;

/// Default cap on interface events per ray.
pub const DEFAULT_REFRACTION_CAP: usize = 64;
/// |⟨ω⊥, 𝔫⟩| below this counts as grazing incidence.
pub const GRAZING_TOL: f64 = 1e-9;

/// Straight piece of a ray: Γ(t) = s·ω(φ) + t·ω⊥(φ), t ∈ [t_start, t_end].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartialRay {
    pub phi: f64,
    /// Signed offset from the origin, mm.
    pub s: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl PartialRay {
    /// ω(φ) = (cos φ, sin φ).
    pub fn omega(&self) -> Vec2 {
        Vec2::from_angle(self.phi)
    }

    /// Propagation direction ω⊥(φ) = (−sin φ, cos φ).
    pub fn direction(&self) -> Vec2 {
        self.omega().perp()
    }

    pub fn point(&self, t: f64) -> Vec2 {
        self.omega() * self.s + self.direction() * t
    }

    pub fn start(&self) -> Vec2 {
        self.point(self.t_start)
    }

    pub fn end(&self) -> Vec2 {
        self.point(self.t_end)
    }

    pub fn length(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// One refraction at an interface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceEvent {
    pub point: Vec2,
    pub normal: Vec2,
    pub curve_index: usize,
    pub is_corner: bool,
    pub optics: RefractionEvent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayPath {
    pub partials: Vec<PartialRay>,
    pub events: Vec<InterfaceEvent>,
    /// The refraction cap was reached before the ray left the disk.
    pub truncated: bool,
}

impl RayPath {
    /// Number of intersected interfaces K̂.
    pub fn crossings(&self) -> usize {
        self.events.len()
    }

    /// C_abs = Π(1 − ρ).
    pub fn c_abs(&self) -> f64 {
        self.events.iter().map(|e| 1.0 - e.optics.rho).product()
    }

    pub fn length(&self) -> f64 {
        self.partials.iter().map(PartialRay::length).sum()
    }

    /// Polyline vertices: entry point, every crossing, exit point.
    pub fn vertices(&self) -> Vec<Vec2> {
        let mut v: Vec<Vec2> = self.partials.iter().map(PartialRay::start).collect();
        if let Some(last) = self.partials.last() {
            v.push(last.end());
        }
        v
    }

    pub fn exit_point(&self) -> Vec2 {
        self.partials.last().expect("path has a partial ray").end()
    }

    pub fn exit_direction(&self) -> Vec2 {
        self.partials.last().expect("path has a partial ray").direction()
    }

    /// CSV dump of the polyline and its events.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kind,index,x_mm,y_mm,gamma1_rad,gamma2_rad,rho")?;
        for (k, v) in self.vertices().iter().enumerate() {
            writeln!(w, "vertex,{k},{},{},,,", v.x, v.y)?;
        }
        for (k, e) in self.events.iter().enumerate() {
            writeln!(
                w,
                "event,{k},{},{},{},{},{}",
                e.point.x, e.point.y, e.optics.gamma1, e.optics.gamma2, e.optics.rho
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    pub cap: usize,
    /// Offset ε of the two-sided index probe, mm.
    pub probe_eps: f64,
}

impl TraceOptions {
    /// Cap of 64 events and ε = half the pixel side.
    pub fn for_grid(grid: &GridSpec) -> Self {
        TraceOptions {
            cap: DEFAULT_REFRACTION_CAP,
            probe_eps: 0.5 * grid.pixel,
        }
    }
}

/// New direction angle after refraction, φ_{l+1} = φ_l ± (γ₁ − γ₂).
///
/// The sign follows the four-way case split on ⟨ω⊥, 𝔫⟩ and ⟨ω⊥, 𝔫⊥⟩ with
/// 𝔫⊥ = (𝔫₂, −𝔫₁), i.e. 𝔫 rotated by −π/2. That orientation is the one for
/// which the table reproduces Snell's law in vector form.
pub fn refract_direction(
    phi: f64,
    gamma1: f64,
    gamma2: f64,
    unit_normal: Vec2,
    direction: Vec2,
) -> Result<f64> {
    let a = direction.dot(unit_normal);
    let normal_perp = Vec2::new(unit_normal.y, -unit_normal.x);
    let b = direction.dot(normal_perp);
    if a.abs() < GRAZING_TOL {
        return Err(Error::GrazingIncidence);
    }
    let turn = gamma1 - gamma2;
    let theta = if (a < 0.0 && b <= 0.0) || (a > 0.0 && b >= 0.0) {
        turn
    } else {
        -turn
    };
    Ok((phi + theta).rem_euclid(TAU))
}

/// Offset s_{l+1} of the line through `point` with normal direction ω(φ).
///
/// The magnitude is |cos φ·ξ₁ + sin φ·ξ₂|; the sign is chosen so that the
/// line actually contains `point`.
pub fn next_offset(phi: f64, point: Vec2) -> f64 {
    let omega = Vec2::from_angle(phi);
    let projection = omega.dot(point);
    let magnitude = projection.abs();
    if (projection - magnitude).abs() <= (projection + magnitude).abs() {
        magnitude
    } else {
        -magnitude
    }
}

/// Traces the refracted path of the ray (φ, s) from its entry into Ω until it
/// leaves the disk or `opts.cap` interface events have occurred.
pub fn trace<F: IndexField + ?Sized>(
    set: &InterfaceSet,
    field: &F,
    phi: f64,
    s: f64,
    radius: f64,
    opts: &TraceOptions,
) -> Result<RayPath> {
    if !(s.abs() <= radius) {
        return Err(Error::Domain(format!("offset {s} outside the disk of radius {radius}")));
    }
    if opts.cap == 0 {
        return Err(Error::Config("refraction cap must be at least 1".into()));
    }
    let chord = |s: f64| (radius * radius - s * s).max(0.0).sqrt();

    let mut partials = Vec::new();
    let mut events = Vec::new();
    let mut truncated = false;

    let mut current = PartialRay {
        phi,
        s,
        t_start: -chord(s),
        t_end: f64::NAN,
    };
    let mut cursor = current.t_start;
    loop {
        let origin = current.omega() * current.s;
        let dir = current.direction();
        let exit = chord(current.s);
        let hit = match set.nearest_hit(origin, dir, cursor) {
            Some(h) if h.t_hit < exit => h,
            _ => {
                current.t_end = exit.max(current.t_start);
                partials.push(current);
                break;
            }
        };
        if events.len() == opts.cap {
            truncated = true;
            current.t_end = hit.t_hit;
            partials.push(current);
            break;
        }
        let cos_in = dir.dot(hit.unit_normal);
        if cos_in.abs() < GRAZING_TOL {
            cursor = hit.t_hit;
            continue;
        }
        if let HitFeature::DegenerateCorner(_) = hit.feature {
            log::warn!(
                "ray (phi={phi}, s={s}) crosses degenerate corner at ({}, {}); passing straight",
                hit.point.x,
                hit.point.y
            );
            cursor = hit.t_hit;
            continue;
        }

        let (n1, n2) = probe_two_sided(field, hit.point, hit.unit_normal, dir, opts.probe_eps);
        // reconstructed estimates may dip below air; rays see physical media only
        let (n1, n2) = (n1.max(1.0), n2.max(1.0));
        let gamma1 = cos_in.abs().min(1.0).acos();
        let optics = snell(n1, n2, gamma1)?;
        let next_phi = refract_direction(
            current.phi,
            optics.gamma1,
            optics.gamma2,
            hit.unit_normal,
            dir,
        )?;

        current.t_end = hit.t_hit;
        partials.push(current);
        events.push(InterfaceEvent {
            point: hit.point,
            normal: hit.unit_normal,
            curve_index: hit.curve_index,
            is_corner: hit.is_corner(),
            optics,
        });

        let next_s = next_offset(next_phi, hit.point);
        let t_start = Vec2::from_angle(next_phi).perp().dot(hit.point);
        current = PartialRay {
            phi: next_phi,
            s: next_s,
            t_start,
            t_end: f64::NAN,
        };
        cursor = t_start;
    }

    Ok(RayPath {
        partials,
        events,
        truncated,
    })
}

/// One row a^ν of the system matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow {
    /// `(pixel, length in mm)` sorted by pixel index.
    pub entries: Vec<(usize, f64)>,
    pub c_abs: f64,
    pub valid: bool,
}

impl SparseRow {
    pub fn dot(&self, values: &[f64]) -> f64 {
        self.entries.iter().map(|&(mu, a)| a * values[mu]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, a)| a * a).sum()
    }

    pub fn total_length(&self) -> f64 {
        self.entries.iter().map(|&(_, a)| a).sum()
    }
}

/// Exact per-pixel chord lengths of the traced polyline.
pub fn traverse_pixels(path: &RayPath, grid: &GridSpec) -> SparseRow {
    let mut raw = Vec::new();
    for partial in &path.partials {
        segment_lengths(partial.start(), partial.end(), grid, &mut raw);
    }
    raw.sort_by_key(|&(mu, _)| mu);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
    for (mu, len) in raw {
        match entries.last_mut() {
            Some((last, acc)) if *last == mu => *acc += len,
            _ => entries.push((mu, len)),
        }
    }
    SparseRow {
        entries,
        c_abs: path.c_abs(),
        valid: !path.truncated,
    }
}

/// Siddon-style traversal of the segment p0→p1: parametric crossings with the
/// vertical and horizontal grid lines are merged in order and each interval
/// is attributed to the pixel containing its midpoint.
pub fn segment_lengths(p0: Vec2, p1: Vec2, grid: &GridSpec, out: &mut Vec<(usize, f64)>) {
    let d = p1 - p0;
    let len = d.norm();
    if len == 0.0 {
        return;
    }
    let (x_lo, x_hi) = (grid.x_min(), grid.x_min() + grid.width());
    let (y_hi, y_lo) = (grid.y_max(), grid.y_max() - grid.height());

    // Liang-Barsky clip to the grid rectangle
    let (mut a0, mut a1) = (0.0f64, 1.0f64);
    for (delta, lo, hi, start) in [(d.x, x_lo, x_hi, p0.x), (d.y, y_lo, y_hi, p0.y)] {
        if delta == 0.0 {
            if start < lo || start > hi {
                return;
            }
        } else {
            let ta = (lo - start) / delta;
            let tb = (hi - start) / delta;
            a0 = a0.max(ta.min(tb));
            a1 = a1.min(ta.max(tb));
        }
    }
    if a1 <= a0 {
        return;
    }

    let crossings = |delta: f64, start: f64, lo: f64, count: usize| -> Vec<f64> {
        if delta == 0.0 {
            return Vec::new();
        }
        let h = grid.pixel;
        let mut v: Vec<f64> = (0..=count)
            .map(|k| (lo + k as f64 * h - start) / delta)
            .filter(|&a| a > a0 && a < a1)
            .collect();
        if delta < 0.0 {
            v.reverse();
        }
        v
    };
    let xs = crossings(d.x, p0.x, x_lo, grid.cols);
    let ys = crossings(d.y, p0.y, y_lo, grid.rows);

    let mut prev = a0;
    let (mut i, mut j) = (0, 0);
    let mut emit = |next: f64, out: &mut Vec<(usize, f64)>| {
        if next > prev {
            let mid = p0 + d * (0.5 * (prev + next));
            out.push((clamped_pixel(grid, mid), (next - prev) * len));
            prev = next;
        }
    };
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) if x <= y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        emit(next, out);
    }
    emit(a1, out);
}

fn clamped_pixel(grid: &GridSpec, p: Vec2) -> usize {
    let c = ((p.x - grid.x_min()) / grid.pixel).floor();
    let r = ((grid.y_max() - p.y) / grid.pixel).floor();
    let c = (c.max(0.0) as usize).min(grid.cols - 1);
    let r = (r.max(0.0) as usize).min(grid.rows - 1);
    r * grid.cols + c
}
