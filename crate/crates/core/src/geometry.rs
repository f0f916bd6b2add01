//! A-priori interface curves and ray–interface queries.
//!
//! Interfaces are line segments and circular arcs. Each curve carries a
//! parametrization Ξ(σ) whose rotated tangent 𝔫 = (−ξ₂′, ξ₁′) is the curve
//! normal. Orientation is whatever the parametrization gives; callers never
//! assume the normal points outward.
//!
//! Points where two or more curves meet are registered as corners when the
//! set is built. A hit landing on a corner reports the normalized sum of the
//! meeting curves' normals instead of a single curve normal.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GridSpec;
use crate::vec2::Vec2;

pub const DEFAULT_TOL_GEOM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InterfaceCurve {
    /// Ξ(σ) = A + σ(B − A), σ ∈ [0, 1].
    Segment { a: Vec2, b: Vec2 },
    /// Ξ(σ) = c + r(cos σ, sin σ), σ ∈ [start, end] in radians.
    Arc {
        center: Vec2,
        radius: f64,
        start: f64,
        end: f64,
    },
}

impl InterfaceCurve {
    pub fn segment(a: Vec2, b: Vec2) -> Self {
        InterfaceCurve::Segment { a, b }
    }

    pub fn arc(center: Vec2, radius: f64, start: f64, end: f64) -> Self {
        InterfaceCurve::Arc {
            center,
            radius,
            start,
            end,
        }
    }

    pub fn circle(center: Vec2, radius: f64) -> Self {
        Self::arc(center, radius, 0.0, TAU)
    }

    pub fn param_range(&self) -> (f64, f64) {
        match *self {
            InterfaceCurve::Segment { .. } => (0.0, 1.0),
            InterfaceCurve::Arc { start, end, .. } => (start, end),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InterfaceCurve::Segment { a, b } => {
                if !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()) {
                    return Err(Error::Geometry("segment endpoints must be finite".into()));
                }
                if a == b {
                    return Err(Error::Geometry(format!(
                        "segment endpoints coincide at ({}, {})",
                        a.x, a.y
                    )));
                }
            }
            InterfaceCurve::Arc {
                center,
                radius,
                start,
                end,
            } => {
                if !(center.x.is_finite() && center.y.is_finite()) {
                    return Err(Error::Geometry("arc center must be finite".into()));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Geometry(format!("arc radius {radius} must be positive")));
                }
                if !(start < end) || !start.is_finite() || !end.is_finite() {
                    return Err(Error::Geometry(format!(
                        "arc span [{start}, {end}] must be increasing"
                    )));
                }
                if end - start > TAU + 1e-12 {
                    return Err(Error::Geometry(format!(
                        "arc span {} exceeds a full turn",
                        end - start
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest distance of any curve point from the origin.
    fn max_radius(&self) -> f64 {
        match *self {
            InterfaceCurve::Segment { a, b } => a.norm().max(b.norm()),
            InterfaceCurve::Arc {
                center,
                radius,
                start,
                end,
            } => {
                // farthest point is either an endpoint or the point along the
                // center direction, if that angle is inside the span
                let mut m = self.point(start).norm().max(self.point(end).norm());
                if center.norm() > 0.0 {
                    let theta = center.angle();
                    if let Some(sigma) = wrap_into(theta, start, end, 0.0) {
                        m = m.max(self.point(sigma).norm());
                    }
                } else {
                    m = m.max(radius);
                }
                m
            }
        }
    }

    pub fn point(&self, sigma: f64) -> Vec2 {
        match *self {
            InterfaceCurve::Segment { a, b } => a + (b - a) * sigma,
            InterfaceCurve::Arc { center, radius, .. } => center + Vec2::from_angle(sigma) * radius,
        }
    }

    pub fn tangent(&self, sigma: f64) -> Vec2 {
        match *self {
            InterfaceCurve::Segment { a, b } => b - a,
            InterfaceCurve::Arc { radius, .. } => {
                let (s, c) = sigma.sin_cos();
                Vec2::new(-radius * s, radius * c)
            }
        }
    }

    /// Unit normal 𝔫(σ) = (−ξ₂′(σ), ξ₁′(σ)) / ‖Ξ′(σ)‖.
    pub fn normal_at(&self, sigma: f64) -> Result<Vec2> {
        let (lo, hi) = self.param_range();
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(sigma >= lo - slack && sigma <= hi + slack) {
            return Err(Error::Domain(format!(
                "curve parameter {sigma} outside [{lo}, {hi}]"
            )));
        }
        Ok(self.tangent(sigma).perp().normalized())
    }

    /// Parameter of the curve point closest to `p` and the distance to it.
    pub fn closest(&self, p: Vec2) -> (f64, f64) {
        match *self {
            InterfaceCurve::Segment { a, b } => {
                let ab = b - a;
                let sigma = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
                (sigma, p.distance(self.point(sigma)))
            }
            InterfaceCurve::Arc {
                center,
                radius,
                start,
                end,
            } => {
                let rel = p - center;
                if rel.norm() > 0.0 {
                    if let Some(sigma) = wrap_into(rel.angle(), start, end, 0.0) {
                        return (sigma, (rel.norm() - radius).abs());
                    }
                }
                let ds = p.distance(self.point(start));
                let de = p.distance(self.point(end));
                if ds <= de {
                    (start, ds)
                } else {
                    (end, de)
                }
            }
        }
    }

    /// All intersections of the full line `origin + t·dir` (‖dir‖ = 1) with
    /// the curve, as `(t, σ)` pairs.
    fn line_hits(&self, origin: Vec2, dir: Vec2, tol: f64, out: &mut Vec<(f64, f64)>) {
        match *self {
            InterfaceCurve::Segment { a, b } => {
                let ab = b - a;
                let den = dir.cross(ab);
                if den.abs() <= 1e-15 * ab.norm() {
                    return;
                }
                let ao = a - origin;
                let t = ao.cross(ab) / den;
                let sigma = ao.cross(dir) / den;
                let slack = tol / ab.norm();
                if sigma >= -slack && sigma <= 1.0 + slack {
                    out.push((t, sigma.clamp(0.0, 1.0)));
                }
            }
            InterfaceCurve::Arc {
                center,
                radius,
                start,
                end,
            } => {
                let oc = origin - center;
                let b = dir.dot(oc);
                let c = oc.norm_sq() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return;
                }
                let root = disc.sqrt();
                let roots = if root == 0.0 {
                    [Some(-b), None]
                } else {
                    // numerically stable pair
                    let q = -b - b.signum() * root;
                    let (t1, t2) = if q != 0.0 { (q, c / q) } else { (-root, root) };
                    [Some(t1.min(t2)), Some(t1.max(t2))]
                };
                let ang_tol = tol / radius;
                for t in roots.into_iter().flatten() {
                    let p = origin + dir * t;
                    if let Some(sigma) = wrap_into((p - center).angle(), start, end, ang_tol) {
                        out.push((t, sigma));
                    }
                }
            }
        }
    }

    fn rotated(&self, theta: f64) -> InterfaceCurve {
        match *self {
            InterfaceCurve::Segment { a, b } => {
                InterfaceCurve::segment(a.rotated(theta), b.rotated(theta))
            }
            InterfaceCurve::Arc {
                center,
                radius,
                start,
                end,
            } => InterfaceCurve::arc(center.rotated(theta), radius, start + theta, end + theta),
        }
    }
}

/// Maps an angle into the arc window `[start, end]`, allowing `tol` radians of
/// slack at either end.
fn wrap_into(theta: f64, start: f64, end: f64, tol: f64) -> Option<f64> {
    let sigma = start + (theta - start).rem_euclid(TAU);
    if sigma <= end + tol {
        return Some(sigma.min(end));
    }
    // just below `start`
    if sigma - TAU >= start - tol {
        return Some(start);
    }
    None
}

/// Normalized sum of the normals meeting at a corner.
pub fn corner_normal(normals: &[Vec2], tol: f64) -> Result<Vec2> {
    if normals.is_empty() {
        return Err(Error::Domain("corner needs at least one normal".into()));
    }
    let sum = normals.iter().fold(Vec2::ZERO, |acc, &n| acc + n);
    let norm = sum.norm();
    if norm < tol {
        return Err(Error::DegenerateCorner { x: sum.x, y: sum.y });
    }
    Ok(sum * (1.0 / norm))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corner {
    pub point: Vec2,
    pub curves: Vec<usize>,
    /// `None` when the meeting normals cancel.
    pub normal: Option<Vec2>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitFeature {
    Curve(usize),
    Corner(usize),
    /// Corner whose normals cancel; `unit_normal` then carries the normal of
    /// the curve that was hit and the event should be skipped.
    DegenerateCorner(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub t_hit: f64,
    pub point: Vec2,
    pub unit_normal: Vec2,
    pub curve_index: usize,
    pub feature: HitFeature,
}

impl SurfaceHit {
    pub fn is_corner(&self) -> bool {
        !matches!(self.feature, HitFeature::Curve(_))
    }
}

/// Immutable collection of interface curves with their corner registry.
#[derive(Clone, Debug)]
pub struct InterfaceSet {
    curves: Vec<InterfaceCurve>,
    corners: Vec<Corner>,
    tol_geom: f64,
    radius: f64,
}

impl InterfaceSet {
    /// Builds the set, checking that every curve lies inside the disk of
    /// radius `radius` and registering corners.
    pub fn new(curves: Vec<InterfaceCurve>, radius: f64, tol_geom: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("disk radius {radius} must be positive")));
        }
        if !(tol_geom > 0.0) {
            return Err(Error::Geometry(format!("tolerance {tol_geom} must be positive")));
        }
        for (k, c) in curves.iter().enumerate() {
            c.validate()?;
            let m = c.max_radius();
            if m >= radius {
                return Err(Error::Geometry(format!(
                    "curve {k} reaches radius {m}, outside the reconstruction disk {radius}"
                )));
            }
        }
        let corners = find_corners(&curves, tol_geom);
        Ok(InterfaceSet {
            curves,
            corners,
            tol_geom,
            radius,
        })
    }

    pub fn empty(radius: f64) -> Self {
        InterfaceSet {
            curves: Vec::new(),
            corners: Vec::new(),
            tol_geom: DEFAULT_TOL_GEOM,
            radius,
        }
    }

    pub fn curves(&self) -> &[InterfaceCurve] {
        &self.curves
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    pub fn tol_geom(&self) -> f64 {
        self.tol_geom
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Nearest interface crossing of the ray `origin + t·direction` with
    /// `t > t_min + tol_geom`.
    pub fn nearest_hit(&self, origin: Vec2, direction: Vec2, t_min: f64) -> Option<SurfaceHit> {
        let mut scratch = Vec::with_capacity(2);
        let mut best: Option<(f64, f64, usize)> = None;
        let floor = t_min + self.tol_geom;
        for (k, curve) in self.curves.iter().enumerate() {
            scratch.clear();
            curve.line_hits(origin, direction, self.tol_geom, &mut scratch);
            for &(t, sigma) in &scratch {
                if t > floor && t.is_finite() && best.is_none_or(|(bt, _, _)| t < bt) {
                    best = Some((t, sigma, k));
                }
            }
        }
        let (t_hit, sigma, k) = best?;
        let point = origin + direction * t_hit;
        for (id, corner) in self.corners.iter().enumerate() {
            if corner.point.distance(point) <= self.tol_geom {
                let own = self.curves[k].tangent(sigma).perp().normalized();
                return Some(match corner.normal {
                    Some(n) => SurfaceHit {
                        t_hit,
                        point,
                        unit_normal: n,
                        curve_index: k,
                        feature: HitFeature::Corner(id),
                    },
                    None => SurfaceHit {
                        t_hit,
                        point,
                        unit_normal: own,
                        curve_index: k,
                        feature: HitFeature::DegenerateCorner(id),
                    },
                });
            }
        }
        Some(SurfaceHit {
            t_hit,
            point,
            unit_normal: self.curves[k].tangent(sigma).perp().normalized(),
            curve_index: k,
            feature: HitFeature::Curve(k),
        })
    }

    /// Distance from `p` to the nearest curve (∞ for an empty set).
    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.curves
            .iter()
            .map(|c| c.closest(p).1)
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `p` is enclosed by the interfaces: rays cast from `p` in eight
    /// directions must all hit some curve. Exact for objects with a convex
    /// outer boundary; concave hulls may count some outside points as inside.
    pub fn encloses(&self, p: Vec2) -> bool {
        if self.curves.is_empty() {
            return false;
        }
        (0..8).all(|k| {
            let dir = Vec2::from_angle(k as f64 * TAU / 8.0 + 0.1);
            self.nearest_hit(p, dir, -self.tol_geom).is_some()
        })
    }

    /// Per-pixel mask of pixel centers enclosed by the interfaces.
    pub fn footprint(&self, grid: &GridSpec) -> Vec<bool> {
        (0..grid.len())
            .map(|mu| self.encloses(grid.pixel_center(mu)))
            .collect()
    }

    /// Same set rotated rigidly about the origin.
    pub fn rotated(&self, theta: f64) -> Result<InterfaceSet> {
        InterfaceSet::new(
            self.curves.iter().map(|c| c.rotated(theta)).collect(),
            self.radius,
            self.tol_geom,
        )
    }

    /// Parses the declarative interface file: a JSON list of
    /// `{"type": "segment", "a": [x, y], "b": [x, y]}` and
    /// `{"type": "arc", "center": [x, y], "radius": r, "from": deg, "to": deg}`.
    pub fn from_json(text: &str, radius: f64, tol_geom: f64) -> Result<Self> {
        let decls: Vec<CurveDecl> = serde_json::from_str(text)?;
        let curves = decls.into_iter().map(CurveDecl::into_curve).collect();
        InterfaceSet::new(curves, radius, tol_geom)
    }

    pub fn to_json(&self) -> Result<String> {
        let decls: Vec<CurveDecl> = self.curves.iter().map(CurveDecl::from_curve).collect();
        Ok(serde_json::to_string_pretty(&decls)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum CurveDecl {
    Segment {
        a: [f64; 2],
        b: [f64; 2],
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        from: f64,
        to: f64,
    },
}

impl CurveDecl {
    fn into_curve(self) -> InterfaceCurve {
        match self {
            CurveDecl::Segment { a, b } => InterfaceCurve::segment(a.into(), b.into()),
            CurveDecl::Arc {
                center,
                radius,
                from,
                to,
            } => InterfaceCurve::arc(center.into(), radius, from.to_radians(), to.to_radians()),
        }
    }

    fn from_curve(c: &InterfaceCurve) -> Self {
        match *c {
            InterfaceCurve::Segment { a, b } => CurveDecl::Segment {
                a: a.into(),
                b: b.into(),
            },
            InterfaceCurve::Arc {
                center,
                radius,
                start,
                end,
            } => CurveDecl::Arc {
                center: center.into(),
                radius,
                from: start.to_degrees(),
                to: end.to_degrees(),
            },
        }
    }
}

fn find_corners(curves: &[InterfaceCurve], tol: f64) -> Vec<Corner> {
    let mut candidates = Vec::new();
    for c in curves {
        let (lo, hi) = c.param_range();
        candidates.push(c.point(lo));
        candidates.push(c.point(hi));
    }
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            pairwise_crossings(&curves[i], &curves[j], tol, &mut candidates);
        }
    }

    let mut corners: Vec<Corner> = Vec::new();
    for p in candidates {
        if corners.iter().any(|c| c.point.distance(p) <= tol) {
            continue;
        }
        let meeting: Vec<(usize, f64)> = curves
            .iter()
            .enumerate()
            .filter_map(|(k, c)| {
                let (sigma, d) = c.closest(p);
                (d <= tol).then_some((k, sigma))
            })
            .collect();
        if meeting.len() < 2 {
            continue;
        }
        let normals: Vec<Vec2> = meeting
            .iter()
            .map(|&(k, sigma)| curves[k].tangent(sigma).perp().normalized())
            .collect();
        let normal = corner_normal(&normals, tol).ok();
        if normal.is_none() {
            log::warn!("degenerate corner at ({}, {})", p.x, p.y);
        }
        corners.push(Corner {
            point: p,
            curves: meeting.into_iter().map(|(k, _)| k).collect(),
            normal,
        });
    }
    corners
}

fn pairwise_crossings(a: &InterfaceCurve, b: &InterfaceCurve, tol: f64, out: &mut Vec<Vec2>) {
    use InterfaceCurve::*;
    let mut hits = Vec::new();
    match (*a, *b) {
        (Segment { a: p, b: q }, other) | (other, Segment { a: p, b: q }) => {
            let len = p.distance(q);
            let dir = (q - p) * (1.0 / len);
            other.line_hits(p, dir, tol, &mut hits);
            out.extend(
                hits.iter()
                    .filter(|&&(t, _)| t >= -tol && t <= len + tol)
                    .map(|&(t, _)| p + dir * t),
            );
        }
        (
            Arc {
                center: c0,
                radius: r0,
                ..
            },
            Arc {
                center: c1,
                radius: r1,
                ..
            },
        ) => {
            let d = c0.distance(c1);
            if d == 0.0 || d > r0 + r1 + tol || d < (r0 - r1).abs() - tol {
                return;
            }
            let along = (d * d + r0 * r0 - r1 * r1) / (2.0 * d);
            let h = (r0 * r0 - along * along).max(0.0).sqrt();
            let u = (c1 - c0) * (1.0 / d);
            let base = c0 + u * along;
            for p in [base + u.perp() * h, base - u.perp() * h] {
                if a.closest(p).1 <= tol && b.closest(p).1 <= tol {
                    out.push(p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn segment_normals() {
        let h = InterfaceCurve::segment(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert!(close(h.normal_at(0.3).unwrap(), Vec2::new(0.0, 1.0), 1e-15));
        let d = InterfaceCurve::segment(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        assert!(close(
            d.normal_at(0.5).unwrap(),
            Vec2::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            1e-15
        ));
    }

    #[test]
    fn circle_normal_is_radial() {
        let c = InterfaceCurve::circle(Vec2::ZERO, 50.0);
        let n = c.normal_at(0.0).unwrap();
        assert!((n.x.abs() - 1.0).abs() < 1e-15 && n.y.abs() < 1e-15);
    }

    #[test]
    fn normal_out_of_range() {
        let h = InterfaceCurve::segment(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert!(matches!(h.normal_at(1.5), Err(Error::Domain(_))));
        let a = InterfaceCurve::arc(Vec2::ZERO, 1.0, 0.0, 1.0);
        assert!(a.normal_at(-0.1).is_err());
    }

    #[test]
    fn corner_normal_cases() {
        let tol = DEFAULT_TOL_GEOM;
        assert_eq!(corner_normal(&[Vec2::new(1.0, 0.0)], tol).unwrap(), Vec2::new(1.0, 0.0));
        let n = corner_normal(&[Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)], tol).unwrap();
        assert!(close(n, Vec2::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2), 1e-15));
        assert!(matches!(
            corner_normal(&[Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)], tol),
            Err(Error::DegenerateCorner { .. })
        ));
    }

    #[test]
    fn empty_set_has_no_hits() {
        let set = InterfaceSet::empty(70.0);
        assert!(set
            .nearest_hit(Vec2::new(-100.0, 0.0), Vec2::new(1.0, 0.0), f64::NEG_INFINITY)
            .is_none());
    }

    #[test]
    fn axis_ray_hits_circle() {
        let set = InterfaceSet::new(
            vec![InterfaceCurve::circle(Vec2::ZERO, 50.0)],
            70.0,
            DEFAULT_TOL_GEOM,
        )
        .unwrap();
        let hit = set
            .nearest_hit(Vec2::new(-100.0, 0.0), Vec2::new(1.0, 0.0), f64::NEG_INFINITY)
            .unwrap();
        assert!((hit.t_hit - 50.0).abs() < 1e-12);
        assert!(close(hit.point, Vec2::new(-50.0, 0.0), 1e-12));
        assert!((hit.unit_normal.x.abs() - 1.0).abs() < 1e-12);
        assert!(!hit.is_corner());
    }

    #[test]
    fn offset_ray_hits_circle() {
        let set = InterfaceSet::new(
            vec![InterfaceCurve::circle(Vec2::ZERO, 50.0)],
            70.0,
            DEFAULT_TOL_GEOM,
        )
        .unwrap();
        let hit = set
            .nearest_hit(Vec2::new(-100.0, 30.0), Vec2::new(1.0, 0.0), f64::NEG_INFINITY)
            .unwrap();
        assert!(close(hit.point, Vec2::new(-40.0, 30.0), 1e-12));
        // radial up to sign
        assert!(hit.unit_normal.cross(Vec2::new(-0.8, 0.6)).abs() < 1e-12);

        // brute-force marching oracle along the ray
        let mut t = 0.0;
        let step = 1e-4;
        while (Vec2::new(-100.0 + t, 30.0)).norm() > 50.0 {
            t += step;
        }
        assert!((hit.t_hit - t).abs() <= step);
    }

    #[test]
    fn successive_hits_advance() {
        let set = InterfaceSet::new(
            vec![InterfaceCurve::circle(Vec2::ZERO, 50.0)],
            70.0,
            DEFAULT_TOL_GEOM,
        )
        .unwrap();
        let o = Vec2::new(-100.0, 10.0);
        let d = Vec2::new(1.0, 0.0);
        let h1 = set.nearest_hit(o, d, f64::NEG_INFINITY).unwrap();
        let h2 = set.nearest_hit(o, d, h1.t_hit).unwrap();
        assert!(h2.t_hit > h1.t_hit);
        assert!(set.nearest_hit(o, d, h2.t_hit).is_none());
    }

    fn square(half: f64) -> Vec<InterfaceCurve> {
        let v = [
            Vec2::new(-half, -half),
            Vec2::new(half, -half),
            Vec2::new(half, half),
            Vec2::new(-half, half),
        ];
        (0..4)
            .map(|k| InterfaceCurve::segment(v[k], v[(k + 1) % 4]))
            .collect()
    }

    #[test]
    fn rectangle_registers_four_diagonal_corners() {
        let set = InterfaceSet::new(square(10.0), 70.0, DEFAULT_TOL_GEOM).unwrap();
        assert_eq!(set.corners().len(), 4);
        for c in set.corners() {
            assert_eq!(c.curves.len(), 2);
            let n = c.normal.unwrap();
            assert!((n.norm() - 1.0).abs() < 1e-15);
            assert!((n.x.abs() - FRAC_1_SQRT_2).abs() < 1e-15);
            // counter-clockwise edges: normals point inward, toward the center
            assert!(n.dot(c.point) < 0.0);
        }
    }

    #[test]
    fn ray_through_corner_reports_corner() {
        let set = InterfaceSet::new(square(10.0), 70.0, DEFAULT_TOL_GEOM).unwrap();
        let d = Vec2::new(1.0, 1.0).normalized();
        let hit = set
            .nearest_hit(Vec2::new(-30.0, -30.0), d, f64::NEG_INFINITY)
            .unwrap();
        assert!(hit.is_corner());
        assert!(close(hit.point, Vec2::new(-10.0, -10.0), 1e-9));
        assert!(close(hit.unit_normal, Vec2::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2), 1e-12));
        // the crossing on the neighbouring edge at the same point is skipped
        let next = set.nearest_hit(Vec2::new(-30.0, -30.0), d, hit.t_hit).unwrap();
        assert!(close(next.point, Vec2::new(10.0, 10.0), 1e-9));
    }

    #[test]
    fn crossing_segments_register_corner() {
        let curves = vec![
            InterfaceCurve::segment(Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.0)),
            InterfaceCurve::segment(Vec2::new(0.0, -5.0), Vec2::new(0.0, 5.0)),
        ];
        let set = InterfaceSet::new(curves, 70.0, DEFAULT_TOL_GEOM).unwrap();
        assert_eq!(set.corners().len(), 1);
        assert!(close(set.corners()[0].point, Vec2::ZERO, 1e-12));
    }

    #[test]
    fn opposed_segments_give_degenerate_corner() {
        // two collinear segments with opposite parametrizations meeting at the origin
        let curves = vec![
            InterfaceCurve::segment(Vec2::new(-5.0, 0.0), Vec2::new(0.0, 0.0)),
            InterfaceCurve::segment(Vec2::new(5.0, 0.0), Vec2::new(0.0, 0.0)),
        ];
        let set = InterfaceSet::new(curves, 70.0, DEFAULT_TOL_GEOM).unwrap();
        assert_eq!(set.corners().len(), 1);
        assert!(set.corners()[0].normal.is_none());
        let hit = set
            .nearest_hit(Vec2::new(0.0, -20.0), Vec2::new(0.0, 1.0), f64::NEG_INFINITY)
            .unwrap();
        assert!(matches!(hit.feature, HitFeature::DegenerateCorner(_)));
        assert!((hit.unit_normal.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn construction_rejects_bad_curves() {
        let tol = DEFAULT_TOL_GEOM;
        let p = Vec2::new(1.0, 1.0);
        assert!(InterfaceSet::new(vec![InterfaceCurve::segment(p, p)], 70.0, tol).is_err());
        assert!(
            InterfaceSet::new(vec![InterfaceCurve::arc(Vec2::ZERO, 0.0, 0.0, 1.0)], 70.0, tol)
                .is_err()
        );
        assert!(
            InterfaceSet::new(vec![InterfaceCurve::arc(Vec2::ZERO, 5.0, 1.0, 0.5)], 70.0, tol)
                .is_err()
        );
        // leaves the disk
        assert!(
            InterfaceSet::new(vec![InterfaceCurve::circle(Vec2::new(30.0, 0.0), 45.0)], 70.0, tol)
                .is_err()
        );
    }

    #[test]
    fn partial_arc_only_hit_inside_span() {
        // upper half circle
        let set = InterfaceSet::new(
            vec![InterfaceCurve::arc(Vec2::ZERO, 10.0, 0.0, PI)],
            70.0,
            DEFAULT_TOL_GEOM,
        )
        .unwrap();
        assert!(set
            .nearest_hit(Vec2::new(-20.0, -5.0), Vec2::new(1.0, 0.0), f64::NEG_INFINITY)
            .is_none());
        let hit = set
            .nearest_hit(Vec2::new(-20.0, 5.0), Vec2::new(1.0, 0.0), f64::NEG_INFINITY)
            .unwrap();
        assert!(close(hit.point, Vec2::new(-(75.0f64).sqrt(), 5.0), 1e-12));
    }

    #[test]
    fn footprint_of_nested_shapes() {
        let mut curves = square(10.0);
        curves.push(InterfaceCurve::circle(Vec2::ZERO, 40.0));
        let set = InterfaceSet::new(curves, 70.0, DEFAULT_TOL_GEOM).unwrap();
        assert!(set.encloses(Vec2::ZERO));
        assert!(set.encloses(Vec2::new(25.0, 0.0)));
        assert!(!set.encloses(Vec2::new(45.0, 0.0)));
        assert!(!set.encloses(Vec2::new(0.0, -60.0)));
        assert!(!InterfaceSet::empty(70.0).encloses(Vec2::ZERO));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let text = r#"[
            {"type": "segment", "a": [0, 0], "b": [10, 0]},
            {"type": "arc", "center": [0, 0], "radius": 20, "from": 0, "to": 360}
        ]"#;
        let set = InterfaceSet::from_json(text, 70.0, DEFAULT_TOL_GEOM).unwrap();
        assert_eq!(set.curves().len(), 2);
        let again = InterfaceSet::from_json(&set.to_json().unwrap(), 70.0, DEFAULT_TOL_GEOM).unwrap();
        assert_eq!(again.curves().len(), 2);

        let bad = r#"[{"type": "segment", "a": [0, 0], "b": [10, 0], "color": "red"}]"#;
        assert!(InterfaceSet::from_json(bad, 70.0, DEFAULT_TOL_GEOM).is_err());
        let bad_kind = r#"[{"type": "spline", "a": [0, 0]}]"#;
        assert!(InterfaceSet::from_json(bad_kind, 70.0, DEFAULT_TOL_GEOM).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn phantom_like() -> InterfaceSet {
            let mut curves = vec![InterfaceCurve::circle(Vec2::ZERO, 50.0)];
            let v = [
                Vec2::new(-2.5, -2.0),
                Vec2::new(22.5, -2.0),
                Vec2::new(22.5, 18.0),
                Vec2::new(-2.5, 18.0),
            ];
            curves.extend((0..4).map(|k| InterfaceCurve::segment(v[k], v[(k + 1) % 4])));
            InterfaceSet::new(curves, 70.0, DEFAULT_TOL_GEOM).unwrap()
        }

        proptest! {
            #[test]
            fn hit_sequence_strictly_increases(phi in 0.0..TAU, s in -69.0..69.0f64) {
                let set = phantom_like();
                let dir = Vec2::from_angle(phi).perp();
                let origin = Vec2::from_angle(phi) * s;
                let mut t_min = f64::NEG_INFINITY;
                let mut count = 0;
                while let Some(h) = set.nearest_hit(origin, dir, t_min) {
                    prop_assert!(h.t_hit > t_min);
                    t_min = h.t_hit;
                    count += 1;
                    prop_assert!(count < 20);
                }
            }

            #[test]
            fn hits_are_rotation_invariant(phi in 0.0..TAU, s in -69.0..69.0f64, theta in 0.0..TAU) {
                let set = phantom_like();
                let rot = set.rotated(theta).unwrap();
                let dir = Vec2::from_angle(phi).perp();
                let origin = Vec2::from_angle(phi) * s;
                let a = set.nearest_hit(origin, dir, -100.0);
                let b = rot.nearest_hit(origin.rotated(theta), dir.rotated(theta), -100.0);
                match (a, b) {
                    (Some(a), Some(b)) => {
                        prop_assert!((a.t_hit - b.t_hit).abs() <= DEFAULT_TOL_GEOM);
                        prop_assert!(a.point.rotated(theta).distance(b.point) <= DEFAULT_TOL_GEOM);
                    }
                    (None, None) => {}
                    _ => prop_assert!(false, "hit presence differs under rotation"),
                }
            }

            #[test]
            fn normal_is_perpendicular_to_tangent(sigma in 0.0..TAU, r in 1.0..60.0f64) {
                let c = InterfaceCurve::circle(Vec2::new(1.0, -2.0), r);
                let n = c.normal_at(sigma).unwrap();
                let t = c.tangent(sigma);
                prop_assert!(n.dot(t).abs() <= 1e-12 * t.norm());
                prop_assert!((n.norm() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn single_corner_normal_is_identity(a in 0.0..TAU) {
                let v = Vec2::from_angle(a);
                let n = corner_normal(&[v], DEFAULT_TOL_GEOM).unwrap();
                prop_assert!(n.distance(v) <= 1e-15);
            }
        }
    }
}
