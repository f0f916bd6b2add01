//! Piecewise-constant test objects: ground-truth fields and their interfaces.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{InterfaceCurve, InterfaceSet};
use crate::model::{alpha_cm_to_mm, GridSpec, IndexField, MaterialField};
use crate::vec2::Vec2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Disk {
        center: Vec2,
        radius: f64,
    },
    /// Axis-aligned rectangle.
    Rect {
        center: Vec2,
        width: f64,
        height: f64,
    },
    /// Convex polygon; either orientation is accepted.
    Polygon {
        vertices: Vec<Vec2>,
    },
}

impl Shape {
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Shape::Disk { center, radius } => p.distance(*center) < *radius,
            Shape::Rect {
                center,
                width,
                height,
            } => (p.x - center.x).abs() < 0.5 * width && (p.y - center.y).abs() < 0.5 * height,
            Shape::Polygon { vertices } => {
                let ccw = ccw_vertices(vertices);
                (0..ccw.len()).all(|k| {
                    let a = ccw[k];
                    let b = ccw[(k + 1) % ccw.len()];
                    (b - a).cross(p - a) > 0.0
                })
            }
        }
    }

    /// Polygon vertices in counter-clockwise order; `None` for disks.
    pub fn outline(&self) -> Option<Vec<Vec2>> {
        match self {
            Shape::Disk { .. } => None,
            Shape::Rect {
                center,
                width,
                height,
            } => {
                let (w, h) = (0.5 * width, 0.5 * height);
                Some(vec![
                    *center + Vec2::new(-w, -h),
                    *center + Vec2::new(w, -h),
                    *center + Vec2::new(w, h),
                    *center + Vec2::new(-w, h),
                ])
            }
            Shape::Polygon { vertices } => Some(ccw_vertices(vertices)),
        }
    }

    fn max_radius(&self) -> f64 {
        match self {
            Shape::Disk { center, radius } => center.norm() + radius,
            _ => self
                .outline()
                .unwrap_or_default()
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Shape::Disk { radius, .. } if !(*radius > 0.0) => {
                Err(Error::Config(format!("disk radius {radius} must be positive")))
            }
            Shape::Rect { width, height, .. } if !(*width > 0.0 && *height > 0.0) => {
                Err(Error::Config(format!("rectangle {width}x{height} is degenerate")))
            }
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::Config("polygon needs at least 3 vertices".into()));
                }
                let v = ccw_vertices(vertices);
                let m = v.len();
                for k in 0..m {
                    let turn = (v[(k + 1) % m] - v[k]).cross(v[(k + 2) % m] - v[(k + 1) % m]);
                    if !(turn > 0.0) {
                        return Err(Error::Config("polygon is not strictly convex".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn ccw_vertices(vertices: &[Vec2]) -> Vec<Vec2> {
    let m = vertices.len();
    let area2: f64 = (0..m).map(|k| vertices[k].cross(vertices[(k + 1) % m])).sum();
    let mut v = vertices.to_vec();
    if area2 < 0.0 {
        v.reverse();
    }
    v
}

/// One homogeneous region. `alpha` is in cm⁻¹ as in the phantom files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomRegion {
    pub shape: Shape,
    pub n: f64,
    pub alpha: f64,
}

impl PhantomRegion {
    pub fn new(shape: Shape, n: f64, alpha_per_cm: f64) -> Self {
        PhantomRegion {
            shape,
            n,
            alpha: alpha_per_cm,
        }
    }
}

/// An ordered list of regions; later regions overwrite earlier ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phantom {
    /// Radius R of the reconstruction disk, mm.
    pub radius: f64,
    pub regions: Vec<PhantomRegion>,
}

/// Centre of the off-centre rectangle in the circle phantom.
pub const PAPER_RECT_CENTER: Vec2 = Vec2::new(15.4, 10.3);
/// Radius of the reconstruction disk used by the reference experiments.
pub const PAPER_RADIUS: f64 = 70.5;

/// Placeholder indices of the five glued blocks, left to right.
pub const GLUED_BLOCK_DEFAULT_N: [f64; 5] = [1.51, 1.55, 1.60, 1.53, 1.65];
/// Placeholder absorption of the five glued blocks, cm⁻¹.
pub const GLUED_BLOCK_DEFAULT_ALPHA: [f64; 5] = [0.05, 0.15, 0.3, 0.1, 0.4];
const GLUED_BLOCK_WIDTHS: [f64; 5] = [12.0, 10.0, 14.0, 10.0, 12.0];
const GLUED_BLOCK_HEIGHT: f64 = 30.0;

impl Phantom {
    pub fn new(radius: f64, regions: Vec<PhantomRegion>) -> Result<Self> {
        let p = Phantom { radius, regions };
        p.validate()?;
        Ok(p)
    }

    pub fn air(radius: f64) -> Self {
        Phantom {
            radius,
            regions: Vec::new(),
        }
    }

    /// Disk of radius 50 mm (n = 1.4, α = 0.05 cm⁻¹) with an embedded
    /// 25 × 20 mm rectangle (n = 1.7, α = 0.25 cm⁻¹).
    pub fn paper() -> Self {
        Phantom {
            radius: PAPER_RADIUS,
            regions: vec![
                PhantomRegion::new(
                    Shape::Disk {
                        center: Vec2::ZERO,
                        radius: 50.0,
                    },
                    1.4,
                    0.05,
                ),
                PhantomRegion::new(
                    Shape::Rect {
                        center: PAPER_RECT_CENTER,
                        width: 25.0,
                        height: 20.0,
                    },
                    1.7,
                    0.25,
                ),
            ],
        }
    }

    /// Five rectangular blocks glued side by side into one 58 × 30 mm block.
    pub fn glued_block(n: [f64; 5], alpha_per_cm: [f64; 5]) -> Self {
        let total: f64 = GLUED_BLOCK_WIDTHS.iter().sum();
        let mut left = -0.5 * total;
        let regions = (0..5)
            .map(|k| {
                let w = GLUED_BLOCK_WIDTHS[k];
                let r = PhantomRegion::new(
                    Shape::Rect {
                        center: Vec2::new(left + 0.5 * w, 0.0),
                        width: w,
                        height: GLUED_BLOCK_HEIGHT,
                    },
                    n[k],
                    alpha_per_cm[k],
                );
                left += w;
                r
            })
            .collect();
        Phantom {
            radius: PAPER_RADIUS,
            regions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("phantom radius {} must be positive", self.radius)));
        }
        for (k, r) in self.regions.iter().enumerate() {
            r.shape.validate()?;
            if !(r.n >= 1.0) || !(r.alpha >= 0.0) {
                return Err(Error::Config(format!(
                    "region {k}: n = {} and alpha = {} must satisfy n >= 1, alpha >= 0",
                    r.n, r.alpha
                )));
            }
            if r.shape.max_radius() >= self.radius {
                return Err(Error::Config(format!(
                    "region {k} reaches outside the disk of radius {}",
                    self.radius
                )));
            }
        }
        Ok(())
    }

    /// The region whose value applies at `p`, if any.
    pub fn region_at(&self, p: Vec2) -> Option<&PhantomRegion> {
        self.regions.iter().rev().find(|r| r.shape.contains(p))
    }

    pub fn rasterize(&self, grid: &GridSpec) -> MaterialField {
        rasterize(&self.regions, grid)
    }

    pub fn interfaces(&self, tol_geom: f64) -> Result<InterfaceSet> {
        interfaces_of(&self.regions, self.radius, tol_geom)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Phantom = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl IndexField for Phantom {
    fn index_at(&self, p: Vec2) -> f64 {
        self.region_at(p).map_or(1.0, |r| r.n)
    }
}

/// Samples the topmost region at every pixel centre.
pub fn rasterize(regions: &[PhantomRegion], grid: &GridSpec) -> MaterialField {
    let mut field = MaterialField::air(*grid);
    for mu in 0..grid.len() {
        let c = grid.pixel_center(mu);
        if c.norm() >= grid.radius {
            continue;
        }
        if let Some(r) = regions.iter().rev().find(|r| r.shape.contains(c)) {
            field.n_minus_1[mu] = r.n - 1.0;
            field.alpha[mu] = alpha_cm_to_mm(r.alpha);
        }
    }
    field
}

/// Boundary curves of all regions. Edges shared by two polygons are emitted
/// once; corners are found by the interface set itself.
pub fn interfaces_of(regions: &[PhantomRegion], radius: f64, tol_geom: f64) -> Result<InterfaceSet> {
    let mut curves: Vec<InterfaceCurve> = Vec::new();
    for r in regions {
        match &r.shape {
            Shape::Disk { center, radius } => {
                curves.push(InterfaceCurve::circle(*center, *radius));
            }
            shape => {
                let v = shape.outline().expect("polygonal shape");
                for k in 0..v.len() {
                    let (a, b) = (v[k], v[(k + 1) % v.len()]);
                    let duplicate = curves.iter().any(|c| match *c {
                        InterfaceCurve::Segment { a: ca, b: cb } => {
                            (ca.distance(a) <= tol_geom && cb.distance(b) <= tol_geom)
                                || (ca.distance(b) <= tol_geom && cb.distance(a) <= tol_geom)
                        }
                        _ => false,
                    });
                    if !duplicate {
                        curves.push(InterfaceCurve::segment(a, b));
                    }
                }
            }
        }
    }
    InterfaceSet::new(curves, radius, tol_geom)
}

/// Regular convex polygon, handy for randomized tests.
pub fn regular_polygon(center: Vec2, circumradius: f64, sides: usize, rotation: f64) -> Shape {
    let vertices = (0..sides)
        .map(|k| center + Vec2::from_angle(rotation + TAU * k as f64 / sides as f64) * circumradius)
        .collect();
    Shape::Polygon { vertices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_TOL_GEOM;
    use crate::optics::probe_two_sided;

    #[test]
    fn no_regions_is_air() {
        let grid = GridSpec::covering(10.0, 20).unwrap();
        let f = rasterize(&[], &grid);
        assert!(f.n_minus_1.iter().chain(&f.alpha).all(|&v| v == 0.0));
    }

    #[test]
    fn paper_phantom_values() {
        let ph = Phantom::paper();
        ph.validate().unwrap();
        let grid = GridSpec::covering(PAPER_RADIUS, 141).unwrap();
        let f = ph.rasterize(&grid);
        let at = |p: Vec2| grid.pixel_of(p).unwrap();
        let inside_disk = at(Vec2::new(-30.0, -30.0));
        assert!((f.n_minus_1[inside_disk] - 0.4).abs() < 1e-15);
        assert!((f.alpha[inside_disk] - 0.005).abs() < 1e-15);
        let inside_rect = at(PAPER_RECT_CENTER);
        assert!((f.n_minus_1[inside_rect] - 0.7).abs() < 1e-15);
        assert!((f.alpha[inside_rect] - 0.025).abs() < 1e-15);
        assert_eq!(f.n_minus_1[at(Vec2::new(60.0, 0.0))], 0.0);
        // 25 x 20 rectangle covers 500 unit pixels exactly
        let rect_pixels = f.n_minus_1.iter().filter(|&&v| (v - 0.7).abs() < 1e-12).count();
        assert_eq!(rect_pixels, 500);
        f.check_physical(0.0).unwrap();
    }

    #[test]
    fn later_regions_win() {
        let regions = vec![
            PhantomRegion::new(Shape::Disk { center: Vec2::new(-3.0, 0.0), radius: 5.0 }, 1.2, 0.0),
            PhantomRegion::new(Shape::Disk { center: Vec2::new(3.0, 0.0), radius: 5.0 }, 1.5, 0.0),
        ];
        let grid = GridSpec::covering(10.0, 20).unwrap();
        let f = rasterize(&regions, &grid);
        let mid = grid.pixel_of(Vec2::new(0.5, 0.5)).unwrap();
        assert!((f.n_minus_1[mid] - 0.5).abs() < 1e-15);
        let left = grid.pixel_of(Vec2::new(-6.5, 0.5)).unwrap();
        assert!((f.n_minus_1[left] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn interface_counts() {
        let disk = vec![PhantomRegion::new(Shape::Disk { center: Vec2::ZERO, radius: 5.0 }, 1.2, 0.0)];
        let set = interfaces_of(&disk, 10.0, DEFAULT_TOL_GEOM).unwrap();
        assert_eq!((set.curves().len(), set.corners().len()), (1, 0));

        let rect = vec![PhantomRegion::new(
            Shape::Rect { center: Vec2::ZERO, width: 4.0, height: 2.0 },
            1.2,
            0.0,
        )];
        let set = interfaces_of(&rect, 10.0, DEFAULT_TOL_GEOM).unwrap();
        assert_eq!((set.curves().len(), set.corners().len()), (4, 4));
        for c in set.corners() {
            let n = c.normal.unwrap();
            assert!((n.x.abs() - n.y.abs()).abs() < 1e-12);
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }

        let set = Phantom::paper().interfaces(DEFAULT_TOL_GEOM).unwrap();
        assert_eq!(set.curves().len(), 5);
        assert_eq!(set.corners().len(), 4);
    }

    #[test]
    fn glued_block_shares_edges() {
        let ph = Phantom::glued_block(GLUED_BLOCK_DEFAULT_N, GLUED_BLOCK_DEFAULT_ALPHA);
        ph.validate().unwrap();
        let set = ph.interfaces(DEFAULT_TOL_GEOM).unwrap();
        // 5 blocks x 4 edges minus 4 shared edges
        assert_eq!(set.curves().len(), 16);
    }

    #[test]
    fn rejects_invalid() {
        let bad = Phantom {
            radius: 10.0,
            regions: vec![PhantomRegion::new(Shape::Disk { center: Vec2::ZERO, radius: 12.0 }, 1.2, 0.0)],
        };
        assert!(bad.validate().is_err());
        let bad = Phantom {
            radius: 10.0,
            regions: vec![PhantomRegion::new(Shape::Disk { center: Vec2::ZERO, radius: 2.0 }, 0.9, 0.0)],
        };
        assert!(bad.validate().is_err());
        let concave = Shape::Polygon {
            vertices: vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(4.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 4.0),
            ],
        };
        assert!(Phantom::new(10.0, vec![PhantomRegion::new(concave, 1.2, 0.0)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let ph = Phantom::paper();
        let text = ph.to_json().unwrap();
        assert_eq!(Phantom::from_json(&text).unwrap(), ph);
        let bad = r#"{"radius": 10, "regions": [], "extra": 1}"#;
        assert!(Phantom::from_json(bad).is_err());
        let text = r#"{"radius": 10, "regions": [
            {"shape": {"type": "polygon", "vertices": [[0,0],[0,3],[3,0]]}, "n": 1.3, "alpha": 0.1}
        ]}"#;
        let ph = Phantom::from_json(text).unwrap();
        assert_eq!(ph.index_at(Vec2::new(0.5, 0.5)), 1.3);
        assert_eq!(ph.index_at(Vec2::new(2.5, 2.5)), 1.0);
    }

    #[test]
    fn rasterize_is_idempotent() {
        let ph = Phantom::paper();
        let grid = GridSpec::covering(PAPER_RADIUS, 141).unwrap();
        assert_eq!(ph.rasterize(&grid), ph.rasterize(&grid));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn probe_sees_region_and_surroundings(
                cx in -20.0..20.0f64, cy in -20.0..20.0f64, r in 2.0..20.0f64,
                sides in 3usize..9, rot in 0.0..TAU, n in 1.01..2.5f64,
                edge in 0usize..8, frac in 0.05..0.95f64,
            ) {
                let shape = regular_polygon(Vec2::new(cx, cy), r, sides, rot);
                let ph = Phantom::new(50.0, vec![PhantomRegion::new(shape.clone(), n, 0.1)]).unwrap();
                let set = ph.interfaces(DEFAULT_TOL_GEOM).unwrap();
                let v = shape.outline().unwrap();
                let k = edge % v.len();
                let (a, b) = (v[k], v[(k + 1) % v.len()]);
                let p = a + (b - a) * frac;
                let normal = (b - a).perp().normalized();
                let dir = Vec2::new(normal.x + 0.3 * normal.y, normal.y - 0.3 * normal.x).normalized();
                let (n1, n2) = probe_two_sided(&ph, p, normal, dir, 1e-3);
                prop_assert_eq!((n1, n2), (1.0, n));
                prop_assert!(set.distance_to(p) < 1e-9);
            }
        }
    }
}
