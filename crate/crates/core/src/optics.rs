//! Snell refraction, Fresnel reflectance and two-sided index probing.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::model::IndexField;
use crate::vec2::Vec2;

/// Indices may dip below 1 by this much before they are rejected.
pub const INDEX_TOL: f64 = 1e-9;
/// arcsin arguments within this distance of ±1 are clamped.
const ASIN_CLAMP: f64 = 1e-12;
const ANGLE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefractionEvent {
    /// Index on the incident side.
    pub n1: f64,
    /// Index on the far side.
    pub n2: f64,
    /// Angle of incidence from the normal, in [0, π/2].
    pub gamma1: f64,
    /// Angle of refraction; π − γ₁ under total reflection.
    pub gamma2: f64,
    pub total_reflection: bool,
    /// Reflectance ρ ∈ [0, 1].
    pub rho: f64,
}

fn check_index(n: f64) -> Result<()> {
    if !(n >= 1.0 - INDEX_TOL) || !n.is_finite() {
        return Err(Error::Domain(format!("refractive index {n} is below 1")));
    }
    Ok(())
}

/// Snell's law n₁ sin γ₁ = n₂ sin γ₂ with the total-reflection branch.
pub fn snell(n1: f64, n2: f64, gamma1: f64) -> Result<RefractionEvent> {
    check_index(n1)?;
    check_index(n2)?;
    if !(-ANGLE_SLACK..=FRAC_PI_2 + ANGLE_SLACK).contains(&gamma1) {
        return Err(Error::Domain(format!("incidence angle {gamma1} outside [0, pi/2]")));
    }
    let gamma1 = gamma1.clamp(0.0, FRAC_PI_2);
    if n1 == n2 {
        return Ok(RefractionEvent {
            n1,
            n2,
            gamma1,
            gamma2: gamma1,
            total_reflection: false,
            rho: 0.0,
        });
    }
    if n1 > n2 && gamma1 >= (n2 / n1).asin() {
        return Ok(RefractionEvent {
            n1,
            n2,
            gamma1,
            gamma2: PI - gamma1,
            total_reflection: true,
            rho: 1.0,
        });
    }
    let mut arg = n1 * gamma1.sin() / n2;
    if arg > 1.0 && arg <= 1.0 + ASIN_CLAMP {
        arg = 1.0;
    }
    let gamma2 = arg.asin();
    if gamma2.is_nan() {
        // only reachable for arg > 1 + clamp, which the branch above excludes
        return Err(Error::Domain(format!("arcsin argument {arg} out of range")));
    }
    Ok(RefractionEvent {
        n1,
        n2,
        gamma1,
        gamma2,
        total_reflection: false,
        rho: fresnel_reflectance(n1, gamma1, n2, gamma2),
    })
}

/// Perpendicular-polarization reflectance
/// ρ = ((n₁ cos γ₁ − n₂ cos γ₂) / (n₁ cos γ₁ + n₂ cos γ₂))².
pub fn fresnel_reflectance(n1: f64, gamma1: f64, n2: f64, gamma2: f64) -> f64 {
    let a = n1 * gamma1.cos();
    let b = n2 * gamma2.cos();
    let den = a + b;
    if den == 0.0 {
        return 1.0;
    }
    let r = (a - b) / den;
    (r * r).clamp(0.0, 1.0)
}

/// Samples the index on both sides of an interface point, `eps` along the
/// normal. Returns `(n1, n2)` with `n1` on the side the ray arrives from.
pub fn probe_two_sided<F: IndexField + ?Sized>(
    field: &F,
    hit_point: Vec2,
    unit_normal: Vec2,
    incident_direction: Vec2,
    eps: f64,
) -> (f64, f64) {
    let plus = field.index_at(hit_point + unit_normal * eps);
    let minus = field.index_at(hit_point - unit_normal * eps);
    if incident_direction.dot(unit_normal) <= 0.0 {
        // moving against the normal: arriving from the +normal side
        (plus, minus)
    } else {
        (minus, plus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    #[test]
    #[allow(clippy::approx_constant)]
    fn snell_identical_media() {
        let e = snell(1.0, 1.0, 0.5236).unwrap();
        assert_eq!(e.gamma2, 0.5236);
        assert!(!e.total_reflection);
        assert_eq!(e.rho, 0.0);
    }

    #[test]
    fn snell_into_glass() {
        let e = snell(1.0, 1.5, FRAC_PI_6).unwrap();
        assert!((e.gamma2 - 0.3398369094541219).abs() < 1e-14);
        assert!((1.0 * FRAC_PI_6.sin() - 1.5 * e.gamma2.sin()).abs() < 1e-15);
        assert!((e.rho - 0.05779610540321305).abs() < 1e-14);
    }

    #[test]
    fn snell_total_reflection() {
        let e = snell(1.5, 1.0, FRAC_PI_4).unwrap();
        assert!(e.total_reflection);
        assert!((e.gamma2 - 3.0 * FRAC_PI_4).abs() < 1e-15);
        assert_eq!(e.rho, 1.0);
        // exactly at the critical angle the branch fires as well
        let crit = (1.0f64 / 1.5).asin();
        assert!(snell(1.5, 1.0, crit).unwrap().total_reflection);
        assert!(!snell(1.5, 1.0, crit - 1e-9).unwrap().total_reflection);
    }

    #[test]
    fn snell_rejects_unphysical() {
        assert!(matches!(snell(0.5, 1.0, 0.1), Err(Error::Domain(_))));
        assert!(snell(1.0, -1.0, 0.1).is_err());
        assert!(snell(1.0, 1.2, 2.0).is_err());
        assert!(snell(1.0 - 1e-12, 1.0, 0.1).is_ok());
    }

    #[test]
    fn fresnel_examples() {
        assert!((fresnel_reflectance(1.0, 0.0, 1.5, 0.0) - 0.04).abs() < 1e-15);
        assert_eq!(fresnel_reflectance(1.0, 0.0, 1.0, 0.0), 0.0);
        let r = fresnel_reflectance(1.0, FRAC_PI_6, 1.5, 0.3398369094541219);
        assert!((r - 0.0578).abs() < 1e-4);
    }

    #[test]
    fn near_critical_reflectance_approaches_one() {
        let crit = (1.0f64 / 1.4).asin();
        let e = snell(1.4, 1.0, crit - 1e-6).unwrap();
        assert!(!e.total_reflection);
        assert!(e.rho > 0.99, "rho = {}", e.rho);
    }

    struct Disk;
    impl IndexField for Disk {
        fn index_at(&self, p: Vec2) -> f64 {
            if p.norm() < 50.0 {
                1.4
            } else {
                1.0
            }
        }
    }

    struct Uniform(f64);
    impl IndexField for Uniform {
        fn index_at(&self, _: Vec2) -> f64 {
            self.0
        }
    }

    #[test]
    fn probe_cases() {
        let p = Vec2::new(-50.0, 0.0);
        let n = Vec2::new(1.0, 0.0); // inward normal at the left of the disk
        let d = Vec2::new(1.0, 0.0);
        assert_eq!(probe_two_sided(&Uniform(1.4), p, n, d, 0.5), (1.4, 1.4));
        assert_eq!(probe_two_sided(&Disk, p, n, d, 0.5), (1.0, 1.4));
        assert_eq!(probe_two_sided(&Disk, p, n, -d, 0.5), (1.4, 1.0));
        // the answer does not depend on the normal's orientation
        assert_eq!(probe_two_sided(&Disk, p, -n, d, 0.5), (1.0, 1.4));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reciprocity(n1 in 1.0..3.0f64, n2 in 1.0..3.0f64, g in 0.0..1.5f64) {
                let e = snell(n1, n2, g).unwrap();
                if !e.total_reflection {
                    prop_assert!((n1 * g.sin() - n2 * e.gamma2.sin()).abs() <= 1e-10);
                    let back = snell(n2, n1, e.gamma2).unwrap();
                    prop_assert!(!back.total_reflection);
                    prop_assert!((back.gamma2 - g).abs() <= 1e-10);
                }
                prop_assert!((0.0..=1.0).contains(&e.rho));
            }

            #[test]
            fn monotone_into_denser(n1 in 1.0..2.0f64, dn in 0.01..1.0f64, g in 0.0..1.5f64, dg in 1e-4..0.07f64) {
                let n2 = n1 + dn;
                let a = snell(n1, n2, g).unwrap().gamma2;
                let b = snell(n1, n2, g + dg).unwrap().gamma2;
                prop_assert!(b > a);
            }

            #[test]
            fn fresnel_swap_symmetry(n1 in 1.0..3.0f64, n2 in 1.0..3.0f64, g in 0.0..FRAC_PI_2) {
                let e = snell(n1, n2, g).unwrap();
                if !e.total_reflection {
                    let r1 = fresnel_reflectance(n1, g, n2, e.gamma2);
                    let r2 = fresnel_reflectance(n2, e.gamma2, n1, g);
                    prop_assert!((r1 - r2).abs() <= 1e-14);
                }
            }
        }
    }
}
