//! Frames and the far-field distance algebra.
//!
//! All modules go through this file for the angle conventions. A direction
//! `(phi, theta)` and a point `(r, psi, zeta)` map to rectangular local
//! coordinates (x east, y north, z up) as
//!
//! ```text
//! u(phi, theta)     = (cos phi,     sin phi cos theta,     sin phi sin theta)
//! p(r, psi, zeta)   = r (cos psi,   sin psi cos zeta,      sin psi sin zeta)
//! ```
//!
//! With this embedding the path-length term of a reception point,
//! `r (sin phi sin psi cos(theta - zeta) + cos phi cos psi)`, is exactly
//! `p . u`. `phi` is the angle from the east axis (the azimuth of horizontal
//! directions) and `theta` rotates the direction about that axis. Both span
//! `[-pi, pi)`, so every physical direction appears twice:
//! `(phi, theta)` and `(-phi, theta + pi)`. Reported estimates use the
//! representative with `theta` in `[-pi/2, pi/2)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("locations coincide; baseline has zero length")]
    DegenerateBaseline,
}

/// Wraps an angle to `[-pi, pi)`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Local spherical coordinates of a reception point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSpherical {
    pub r: f64,
    pub psi: f64,
    pub zeta: f64,
}

impl LocalSpherical {
    pub const ORIGIN: Self = Self {
        r: 0.0,
        psi: 0.0,
        zeta: 0.0,
    };

    pub fn to_rect(&self) -> Vec3 {
        let (sp, cp) = self.psi.sin_cos();
        let (sz, cz) = self.zeta.sin_cos();
        self.r * Vec3::new(cp, sp * cz, sp * sz)
    }

    pub fn from_rect(v: &Vec3) -> Self {
        let r = v.norm();
        if r == 0.0 {
            return Self::ORIGIN;
        }
        Self {
            r,
            psi: wrap_pi((v.x / r).clamp(-1.0, 1.0).acos()),
            zeta: wrap_pi(v.z.atan2(v.y)),
        }
    }
}

/// A beam direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringDirection {
    /// Radians, angle from the local east axis.
    pub phi: f64,
    /// Radians, rotation about the east axis.
    pub theta: f64,
}

impl SteeringDirection {
    pub fn new(phi: f64, theta: f64) -> Self {
        Self { phi, theta }
    }

    pub fn from_degrees(phi: f64, theta: f64) -> Self {
        Self::new(phi.to_radians(), theta.to_radians())
    }

    pub fn unit_vector(&self) -> Vec3 {
        let (sp, cp) = self.phi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        Vec3::new(cp, sp * ct, sp * st)
    }

    /// Canonical direction of a (not necessarily unit) vector.
    pub fn from_vector(v: &Vec3) -> Self {
        let n = v.norm();
        let phi = (v.x / n).clamp(-1.0, 1.0).acos();
        let theta = v.z.atan2(v.y);
        Self::new(phi, theta).canonical()
    }

    /// The equivalent representation with `theta` in `[-pi/2, pi/2)` and
    /// `phi` in `[-pi, pi)`.
    pub fn canonical(&self) -> Self {
        let phi = wrap_pi(self.phi);
        let theta = wrap_pi(self.theta);
        if (-FRAC_PI_2..FRAC_PI_2).contains(&theta) {
            Self::new(phi, theta)
        } else {
            Self::new(wrap_pi(-phi), wrap_pi(theta + PI))
        }
    }

    /// The other representation of the same physical direction.
    pub fn mirror(&self) -> Self {
        Self::new(wrap_pi(-self.phi), wrap_pi(self.theta + PI))
    }

    pub fn to_degrees(&self) -> (f64, f64) {
        (self.phi.to_degrees(), self.theta.to_degrees())
    }

    /// Great-circle angle to `other`, radians.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let c = self.unit_vector().dot(&other.unit_vector()).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Horizontal azimuth from east (counter-clockwise) and zenith angle of
    /// the direction, the pair used by the two-location fix.
    pub fn azimuth_zenith(&self) -> (f64, f64) {
        let u = self.unit_vector();
        (u.y.atan2(u.x), u.z.clamp(-1.0, 1.0).acos())
    }
}

/// Position-dependent part of the far-field distance,
/// `r (sin phi sin psi cos(theta - zeta) + cos phi cos psi)`.
///
/// The full distance to an emitter at range `a` is `a - d_prime`; `a` is
/// never needed because it only adds a phase common to every point.
pub fn d_prime(point: &LocalSpherical, dir: &SteeringDirection) -> f64 {
    point.r
        * (dir.phi.sin() * point.psi.sin() * (dir.theta - point.zeta).cos()
            + dir.phi.cos() * point.psi.cos())
}

/// `exp(j 2 pi / lambda * d_prime)`.
pub fn steering_weight(point: &LocalSpherical, dir: &SteeringDirection, wavelength: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI / wavelength * d_prime(point, dir))
}

/// Spherical coordinates of one location seen from another, with the
/// shared world (east, north, up) axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeLocation {
    /// Meters.
    pub distance: f64,
    /// Radians, counter-clockwise from east in the horizontal plane.
    pub azimuth: f64,
    /// Radians from the up axis; a horizontal baseline has `pi/2`.
    pub zenith: f64,
}

impl RelativeLocation {
    pub fn to_rect(&self) -> Vec3 {
        let (sz, cz) = self.zenith.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        self.distance * Vec3::new(sz * ca, sz * sa, cz)
    }
}

pub fn relative_location(loc1: &Vec3, loc2: &Vec3) -> Result<RelativeLocation, GeometryError> {
    let v = loc2 - loc1;
    let d = v.norm();
    if d == 0.0 {
        return Err(GeometryError::DegenerateBaseline);
    }
    Ok(RelativeLocation {
        distance: d,
        azimuth: v.y.atan2(v.x),
        zenith: (v.z / d).clamp(-1.0, 1.0).acos(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    #[test]
    fn d_prime_trivial_cases() {
        for (phi, theta) in [(0.3, -2.0), (-1.0, 0.5), (3.0, 3.0)] {
            let dir = SteeringDirection::new(phi, theta);
            assert_eq!(d_prime(&LocalSpherical::ORIGIN, &dir), 0.0);
        }
        let p = LocalSpherical { r: 1.0, psi: 0.0, zeta: 0.0 };
        for theta in [-3.0, 0.0, 1.2] {
            let d = d_prime(&p, &SteeringDirection::new(0.0, theta));
            assert!((d - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn steering_weight_at_origin_is_one() {
        let w = steering_weight(
            &LocalSpherical::ORIGIN,
            &SteeringDirection::new(1.0, 2.0),
            0.125,
        );
        assert_eq!(w, C64::new(1.0, 0.0));
    }

    #[test]
    fn relative_location_axis_aligned() {
        let rel = relative_location(&Vec3::zeros(), &Vec3::new(20.0, 0.0, 0.0)).unwrap();
        assert!((rel.distance - 20.0).abs() < 1e-12);
        assert_eq!(rel.azimuth, 0.0);
        assert!((rel.zenith - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(
            relative_location(&Vec3::new(1.0, 2.0, 3.0), &Vec3::new(1.0, 2.0, 3.0)),
            Err(GeometryError::DegenerateBaseline)
        );
    }

    #[test]
    fn canonical_keeps_theta_in_half_range() {
        let d = SteeringDirection::from_degrees(-70.0, -120.0).canonical();
        let (p, t) = d.to_degrees();
        assert!((p - 70.0).abs() < 1e-9 && (t - 60.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn d_prime_is_dot_product(r in 0.0..2.0f64, psi in angle(), zeta in angle(),
                                  phi in angle(), theta in angle()) {
            let p = LocalSpherical { r, psi, zeta };
            let dir = SteeringDirection::new(phi, theta);
            let dot = p.to_rect().dot(&dir.unit_vector());
            prop_assert!((d_prime(&p, &dir) - dot).abs() < 1e-12);
            prop_assert!(d_prime(&p, &dir).abs() <= r + 1e-12);
        }

        #[test]
        fn far_field_error_bound(r in 0.01..1.0f64, psi in angle(), zeta in angle(),
                                 phi in angle(), theta in angle(), scale in 10.0..1000.0f64) {
            // exact distance from the emitter to the point, via rectangular coordinates
            let a = scale * r;
            let p = LocalSpherical { r, psi, zeta };
            let dir = SteeringDirection::new(phi, theta);
            let emitter = a * dir.unit_vector();
            let exact = (emitter - p.to_rect()).norm();
            let approx = a - d_prime(&p, &dir);
            prop_assert!((approx - exact).abs() <= r * r / a + 1e-12);
        }

        #[test]
        fn steering_weight_matches_formula(r in 0.0..2.0f64, psi in angle(), zeta in angle(),
                                           phi in angle(), theta in angle(), lambda in 0.01..1.0f64) {
            let p = LocalSpherical { r, psi, zeta };
            let dir = SteeringDirection::new(phi, theta);
            let w = steering_weight(&p, &dir, lambda);
            let expected = 2.0 * PI / lambda
                * r * (phi.sin() * psi.sin() * (theta - zeta).cos() + phi.cos() * psi.cos());
            prop_assert!((w.norm() - 1.0).abs() < 1e-12);
            prop_assert!((w - C64::from_polar(1.0, expected)).norm() < 1e-9);
        }

        #[test]
        fn spherical_round_trip(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
            let v = Vec3::new(x, y, z);
            let back = LocalSpherical::from_rect(&v).to_rect();
            prop_assert!((back - v).norm() < 1e-12);
        }

        #[test]
        fn relative_location_matches_trig(a in prop::array::uniform3(-50.0..50.0f64),
                                          b in prop::array::uniform3(-50.0..50.0f64)) {
            let (p, q) = (Vec3::from(a), Vec3::from(b));
            prop_assume!((q - p).norm() > 1e-6);
            let rel = relative_location(&p, &q).unwrap();
            let (dx, dy, dz) = (b[0] - a[0], b[1] - a[1], b[2] - a[2]);
            let d = (dx * dx + dy * dy + dz * dz).sqrt();
            prop_assert!((rel.distance - d).abs() < 1e-12);
            prop_assert!((rel.azimuth - dy.atan2(dx)).abs() < 1e-12);
            prop_assert!((rel.zenith.cos() * d - dz).abs() < 1e-9);
            prop_assert!((rel.to_rect() - (q - p)).norm() < 1e-12 * d.max(1.0) * 10.0);
        }

        #[test]
        fn mirror_is_same_direction(phi in angle(), theta in angle()) {
            let d = SteeringDirection::new(phi, theta);
            prop_assert!((d.unit_vector() - d.mirror().unit_vector()).norm() < 1e-12);
            let c = d.canonical();
            prop_assert!((-FRAC_PI_2..FRAC_PI_2).contains(&c.theta));
            prop_assert!((d.unit_vector() - c.unit_vector()).norm() < 1e-12);
        }
    }
}
