//! Emitter position from the bearings measured at two locations.
//!
//! The horizontal range from location 1 follows from the triangle formed by
//! the baseline and the two horizontal bearings; dividing by the sine of the
//! zenith angle at location 1 gives the slant range along its bearing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RelativeLocation, SteeringDirection, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum FixError {
    #[error("bearings are parallel; no intersection")]
    ParallelBearings,
    #[error("bearings diverge; range {0} is not positive")]
    NegativeRange(f64),
    #[error("baseline length must be positive")]
    DegenerateBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixResult {
    /// Slant range from location 1, meters.
    pub range: f64,
    /// Bearing at location 1.
    pub direction: SteeringDirection,
    /// Emitter relative to location 1, meters.
    pub local: Vec3,
    /// Location 1 plus `local`.
    pub world: Vec3,
    /// Closest approach of the two bearing rays, meters.
    pub residual: f64,
}

/// Slant range from location 1.
///
/// With horizontal azimuths `az1`, `az2`, zenith angle `zen1` at location 1
/// and location 2 at `(d, varphi, vartheta)`:
///
/// ```text
/// a = d sin(vartheta) tan(varphi - az2)
///     / ((tan(az1 - varphi) + tan(varphi - az2)) cos(az1 - varphi) sin(zen1))
/// ```
pub fn slant_range(
    doa1: &SteeringDirection,
    doa2: &SteeringDirection,
    rel: &RelativeLocation,
) -> Result<f64, FixError> {
    if !(rel.distance > 0.0) {
        return Err(FixError::DegenerateBaseline);
    }
    let (az1, zen1) = doa1.azimuth_zenith();
    let (az2, _) = doa2.azimuth_zenith();
    let vp = rel.azimuth;
    let t2 = (vp - az2).tan();
    let den = ((az1 - vp).tan() + t2) * (az1 - vp).cos() * zen1.sin();
    if !(den.abs() >= 1e-9) {
        return Err(FixError::ParallelBearings);
    }
    let a = rel.distance * rel.zenith.sin() * t2 / den;
    if !(a > 0.0) || !a.is_finite() {
        return Err(FixError::NegativeRange(a));
    }
    Ok(a)
}

/// Minimum distance between the rays `p1 + s u1` and `p2 + t u2`,
/// `s, t >= 0`.
pub fn ray_gap(p1: &Vec3, u1: &Vec3, p2: &Vec3, u2: &Vec3) -> f64 {
    let w = p1 - p2;
    let b = u1.dot(u2);
    let d = u1.dot(&w);
    let e = u2.dot(&w);
    let den = 1.0 - b * b;
    let mut s = if den > 1e-12 { (b * e - d) / den } else { 0.0 };
    s = s.max(0.0);
    let mut t = (e + s * b).max(0.0);
    s = (t * b - d).max(0.0);
    t = (e + s * b).max(0.0);
    ((p1 + s * u1) - (p2 + t * u2)).norm()
}

/// Intersects the two bearings. `origin` is location 1 in world
/// coordinates; `rel` places location 2 relative to it.
pub fn localize(
    doa1: &SteeringDirection,
    doa2: &SteeringDirection,
    rel: &RelativeLocation,
    origin: &Vec3,
) -> Result<FixResult, FixError> {
    let range = slant_range(doa1, doa2, rel)?;
    let u1 = doa1.unit_vector();
    let local = range * u1;
    Ok(FixResult {
        range,
        direction: *doa1,
        local,
        world: origin + local,
        residual: ray_gap(&Vec3::zeros(), &u1, &rel.to_rect(), &doa2.unit_vector()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub e2d: f64,
    pub e3d: f64,
}

pub fn error_metrics(estimate: &Vec3, truth: &Vec3) -> ErrorMetrics {
    let d = estimate - truth;
    ErrorMetrics {
        dx: d.x,
        dy: d.y,
        dz: d.z,
        e2d: d.x.hypot(d.y),
        e3d: d.norm(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::relative_location;
    use proptest::prelude::*;

    fn exact(l1: Vec3, l2: Vec3, e: Vec3) -> Result<FixResult, FixError> {
        let rel = relative_location(&l1, &l2).unwrap();
        localize(
            &SteeringDirection::from_vector(&(e - l1)),
            &SteeringDirection::from_vector(&(e - l2)),
            &rel,
            &l1,
        )
    }

    #[test]
    fn default_scenario_geometry() {
        let (l1, l2, e) = (Vec3::new(0.0, 0.0, 20.0), Vec3::new(20.0, 0.0, 20.0), Vec3::new(10.0, 20.0, 0.0));
        let f = exact(l1, l2, e).unwrap();
        assert!((f.world - e).norm() < 1e-9);
        assert!((f.range - 30.0).abs() < 1e-9);
        assert!(f.residual < 1e-9);
    }

    #[test]
    fn parallel_and_diverging() {
        let rel = relative_location(&Vec3::zeros(), &Vec3::new(20.0, 0.0, 0.0)).unwrap();
        let d = SteeringDirection::from_vector(&Vec3::new(0.0, 1.0, -0.5));
        assert_eq!(localize(&d, &d, &rel, &Vec3::zeros()), Err(FixError::ParallelBearings));
        // emitter behind location 1 relative to where the bearings meet
        let d1 = SteeringDirection::from_vector(&Vec3::new(-1.0, -1.0, 0.0));
        let d2 = SteeringDirection::from_vector(&Vec3::new(1.0, -1.0, 0.0));
        assert!(matches!(localize(&d1, &d2, &rel, &Vec3::zeros()), Err(FixError::NegativeRange(_))));
    }

    #[test]
    fn metrics() {
        let m = error_metrics(&Vec3::new(3.0, 4.0, 0.0), &Vec3::zeros());
        assert_eq!((m.e2d, m.e3d), (5.0, 5.0));
        let z = error_metrics(&Vec3::new(1.0, 2.0, 3.0), &Vec3::new(1.0, 2.0, 3.0));
        assert_eq!((z.dx, z.dy, z.dz, z.e2d, z.e3d), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn ray_gap_cases() {
        let z = Vec3::zeros();
        // skew perpendicular lines 1 m apart
        let g = ray_gap(&z, &Vec3::x(), &Vec3::new(0.5, -1.0, 1.0), &Vec3::y());
        assert!((g - 1.0).abs() < 1e-12);
        // rays pointing away: closest points are the origins
        let g = ray_gap(&z, &-Vec3::x(), &Vec3::new(1.0, 0.0, 0.0), &Vec3::x());
        assert!((g - 1.0).abs() < 1e-12);
    }

    fn coord() -> impl Strategy<Value = f64> {
        -50.0f64..50.0
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            x1 in coord(), y1 in coord(), z1 in 5.0f64..60.0,
            x2 in coord(), y2 in coord(), z2 in 5.0f64..60.0,
            ex in coord(), ey in coord(), ez in -5.0f64..5.0,
        ) {
            let (l1, l2, e) = (Vec3::new(x1, y1, z1), Vec3::new(x2, y2, z2), Vec3::new(ex, ey, ez));
            let h = |v: Vec3| v.x.hypot(v.y);
            let base = h(l2 - l1);
            prop_assume!(base > 1.0 && h(e - l1) > 1.0 && h(e - l2) > 1.0);
            // bearings must not be near-parallel in the horizontal plane
            let a1 = (e - l1).y.atan2((e - l1).x);
            let a2 = (e - l2).y.atan2((e - l2).x);
            prop_assume!(crate::geometry::wrap_pi(a1 - a2).abs() > 1e-3);
            let f = exact(l1, l2, e).unwrap();
            prop_assert!((f.range - (e - l1).norm()).abs() / (e - l1).norm() < 1e-6);
            prop_assert!(f.residual < 1e-6 * (e - l1).norm());
        }

        #[test]
        fn translation_equivariance(sx in coord(), sy in coord(), sz in coord()) {
            let s = Vec3::new(sx, sy, sz);
            let (l1, l2, e) = (Vec3::new(0.0, 0.0, 20.0), Vec3::new(20.0, 0.0, 20.0), Vec3::new(10.0, 20.0, 0.0));
            let a = exact(l1, l2, e).unwrap().world;
            let b = exact(l1 + s, l2 + s, e + s).unwrap().world;
            prop_assert!(((b - a) - s).norm() < 1e-9);
        }
    }
}
