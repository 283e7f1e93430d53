use alloc::format;
use serde::{Deserialize, Serialize};

use super::pose::{axis_angle, Pose, Vec3};
use crate::{Error, Result};

/// Two rigid boxes joined by one revolute hinge. All vectors are in the
/// base box frame (origin at the base box center).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Articulation {
    pub base: [f64; 3],
    pub flap: [f64; 3],
    /// Flap center at zero articulation angle.
    pub flap_rest: [f64; 3],
    pub hinge_axis: [f64; 3],
    pub hinge_origin: [f64; 3],
    pub angle_range: [f64; 2],
}

impl Articulation {
    /// Pose of the flap box in the base frame for a given hinge angle.
    pub fn flap_pose(&self, angle: f64) -> Pose {
        let origin = Vec3::from(self.hinge_origin);
        let hinge = Pose::new(origin, axis_angle(&Vec3::from(self.hinge_axis), angle));
        let rest = Pose::from_translation(
            self.flap_rest[0] - origin.x,
            self.flap_rest[1] - origin.y,
            self.flap_rest[2] - origin.z,
        );
        hinge.compose(&rest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Finite rectangle in the local xy plane, normal along +z.
    Plane { extent: [f64; 2] },
    Box { dims: [f64; 3] },
    Articulated(Articulation),
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64], what: &str| {
            if v.iter().all(|d| *d > 0.0 && d.is_finite()) {
                Ok(())
            } else {
                Err(Error::Scenario(format!("{what} dimensions must be positive: {v:?}")))
            }
        };
        match self {
            Shape::Plane { extent } => positive(extent, "plane"),
            Shape::Box { dims } => positive(dims, "box"),
            Shape::Articulated(a) => {
                positive(&a.base, "articulation base")?;
                positive(&a.flap, "articulation flap")?;
                let n = Vec3::from(a.hinge_axis).norm();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::Scenario(format!("hinge axis must be unit length, |axis| = {n}")));
                }
                if a.angle_range[0] > a.angle_range[1] {
                    return Err(Error::Scenario("hinge angle range is reversed".into()));
                }
                Ok(())
            }
        }
    }
}

/// Ray-castable primitive with half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Plane { half: [f64; 2] },
    Box { half: [f64; 3] },
}
