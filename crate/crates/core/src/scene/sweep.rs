use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pose::{axis_angle, quat_from_wxyz, Vec3};
use super::spec::{canonical_wxyz, DofKind, ModeledState, ScenarioSpec, UnmodeledParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::x(),
            Axis::Y => Vec3::y(),
            Axis::Z => Vec3::z(),
        }
    }
}

/// A direction in state space to sweep along. Translations and rotations
/// are taken in the target object's own frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    Translate(Axis),
    Rotate(Axis),
    /// Raw offset on one entry of the state vector.
    Dof(usize),
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = |a: &Axis| match a {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        };
        match self {
            SweepAxis::Translate(ax) => write!(f, "t{}", a(ax)),
            SweepAxis::Rotate(ax) => write!(f, "r{}", a(ax)),
            SweepAxis::Dof(i) => write!(f, "dof{i}"),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    /// Accepts `tx ty tz rx ry rz` and `dof<N>`.
    fn from_str(s: &str) -> Result<Self> {
        let axis = |c: &str| match c {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        };
        let bad = || Error::InvalidAxis(format!("`{s}` (expected tx, ty, tz, rx, ry, rz or dofN)"));
        if let Some(rest) = s.strip_prefix("dof") {
            return rest.parse().map(SweepAxis::Dof).map_err(|_| bad());
        }
        match s.split_at_checked(1) {
            Some(("t", c)) => axis(c).map(SweepAxis::Translate).ok_or_else(bad),
            Some(("r", c)) => axis(c).map(SweepAxis::Rotate).ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

/// `steps` evenly spaced offsets in `[-half_range, half_range]`; the middle
/// one is exactly zero.
pub fn offsets(half_range: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 3 || steps % 2 == 0 {
        return Err(Error::InvalidArgument(format!("sweep steps must be odd and >= 3, got {steps}")));
    }
    let last = (steps - 1) as f64;
    Ok((0..steps).map(|i| half_range * (2.0 * i as f64 / last - 1.0)).collect())
}

/// States along one axis through `x_gt`. The middle element equals `x_gt`.
pub fn sweep_axis(
    spec: &ScenarioSpec,
    x_gt: &ModeledState,
    z: &UnmodeledParams,
    axis: SweepAxis,
    half_range: f64,
    steps: usize,
) -> Result<Vec<ModeledState>> {
    let offs = offsets(half_range, steps)?;
    let layout = spec.state_layout();
    if x_gt.len() != layout.len {
        return Err(Error::Binding(format!("state has {} values, layout needs {}", x_gt.len(), layout.len)));
    }
    let target = spec.target().ok_or_else(|| Error::InvalidAxis("scenario has no target object".into()))?;
    let scene = spec.bind(x_gt, z)?;
    let target_pose = scene
        .object(&target.id)
        .map(|o| o.pose)
        .ok_or_else(|| Error::InvalidAxis(format!("target `{}` is not present", target.id)))?;

    let mut out = Vec::with_capacity(steps);
    match axis {
        SweepAxis::Dof(i) => {
            if i >= layout.len {
                return Err(Error::InvalidAxis(format!("dof{i} is outside a state of length {}", layout.len)));
            }
            for o in offs {
                let mut x = x_gt.clone();
                x.0[i] += o;
                out.push(x);
            }
        }
        SweepAxis::Translate(ax) => {
            let dir = target_pose.rotation * ax.unit();
            let slots = [DofKind::Tx, DofKind::Ty, DofKind::Tz].map(|k| layout.index_of(&target.id, k));
            for k in 0..3 {
                if slots[k].is_none() && dir[k].abs() > 1e-9 {
                    return Err(Error::InvalidAxis(format!(
                        "translation along {axis} moves an unmodeled coordinate of `{}`",
                        target.id
                    )));
                }
            }
            for o in offs {
                let mut x = x_gt.clone();
                for k in 0..3 {
                    if let Some(s) = slots[k] {
                        x.0[s] += o * dir[k];
                    }
                }
                out.push(x);
            }
        }
        SweepAxis::Rotate(ax) => {
            if let Some(q) = layout.index_of(&target.id, DofKind::Quat) {
                let base = quat_from_wxyz([x_gt.0[q], x_gt.0[q + 1], x_gt.0[q + 2], x_gt.0[q + 3]]);
                for o in offs {
                    let mut x = x_gt.clone();
                    if o != 0.0 {
                        let r = canonical_wxyz(&(base * axis_angle(&ax.unit(), o)));
                        x.0[q..q + 4].copy_from_slice(&r);
                    }
                    out.push(x);
                }
            } else if let (Axis::Z, Some(y)) = (ax, layout.index_of(&target.id, DofKind::Yaw)) {
                for o in offs {
                    let mut x = x_gt.clone();
                    x.0[y] += o;
                    out.push(x);
                }
            } else {
                return Err(Error::InvalidAxis(format!("{axis} needs a modeled rotation of `{}`", target.id)));
            }
        }
    }
    Ok(out)
}
