//! Geometry, camera model, scenario specification and the modeled /
//! unmodeled state split.

mod camera;
mod pose;
pub mod presets;
mod shape;
mod spec;
mod sweep;

pub use camera::Camera;
pub use pose::{axis_angle, pose_compose, quat_from_wxyz, quat_to_wxyz, Pose, Vec3};
pub use presets::{preset, PRESETS};
pub use shape::{Articulation, Geometry, Shape};
pub use spec::{
    bind_state, canonical_wxyz, rotation_wxyz, sample_scene, BoundDof, Dof, DofKind, Layout, ModeledState,
    ObjectSpec, PlacedObject, Primitive, Role, ScenarioSpec, SceneInstance, UnmodeledParams,
};
pub use sweep::{offsets, sweep_axis, Axis, SweepAxis};

#[cfg(test)]
mod tests;
