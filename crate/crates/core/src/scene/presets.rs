//! Built-in scenarios. Randomization ranges are documented constants of
//! this crate, chosen for a desk-scale camera.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use super::camera::Camera;
use super::pose::{Pose, Vec3};
use super::shape::{Articulation, Shape};
use super::spec::{deg, BoundDof, DofKind, ObjectSpec, Role, ScenarioSpec};

/// Target box edge lengths in meters.
pub const BOX_DIMS: [f64; 3] = [0.11, 0.11, 0.06];

pub const PRESETS: [&str; 5] = ["box", "box-translation", "laptop", "cabinet", "tabletop"];

pub fn preset(name: &str) -> Option<ScenarioSpec> {
    match name {
        "box" => Some(box_scene()),
        "box-translation" => Some(box_translation()),
        "laptop" => Some(laptop()),
        "cabinet" => Some(cabinet()),
        "tabletop" => Some(tabletop()),
        _ => None,
    }
}

/// Camera pose in a z-up scene frame looking from `eye` at `target`.
pub fn look_at(eye: Vec3, target: Vec3) -> Pose {
    let forward = (target - eye).normalize();
    let right = forward.cross(&Vec3::z()).normalize();
    let down = forward.cross(&right);
    let m = Matrix3::from_columns(&[right, down, forward]);
    Pose::new(eye, UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)))
}

fn object(id: &str, role: Role, shape: Shape, base: Pose) -> ObjectSpec {
    ObjectSpec { id: id.to_string(), role, shape, base, slot: None }
}

/// Background plane facing the camera; pose offsets are unmodeled.
fn facing_plane() -> (ObjectSpec, Vec<BoundDof>) {
    let plane = object(
        "plane",
        Role::Background,
        Shape::Plane { extent: [6.0, 6.0] },
        Pose::from_translation(0.0, 0.0, 1.1),
    );
    let z = vec![
        BoundDof::new("plane", DofKind::Tz, -0.15, 0.15),
        BoundDof::new("plane", DofKind::Roll, deg(-15.0), deg(15.0)),
        BoundDof::new("plane", DofKind::Pitch, deg(-15.0), deg(15.0)),
    ];
    (plane, z)
}

fn target_box() -> ObjectSpec {
    object("target", Role::Target, Shape::Box { dims: BOX_DIMS }, Pose::identity())
}

/// Symmetric box with a free 6-DOF pose in the camera frame, a randomized
/// background plane and up to three random obstacle boxes.
pub fn box_scene() -> ScenarioSpec {
    let (plane, mut z) = facing_plane();
    let mut objects = vec![plane, target_box()];
    z.push(BoundDof::new("scene", DofKind::Count, 0.0, 3.0));
    for k in 0..3u32 {
        let id = ["obstacle1", "obstacle2", "obstacle3"][k as usize];
        let mut o = object(id, Role::Obstacle, Shape::Box { dims: [0.08; 3] }, Pose::identity());
        o.slot = Some(k);
        objects.push(o);
        z.extend([
            BoundDof::new(id, DofKind::Tx, -0.3, 0.3),
            BoundDof::new(id, DofKind::Ty, -0.15, 0.15),
            BoundDof::new(id, DofKind::Tz, 0.4, 1.0),
            BoundDof::new(id, DofKind::Yaw, -PI, PI),
            BoundDof::new(id, DofKind::SizeX, 0.04, 0.15),
            BoundDof::new(id, DofKind::SizeY, 0.04, 0.15),
            BoundDof::new(id, DofKind::SizeZ, 0.04, 0.15),
        ]);
    }
    ScenarioSpec {
        name: "box".to_string(),
        camera: Camera::desk(2.0),
        camera_pose: Pose::identity(),
        objects,
        state: vec![
            BoundDof::new("target", DofKind::Tx, -0.15, 0.15),
            BoundDof::new("target", DofKind::Ty, -0.08, 0.08),
            BoundDof::new("target", DofKind::Tz, 0.45, 0.8),
            BoundDof::rotation("target"),
        ],
        unmodeled: z,
    }
}

/// Single target box with a translation-only state in front of a
/// randomized background plane. The desk training scenario; its narrower
/// 60° lens keeps a 1.5 cm step above one pixel at working distance.
pub fn box_translation() -> ScenarioSpec {
    let (plane, z) = facing_plane();
    ScenarioSpec {
        name: "box-translation".to_string(),
        camera: Camera::from_hfov(64, 32, 60.0, 2.0).expect("valid camera"),
        camera_pose: Pose::identity(),
        objects: vec![plane, target_box()],
        state: vec![
            BoundDof::new("target", DofKind::Tx, -0.15, 0.15),
            BoundDof::new("target", DofKind::Ty, -0.06, 0.06),
            BoundDof::new("target", DofKind::Tz, 0.45, 0.8),
        ],
        unmodeled: z,
    }
}

fn table(extent: [f64; 2]) -> ObjectSpec {
    object("table", Role::Background, Shape::Plane { extent }, Pose::identity())
}

/// Laptop on a table; the state is the lid opening angle, the laptop's
/// placement on the table is unmodeled.
pub fn laptop() -> ScenarioSpec {
    let laptop = Articulation {
        base: [0.30, 0.20, 0.02],
        flap: [0.30, 0.20, 0.01],
        flap_rest: [0.0, 0.0, 0.015],
        hinge_axis: [-1.0, 0.0, 0.0],
        hinge_origin: [0.0, 0.10, 0.01],
        angle_range: [0.0, deg(130.0)],
    };
    ScenarioSpec {
        name: "laptop".to_string(),
        camera: Camera::desk(1.5),
        camera_pose: look_at(Vec3::new(0.0, -0.55, 0.45), Vec3::new(0.0, 0.05, 0.05)),
        objects: vec![
            table([2.0, 2.0]),
            object("laptop", Role::Target, Shape::Articulated(laptop), Pose::from_translation(0.0, 0.0, 0.01)),
        ],
        state: vec![BoundDof::new("laptop", DofKind::Angle, 0.0, deg(130.0))],
        unmodeled: vec![
            BoundDof::new("laptop", DofKind::Tx, -0.1, 0.1),
            BoundDof::new("laptop", DofKind::Ty, -0.05, 0.1),
            BoundDof::new("laptop", DofKind::Yaw, deg(-30.0), deg(30.0)),
            BoundDof::new("table", DofKind::Tz, -0.02, 0.0),
        ],
    }
}

/// Cabinet with a hinged door. State `[p_x, p_y, θ_z, α]` in a z-up,
/// camera-fixed scene frame; floor and back wall are unmodeled.
pub fn cabinet() -> ScenarioSpec {
    let cabinet = Articulation {
        base: [0.6, 0.4, 1.0],
        flap: [0.6, 0.02, 1.0],
        flap_rest: [0.0, -0.21, 0.0],
        hinge_axis: [0.0, 0.0, -1.0],
        hinge_origin: [-0.3, -0.2, 0.0],
        angle_range: [0.0, deg(100.0)],
    };
    let wall = Pose::new(Vec3::new(0.0, 0.8, 1.5), UnitQuaternion::from_euler_angles(PI / 2.0, 0.0, 0.0));
    ScenarioSpec {
        name: "cabinet".to_string(),
        camera: Camera::desk(4.0),
        camera_pose: look_at(Vec3::new(0.0, -2.0, 0.9), Vec3::new(0.0, 0.0, 0.5)),
        objects: vec![
            table([8.0, 8.0]),
            object("wall", Role::Background, Shape::Plane { extent: [8.0, 3.0] }, wall),
            object("cabinet", Role::Target, Shape::Articulated(cabinet), Pose::from_translation(0.0, 0.0, 0.5)),
        ],
        state: vec![
            BoundDof::new("cabinet", DofKind::Tx, -0.3, 0.3),
            BoundDof::new("cabinet", DofKind::Ty, -0.3, 0.3),
            BoundDof::new("cabinet", DofKind::Yaw, deg(-30.0), deg(30.0)),
            BoundDof::new("cabinet", DofKind::Angle, 0.0, deg(100.0)),
        ],
        unmodeled: vec![
            BoundDof::new("wall", DofKind::Ty, -0.1, 0.4),
            BoundDof::new("wall", DofKind::Yaw, deg(-10.0), deg(10.0)),
        ],
    }
}

/// Box on a table behind two obstacles, for the particle filter demo.
/// The state is the box position on the table; `scene.count` removes the
/// obstacles one at a time (slot 0 stays longest).
pub fn tabletop() -> ScenarioSpec {
    let obstacle = |id: &str, x: f64, slot: u32| {
        let mut o = object(id, Role::Obstacle, Shape::Box { dims: [0.16, 0.06, 0.22] }, Pose::from_translation(x, 0.0, 0.11));
        o.slot = Some(slot);
        o
    };
    ScenarioSpec {
        name: "tabletop".to_string(),
        camera: Camera::desk(1.6),
        camera_pose: look_at(Vec3::new(0.0, -0.6, 0.45), Vec3::new(0.0, 0.1, 0.0)),
        objects: vec![
            table([1.6, 1.2]),
            object("target", Role::Target, Shape::Box { dims: BOX_DIMS }, Pose::from_translation(0.0, 0.0, 0.03)),
            obstacle("obstacle_right", 0.17, 0),
            obstacle("obstacle_left", -0.17, 1),
        ],
        state: vec![
            BoundDof::new("target", DofKind::Tx, -0.35, 0.35),
            BoundDof::new("target", DofKind::Ty, 0.05, 0.25),
        ],
        unmodeled: vec![BoundDof::new("scene", DofKind::Count, 0.0, 2.0)],
    }
}
