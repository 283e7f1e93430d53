//! Declarative scenarios and the split of scene parameters into the
//! modeled state `x` and the unmodeled state `z`.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::UnitQuaternion;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::pose::{axis_angle, quat_from_wxyz, Pose, Vec3};
use super::shape::{Geometry, Shape};
use crate::rng::{self, Domain, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Obstacle,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub role: Role,
    pub shape: Shape,
    /// Nominal pose in the scene frame; bound DOFs act relative to it.
    #[serde(default)]
    pub base: Pose,
    /// When set, the object exists only while the scene's `count` DOF
    /// exceeds this slot index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<u32>,
}

/// One scalar (or quaternion) parameter of one object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DofKind {
    Tx,
    Ty,
    Tz,
    /// Four values `[w, x, y, z]`, applied after the base rotation.
    Quat,
    Roll,
    Pitch,
    Yaw,
    /// Hinge angle of an articulated object.
    Angle,
    SizeX,
    SizeY,
    SizeZ,
    /// Number of slotted objects present. Scene-level; the object part of
    /// the name is ignored.
    Count,
}

impl DofKind {
    const NAMES: [(&'static str, DofKind); 12] = [
        ("tx", DofKind::Tx),
        ("ty", DofKind::Ty),
        ("tz", DofKind::Tz),
        ("quat", DofKind::Quat),
        ("roll", DofKind::Roll),
        ("pitch", DofKind::Pitch),
        ("yaw", DofKind::Yaw),
        ("angle", DofKind::Angle),
        ("size_x", DofKind::SizeX),
        ("size_y", DofKind::SizeY),
        ("size_z", DofKind::SizeZ),
        ("count", DofKind::Count),
    ];

    pub fn width(self) -> usize {
        if self == DofKind::Quat {
            4
        } else {
            1
        }
    }

    fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).unwrap_or("?")
    }
}

/// `object.kind`, e.g. `target.tx` or `scene.count`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Dof {
    pub object: String,
    pub kind: DofKind,
}

impl Dof {
    pub fn new(object: &str, kind: DofKind) -> Self {
        Dof { object: object.to_owned(), kind }
    }
}

impl fmt::Display for Dof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.object, self.kind.name())
    }
}

impl FromStr for Dof {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (object, kind) = s
            .rsplit_once('.')
            .ok_or_else(|| Error::Scenario(format!("DOF `{s}` must look like `object.kind`")))?;
        let kind = DofKind::NAMES
            .iter()
            .find(|(n, _)| *n == kind)
            .map(|(_, k)| *k)
            .ok_or_else(|| Error::Scenario(format!("unknown DOF kind `{kind}` in `{s}`")))?;
        Ok(Dof { object: object.to_owned(), kind })
    }
}

impl TryFrom<String> for Dof {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Dof> for String {
    fn from(d: Dof) -> String {
        d.to_string()
    }
}

/// A DOF together with the interval it is sampled from. Quaternion DOFs
/// have no interval and are sampled uniformly over all rotations; `count`
/// intervals are inclusive integer ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundDof {
    pub dof: Dof,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl BoundDof {
    pub fn new(object: &str, kind: DofKind, lo: f64, hi: f64) -> Self {
        BoundDof { dof: Dof::new(object, kind), range: Some([lo, hi]) }
    }

    pub fn rotation(object: &str) -> Self {
        BoundDof { dof: Dof::new(object, DofKind::Quat), range: None }
    }

    fn sample_into(&self, rng: &mut Rng, out: &mut Vec<f64>) {
        match (self.dof.kind, self.range) {
            (DofKind::Quat, _) => {
                // Normalized isotropic Gaussian is uniform on SO(3).
                let mut q = [0.0f64; 4];
                loop {
                    for v in q.iter_mut() {
                        *v = StandardNormal.sample(rng);
                    }
                    if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
                        break;
                    }
                }
                let q = quat_from_wxyz(q);
                out.extend_from_slice(&canonical_wxyz(&q));
            }
            (DofKind::Count, Some([lo, hi])) => {
                let (lo, hi) = (lo.round() as i64, hi.round() as i64);
                out.push(rng.random_range(lo..=hi) as f64);
            }
            (_, Some([lo, hi])) => {
                out.push(if hi > lo { rng.random_range(lo..hi) } else { lo });
            }
            (_, None) => out.push(0.0),
        }
    }
}

/// Quaternion `[w, x, y, z]` with `w >= 0`.
pub fn canonical_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub camera: Camera,
    /// Camera pose in the scene frame.
    #[serde(default)]
    pub camera_pose: Pose,
    pub objects: Vec<ObjectSpec>,
    /// Layout of the modeled state `x`, with sampling ranges.
    pub state: Vec<BoundDof>,
    /// Layout of the unmodeled state `z`, with randomization ranges.
    #[serde(default)]
    pub unmodeled: Vec<BoundDof>,
}

/// Modeled state `x`; layout given by [`ScenarioSpec::state`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeledState(pub Vec<f64>);

/// Unmodeled state `z`; layout given by [`ScenarioSpec::unmodeled`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnmodeledParams(pub Vec<f64>);

impl ModeledState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl UnmodeledParams {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Where each DOF lives inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub dofs: Vec<Dof>,
    pub offsets: Vec<usize>,
    pub len: usize,
}

impl Layout {
    pub fn new(bound: &[BoundDof]) -> Self {
        let mut offsets = Vec::with_capacity(bound.len());
        let mut len = 0;
        for b in bound {
            offsets.push(len);
            len += b.dof.kind.width();
        }
        Layout { dofs: bound.iter().map(|b| b.dof.clone()).collect(), offsets, len }
    }

    pub fn index_of(&self, object: &str, kind: DofKind) -> Option<usize> {
        self.dofs
            .iter()
            .position(|d| d.kind == kind && (kind == DofKind::Count || d.object == object))
            .map(|i| self.offsets[i])
    }

    /// Offsets of every quaternion block.
    pub fn quat_blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.dofs.iter().zip(&self.offsets).filter(|(d, _)| d.kind == DofKind::Quat).map(|(_, o)| *o)
    }

    /// Index into `dofs` for each scalar slot of the flat vector.
    pub fn slot_owner(&self) -> Vec<usize> {
        let mut owner = Vec::with_capacity(self.len);
        for (i, d) in self.dofs.iter().enumerate() {
            owner.extend(core::iter::repeat(i).take(d.kind.width()));
        }
        owner
    }
}

/// A primitive posed in the scene frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub geometry: Geometry,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub id: String,
    pub role: Role,
    /// Object frame in the scene frame.
    pub pose: Pose,
    pub shape: Shape,
    /// Resolved hinge angle, for articulated objects.
    pub angle: Option<f64>,
    pub primitives: Vec<Primitive>,
}

/// Fully resolved scene: a deterministic function of `(spec, x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInstance {
    pub camera: Camera,
    pub camera_pose: Pose,
    pub objects: Vec<PlacedObject>,
}

impl SceneInstance {
    pub fn object(&self, id: &str) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Same scene restricted to the given object ids.
    pub fn only(&self, ids: &BTreeSet<String>) -> SceneInstance {
        SceneInstance {
            camera: self.camera,
            camera_pose: self.camera_pose,
            objects: self.objects.iter().filter(|o| ids.contains(&o.id)).cloned().collect(),
        }
    }
}

#[derive(Default)]
struct Params {
    t: [f64; 3],
    quat: Option<[f64; 4]>,
    rpy: [f64; 3],
    angle: Option<f64>,
    size: [Option<f64>; 3],
}

impl ScenarioSpec {
    pub fn state_layout(&self) -> Layout {
        Layout::new(&self.state)
    }

    pub fn unmodeled_layout(&self) -> Layout {
        Layout::new(&self.unmodeled)
    }

    pub fn target_ids(&self) -> BTreeSet<String> {
        self.objects.iter().filter(|o| o.role == Role::Target).map(|o| o.id.clone()).collect()
    }

    /// First object with the target role.
    pub fn target(&self) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.role == Role::Target)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return Err(Error::Scenario(format!("duplicate object id `{}`", o.id)));
            }
            o.shape.validate()?;
        }
        let mut seen = BTreeSet::new();
        for (side, list) in [("state", &self.state), ("unmodeled", &self.unmodeled)] {
            for b in list {
                let d = &b.dof;
                if d.kind != DofKind::Count && !ids.contains(d.object.as_str()) {
                    return Err(Error::Scenario(format!("{side} DOF `{d}` names an unknown object")));
                }
                let key = if d.kind == DofKind::Count { Dof::new("", DofKind::Count) } else { d.clone() };
                if !seen.insert(key) {
                    return Err(Error::Scenario(format!("DOF `{d}` is bound more than once")));
                }
                match (d.kind, b.range) {
                    (DofKind::Quat, _) => {}
                    (_, None) => return Err(Error::Scenario(format!("{side} DOF `{d}` needs a range"))),
                    (_, Some([lo, hi])) if !(lo <= hi) => {
                        return Err(Error::Scenario(format!("{side} DOF `{d}` has range [{lo}, {hi}]")))
                    }
                    _ => {}
                }
                if d.kind == DofKind::Angle {
                    let obj = self.objects.iter().find(|o| o.id == d.object);
                    if !matches!(obj.map(|o| &o.shape), Some(Shape::Articulated(_))) {
                        return Err(Error::Scenario(format!("`{d}` requires an articulated object")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds the posed scene for a modeled state and unmodeled parameters.
    pub fn bind(&self, x: &ModeledState, z: &UnmodeledParams) -> Result<SceneInstance> {
        let xl = self.state_layout();
        let zl = self.unmodeled_layout();
        if x.len() != xl.len {
            return Err(Error::Binding(format!("state has {} values, layout needs {}", x.len(), xl.len)));
        }
        if z.0.len() != zl.len {
            return Err(Error::Binding(format!(
                "unmodeled parameters have {} values, layout needs {}",
                z.0.len(),
                zl.len
            )));
        }

        let mut count: Option<f64> = None;
        let mut params: Vec<Params> = self.objects.iter().map(|_| Params::default()).collect();
        for (layout, values) in [(&xl, x.as_slice()), (&zl, z.as_slice())] {
            for (dof, &off) in layout.dofs.iter().zip(&layout.offsets) {
                if dof.kind == DofKind::Count {
                    count = Some(values[off]);
                    continue;
                }
                let Some(i) = self.objects.iter().position(|o| o.id == dof.object) else {
                    return Err(Error::UnknownId(dof.object.clone()));
                };
                let p = &mut params[i];
                let v = values[off];
                match dof.kind {
                    DofKind::Tx => p.t[0] = v,
                    DofKind::Ty => p.t[1] = v,
                    DofKind::Tz => p.t[2] = v,
                    DofKind::Quat => p.quat = Some([v, values[off + 1], values[off + 2], values[off + 3]]),
                    DofKind::Roll => p.rpy[0] = v,
                    DofKind::Pitch => p.rpy[1] = v,
                    DofKind::Yaw => p.rpy[2] = v,
                    DofKind::Angle => p.angle = Some(v),
                    DofKind::SizeX => p.size[0] = Some(v),
                    DofKind::SizeY => p.size[1] = Some(v),
                    DofKind::SizeZ => p.size[2] = Some(v),
                    DofKind::Count => unreachable!(),
                }
            }
        }

        let mut objects = Vec::with_capacity(self.objects.len());
        for (o, p) in self.objects.iter().zip(&params) {
            if let (Some(slot), Some(c)) = (o.slot, count) {
                if c.round() <= slot as f64 {
                    continue;
                }
            }
            let local_rot = match p.quat {
                Some(q) => quat_from_wxyz(q),
                None => UnitQuaternion::from_euler_angles(p.rpy[0], p.rpy[1], p.rpy[2]),
            };
            let pose = Pose::new(o.base.translation + Vec3::from(p.t), o.base.rotation * local_rot);
            let (shape, angle, primitives) = match &o.shape {
                Shape::Plane { extent } => {
                    let geometry = Geometry::Plane { half: [extent[0] * 0.5, extent[1] * 0.5] };
                    (o.shape.clone(), None, alloc::vec![Primitive { geometry, pose }])
                }
                Shape::Box { dims } => {
                    let dims = [0, 1, 2].map(|k| p.size[k].unwrap_or(dims[k]));
                    let shape = Shape::Box { dims };
                    shape.validate()?;
                    let geometry = Geometry::Box { half: dims.map(|d| d * 0.5) };
                    (shape, None, alloc::vec![Primitive { geometry, pose }])
                }
                Shape::Articulated(a) => {
                    let angle = p.angle.unwrap_or(0.0);
                    let base = Primitive { geometry: Geometry::Box { half: a.base.map(|d| d * 0.5) }, pose };
                    let flap = Primitive {
                        geometry: Geometry::Box { half: a.flap.map(|d| d * 0.5) },
                        pose: pose.compose(&a.flap_pose(angle)),
                    };
                    (o.shape.clone(), Some(angle), alloc::vec![base, flap])
                }
            };
            objects.push(PlacedObject { id: o.id.clone(), role: o.role, pose, shape, angle, primitives });
        }
        Ok(SceneInstance { camera: self.camera, camera_pose: self.camera_pose, objects })
    }

    pub fn sample_state(&self, rng: &mut Rng) -> ModeledState {
        let mut v = Vec::with_capacity(self.state_layout().len);
        for b in &self.state {
            b.sample_into(rng, &mut v);
        }
        ModeledState(v)
    }

    pub fn sample_unmodeled(&self, rng: &mut Rng) -> UnmodeledParams {
        let mut v = Vec::with_capacity(self.unmodeled_layout().len);
        for b in &self.unmodeled {
            b.sample_into(rng, &mut v);
        }
        UnmodeledParams(v)
    }

    /// Per-value `(offset, scale)` mapping each bounded state value to
    /// `[-1, 1]`; quaternion and unbounded values pass through.
    pub fn state_affine(&self) -> (Vec<f64>, Vec<f64>) {
        let mut off = Vec::new();
        let mut scale = Vec::new();
        for b in &self.state {
            match (b.dof.kind, b.range) {
                (DofKind::Quat, _) => {
                    off.extend_from_slice(&[0.0; 4]);
                    scale.extend_from_slice(&[1.0; 4]);
                }
                (_, Some([lo, hi])) if hi > lo => {
                    off.push((lo + hi) * 0.5);
                    scale.push(2.0 / (hi - lo));
                }
                (_, _) => {
                    off.push(0.0);
                    scale.push(1.0);
                }
            }
        }
        (off, scale)
    }

    /// Midpoint of every unmodeled range; used where a single nominal `z`
    /// is needed (e.g. rendering the target alone).
    pub fn nominal_unmodeled(&self) -> UnmodeledParams {
        let mut v = Vec::new();
        for b in &self.unmodeled {
            match (b.dof.kind, b.range) {
                (DofKind::Quat, _) => v.extend_from_slice(&[1.0, 0.0, 0.0, 0.0]),
                (DofKind::Count, Some([lo, hi])) => v.push(((lo + hi) * 0.5).floor()),
                (_, Some([lo, hi])) => v.push((lo + hi) * 0.5),
                (_, None) => v.push(0.0),
            }
        }
        UnmodeledParams(v)
    }

    /// Same scenario rendered at another resolution.
    pub fn with_resolution(&self, width: usize, height: usize) -> Result<ScenarioSpec> {
        let mut s = self.clone();
        s.camera = self.camera.rescaled(width, height)?;
        Ok(s)
    }
}

/// Free-function form of [`ScenarioSpec::bind`].
pub fn bind_state(spec: &ScenarioSpec, x: &ModeledState, z: &UnmodeledParams) -> Result<SceneInstance> {
    spec.bind(x, z)
}

/// Draws `(x, z)` for a seed. Deterministic.
pub fn sample_scene(spec: &ScenarioSpec, seed: u64) -> (ModeledState, UnmodeledParams) {
    let mut rng = rng::rng_for(seed, Domain::Scene, &[]);
    let x = spec.sample_state(&mut rng);
    let z = spec.sample_unmodeled(&mut rng);
    (x, z)
}

/// Rotation by `angle` about a scene-frame axis, as a convenience for
/// building states by hand.
pub fn rotation_wxyz(axis: [f64; 3], angle: f64) -> [f64; 4] {
    canonical_wxyz(&axis_angle(&Vec3::from(axis), angle))
}

pub(crate) fn deg(v: f64) -> f64 {
    v.to_radians()
}
