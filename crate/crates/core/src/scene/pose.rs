use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Rigid transform: `p_parent = rotation * p_child + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: UnitQuaternion<f64>,
}

/// Config-file form: translation in meters, quaternion as `[w, x, y, z]`.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default = "identity_wxyz")]
    rotation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose::new(Vec3::from(r.translation), quat_from_wxyz(r.rotation))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr { translation: p.translation.into(), rotation: quat_to_wxyz(&p.rotation) }
    }
}

/// Builds a unit quaternion from `[w, x, y, z]`, normalizing the input.
pub fn quat_from_wxyz(q: [f64; 4]) -> UnitQuaternion<f64> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    if raw.norm() == 0.0 {
        return UnitQuaternion::identity();
    }
    UnitQuaternion::from_quaternion(raw)
}

pub fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Rotation by `angle` radians about the unit axis `axis`.
pub fn axis_angle(axis: &Vec3, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle)
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose { translation: Vec3::zeros(), rotation: UnitQuaternion::identity() }
    }

    pub fn new(translation: Vec3, rotation: UnitQuaternion<f64>) -> Self {
        let mut rotation = rotation;
        rotation.renormalize();
        Pose { translation, rotation }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Vec3::new(x, y, z), UnitQuaternion::identity())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.translation + self.rotation * other.translation,
            self.rotation * other.rotation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(-(inv * self.translation), inv)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Largest absolute componentwise difference, with quaternion sign
    /// ambiguity resolved (`q` and `-q` are the same rotation).
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        let t = (self.translation - other.translation).amax();
        let a = quat_to_wxyz(&self.rotation);
        let b = quat_to_wxyz(&other.rotation);
        let same: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let flip: f64 = a.iter().zip(&b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
        t.max(same.min(flip))
    }
}

/// Free-function form of [`Pose::compose`].
pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn rot_z_matrix(theta: f64) -> Matrix3<f64> {
        let (s, c) = theta.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    fn quat_matrix(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
        // Written out from the quaternion components, not via nalgebra.
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    #[test]
    fn identity_composition() {
        let p = Pose::new(Vec3::new(0.1, -0.2, 0.7), axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.4));
        assert!(pose_compose(&Pose::identity(), &p).max_abs_diff(&p) < 1e-12);
        assert!(pose_compose(&p, &Pose::identity()).max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn inverse_composition() {
        let p = Pose::new(Vec3::new(0.3, 0.2, -1.0), axis_angle(&Vec3::new(0.0, 1.0, 1.0), 2.0));
        assert!(pose_compose(&p, &p.inverse()).max_abs_diff(&Pose::identity()) < 1e-9);
        assert!(pose_compose(&p.inverse(), &p).max_abs_diff(&Pose::identity()) < 1e-9);
    }

    #[test]
    fn two_quarter_turns_make_half_turn() {
        let quarter = Pose::new(Vec3::zeros(), axis_angle(&Vec3::z(), FRAC_PI_2));
        let half = pose_compose(&quarter, &quarter);
        let oracle = rot_z_matrix(FRAC_PI_2) * rot_z_matrix(FRAC_PI_2);
        assert!((quat_matrix(&half.rotation) - oracle).amax() < 1e-12);
        assert!((quat_matrix(&half.rotation) - rot_z_matrix(PI)).amax() < 1e-12);
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-2.0f64..2.0),
            prop::array::uniform4(-1.0f64..1.0),
        )
            .prop_filter("nonzero quaternion", |(_, q)| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|(t, q)| Pose::new(Vec3::from(t), quat_from_wxyz(q)))
    }

    proptest! {
        #[test]
        fn compose_is_associative_and_unit(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.max_abs_diff(&right) < 1e-9);
            prop_assert!((left.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
            prop_assert!(a.compose(&a.inverse()).max_abs_diff(&Pose::identity()) < 1e-9);
        }

        #[test]
        fn compose_matches_matrix_product(a in arb_pose(), b in arb_pose(), p in prop::array::uniform3(-1.0f64..1.0)) {
            let p = Vec3::from(p);
            let direct = a.compose(&b).transform_point(&p);
            let chained = quat_matrix(&a.rotation) * (quat_matrix(&b.rotation) * p + b.translation) + a.translation;
            prop_assert!((direct - chained).amax() < 1e-9);
        }
    }
}
