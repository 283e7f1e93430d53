use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix4;

use super::*;

fn identity_box_state(z: f64) -> ModeledState {
    ModeledState(vec![0.0, 0.0, z, 1.0, 0.0, 0.0, 0.0])
}

#[test]
fn presets_validate() {
    for name in PRESETS {
        preset(name).unwrap().validate().unwrap();
    }
    assert!(preset("nope").is_none());
}

#[test]
fn box_target_dimensions() {
    let spec = preset("box").unwrap();
    assert_eq!(spec.target().unwrap().shape, Shape::Box { dims: [0.11, 0.11, 0.06] });
}

#[test]
fn canonical_box_placement() {
    let spec = preset("box").unwrap();
    let mut z = UnmodeledParams(vec![0.0; spec.unmodeled_layout().len]);
    z.0[3] = 0.0; // no obstacles
    let scene = spec.bind(&identity_box_state(1.0), &z).unwrap();
    let ids: Vec<_> = scene.objects.iter().map(|o| o.id.as_str()).collect();
    assert_eq!(ids, ["plane", "target"]);
    let t = scene.object("target").unwrap();
    assert!(t.pose.max_abs_diff(&Pose::from_translation(0.0, 0.0, 1.0)) < 1e-12);
    let plane = scene.object("plane").unwrap();
    assert!(plane.pose.translation.z > 1.0);
}

#[test]
fn closed_laptop_lid_rests_on_base() {
    let spec = preset("laptop").unwrap();
    let z = spec.nominal_unmodeled();
    let scene = spec.bind(&ModeledState(vec![0.0]), &z).unwrap();
    let laptop = scene.object("laptop").unwrap();
    let (base, lid) = (&laptop.primitives[0], &laptop.primitives[1]);
    assert!(base.pose.rotation.angle_to(&lid.pose.rotation) < 1e-12);
    let offset = base.pose.inverse().compose(&lid.pose).translation;
    assert!((offset - Vec3::new(0.0, 0.0, 0.015)).amax() < 1e-12);
}

fn homogeneous(t: [f64; 3], axis: [f64; 3], angle: f64) -> Matrix4<f64> {
    // Rodrigues formula written out by hand.
    let (s, c) = angle.sin_cos();
    let [x, y, z] = axis;
    let k = 1.0 - c;
    Matrix4::new(
        c + x * x * k,
        x * y * k - z * s,
        x * z * k + y * s,
        t[0],
        y * x * k + z * s,
        c + y * y * k,
        y * z * k - x * s,
        t[1],
        z * x * k - y * s,
        z * y * k + x * s,
        c + z * z * k,
        t[2],
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

fn pose_matrix(p: &Pose) -> Matrix4<f64> {
    p.rotation.to_homogeneous().append_translation(&p.translation)
}

#[test]
fn cabinet_door_matches_forward_kinematics() {
    let spec = preset("cabinet").unwrap();
    let (yaw, alpha) = (30f64.to_radians(), 45f64.to_radians());
    let x = ModeledState(vec![0.1, 0.2, yaw, alpha]);
    let scene = spec.bind(&x, &spec.nominal_unmodeled()).unwrap();
    let door = &scene.object("cabinet").unwrap().primitives[1];

    let body = homogeneous([0.1, 0.2, 0.5], [0.0, 0.0, 1.0], yaw);
    let to_hinge = homogeneous([-0.3, -0.2, 0.0], [0.0, 0.0, 1.0], 0.0);
    let swing = homogeneous([0.0; 3], [0.0, 0.0, -1.0], alpha);
    let from_hinge = homogeneous([0.3, -0.01, 0.0], [0.0, 0.0, 1.0], 0.0);
    let oracle = body * to_hinge * swing * from_hinge;
    assert!((pose_matrix(&door.pose) - oracle).amax() < 1e-12);
}

#[test]
fn binding_rejects_wrong_lengths() {
    let spec = preset("box").unwrap();
    let z = spec.nominal_unmodeled();
    assert!(matches!(spec.bind(&ModeledState(vec![0.0; 3]), &z), Err(crate::Error::Binding(_))));
    assert!(matches!(
        spec.bind(&identity_box_state(1.0), &UnmodeledParams(vec![])),
        Err(crate::Error::Binding(_))
    ));
}

#[test]
fn validation_catches_overlaps_and_duplicates() {
    let mut spec = preset("box-translation").unwrap();
    spec.unmodeled.push(BoundDof::new("target", DofKind::Tx, 0.0, 1.0));
    assert!(spec.validate().is_err());

    let mut spec = preset("box-translation").unwrap();
    let dup = spec.objects[0].clone();
    spec.objects.push(dup);
    assert!(spec.validate().is_err());

    let mut spec = preset("box-translation").unwrap();
    spec.state.push(BoundDof::new("ghost", DofKind::Tx, 0.0, 1.0));
    assert!(spec.validate().is_err());
}

#[test]
fn bind_is_pure() {
    let spec = preset("box").unwrap();
    let (x, z) = sample_scene(&spec, 11);
    assert_eq!(spec.bind(&x, &z).unwrap(), spec.bind(&x, &z).unwrap());
}

#[test]
fn sampling_is_deterministic_and_in_range() {
    let spec = preset("box").unwrap();
    assert_eq!(sample_scene(&spec, 5), sample_scene(&spec, 5));
    let zl = spec.unmodeled_layout();
    for seed in 0..200 {
        let (x, z) = sample_scene(&spec, seed);
        let q = &x.0[3..7];
        assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
        for (b, off) in spec.unmodeled.iter().zip(&zl.offsets) {
            let [lo, hi] = b.range.unwrap();
            assert!(z.0[*off] >= lo && z.0[*off] <= hi, "{} out of range", b.dof);
        }
    }
}

#[test]
fn distinct_seeds_give_distinct_z() {
    let spec = preset("box-translation").unwrap();
    let zs: Vec<_> = (0..500).map(|s| sample_scene(&spec, s).1).collect();
    for i in 0..zs.len() {
        for j in i + 1..zs.len() {
            assert_ne!(zs[i], zs[j]);
        }
    }
}

#[test]
fn obstacle_count_is_uniform() {
    let spec = preset("box").unwrap();
    let idx = spec.unmodeled_layout().index_of("scene", DofKind::Count).unwrap();
    let n = 10_000;
    let mut hist = [0usize; 4];
    for seed in 0..n {
        let (_, z) = sample_scene(&spec, seed);
        hist[z.0[idx] as usize] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    // Chi-square critical value, 3 degrees of freedom, p = 0.01.
    assert!(chi2 < 11.345, "chi2 = {chi2}, histogram {hist:?}");
}

#[test]
fn linspace_sweep() {
    let spec = preset("box").unwrap();
    let z = spec.nominal_unmodeled();
    let x = identity_box_state(0.6);
    let s = sweep_axis(&spec, &x, &z, SweepAxis::Translate(Axis::X), 0.1, 3).unwrap();
    let tx: Vec<f64> = s.iter().map(|x| x.0[0]).collect();
    assert_eq!(tx, [-0.1, 0.0, 0.1]);
    assert!(sweep_axis(&spec, &x, &z, SweepAxis::Translate(Axis::X), 0.1, 4).is_err());
    assert!(sweep_axis(&spec, &x, &z, SweepAxis::Dof(99), 0.1, 3).is_err());
}

#[test]
fn translation_follows_object_axes() {
    let spec = preset("box").unwrap();
    let z = spec.nominal_unmodeled();
    let mut x = identity_box_state(0.6);
    x.0[3..7].copy_from_slice(&rotation_wxyz([0.0, 0.0, 1.0], FRAC_PI_2));
    let s = sweep_axis(&spec, &x, &z, SweepAxis::Translate(Axis::X), 0.2, 3).unwrap();
    // Object x axis points along camera y after a quarter turn about z.
    assert!((s[2].0[0] - 0.0).abs() < 1e-12 && (s[2].0[1] - 0.2).abs() < 1e-12);
}

#[test]
fn rotation_sweep_matches_axis_angle() {
    let spec = preset("box").unwrap();
    let z = spec.nominal_unmodeled();
    let mut x = identity_box_state(0.6);
    let q0 = rotation_wxyz([1.0, 1.0, 0.0], 0.3);
    x.0[3..7].copy_from_slice(&q0);
    let s = sweep_axis(&spec, &x, &z, SweepAxis::Rotate(Axis::Z), PI, 9).unwrap();
    let base = quat_from_wxyz(q0);
    for (i, xi) in s.iter().enumerate() {
        let theta = -PI + i as f64 * PI / 4.0;
        // q0 ⊗ (cos θ/2, 0, 0, sin θ/2), expanded by hand.
        let (s2, c2) = (theta / 2.0).sin_cos();
        let [w, a, b, c] = quat_to_wxyz(&base);
        let expect = [w * c2 - c * s2, a * c2 + b * s2, b * c2 - a * s2, c * c2 + w * s2];
        let got = &xi.0[3..7];
        let same = (0..4).map(|k| (got[k] - expect[k]).abs()).fold(0.0, f64::max);
        let flip = (0..4).map(|k| (got[k] + expect[k]).abs()).fold(0.0, f64::max);
        assert!(same.min(flip) < 1e-12, "step {i}: {got:?} vs {expect:?}");
    }
    assert_eq!(s[4], x);
    assert_eq!(s.iter().filter(|v| **v == x).count(), 1);
}

#[test]
fn yaw_rotation_sweep_and_missing_rotation() {
    let spec = preset("cabinet").unwrap();
    let z = spec.nominal_unmodeled();
    let x = ModeledState(vec![0.0, 0.0, 0.1, 0.5]);
    let s = sweep_axis(&spec, &x, &z, SweepAxis::Rotate(Axis::Z), 0.2, 3).unwrap();
    assert!((s[0].0[2] + 0.1).abs() < 1e-12);
    assert!(sweep_axis(&spec, &x, &z, SweepAxis::Rotate(Axis::X), 0.2, 3).is_err());

    let spec = preset("box-translation").unwrap();
    let x = ModeledState(vec![0.0, 0.0, 0.6]);
    assert!(matches!(
        sweep_axis(&spec, &x, &spec.nominal_unmodeled(), SweepAxis::Rotate(Axis::Z), 0.2, 3),
        Err(crate::Error::InvalidAxis(_))
    ));
}

#[test]
fn axis_tags_parse() {
    assert_eq!("tx".parse::<SweepAxis>().unwrap(), SweepAxis::Translate(Axis::X));
    assert_eq!("rz".parse::<SweepAxis>().unwrap(), SweepAxis::Rotate(Axis::Z));
    assert_eq!("dof3".parse::<SweepAxis>().unwrap(), SweepAxis::Dof(3));
    assert!("qq".parse::<SweepAxis>().is_err());
    assert!("".parse::<SweepAxis>().is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sweep_contains_ground_truth_once(seed in 0u64..1000, half in 0.01f64..0.5, k in 1usize..10, ax in 0usize..6) {
            let spec = preset("box").unwrap();
            let (x, z) = sample_scene(&spec, seed);
            let axis = [
                SweepAxis::Translate(Axis::X), SweepAxis::Translate(Axis::Y), SweepAxis::Translate(Axis::Z),
                SweepAxis::Rotate(Axis::X), SweepAxis::Rotate(Axis::Y), SweepAxis::Rotate(Axis::Z),
            ][ax];
            let steps = 2 * k + 1;
            let s = sweep_axis(&spec, &x, &z, axis, half, steps).unwrap();
            prop_assert_eq!(s.len(), steps);
            prop_assert_eq!(&s[k], &x);
            prop_assert_eq!(s.iter().filter(|v| **v == x).count(), 1);
        }
    }
}
