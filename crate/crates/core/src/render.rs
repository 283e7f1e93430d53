//! Ray-casting depth renderer: the measurement function `f(x, z) -> y`.
//!
//! Each pixel stores z-depth (distance along the optical axis) of the
//! nearest surface. Pixels whose ray hits nothing within `max_depth` read
//! `max_depth`; the value 0 is reserved for invalid sensor readings.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::scene::{Geometry, Pose, SceneInstance, Vec3};
use crate::{Error, Result};

/// Value stored for a missing reading.
pub const INVALID: f32 = 0.0;

const T_MIN: f64 = 1e-9;

/// Row-major single-channel depth image in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension {
                expected: format!("{width}x{height} = {} pixels", width * height),
                actual: format!("{}", data.len()),
            });
        }
        Ok(DepthImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        DepthImage { width, height, data: vec![value; width * height] }
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.data[i] > INVALID
    }

    fn check_size(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::Dimension {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{width}x{height}"),
            });
        }
        Ok(())
    }

    pub fn check_same(&self, other: &DepthImage) -> Result<()> {
        self.check_size(other.width, other.height)
    }
}

/// Row-major region-of-interest mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension {
                expected: format!("{width}x{height} = {} pixels", width * height),
                actual: format!("{}", data.len()),
            });
        }
        Ok(SegMask { width, height, data })
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Pixelwise OR.
    pub fn union(&self, other: &SegMask) -> Result<SegMask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", other.width, other.height),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Ok(SegMask { width: self.width, height: self.height, data })
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &SegMask) -> f64 {
        let inter = self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count();
        let uni = self.data.iter().zip(&other.data).filter(|(a, b)| **a || **b).count();
        if uni == 0 {
            0.0
        } else {
            inter as f64 / uni as f64
        }
    }
}

/// Nearest positive ray parameter at which `origin + t * dir` enters the
/// axis-aligned box `[-half, half]`. If the origin is inside, the exit.
pub fn intersect_box(origin: &Vec3, dir: &Vec3, half: &[f64; 3]) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..3 {
        if dir[k] == 0.0 {
            if origin[k] < -half[k] || origin[k] > half[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[k];
        let (mut a, mut b) = ((-half[k] - origin[k]) * inv, (half[k] - origin[k]) * inv);
        if a > b {
            core::mem::swap(&mut a, &mut b);
        }
        t_near = t_near.max(a);
        t_far = t_far.min(b);
    }
    if t_near > t_far || t_far < T_MIN {
        None
    } else if t_near > T_MIN {
        Some(t_near)
    } else {
        Some(t_far)
    }
}

/// Ray parameter where the ray crosses the rectangle `|x| <= half[0]`,
/// `|y| <= half[1]` in the local z = 0 plane.
pub fn intersect_plane(origin: &Vec3, dir: &Vec3, half: &[f64; 2]) -> Option<f64> {
    if dir.z == 0.0 {
        return None;
    }
    let t = -origin.z / dir.z;
    if !(t > T_MIN) {
        return None;
    }
    let p = origin + dir * t;
    (p.x.abs() <= half[0] && p.y.abs() <= half[1]).then_some(t)
}

/// Primitives expressed for ray casting from the camera center: local ray
/// origin is fixed, direction is rotated per pixel.
struct CameraPrimitive {
    object: usize,
    geometry: Geometry,
    local_origin: Vec3,
    to_local: Pose,
}

fn camera_primitives(scene: &SceneInstance) -> Vec<CameraPrimitive> {
    let scene_from_camera = scene.camera_pose;
    let mut out = Vec::new();
    for (i, obj) in scene.objects.iter().enumerate() {
        for prim in &obj.primitives {
            // primitive_from_camera
            let to_local = prim.pose.inverse().compose(&scene_from_camera);
            out.push(CameraPrimitive {
                object: i,
                geometry: prim.geometry,
                local_origin: to_local.translation,
                to_local,
            });
        }
    }
    out
}

/// Nearest hit along the camera-frame ray `t * dir` (dir.z = 1) within
/// `max_depth`: `(z-depth, object index)`.
fn cast(prims: &[CameraPrimitive], dir: &Vec3, max_depth: f64) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for p in prims {
        let d = p.to_local.transform_vector(dir);
        let t = match &p.geometry {
            Geometry::Box { half } => intersect_box(&p.local_origin, &d, half),
            Geometry::Plane { half } => intersect_plane(&p.local_origin, &d, half),
        };
        if let Some(t) = t {
            if t <= max_depth && best.is_none_or(|(b, _)| t < b) {
                best = Some((t, p.object));
            }
        }
    }
    best
}

/// Depth image and, per pixel, the index of the object that was hit.
pub fn render_with_ids(scene: &SceneInstance) -> (DepthImage, Vec<Option<usize>>) {
    let cam = &scene.camera;
    let prims = camera_primitives(scene);
    let mut depth = Vec::with_capacity(cam.pixel_count());
    let mut ids = Vec::with_capacity(cam.pixel_count());
    for row in 0..cam.height {
        for col in 0..cam.width {
            match cast(&prims, &cam.ray_direction(col, row), cam.max_depth) {
                Some((t, id)) => {
                    depth.push(t as f32);
                    ids.push(Some(id));
                }
                None => {
                    depth.push(cam.max_depth as f32);
                    ids.push(None);
                }
            }
        }
    }
    (DepthImage { width: cam.width, height: cam.height, data: depth }, ids)
}

pub fn render_depth(scene: &SceneInstance) -> DepthImage {
    render_with_ids(scene).0
}

/// Mask of pixels whose nearest hit belongs to one of `target_ids`.
pub fn render_segmentation(scene: &SceneInstance, target_ids: &BTreeSet<alloc::string::String>) -> Result<SegMask> {
    for id in target_ids {
        if scene.object(id).is_none() {
            return Err(Error::UnknownId(id.clone()));
        }
    }
    let (_, ids) = render_with_ids(scene);
    Ok(mask_from_ids(scene, &ids, target_ids))
}

pub fn mask_from_ids(
    scene: &SceneInstance,
    ids: &[Option<usize>],
    target_ids: &BTreeSet<alloc::string::String>,
) -> SegMask {
    let data = ids.iter().map(|h| h.is_some_and(|i| target_ids.contains(&scene.objects[i].id))).collect();
    SegMask { width: scene.camera.width, height: scene.camera.height, data }
}

/// Pixelwise minimum over valid pixels; an invalid pixel takes the other
/// image's value.
pub fn min_compose(input: &DepthImage, synthetic: &DepthImage) -> Result<DepthImage> {
    input.check_same(synthetic)?;
    let data = input
        .data
        .iter()
        .zip(&synthetic.data)
        .map(|(&a, &b)| match (a > INVALID, b > INVALID) {
            (true, true) => a.min(b),
            (true, false) => a,
            (false, true) => b,
            (false, false) => INVALID,
        })
        .collect();
    Ok(DepthImage { width: input.width, height: input.height, data })
}
