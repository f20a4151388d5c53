//! Pinhole camera model, depth back-projection and camera to world transforms.
//!
//! Conventions used throughout the crate:
//!
//! * World frame is right-handed and z-up: `+x` east, `+y` north.
//! * Yaw `0` faces east and grows counter-clockwise; pitch is positive nose-up.
//! * Body frame is forward-left-up.
//! * Camera frame is the usual pinhole frame: `+Z` optical axis, `+X` right, `+Y` down.
//! * Depth images store z-depth (distance along the optical axis), which is
//!   what the back-projection formula expects.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use thiserror::Error;

use crate::legend::LabelId;

/// Depth beyond this is discarded as unreliable; matches the 100 m local window.
pub const DEFAULT_MAX_RANGE: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid depth {0}: must be finite and positive")]
    InvalidDepth(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("image shape mismatch: depth {depth:?}, labels {labels:?}, camera {camera:?}")]
    Shape {
        depth: (usize, usize),
        labels: (usize, usize),
        camera: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square pixels, principal point at the image center, given horizontal
    /// field of view in radians.
    pub fn from_fov(width: usize, height: usize, hfov: f64) -> Result<Self, GeometryError> {
        let f = (width as f64 / 2.0) / (hfov / 2.0).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Camera-frame ray through pixel `(u, v)` scaled so its z component is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Position and attitude of the UAV: `[x, y, z, pitch, roll, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
}

impl UavPose {
    pub fn new(x: f64, y: f64, z: f64, pitch: f64, roll: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            pitch,
            roll,
            yaw: normalize_angle(yaw),
        }
    }

    /// Level pose at a position with the given yaw.
    pub fn at(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(x, y, z, 0.0, 0.0, yaw)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.pitch, self.roll, self.yaw]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::new(self.x, self.y, self.z)
    }

    /// Unit heading in the ground plane.
    pub fn heading(&self) -> Vector3<f64> {
        Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    /// Body-to-world rotation `Rz(yaw) * Ry(-pitch) * Rx(roll)`.
    pub fn attitude(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), -self.pitch)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), self.roll)
    }

    pub fn with_position(&self, p: Point3<f64>) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            ..*self
        }
    }

    pub fn with_yaw(&self, yaw: f64) -> Self {
        Self {
            yaw: normalize_angle(yaw),
            ..*self
        }
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Fixed camera-to-body rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMount {
    rotation: Rotation3<f64>,
}

impl CameraMount {
    /// Optical axis along body forward, image right along body right.
    pub fn forward() -> Self {
        let m = Matrix3::new(
            0.0, 0.0, 1.0, //
            -1.0, 0.0, 0.0, //
            0.0, -1.0, 0.0,
        );
        Self {
            rotation: Rotation3::from_matrix_unchecked(m),
        }
    }

    /// Forward mount tilted nose-down by `angle` radians; `π/2` looks straight down.
    pub fn pitched_down(angle: f64) -> Self {
        let tilt = Rotation3::from_axis_angle(&Vector3::y_axis(), angle);
        Self {
            rotation: tilt * Self::forward().rotation,
        }
    }

    pub fn downward() -> Self {
        Self::pitched_down(FRAC_PI_2)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }
}

impl Default for CameraMount {
    fn default() -> Self {
        Self::forward()
    }
}

/// Everything needed to turn a depth image into world points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub mount: CameraMount,
    pub max_range: f64,
}

impl CameraRig {
    pub fn new(intrinsics: CameraIntrinsics, mount: CameraMount) -> Self {
        Self {
            intrinsics,
            mount,
            max_range: DEFAULT_MAX_RANGE,
        }
    }

    /// Camera-to-world rotation for a pose.
    pub fn camera_rotation(&self, pose: &UavPose) -> Rotation3<f64> {
        pose.attitude() * self.mount.rotation
    }
}

/// Row-major image buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Image<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    /// `(u, v, value)` in row-major order.
    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data.iter().enumerate().map(move |(i, p)| (i % w, i / w, p))
    }
}

pub type DepthImage = Image<f64>;
pub type LabelImage = Image<LabelId>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticPoint {
    pub position: Point3<f64>,
    pub label: LabelId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemanticPointCloud {
    pub points: Vec<SemanticPoint>,
}

impl SemanticPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lifts pixel `(u, v)` with z-depth `depth` into the camera frame.
pub fn backproject_pixel(
    u: f64,
    v: f64,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<Point3<f64>, GeometryError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeometryError::InvalidDepth(depth));
    }
    if !k.contains(u, v) {
        return Err(GeometryError::OutOfBounds {
            u,
            v,
            width: k.width,
            height: k.height,
        });
    }
    Ok(Point3::new(
        (u - k.cx) * depth / k.fx,
        (v - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Forward pinhole projection; `None` for points at or behind the camera.
pub fn project_to_pixel(p: &Point3<f64>, k: &CameraIntrinsics) -> Option<(f64, f64, f64)> {
    (p.z > 0.0).then(|| (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z))
}

pub fn camera_to_world(
    p: &Point3<f64>,
    pose: &UavPose,
    mount: &CameraMount,
) -> Result<Point3<f64>, GeometryError> {
    if !pose.is_finite() {
        return Err(GeometryError::NonFinite("pose"));
    }
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return Err(GeometryError::NonFinite("point"));
    }
    let r = pose.attitude() * mount.rotation();
    Ok(pose.position() + r * p.coords)
}

fn valid_depth(d: f64, max_range: f64) -> bool {
    d.is_finite() && d > 0.0 && d <= max_range
}

/// One world point per pixel with depth in `(0, max_range]` and a real label.
///
/// Pixels carrying [`LabelId::NONE`] were not assigned to any kept mask and
/// are skipped along with sentinel depths.
pub fn backproject_image(
    depth: &DepthImage,
    labels: &LabelImage,
    rig: &CameraRig,
    pose: &UavPose,
) -> Result<SemanticPointCloud, GeometryError> {
    let k = &rig.intrinsics;
    if depth.dims() != labels.dims() || depth.dims() != (k.width, k.height) {
        return Err(GeometryError::Shape {
            depth: depth.dims(),
            labels: labels.dims(),
            camera: (k.width, k.height),
        });
    }
    let mut points = Vec::new();
    for (u, v, &d) in depth.enumerate() {
        let label = *labels.get(u, v);
        if !valid_depth(d, rig.max_range) || label.is_none() {
            continue;
        }
        let cam = backproject_pixel(u as f64, v as f64, d, k)?;
        let world = camera_to_world(&cam, pose, &rig.mount)?;
        points.push(SemanticPoint {
            position: world,
            label,
        });
    }
    Ok(SemanticPointCloud { points })
}
