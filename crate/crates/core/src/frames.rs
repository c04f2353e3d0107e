//! Coordinate frames built from marker positions and CT landmark points.

use crate::anatomy::FrameId;
use crate::error::{Error, Result};
use crate::geom::{RotMat3, Transform, UnitVec3, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Minimum separation between points used to span a frame, in mm.
pub const MIN_SEPARATION_MM: f64 = 1.0;

/// Minimum angle between the y hint and the frame z axis, in degrees.
pub const MIN_HINT_ANGLE_DEG: f64 = 1.0;

/// Frame on a rigid body: origin at marker `h`, z axis from `h` toward `g`,
/// x axis `y_hint × z`, y axis `z × x`.
pub fn frame_from_marker_pair(h: &Vec3, g: &Vec3, y_hint: &UnitVec3) -> Result<Transform> {
    let span = g - h;
    let len = span.norm();
    if !(len > MIN_SEPARATION_MM) {
        return Err(Error::DegenerateGeometry(format!(
            "marker pair separated by {len:.4} mm (minimum {MIN_SEPARATION_MM} mm)"
        )));
    }
    let z = span / len;
    let cross = y_hint.cross(&z);
    // |y_hint × z| = sin(angle between them)
    if cross.norm() < MIN_HINT_ANGLE_DEG.to_radians().sin() {
        return Err(Error::DegenerateGeometry(
            "y hint is parallel to the marker pair axis".into(),
        ));
    }
    let x = cross.normalize();
    let y = z.cross(&x);
    Ok(Transform::new(RotMat3::from_columns(&x, &y, &z)?, *h))
}

/// Condyle frame at `c` on the femoral mechanical axis: z from hip centre `b`
/// to condyle centre `c`, with the zx plane spanned by `b`, `k` and `c`.
pub fn condyle_frame(b: &Vec3, k: &Vec3, c: &Vec3) -> Result<Transform> {
    for (name, p, q) in [("B-K", b, k), ("K-C", k, c), ("B-C", b, c)] {
        let d = (p - q).norm();
        if !(d > MIN_SEPARATION_MM) {
            return Err(Error::DegenerateGeometry(format!(
                "condyle frame points {name} separated by {d:.4} mm"
            )));
        }
    }
    let altitude = min_triangle_altitude(b, k, c);
    if !(altitude > MIN_SEPARATION_MM) {
        return Err(Error::DegenerateGeometry(format!(
            "condyle frame points are collinear (altitude {altitude:.4} mm)"
        )));
    }
    let z = (c - b).normalize();
    let x_prime = (b - k).normalize();
    let y = z.cross(&x_prime).normalize();
    let x = y.cross(&z);
    Ok(Transform::new(RotMat3::from_columns(&x, &y, &z)?, *c))
}

/// Smallest altitude of the triangle `abc` (twice the area over the longest side).
pub fn min_triangle_altitude(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let twice_area = (b - a).cross(&(c - a)).norm();
    let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
    if longest == 0.0 {
        0.0
    } else {
        twice_area / longest
    }
}

/// Source of the provisional y direction for a marker-pair frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YHint {
    /// Fixed direction in the world frame.
    World(Vec3),
    /// Direction from the origin marker toward another marker on the body.
    Marker(String),
    /// Direction fixed in the rigid body's definition frame.
    Body(Vec3),
}

impl Default for YHint {
    fn default() -> Self {
        YHint::World(Vec3::y())
    }
}

/// How to place a named frame on a rigid body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub frame: FrameId,
    pub body: String,
    pub origin: String,
    pub toward: String,
    #[serde(default)]
    pub y_hint: YHint,
}

impl FrameSpec {
    /// Builds the frame from world marker positions (typically the full set
    /// reconstructed from a pose fit) and the body's fitted pose.
    pub fn build(&self, markers: &BTreeMap<String, Vec3>, body_pose: &Transform) -> Result<Transform> {
        let get = |label: &str| {
            markers.get(label).copied().ok_or_else(|| {
                Error::Config(format!(
                    "frame {}: marker `{label}` not found on body `{}`",
                    self.frame, self.body
                ))
            })
        };
        let origin = get(&self.origin)?;
        let toward = get(&self.toward)?;
        let hint = match &self.y_hint {
            YHint::World(v) => *v,
            YHint::Marker(label) => get(label)? - origin,
            YHint::Body(v) => body_pose.apply_vector(v),
        };
        if !(hint.norm() > 1e-9) {
            return Err(Error::DegenerateGeometry(format!(
                "frame {}: y hint has zero length",
                self.frame
            )));
        }
        frame_from_marker_pair(&origin, &toward, &UnitVec3::new_normalize(hint))
    }
}
