//! Hip and knee angles and knee translations from mechanical-axis vectors.
//!
//! Sign conventions, with the condyle frame built from a left leg (x medial,
//! y posterior, z distal along the femoral mechanical axis):
//!
//! * hip flexion: femur vector toward world +Y (anterior for a supine patient)
//! * hip varus: femur vector toward world +X (medial)
//! * hip roll: rotation of the condyle frame about its own z axis
//! * knee flexion: tibia vector toward condyle +y
//! * knee varus: tibia vector toward condyle +x
//! * knee IE: twist of the tibia about the tibia vector, right-handed
//!
//! All angles are reported in degrees in (-180, 180].

use crate::anatomy::{point_in_frame, point_in_world, FrameId, LandmarkTable, PointId, SceneSnapshot};
use crate::error::{Error, Result};
use crate::frames::condyle_frame;
use crate::geom::{Transform, Vec3};
use serde::{Deserialize, Serialize};

/// Shortest accepted femur or tibia mechanical vector, in mm.
pub const MIN_BONE_VECTOR_MM: f64 = 100.0;

/// Relative projection length below which a plane angle is undefined.
pub const PROJECTION_EPSILON: f64 = 1e-6;

/// Knee gap range treated as anatomically plausible, in mm.
pub const PLAUSIBLE_GAP_MM: (f64, f64) = (-5.0, 60.0);

/// Coordinate plane of a reference frame, named by the two axes it contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    YZ,
    XZ,
    XY,
}

impl Plane {
    pub fn normal(self) -> Vec3 {
        match self {
            Plane::YZ => Vec3::x(),
            Plane::XZ => Vec3::y(),
            Plane::XY => Vec3::z(),
        }
    }
}

/// Angle between `v` and its projection onto `plane`, in degrees, positive
/// when `v` leans toward the plane normal. Magnitude is
/// `atan2(|v_p × v|, v_p · v)`, so it lies in [0, 90].
pub fn projected_angle(v: &Vec3, plane: Plane) -> Result<f64> {
    let n = plane.normal();
    let along = v.dot(&n);
    let projected = v - n * along;
    let norm = v.norm();
    if !(norm > 0.0) || projected.norm() <= PROJECTION_EPSILON * norm {
        return Err(Error::DegenerateProjection(format!(
            "vector {:?} has no extent in the {plane:?} plane",
            v.as_slice()
        )));
    }
    let magnitude = projected.cross(v).norm().atan2(projected.dot(v)).to_degrees();
    Ok(if along < 0.0 { -magnitude } else { magnitude })
}

/// Flexion-type angle: [`projected_angle`] continued past 90° once `v` has
/// swung behind the plane perpendicular to `reference`, so a full sweep from
/// `reference` round to `-reference` reads 0 → ±180.
///
/// Uses the equivalent form `atan2(|v_n|, |v_p|)`, which stays defined when
/// `v` lies along the plane normal (exactly ±90°).
pub fn sweep_angle(v: &Vec3, plane: Plane, reference: &Vec3) -> Result<f64> {
    let n = plane.normal();
    let along = v.dot(&n);
    if !(v.norm() > 0.0) || !along.is_finite() {
        return Err(Error::DegenerateProjection(format!(
            "vector {:?} has no direction",
            v.as_slice()
        )));
    }
    let in_plane = (v - n * along).norm();
    let base = along.abs().atan2(in_plane).to_degrees();
    let base = if along < 0.0 { -base } else { base };
    if v.dot(reference) >= 0.0 {
        return Ok(base);
    }
    Ok(if base >= 0.0 { 180.0 - base } else { -180.0 - base })
}

/// Signed angle in degrees from `a` to `b`, both projected onto the plane
/// normal to `axis`, measured right-handed about `axis`.
pub fn twist_angle(a: &Vec3, b: &Vec3, axis: &Vec3) -> Result<f64> {
    let w = axis.normalize();
    let pa = a - w * a.dot(&w);
    let pb = b - w * b.dot(&w);
    if pa.norm() <= PROJECTION_EPSILON * a.norm() || pb.norm() <= PROJECTION_EPSILON * b.norm() {
        return Err(Error::DegenerateProjection(
            "reference axis is parallel to the twist axis".into(),
        ));
    }
    Ok(normalize_degrees(pa.cross(&pb).dot(&w).atan2(pa.dot(&pb)).to_degrees()))
}

/// Maps an angle in degrees into (-180, 180].
pub fn normalize_degrees(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HipAngles {
    pub flexion: f64,
    pub varus: f64,
    pub roll: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KneeAngles {
    pub flexion: f64,
    pub varus: f64,
    pub ie: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LegAngles {
    pub hip_flexion: f64,
    pub hip_varus: f64,
    pub hip_roll: f64,
    pub knee_flexion: f64,
    pub knee_varus: f64,
    pub knee_ie: f64,
}

impl LegAngles {
    pub fn from_parts(hip: HipAngles, knee: KneeAngles) -> Self {
        LegAngles {
            hip_flexion: hip.flexion,
            hip_varus: hip.varus,
            hip_roll: hip.roll,
            knee_flexion: knee.flexion,
            knee_varus: knee.varus,
            knee_ie: knee.ie,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.hip_flexion,
            self.hip_varus,
            self.hip_roll,
            self.knee_flexion,
            self.knee_varus,
            self.knee_ie,
        ]
    }

    pub const NAMES: [&'static str; 6] = [
        "hip_flexion",
        "hip_varus",
        "hip_roll",
        "knee_flexion",
        "knee_varus",
        "knee_ie",
    ];
}

/// Point D in the condyle frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KneeTranslation {
    pub medial_lateral: f64,
    pub posterior_anterior: f64,
    pub gap: f64,
}

impl KneeTranslation {
    pub fn from_vec(v: &Vec3) -> Self {
        KneeTranslation {
            medial_lateral: v.x,
            posterior_anterior: v.y,
            gap: v.z,
        }
    }

    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.medial_lateral, self.posterior_anterior, self.gap)
    }

    pub fn is_plausible(&self) -> bool {
        let v = self.as_vec();
        v.iter().all(|c| c.is_finite()) && (PLAUSIBLE_GAP_MM.0..=PLAUSIBLE_GAP_MM.1).contains(&self.gap)
    }
}

fn check_bone_vector(name: &str, v: Vec3) -> Result<Vec3> {
    let n = v.norm();
    if !(n > MIN_BONE_VECTOR_MM) {
        return Err(Error::InvalidBoneVector(format!(
            "{name} vector is {n:.3} mm long (minimum {MIN_BONE_VECTOR_MM} mm)"
        )));
    }
    Ok(v)
}

/// Condyle frame pose: taken from the snapshot, or built from B, K and C.
pub fn condyle_pose(snapshot: &SceneSnapshot, table: &LandmarkTable) -> Result<Transform> {
    if snapshot.contains(FrameId::C) {
        return snapshot.pose(FrameId::C);
    }
    let b = point_in_world(snapshot, table, PointId::B)?;
    let k = point_in_world(snapshot, table, PointId::K)?;
    let c = point_in_world(snapshot, table, PointId::C)?;
    condyle_frame(&b, &k, &c)
}

/// Femur mechanical vector from the hip centre B to the condyle centre C,
/// in world coordinates.
pub fn femur_vector(snapshot: &SceneSnapshot, table: &LandmarkTable) -> Result<Vec3> {
    femur_vector_in(snapshot, table, FrameId::World)
}

pub fn femur_vector_in(snapshot: &SceneSnapshot, table: &LandmarkTable, frame: FrameId) -> Result<Vec3> {
    let b = point_in_frame(snapshot, table, PointId::B, frame)?;
    let c = point_in_frame(snapshot, table, PointId::C, frame)?;
    check_bone_vector("femur", c - b)
}

/// Tibia mechanical vector: the ankle centre E in the condyle frame.
pub fn tibia_vector(snapshot: &SceneSnapshot, table: &LandmarkTable) -> Result<Vec3> {
    let condyle = condyle_pose(snapshot, table)?;
    let e = point_in_world(snapshot, table, PointId::E)?;
    check_bone_vector("tibia", condyle.inverse().apply(&e))
}

pub fn knee_angles(snapshot: &SceneSnapshot, table: &LandmarkTable) -> Result<KneeAngles> {
    let condyle = condyle_pose(snapshot, table)?;
    let vt = tibia_vector(snapshot, table)?;
    let varus = projected_angle(&vt, Plane::YZ)?;
    let flexion = sweep_angle(&vt, Plane::XZ, &Vec3::z())?;

    let tibia = snapshot.pose(FrameId::M)?;
    let reference_in_m = table.tibia_reference_axis().unwrap_or_else(Vec3::x);
    let reference = condyle.rotation.transpose().rotate(&tibia.rotation.rotate(&reference_in_m));
    let ie = twist_angle(&Vec3::x(), &reference, &vt)?;

    Ok(KneeAngles {
        flexion: normalize_degrees(flexion),
        varus,
        ie,
    })
}

pub fn hip_angles(snapshot: &SceneSnapshot, table: &LandmarkTable) -> Result<HipAngles> {
    let vf = femur_vector(snapshot, table)?;
    let varus = projected_angle(&vf, Plane::YZ)?;
    let flexion = sweep_angle(&vf, Plane::XZ, &(-Vec3::z()))?;
    let r = condyle_pose(snapshot, table)?.rotation;
    let m = r.matrix();
    let roll = (-m[(0, 1)]).atan2(m[(0, 0)]).to_degrees();
    Ok(HipAngles {
        flexion: normalize_degrees(flexion),
        varus,
        roll: normalize_degrees(roll),
    })
}

pub fn knee_translation(snapshot: &SceneSnapshot, table: &LandmarkTable) -> Result<KneeTranslation> {
    let condyle = condyle_pose(snapshot, table)?;
    let d = point_in_world(snapshot, table, PointId::D)?;
    Ok(KneeTranslation::from_vec(&condyle.inverse().apply(&d)))
}

pub fn leg_angles(snapshot: &SceneSnapshot, table: &LandmarkTable) -> Result<LegAngles> {
    Ok(LegAngles::from_parts(
        hip_angles(snapshot, table)?,
        knee_angles(snapshot, table)?,
    ))
}
