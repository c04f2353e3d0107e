//! Rigid-body pose recovery from labelled marker observations.
//!
//! Poses come from the closed-form least-squares registration of the body's
//! reference marker layout onto whichever of its markers are visible. Three
//! non-collinear markers are enough; occluded markers are then reconstructed
//! from the fitted pose.

use crate::error::{Error, Result};
use crate::geom::{is_finite, RotMat3, Transform, Vec3};
use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Minimum distance between two reference markers of one body, in mm.
pub const MIN_MARKER_SPACING_MM: f64 = 5.0;

/// A visible marker set whose points all lie within this distance of a
/// single line cannot fix the rotation about that line.
pub const COLLINEAR_TOLERANCE_MM: f64 = 1.0;

/// Default rms residual above which a fit is rejected, in mm.
pub const DEFAULT_REJECT_RMS_MM: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerDef {
    pub label: String,
    pub position: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidBodyDefRepr", into = "RigidBodyDefRepr")]
pub struct RigidBodyDef {
    id: String,
    markers: Vec<MarkerDef>,
}

#[derive(Serialize, Deserialize)]
struct RigidBodyDefRepr {
    id: String,
    markers: Vec<MarkerDef>,
}

impl From<RigidBodyDef> for RigidBodyDefRepr {
    fn from(d: RigidBodyDef) -> Self {
        RigidBodyDefRepr {
            id: d.id,
            markers: d.markers,
        }
    }
}

impl TryFrom<RigidBodyDefRepr> for RigidBodyDef {
    type Error = Error;

    fn try_from(r: RigidBodyDefRepr) -> Result<Self> {
        RigidBodyDef::new(r.id, r.markers)
    }
}

impl RigidBodyDef {
    /// Validates the layout: at least four markers with unique labels, finite
    /// positions at least [`MIN_MARKER_SPACING_MM`] apart, not all collinear.
    pub fn new(id: impl Into<String>, markers: Vec<MarkerDef>) -> Result<Self> {
        let id = id.into();
        let fail = |msg: String| Err(Error::InvalidRigidBody(format!("`{id}`: {msg}")));
        if markers.len() < 4 {
            return fail(format!("{} markers, at least 4 required", markers.len()));
        }
        for (i, a) in markers.iter().enumerate() {
            if !is_finite(&a.position) {
                return fail(format!("marker `{}` has a non-finite position", a.label));
            }
            for b in &markers[i + 1..] {
                if a.label == b.label {
                    return fail(format!("duplicate marker label `{}`", a.label));
                }
                let d = (a.position - b.position).norm();
                if d < MIN_MARKER_SPACING_MM {
                    return fail(format!(
                        "markers `{}` and `{}` are {d:.3} mm apart (minimum {MIN_MARKER_SPACING_MM} mm)",
                        a.label, b.label
                    ));
                }
            }
        }
        let points: Vec<Vec3> = markers.iter().map(|m| m.position).collect();
        if max_line_deviation(&points) < COLLINEAR_TOLERANCE_MM {
            return fail("markers are collinear".into());
        }
        Ok(RigidBodyDef { id, markers })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn markers(&self) -> &[MarkerDef] {
        &self.markers
    }

    pub fn marker(&self, label: &str) -> Option<&MarkerDef> {
        self.markers.iter().find(|m| m.label == label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub body: String,
    pub label: String,
    /// World position in mm. Always present when visible; optional otherwise.
    pub position: Option<Vec3>,
    pub visible: bool,
}

impl MarkerObservation {
    pub fn visible(body: impl Into<String>, label: impl Into<String>, position: Vec3) -> Self {
        MarkerObservation {
            body: body.into(),
            label: label.into(),
            position: Some(position),
            visible: true,
        }
    }

    pub fn occluded(body: impl Into<String>, label: impl Into<String>) -> Self {
        MarkerObservation {
            body: body.into(),
            label: label.into(),
            position: None,
            visible: false,
        }
    }

    /// Position usable for fitting: visible and finite.
    pub fn usable_position(&self) -> Option<Vec3> {
        match (self.visible, self.position) {
            (true, Some(p)) if is_finite(&p) => Some(p),
            _ => None,
        }
    }
}

/// All marker observations at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerFrameSample {
    pub t: f64,
    pub observations: Vec<MarkerObservation>,
}

impl MarkerFrameSample {
    pub fn new(t: f64, observations: Vec<MarkerObservation>) -> Self {
        MarkerFrameSample { t, observations }
    }

    pub fn observation(&self, label: &str) -> Option<&MarkerObservation> {
        self.observations.iter().find(|o| o.label == label)
    }

    pub fn visible_position(&self, label: &str) -> Option<Vec3> {
        self.observation(label).and_then(MarkerObservation::usable_position)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseFit {
    pub body: String,
    /// Body frame to world.
    pub pose: Transform,
    pub rms_residual: f64,
    pub used_marker_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub reject_rms_mm: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            reject_rms_mm: DEFAULT_REJECT_RMS_MM,
        }
    }
}

pub fn fit_pose(def: &RigidBodyDef, sample: &MarkerFrameSample) -> Result<PoseFit> {
    fit_pose_with(def, sample, &FitOptions::default())
}

pub fn fit_pose_with(def: &RigidBodyDef, sample: &MarkerFrameSample, options: &FitOptions) -> Result<PoseFit> {
    let (reference, observed): (Vec<Vec3>, Vec<Vec3>) = def
        .markers
        .iter()
        .filter_map(|m| sample.visible_position(&m.label).map(|p| (m.position, p)))
        .unzip();
    if reference.len() < 3 {
        return Err(Error::InsufficientMarkers {
            body: def.id.clone(),
            visible: reference.len(),
        });
    }
    if max_line_deviation(&reference) < COLLINEAR_TOLERANCE_MM {
        return Err(Error::DegenerateGeometry(format!(
            "body `{}`: visible markers are collinear",
            def.id
        )));
    }
    let pose = register_points(&reference, &observed);
    let rms_residual = rms_residual(&pose, &reference, &observed);
    if !(rms_residual <= options.reject_rms_mm) {
        return Err(Error::FitRejected {
            body: def.id.clone(),
            rms_mm: rms_residual,
            limit_mm: options.reject_rms_mm,
        });
    }
    Ok(PoseFit {
        body: def.id.clone(),
        pose,
        rms_residual,
        used_marker_count: reference.len(),
    })
}

/// Every marker of the body, occluded ones included, placed by the fitted pose.
pub fn reconstruct_markers(def: &RigidBodyDef, fit: &PoseFit) -> Vec<(String, Vec3)> {
    def.markers
        .iter()
        .map(|m| (m.label.clone(), fit.pose.apply(&m.position)))
        .collect()
}

pub fn reconstruct_marker_map(def: &RigidBodyDef, fit: &PoseFit) -> BTreeMap<String, Vec3> {
    reconstruct_markers(def, fit).into_iter().collect()
}

/// Least-squares rigid transform taking `reference[i]` onto `observed[i]`.
///
/// Centroid alignment followed by the SVD of the cross-covariance; the
/// weakest singular direction is flipped when the unconstrained optimum
/// would be a reflection.
pub fn register_points(reference: &[Vec3], observed: &[Vec3]) -> Transform {
    assert_eq!(reference.len(), observed.len(), "point sets must be corresponded");
    let n = reference.len() as f64;
    let ref_centroid = reference.iter().sum::<Vec3>() / n;
    let obs_centroid = observed.iter().sum::<Vec3>() / n;

    let mut cov = Matrix3::zeros();
    for (r, o) in reference.iter().zip(observed) {
        cov += (r - ref_centroid) * (o - obs_centroid).transpose();
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let r = v * correction * u.transpose();
    let rotation = RotMat3::nearest(&r);

    let translation = obs_centroid - rotation.rotate(&ref_centroid);
    Transform::new(rotation, translation)
}

pub fn rms_residual(pose: &Transform, reference: &[Vec3], observed: &[Vec3]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let sum: f64 = reference
        .iter()
        .zip(observed)
        .map(|(r, o)| (pose.apply(r) - o).norm_squared())
        .sum();
    (sum / reference.len() as f64).sqrt()
}

/// Largest distance of any point from the principal line through the
/// centroid. Zero for collinear sets.
pub fn max_line_deviation(points: &[Vec3]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let principal = eig.eigenvalues.imax();
    let dir = eig.eigenvectors.column(principal).into_owned();
    points
        .iter()
        .map(|p| {
            let d = p - centroid;
            (d - dir * dir.dot(&d)).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Four-marker plate with one marker raised out of plane.
    pub fn plate(id: &str) -> RigidBodyDef {
        let markers = [
            ("A", Vec3::new(0.0, 0.0, 0.0)),
            ("B", Vec3::new(90.0, 0.0, 0.0)),
            ("C", Vec3::new(40.0, 55.0, 0.0)),
            ("D", Vec3::new(30.0, 20.0, 35.0)),
        ]
        .into_iter()
        .map(|(l, p)| MarkerDef {
            label: format!("{id}.{l}"),
            position: p,
        })
        .collect();
        RigidBodyDef::new(id, markers).unwrap()
    }

    pub fn observe(def: &RigidBodyDef, pose: &Transform, visible: &[bool]) -> MarkerFrameSample {
        let obs = def
            .markers()
            .iter()
            .zip(visible)
            .map(|(m, &v)| {
                if v {
                    MarkerObservation::visible(def.id(), &m.label, pose.apply(&m.position))
                } else {
                    MarkerObservation::occluded(def.id(), &m.label)
                }
            })
            .collect();
        MarkerFrameSample::new(0.0, obs)
    }
}
