//! Anatomical points, landmark vectors and frame-to-frame queries.
//!
//! A [`LandmarkTable`] holds CT-measured vectors from a hosting frame to an
//! anatomical point. A [`SceneSnapshot`] holds the world pose of every frame
//! known at one instant. Together they place any point in any frame, across
//! joints included.

use crate::error::{Error, Result};
use crate::frames::condyle_frame;
use crate::geom::{is_finite, Transform, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Named points on the leg and instruments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PointId {
    /// Hip joint centre.
    B,
    /// Junction of the femoral anatomical axis and the femoral-neck axis.
    K,
    /// Femoral condyle centre.
    C,
    /// Tibial plateau centre.
    D,
    /// Ankle centre.
    E,
    /// Arthroscope tip.
    F,
    /// Femur rigid-body marker closest to the body.
    G,
    /// Femur rigid-body marker near the knee.
    H,
    /// Tibia rigid-body frame origin.
    M,
    /// Scope rigid-body frame origin.
    S,
}

impl PointId {
    pub const ALL: [PointId; 10] = [
        PointId::B,
        PointId::K,
        PointId::C,
        PointId::D,
        PointId::E,
        PointId::F,
        PointId::G,
        PointId::H,
        PointId::M,
        PointId::S,
    ];
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for PointId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PointId::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown point `{s}`")))
    }
}

/// Coordinate frames a scene can hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FrameId {
    #[serde(rename = "W")]
    World,
    /// Femur rigid-body frame at marker H.
    H,
    /// Tibia rigid-body frame.
    M,
    /// Scope rigid-body frame.
    S,
    /// Condyle frame on the femoral mechanical axis, derived from B, K, C.
    C,
    /// Tibial anchor frame: origin at point D, oriented like D's host frame.
    D,
}

impl FrameId {
    pub const ALL: [FrameId; 6] = [
        FrameId::World,
        FrameId::H,
        FrameId::M,
        FrameId::S,
        FrameId::C,
        FrameId::D,
    ];
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameId::World => f.write_str("W"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

impl std::str::FromStr for FrameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FrameId::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown frame `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkEntry {
    pub point: PointId,
    pub host: FrameId,
    /// Vector from the host frame origin to the point, in host coordinates (mm).
    pub vector: Vec3,
}

/// CT-derived landmark vectors. The first entry for a point names its
/// primary host; later entries for the same point are independent
/// measurements relative to other frames, used for cross-route checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LandmarkTableRepr", into = "LandmarkTableRepr")]
pub struct LandmarkTable {
    entries: Vec<LandmarkEntry>,
    provenance: String,
    accuracy_mm: f64,
    tibia_reference_axis: Option<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct LandmarkTableRepr {
    #[serde(default)]
    provenance: String,
    accuracy_mm: f64,
    entries: Vec<LandmarkEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tibia_reference_axis: Option<Vec3>,
}

impl From<LandmarkTable> for LandmarkTableRepr {
    fn from(t: LandmarkTable) -> Self {
        LandmarkTableRepr {
            provenance: t.provenance,
            accuracy_mm: t.accuracy_mm,
            entries: t.entries,
            tibia_reference_axis: t.tibia_reference_axis,
        }
    }
}

impl TryFrom<LandmarkTableRepr> for LandmarkTable {
    type Error = Error;

    fn try_from(r: LandmarkTableRepr) -> Result<Self> {
        let mut table = LandmarkTable::new(r.provenance, r.accuracy_mm)?;
        for e in r.entries {
            table.insert(e.point, e.host, e.vector)?;
        }
        if let Some(axis) = r.tibia_reference_axis {
            table.set_tibia_reference_axis(axis)?;
        }
        Ok(table)
    }
}

impl LandmarkTable {
    pub fn new(provenance: impl Into<String>, accuracy_mm: f64) -> Result<Self> {
        if !(accuracy_mm > 0.0 && accuracy_mm.is_finite()) {
            return Err(Error::Config(format!(
                "landmark accuracy must be positive, got {accuracy_mm}"
            )));
        }
        Ok(LandmarkTable {
            entries: Vec::new(),
            provenance: provenance.into(),
            accuracy_mm,
            tibia_reference_axis: None,
        })
    }

    /// Adds a measurement. A second vector for the same (point, host) pair
    /// is an error; a second host for the same point is allowed.
    pub fn insert(&mut self, point: PointId, host: FrameId, vector: Vec3) -> Result<()> {
        if !is_finite(&vector) {
            return Err(Error::Config(format!("landmark {point} in {host} is not finite")));
        }
        if host == FrameId::World {
            return Err(Error::Config(format!(
                "landmark {point}: world-fixed landmarks are not supported"
            )));
        }
        if self.lookup_in(point, host).is_some() {
            return Err(Error::Config(format!("duplicate landmark {point} in {host}")));
        }
        self.entries.push(LandmarkEntry { point, host, vector });
        Ok(())
    }

    pub fn entries(&self) -> &[LandmarkEntry] {
        &self.entries
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn accuracy_mm(&self) -> f64 {
        self.accuracy_mm
    }

    /// Primary entry for the point.
    pub fn lookup(&self, point: PointId) -> Result<&LandmarkEntry> {
        self.entries
            .iter()
            .find(|e| e.point == point)
            .ok_or(Error::UnknownPoint(point))
    }

    pub fn lookup_in(&self, point: PointId, host: FrameId) -> Option<&LandmarkEntry> {
        self.entries.iter().find(|e| e.point == point && e.host == host)
    }

    pub fn host_of(&self, point: PointId) -> Result<FrameId> {
        self.lookup(point).map(|e| e.host)
    }

    /// Tibia-fixed direction, in frame M coordinates, that coincides with the
    /// condyle frame x axis in the neutral pose. Zero reference for knee
    /// internal/external rotation.
    pub fn tibia_reference_axis(&self) -> Option<Vec3> {
        self.tibia_reference_axis
    }

    pub fn set_tibia_reference_axis(&mut self, axis: Vec3) -> Result<()> {
        let n = axis.norm();
        if !(n > 1e-9 && n.is_finite()) {
            return Err(Error::Config("tibia reference axis must be a non-zero vector".into()));
        }
        self.tibia_reference_axis = Some(axis / n);
        Ok(())
    }

    /// Calibrates the tibia reference axis from a snapshot taken in the
    /// neutral pose.
    pub fn calibrate_tibia_reference(&mut self, neutral: &SceneSnapshot) -> Result<()> {
        let c = neutral.pose(FrameId::C)?;
        let m = neutral.pose(FrameId::M)?;
        let axis = m.rotation.transpose().rotate(&c.rotation.x_axis());
        self.set_tibia_reference_axis(axis)
    }
}

/// World poses of every frame available at one instant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub t: f64,
    frames: BTreeMap<FrameId, Transform>,
}

impl SceneSnapshot {
    pub fn new(t: f64) -> Self {
        SceneSnapshot {
            t,
            frames: BTreeMap::new(),
        }
    }

    pub fn with_frame(mut self, id: FrameId, pose: Transform) -> Self {
        self.insert(id, pose);
        self
    }

    pub fn insert(&mut self, id: FrameId, pose: Transform) {
        if id != FrameId::World {
            self.frames.insert(id, pose);
        }
    }

    pub fn remove(&mut self, id: FrameId) -> Option<Transform> {
        self.frames.remove(&id)
    }

    pub fn contains(&self, id: FrameId) -> bool {
        id == FrameId::World || self.frames.contains_key(&id)
    }

    /// World pose of `id`. The world frame is always present.
    pub fn pose(&self, id: FrameId) -> Result<Transform> {
        if id == FrameId::World {
            return Ok(Transform::identity());
        }
        self.frames.get(&id).copied().ok_or(Error::MissingFrame(id))
    }

    pub fn frames(&self) -> impl Iterator<Item = (FrameId, &Transform)> {
        self.frames.iter().map(|(k, v)| (*k, v))
    }

    /// Applies `motion` to every frame, as if the whole scene were moved.
    pub fn moved_by(&self, motion: &Transform) -> SceneSnapshot {
        SceneSnapshot {
            t: self.t,
            frames: self.frames.iter().map(|(k, v)| (*k, motion.compose(v))).collect(),
        }
    }

    /// Adds the frames derived from landmarks: the condyle frame C (from B,
    /// K and C) and the tibial anchor frame D. Each derived frame that cannot
    /// be built is left out and its error returned.
    pub fn derive_frames(&mut self, table: &LandmarkTable) -> Vec<Error> {
        let mut errors = Vec::new();
        self.frames.remove(&FrameId::C);
        self.frames.remove(&FrameId::D);

        let condyle = (|| {
            let b = point_in_world(self, table, PointId::B)?;
            let k = point_in_world(self, table, PointId::K)?;
            let c = point_in_world(self, table, PointId::C)?;
            condyle_frame(&b, &k, &c)
        })();
        match condyle {
            Ok(t) => self.insert(FrameId::C, t),
            Err(e) => errors.push(e),
        }

        let anchor = (|| {
            let entry = table.lookup(PointId::D)?;
            if entry.host == FrameId::D {
                return Err(Error::Config("point D cannot host itself".into()));
            }
            let host = self.pose(entry.host)?;
            Ok(Transform::new(host.rotation, host.apply(&entry.vector)))
        })();
        match anchor {
            Ok(t) => self.insert(FrameId::D, t),
            Err(e) => errors.push(e),
        }
        errors
    }
}

/// World position of a point through its primary host frame.
pub fn point_in_world(snapshot: &SceneSnapshot, table: &LandmarkTable, point: PointId) -> Result<Vec3> {
    let entry = table.lookup(point)?;
    Ok(snapshot.pose(entry.host)?.apply(&entry.vector))
}

/// Coordinates of a point in an arbitrary frame.
pub fn point_in_frame(
    snapshot: &SceneSnapshot,
    table: &LandmarkTable,
    point: PointId,
    frame: FrameId,
) -> Result<Vec3> {
    let entry = table.lookup(point)?;
    Ok(relative_transform(snapshot, entry.host, frame)?.apply(&entry.vector))
}

/// Transform taking coordinates in `from` to coordinates in `to`.
pub fn relative_transform(snapshot: &SceneSnapshot, from: FrameId, to: FrameId) -> Result<Transform> {
    let from_pose = snapshot.pose(from)?;
    let to_pose = snapshot.pose(to)?;
    if from == to {
        return Ok(Transform::identity());
    }
    Ok(to_pose.inverse().compose(&from_pose))
}

/// Arthroscope tip (point F) expressed in `target`.
pub fn scope_tip_in_frame(snapshot: &SceneSnapshot, table: &LandmarkTable, target: FrameId) -> Result<Vec3> {
    let tip = table.lookup_in(PointId::F, FrameId::S).ok_or(Error::UnknownPoint(PointId::F))?;
    Ok(relative_transform(snapshot, FrameId::S, target)?.apply(&tip.vector))
}

/// Frame chain used to reach a point. The chain starts at a world-referenced
/// frame and steps through each following frame by relative transforms; the
/// last frame must host a landmark vector for the point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route(pub Vec<FrameId>);

impl Route {
    pub fn new(frames: impl Into<Vec<FrameId>>) -> Self {
        Route(frames.into())
    }

    pub fn frames(&self) -> &[FrameId] {
        &self.0
    }

    /// Direct route through the tibia frame.
    pub fn tibia() -> Self {
        Route(vec![FrameId::M])
    }

    /// Cross-joint route: femur frame, condyle frame, then the tibial anchor.
    pub fn femur_condyle_tibia() -> Self {
        Route(vec![FrameId::H, FrameId::C, FrameId::D])
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.0.iter().map(|id| id.to_string()).collect();
        f.write_str(&names.join(">"))
    }
}

impl std::str::FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let frames = s
            .split(['>', ','])
            .map(|part| part.trim().parse())
            .collect::<Result<Vec<FrameId>>>()?;
        if frames.is_empty() {
            return Err(Error::Config("empty route".into()));
        }
        Ok(Route(frames))
    }
}

/// World position of `point` following `route`.
pub fn point_via_route(snapshot: &SceneSnapshot, table: &LandmarkTable, point: PointId, route: &Route) -> Result<Vec3> {
    let (&first, rest) = route
        .0
        .split_first()
        .ok_or_else(|| Error::Config("empty route".into()))?;
    let mut chain = snapshot.pose(first)?;
    let mut current = first;
    for &next in rest {
        // pose of `next` expressed in `current`
        chain = chain.compose(&relative_transform(snapshot, next, current)?);
        current = next;
    }
    let entry = table.lookup_in(point, current).ok_or(Error::UnknownPoint(point))?;
    Ok(chain.apply(&entry.vector))
}

/// Distance in mm between the world positions of `point` reached by two routes.
pub fn cross_route_error(
    snapshot: &SceneSnapshot,
    table: &LandmarkTable,
    point: PointId,
    route_a: &Route,
    route_b: &Route,
) -> Result<f64> {
    let a = point_via_route(snapshot, table, point, route_a)?;
    let b = point_via_route(snapshot, table, point, route_b)?;
    Ok((a - b).norm())
}
