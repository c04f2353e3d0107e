//! Session configuration: rigid bodies, marker frames, landmarks and
//! thresholds, stored as one JSON document.
//!
//! ```json
//! {
//!   "bodies": [{"id": "femur", "markers": [{"label": "F1", "position": [0, -60, 180]}, ...]}],
//!   "frames": [{"frame": "H", "body": "femur", "origin": "F1", "toward": "F2",
//!               "y_hint": {"marker": "F3"}}],
//!   "landmarks": {"provenance": "CT", "accuracy_mm": 0.3,
//!                 "entries": [{"point": "B", "host": "H", "vector": [1.0, 2.0, 3.0]}]},
//!   "consistency": {"point": "E", "route_a": ["M"], "route_b": ["H", "C", "D"]},
//!   "thresholds": {"fit_reject_rms_mm": 1.0}
//! }
//! ```

use crate::anatomy::{FrameId, LandmarkTable, PointId, Route};
use crate::error::{Error, Result};
use crate::frames::{FrameSpec, YHint};
use crate::rigidbody::{RigidBodyDef, DEFAULT_REJECT_RMS_MM};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Point compared across two frame routes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySpec {
    pub point: PointId,
    pub route_a: Route,
    pub route_b: Route,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub fit_reject_rms_mm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            fit_reject_rms_mm: DEFAULT_REJECT_RMS_MM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub bodies: Vec<RigidBodyDef>,
    pub frames: Vec<FrameSpec>,
    pub landmarks: LandmarkTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencySpec>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn config_err(msg: String) -> Error {
    Error::Config(msg)
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: SessionConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn body(&self, id: &str) -> Option<&RigidBodyDef> {
        self.bodies.iter().find(|b| b.id() == id)
    }

    /// Frames the session can place: marker frames plus the derived
    /// condyle and tibial anchor frames when their landmarks exist.
    pub fn available_frames(&self) -> BTreeSet<FrameId> {
        let mut frames: BTreeSet<FrameId> = self.frames.iter().map(|f| f.frame).collect();
        frames.insert(FrameId::World);
        let hosted = |p: PointId, frames: &BTreeSet<FrameId>| {
            self.landmarks.host_of(p).map(|h| frames.contains(&h)).unwrap_or(false)
        };
        if [PointId::B, PointId::K, PointId::C].iter().all(|&p| hosted(p, &frames)) {
            frames.insert(FrameId::C);
        }
        if hosted(PointId::D, &frames) {
            frames.insert(FrameId::D);
        }
        frames
    }

    /// Every problem found, in document order. Empty means valid.
    pub fn problems(&self) -> Vec<Error> {
        let mut out = Vec::new();
        let mut ids = BTreeSet::new();
        let mut labels = BTreeSet::new();
        if self.bodies.is_empty() {
            out.push(config_err("no rigid bodies defined".into()));
        }
        for b in &self.bodies {
            if !ids.insert(b.id()) {
                out.push(config_err(format!("duplicate body id `{}`", b.id())));
            }
            for m in b.markers() {
                if !labels.insert(m.label.as_str()) {
                    out.push(config_err(format!("marker label `{}` is used twice", m.label)));
                }
            }
        }

        let mut seen = BTreeSet::new();
        for f in &self.frames {
            if matches!(f.frame, FrameId::World | FrameId::C | FrameId::D) {
                out.push(config_err(format!("frame {} cannot be placed on markers", f.frame)));
            }
            if !seen.insert(f.frame) {
                out.push(config_err(format!("frame {} is defined twice", f.frame)));
            }
            let Some(body) = self.body(&f.body) else {
                out.push(config_err(format!("frame {}: unknown body `{}`", f.frame, f.body)));
                continue;
            };
            let mut needed = vec![&f.origin, &f.toward];
            if let YHint::Marker(label) = &f.y_hint {
                needed.push(label);
            }
            for label in needed {
                if body.marker(label).is_none() {
                    out.push(config_err(format!(
                        "frame {}: marker `{label}` is not on body `{}`",
                        f.frame, f.body
                    )));
                }
            }
            if f.origin == f.toward {
                out.push(config_err(format!("frame {}: origin and toward markers coincide", f.frame)));
            }
        }

        let available = self.available_frames();
        for e in self.landmarks.entries() {
            if !available.contains(&e.host) {
                out.push(config_err(format!("landmark {} is hosted by unavailable frame {}", e.point, e.host)));
            }
        }
        if let Ok(FrameId::D) = self.landmarks.host_of(PointId::D) {
            out.push(config_err("point D cannot be hosted by its own anchor frame".into()));
        }

        if let Some(c) = &self.consistency {
            for (name, route) in [("route_a", &c.route_a), ("route_b", &c.route_b)] {
                let Some(last) = route.frames().last() else {
                    out.push(config_err(format!("consistency {name} is empty")));
                    continue;
                };
                for f in route.frames() {
                    if !available.contains(f) {
                        out.push(config_err(format!("consistency {name} uses unavailable frame {f}")));
                    }
                }
                if self.landmarks.lookup_in(c.point, *last).is_none() {
                    out.push(config_err(format!(
                        "consistency {name} ends in {last}, which has no landmark for {}",
                        c.point
                    )));
                }
            }
        }

        if !(self.thresholds.fit_reject_rms_mm > 0.0) {
            out.push(config_err(format!(
                "fit_reject_rms_mm must be positive, got {}",
                self.thresholds.fit_reject_rms_mm
            )));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Whether the landmarks and frames support hip and knee angles.
    pub fn supports_angles(&self) -> bool {
        let available = self.available_frames();
        available.contains(&FrameId::C)
            && available.contains(&FrameId::M)
            && self
                .landmarks
                .host_of(PointId::E)
                .map(|h| available.contains(&h))
                .unwrap_or(false)
    }
}
