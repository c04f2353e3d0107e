//! Per-sample tracking: pose fits, frames, angles, translations and
//! cross-route consistency, with per-sample failures recorded as flags.

use crate::anatomy::{cross_route_error, point_via_route, SceneSnapshot};
use crate::error::{Error, Result};
use crate::geom::{Transform, Vec3};
use crate::io::config::SessionConfig;
use crate::kinematics::{hip_angles, knee_angles, knee_translation};
use crate::rigidbody::{fit_pose_with, reconstruct_marker_map, FitOptions, MarkerFrameSample};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Why a value is missing from a row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    /// What failed: a body id, a frame id, or a quantity such as `knee_angles`.
    pub source: String,
    pub kind: String,
    pub message: String,
}

impl Flag {
    pub fn new(source: impl Into<String>, error: &Error) -> Self {
        Flag {
            source: source.into(),
            kind: error.kind().to_string(),
            message: error.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyFit {
    pub body: String,
    pub pose: Option<Transform>,
    pub rms_residual_mm: Option<f64>,
    pub used_markers: usize,
}

/// Poses of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedSample {
    pub t: f64,
    pub bodies: Vec<BodyFit>,
    pub snapshot: SceneSnapshot,
    pub flags: Vec<Flag>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AngleReportRow {
    pub t: f64,
    pub hip_flexion: Option<f64>,
    pub hip_varus: Option<f64>,
    pub hip_roll: Option<f64>,
    pub knee_flexion: Option<f64>,
    pub knee_varus: Option<f64>,
    pub knee_ie: Option<f64>,
    pub knee_medial_lateral_mm: Option<f64>,
    pub knee_posterior_anterior_mm: Option<f64>,
    pub knee_gap_mm: Option<f64>,
    pub rms_residual_mm: BTreeMap<String, Option<f64>>,
    pub cross_route_error_mm: Option<f64>,
    /// All six angles present.
    pub valid: bool,
    pub flags: Vec<Flag>,
}

impl AngleReportRow {
    pub fn angles(&self) -> [Option<f64>; 6] {
        [
            self.hip_flexion,
            self.hip_varus,
            self.hip_roll,
            self.knee_flexion,
            self.knee_varus,
            self.knee_ie,
        ]
    }

    pub fn translation(&self) -> Option<Vec3> {
        Some(Vec3::new(
            self.knee_medial_lateral_mm?,
            self.knee_posterior_anterior_mm?,
            self.knee_gap_mm?,
        ))
    }
}

/// Count, mean, rms and maximum of a set of errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean_mm: f64,
    pub rms_mm: f64,
    pub max_mm: f64,
}

impl ErrorStats {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sq, mut max) = (0usize, 0.0, 0.0, 0.0f64);
        for v in values {
            n += 1;
            sum += v;
            sq += v * v;
            max = max.max(v);
        }
        if n == 0 {
            return ErrorStats::default();
        }
        ErrorStats {
            count: n,
            mean_mm: sum / n as f64,
            rms_mm: (sq / n as f64).sqrt(),
            max_mm: max,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    pub valid_rows: usize,
    /// Rows missing at least one angle.
    pub dropouts: usize,
    pub fit_failures: BTreeMap<String, usize>,
    pub cross_route: ErrorStats,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub rows: Vec<AngleReportRow>,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub t: f64,
    pub route_a_mm: Option<Vec3>,
    pub route_b_mm: Option<Vec3>,
    pub error_mm: Option<f64>,
    pub flags: Vec<Flag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub point: String,
    pub route_a: String,
    pub route_b: String,
    pub rows: Vec<ConsistencyRow>,
    pub summary: ErrorStats,
    pub failed_rows: usize,
}

/// A validated configuration ready to process samples.
#[derive(Clone, Debug)]
pub struct Session {
    config: SessionConfig,
    options: FitOptions,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let options = FitOptions {
            reject_rms_mm: config.thresholds.fit_reject_rms_mm,
        };
        Ok(Session { config, options })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Fits every body, places the marker frames and derives C and D.
    pub fn track(&self, sample: &MarkerFrameSample) -> TrackedSample {
        let mut flags = Vec::new();
        let mut bodies = Vec::with_capacity(self.config.bodies.len());
        let mut markers = BTreeMap::new();
        for def in &self.config.bodies {
            match fit_pose_with(def, sample, &self.options) {
                Ok(fit) => {
                    markers.insert(def.id(), (reconstruct_marker_map(def, &fit), fit.pose));
                    bodies.push(BodyFit {
                        body: def.id().to_string(),
                        pose: Some(fit.pose),
                        rms_residual_mm: Some(fit.rms_residual),
                        used_markers: fit.used_marker_count,
                    });
                }
                Err(e) => {
                    flags.push(Flag::new(def.id(), &e));
                    bodies.push(BodyFit {
                        body: def.id().to_string(),
                        pose: None,
                        rms_residual_mm: None,
                        used_markers: 0,
                    });
                }
            }
        }

        let mut snapshot = SceneSnapshot::new(sample.t);
        for spec in &self.config.frames {
            let Some((world, pose)) = markers.get(spec.body.as_str()) else {
                continue;
            };
            match spec.build(world, pose) {
                Ok(frame) => snapshot.insert(spec.frame, frame),
                Err(e) => flags.push(Flag::new(spec.frame.to_string(), &e)),
            }
        }
        let fitted_all = flags.is_empty();
        for e in snapshot.derive_frames(&self.config.landmarks) {
            // a missing marker frame already has its own flag
            if fitted_all || !matches!(e, Error::MissingFrame(_)) {
                flags.push(Flag::new("derived_frames", &e));
            }
        }
        TrackedSample {
            t: sample.t,
            bodies,
            snapshot,
            flags,
        }
    }

    fn consistency_of(&self, snapshot: &SceneSnapshot) -> Option<Result<(Vec3, Vec3, f64)>> {
        let c = self.config.consistency.as_ref()?;
        let table = &self.config.landmarks;
        Some((|| {
            let a = point_via_route(snapshot, table, c.point, &c.route_a)?;
            let b = point_via_route(snapshot, table, c.point, &c.route_b)?;
            Ok((a, b, cross_route_error(snapshot, table, c.point, &c.route_a, &c.route_b)?))
        })())
    }

    /// Angles, translation and cross-route error for one sample.
    pub fn angles(&self, sample: &MarkerFrameSample) -> AngleReportRow {
        let tracked = self.track(sample);
        let snap = &tracked.snapshot;
        let table = &self.config.landmarks;
        let mut row = AngleReportRow {
            t: sample.t,
            rms_residual_mm: tracked.bodies.iter().map(|b| (b.body.clone(), b.rms_residual_mm)).collect(),
            flags: tracked.flags.clone(),
            ..Default::default()
        };
        // dependent quantities are flagged only when the cause is not
        // already on the row
        let quiet = !row.flags.is_empty();
        let note = |row: &mut AngleReportRow, source: &str, e: Error| {
            if !(quiet && matches!(e, Error::MissingFrame(_))) {
                row.flags.push(Flag::new(source, &e));
            }
        };

        match hip_angles(snap, table) {
            Ok(h) => {
                row.hip_flexion = Some(h.flexion);
                row.hip_varus = Some(h.varus);
                row.hip_roll = Some(h.roll);
            }
            Err(e) => note(&mut row, "hip_angles", e),
        }
        match knee_angles(snap, table) {
            Ok(k) => {
                row.knee_flexion = Some(k.flexion);
                row.knee_varus = Some(k.varus);
                row.knee_ie = Some(k.ie);
            }
            Err(e) => note(&mut row, "knee_angles", e),
        }
        match knee_translation(snap, table) {
            Ok(t) => {
                row.knee_medial_lateral_mm = Some(t.medial_lateral);
                row.knee_posterior_anterior_mm = Some(t.posterior_anterior);
                row.knee_gap_mm = Some(t.gap);
            }
            Err(e) => note(&mut row, "knee_translation", e),
        }
        match self.consistency_of(snap) {
            Some(Ok((_, _, err))) => row.cross_route_error_mm = Some(err),
            Some(Err(e)) => note(&mut row, "consistency", e),
            None => {}
        }
        row.valid = row.angles().iter().all(Option::is_some);
        row
    }

    pub fn consistency(&self, sample: &MarkerFrameSample) -> Option<ConsistencyRow> {
        let tracked = self.track(sample);
        let mut row = ConsistencyRow {
            t: sample.t,
            route_a_mm: None,
            route_b_mm: None,
            error_mm: None,
            flags: tracked.flags,
        };
        match self.consistency_of(&tracked.snapshot)? {
            Ok((a, b, e)) => {
                row.route_a_mm = Some(a);
                row.route_b_mm = Some(b);
                row.error_mm = Some(e);
            }
            Err(e) => {
                if row.flags.is_empty() || !matches!(e, Error::MissingFrame(_)) {
                    row.flags.push(Flag::new("consistency", &e));
                }
            }
        }
        Some(row)
    }

    /// Processes a stream in order. Stream errors abort; sample errors are flags.
    pub fn run<I>(&self, samples: I) -> Result<AngleReport>
    where
        I: IntoIterator<Item = Result<MarkerFrameSample>>,
    {
        let mut rows = Vec::new();
        for sample in samples {
            rows.push(self.angles(&sample?));
        }
        let summary = summarize(&rows);
        Ok(AngleReport { rows, summary })
    }

    pub fn run_tracking<I>(&self, samples: I) -> Result<Vec<TrackedSample>>
    where
        I: IntoIterator<Item = Result<MarkerFrameSample>>,
    {
        samples.into_iter().map(|s| Ok(self.track(&s?))).collect()
    }

    pub fn run_consistency<I>(&self, samples: I) -> Result<ConsistencyReport>
    where
        I: IntoIterator<Item = Result<MarkerFrameSample>>,
    {
        let c = self.config.consistency.as_ref().ok_or_else(|| {
            Error::Config("the configuration has no `consistency` section".into())
        })?;
        let mut rows = Vec::new();
        for sample in samples {
            rows.extend(self.consistency(&sample?));
        }
        let summary = ErrorStats::from_values(rows.iter().filter_map(|r| r.error_mm));
        Ok(ConsistencyReport {
            point: c.point.to_string(),
            route_a: c.route_a.to_string(),
            route_b: c.route_b.to_string(),
            failed_rows: rows.iter().filter(|r| r.error_mm.is_none()).count(),
            rows,
            summary,
        })
    }
}

pub fn summarize(rows: &[AngleReportRow]) -> Summary {
    let mut fit_failures: BTreeMap<String, usize> = BTreeMap::new();
    for row in rows {
        for (body, rms) in &row.rms_residual_mm {
            let count = fit_failures.entry(body.clone()).or_default();
            if rms.is_none() {
                *count += 1;
            }
        }
    }
    let valid_rows = rows.iter().filter(|r| r.valid).count();
    Summary {
        samples: rows.len(),
        valid_rows,
        dropouts: rows.len() - valid_rows,
        fit_failures,
        cross_route: ErrorStats::from_values(rows.iter().filter_map(|r| r.cross_route_error_mm)),
    }
}

/// Runs the full pipeline over in-memory samples.
pub fn run_pipeline(config: &SessionConfig, samples: &[MarkerFrameSample]) -> Result<AngleReport> {
    Session::new(config.clone())?.run(samples.iter().cloned().map(Ok))
}
