//! Synthetic left leg with tracked femur, tibia and arthroscope.
//!
//! Forward kinematics produce exact marker positions for any joint command;
//! the landmark table is measured from the same model, so every quantity the
//! pipeline estimates has a known true value.
//!
//! World axes: Y up, Z toward the head of the supine patient, X = Y × Z.
//! For the left leg +X is medial. At the zero command the femur and tibia
//! point along -Z, and each bone frame has x medial, y posterior and z
//! distal.
//!
//! Joint commands use the same angle definitions as [`crate::kinematics`]:
//! a (flexion, varus) pair fixes the bone direction through its two
//! out-of-plane angles, and roll or IE twists the bone about that direction.
//! Because both angles are out-of-plane angles their sines are direction
//! components, so a pair is reachable only while
//! `min(|flexion|, 180 - |flexion|) + |varus| <= 90`.

use crate::anatomy::{FrameId, LandmarkTable, PointId, Route};
use crate::error::{Error, Result};
use crate::frames::{FrameSpec, YHint};
use crate::geom::{RotMat3, Transform, Vec3};
use crate::io::config::{ConsistencySpec, SessionConfig, Thresholds};
use crate::kinematics::{KneeTranslation, LegAngles};
use crate::rigidbody::{MarkerDef, MarkerFrameSample, MarkerObservation, RigidBodyDef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const FEMUR_BODY: &str = "femur";
pub const TIBIA_BODY: &str = "tibia";
pub const SCOPE_BODY: &str = "scope";

/// Geometry of the simulated leg and instruments. Lengths in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LegModelParams {
    /// Hip centre B to condyle centre C.
    pub femur_length_mm: f64,
    /// Tibial condyle point D to ankle centre E.
    pub tibia_length_mm: f64,
    /// Point K relative to B in the femur bone frame: lateral and distal offsets.
    pub neck_lateral_mm: f64,
    pub neck_distal_mm: f64,
    /// World position of the hip centre.
    pub hip_center_mm: Vec3,
    /// Marker positions in the femur bone frame (origin B).
    pub femur_markers: Vec<MarkerDef>,
    /// Marker positions in the tibia bone frame (origin D).
    pub tibia_markers: Vec<MarkerDef>,
    /// Marker positions in the scope frame (origin at the tip F).
    pub scope_markers: Vec<MarkerDef>,
    /// Scope pose relative to the condyle frame; its origin is the tip.
    pub scope_in_condyle: Transform,
}

fn markers(prefix: &str, positions: [[f64; 3]; 4]) -> Vec<MarkerDef> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| MarkerDef {
            label: format!("{prefix}{}", i + 1),
            position: Vec3::from(*p),
        })
        .collect()
}

impl Default for LegModelParams {
    fn default() -> Self {
        LegModelParams {
            femur_length_mm: 420.0,
            tibia_length_mm: 380.0,
            neck_lateral_mm: 40.0,
            neck_distal_mm: 40.0,
            hip_center_mm: Vec3::new(100.0, 900.0, 600.0),
            // plates sit anterior (-y) of the shaft
            femur_markers: markers(
                "F",
                [[0.0, -60.0, 180.0], [5.0, -65.0, 300.0], [-45.0, -75.0, 235.0], [30.0, -110.0, 250.0]],
            ),
            tibia_markers: markers(
                "T",
                [[0.0, -50.0, 90.0], [5.0, -55.0, 210.0], [45.0, -60.0, 140.0], [-25.0, -95.0, 160.0]],
            ),
            scope_markers: markers(
                "S",
                [[0.0, 0.0, -180.0], [0.0, 0.0, -300.0], [60.0, 0.0, -240.0], [-20.0, 55.0, -260.0]],
            ),
            scope_in_condyle: Transform::new(
                RotMat3::about_x(120f64.to_radians()).then_apply(&RotMat3::about_z(20f64.to_radians())),
                Vec3::zeros(),
            ),
        }
    }
}

impl LegModelParams {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("femur_length_mm", self.femur_length_mm),
            ("tibia_length_mm", self.tibia_length_mm),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.neck_lateral_mm > 0.0 && self.neck_lateral_mm.is_finite())
            || !self.neck_distal_mm.is_finite()
        {
            return Err(Error::InvalidParams(
                "femoral neck offset needs a positive lateral component".into(),
            ));
        }
        if !crate::geom::is_finite(&self.hip_center_mm) {
            return Err(Error::InvalidParams("hip centre is not finite".into()));
        }
        self.bodies()?;
        Ok(())
    }

    /// Femur, tibia and scope definitions, in that order.
    pub fn bodies(&self) -> Result<[RigidBodyDef; 3]> {
        let def = |id: &str, m: &[MarkerDef]| {
            RigidBodyDef::new(id, m.to_vec()).map_err(|e| Error::InvalidParams(e.to_string()))
        };
        Ok([
            def(FEMUR_BODY, &self.femur_markers)?,
            def(TIBIA_BODY, &self.tibia_markers)?,
            def(SCOPE_BODY, &self.scope_markers)?,
        ])
    }

    /// Marker frames H, M and S: first marker as origin, second as the z
    /// target, third as the y hint.
    pub fn frame_specs(&self) -> Vec<FrameSpec> {
        let spec = |frame, body: &str, m: &[MarkerDef]| FrameSpec {
            frame,
            body: body.to_string(),
            origin: m[0].label.clone(),
            toward: m[1].label.clone(),
            y_hint: YHint::Marker(m[2].label.clone()),
        };
        vec![
            spec(FrameId::H, FEMUR_BODY, &self.femur_markers),
            spec(FrameId::M, TIBIA_BODY, &self.tibia_markers),
            spec(FrameId::S, SCOPE_BODY, &self.scope_markers),
        ]
    }

    /// Femur bone-frame points B, K and C.
    fn femur_points(&self) -> [(PointId, Vec3); 3] {
        [
            (PointId::B, Vec3::zeros()),
            (PointId::K, Vec3::new(-self.neck_lateral_mm, 0.0, self.neck_distal_mm)),
            (PointId::C, Vec3::new(0.0, 0.0, self.femur_length_mm)),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HipCommand {
    pub flexion: f64,
    pub varus: f64,
    pub roll: f64,
}

/// Knee rotations in degrees and tibial point D in the condyle frame in mm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KneeCommand {
    pub flexion: f64,
    pub varus: f64,
    pub ie: f64,
    pub medial_lateral: f64,
    pub posterior_anterior: f64,
    pub gap: f64,
}

impl KneeCommand {
    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.medial_lateral, self.posterior_anterior, self.gap)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointCommand {
    pub t: f64,
    pub hip: HipCommand,
    pub knee: KneeCommand,
}

impl JointCommand {
    fn values(&self) -> [f64; 9] {
        let (h, k) = (&self.hip, &self.knee);
        [
            h.flexion,
            h.varus,
            h.roll,
            k.flexion,
            k.varus,
            k.ie,
            k.medial_lateral,
            k.posterior_anterior,
            k.gap,
        ]
    }

    fn from_values(t: f64, v: [f64; 9]) -> Self {
        JointCommand {
            t,
            hip: HipCommand {
                flexion: v[0],
                varus: v[1],
                roll: v[2],
            },
            knee: KneeCommand {
                flexion: v[3],
                varus: v[4],
                ie: v[5],
                medial_lateral: v[6],
                posterior_anterior: v[7],
                gap: v[8],
            },
        }
    }

    /// Component-wise linear blend, `s` in [0, 1].
    pub fn lerp(&self, other: &JointCommand, s: f64) -> JointCommand {
        let (a, b) = (self.values(), other.values());
        let t = self.t + (other.t - self.t) * s;
        JointCommand::from_values(t, std::array::from_fn(|i| a[i] + (b[i] - a[i]) * s))
    }

    pub fn angles(&self) -> LegAngles {
        LegAngles {
            hip_flexion: self.hip.flexion,
            hip_varus: self.hip.varus,
            hip_roll: self.hip.roll,
            knee_flexion: self.knee.flexion,
            knee_varus: self.knee.varus,
            knee_ie: self.knee.ie,
        }
    }

    pub fn knee_translation(&self) -> KneeTranslation {
        KneeTranslation::from_vec(&self.knee.translation())
    }
}

/// Time-sampled joint commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionScript {
    pub sample_rate_hz: f64,
    pub samples: Vec<JointCommand>,
}

impl MotionScript {
    pub fn new(sample_rate_hz: f64, samples: Vec<JointCommand>) -> Result<Self> {
        let script = MotionScript {
            sample_rate_hz,
            samples,
        };
        script.validate()?;
        Ok(script)
    }

    /// Samples `command(t)` at `t = i / rate` for `duration_s · rate` samples.
    pub fn from_fn(duration_s: f64, sample_rate_hz: f64, mut command: impl FnMut(f64) -> JointCommand) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) || !(duration_s >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "bad duration {duration_s} s or rate {sample_rate_hz} Hz"
            )));
        }
        let n = ((duration_s * sample_rate_hz).round() as usize).max(1);
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate_hz;
                JointCommand { t, ..command(t) }
            })
            .collect();
        Self::new(sample_rate_hz, samples)
    }

    /// Smooth multi-joint motion used as the default recording: every
    /// joint moves on its own period and stays inside the reachable range.
    pub fn default_motion(duration_s: f64, sample_rate_hz: f64) -> Result<Self> {
        Self::from_fn(duration_s, sample_rate_hz, |t| {
            let wave = |period: f64, phase: f64| (std::f64::consts::TAU * t / period + phase).sin();
            JointCommand {
                t,
                hip: HipCommand {
                    flexion: 30.0 + 25.0 * wave(11.0, 0.0),
                    varus: 6.0 * wave(7.0, 0.5),
                    roll: 10.0 * wave(13.0, 1.0),
                },
                knee: KneeCommand {
                    flexion: 40.0 + 35.0 * wave(5.0, -1.2),
                    varus: 4.0 * wave(9.0, 0.3),
                    ie: 10.0 * wave(6.0, 2.0),
                    medial_lateral: 0.5 * wave(8.0, 0.0),
                    posterior_anterior: 1.5 * wave(5.0, 0.7),
                    gap: 3.0 + 1.5 * wave(4.0, 0.2),
                },
            }
        })
    }

    /// Every sample at the zero (reference) command.
    pub fn still(duration_s: f64, sample_rate_hz: f64) -> Result<Self> {
        Self::from_fn(duration_s, sample_rate_hz, |_| JointCommand::default())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::InvalidParams("motion script has no samples".into()));
        }
        let mut previous = f64::NEG_INFINITY;
        for s in &self.samples {
            if !(s.t >= 0.0 && s.t.is_finite()) || s.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParams(format!("non-finite command at t = {}", s.t)));
            }
            if s.t <= previous {
                return Err(Error::InvalidParams(format!(
                    "script times must increase: {} follows {previous}",
                    s.t
                )));
            }
            previous = s.t;
        }
        Ok(())
    }
}

/// Noise and occlusion applied by [`synthesize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per-axis Gaussian σ on marker positions, mm.
    pub marker_sigma_mm: f64,
    /// Per-axis Gaussian σ on each anatomical landmark vector, mm.
    pub landmark_sigma_mm: f64,
    /// Independent per-marker, per-sample probability of being hidden.
    pub occlusion_prob: f64,
    /// Bodies subject to random occlusion; empty means every body.
    pub occlusion_bodies: Vec<String>,
    /// Marker labels hidden in every sample.
    pub always_occluded: Vec<String>,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            marker_sigma_mm: 0.0,
            landmark_sigma_mm: 0.0,
            occlusion_prob: 0.0,
            occlusion_bodies: Vec::new(),
            always_occluded: Vec::new(),
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Optical tracker and CT accuracy figures, no occlusion.
    pub fn tracker_grade(seed: u64) -> Self {
        NoiseSpec {
            marker_sigma_mm: crate::OPTICAL_ACCURACY_MM,
            landmark_sigma_mm: crate::CT_ACCURACY_MM,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("marker_sigma_mm", self.marker_sigma_mm),
            ("landmark_sigma_mm", self.landmark_sigma_mm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::InvalidParams(format!(
                "occlusion probability must be in [0, 1], got {}",
                self.occlusion_prob
            )));
        }
        Ok(())
    }
}

/// Exact world state of the model for one command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegState {
    /// Bone frames to world: femur (origin B), tibia (origin D), scope (origin F).
    pub femur: Transform,
    pub tibia: Transform,
    pub scope: Transform,
    /// Condyle frame C to world.
    pub condyle: Transform,
    pub points: BTreeMap<PointId, Vec3>,
}

/// Unit vector whose out-of-plane angles are `flexion` (toward `n_flex`)
/// and `varus` (toward `n_var`), with `reference` the zero direction.
fn direction_from_angles(flexion: f64, varus: f64, n_var: &Vec3, n_flex: &Vec3, reference: &Vec3) -> Result<Vec3> {
    let flex = crate::kinematics::normalize_degrees(flexion);
    let base = if flex.abs() <= 90.0 { flex.abs() } else { 180.0 - flex.abs() };
    if base + varus.abs() > 90.0 + 1e-12 {
        return Err(Error::InvalidParams(format!(
            "flexion {flexion}° with varus {varus}° is not a reachable direction"
        )));
    }
    let (sb, sv) = (base.to_radians().sin(), varus.to_radians().sin());
    let along_ref = (1.0 - sb * sb - sv * sv).max(0.0).sqrt();
    let along_ref = if flex.abs() > 90.0 { -along_ref } else { along_ref };
    let along_flex = if flex < 0.0 { -sb } else { sb };
    Ok((n_var * sv + n_flex * along_flex + reference * along_ref).normalize())
}

/// Forward kinematics for one command.
pub fn leg_state(params: &LegModelParams, cmd: &JointCommand) -> Result<LegState> {
    let x = Vec3::x();
    let d = direction_from_angles(cmd.hip.flexion, cmd.hip.varus, &x, &Vec3::y(), &(-Vec3::z()))?;
    let qx = (x - d * d.x).normalize();
    let qy = d.cross(&x).normalize();
    let q = RotMat3::from_columns(&qx, &qy, &d)?;
    let rf = q.then_apply(&RotMat3::about_z(cmd.hip.roll.to_radians()));
    let femur = Transform::new(rf, params.hip_center_mm);
    let condyle = femur.compose(&Transform::from_translation(Vec3::new(0.0, 0.0, params.femur_length_mm)));

    // tibia in condyle coordinates
    let k = &cmd.knee;
    let w = direction_from_angles(k.flexion, k.varus, &Vec3::x(), &Vec3::y(), &Vec3::z())?;
    let t = k.translation();
    let len = params.tibia_length_mm;
    let wt = w.dot(&t);
    let disc = wt * wt - t.norm_squared() + len * len;
    if !(disc >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "knee translation {:?} is too large for the tibia length",
            t.as_slice()
        )));
    }
    let s = wt + disc.sqrt();
    let u = (w * s - t) / len;
    if !(w.dot(&u) > 1e-6) {
        return Err(Error::InvalidParams("knee translation tilts the tibia past its axis".into()));
    }
    let p = (Vec3::x() - w * w.x).normalize();
    let gamma = k.ie.to_radians();
    let qv = p * gamma.cos() + w.cross(&p) * gamma.sin();
    let xt = (qv - w * (qv.dot(&u) / w.dot(&u))).normalize();
    let yt = u.cross(&xt);
    let rt = RotMat3::from_columns(&xt, &yt, &u)?;
    let tibia = condyle.compose(&Transform::new(rt, t));
    let scope = condyle.compose(&params.scope_in_condyle);

    let mut points = BTreeMap::new();
    for (id, local) in params.femur_points() {
        points.insert(id, femur.apply(&local));
    }
    points.insert(PointId::D, tibia.apply(&Vec3::zeros()));
    points.insert(PointId::E, tibia.apply(&Vec3::new(0.0, 0.0, len)));
    points.insert(PointId::F, scope.apply(&Vec3::zeros()));
    Ok(LegState {
        femur,
        tibia,
        scope,
        condyle,
        points,
    })
}

/// Exact landmark vectors for the model, without noise.
pub fn exact_landmarks(params: &LegModelParams) -> Result<LandmarkTable> {
    let bodies = params.bodies()?;
    let specs = params.frame_specs();
    let local_frame = |i: usize| -> Result<Transform> {
        let markers = bodies[i].markers().iter().map(|m| (m.label.clone(), m.position)).collect();
        specs[i].build(&markers, &Transform::identity())
    };
    // marker frames in their bone frames
    let (h, m, s) = (local_frame(0)?, local_frame(1)?, local_frame(2)?);
    let (hi, mi, si) = (h.inverse(), m.inverse(), s.inverse());

    let mut table = LandmarkTable::new("synthetic leg model", crate::CT_ACCURACY_MM)?;
    for (id, local) in params.femur_points() {
        table.insert(id, FrameId::H, hi.apply(&local))?;
    }
    let d = mi.apply(&Vec3::zeros());
    let e = mi.apply(&Vec3::new(0.0, 0.0, params.tibia_length_mm));
    table.insert(PointId::D, FrameId::M, d)?;
    table.insert(PointId::E, FrameId::M, e)?;
    table.insert(PointId::E, FrameId::D, e - d)?;
    table.insert(PointId::F, FrameId::S, si.apply(&Vec3::zeros()))?;
    let toward = |body: &RigidBodyDef, frame: &Transform| frame.inverse().apply(&body.markers()[1].position);
    table.insert(PointId::G, FrameId::H, toward(&bodies[0], &h))?;
    table.insert(PointId::H, FrameId::H, Vec3::zeros())?;
    table.insert(PointId::M, FrameId::M, Vec3::zeros())?;
    table.insert(PointId::S, FrameId::S, Vec3::zeros())?;
    // tibia bone x axis, which matches the condyle x axis at the zero command
    table.set_tibia_reference_axis(m.rotation.transpose().rotate(&Vec3::x()))?;
    Ok(table)
}

const NOISY_POINTS: [PointId; 6] = [PointId::B, PointId::K, PointId::C, PointId::D, PointId::E, PointId::F];

fn perturbed_landmarks<R: Rng>(exact: &LandmarkTable, sigma: f64, rng: &mut R) -> Result<LandmarkTable> {
    let mut table = LandmarkTable::new(exact.provenance(), exact.accuracy_mm())?;
    for e in exact.entries() {
        let mut v = e.vector;
        if NOISY_POINTS.contains(&e.point) {
            v += gaussian3(rng) * sigma;
        }
        table.insert(e.point, e.host, v)?;
    }
    if let Some(axis) = exact.tibia_reference_axis() {
        table.set_tibia_reference_axis(axis)?;
    }
    Ok(table)
}

fn gaussian3<R: Rng>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Ground truth at every script sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    params: LegModelParams,
    commands: Vec<JointCommand>,
}

/// Exact values at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t: f64,
    pub angles: LegAngles,
    pub translation: KneeTranslation,
    pub points: BTreeMap<PointId, Vec3>,
}

impl Trajectory {
    pub fn commands(&self) -> &[JointCommand] {
        &self.commands
    }

    pub fn params(&self) -> &LegModelParams {
        &self.params
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.commands[0].t, self.commands[self.commands.len() - 1].t)
    }

    /// Command at `t`, linear in joint space between script samples.
    pub fn command_at(&self, t: f64) -> Result<JointCommand> {
        let (start, end) = self.time_range();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let i = self.commands.partition_point(|c| c.t <= t);
        let a = &self.commands[i - 1];
        if a.t == t || i == self.commands.len() {
            return Ok(*a);
        }
        let b = &self.commands[i];
        Ok(a.lerp(b, (t - a.t) / (b.t - a.t)))
    }

    pub fn ground_truth_at(&self, t: f64) -> Result<GroundTruth> {
        let cmd = self.command_at(t)?;
        let state = leg_state(&self.params, &cmd)?;
        Ok(GroundTruth {
            t,
            angles: cmd.angles(),
            translation: cmd.knee_translation(),
            points: state.points,
        })
    }
}

/// Output of [`synthesize`].
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub samples: Vec<MarkerFrameSample>,
    /// Landmark table as measured, i.e. with landmark noise applied.
    pub landmarks: LandmarkTable,
    pub truth: Trajectory,
}

impl Synthesis {
    /// Session configuration that tracks this synthetic recording.
    pub fn session_config(&self) -> SessionConfig {
        session_config(self.truth.params(), self.landmarks.clone())
            .expect("parameters were validated by synthesize")
    }
}

/// Session configuration for the model with the given landmark table.
pub fn session_config(params: &LegModelParams, landmarks: LandmarkTable) -> Result<SessionConfig> {
    Ok(SessionConfig {
        bodies: params.bodies()?.to_vec(),
        frames: params.frame_specs(),
        landmarks,
        consistency: Some(ConsistencySpec {
            point: PointId::E,
            route_a: Route::tibia(),
            route_b: Route::femur_condyle_tibia(),
        }),
        thresholds: Thresholds::default(),
    })
}

/// Generates a marker stream, a landmark table and the ground truth.
///
/// Random draws happen in a fixed order: landmark noise first, then for
/// every sample and every marker one occlusion draw and three position
/// draws. The position draws happen even for hidden markers, so adding
/// occlusion never changes the noise of the markers that stay visible.
pub fn synthesize(params: &LegModelParams, script: &MotionScript, noise: &NoiseSpec) -> Result<Synthesis> {
    params.validate()?;
    script.validate()?;
    noise.validate()?;
    let bodies = params.bodies()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let landmarks = perturbed_landmarks(&exact_landmarks(params)?, noise.landmark_sigma_mm, &mut rng)?;

    let mut samples = Vec::with_capacity(script.samples.len());
    for cmd in &script.samples {
        let state = leg_state(params, cmd)?;
        let mut observations = Vec::with_capacity(12);
        for (def, pose) in bodies.iter().zip([&state.femur, &state.tibia, &state.scope]) {
            let prob = if noise.occlusion_bodies.is_empty() || noise.occlusion_bodies.iter().any(|b| b == def.id()) {
                noise.occlusion_prob
            } else {
                0.0
            };
            for m in def.markers() {
                let hidden_draw: f64 = rng.random();
                let jitter = gaussian3(&mut rng) * noise.marker_sigma_mm;
                let hidden = hidden_draw < prob || noise.always_occluded.contains(&m.label);
                observations.push(if hidden {
                    MarkerObservation::occluded(def.id(), &m.label)
                } else {
                    MarkerObservation::visible(def.id(), &m.label, pose.apply(&m.position) + jitter)
                });
            }
        }
        samples.push(MarkerFrameSample::new(cmd.t, observations));
    }
    Ok(Synthesis {
        samples,
        landmarks,
        truth: Trajectory {
            params: params.clone(),
            commands: script.samples.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::{cross_route_error, SceneSnapshot};
    use crate::kinematics::{hip_angles, knee_angles, knee_translation, tibia_vector};
    use approx::assert_abs_diff_eq;

    fn snapshot(params: &LegModelParams, cmd: &JointCommand, table: &LandmarkTable) -> SceneSnapshot {
        let state = leg_state(params, cmd).unwrap();
        let bodies = params.bodies().unwrap();
        let mut snap = SceneSnapshot::new(cmd.t);
        for ((spec, def), pose) in params.frame_specs().iter().zip(&bodies).zip([state.femur, state.tibia, state.scope]) {
            let world = def.markers().iter().map(|m| (m.label.clone(), pose.apply(&m.position))).collect();
            snap.insert(spec.frame, spec.build(&world, &pose).unwrap());
        }
        assert!(snap.derive_frames(table).is_empty());
        snap
    }

    fn knee(flexion: f64, varus: f64, ie: f64) -> JointCommand {
        JointCommand {
            knee: KneeCommand {
                flexion,
                varus,
                ie,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_command_is_the_straight_reference_leg() {
        let p = LegModelParams::default();
        let s = leg_state(&p, &JointCommand::default()).unwrap();
        let reference = RotMat3::from_rows(&[[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]).unwrap();
        assert!((s.femur.rotation.matrix() - reference.matrix()).amax() < 1e-15);
        assert!((s.tibia.rotation.matrix() - reference.matrix()).amax() < 1e-15);
        assert_abs_diff_eq!(s.points[&PointId::C], p.hip_center_mm - Vec3::z() * 420.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.points[&PointId::E], p.hip_center_mm - Vec3::z() * 800.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.points[&PointId::D], s.points[&PointId::C], epsilon = 1e-12);
    }

    #[test]
    fn straight_leg_tibia_vector() {
        let p = LegModelParams::default();
        let table = exact_landmarks(&p).unwrap();
        let snap = snapshot(&p, &JointCommand::default(), &table);
        assert!((tibia_vector(&snap, &table).unwrap() - Vec3::new(0.0, 0.0, 380.0)).amax() < 1e-9);
    }

    #[test]
    fn commands_round_trip_through_kinematics() {
        let p = LegModelParams::default();
        let table = exact_landmarks(&p).unwrap();
        let cases = [
            (HipCommand { flexion: 45.0, varus: -10.0, roll: 12.0 }, knee(30.0, 5.0, -15.0)),
            (HipCommand { flexion: 90.0, varus: 0.0, roll: -30.0 }, knee(120.0, -10.0, 15.0)),
            (HipCommand { flexion: -10.0, varus: 20.0, roll: 0.0 }, knee(90.0, 0.0, 7.0)),
            (HipCommand::default(), knee(0.0, 0.0, 0.0)),
        ];
        for (hip, mut cmd) in cases {
            cmd.hip = hip;
            cmd.knee.gap = 6.0;
            cmd.knee.posterior_anterior = 3.0;
            cmd.knee.medial_lateral = -1.5;
            let snap = snapshot(&p, &cmd, &table);
            let h = hip_angles(&snap, &table).unwrap();
            let k = knee_angles(&snap, &table).unwrap();
            let t = knee_translation(&snap, &table).unwrap();
            let e = 1e-9;
            assert_abs_diff_eq!(h.flexion, hip.flexion, epsilon = e);
            assert_abs_diff_eq!(h.varus, hip.varus, epsilon = e);
            assert_abs_diff_eq!(h.roll, hip.roll, epsilon = e);
            assert_abs_diff_eq!(k.flexion, cmd.knee.flexion, epsilon = e);
            assert_abs_diff_eq!(k.varus, cmd.knee.varus, epsilon = e);
            assert_abs_diff_eq!(k.ie, cmd.knee.ie, epsilon = e);
            assert_abs_diff_eq!(t.as_vec(), cmd.knee.translation(), epsilon = e);
            // the cross-joint route agrees with the direct one
            let err = cross_route_error(&snap, &table, PointId::E, &Route::tibia(), &Route::femur_condyle_tibia()).unwrap();
            assert!(err < 1e-9);
        }
    }

    #[test]
    fn unreachable_pairs_are_rejected() {
        let p = LegModelParams::default();
        assert!(matches!(leg_state(&p, &knee(85.0, 10.0, 0.0)), Err(Error::InvalidParams(_))));
        let mut far = JointCommand::default();
        far.knee.posterior_anterior = 900.0;
        assert!(matches!(leg_state(&p, &far), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn ground_truth_interpolates_linearly() {
        let script = MotionScript::from_fn(1.0, 10.0, |t| knee(t * 10.0, 0.0, 0.0)).unwrap();
        let syn = synthesize(&LegModelParams::default(), &script, &NoiseSpec::none()).unwrap();
        let g = syn.truth.ground_truth_at(0.25).unwrap();
        assert_abs_diff_eq!(g.angles.knee_flexion, 2.5, epsilon = 1e-12);
        assert_eq!(syn.truth.ground_truth_at(0.0).unwrap().angles, LegAngles::default());
        assert_eq!(syn.truth.ground_truth_at(0.3).unwrap().angles.knee_flexion, script.samples[3].knee.flexion);
        assert!(matches!(syn.truth.ground_truth_at(0.95), Err(Error::OutOfRange { .. })));
        assert!(matches!(syn.truth.ground_truth_at(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn ramp_midpoint_is_halfway() {
        let a = knee(0.0, 0.0, 0.0);
        let b = JointCommand { t: 2.0, ..knee(10.0, 0.0, 0.0) };
        let script = MotionScript::new(0.5, vec![a, b]).unwrap();
        let syn = synthesize(&LegModelParams::default(), &script, &NoiseSpec::none()).unwrap();
        assert_eq!(syn.truth.ground_truth_at(1.0).unwrap().angles.knee_flexion, 5.0);
    }

    #[test]
    fn noise_free_still_script_repeats_frame_zero() {
        let script = MotionScript::still(0.5, 100.0).unwrap();
        let syn = synthesize(&LegModelParams::default(), &script, &NoiseSpec::none()).unwrap();
        assert_eq!(syn.samples.len(), 50);
        for s in &syn.samples[1..] {
            assert_eq!(s.observations, syn.samples[0].observations);
        }
        assert_eq!(syn.landmarks, exact_landmarks(&LegModelParams::default()).unwrap());
    }

    #[test]
    fn same_seed_same_stream() {
        let script = MotionScript::from_fn(0.5, 100.0, |t| knee(60.0 * t, 2.0, -4.0)).unwrap();
        let noise = NoiseSpec {
            occlusion_prob: 0.2,
            ..NoiseSpec::tracker_grade(99)
        };
        let a = synthesize(&LegModelParams::default(), &script, &noise).unwrap();
        let b = synthesize(&LegModelParams::default(), &script, &noise).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.landmarks, b.landmarks);
        let c = synthesize(&LegModelParams::default(), &script, &NoiseSpec { seed: 100, ..noise }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn occlusion_keeps_visible_noise_aligned() {
        let script = MotionScript::still(1.0, 50.0).unwrap();
        let clear = NoiseSpec::tracker_grade(5);
        let hidden = NoiseSpec {
            occlusion_prob: 0.3,
            always_occluded: vec!["F1".into()],
            ..clear.clone()
        };
        let a = synthesize(&LegModelParams::default(), &script, &clear).unwrap();
        let b = synthesize(&LegModelParams::default(), &script, &hidden).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert!(!sb.observation("F1").unwrap().visible);
            for (oa, ob) in sa.observations.iter().zip(&sb.observations) {
                if ob.visible {
                    assert_eq!(oa, ob);
                }
            }
        }
    }

    #[test]
    fn marker_noise_has_requested_spread() {
        let script = MotionScript::still(10_000.0 / 100.0, 100.0).unwrap();
        let noise = NoiseSpec {
            marker_sigma_mm: 0.03,
            seed: 17,
            ..NoiseSpec::default()
        };
        let syn = synthesize(&LegModelParams::default(), &script, &noise).unwrap();
        let exact = synthesize(&LegModelParams::default(), &MotionScript::still(0.01, 100.0).unwrap(), &NoiseSpec::none()).unwrap();
        let truth = &exact.samples[0];
        // per-axis sample standard deviation of one marker over 10⁴ samples
        let dev: Vec<Vec3> = syn
            .samples
            .iter()
            .map(|s| s.visible_position("T2").unwrap() - truth.visible_position("T2").unwrap())
            .collect();
        for axis in 0..3 {
            let n = dev.len() as f64;
            let mean = dev.iter().map(|d| d[axis]).sum::<f64>() / n;
            let var = dev.iter().map(|d| (d[axis] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            assert!((0.02..=0.04).contains(&sd), "axis {axis}: {sd}");
        }
    }

    #[test]
    fn landmark_noise_touches_only_anatomical_points() {
        let p = LegModelParams::default();
        let exact = exact_landmarks(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = perturbed_landmarks(&exact, 0.3, &mut rng).unwrap();
        for (a, b) in exact.entries().iter().zip(noisy.entries()) {
            let moved = (a.vector - b.vector).norm() > 0.0;
            assert_eq!(moved, NOISY_POINTS.contains(&a.point), "{:?}", a.point);
        }
    }

    #[test]
    fn rigid_marker_distances_are_constant() {
        let script = MotionScript::from_fn(2.0, 50.0, |t| JointCommand {
            hip: HipCommand { flexion: 40.0 * t, varus: 5.0 * t, roll: -8.0 * t },
            knee: KneeCommand { flexion: 55.0 * t, ie: 7.0 * t, gap: t, ..Default::default() },
            t,
        })
        .unwrap();
        let syn = synthesize(&LegModelParams::default(), &script, &NoiseSpec::none()).unwrap();
        let dist = |s: &MarkerFrameSample, a: &str, b: &str| (s.visible_position(a).unwrap() - s.visible_position(b).unwrap()).norm();
        let pairs = [("F1", "F4"), ("F2", "F3"), ("T1", "T3"), ("T2", "T4"), ("S1", "S4")];
        for (a, b) in pairs {
            let d0 = dist(&syn.samples[0], a, b);
            for s in &syn.samples {
                assert!((dist(s, a, b) - d0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn params_and_noise_validation() {
        let bad = LegModelParams {
            femur_length_mm: -1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidParams(_))));
        let mut collinear = LegModelParams::default();
        for (i, m) in collinear.scope_markers.iter_mut().enumerate() {
            m.position = Vec3::new(0.0, 0.0, -100.0 * (i + 1) as f64);
        }
        assert!(matches!(collinear.validate(), Err(Error::InvalidParams(_))));
        let noise = NoiseSpec {
            occlusion_prob: 1.5,
            ..Default::default()
        };
        assert!(noise.validate().is_err());
        assert!(MotionScript::new(100.0, vec![JointCommand { t: 1.0, ..Default::default() }, JointCommand::default()]).is_err());
    }

    #[test]
    fn params_json_round_trip() {
        let p = LegModelParams::default();
        let json = serde_json::to_string(&p).unwrap();
        let back: LegModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let partial: LegModelParams = serde_json::from_str(r#"{"femur_length_mm": 450}"#).unwrap();
        assert_eq!(partial.femur_length_mm, 450.0);
        assert_eq!(partial.tibia_length_mm, 380.0);
    }
}
