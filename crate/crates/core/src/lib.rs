//! Skeletal tracking from optical markers.
//!
//! Rigid-body poses are fitted to labelled marker observations, anatomical
//! points measured on CT are carried through chains of frames (across the
//! knee included), and hip and knee angles and knee translations are computed
//! from the femur and tibia mechanical axes. A synthetic leg generates marker
//! streams with exact ground truth for testing.
//!
//! Units are millimetres and degrees throughout.

pub mod anatomy;
pub mod error;
pub mod frames;
pub mod geom;
pub mod io;
pub mod kinematics;
pub mod pipeline;
pub mod rigidbody;
pub mod simulate;

pub use anatomy::{
    cross_route_error, point_in_frame, point_in_world, point_via_route, relative_transform, scope_tip_in_frame,
    FrameId, LandmarkEntry, LandmarkTable, PointId, Route, SceneSnapshot,
};
pub use error::{Error, Result};
pub use frames::{condyle_frame, frame_from_marker_pair, FrameSpec, YHint};
pub use geom::{compose, invert, apply, RotMat3, Timestamp, Transform, UnitVec3, Vec3};
pub use io::{parse_marker_stream, write_marker_stream, SessionConfig};
pub use kinematics::{
    femur_vector, hip_angles, knee_angles, knee_translation, leg_angles, projected_angle, tibia_vector,
    HipAngles, KneeAngles, KneeTranslation, LegAngles, Plane,
};
pub use pipeline::{run_pipeline, AngleReport, AngleReportRow, ConsistencyReport, Session};
pub use rigidbody::{fit_pose, MarkerDef, MarkerFrameSample, MarkerObservation, PoseFit, RigidBodyDef};
pub use simulate::{synthesize, JointCommand, LegModelParams, MotionScript, NoiseSpec, Synthesis, Trajectory};

/// Optical tracker positional accuracy, mm.
pub const OPTICAL_ACCURACY_MM: f64 = 0.03;

/// CT landmark measurement accuracy, mm.
pub const CT_ACCURACY_MM: f64 = 0.3;
