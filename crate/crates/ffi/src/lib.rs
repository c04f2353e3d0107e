//! C interface to `legtrack`.
//!
//! Every function returns an [`LtStatus`]. On failure a description is
//! available from [`lt_last_error_message`] on the same thread until the next
//! call. Strings returned through `char **` out-parameters are owned by the
//! caller and must be released with [`lt_string_free`]. Sessions are opaque
//! and released with [`lt_session_free`].

use legtrack::anatomy::{PointId, Route};
use legtrack::geom::{RotMat3, Transform, UnitVec3, Vec3};
use legtrack::io::config::{ConsistencySpec, SessionConfig};
use legtrack::io::stream::MarkerStreamReader;
use legtrack::kinematics::Plane;
use legtrack::pipeline::Session;
use legtrack::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    DegenerateGeometry = 3,
    InsufficientMarkers = 4,
    FitRejected = 5,
    InvalidRigidBody = 6,
    UnknownPoint = 7,
    MissingFrame = 8,
    InvalidBoneVector = 9,
    DegenerateProjection = 10,
    InvalidParams = 11,
    OutOfRange = 12,
    ParseError = 13,
    NonMonotonicTime = 14,
    ConfigError = 15,
    IoError = 16,
    Panic = 17,
}

impl From<&Error> for LtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DegenerateGeometry(_) => LtStatus::DegenerateGeometry,
            Error::InsufficientMarkers { .. } => LtStatus::InsufficientMarkers,
            Error::FitRejected { .. } => LtStatus::FitRejected,
            Error::InvalidRigidBody(_) => LtStatus::InvalidRigidBody,
            Error::UnknownPoint(_) => LtStatus::UnknownPoint,
            Error::MissingFrame(_) => LtStatus::MissingFrame,
            Error::InvalidBoneVector(_) => LtStatus::InvalidBoneVector,
            Error::DegenerateProjection(_) => LtStatus::DegenerateProjection,
            Error::InvalidParams(_) => LtStatus::InvalidParams,
            Error::OutOfRange { .. } => LtStatus::OutOfRange,
            Error::Parse { .. } => LtStatus::ParseError,
            Error::NonMonotonicTime { .. } => LtStatus::NonMonotonicTime,
            Error::Config(_) => LtStatus::ConfigError,
            Error::Io(_) => LtStatus::IoError,
        }
    }
}

/// Rigid transform: row-major rotation and translation in mm.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LtTransform {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LtVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Coordinate plane for [`lt_projected_angle`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtPlane {
    Yz = 0,
    Xz = 1,
    Xy = 2,
}

/// Opaque tracking session.
pub struct LtSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

enum Failure {
    Status(LtStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(LtStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `body`, turning errors and panics into a status and the last-error text.
fn guard<F: FnOnce() -> Result<(), Failure> + UnwindSafe>(body: F) -> LtStatus {
    let (status, message) = match catch_unwind(body) {
        Ok(Ok(())) => (LtStatus::Ok, String::new()),
        Ok(Err(Failure::Status(s, m))) => (s, m),
        Ok(Err(Failure::Core(e))) => (LtStatus::from(&e), e.to_string()),
        Err(_) => (LtStatus::Panic, "internal panic".to_string()),
    };
    set_last_error(&message);
    status
}

unsafe fn read<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    let slot = p.as_mut().ok_or_else(|| null(what))?;
    *slot = value;
    Ok(())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(LtStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

fn vec(v: &LtVec3) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

fn lt_vec(v: Vec3) -> LtVec3 {
    LtVec3 { x: v.x, y: v.y, z: v.z }
}

fn to_core(t: &LtTransform) -> Result<Transform, Failure> {
    let r = &t.rotation;
    let rows = [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]];
    let translation = Vec3::from(t.translation);
    if !translation.iter().all(|c| c.is_finite()) {
        return Err(Error::DegenerateGeometry("translation is not finite".into()).into());
    }
    Ok(Transform::new(RotMat3::from_rows(&rows)?, translation))
}

fn to_lt(t: &Transform) -> LtTransform {
    let rows = t.rotation.rows();
    LtTransform {
        rotation: std::array::from_fn(|i| rows[i / 3][i % 3]),
        translation: t.translation.into(),
    }
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    let s = CString::new(text).map_err(|_| Failure::Status(LtStatus::Panic, "output contains NUL".into()))?;
    write(out, s.into_raw(), "out")
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string(value).map_err(|e| Error::Io(e.to_string()).into())
}

/// `out = a ∘ b` (apply `b` first).
///
/// # Safety
/// Pointers must be valid for reads (`a`, `b`) and writes (`out`).
#[no_mangle]
pub unsafe extern "C" fn lt_transform_compose(a: *const LtTransform, b: *const LtTransform, out: *mut LtTransform) -> LtStatus {
    guard(|| {
        let a = to_core(read(a, "a")?)?;
        let b = to_core(read(b, "b")?)?;
        write(out, to_lt(&a.compose(&b)), "out")
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lt_transform_invert(t: *const LtTransform, out: *mut LtTransform) -> LtStatus {
    guard(|| {
        let t = to_core(read(t, "t")?)?;
        write(out, to_lt(&t.inverse()), "out")
    })
}

/// Maps point `p` from the child frame of `t` into its parent frame.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lt_transform_apply(t: *const LtTransform, p: *const LtVec3, out: *mut LtVec3) -> LtStatus {
    guard(|| {
        let t = to_core(read(t, "t")?)?;
        let p = vec(read(p, "p")?);
        write(out, lt_vec(t.apply(&p)), "out")
    })
}

/// Frame at marker `h` with z toward marker `g` and y near `y_hint`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lt_frame_from_marker_pair(
    h: *const LtVec3,
    g: *const LtVec3,
    y_hint: *const LtVec3,
    out: *mut LtTransform,
) -> LtStatus {
    guard(|| {
        let (h, g) = (vec(read(h, "h")?), vec(read(g, "g")?));
        let hint = vec(read(y_hint, "y_hint")?);
        if !(hint.norm() > 0.0) {
            return Err(Error::DegenerateGeometry("y hint has zero length".into()).into());
        }
        let frame = legtrack::frames::frame_from_marker_pair(&h, &g, &UnitVec3::new_normalize(hint))?;
        write(out, to_lt(&frame), "out")
    })
}

/// Condyle frame at `c` from hip centre `b` and neck point `k`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lt_condyle_frame(
    b: *const LtVec3,
    k: *const LtVec3,
    c: *const LtVec3,
    out: *mut LtTransform,
) -> LtStatus {
    guard(|| {
        let frame = legtrack::frames::condyle_frame(&vec(read(b, "b")?), &vec(read(k, "k")?), &vec(read(c, "c")?))?;
        write(out, to_lt(&frame), "out")
    })
}

/// Signed angle in degrees between `v` and its projection onto `plane`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lt_projected_angle(v: *const LtVec3, plane: LtPlane, out_deg: *mut f64) -> LtStatus {
    guard(|| {
        let plane = match plane {
            LtPlane::Yz => Plane::YZ,
            LtPlane::Xz => Plane::XZ,
            LtPlane::Xy => Plane::XY,
        };
        let angle = legtrack::kinematics::projected_angle(&vec(read(v, "v")?), plane)?;
        write(out_deg, angle, "out_deg")
    })
}

/// Creates a session from a JSON configuration.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lt_session_from_json(config_json: *const c_char, out: *mut *mut LtSession) -> LtStatus {
    guard(|| {
        let text = read_str(config_json, "config_json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Session::new(SessionConfig::from_json(text)?)?;
        write(out, Box::into_raw(Box::new(LtSession { inner })), "out")
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `session` must come from [`lt_session_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lt_session_free(session: *mut LtSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn with_stream<F>(session: *const LtSession, csv: *const c_char, out_json: *mut *mut c_char, run: F) -> LtStatus
where
    F: FnOnce(&Session, MarkerStreamReader<&[u8]>) -> Result<String, Failure> + UnwindSafe,
{
    guard(|| {
        let session = &read(session, "session")?.inner;
        let text = read_str(csv, "csv")?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let stream = MarkerStreamReader::new(text.as_bytes())?;
        write_string(out_json, run(session, stream)?)
    })
}

/// Angle report (JSON) for a marker stream given as CSV text.
///
/// # Safety
/// `session` must be live, `csv` NUL-terminated, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lt_session_run_csv(
    session: *const LtSession,
    csv: *const c_char,
    out_json: *mut *mut c_char,
) -> LtStatus {
    with_stream(session, csv, out_json, |s, stream| json(&s.run(stream)?))
}

/// Per-sample poses and frames (JSON) for a marker stream given as CSV text.
///
/// # Safety
/// As for [`lt_session_run_csv`].
#[no_mangle]
pub unsafe extern "C" fn lt_session_track_csv(
    session: *const LtSession,
    csv: *const c_char,
    out_json: *mut *mut c_char,
) -> LtStatus {
    with_stream(session, csv, out_json, |s, stream| json(&s.run_tracking(stream)?))
}

/// Cross-route report (JSON). `point`, `route_a` and `route_b` (such as
/// `"E"`, `"M"`, `"H>C>D"`) may each be null to use the configured value.
///
/// # Safety
/// As for [`lt_session_run_csv`]; non-null strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lt_session_consistency_csv(
    session: *const LtSession,
    csv: *const c_char,
    point: *const c_char,
    route_a: *const c_char,
    route_b: *const c_char,
    out_json: *mut *mut c_char,
) -> LtStatus {
    let overrides = (|| -> Result<_, Failure> {
        let opt = |p: *const c_char, what: &str| -> Result<Option<String>, Failure> {
            if p.is_null() {
                Ok(None)
            } else {
                read_str(p, what).map(|s| Some(s.to_string()))
            }
        };
        Ok((opt(point, "point")?, opt(route_a, "route_a")?, opt(route_b, "route_b")?))
    })();
    let (point, route_a, route_b) = match overrides {
        Ok(v) => v,
        Err(f) => return guard(move || Err(f)),
    };
    with_stream(session, csv, out_json, move |s, stream| {
        let mut config = s.config().clone();
        let base = config.consistency.clone().unwrap_or(ConsistencySpec {
            point: PointId::E,
            route_a: Route::tibia(),
            route_b: Route::femur_condyle_tibia(),
        });
        config.consistency = Some(ConsistencySpec {
            point: point.as_deref().map(str::parse).transpose()?.unwrap_or(base.point),
            route_a: route_a.as_deref().map(str::parse).transpose()?.unwrap_or(base.route_a),
            route_b: route_b.as_deref().map(str::parse).transpose()?.unwrap_or(base.route_b),
        });
        json(&Session::new(config)?.run_consistency(stream)?)
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn lt_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}
