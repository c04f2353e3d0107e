//! Rotation and rigid-transform arithmetic.
//!
//! Conventions are fixed for the whole crate: right-handed, Y up, Z running
//! along the body from toe to head for a supine patient. Lengths are in
//! millimetres. A [`Transform`] maps points from its child frame into its
//! parent frame, so `a.compose(&b)` applies `b` first and then `a`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix4, Unit, Vector3, SVD};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Position (mm) or free direction.
pub type Vec3 = Vector3<f64>;

/// Direction with unit Euclidean norm.
pub type UnitVec3 = Unit<Vector3<f64>>;

/// Tolerance on orthonormality and determinant accepted for a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Drift above which composed rotations are projected back onto SO(3).
pub const REORTHONORMALIZE_DRIFT: f64 = 1e-12;

pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Proper rotation matrix. Columns are the child frame's axes expressed in
/// the parent frame.
#[derive(Clone, Copy, PartialEq)]
pub struct RotMat3(Matrix3<f64>);

impl RotMat3 {
    pub fn identity() -> Self {
        RotMat3(Matrix3::identity())
    }

    /// Accepts `m` if it is orthonormal with determinant +1 within
    /// [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|c| c.is_finite()) {
            return Err(Error::DegenerateGeometry(
                "rotation has non-finite entries".into(),
            ));
        }
        let drift = orthonormality_drift(&m);
        if drift > ROTATION_TOLERANCE {
            return Err(Error::DegenerateGeometry(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {drift:e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::DegenerateGeometry(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(RotMat3(m))
    }

    pub fn from_columns(x: &Vec3, y: &Vec3, z: &Vec3) -> Result<Self> {
        Self::from_matrix(Matrix3::from_columns(&[*x, *y, *z]))
    }

    /// Nearest proper rotation to `m` in the Frobenius sense (polar
    /// decomposition through the SVD).
    pub fn nearest(m: &Matrix3<f64>) -> Self {
        let svd = SVD::new(*m, true, true);
        let mut u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        if (u * v_t).determinant() < 0.0 {
            // singular values are sorted descending; flip the weakest direction
            let col = -u.column(2);
            u.set_column(2, &col);
        }
        RotMat3(u * v_t)
    }

    /// Right-handed rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: &UnitVec3, angle: f64) -> Self {
        RotMat3(*nalgebra::Rotation3::from_axis_angle(axis, angle).matrix())
    }

    pub fn about_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x_axis(), angle)
    }

    pub fn about_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y_axis(), angle)
    }

    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z_axis(), angle)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotMat3(self.0.transpose())
    }

    pub fn axis(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn x_axis(&self) -> Vec3 {
        self.axis(0)
    }

    pub fn y_axis(&self) -> Vec3 {
        self.axis(1)
    }

    pub fn z_axis(&self) -> Vec3 {
        self.axis(2)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Product `self · other`, re-projected onto SO(3) when rounding has
    /// pushed it further than [`REORTHONORMALIZE_DRIFT`] from orthonormal.
    pub fn then_apply(&self, other: &RotMat3) -> RotMat3 {
        let m = self.0 * other.0;
        if orthonormality_drift(&m) > REORTHONORMALIZE_DRIFT {
            RotMat3::nearest(&m)
        } else {
            RotMat3(m)
        }
    }

    /// Rotation angle in radians, in [0, π].
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn from_rows(rows: &[[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl fmt::Debug for RotMat3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("RotMat3").field(&self.rows()).finish()
    }
}

/// Largest absolute entry of `MᵀM - I`.
pub fn orthonormality_drift(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// Rigid motion in SE(3): rotation followed by translation (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct Transform {
    pub rotation: RotMat3,
    pub translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<Transform> for TransformRepr {
    fn from(t: Transform) -> Self {
        TransformRepr {
            rotation: t.rotation.rows(),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<TransformRepr> for Transform {
    type Error = Error;

    fn try_from(r: TransformRepr) -> Result<Self> {
        let translation = Vec3::from(r.translation);
        if !is_finite(&translation) {
            return Err(Error::DegenerateGeometry(
                "translation has non-finite components".into(),
            ));
        }
        Ok(Transform::new(RotMat3::from_rows(&r.rotation)?, translation))
    }
}

impl Default for Transform {
    fn default() -> Self {
        Transform::identity()
    }
}

impl Transform {
    pub fn new(rotation: RotMat3, translation: Vec3) -> Self {
        Transform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Transform::new(RotMat3::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Transform::new(RotMat3::identity(), translation)
    }

    pub fn from_rotation(rotation: RotMat3) -> Self {
        Transform::new(rotation, Vec3::zeros())
    }

    /// `self ∘ other`: maps through `other` first, then `self`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation.then_apply(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            translation: -rt.rotate(&self.translation),
            rotation: rt,
        }
    }

    /// Maps a point from the child frame into the parent frame.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Maps a free vector (no translation).
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Transform> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::DegenerateGeometry(
                "homogeneous matrix bottom row is not [0 0 0 1]".into(),
            ));
        }
        let rotation = RotMat3::from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Transform::new(rotation, m.fixed_view::<3, 1>(0, 3).into_owned()))
    }

    /// Largest absolute entry difference over the 3×4 upper block.
    pub fn max_abs_diff(&self, other: &Transform) -> f64 {
        (self.rotation.matrix() - other.rotation.matrix())
            .amax()
            .max((self.translation - other.translation).amax())
    }
}

pub fn compose(a: &Transform, b: &Transform) -> Transform {
    a.compose(b)
}

pub fn invert(t: &Transform) -> Transform {
    t.inverse()
}

pub fn apply(t: &Transform, p: &Vec3) -> Vec3 {
    t.apply(p)
}

/// Seconds since stream start.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub fn new(seconds: f64) -> Result<Self> {
        if !seconds.is_finite() || seconds < 0.0 {
            return Err(Error::Config(format!(
                "timestamp must be finite and non-negative, got {seconds}"
            )));
        }
        Ok(Timestamp(seconds))
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} s", self.0)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;

    pub fn random_rotation<R: Rng>(rng: &mut R) -> RotMat3 {
        // uniform on SO(3) via a normalised Gaussian quaternion
        loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n > 1e-6 {
                let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                    q[0], q[1], q[2], q[3],
                ));
                return RotMat3::from_matrix(*uq.to_rotation_matrix().matrix()).unwrap();
            }
        }
    }

    pub fn random_vec<R: Rng>(rng: &mut R, scale: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    pub fn random_transform<R: Rng>(rng: &mut R) -> Transform {
        Transform::new(random_rotation(rng), random_vec(rng, 2000.0))
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn homogeneous_point(m: &Matrix4<f64>, p: &Vec3) -> Vec3 {
        let h = m * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        Vec3::new(h.x / h.w, h.y / h.w, h.z / h.w)
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_transform(&mut rng);
        assert_eq!(compose(&Transform::identity(), &t), t);
        assert_eq!(invert(&Transform::identity()), Transform::identity());
        let p = random_vec(&mut rng, 100.0);
        assert_eq!(apply(&Transform::identity(), &p), p);
    }

    #[test]
    fn pure_translation_moves_origin() {
        let d = Vec3::new(3.0, -4.5, 12.25);
        assert_eq!(apply(&Transform::from_translation(d), &Vec3::zeros()), d);
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_transform(&mut rng);
            let b = random_transform(&mut rng);
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            let got = compose(&a, &b).to_homogeneous();
            assert!((got - oracle).amax() < 1e-9);
        }
    }

    #[test]
    fn invert_matches_general_matrix_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let t = random_transform(&mut rng);
            let oracle = t.to_homogeneous().try_inverse().unwrap();
            assert!((invert(&t).to_homogeneous() - oracle).amax() < 1e-9);
        }
    }

    #[test]
    fn invert_is_an_involution() {
        // at metre-scale translations the rounding floor of R·Rᵀ·t is ~1e-12
        // on its own, so the involution check uses bone-scale offsets
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let t = Transform::new(random_rotation(&mut rng), random_vec(&mut rng, 500.0));
            assert!(invert(&invert(&t)).max_abs_diff(&t) < 1e-12);
        }
        assert_eq!(invert(&Transform::identity()), Transform::identity());
    }

    #[test]
    fn apply_matches_homogeneous_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let t = random_transform(&mut rng);
            let p = random_vec(&mut rng, 1e4);
            let oracle = homogeneous_point(&t.to_homogeneous(), &p);
            assert!((apply(&t, &p) - oracle).amax() < 1e-9);
        }
    }

    #[test]
    fn rejects_reflections_and_skew() {
        let mirror = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            RotMat3::from_matrix(mirror),
            Err(Error::DegenerateGeometry(_))
        ));
        let mut skew = Matrix3::identity();
        skew[(0, 1)] = 1e-6;
        assert!(RotMat3::from_matrix(skew).is_err());
    }

    #[test]
    fn nearest_rotation_repairs_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r = random_rotation(&mut rng);
        let noisy = r.matrix() + Matrix3::from_fn(|i, j| 1e-7 * ((i * 3 + j) as f64 - 4.0));
        let fixed = RotMat3::nearest(&noisy);
        assert!(orthonormality_drift(fixed.matrix()) < 1e-14);
        assert_abs_diff_eq!(fixed.matrix().determinant(), 1.0, epsilon = 1e-14);
        assert!((fixed.matrix() - r.matrix()).amax() < 1e-6);
        // nearest never returns a reflection, even for a reflected input
        let flipped = -r.matrix();
        assert_abs_diff_eq!(RotMat3::nearest(&flipped).matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn long_compose_chains_stay_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut acc = Transform::identity();
        for _ in 0..100_000 {
            acc = acc.compose(&random_transform(&mut rng));
        }
        assert!(orthonormality_drift(acc.rotation.matrix()) <= 1e-9);
        assert_abs_diff_eq!(acc.rotation.matrix().determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn serde_roundtrip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = random_transform(&mut rng);
        let json = serde_json::to_string(&t).unwrap();
        let back: Transform = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"rotation":[[1,0,0],[0,1,0],[0,0,-1]],"translation":[0,0,0]}"#;
        assert!(serde_json::from_str::<Transform>(bad).is_err());
    }

    #[test]
    fn homogeneous_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_transform(&mut rng);
        assert_eq!(Transform::from_homogeneous(&t.to_homogeneous()).unwrap(), t);
        let mut m = t.to_homogeneous();
        m[(3, 0)] = 0.5;
        assert!(Transform::from_homogeneous(&m).is_err());
    }

    #[test]
    fn timestamp_validation() {
        assert!(Timestamp::new(-1.0).is_err());
        assert!(Timestamp::new(f64::NAN).is_err());
        assert_eq!(Timestamp::new(11.033).unwrap().seconds(), 11.033);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_transform() -> impl Strategy<Value = Transform> {
            (
                prop::array::uniform3(-1.0f64..1.0),
                0.0f64..std::f64::consts::PI,
                prop::array::uniform3(-5000.0f64..5000.0),
            )
                .prop_filter_map("axis must be non-zero", |(axis, angle, t)| {
                    let axis = Vec3::from(axis);
                    (axis.norm() > 1e-3).then(|| {
                        Transform::new(
                            RotMat3::from_axis_angle(&Unit::new_normalize(axis), angle),
                            Vec3::from(t),
                        )
                    })
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn inverse_cancels(t in arb_transform()) {
                prop_assert!(t.compose(&t.inverse()).max_abs_diff(&Transform::identity()) < 1e-9);
                prop_assert!(t.inverse().compose(&t).max_abs_diff(&Transform::identity()) < 1e-9);
            }

            #[test]
            fn compose_is_sequential_application(
                a in arb_transform(),
                b in arb_transform(),
                p in prop::array::uniform3(-5000.0f64..5000.0),
            ) {
                let p = Vec3::from(p);
                let lhs = a.compose(&b).apply(&p);
                let rhs = a.apply(&b.apply(&p));
                prop_assert!((lhs - rhs).amax() < 1e-9);
            }

            #[test]
            fn composition_stays_in_so3(a in arb_transform(), b in arb_transform()) {
                let r = a.compose(&b).rotation;
                prop_assert!(orthonormality_drift(r.matrix()) < 1e-9);
                prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn distances_are_preserved(
                t in arb_transform(),
                p in prop::array::uniform3(-5000.0f64..5000.0),
                q in prop::array::uniform3(-5000.0f64..5000.0),
            ) {
                let (p, q) = (Vec3::from(p), Vec3::from(q));
                let d0 = (p - q).norm();
                let d1 = (t.apply(&p) - t.apply(&q)).norm();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }
}
