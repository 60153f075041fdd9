use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GeomError;

/// Unit quaternion, scalar-first `(w, x, y, z)`, Hamilton product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion and normalizes it to unit length.
    pub fn new_normalized(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        let q = Quaternion { w, x, y, z };
        let n = q.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(GeomError::NonUnitQuaternion(n));
        }
        Ok(Quaternion { w: w / n, x: x / n, y: y / n, z: z / n })
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn neg(&self) -> Self {
        Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn from_rotation_matrix(rotation: &Matrix3<f64>) -> Self {
        let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rotation));
        let q = uq.quaternion();
        Quaternion { w: q.w, x: q.i, y: q.j, z: q.k }
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Hamilton product `self * rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Quaternion {
        let (a, b) = (self, rhs);
        Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }
}

impl Serialize for Quaternion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quaternion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Ok(Quaternion { w, x, y, z })
    }
}

/// Distance between two rotations given as unit quaternions:
/// `min(|q1 - q2|, |q1 + q2|)`, in `[0, sqrt(2)]`.
pub fn quat_distance(q1: &Quaternion, q2: &Quaternion) -> Result<f64, GeomError> {
    for q in [q1, q2] {
        let n = q.norm();
        if !((n - 1.0).abs() <= 1e-6) {
            return Err(GeomError::NonUnitQuaternion(n));
        }
    }
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (a, b) in q1.as_array().iter().zip(q2.as_array()) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    Ok(diff.min(sum).sqrt())
}

/// Rigid transform mapping object coordinates into camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose { rotation: Matrix3::identity(), translation: t }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Pose { rotation: *r.matrix(), translation }
    }

    pub fn from_quaternion(q: &Quaternion, translation: Vector3<f64>) -> Self {
        Pose { rotation: q.to_rotation_matrix(), translation }
    }

    pub fn quaternion(&self) -> Quaternion {
        Quaternion::from_rotation_matrix(&self.rotation)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ rhs`: applies `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose { rotation: self.rotation * rhs.rotation, translation: self.rotation * rhs.translation + self.translation }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// `max(|RᵀR - I|_max, |det R - 1|)`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        e.max((self.rotation.determinant() - 1.0).abs())
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    rotation: Vec<f64>,
    translation: Vec<f64>,
    #[serde(default = "meters")]
    units: String,
}

fn meters() -> String {
    "m".to_string()
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut rotation = Vec::with_capacity(9);
        for r in 0..3 {
            for c in 0..3 {
                rotation.push(self.rotation[(r, c)]);
            }
        }
        PoseJson { rotation, translation: self.translation.iter().copied().collect(), units: meters() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = PoseJson::deserialize(d)?;
        if raw.rotation.len() != 9 || raw.translation.len() != 3 {
            return Err(D::Error::custom("pose needs 9 rotation and 3 translation values"));
        }
        if raw.units != "m" {
            return Err(D::Error::custom(format!("unsupported pose units {:?}", raw.units)));
        }
        Ok(Pose {
            rotation: Matrix3::from_row_slice(&raw.rotation),
            translation: Vector3::from_column_slice(&raw.translation),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    #[test]
    fn quat_distance_examples() {
        let q = Quaternion::new_normalized(0.3, -0.2, 0.5, 0.1).unwrap();
        assert_eq!(quat_distance(&q, &q).unwrap(), 0.0);
        assert_eq!(quat_distance(&q, &q.neg()).unwrap(), 0.0);
        let a = Quaternion::IDENTITY;
        let b = Quaternion { w: 0.0, x: 0.0, y: 0.0, z: 1.0 };
        assert!((quat_distance(&a, &b).unwrap() - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn quat_distance_rejects_non_unit() {
        let q = Quaternion { w: 1.1, x: 0.0, y: 0.0, z: 0.0 };
        assert!(matches!(quat_distance(&q, &Quaternion::IDENTITY), Err(GeomError::NonUnitQuaternion(_))));
    }

    #[test]
    fn antipodal_quaternions_share_rotation() {
        let q = Quaternion::new_normalized(0.7, 0.1, -0.4, 0.2).unwrap();
        let d = (q.to_rotation_matrix() - q.neg().to_rotation_matrix()).abs().max();
        assert!(d < 1e-9);
    }

    #[test]
    fn quaternion_matrix_round_trip() {
        let q = Quaternion::new_normalized(0.2, 0.9, -0.3, 0.25).unwrap();
        let back = Quaternion::from_rotation_matrix(&q.to_rotation_matrix());
        assert!(quat_distance(&q, &back).unwrap() < 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose::from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 1.1, Vector3::new(0.1, -2.0, 3.0));
        let id = p.compose(&p.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!(id.translation.norm() < 1e-9);
        assert!(p.orthonormality_error() < 1e-9);
    }

    #[test]
    fn hamilton_product_matches_matrix_product() {
        let a = Quaternion::new_normalized(0.5, 0.1, 0.7, -0.2).unwrap();
        let b = Quaternion::new_normalized(-0.3, 0.4, 0.2, 0.6).unwrap();
        let m = a.mul(&b).to_rotation_matrix();
        assert!((m - a.to_rotation_matrix() * b.to_rotation_matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn pose_json_layout() {
        let p = Pose::from_axis_angle(&Vector3::z(), FRAC_PI_2, Vector3::new(1.0, 2.0, 3.0));
        let v: serde_json::Value = serde_json::to_value(p).unwrap();
        assert_eq!(v["units"], "m");
        assert_eq!(v["rotation"].as_array().unwrap().len(), 9);
        // row-major: R[0][1] = -1 for a +90° turn about z
        assert!((v["rotation"][1].as_f64().unwrap() + 1.0).abs() < 1e-15);
        let back: Pose = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
