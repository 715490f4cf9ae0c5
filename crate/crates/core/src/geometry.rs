//! Domain types shared by every stage of the pipeline: Gaussians and maps,
//! point clouds, rigid poses, pinhole cameras, and the quaternion/rotation
//! helpers they rely on.
//!
//! Gaussian parameters are stored in unconstrained form. Scales are kept as
//! logarithms and opacity/confidence as logits, so any finite gradient step
//! keeps them inside their valid ranges.

use std::collections::HashMap;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of scalar parameters per Gaussian in flattened form.
pub const PARAMS_PER_GAUSSIAN: usize = 15;

/// Offsets of each parameter class inside the flattened layout.
pub mod layout {
    pub const MEAN: usize = 0;
    pub const ROTATION: usize = 3;
    pub const LOG_SCALE: usize = 7;
    pub const COLOR: usize = 10;
    pub const OPACITY: usize = 13;
    pub const GCS: usize = 14;
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One anisotropic 3D Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: Vector3<f64>,
    /// Quaternion as (w, x, y, z); unit norm between optimizer steps.
    pub rotation: Vector4<f64>,
    pub log_scale: Vector3<f64>,
    pub color: Vector3<f64>,
    pub opacity_logit: f64,
    /// Geometric confidence score, stored as a logit.
    pub gcs_logit: f64,
}

impl Gaussian {
    /// Builds a Gaussian from natural-range values.
    pub fn new(
        mean: Vector3<f64>,
        rotation: Vector4<f64>,
        scale: Vector3<f64>,
        color: Vector3<f64>,
        opacity: f64,
        gcs: f64,
    ) -> Result<Self> {
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("gaussian mean must be finite"));
        }
        let norm = rotation.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid("gaussian rotation must be a non-zero finite quaternion"));
        }
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("scales must be positive, got {scale:?}")));
        }
        if !(opacity > 0.0 && opacity < 1.0) {
            return Err(Error::invalid(format!("opacity must lie in (0,1), got {opacity}")));
        }
        if !(gcs > 0.0 && gcs < 1.0) {
            return Err(Error::invalid(format!("gcs must lie in (0,1), got {gcs}")));
        }
        Ok(Gaussian {
            mean,
            rotation: rotation / norm,
            log_scale: scale.map(f64::ln),
            color,
            opacity_logit: logit(opacity),
            gcs_logit: logit(gcs),
        })
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn gcs(&self) -> f64 {
        sigmoid(self.gcs_logit)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        let r = rotation_from_quat_normalized(&self.rotation);
        covariance_from_rotation(&r, &self.scale())
    }

    pub fn to_params(&self) -> [f64; PARAMS_PER_GAUSSIAN] {
        let mut p = [0.0; PARAMS_PER_GAUSSIAN];
        p[0..3].copy_from_slice(self.mean.as_slice());
        p[3..7].copy_from_slice(self.rotation.as_slice());
        p[7..10].copy_from_slice(self.log_scale.as_slice());
        p[10..13].copy_from_slice(self.color.as_slice());
        p[13] = self.opacity_logit;
        p[14] = self.gcs_logit;
        p
    }

    pub fn from_params(p: &[f64; PARAMS_PER_GAUSSIAN]) -> Self {
        Gaussian {
            mean: Vector3::new(p[0], p[1], p[2]),
            rotation: Vector4::new(p[3], p[4], p[5], p[6]),
            log_scale: Vector3::new(p[7], p[8], p[9]),
            color: Vector3::new(p[10], p[11], p[12]),
            opacity_logit: p[13],
            gcs_logit: p[14],
        }
    }

    /// Renormalizes the quaternion and clamps color into [0,1].
    pub fn project_to_valid(&mut self) {
        let n = self.rotation.norm();
        if n > 0.0 && n.is_finite() {
            self.rotation /= n;
        } else {
            self.rotation = Vector4::new(1.0, 0.0, 0.0, 0.0);
        }
        self.color = self.color.map(|c| c.clamp(0.0, 1.0));
    }

    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
    }
}

/// The optimizable scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMap {
    pub gaussians: Vec<Gaussian>,
    pub background: Vector3<f64>,
}

impl GaussianMap {
    pub fn new(gaussians: Vec<Gaussian>, background: Vector3<f64>) -> Self {
        GaussianMap { gaussians, background }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn means(&self) -> PointCloud {
        PointCloud {
            points: self.gaussians.iter().map(|g| g.mean).collect(),
        }
    }

    /// Order-sensitive 64-bit fingerprint over every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.gaussians.len() as u64);
        for v in self.background.iter() {
            h.write_u64(v.to_bits());
        }
        for g in &self.gaussians {
            for v in g.to_params() {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}

pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub(crate) fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// Per-Gaussian gradient of a scalar loss, in the flattened parameter layout
/// of [`Gaussian::to_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapGradient {
    pub params: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
}

impl MapGradient {
    pub fn zeros(n: usize) -> Self {
        MapGradient {
            params: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn add_scaled(&mut self, other: &MapGradient, w: f64) {
        assert_eq!(self.params.len(), other.params.len(), "gradient length mismatch");
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += w * y;
            }
        }
    }

    pub fn mean(&self, i: usize) -> Vector3<f64> {
        let p = &self.params[i];
        Vector3::new(p[layout::MEAN], p[layout::MEAN + 1], p[layout::MEAN + 2])
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.params.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// An ordered set of 3D points in meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
        }
    }

    /// Keeps one representative point per occupied voxel: the member closest
    /// to the voxel's centroid. Voxels are emitted in order of first
    /// occurrence so the output is deterministic given the input order.
    pub fn voxel_downsample(&self, voxel: f64) -> Result<PointCloud> {
        if !(voxel > 0.0) {
            return Err(Error::invalid(format!("voxel size must be positive, got {voxel}")));
        }
        let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            let key = (
                (p.x / voxel).floor() as i64,
                (p.y / voxel).floor() as i64,
                (p.z / voxel).floor() as i64,
            );
            let slot = *slots.entry(key).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[slot].push(i);
        }
        let points = members
            .iter()
            .map(|idx| {
                let centroid = idx.iter().map(|&i| self.points[i]).sum::<Vector3<f64>>()
                    / idx.len() as f64;
                let best = idx
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        let da = (self.points[a] - centroid).norm_squared();
                        let db = (self.points[b] - centroid).norm_squared();
                        da.total_cmp(&db).then(a.cmp(&b))
                    })
                    .expect("voxel has at least one member");
                self.points[best]
            })
            .collect();
        Ok(PointCloud { points })
    }
}

/// Rigid transform: `x -> R x + t`.
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
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validating constructor; `rotation` must be orthonormal with det +1
    /// to within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("pose has non-finite entries"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (|RᵀR-I|={ortho:e}, det={det})"
            )));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: so3_exp(&axis_angle),
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Projects the rotation back onto SO(3), removing accumulated drift.
    pub fn renormalized(&self) -> Pose {
        Pose {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    /// Left-perturbation retraction used for pose optimization:
    /// `R' = exp(ω) R`, `t' = t + v`.
    pub fn retract(&self, omega: &Vector3<f64>, v: &Vector3<f64>) -> Pose {
        Pose {
            rotation: so3_exp(omega) * self.rotation,
            translation: self.translation + v,
        }
    }
}

/// Pinhole camera intrinsics, image size and depth clip range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Camera { fx, fy, cx, cy, width, height, near, far };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::invalid("clip range must satisfy 0 < near < far"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image dimensions must be non-zero"));
        }
        Ok(())
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_rotation(q: &Vector4<f64>) -> Result<Matrix3<f64>> {
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("quaternion has non-finite components"));
    }
    let n = q.norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("quaternion norm {n} is not within 1e-6 of 1")));
    }
    Ok(rotation_from_quat_normalized(q))
}

/// Rotation of `q / |q|`; the caller guarantees `q` is non-zero.
pub(crate) fn rotation_from_quat_normalized(q: &Vector4<f64>) -> Matrix3<f64> {
    let q = q / q.norm();
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
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

/// Pulls a gradient on the rotation matrix back to the raw (possibly
/// unnormalized) quaternion, including the normalization step.
pub(crate) fn rotation_vjp(q: &Vector4<f64>, g: &Matrix3<f64>) -> Vector4<f64> {
    let n = q.norm();
    let u = q / n;
    let (w, x, y, z) = (u[0], u[1], u[2], u[3]);
    let gw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)]
        + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)]
            - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    let gu = Vector4::new(gw, gx, gy, gz);
    // d(q/|q|)/dq = (I - u uᵀ) / |q|
    (gu - u * u.dot(&gu)) / n
}

/// Unit quaternion `(w, x, y, z)` of a rotation matrix.
pub fn rotation_to_quat(r: &Matrix3<f64>) -> Vector4<f64> {
    let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let mut q = Vector4::new(uq.w, uq.i, uq.j, uq.k);
    if q[0] < 0.0 {
        q = -q;
    }
    q
}

/// `Σ = R S Sᵀ Rᵀ` for a unit quaternion and strictly positive scales.
pub fn covariance_from(q: &Vector4<f64>, s: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("scales must be positive and finite, got {s:?}")));
    }
    let r = quat_to_rotation(q)?;
    Ok(covariance_from_rotation(&r, s))
}

pub(crate) fn covariance_from_rotation(r: &Matrix3<f64>, s: &Vector3<f64>) -> Matrix3<f64> {
    let m = r * Matrix3::from_diagonal(s);
    let sigma = m * m.transpose();
    // exact symmetry
    (sigma + sigma.transpose()) * 0.5
}

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues exponential map from an axis-angle vector.
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    if theta < 1e-8 {
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation matrix.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Rotation angle in radians, stable near zero.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin = 0.5 * v.norm();
    let cos = 0.5 * (r.trace() - 1.0);
    sin.atan2(cos)
}

/// Closest rotation in the Frobenius sense (polar decomposition via SVD).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let d = (u * vt).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt
}
