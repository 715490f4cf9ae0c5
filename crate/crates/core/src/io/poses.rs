//! Pose lists as text, one pose per line.
//!
//! `Matrix3x4`: the row-major top three rows of the 4×4 sensor-to-world
//! transform (12 numbers). `TranslationQuaternion`: `tx ty tz qx qy qz qw`.
//! Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, quat_to_rotation, rotation_to_quat, Pose};

/// Rotations further than this from orthonormal (Frobenius norm of RᵀR − I)
/// are projected onto the nearest rotation.
pub const ORTHONORMAL_TOL: f64 = 1e-6;
/// Beyond this the matrix is rejected rather than repaired.
pub const REPAIR_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseFormat {
    #[default]
    Matrix3x4,
    TranslationQuaternion,
}

impl PoseFormat {
    fn tokens(self) -> usize {
        match self {
            PoseFormat::Matrix3x4 => 12,
            PoseFormat::TranslationQuaternion => 7,
        }
    }
}

/// Parses a 3×3 rotation candidate, repairing small drift.
pub fn repair_rotation(r: &Matrix3<f64>) -> std::result::Result<Matrix3<f64>, String> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err("non-finite rotation entry".into());
    }
    let drift = (r.transpose() * r - Matrix3::identity()).norm();
    if drift <= ORTHONORMAL_TOL && r.determinant() > 0.0 {
        return Ok(*r);
    }
    if drift > REPAIR_LIMIT || r.determinant() <= 0.0 {
        return Err(format!("rotation block is not close to a rotation (drift {drift:.3e})"));
    }
    Ok(nearest_rotation(r))
}

pub fn parse_poses(text: &str, format: PoseFormat) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::ParseLine { line: i + 1, message };
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("`{t}` is not a number"))))
            .collect::<Result<_>>()?;
        if vals.len() != format.tokens() {
            return Err(err(format!("expected {} values, found {}", format.tokens(), vals.len())));
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let pose = match format {
            PoseFormat::Matrix3x4 => {
                let r = Matrix3::new(vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10]);
                Pose { rotation: repair_rotation(&r).map_err(err)?, translation: Vector3::new(vals[3], vals[7], vals[11]) }
            }
            PoseFormat::TranslationQuaternion => {
                let q = Vector4::new(vals[6], vals[3], vals[4], vals[5]);
                Pose {
                    rotation: quat_to_rotation(&q).map_err(|e| err(e.to_string()))?,
                    translation: Vector3::new(vals[0], vals[1], vals[2]),
                }
            }
        };
        poses.push(pose);
    }
    Ok(poses)
}

/// Shortest round-trip formatting, so parsing the output is lossless.
pub fn format_poses(poses: &[Pose], format: PoseFormat) -> String {
    let mut out = String::new();
    for p in poses {
        let (r, t) = (&p.rotation, &p.translation);
        let vals: Vec<f64> = match format {
            PoseFormat::Matrix3x4 => (0..3).flat_map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]]).collect(),
            PoseFormat::TranslationQuaternion => {
                let q = rotation_to_quat(r);
                vec![t.x, t.y, t.z, q[1], q[2], q[3], q[0]]
            }
        };
        let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" ")).expect("writing to a string");
    }
    out
}

pub fn read_poses(path: &Path, format: PoseFormat) -> Result<Vec<Pose>> {
    parse_poses(&std::fs::read_to_string(path)?, format)
}

pub fn write_poses(path: &Path, poses: &[Pose], format: PoseFormat) -> Result<()> {
    super::write_atomic(path, format_poses(poses, format).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::so3_exp;
    use proptest::prelude::*;

    #[test]
    fn identity_line() {
        let p = parse_poses("1 0 0 0 0 1 0 0 0 0 1 0\n", PoseFormat::Matrix3x4).unwrap();
        assert_eq!(p, vec![Pose::identity()]);
    }

    #[test]
    fn empty_input_is_valid() {
        assert!(parse_poses("", PoseFormat::Matrix3x4).unwrap().is_empty());
        assert!(parse_poses("\n# comment\n\n", PoseFormat::TranslationQuaternion).unwrap().is_empty());
    }

    #[test]
    fn wrong_token_count_names_the_line() {
        let text = "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n";
        match parse_poses(text, PoseFormat::Matrix3x4) {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_poses("1 2 x\n", PoseFormat::Matrix3x4), Err(Error::ParseLine { line: 1, .. })));
    }

    #[test]
    fn drifted_rotation_is_projected() {
        let r = so3_exp(&Vector3::new(0.3, -0.2, 0.9));
        let noisy = r + Matrix3::new(1e-4, -2e-4, 0.0, 3e-4, 0.0, 1e-4, 0.0, -1e-4, 2e-4);
        let mut line = String::new();
        for i in 0..3 {
            write!(line, "{} {} {} {} ", noisy[(i, 0)], noisy[(i, 1)], noisy[(i, 2)], i as f64).unwrap();
        }
        let p = parse_poses(&line, PoseFormat::Matrix3x4).unwrap()[0];
        assert!((p.rotation.determinant() - 1.0).abs() < 1e-12);
        assert!((p.rotation.transpose() * p.rotation - Matrix3::identity()).norm() < 1e-12);
        // polar-decomposition oracle: the orthogonal factor of the noisy matrix
        let svd = noisy.svd(true, true);
        let polar = svd.u.unwrap() * svd.v_t.unwrap();
        assert!((p.rotation - polar).norm() < 1e-12);
    }

    #[test]
    fn reflections_are_rejected() {
        assert!(parse_poses("-1 0 0 0 0 1 0 0 0 0 1 0\n", PoseFormat::Matrix3x4).is_err());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-3.0..3.0f64), prop::array::uniform3(-1e3..1e3f64))
            .prop_map(|(w, t)| Pose { rotation: so3_exp(&Vector3::from(w)), translation: Vector3::from(t) })
    }

    proptest! {
        #[test]
        fn matrix_format_round_trips_exactly(poses in prop::collection::vec(arb_pose(), 0..8)) {
            let back = parse_poses(&format_poses(&poses, PoseFormat::Matrix3x4), PoseFormat::Matrix3x4).unwrap();
            prop_assert_eq!(back, poses);
        }

        #[test]
        fn quaternion_format_round_trips(poses in prop::collection::vec(arb_pose(), 0..8)) {
            let back = parse_poses(&format_poses(&poses, PoseFormat::TranslationQuaternion), PoseFormat::TranslationQuaternion).unwrap();
            for (a, b) in poses.iter().zip(&back) {
                prop_assert!((a.rotation - b.rotation).amax() < 1e-12);
                prop_assert_eq!(a.translation, b.translation);
            }
        }

        #[test]
        fn never_panics_on_garbage(text in "[0-9eE.+\\- \\n#a-z]{0,300}") {
            let _ = parse_poses(&text, PoseFormat::Matrix3x4);
            let _ = parse_poses(&text, PoseFormat::TranslationQuaternion);
        }
    }
}
