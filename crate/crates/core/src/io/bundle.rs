//! A dataset directory: camera, posed images and posed LiDAR scans.
//!
//! ```text
//! manifest.json      source, camera, counts
//! poses.txt          camera poses, one 3×4 matrix per line
//! scan_poses.txt     LiDAR poses
//! images/NNNNNN.gfi  exact float image (plus a .png preview)
//! scans/NNNNNN.ply   sensor-frame points
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, PointCloud, Pose};
use crate::synth::{SyntheticScene, View};

use super::images::{encode_float_image, encode_png, read_image};
use super::ply::{cloud_to_ply, encode_ply, read_cloud, PlyFormat};
use super::poses::{format_poses, read_poses, PoseFormat};
use super::reports::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic { seed: u64 },
    External { description: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    source: DatasetSource,
    camera: Camera,
    images: usize,
    scans: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub source: DatasetSource,
    pub camera: Camera,
    pub views: Vec<View>,
    pub scans: Vec<PointCloud>,
    pub scan_poses: Vec<Pose>,
}

impl DatasetBundle {
    /// Views and scans of a generated scene; scans share the camera poses.
    pub fn from_synthetic(scene: &SyntheticScene, views: Vec<View>, scans: Vec<PointCloud>) -> Result<Self> {
        let b = DatasetBundle {
            source: DatasetSource::Synthetic { seed: scene.seed },
            camera: scene.camera,
            views,
            scans,
            scan_poses: scene.trajectory.clone(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.scans.len() != self.scan_poses.len() {
            return Err(Error::invalid(format!("{} scans but {} scan poses", self.scans.len(), self.scan_poses.len())));
        }
        for (i, v) in self.views.iter().enumerate() {
            if v.camera != self.camera {
                return Err(Error::invalid(format!("view {i} uses a different camera")));
            }
            if v.image.width != self.camera.width || v.image.height != self.camera.height {
                return Err(Error::invalid(format!("view {i}: image size does not match the camera")));
            }
        }
        Ok(())
    }
}

fn frame_name(i: usize, ext: &str) -> String {
    format!("{i:06}.{ext}")
}

pub const MANIFEST: &str = "manifest.json";

/// In-memory files of a dataset directory, keyed by relative path.
pub fn bundle_files(bundle: &DatasetBundle) -> Result<Vec<(String, Vec<u8>)>> {
    bundle.validate()?;
    let manifest = Manifest {
        source: bundle.source.clone(),
        camera: bundle.camera,
        images: bundle.views.len(),
        scans: bundle.scans.len(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    json.push(b'\n');
    let poses: Vec<Pose> = bundle.views.iter().map(|v| v.pose).collect();
    let mut files = vec![
        (MANIFEST.to_string(), json),
        ("poses.txt".to_string(), format_poses(&poses, PoseFormat::Matrix3x4).into_bytes()),
        ("scan_poses.txt".to_string(), format_poses(&bundle.scan_poses, PoseFormat::Matrix3x4).into_bytes()),
    ];
    for (i, v) in bundle.views.iter().enumerate() {
        files.push((format!("images/{}", frame_name(i, "gfi")), encode_float_image(&v.image)));
        files.push((format!("images/{}", frame_name(i, "png")), encode_png(&v.image)?));
    }
    for (i, s) in bundle.scans.iter().enumerate() {
        files.push((format!("scans/{}", frame_name(i, "ply")), encode_ply(&cloud_to_ply(s, PlyFormat::BinaryLittleEndian))));
    }
    Ok(files)
}

/// Writes the dataset plus any `extra` files in one atomic step. An existing
/// target is replaced only if it is itself a dataset directory.
pub fn write_bundle(dir: &Path, bundle: &DatasetBundle, extra: Vec<(String, Vec<u8>)>) -> Result<()> {
    let mut files = bundle_files(bundle)?;
    files.extend(extra);
    super::write_dir_atomic(dir, MANIFEST, &files)
}

pub fn read_bundle(dir: &Path) -> Result<DatasetBundle> {
    let m: Manifest = read_json(&dir.join(MANIFEST))?;
    let poses = read_poses(&dir.join("poses.txt"), PoseFormat::Matrix3x4)?;
    if poses.len() != m.images {
        return Err(Error::invalid(format!("manifest lists {} images but poses.txt has {}", m.images, poses.len())));
    }
    let scan_poses = read_poses(&dir.join("scan_poses.txt"), PoseFormat::Matrix3x4)?;
    let views = poses
        .into_iter()
        .enumerate()
        .map(|(i, pose)| {
            let gfi = dir.join("images").join(frame_name(i, "gfi"));
            let path = if gfi.is_file() { gfi } else { dir.join("images").join(frame_name(i, "png")) };
            Ok(View { image: read_image(&path)?, camera: m.camera, pose })
        })
        .collect::<Result<Vec<_>>>()?;
    let scans = (0..m.scans)
        .map(|i| read_cloud(&dir.join("scans").join(frame_name(i, "ply"))))
        .collect::<Result<Vec<_>>>()?;
    let b = DatasetBundle { source: m.source, camera: m.camera, views, scans, scan_poses };
    b.validate()?;
    Ok(b)
}
