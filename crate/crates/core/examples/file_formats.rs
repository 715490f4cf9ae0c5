//! Writes a map and a point cloud in every supported format, reads them back
//! and reports how much survives the round trip.

use geomsplat::geometry::rotation_angle;
use geomsplat::io::{self, ply, poses, Checkpoint, PoseFormat};
use geomsplat::synth::{generate_scene, simulate_scans, SceneConfig};

fn main() -> geomsplat::Result<()> {
    let dir = tempfile::tempdir()?;
    let scene = generate_scene(7, &SceneConfig::default())?;
    let scan = simulate_scans(&scene, 7).swap_remove(0);

    for (name, format) in [("ascii", ply::PlyFormat::Ascii), ("binary", ply::PlyFormat::BinaryLittleEndian)] {
        let path = dir.path().join(format!("scan_{name}.ply"));
        ply::write_ply(&path, &ply::cloud_to_ply(&scan, format))?;
        let back = ply::read_cloud(&path)?;
        let bytes = std::fs::metadata(&path)?.len();
        println!("cloud {name}: {} points, {bytes} bytes, exact {}", back.len(), back == scan);
    }

    let path = dir.path().join("map.ply");
    ply::write_map(&path, &scene.gt_map)?;
    let back = ply::read_map(&path)?;
    let worst = scene
        .gt_map
        .gaussians
        .iter()
        .zip(&back.gaussians)
        .map(|(a, b)| (a.mean - b.mean).amax())
        .fold(0.0, f64::max);
    println!("map ply: {} gaussians, largest mean error {worst:.2e} (f32 storage)", back.len());

    let path = dir.path().join("map.ggs");
    io::write_checkpoint(&path, &Checkpoint { map: scene.gt_map.clone(), optimizer: None })?;
    let back = io::read_checkpoint(&path)?;
    println!("checkpoint: exact {}", back.map == scene.gt_map);

    for format in [PoseFormat::Matrix3x4, PoseFormat::TranslationQuaternion] {
        let text = poses::format_poses(&scene.trajectory, format);
        let back = poses::parse_poses(&text, format)?;
        let worst = scene
            .trajectory
            .iter()
            .zip(&back)
            .map(|(a, b)| rotation_angle(&(a.rotation.transpose() * b.rotation)) + (a.translation - b.translation).norm())
            .fold(0.0, f64::max);
        println!("poses {format:?}: {} poses, worst error {worst:.2e}", back.len());
    }
    Ok(())
}
