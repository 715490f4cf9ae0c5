//! Aligns one simulated LiDAR scan to the accumulated map with
//! confidence-weighted ICP, starting from a perturbed pose.
//!
//! cargo run --release --example align_scan -- [frame] [deg] [meters] [steps]

use geomsplat::geometry::{logit, GaussianMap};
use geomsplat::localize::{perturb_pose, pose_error, weighted_icp_step};
use geomsplat::losses::{asym_sigmoid, LossWeights};
use geomsplat::spatial::NnIndex;
use geomsplat::synth::{generate_scene, simulate_scans, SceneConfig};
use geomsplat::train::{accumulate_lidar, init_map};
use rand::SeedableRng;

fn main() -> geomsplat::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let frame: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let deg = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let meters = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let steps = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(30);

    let scene = generate_scene(7, &SceneConfig::default())?;
    let scans = simulate_scans(&scene, 7);
    let cloud = accumulate_lidar(&scans, &scene.trajectory, Some(0.05))?;
    let mut map: GaussianMap = init_map(&cloud, &Default::default())?;
    let w = LossWeights::default();
    let cloud_index = NnIndex::build(&cloud)?;
    for g in &mut map.gaussians {
        let gamma = asym_sigmoid(cloud_index.nearest(&g.mean).1, w.k, w.d).clamp(1e-6, 1.0 - 1e-6);
        g.gcs_logit = logit(gamma);
    }
    let index = NnIndex::build(&map.means())?;

    let gt = scene.trajectory[frame];
    let mut pose = perturb_pose(&gt, deg, meters, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
    let (r, t) = pose_error(&pose, &gt);
    println!("start: {r:.4} deg {t:.4} m");
    for step in 1..=steps {
        pose = weighted_icp_step(&scans[frame], &map, &index, &pose, 2.0, 0.0)?;
        let (r, t) = pose_error(&pose, &gt);
        println!("{step:3}: {r:.4} deg {t:.4} m");
    }
    Ok(())
}
