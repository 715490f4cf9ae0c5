//! Trains a map on a generated scene and prints how the confidence scores
//! separate surface Gaussians from backdrop ones.
//!
//! cargo run --release --example train_synthetic -- [seed] [iterations] [lambda_prob] [backdrop_seeds] [checkpoint_out]

use geomsplat::losses::asym_sigmoid;
use geomsplat::synth::{generate_scene, render_gt_views, simulate_scans, SceneConfig, SurfaceKind};
use geomsplat::train::{accumulate_lidar, train_on_cloud, TrainConfig};

fn main() -> geomsplat::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let iterations = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(600);
    let lambda_prob = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let backdrop_seeds = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2000);

    let scene = generate_scene(seed, &SceneConfig::default())?;
    let scans = simulate_scans(&scene, seed);
    let views = render_gt_views(&scene);
    let mut config = TrainConfig {
        iterations,
        backdrop_seeds,
        background: scene.gt_map.background.into(),
        seed,
        ..Default::default()
    };
    config.losses.lambda_prob = lambda_prob;
    // the base position rate assumes a 30k-iteration schedule
    config.learning_rates.position *= (30_000.0 / iterations as f64).max(1.0);
    let cloud = accumulate_lidar(&scans, &scene.trajectory, Some(config.voxel_size))?;
    println!("accumulated cloud: {} points", cloud.len());

    let start = std::time::Instant::now();
    let out = train_on_cloud(&views, &cloud, &config)?;
    println!("trained {} iterations in {:.1?}", iterations, start.elapsed());
    let m = &out.report.final_metrics;
    println!("gaussians {}  psnr {:.2} dB  ssim {:.3}", m.gaussians, m.psnr, m.ssim);
    println!("chamfer {:.4}", m.geometry.chamfer);
    for f in &m.geometry.fscores {
        println!("  f-score@{}: {:.4} (p1 {:.4}, p2 {:.4})", f.tau, f.fscore, f.precision_1, f.precision_2);
    }

    let index = geomsplat::spatial::NnIndex::build(&cloud)?;
    let (mut surf, mut surf_hi, mut far, mut far_lo, mut gap) = (0, 0, 0, 0, 0.0);
    for g in &out.map.gaussians {
        let near_structure = scene
            .surfaces
            .iter()
            .filter(|s| s.kind != SurfaceKind::Backdrop)
            .map(|s| s.distance(&g.mean))
            .fold(f64::INFINITY, f64::min);
        let d = index.nearest(&g.mean).1;
        gap += (g.gcs() - asym_sigmoid(d, config.losses.k, config.losses.d)).abs();
        if near_structure < 0.1 {
            surf += 1;
            surf_hi += (g.gcs() > 0.9) as usize;
        } else if near_structure > 2.0 {
            far += 1;
            far_lo += (g.gcs() < 0.1) as usize;
        }
    }
    println!("surface gaussians with confidence > 0.9: {surf_hi}/{surf}");
    println!("backdrop gaussians with confidence < 0.1: {far_lo}/{far}");
    println!("mean |confidence - target|: {:.4}", gap / out.map.len() as f64);
    if let Some(path) = args.get(5) {
        let ck = geomsplat::io::Checkpoint { map: out.map, optimizer: None };
        geomsplat::io::write_checkpoint(std::path::Path::new(path), &ck)?;
        println!("wrote {path}");
    }
    Ok(())
}
