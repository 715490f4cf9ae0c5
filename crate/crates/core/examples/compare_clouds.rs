//! Chamfer distance and F-scores between a LiDAR map and noisy copies of it.

use geomsplat::geometry::PointCloud;
use geomsplat::metrics::{geom_report, ThresholdMode};
use geomsplat::synth::{generate_scene, simulate_scans, SceneConfig};
use geomsplat::train::accumulate_lidar;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> geomsplat::Result<()> {
    let scene = generate_scene(7, &SceneConfig::default())?;
    let scans = simulate_scans(&scene, 7);
    let reference = accumulate_lidar(&scans, &scene.trajectory, Some(0.1))?;
    println!("reference cloud: {} points", reference.len());

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    println!("{:>8} {:>10} {:>8} {:>8} {:>8}", "sigma", "chamfer", "F@0.1", "F@0.5", "F@1.0");
    for sigma in [0.0, 0.05, 0.2, 0.5] {
        let noisy = if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).unwrap();
            let pts = reference
                .points
                .iter()
                .map(|p| p + Vector3::from_fn(|_, _| n.sample(&mut rng)))
                .collect();
            PointCloud::new(pts)?
        } else {
            reference.clone()
        };
        let r = geom_report(&noisy, &reference, &[0.1, 0.5, 1.0], ThresholdMode::Squared)?;
        let f = |tau| r.at(tau).map_or(f64::NAN, |s| s.fscore);
        println!("{sigma:8.2} {:10.5} {:8.4} {:8.4} {:8.4}", r.chamfer, f(0.1), f(0.5), f(1.0));
    }
    Ok(())
}
