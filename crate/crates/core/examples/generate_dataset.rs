//! Generates the synthetic street scene and writes it as a dataset directory
//! that the `geomsplat` binary can train on.
//!
//! cargo run --release --example generate_dataset -- <out_dir> [seed]

use geomsplat::io::{self, DatasetBundle};
use geomsplat::synth::{generate_scene, render_gt_views, simulate_scans, SceneConfig};

fn main() -> geomsplat::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let out = std::path::PathBuf::from(args.get(1).map(String::as_str).unwrap_or("synthetic_dataset"));
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);

    let scene = generate_scene(seed, &SceneConfig::default())?;
    println!("{} surfaces, {} ground-truth gaussians", scene.surfaces.len(), scene.gt_map.len());
    let views = render_gt_views(&scene);
    let scans = simulate_scans(&scene, seed);
    let points: usize = scans.iter().map(|s| s.len()).sum();
    println!("{} frames, {} LiDAR returns", views.len(), points);

    let bundle = DatasetBundle::from_synthetic(&scene, views, scans)?;
    io::write_bundle(&out, &bundle, Vec::new())?;
    println!("wrote {}", out.display());
    Ok(())
}
