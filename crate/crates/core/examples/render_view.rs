//! Renders the ground-truth map of a generated scene from one trajectory
//! pose and writes the image, the ground truth and the final transmittance.
//!
//! cargo run --release --example render_view -- [frame] [out_prefix]

use geomsplat::geometry::Pose;
use geomsplat::imaging::{psnr, Image};
use geomsplat::io::write_image;
use geomsplat::render::render;
use geomsplat::synth::{generate_scene, render_gt_views, SceneConfig};
use nalgebra::Vector3;

fn main() -> geomsplat::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let frame: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let prefix = args.get(2).cloned().unwrap_or_else(|| "view".into());

    let scene = generate_scene(7, &SceneConfig::default())?;
    let views = render_gt_views(&scene);
    let view = &views[frame.min(views.len() - 1)];

    let start = std::time::Instant::now();
    let out = render(&scene.gt_map, &view.camera, &view.pose);
    println!("rendered {} gaussians at {}×{} in {:.1?}", scene.gt_map.len(), out.width(), out.height(), start.elapsed());
    println!("psnr against the dataset image: {:.2} dB", psnr(&out.rgb, &view.image)?);
    let nudged = view.pose.compose(&Pose::from_translation(Vector3::new(0.1, 0.0, 0.0)));
    let shifted = render(&scene.gt_map, &view.camera, &nudged);
    println!("psnr after a 0.1 m sideways shift: {:.2} dB", psnr(&shifted.rgb, &view.image)?);

    let mut transmittance = Image::new(out.width(), out.height());
    for y in 0..out.height() {
        for x in 0..out.width() {
            let t = out.final_transmittance(x, y);
            transmittance.set_pixel(x, y, &Vector3::repeat(t));
        }
    }
    write_image(format!("{prefix}_render.png").as_ref(), &out.rgb)?;
    write_image(format!("{prefix}_gt.png").as_ref(), &view.image)?;
    write_image(format!("{prefix}_transmittance.png").as_ref(), &transmittance)?;
    println!("wrote {prefix}_render.png, {prefix}_gt.png, {prefix}_transmittance.png");
    Ok(())
}
