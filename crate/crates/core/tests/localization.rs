//! Pose refinement and localization on a noise-free fixture. The map holds
//! one Gaussian per LiDAR return of the frames around the query, the query
//! scan is a subset of those returns and the query image is the map's own
//! rendering, so the ground-truth pose is an exact fixed point.

use geomsplat::geometry::{logit, Camera, Gaussian, GaussianMap, PointCloud, Pose};
use geomsplat::imaging::Image;
use geomsplat::localize::{localize, perturb_pose, pose_error, refine_pose_by_render, weighted_icp_step, LocalizeConfig};
use geomsplat::render::render;
use geomsplat::spatial::NnIndex;
use geomsplat::synth::{generate_scene, render_gt_views, simulate_scans, SceneConfig};
use geomsplat::train::{accumulate_lidar, init_map, TrainConfig};
use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAME: usize = 5;

struct Fixture {
    map: GaussianMap,
    camera: Camera,
    gt: Pose,
    image: Image,
    scan: PointCloud,
}

fn fixture() -> Fixture {
    let scene = generate_scene(7, &SceneConfig::default()).unwrap();
    let camera = render_gt_views(&scene)[FRAME].camera;
    let scans = simulate_scans(&scene, 7);
    let gt = scene.trajectory[FRAME];
    let nearby = FRAME - 2..FRAME + 3;
    let cloud = accumulate_lidar(&scans[nearby.clone()], &scene.trajectory[nearby], None).unwrap();
    let mut map = init_map(&cloud, &TrainConfig::default()).unwrap();
    for g in &mut map.gaussians {
        let (_, surface) = scene.surface_distance(&g.mean);
        g.color = scene.surfaces[surface].color_at(&g.mean);
        g.opacity_logit = logit(0.9);
        g.gcs_logit = logit(0.95);
    }
    map.background = scene.gt_map.background;
    let image = render(&map, &camera, &gt).rgb;
    Fixture { map, camera, gt, image, scan: scans[FRAME].clone() }
}

#[test]
fn zero_refinement_steps_is_the_identity() {
    let f = fixture();
    let init = perturb_pose(&f.gt, 1.0, 0.05, &mut ChaCha8Rng::seed_from_u64(1));
    let r = refine_pose_by_render(&f.map, &f.camera, &f.image, &init, 0, &LocalizeConfig::default()).unwrap();
    assert_eq!(r.pose, init);
    assert_eq!(r.losses.len(), 1);
    assert_eq!(r.best_loss, r.initial_loss);
}

#[test]
fn refinement_from_a_small_error_improves_the_pose() {
    let f = fixture();
    let config = LocalizeConfig::default();
    for seed in 0..3 {
        let init = perturb_pose(&f.gt, 1.0, 0.05, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = refine_pose_by_render(&f.map, &f.camera, &f.image, &init, 20, &config).unwrap();
        assert!(r.completed);
        assert!(r.best_loss < r.initial_loss, "{:?}", r.losses);
        let (r0, t0) = pose_error(&init, &f.gt);
        let (r1, t1) = pose_error(&r.pose, &f.gt);
        assert!(r1 + t1 < r0 + t0, "seed {seed}: {r0:.4}°/{t0:.4} m -> {r1:.4}°/{t1:.4} m");
    }
}

#[test]
fn ground_truth_start_stays_put() {
    let f = fixture();
    let (pose, trace) = localize(&f.map, &f.scan, &f.image, &f.camera, &f.gt, Some(&f.gt), &LocalizeConfig::default()).unwrap();
    let (r, t) = pose_error(&pose, &f.gt);
    assert!(r <= 1e-4 && t <= 1e-4, "{r}° {t} m");
    assert!(trace.converged);
}

#[test]
fn trace_errors_do_not_grow_after_the_first_round() {
    let f = fixture();
    let config = LocalizeConfig { outer_iterations: 8, ..Default::default() };
    let init = perturb_pose(&f.gt, 3.0, 0.3, &mut ChaCha8Rng::seed_from_u64(4));
    let (_, trace) = localize(&f.map, &f.scan, &f.image, &f.camera, &init, Some(&f.gt), &config).unwrap();
    let errs: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.rot_err_deg.unwrap(), r.trans_err_m.unwrap())).collect();
    assert!(trace.records.len() <= config.outer_iterations);
    for w in errs.windows(2) {
        assert!(w[1].0 <= w[0].0 + 1e-9 && w[1].1 <= w[0].1 + 1e-9, "{errs:?}");
    }
    let last = errs.last().unwrap();
    assert!(last.0 < 3.0 && last.1 < 0.3, "{errs:?}");
}

/// Map with a true copy of the points and a ghost copy displaced by
/// `offset`; the scan sees only the true copy.
fn ghosted_map(points: &[Vector3<f64>], offset: Vector3<f64>, true_gamma: f64) -> GaussianMap {
    let g = |p: Vector3<f64>, gamma: f64| {
        Gaussian::new(p, Vector4::new(1.0, 0.0, 0.0, 0.0), Vector3::repeat(0.05), Vector3::repeat(0.5), 0.5, gamma).unwrap()
    };
    let gs = points
        .iter()
        .map(|p| g(*p, true_gamma))
        .chain(points.iter().map(|p| g(p + offset, 0.5)))
        .collect();
    GaussianMap::new(gs, Vector3::zeros())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn raising_confidence_of_true_matches_never_hurts(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vector3<f64>> = (0..150)
            .map(|_| Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-1.0..3.0)))
            .collect();
        let offset = Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(-0.2..0.2));
        let truth = Pose::identity();
        let scan = PointCloud::new(points.clone()).unwrap();
        let init = perturb_pose(&truth, 2.0, 0.2, &mut rng);
        let mut last = f64::INFINITY;
        for gamma in [0.5, 0.7, 0.9, 0.99, 0.9999] {
            let map = ghosted_map(&points, offset, gamma);
            let index = NnIndex::build(&map.means()).unwrap();
            let mut pose = init;
            for _ in 0..30 {
                pose = weighted_icp_step(&scan, &map, &index, &pose, 1.0, 0.0).unwrap();
            }
            let (r, t) = pose_error(&pose, &truth);
            let err = r.to_radians() * 5.0 + t;
            prop_assert!(err <= last + 1e-9, "gamma {}: {} after {}", gamma, err, last);
            last = err;
        }
    }
}

