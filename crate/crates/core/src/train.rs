//! LiDAR accumulation, map initialization and the mapping optimizer.

use nalgebra::{Vector2, Vector3, Vector4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    layout, Gaussian, GaussianMap, MapGradient, PointCloud, Pose, PARAMS_PER_GAUSSIAN,
};
use crate::imaging::Image;
use crate::losses::{self, Appearance, LossBreakdown, LossWeights, Term};
use crate::metrics::{self, GeomReport, ThresholdMode};
use crate::render::{render, render_backward};
use crate::spatial::NnIndex;
use crate::synth::View;

pub const INIT_SCALE_MIN: f64 = 0.01;
pub const INIT_SCALE_MAX: f64 = 0.5;
pub const INIT_OPACITY: f64 = 0.1;
pub const INIT_GCS: f64 = 0.5;
pub const INIT_COLOR: f64 = 0.5;
/// Neighbours averaged for the initial isotropic scale.
pub const INIT_NEIGHBOURS: usize = 3;
/// Scale divisor applied to both children of a split.
pub const SPLIT_SHRINK: f64 = 1.6;

/// Adam with one moment pair per parameter slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<const N: usize> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<[f64; N]>,
    pub v: Vec<[f64; N]>,
}

impl<const N: usize> Adam<N> {
    pub fn new(rows: usize, eps: f64) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps,
            step: 0,
            m: vec![[0.0; N]; rows],
            v: vec![[0.0; N]; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len()
    }

    /// One update `p -= lr · m̂ / (√v̂ + ε)` over every row.
    pub fn update(&mut self, params: &mut [[f64; N]], grads: &[[f64; N]], lr: &[f64; N]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        params
            .par_iter_mut()
            .zip(grads.par_iter())
            .zip(self.m.par_iter_mut().zip(self.v.par_iter_mut()))
            .for_each(|((p, g), (m, v))| {
                for k in 0..N {
                    m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                    v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                    p[k] -= lr[k] * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
                }
            });
    }

    pub fn push_zero(&mut self) {
        self.m.push([0.0; N]);
        self.v.push([0.0; N]);
    }

    pub fn retain(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.m.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.v.retain(|_| *it.next().unwrap());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position: f64,
    pub rotation: f64,
    pub log_scale: f64,
    pub color: f64,
    pub opacity: f64,
    pub gcs: f64,
    pub appearance: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-5,
            rotation: 1e-3,
            log_scale: 5e-3,
            color: 2.5e-3,
            opacity: 5e-2,
            gcs: 5e-2,
            appearance: 1e-3,
        }
    }
}

impl LearningRates {
    /// Per-slot rates with the position rate multiplied by `position_scale`.
    pub fn per_slot(&self, position_scale: f64) -> [f64; PARAMS_PER_GAUSSIAN] {
        let mut lr = [0.0; PARAMS_PER_GAUSSIAN];
        lr[layout::MEAN..layout::MEAN + 3].fill(self.position * position_scale);
        lr[layout::ROTATION..layout::ROTATION + 4].fill(self.rotation);
        lr[layout::LOG_SCALE..layout::LOG_SCALE + 3].fill(self.log_scale);
        lr[layout::COLOR..layout::COLOR + 3].fill(self.color);
        lr[layout::OPACITY] = self.opacity;
        lr[layout::GCS] = self.gcs;
        lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rates: LearningRates,
    /// Multiply the position rate by the radius of the camera centres.
    pub scale_position_lr_by_extent: bool,
    pub adam_eps: f64,
    pub densify_from: usize,
    pub densify_until: usize,
    /// Zero disables densification and pruning.
    pub densify_interval: usize,
    /// Mean screen-space positional gradient (normalized device units).
    pub densify_grad_threshold: f64,
    /// Split when the largest scale exceeds this multiple of the cloud's mean NN spacing.
    pub split_scale_factor: f64,
    pub prune_opacity: f64,
    pub max_gaussians: usize,
    /// Voxel size for downsampling the accumulated cloud; zero keeps every point.
    pub voxel_size: f64,
    /// Learn a per-view affine color correction.
    pub appearance: bool,
    /// Every n-th view is held out from training (0 keeps all).
    pub holdout_every: usize,
    /// Extra Gaussians seeded on a far sphere along training-view rays.
    pub backdrop_seeds: usize,
    pub backdrop_radius: f64,
    pub background: [f64; 3],
    pub seed: u64,
    #[serde(skip)]
    pub losses: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            learning_rates: LearningRates::default(),
            scale_position_lr_by_extent: true,
            adam_eps: 1e-15,
            densify_from: 100,
            densify_until: 800,
            densify_interval: 100,
            densify_grad_threshold: 2e-4,
            split_scale_factor: 2.0,
            prune_opacity: 0.005,
            max_gaussians: 200_000,
            voxel_size: 0.05,
            appearance: false,
            holdout_every: 8,
            backdrop_seeds: 0,
            backdrop_radius: 45.0,
            background: [0.0; 3],
            seed: 0,
            losses: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, message: &str| Error::Config { key: format!("train.{key}"), message: message.into() };
        if self.iterations == 0 {
            return Err(err("iterations", "must be positive"));
        }
        let lr = &self.learning_rates;
        for (k, v) in [
            ("position", lr.position),
            ("rotation", lr.rotation),
            ("log_scale", lr.log_scale),
            ("color", lr.color),
            ("opacity", lr.opacity),
            ("gcs", lr.gcs),
            ("appearance", lr.appearance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err(&format!("learning_rates.{k}"), "must be positive"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(err("adam_eps", "must be positive"));
        }
        if !(self.voxel_size >= 0.0) {
            return Err(err("voxel_size", "must be non-negative"));
        }
        if !(self.backdrop_radius > 0.0) {
            return Err(err("backdrop_radius", "must be positive"));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(err("background", "components must lie in [0, 1]"));
        }
        self.losses.validate()
    }
}

/// Union of the scans mapped into the world frame, optionally voxel-downsampled.
pub fn accumulate_lidar(scans: &[PointCloud], poses: &[Pose], voxel: Option<f64>) -> Result<PointCloud> {
    if scans.is_empty() || scans.len() != poses.len() {
        return Err(Error::invalid(format!(
            "need one pose per scan and at least one scan, got {} scans and {} poses",
            scans.len(),
            poses.len()
        )));
    }
    let mut points = Vec::with_capacity(scans.iter().map(PointCloud::len).sum());
    for (s, p) in scans.iter().zip(poses) {
        points.extend(s.points.iter().map(|q| p.apply(q)));
    }
    let cloud = PointCloud::new(points)?;
    match voxel {
        Some(v) if v > 0.0 => cloud.voxel_downsample(v),
        _ => Ok(cloud),
    }
}

/// Mean distance from each point to its `k` nearest other points.
fn neighbour_spacing(index: &NnIndex, k: usize) -> Vec<f64> {
    index
        .points()
        .par_iter()
        .map(|p| {
            let near = index.k_nearest(p, k + 1);
            let others: Vec<f64> = near.iter().skip(1).map(|&(_, d)| d.sqrt()).collect();
            if others.is_empty() {
                f64::INFINITY
            } else {
                others.iter().sum::<f64>() / others.len() as f64
            }
        })
        .collect()
}

/// Mean distance from each point to its nearest other point.
pub fn mean_nn_spacing(cloud: &PointCloud) -> Result<f64> {
    let index = NnIndex::build(cloud)?;
    let s: Vec<f64> = neighbour_spacing(&index, 1).into_iter().filter(|v| v.is_finite()).collect();
    Ok(if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 })
}

/// One isotropic Gaussian per point.
pub fn init_map(cloud: &PointCloud, config: &TrainConfig) -> Result<GaussianMap> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot initialize a map from an empty cloud"));
    }
    let index = NnIndex::build(cloud)?;
    let spacing = neighbour_spacing(&index, INIT_NEIGHBOURS);
    let gaussians = cloud
        .points
        .iter()
        .zip(spacing)
        .map(|(p, s)| {
            Gaussian::new(
                *p,
                Vector4::new(1.0, 0.0, 0.0, 0.0),
                Vector3::repeat(s.clamp(INIT_SCALE_MIN, INIT_SCALE_MAX)),
                Vector3::repeat(INIT_COLOR),
                INIT_OPACITY,
                INIT_GCS,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let b = config.background;
    Ok(GaussianMap::new(gaussians, Vector3::new(b[0], b[1], b[2])))
}

/// Appends Gaussians on a sphere of `radius` around the mean camera centre,
/// along random pixel rays of the given views, colored by those pixels.
pub fn seed_backdrop(map: &mut GaussianMap, views: &[View], count: usize, radius: f64, rng: &mut impl Rng) -> Result<()> {
    if count == 0 || views.is_empty() {
        return Ok(());
    }
    let centre = views.iter().map(|v| v.pose.translation).sum::<Vector3<f64>>() / views.len() as f64;
    for _ in 0..count {
        let v = &views[rng.random_range(0..views.len())];
        let cam = &v.camera;
        let (px, py) = (rng.random_range(0..cam.width), rng.random_range(0..cam.height));
        let ray_cam = Vector3::new((px as f64 + 0.5 - cam.cx) / cam.fx, (py as f64 + 0.5 - cam.cy) / cam.fy, 1.0);
        let dir = (v.pose.rotation * ray_cam).normalize();
        // intersect the ray with the sphere around `centre`
        let oc = v.pose.translation - centre;
        let b = oc.dot(&dir);
        let t = -b + (b * b - oc.norm_squared() + radius * radius).max(0.0).sqrt();
        let p = v.pose.translation + dir * t;
        let footprint = 2.0 * t / cam.fx;
        map.gaussians.push(Gaussian::new(
            p,
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            Vector3::repeat(footprint.clamp(INIT_SCALE_MIN, INIT_SCALE_MAX)),
            v.image.pixel(px, py).map(|c| c.clamp(0.0, 1.0)),
            INIT_OPACITY,
            INIT_GCS,
        )?);
    }
    Ok(())
}

/// Screen-space gradient statistics accumulated between densification steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyStats {
    pub grad_norm_sum: Vec<f64>,
    pub visible_count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats { grad_norm_sum: vec![0.0; n], visible_count: vec![0; n] }
    }

    pub fn average(&self, i: usize) -> f64 {
        if self.visible_count[i] == 0 {
            0.0
        } else {
            self.grad_norm_sum[i] / self.visible_count[i] as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DensifyOutcome {
    pub iteration: usize,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Clones small high-gradient Gaussians, splits large ones and prunes
/// near-transparent ones. Split and cloned children keep the parent's γ.
/// `adam`, when given, is kept aligned with the map.
pub fn densify_and_prune(
    map: &mut GaussianMap,
    stats: &DensifyStats,
    config: &TrainConfig,
    split_scale: f64,
    adam: Option<&mut Adam<PARAMS_PER_GAUSSIAN>>,
    rng: &mut impl Rng,
) -> DensifyOutcome {
    let n = map.len();
    let mut out = DensifyOutcome::default();
    let mut added = Vec::new();
    let mut room = config.max_gaussians.saturating_sub(n);
    for i in 0..n {
        if room == 0 {
            break;
        }
        if stats.average(i) < config.densify_grad_threshold || stats.visible_count[i] == 0 {
            continue;
        }
        let parent = map.gaussians[i];
        let scale = parent.scale();
        if scale.max() > split_scale {
            let rot = crate::geometry::rotation_from_quat_normalized(&parent.rotation);
            let mut children = [parent; 2];
            for c in &mut children {
                let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                c.mean = parent.mean + rot * scale.component_mul(&z);
                c.log_scale = parent.log_scale.map(|l| l - SPLIT_SHRINK.ln());
            }
            map.gaussians[i] = children[0];
            added.push(children[1]);
            out.split += 1;
        } else {
            added.push(parent);
            out.cloned += 1;
        }
        room -= 1;
    }
    let mut adam = adam;
    for g in added {
        map.gaussians.push(g);
        if let Some(a) = adam.as_deref_mut() {
            a.push_zero();
        }
    }
    let keep: Vec<bool> = map.gaussians.iter().map(|g| g.opacity() >= config.prune_opacity).collect();
    out.pruned = keep.iter().filter(|k| !**k).count();
    if out.pruned > 0 {
        let mut it = keep.iter();
        map.gaussians.retain(|_| *it.next().unwrap());
        if let Some(a) = adam {
            a.retain(&keep);
        }
    }
    out
}

/// Loss values of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub rgb: f64,
    pub geom: f64,
    pub prob: f64,
    pub scale: f64,
    pub total: f64,
}

impl LossRecord {
    fn from(iteration: usize, b: &LossBreakdown) -> Self {
        LossRecord { iteration, rgb: b.rgb, geom: b.geom, prob: b.prob, scale: b.scale, total: b.total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub psnr: f64,
    pub ssim: f64,
    /// Number of held-out views the photometric scores were computed on;
    /// zero means they fell back to the training views.
    pub holdout_views: usize,
    pub gaussians: usize,
    /// Gaussian means against the accumulated cloud.
    pub geometry: GeomReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<LossRecord>,
    pub densify: Vec<DensifyOutcome>,
    pub final_metrics: FinalMetrics,
}

/// State captured when training aborts on a non-finite value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticDump {
    pub iteration: usize,
    pub view: usize,
    pub record: LossRecord,
    pub gaussians: usize,
    /// Indices of Gaussians with non-finite parameters or gradients (first 32).
    pub bad_gaussians: Vec<usize>,
    pub max_abs_gradient: f64,
}

/// Everything produced by a training run, including optimizer state.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub map: GaussianMap,
    pub report: TrainReport,
    pub optimizer: Adam<PARAMS_PER_GAUSSIAN>,
    pub appearance: Vec<Appearance>,
    pub cloud: PointCloud,
}

/// Trains on the views with the cloud accumulated from `scans` and `poses`.
pub fn train(views: &[View], scans: &[PointCloud], poses: &[Pose], config: &TrainConfig) -> Result<(GaussianMap, TrainReport)> {
    config.validate()?;
    let voxel = (config.voxel_size > 0.0).then_some(config.voxel_size);
    let cloud = accumulate_lidar(scans, poses, voxel)?;
    let out = train_on_cloud(views, &cloud, config)?;
    Ok((out.map, out.report))
}

/// Indices of training and held-out views.
pub fn split_views(n: usize, holdout_every: usize) -> (Vec<usize>, Vec<usize>) {
    if holdout_every == 0 || n < 2 {
        return ((0..n).collect(), Vec::new());
    }
    (0..n).partition(|i| i % holdout_every != 0)
}

fn camera_extent(views: &[View]) -> f64 {
    let c = views.iter().map(|v| v.pose.translation).sum::<Vector3<f64>>() / views.len() as f64;
    let r = views.iter().map(|v| (v.pose.translation - c).norm()).fold(0.0, f64::max);
    // a single camera still moves Gaussians at the base rate
    (1.1 * r).max(1.0)
}

pub fn train_on_cloud(views: &[View], cloud: &PointCloud, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if views.is_empty() {
        return Err(Error::invalid("training needs at least one view"));
    }
    for (i, v) in views.iter().enumerate() {
        v.camera.validate()?;
        if v.image.width != v.camera.width || v.image.height != v.camera.height {
            return Err(Error::invalid(format!("view {i}: image size does not match its camera")));
        }
    }
    let (train_ids, holdout_ids) = split_views(views.len(), config.holdout_every);
    let train_views: Vec<View> = train_ids.iter().map(|&i| views[i].clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let w = config.losses;

    let index = NnIndex::build(cloud)?;
    let mut map = init_map(cloud, config)?;
    seed_backdrop(&mut map, &train_views, config.backdrop_seeds, config.backdrop_radius, &mut rng)?;
    let split_scale = config.split_scale_factor * mean_nn_spacing(cloud)?;

    let pos_scale = if config.scale_position_lr_by_extent { camera_extent(&train_views) } else { 1.0 };
    let lr = config.learning_rates.per_slot(pos_scale);
    let mut adam = Adam::<PARAMS_PER_GAUSSIAN>::new(map.len(), config.adam_eps);
    let mut appearance = vec![Appearance::default(); train_views.len()];
    let mut app_adam = vec![Adam::<6>::new(1, config.adam_eps); train_views.len()];
    let app_lr = [config.learning_rates.appearance; 6];

    let mut stats = DensifyStats::new(map.len());
    let mut history = Vec::with_capacity(config.iterations);
    let mut densify = Vec::new();
    let mut order: Vec<usize> = Vec::new();

    for it in 1..=config.iterations {
        if order.is_empty() {
            order = (0..train_views.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let vi = order.pop().expect("refilled above");
        let view = &train_views[vi];

        let fwd = render(&map, &view.camera, &view.pose);
        let (rgb_value, upstream, app_grad) = if config.appearance {
            let adjusted = appearance[vi].apply(&fwd.rgb);
            let l = losses::rgb_loss(&fwd.rgb, &adjusted, &view.image, w.lambda_rgb)?;
            let (through, g) = appearance[vi].backward(&fwd.rgb, &l.grad_adjusted);
            let mut up = l.grad_rendered;
            for (a, b) in up.data.iter_mut().zip(&through.data) {
                *a += b;
            }
            (l.value, up, Some(g))
        } else {
            let l = losses::rgb_loss(&fwd.rgb, &fwd.rgb, &view.image, w.lambda_rgb)?;
            (l.value, l.combined_grad(), None)
        };
        let grads = render_backward(&map, &view.camera, &view.pose, &fwd, &upstream, false)?;

        let targets = losses::nearest_targets(&map, &index);
        let geom = if w.lambda_geom > 0.0 { losses::geom_loss_frozen(&map, &targets, &w)? } else { Term::zero(map.len()) };
        let prob = if w.lambda_prob > 0.0 { losses::prob_loss_frozen(&map, &targets, &w)? } else { Term::zero(map.len()) };
        let scale = if w.lambda_scale > 0.0 { losses::scale_loss(&map, &w)? } else { Term::zero(map.len()) };
        let rgb = Term { value: rgb_value, grad: grads.params.clone() };
        let breakdown = losses::total_loss(rgb, geom, prob, scale, &w)?;
        let record = LossRecord::from(it, &breakdown);

        if !breakdown.total.is_finite() || !breakdown.grad.is_finite() {
            return Err(non_finite(it, vi, record, &map, &breakdown.grad));
        }

        let mut params: Vec<[f64; PARAMS_PER_GAUSSIAN]> = map.gaussians.iter().map(Gaussian::to_params).collect();
        adam.update(&mut params, &breakdown.grad.params, &lr);
        for (g, p) in map.gaussians.iter_mut().zip(&params) {
            *g = Gaussian::from_params(p);
            g.project_to_valid();
        }
        if let Some(g) = app_grad {
            let mut row = [appearance_row(&appearance[vi])];
            app_adam[vi].update(&mut row, &[appearance_row(&g)], &app_lr);
            appearance[vi] = appearance_from_row(&row[0]);
        }

        let (half_w, half_h) = (view.camera.width as f64 / 2.0, view.camera.height as f64 / 2.0);
        for (i, (g2, vis)) in grads.mean2d.iter().zip(&grads.visible).enumerate() {
            if *vis {
                stats.grad_norm_sum[i] += Vector2::new(g2.x * half_w, g2.y * half_h).norm();
                stats.visible_count[i] += 1;
            }
        }
        history.push(record);

        if config.densify_interval > 0
            && it >= config.densify_from
            && it <= config.densify_until
            && it % config.densify_interval == 0
        {
            let mut o = densify_and_prune(&mut map, &stats, config, split_scale, Some(&mut adam), &mut rng);
            o.iteration = it;
            log::debug!("iteration {it}: cloned {} split {} pruned {}", o.cloned, o.split, o.pruned);
            densify.push(o);
            stats = DensifyStats::new(map.len());
            if map.is_empty() {
                return Err(Error::NonFinite {
                    iteration: it,
                    what: "map size (every Gaussian was pruned)".into(),
                    dump: None,
                });
            }
        }
        if it % 100 == 0 || it == config.iterations {
            log::info!(
                "iteration {it}/{}: total {:.5} rgb {:.5} geom {:.5} prob {:.5} gaussians {}",
                config.iterations,
                record.total,
                record.rgb,
                record.geom,
                record.prob,
                map.len()
            );
        }
    }

    let eval_ids = if holdout_ids.is_empty() { train_ids.clone() } else { holdout_ids.clone() };
    let rendered: Vec<Image> = eval_ids
        .iter()
        .map(|&i| render(&map, &views[i].camera, &views[i].pose).rgb)
        .collect();
    let photo = metrics::photo_report(rendered.iter().zip(eval_ids.iter().map(|&i| &views[i].image)))?;
    let geometry = metrics::geom_report(&map.means(), cloud, &metrics::DEFAULT_THRESHOLDS, ThresholdMode::Squared)?;
    let report = TrainReport {
        history,
        densify,
        final_metrics: FinalMetrics {
            psnr: photo.psnr,
            ssim: photo.ssim,
            holdout_views: holdout_ids.len(),
            gaussians: map.len(),
            geometry,
        },
    };
    Ok(TrainOutcome { map, report, optimizer: adam, appearance, cloud: cloud.clone() })
}

fn appearance_row(a: &Appearance) -> [f64; 6] {
    [a.gain.x, a.gain.y, a.gain.z, a.bias.x, a.bias.y, a.bias.z]
}

fn appearance_from_row(r: &[f64; 6]) -> Appearance {
    Appearance { gain: Vector3::new(r[0], r[1], r[2]), bias: Vector3::new(r[3], r[4], r[5]) }
}

fn non_finite(iteration: usize, view: usize, record: LossRecord, map: &GaussianMap, grad: &MapGradient) -> Error {
    let bad_gaussians = map
        .gaussians
        .iter()
        .zip(&grad.params)
        .enumerate()
        .filter(|(_, (g, p))| !g.is_finite() || p.iter().any(|v| !v.is_finite()))
        .map(|(i, _)| i)
        .take(32)
        .collect();
    Error::NonFinite {
        iteration,
        what: "loss".into(),
        dump: Some(Box::new(DiagnosticDump {
            iteration,
            view,
            record,
            gaussians: map.len(),
            bad_gaussians,
            max_abs_gradient: grad.max_abs(),
        })),
    }
}
