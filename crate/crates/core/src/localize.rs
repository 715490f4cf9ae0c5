//! Localization of a query scan and image against a trained map: confidence
//! weighted ICP alternated with photometric pose refinement.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, so3_exp, Camera, GaussianMap, PointCloud, Pose};
use crate::imaging::Image;
use crate::losses::rgb_loss;
use crate::render::{render, render_backward};
use crate::spatial::NnIndex;
use crate::train::Adam;

pub const MIN_CORRESPONDENCES: usize = 3;
pub const MIN_TOTAL_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhotometricLoss {
    L1,
    #[default]
    L1Dssim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub outer_iterations: usize,
    pub refine_steps: usize,
    /// Alternate with weighted ICP; when false only the image is used.
    pub use_icp: bool,
    /// Correspondences farther than this are ignored (m).
    pub icp_cutoff: f64,
    /// Fraction of the worst residuals discarded before solving.
    pub icp_trim: f64,
    pub lr_rotation: f64,
    pub lr_translation: f64,
    pub adam_eps: f64,
    pub loss: PhotometricLoss,
    /// D-SSIM share when `loss` includes it.
    pub lambda_dssim: f64,
    /// Stop once an outer iteration moves the pose less than this (rad).
    pub tol_rotation: f64,
    /// Stop once an outer iteration moves the pose less than this (m).
    pub tol_translation: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            outer_iterations: 20,
            refine_steps: 20,
            use_icp: true,
            icp_cutoff: 2.0,
            icp_trim: 0.0,
            lr_rotation: 1e-3,
            lr_translation: 1e-2,
            adam_eps: 1e-8,
            loss: PhotometricLoss::L1Dssim,
            lambda_dssim: 0.2,
            tol_rotation: 1e-4,
            tol_translation: 1e-4,
        }
    }
}

impl LocalizeConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, message: &str| Error::Config { key: format!("localize.{key}"), message: message.into() };
        if self.outer_iterations == 0 {
            return Err(err("outer_iterations", "must be at least 1"));
        }
        if !(self.icp_cutoff > 0.0) {
            return Err(err("icp_cutoff", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.icp_trim) {
            return Err(err("icp_trim", "must lie in [0, 1)"));
        }
        if !(self.lr_rotation > 0.0 && self.lr_translation > 0.0 && self.adam_eps > 0.0) {
            return Err(err("lr_rotation", "learning rates and epsilon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(err("lambda_dssim", "must lie in [0, 1]"));
        }
        if !(self.tol_rotation >= 0.0 && self.tol_translation >= 0.0) {
            return Err(err("tol_rotation", "tolerances must be non-negative"));
        }
        Ok(())
    }
}

/// Rotation error (degrees) and translation error (meters) of `est` against `gt`.
pub fn pose_error(est: &Pose, gt: &Pose) -> (f64, f64) {
    let r = gt.rotation.transpose() * est.rotation;
    (rotation_angle(&r).to_degrees(), (est.translation - gt.translation).norm())
}

/// Rotates `pose` about its own origin by `deg` around a random axis and
/// shifts it by `meters` in a random direction.
pub fn perturb_pose(pose: &Pose, deg: f64, meters: f64, rng: &mut impl Rng) -> Pose {
    let axis = Vector3::from(UnitSphere.sample(rng));
    let dir = Vector3::from(UnitSphere.sample(rng));
    Pose {
        rotation: so3_exp(&(axis * deg.to_radians())) * pose.rotation,
        translation: pose.translation + dir * meters,
    }
    .renormalized()
}

/// Closed-form weighted rigid alignment: the pose `T` minimizing
/// `Σ wᵢ ‖T sᵢ − tᵢ‖²`.
pub fn weighted_kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>], weights: &[f64]) -> Result<Pose> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::invalid("point and weight counts differ"));
    }
    if src.len() < MIN_CORRESPONDENCES {
        return Err(Error::DegenerateRegistration(format!(
            "{} correspondences, need at least {MIN_CORRESPONDENCES}",
            src.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total >= MIN_TOTAL_WEIGHT) {
        return Err(Error::DegenerateRegistration(format!("total weight {total:e} too small")));
    }
    let mut sc = Vector3::zeros();
    let mut tc = Vector3::zeros();
    for ((s, t), w) in src.iter().zip(dst).zip(weights) {
        sc += s * *w;
        tc += t * *w;
    }
    sc /= total;
    tc /= total;
    let mut h = Matrix3::zeros();
    for ((s, t), w) in src.iter().zip(dst).zip(weights) {
        h += (s - sc) * (t - tc).transpose() * *w;
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(Pose { rotation: r, translation: tc - r * sc })
}

/// Scan-to-map correspondences under `pose`: (world point, matched mean, γ).
pub fn correspondences(
    scan: &PointCloud,
    map: &GaussianMap,
    index: &NnIndex,
    pose: &Pose,
    cutoff: f64,
    trim: f64,
) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vec<f64>) {
    let world: Vec<Vector3<f64>> = scan.points.iter().map(|p| pose.apply(p)).collect();
    let hits = index.nearest_batch(&world);
    let mut pairs: Vec<(f64, usize, usize)> = hits
        .iter()
        .enumerate()
        .filter(|(_, (_, d))| *d <= cutoff * cutoff)
        .map(|(i, &(j, d))| (d, i, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = pairs.len() - (pairs.len() as f64 * trim).floor() as usize;
    pairs.truncate(keep);
    pairs.sort_by_key(|p| p.1);
    let src = pairs.iter().map(|p| world[p.1]).collect();
    let dst = pairs.iter().map(|p| *index.point(p.2)).collect();
    let w = pairs.iter().map(|p| map.gaussians[p.2].gcs()).collect();
    (src, dst, w)
}

/// One ICP iteration weighting each correspondence by the matched
/// Gaussian's confidence. `index` must be built over `map.means()`.
pub fn weighted_icp_step(
    scan: &PointCloud,
    map: &GaussianMap,
    index: &NnIndex,
    init: &Pose,
    cutoff: f64,
    trim: f64,
) -> Result<Pose> {
    if scan.is_empty() {
        return Err(Error::invalid("empty scan"));
    }
    if index.len() != map.len() {
        return Err(Error::ContractViolation("index is not built over this map's means".into()));
    }
    let (src, dst, w) = correspondences(scan, map, index, init, cutoff, trim);
    let delta = weighted_kabsch(&src, &dst, &w)?;
    Ok(delta.compose(init).renormalized())
}

/// Photometric loss and its gradient w.r.t. the rendered image.
fn photometric(img: &Image, gt: &Image, config: &LocalizeConfig) -> Result<(f64, Image)> {
    let lambda = match config.loss {
        PhotometricLoss::L1 => 0.0,
        PhotometricLoss::L1Dssim => config.lambda_dssim,
    };
    let l = rgb_loss(img, img, gt, lambda)?;
    Ok((l.value, l.combined_grad()))
}

pub fn photometric_residual(map: &GaussianMap, cam: &Camera, gt: &Image, pose: &Pose, config: &LocalizeConfig) -> Result<f64> {
    Ok(photometric(&render(map, cam, pose).rgb, gt, config)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pose: Pose,
    pub initial_loss: f64,
    pub best_loss: f64,
    /// Loss at each evaluated pose, starting with the initial one.
    pub losses: Vec<f64>,
    /// False when a non-finite loss or gradient stopped the descent early.
    pub completed: bool,
}

/// Adam descent on the left-perturbation tangent of the pose. Returns the
/// lowest-loss pose seen, including the initial one.
pub fn refine_pose_by_render(
    map: &GaussianMap,
    cam: &Camera,
    gt: &Image,
    pose: &Pose,
    steps: usize,
    config: &LocalizeConfig,
) -> Result<Refinement> {
    if gt.width != cam.width || gt.height != cam.height {
        return Err(Error::invalid("query image does not match the camera"));
    }
    let lr = [
        config.lr_rotation,
        config.lr_rotation,
        config.lr_rotation,
        config.lr_translation,
        config.lr_translation,
        config.lr_translation,
    ];
    let mut adam = Adam::<6>::new(1, config.adam_eps);
    let mut current = *pose;
    let mut best = (*pose, f64::INFINITY);
    let mut losses = Vec::with_capacity(steps + 1);
    let mut completed = true;
    for step in 0..=steps {
        let fwd = render(map, cam, &current);
        let (loss, up) = photometric(&fwd.rgb, gt, config)?;
        if !loss.is_finite() {
            log::warn!("non-finite photometric loss at refinement step {step}");
            completed = false;
            break;
        }
        losses.push(loss);
        if loss < best.1 {
            best = (current, loss);
        }
        if step == steps {
            break;
        }
        let g = render_backward(map, cam, &current, &fwd, &up, true)?.pose.expect("pose gradient requested");
        let grad = [g.rotation.x, g.rotation.y, g.rotation.z, g.translation.x, g.translation.y, g.translation.z];
        if grad.iter().any(|v| !v.is_finite()) {
            log::warn!("non-finite pose gradient at refinement step {step}");
            completed = false;
            break;
        }
        let mut row = [[0.0; 6]];
        adam.update(&mut row, &[grad], &lr);
        let d = row[0];
        current = current
            .retract(&Vector3::new(d[0], d[1], d[2]), &Vector3::new(d[3], d[4], d[5]))
            .renormalized();
    }
    if losses.is_empty() {
        return Err(Error::NonFinite { iteration: 0, what: "photometric loss at the initial pose".into(), dump: None });
    }
    Ok(Refinement { pose: best.0, initial_loss: losses[0], best_loss: best.1, losses, completed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    #[serde(skip)]
    pub pose: Pose,
    pub rot_err_deg: Option<f64>,
    pub trans_err_m: Option<f64>,
    pub photometric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeTrace {
    pub initial: TraceRecord,
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

/// Alternates one weighted ICP step with `refine_steps` photometric steps
/// for up to `outer_iterations` rounds. `scan` is in the sensor frame.
#[allow(clippy::too_many_arguments)]
pub fn localize(
    map: &GaussianMap,
    scan: &PointCloud,
    gt_image: &Image,
    cam: &Camera,
    init: &Pose,
    gt_pose: Option<&Pose>,
    config: &LocalizeConfig,
) -> Result<(Pose, LocalizeTrace)> {
    config.validate()?;
    cam.validate()?;
    if map.is_empty() {
        return Err(Error::invalid("cannot localize against an empty map"));
    }
    let index = NnIndex::build(&map.means())?;
    let record = |iteration: usize, pose: Pose, photometric: f64| {
        let err = gt_pose.map(|g| pose_error(&pose, g));
        TraceRecord {
            iteration,
            pose,
            rot_err_deg: err.map(|e| e.0),
            trans_err_m: err.map(|e| e.1),
            photometric,
        }
    };
    let initial = record(0, *init, photometric_residual(map, cam, gt_image, init, config)?);
    let mut pose = *init;
    let mut records = Vec::with_capacity(config.outer_iterations);
    let mut converged = false;
    for it in 1..=config.outer_iterations {
        let before = pose;
        let mut icp_error = None;
        if config.use_icp {
            match weighted_icp_step(scan, map, &index, &pose, config.icp_cutoff, config.icp_trim) {
                Ok(p) => pose = p,
                Err(e @ Error::DegenerateRegistration(_)) => icp_error = Some(e),
                Err(e) => return Err(e),
            }
        }
        let refined = refine_pose_by_render(map, cam, gt_image, &pose, config.refine_steps, config)?;
        if let Some(e) = icp_error {
            if !(refined.best_loss < refined.initial_loss) {
                return Err(e);
            }
            log::warn!("iteration {it}: {e}; continuing with image refinement");
        }
        pose = refined.pose;
        records.push(record(it, pose, refined.best_loss));
        let step = before.inverse().compose(&pose);
        if rotation_angle(&step.rotation) < config.tol_rotation && step.translation.norm() < config.tol_translation {
            converged = true;
            break;
        }
    }
    Ok((pose, LocalizeTrace { initial, records, converged }))
}
