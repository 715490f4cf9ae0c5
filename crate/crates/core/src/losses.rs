//! Training losses and their analytic gradients.
//!
//! Every per-Gaussian term takes the nearest reference point of each
//! Gaussian as a frozen input (`targets`), so gradients never differentiate
//! through the nearest-neighbour argmin. The `*_loss` wrappers look the
//! targets up in an [`NnIndex`] first.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{layout, GaussianMap, MapGradient};
use crate::imaging::{ssim_with_grad, Image};
use crate::spatial::NnIndex;

/// Upper clamp on γ inside the probabilistic distance term.
pub const GCS_CLAMP: f64 = 1.0 - 1e-4;

/// How the point-to-cloud distance fed to the confidence terms is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Squared Euclidean distance (m²).
    #[default]
    Squared,
    /// Plain Euclidean distance (m).
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// D-SSIM share of the photometric term.
    pub lambda_rgb: f64,
    pub lambda_geom: f64,
    pub lambda_prob: f64,
    pub lambda_scale: f64,
    /// Reserved; the perceptual term always evaluates to zero.
    pub lambda_perc: f64,
    /// Steepness of the confidence target sigmoid.
    pub k: f64,
    /// Midpoint of the confidence target sigmoid, in `distance_mode` units.
    pub d: f64,
    /// Per-axis scale above which the scale hinge activates (m).
    pub scale_max: f64,
    pub distance_mode: DistanceMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_rgb: 0.2,
            lambda_geom: 0.1,
            lambda_prob: 0.1,
            lambda_scale: 100.0,
            lambda_perc: 0.5,
            k: 20.0,
            d: 0.9,
            scale_max: 0.5,
            distance_mode: DistanceMode::Squared,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda_rgb", self.lambda_rgb),
            ("lambda_geom", self.lambda_geom),
            ("lambda_prob", self.lambda_prob),
            ("lambda_scale", self.lambda_scale),
            ("lambda_perc", self.lambda_perc),
            ("k", self.k),
            ("d", self.d),
            ("scale_max", self.scale_max),
        ];
        for (key, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config {
                    key: format!("losses.{key}"),
                    message: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if self.lambda_rgb > 1.0 {
            return Err(Error::Config {
                key: "losses.lambda_rgb".into(),
                message: "must lie in [0, 1]".into(),
            });
        }
        Ok(())
    }
}

/// `1 / (1 + exp(k (x − d)))`, evaluated without overflow.
pub fn asym_sigmoid(x: f64, k: f64, d: f64) -> f64 {
    let z = k * (x - d);
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// A scalar loss term and its gradient over the map parameters.
#[derive(Debug, Clone)]
pub struct Term {
    pub value: f64,
    pub grad: MapGradient,
}

impl Term {
    pub fn zero(n: usize) -> Self {
        Term { value: 0.0, grad: MapGradient::zeros(n) }
    }
}

/// Nearest reference point of every Gaussian mean.
pub fn nearest_targets(map: &GaussianMap, index: &NnIndex) -> Vec<Vector3<f64>> {
    map.gaussians
        .par_iter()
        .map(|g| *index.point(index.nearest(&g.mean).0))
        .collect()
}

/// Distance between a mean and its target, and its gradient w.r.t. the mean.
fn distance(mode: DistanceMode, mean: &Vector3<f64>, target: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let diff = mean - target;
    match mode {
        DistanceMode::Squared => (diff.norm_squared(), 2.0 * diff),
        DistanceMode::Euclidean => {
            let n = diff.norm();
            if n > 0.0 {
                (n, diff / n)
            } else {
                (0.0, Vector3::zeros())
            }
        }
    }
}

/// Per-Gaussian distance to its nearest reference point.
pub fn target_distances(map: &GaussianMap, targets: &[Vector3<f64>], mode: DistanceMode) -> Vec<f64> {
    map.gaussians
        .iter()
        .zip(targets)
        .map(|(g, t)| distance(mode, &g.mean, t).0)
        .collect()
}

fn check_targets(map: &GaussianMap, targets: &[Vector3<f64>]) -> Result<()> {
    if map.is_empty() {
        return Err(Error::invalid("loss over an empty map"));
    }
    if targets.len() != map.len() {
        return Err(Error::invalid(format!(
            "{} targets for {} Gaussians",
            targets.len(),
            map.len()
        )));
    }
    Ok(())
}

/// Mean squared gap between each γ and its sigmoid target.
pub fn geom_loss(map: &GaussianMap, index: &NnIndex, w: &LossWeights) -> Result<Term> {
    if map.is_empty() {
        return Err(Error::invalid("loss over an empty map"));
    }
    geom_loss_frozen(map, &nearest_targets(map, index), w)
}

pub fn geom_loss_frozen(map: &GaussianMap, targets: &[Vector3<f64>], w: &LossWeights) -> Result<Term> {
    check_targets(map, targets)?;
    let n = map.len() as f64;
    let mut term = Term::zero(map.len());
    for (i, (g, t)) in map.gaussians.iter().zip(targets).enumerate() {
        let (d, _) = distance(w.distance_mode, &g.mean, t);
        let gamma = g.gcs();
        let r = gamma - asym_sigmoid(d, w.k, w.d);
        term.value += r * r;
        term.grad.params[i][layout::GCS] = 2.0 * r / n * gamma * (1.0 - gamma);
    }
    term.value /= n;
    Ok(term)
}

/// Confidence-weighted distance term `mean(ln(1−γ) + d/(1−γ))`.
pub fn prob_loss(map: &GaussianMap, index: &NnIndex, w: &LossWeights) -> Result<Term> {
    if map.is_empty() {
        return Err(Error::invalid("loss over an empty map"));
    }
    prob_loss_frozen(map, &nearest_targets(map, index), w)
}

pub fn prob_loss_frozen(map: &GaussianMap, targets: &[Vector3<f64>], w: &LossWeights) -> Result<Term> {
    check_targets(map, targets)?;
    let n = map.len() as f64;
    let mut term = Term::zero(map.len());
    for (i, (g, t)) in map.gaussians.iter().zip(targets).enumerate() {
        let (d, dd_dmean) = distance(w.distance_mode, &g.mean, t);
        let raw = g.gcs();
        let clamped = raw > GCS_CLAMP;
        let s = 1.0 - raw.min(GCS_CLAMP);
        term.value += s.ln() + d / s;
        let p = &mut term.grad.params[i];
        for k in 0..3 {
            p[layout::MEAN + k] = dd_dmean[k] / (s * n);
        }
        if !clamped {
            let d_gamma = (-1.0 / s + d / (s * s)) / n;
            p[layout::GCS] = d_gamma * raw * (1.0 - raw);
        }
    }
    term.value /= n;
    Ok(term)
}

/// Hinge on per-axis scale: `mean_i mean_axis max(0, s − s_max)²`.
pub fn scale_loss(map: &GaussianMap, w: &LossWeights) -> Result<Term> {
    if map.is_empty() {
        return Err(Error::invalid("loss over an empty map"));
    }
    let n = map.len() as f64;
    let mut term = Term::zero(map.len());
    for (i, g) in map.gaussians.iter().enumerate() {
        let s = g.scale();
        for k in 0..3 {
            let excess = s[k] - w.scale_max;
            if excess > 0.0 {
                term.value += excess * excess / 3.0;
                term.grad.params[i][layout::LOG_SCALE + k] = 2.0 * excess * s[k] / (3.0 * n);
            }
        }
    }
    term.value /= n;
    Ok(term)
}

/// Photometric loss value with per-pixel gradients.
#[derive(Debug, Clone)]
pub struct RgbLoss {
    pub value: f64,
    pub l1: f64,
    pub dssim: f64,
    /// Gradient w.r.t. the raw rendered image (through the D-SSIM part).
    pub grad_rendered: Image,
    /// Gradient w.r.t. the appearance-adjusted image (through the L1 part).
    pub grad_adjusted: Image,
}

impl RgbLoss {
    /// Total gradient w.r.t. the rendered image when no appearance model is used.
    pub fn combined_grad(&self) -> Image {
        let mut g = self.grad_rendered.clone();
        for (a, b) in g.data.iter_mut().zip(&self.grad_adjusted.data) {
            *a += b;
        }
        g
    }
}

/// `(1−λ)·L1(adjusted, gt) + λ·(1 − SSIM(rendered, gt))/2`.
pub fn rgb_loss(rendered: &Image, adjusted: &Image, gt: &Image, lambda: f64) -> Result<RgbLoss> {
    rendered.check_shape(gt)?;
    adjusted.check_shape(gt)?;
    let count = gt.data.len() as f64;
    let mut l1 = 0.0;
    let mut grad_adjusted = Image::new(gt.width, gt.height);
    for ((g, a), t) in grad_adjusted.data.iter_mut().zip(&adjusted.data).zip(&gt.data) {
        let r = a - t;
        l1 += r.abs();
        *g = if r > 0.0 {
            (1.0 - lambda) / count
        } else if r < 0.0 {
            -(1.0 - lambda) / count
        } else {
            0.0
        };
    }
    l1 /= count;
    let (dssim, grad_rendered) = if lambda > 0.0 {
        let (s, mut grad) = ssim_with_grad(rendered, gt)?;
        for v in &mut grad.data {
            *v *= -0.5 * lambda;
        }
        ((1.0 - s) / 2.0, grad)
    } else {
        (0.0, Image::new(gt.width, gt.height))
    };
    Ok(RgbLoss {
        value: (1.0 - lambda) * l1 + lambda * dssim,
        l1,
        dssim,
        grad_rendered,
        grad_adjusted,
    })
}

/// Per-image affine color correction `a ⊙ I + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub gain: Vector3<f64>,
    pub bias: Vector3<f64>,
}

impl Default for Appearance {
    fn default() -> Self {
        Appearance { gain: Vector3::repeat(1.0), bias: Vector3::zeros() }
    }
}

impl Appearance {
    pub fn apply(&self, img: &Image) -> Image {
        let mut out = img.clone();
        for px in out.data.chunks_exact_mut(3) {
            for c in 0..3 {
                px[c] = self.gain[c] * px[c] + self.bias[c];
            }
        }
        out
    }

    /// Pulls a gradient w.r.t. the adjusted image back to the rendered image
    /// and to `(gain, bias)`.
    pub fn backward(&self, rendered: &Image, grad_adjusted: &Image) -> (Image, Appearance) {
        let mut g_img = grad_adjusted.clone();
        let mut g = Appearance { gain: Vector3::zeros(), bias: Vector3::zeros() };
        for (gp, rp) in g_img.data.chunks_exact_mut(3).zip(rendered.data.chunks_exact(3)) {
            for c in 0..3 {
                g.gain[c] += gp[c] * rp[c];
                g.bias[c] += gp[c];
                gp[c] *= self.gain[c];
            }
        }
        (g_img, g)
    }
}

/// All weighted terms of one training step.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub rgb: f64,
    pub geom: f64,
    pub prob: f64,
    pub scale: f64,
    pub total: f64,
    pub rgb_grad: MapGradient,
    pub geom_grad: MapGradient,
    pub prob_grad: MapGradient,
    pub scale_grad: MapGradient,
    /// Weighted sum of the per-term gradients.
    pub grad: MapGradient,
}

/// Combines the terms with the configured weights. The perceptual term is
/// not implemented and contributes zero.
pub fn total_loss(rgb: Term, geom: Term, prob: Term, scale: Term, w: &LossWeights) -> Result<LossBreakdown> {
    let n = rgb.grad.len();
    if geom.grad.len() != n || prob.grad.len() != n || scale.grad.len() != n {
        return Err(Error::invalid("loss terms computed on maps of different sizes"));
    }
    let mut grad = rgb.grad.clone();
    grad.add_scaled(&geom.grad, w.lambda_geom);
    grad.add_scaled(&prob.grad, w.lambda_prob);
    grad.add_scaled(&scale.grad, w.lambda_scale);
    Ok(LossBreakdown {
        rgb: rgb.value,
        geom: geom.value,
        prob: prob.value,
        scale: scale.value,
        total: rgb.value + w.lambda_geom * geom.value + w.lambda_prob * prob.value + w.lambda_scale * scale.value,
        rgb_grad: rgb.grad,
        geom_grad: geom.grad,
        prob_grad: prob.grad,
        scale_grad: scale.grad,
        grad,
    })
}
