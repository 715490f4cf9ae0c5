//! CPU tile rasterizer for Gaussian maps and its analytic backward pass.
//!
//! Forward: every Gaussian is projected with the local affine (EWA)
//! approximation of the pinhole model, binned into 16×16 pixel tiles,
//! depth-sorted per tile and alpha-composited front to back.
//!
//! Backward: gradients of a scalar image loss flow back through the
//! compositing, the 2D Gaussian falloff, the projection and the covariance
//! factorization to every stored parameter, and optionally to a 6-D
//! left-perturbation of the camera pose.
//!
//! The pose passed to [`render`] is camera-to-world: the camera looks down
//! its +z axis, with +x to the right and +y down the image.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    covariance_from_rotation, layout, rotation_from_quat_normalized, rotation_vjp, skew, Camera,
    Gaussian, GaussianMap, MapGradient, Pose,
};
use crate::imaging::Image;

pub const TILE_SIZE: usize = 16;
/// Isotropic screen-space regularizer added to every projected covariance (px²).
pub const COV2D_REGULARIZER: f64 = 0.3;
pub const ALPHA_MAX: f64 = 0.99;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Tiles are assigned out to the radius where a splat's alpha falls below
/// this value, so skipped evaluations never matter numerically.
pub const ALPHA_NEGLIGIBLE: f64 = 1e-12;
/// Off-axis limit for evaluating the projection Jacobian, as a multiple of
/// the image half-extent.
pub const JACOBIAN_FOV_MARGIN: f64 = 1.3;
/// Culling footprint in standard deviations.
pub const CULL_SIGMAS: f64 = 3.0;

/// A Gaussian projected into screen space.
#[derive(Debug, Clone)]
pub struct Splat2D {
    pub index: usize,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    conic: Matrix2<f64>,
    opacity: f64,
    /// Mahalanobis distance² beyond which alpha is negligible.
    reach2: f64,
    color: Vector3<f64>,
    p_cam: Vector3<f64>,
    ratio: Vector2<f64>,
    ratio_clamped: [bool; 2],
    jac: Matrix2x3<f64>,
    cov_cam: Matrix3<f64>,
    cov_world: Matrix3<f64>,
    rot: Matrix3<f64>,
    scale: Vector3<f64>,
    /// Inclusive tile range `[tx0, ty0, tx1, ty1]`.
    tiles: [usize; 4],
}

/// Projects one Gaussian; `None` when it is culled.
pub fn project_gaussian(g: &Gaussian, cam: &Camera, pose: &Pose) -> Option<Splat2D> {
    project_indexed(0, g, cam, pose)
}

fn project_indexed(index: usize, g: &Gaussian, cam: &Camera, pose: &Pose) -> Option<Splat2D> {
    let w = pose.rotation.transpose();
    let p = w * (g.mean - pose.translation);
    let z = p.z;
    if !(z > cam.near && z < cam.far) {
        return None;
    }
    let (fx, fy) = (cam.fx, cam.fy);
    let mean2d = Vector2::new(fx * p.x / z + cam.cx, fy * p.y / z + cam.cy);
    // the affine approximation is evaluated no further off-axis than a
    // margin around the image, so off-screen splats cannot blow up
    let lim_x = JACOBIAN_FOV_MARGIN * cam.cx.max(cam.width as f64 - cam.cx) / fx;
    let lim_y = JACOBIAN_FOV_MARGIN * cam.cy.max(cam.height as f64 - cam.cy) / fy;
    let (rx, ry) = (p.x / z, p.y / z);
    let ratio = Vector2::new(rx.clamp(-lim_x, lim_x), ry.clamp(-lim_y, lim_y));
    let ratio_clamped = [ratio.x != rx, ratio.y != ry];
    let jac = Matrix2x3::new(fx / z, 0.0, -fx * ratio.x / z, 0.0, fy / z, -fy * ratio.y / z);
    let rot = rotation_from_quat_normalized(&g.rotation);
    let scale = g.scale();
    let cov_world = covariance_from_rotation(&rot, &scale);
    let cov_cam = w * cov_world * w.transpose();
    let cov = jac * cov_cam * jac.transpose();
    let cov2d = Matrix2::new(
        cov[(0, 0)] + COV2D_REGULARIZER,
        0.5 * (cov[(0, 1)] + cov[(1, 0)]),
        0.5 * (cov[(0, 1)] + cov[(1, 0)]),
        cov[(1, 1)] + COV2D_REGULARIZER,
    );
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(1, 0)];
    if !(det > 0.0) || !mean2d.iter().all(|v| v.is_finite()) {
        return None;
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;

    let (sx, sy) = (cov2d[(0, 0)].sqrt(), cov2d[(1, 1)].sqrt());
    let (wf, hf) = (cam.width as f64, cam.height as f64);
    if mean2d.x + CULL_SIGMAS * sx < 0.0
        || mean2d.x - CULL_SIGMAS * sx > wf
        || mean2d.y + CULL_SIGMAS * sy < 0.0
        || mean2d.y - CULL_SIGMAS * sy > hf
    {
        return None;
    }

    let opacity = g.opacity();
    let reach2 = 2.0 * (opacity / ALPHA_NEGLIGIBLE).ln();
    if !(reach2 > 0.0) {
        return None;
    }
    let reach = reach2.sqrt();
    // pixel i has its center at i + 0.5
    let px0 = (mean2d.x - reach * sx - 0.5).ceil().max(0.0);
    let px1 = (mean2d.x + reach * sx - 0.5).floor().min(wf - 1.0);
    let py0 = (mean2d.y - reach * sy - 0.5).ceil().max(0.0);
    let py1 = (mean2d.y + reach * sy - 0.5).floor().min(hf - 1.0);
    if px0 > px1 || py0 > py1 {
        return None;
    }
    let tiles = [
        px0 as usize / TILE_SIZE,
        py0 as usize / TILE_SIZE,
        px1 as usize / TILE_SIZE,
        py1 as usize / TILE_SIZE,
    ];
    Some(Splat2D {
        index,
        mean2d,
        cov2d,
        depth: z,
        conic,
        opacity,
        reach2,
        color: g.color,
        p_cam: p,
        ratio,
        ratio_clamped,
        jac,
        cov_cam,
        cov_world,
        rot,
        scale,
        tiles,
    })
}

impl Splat2D {
    /// Unclamped alpha at pixel position `pix` and the Gaussian falloff there.
    #[inline]
    fn alpha_at(&self, pix: &Vector2<f64>) -> (f64, f64) {
        let d = pix - self.mean2d;
        let m = d.dot(&(self.conic * d));
        let g = (-0.5 * m).exp();
        (self.opacity * g, g)
    }
}

/// One entry of a pixel's front-to-back contributor list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    /// Position in the tile's depth-sorted splat list.
    slot: u32,
    pub alpha: f64,
    /// Transmittance in front of this contributor.
    pub transmittance: f64,
    clamped: bool,
}

#[derive(Debug, Clone)]
struct TileState {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    /// Splat positions sorted front to back.
    splats: Vec<u32>,
    /// Per-pixel ranges into `contribs`, row-major within the tile.
    ranges: Vec<(u32, u32)>,
    contribs: Vec<Contribution>,
    final_t: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ForwardState {
    splats: Vec<Splat2D>,
    tiles: Vec<TileState>,
    tiles_x: usize,
    fingerprint: u64,
    camera: Camera,
    pose: Pose,
}

/// Output of the forward pass, retaining everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct RenderedImage {
    pub rgb: Image,
    /// Accumulated opacity per pixel, row-major.
    pub alpha: Vec<f64>,
    state: ForwardState,
}

impl RenderedImage {
    pub fn width(&self) -> usize {
        self.rgb.width
    }

    pub fn height(&self) -> usize {
        self.rgb.height
    }

    fn tile_of(&self, x: usize, y: usize) -> (&TileState, usize) {
        let t = &self.state.tiles[(y / TILE_SIZE) * self.state.tiles_x + x / TILE_SIZE];
        (t, (y - t.y0) * t.w + (x - t.x0))
    }

    /// `(gaussian index, blend weight T·α)` for each contributor of a pixel,
    /// front to back.
    pub fn contributors(&self, x: usize, y: usize) -> Vec<(usize, f64)> {
        let (t, local) = self.tile_of(x, y);
        let (s, e) = t.ranges[local];
        t.contribs[s as usize..e as usize]
            .iter()
            .map(|c| (self.state.splats[t.splats[c.slot as usize] as usize].index, c.transmittance * c.alpha))
            .collect()
    }

    pub fn final_transmittance(&self, x: usize, y: usize) -> f64 {
        let (t, local) = self.tile_of(x, y);
        t.final_t[local]
    }

    /// True when no pixel terminated early (with a 10× margin) and no alpha
    /// hit the clamp, so the image is a smooth function of every parameter.
    pub fn is_smooth(&self) -> bool {
        self.state.tiles.iter().all(|t| {
            t.final_t.iter().all(|&v| v >= 10.0 * TRANSMITTANCE_MIN) && t.contribs.iter().all(|c| !c.clamped)
        })
    }

    /// Projected splats that survived culling.
    pub fn splats(&self) -> &[Splat2D] {
        &self.state.splats
    }

    /// True when Gaussian `i` survived culling.
    pub fn visible_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for s in &self.state.splats {
            mask[s.index] = true;
        }
        mask
    }
}

/// Gradients of a scalar image loss.
#[derive(Debug, Clone)]
pub struct RenderGradients {
    pub params: MapGradient,
    /// Screen-space gradient of each projected mean (pixels); zero when culled.
    pub mean2d: Vec<Vector2<f64>>,
    pub visible: Vec<bool>,
    pub pose: Option<PoseGradient>,
}

/// Gradient with respect to the left-perturbation `R' = exp(ω) R`, `t' = t + v`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseGradient {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

pub fn render(map: &GaussianMap, cam: &Camera, pose: &Pose) -> RenderedImage {
    let splats: Vec<Splat2D> = map
        .gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| project_indexed(i, g, cam, pose))
        .collect();

    let tiles_x = cam.width.div_ceil(TILE_SIZE);
    let tiles_y = cam.height.div_ceil(TILE_SIZE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        for ty in s.tiles[1]..=s.tiles[3] {
            for tx in s.tiles[0]..=s.tiles[2] {
                bins[ty * tiles_x + tx].push(si as u32);
            }
        }
    }

    let tiles: Vec<TileState> = bins
        .into_par_iter()
        .enumerate()
        .map(|(ti, mut list)| {
            list.sort_by(|&a, &b| {
                let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
                sa.depth.total_cmp(&sb.depth).then(sa.index.cmp(&sb.index))
            });
            composite_tile(ti, tiles_x, cam, &splats, list)
        })
        .collect();

    let mut rgb = Image::new(cam.width, cam.height);
    let mut alpha = vec![0.0; cam.width * cam.height];
    for t in &tiles {
        for ly in 0..t.h {
            for lx in 0..t.w {
                let local = ly * t.w + lx;
                let (x, y) = (t.x0 + lx, t.y0 + ly);
                let (s, e) = t.ranges[local];
                let mut c = map.background * t.final_t[local];
                for k in &t.contribs[s as usize..e as usize] {
                    c += splats[t.splats[k.slot as usize] as usize].color * (k.transmittance * k.alpha);
                }
                rgb.set_pixel(x, y, &c);
                alpha[y * cam.width + x] = 1.0 - t.final_t[local];
            }
        }
    }

    RenderedImage {
        rgb,
        alpha,
        state: ForwardState {
            splats,
            tiles,
            tiles_x,
            fingerprint: map.fingerprint(),
            camera: *cam,
            pose: *pose,
        },
    }
}

/// Side of the pixel blocks a tile is subdivided into for candidate lookup.
const BLOCK: usize = 4;

fn composite_tile(
    ti: usize,
    tiles_x: usize,
    cam: &Camera,
    splats: &[Splat2D],
    list: Vec<u32>,
) -> TileState {
    let x0 = (ti % tiles_x) * TILE_SIZE;
    let y0 = (ti / tiles_x) * TILE_SIZE;
    let w = TILE_SIZE.min(cam.width - x0);
    let h = TILE_SIZE.min(cam.height - y0);
    let mut ranges = Vec::with_capacity(w * h);
    let mut contribs = Vec::new();
    let mut final_t = Vec::with_capacity(w * h);
    // contiguous copy of what the inner loop reads
    let packed: Vec<[f64; 7]> = list
        .iter()
        .map(|&si| {
            let s = &splats[si as usize];
            [s.mean2d.x, s.mean2d.y, s.conic[(0, 0)], s.conic[(0, 1)], s.conic[(1, 1)], s.opacity, s.reach2]
        })
        .collect();
    // depth-ordered candidates per block of pixels, from each splat's reach box
    let blocks_x = w.div_ceil(BLOCK);
    let mut blocks: Vec<Vec<u32>> = vec![Vec::new(); blocks_x * h.div_ceil(BLOCK)];
    for (slot, &si) in list.iter().enumerate() {
        let s = &splats[si as usize];
        let rx = (s.reach2 * s.cov2d[(0, 0)]).sqrt();
        let ry = (s.reach2 * s.cov2d[(1, 1)]).sqrt();
        let bx0 = ((s.mean2d.x - rx - 0.5).ceil() - x0 as f64).max(0.0) as usize / BLOCK;
        let by0 = ((s.mean2d.y - ry - 0.5).ceil() - y0 as f64).max(0.0) as usize / BLOCK;
        let bx1 = ((s.mean2d.x + rx - 0.5).floor() - x0 as f64).min(w as f64 - 1.0);
        let by1 = ((s.mean2d.y + ry - 0.5).floor() - y0 as f64).min(h as f64 - 1.0);
        if bx1 < 0.0 || by1 < 0.0 {
            continue;
        }
        for by in by0..=by1 as usize / BLOCK {
            for bx in bx0..=bx1 as usize / BLOCK {
                blocks[by * blocks_x + bx].push(slot as u32);
            }
        }
    }
    for ly in 0..h {
        for lx in 0..w {
            let pix = Vector2::new((x0 + lx) as f64 + 0.5, (y0 + ly) as f64 + 0.5);
            let start = contribs.len() as u32;
            let mut t = 1.0;
            for &slot in &blocks[(ly / BLOCK) * blocks_x + lx / BLOCK] {
                if t < TRANSMITTANCE_MIN {
                    break;
                }
                let sp = &packed[slot as usize];
                let (dx, dy) = (pix.x - sp[0], pix.y - sp[1]);
                let m = sp[2] * dx * dx + 2.0 * sp[3] * dx * dy + sp[4] * dy * dy;
                if m > sp[6] {
                    continue;
                }
                let raw = sp[5] * (-0.5 * m).exp();
                let clamped = raw > ALPHA_MAX;
                let a = if clamped { ALPHA_MAX } else { raw };
                contribs.push(Contribution { slot, alpha: a, transmittance: t, clamped });
                t *= 1.0 - a;
            }
            ranges.push((start, contribs.len() as u32));
            final_t.push(t);
        }
    }
    TileState { x0, y0, w, h, splats: list, ranges, contribs, final_t }
}

#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad {
    mean2d: Vector2<f64>,
    conic: Matrix2<f64>,
    opacity: f64,
    color: Vector3<f64>,
}

impl std::ops::AddAssign<&SplatGrad> for SplatGrad {
    fn add_assign(&mut self, o: &SplatGrad) {
        self.mean2d += o.mean2d;
        self.conic += o.conic;
        self.opacity += o.opacity;
        self.color += o.color;
    }
}

/// Backpropagates `upstream = dL/d(rgb)` through a forward pass produced by
/// [`render`] on the same `(map, cam, pose)`.
pub fn render_backward(
    map: &GaussianMap,
    cam: &Camera,
    pose: &Pose,
    forward: &RenderedImage,
    upstream: &Image,
    with_pose: bool,
) -> Result<RenderGradients> {
    let st = &forward.state;
    if st.camera != *cam || st.pose != *pose || st.fingerprint != map.fingerprint() {
        return Err(Error::ContractViolation(
            "backward pass called with inputs that differ from the forward pass".into(),
        ));
    }
    if upstream.width != cam.width || upstream.height != cam.height {
        return Err(Error::ContractViolation(format!(
            "upstream gradient is {}x{}, image is {}x{}",
            upstream.width, upstream.height, cam.width, cam.height
        )));
    }

    let partials: Vec<Vec<SplatGrad>> = st
        .tiles
        .par_iter()
        .map(|t| backward_tile(t, &st.splats, &map.background, upstream))
        .collect();
    let mut sg = vec![SplatGrad::default(); st.splats.len()];
    for (t, part) in st.tiles.iter().zip(&partials) {
        for (&si, g) in t.splats.iter().zip(part) {
            sg[si as usize] += g;
        }
    }

    let per_splat: Vec<([f64; 15], Vector2<f64>, PoseGradient)> = st
        .splats
        .par_iter()
        .zip(sg.par_iter())
        .map(|(s, g)| {
            let gauss = &map.gaussians[s.index];
            splat_backward(s, g, gauss, cam, pose, with_pose)
        })
        .collect();

    let n = map.len();
    let mut params = MapGradient::zeros(n);
    let mut mean2d = vec![Vector2::zeros(); n];
    let mut visible = vec![false; n];
    let mut pg = PoseGradient::default();
    for (s, (p, m2, pose_part)) in st.splats.iter().zip(per_splat) {
        params.params[s.index] = p;
        mean2d[s.index] = m2;
        visible[s.index] = true;
        pg.rotation += pose_part.rotation;
        pg.translation += pose_part.translation;
    }
    Ok(RenderGradients {
        params,
        mean2d,
        visible,
        pose: with_pose.then_some(pg),
    })
}

fn backward_tile(
    t: &TileState,
    splats: &[Splat2D],
    background: &Vector3<f64>,
    upstream: &Image,
) -> Vec<SplatGrad> {
    let mut out = vec![SplatGrad::default(); t.splats.len()];
    if t.splats.is_empty() {
        return out;
    }
    for ly in 0..t.h {
        for lx in 0..t.w {
            let local = ly * t.w + lx;
            let (x, y) = (t.x0 + lx, t.y0 + ly);
            let g = upstream.pixel(x, y);
            if g == Vector3::zeros() {
                continue;
            }
            let pix = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let (s, e) = t.ranges[local];
            let list = &t.contribs[s as usize..e as usize];
            let mut behind = background * t.final_t[local];
            for c in list.iter().rev() {
                let sp = &splats[t.splats[c.slot as usize] as usize];
                let o = &mut out[c.slot as usize];
                let w = c.transmittance * c.alpha;
                o.color += g * w;
                let d_alpha = g.dot(&(sp.color * c.transmittance - behind / (1.0 - c.alpha)));
                behind += sp.color * w;
                if c.clamped {
                    continue;
                }
                let (_, falloff) = sp.alpha_at(&pix);
                o.opacity += d_alpha * falloff;
                let d_m = -0.5 * falloff * sp.opacity * d_alpha;
                let d = pix - sp.mean2d;
                let qd = sp.conic * d;
                o.mean2d += -2.0 * d_m * qd;
                o.conic += d * d.transpose() * d_m;
            }
        }
    }
    out
}

fn splat_backward(
    s: &Splat2D,
    g: &SplatGrad,
    gauss: &Gaussian,
    cam: &Camera,
    pose: &Pose,
    with_pose: bool,
) -> ([f64; 15], Vector2<f64>, PoseGradient) {
    let mut out = [0.0; 15];
    // conic = cov2d⁻¹
    let g_conic = 0.5 * (g.conic + g.conic.transpose());
    let g_cov2d = -(s.conic * g_conic * s.conic);
    let g_cov_cam = s.jac.transpose() * g_cov2d * s.jac;
    let g_jac = 2.0 * g_cov2d * s.jac * s.cov_cam;

    let (x, y, z) = (s.p_cam.x, s.p_cam.y, s.p_cam.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let z2 = z * z;
    let gm = g.mean2d;
    let mut g_pcam = Vector3::new(
        gm.x * fx / z,
        gm.y * fy / z,
        -gm.x * fx * x / z2 - gm.y * fy * y / z2 - g_jac[(0, 0)] * fx / z2 - g_jac[(1, 1)] * fy / z2
            + g_jac[(0, 2)] * fx * s.ratio.x / z2
            + g_jac[(1, 2)] * fy * s.ratio.y / z2,
    );
    let g_ratio = Vector2::new(-g_jac[(0, 2)] * fx / z, -g_jac[(1, 2)] * fy / z);
    if !s.ratio_clamped[0] {
        g_pcam.x += g_ratio.x / z;
        g_pcam.z -= g_ratio.x * x / z2;
    }
    if !s.ratio_clamped[1] {
        g_pcam.y += g_ratio.y / z;
        g_pcam.z -= g_ratio.y * y / z2;
    }

    let r_cam = &pose.rotation;
    let g_mean = r_cam * g_pcam;
    let g_sigma = r_cam * g_cov_cam * r_cam.transpose();
    let m = s.rot * Matrix3::from_diagonal(&s.scale);
    let g_m = 2.0 * g_sigma * m;
    let mut g_rot = Matrix3::zeros();
    for k in 0..3 {
        let col = g_m.column(k);
        out[layout::LOG_SCALE + k] = s.scale[k] * col.dot(&s.rot.column(k));
        g_rot.set_column(k, &(col * s.scale[k]));
    }
    let g_q: Vector4<f64> = rotation_vjp(&gauss.rotation, &g_rot);

    out[layout::MEAN..layout::MEAN + 3].copy_from_slice(g_mean.as_slice());
    out[layout::ROTATION..layout::ROTATION + 4].copy_from_slice(g_q.as_slice());
    out[layout::COLOR..layout::COLOR + 3].copy_from_slice(g.color.as_slice());
    out[layout::OPACITY] = g.opacity * s.opacity * (1.0 - s.opacity);

    let mut pg = PoseGradient::default();
    if with_pose {
        let arm = gauss.mean - pose.translation;
        pg.translation = -g_mean;
        pg.rotation = g_mean.cross(&arm);
        for k in 0..3 {
            let e = skew(&Vector3::ith(k, 1.0));
            let d_sigma = s.cov_world * e - e * s.cov_world;
            pg.rotation[k] += g_sigma.component_mul(&d_sigma).sum();
        }
    }
    (out, gm, pg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::logit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::new(100.0, 100.0, w as f64 / 2.0, h as f64 / 2.0, w, h, 0.1, 100.0).unwrap()
    }

    fn gaussian(mean: Vector3<f64>, scale: f64, color: Vector3<f64>, opacity: f64) -> Gaussian {
        Gaussian::new(
            mean,
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            Vector3::repeat(scale),
            color,
            opacity,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let c = Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100, 0.1, 10.0).unwrap();
        let g = gaussian(Vector3::new(0.0, 0.0, 1.0), 0.1, Vector3::zeros(), 0.5);
        let s = project_gaussian(&g, &c, &Pose::identity()).unwrap();
        assert_eq!(s.mean2d, Vector2::new(50.0, 50.0));
        assert_eq!(s.depth, 1.0);
        // on-axis isotropic: J Σ Jᵀ = (f s / z)² I
        assert!((s.cov2d[(0, 0)] - (100.0 + COV2D_REGULARIZER)).abs() < 1e-9);
    }

    #[test]
    fn behind_and_outside_are_culled() {
        let c = cam(64, 64);
        let behind = gaussian(Vector3::new(0.0, 0.0, -1.0), 0.1, Vector3::zeros(), 0.5);
        assert!(project_gaussian(&behind, &c, &Pose::identity()).is_none());
        let far_off = gaussian(Vector3::new(50.0, 0.0, 1.0), 0.01, Vector3::zeros(), 0.5);
        assert!(project_gaussian(&far_off, &c, &Pose::identity()).is_none());
        let beyond = gaussian(Vector3::new(0.0, 0.0, 200.0), 0.1, Vector3::zeros(), 0.5);
        assert!(project_gaussian(&beyond, &c, &Pose::identity()).is_none());
    }

    #[test]
    fn projected_covariance_matches_monte_carlo() {
        use rand_distr::{Distribution, StandardNormal};
        let c = Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100, 0.1, 10.0).unwrap();
        let g = Gaussian::new(
            Vector3::new(0.1, -0.05, 1.0),
            Vector4::new(0.9, 0.2, -0.3, 0.1),
            Vector3::new(0.01, 0.004, 0.007),
            Vector3::zeros(),
            0.5,
            0.5,
        )
        .unwrap();
        let s = project_gaussian(&g, &c, &Pose::identity()).unwrap();
        let l = g.covariance().cholesky().unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            let e = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let p = g.mean + l * e;
            pts.push(Vector2::new(100.0 * p.x / p.z + 50.0, 100.0 * p.y / p.z + 50.0));
        }
        let mean = pts.iter().sum::<Vector2<f64>>() / n as f64;
        let cov = pts.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<Matrix2<f64>>()
            / (n - 1) as f64;
        let model = s.cov2d - Matrix2::identity() * COV2D_REGULARIZER;
        let rel = (cov - model).norm() / model.norm();
        assert!(rel < 0.02, "sampled {cov} vs model {model}");
    }

    #[test]
    fn empty_scene_is_background() {
        let map = GaussianMap::new(vec![], Vector3::new(0.1, 0.2, 0.3));
        let img = render(&map, &cam(20, 12), &Pose::identity());
        for y in 0..12 {
            for x in 0..20 {
                assert_eq!(img.rgb.pixel(x, y), Vector3::new(0.1, 0.2, 0.3));
                assert_eq!(img.alpha[y * 20 + x], 0.0);
            }
        }
    }

    #[test]
    fn saturated_single_splat_pixel() {
        let c = Camera::new(100.0, 100.0, 8.5, 8.5, 17, 17, 0.1, 10.0).unwrap();
        let color = Vector3::new(0.9, 0.3, 0.1);
        let bg = Vector3::new(0.2, 0.4, 0.6);
        let mut g = gaussian(Vector3::new(0.0, 0.0, 1.0), 0.05, color, 0.5);
        g.opacity_logit = logit(0.999_999);
        let map = GaussianMap::new(vec![g], bg);
        let img = render(&map, &c, &Pose::identity());
        // pixel 8 has its center at 8.5, exactly on the projected mean
        let expected = color * 0.99 + bg * 0.01;
        assert!((img.rgb.pixel(8, 8) - expected).norm() < 1e-6);
    }

    /// Independent scalar compositing of every Gaussian at one pixel.
    fn composite_oracle(map: &GaussianMap, c: &Camera, pose: &Pose, x: usize, y: usize) -> Vector3<f64> {
        let mut layers: Vec<(f64, usize, f64, Vector3<f64>)> = Vec::new();
        for (i, g) in map.gaussians.iter().enumerate() {
            if let Some(s) = project_gaussian(g, c, pose) {
                let d = Vector2::new(x as f64 + 0.5, y as f64 + 0.5) - s.mean2d;
                let inv = s.cov2d.try_inverse().unwrap();
                let a = (g.opacity() * (-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp()).min(ALPHA_MAX);
                layers.push((s.depth, i, a, g.color));
            }
        }
        layers.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // back to front
        let mut col = map.background;
        for &(_, _, a, c) in layers.iter().rev() {
            col = c * a + col * (1.0 - a);
        }
        col
    }

    #[test]
    fn two_layers_match_scalar_oracle() {
        let c = cam(32, 32);
        let map = GaussianMap::new(
            vec![
                gaussian(Vector3::new(0.02, 0.0, 2.0), 0.05, Vector3::new(0.0, 0.0, 1.0), 0.6),
                gaussian(Vector3::new(0.0, 0.01, 1.0), 0.03, Vector3::new(1.0, 0.0, 0.0), 0.7),
            ],
            Vector3::new(0.5, 0.5, 0.5),
        );
        let img = render(&map, &c, &Pose::identity());
        for y in 0..32 {
            for x in 0..32 {
                let o = composite_oracle(&map, &c, &Pose::identity(), x, y);
                assert!((img.rgb.pixel(x, y) - o).norm() < 1e-9, "pixel ({x},{y})");
            }
        }
        let front = img.contributors(16, 16);
        assert_eq!(front[0].0, 1);
    }

    #[test]
    fn compositing_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = cam(40, 30);
        let gs = (0..60)
            .map(|_| {
                gaussian(
                    Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2), rng.random_range(1.0..3.0)),
                    rng.random_range(0.01..0.1),
                    Vector3::new(rng.random(), rng.random(), rng.random()),
                    rng.random_range(0.05..0.99),
                )
            })
            .collect();
        let map = GaussianMap::new(gs, Vector3::zeros());
        let img = render(&map, &c, &Pose::identity());
        for y in 0..30 {
            for x in 0..40 {
                let s: f64 = img.contributors(x, y).iter().map(|c| c.1).sum();
                assert!((s + img.final_transmittance(x, y) - 1.0).abs() < 1e-6);
            }
        }
        assert!(img.rgb.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn backward_rejects_mismatched_forward() {
        let c = cam(16, 16);
        let map = GaussianMap::new(
            vec![gaussian(Vector3::new(0.0, 0.0, 1.0), 0.05, Vector3::zeros(), 0.5)],
            Vector3::zeros(),
        );
        let fwd = render(&map, &c, &Pose::identity());
        let up = Image::new(16, 16);
        let mut other = map.clone();
        other.gaussians[0].mean.x += 0.01;
        assert!(matches!(
            render_backward(&other, &c, &Pose::identity(), &fwd, &up, false),
            Err(Error::ContractViolation(_))
        ));
        let moved = Pose::from_translation(Vector3::new(0.0, 0.0, 0.1));
        assert!(render_backward(&map, &c, &moved, &fwd, &up, false).is_err());
        let g = render_backward(&map, &c, &Pose::identity(), &fwd, &up, true).unwrap();
        assert_eq!(g.params.max_abs(), 0.0);
        assert_eq!(g.pose.unwrap(), PoseGradient::default());
    }

    fn random_scene(seed: u64, n: usize) -> GaussianMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gs = (0..n)
            .map(|_| {
                let q = Vector4::new(
                    rng.random_range(0.5..1.0),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                );
                Gaussian::new(
                    Vector3::new(
                        rng.random_range(-0.25..0.25),
                        rng.random_range(-0.25..0.25),
                        rng.random_range(1.5..3.0),
                    ),
                    q / q.norm(),
                    Vector3::new(
                        rng.random_range(0.04..0.15),
                        rng.random_range(0.04..0.15),
                        rng.random_range(0.04..0.15),
                    ),
                    Vector3::new(rng.random(), rng.random(), rng.random()),
                    rng.random_range(0.05..0.5),
                    0.5,
                )
                .unwrap()
            })
            .collect();
        GaussianMap::new(gs, Vector3::new(0.2, 0.3, 0.4))
    }

    /// Loss = mean squared error to a fixed target image.
    fn mse_loss(img: &Image, target: &Image) -> (f64, Image) {
        let n = img.data.len() as f64;
        let mut g = Image::new(img.width, img.height);
        let mut l = 0.0;
        for ((gv, a), b) in g.data.iter_mut().zip(&img.data).zip(&target.data) {
            l += (a - b) * (a - b);
            *gv = 2.0 * (a - b) / n;
        }
        (l / n, g)
    }

    fn target_image(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        Image::from_data(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let c = cam(32, 32);
        let pose = Pose::identity();
        let mut checked = 0;
        for seed in 0..24u64 {
            let n = 1 + (seed as usize % 20);
            let map = random_scene(seed, n);
            let target = target_image(seed, 32, 32);
            let fwd = render(&map, &c, &pose);
            if !fwd.is_smooth() {
                continue;
            }
            checked += 1;
            let (_, up) = mse_loss(&fwd.rgb, &target);
            let grads = render_backward(&map, &c, &pose, &fwd, &up, false).unwrap();
            let h = 1e-4;
            for i in 0..map.len() {
                let base = map.gaussians[i].to_params();
                for k in 0..layout::GCS {
                    let eval = |delta: f64| {
                        let mut p = base;
                        p[k] += delta;
                        let mut m = map.clone();
                        m.gaussians[i] = Gaussian::from_params(&p);
                        mse_loss(&render(&m, &c, &pose).rgb, &target).0
                    };
                    let num = (eval(h) - eval(-h)) / (2.0 * h);
                    let a = grads.params.params[i][k];
                    assert!(
                        rel_err(a, num) < 1e-3 || (a - num).abs() < 1e-9,
                        "seed {seed} gaussian {i} param {k}: analytic {a} numeric {num}"
                    );
                }
                assert_eq!(grads.params.params[i][layout::GCS], 0.0);
            }
        }
        assert!(checked >= 20, "only {checked} valid fixtures");
    }

    #[test]
    fn pose_gradient_matches_finite_differences() {
        let c = cam(32, 32);
        for seed in 0..6u64 {
            let map = random_scene(100 + seed, 2 + seed as usize);
            let pose = Pose::from_axis_angle(Vector3::new(0.02, -0.03, 0.01), Vector3::new(0.01, 0.02, -0.05));
            let target = target_image(seed, 32, 32);
            let fwd = render(&map, &c, &pose);
            assert!(fwd.is_smooth());
            let (_, up) = mse_loss(&fwd.rgb, &target);
            let pg = render_backward(&map, &c, &pose, &fwd, &up, true).unwrap().pose.unwrap();
            let h = 1e-5;
            for k in 0..6 {
                let eval = |delta: f64| {
                    let mut tangent = [0.0; 6];
                    tangent[k] = delta;
                    let p = pose.retract(
                        &Vector3::new(tangent[0], tangent[1], tangent[2]),
                        &Vector3::new(tangent[3], tangent[4], tangent[5]),
                    );
                    mse_loss(&render(&map, &c, &p).rgb, &target).0
                };
                let num = (eval(h) - eval(-h)) / (2.0 * h);
                let a = if k < 3 { pg.rotation[k] } else { pg.translation[k - 3] };
                assert!(rel_err(a, num) < 1e-3, "seed {seed} tangent {k}: analytic {a} numeric {num}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let map = random_scene(9, 20);
        let c = cam(40, 40);
        let a = render(&map, &c, &Pose::identity());
        let b = render(&map, &c, &Pose::identity());
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn culled_gaussians_get_zero_gradient() {
        let mut map = random_scene(3, 5);
        map.gaussians[2].mean.z = -4.0;
        let c = cam(32, 32);
        let fwd = render(&map, &c, &Pose::identity());
        let up = target_image(1, 32, 32);
        let g = render_backward(&map, &c, &Pose::identity(), &fwd, &up, false).unwrap();
        assert!(!g.visible[2]);
        assert!(g.params.params[2].iter().all(|&v| v == 0.0));
        assert!(g.params.is_finite());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn transmittance_is_conserved(seed in 0u64..100_000, n in 1usize..80) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = cam(24, 20);
            let gs = (0..n)
                .map(|_| {
                    gaussian(
                        Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.3..0.3), rng.random_range(0.5..4.0)),
                        rng.random_range(0.005..0.3),
                        Vector3::new(rng.random(), rng.random(), rng.random()),
                        rng.random_range(0.01..0.999),
                    )
                })
                .collect();
            let img = render(&GaussianMap::new(gs, Vector3::new(0.2, 0.4, 0.6)), &c, &Pose::identity());
            for y in 0..20 {
                for x in 0..24 {
                    let s: f64 = img.contributors(x, y).iter().map(|c| c.1).sum();
                    proptest::prop_assert!((s + img.final_transmittance(x, y) - 1.0).abs() < 1e-6);
                }
            }
            proptest::prop_assert!(img.rgb.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
