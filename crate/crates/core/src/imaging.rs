//! RGB float images and the structural-similarity machinery shared by the
//! photometric loss and the evaluation metrics.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5) applied separably. Near the
//! border the window is truncated and renormalized, so every local
//! statistic is a proper weighted average.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Row-major H×W×3 image with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: Vector3<f64>) -> Self {
        let mut img = Image::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(rgb.as_slice());
        }
        img
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Image { width, height, data })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Vector3<f64> {
        let o = (y * self.width + x) * 3;
        Vector3::new(self.data[o], self.data[o + 1], self.data[o + 2])
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: &Vector3<f64>) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(rgb.as_slice());
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "image dimensions differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b)?;
    let n = a.data.len() as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio for a unit peak. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// SSIM together with its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    a.check_shape(b)?;
    let (v, g) = ssim_impl(a, b, true);
    Ok((v, g.expect("gradient requested")))
}

pub(crate) fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Truncated-window normalizers per coordinate along an axis of length `n`.
fn axis_norms(n: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    (0..n as isize)
        .map(|i| {
            (0..SSIM_WINDOW as isize)
                .filter(|k| {
                    let j = i + k - half;
                    j >= 0 && j < n as isize
                })
                .map(|k| taps[k as usize])
                .sum()
        })
        .collect()
}

struct Blur {
    w: usize,
    h: usize,
    taps: [f64; SSIM_WINDOW],
    zx: Vec<f64>,
    zy: Vec<f64>,
}

impl Blur {
    fn new(w: usize, h: usize) -> Self {
        let taps = gaussian_taps();
        Blur { w, h, zx: axis_norms(w, &taps), zy: axis_norms(h, &taps), taps }
    }

    // out[i] = Σ_k taps[k] in[i+k-half] / z[i]  (along one axis)
    fn pass(&self, input: &[f64], along_x: bool, adjoint: bool) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        let half = (SSIM_WINDOW / 2) as isize;
        let mut out = vec![0.0; w * h];
        let (len, z) = if along_x { (w, &self.zx) } else { (h, &self.zy) };
        for y in 0..h {
            for x in 0..w {
                let i = if along_x { x } else { y } as isize;
                let src = y * w + x;
                for k in 0..SSIM_WINDOW as isize {
                    let j = i + k - half;
                    if j < 0 || j >= len as isize {
                        continue;
                    }
                    let other = if along_x { y * w + j as usize } else { j as usize * w + x };
                    let wgt = self.taps[k as usize] / z[i as usize];
                    if adjoint {
                        out[other] += wgt * input[src];
                    } else {
                        out[src] += wgt * input[other];
                    }
                }
            }
        }
        out
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.pass(&self.pass(input, true, false), false, false)
    }

    fn adjoint(&self, input: &[f64]) -> Vec<f64> {
        self.pass(&self.pass(input, false, true), true, true)
    }
}

fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> (f64, Option<Image>) {
    let (w, h) = (a.width, a.height);
    let n = w * h;
    let blur = Blur::new(w, h);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h));
    let inv = 1.0 / (3 * n) as f64;
    for c in 0..3 {
        let x = a.channel(c);
        let y = b.channel(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mu_x = blur.apply(&x);
        let mu_y = blur.apply(&y);
        let bxx = blur.apply(&xx);
        let byy = blur.apply(&yy);
        let bxy = blur.apply(&xy);
        let mut d_mu = vec![0.0; n];
        let mut d_bxx = vec![0.0; n];
        let mut d_bxy = vec![0.0; n];
        for p in 0..n {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let sxx = bxx[p] - mx * mx;
            let syy = byy[p] - my * my;
            let sxy = bxy[p] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * sxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = sxx + syy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let ds_dmx = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
                let ds_dsxx = -s / b2;
                let ds_dsxy = 2.0 * a1 / (b1 * b2);
                d_mu[p] = inv * (ds_dmx - 2.0 * mx * ds_dsxx - my * ds_dsxy);
                d_bxx[p] = inv * ds_dsxx;
                d_bxy[p] = inv * ds_dsxy;
            }
        }
        if let Some(g) = grad.as_mut() {
            let g_mu = blur.adjoint(&d_mu);
            let g_xx = blur.adjoint(&d_bxx);
            let g_xy = blur.adjoint(&d_bxy);
            for p in 0..n {
                g.data[p * 3 + c] = g_mu[p] + 2.0 * x[p] * g_xx[p] + y[p] * g_xy[p];
            }
        }
    }
    (total * inv, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> Image {
        Image::from_data(w, h, (0..w * h * 3).map(|_| rng.random_range(0.0..1.0)).collect())
            .unwrap()
    }

    /// Direct double sum over the truncated 2-D window; no separability.
    fn ssim_direct(a: &Image, b: &Image) -> f64 {
        let taps = gaussian_taps();
        let half = (SSIM_WINDOW / 2) as isize;
        let (w, h) = (a.width as isize, a.height as isize);
        let mut total = 0.0;
        for c in 0..3 {
            for py in 0..h {
                for px in 0..w {
                    let (mut z, mut mx, mut my, mut sxx, mut syy, mut sxy) =
                        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                    for ky in 0..SSIM_WINDOW as isize {
                        for kx in 0..SSIM_WINDOW as isize {
                            let (qx, qy) = (px + kx - half, py + ky - half);
                            if qx < 0 || qy < 0 || qx >= w || qy >= h {
                                continue;
                            }
                            let wt = taps[kx as usize] * taps[ky as usize];
                            let u = a.pixel(qx as usize, qy as usize)[c];
                            let v = b.pixel(qx as usize, qy as usize)[c];
                            z += wt;
                            mx += wt * u;
                            my += wt * v;
                            sxx += wt * u * u;
                            syy += wt * v * v;
                            sxy += wt * u * v;
                        }
                    }
                    mx /= z;
                    my /= z;
                    let vx = sxx / z - mx * mx;
                    let vy = syy / z - my * my;
                    let cxy = sxy / z - mx * my;
                    total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                }
            }
        }
        total / (3 * a.width * a.height) as f64
    }

    #[test]
    fn identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 20, 14);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_psnr() {
        let a = Image::filled(16, 16, Vector3::repeat(0.3));
        let b = Image::filled(16, 16, Vector3::repeat(0.4));
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() == 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = Image::new(4, 4);
        let b = Image::new(4, 5);
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (w, h) in [(24, 17), (8, 8), (5, 13)] {
            let a = random_image(&mut rng, w, h);
            let b = random_image(&mut rng, w, h);
            let fast = ssim(&a, &b).unwrap();
            let slow = ssim_direct(&a, &b);
            assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
            assert!((-1.0..=1.0).contains(&fast));
        }
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_image(&mut rng, 8, 8);
        let b = random_image(&mut rng, 8, 8);
        let (_, g) = ssim_with_grad(&a, &b).unwrap();
        let h = 1e-6;
        for i in (0..a.data.len()).step_by(7) {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.data[i] += h;
            am.data[i] -= h;
            let fd = (ssim(&ap, &b).unwrap() - ssim(&am, &b).unwrap()) / (2.0 * h);
            let err = (fd - g.data[i]).abs() / fd.abs().max(1e-6);
            assert!(err < 1e-4, "i={i}: fd {fd} analytic {}", g.data[i]);
        }
    }
}
