//! Geometric and photometric evaluation metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::imaging::Image;
use crate::spatial::NnIndex;

pub use crate::imaging::{psnr, ssim};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.1, 0.2, 1.0];

/// How an F-score threshold is compared against nearest-neighbour distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `‖p − q‖² < τ`
    #[default]
    Squared,
    /// `‖p − q‖ < τ`
    Euclidean,
}

fn check(p: &PointCloud, what: &str) -> Result<()> {
    if p.is_empty() {
        Err(Error::invalid(format!("{what} cloud is empty")))
    } else {
        Ok(())
    }
}

/// Squared distance from every point of `from` to its nearest point in `to`.
pub fn nn_sq_distances(from: &PointCloud, to: &NnIndex) -> Vec<f64> {
    from.points.par_iter().map(|p| to.nearest(p).1).collect()
}

/// Mean squared NN distance in both directions, summed.
pub fn chamfer(p1: &PointCloud, p2: &PointCloud) -> Result<f64> {
    check(p1, "first")?;
    check(p2, "second")?;
    let (i1, i2) = (NnIndex::build(p1)?, NnIndex::build(p2)?);
    Ok(directed_mean(&nn_sq_distances(p1, &i2)) + directed_mean(&nn_sq_distances(p2, &i1)))
}

fn directed_mean(d: &[f64]) -> f64 {
    d.iter().sum::<f64>() / d.len() as f64
}

fn within(d2: f64, tau: f64, mode: ThresholdMode) -> bool {
    match mode {
        ThresholdMode::Squared => d2 < tau,
        ThresholdMode::Euclidean => d2.sqrt() < tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub tau: f64,
    pub fscore: f64,
    /// Fraction of the first cloud close to the second.
    pub precision_1: f64,
    /// Fraction of the second cloud close to the first.
    pub precision_2: f64,
}

fn harmonic(p1: f64, p2: f64) -> f64 {
    if p1 + p2 == 0.0 {
        0.0
    } else {
        2.0 * p1 * p2 / (p1 + p2)
    }
}

fn fraction_within(d: &[f64], tau: f64, mode: ThresholdMode) -> f64 {
    d.iter().filter(|&&v| within(v, tau, mode)).count() as f64 / d.len() as f64
}

pub fn fscore(p1: &PointCloud, p2: &PointCloud, tau: f64, mode: ThresholdMode) -> Result<FScore> {
    Ok(geom_report(p1, p2, &[tau], mode)?.fscores[0])
}

/// Chamfer distance and F-scores of a reconstruction against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomReport {
    pub chamfer: f64,
    pub threshold_mode: ThresholdMode,
    pub fscores: Vec<FScore>,
}

impl GeomReport {
    pub fn at(&self, tau: f64) -> Option<&FScore> {
        self.fscores.iter().find(|f| f.tau == tau)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["label".to_string(), "chamfer".to_string()];
        for f in &self.fscores {
            cols.push(format!("fscore@{}", f.tau));
            cols.push(format!("precision_1@{}", f.tau));
            cols.push(format!("precision_2@{}", f.tau));
        }
        cols.join(",")
    }

    pub fn csv_row(&self, label: &str) -> String {
        let mut cols = vec![label.replace(',', ";"), format!("{}", self.chamfer)];
        for f in &self.fscores {
            cols.push(format!("{}", f.fscore));
            cols.push(format!("{}", f.precision_1));
            cols.push(format!("{}", f.precision_2));
        }
        cols.join(",")
    }
}

pub fn geom_report(p1: &PointCloud, p2: &PointCloud, thresholds: &[f64], mode: ThresholdMode) -> Result<GeomReport> {
    check(p1, "first")?;
    check(p2, "second")?;
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::invalid(format!("threshold must be positive, got {t}")));
    }
    let (i1, i2) = (NnIndex::build(p1)?, NnIndex::build(p2)?);
    let d12 = nn_sq_distances(p1, &i2);
    let d21 = nn_sq_distances(p2, &i1);
    let fscores = thresholds
        .iter()
        .map(|&tau| {
            let (a, b) = (fraction_within(&d12, tau, mode), fraction_within(&d21, tau, mode));
            FScore { tau, fscore: harmonic(a, b), precision_1: a, precision_2: b }
        })
        .collect();
    Ok(GeomReport {
        chamfer: directed_mean(&d12) + directed_mean(&d21),
        threshold_mode: mode,
        fscores,
    })
}

/// PSNR and SSIM averaged over image pairs. Infinite PSNRs are averaged as
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotoReport {
    pub psnr: f64,
    pub ssim: f64,
    pub views: usize,
}

pub fn photo_report<'a>(pairs: impl IntoIterator<Item = (&'a Image, &'a Image)>) -> Result<PhotoReport> {
    let (mut p, mut s, mut n) = (0.0, 0.0, 0);
    for (a, b) in pairs {
        p += psnr(a, b)?;
        s += ssim(a, b)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no image pairs to evaluate"));
    }
    Ok(PhotoReport { psnr: p / n as f64, ssim: s / n as f64, views: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(v: Vec<[f64; 3]>) -> PointCloud {
        PointCloud::new(v.into_iter().map(Vector3::from).collect()).unwrap()
    }

    fn random_cloud(rng: &mut impl Rng, n: usize, spread: f64) -> PointCloud {
        cloud((0..n).map(|_| [0.0; 3].map(|_: f64| rng.random_range(-spread..spread))).collect())
    }

    fn brute_sq(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
        from.points
            .iter()
            .map(|p| to.points.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
            .collect()
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(vec![[0.0, 0.0, 0.0]]);
        let b = cloud(vec![[3.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &b).unwrap(), 18.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert!(chamfer(&a, &PointCloud::default()).is_err());
    }

    #[test]
    fn chamfer_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = random_cloud(&mut rng, 300, 2.0);
            let b = random_cloud(&mut rng, 250, 2.0);
            let da = brute_sq(&a, &b);
            let db = brute_sq(&b, &a);
            let expect = da.iter().sum::<f64>() / da.len() as f64 + db.iter().sum::<f64>() / db.len() as f64;
            let got = chamfer(&a, &b).unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect);
            assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
        }
    }

    #[test]
    fn fscore_examples() {
        let a = cloud(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let f = fscore(&a, &a, 0.01, ThresholdMode::Squared).unwrap();
        assert_eq!((f.fscore, f.precision_1, f.precision_2), (1.0, 1.0, 1.0));
        let far = cloud(vec![[10.0, 0.0, 0.0]]);
        let f = fscore(&a, &far, 1.0, ThresholdMode::Squared).unwrap();
        assert_eq!((f.fscore, f.precision_1, f.precision_2), (0.0, 0.0, 0.0));
        assert!(fscore(&a, &a, 0.0, ThresholdMode::Squared).is_err());
    }

    #[test]
    fn fscore_subset_case_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = random_cloud(&mut rng, 300, 3.0);
        let sub = cloud(dense.points[..40].iter().map(|p| [p.x, p.y, p.z]).collect());
        let f = fscore(&sub, &dense, 0.2, ThresholdMode::Squared).unwrap();
        assert_eq!(f.precision_1, 1.0);
        let p2 = brute_sq(&dense, &sub).iter().filter(|&&d| d < 0.2).count() as f64 / 300.0;
        assert!(p2 < 1.0);
        assert_eq!(f.precision_2, p2);
        assert!((f.fscore - 2.0 * p2 / (1.0 + p2)).abs() < 1e-15);
    }

    #[test]
    fn euclidean_threshold_mode() {
        let a = cloud(vec![[0.0, 0.0, 0.0]]);
        let b = cloud(vec![[0.5, 0.0, 0.0]]);
        // 0.25 m² is below 0.3, but 0.5 m is not
        assert_eq!(fscore(&a, &b, 0.3, ThresholdMode::Squared).unwrap().fscore, 1.0);
        assert_eq!(fscore(&a, &b, 0.3, ThresholdMode::Euclidean).unwrap().fscore, 0.0);
    }

    #[test]
    fn csv_row_lines_up_with_header() {
        let a = cloud(vec![[0.0, 0.0, 0.0]]);
        let r = geom_report(&a, &a, &DEFAULT_THRESHOLDS, ThresholdMode::Squared).unwrap();
        assert_eq!(r.csv_header().split(',').count(), r.csv_row("x,y").split(',').count());
        assert_eq!(r.at(0.2).unwrap().fscore, 1.0);
    }

    proptest! {
        #[test]
        fn fscore_is_monotone_in_threshold(seed in 0u64..500, t1 in 0.01..2.0f64, dt in 0.0..2.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cloud(&mut rng, 30, 1.5);
            let b = random_cloud(&mut rng, 25, 1.5);
            let lo = fscore(&a, &b, t1, ThresholdMode::Squared).unwrap();
            let hi = fscore(&a, &b, t1 + dt, ThresholdMode::Squared).unwrap();
            prop_assert!(hi.fscore >= lo.fscore);
            prop_assert!((0.0..=1.0).contains(&lo.fscore));
        }

        #[test]
        fn chamfer_nonnegative_and_zero_on_mutual_subsets(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cloud(&mut rng, 20, 1.0);
            let mut doubled = a.clone();
            doubled.points.extend(a.points.iter().rev().cloned());
            prop_assert_eq!(chamfer(&a, &doubled).unwrap(), 0.0);
            let b = random_cloud(&mut rng, 20, 1.0);
            prop_assert!(chamfer(&a, &b).unwrap() > 0.0);
        }

        #[test]
        fn psnr_symmetric_and_ssim_bounded(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut img = || Image::from_data(12, 12, (0..12 * 12 * 3).map(|_| rng.random()).collect()).unwrap();
            let (a, b) = (img(), img());
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            let s = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
