//! Procedural street-like scenes with a LiDAR and camera simulator.
//!
//! The world is z-up. A sensor rig drives along +x near the west edge of the
//! scene; its camera looks down +x. Buildings are textured boxes, the ground
//! is a textured rectangle and a tall backdrop wall sits beyond LiDAR range so
//! that it only ever appears in images.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_to_quat, Camera, Gaussian, GaussianMap, PointCloud, Pose};
use crate::imaging::Image;
use crate::render::render;

/// Camera-to-world rotation of a camera looking along world +x with world +z up.
pub fn forward_camera_rotation(yaw: f64) -> Matrix3<f64> {
    let base = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let (s, c) = yaw.sin_cos();
    let yaw_m = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    yaw_m * base
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Ground,
    Building,
    Sphere,
    Backdrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Rectangle centred at `center` spanned by unit axes `u`, `v`.
    Quad {
        center: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        half_u: f64,
        half_v: f64,
    },
    Sphere { center: Vector3<f64>, radius: f64 },
}

/// An analytic surface with a two-color checker albedo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub shape: Shape,
    pub albedo: Vector3<f64>,
    pub albedo_alt: Vector3<f64>,
    pub checker: f64,
}

impl Surface {
    /// Ray parameter of the nearest hit with `t > 1e-9`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self.shape {
            Shape::Quad { center, u, v, half_u, half_v } => {
                let n = u.cross(&v);
                let denom = n.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = n.dot(&(center - origin)) / denom;
                if t <= 1e-9 {
                    return None;
                }
                let rel = origin + dir * t - center;
                (rel.dot(&u).abs() <= half_u && rel.dot(&v).abs() <= half_v).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [-b - sq, -b + sq].into_iter().find(|&t| t > 1e-9)
            }
        }
    }

    /// Distance from `p` to the surface.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        match self.shape {
            Shape::Quad { center, u, v, half_u, half_v } => {
                let rel = p - center;
                let a = rel.dot(&u).clamp(-half_u, half_u);
                let b = rel.dot(&v).clamp(-half_v, half_v);
                (rel - u * a - v * b).norm()
            }
            Shape::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
        }
    }

    pub fn color_at(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (a, b) = match self.shape {
            Shape::Quad { center, u, v, .. } => ((p - center).dot(&u), (p - center).dot(&v)),
            Shape::Sphere { center, radius } => {
                let d = (p - center) / radius;
                (d.y.atan2(d.x) * radius, d.z.clamp(-1.0, 1.0).asin() * radius)
            }
        };
        let parity = ((a / self.checker).floor() + (b / self.checker).floor()) as i64;
        if parity.rem_euclid(2) == 0 {
            self.albedo
        } else {
            self.albedo_alt
        }
    }

    /// Points on the surface roughly `spacing` apart, with the local tangent frame.
    fn samples(&self, spacing: f64) -> Vec<(Vector3<f64>, Matrix3<f64>)> {
        match self.shape {
            Shape::Quad { center, u, v, half_u, half_v } => {
                let n = u.cross(&v);
                let frame = Matrix3::from_columns(&[u, v, n]);
                let nu = ((2.0 * half_u / spacing).ceil() as usize).max(1);
                let nv = ((2.0 * half_v / spacing).ceil() as usize).max(1);
                let mut out = Vec::with_capacity(nu * nv);
                for j in 0..nv {
                    for i in 0..nu {
                        let a = -half_u + (i as f64 + 0.5) * 2.0 * half_u / nu as f64;
                        let b = -half_v + (j as f64 + 0.5) * 2.0 * half_v / nv as f64;
                        out.push((center + u * a + v * b, frame));
                    }
                }
                out
            }
            Shape::Sphere { center, radius } => {
                let area = 4.0 * std::f64::consts::PI * radius * radius;
                let n = ((area / (spacing * spacing)).ceil() as usize).max(4);
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                (0..n)
                    .map(|i| {
                        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                        let r = (1.0 - z * z).sqrt();
                        let phi = golden * i as f64;
                        let normal = Vector3::new(r * phi.cos(), r * phi.sin(), z);
                        let helper = if normal.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
                        let t1 = helper.cross(&normal).normalize();
                        let t2 = normal.cross(&t1);
                        (center + normal * radius, Matrix3::from_columns(&[t1, t2, normal]))
                    })
                    .collect()
            }
        }
    }
}

/// Spinning-scanner ray pattern in the sensor (camera) frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarPattern {
    pub azimuth_steps: usize,
    /// Elevation range in degrees; positive is up.
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub elevation_steps: usize,
    pub max_range: f64,
    /// Standard deviation of additive range noise (m).
    pub range_noise: f64,
}

impl Default for LidarPattern {
    fn default() -> Self {
        LidarPattern {
            azimuth_steps: 360,
            elevation_min_deg: -24.0,
            elevation_max_deg: 14.0,
            elevation_steps: 24,
            max_range: 30.0,
            range_noise: 0.0,
        }
    }
}

impl LidarPattern {
    /// Unit ray directions, elevation-major. Azimuth 0 looks down the
    /// sensor's +z axis and +90° down its +x axis.
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.azimuth_steps * self.elevation_steps);
        for ei in 0..self.elevation_steps {
            let e = if self.elevation_steps == 1 {
                self.elevation_min_deg
            } else {
                self.elevation_min_deg
                    + (self.elevation_max_deg - self.elevation_min_deg) * ei as f64
                        / (self.elevation_steps - 1) as f64
            }
            .to_radians();
            for ai in 0..self.azimuth_steps {
                let a = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * ai as f64 / self.azimuth_steps as f64;
                out.push(sensor_direction(a, e));
            }
        }
        out
    }
}

/// Direction in the sensor frame (x right, y down, z forward).
pub fn sensor_direction(azimuth: f64, elevation: f64) -> Vector3<f64> {
    Vector3::new(azimuth.sin() * elevation.cos(), -elevation.sin(), azimuth.cos() * elevation.cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub min_buildings: usize,
    pub max_buildings: usize,
    pub spheres: usize,
    pub frames: usize,
    /// Start and end x of the trajectory (m).
    pub track_start: f64,
    pub track_end: f64,
    pub sensor_height: f64,
    /// x position of the backdrop wall (m).
    pub backdrop_x: f64,
    /// Spacing of ground-truth Gaussians on near and far surfaces (m).
    pub spacing: f64,
    pub backdrop_spacing: f64,
    pub camera: Camera,
    pub lidar: LidarPattern,
    pub background: [f64; 3],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            min_buildings: 4,
            max_buildings: 8,
            spheres: 1,
            frames: 12,
            track_start: -22.0,
            track_end: -16.0,
            sensor_height: 1.5,
            backdrop_x: 24.0,
            spacing: 0.3,
            backdrop_spacing: 0.8,
            camera: Camera {
                fx: 48.0,
                fy: 48.0,
                cx: 32.0,
                cy: 24.0,
                width: 64,
                height: 48,
                near: 0.1,
                far: 100.0,
            },
            lidar: LidarPattern::default(),
            background: [0.55, 0.7, 0.9],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.min_buildings > self.max_buildings {
            return Err(Error::invalid("min_buildings exceeds max_buildings"));
        }
        if self.frames == 0 {
            return Err(Error::invalid("trajectory needs at least one frame"));
        }
        if !(self.spacing > 0.0 && self.backdrop_spacing > 0.0) {
            return Err(Error::invalid("sample spacing must be positive"));
        }
        if self.lidar.azimuth_steps == 0 || self.lidar.elevation_steps == 0 || !(self.lidar.max_range > 0.0) {
            return Err(Error::invalid("LiDAR pattern needs rays and a positive range"));
        }
        if !(self.lidar.range_noise >= 0.0) {
            return Err(Error::invalid("range noise must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub surfaces: Vec<Surface>,
    pub gt_map: GaussianMap,
    /// Surface each ground-truth Gaussian was sampled from.
    pub gt_surface: Vec<usize>,
    pub trajectory: Vec<Pose>,
    pub camera: Camera,
    pub lidar: LidarPattern,
    pub seed: u64,
}

/// A ground-truth image with the camera and pose that produced it.
#[derive(Debug, Clone)]
pub struct View {
    pub image: Image,
    pub camera: Camera,
    pub pose: Pose,
}

/// Axis-aligned box faces except the bottom.
fn box_faces(min: Vector3<f64>, max: Vector3<f64>) -> Vec<Shape> {
    let c = (min + max) / 2.0;
    let h = (max - min) / 2.0;
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    vec![
        // -x face, outward normal -x
        Shape::Quad { center: c - x * h.x, u: z, v: y, half_u: h.z, half_v: h.y },
        Shape::Quad { center: c + x * h.x, u: y, v: z, half_u: h.y, half_v: h.z },
        Shape::Quad { center: c - y * h.y, u: x, v: z, half_u: h.x, half_v: h.z },
        Shape::Quad { center: c + y * h.y, u: z, v: x, half_u: h.z, half_v: h.x },
        Shape::Quad { center: c + z * h.z, u: x, v: y, half_u: h.x, half_v: h.y },
    ]
}

fn random_color(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(rng.random_range(0.2..0.9), rng.random_range(0.2..0.9), rng.random_range(0.2..0.9))
}

pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut surfaces = Vec::new();
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());

    surfaces.push(Surface {
        kind: SurfaceKind::Ground,
        shape: Shape::Quad { center: Vector3::new(-7.5, 0.0, 0.0), u: x, v: y, half_u: 17.5, half_v: 15.0 },
        albedo: Vector3::new(0.35, 0.35, 0.33),
        albedo_alt: Vector3::new(0.5, 0.48, 0.45),
        checker: 1.0,
    });

    let count = rng.random_range(config.min_buildings..=config.max_buildings);
    let mut footprints: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
    let mut attempts = 0;
    while footprints.len() < count && attempts < 10_000 {
        attempts += 1;
        let size = Vector3::new(rng.random_range(2.0..5.0), rng.random_range(2.0..5.0), rng.random_range(2.5..8.0));
        let cx = rng.random_range(-8.0..6.0);
        // keep the driving corridor |y| < 3 clear
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let cy = side * rng.random_range(3.5 + size.y / 2.0..11.0);
        let min = Vector3::new(cx - size.x / 2.0, cy - size.y / 2.0, 0.0);
        let max = Vector3::new(cx + size.x / 2.0, cy + size.y / 2.0, size.z);
        let clear = footprints.iter().all(|(a, b)| {
            min.x > b.x + 1.0 || max.x < a.x - 1.0 || min.y > b.y + 1.0 || max.y < a.y - 1.0
        });
        if clear {
            footprints.push((min, max));
        }
    }
    if footprints.len() < config.min_buildings {
        return Err(Error::invalid("could not place the requested number of buildings"));
    }
    for (min, max) in &footprints {
        let albedo = random_color(&mut rng);
        for shape in box_faces(*min, *max) {
            surfaces.push(Surface {
                kind: SurfaceKind::Building,
                shape,
                albedo,
                albedo_alt: albedo * 0.6,
                checker: 0.75,
            });
        }
    }
    for _ in 0..config.spheres {
        let radius = rng.random_range(0.8..1.4);
        let center = Vector3::new(rng.random_range(-10.0..-4.0), rng.random_range(-2.0..2.0), radius);
        let albedo = random_color(&mut rng);
        surfaces.push(Surface {
            kind: SurfaceKind::Sphere,
            shape: Shape::Sphere { center, radius },
            albedo,
            albedo_alt: albedo * 0.5,
            checker: 0.5,
        });
    }
    surfaces.push(Surface {
        kind: SurfaceKind::Backdrop,
        shape: Shape::Quad {
            center: Vector3::new(config.backdrop_x, 0.0, 10.0),
            u: z,
            v: y,
            half_u: 10.0,
            half_v: 22.0,
        },
        albedo: Vector3::new(0.75, 0.75, 0.8),
        albedo_alt: Vector3::new(0.6, 0.62, 0.7),
        checker: 4.0,
    });

    let mut gaussians = Vec::new();
    let mut gt_surface = Vec::new();
    for (si, s) in surfaces.iter().enumerate() {
        let spacing = if s.kind == SurfaceKind::Backdrop { config.backdrop_spacing } else { config.spacing };
        for (p, frame) in s.samples(spacing) {
            let q = rotation_to_quat(&frame);
            gaussians.push(Gaussian::new(
                p,
                q,
                Vector3::new(0.6 * spacing, 0.6 * spacing, 0.01),
                s.color_at(&p),
                0.95,
                0.5,
            )?);
            gt_surface.push(si);
        }
    }

    let mut trajectory = Vec::with_capacity(config.frames);
    for i in 0..config.frames {
        let f = if config.frames == 1 { 0.0 } else { i as f64 / (config.frames - 1) as f64 };
        let px = config.track_start + (config.track_end - config.track_start) * f;
        let py = 0.4 * (f * std::f64::consts::PI * 2.0).sin() + rng.random_range(-0.1..0.1);
        let yaw = rng.random_range(-4.0f64..4.0).to_radians();
        trajectory.push(Pose::new(forward_camera_rotation(yaw), Vector3::new(px, py, config.sensor_height))?);
    }

    let bg = config.background;
    Ok(SyntheticScene {
        surfaces,
        gt_map: GaussianMap::new(gaussians, Vector3::new(bg[0], bg[1], bg[2])),
        gt_surface,
        trajectory,
        camera: config.camera,
        lidar: config.lidar,
        seed,
    })
}

impl SyntheticScene {
    /// Nearest hit along a world-frame ray within `max_range`, with the surface index.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<(f64, usize)> {
        self.surfaces
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.intersect(origin, dir).map(|t| (t, i)))
            .filter(|&(t, _)| t <= max_range)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
    }

    /// Distance from a world point to the closest surface, and that surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> (f64, usize) {
        self.surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.distance(p), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("scenes always have surfaces")
    }

    pub fn is_backdrop(&self, surface: usize) -> bool {
        self.surfaces[surface].kind == SurfaceKind::Backdrop
    }
}

/// Casts the given sensor-frame rays from `pose`; returns hits in the sensor
/// frame. Rays that miss or exceed the range produce no return.
pub fn simulate_rays(
    scene: &SyntheticScene,
    pose: &Pose,
    dirs: &[Vector3<f64>],
    max_range: f64,
    range_noise: f64,
    rng: &mut impl Rng,
) -> PointCloud {
    let noise: Vec<f64> = if range_noise > 0.0 {
        let n = Normal::new(0.0, range_noise).expect("validated noise");
        (0..dirs.len()).map(|_| n.sample(rng)).collect()
    } else {
        vec![0.0; dirs.len()]
    };
    let points = dirs
        .par_iter()
        .zip(noise.par_iter())
        .filter_map(|(d, e)| {
            let world_dir = pose.rotation * d;
            scene
                .cast(&pose.translation, &world_dir, max_range)
                .map(|(t, _)| d * (t + e))
        })
        .collect();
    PointCloud { points }
}

pub fn simulate_lidar(scene: &SyntheticScene, pose: &Pose, pattern: &LidarPattern, rng: &mut impl Rng) -> PointCloud {
    simulate_rays(scene, pose, &pattern.directions(), pattern.max_range, pattern.range_noise, rng)
}

/// One scan per trajectory pose, deterministic in `seed`.
pub fn simulate_scans(scene: &SyntheticScene, seed: u64) -> Vec<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scene
        .trajectory
        .iter()
        .map(|p| simulate_lidar(scene, p, &scene.lidar, &mut rng))
        .collect()
}

pub fn render_gt_views(scene: &SyntheticScene) -> Vec<View> {
    scene
        .trajectory
        .iter()
        .map(|pose| View {
            image: render(&scene.gt_map, &scene.camera, pose).rgb,
            camera: scene.camera,
            pose: *pose,
        })
        .collect()
}

/// True when a world point lies inside the camera frustum up to `max_depth`.
pub fn in_frustum(cam: &Camera, pose: &Pose, p: &Vector3<f64>, max_depth: f64) -> bool {
    let c = pose.rotation.transpose() * (p - pose.translation);
    if !(c.z > cam.near && c.z < max_depth) {
        return false;
    }
    let u = cam.fx * c.x / c.z + cam.cx;
    let v = cam.fy * c.y / c.z + cam.cy;
    (0.0..cam.width as f64).contains(&u) && (0.0..cam.height as f64).contains(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::accumulate_lidar;

    fn scene(seed: u64) -> SyntheticScene {
        generate_scene(seed, &SceneConfig::default()).unwrap()
    }

    #[test]
    fn same_seed_same_scene() {
        let (a, b) = (scene(7), scene(7));
        assert_eq!(a.surfaces, b.surfaces);
        assert_eq!(a.gt_map, b.gt_map);
        assert_eq!(a.trajectory, b.trajectory);
        assert_ne!(scene(8).surfaces, a.surfaces);
    }

    #[test]
    fn building_count_and_bounds() {
        for seed in 0..10 {
            let s = scene(seed);
            let boxes = s.surfaces.iter().filter(|x| x.kind == SurfaceKind::Building).count() / 5;
            assert!((4..=8).contains(&boxes));
            for g in &s.gt_map.gaussians {
                assert!(g.mean.iter().all(|v| v.abs() <= 25.0));
            }
        }
    }

    #[test]
    fn backdrop_lies_beyond_lidar_range() {
        let s = scene(1);
        for pose in &s.trajectory {
            for surf in s.surfaces.iter().filter(|x| x.kind == SurfaceKind::Backdrop) {
                assert!(surf.distance(&pose.translation) > s.lidar.max_range);
            }
        }
    }

    #[test]
    fn gt_means_lie_on_their_surfaces() {
        let s = scene(2);
        for (g, &si) in s.gt_map.gaussians.iter().zip(&s.gt_surface) {
            assert!(s.surfaces[si].distance(&g.mean) < 1e-9);
        }
    }

    #[test]
    fn horizontal_ray_hits_plane() {
        let wall = Surface {
            kind: SurfaceKind::Building,
            shape: Shape::Quad {
                center: Vector3::new(5.0, 0.0, 0.0),
                u: Vector3::y(),
                v: Vector3::z(),
                half_u: 10.0,
                half_v: 10.0,
            },
            albedo: Vector3::repeat(0.5),
            albedo_alt: Vector3::repeat(0.5),
            checker: 1.0,
        };
        let mut s = scene(0);
        s.surfaces = vec![wall];
        let dirs = [sensor_direction(std::f64::consts::FRAC_PI_2, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hits = simulate_rays(&s, &Pose::identity(), &dirs, 30.0, 0.0, &mut rng);
        assert_eq!(hits.len(), 1);
        assert!((hits.points[0] - Vector3::new(5.0, 0.0, 0.0)).norm() < 1e-12);
        // away from the wall: no return
        let back = [sensor_direction(-std::f64::consts::FRAC_PI_2, 0.0)];
        assert!(simulate_rays(&s, &Pose::identity(), &back, 30.0, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn rays_toward_backdrop_return_nothing() {
        let s = scene(3);
        let pose = s.trajectory[0];
        // straight ahead and 20° up: over every building, toward the backdrop
        let dirs = [sensor_direction(0.0, 20f64.to_radians())];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(simulate_rays(&s, &pose, &dirs, 30.0, 0.0, &mut rng).is_empty());
        assert!(s.cast(&pose.translation, &(pose.rotation * dirs[0]), 1e3).is_some_and(|(_, i)| s.is_backdrop(i)));
    }

    #[test]
    fn range_noise_has_requested_spread() {
        let mut s = scene(0);
        s.surfaces.retain(|x| x.kind == SurfaceKind::Ground);
        let pose = s.trajectory[0];
        let pattern = LidarPattern {
            azimuth_steps: 500,
            elevation_min_deg: -70.0,
            elevation_max_deg: -35.0,
            elevation_steps: 20,
            max_range: 30.0,
            range_noise: 0.02,
        };
        let dirs = pattern.directions();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy = simulate_rays(&s, &pose, &dirs, 30.0, 0.02, &mut rng);
        let clean = simulate_rays(&s, &pose, &dirs, 30.0, 0.0, &mut rng);
        assert_eq!(noisy.len(), clean.len());
        assert!(noisy.len() >= 9_000);
        let r: Vec<f64> = noisy.points.iter().zip(&clean.points).map(|(a, b)| a.norm() - b.norm()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let std = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        assert!((std - 0.02).abs() < 0.002, "sample std {std}");
    }

    #[test]
    fn accumulated_scans_lie_on_surfaces() {
        let s = scene(4);
        let scans = simulate_scans(&s, 4);
        let cloud = accumulate_lidar(&scans, &s.trajectory, None).unwrap();
        assert!(cloud.len() > 1000);
        for p in &cloud.points {
            let (d, i) = s.surface_distance(p);
            assert!(d < 1e-6, "point {p:?} is {d} m from a surface");
            assert!(!s.is_backdrop(i));
        }
    }

    #[test]
    fn gt_views_are_reproducible() {
        let s = scene(5);
        let views = render_gt_views(&s);
        assert_eq!(views.len(), s.trajectory.len());
        let again = render(&s.gt_map, &s.camera, &views[3].pose).rgb;
        assert_eq!(again, views[3].image);
    }

    #[test]
    fn sky_view_is_background_dominated() {
        let s = scene(5);
        // camera pitched straight up
        let up = Matrix3::from_columns(&[-Vector3::y(), Vector3::x(), Vector3::z()]);
        let pose = Pose::new(up, Vector3::new(-20.0, 0.0, 1.5)).unwrap();
        let img = render(&s.gt_map, &s.camera, &pose);
        let bg = s.gt_map.background;
        let close = (0..s.camera.height)
            .flat_map(|y| (0..s.camera.width).map(move |x| (x, y)))
            .filter(|&(x, y)| (img.rgb.pixel(x, y) - bg).norm() < 1e-3)
            .count();
        assert!(close as f64 > 0.9 * (s.camera.width * s.camera.height) as f64, "{close}");
    }

    #[test]
    fn consecutive_views_overlap() {
        let s = scene(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let samples: Vec<Vector3<f64>> = (0..20_000)
            .map(|_| Vector3::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0), rng.random_range(0.0..20.0)))
            .collect();
        for w in s.trajectory.windows(2) {
            let a: Vec<&Vector3<f64>> = samples.iter().filter(|p| in_frustum(&s.camera, &w[0], p, 30.0)).collect();
            let shared = a.iter().filter(|p| in_frustum(&s.camera, &w[1], p, 30.0)).count();
            assert!(shared as f64 > 0.5 * a.len() as f64);
        }
    }
}
