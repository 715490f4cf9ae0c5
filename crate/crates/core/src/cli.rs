//! Command-line front end: `synth`, `train`, `render`, `localize`, `eval`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure. Diagnostics go to standard error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GaussianMap, Pose};
use crate::io::{self, Config, DatasetBundle, PoseFormat};
use crate::localize::{localize, perturb_pose, pose_error, TraceRecord};
use crate::metrics::{geom_report, photo_report, GeomReport, PhotoReport};
use crate::render::render;
use crate::synth::{generate_scene, render_gt_views, simulate_scans};
use crate::train::{accumulate_lidar, train_on_cloud, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "geomsplat", version, about = "Geometry-aware Gaussian splatting on the CPU")]
pub struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (images, scans, poses, ground-truth map).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train a map on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a map at the dataset poses, or at one `--pose`.
    Render {
        /// Checkpoint (`.ggs`) or Gaussian PLY.
        #[arg(long)]
        map: PathBuf,
        /// Dataset supplying the camera and, without `--pose`, the poses.
        #[arg(long)]
        data: PathBuf,
        /// Twelve numbers: row-major 3×4 sensor-to-world matrix.
        #[arg(long)]
        pose: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize one dataset frame against a map from a perturbed start.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Initial pose (twelve numbers); overrides `--init-error`.
        #[arg(long)]
        pose: Option<String>,
        /// Rotation (degrees) and translation (meters) of the random start.
        #[arg(long, num_args = 2, value_names = ["DEG", "M"], default_values_t = [20.0, 2.0])]
        init_error: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Geometry and photometric metrics of a map against a dataset.
    Eval {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append one row to this CSV table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_USAGE,
        Error::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NonFinite { dump: Some(d), .. } = &e {
                eprintln!("diagnostics: {}", serde_json::to_string(d).unwrap_or_default());
            }
            exit_code(&e)
        }
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} `{}` does not exist", path.display())))
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => {
            require(p, "config")?;
            io::read_config(p)
        }
        None => Ok(Config::default()),
    }
}

/// Map from a `GGS1` checkpoint or a Gaussian PLY, chosen by content.
pub fn load_map(path: &Path) -> Result<GaussianMap> {
    require(path, "map")?;
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(io::checkpoint::MAGIC) {
        Ok(io::checkpoint::decode_checkpoint(&bytes)?.map)
    } else {
        io::ply::map_from_ply(&io::ply::parse_ply(&bytes)?)
    }
}

fn load_data(path: &Path) -> Result<DatasetBundle> {
    require(path, "dataset")?;
    io::read_bundle(path)
}

fn parse_pose_arg(text: &str) -> Result<Pose> {
    let poses = io::poses::parse_poses(&text.replace(',', " "), PoseFormat::Matrix3x4)?;
    match poses.as_slice() {
        [p] => Ok(*p),
        _ => Err(Error::invalid("--pose needs exactly twelve numbers")),
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| Error::invalid(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub gaussians: usize,
    pub geometry: GeomReport,
    pub photometric: PhotoReport,
}

#[derive(Debug, Clone, Serialize)]
struct LocalizeSummary {
    frame: usize,
    initial_rot_err_deg: f64,
    initial_trans_err_m: f64,
    rot_err_deg: f64,
    trans_err_m: f64,
    outer_iterations: usize,
    converged: bool,
}

/// Scores `map` against the dataset's accumulated LiDAR, downsampled as for
/// training, and against every image.
pub fn evaluate(map: &GaussianMap, data: &DatasetBundle, config: &Config) -> Result<EvalReport> {
    let cloud = accumulate_lidar(&data.scans, &data.scan_poses, Some(config.train.voxel_size))?;
    let geometry = geom_report(&map.means(), &cloud, &config.metrics.thresholds, config.metrics.threshold_mode)?;
    let rendered: Vec<_> = data.views.iter().map(|v| render(map, &v.camera, &v.pose).rgb).collect();
    let photometric = photo_report(rendered.iter().zip(data.views.iter().map(|v| &v.image)))?;
    Ok(EvalReport { gaussians: map.len(), geometry, photometric })
}

fn execute(cli: &Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth { out, seed } => {
            let scene = generate_scene(*seed, &config.synth)?;
            let views = render_gt_views(&scene);
            let scans = simulate_scans(&scene, *seed);
            let bundle = DatasetBundle::from_synthetic(&scene, views, scans)?;
            let extra = vec![
                ("gt_map.ply".to_string(), io::ply::encode_ply(&io::ply::map_to_ply(&scene.gt_map))),
                ("surfaces.json".to_string(), json_bytes(&scene.surfaces)?),
            ];
            io::write_bundle(out, &bundle, extra)?;
            eprintln!("wrote {} frames to {}", bundle.views.len(), out.display());
        }
        Command::Train { data, out, seed } => {
            let data = load_data(data)?;
            let mut tc = config.train_config();
            if let Some(s) = seed {
                tc.seed = *s;
            }
            let cloud = accumulate_lidar(&data.scans, &data.scan_poses, Some(tc.voxel_size))?;
            let outcome = train_on_cloud(&data.views, &cloud, &tc)?;
            let m = &outcome.report.final_metrics;
            eprintln!(
                "trained {} gaussians: psnr {:.2} dB, ssim {:.3}, chamfer {:.4}",
                m.gaussians, m.psnr, m.ssim, m.geometry.chamfer
            );
            let effective = Config { train: TrainConfig { seed: tc.seed, ..config.train.clone() }, ..config.clone() };
            let ck = io::Checkpoint { map: outcome.map.clone(), optimizer: Some(outcome.optimizer) };
            let files = vec![
                ("checkpoint.ggs".to_string(), io::checkpoint::encode_checkpoint(&ck)?),
                ("map.ply".to_string(), io::ply::encode_ply(&io::ply::map_to_ply(&outcome.map))),
                ("report.jsonl".to_string(), io::reports::encode_jsonl(&outcome.report.history)?),
                ("densify.jsonl".to_string(), io::reports::encode_jsonl(&outcome.report.densify)?),
                ("metrics.json".to_string(), json_bytes(&outcome.report.final_metrics)?),
                ("config.toml".to_string(), io::config::format_config(&effective)?.into_bytes()),
            ];
            io::write_dir_atomic(out, "checkpoint.ggs", &files)?;
        }
        Command::Render { map, data, pose, out } => {
            let map = load_map(map)?;
            let data = load_data(data)?;
            let poses = match pose {
                Some(p) => vec![parse_pose_arg(p)?],
                None => data.views.iter().map(|v| v.pose).collect(),
            };
            let mut files = vec![("poses.txt".to_string(), io::poses::format_poses(&poses, PoseFormat::Matrix3x4).into_bytes())];
            for (i, p) in poses.iter().enumerate() {
                let img = render(&map, &data.camera, p).rgb;
                files.push((format!("{i:06}.png"), io::images::encode_png(&img)?));
            }
            io::write_dir_atomic(out, "poses.txt", &files)?;
            eprintln!("rendered {} views to {}", poses.len(), out.display());
        }
        Command::Localize { map, data, frame, pose, init_error, seed, out } => {
            let map = load_map(map)?;
            let data = load_data(data)?;
            let view = data
                .views
                .get(*frame)
                .ok_or_else(|| Error::invalid(format!("frame {frame} out of range ({} views)", data.views.len())))?;
            let scan = data.scans.get(*frame).ok_or_else(|| Error::invalid(format!("frame {frame} has no scan")))?;
            if data.scan_poses[*frame] != view.pose {
                return Err(Error::invalid(format!("frame {frame}: scan and image poses differ")));
            }
            let gt = view.pose;
            let init = match pose {
                Some(p) => parse_pose_arg(p)?,
                None => {
                    let (deg, m) = (init_error[0], init_error[1]);
                    if !(deg >= 0.0 && m >= 0.0) {
                        return Err(Error::Config { key: "--init-error".into(), message: "must be non-negative".into() });
                    }
                    perturb_pose(&gt, deg, m, &mut ChaCha8Rng::seed_from_u64(*seed))
                }
            };
            let (est, trace) = localize(&map, scan, &view.image, &view.camera, &init, Some(&gt), &config.localize)?;
            let (r0, t0) = pose_error(&init, &gt);
            let (r, t) = pose_error(&est, &gt);
            println!("initial error {r0:.4} deg {t0:.4} m -> final {r:.4} deg {t:.4} m");
            let records: Vec<TraceRecord> = std::iter::once(trace.initial).chain(trace.records.iter().copied()).collect();
            let summary = LocalizeSummary {
                frame: *frame,
                initial_rot_err_deg: r0,
                initial_trans_err_m: t0,
                rot_err_deg: r,
                trans_err_m: t,
                outer_iterations: trace.records.len(),
                converged: trace.converged,
            };
            let all_poses: Vec<Pose> = records.iter().map(|r| r.pose).collect();
            let files = vec![
                ("pose.txt".to_string(), io::poses::format_poses(&[est], PoseFormat::Matrix3x4).into_bytes()),
                ("trace.jsonl".to_string(), io::reports::encode_jsonl(&records)?),
                ("trace_poses.txt".to_string(), io::poses::format_poses(&all_poses, PoseFormat::Matrix3x4).into_bytes()),
                ("summary.json".to_string(), json_bytes(&summary)?),
            ];
            io::write_dir_atomic(out, "pose.txt", &files)?;
        }
        Command::Eval { map: map_path, data, out, csv } => {
            let map = load_map(map_path)?;
            let data = load_data(data)?;
            let report = evaluate(&map, &data, &config)?;
            let label = map_path.display().to_string();
            let header = format!("{},gaussians,psnr,ssim", report.geometry.csv_header());
            let row = format!(
                "{},{},{:.4},{:.4}",
                report.geometry.csv_row(&label),
                report.gaussians,
                report.photometric.psnr,
                report.photometric.ssim
            );
            println!("{header}\n{row}");
            if let Some(c) = csv {
                io::reports::append_csv_row(c, &header, &row)?;
            }
            if let Some(o) = out {
                io::write_atomic(o, &json_bytes(&report)?)?;
            }
        }
    }
    Ok(())
}
