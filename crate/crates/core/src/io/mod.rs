//! File formats and persistence. Every writer goes through [`write_atomic`],
//! so a failed run never leaves a partially written file behind.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod images;
pub mod ply;
pub mod poses;
pub mod reports;

pub use bundle::{read_bundle, write_bundle, DatasetBundle, DatasetSource};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{read_config, write_config, Config, MetricsConfig};
pub use images::{read_image, write_image};
pub use ply::{read_cloud, read_map, read_ply, write_cloud, write_map, write_ply};
pub use poses::{read_poses, write_poses, PoseFormat};

/// Writes to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent)?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Builds a directory of `files` beside `dir` and renames it into place.
/// An existing `dir` is replaced only when it is empty or holds `marker`,
/// i.e. it came from an earlier run of the same kind.
pub fn write_dir_atomic(dir: &Path, marker: &str, files: &[(String, Vec<u8>)]) -> Result<()> {
    if !files.iter().any(|(name, _)| name == marker) {
        return Err(crate::Error::ContractViolation(format!("output set lacks its marker `{marker}`")));
    }
    if dir.exists() {
        let empty = std::fs::read_dir(dir)?.next().is_none();
        if !empty && !dir.join(marker).is_file() {
            return Err(crate::Error::invalid(format!(
                "{} exists and was not written by this command (no `{marker}`)",
                dir.display()
            )));
        }
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent)?;
    let tmp = tempfile::Builder::new().prefix(".partial-").tempdir_in(parent)?;
    for (name, bytes) in files {
        let path = tmp.path().join(name);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p)?;
        }
        std::fs::write(&path, bytes)?;
    }
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    let kept = tmp.keep();
    std::fs::rename(&kept, dir).inspect_err(|_| {
        let _ = std::fs::remove_dir_all(&kept);
    })?;
    Ok(())
}
