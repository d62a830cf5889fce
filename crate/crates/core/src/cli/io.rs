use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raw::{load_raw, RawPatch, SensorProfile};
use crate::train::TrainPair;

pub const LRF_EXT: &str = "lrf";
pub const NOISY_SUFFIX: &str = "_noisy";

/// One LRF file of a dataset directory, black-subtracted.
#[derive(Clone, Debug)]
pub struct Frame {
    pub stem: String,
    pub path: PathBuf,
    pub patch: RawPatch,
    pub profile: SensorProfile,
}

fn lrf_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(LRF_EXT) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

fn load_frame(stem: String, path: PathBuf) -> Result<Frame> {
    let (patch, profile) = load_raw(&path)?;
    Ok(Frame {
        stem,
        path,
        patch: patch.to_black_subtracted(),
        profile,
    })
}

/// Clean frames of `dir` (every `*.lrf` not ending in `_noisy`), sorted by name.
pub fn load_clean_dir(dir: &Path) -> Result<Vec<Frame>> {
    let frames: Vec<Frame> = lrf_stems(dir)?
        .into_iter()
        .filter(|(s, _)| !s.ends_with(NOISY_SUFFIX))
        .map(|(s, p)| load_frame(s, p))
        .collect::<Result<_>>()?;
    if frames.is_empty() {
        return Err(Error::InsufficientData(format!("no clean .lrf files in {}", dir.display())));
    }
    Ok(frames)
}

/// The noisy partner `X_noisy.lrf` in `dir` of clean frame `X`.
pub fn noisy_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}{NOISY_SUFFIX}.{LRF_EXT}"))
}

/// Pairs `X.lrf` in `clean_dir` with `X_noisy.lrf` in `noisy_dir`; the
/// pair carries the noisy file's profile.
pub fn load_pairs(clean_dir: &Path, noisy_dir: &Path) -> Result<(Vec<String>, Vec<TrainPair>, Vec<PathBuf>)> {
    let clean = load_clean_dir(clean_dir)?;
    let mut names = Vec::with_capacity(clean.len());
    let mut pairs = Vec::with_capacity(clean.len());
    let mut files = Vec::with_capacity(2 * clean.len());
    for c in clean {
        let np = noisy_path(noisy_dir, &c.stem);
        if !np.exists() {
            return Err(Error::InsufficientData(format!(
                "{} has no partner {}",
                c.path.display(),
                np.display()
            )));
        }
        let n = load_frame(c.stem.clone(), np)?;
        pairs.push(TrainPair::new(c.patch, n.patch, n.profile)?);
        files.push(c.path);
        files.push(n.path);
        names.push(c.stem);
    }
    Ok((names, pairs, files))
}

/// Refuses to replace `path` unless `force`.
pub fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `path` with `suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}
