//! Crash-safe output helpers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::{NamedTempFile, TempDir};

/// Writes `bytes` to a temp file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Regular files in `dir` with extension `ext`, sorted by file name.
pub fn list_files(dir: &Path, ext: &str) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// A scratch directory next to the final output. Everything is written
/// here; [`Staging::commit`] swaps it into place, and dropping it without a
/// commit deletes it.
pub struct Staging {
    dir: TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> io::Result<Self> {
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let dir = tempfile::Builder::new().prefix(&format!(".{name}.staging-")).tempdir_in(parent)?;
        Ok(Staging {
            dir,
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.dir.path().join(rel), bytes)
    }

    /// Replaces the target directory with the staged tree.
    pub fn commit(self) -> io::Result<PathBuf> {
        let staged = self.dir.keep();
        if self.target.exists() {
            fs::remove_dir_all(&self.target)?;
        }
        fs::rename(&staged, &self.target)?;
        Ok(self.target)
    }

    /// Moves each top-level entry of the staged tree into the target,
    /// replacing entries of the same name and leaving the others alone.
    pub fn commit_entries(self) -> io::Result<PathBuf> {
        fs::create_dir_all(&self.target)?;
        let mut entries: Vec<PathBuf> = fs::read_dir(self.dir.path())?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        entries.sort();
        for src in entries {
            let dst = self.target.join(src.file_name().unwrap_or_default());
            if dst.is_dir() {
                fs::remove_dir_all(&dst)?;
            } else if dst.exists() {
                fs::remove_file(&dst)?;
            }
            fs::rename(&src, &dst)?;
        }
        Ok(self.target)
    }
}
