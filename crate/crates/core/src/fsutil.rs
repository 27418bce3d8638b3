//! File writes that create missing parent directories.

use std::fs::{self, File};
use std::path::Path;

use crate::error::{Error, Result};

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub(crate) fn create_file(path: &Path) -> Result<File> {
    ensure_parent(path)?;
    File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
