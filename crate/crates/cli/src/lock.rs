use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Exclusive claim on a checkpoint file, held for the life of a watcher.
#[derive(Debug)]
pub struct CheckpointLock {
    path: PathBuf,
}

impl CheckpointLock {
    pub fn lock_path(checkpoint: &Path) -> PathBuf {
        let mut name = checkpoint.as_os_str().to_owned();
        name.push(".lock");
        PathBuf::from(name)
    }

    pub fn acquire(checkpoint: &Path) -> Result<Self, CliError> {
        let path = Self::lock_path(checkpoint);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(CheckpointLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "checkpoint {} is in use by another watcher; delete {} if that process is gone",
                checkpoint.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Config(format!(
                "cannot create {}: {e}",
                path.display()
            ))),
        }
    }
}

impl Drop for CheckpointLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
