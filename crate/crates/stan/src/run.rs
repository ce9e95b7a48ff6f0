//! Append-only run directories.
//!
//! Each command that produces artifacts gets a fresh directory named by seed
//! and UTC start time. An `INCOMPLETE` marker sits in the directory until
//! the command finishes, so a crashed run is recognizable.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;

use crate::Error;

pub const INCOMPLETE: &str = "INCOMPLETE";

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Create `<root>/seed<seed>-<YYYYmmddTHHMMSSZ>`, adding a numeric
    /// suffix if that name is taken.
    pub fn create(root: &Path, seed: u64) -> Result<Self, Error> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let stamp = Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("seed{seed}-{stamp}");
        let mut path = root.join(&base);
        let mut k = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    k += 1;
                    path = root.join(format!("{base}-{k}"));
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        let run = Self { path };
        run.write(INCOMPLETE, b"")?;
        Ok(run)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Write a new artifact; existing files are never replaced.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, Error> {
        let p = self.file(name);
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(&p).map_err(|e| Error::io(&p, e))?;
        std::io::Write::write_all(&mut f, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn finish(self) -> Result<PathBuf, Error> {
        let marker = self.file(INCOMPLETE);
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        Ok(self.path)
    }
}
