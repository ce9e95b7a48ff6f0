//! IO, file formats and command-line plumbing around [`stan_core`].

use std::path::{Path, PathBuf};

pub mod attention;
pub mod cli;
pub mod config;
pub mod dataset_file;
pub mod ingest;
pub mod report;
pub mod run;
pub mod synth_file;

pub use stan_core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] stan_core::train::TrainError),
    #[error(transparent)]
    Model(#[from] stan_core::model::ModelError),
    #[error(transparent)]
    Synth(#[from] stan_core::synth::SynthError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] stan_core::tensor::TensorError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    /// Process exit status: 2 for unreadable or malformed inputs, 3 for bad
    /// configuration, 4 when a computation fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Stream(_) | Error::Input(_) | Error::Format(_) | Error::Checkpoint(_) => 2,
            Error::Config(_) => 3,
            Error::Train(_) | Error::Model(_) | Error::Synth(_) => 4,
        }
    }
}

pub mod checkpoint {
    use std::fs;
    use std::path::Path;

    use stan_core::tensor::checkpoint::{decode, encode};
    use stan_core::ModelParams;

    use crate::Error;

    pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
        let arrays = params.named_arrays();
        encode(arrays.iter().map(|(n, t)| (*n, t)))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams, Error> {
        let arrays = decode(bytes)?;
        Ok(ModelParams::from_named_arrays(arrays.iter().map(|(n, t)| (n.as_str(), t)))?)
    }

    pub fn save(params: &ModelParams, path: &Path) -> Result<(), Error> {
        fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelParams, Error> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        from_bytes(&bytes)
    }
}
