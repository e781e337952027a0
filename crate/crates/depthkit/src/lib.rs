//! File formats, dataset pipelines, the annotation service and the
//! command-line front end built on `depthkit-core`.

pub mod cli;
pub mod config;
pub mod depthio;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod service;
pub mod synthgen;
pub mod taxonomy;

pub use depthkit_core as core;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Manifest(#[from] manifest::ManifestError),
    #[error(transparent)]
    Depth(#[from] depthio::IoError),
    #[error(transparent)]
    Core(#[from] depthkit_core::Error),
    #[error(transparent)]
    Annotation(#[from] depthkit_core::annotation::AnnotationError),
    #[error(transparent)]
    Taxonomy(#[from] taxonomy::TaxonomyError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration, 3 for data, 4 for internal
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Taxonomy(_) => 2,
            Error::Core(depthkit_core::Error::InvalidConfig(_)) => 2,
            Error::Internal(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
