use thiserror::Error;

use crate::visibility::SphericalCapSolution;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate surface geometry: {0}")]
    DegenerateGeometry(String),

    #[error("view optimisation stopped after {iterations} iterations without converging")]
    Optimisation {
        iterations: usize,
        best: SphericalCapSolution,
    },

    #[error("failed to load mesh {path}: {reason}")]
    MeshLoad { path: String, reason: String },

    #[error("malformed PLY data: {0}")]
    Ply(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("plot rendering failed: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
