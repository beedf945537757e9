use std::path::{Path, PathBuf};

use meshprior_core::{
    ColmapError, ColorError, MeshError, MetricsError, RegistrationError, SamplerError, SplatError,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Colmap(#[from] ColmapError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Render(#[from] SplatError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl AppError {
    /// Stable category used in the `error: <kind>: <message>` line.
    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Mesh(_) => "mesh",
            AppError::Colmap(_) => "colmap",
            AppError::Sampler(_) => "sampler",
            AppError::Color(_) => "color",
            AppError::Registration(_) => "registration",
            AppError::Render(_) => "render",
            AppError::Metrics(_) => "metrics",
            AppError::Io { .. } => "io",
            AppError::Image { .. } => "image",
        }
    }

    /// One machine-parsable line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {}", self.kind(), msg)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, AppError> {
    std::fs::read(path).map_err(|e| AppError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn open_image(path: &Path) -> Result<image::RgbImage, AppError> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| AppError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
