//! Few-shot neural radiance fields built on multi-input MLPs.
//!
//! The crate contains everything needed to train and evaluate a radiance
//! field on a CPU: a reverse-mode differentiation tape ([`autodiff`]),
//! positional encodings ([`encoding`]), the vanilla, multi-input and
//! dual-branch networks ([`model`]), pinhole rendering and volume
//! compositing ([`render`]), dataset ingestion and analytic scenes
//! ([`data`]), the optimisation loop ([`train`]) and image metrics
//! ([`metrics`]).

pub mod autodiff;
pub mod data;
pub mod encoding;
pub mod img;
pub mod metrics;
pub mod model;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod render;
pub mod rng;
pub mod train;

use thiserror::Error;

pub use autodiff::{AutodiffError, Matrix, NodeId, Tape};
pub use data::{AnalyticScene, Dataset};
pub use encoding::EncodingConfig;
pub use img::Image;
pub use metrics::MetricReport;
pub use model::{Model, ModelConfig, ModelParams, Variant};
pub use render::{CameraPose, Intrinsics, Ray, RenderConfig};
pub use train::{TrainConfig, Telemetry};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image {0}: {1}")]
    Image(String, String),
    #[error("json {0}: {1}")]
    Json(String, String),
    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss {
        iteration: usize,
        loss: f64,
        /// Parameters as they were before the failing step.
        params: Box<ModelParams>,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
