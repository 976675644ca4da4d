use std::io;
use std::path::{Path, PathBuf};

use dtd_core::detector::ModelError;
use dtd_core::net::NetError;
use dtd_core::pipeline::PipelineError;
use dtd_core::synth::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum DtdError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unreadable file {}: {reason}", path.display())]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("{}: frame is {}x{}, earlier frames are {}x{}", path.display(), actual.0, actual.1, expected.0, expected.1)]
    MixedDimensions { path: PathBuf, expected: (usize, usize), actual: (usize, usize) },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: line {line}: {reason}", path.display())]
    BadRecord { path: PathBuf, line: usize, reason: String },
    #[error("{}: {reason}", path.display())]
    BadWeights { path: PathBuf, reason: String },
    #[error("detector model: {0}")]
    Model(ModelError),
    #[error("landmark network: {0}")]
    Net(NetError),
    #[error("pipeline: {0}")]
    Pipeline(PipelineError),
    #[error("synthetic scene: {0}")]
    Synth(SynthError),
    #[error("{0}")]
    Invalid(String),
}

impl DtdError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DtdError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        DtdError::Json { path: path.to_path_buf(), source }
    }
}

impl From<ModelError> for DtdError {
    fn from(e: ModelError) -> Self {
        DtdError::Model(e)
    }
}

impl From<NetError> for DtdError {
    fn from(e: NetError) -> Self {
        DtdError::Net(e)
    }
}

impl From<PipelineError> for DtdError {
    fn from(e: PipelineError) -> Self {
        DtdError::Pipeline(e)
    }
}

impl From<SynthError> for DtdError {
    fn from(e: SynthError) -> Self {
        DtdError::Synth(e)
    }
}
