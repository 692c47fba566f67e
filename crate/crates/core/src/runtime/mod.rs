//! Live pipeline: sentence ingestion, prediction, retrieval, timeline
//! blending, frame emission and recording.

pub mod artifacts;
mod config;
mod engine;
mod library;
mod mock;
pub mod server;
mod session;

use thiserror::Error;

pub use config::{Ablations, EngineConfig, CONFIG_ENV};
pub use engine::{
    measure_pipeline, sentence_durations, Engine, PipelineReport, Retrieval, ScriptedSentence, StageTimings, Synthesis,
};
pub use library::{clip_file_name, clip_path, ActionLibrary};
pub use mock::{mock_embed, mock_sentence};
pub use session::{clip_span_frames, BoneState, PoseFrame, Predictor, Segment, SessionState, Timeline};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0} not loaded")]
    NotLoaded(&'static str),
    #[error("library: {0}")]
    Library(String),
    #[error("input: {0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Pca(#[from] crate::pca::PcaError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Trmf(#[from] crate::trmf::TrmfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
