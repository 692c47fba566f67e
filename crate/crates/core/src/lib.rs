//! Real-time co-speech gesture synthesis: motion I/O, action features, a
//! multimodal transformer, a motion-graph retriever, blending, metrics and a
//! streaming runtime.

pub mod blend;
pub mod bvh;
pub mod cli;
pub mod features;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pca;
pub mod quat;
pub mod runtime;
pub mod synth;
pub mod trmf;
