#![allow(dead_code)]

use cospeech_core::model::ModelParams;
use cospeech_core::runtime::artifacts::build_artifacts;
use cospeech_core::runtime::{mock_sentence, ActionLibrary, Engine, EngineConfig, ScriptedSentence};
use cospeech_core::synth::synthetic_corpus;

/// Reduced model dimensions so runtime tests stay fast.
pub fn small_config() -> EngineConfig {
    EngineConfig {
        window: 4,
        d_text: 24,
        d_audio: 16,
        d_model: 32,
        layers: 2,
        heads: 1,
        ff_width: 64,
        k: 5,
        seed: 3,
        ..EngineConfig::default()
    }
}

pub fn engine_with(config: EngineConfig) -> Engine {
    let clips = synthetic_corpus(30, 7);
    let (pca, graph) = build_artifacts(&clips, config.k).unwrap();
    let library = ActionLibrary::new(clips).unwrap();
    let params = ModelParams::init(config.model_config(), config.seed).unwrap();
    Engine::new(config, params, Some(graph), Some(pca), library).unwrap()
}

pub fn script(config: &EngineConfig, lines: &[(&str, f64)]) -> Vec<ScriptedSentence> {
    lines
        .iter()
        .map(|(text, duration)| {
            let (t, a) = mock_sentence(text, None, config.seed, config.d_text, config.d_audio);
            ScriptedSentence {
                text: t,
                audio: a,
                duration: *duration,
            }
        })
        .collect()
}

pub const SCRIPT: [(&str, f64); 3] = [
    ("Thanks for having me here today.", 1.9),
    ("I want to show you something unusual.", 2.4),
    ("It starts with a single question.", 1.6),
];
