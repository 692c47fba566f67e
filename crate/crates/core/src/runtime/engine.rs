use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};

use super::config::EngineConfig;
use super::library::ActionLibrary;
use super::session::{Predictor, SessionState, Timeline};
use super::RuntimeError;
use crate::bvh::BvhClip;
use crate::features::{ACTION_DIM, DEFAULT_RESAMPLE_FRAMES};
use crate::graph::{constrained_search_with, load_graph, MotionGraph, SearchOptions};
use crate::metrics::aits;
use crate::model::{forward, load_checkpoint, ModelParams};
use crate::pca::PcaModel;

/// Wall-clock seconds spent in each stage of one sentence.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    /// Window update, fusion and encoder forward pass.
    pub forward: f64,
    pub search: f64,
    /// Clip lookup or generation plus timeline placement.
    pub schedule: f64,
}

impl StageTimings {
    pub fn sum(&self) -> f64 {
        self.forward + self.search + self.schedule
    }
}

/// Result of the inference half of a sentence.
#[derive(Debug, Clone)]
pub struct Retrieval {
    pub prediction: Vec<f32>,
    /// Retrieved graph node; `None` when retrieval is disabled.
    pub node: Option<usize>,
    pub tau: f64,
    /// True when nothing satisfied τ and the search was rerun with τ = 0.
    pub relaxed: bool,
    pub clip: Arc<BvhClip>,
    pub timings: StageTimings,
}

/// Immutable artifacts shared by every session.
#[derive(Debug)]
pub struct Engine {
    pub config: EngineConfig,
    pub params: ModelParams<f32>,
    pub graph: Option<MotionGraph>,
    pub pca: Option<PcaModel>,
    pub library: ActionLibrary,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        params: ModelParams<f32>,
        graph: Option<MotionGraph>,
        pca: Option<PcaModel>,
        library: ActionLibrary,
    ) -> Result<Engine, RuntimeError> {
        config.validate()?;
        let mc = &params.config;
        if (mc.d_text, mc.d_audio, mc.window) != (config.d_text, config.d_audio, config.window) {
            return Err(RuntimeError::Config(format!(
                "model expects d_text {}, d_audio {}, window {}; configuration has {}, {}, {}",
                mc.d_text, mc.d_audio, mc.window, config.d_text, config.d_audio, config.window
            )));
        }
        let want = config.model_config();
        if (mc.fusion, mc.attention) != (want.fusion, want.attention) {
            return Err(RuntimeError::Config(format!(
                "model was built with {:?} fusion and {:?} attention, the ablation flags ask for {:?} and {:?}",
                mc.fusion, mc.attention, want.fusion, want.attention
            )));
        }
        if let Some(g) = &graph {
            if g.len() > library.len() {
                return Err(RuntimeError::Library(format!(
                    "graph has {} nodes but the library holds {} clips",
                    g.len(),
                    library.len()
                )));
            }
        }
        if let Some(p) = &pca {
            let width = library.clips[0].total_channels() * DEFAULT_RESAMPLE_FRAMES;
            if p.output_dim != ACTION_DIM || p.input_dim != width {
                return Err(RuntimeError::Config(format!(
                    "PCA maps {} -> {}, expected {width} -> {ACTION_DIM}",
                    p.input_dim, p.output_dim
                )));
            }
        }
        Ok(Engine {
            config,
            params,
            graph,
            pca,
            library,
        })
    }

    /// Loads every artifact named in `config`. Without a checkpoint the model
    /// is randomly initialised from `config.seed`.
    pub fn load(config: EngineConfig) -> Result<Engine, RuntimeError> {
        let params = match &config.model {
            Some(p) => load_checkpoint(p)?,
            None => ModelParams::init(config.model_config(), config.seed)?,
        };
        let graph = config.graph.as_deref().map(load_graph).transpose()?;
        let pca = config.pca.as_deref().map(PcaModel::load).transpose()?;
        let dir = config
            .library
            .as_deref()
            .ok_or(RuntimeError::NotLoaded("action library"))?;
        let count = match &graph {
            Some(g) => g.len(),
            None => count_library_files(dir)?,
        };
        let library = ActionLibrary::load_dir(dir, count)?;
        Engine::new(config, params, graph, pca, library)
    }

    pub fn predictor(&self) -> Predictor {
        Predictor::new(self.config.window, self.config.d_text, self.config.d_audio)
    }

    pub fn timeline(&self, record: bool) -> Timeline {
        Timeline::new(
            self.library.skeleton().to_vec(),
            self.config.fps,
            self.config.overlap,
            record,
        )
    }

    pub fn session(&self, record: bool) -> SessionState {
        SessionState {
            predictor: self.predictor(),
            timeline: self.timeline(record),
        }
    }

    /// Slides the window, predicts the next action feature and picks the
    /// clip to play for a sentence whose audio lasts `duration` seconds.
    pub fn predict(
        &self,
        state: &mut Predictor,
        text: &[f32],
        audio: &[f32],
        duration: f64,
    ) -> Result<Retrieval, RuntimeError> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(RuntimeError::Input(format!("invalid sentence duration {duration}")));
        }
        let t0 = Instant::now();
        let window = state.window.slide(text, audio)?;
        let prediction = forward(&self.params, &window)?;
        let t1 = Instant::now();
        state.window = window;
        state.sentences += 1;
        let tau = self.config.coverage_factor * duration;

        if self.config.ablations.mga {
            let clip = Arc::new(self.generate_clip(&prediction, duration)?);
            state.last_feature = Some(prediction.clone());
            let t2 = Instant::now();
            return Ok(Retrieval {
                prediction,
                node: None,
                tau,
                relaxed: false,
                clip,
                timings: StageTimings {
                    forward: (t1 - t0).as_secs_f64(),
                    search: 0.0,
                    schedule: (t2 - t1).as_secs_f64(),
                },
            });
        }

        let graph = self.graph.as_ref().ok_or(RuntimeError::NotLoaded("motion graph"))?;
        let opts = SearchOptions {
            top_k: self.config.top_k,
            max_visits: self.config.max_visits,
        };
        let prev = state.last_feature.as_deref().unwrap_or(&prediction);
        let mut relaxed = false;
        let mut node = constrained_search_with(graph, prev, &prediction, tau, &opts)?.node;
        if node.is_none() {
            relaxed = true;
            state.relaxations += 1;
            node = constrained_search_with(graph, prev, &prediction, 0.0, &opts)?.node;
            let fallback = node.unwrap_or_else(|| graph.nearest(&prediction));
            warn!(
                "sentence {}: no clip longer than {tau:.3} s reachable, relaxed to node {fallback}",
                state.sentences
            );
            node = Some(fallback);
        }
        let id = node.expect("set above");
        let t2 = Instant::now();
        state.last_feature = Some(graph.nodes[id].feature.clone());
        let clip = self.library.clips[graph.nodes[id].clip_ref].clone();
        let t3 = Instant::now();
        Ok(Retrieval {
            prediction,
            node: Some(id),
            tau,
            relaxed,
            clip,
            timings: StageTimings {
                forward: (t1 - t0).as_secs_f64(),
                search: (t2 - t1).as_secs_f64(),
                schedule: (t3 - t2).as_secs_f64(),
            },
        })
    }

    /// Decodes a predicted feature straight into motion through the PCA
    /// inverse: a fixed-length clip stretched over `duration`.
    pub fn generate_clip(&self, feature: &[f32], duration: f64) -> Result<BvhClip, RuntimeError> {
        let pca = self.pca.as_ref().ok_or(RuntimeError::NotLoaded("PCA model"))?;
        let y: Vec<f64> = feature.iter().map(|&v| v as f64).collect();
        let frames = pca.inverse(&y)?;
        let n = DEFAULT_RESAMPLE_FRAMES;
        let span = if duration > 0.0 { duration } else { 1.0 };
        Ok(BvhClip {
            joints: self.library.skeleton().to_vec(),
            frame_time: span / (n - 1) as f64,
            frames,
        })
    }

    /// Full per-sentence step: predict, then place the clip on the timeline.
    pub fn ingest_sentence(
        &self,
        session: &mut SessionState,
        text: &[f32],
        audio: &[f32],
        duration: f64,
    ) -> Result<Retrieval, RuntimeError> {
        let mut r = self.predict(&mut session.predictor, text, audio, duration)?;
        let t = Instant::now();
        session.timeline.schedule(r.clip.clone(), r.node);
        r.timings.schedule += t.elapsed().as_secs_f64();
        if r.relaxed {
            info!("relaxation count now {}", session.predictor.relaxations);
        }
        Ok(r)
    }
}

fn count_library_files(dir: &std::path::Path) -> Result<usize, RuntimeError> {
    let mut n = 0;
    while super::library::clip_path(dir, n).is_file() {
        n += 1;
    }
    if n == 0 {
        return Err(RuntimeError::Library(format!("no clips in {}", dir.display())));
    }
    Ok(n)
}

/// One scripted sentence for offline runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedSentence {
    pub text: Vec<f32>,
    pub audio: Vec<f32>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub sentences: usize,
    /// Mean wall time of a whole ingest, seconds.
    pub aits: f64,
    pub mean_stages: StageTimings,
    pub max_search: f64,
    pub relaxations: usize,
    pub per_sentence: Vec<f64>,
}

/// Runs the script `repetitions` times through fresh sessions and reports
/// the average time per sentence with a per-stage breakdown.
pub fn measure_pipeline(
    engine: &Engine,
    sentences: &[ScriptedSentence],
    repetitions: usize,
) -> Result<PipelineReport, RuntimeError> {
    if sentences.is_empty() || repetitions == 0 {
        return Err(RuntimeError::Input("measure_pipeline needs at least one sentence and one repetition".into()));
    }
    let mut totals = Vec::with_capacity(sentences.len() * repetitions);
    let mut stages = StageTimings::default();
    let mut max_search: f64 = 0.0;
    let mut relaxations = 0;
    for _ in 0..repetitions {
        let mut session = engine.session(false);
        for s in sentences {
            let t = Instant::now();
            let r = engine.ingest_sentence(&mut session, &s.text, &s.audio, s.duration)?;
            totals.push(t.elapsed().as_secs_f64());
            stages.forward += r.timings.forward;
            stages.search += r.timings.search;
            stages.schedule += r.timings.schedule;
            max_search = max_search.max(r.timings.search);
        }
        relaxations += session.predictor.relaxations;
    }
    let n = totals.len() as f64;
    Ok(PipelineReport {
        sentences: totals.len(),
        aits: aits(&totals)?,
        mean_stages: StageTimings {
            forward: stages.forward / n,
            search: stages.search / n,
            schedule: stages.schedule / n,
        },
        max_search,
        relaxations,
        per_sentence: totals,
    })
}

/// Per-sentence durations from start timestamps: consecutive differences,
/// then `tail` for the last sentence (default: the previous gap, or 2 s).
pub fn sentence_durations(timestamps: &[f64], tail: Option<f64>) -> Result<Vec<f64>, RuntimeError> {
    let mut out: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(i) = out.iter().position(|d| !(*d >= 0.0)) {
        return Err(RuntimeError::Input(format!("timestamps decrease at sentence {}", i + 1)));
    }
    if !timestamps.is_empty() {
        out.push(tail.unwrap_or_else(|| out.last().copied().unwrap_or(2.0)));
    }
    Ok(out)
}

/// Output of an offline run.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub clip: BvhClip,
    pub frames: Vec<super::PoseFrame>,
    pub retrievals: Vec<Retrieval>,
}

impl Engine {
    /// Runs a whole script through one session and plays it out. Emission
    /// continues until both the scheduled motion and the speech have ended.
    pub fn synthesize(&self, sentences: &[ScriptedSentence]) -> Result<Synthesis, RuntimeError> {
        if sentences.is_empty() {
            return Err(RuntimeError::Input("no sentences".into()));
        }
        let mut session = self.session(true);
        let mut retrievals = Vec::with_capacity(sentences.len());
        for s in sentences {
            retrievals.push(self.ingest_sentence(&mut session, &s.text, &s.audio, s.duration)?);
        }
        let speech: f64 = sentences.iter().map(|s| s.duration).sum();
        let speech_frames = (speech * self.config.fps as f64 - 1e-9).ceil().max(1.0) as u64;
        let last = session
            .timeline
            .scheduled_end()
            .unwrap_or(0)
            .max(speech_frames - 1);
        let frames = session.timeline.emit_through(last);
        let clip = session.timeline.recording().expect("recording enabled");
        Ok(Synthesis {
            clip,
            frames,
            retrievals,
        })
    }
}
