//! Command-line front end for the `cospeech` binary.

use std::ffi::OsString;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use crate::bvh::{parse_bvh, write_bvh};
use crate::metrics::{
    beat_align, diversity, extract_audio_beats, extract_motion_beats, fgd, read_wav, DEFAULT_BEAT_SIGMA,
    DEFAULT_DRAWS,
};
use crate::model::{
    save_checkpoint, sequence_pairs, train, AdamConfig, AttentionKind, FusionKind, ModelConfig, ModelParams,
    TrainConfig,
};
use crate::pca::PcaModel;
use crate::runtime::artifacts::{atomic_actions, build_artifacts, read_sources, span_features, write_artifacts};
use crate::runtime::server::{serve, ServeOptions};
use crate::runtime::{mock_sentence, sentence_durations, Engine, EngineConfig, RuntimeError, ScriptedSentence};
use crate::trmf::{write_atomic, FeatureSet, Modality};

const AFTER_HELP: &str = "Environment:\n  TRIMM_CONFIG  path to a `key = value` engine configuration file; \
command-line flags override it.\n  RUST_LOG      log filter (e.g. info, debug).";

#[derive(Debug, Parser)]
#[command(name = "cospeech", version, about = "Real-time co-speech gesture synthesis", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut a BVH directory into atomic actions, fit the action PCA and build the k-NN graph.
    BuildGraph(BuildGraphArgs),
    /// One 750-d action feature per span of each BVH file (training targets).
    MotionFeatures(MotionFeaturesArgs),
    /// Train the predictor on aligned text/audio/motion feature files.
    Train(TrainArgs),
    /// Offline synthesis from feature files to a BVH recording.
    Infer(InferArgs),
    /// Stream pose frames as newline-delimited JSON over TCP.
    Serve(ServeArgs),
    /// Metric suite: FGD, diversity and beat alignment.
    Eval(EvalArgs),
    /// Deterministic stand-in embeddings for a script of sentences.
    MockEmbed(MockEmbedArgs),
    /// Write a seeded synthetic BVH corpus (for demos and smoke tests).
    DemoCorpus(DemoCorpusArgs),
}

#[derive(Debug, Args)]
struct DemoCorpusArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 40)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    /// Directory of .bvh files; `<name>.segments` files give `start end` spans in seconds.
    #[arg(long)]
    bvh_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = crate::graph::DEFAULT_K)]
    k: usize,
}

#[derive(Debug, Args)]
struct MotionFeaturesArgs {
    #[arg(long)]
    bvh_dir: PathBuf,
    #[arg(long)]
    pca: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    motion: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    window: usize,
    #[arg(long, default_value_t = 2048)]
    d_model: usize,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    /// Feed-forward width (default: 2 × d_model).
    #[arg(long)]
    ff_width: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.999)]
    lr_decay: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Concatenation fusion instead of gated fusion.
    #[arg(long)]
    mfa: bool,
    /// Standard attention instead of divided attention.
    #[arg(long)]
    tsaa: bool,
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Engine configuration file (default: $TRIMM_CONFIG).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long)]
    library: Option<PathBuf>,
    /// Output frame rate: 30, 60 or 120.
    #[arg(long)]
    fps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other configuration key, as `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Concatenation fusion ablation.
    #[arg(long)]
    mfa: bool,
    /// Standard attention ablation.
    #[arg(long)]
    tsaa: bool,
    /// Disable graph retrieval; decode predictions through the PCA inverse.
    #[arg(long)]
    mga: bool,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write every emitted frame as newline-delimited JSON.
    #[arg(long)]
    frames_out: Option<PathBuf>,
    /// Duration of the last sentence (default: the previous gap, or 2 s).
    #[arg(long)]
    tail_duration: Option<f64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    /// Exit after serving this many connections.
    #[arg(long)]
    max_sessions: Option<usize>,
    /// Write each session's recording here as session_<n>.bvh.
    #[arg(long)]
    record_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Real motion features (TRMF, modality 2) for FGD.
    #[arg(long, requires = "generated")]
    real: Option<PathBuf>,
    /// Generated motion features (TRMF, modality 2) for FGD and diversity.
    #[arg(long)]
    generated: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    diversity_subset: usize,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    diversity_draws: usize,
    /// Generated motion for beat alignment.
    #[arg(long, requires = "wav")]
    bvh: Option<PathBuf>,
    /// Speech audio for beat alignment.
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BEAT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct MockEmbedArgs {
    /// Script: one sentence per line, optionally `duration<TAB>text`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 768)]
    d_text: usize,
    #[arg(long, default_value_t = 512)]
    d_audio: usize,
    /// Duration for lines without one, seconds.
    #[arg(long, default_value_t = 2.0)]
    default_duration: f64,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::BuildGraph(a) => build_graph(a),
        Command::MotionFeatures(a) => motion_features(a),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Eval(a) => eval(a),
        Command::MockEmbed(a) => mock_embed_cmd(a),
        Command::DemoCorpus(a) => demo_corpus(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn build_graph(a: BuildGraphArgs) -> CliResult {
    let sources = read_sources(&a.bvh_dir)?;
    let (clips, dropped) = atomic_actions(&sources)?;
    if clips.len() <= a.k {
        return Err(format!("{} atomic actions ({dropped} dropped); need more than k = {}", clips.len(), a.k).into());
    }
    let (pca, graph) = build_artifacts(&clips, a.k)?;
    let conf = write_artifacts(&a.out, &pca, &graph, &clips)?;
    println!(
        "{} actions ({} dropped), k = {}, config {}",
        clips.len(),
        dropped,
        a.k,
        conf.display()
    );
    Ok(())
}

fn motion_features(a: MotionFeaturesArgs) -> CliResult {
    let sources = read_sources(&a.bvh_dir)?;
    let pca = PcaModel::load(&a.pca)?;
    let set = span_features(&sources, &pca)?;
    set.save(&a.out, Modality::MotionFeatures)?;
    println!("{} motion features -> {}", set.len(), a.out.display());
    Ok(())
}

fn rows(set: &FeatureSet) -> Vec<&[f32]> {
    (0..set.len()).map(|i| set.row(i)).collect()
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let text = FeatureSet::load(&a.text, Modality::TextFeatures)?;
    let audio = FeatureSet::load(&a.audio, Modality::AudioFeatures)?;
    let motion = FeatureSet::load(&a.motion, Modality::MotionFeatures)?;
    let pairs = sequence_pairs(&rows(&text), &rows(&audio), &rows(&motion), a.window)?;
    let config = ModelConfig {
        d_text: text.dim,
        d_audio: audio.dim,
        d_model: a.d_model,
        layers: a.layers,
        heads: a.heads,
        ff_width: a.ff_width.unwrap_or(2 * a.d_model),
        window: a.window,
        action_dim: motion.dim,
        fusion: if a.mfa { FusionKind::Concat } else { FusionKind::Gated },
        attention: if a.tsaa { AttentionKind::Standard } else { AttentionKind::Divided },
    };
    let params = ModelParams::<f32>::init(config, a.seed)?;
    let tc = TrainConfig {
        adam: AdamConfig {
            lr: a.lr,
            decay: a.lr_decay,
            ..AdamConfig::default()
        },
        batch_size: a.batch_size,
        epochs: a.epochs,
        max_steps: a.max_steps,
        seed: a.seed,
    };
    let report = train(params, &pairs, &tc)?;
    save_checkpoint(&report.params, &a.out)?;
    let first = report.step_losses.first().copied().unwrap_or(f64::NAN);
    let last = report.step_losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} pairs, {} steps, loss {first:.6} -> {last:.6}, checkpoint {}",
        pairs.len(),
        report.step_losses.len(),
        a.out.display()
    );
    Ok(())
}

fn engine_config(a: &EngineArgs) -> Result<EngineConfig, RuntimeError> {
    let mut c = match &a.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::from_env()?,
    };
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| RuntimeError::Config(format!("--set expects key=value, got {kv:?}")))?;
        c.set(k, v)?;
    }
    for (slot, v) in [
        (&mut c.model, &a.model),
        (&mut c.graph, &a.graph),
        (&mut c.pca, &a.pca),
        (&mut c.library, &a.library),
    ] {
        if v.is_some() {
            slot.clone_from(v);
        }
    }
    if let Some(f) = a.fps {
        c.fps = f;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    c.ablations.mfa |= a.mfa;
    c.ablations.tsaa |= a.tsaa;
    c.ablations.mga |= a.mga;
    c.validate()?;
    Ok(c)
}

fn load_engine(a: &EngineArgs) -> Result<Engine, RuntimeError> {
    let c = engine_config(a)?;
    info!("engine config: {c:?}");
    Engine::load(c)
}

fn infer(a: InferArgs) -> CliResult {
    let engine = load_engine(&a.engine)?;
    let text = FeatureSet::load(&a.text, Modality::TextFeatures)?;
    let audio = FeatureSet::load(&a.audio, Modality::AudioFeatures)?;
    if text.len() != audio.len() {
        return Err(format!("{} text features but {} audio features", text.len(), audio.len()).into());
    }
    let durations = sentence_durations(&text.timestamps, a.tail_duration)?;
    let script: Vec<ScriptedSentence> = (0..text.len())
        .map(|i| ScriptedSentence {
            text: text.row(i).to_vec(),
            audio: audio.row(i).to_vec(),
            duration: durations[i],
        })
        .collect();
    let out = engine.synthesize(&script)?;
    write_atomic(&a.out, write_bvh(&out.clip).as_bytes())?;
    if let Some(p) = &a.frames_out {
        let mut s = String::new();
        for f in &out.frames {
            s.push_str(&f.to_json());
            s.push('\n');
        }
        write_atomic(p, s.as_bytes())?;
    }
    let relaxed = out.retrievals.iter().filter(|r| r.relaxed).count();
    println!(
        "{} sentences, {} frames at {} fps ({relaxed} relaxed searches) -> {}",
        script.len(),
        out.frames.len(),
        engine.config.fps,
        a.out.display()
    );
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> CliResult {
    let engine = Arc::new(load_engine(&a.engine)?);
    let listener = TcpListener::bind(&a.addr)?;
    eprintln!("listening on {} at {} fps", listener.local_addr()?, engine.config.fps);
    if let Some(d) = &a.record_dir {
        std::fs::create_dir_all(d)?;
    }
    serve(
        engine,
        listener,
        ServeOptions {
            max_sessions: a.max_sessions,
            record_dir: a.record_dir.clone(),
        },
    )?;
    Ok(())
}

fn as_f64_rows(set: &FeatureSet) -> Vec<Vec<f64>> {
    (0..set.len())
        .map(|i| set.row(i).iter().map(|&v| v as f64).collect())
        .collect()
}

fn eval(a: EvalArgs) -> CliResult {
    let mut report = serde_json::Map::new();
    if let Some(g) = &a.generated {
        let generated = as_f64_rows(&FeatureSet::load(g, Modality::MotionFeatures)?);
        if let Some(r) = &a.real {
            let real = as_f64_rows(&FeatureSet::load(r, Modality::MotionFeatures)?);
            report.insert("fgd".into(), json!(fgd(&real, &generated)?));
        }
        let subset = a.diversity_subset.min(generated.len() / 2);
        report.insert("diversity".into(), json!(diversity(&generated, subset, a.diversity_draws, a.seed)?));
    }
    if let (Some(b), Some(w)) = (&a.bvh, &a.wav) {
        let clip = parse_bvh(&std::fs::read_to_string(b)?)?;
        let (samples, sr) = read_wav(w)?;
        let motion = extract_motion_beats(&clip)?;
        let audio = extract_audio_beats(&samples, sr)?;
        report.insert("beat_align".into(), json!(beat_align(&motion, &audio, a.sigma)?));
        report.insert("motion_beats".into(), json!(motion.len()));
        report.insert("audio_beats".into(), json!(audio.len()));
    }
    if report.is_empty() {
        return Err("nothing to evaluate: pass --generated (and --real) and/or --bvh with --wav".into());
    }
    println!("{}", serde_json::Value::Object(report));
    Ok(())
}

/// Script lines: `duration<TAB>text` or bare text.
fn read_script(path: &Path, default_duration: f64) -> Result<Vec<(f64, String)>, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((d, words)) => {
                let d: f64 = d
                    .trim()
                    .parse()
                    .map_err(|_| format!("{}:{}: bad duration {d:?}", path.display(), i + 1))?;
                out.push((d, words.trim().to_string()));
            }
            None => out.push((default_duration, line.trim().to_string())),
        }
    }
    if out.is_empty() {
        return Err(format!("{} has no sentences", path.display()).into());
    }
    Ok(out)
}

fn mock_embed_cmd(a: MockEmbedArgs) -> CliResult {
    let script = read_script(&a.input, a.default_duration)?;
    let mut text = FeatureSet::new(a.d_text);
    let mut audio = FeatureSet::new(a.d_audio);
    let mut t = 0.0;
    for (d, words) in &script {
        let (tv, av) = mock_sentence(words, None, a.seed, a.d_text, a.d_audio);
        text.push(&tv, t);
        audio.push(&av, t);
        t += d;
    }
    std::fs::create_dir_all(&a.out_dir)?;
    text.save(&a.out_dir.join("text.trmf"), Modality::TextFeatures)?;
    audio.save(&a.out_dir.join("audio.trmf"), Modality::AudioFeatures)?;
    println!("{} sentences, {t:.3} s -> {}", script.len(), a.out_dir.display());
    Ok(())
}

fn demo_corpus(a: DemoCorpusArgs) -> CliResult {
    std::fs::create_dir_all(&a.out_dir)?;
    for (i, clip) in crate::synth::synthetic_corpus(a.count, a.seed).iter().enumerate() {
        write_atomic(&a.out_dir.join(format!("take_{i:04}.bvh")), write_bvh(clip).as_bytes())?;
    }
    println!("{} clips -> {}", a.count, a.out_dir.display());
    Ok(())
}
