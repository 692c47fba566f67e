//! Newline-delimited JSON streaming over TCP.
//!
//! Each client sends one sentence per line, either precomputed features
//! `{"text_feat": [...], "audio_feat": [...], "duration": 1.8}` or raw text
//! `{"text": "...", "duration": 1.8}` (embedded with the mock generator).
//! The server answers with one pose frame per line at the configured rate
//! until the client half-closes and the scheduled motion has played out.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::Deserialize;

use super::engine::Engine;
use super::mock::mock_sentence;
use super::RuntimeError;
use crate::bvh::{write_bvh, BvhClip};
use crate::trmf::write_atomic;

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Stop accepting after this many connections (all are served to completion).
    pub max_sessions: Option<usize>,
    /// Write each session's recording to `session_<n>.bvh` here.
    pub record_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct SentenceLine {
    text: Option<String>,
    text_feat: Option<Vec<f32>>,
    audio_feat: Option<Vec<f32>>,
    duration: f64,
}

struct Sentence {
    text: Vec<f32>,
    audio: Vec<f32>,
    duration: f64,
}

fn parse_line(engine: &Engine, line: &str) -> Result<Sentence, RuntimeError> {
    let s: SentenceLine = serde_json::from_str(line).map_err(|e| RuntimeError::Input(e.to_string()))?;
    let c = &engine.config;
    let (text, audio) = match (s.text_feat, s.audio_feat, s.text) {
        (Some(t), Some(a), _) => (t, a),
        (None, None, Some(words)) => mock_sentence(&words, None, c.seed, c.d_text, c.d_audio),
        _ => {
            return Err(RuntimeError::Input(
                "need text_feat and audio_feat, or text".into(),
            ))
        }
    };
    Ok(Sentence {
        text,
        audio,
        duration: s.duration,
    })
}

/// Accepts clients on `listener`, one independent session per connection.
pub fn serve(engine: Arc<Engine>, listener: TcpListener, opts: ServeOptions) -> Result<(), RuntimeError> {
    let mut handles = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let peer = stream.peer_addr().ok();
        info!("session {n}: client {peer:?}");
        let engine = engine.clone();
        let record = opts.record_dir.as_ref().map(|d| d.join(format!("session_{n}.bvh")));
        handles.push(thread::spawn(move || {
            if let Err(e) = run_session(&engine, stream, record) {
                warn!("session {n}: {e}");
            }
        }));
        if opts.max_sessions.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

/// Serves one connection until the client stops sending and playback ends.
pub fn run_session(engine: &Arc<Engine>, stream: TcpStream, record: Option<PathBuf>) -> Result<(), RuntimeError> {
    let (sent_tx, sent_rx) = mpsc::channel::<Sentence>();
    let (clip_tx, clip_rx) = mpsc::channel::<(Arc<BvhClip>, Option<usize>)>();

    // ingestion role
    let reader = BufReader::new(stream.try_clone()?);
    let ingest_engine = engine.clone();
    let ingest = thread::spawn(move || {
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            match parse_line(&ingest_engine, &line) {
                Ok(s) => {
                    if sent_tx.send(s).is_err() {
                        break;
                    }
                }
                Err(e) => warn!("dropping input line: {e}"),
            }
        }
    });

    // inference role
    let infer_engine = engine.clone();
    let inference = thread::spawn(move || {
        let mut predictor = infer_engine.predictor();
        for s in sent_rx {
            match infer_engine.predict(&mut predictor, &s.text, &s.audio, s.duration) {
                Ok(r) => {
                    debug!("node {:?}, forward {:.3} s", r.node, r.timings.forward);
                    if clip_tx.send((r.clip, r.node)).is_err() {
                        break;
                    }
                }
                Err(e) => warn!("sentence rejected: {e}"),
            }
        }
    });

    // emission role
    let result = emit_loop(engine, stream, &clip_rx, record);
    drop(clip_rx);
    let _ = inference.join();
    let _ = ingest.join();
    result
}

fn emit_loop(
    engine: &Engine,
    stream: TcpStream,
    clips: &Receiver<(Arc<BvhClip>, Option<usize>)>,
    record: Option<PathBuf>,
) -> Result<(), RuntimeError> {
    let mut timeline = engine.timeline(record.is_some());
    let fps = timeline.fps as f64;
    let Ok((clip, node)) = clips.recv() else {
        return Ok(());
    };
    timeline.schedule(clip, node);
    let mut out = BufWriter::new(stream);
    let clock = Instant::now();
    let mut upstream_open = true;
    loop {
        while upstream_open {
            match clips.try_recv() {
                Ok((clip, node)) => {
                    timeline.schedule(clip, node);
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => upstream_open = false,
            }
        }
        let due = (clock.elapsed().as_secs_f64() * fps).floor() as u64;
        let mut wrote = false;
        while timeline.playhead() <= due {
            let frame = timeline.next_frame();
            if writeln!(out, "{}", frame.to_json()).is_err() {
                return finish(&timeline, record);
            }
            wrote = true;
        }
        if wrote && out.flush().is_err() {
            return finish(&timeline, record);
        }
        let done = timeline.scheduled_end().is_none_or(|e| timeline.playhead() > e);
        if !upstream_open && done {
            break;
        }
        let next_at = Duration::from_secs_f64(timeline.playhead() as f64 / fps);
        if let Some(wait) = next_at.checked_sub(clock.elapsed()) {
            thread::sleep(wait);
        }
    }
    let _ = out.flush();
    if let Ok(s) = out.into_inner() {
        let _ = s.shutdown(std::net::Shutdown::Write);
    }
    finish(&timeline, record)
}

fn finish(timeline: &super::Timeline, record: Option<PathBuf>) -> Result<(), RuntimeError> {
    if let (Some(path), Some(clip)) = (record, timeline.recording()) {
        if clip.num_frames() > 0 {
            write_atomic(&path, write_bvh(&clip).as_bytes())?;
            info!("recorded {} frames to {}", clip.num_frames(), path.display());
        }
    }
    Ok(())
}
