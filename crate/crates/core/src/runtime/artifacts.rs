use std::path::{Path, PathBuf};

use log::info;

use super::library::clip_path;
use super::RuntimeError;
use crate::bvh::{parse_bvh, segment_clips, write_bvh, BvhClip};
use crate::features::{extract_action_feature, flatten_clip, ACTION_DIM, DEFAULT_RESAMPLE_FRAMES};
use crate::graph::{build_knn_graph, save_graph, ActionNode, MotionGraph};
use crate::pca::{fit_pca, PcaModel};
use crate::trmf::{write_atomic, FeatureSet};

/// A source recording with its optional `<stem>.segments` boundaries.
#[derive(Debug, Clone)]
pub struct SourceClip {
    pub path: PathBuf,
    pub clip: BvhClip,
    /// `(start, end)` seconds; the whole clip when no sidecar exists.
    pub spans: Vec<(f64, f64)>,
}

fn parse_spans(text: &str, path: &Path) -> Result<Vec<(f64, f64)>, RuntimeError> {
    let mut spans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| RuntimeError::Input(format!("{}:{}: expected two numbers", path.display(), i + 1)))?;
        match v[..] {
            [a, b] => spans.push((a, b)),
            _ => {
                return Err(RuntimeError::Input(format!(
                    "{}:{}: expected `start end`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(spans)
}

/// Every `*.bvh` in `dir`, sorted by file name.
pub fn read_sources(dir: &Path) -> Result<Vec<SourceClip>, RuntimeError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("bvh")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(RuntimeError::Input(format!("no .bvh files in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|path| {
            let text = std::fs::read_to_string(&path)?;
            let clip = parse_bvh(&text).map_err(|e| RuntimeError::Input(format!("{}: {e}", path.display())))?;
            let sidecar = path.with_extension("segments");
            let spans = if sidecar.is_file() {
                parse_spans(&std::fs::read_to_string(&sidecar)?, &sidecar)?
            } else {
                vec![(0.0, clip.duration())]
            };
            Ok(SourceClip { path, clip, spans })
        })
        .collect()
}

/// Cuts sources into atomic actions, dropping spans outside the length bounds.
pub fn atomic_actions(sources: &[SourceClip]) -> Result<(Vec<BvhClip>, usize), RuntimeError> {
    let mut clips = Vec::new();
    let mut dropped = 0;
    for s in sources {
        let seg = segment_clips(&s.clip, &s.spans)
            .map_err(|e| RuntimeError::Input(format!("{}: {e}", s.path.display())))?;
        dropped += seg.dropped.len();
        clips.extend(seg.clips);
    }
    if let Some(first) = clips.first() {
        if let Some(i) = clips.iter().position(|c| !c.same_skeleton(first)) {
            return Err(RuntimeError::Library(format!("action {i} has a different skeleton")));
        }
    }
    Ok((clips, dropped))
}

/// Fits the action PCA and builds the k-NN graph over `clips` (ids follow order).
pub fn build_artifacts(clips: &[BvhClip], k: usize) -> Result<(PcaModel, MotionGraph), RuntimeError> {
    let flat = clips
        .iter()
        .map(|c| flatten_clip(c, DEFAULT_RESAMPLE_FRAMES))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RuntimeError::Input(e.to_string()))?;
    let pca = fit_pca(&flat, ACTION_DIM)?;
    let nodes = clips
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let f = extract_action_feature(c, &pca, DEFAULT_RESAMPLE_FRAMES)
                .map_err(|e| RuntimeError::Input(format!("action {id}: {e}")))?;
            Ok(ActionNode {
                id,
                feature: f.values,
                duration: f.source_duration,
                clip_ref: id,
            })
        })
        .collect::<Result<Vec<_>, RuntimeError>>()?;
    let graph = build_knn_graph(nodes, k)?;
    Ok((pca, graph))
}

/// Writes `pca.trmf`, `graph.trmf`, `library/NNNNNN.bvh` and a
/// `cospeech.conf` pointing at them. Returns the config path.
pub fn write_artifacts(out: &Path, pca: &PcaModel, graph: &MotionGraph, clips: &[BvhClip]) -> Result<PathBuf, RuntimeError> {
    let lib = out.join("library");
    std::fs::create_dir_all(&lib)?;
    pca.save(&out.join("pca.trmf"))?;
    save_graph(graph, &out.join("graph.trmf"))?;
    for (id, c) in clips.iter().enumerate() {
        write_atomic(&clip_path(&lib, id), write_bvh(c).as_bytes())?;
    }
    let conf = out.join("cospeech.conf");
    let text = format!(
        "# written by build-graph\ngraph = graph.trmf\npca = pca.trmf\nlibrary = library\nk = {}\n",
        graph.k
    );
    write_atomic(&conf, text.as_bytes())?;
    info!("wrote {} actions to {}", clips.len(), out.display());
    Ok(conf)
}

/// One action feature per span (no length filtering, so rows stay aligned
/// with sentence boundaries). Timestamps run on across files.
pub fn span_features(sources: &[SourceClip], pca: &PcaModel) -> Result<FeatureSet, RuntimeError> {
    let mut set = FeatureSet::new(ACTION_DIM);
    let mut offset = 0.0;
    for s in sources {
        let ft = s.clip.frame_time;
        let n = s.clip.num_frames();
        for &(a, b) in &s.spans {
            let first = ((a / ft).round() as usize).min(n.saturating_sub(1));
            let last = ((b / ft).round() as usize).clamp(first + 1, n);
            let part = s.clip.slice_frames(first, last);
            let f = extract_action_feature(&part, pca, DEFAULT_RESAMPLE_FRAMES)
                .map_err(|e| RuntimeError::Input(format!("{}: {e}", s.path.display())))?;
            set.push(&f.values, offset + a);
        }
        offset += s.clip.duration();
    }
    Ok(set)
}
