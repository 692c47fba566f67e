//! Undirected k-NN graph over action clips and constrained retrieval.

use std::collections::VecDeque;
use std::path::Path;

use log::debug;
use thiserror::Error;

use crate::features::ACTION_DIM;
use crate::trmf::{write_atomic, Modality, Reader, TrmfError, Writer};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("node {id}: {reason}")]
    InvalidNode { id: usize, reason: String },
    #[error("vector has {found} values, graph features have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed graph file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Trmf(#[from] TrmfError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionNode {
    pub id: usize,
    pub feature: Vec<f32>,
    /// Seconds.
    pub duration: f64,
    /// Identifies the clip in the action library (its file stem).
    pub clip_ref: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionGraph {
    pub nodes: Vec<ActionNode>,
    /// Sorted neighbor ids per node.
    pub adjacency: Vec<Vec<usize>>,
    /// `weights[i][n]` is the distance to `adjacency[i][n]`.
    pub weights: Vec<Vec<f64>>,
    pub k: usize,
}

#[inline(always)]
fn sq_generic(a: &[f32], b: &[f32]) -> f64 {
    const L: usize = 8;
    let mut acc = [0f64; L];
    let ca = a.chunks_exact(L);
    let cb = b.chunks_exact(L);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..L {
            let d = x[i] as f64 - y[i] as f64;
            acc[i] += d * d;
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        let d = *x as f64 - *y as f64;
        s += d * d;
    }
    s
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn sq_avx(a: &[f32], b: &[f32]) -> f64 {
    sq_generic(a, b)
}

/// Squared Euclidean distance, accumulated in f64 in a fixed order.
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support checked above.
        return unsafe { sq_avx(a, b) };
    }
    sq_generic(a, b)
}

/// `(distance², id)` ordering used everywhere: nearer first, then lower id.
fn closer(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Keeps the `k` best `(d², id)` pairs in ascending order.
fn offer(list: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    if list.len() == k && !closer(cand, list[k - 1]) {
        return;
    }
    let pos = list.partition_point(|e| closer(*e, cand));
    list.insert(pos, cand);
    list.truncate(k);
}

fn validate_nodes(nodes: &[ActionNode]) -> Result<usize, GraphError> {
    let dim = nodes.first().map_or(0, |n| n.feature.len());
    for (i, n) in nodes.iter().enumerate() {
        let bad = |reason: &str| GraphError::InvalidNode {
            id: n.id,
            reason: reason.to_string(),
        };
        if n.id != i {
            return Err(bad(&format!("id must equal its position {i}")));
        }
        if n.feature.len() != dim {
            return Err(GraphError::DimensionMismatch {
                expected: dim,
                found: n.feature.len(),
            });
        }
        if !(n.duration > 0.0 && n.duration.is_finite()) {
            return Err(bad("duration must be positive and finite"));
        }
        if n.feature.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite feature"));
        }
    }
    Ok(dim)
}

/// Each node's `min(k, n−1)` nearest neighbors, ties to the lower id.
pub fn knn_lists(nodes: &[ActionNode], k: usize) -> Vec<Vec<usize>> {
    let n = nodes.len();
    let k = k.min(n.saturating_sub(1));
    let mut best: Vec<Vec<(f64, usize)>> = vec![Vec::with_capacity(k + 1); n];
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(&nodes[i].feature, &nodes[j].feature);
            offer(&mut best[i], k, (d, j));
            offer(&mut best[j], k, (d, i));
        }
    }
    best.into_iter().map(|l| l.into_iter().map(|(_, j)| j).collect()).collect()
}

/// Union of the per-node k-NN sets as an undirected graph.
pub fn build_knn_graph(nodes: Vec<ActionNode>, k: usize) -> Result<MotionGraph, GraphError> {
    if k == 0 {
        return Err(GraphError::ZeroK);
    }
    if nodes.len() < 2 {
        return Err(GraphError::TooFewNodes(nodes.len()));
    }
    validate_nodes(&nodes)?;
    let lists = knn_lists(&nodes, k);
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    for a in &mut adjacency {
        a.sort_unstable();
        a.dedup();
    }
    let weights = adjacency
        .iter()
        .enumerate()
        .map(|(i, a)| {
            a.iter()
                .map(|&j| squared_distance(&nodes[i].feature, &nodes[j].feature).sqrt())
                .collect()
        })
        .collect();
    debug!(
        "k-NN graph: {} nodes, {} undirected edges",
        nodes.len(),
        adjacency.iter().map(Vec::len).sum::<usize>() / 2
    );
    Ok(MotionGraph {
        nodes,
        adjacency,
        weights,
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub top_k: usize,
    /// Stops the traversal after this many dequeued nodes.
    pub max_visits: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            top_k: DEFAULT_TOP_K,
            max_visits: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub anchor: usize,
    pub node: Option<usize>,
    /// Distance from the chosen node to the current vector.
    pub distance: Option<f64>,
    pub visited: usize,
}

impl MotionGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.feature.len())
    }

    /// Linear-scan nearest node to `v`, lowest id on ties.
    pub fn nearest(&self, v: &[f32]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for n in &self.nodes {
            let c = (squared_distance(&n.feature, v), n.id);
            if closer(c, best) {
                best = c;
            }
        }
        best.1
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }
}

/// Duration-filtered retrieval: anchor on `prev`, traverse from its nearest
/// neighbors, and return the node closest to `current` whose duration is
/// strictly greater than `tau`.
pub fn constrained_search(
    graph: &MotionGraph,
    prev: &[f32],
    current: &[f32],
    tau: f64,
    top_k: usize,
) -> Result<Option<usize>, GraphError> {
    let opts = SearchOptions {
        top_k,
        ..SearchOptions::default()
    };
    Ok(constrained_search_with(graph, prev, current, tau, &opts)?.node)
}

pub fn constrained_search_with(
    graph: &MotionGraph,
    prev: &[f32],
    current: &[f32],
    tau: f64,
    opts: &SearchOptions,
) -> Result<SearchOutcome, GraphError> {
    let dim = graph.dim();
    for v in [prev, current] {
        if v.len() != dim {
            return Err(GraphError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let anchor = graph.nearest(prev);
    let mut seeds: Vec<(f64, usize)> = graph.adjacency[anchor]
        .iter()
        .map(|&j| (squared_distance(&graph.nodes[j].feature, prev), j))
        .collect();
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    seeds.truncate(opts.top_k.max(1));

    let mut seen = vec![false; graph.len()];
    let mut queue = VecDeque::with_capacity(graph.len());
    for &(_, j) in &seeds {
        seen[j] = true;
        queue.push_back(j);
    }
    let mut best: Option<(f64, usize)> = None;
    let mut visited = 0;
    while let Some(u) = queue.pop_front() {
        if opts.max_visits.is_some_and(|m| visited >= m) {
            break;
        }
        visited += 1;
        let node = &graph.nodes[u];
        if node.duration > tau {
            let c = (squared_distance(&node.feature, current), u);
            if best.is_none_or(|b| closer(c, b)) {
                best = Some(c);
            }
        }
        for &v in &graph.adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    Ok(SearchOutcome {
        anchor,
        node: best.map(|b| b.1),
        distance: best.map(|b| b.0.sqrt()),
        visited,
    })
}

/// Graph file layout: u32 node count, u32 k, then per node the feature
/// (750 × f32), duration (f64), u32 neighbor count, neighbor ids (u32) and
/// weights (f32).
pub fn encode_graph(graph: &MotionGraph) -> Result<Vec<u8>, GraphError> {
    let mut w = Writer::new(Modality::Graph);
    w.u32(graph.len() as u32);
    w.u32(graph.k as u32);
    for (i, n) in graph.nodes.iter().enumerate() {
        if n.feature.len() != ACTION_DIM {
            return Err(GraphError::DimensionMismatch {
                expected: ACTION_DIM,
                found: n.feature.len(),
            });
        }
        w.f32s(&n.feature);
        w.f64(n.duration);
        w.u32(graph.adjacency[i].len() as u32);
        for &j in &graph.adjacency[i] {
            w.u32(j as u32);
        }
        for &d in &graph.weights[i] {
            w.f32(d as f32);
        }
    }
    Ok(w.finish())
}

/// Clip references are not stored; a loaded node refers to the clip with its id.
pub fn decode_graph(data: &[u8]) -> Result<MotionGraph, GraphError> {
    let mut r = Reader::open(data, Modality::Graph)?;
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    let min_node_bytes = ACTION_DIM * 4 + 8 + 4;
    if n > r.remaining() / min_node_bytes {
        return Err(GraphError::Malformed(format!("{n} nodes do not fit the payload")));
    }
    let mut nodes = Vec::with_capacity(n);
    let mut adjacency = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for id in 0..n {
        let feature = r.f32s(ACTION_DIM)?;
        let duration = r.f64()?;
        let deg = r.u32()? as usize;
        if deg >= n.max(1) || deg > r.remaining() / 8 {
            return Err(GraphError::Malformed(format!("node {id}: degree {deg}")));
        }
        let adj = (0..deg)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if adj.iter().any(|&j| j >= n || j == id) || adj.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GraphError::Malformed(format!("node {id}: bad neighbor list")));
        }
        let ws = (0..deg).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>, _>>()?;
        nodes.push(ActionNode {
            id,
            feature,
            duration,
            clip_ref: id,
        });
        adjacency.push(adj);
        weights.push(ws);
    }
    r.finish()?;
    for i in 0..n {
        for &j in &adjacency[i] {
            if adjacency[j].binary_search(&i).is_err() {
                return Err(GraphError::Malformed(format!("edge {i}-{j} is not symmetric")));
            }
        }
    }
    Ok(MotionGraph {
        nodes,
        adjacency,
        weights,
        k,
    })
}

pub fn save_graph(graph: &MotionGraph, path: &Path) -> Result<(), GraphError> {
    Ok(write_atomic(path, &encode_graph(graph)?)?)
}

pub fn load_graph(path: &Path) -> Result<MotionGraph, GraphError> {
    let data = std::fs::read(path).map_err(TrmfError::from)?;
    decode_graph(&data)
}
