#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use cospeech_core::graph::{squared_distance, ActionNode};

// Exact equality with the library needs bit-identical distances, so the
// oracles reuse the distance primitive; everything built on it is independent.
pub fn dist2(a: &[f32], b: &[f32]) -> f64 {
    squared_distance(a, b)
}

/// Plain sequential f64 sum, for tolerance checks of the primitive itself.
pub fn naive_dist2(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum()
}

/// Sorted, symmetric k-NN adjacency by full sort of every row.
pub fn knn_oracle(nodes: &[ActionNode], k: usize) -> Vec<Vec<usize>> {
    let n = nodes.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist2(&nodes[i].feature, &nodes[j].feature), j))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in all.iter().take(k) {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort();
        a.dedup();
    }
    adj
}

fn argmin_by_distance(nodes: &[ActionNode], ids: impl Iterator<Item = usize>, v: &[f32]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for i in ids {
        let d = dist2(&nodes[i].feature, v);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best
}

/// Brute force: the anchor's whole connected component, filtered by
/// duration, minimised over distance to `current` (ties to the lower id).
pub fn search_oracle(
    nodes: &[ActionNode],
    adjacency: &[Vec<usize>],
    prev: &[f32],
    current: &[f32],
    tau: f64,
) -> Option<(usize, f64)> {
    let (anchor, _) = argmin_by_distance(nodes, 0..nodes.len(), prev)?;
    let mut in_component = vec![false; nodes.len()];
    let mut stack = vec![anchor];
    in_component[anchor] = true;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if !in_component[v] {
                in_component[v] = true;
                stack.push(v);
            }
        }
    }
    let eligible = (0..nodes.len()).filter(|&i| in_component[i] && nodes[i].duration > tau);
    argmin_by_distance(nodes, eligible, current).map(|(i, d)| (i, d.sqrt()))
}

/// Points in well-separated clusters so graphs often split into components.
pub fn clustered_nodes<R: Rng>(rng: &mut R, n: usize, dim: usize, clusters: usize) -> Vec<ActionNode> {
    let centres: Vec<Vec<f32>> = (0..clusters)
        .map(|c| (0..dim).map(|d| if d == c % dim { 1000.0 * c as f32 } else { 0.0 }).collect())
        .collect();
    (0..n)
        .map(|id| {
            let c = &centres[id % clusters];
            let feature = c
                .iter()
                .map(|x| x + { let z: f64 = StandardNormal.sample(rng); z as f32 } * 3.0)
                .collect();
            ActionNode {
                id,
                feature,
                duration: rng.random_range(0.8..20.0),
                clip_ref: id,
            }
        })
        .collect()
}

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize, scale: f32) -> Vec<f32> {
    (0..dim).map(|_| { let z: f64 = StandardNormal.sample(rng); z as f32 } * scale).collect()
}
