//! Exact and heuristic matching engines plus the isolated-node metric.
//!
//! * [`max_matching`] — maximum-cardinality matching via Hopcroft-Karp
//!   (layered BFS + DFS augmenting phases); deterministic given adjacency
//!   order.
//! * [`max_weight_matching`] — exact maximum-weight (not necessarily perfect)
//!   matching via successive shortest augmenting paths on the positive-weight
//!   subgraph.
//! * [`karp_sipser`] — the randomized degree-1-first greedy matcher.
//! * [`greedy_naive`] / [`greedy_prioritizing`] — online heuristics that
//!   process left nodes in index order.
//! * [`non_isolated_min`] — the degree-0 metric numerator.

use crate::graphs::BipartiteGraph;
use crate::rng::RngSeed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A matching: pairwise-disjoint edges of the source graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(u32, u32)>,
    /// Total edge weight; present only for weighted matchings.
    pub weight_total: Option<f64>,
}

impl Matching {
    pub fn size(&self) -> usize {
        self.pairs.len()
    }
}

/// Per-realization metric bundle used by the estimator.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MatchStats {
    pub max_match_size: usize,
    pub non_isolated_left: usize,
    pub non_isolated_right: usize,
    pub phi_count: usize,
    pub greedy_naive_size: Option<usize>,
    pub greedy_prior_size: Option<usize>,
    pub ks_size: Option<usize>,
    pub weight_total: Option<f64>,
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("graph carries no edge weights")]
    MissingWeights,
}

const UNMATCHED: u32 = u32::MAX;

/// Maximum-cardinality bipartite matching (Hopcroft-Karp).
pub fn max_matching(g: &BipartiteGraph) -> Matching {
    let n_left = g.n_left;
    let n_right = g.n_right;
    let mut match_left = vec![UNMATCHED; n_left];
    let mut match_right = vec![UNMATCHED; n_right];
    let mut dist = vec![0u32; n_left];
    let mut queue = Vec::with_capacity(n_left);

    loop {
        // BFS phase: layer free left nodes at distance 0.
        const INF: u32 = u32::MAX;
        queue.clear();
        for l in 0..n_left {
            if match_left[l] == UNMATCHED {
                dist[l] = 0;
                queue.push(l as u32);
            } else {
                dist[l] = INF;
            }
        }
        let mut found = false;
        let mut head = 0;
        while head < queue.len() {
            let l = queue[head] as usize;
            head += 1;
            for &r in &g.adj[l] {
                let ml = match_right[r as usize];
                if ml == UNMATCHED {
                    found = true;
                } else if dist[ml as usize] == INF {
                    dist[ml as usize] = dist[l] + 1;
                    queue.push(ml);
                }
            }
        }
        if !found {
            break;
        }
        // DFS phase: vertex-disjoint shortest augmenting paths.
        fn try_augment(
            l: usize,
            g: &BipartiteGraph,
            dist: &mut [u32],
            match_left: &mut [u32],
            match_right: &mut [u32],
        ) -> bool {
            for idx in 0..g.adj[l].len() {
                let r = g.adj[l][idx] as usize;
                let ml = match_right[r];
                let ok = if ml == UNMATCHED {
                    true
                } else if dist[ml as usize] == dist[l] + 1 {
                    try_augment(ml as usize, g, dist, match_left, match_right)
                } else {
                    false
                };
                if ok {
                    match_left[l] = r as u32;
                    match_right[r] = l as u32;
                    return true;
                }
            }
            dist[l] = u32::MAX;
            false
        }
        for l in 0..n_left {
            if match_left[l] == UNMATCHED && dist[l] == 0 {
                try_augment(l, g, &mut dist, &mut match_left, &mut match_right);
            }
        }
    }

    collect(&match_left)
}

/// Exact maximum-weight matching via successive shortest augmenting paths
/// (min-cost flow with SPFA path search). Edges with weight <= 0 are never
/// used: excluding them cannot lower the optimum because nodes may remain
/// unmatched.
pub fn max_weight_matching(g: &BipartiteGraph) -> Result<Matching, MatchError> {
    let weights = g.weights.as_ref().ok_or(MatchError::MissingWeights)?;
    let n_left = g.n_left;
    let n_right = g.n_right;

    // Positive-weight subgraph in CSR-ish form.
    let mut edges: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_left];
    for l in 0..n_left {
        for (idx, &r) in g.adj[l].iter().enumerate() {
            let w = weights[l][idx];
            if w > 0.0 {
                edges[l].push((r, w));
            }
        }
    }

    let mut match_left = vec![UNMATCHED; n_left];
    let mut match_right = vec![UNMATCHED; n_right];
    let mut total = 0.0f64;

    // Augment while the best alternating path strictly increases the total
    // weight. Path cost = -(gain); search with SPFA over (left, right) layers.
    loop {
        // dist_r[r]: cost of the cheapest alternating path from any free left
        // node to right node r; prev_r[r]: the left node used to reach r.
        let mut dist_r = vec![f64::INFINITY; n_right];
        let mut prev_r = vec![UNMATCHED; n_right];
        let mut in_queue = vec![false; n_left];
        let mut queue: std::collections::VecDeque<u32> = (0..n_left as u32)
            .filter(|&l| match_left[l as usize] == UNMATCHED)
            .collect();
        let mut dist_l = vec![f64::INFINITY; n_left];
        for &l in &queue {
            dist_l[l as usize] = 0.0;
            in_queue[l as usize] = true;
        }
        while let Some(l) = queue.pop_front() {
            let l = l as usize;
            in_queue[l] = false;
            let base = dist_l[l];
            for &(r, w) in &edges[l] {
                let r = r as usize;
                let cand = base - w;
                if cand < dist_r[r] - 1e-15 {
                    dist_r[r] = cand;
                    prev_r[r] = l as u32;
                    // Continue through the matched partner of r, paying back
                    // its edge weight.
                    let ml = match_right[r];
                    if ml != UNMATCHED {
                        let ml = ml as usize;
                        let w_back = matched_weight(g, weights, ml, r);
                        if cand + w_back < dist_l[ml] - 1e-15 {
                            dist_l[ml] = cand + w_back;
                            if !in_queue[ml] {
                                in_queue[ml] = true;
                                queue.push_back(ml as u32);
                            }
                        }
                    }
                }
            }
        }
        // Best augmenting endpoint: a free right node with negative path cost.
        let mut best: Option<(usize, f64)> = None;
        for r in 0..n_right {
            if match_right[r] == UNMATCHED && dist_r[r] < -1e-12 {
                if best.map_or(true, |(_, c)| dist_r[r] < c) {
                    best = Some((r, dist_r[r]));
                }
            }
        }
        let Some((mut r, cost)) = best else { break };
        total -= cost;
        // Walk back the alternating path, flipping matched/unmatched edges.
        loop {
            let l = prev_r[r] as usize;
            let prev_match = match_left[l];
            match_left[l] = r as u32;
            match_right[r] = l as u32;
            if prev_match == UNMATCHED {
                break;
            }
            r = prev_match as usize;
        }
    }

    let mut m = collect(&match_left);
    m.weight_total = Some(total);
    Ok(m)
}

fn matched_weight(g: &BipartiteGraph, weights: &[Vec<f64>], l: usize, r: usize) -> f64 {
    let idx = g.adj[l].binary_search(&(r as u32)).expect("matched edge must exist");
    weights[l][idx]
}

/// Karp-Sipser greedy matching: while edges remain, pick uniformly among
/// edges incident to degree-1 nodes if any exist, otherwise uniformly among
/// all edges; match it and delete both endpoints.
pub fn karp_sipser(g: &BipartiteGraph, seed: RngSeed) -> Matching {
    let mut rng = seed.rng();
    let n_left = g.n_left;
    let n_right = g.n_right;

    // Flat edge list with per-node incidence for O(deg) deletion.
    let m = g.edge_count();
    let mut edge_l = Vec::with_capacity(m);
    let mut edge_r = Vec::with_capacity(m);
    let mut inc_left: Vec<Vec<u32>> = vec![Vec::new(); n_left];
    let mut inc_right: Vec<Vec<u32>> = vec![Vec::new(); n_right];
    for (l, row) in g.adj.iter().enumerate() {
        for &r in row {
            let e = edge_l.len() as u32;
            edge_l.push(l as u32);
            edge_r.push(r);
            inc_left[l].push(e);
            inc_right[r as usize].push(e);
        }
    }
    let mut alive = vec![true; m];
    let mut alive_edges: Vec<u32> = (0..m as u32).collect();
    // Position of each edge inside alive_edges, for swap-remove.
    let mut pos = (0..m as u32).collect::<Vec<_>>();
    let mut deg_left: Vec<u32> = inc_left.iter().map(|v| v.len() as u32).collect();
    let mut deg_right: Vec<u32> = inc_right.iter().map(|v| v.len() as u32).collect();

    let mut match_left = vec![UNMATCHED; n_left];

    let remove_edge = |e: u32,
                       alive: &mut Vec<bool>,
                       alive_edges: &mut Vec<u32>,
                       pos: &mut Vec<u32>,
                       deg_left: &mut Vec<u32>,
                       deg_right: &mut Vec<u32>,
                       edge_l: &Vec<u32>,
                       edge_r: &Vec<u32>| {
        if !alive[e as usize] {
            return;
        }
        alive[e as usize] = false;
        deg_left[edge_l[e as usize] as usize] -= 1;
        deg_right[edge_r[e as usize] as usize] -= 1;
        let p = pos[e as usize] as usize;
        let last = *alive_edges.last().unwrap();
        alive_edges.swap_remove(p);
        if (last) != e {
            pos[last as usize] = p as u32;
        }
    };

    while !alive_edges.is_empty() {
        // Uniform selection among edges incident to degree-1 nodes: collect
        // the candidate set afresh (graphs here are sparse; candidate scans
        // stay proportional to the number of live edges).
        let mut candidates: Vec<u32> = Vec::new();
        for &e in alive_edges.iter() {
            let l = edge_l[e as usize] as usize;
            let r = edge_r[e as usize] as usize;
            if deg_left[l] == 1 || deg_right[r] == 1 {
                candidates.push(e);
            }
        }
        let e = if candidates.is_empty() {
            alive_edges[rng.gen_range(0..alive_edges.len())]
        } else {
            candidates[rng.gen_range(0..candidates.len())]
        };
        let l = edge_l[e as usize] as usize;
        let r = edge_r[e as usize] as usize;
        match_left[l] = r as u32;
        // Delete all edges incident to either endpoint.
        for &e2 in &inc_left[l] {
            remove_edge(
                e2,
                &mut alive,
                &mut alive_edges,
                &mut pos,
                &mut deg_left,
                &mut deg_right,
                &edge_l,
                &edge_r,
            );
        }
        for &e2 in &inc_right[r] {
            remove_edge(
                e2,
                &mut alive,
                &mut alive_edges,
                &mut pos,
                &mut deg_left,
                &mut deg_right,
                &edge_l,
                &edge_r,
            );
        }
    }

    collect(&match_left)
}

/// Naive greedy: process left nodes in index order; match each to a uniformly
/// random unmatched neighbor, or leave it unmatched.
pub fn greedy_naive(g: &BipartiteGraph, seed: RngSeed) -> Matching {
    let mut rng = seed.rng();
    let mut right_taken = vec![false; g.n_right];
    let mut match_left = vec![UNMATCHED; g.n_left];
    let mut avail = Vec::new();
    for l in 0..g.n_left {
        avail.clear();
        avail.extend(g.adj[l].iter().copied().filter(|&r| !right_taken[r as usize]));
        if !avail.is_empty() {
            let r = avail[rng.gen_range(0..avail.len())];
            right_taken[r as usize] = true;
            match_left[l] = r;
        }
    }
    collect(&match_left)
}

/// Prioritizing greedy: like [`greedy_naive`] but each left node first samples
/// uniformly among unmatched *regular* neighbors; only if none exist does it
/// sample among unmatched flexible neighbors.
pub fn greedy_prioritizing(g: &BipartiteGraph, seed: RngSeed) -> Matching {
    let mut rng = seed.rng();
    let mut right_taken = vec![false; g.n_right];
    let mut match_left = vec![UNMATCHED; g.n_left];
    let mut regular = Vec::new();
    let mut flexible = Vec::new();
    for l in 0..g.n_left {
        regular.clear();
        flexible.clear();
        for &r in &g.adj[l] {
            if !right_taken[r as usize] {
                if g.flex_right[r as usize] {
                    flexible.push(r);
                } else {
                    regular.push(r);
                }
            }
        }
        let tier = if !regular.is_empty() { &regular } else { &flexible };
        if !tier.is_empty() {
            let r = tier[rng.gen_range(0..tier.len())];
            right_taken[r as usize] = true;
            match_left[l] = r;
        }
    }
    collect(&match_left)
}

/// min(#left nodes with degree >= 1, #right nodes with degree >= 1) — the
/// numerator of the degree-0 metric.
pub fn non_isolated_min(g: &BipartiteGraph) -> usize {
    let left = g.adj.iter().filter(|row| !row.is_empty()).count();
    let right = g.right_degrees().iter().filter(|&&d| d > 0).count();
    left.min(right)
}

fn collect(match_left: &[u32]) -> Matching {
    Matching {
        pairs: match_left
            .iter()
            .enumerate()
            .filter(|&(_, &r)| r != UNMATCHED)
            .map(|(l, &r)| (l as u32, r))
            .collect(),
        weight_total: None,
    }
}

/// Validate that `m` is a matching of `g` (edge membership and disjointness).
pub fn is_valid_matching(g: &BipartiteGraph, m: &Matching) -> bool {
    let mut seen_l = vec![false; g.n_left];
    let mut seen_r = vec![false; g.n_right];
    for &(l, r) in &m.pairs {
        let (l, r) = (l as usize, r as usize);
        if l >= g.n_left || r >= g.n_right || seen_l[l] || seen_r[r] {
            return false;
        }
        if g.adj[l].binary_search(&(r as u32)).is_err() {
            return false;
        }
        seen_l[l] = true;
        seen_r[r] = true;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::BipartiteGraph;

    /// Build an unweighted graph from an edge list.
    pub fn graph_from_edges(
        n_left: usize,
        n_right: usize,
        edges: &[(u32, u32)],
    ) -> BipartiteGraph {
        let mut adj = vec![Vec::new(); n_left];
        for &(l, r) in edges {
            adj[l as usize].push(r);
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        BipartiteGraph {
            n_left,
            n_right,
            flex_left: vec![false; n_left],
            flex_right: vec![false; n_right],
            adj,
            weights: None,
            positions_left: None,
            positions_right: None,
        }
    }

    fn weighted_graph(
        n_left: usize,
        n_right: usize,
        edges: &[(u32, u32, f64)],
    ) -> BipartiteGraph {
        let mut tagged: Vec<(u32, u32, f64)> = edges.to_vec();
        tagged.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut adj = vec![Vec::new(); n_left];
        let mut weights = vec![Vec::new(); n_left];
        for (l, r, w) in tagged {
            adj[l as usize].push(r);
            weights[l as usize].push(w);
        }
        BipartiteGraph {
            n_left,
            n_right,
            flex_left: vec![false; n_left],
            flex_right: vec![false; n_right],
            adj,
            weights: Some(weights),
            positions_left: None,
            positions_right: None,
        }
    }

    #[test]
    fn complete_3x3_has_perfect_matching() {
        let edges: Vec<(u32, u32)> =
            (0..3).flat_map(|l| (0..3).map(move |r| (l, r))).collect();
        let g = graph_from_edges(3, 3, &edges);
        let m = max_matching(&g);
        assert_eq!(m.size(), 3);
        assert!(is_valid_matching(&g, &m));
    }

    #[test]
    fn small_konig_example() {
        let g = graph_from_edges(2, 2, &[(0, 0), (0, 1), (1, 0)]);
        assert_eq!(max_matching(&g).size(), 2);
    }

    #[test]
    fn single_negative_edge_excluded() {
        let g = weighted_graph(1, 1, &[(0, 0, -0.1)]);
        let m = max_weight_matching(&g).unwrap();
        assert_eq!(m.size(), 0);
        assert_eq!(m.weight_total, Some(0.0));
    }

    #[test]
    fn weight_prefers_two_smaller_edges() {
        let g = weighted_graph(2, 2, &[(0, 0, 0.2), (0, 1, 0.15), (1, 0, 0.15)]);
        let m = max_weight_matching(&g).unwrap();
        assert_eq!(m.size(), 2);
        assert!((m.weight_total.unwrap() - 0.30).abs() < 1e-12);
    }

    #[test]
    fn weight_requires_weights() {
        let g = graph_from_edges(1, 1, &[(0, 0)]);
        assert!(matches!(max_weight_matching(&g), Err(MatchError::MissingWeights)));
    }

    #[test]
    fn ks_path_takes_pendant_edge() {
        // Path l0 - r0 - l1: r0 has degree 2, l0 and l1 degree 1.
        let g = graph_from_edges(2, 1, &[(0, 0), (1, 0)]);
        for s in 0..20 {
            let m = karp_sipser(&g, RngSeed::new(s, 0));
            assert_eq!(m.size(), 1);
        }
    }

    #[test]
    fn ks_never_exceeds_maximum() {
        use crate::graphs::{sample_base_graph, FlexAllocation, ModelParams};
        let params = ModelParams::new(0.5, 2.0, 60);
        let alloc = FlexAllocation::balanced(1.0);
        for s in 0..30 {
            let g = sample_base_graph(&params, &alloc, RngSeed::new(s, 0)).unwrap();
            let ks = karp_sipser(&g, RngSeed::new(s, 1));
            let mx = max_matching(&g);
            assert!(ks.size() <= mx.size());
            assert!(is_valid_matching(&g, &ks));
        }
    }

    #[test]
    fn greedy_naive_mean_on_fork() {
        // Edges {(0,0),(0,1),(1,0)}: l0 -> r1 then l1 -> r0 (size 2) with
        // probability 1/2; l0 -> r0 strands l1 (size 1) otherwise. Mean 1.5.
        let g = graph_from_edges(2, 2, &[(0, 0), (0, 1), (1, 0)]);
        let reps = 10_000u64;
        let total: usize = (0..reps)
            .map(|s| greedy_naive(&g, RngSeed::new(101, s)).size())
            .sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 1.5).abs() < 0.02, "mean {}", mean);
    }

    #[test]
    fn greedy_prioritizing_prefers_regular() {
        let mut g = graph_from_edges(1, 2, &[(0, 0), (0, 1)]);
        g.flex_right = vec![false, true];
        for s in 0..50 {
            let m = greedy_prioritizing(&g, RngSeed::new(s, 0));
            assert_eq!(m.pairs, vec![(0, 0)]);
        }
    }

    #[test]
    fn greedy_matches_naive_when_all_regular() {
        use crate::graphs::{sample_base_graph, FlexAllocation, ModelParams};
        let params = ModelParams::new(1.0, 2.0, 40);
        let alloc = FlexAllocation::new(0.7, 0.0); // right side all regular
        for s in 0..20 {
            let g = sample_base_graph(&params, &alloc, RngSeed::new(s, 0)).unwrap();
            let a = greedy_naive(&g, RngSeed::new(s, 1));
            let b = greedy_prioritizing(&g, RngSeed::new(s, 1));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn non_isolated_bounds_matching() {
        use crate::graphs::{sample_base_graph, FlexAllocation, ModelParams};
        let params = ModelParams::new(0.3, 1.5, 80);
        let alloc = FlexAllocation::balanced(0.8);
        for s in 0..20 {
            let g = sample_base_graph(&params, &alloc, RngSeed::new(s, 0)).unwrap();
            assert!(non_isolated_min(&g) >= max_matching(&g).size());
        }
    }

    #[test]
    fn empty_graph_zeroes() {
        let g = graph_from_edges(4, 4, &[]);
        assert_eq!(max_matching(&g).size(), 0);
        assert_eq!(non_isolated_min(&g), 0);
        assert_eq!(greedy_naive(&g, RngSeed::new(0, 0)).size(), 0);
    }
}
