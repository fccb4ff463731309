//! Domain types and random generators for the five bipartite graph models.
//!
//! All models share the same flexibility mechanism: each left node is flexible
//! with probability `b_l`, each right node with probability `b_r`, and the
//! probability (or threshold, or eligibility window) of an edge between a pair
//! depends additively on how many of its endpoints are flexible:
//! `2p` (none), `p + p_f` (one), `2p_f` (both), with `p = alpha/n` and
//! `p_f = alpha_f/n` scaled per model.
//!
//! Generators are pure functions of `(params, alloc, seed)`: identical inputs
//! produce bit-identical graphs.

use crate::rng::RngSeed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Model parameters shared by all graph variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Connection intensity of regular nodes (alpha).
    pub alpha: f64,
    /// Connection intensity of flexible nodes (alpha_f > alpha).
    pub alpha_f: f64,
    /// Number of nodes per side (left side for the imbalanced model).
    pub n: usize,
    /// Local-model neighborhood width (eligible window size).
    pub k: usize,
    /// Imbalance factor: the right side has round(lambda * n) nodes.
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, alpha_f: f64, n: usize) -> Self {
        Self {
            alpha,
            alpha_f,
            n,
            k: 2,
            lambda: 1.0,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    fn validate_common(&self) -> Result<(), GraphError> {
        if !(self.alpha >= 0.0) || !(self.alpha_f > self.alpha) {
            return Err(GraphError::InvalidParams(format!(
                "require alpha_f > alpha >= 0, got alpha={}, alpha_f={}",
                self.alpha, self.alpha_f
            )));
        }
        if self.n < 1 {
            return Err(GraphError::InvalidParams("n must be >= 1".into()));
        }
        Ok(())
    }
}

/// The decision variable: probabilities that left/right nodes are flexible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexAllocation {
    pub b_l: f64,
    pub b_r: f64,
}

impl FlexAllocation {
    pub fn new(b_l: f64, b_r: f64) -> Self {
        Self { b_l, b_r }
    }

    /// Total flexibility budget B = b_l + b_r.
    pub fn budget(&self) -> f64 {
        self.b_l + self.b_r
    }

    /// One-sided allocation (B, 0).
    pub fn one_sided(budget: f64) -> Self {
        Self::new(budget, 0.0)
    }

    /// Balanced allocation (B/2, B/2).
    pub fn balanced(budget: f64) -> Self {
        Self::new(budget / 2.0, budget / 2.0)
    }

    /// Swap sides.
    pub fn swapped(&self) -> Self {
        Self::new(self.b_r, self.b_l)
    }

    fn validate(&self) -> Result<(), GraphError> {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        if !ok(self.b_l) || !ok(self.b_r) {
            return Err(GraphError::InvalidParams(format!(
                "b_l and b_r must lie in [0,1], got ({}, {})",
                self.b_l, self.b_r
            )));
        }
        Ok(())
    }
}

/// Graph model variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Local,
    Spatial,
    Imbalanced,
    Weighted,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Local => "local",
            Variant::Spatial => "spatial",
            Variant::Imbalanced => "imbalanced",
            Variant::Weighted => "weighted",
        }
    }
}

/// A realized bipartite graph with per-node flexibility flags.
///
/// Adjacency is stored per left node as sorted, duplicate-free lists of right
/// indices. `weights` (heterogeneous-preference variant) runs parallel to
/// `adj`. Positions are stored only for the spatial variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub n_left: usize,
    pub n_right: usize,
    pub flex_left: Vec<bool>,
    pub flex_right: Vec<bool>,
    pub adj: Vec<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub positions_left: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub positions_right: Option<Vec<[f64; 2]>>,
}

impl BipartiteGraph {
    /// Build an all-regular graph from an explicit edge list (duplicates are
    /// collapsed).
    pub fn from_edges(n_left: usize, n_right: usize, edges: &[(u32, u32)]) -> Self {
        let mut adj = vec![Vec::new(); n_left];
        for &(i, j) in edges {
            adj[i as usize].push(j);
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

    /// Total number of edges.
    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    /// Degree of each right node.
    pub fn right_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_right];
        for row in &self.adj {
            for &j in row {
                deg[j as usize] += 1;
            }
        }
        deg
    }

    /// Check structural invariants (sorted, deduplicated, in-range adjacency).
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        if self.adj.len() != self.n_left
            || self.flex_left.len() != self.n_left
            || self.flex_right.len() != self.n_right
        {
            return Err(GraphError::InvalidParams("inconsistent vector lengths".into()));
        }
        for row in &self.adj {
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(GraphError::InvalidParams(
                        "adjacency must be sorted and duplicate-free".into(),
                    ));
                }
            }
            if row.iter().any(|&j| (j as usize) >= self.n_right) {
                return Err(GraphError::InvalidParams("right index out of range".into()));
            }
        }
        Ok(())
    }
}

/// Errors surfaced by generators and parameter validation.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("edge probability exceeds 1: {0}")]
    ProbabilityOverflow(String),
}

/// Edge probability for a pair given endpoint flexibility flags.
#[inline]
fn pair_probability(fl: bool, fr: bool, p: f64, p_f: f64) -> f64 {
    match (fl, fr) {
        (true, true) => 2.0 * p_f,
        (false, false) => 2.0 * p,
        _ => p + p_f,
    }
}

fn draw_flags(rng: &mut ChaCha8Rng, count: usize, prob: f64) -> Vec<bool> {
    (0..count).map(|_| rng.gen::<f64>() < prob).collect()
}

/// Append every index of `pool` selected with probability `p`, using
/// geometric skips so the cost is proportional to the expected number of
/// selections rather than the pool size.
fn skip_sample_into(rng: &mut ChaCha8Rng, pool: &[u32], p: f64, out: &mut Vec<u32>) {
    if p <= 0.0 || pool.is_empty() {
        return;
    }
    if p >= 1.0 {
        out.extend_from_slice(pool);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut pos: usize = 0;
    loop {
        let u: f64 = rng.gen();
        // Number of failures before the next success of a Bernoulli(p) chain.
        let skip = ((1.0 - u).ln() / log_q).floor();
        if !skip.is_finite() || skip >= (pool.len() - pos) as f64 {
            return;
        }
        pos += skip as usize;
        out.push(pool[pos]);
        pos += 1;
        if pos >= pool.len() {
            return;
        }
    }
}

/// Base model: n x n, edge probability `2p + (F_l + F_r)(p_f - p)` with
/// `p = alpha/n`, `p_f = alpha_f/n`.
pub fn sample_base_graph(
    params: &ModelParams,
    alloc: &FlexAllocation,
    seed: RngSeed,
) -> Result<BipartiteGraph, GraphError> {
    params.validate_common()?;
    alloc.validate()?;
    let n = params.n;
    let p = params.alpha / n as f64;
    let p_f = params.alpha_f / n as f64;
    if 2.0 * p_f > 1.0 {
        return Err(GraphError::ProbabilityOverflow(format!(
            "2*alpha_f/n = {} > 1",
            2.0 * p_f
        )));
    }
    let mut rng = seed.rng();
    let flex_left = draw_flags(&mut rng, n, alloc.b_l);
    let flex_right = draw_flags(&mut rng, n, alloc.b_r);
    let (flex_pool, reg_pool) = split_pools(&flex_right);

    let mut adj = Vec::with_capacity(n);
    for &fl in &flex_left {
        let mut row = Vec::new();
        skip_sample_into(&mut rng, &flex_pool, pair_probability(fl, true, p, p_f), &mut row);
        skip_sample_into(&mut rng, &reg_pool, pair_probability(fl, false, p, p_f), &mut row);
        row.sort_unstable();
        adj.push(row);
    }
    Ok(BipartiteGraph {
        n_left: n,
        n_right: n,
        flex_left,
        flex_right,
        adj,
        weights: None,
        positions_left: None,
        positions_right: None,
    })
}

/// O(n^2) reference generator for the base model; distributionally equal to
/// [`sample_base_graph`] (used as a test oracle).
pub fn sample_base_graph_reference(
    params: &ModelParams,
    alloc: &FlexAllocation,
    seed: RngSeed,
) -> Result<BipartiteGraph, GraphError> {
    params.validate_common()?;
    alloc.validate()?;
    let n = params.n;
    let p = params.alpha / n as f64;
    let p_f = params.alpha_f / n as f64;
    if 2.0 * p_f > 1.0 {
        return Err(GraphError::ProbabilityOverflow(format!(
            "2*alpha_f/n = {} > 1",
            2.0 * p_f
        )));
    }
    let mut rng = seed.rng();
    let flex_left = draw_flags(&mut rng, n, alloc.b_l);
    let flex_right = draw_flags(&mut rng, n, alloc.b_r);
    let mut adj = Vec::with_capacity(n);
    for &fl in &flex_left {
        let mut row = Vec::new();
        for (j, &fr) in flex_right.iter().enumerate() {
            if rng.gen::<f64>() < pair_probability(fl, fr, p, p_f) {
                row.push(j as u32);
            }
        }
        adj.push(row);
    }
    Ok(BipartiteGraph {
        n_left: n,
        n_right: n,
        flex_left,
        flex_right,
        adj,
        weights: None,
        positions_left: None,
        positions_right: None,
    })
}

/// Local model: left node i may only connect to right nodes j with
/// `(j - i) mod n <= k - 1`; eligible edges use `p = alpha/k`, `p_f = alpha_f/k`.
pub fn sample_local_graph(
    params: &ModelParams,
    alloc: &FlexAllocation,
    seed: RngSeed,
) -> Result<BipartiteGraph, GraphError> {
    params.validate_common()?;
    alloc.validate()?;
    let n = params.n;
    let k = params.k;
    if k < 1 || k > n {
        return Err(GraphError::InvalidParams(format!("k={} out of range", k)));
    }
    let p = params.alpha / k as f64;
    let p_f = params.alpha_f / k as f64;
    if p_f > 0.5 {
        return Err(GraphError::InvalidParams(format!(
            "local model requires alpha_f/k <= 1/2, got {}",
            p_f
        )));
    }
    let mut rng = seed.rng();
    let flex_left = draw_flags(&mut rng, n, alloc.b_l);
    let flex_right = draw_flags(&mut rng, n, alloc.b_r);
    let mut adj = Vec::with_capacity(n);
    for (i, &fl) in flex_left.iter().enumerate() {
        let mut row = Vec::new();
        for d in 0..k {
            let j = (i + d) % n;
            if rng.gen::<f64>() < pair_probability(fl, flex_right[j], p, p_f) {
                row.push(j as u32);
            }
        }
        row.sort_unstable();
        adj.push(row);
    }
    Ok(BipartiteGraph {
        n_left: n,
        n_right: n,
        flex_left,
        flex_right,
        adj,
        weights: None,
        positions_left: None,
        positions_right: None,
    })
}

/// Spatial model: both sides uniform on the unit square; an edge exists iff
/// the Euclidean distance is within `2p + (F_l + F_r)(p_f - p)` with
/// `p = alpha/sqrt(n)`, `p_f = alpha_f/sqrt(n)`.
pub fn sample_spatial_graph(
    params: &ModelParams,
    alloc: &FlexAllocation,
    seed: RngSeed,
) -> Result<BipartiteGraph, GraphError> {
    params.validate_common()?;
    alloc.validate()?;
    let n = params.n;
    let sqrt_n = (n as f64).sqrt();
    let p = params.alpha / sqrt_n;
    let p_f = params.alpha_f / sqrt_n;
    if 2.0 * p_f > std::f64::consts::SQRT_2 {
        return Err(GraphError::ProbabilityOverflow(format!(
            "threshold 2*alpha_f/sqrt(n) = {} exceeds the unit-square diameter",
            2.0 * p_f
        )));
    }
    let mut rng = seed.rng();
    let flex_left = draw_flags(&mut rng, n, alloc.b_l);
    let flex_right = draw_flags(&mut rng, n, alloc.b_r);
    let draw_positions = |rng: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
        (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect()
    };
    let pos_left = draw_positions(&mut rng);
    let pos_right = draw_positions(&mut rng);
    let mut adj = Vec::with_capacity(n);
    for (i, &fl) in flex_left.iter().enumerate() {
        let mut row = Vec::new();
        for (j, &fr) in flex_right.iter().enumerate() {
            let threshold = pair_probability(fl, fr, p, p_f);
            let dx = pos_left[i][0] - pos_right[j][0];
            let dy = pos_left[i][1] - pos_right[j][1];
            if (dx * dx + dy * dy).sqrt() <= threshold {
                row.push(j as u32);
            }
        }
        adj.push(row);
    }
    Ok(BipartiteGraph {
        n_left: n,
        n_right: n,
        flex_left,
        flex_right,
        adj,
        weights: None,
        positions_left: Some(pos_left),
        positions_right: Some(pos_right),
    })
}

/// Imbalanced model: n left nodes, `round(lambda*n)` right nodes
/// (round-half-to-even); left nodes flexible with probability `b_l * lambda`.
pub fn sample_imbalanced_graph(
    params: &ModelParams,
    alloc: &FlexAllocation,
    seed: RngSeed,
) -> Result<BipartiteGraph, GraphError> {
    params.validate_common()?;
    alloc.validate()?;
    let n = params.n;
    let lambda = params.lambda;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(GraphError::InvalidParams(format!("lambda={} not in (0,1]", lambda)));
    }
    let n_right = (lambda * n as f64).round_ties_even() as usize;
    if n_right < 1 {
        return Err(GraphError::InvalidParams("lambda*n must round to >= 1".into()));
    }
    let left_prob = alloc.b_l * lambda;
    if left_prob > 1.0 {
        return Err(GraphError::InvalidParams(format!(
            "b_l*lambda = {} exceeds 1",
            left_prob
        )));
    }
    let p = params.alpha / n as f64;
    let p_f = params.alpha_f / n as f64;
    if 2.0 * p_f > 1.0 {
        return Err(GraphError::ProbabilityOverflow(format!(
            "2*alpha_f/n = {} > 1",
            2.0 * p_f
        )));
    }
    let mut rng = seed.rng();
    let flex_left = draw_flags(&mut rng, n, left_prob);
    let flex_right = draw_flags(&mut rng, n_right, alloc.b_r);
    let (flex_pool, reg_pool) = split_pools(&flex_right);
    let mut adj = Vec::with_capacity(n);
    for &fl in &flex_left {
        let mut row = Vec::new();
        skip_sample_into(&mut rng, &flex_pool, pair_probability(fl, true, p, p_f), &mut row);
        skip_sample_into(&mut rng, &reg_pool, pair_probability(fl, false, p, p_f), &mut row);
        row.sort_unstable();
        adj.push(row);
    }
    Ok(BipartiteGraph {
        n_left: n,
        n_right,
        flex_left,
        flex_right,
        adj,
        weights: None,
        positions_left: None,
        positions_right: None,
    })
}

/// Heterogeneous-preference model: each pair draws a latent utility
/// `w ~ U(0,1)`; the edge is eligible iff `w` exceeds `1 - t` where `t` is the
/// pair's base-model edge probability, and the stored weight is `w - 0.8`.
/// Only eligible edges are materialized: given eligibility, `w` is uniform on
/// `(1 - t, 1)`, so the eligible weight is drawn directly from that tail.
pub fn sample_weighted_graph(
    params: &ModelParams,
    alloc: &FlexAllocation,
    seed: RngSeed,
) -> Result<BipartiteGraph, GraphError> {
    params.validate_common()?;
    alloc.validate()?;
    let n = params.n;
    let p = params.alpha / n as f64;
    let p_f = params.alpha_f / n as f64;
    if 2.0 * p_f > 1.0 {
        return Err(GraphError::ProbabilityOverflow(format!(
            "2*alpha_f/n = {} > 1",
            2.0 * p_f
        )));
    }
    let mut rng = seed.rng();
    let flex_left = draw_flags(&mut rng, n, alloc.b_l);
    let flex_right = draw_flags(&mut rng, n, alloc.b_r);
    let (flex_pool, reg_pool) = split_pools(&flex_right);
    let mut adj = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &fl in &flex_left {
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for (pool, fr) in [(&flex_pool, true), (&reg_pool, false)] {
            let t = pair_probability(fl, fr, p, p_f);
            let mut idx = Vec::new();
            skip_sample_into(&mut rng, pool, t, &mut idx);
            for j in idx {
                let w = 1.0 - t * rng.gen::<f64>();
                pairs.push((j, w - 0.8));
            }
        }
        pairs.sort_unstable_by_key(|&(j, _)| j);
        adj.push(pairs.iter().map(|&(j, _)| j).collect());
        weights.push(pairs.iter().map(|&(_, w)| w).collect());
    }
    Ok(BipartiteGraph {
        n_left: n,
        n_right: n,
        flex_left,
        flex_right,
        adj,
        weights: Some(weights),
        positions_left: None,
        positions_right: None,
    })
}

/// Dispatch on the variant enum.
pub fn sample_graph(
    variant: Variant,
    params: &ModelParams,
    alloc: &FlexAllocation,
    seed: RngSeed,
) -> Result<BipartiteGraph, GraphError> {
    match variant {
        Variant::Base => sample_base_graph(params, alloc, seed),
        Variant::Local => sample_local_graph(params, alloc, seed),
        Variant::Spatial => sample_spatial_graph(params, alloc, seed),
        Variant::Imbalanced => sample_imbalanced_graph(params, alloc, seed),
        Variant::Weighted => sample_weighted_graph(params, alloc, seed),
    }
}

fn split_pools(flags: &[bool]) -> (Vec<u32>, Vec<u32>) {
    let mut flex = Vec::new();
    let mut reg = Vec::new();
    for (j, &f) in flags.iter().enumerate() {
        if f {
            flex.push(j as u32);
        } else {
            reg.push(j as u32);
        }
    }
    (flex, reg)
}
