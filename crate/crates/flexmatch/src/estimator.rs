//! Seeded Monte Carlo estimation of the matching metrics, with sweep and
//! heatmap drivers.
//!
//! Each replicate owns a set of private RNG streams derived from
//! `(master_seed, block, kind, replicate)`, so results are identical whether
//! replicates run on one thread or many; aggregation walks replicates in
//! index order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{sample_graph, FlexAllocation, GraphError, ModelParams, Variant};
use crate::matching::{
    greedy_naive, greedy_prioritizing, karp_sipser, max_matching, max_weight_matching,
    non_isolated_min,
};
use crate::rng::RngSeed;

/// Metrics the estimator can report; all are fractions of the left-side size
/// `n` except `Weight`, which is total matched weight per left node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Maximum matching fraction.
    Mu,
    /// Minimum over sides of the non-isolated fraction.
    Phi,
    /// Naive greedy fraction.
    PsiNaive,
    /// Regular-prioritizing greedy fraction.
    PsiPrior,
    /// Karp-Sipser greedy fraction.
    Ks,
    /// Maximum matched weight per left node (weighted variant only).
    Weight,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Mu => "mu",
            Metric::Phi => "phi",
            Metric::PsiNaive => "psi_naive",
            Metric::PsiPrior => "psi_prior",
            Metric::Ks => "ks",
            Metric::Weight => "weight",
        }
    }
}

/// One Monte Carlo estimation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub variant: Variant,
    pub params: ModelParams,
    pub alloc: FlexAllocation,
    pub replicates: usize,
    pub metrics: Vec<Metric>,
    pub master_seed: u64,
    /// Distinguishes requests sharing a master seed inside one driver run
    /// (sweep/heatmap cells); replicate streams are derived from it.
    pub stream_block: u64,
}

/// Mean and standard error for one metric.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Estimation result: one entry per requested metric, in request order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    pub metrics: Vec<(Metric, MetricEstimate)>,
    pub replicates: usize,
}

impl Estimate {
    pub fn get(&self, metric: Metric) -> Option<MetricEstimate> {
        self.metrics.iter().find(|(m, _)| *m == metric).map(|&(_, e)| e)
    }
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Match(#[from] crate::matching::MatchError),
}

/// Execution mode for batch loops. The sequential path is always available;
/// the parallel path requires the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl ExecMode {
    /// The mode the public API dispatches to.
    pub fn default_mode() -> Self {
        #[cfg(feature = "parallel")]
        {
            ExecMode::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            ExecMode::Sequential
        }
    }
}

/// Order-preserving indexed map over `0..n`, parallel or sequential.
pub(crate) fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

/// RNG stream ids: `block` separates driver cells, `kind` separates the
/// graph draw from each randomized matcher, `replicate` indexes replicates.
fn stream_id(block: u64, kind: u64, replicate: u64) -> u64 {
    (block << 48) | (kind << 32) | replicate
}

const KIND_GRAPH: u64 = 0;
const KIND_KS: u64 = 1;
const KIND_NAIVE: u64 = 2;
const KIND_PRIOR: u64 = 3;

/// Run the request in the build's default execution mode.
pub fn estimate(req: &EstimateRequest) -> Result<Estimate, EstimateError> {
    estimate_with_mode(req, ExecMode::default_mode())
}

/// Run the request with an explicit execution mode (exposed for the
/// determinism tests and the benchmark suite).
pub fn estimate_with_mode(
    req: &EstimateRequest,
    mode: ExecMode,
) -> Result<Estimate, EstimateError> {
    if req.replicates == 0 {
        return Err(EstimateError::InvalidRequest("replicates must be >= 1".into()));
    }
    if req.metrics.is_empty() {
        return Err(EstimateError::InvalidRequest("metrics must be nonempty".into()));
    }
    if req.metrics.contains(&Metric::Weight) && req.variant != Variant::Weighted {
        return Err(EstimateError::InvalidRequest(
            "weight metric requires the weighted variant".into(),
        ));
    }
    if req.replicates >= (1 << 32) {
        return Err(EstimateError::InvalidRequest("replicates exceed the stream space".into()));
    }

    let n = req.params.n as f64;
    let per_rep: Vec<Result<Vec<f64>, EstimateError>> =
        map_indexed(mode, req.replicates, |r| {
            let r = r as u64;
            let g = sample_graph(
                req.variant,
                &req.params,
                &req.alloc,
                RngSeed::new(req.master_seed, stream_id(req.stream_block, KIND_GRAPH, r)),
            )?;
            let mut vals = Vec::with_capacity(req.metrics.len());
            for &m in &req.metrics {
                let v = match m {
                    Metric::Mu => max_matching(&g).size() as f64 / n,
                    Metric::Phi => non_isolated_min(&g) as f64 / n,
                    Metric::PsiNaive => {
                        greedy_naive(
                            &g,
                            RngSeed::new(
                                req.master_seed,
                                stream_id(req.stream_block, KIND_NAIVE, r),
                            ),
                        )
                        .size() as f64
                            / n
                    }
                    Metric::PsiPrior => {
                        greedy_prioritizing(
                            &g,
                            RngSeed::new(
                                req.master_seed,
                                stream_id(req.stream_block, KIND_PRIOR, r),
                            ),
                        )
                        .size() as f64
                            / n
                    }
                    Metric::Ks => {
                        karp_sipser(
                            &g,
                            RngSeed::new(req.master_seed, stream_id(req.stream_block, KIND_KS, r)),
                        )
                        .size() as f64
                            / n
                    }
                    Metric::Weight => {
                        max_weight_matching(&g)?.weight_total.unwrap_or(0.0) / n
                    }
                };
                vals.push(v);
            }
            Ok(vals)
        });

    // Aggregate in replicate order for determinism.
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(req.replicates); req.metrics.len()];
    for rep in per_rep {
        let vals = rep?;
        for (k, v) in vals.into_iter().enumerate() {
            samples[k].push(v);
        }
    }
    let metrics = req
        .metrics
        .iter()
        .zip(samples.iter())
        .map(|(&m, xs)| (m, mean_and_se(xs)))
        .collect();
    Ok(Estimate {
        metrics,
        replicates: req.replicates,
    })
}

fn mean_and_se(xs: &[f64]) -> MetricEstimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std_err = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    MetricEstimate { mean, std_err }
}

/// One output row of the sweep/heatmap drivers; serializes to the documented
/// CSV schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub variant: String,
    pub alpha: f64,
    pub alpha_f: f64,
    pub budget: f64,
    pub b_l: f64,
    pub b_r: f64,
    pub metric: String,
    pub mean: f64,
    pub std_err: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// CSV header shared by all tabular outputs.
pub const CSV_HEADER: &str = "variant,alpha,alpha_f,B,b_l,b_r,metric,mean,std_err,replicates,seed";

/// Render rows with the documented header. Uses Rust's shortest-roundtrip
/// float formatting, so identical runs give identical bytes.
pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.variant,
            r.alpha,
            r.alpha_f,
            r.budget,
            r.b_l,
            r.b_r,
            r.metric,
            r.mean,
            r.std_err,
            r.replicates,
            r.seed
        ));
    }
    out
}

/// Evaluate `estimate` along `b_l in {0, B/(g-1), ..., B}`, `b_r = B - b_l`.
pub fn sweep_allocations(
    variant: Variant,
    params: &ModelParams,
    budget: f64,
    grid_points: usize,
    metrics: &[Metric],
    replicates: usize,
    master_seed: u64,
    mode: ExecMode,
) -> Result<Vec<Row>, EstimateError> {
    if grid_points < 2 {
        return Err(EstimateError::InvalidRequest("grid_points must be >= 2".into()));
    }
    let mut rows = Vec::new();
    for i in 0..grid_points {
        let b_l = budget * i as f64 / (grid_points - 1) as f64;
        let alloc = FlexAllocation::new(b_l, budget - b_l);
        let req = EstimateRequest {
            variant,
            params: *params,
            alloc,
            replicates,
            metrics: metrics.to_vec(),
            master_seed,
            stream_block: i as u64,
        };
        let est = estimate_with_mode(&req, mode)?;
        for (m, e) in &est.metrics {
            rows.push(Row {
                variant: variant.as_str().into(),
                alpha: params.alpha,
                alpha_f: params.alpha_f,
                budget,
                b_l: alloc.b_l,
                b_r: alloc.b_r,
                metric: m.as_str().into(),
                mean: e.mean,
                std_err: e.std_err,
                replicates,
                seed: master_seed,
            });
        }
    }
    Ok(rows)
}

/// Ratio table `metric(B/2,B/2) / metric(B,0)` over an `(alpha, alpha_f -
/// alpha)` grid. Cells whose denominator mean is 0 are emitted as NaN.
#[allow(clippy::too_many_arguments)]
pub fn heatmap_ratio(
    variant: Variant,
    n: usize,
    alphas: &[f64],
    gaps: &[f64],
    budget: f64,
    metric: Metric,
    replicates: usize,
    master_seed: u64,
    mode: ExecMode,
) -> Result<Vec<Row>, EstimateError> {
    let mut rows = Vec::new();
    let mut block = 0u64;
    for &alpha in alphas {
        for &gap in gaps {
            let alpha_f = alpha + gap;
            let params = ModelParams::new(alpha, alpha_f, n);
            let run = |alloc: FlexAllocation, blk: u64| -> Result<MetricEstimate, EstimateError> {
                let req = EstimateRequest {
                    variant,
                    params,
                    alloc,
                    replicates,
                    metrics: vec![metric],
                    master_seed,
                    stream_block: blk,
                };
                Ok(estimate_with_mode(&req, mode)?.get(metric).unwrap())
            };
            let bal = run(FlexAllocation::balanced(budget), block)?;
            let one = run(FlexAllocation::one_sided(budget), block + 1)?;
            block += 2;
            let (ratio, se) = if one.mean == 0.0 {
                (f64::NAN, f64::NAN)
            } else {
                let r = bal.mean / one.mean;
                // First-order (delta-method) propagation of the two SEs.
                let se = r.abs()
                    * ((bal.std_err / bal.mean).powi(2) + (one.std_err / one.mean).powi(2))
                        .sqrt();
                (r, se)
            };
            rows.push(Row {
                variant: variant.as_str().into(),
                alpha,
                alpha_f,
                budget,
                b_l: f64::NAN,
                b_r: f64::NAN,
                metric: format!("{}_ratio", metric.as_str()),
                mean: ratio,
                std_err: se,
                replicates,
                seed: master_seed,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_req(alloc: FlexAllocation, replicates: usize) -> EstimateRequest {
        EstimateRequest {
            variant: Variant::Base,
            params: ModelParams::new(0.5, 2.0, 50),
            alloc,
            replicates,
            metrics: vec![Metric::Mu, Metric::Phi],
            master_seed: 11,
            stream_block: 0,
        }
    }

    #[test]
    fn degenerate_request_is_exact_zero() {
        let req = EstimateRequest {
            variant: Variant::Base,
            params: ModelParams::new(0.0, 1e-9, 30),
            alloc: FlexAllocation::new(0.0, 0.0),
            replicates: 50,
            metrics: vec![Metric::Mu, Metric::Phi],
            master_seed: 5,
            stream_block: 0,
        };
        let est = estimate(&req).unwrap();
        for (_, e) in est.metrics {
            assert_eq!(e.mean, 0.0);
            assert_eq!(e.std_err, 0.0);
        }
    }

    #[test]
    fn phi_dominates_mu() {
        let est = estimate(&base_req(FlexAllocation::balanced(1.0), 100)).unwrap();
        let mu = est.get(Metric::Mu).unwrap().mean;
        let phi = est.get(Metric::Phi).unwrap().mean;
        assert!(phi >= mu);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let req = base_req(FlexAllocation::new(0.3, 0.7), 64);
        let seq = estimate_with_mode(&req, ExecMode::Sequential).unwrap();
        #[cfg(feature = "parallel")]
        {
            let par = estimate_with_mode(&req, ExecMode::Parallel).unwrap();
            for ((m1, e1), (m2, e2)) in seq.metrics.iter().zip(par.metrics.iter()) {
                assert_eq!(m1, m2);
                assert_eq!(e1.mean.to_bits(), e2.mean.to_bits());
                assert_eq!(e1.std_err.to_bits(), e2.std_err.to_bits());
            }
        }
        let again = estimate_with_mode(&req, ExecMode::Sequential).unwrap();
        assert_eq!(
            seq.get(Metric::Mu).unwrap().mean.to_bits(),
            again.get(Metric::Mu).unwrap().mean.to_bits()
        );
    }

    #[test]
    fn weight_metric_needs_weighted_variant() {
        let mut req = base_req(FlexAllocation::balanced(1.0), 4);
        req.metrics = vec![Metric::Weight];
        assert!(estimate(&req).is_err());
    }

    #[test]
    fn sweep_symmetric_endpoints_agree_within_se() {
        let params = ModelParams::new(0.5, 2.0, 80);
        let rows = sweep_allocations(
            Variant::Base,
            &params,
            0.8,
            3,
            &[Metric::Mu],
            400,
            21,
            ExecMode::default_mode(),
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        let first = &rows[0];
        let last = &rows[2];
        let tol = 4.0 * (first.std_err + last.std_err);
        assert!(
            (first.mean - last.mean).abs() <= tol,
            "{} vs {} (tol {})",
            first.mean,
            last.mean,
            tol
        );
    }

    #[test]
    fn csv_shape() {
        let params = ModelParams::new(0.5, 2.0, 20);
        let rows = sweep_allocations(
            Variant::Base,
            &params,
            0.5,
            2,
            &[Metric::Mu],
            5,
            3,
            ExecMode::Sequential,
        )
        .unwrap();
        let csv = rows_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn heatmap_near_degenerate_gap_ratio_is_one() {
        let rows = heatmap_ratio(
            Variant::Base,
            60,
            &[0.5],
            &[1e-6],
            1.0,
            Metric::Mu,
            400,
            9,
            ExecMode::default_mode(),
        )
        .unwrap();
        let row = &rows[0];
        assert!(
            (row.mean - 1.0).abs() <= 4.0 * row.std_err + 1e-3,
            "ratio {} +- {}",
            row.mean,
            row.std_err
        );
    }
}
