//! Computer-aided certification of the one-sided-versus-balanced comparison,
//! the curvature signs at the balanced point, the scalar-residual
//! monotonicity bound, and a randomized check of the pair-coupling matching
//! inequality.
//!
//! Certification strategy, for a square parameter cell
//! `[alpha, alpha+delta) x [alpha_f, alpha_f+delta)`:
//!
//! 1. The reduced fixed-point solutions are componentwise decreasing in both
//!    rate parameters, so solving at the cell's low and high corners (each
//!    solve carrying a `+-eps` tolerance enclosure) brackets the solution
//!    uniformly over the cell.
//! 2. Quantities of interest are evaluated over those brackets — via
//!    monotonicity for the matching-rate comparison, via interval arithmetic
//!    for the curvature ratios.
//! 3. Cells whose first-pass bound is inconclusive are bisected in both
//!    parameters (up to [`MAX_SUBDIVISION_DEPTH`]); the combined leaf bounds
//!    remain valid for the whole cell.
//!
//! All certified quantities are evaluated in round-to-nearest double
//! arithmetic; a slack of [`CERTIFIED_SLACK`] is applied to every certified
//! bound to absorb rounding. This is a pragmatic certificate, not a
//! directed-rounding proof.

use serde::{Deserialize, Serialize};

use crate::estimator::{map_indexed, ExecMode};
use crate::graphs::BipartiteGraph;
use crate::ks_solver::{
    f1_balanced_derivative, solve_reduced_balanced, solve_reduced_one_sided, KsError,
};
use crate::matching::max_matching;
use crate::rng::RngSeed;
use rand::Rng;

/// Rounding slack applied to every certified bound.
pub const CERTIFIED_SLACK: f64 = 1e-10;

/// Maximum recursive bisection depth for inconclusive cells.
pub const MAX_SUBDIVISION_DEPTH: u32 = 4;

/// Deeper budget for the curvature-sign certificates: their interval
/// expressions are rational in four correlated variables, so the dependency
/// overestimate shrinks only linearly with cell width and large-`alpha`
/// cells need a couple of extra halvings.
pub const MAX_SOD_SUBDIVISION_DEPTH: u32 = 6;

/// Certification outcome for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Unverified,
    OutOfRegime,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Unverified => "unverified",
            Verdict::OutOfRegime => "out_of_regime",
        }
    }
}

/// Certificate for the comparison `mu(1,0) > mu(1/2,1/2)` over the square
/// cell `[alpha, alpha+delta) x [alpha_f, alpha_f+delta)` (anchors at the
/// lower-left corner).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellCertificate {
    pub alpha: f64,
    pub alpha_f: f64,
    pub delta: f64,
    pub eps: f64,
    /// Certified lower bound on `mu(1,0) - mu(1/2,1/2)` over the cell; NaN
    /// when out of regime.
    pub lower_bound_gap: f64,
    pub verdict: Verdict,
}

fn in_comparison_regime(alpha: f64, alpha_f: f64, delta: f64) -> bool {
    alpha > 1e-4
        && alpha < alpha_f
        && alpha_f + alpha + 2.0 * delta < std::f64::consts::E
        && delta > 0.0
        && delta < 0.5
}

/// Uniform solution brackets over one cell: the one-sided root `x` and the
/// balanced roots `x1`, `x2`, each as `(lo, hi)`.
#[derive(Debug, Clone, Copy)]
struct CellEnclosure {
    x: (f64, f64),
    x1: (f64, f64),
    x2: (f64, f64),
}

fn x2_of(alpha: f64, alpha_f: f64, x1: f64) -> f64 {
    -2.0 * (x1.ln() + alpha_f * x1) / (alpha_f + alpha)
}

fn cell_enclosure(
    alpha: f64,
    alpha_f: f64,
    delta: f64,
    eps: f64,
) -> Result<CellEnclosure, KsError> {
    let x_near = solve_reduced_one_sided(alpha, alpha_f, eps)?.value;
    let x_far = solve_reduced_one_sided(alpha + delta, alpha_f + delta, eps)?.value;
    let x1_near = solve_reduced_balanced(alpha, alpha_f, eps)?.x1.value;
    let x1_far = solve_reduced_balanced(alpha + delta, alpha_f + delta, eps)?.x1.value;
    // x2 inherits its bracket from x1 through the (decreasing) log relation
    // at the matching parameter corner.
    Ok(CellEnclosure {
        x: (x_far - eps, x_near + eps),
        x1: (x1_far - eps, x1_near + eps),
        x2: (
            x2_of(alpha + delta, alpha_f + delta, x1_far + eps),
            x2_of(alpha, alpha_f, x1_near - eps),
        ),
    })
}

/// Single-evaluation certified lower bound on `mu(1,0) - mu(1/2,1/2)` over
/// one cell. Uses the fixed-point identities to eliminate the exponentials
/// (`e^{-s x} = x` at the solution), then exploits that both matching rates
/// are monotone decreasing in the solution values and in the parameters.
fn comparison_cell_bound(
    alpha: f64,
    alpha_f: f64,
    delta: f64,
    eps: f64,
) -> Result<f64, KsError> {
    let e = cell_enclosure(alpha, alpha_f, delta, eps)?;
    let s = alpha_f + alpha;
    let x_hi = e.x.1;
    let (x1_lo, x2_lo) = (e.x1.0, e.x2.0);
    // mu(1,0) = 2 - 2x - s x^2, decreasing in x and s.
    let lb_one_sided = 2.0 - 2.0 * x_hi - (s + 2.0 * delta) * x_hi * x_hi;
    // mu(1/2,1/2) = 2 - x1 - x2 - x1(af x1 + s/2 x2)/2 - x2(s/2 x1 + a x2)/2,
    // decreasing in x1, x2 and in both parameters.
    let ub_balanced = 2.0 - x1_lo - x2_lo
        - 0.5 * x1_lo * (alpha_f * x1_lo + 0.5 * s * x2_lo)
        - 0.5 * x2_lo * (0.5 * s * x1_lo + alpha * x2_lo);
    Ok(lb_one_sided - ub_balanced)
}

/// Adaptive refinement: bisect inconclusive cells; the minimum over leaves
/// bounds the whole cell.
fn comparison_gap_adaptive(
    alpha: f64,
    alpha_f: f64,
    delta: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let bound = match comparison_cell_bound(alpha, alpha_f, delta, eps) {
        Ok(b) => b,
        Err(_) => return f64::NEG_INFINITY,
    };
    if bound > 0.0 || depth == 0 {
        return bound;
    }
    let h = 0.5 * delta;
    let mut min = f64::INFINITY;
    for da in [0.0, h] {
        for df in [0.0, h] {
            min = min.min(comparison_gap_adaptive(alpha + da, alpha_f + df, h, eps, depth - 1));
        }
    }
    min
}

/// Certify `mu(1,0) > mu(1/2,1/2)` over one cell.
pub fn certify_comparison_cell(
    alpha: f64,
    alpha_f: f64,
    delta: f64,
    eps: f64,
) -> CellCertificate {
    if !in_comparison_regime(alpha, alpha_f, delta) {
        return CellCertificate {
            alpha,
            alpha_f,
            delta,
            eps,
            lower_bound_gap: f64::NAN,
            verdict: Verdict::OutOfRegime,
        };
    }
    let gap =
        comparison_gap_adaptive(alpha, alpha_f, delta, eps, MAX_SUBDIVISION_DEPTH)
            - CERTIFIED_SLACK;
    CellCertificate {
        alpha,
        alpha_f,
        delta,
        eps,
        lower_bound_gap: gap,
        verdict: if gap > 0.0 {
            Verdict::Verified
        } else {
            Verdict::Unverified
        },
    }
}

/// Summary of a region sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSummary {
    pub cells: Vec<CellCertificate>,
    pub verified: usize,
    pub unverified: usize,
    pub out_of_regime: usize,
}

impl RegionSummary {
    pub fn verified_fraction_in_regime(&self) -> f64 {
        let in_regime = self.verified + self.unverified;
        if in_regime == 0 {
            return f64::NAN;
        }
        self.verified as f64 / in_regime as f64
    }
}

/// Sweep cells anchored at multiples of `delta` covering the rectangle
/// `alpha in [alpha_min, alpha_max] x alpha_f in [alpha_f_min, alpha_f_max]`,
/// in parallel with deterministic ordering.
#[allow(clippy::too_many_arguments)]
pub fn certify_comparison_region(
    delta: f64,
    eps: f64,
    alpha_min: f64,
    alpha_max: f64,
    alpha_f_min: f64,
    alpha_f_max: f64,
    mode: ExecMode,
) -> RegionSummary {
    let pairs = anchor_grid(delta, alpha_min, alpha_max, alpha_f_min, alpha_f_max);
    let cells = map_indexed(mode, pairs.len(), |i| {
        let (a, af) = pairs[i];
        certify_comparison_cell(a, af, delta, eps)
    });
    summarize(cells)
}

fn anchor_grid(
    delta: f64,
    alpha_min: f64,
    alpha_max: f64,
    alpha_f_min: f64,
    alpha_f_max: f64,
) -> Vec<(f64, f64)> {
    let anchors = |lo: f64, hi: f64| -> Vec<f64> {
        // Multiples of delta: delta, 2 delta, ... intersected with [lo, hi].
        let first = (lo / delta).ceil().max(1.0) as u64;
        let last = (hi / delta).floor() as u64;
        (first..=last).map(|k| k as f64 * delta).collect()
    };
    let alphas = anchors(alpha_min, alpha_max);
    let alpha_fs = anchors(alpha_f_min, alpha_f_max);
    alphas
        .iter()
        .flat_map(|&a| alpha_fs.iter().map(move |&af| (a, af)))
        .collect()
}

fn summarize(cells: Vec<CellCertificate>) -> RegionSummary {
    let verified = cells.iter().filter(|c| c.verdict == Verdict::Verified).count();
    let unverified = cells.iter().filter(|c| c.verdict == Verdict::Unverified).count();
    let out_of_regime = cells.len() - verified - unverified;
    RegionSummary {
        cells,
        verified,
        unverified,
        out_of_regime,
    }
}

/// CSV rendering of cell certificates.
pub const CERTIFICATE_CSV_HEADER: &str = "alpha,alpha_f,delta,eps,lower_bound_gap,verdict";

pub fn certificates_to_csv(cells: &[CellCertificate]) -> String {
    let mut out = String::from(CERTIFICATE_CSV_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.alpha,
            c.alpha_f,
            c.delta,
            c.eps,
            c.lower_bound_gap,
            c.verdict.as_str()
        ));
    }
    out
}

/// Closed interval with outward-sloppy double endpoints (rounding absorbed
/// by [`CERTIFIED_SLACK`] at the final comparison).
#[derive(Debug, Clone, Copy)]
struct Iv {
    lo: f64,
    hi: f64,
}

impl Iv {
    fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Iv { lo, hi }
    }

    fn sq(self) -> Iv {
        if self.lo <= 0.0 && self.hi >= 0.0 {
            Iv::new(0.0, (self.lo * self.lo).max(self.hi * self.hi))
        } else {
            self * self
        }
    }

    /// None when the divisor interval contains zero.
    fn div(self, rhs: Iv) -> Option<Iv> {
        if rhs.lo <= 0.0 && rhs.hi >= 0.0 {
            return None;
        }
        let c = [
            self.lo / rhs.lo,
            self.lo / rhs.hi,
            self.hi / rhs.lo,
            self.hi / rhs.hi,
        ];
        Some(Iv::new(
            c.iter().cloned().fold(f64::INFINITY, f64::min),
            c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ))
    }
}

impl std::ops::Add for Iv {
    type Output = Iv;
    fn add(self, r: Iv) -> Iv {
        Iv::new(self.lo + r.lo, self.hi + r.hi)
    }
}

impl std::ops::Sub for Iv {
    type Output = Iv;
    fn sub(self, r: Iv) -> Iv {
        Iv::new(self.lo - r.hi, self.hi - r.lo)
    }
}

impl std::ops::Sub<f64> for Iv {
    type Output = Iv;
    fn sub(self, r: f64) -> Iv {
        Iv::new(self.lo - r, self.hi - r)
    }
}

impl std::ops::Mul for Iv {
    type Output = Iv;
    fn mul(self, r: Iv) -> Iv {
        let c = [
            self.lo * r.lo,
            self.lo * r.hi,
            self.hi * r.lo,
            self.hi * r.hi,
        ];
        Iv::new(
            c.iter().cloned().fold(f64::INFINITY, f64::min),
            c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

impl std::ops::Mul<f64> for Iv {
    type Output = Iv;
    fn mul(self, r: f64) -> Iv {
        // Only used with positive literals.
        debug_assert!(r > 0.0);
        Iv::new(self.lo * r, self.hi * r)
    }
}

impl std::ops::Neg for Iv {
    type Output = Iv;
    fn neg(self) -> Iv {
        Iv::new(-self.hi, -self.lo)
    }
}

/// Curvature certificate at the balanced point: a cell-wide lower bound on
/// the second derivative along the diagonal `(1,-1)` (convexity) and upper
/// bound along the budget direction `(0,1)` (concavity).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SodCertificate {
    pub alpha: f64,
    pub alpha_f: f64,
    pub delta: f64,
    pub eps: f64,
    pub convex_lower_bound: f64,
    pub concave_upper_bound: f64,
    pub convex_verified: bool,
    pub concave_verified: bool,
    pub verdict: Verdict,
}

/// Interval evaluation of the exact directional second-derivative ratios at
/// the balanced point over one cell. Returns `(convex_lo, concave_hi)`.
fn sod_cell_eval(
    alpha: f64,
    alpha_f: f64,
    delta: f64,
    eps: f64,
) -> Result<(f64, f64), KsError> {
    let e = cell_enclosure(alpha, alpha_f, delta, eps)?;
    let a = Iv::new(alpha, alpha + delta);
    let af = Iv::new(alpha_f, alpha_f + delta);
    let s = a + af;
    let d2 = (af - a).sq();
    let x1 = Iv::new(e.x1.0, e.x1.1);
    let x2 = Iv::new(e.x2.0, e.x2.1);

    // Diagonal direction (1,-1):
    // [d^2 4 x1 x2 (x1+x2) - 16 (x2-x1)(af x1 - a x2)]
    //   / [d^2 x1 x2 + 4 (a x2 + af x1 - 1)].
    let conv_num = d2 * (x1 * x2) * (x1 + x2) * 4.0 - (x2 - x1) * (af * x1 - a * x2) * 16.0;
    let conv_den = d2 * (x1 * x2) + (a * x2 + af * x1 - 1.0) * 4.0;
    let convex = conv_num
        .div(conv_den)
        .unwrap_or(Iv::new(f64::NEG_INFINITY, f64::INFINITY));

    // Budget direction (0,1): with q = x1 x2 d^2,
    // [-2(x1+x2) q^2 - 16(x1+x2) x1 x2 af a
    //  + 8 af^2 x1 (x2^2 - 3 x1 x2 + 4 x1^2)
    //  + 8 a^2 x2 (x1^2 - 3 x1 x2 + 4 x2^2)]
    //   / [-q^2 + 8 x1 x2 s^2 + 16 (a^2 x2^2 + af^2 x1^2 - 1)].
    let q = x1 * x2 * d2;
    let conc_num = -(x1 + x2) * q.sq() * 2.0 - (x1 + x2) * (x1 * x2) * (af * a) * 16.0
        + af.sq() * x1 * (x2.sq() - x1 * x2 * 3.0 + x1.sq() * 4.0) * 8.0
        + a.sq() * x2 * (x1.sq() - x1 * x2 * 3.0 + x2.sq() * 4.0) * 8.0;
    let conc_den = -q.sq() + (x1 * x2) * s.sq() * 8.0 + (a.sq() * x2.sq() + af.sq() * x1.sq() - 1.0) * 16.0;
    let concave = conc_num
        .div(conc_den)
        .unwrap_or(Iv::new(f64::NEG_INFINITY, f64::INFINITY));

    Ok((convex.lo, concave.hi))
}

fn sod_adaptive(
    alpha: f64,
    alpha_f: f64,
    delta: f64,
    eps: f64,
    depth: u32,
) -> (f64, f64) {
    let (conv, conc) = match sod_cell_eval(alpha, alpha_f, delta, eps) {
        Ok(v) => v,
        Err(_) => return (f64::NEG_INFINITY, f64::INFINITY),
    };
    if (conv > 0.0 && conc < 0.0) || depth == 0 {
        return (conv, conc);
    }
    let h = 0.5 * delta;
    let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
    for da in [0.0, h] {
        for df in [0.0, h] {
            let (c1, c2) = sod_adaptive(alpha + da, alpha_f + df, h, eps, depth - 1);
            worst.0 = worst.0.min(c1);
            worst.1 = worst.1.max(c2);
        }
    }
    worst
}

/// Certify the curvature signs over one cell.
pub fn certify_sod_cell(alpha: f64, alpha_f: f64, delta: f64, eps: f64) -> SodCertificate {
    if !in_comparison_regime(alpha, alpha_f, delta) {
        return SodCertificate {
            alpha,
            alpha_f,
            delta,
            eps,
            convex_lower_bound: f64::NAN,
            concave_upper_bound: f64::NAN,
            convex_verified: false,
            concave_verified: false,
            verdict: Verdict::OutOfRegime,
        };
    }
    let (conv, conc) = sod_adaptive(alpha, alpha_f, delta, eps, MAX_SOD_SUBDIVISION_DEPTH);
    let convex_lower_bound = conv - CERTIFIED_SLACK;
    let concave_upper_bound = conc + CERTIFIED_SLACK;
    let convex_verified = convex_lower_bound > 0.0;
    let concave_verified = concave_upper_bound < 0.0;
    SodCertificate {
        alpha,
        alpha_f,
        delta,
        eps,
        convex_lower_bound,
        concave_upper_bound,
        convex_verified,
        concave_verified,
        verdict: if convex_verified && concave_verified {
            Verdict::Verified
        } else {
            Verdict::Unverified
        },
    }
}

/// Cell lower bound on the derivative of the balanced scalar residual: the
/// solver's enclosure argument needs this to exceed 1 over the whole cell
/// `[alpha, alpha+delta1] x [alpha_f, alpha_f+delta1] x [x1, x1+delta2]`.
pub fn verify_f1_monotonicity_cell(
    alpha: f64,
    alpha_f: f64,
    x1: f64,
    delta1: f64,
    delta2: f64,
) -> bool {
    let s = alpha_f + alpha;
    if delta1 == 0.0 && delta2 == 0.0 {
        // Pointwise evaluation; x1 = 0 is the limit value of term1 + term3.
        if x1 == 0.0 {
            return true; // the derivative diverges to +infinity as x1 -> 0+
        }
        return f1_balanced_derivative(alpha, alpha_f, x1) > 1.0;
    }
    let term3 = 2.0 * (alpha_f + 1.0 / (x1 + delta2)) / (s + 2.0 * delta1);
    let term1 = (-0.5 * s * x1
        + 2.0 * (alpha_f + delta1) * (alpha + delta1) * (x1 + delta2) / s
        + 2.0 * alpha * (x1 + delta2).ln() / (s + 2.0 * delta1))
        .exp()
        * (-0.5 * (s + 2.0 * delta1));
    let lb = if x1 > 0.0 {
        let term2 = (-0.5 * (s + 2.0 * delta1) * (x1 + delta2)
            + 2.0 * alpha_f * alpha * x1 / (s + 2.0 * delta1)
            + 2.0 * (alpha + delta1) * x1.ln() / s)
            .exp()
            * (2.0 * alpha * (alpha_f + 1.0 / (x1 + delta2)) / (s + 2.0 * delta1));
        term1 + term2 + term3
    } else {
        term1 + term3
    };
    lb - CERTIFIED_SLACK > 1.0
}

/// Report of the randomized pair-coupling inequality check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    pub n: usize,
    pub alpha_f: f64,
    pub replicates: usize,
    pub violations: usize,
    /// Max observed `M_A + M_B - M_C - M_D` (must never be positive).
    pub max_violation: i64,
    /// Empirical mean of `(M_C + M_D - M_A - M_B) / (2n)`.
    pub mean_gap_per_node: f64,
}

/// Directed edge sets of the bundled random graph. Each slot in an
/// `(n/2) x (n/2)` index square is an independent Bernoulli(`p`) draw; the
/// sets differ in which quadrant of the bipartite graph they cover.
#[derive(Debug, Clone)]
pub struct CouplingSets {
    pub x1: Vec<(u32, u32)>,
    pub x2: Vec<(u32, u32)>,
    pub x3: Vec<(u32, u32)>,
    pub x4: Vec<(u32, u32)>,
}

fn sample_pairs(h: u32, p: f64, rng: &mut impl Rng) -> Vec<(u32, u32)> {
    // Geometric skip over the flattened h x h slot space.
    let m = (h as u64) * (h as u64);
    let mut out = Vec::new();
    if p <= 0.0 {
        return out;
    }
    if p >= 1.0 {
        for i in 0..h {
            for j in 0..h {
                out.push((i, j));
            }
        }
        return out;
    }
    let log1p = (1.0 - p).ln();
    let mut idx: u64 = 0;
    loop {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        idx += (u.ln() / log1p).floor() as u64;
        if idx >= m {
            break;
        }
        out.push(((idx / h as u64) as u32, (idx % h as u64) as u32));
        idx += 1;
    }
    out
}

/// Draw one realization of the four directed edge sets. Pairs are stored as
/// half-indexed `(row, col)` coordinates in `[0, n/2)^2`.
pub fn sample_coupling_sets(n: usize, alpha_f: f64, seed: RngSeed) -> CouplingSets {
    let h = (n / 2) as u32;
    let p = alpha_f / n as f64;
    let mut rng = seed.rng();
    CouplingSets {
        x1: sample_pairs(h, p, &mut rng),
        x2: sample_pairs(h, p, &mut rng),
        x3: sample_pairs(h, p, &mut rng),
        x4: sample_pairs(h, p, &mut rng),
    }
}

/// Matching sizes `(M_A, M_B, M_C, M_D)` of the four coupled undirected
/// graphs built from one realization:
/// - `x1` joins top-left to top-right, `x2` top-right to top-left,
///   `x3` top-right to bottom-left, `x4` top-left to bottom-right;
/// - tilde sets flip both endpoints through `v -> n-1-v`;
/// - A uses (x1,x2,x3,x4), B (x1,x2,~x3,~x4), C (~x1,x2,x3,x4),
///   D (~x1,x2,~x3,~x4).
pub fn coupling_matching_sizes(n: usize, sets: &CouplingSets) -> (usize, usize, usize, usize) {
    let h = (n / 2) as u32;
    let nn = n as u32;
    // Place half-indexed pairs into full-graph (left, right) coordinates.
    let x1: Vec<(u32, u32)> = sets.x1.iter().map(|&(i, j)| (i, j)).collect();
    let x2: Vec<(u32, u32)> = sets.x2.iter().map(|&(j, i)| (i, j)).collect();
    let x3: Vec<(u32, u32)> = sets.x3.iter().map(|&(j, i)| (h + i, j)).collect();
    let x4: Vec<(u32, u32)> = sets.x4.iter().map(|&(i, j)| (i, h + j)).collect();
    let flip = |v: &[(u32, u32)]| -> Vec<(u32, u32)> {
        v.iter().map(|&(i, j)| (nn - 1 - i, nn - 1 - j)).collect()
    };
    let x1t = flip(&x1);
    let x3t = flip(&x3);
    let x4t = flip(&x4);
    let size = |parts: [&[(u32, u32)]; 4]| -> usize {
        let edges: Vec<(u32, u32)> = parts.concat();
        max_matching(&BipartiteGraph::from_edges(n, n, &edges)).size()
    };
    let m_a = size([&x1, &x2, &x3, &x4]);
    let m_b = size([&x1, &x2, &x3t, &x4t]);
    let m_c = size([&x1t, &x2, &x3, &x4]);
    let m_d = size([&x1t, &x2, &x3t, &x4t]);
    (m_a, m_b, m_c, m_d)
}

/// Randomized check of `M_A + M_B <= M_C + M_D` across replicates.
pub fn coupling_inequality_check(
    n: usize,
    alpha_f: f64,
    master_seed: u64,
    replicates: usize,
    mode: ExecMode,
) -> CouplingReport {
    assert!(n >= 2 && n % 2 == 0, "n must be even and >= 2");
    let per_rep: Vec<i64> = map_indexed(mode, replicates, |r| {
        let sets = sample_coupling_sets(n, alpha_f, RngSeed::new(master_seed, r as u64));
        let (a, b, c, d) = coupling_matching_sizes(n, &sets);
        (c + d) as i64 - (a + b) as i64
    });
    let mut violations = 0usize;
    let mut max_violation = i64::MIN;
    let mut gap_sum = 0i64;
    for &gap in &per_rep {
        if gap < 0 {
            violations += 1;
        }
        max_violation = max_violation.max(-gap);
        gap_sum += gap;
    }
    CouplingReport {
        n,
        alpha_f,
        replicates,
        violations,
        max_violation,
        mean_gap_per_node: gap_sum as f64 / (replicates as f64 * 2.0 * n as f64),
    }
}
