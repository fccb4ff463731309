//! The Karp-Sipser fixed-point system and its matched-fraction surrogate.
//!
//! The asymptotic behavior of the degree-1-first greedy matcher on the base
//! model is captured by an 8-variable monotone fixed-point system over
//! per-side, per-type probabilities (`L`-type: all children high, `H`-type:
//! some child low; hatted variables describe the opposite side). Its least
//! fixed point `y` yields two matched-fraction expressions `xi` and `xi_hat`,
//! and the surrogate `mu_ks = min(xi, xi_hat)`.
//!
//! At the one-sided and balanced allocations the system collapses to scalar
//! equations that can be solved to certified accuracy; those reductions and
//! the directional second-order derivative formulas at the balanced point
//! live here as well.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::FlexAllocation;

/// The 8 fixed-point components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KsVector {
    pub w_l_f: f64,
    pub w_l_nf: f64,
    pub w_h_f: f64,
    pub w_h_nf: f64,
    pub w_hat_l_f: f64,
    pub w_hat_l_nf: f64,
    pub w_hat_h_f: f64,
    pub w_hat_h_nf: f64,
}

impl KsVector {
    fn as_array(&self) -> [f64; 8] {
        [
            self.w_l_f,
            self.w_l_nf,
            self.w_h_f,
            self.w_h_nf,
            self.w_hat_l_f,
            self.w_hat_l_nf,
            self.w_hat_h_f,
            self.w_hat_h_nf,
        ]
    }
}

/// Solution bundle: least fixed point plus surrogate values and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsSolution {
    pub y: KsVector,
    pub xi: f64,
    pub xi_hat: f64,
    pub mu_ks: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Inside the subcritical regime `alpha_f + alpha < e` the system has a
    /// unique solution and the surrogate is exact at the special allocations;
    /// outside we still compute it but flag it.
    pub subcritical: bool,
}

#[derive(Debug, Error)]
pub enum KsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("fixed-point iteration did not converge: residual {residual} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
}

/// Default solver tolerance for the 8-dimensional iteration.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
/// Default scalar-solve certification tolerance (|f| < eps at the root).
pub const DEFAULT_EPS: f64 = 1e-8;
/// Residual accepted after the iteration cap; beyond this the solve fails.
pub const RELAXED_TOL: f64 = 1e-8;

/// One Jacobi application of the monotone map.
fn apply_map(alpha: f64, alpha_f: f64, b_l: f64, b_r: f64, w: &KsVector) -> KsVector {
    let s = alpha_f + alpha;
    KsVector {
        w_l_f: (-2.0 * b_r * alpha_f * (1.0 - w.w_hat_h_f)
            - (1.0 - b_r) * s * (1.0 - w.w_hat_h_nf))
            .exp(),
        w_l_nf: (-b_r * s * (1.0 - w.w_hat_h_f)
            - 2.0 * (1.0 - b_r) * alpha * (1.0 - w.w_hat_h_nf))
            .exp(),
        w_h_f: 1.0
            - (-2.0 * b_r * alpha_f * w.w_hat_l_f - (1.0 - b_r) * s * w.w_hat_l_nf).exp(),
        w_h_nf: 1.0
            - (-b_r * s * w.w_hat_l_f - 2.0 * (1.0 - b_r) * alpha * w.w_hat_l_nf).exp(),
        w_hat_l_f: (-2.0 * b_l * alpha_f * (1.0 - w.w_h_f)
            - (1.0 - b_l) * s * (1.0 - w.w_h_nf))
            .exp(),
        w_hat_l_nf: (-b_l * s * (1.0 - w.w_h_f)
            - 2.0 * (1.0 - b_l) * alpha * (1.0 - w.w_h_nf))
            .exp(),
        w_hat_h_f: 1.0 - (-2.0 * b_l * alpha_f * w.w_l_f - (1.0 - b_l) * s * w.w_l_nf).exp(),
        w_hat_h_nf: 1.0 - (-b_l * s * w.w_l_f - 2.0 * (1.0 - b_l) * alpha * w.w_l_nf).exp(),
    }
}

/// Matched-fraction expression for the left-to-right orientation.
fn xi_value(alpha: f64, alpha_f: f64, b_l: f64, b_r: f64, y: &KsVector) -> f64 {
    let s = alpha_f + alpha;
    let b1 = 2.0 * b_l * alpha_f * y.w_l_f + (1.0 - b_l) * s * y.w_l_nf;
    let b2 = b_l * s * y.w_l_f + 2.0 * (1.0 - b_l) * alpha * y.w_l_nf;
    2.0 - b_l * y.w_l_f
        - b_r * (1.0 - y.w_hat_h_f)
        - b_r * (1.0 - y.w_hat_h_f) * b1
        - (1.0 - b_l) * y.w_l_nf
        - (1.0 - b_r) * (1.0 - y.w_hat_h_nf)
        - (1.0 - b_r) * (1.0 - y.w_hat_h_nf) * b2
}

/// Subcritical boundary: alpha_f + alpha < e.
pub fn is_subcritical(alpha: f64, alpha_f: f64) -> bool {
    alpha_f + alpha < std::f64::consts::E
}

/// Solve the 8-dimensional system for its least fixed point by monotone
/// Jacobi iteration from the all-zero state, then evaluate `xi`, `xi_hat`,
/// and `mu_ks`.
pub fn solve_ks_fixed_point(
    alpha: f64,
    alpha_f: f64,
    alloc: &FlexAllocation,
    tol: f64,
    max_iter: usize,
) -> Result<KsSolution, KsError> {
    if !(alpha >= 0.0 && alpha_f > alpha) {
        return Err(KsError::InvalidParams(format!(
            "require alpha_f > alpha >= 0, got alpha={}, alpha_f={}",
            alpha, alpha_f
        )));
    }
    if !(tol > 0.0) {
        return Err(KsError::InvalidParams("tol must be positive".into()));
    }
    let (b_l, b_r) = (alloc.b_l, alloc.b_r);
    let mut w = KsVector::default();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = apply_map(alpha, alpha_f, b_l, b_r, &w);
        residual = w
            .as_array()
            .iter()
            .zip(next.as_array().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        w = next;
        iterations += 1;
        if residual < tol {
            break;
        }
    }
    // At the critical surface (effective rate exactly e for some allocation)
    // the iteration converges only polynomially; accept a looser residual
    // there rather than failing, since the value error is of the same order.
    if residual >= tol && residual >= RELAXED_TOL {
        return Err(KsError::NonConvergence {
            residual,
            iterations,
        });
    }
    let xi = xi_value(alpha, alpha_f, b_l, b_r, &w);
    // xi_hat is xi with the two sides' roles exchanged.
    let swapped = KsVector {
        w_l_f: w.w_hat_l_f,
        w_l_nf: w.w_hat_l_nf,
        w_h_f: w.w_hat_h_f,
        w_h_nf: w.w_hat_h_nf,
        w_hat_l_f: w.w_l_f,
        w_hat_l_nf: w.w_l_nf,
        w_hat_h_f: w.w_h_f,
        w_hat_h_nf: w.w_h_nf,
    };
    let xi_hat = xi_value(alpha, alpha_f, b_r, b_l, &swapped);
    Ok(KsSolution {
        y: w,
        xi,
        xi_hat,
        mu_ks: xi.min(xi_hat),
        iterations,
        residual,
        subcritical: is_subcritical(alpha, alpha_f),
    })
}

/// Convenience: just the surrogate value with default tolerances.
pub fn mu_ks(alpha: f64, alpha_f: f64, alloc: &FlexAllocation) -> Result<f64, KsError> {
    Ok(solve_ks_fixed_point(alpha, alpha_f, alloc, DEFAULT_TOL, DEFAULT_MAX_ITER)?.mu_ks)
}

/// A scalar solve with a certified enclosure.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CertifiedScalar {
    pub value: f64,
    pub enclosure: (f64, f64),
    /// Whether the enclosure argument (derivative bound > 1) applies at these
    /// parameters.
    pub certified: bool,
}

/// Safeguarded bisection/Newton on a bracketing interval; stops when
/// |f(x)| < eps.
fn solve_bracketed(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    eps: f64,
) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() < eps {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Reduced one-sided system: solve `x = exp(-(alpha_f+alpha) x)`. Below the
/// critical rate this symmetric root is also the unique solution of the
/// two-level form `x = exp(-s exp(-s x))` that the degree evolution
/// produces. The residual has derivative `1 + s e^{-sx} > 1` everywhere, so
/// the root lies within `eps` of the returned value.
pub fn solve_reduced_one_sided(alpha: f64, alpha_f: f64, eps: f64) -> Result<CertifiedScalar, KsError> {
    if !(alpha >= 0.0 && alpha_f > alpha) {
        return Err(KsError::InvalidParams("require alpha_f > alpha >= 0".into()));
    }
    let s = alpha_f + alpha;
    let f = |x: f64| x - (-s * x).exp();
    let df = |x: f64| 1.0 + s * (-s * x).exp();
    // f(0) = -1 < 0 and f(1) = 1 - exp(-s) > 0: bracket [0,1].
    let x = solve_bracketed(f, df, 0.0, 1.0, eps);
    let certified = is_subcritical(alpha, alpha_f) && alpha > 1e-4;
    Ok(CertifiedScalar {
        value: x,
        enclosure: (x - eps, x + eps),
        certified,
    })
}

/// Reduced balanced system solution: `x1`, `x2` with enclosures.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BalancedSolution {
    pub x1: CertifiedScalar,
    pub x2: CertifiedScalar,
}

/// The scalar residual for the balanced reduction: substituting
/// `x2(x1) = -2(ln x1 + alpha_f x1)/(alpha_f+alpha)` into the second fixed
/// point equation.
pub fn f1_balanced(alpha: f64, alpha_f: f64, x1: f64) -> f64 {
    let s = alpha_f + alpha;
    let t = x1.ln() + alpha_f * x1;
    (-0.5 * s * x1 + 2.0 * alpha / s * t).exp() + 2.0 * t / s
}

/// Derivative of [`f1_balanced`] in `x1`.
pub fn f1_balanced_derivative(alpha: f64, alpha_f: f64, x1: f64) -> f64 {
    let s = alpha_f + alpha;
    let t = x1.ln() + alpha_f * x1;
    let inner = alpha_f + 1.0 / x1;
    (-0.5 * s * x1 + 2.0 * alpha / s * t).exp() * (-0.5 * s + 2.0 * alpha / s * inner)
        + 2.0 / s * inner
}

/// Map x1 to x2 via the balanced log relation.
pub fn x2_from_x1(alpha: f64, alpha_f: f64, x1: f64) -> f64 {
    -2.0 * (x1.ln() + alpha_f * x1) / (alpha_f + alpha)
}

/// Reduced balanced system: solve `f1(x1) = 0` on (0, 1], then propagate the
/// enclosure through the monotone decreasing x1 -> x2 map.
pub fn solve_reduced_balanced(
    alpha: f64,
    alpha_f: f64,
    eps: f64,
) -> Result<BalancedSolution, KsError> {
    if !(alpha >= 0.0 && alpha_f > alpha) {
        return Err(KsError::InvalidParams("require alpha_f > alpha >= 0".into()));
    }
    // f1 -> -inf as x1 -> 0+ and f1(1) > 0.
    let lo = 1e-300f64;
    let x1 = solve_bracketed(
        |x| f1_balanced(alpha, alpha_f, x),
        |x| f1_balanced_derivative(alpha, alpha_f, x),
        lo,
        1.0,
        eps,
    );
    let certified = is_subcritical(alpha, alpha_f) && alpha > 1e-4;
    // x2(x1) is decreasing on the relevant range (d x2/d x1 < 0 where
    // alpha_f + 1/x1 > 0), so the enclosure endpoints swap.
    let x2_lo = x2_from_x1(alpha, alpha_f, x1 + eps);
    let x2_hi = x2_from_x1(alpha, alpha_f, (x1 - eps).max(lo));
    Ok(BalancedSolution {
        x1: CertifiedScalar {
            value: x1,
            enclosure: (x1 - eps, x1 + eps),
            certified,
        },
        x2: CertifiedScalar {
            value: x2_from_x1(alpha, alpha_f, x1),
            enclosure: (x2_lo, x2_hi),
            certified,
        },
    })
}

/// Exact directional second-order derivatives of `xi` at the balanced point
/// `b = (1/2, 1/2)`, budget `B = 1`: along the diagonal `(1,-1)` (convexity
/// candidate) and along the budget direction `(0,1)` (concavity candidate).
pub fn directional_sod_balanced(alpha: f64, alpha_f: f64) -> Result<(f64, f64), KsError> {
    let sol = solve_reduced_balanced(alpha, alpha_f, DEFAULT_EPS)?;
    let x1 = sol.x1.value;
    let x2 = sol.x2.value;
    Ok((
        sod_diag(alpha, alpha_f, x1, x2),
        sod_budget(alpha, alpha_f, x1, x2),
    ))
}

/// Diagonal-direction second derivative at the balanced point as a function
/// of the balanced fixed point (x1, x2).
pub fn sod_diag(alpha: f64, alpha_f: f64, x1: f64, x2: f64) -> f64 {
    let d = alpha_f - alpha;
    let num = d * d * 4.0 * x1 * x2 * (x1 + x2) - 16.0 * (x2 - x1) * (alpha_f * x1 - alpha * x2);
    let den = d * d * x1 * x2 + 4.0 * (alpha * x2 + alpha_f * x1 - 1.0);
    num / den
}

/// Budget-direction second derivative at the balanced point.
pub fn sod_budget(alpha: f64, alpha_f: f64, x1: f64, x2: f64) -> f64 {
    let d2 = (alpha_f - alpha) * (alpha_f - alpha);
    let q = x1 * x2 * d2; // x1 x2 (alpha_f - alpha)^2
    let den = -(q * q) + 8.0 * x1 * x2 * (alpha_f + alpha) * (alpha_f + alpha)
        + 16.0 * (alpha * alpha * x2 * x2 + alpha_f * alpha_f * x1 * x1 - 1.0);
    let num = -2.0 * (x1 + x2) * q * q - 16.0 * (x1 + x2) * x1 * x2 * alpha_f * alpha
        + 8.0 * alpha_f * alpha_f * x1 * (x2 * x2 - 3.0 * x1 * x2 + 4.0 * x1 * x1)
        + 8.0 * alpha * alpha * x2 * (x1 * x1 - 3.0 * x1 * x2 + 4.0 * x2 * x2);
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA: f64 = 0.567_143_290_409_783_8; // root of x e^x = 1

    #[test]
    fn one_sided_unit_intensity_hits_omega() {
        // At (alpha_f, alpha) = (1, 0), x solves x = e^{-e^{-x}}; its root is
        // the omega constant since e^{-Omega} = Omega.
        let x = solve_reduced_one_sided(0.0, 1.0, 1e-12).unwrap().value;
        assert!((x - OMEGA).abs() < 1e-9, "x = {}", x);
    }

    #[test]
    fn eight_dim_matches_one_sided_reduction() {
        // mu_ks(1,0) at (1,0) equals 2 - 2x - x^2 with x the reduced root.
        let alloc = FlexAllocation::one_sided(1.0);
        let sol = solve_ks_fixed_point(0.0, 1.0, &alloc, 1e-13, 1_000_000).unwrap();
        let expected = 2.0 - 2.0 * OMEGA - OMEGA * OMEGA;
        assert!(
            (sol.mu_ks - expected).abs() < 1e-6,
            "mu_ks = {}, expected {}",
            sol.mu_ks,
            expected
        );
    }

    #[test]
    fn symmetric_allocation_equates_xi() {
        let alloc = FlexAllocation::balanced(1.0);
        let sol = solve_ks_fixed_point(0.3, 1.2, &alloc, 1e-13, 1_000_000).unwrap();
        assert!((sol.xi - sol.xi_hat).abs() < 1e-10);
        // Hatted components equal unhatted ones at symmetric allocations.
        assert!((sol.y.w_l_f - sol.y.w_hat_l_f).abs() < 1e-10);
        assert!((sol.y.w_h_nf - sol.y.w_hat_h_nf).abs() < 1e-10);
    }

    #[test]
    fn relabeling_symmetry() {
        let a = solve_ks_fixed_point(0.2, 1.0, &FlexAllocation::new(0.7, 0.1), 1e-13, 1_000_000)
            .unwrap();
        let b = solve_ks_fixed_point(0.2, 1.0, &FlexAllocation::new(0.1, 0.7), 1e-13, 1_000_000)
            .unwrap();
        assert!((a.xi - b.xi_hat).abs() < 1e-9);
        assert!((a.xi_hat - b.xi).abs() < 1e-9);
        assert!((a.mu_ks - b.mu_ks).abs() < 1e-9);
    }

    #[test]
    fn components_stay_in_unit_interval() {
        for &(alpha, alpha_f, b_l, b_r) in &[
            (0.1, 1.0, 0.5, 0.5),
            (0.5, 2.0, 1.0, 0.0),
            (0.0, 2.5, 0.3, 0.7),
            (1.0, 4.0, 0.2, 0.2),
        ] {
            let sol = solve_ks_fixed_point(
                alpha,
                alpha_f,
                &FlexAllocation::new(b_l, b_r),
                1e-12,
                1_000_000,
            )
            .unwrap();
            for v in sol.y.as_array() {
                assert!((0.0..=1.0).contains(&v), "component {} out of range", v);
            }
            assert!(sol.mu_ks >= 0.0 && sol.mu_ks <= 1.0 + 1e-9, "mu_ks {}", sol.mu_ks);
        }
    }

    #[test]
    fn surrogate_vanishes_with_vanishing_intensities() {
        let sol = solve_ks_fixed_point(
            1e-6,
            2e-6,
            &FlexAllocation::balanced(1.0),
            1e-14,
            1_000_000,
        )
        .unwrap();
        assert!(sol.mu_ks < 1e-5, "mu_ks {}", sol.mu_ks);
    }

    #[test]
    fn uniqueness_sum_to_one_in_subcritical_regime() {
        // In the unique-solution regime the least fixed point satisfies
        // y_L + y_H = 1 componentwise.
        for alloc in [FlexAllocation::one_sided(1.0), FlexAllocation::balanced(1.0)] {
            let sol = solve_ks_fixed_point(0.3, 1.5, &alloc, 1e-13, 1_000_000).unwrap();
            assert!(sol.subcritical);
            assert!((sol.y.w_l_f + sol.y.w_h_f - 1.0).abs() < 1e-9);
            assert!((sol.y.w_l_nf + sol.y.w_h_nf - 1.0).abs() < 1e-9);
            assert!((sol.y.w_hat_l_f + sol.y.w_hat_h_f - 1.0).abs() < 1e-9);
            assert!((sol.y.w_hat_l_nf + sol.y.w_hat_h_nf - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn balanced_reduction_matches_eight_dim() {
        let (alpha, alpha_f) = (0.3, 1.2);
        let red = solve_reduced_balanced(alpha, alpha_f, 1e-10).unwrap();
        let sol = solve_ks_fixed_point(
            alpha,
            alpha_f,
            &FlexAllocation::balanced(1.0),
            1e-13,
            1_000_000,
        )
        .unwrap();
        assert!(
            (red.x1.value - sol.y.w_l_f).abs() < 1e-7,
            "x1 {} vs {}",
            red.x1.value,
            sol.y.w_l_f
        );
        assert!(
            (red.x2.value - sol.y.w_l_nf).abs() < 1e-7,
            "x2 {} vs {}",
            red.x2.value,
            sol.y.w_l_nf
        );
    }

    #[test]
    fn balanced_solution_satisfies_both_equations() {
        let (alpha, alpha_f) = (0.4, 1.1);
        let s = alpha_f + alpha;
        let red = solve_reduced_balanced(alpha, alpha_f, 1e-10).unwrap();
        let (x1, x2) = (red.x1.value, red.x2.value);
        let r1 = x1 - (-alpha_f * x1 - 0.5 * s * x2).exp();
        let r2 = x2 - (-0.5 * s * x1 - alpha * x2).exp();
        assert!(r1.abs() < 1e-7, "r1 {}", r1);
        assert!(r2.abs() < 1e-7, "r2 {}", r2);
    }

    #[test]
    fn one_sided_enclosure_contains_iterated_root() {
        let (alpha, alpha_f) = (0.2, 1.3);
        let sol = solve_reduced_one_sided(alpha, alpha_f, 1e-8).unwrap();
        // Independent oracle: plain fixed-point iteration of the reduced map.
        let s = alpha_f + alpha;
        let mut x = 0.5;
        for _ in 0..10_000 {
            x = (-s * (-s * x).exp()).exp();
        }
        assert!(sol.enclosure.0 <= x && x <= sol.enclosure.1);
        assert!(sol.certified);
    }

    #[test]
    fn sod_signs_in_certified_region() {
        // (alpha, alpha_f) = (0.3, 1.5) satisfies alpha < 0.64 alpha_f - 0.03
        // and 0.62 alpha_f + alpha < 1.68.
        let (diag, budget) = directional_sod_balanced(0.3, 1.5).unwrap();
        assert!(diag > 0.0, "diag {}", diag);
        assert!(budget < 0.0, "budget {}", budget);
    }

    #[test]
    fn sod_diag_matches_finite_difference() {
        let (alpha, alpha_f) = (0.3, 1.5);
        let (diag, _) = directional_sod_balanced(alpha, alpha_f).unwrap();
        let h = 1e-3;
        let f = |b_l: f64| {
            solve_ks_fixed_point(
                alpha,
                alpha_f,
                &FlexAllocation::new(b_l, 1.0 - b_l),
                1e-13,
                1_000_000,
            )
            .unwrap()
            .xi
        };
        let fd = (f(0.5 + h) - 2.0 * f(0.5) + f(0.5 - h)) / (h * h);
        assert!(
            (diag - fd).abs() / diag.abs().max(1e-12) < 1e-3,
            "closed {} vs fd {}",
            diag,
            fd
        );
    }

    #[test]
    fn sod_budget_matches_finite_difference() {
        let (alpha, alpha_f) = (0.3, 1.5);
        let (_, budget) = directional_sod_balanced(alpha, alpha_f).unwrap();
        let h = 1e-3;
        // Budget direction at B=1, b_l = 1/2: b = (1/2, 1/2 + t).
        let f = |t: f64| {
            solve_ks_fixed_point(
                alpha,
                alpha_f,
                &FlexAllocation::new(0.5, 0.5 + t),
                1e-13,
                1_000_000,
            )
            .unwrap()
            .xi
        };
        let fd = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        assert!(
            (budget - fd).abs() / budget.abs().max(1e-12) < 1e-2,
            "closed {} vs fd {}",
            budget,
            fd
        );
    }

    #[test]
    fn rejects_bad_params() {
        assert!(solve_ks_fixed_point(1.0, 0.5, &FlexAllocation::balanced(1.0), 1e-12, 100).is_err());
        assert!(solve_reduced_one_sided(1.0, 0.5, 1e-8).is_err());
    }
}
