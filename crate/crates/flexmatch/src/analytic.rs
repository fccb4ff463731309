//! Closed-form and bound computations.
//!
//! * Degree-0 metric `phi` and its one-sided vs balanced classifier.
//! * The local-model (k = 2) matched fraction via a 2x2 linear fixed point.
//! * The cannibalization gap lower bound `(alpha_f)^3 / 32 * exp(-7 alpha_f)`.
//! * The asymmetry thresholds `alpha_star(B)` and `alpha_f_star(B, alpha)`
//!   delimiting the regime where the balanced allocation provably wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::FlexAllocation;

/// Tie tolerance for analytic classifiers: the formulas are exact, only
/// floating-point error remains.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// The per-side isolated fractions and the resulting degree-0 metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    /// Limiting expected fraction of isolated left nodes.
    pub phi1: f64,
    /// Limiting expected fraction of isolated right nodes.
    pub phi2: f64,
    /// `1 - max(phi1, phi2)`: the minimum over sides of the non-isolated
    /// fraction.
    pub phi: f64,
}

/// Limiting fraction of isolated nodes per side and the combined metric.
pub fn phi_closed_form(alpha: f64, alpha_f: f64, alloc: &FlexAllocation) -> PhiValue {
    let s = alpha + alpha_f;
    let iso = |b_this: f64, b_other: f64| {
        b_this * (-(2.0 * alpha_f * b_other + s * (1.0 - b_other))).exp()
            + (1.0 - b_this) * (-(s * b_other + 2.0 * alpha * (1.0 - b_other))).exp()
    };
    let phi1 = iso(alloc.b_l, alloc.b_r);
    let phi2 = iso(alloc.b_r, alloc.b_l);
    PhiValue {
        phi1,
        phi2,
        phi: 1.0 - phi1.max(phi2),
    }
}

/// Which allocation maximizes the degree-0 metric for a given budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationChoice {
    OneSided,
    Balanced,
    Tie,
}

/// The one-sided vs balanced criterion for `phi`:
/// `e^{-(B/2)d}(1 - B/2 + (B/2)e^{-d}) - (1-B) - B e^{-d}` with
/// `d = alpha_f - alpha`. Positive means the one-sided allocation wins.
pub fn phi_star(alpha: f64, alpha_f: f64, budget: f64) -> f64 {
    let d = alpha_f - alpha;
    let x = (-d).exp();
    let h = budget / 2.0;
    (-h * d).exp() * (1.0 - h + h * x) - (1.0 - budget) - budget * x
}

/// Classify the `phi`-optimal allocation at budget `B`.
pub fn phi_optimal_allocation(alpha: f64, alpha_f: f64, budget: f64) -> AllocationChoice {
    let v = phi_star(alpha, alpha_f, budget);
    if v > TIE_TOL {
        AllocationChoice::OneSided
    } else if v < -TIE_TOL {
        AllocationChoice::Balanced
    } else {
        AllocationChoice::Tie
    }
}

/// Local model (k = 2) matched fraction, by solving the 2x2 linear fixed
/// point for the conditional carry-over probabilities `(x_f, x_n)` exactly.
///
/// `x_f` (`x_n`) is the probability that right node i is matched to left
/// node i-1 given it is flexible (regular); the fixed point is linear because
/// each step conditions on the four type combinations of the adjacent pair.
pub fn local_model_mu(
    p: f64,
    p_f: f64,
    alloc: &FlexAllocation,
) -> Result<f64, AnalyticError> {
    if !(0.0 <= p && p < p_f && p_f <= 0.5) {
        return Err(AnalyticError::InvalidParams(format!(
            "require 0 <= p < p_f <= 1/2, got p={}, p_f={}",
            p, p_f
        )));
    }
    let (b_l, b_r) = (alloc.b_l, alloc.b_r);
    // x_f' = a1 x_f + c1 x_n + d1 ; x_n' = a2 x_f + c2 x_n + d2, where each
    // coefficient aggregates [x 2p' + (1-x)(1-q')(p'')] over type combos.
    // Probabilities: edge prob between the fixed pair (l_i, r_i) and the
    // forward pair (l_i, r_{i+1}) depend on the types of l_i, r_i, r_{i+1}.
    let combos = |r_next_flexible: bool| -> (f64, f64, f64) {
        // Returns (coef_xf, coef_xn, constant) for the given r_{i+1} type.
        let mut coef_xf = 0.0;
        let mut coef_xn = 0.0;
        let mut constant = 0.0;
        for (w_l, fl) in [(b_l, true), (1.0 - b_l, false)] {
            for (w_r, fr) in [(b_r, true), (1.0 - b_r, false)] {
                let weight = w_l * w_r;
                // Edge probability (l_i, r_i): depends on fl, fr.
                let p_same = edge_prob(fl, fr, p, p_f);
                // Edge probability (l_i, r_{i+1}): depends on fl and the
                // r_{i+1} type this pass computes coefficients for.
                let p_next = edge_prob(fl, r_next_flexible, p, p_f);
                // matched-forward prob = x * p_next + (1 - x)(1 - p_same) p_next
                // with x = x_f or x_n according to the type of r_i.
                let lin = weight * (p_next - (1.0 - p_same) * p_next);
                let cst = weight * (1.0 - p_same) * p_next;
                if fr {
                    coef_xf += lin;
                } else {
                    coef_xn += lin;
                }
                constant += cst;
            }
        }
        (coef_xf, coef_xn, constant)
    };
    let (a1, c1, d1) = combos(true);
    let (a2, c2, d2) = combos(false);
    // Solve (I - A) x = d. The system degenerates only at the saturated
    // boundary (p_f = 1/2 with both sides fully flexible), where every
    // carry-over value yields the same matched fraction; fall back to
    // iterating the affine map there.
    let det = (1.0 - a1) * (1.0 - c2) - c1 * a2;
    let (x_f, x_n) = if det.abs() > 1e-14 {
        (
            (d1 * (1.0 - c2) + c1 * d2) / det,
            ((1.0 - a1) * d2 + a2 * d1) / det,
        )
    } else {
        let (mut x_f, mut x_n) = (0.0, 0.0);
        for _ in 0..10_000 {
            (x_f, x_n) = (a1 * x_f + c1 * x_n + d1, a2 * x_f + c2 * x_n + d2);
        }
        (x_f, x_n)
    };
    // Matched probability of a random right node: carried over from the left
    // neighbor, or matched in place.
    let in_place_f = (1.0 + b_l) * p_f + (1.0 - b_l) * p;
    let in_place_n = b_l * p_f + (2.0 - b_l) * p;
    Ok(b_r * (x_f + (1.0 - x_f) * in_place_f) + (1.0 - b_r) * (x_n + (1.0 - x_n) * in_place_n))
}

#[inline]
fn edge_prob(fl: bool, fr: bool, p: f64, p_f: f64) -> f64 {
    match (fl, fr) {
        (true, true) => 2.0 * p_f,
        (false, false) => 2.0 * p,
        _ => p + p_f,
    }
}

/// Theorem-2-style gap lower bound at `B = 1`, `alpha = 0`:
/// `(alpha_f)^3 / 2^5 * exp(-7 alpha_f)`.
pub fn cannibalization_gap_bound(alpha_f: f64) -> f64 {
    alpha_f.powi(3) / 32.0 * (-7.0 * alpha_f).exp()
}

/// Asymmetry thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AsymmetryThresholds {
    /// Upper bound on `alpha` for the balanced-dominance regime.
    pub alpha_star: f64,
    /// Lower bound on `alpha_f`; present only when `0 < alpha < alpha_star`.
    pub alpha_f_star: Option<f64>,
}

/// `alpha_star(B)` and, when defined, `alpha_f_star(B, alpha)`: for
/// `0 < alpha < alpha_star(B)` and `alpha_f > alpha_f_star`, the balanced
/// allocation strictly beats the one-sided one.
pub fn asymmetry_thresholds(budget: f64, alpha: f64) -> Result<AsymmetryThresholds, AnalyticError> {
    if !(budget > 0.0 && budget < 1.0) {
        return Err(AnalyticError::InvalidParams(format!(
            "budget must lie in (0,1), got {}",
            budget
        )));
    }
    let h = 1.0 - budget / 2.0;
    let alpha_star = (budget * budget / (8.0 * h * h * h))
        .min(((2.0 - budget) / budget).ln() / (2.0 * h));
    let alpha_f_star = if alpha > 0.0 && alpha < alpha_star {
        let inner = 2.0 * alpha
            * ((budget / 2.0) * (budget / 2.0) - 2.0 * alpha * h * h * h);
        let num = budget.ln() - inner.ln();
        let den = h * (-2.0 * alpha * h).exp() - budget / 2.0;
        Some(num / den)
    } else {
        None
    };
    Ok(AsymmetryThresholds {
        alpha_star,
        alpha_f_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_collapses_when_intensities_coincide_in_limit() {
        // With alpha == alpha_f = a the exponents all equal 2a regardless of
        // the allocation. phi_closed_form itself doesn't require
        // alpha_f > alpha, so evaluate directly.
        let a = 0.7;
        for alloc in [
            FlexAllocation::new(0.2, 0.6),
            FlexAllocation::one_sided(0.9),
            FlexAllocation::balanced(0.5),
        ] {
            let v = phi_closed_form(a, a, &alloc);
            assert!((v.phi - (1.0 - (-2.0 * a).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn phi_no_flexibility() {
        let v = phi_closed_form(0.4, 2.0, &FlexAllocation::new(0.0, 0.0));
        assert!((v.phi - (1.0 - (-0.8f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn phi_symmetry_under_swap() {
        let alloc = FlexAllocation::new(0.3, 0.8);
        let a = phi_closed_form(0.2, 1.7, &alloc);
        let b = phi_closed_form(0.2, 1.7, &alloc.swapped());
        assert_eq!(a.phi1, b.phi2);
        assert_eq!(a.phi2, b.phi1);
        assert_eq!(a.phi, b.phi);
    }

    #[test]
    fn phi_ordering_at_full_budget() {
        // At B = 1 the one-sided allocation maximizes phi.
        let one = phi_closed_form(0.0, 3.0, &FlexAllocation::one_sided(1.0)).phi;
        let bal = phi_closed_form(0.0, 3.0, &FlexAllocation::balanced(1.0)).phi;
        assert!(one >= bal, "one-sided {} < balanced {}", one, bal);
        assert_eq!(
            phi_optimal_allocation(0.0, 3.0, 1.0),
            AllocationChoice::OneSided
        );
    }

    #[test]
    fn classifier_balanced_below_two_thirds() {
        for &budget in &[0.1, 0.3, 0.5, 0.65] {
            for &(alpha, alpha_f) in &[(0.0, 1.0), (0.3, 2.0), (1.0, 4.0)] {
                let c = phi_optimal_allocation(alpha, alpha_f, budget);
                assert!(
                    c == AllocationChoice::Balanced || c == AllocationChoice::Tie,
                    "B={} alpha={} alpha_f={} -> {:?}",
                    budget,
                    alpha,
                    alpha_f,
                    c
                );
            }
        }
    }

    #[test]
    fn classifier_ties_when_intensities_equal() {
        assert_eq!(phi_optimal_allocation(1.0, 1.0, 0.8), AllocationChoice::Tie);
    }

    #[test]
    fn classifier_matches_grid_argmax() {
        // The criterion must agree with a grid argmax of the closed form.
        for &budget in &[0.4, 0.7, 0.9, 1.0] {
            for &(alpha, alpha_f) in &[(0.1, 0.5), (0.1, 2.0), (0.5, 4.0)] {
                let choice = phi_optimal_allocation(alpha, alpha_f, budget);
                let grid = 101;
                let mut best = f64::NEG_INFINITY;
                let mut best_bl = 0.0;
                for i in 0..grid {
                    let b_l = budget * i as f64 / (grid - 1) as f64;
                    let v = phi_closed_form(
                        alpha,
                        alpha_f,
                        &FlexAllocation::new(b_l, budget - b_l),
                    )
                    .phi;
                    if v > best {
                        best = v;
                        best_bl = b_l;
                    }
                }
                let one = phi_closed_form(alpha, alpha_f, &FlexAllocation::one_sided(budget)).phi;
                let bal = phi_closed_form(alpha, alpha_f, &FlexAllocation::balanced(budget)).phi;
                match choice {
                    AllocationChoice::OneSided => assert!(
                        (best - one).abs() < 1e-9,
                        "B={} grid argmax b_l={} not one-sided",
                        budget,
                        best_bl
                    ),
                    AllocationChoice::Balanced => assert!(
                        (best - bal).abs() < 1e-9,
                        "B={} grid argmax b_l={} not balanced",
                        budget,
                        best_bl
                    ),
                    AllocationChoice::Tie => assert!((one - bal).abs() < 1e-9),
                }
            }
        }
    }

    #[test]
    fn local_mu_no_flexibility_closed_form() {
        // b = (0,0): x_n = 2p(1-2p) + 2p x_n (2p - ... ) collapses to
        // mu = 4p/(1+2p); at p = 1/4 this is 2/3.
        let mu = local_model_mu(0.25, 0.5, &FlexAllocation::new(0.0, 0.0)).unwrap();
        assert!((mu - 2.0 / 3.0).abs() < 1e-12, "mu {}", mu);
    }

    #[test]
    fn local_mu_saturated_flexibility() {
        // p_f = 1/2, all flexible: every eligible edge exists, perfect
        // matching via the diagonal.
        let mu = local_model_mu(0.1, 0.5, &FlexAllocation::new(1.0, 1.0)).unwrap();
        assert!((mu - 1.0).abs() < 1e-12, "mu {}", mu);
    }

    #[test]
    fn local_one_sided_beats_balanced() {
        // Deterministic parameter sample over the valid range.
        let mut failures = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 19.0;
            let budget = 0.05 + 0.95 * t;
            let p_f = 0.05 + 0.45 * ((i * 7) % 20) as f64 / 19.0;
            let p = p_f * (((i * 3) % 20) as f64 / 19.0) * 0.9;
            let one = local_model_mu(p, p_f, &FlexAllocation::one_sided(budget)).unwrap();
            let bal = local_model_mu(p, p_f, &FlexAllocation::balanced(budget)).unwrap();
            if !(one > bal) {
                failures.push((budget, p, p_f, one, bal));
            }
        }
        assert!(failures.is_empty(), "violations: {:?}", failures);
    }

    /// Test-only oracle: the fully expanded rational closed form of the
    /// local-model matched fraction (numerator and denominator are
    /// eighth-order polynomials). Transcription verified symbolically
    /// against the linear fixed-point solution before freezing.
    #[allow(clippy::too_many_lines)]
    fn local_mu_expanded(p: f64, f: f64, b_l: f64, b_r: f64) -> f64 {
        let s = b_l + b_r;
        let b = b_l;
        let (s2, b2, b3, b4) = (s * s, b * b, b * b * b, b * b * b * b);
        let (p2, p3, p4) = (p * p, p * p * p, p * p * p * p);
        let (f2, f3, f4) = (f * f, f * f * f, f * f * f * f);
        let num = 2.0 * s2 * p4 * b2 - 2.0 * s2 * p4 * b - 8.0 * s2 * p3 * f * b2
            + 8.0 * s2 * p3 * f * b
            + 12.0 * s2 * p2 * f2 * b2
            - 12.0 * s2 * p2 * f2 * b
            - s2 * p2
            - 8.0 * s2 * p * f3 * b2
            + 8.0 * s2 * p * f3 * b
            + 2.0 * s2 * p * f
            + 2.0 * s2 * f4 * b2
            - 2.0 * s2 * f4 * b
            - s2 * f2
            - 4.0 * s * p4 * b3
            + 2.0 * s * p4 * b2
            + 2.0 * s * p4 * b
            + 16.0 * s * p3 * f * b3
            - 8.0 * s * p3 * f * b2
            - 8.0 * s * p3 * f * b
            - 24.0 * s * p2 * f2 * b3
            + 12.0 * s * p2 * f2 * b2
            + 12.0 * s * p2 * f2 * b
            - 2.0 * s * p2 * b
            + 7.0 * s * p2
            + 16.0 * s * p * f3 * b3
            - 8.0 * s * p * f3 * b2
            - 8.0 * s * p * f3 * b
            + 4.0 * s * p * f * b
            - 6.0 * s * p * f
            - 2.0 * s * p
            - 4.0 * s * f4 * b3
            + 2.0 * s * f4 * b2
            + 2.0 * s * f4 * b
            - 2.0 * s * f2 * b
            - s * f2
            + 2.0 * s * f
            + 2.0 * p4 * b4
            - 2.0 * p4 * b2
            - 8.0 * p3 * f * b4
            + 8.0 * p3 * f * b2
            + 12.0 * p2 * f2 * b4
            - 12.0 * p2 * f2 * b2
            + 2.0 * p2 * b2
            - 8.0 * p2
            - 8.0 * p * f3 * b4
            + 8.0 * p * f3 * b2
            - 4.0 * p * f * b2
            + 4.0 * p
            + 2.0 * f4 * b4
            - 2.0 * f4 * b2
            + 2.0 * f2 * b2;
        let den = s2 * p4 * b2 - s2 * p4 * b - 4.0 * s2 * p3 * f * b2 + 4.0 * s2 * p3 * f * b
            + 6.0 * s2 * p2 * f2 * b2
            - 6.0 * s2 * p2 * f2 * b
            - 4.0 * s2 * p * f3 * b2
            + 4.0 * s2 * p * f3 * b
            + s2 * f4 * b2
            - s2 * f4 * b
            - 2.0 * s * p4 * b3
            + s * p4 * b2
            + s * p4 * b
            + 8.0 * s * p3 * f * b3
            - 4.0 * s * p3 * f * b2
            - 4.0 * s * p3 * f * b
            - 12.0 * s * p2 * f2 * b3
            + 6.0 * s * p2 * f2 * b2
            + 6.0 * s * p2 * f2 * b
            - 2.0 * s * p2 * b
            + 3.0 * s * p2
            + 8.0 * s * p * f3 * b3
            - 4.0 * s * p * f3 * b2
            - 4.0 * s * p * f3 * b
            + 4.0 * s * p * f * b
            - 2.0 * s * p * f
            - 2.0 * s * f4 * b3
            + s * f4 * b2
            + s * f4 * b
            - 2.0 * s * f2 * b
            - s * f2
            + p4 * b4
            - p4 * b2
            - 4.0 * p3 * f * b4
            + 4.0 * p3 * f * b2
            + 6.0 * p2 * f2 * b4
            - 6.0 * p2 * f2 * b2
            + 2.0 * p2 * b2
            - 4.0 * p2
            - 4.0 * p * f3 * b4
            + 4.0 * p * f3 * b2
            - 4.0 * p * f * b2
            + f4 * b4
            - f4 * b2
            + 2.0 * f2 * b2
            + 1.0;
        num / den
    }

    #[test]
    fn local_mu_matches_expanded_rational_form() {
        // Deterministic pseudo-random parameter sample over the valid range.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let b_l = unit();
            let b_r = unit();
            let p_f = 0.05 + 0.45 * unit();
            let p = p_f * 0.95 * unit();
            let lin = local_model_mu(p, p_f, &FlexAllocation::new(b_l, b_r)).unwrap();
            let rat = local_mu_expanded(p, p_f, b_l, b_r);
            assert!(
                (lin - rat).abs() < 1e-12,
                "mismatch at ({b_l},{b_r},{p},{p_f}): {lin} vs {rat}"
            );
        }
    }

    #[test]
    fn local_mu_rejects_bad_p() {
        assert!(local_model_mu(0.5, 0.4, &FlexAllocation::new(0.0, 0.0)).is_err());
        assert!(local_model_mu(0.1, 0.6, &FlexAllocation::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn gap_bound_values() {
        assert!(cannibalization_gap_bound(1e-9) < 1e-26);
        let v = cannibalization_gap_bound(1.0);
        assert!((v - (-7.0f64).exp() / 32.0).abs() < 1e-18);
        // Stationary point of x^3 e^{-7x} at x = 3/7.
        let h = 1e-6;
        let d = (cannibalization_gap_bound(3.0 / 7.0 + h)
            - cannibalization_gap_bound(3.0 / 7.0 - h))
            / (2.0 * h);
        assert!(d.abs() < 1e-8, "derivative {}", d);
    }

    #[test]
    fn alpha_star_at_budget_point_six() {
        let t = asymmetry_thresholds(0.6, 0.0).unwrap();
        // min{0.36/(8 * 0.7^3), ln(1.4/0.6)/1.4}
        let first = 0.36 / (8.0 * 0.7f64.powi(3));
        let second = (1.4f64 / 0.6).ln() / 1.4;
        assert!((t.alpha_star - first.min(second)).abs() < 1e-12);
        assert!((t.alpha_star - 0.13119533527696792).abs() < 1e-9);
        assert!(t.alpha_f_star.is_none(), "alpha=0 is outside (0, alpha_star)");
    }

    #[test]
    fn alpha_f_star_defined_only_in_regime() {
        let inside = asymmetry_thresholds(0.6, 0.05).unwrap();
        assert!(inside.alpha_f_star.is_some());
        let outside = asymmetry_thresholds(0.6, 0.2).unwrap();
        assert!(outside.alpha_f_star.is_none());
    }

    #[test]
    fn thresholds_reject_bad_budget() {
        assert!(asymmetry_thresholds(0.0, 0.1).is_err());
        assert!(asymmetry_thresholds(1.0, 0.1).is_err());
    }
}
