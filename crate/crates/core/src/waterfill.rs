//! Single-user best response: water-filling under a total budget and a
//! per-channel mask.
//!
//! The allocation is `p[k] = clamp(mu - s[k], 0, mask[k])` with the water
//! level `mu = 1 / lambda` chosen so the budget is spent exactly. `mu` is found
//! by bisection; the map `mu -> sum_k p[k]` is continuous and nondecreasing.
//! Channels with equal floors are filled equally, no tie-breaking is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute tolerance on the budget residual `|sum p - p_max|`.
pub const BUDGET_TOL: f64 = 1e-10;
pub const MAX_BISECT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct BestResponse<T> {
    pub power: Vec<T>,
    /// Multiplier of the budget constraint; zero when the budget is slack.
    pub lambda: T,
    /// `1 / lambda` when the budget binds.
    pub water_level: Option<T>,
    pub budget_active: bool,
}

fn allocated<T: Scalar>(mu: T, s_eff: &[T], p_mask: &[T]) -> T {
    s_eff
        .iter()
        .zip(p_mask)
        .map(|(&s, &m)| (mu - s).clamp_to(T::zero(), m))
        .sum()
}

fn budget_tol<T: Scalar>(scale: T) -> T {
    let floor = T::epsilon() * T::lit(64.0) * scale;
    T::lit(BUDGET_TOL).max(floor)
}

/// Water-fill `p_max` over floors `s_eff` capped by `p_mask`.
pub fn best_response<T: Scalar>(s_eff: &[T], p_max: T, p_mask: &[T]) -> Result<BestResponse<T>> {
    if s_eff.len() != p_mask.len() || s_eff.is_empty() {
        return Err(Error::invalid(format!(
            "floor and mask lengths differ or are empty ({} vs {})",
            s_eff.len(),
            p_mask.len()
        )));
    }
    if !p_max.is_finite() || p_max <= T::zero() {
        return Err(Error::invalid(format!(
            "budget {p_max} must be positive and finite"
        )));
    }
    if let Some(k) = s_eff.iter().position(|s| !s.is_finite() || *s <= T::zero()) {
        return Err(Error::invalid(format!(
            "floor s[{k}] = {} must be positive",
            s_eff[k]
        )));
    }
    if let Some(k) = p_mask
        .iter()
        .position(|m| !m.is_finite() || *m <= T::zero())
    {
        return Err(Error::invalid(format!(
            "mask[{k}] = {} must be positive",
            p_mask[k]
        )));
    }

    let mask_total: T = p_mask.iter().copied().sum();
    let tol = budget_tol(p_max + mask_total);
    if mask_total <= p_max {
        return Ok(BestResponse {
            power: p_mask.to_vec(),
            lambda: T::zero(),
            water_level: None,
            budget_active: (mask_total - p_max).abs() <= tol,
        });
    }

    let s_min = s_eff.iter().copied().fold(T::infinity(), T::min);
    let s_max = s_eff.iter().copied().fold(T::neg_infinity(), T::max);
    let mut lo = s_min;
    let mut hi = s_max + p_max;
    let half = T::lit(0.5);
    let mut mu = hi;
    let mut residual = allocated(mu, s_eff, p_mask) - p_max;
    // run to interval collapse; the residual tolerance only judges the result
    for _ in 0..MAX_BISECT {
        if residual == T::zero() {
            break;
        }
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        mu = mid;
        residual = allocated(mu, s_eff, p_mask) - p_max;
        if residual > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if residual.abs() > tol {
        return Err(Error::SolverFailure(format!(
            "water level bisection stalled with budget residual {residual}"
        )));
    }

    let power = s_eff
        .iter()
        .zip(p_mask)
        .map(|(&s, &m)| (mu - s).clamp_to(T::zero(), m))
        .collect();
    Ok(BestResponse {
        power,
        lambda: mu.recip(),
        water_level: Some(mu),
        budget_active: true,
    })
}

/// Check the optimality conditions of a water-filling allocation.
///
/// Feasibility, `lambda >= 0`, complementary slackness, and stationarity of
/// the marginal rate `1 / (s + p)` against `lambda`: equal on interior
/// channels, at most `lambda` on empty ones, at least `lambda` on capped ones.
/// Stationarity is compared in the scale-free form `lambda (s + p) ~ 1`.
pub fn verify_kkt<T: Scalar>(
    s_eff: &[T],
    p_max: T,
    p_mask: &[T],
    power: &[T],
    lambda: T,
    tol: T,
) -> bool {
    if s_eff.len() != p_mask.len() || power.len() != s_eff.len() {
        return false;
    }
    if !(lambda >= T::zero()) {
        return false;
    }
    let total: T = power.iter().copied().sum();
    if total > p_max + tol {
        return false;
    }
    if (lambda * (total - p_max)).abs() > tol {
        return false;
    }
    for ((&s, &m), &p) in s_eff.iter().zip(p_mask).zip(power) {
        if p < -tol || p > m + tol {
            return false;
        }
        let level = lambda * (s + p);
        let at_zero = p <= tol;
        let at_mask = p >= m - tol;
        let ok = match (at_zero, at_mask) {
            // degenerate: mask within tol of zero
            (true, true) => true,
            (true, false) => level >= T::one() - tol,
            (false, true) => level <= T::one() + tol,
            (false, false) => (level - T::one()).abs() <= tol,
        };
        if !ok {
            return false;
        }
    }
    true
}
