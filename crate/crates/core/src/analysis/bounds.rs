//! Closed-form regret bounds.
//!
//! Upper bounds for projected sub-gradient descent (general nonincreasing
//! rates, the constant oracle rate, the adaptive rate, per-coordinate rates
//! and doubling restarts) and the matching adversarial lower bounds.

use std::f64::consts::SQRT_2;

use crate::error::{check_finite, Error, Result};
use crate::geometry::check_dims;
use crate::scheduler::{segment_count, PathBudget};
use crate::streams::max_segments;

/// Bound for any nonincreasing positive rate sequence:
/// `D^2 (P/D + 1/2) / eta_T + sum_{t >= t0} eta_t ||g_t||^2 / 2`,
/// where `t0` is the first round with a nonzero gradient.
///
/// `rates[t]` may be `None` only before `t0`. If every gradient is zero the
/// bound is the first term when `eta_T` is known and 0 otherwise (no step
/// was ever taken, so the regret is exactly 0).
pub fn bound_rate_sequence(d: f64, p: f64, rates: &[Option<f64>], grad_norms: &[f64]) -> Result<f64> {
    check_dims(grad_norms.len(), rates.len())?;
    check_finite("diameter", d)?;
    check_finite("path budget", p)?;
    let Some(t0) = grad_norms.iter().position(|&g| g > 0.0) else {
        return Ok(match rates.last().copied().flatten() {
            Some(eta) if eta > 0.0 => d * d * (p / d + 0.5) / eta,
            _ => 0.0,
        });
    };
    let mut prev = f64::INFINITY;
    let mut sum = 0.0;
    for t in t0..rates.len() {
        let eta = rates[t].ok_or_else(|| {
            Error::PreconditionViolation(format!("no rate at round {} after t0", t + 1))
        })?;
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::PreconditionViolation(format!(
                "rate {eta} at round {} is not positive",
                t + 1
            )));
        }
        if eta > prev {
            return Err(Error::PreconditionViolation(format!(
                "rate increases at round {} ({prev} -> {eta})",
                t + 1
            )));
        }
        prev = eta;
        sum += 0.5 * eta * grad_norms[t] * grad_norms[t];
    }
    Ok(d * d * (p / d + 0.5) / prev + sum)
}

/// `D sqrt(1 + 2P/D) G_T`; 0 when `G_T = 0`.
pub fn bound_constant(d: f64, p: f64, energy: f64) -> f64 {
    d * (1.0 + 2.0 * p / d).sqrt() * energy
}

/// Adaptive-rate bound when the rate was tuned for `p_hat` but the
/// comparator moves by up to `p`:
/// `((P/D + 1/2) / sqrt(P_hat/D + 1/2) + sqrt(P_hat/D + 1/2)) D G_T`.
/// With `p_hat == p` this is `2 D sqrt(P/D + 1/2) G_T`.
pub fn bound_adaptive(d: f64, p: f64, p_hat: f64, energy: f64) -> f64 {
    let tuned = (p_hat / d + 0.5).sqrt();
    if p == p_hat {
        return 2.0 * d * tuned * energy;
    }
    ((p / d + 0.5) / tuned + tuned) * d * energy
}

/// `sum_i 2 D_i sqrt(P_i/D_i + 1/2) G_{T,i}`; zero-width coordinates add 0.
pub fn bound_per_coordinate(diameters: &[f64], budgets: &[f64], energies: &[f64]) -> Result<f64> {
    bound_per_coordinate_mismatched(diameters, budgets, budgets, energies)
}

/// Per-coordinate analogue of [`bound_adaptive`] with tuned budgets `p_hat`.
pub fn bound_per_coordinate_mismatched(
    diameters: &[f64],
    budgets: &[f64],
    p_hat: &[f64],
    energies: &[f64],
) -> Result<f64> {
    check_dims(diameters.len(), budgets.len())?;
    check_dims(diameters.len(), p_hat.len())?;
    check_dims(diameters.len(), energies.len())?;
    Ok((0..diameters.len())
        .filter(|&i| diameters[i] > 0.0)
        .map(|i| bound_adaptive(diameters[i], budgets[i], p_hat[i], energies[i]))
        .sum())
}

/// The two doubling-restart bounds `(sum_form, max_form)`:
///
/// * `2 sqrt 2 sqrt(ceil(log2(T + 1))) D sqrt(P(T)/D + 1/4) G_T`
/// * `4 sqrt(2 + sqrt 2) D sqrt(P(T)/D + 1/4) max_t ||g_t|| sqrt T`
pub fn bounds_doubling(d: f64, budget: &PathBudget, grad_norms: &[f64]) -> Result<(f64, f64)> {
    let horizon = grad_norms.len();
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let energy = grad_norms.iter().map(|g| g * g).sum::<f64>().sqrt();
    let max_norm = grad_norms.iter().fold(0.0f64, |m, &g| m.max(g));
    let geometry = d * (budget.eval(horizon as u64) / d + 0.25).sqrt();
    let segments = segment_count(horizon as u64) as f64;
    let sum_form = 2.0 * SQRT_2 * segments.sqrt() * geometry * energy;
    let max_form = 4.0 * (2.0 + SQRT_2).sqrt() * geometry * max_norm * (horizon as f64).sqrt();
    Ok((sum_form, max_form))
}

/// Worst-case lower bound under a sum constraint:
/// `D sqrt(floor(P/D) + 1) G_T / (2 sqrt 2)`.
pub fn lower_bound_sum(d: f64, p: f64, energy: f64) -> f64 {
    d * (max_segments(d, p) as f64).sqrt() / (2.0 * SQRT_2) * energy
}

/// Worst-case lower bound under a max-norm constraint:
/// `D sqrt(floor(P/D) + 1) L sqrt(T) / 4`.
pub fn lower_bound_max(d: f64, p: f64, max_norm: f64, horizon: usize) -> f64 {
    d * (max_segments(d, p) as f64).sqrt() / 4.0 * max_norm * (horizon as f64).sqrt()
}
