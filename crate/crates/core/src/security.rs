//! Security verdicts and attack-cost comparisons across architectures.
//!
//! Weak security is the non-strict condition π ≤ θ·Δ. Strong security and
//! the validator-count bound are strict.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{argmin, check_index, AllocationMatrix, AttackPlan, EconomicParams, ModelKind};

/// Which constraint a verdict was decided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingConstraint {
    WeakThreshold,
    StrongAverage,
    PerSspMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecurityVerdict {
    pub secure: bool,
    /// Slack of the binding constraint in USD; negative when violated.
    pub margin: f64,
    pub binding_constraint: BindingConstraint,
}

/// π ≤ θ·Δ, with margin θ·Δ − π.
pub fn weak_security(delta: f64, params: &EconomicParams) -> Result<SecurityVerdict> {
    if !(delta > 0.0) {
        return Err(invalid("total stake", "weak security needs Δ > 0"));
    }
    let cap = params.theta * delta;
    Ok(SecurityVerdict {
        secure: params.pi <= cap,
        margin: cap - params.pi,
        binding_constraint: BindingConstraint::WeakThreshold,
    })
}

/// Weak security evaluated on the stake that binds under `model`: Δ for the
/// shared model, min_j Δ_j for the isolated model, Δ_{j0} for a single pool.
/// A zero-stake pool binds at cost 0.
pub fn model_security(
    omega: &AllocationMatrix,
    params: &EconomicParams,
    model: ModelKind,
) -> Result<SecurityVerdict> {
    let breakdown = min_attack_cost(omega, params, model)?;
    Ok(SecurityVerdict {
        secure: params.pi <= breakdown.min_cost,
        margin: breakdown.min_cost - params.pi,
        binding_constraint: match model {
            ModelKind::Shared => BindingConstraint::WeakThreshold,
            _ => BindingConstraint::PerSspMin,
        },
    })
}

/// (ΣΣα + R)/n > π, strictly. R must already be resolved on `params`.
pub fn strong_security(alpha: &AttackPlan, params: &EconomicParams, n: usize) -> Result<SecurityVerdict> {
    if n == 0 {
        return Err(invalid("n", "need at least one validator"));
    }
    let reward = params.total_reward()?;
    let average = (alpha.committed() + reward) / n as f64;
    Ok(SecurityVerdict {
        secure: average > params.pi,
        margin: average - params.pi,
        binding_constraint: BindingConstraint::StrongAverage,
    })
}

/// Largest validator count compatible with n < (θ + r)·Δ/π.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorBound {
    /// π = 0: every validator count satisfies the bound.
    Unbounded,
    AtMost(u64),
}

/// Relative snapping tolerance applied when the bound (θ + r)·Δ/π lands on
/// an integer up to rounding.
const BOUND_SNAP: f64 = 1e-12;

pub fn validator_bound(delta: f64, params: &EconomicParams) -> Result<ValidatorBound> {
    if !(delta >= 0.0) {
        return Err(invalid("total stake", "must be >= 0"));
    }
    if params.pi == 0.0 {
        return Ok(ValidatorBound::Unbounded);
    }
    let bound = (params.theta + params.rate) * delta / params.pi;
    if bound <= 1.0 {
        return Ok(ValidatorBound::AtMost(0));
    }
    let nearest = bound.round();
    let max_n = if (bound - nearest).abs() <= BOUND_SNAP * bound {
        nearest - 1.0
    } else {
        bound.floor()
    };
    Ok(ValidatorBound::AtMost(max_n as u64))
}

/// Minimum cost to corrupt the AVS under one architecture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackCostBreakdown {
    pub model: ModelKind,
    pub min_cost: f64,
    /// Pool attaining `min_cost` for the isolated model, or the designated
    /// pool for the single-SSP baseline.
    pub weakest_ssp: Option<usize>,
    /// θ·Δ_j for every SSP.
    pub per_ssp_costs: Vec<f64>,
    /// Set when some SSP holds no stake.
    pub degenerate: bool,
}

/// θ·Δ for the shared model, θ·min_j Δ_j for the isolated model, θ·Δ_{j0}
/// for a single pool.
pub fn min_attack_cost(
    omega: &AllocationMatrix,
    params: &EconomicParams,
    model: ModelKind,
) -> Result<AttackCostBreakdown> {
    cost_breakdown(&omega.column_sums(), params.theta, model)
}

/// [`min_attack_cost`] on precomputed per-SSP stakes.
pub fn cost_breakdown(sums: &[f64], theta: f64, model: ModelKind) -> Result<AttackCostBreakdown> {
    if sums.is_empty() {
        return Err(Error::Empty("per-SSP stakes"));
    }
    let per_ssp_costs: Vec<f64> = sums.iter().map(|d| theta * d).collect();
    let degenerate = sums.iter().any(|d| *d <= 0.0);
    let (min_cost, weakest_ssp) = match model {
        ModelKind::Shared => (theta * sums.iter().sum::<f64>(), None),
        ModelKind::Isolated => {
            let w = argmin(sums);
            (per_ssp_costs[w], Some(w))
        }
        ModelKind::SingleSsp(j0) => {
            check_index("SSP", j0, sums.len())?;
            (per_ssp_costs[j0], Some(j0))
        }
    };
    Ok(AttackCostBreakdown {
        model,
        min_cost,
        weakest_ssp,
        per_ssp_costs,
        degenerate,
    })
}

/// θ·min_j Δ_j: π must stay strictly below this for the isolated model to be
/// secure.
pub fn tightened_threshold(omega: &AllocationMatrix, params: &EconomicParams) -> f64 {
    let sums = omega.column_sums();
    params.theta * sums.iter().copied().fold(f64::INFINITY, f64::min)
}

/// S(x) = θ·min_j x_j.
pub fn security_level(x: &[f64], theta: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("security vector"));
    }
    if x.iter().any(|v| *v < 0.0) {
        return Err(invalid("security vector", "entries must be >= 0"));
    }
    Ok(theta * x.iter().copied().fold(f64::INFINITY, f64::min))
}
