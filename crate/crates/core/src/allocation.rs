//! Maximin stake allocation and market-equilibrium checks.
//!
//! The optimum of max_ω min_j Δ_j over the feasible set equalizes every
//! Δ_j, so the closed-form uniform split is the default solver. The
//! iterative equalizer realizes the pairwise exchange argument: move stake
//! from the richest SSP to the poorest until the spread closes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{
    argmax, argmin, honest_utility, proportional_reward_chain, total_stake, uniform_allocation,
    validate_allocation, AllocationMatrix, EconomicParams, StakeTable,
};
use crate::sampling::dirichlet;

/// Relative tolerance on Δ used to call an allocation equalized.
pub const EQUALIZE_TOL: f64 = 1e-9;

/// Output of [`maximin_allocate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaximinSolution {
    pub allocation: AllocationMatrix,
    /// Optimal min_j Δ_j, in closed form Δ/k.
    pub min_stake: f64,
}

impl MaximinSolution {
    /// Objective θ·min_j Δ_j at the optimum.
    pub fn objective(&self, theta: f64) -> f64 {
        theta * self.min_stake
    }
}

/// Solves max_ω min_j Δ_j subject to row conservation and nonnegativity.
///
/// Every validator splits its stake evenly, so each column sums to Δ/k.
/// The incentive constraint u(v_i; ω) ≥ u* is omitted: under proportional
/// rewards utility does not depend on ω.
pub fn maximin_allocate(stakes: &StakeTable, k: usize) -> Result<MaximinSolution> {
    let allocation = uniform_allocation(stakes, k)?;
    Ok(MaximinSolution {
        allocation,
        min_stake: stakes.total() / k as f64,
    })
}

/// C* = θ·Δ/k, the minimum attack cost at an equalized allocation.
pub fn equilibrium_min_cost(delta: f64, k: usize, theta: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "need at least one SSP"));
    }
    Ok(theta * (delta / k as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizeOutcome {
    pub allocation: AllocationMatrix,
    pub iterations: usize,
    /// max_j Δ_j − min_j Δ_j at exit.
    pub spread: f64,
}

/// Default iteration budget, 10·n·k.
pub fn default_max_iters(n: usize, k: usize) -> usize {
    10 * n * k
}

/// Default spread tolerance, 1e-9·Δ.
pub fn default_tol(omega: &AllocationMatrix) -> f64 {
    EQUALIZE_TOL * total_stake(omega)
}

/// Moves stake from the current richest column to the poorest until the
/// spread is within `tol` or `max_iters` transfers were made.
///
/// Each transfer is half the current spread, routed through the validator
/// holding the most stake in the donor column and capped by that holding.
/// Rows keep their sums, so the result stays feasible, and min_j Δ_j never
/// decreases.
pub fn equalize_iterative(
    omega0: &AllocationMatrix,
    stakes: &StakeTable,
    max_iters: usize,
    tol: f64,
) -> Result<EqualizeOutcome> {
    let report = validate_allocation(omega0, stakes)?;
    if !report.is_feasible() {
        return Err(Error::Infeasible(report.to_string()));
    }
    let mut omega = omega0.clone();
    let n = omega.n_validators();
    let mut iterations = 0;
    loop {
        let sums = omega.column_sums();
        let (rich, poor) = (argmax(&sums), argmin(&sums));
        let spread = sums[rich] - sums[poor];
        if spread <= tol || iterations >= max_iters {
            return Ok(EqualizeOutcome {
                allocation: omega,
                iterations,
                spread,
            });
        }
        let donor = (0..n)
            .max_by(|&a, &b| omega.get(a, rich).total_cmp(&omega.get(b, rich)).then(b.cmp(&a)))
            .expect("allocation has at least one validator");
        let held = omega.get(donor, rich);
        let amount = (spread / 2.0).min(held);
        if amount >= held {
            omega.set(donor, rich, 0.0);
        } else {
            omega.set(donor, rich, held - amount);
        }
        let dest = omega.get(donor, poor);
        omega.set(donor, poor, dest + amount);
        iterations += 1;
    }
}

/// Result of [`equilibrium_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub equalized: bool,
    /// max_j Δ_j − min_j Δ_j.
    pub delta_spread: f64,
    /// θ·min_j Δ_j.
    pub min_cost: f64,
    /// Honest utilities unchanged under every probed reallocation.
    pub utility_invariant: bool,
    /// Best unilateral utility improvement found, ≥ 0. Changes within
    /// 1e-9 relative of the validator's utility count as zero.
    pub deviation_gain: f64,
    pub probes: usize,
}

/// Checks the market-equilibrium conditions for ω.
///
/// Utilities are recomputed through the per-SSP proportional reward chain.
/// Each probe replaces one random validator's row with a random split of its
/// stake (flat Dirichlet), holding everyone else fixed, and records that
/// validator's utility change.
pub fn equilibrium_check(
    omega: &AllocationMatrix,
    stakes: &StakeTable,
    params: &EconomicParams,
    probes: usize,
    seed: u64,
) -> Result<EquilibriumReport> {
    let report = validate_allocation(omega, stakes)?;
    if !report.is_feasible() {
        return Err(Error::Infeasible(report.to_string()));
    }
    let sums = omega.column_sums();
    let delta: f64 = sums.iter().sum();
    let k = omega.n_ssps();
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta_spread = hi - lo;
    let tol = EQUALIZE_TOL * delta;

    let params = params.resolved(stakes.total())?;
    let reward = params.total_reward()?;
    let base = proportional_reward_chain(omega, reward);
    let noise = |u: f64| 1e-9 * u.abs().max(1.0);

    let mut utility_invariant = base
        .iter()
        .enumerate()
        .all(|(i, u)| (u - honest_utility(i, stakes, &params)).abs() <= noise(*u));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = vec![1.0; k];
    let mut deviation_gain: f64 = 0.0;
    for _ in 0..probes {
        let i = rand::Rng::random_range(&mut rng, 0..omega.n_validators());
        let split = dirichlet(&mut rng, &flat)?;
        let mut probe = omega.clone();
        for (j, w) in split.iter().enumerate() {
            probe.set(i, j, stakes.get(i) * w);
        }
        let after = proportional_reward_chain(&probe, reward)[i];
        let change = after - base[i];
        if change.abs() > noise(base[i]) {
            utility_invariant = false;
            deviation_gain = deviation_gain.max(change);
        }
    }

    Ok(EquilibriumReport {
        equalized: delta_spread <= tol,
        delta_spread,
        min_cost: params.theta * lo,
        utility_invariant,
        deviation_gain,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::security_level;

    const THIRD: f64 = 1.0 / 3.0;

    fn stakes(s: &[f64]) -> StakeTable {
        StakeTable::new(s.to_vec()).unwrap()
    }

    #[test]
    fn maximin_examples() {
        let s = stakes(&[60.0, 40.0]);
        let sol = maximin_allocate(&s, 2).unwrap();
        assert_eq!(sol.allocation.column_sums(), vec![50.0, 50.0]);
        assert_eq!(sol.objective(THIRD), equilibrium_min_cost(100.0, 2, THIRD).unwrap());
        let one = maximin_allocate(&s, 1).unwrap();
        assert_eq!(one.allocation.to_rows(), vec![vec![60.0], vec![40.0]]);
    }

    #[test]
    fn equilibrium_min_cost_examples() {
        assert_eq!(equilibrium_min_cost(100.0, 2, THIRD).unwrap(), THIRD * 50.0);
        assert_eq!(equilibrium_min_cost(100.0, 1, THIRD).unwrap(), THIRD * 100.0);
        assert_eq!(
            equilibrium_min_cost(200.0, 2, THIRD).unwrap(),
            2.0 * equilibrium_min_cost(100.0, 2, THIRD).unwrap()
        );
        assert!(equilibrium_min_cost(100.0, 0, THIRD).is_err());
    }

    #[test]
    fn equalize_two_columns() {
        let s = stakes(&[60.0, 40.0]);
        let w0 = AllocationMatrix::from_rows(vec![vec![60.0, 0.0], vec![0.0, 40.0]]).unwrap();
        let out = equalize_iterative(&w0, &s, 40, default_tol(&w0)).unwrap();
        assert_eq!(out.allocation.column_sums(), vec![50.0, 50.0]);
        assert!(out.spread <= default_tol(&w0));
        assert!(validate_allocation(&out.allocation, &s).unwrap().is_feasible());
    }

    #[test]
    fn equalize_fixed_points() {
        let s = stakes(&[60.0, 40.0]);
        let even = uniform_allocation(&s, 2).unwrap();
        let out = equalize_iterative(&even, &s, 40, default_tol(&even)).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.allocation, even);

        let w0 = AllocationMatrix::from_rows(vec![vec![60.0, 0.0], vec![0.0, 40.0]]).unwrap();
        let out = equalize_iterative(&w0, &s, 40, 100.0).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.allocation, w0);
    }

    #[test]
    fn equalize_rejects_infeasible_input() {
        let s = stakes(&[60.0]);
        let w0 = AllocationMatrix::from_rows(vec![vec![10.0, 10.0]]).unwrap();
        assert!(matches!(
            equalize_iterative(&w0, &s, 10, 1e-9),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn equalize_many_columns_monotone() {
        let s = stakes(&[90.0, 10.0, 35.0]);
        let w0 = AllocationMatrix::from_rows(vec![
            vec![90.0, 0.0, 0.0, 0.0],
            vec![0.0, 10.0, 0.0, 0.0],
            vec![5.0, 0.0, 30.0, 0.0],
        ])
        .unwrap();
        let mut prev = security_level(&w0.column_sums(), 1.0).unwrap();
        for iters in 1..200 {
            let out = equalize_iterative(&w0, &s, iters, default_tol(&w0)).unwrap();
            let level = security_level(&out.allocation.column_sums(), 1.0).unwrap();
            assert!(level >= prev);
            assert!(validate_allocation(&out.allocation, &s).unwrap().is_feasible());
            prev = level;
        }
        let out = equalize_iterative(&w0, &s, default_max_iters(3, 4), default_tol(&w0)).unwrap();
        assert!(out.spread <= default_tol(&w0), "spread {}", out.spread);
    }

    #[test]
    fn equilibrium_report_examples() {
        let s = stakes(&[60.0, 40.0]);
        let p = EconomicParams::new(10.0, THIRD, 0.1).unwrap();
        let even = uniform_allocation(&s, 2).unwrap();
        let rep = equilibrium_check(&even, &s, &p, 64, 7).unwrap();
        assert!(rep.equalized);
        assert_eq!(rep.deviation_gain, 0.0);
        assert!(rep.utility_invariant);

        let skew = AllocationMatrix::from_rows(vec![vec![10.0, 50.0], vec![0.0, 40.0]]).unwrap();
        let rep = equilibrium_check(&skew, &s, &p, 64, 7).unwrap();
        assert!(!rep.equalized);
        assert_eq!(rep.delta_spread, 80.0);
        assert!(rep.utility_invariant);
        assert_eq!(rep.min_cost, THIRD * 10.0);
    }
}
