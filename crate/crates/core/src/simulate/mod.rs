//! Seeded Monte Carlo comparison of the isolated and shared architectures.
//!
//! Each trial samples validator stakes, a Dirichlet allocation, an attack
//! profit and a reward rate, then evaluates attack costs, security
//! verdicts, bribery costs and per-validator security margins under the
//! isolated model, the shared model and the single-pool baseline.
//!
//! # Random streams
//!
//! Trial `t` draws its scenario from ChaCha12 seeded with the run seed
//! (`seed_from_u64`) on stream `2t`, and its price path from stream
//! `2t + 1`. Trials never share a stream, so results do not depend on the
//! order or thread in which trials run.

mod engine;
mod report;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    proportional_reward_chain, AllocationMatrix, EconomicParams, ModelKind, PriceVector, StakeTable,
};
use crate::sampling::{dirichlet, uniform};

pub use engine::{run_trials, ModelOutcome, StressOutcome, TrialRecord, TrialResults, ValidatorOutcome};
pub use report::{
    build_report, write_outputs, Histogram, ModelStress, ModelSummary, OutputFormat, ReportTables,
    RewardComparison, SchemeSummary, Stat, StressSummary, TrialWarning,
};

/// Human-readable definition of the security margin, echoed in reports.
pub const MARGIN_DEFINITION: &str = "M(v) = r*sigma(v) - max(0, best solo attack utility), where a solo \
    attack on a pool needs the validator's own stake there to reach theta times the pool's stake and \
    pays pi - theta*pool stake";

/// Uniform sampling range [lo, hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

impl UniformRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        UniformRange { lo, hi }
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(invalid(what, format!("need lo < hi, got [{}, {})", self.lo, self.hi)));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        uniform(rng, self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Sample the reward rate r; R = r·Δ.
    Rate,
    /// Sample the total reward R; r = R/Δ.
    Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSampling {
    pub kind: RewardKind,
    pub lo: f64,
    pub hi: f64,
}

impl Default for RewardSampling {
    fn default() -> Self {
        RewardSampling {
            kind: RewardKind::Rate,
            lo: 0.05,
            hi: 0.5,
        }
    }
}

/// Price paths used to stress dollar security.
///
/// Every SSP is backed by its own asset with price 1 at the start. Log
/// prices follow driftless Gaussian random walks with a common daily
/// volatility and a uniform pairwise correlation. The attacker strikes when
/// each pool's value is lowest over the horizon, so a pool is valued at its
/// path minimum (the start included). The shocked run scales one asset's
/// daily volatility by `shock_factor` on the same normal draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressConfig {
    pub enabled: bool,
    pub daily_vol: f64,
    pub correlation: f64,
    pub horizon_days: usize,
    pub shock_factor: f64,
    /// SSP whose asset is shocked; the isolated model's weakest pool when
    /// absent.
    pub shock_ssp: Option<usize>,
}

impl Default for StressConfig {
    fn default() -> Self {
        StressConfig {
            enabled: true,
            daily_vol: 0.04,
            correlation: 0.75,
            horizon_days: 30,
            shock_factor: 3.0,
            shock_ssp: None,
        }
    }
}

/// Fixed histogram edges: `bins` equal-width bins on [lo, hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub margin: BinSpec,
    pub honest_utility: BinSpec,
    pub min_cost: BinSpec,
    pub gini: BinSpec,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            margin: BinSpec {
                lo: -80_000.0,
                hi: 80_000.0,
                bins: 80,
            },
            honest_utility: BinSpec {
                lo: 0.0,
                hi: 50.0,
                bins: 25,
            },
            min_cost: BinSpec {
                lo: 0.0,
                hi: 500.0,
                bins: 50,
            },
            gini: BinSpec {
                lo: 0.0,
                hi: 1.0,
                bins: 50,
            },
        }
    }
}

/// Monte Carlo setup. Defaults reproduce the reference experiment: 20
/// validators over 10 SSPs, stakes on [10, 100), flat Dirichlet rows,
/// r on [0.05, 0.5), π on [10 000, 80 000), θ = 1/3, 1000 trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_operators: usize,
    pub n_ssps: usize,
    pub stake: UniformRange,
    /// Dirichlet concentration per SSP; all ones when absent.
    pub concentration: Option<Vec<f64>>,
    pub reward: RewardSampling,
    pub pi: UniformRange,
    pub theta: f64,
    pub n_trials: usize,
    pub seed: u64,
    /// USD price per token for each SSP's asset. Without it, sampled stakes
    /// are already in USD.
    pub prices: Option<Vec<f64>>,
    pub bribery: bool,
    pub stress: StressConfig,
    pub histograms: HistogramConfig,
    /// Worker threads; all cores when absent. Does not affect results.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_operators: 20,
            n_ssps: 10,
            stake: UniformRange::new(10.0, 100.0),
            concentration: None,
            reward: RewardSampling::default(),
            pi: UniformRange::new(10_000.0, 80_000.0),
            theta: 1.0 / 3.0,
            n_trials: 1000,
            seed: 42,
            prices: None,
            bribery: true,
            stress: StressConfig::default(),
            histograms: HistogramConfig::default(),
            workers: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_operators == 0 {
            return Err(invalid("n_operators", "must be >= 1"));
        }
        if self.n_ssps == 0 {
            return Err(invalid("n_ssps", "must be >= 1"));
        }
        if self.n_trials == 0 {
            return Err(invalid("n_trials", "must be >= 1"));
        }
        self.stake.validate("stake")?;
        if self.stake.lo <= 0.0 {
            return Err(invalid("stake", "lo must be > 0"));
        }
        self.pi.validate("pi")?;
        if self.pi.lo < 0.0 {
            return Err(invalid("pi", "lo must be >= 0"));
        }
        UniformRange::new(self.reward.lo, self.reward.hi).validate("reward")?;
        if self.reward.lo < 0.0 {
            return Err(invalid("reward", "lo must be >= 0"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid("theta", "must lie in (0, 1)"));
        }
        if let Some(c) = &self.concentration {
            if c.len() != self.n_ssps {
                return Err(Error::DimensionMismatch {
                    what: "concentration",
                    expected: self.n_ssps,
                    actual: c.len(),
                });
            }
            if c.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(invalid("concentration", "entries must be > 0"));
            }
        }
        if let Some(p) = &self.prices {
            if p.len() != self.n_ssps {
                return Err(Error::DimensionMismatch {
                    what: "prices",
                    expected: self.n_ssps,
                    actual: p.len(),
                });
            }
            PriceVector::new(p.clone())?;
        }
        let s = &self.stress;
        if s.enabled {
            if !(s.daily_vol.is_finite() && s.daily_vol > 0.0) {
                return Err(invalid("stress.daily_vol", "must be > 0"));
            }
            if !(s.correlation > -1.0 / (self.n_ssps.max(2) - 1) as f64 && s.correlation < 1.0) {
                return Err(invalid("stress.correlation", "uniform correlation must keep the matrix positive definite"));
            }
            if s.horizon_days == 0 {
                return Err(invalid("stress.horizon_days", "must be >= 1"));
            }
            if !(s.shock_factor.is_finite() && s.shock_factor > 0.0) {
                return Err(invalid("stress.shock_factor", "must be > 0"));
            }
            if let Some(j) = s.shock_ssp {
                crate::model::check_index("SSP", j, self.n_ssps)?;
            }
        }
        for (what, b) in [
            ("histograms.margin", &self.histograms.margin),
            ("histograms.honest_utility", &self.histograms.honest_utility),
            ("histograms.min_cost", &self.histograms.min_cost),
            ("histograms.gini", &self.histograms.gini),
        ] {
            UniformRange::new(b.lo, b.hi).validate(what)?;
            if b.bins == 0 {
                return Err(invalid(what, "bins must be >= 1"));
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be >= 1"));
        }
        Ok(())
    }

    fn concentration_vec(&self) -> Vec<f64> {
        self.concentration.clone().unwrap_or_else(|| vec![1.0; self.n_ssps])
    }
}

/// RNG for one trial's scenario (`stream = 0`) or price path (`stream = 1`).
pub fn trial_rng(seed: u64, trial: usize, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(2 * trial as u64 + stream);
    rng
}

/// One sampled market, in USD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub trial: usize,
    pub stakes: StakeTable,
    pub omega: AllocationMatrix,
    /// π, θ, r with the total reward R = r·Δ resolved.
    pub params: EconomicParams,
}

/// Draws trial `trial`: stakes, then one Dirichlet row per validator scaled
/// to its stake, then π, then the reward.
pub fn sample_scenario(cfg: &SimulationConfig, trial: usize) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, trial, 0);
    let sigma: Vec<f64> = (0..cfg.n_operators).map(|_| cfg.stake.sample(&mut rng)).collect();
    let alpha = cfg.concentration_vec();
    let mut rows = Vec::with_capacity(cfg.n_operators);
    for s in &sigma {
        let mut row: Vec<f64> = dirichlet(&mut rng, &alpha)?.iter().map(|d| s * d).collect();
        // put the rounding residue on the largest entry so the row sums to σ_i
        let residue = s - row.iter().sum::<f64>();
        let top = crate::model::argmax(&row);
        row[top] += residue;
        rows.push(row);
    }
    let pi = cfg.pi.sample(&mut rng);
    let draw = uniform(&mut rng, cfg.reward.lo, cfg.reward.hi);

    let mut omega = AllocationMatrix::from_rows(rows)?;
    let mut stakes = StakeTable::new(sigma)?;
    if let Some(p) = &cfg.prices {
        omega = omega.to_usd(&PriceVector::new(p.clone())?)?;
        stakes = StakeTable::new(omega.rows().map(|r| r.iter().sum()).collect())?;
    }
    let delta = stakes.total();
    let params = match cfg.reward.kind {
        RewardKind::Rate => EconomicParams::new(pi, cfg.theta, draw)?.resolved(delta)?,
        RewardKind::Amount => EconomicParams::from_total_reward(pi, cfg.theta, draw, delta)?,
    };
    Ok(Scenario {
        trial,
        stakes,
        omega,
        params,
    })
}

/// Standard Gini coefficient, Σ_i (2i − n − 1)·x_(i) / (n·Σx) over the
/// ascending order statistics.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("gini input"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("gini input", "values must be finite and >= 0"));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let total: f64 = x.iter().sum();
    if total <= 0.0 {
        return Err(invalid("gini input", "all values are zero"));
    }
    let n = x.len() as f64;
    let weighted: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i + 1) as f64 - n - 1.0) * v)
        .sum();
    Ok(weighted / (n * total))
}

/// How the total reward R is split among validators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardScheme {
    /// R·σ(v)/Δ.
    TotalStake,
    /// Each SSP pays R_j = (Δ_j/Δ)·R, shared by allocated stake.
    PerSspAllocated,
}

impl RewardScheme {
    pub const ALL: [RewardScheme; 2] = [RewardScheme::TotalStake, RewardScheme::PerSspAllocated];

    pub fn label(&self) -> &'static str {
        match self {
            RewardScheme::TotalStake => "total_stake",
            RewardScheme::PerSspAllocated => "per_ssp_allocated",
        }
    }
}

pub fn scheme_rewards(scenario: &Scenario, scheme: RewardScheme) -> Result<Vec<f64>> {
    let reward = scenario.params.total_reward()?;
    Ok(match scheme {
        RewardScheme::TotalStake => {
            let delta = scenario.stakes.total();
            scenario.stakes.as_slice().iter().map(|s| reward * s / delta).collect()
        }
        RewardScheme::PerSspAllocated => proportional_reward_chain(&scenario.omega, reward),
    })
}

/// Best utility validator `i` can get by attacking alone, if any pool is
/// within its reach. `row` is its stake per SSP and `sums` the pools'
/// stakes, both in the same price state.
pub fn best_solo_attack(row: &[f64], sums: &[f64], pi: f64, theta: f64, model: ModelKind) -> Option<f64> {
    let reach = |own: f64, pool: f64| pool > 0.0 && own >= theta * pool;
    match model {
        ModelKind::Isolated => row
            .iter()
            .zip(sums)
            .filter(|(w, d)| reach(**w, **d))
            .map(|(_, d)| pi - theta * d)
            .reduce(f64::max),
        ModelKind::Shared => {
            let own: f64 = row.iter().sum();
            let total: f64 = sums.iter().sum();
            reach(own, total).then_some(pi - theta * total)
        }
        ModelKind::SingleSsp(j0) => reach(row[j0], sums[j0]).then_some(pi - theta * sums[j0]),
    }
}

/// M = honest − max(0, best solo attack).
pub fn margin_from(honest: f64, best_attack: Option<f64>) -> f64 {
    honest - best_attack.unwrap_or(0.0).max(0.0)
}

/// Security margin M(v_i) of validator `i` in `scenario` under `model`.
pub fn margin(i: usize, scenario: &Scenario, model: ModelKind) -> Result<f64> {
    crate::model::check_index("validator", i, scenario.stakes.len())?;
    if let ModelKind::SingleSsp(j0) = model {
        crate::model::check_index("SSP", j0, scenario.omega.n_ssps())?;
    }
    let sums = scenario.omega.column_sums();
    let p = &scenario.params;
    let best = best_solo_attack(scenario.omega.row(i), &sums, p.pi, p.theta, model);
    Ok(margin_from(p.rate * scenario.stakes.get(i), best))
}

/// Rewards under both schemes for the first `cfg.n_trials` scenarios.
pub fn compare_reward_schemes(cfg: &SimulationConfig) -> Result<RewardComparison> {
    let scenarios = (0..cfg.n_trials)
        .map(|t| sample_scenario(cfg, t))
        .collect::<Result<Vec<_>>>()?;
    let per_trial = scenarios
        .iter()
        .map(|s| {
            RewardScheme::ALL
                .iter()
                .map(|scheme| scheme_rewards(s, *scheme))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    report::reward_comparison(&cfg.histograms.gini, &per_trial)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3.0; 5]).unwrap(), 0.0);
        let mut one = vec![0.0; 10];
        one[9] = 1.0;
        assert!((gini(&one).unwrap() - 0.9).abs() < 1e-15);
        assert!(gini(&[0.0, 0.0]).is_err());
        assert!(gini(&[]).is_err());
        assert!(gini(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn scenario_is_feasible_and_reproducible() {
        let cfg = SimulationConfig::default();
        let a = sample_scenario(&cfg, 3).unwrap();
        let b = sample_scenario(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_scenario(&cfg, 4).unwrap());
        let report = crate::model::validate_allocation(&a.omega, &a.stakes).unwrap();
        assert!(report.is_feasible());
        assert!(a.stakes.as_slice().iter().all(|s| (10.0..100.0).contains(s)));
        assert!((10_000.0..80_000.0).contains(&a.params.pi));
        assert!((0.05..0.5).contains(&a.params.rate));
    }

    #[test]
    fn margin_examples() {
        // 2 validators, 1 pool: v0 holds 10 of 40; θ = 1/3 puts the pool out of reach
        let stakes = StakeTable::new(vec![10.0, 30.0]).unwrap();
        let omega = AllocationMatrix::from_rows(vec![vec![10.0], vec![30.0]]).unwrap();
        let params = EconomicParams::new(5.0, 1.0 / 3.0, 0.1).unwrap().resolved(40.0).unwrap();
        let sc = Scenario {
            trial: 0,
            stakes,
            omega,
            params,
        };
        assert_eq!(margin(0, &sc, ModelKind::Isolated).unwrap(), 1.0);
        // v1 can capture, but π = 5 < θ·40 so attacking loses money
        assert_eq!(margin(1, &sc, ModelKind::Isolated).unwrap(), 3.0);

        let mut rich = sc.clone();
        rich.params.pi = 1e6;
        assert!(margin(1, &rich, ModelKind::Shared).unwrap() < 0.0);

        let mut idle = sc.clone();
        idle.params = EconomicParams::new(5.0, 1.0 / 3.0, 0.0).unwrap().resolved(40.0).unwrap();
        assert_eq!(margin(0, &idle, ModelKind::Isolated).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::default().validate().is_ok());
        let bad = SimulationConfig {
            stake: UniformRange::new(100.0, 10.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimulationConfig {
            concentration: Some(vec![1.0; 3]),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimulationConfig {
            n_trials: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<SimulationConfig>(r#"{"n_operator": 3}"#);
        assert!(err.is_err());
        let ok: SimulationConfig = serde_json::from_str(r#"{"n_operators": 3}"#).unwrap();
        assert_eq!(ok.n_operators, 3);
        assert_eq!(ok.n_ssps, 10);
    }
}
