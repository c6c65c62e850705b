use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{best_solo_attack, margin_from, sample_scenario, scheme_rewards, gini, trial_rng};
use super::{RewardScheme, Scenario, SimulationConfig};
use crate::bribery::{aggregate_lambdas, bribery_cost_multi, bribery_cost_single, BriberyConfig};
use crate::error::{invalid, Error, Result};
use crate::model::{argmax, argmin, AttackPlan, ModelKind};
use crate::risk::{cholesky_factor, security_variance, volatility_shock, CovModel};
use crate::sampling::standard_normal;
use crate::security::{cost_breakdown, model_security, strong_security};

/// Per-validator quantities shared by all models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatorOutcome {
    pub stake: f64,
    /// r·σ(v).
    pub honest_utility: f64,
    /// Reward under each [`RewardScheme`], in [`RewardScheme::ALL`] order.
    pub scheme_rewards: Vec<f64>,
}

/// Everything computed for one architecture in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelOutcome {
    pub model: ModelKind,
    pub min_cost: f64,
    pub weak_secure: bool,
    pub strong_secure: bool,
    /// C_multi for the isolated model, C_single for the shared model, the
    /// designated pool's C_j for the single-pool baseline. `None` when
    /// bribery is disabled or could not be evaluated.
    pub bribery_cost: Option<f64>,
    /// Best solo attack utility per validator, `None` when out of reach.
    pub best_attack: Vec<Option<f64>>,
    pub margins: Vec<f64>,
    /// Margins at the trough of the baseline price path.
    pub stressed_margins: Option<Vec<f64>>,
    /// Margins at the trough of the shocked price path.
    pub shocked_margins: Option<Vec<f64>>,
    pub stressed_min_cost: Option<f64>,
    pub shocked_min_cost: Option<f64>,
}

/// Price-stress results of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressOutcome {
    pub shocked_ssp: usize,
    /// Path minimum of each asset's price relative to the start.
    pub trough: Vec<f64>,
    pub shocked_trough: Vec<f64>,
    /// Var[Δ_w] over the horizon for the isolated model's weakest pool w.
    pub weakest_variance: f64,
    pub weakest_variance_shocked: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub scenario: Scenario,
    /// Isolated, shared, single-pool (largest pool), in that order.
    pub models: Vec<ModelOutcome>,
    pub validators: Vec<ValidatorOutcome>,
    /// Gini of rewards per scheme, in [`RewardScheme::ALL`] order.
    pub gini: Vec<f64>,
    pub stress: Option<StressOutcome>,
    pub warnings: Vec<String>,
}

impl TrialRecord {
    pub fn trial(&self) -> usize {
        self.scenario.trial
    }

    /// C_shared ≥ C_single ≥ C_isolated on the given costs.
    pub fn ordering_holds(costs: [f64; 3]) -> bool {
        let [isolated, shared, single] = costs;
        shared >= single && single >= isolated
    }

    fn costs(&self, pick: impl Fn(&ModelOutcome) -> Option<f64>) -> Option<[f64; 3]> {
        Some([pick(&self.models[0])?, pick(&self.models[1])?, pick(&self.models[2])?])
    }

    pub fn ordering_ok(&self) -> bool {
        Self::ordering_holds(self.costs(|m| Some(m.min_cost)).expect("static costs exist"))
    }

    pub fn stressed_ordering_ok(&self) -> Option<bool> {
        self.costs(|m| m.stressed_min_cost).map(Self::ordering_holds)
    }

    pub fn shocked_ordering_ok(&self) -> Option<bool> {
        self.costs(|m| m.shocked_min_cost).map(Self::ordering_holds)
    }
}

/// All trials of a run, in trial order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResults {
    pub config: SimulationConfig,
    pub trials: Vec<TrialRecord>,
}

/// Runs every trial, in parallel on `cfg.workers` threads. Output does not
/// depend on the worker count.
pub fn run_trials(cfg: &SimulationConfig) -> Result<TrialResults> {
    cfg.validate()?;
    let shared = PathModel::new(cfg)?;
    let run = || {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, shared.as_ref(), t))
            .collect::<Result<Vec<_>>>()
    };
    let trials = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(TrialResults {
        config: cfg.clone(),
        trials,
    })
}

/// Cholesky factor of one day's returns and the horizon covariance.
struct PathModel {
    daily_factor: DMatrix<f64>,
    horizon: CovModel,
}

impl PathModel {
    fn new(cfg: &SimulationConfig) -> Result<Option<PathModel>> {
        let s = &cfg.stress;
        if !s.enabled {
            return Ok(None);
        }
        let k = cfg.n_ssps;
        let assets: Vec<String> = (0..k).map(asset_id).collect();
        let corr: Vec<Vec<f64>> = (0..k)
            .map(|a| (0..k).map(|b| if a == b { 1.0 } else { s.correlation }).collect())
            .collect();
        let daily = CovModel::from_vols_and_correlation(assets.clone(), &vec![s.daily_vol; k], &corr)?;
        let l = cholesky_factor(&daily)?;
        let horizon_vol = s.daily_vol * (s.horizon_days as f64).sqrt();
        let horizon = CovModel::from_vols_and_correlation(assets, &vec![horizon_vol; k], &corr)?;
        Ok(Some(PathModel {
            daily_factor: DMatrix::from_fn(k, k, |a, b| l[a][b]),
            horizon,
        }))
    }
}

fn asset_id(j: usize) -> String {
    format!("ssp{j}")
}

/// Path minima of exp(log price) for the baseline and shocked volatilities,
/// on one set of normal draws.
fn troughs(
    model: &PathModel,
    horizon: usize,
    shocked: usize,
    factor: f64,
    rng: &mut impl rand::Rng,
) -> (Vec<f64>, Vec<f64>) {
    let k = model.daily_factor.nrows();
    let mut level = vec![0.0; k];
    let mut low = vec![0.0f64; k];
    let mut low_shocked = vec![0.0f64; k];
    for _ in 0..horizon {
        let z = DVector::from_fn(k, |_, _| standard_normal(rng));
        let step = &model.daily_factor * z;
        for j in 0..k {
            level[j] += step[j];
            low[j] = low[j].min(level[j]);
            let shocked_level = if j == shocked { factor * level[j] } else { level[j] };
            low_shocked[j] = low_shocked[j].min(shocked_level);
        }
    }
    (
        low.iter().map(|x| x.exp()).collect(),
        low_shocked.iter().map(|x| x.exp()).collect(),
    )
}

fn scaled_columns(omega_rows: &[&[f64]], f: &[f64]) -> Vec<Vec<f64>> {
    omega_rows
        .iter()
        .map(|row| row.iter().zip(f).map(|(w, p)| w * p).collect())
        .collect()
}

fn column_sums(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    for row in rows {
        for (s, w) in sums.iter_mut().zip(row) {
            *s += w;
        }
    }
    sums
}

/// Margins and min cost of `model` with every pool valued at `f` times its
/// starting price.
fn price_state_outcome(
    sc: &Scenario,
    f: &[f64],
    model: ModelKind,
) -> Result<(Vec<f64>, f64)> {
    let rows: Vec<&[f64]> = sc.omega.rows().collect();
    let scaled = scaled_columns(&rows, f);
    let sums = column_sums(&scaled, sc.omega.n_ssps());
    let p = &sc.params;
    let margins = scaled
        .iter()
        .map(|row| {
            let honest = p.rate * row.iter().sum::<f64>();
            margin_from(honest, best_solo_attack(row, &sums, p.pi, p.theta, model))
        })
        .collect();
    Ok((margins, cost_breakdown(&sums, p.theta, model)?.min_cost))
}

fn run_trial(cfg: &SimulationConfig, paths: Option<&PathModel>, t: usize) -> Result<TrialRecord> {
    let sc = sample_scenario(cfg, t)?;
    let n = sc.stakes.len();
    let sums = sc.omega.column_sums();
    let p = &sc.params;
    let models = [
        ModelKind::Isolated,
        ModelKind::Shared,
        ModelKind::SingleSsp(argmax(&sums)),
    ];
    let mut warnings = Vec::new();
    let degenerate: Vec<usize> = (0..sums.len()).filter(|&j| sums[j] <= 0.0).collect();
    if !degenerate.is_empty() {
        warnings.push(format!("SSPs without stake: {degenerate:?}"));
    }

    let (multi, single) = if cfg.bribery {
        let bcfg = BriberyConfig::from_params(p);
        let multi = match bribery_cost_multi(&sc.omega, &sc.stakes, p, &bcfg) {
            Ok(m) => Some(m),
            Err(e) => {
                warnings.push(format!("bribery: {e}"));
                None
            }
        };
        let single = bribery_cost_single(&sc.stakes, p, &aggregate_lambdas(&sc.stakes, p))?;
        (multi, Some(single))
    } else {
        (None, None)
    };

    let stress = match paths {
        Some(pm) => {
            let s = &cfg.stress;
            let weakest = argmin(&sums);
            let shocked = s.shock_ssp.unwrap_or(weakest);
            let mut rng = trial_rng(cfg.seed, t, 1);
            let (trough, shocked_trough) = troughs(pm, s.horizon_days, shocked, s.shock_factor, &mut rng);
            let shocked_cov = volatility_shock(&pm.horizon, &asset_id(shocked), s.shock_factor)?;
            let column = sc.omega.column(weakest);
            Some(StressOutcome {
                shocked_ssp: shocked,
                trough,
                shocked_trough,
                weakest_variance: security_variance(&column, pm.horizon.get(weakest, weakest))?,
                weakest_variance_shocked: security_variance(&column, shocked_cov.get(weakest, weakest))?,
            })
        }
        None => None,
    };

    let mut outcomes = Vec::with_capacity(models.len());
    for model in models {
        let breakdown = cost_breakdown(&sums, p.theta, model)?;
        let weak = model_security(&sc.omega, p, model)?;
        let alpha = AttackPlan::minimal_capture(&sc.omega, p.theta, model)?;
        let strong = strong_security(&alpha, p, n)?;
        let bribery_cost = match model {
            ModelKind::Isolated => multi.as_ref().map(|m| m.cost),
            ModelKind::Shared => single,
            ModelKind::SingleSsp(j0) => multi.as_ref().map(|m| m.plans[j0].cost),
        };
        let best_attack: Vec<Option<f64>> = sc
            .omega
            .rows()
            .map(|row| best_solo_attack(row, &sums, p.pi, p.theta, model))
            .collect();
        let margins = best_attack
            .iter()
            .enumerate()
            .map(|(i, b)| margin_from(p.rate * sc.stakes.get(i), *b))
            .collect();
        let (stressed, shocked) = match &stress {
            Some(st) => (
                Some(price_state_outcome(&sc, &st.trough, model)?),
                Some(price_state_outcome(&sc, &st.shocked_trough, model)?),
            ),
            None => (None, None),
        };
        outcomes.push(ModelOutcome {
            model,
            min_cost: breakdown.min_cost,
            weak_secure: weak.secure,
            strong_secure: strong.secure,
            bribery_cost,
            best_attack,
            margins,
            stressed_min_cost: stressed.as_ref().map(|s| s.1),
            shocked_min_cost: shocked.as_ref().map(|s| s.1),
            stressed_margins: stressed.map(|s| s.0),
            shocked_margins: shocked.map(|s| s.0),
        });
    }

    let rewards = RewardScheme::ALL
        .iter()
        .map(|s| scheme_rewards(&sc, *s))
        .collect::<Result<Vec<_>>>()?;
    let gini = rewards
        .iter()
        .map(|r| gini(r))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Infeasible(format!("trial {t}: {e}")))?;
    let validators = (0..n)
        .map(|i| ValidatorOutcome {
            stake: sc.stakes.get(i),
            honest_utility: p.rate * sc.stakes.get(i),
            scheme_rewards: rewards.iter().map(|r| r[i]).collect(),
        })
        .collect();

    Ok(TrialRecord {
        scenario: sc,
        models: outcomes,
        validators,
        gini,
        stress,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimulationConfig {
        SimulationConfig {
            n_operators: 6,
            n_ssps: 3,
            n_trials: 8,
            ..Default::default()
        }
    }

    #[test]
    fn smoke_run_is_reproducible() {
        let cfg = SimulationConfig {
            n_trials: 1,
            ..small()
        };
        let a = run_trials(&cfg).unwrap();
        let b = run_trials(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials.len(), 1);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let one = run_trials(&SimulationConfig {
            workers: Some(1),
            ..small()
        })
        .unwrap();
        let four = run_trials(&SimulationConfig {
            workers: Some(4),
            ..small()
        })
        .unwrap();
        assert_eq!(one.trials, four.trials);
    }

    #[test]
    fn ordering_and_shock_direction() {
        let res = run_trials(&small()).unwrap();
        for t in &res.trials {
            assert!(t.ordering_ok());
            assert_eq!(t.stressed_ordering_ok(), Some(true));
            assert_eq!(t.shocked_ordering_ok(), Some(true));
            let st = t.stress.as_ref().unwrap();
            assert!(st.weakest_variance_shocked > st.weakest_variance);
            for (a, b) in st.trough.iter().zip(&st.shocked_trough) {
                assert!(b <= a && *a <= 1.0);
            }
        }
    }

    #[test]
    fn disabled_stress_and_bribery() {
        let mut cfg = small();
        cfg.stress.enabled = false;
        cfg.bribery = false;
        let res = run_trials(&cfg).unwrap();
        let t = &res.trials[0];
        assert!(t.stress.is_none());
        assert!(t.models.iter().all(|m| m.bribery_cost.is_none() && m.stressed_margins.is_none()));
    }
}
