use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::{TrialRecord, TrialResults};
use super::{gini, BinSpec, RewardScheme, SimulationConfig, MARGIN_DEFINITION};
use crate::error::{Error, Result};
use crate::model::ModelKind;

const STREAM_DERIVATION: &str = "ChaCha12 seeded with seed_from_u64(seed); trial t uses stream 2t for \
    its scenario and stream 2t+1 for its price path";

/// Counts on fixed, equal-width bins. Values outside [lo, hi) go to
/// `underflow` / `overflow`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(spec: &BinSpec) -> Self {
        let span = spec.hi - spec.lo;
        let mut edges: Vec<f64> = (0..spec.bins)
            .map(|b| spec.lo + span * b as f64 / spec.bins as f64)
            .collect();
        edges.push(spec.hi);
        Histogram {
            edges,
            counts: vec![0; spec.bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, x: f64) {
        let lo = self.edges[0];
        let hi = self.edges[self.edges.len() - 1];
        if x < lo {
            self.underflow += 1;
        } else if x >= hi || x.is_nan() {
            self.overflow += 1;
        } else {
            let bins = self.counts.len();
            let b = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            self.counts[b.min(bins - 1)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let count = xs.len();
        if count == 0 {
            return Stat {
                count,
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { count, mean, std }
    }
}

fn fraction(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: RewardScheme,
    /// Per-validator rewards pooled over trials.
    pub reward: Stat,
    pub gini: Stat,
    pub gini_histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardComparison {
    pub schemes: Vec<SchemeSummary>,
    /// Largest per-trial gap between the schemes' mean rewards, relative to
    /// the mean.
    pub max_relative_mean_gap: f64,
}

/// Summarizes rewards given per trial, per scheme, per validator.
pub(crate) fn reward_comparison(bins: &BinSpec, per_trial: &[Vec<Vec<f64>>]) -> Result<RewardComparison> {
    let mut max_gap: f64 = 0.0;
    for trial in per_trial {
        let means: Vec<f64> = trial.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        let scale = means[0].abs().max(f64::MIN_POSITIVE);
        for m in &means[1..] {
            max_gap = max_gap.max((m - means[0]).abs() / scale);
        }
    }
    let schemes = RewardScheme::ALL
        .iter()
        .enumerate()
        .map(|(s, scheme)| {
            let pooled: Vec<f64> = per_trial.iter().flat_map(|t| t[s].iter().copied()).collect();
            let ginis = per_trial
                .iter()
                .map(|t| gini(&t[s]))
                .collect::<Result<Vec<_>>>()?;
            let mut gini_histogram = Histogram::new(bins);
            ginis.iter().for_each(|g| gini_histogram.add(*g));
            Ok(SchemeSummary {
                scheme: *scheme,
                reward: Stat::of(&pooled),
                gini: Stat::of(&ginis),
                gini_histogram,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RewardComparison {
        schemes,
        max_relative_mean_gap: max_gap,
    })
}

/// Price-stress aggregates for one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStress {
    pub ruin_fraction_stressed: f64,
    pub ruin_fraction_shocked: f64,
    pub margin_stressed: Stat,
    pub margin_shocked: Stat,
    /// Mean over trials of (mean shocked margin − mean stressed margin).
    pub mean_margin_shift: f64,
    /// Share of trials whose mean margin shift is negative.
    pub negative_shift_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: &'static str,
    pub min_cost: Stat,
    pub min_cost_histogram: Histogram,
    pub weak_secure_fraction: f64,
    pub strong_secure_fraction: f64,
    /// Over trials where the bribery cost was evaluated.
    pub bribery_cost: Stat,
    /// Share of validators with M(v) < 0.
    pub ruin_fraction: f64,
    pub margin: Stat,
    pub margin_histogram: Histogram,
    pub stress: Option<ModelStress>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressSummary {
    pub ordering_violations_stressed: usize,
    pub ordering_violations_shocked: usize,
    pub weakest_variance: Stat,
    pub weakest_variance_shocked: Stat,
    /// Share of trials where the shock strictly raised Var[Δ_w] of the
    /// isolated model's weakest pool.
    pub variance_increase_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialWarning {
    pub trial: usize,
    pub message: String,
}

/// Aggregates written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTables {
    pub seed: u64,
    pub n_trials: usize,
    pub units: &'static str,
    pub margin_definition: &'static str,
    pub stream_derivation: &'static str,
    pub models: Vec<ModelSummary>,
    /// Trials violating C_shared ≥ C_single ≥ C_isolated. Expected 0.
    pub ordering_violations: usize,
    /// Trials weak-secure under the isolated model but not the shared one.
    /// Expected 0.
    pub weak_direction_violations: usize,
    /// Largest |Σ honest utilities − r·Δ| / (r·Δ) over trials.
    pub reward_conservation_error: f64,
    pub honest_utility: Stat,
    pub honest_utility_histogram: Histogram,
    pub rewards: RewardComparison,
    pub stress: Option<StressSummary>,
    pub warnings: Vec<TrialWarning>,
    pub config: SimulationConfig,
}

fn model_summary(cfg: &SimulationConfig, trials: &[TrialRecord], m: usize) -> ModelSummary {
    let outcomes: Vec<_> = trials.iter().map(|t| &t.models[m]).collect();
    let n_trials = trials.len();
    let costs: Vec<f64> = outcomes.iter().map(|o| o.min_cost).collect();
    let mut min_cost_histogram = Histogram::new(&cfg.histograms.min_cost);
    costs.iter().for_each(|c| min_cost_histogram.add(*c));
    let margins: Vec<f64> = outcomes.iter().flat_map(|o| o.margins.iter().copied()).collect();
    let mut margin_histogram = Histogram::new(&cfg.histograms.margin);
    margins.iter().for_each(|x| margin_histogram.add(*x));
    let bribes: Vec<f64> = outcomes.iter().filter_map(|o| o.bribery_cost).collect();

    let stress = outcomes[0].stressed_margins.as_ref().map(|_| {
        let stressed: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| o.stressed_margins.iter().flatten().copied())
            .collect();
        let shocked: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| o.shocked_margins.iter().flatten().copied())
            .collect();
        let shifts: Vec<f64> = outcomes
            .iter()
            .map(|o| {
                let a = o.stressed_margins.as_deref().unwrap_or_default();
                let b = o.shocked_margins.as_deref().unwrap_or_default();
                (b.iter().sum::<f64>() - a.iter().sum::<f64>()) / a.len() as f64
            })
            .collect();
        ModelStress {
            ruin_fraction_stressed: fraction(stressed.iter().filter(|x| **x < 0.0).count(), stressed.len()),
            ruin_fraction_shocked: fraction(shocked.iter().filter(|x| **x < 0.0).count(), shocked.len()),
            margin_stressed: Stat::of(&stressed),
            margin_shocked: Stat::of(&shocked),
            mean_margin_shift: Stat::of(&shifts).mean,
            negative_shift_fraction: fraction(shifts.iter().filter(|x| **x < 0.0).count(), n_trials),
        }
    });

    ModelSummary {
        model: outcomes[0].model.label(),
        min_cost: Stat::of(&costs),
        min_cost_histogram,
        weak_secure_fraction: fraction(outcomes.iter().filter(|o| o.weak_secure).count(), n_trials),
        strong_secure_fraction: fraction(outcomes.iter().filter(|o| o.strong_secure).count(), n_trials),
        bribery_cost: Stat::of(&bribes),
        ruin_fraction: fraction(margins.iter().filter(|x| **x < 0.0).count(), margins.len()),
        margin: Stat::of(&margins),
        margin_histogram,
        stress,
    }
}

/// Aggregates a run into report tables.
pub fn build_report(results: &TrialResults) -> Result<ReportTables> {
    let cfg = &results.config;
    let trials = &results.trials;
    if trials.is_empty() {
        return Err(Error::Empty("trials"));
    }
    let models = (0..trials[0].models.len())
        .map(|m| model_summary(cfg, trials, m))
        .collect();
    let ordering_violations = trials.iter().filter(|t| !t.ordering_ok()).count();
    let weak_direction_violations = trials
        .iter()
        .filter(|t| {
            let by = |k: fn(&ModelKind) -> bool| t.models.iter().find(|m| k(&m.model)).map(|m| m.weak_secure);
            by(|k| *k == ModelKind::Isolated) == Some(true) && by(|k| *k == ModelKind::Shared) == Some(false)
        })
        .count();

    let mut reward_conservation_error: f64 = 0.0;
    let mut utilities = Vec::new();
    for t in trials {
        let total: f64 = t.validators.iter().map(|v| v.honest_utility).sum();
        let expected = t.scenario.params.total_reward()?;
        if expected > 0.0 {
            reward_conservation_error = reward_conservation_error.max((total - expected).abs() / expected);
        }
        utilities.extend(t.validators.iter().map(|v| v.honest_utility));
    }
    let mut honest_utility_histogram = Histogram::new(&cfg.histograms.honest_utility);
    utilities.iter().for_each(|u| honest_utility_histogram.add(*u));

    let per_trial: Vec<Vec<Vec<f64>>> = trials
        .iter()
        .map(|t| {
            (0..RewardScheme::ALL.len())
                .map(|s| t.validators.iter().map(|v| v.scheme_rewards[s]).collect())
                .collect()
        })
        .collect();
    let rewards = reward_comparison(&cfg.histograms.gini, &per_trial)?;

    let stress = trials[0].stress.as_ref().map(|_| {
        let stressed = trials.iter().filter(|t| t.stressed_ordering_ok() == Some(false)).count();
        let shocked = trials.iter().filter(|t| t.shocked_ordering_ok() == Some(false)).count();
        let base: Vec<f64> = trials.iter().filter_map(|t| t.stress.as_ref()).map(|s| s.weakest_variance).collect();
        let hit: Vec<f64> = trials
            .iter()
            .filter_map(|t| t.stress.as_ref())
            .map(|s| s.weakest_variance_shocked)
            .collect();
        let increased = base.iter().zip(&hit).filter(|(a, b)| b > a).count();
        StressSummary {
            ordering_violations_stressed: stressed,
            ordering_violations_shocked: shocked,
            weakest_variance: Stat::of(&base),
            weakest_variance_shocked: Stat::of(&hit),
            variance_increase_fraction: fraction(increased, base.len()),
        }
    });

    let warnings = trials
        .iter()
        .flat_map(|t| {
            t.warnings.iter().map(move |w| TrialWarning {
                trial: t.trial(),
                message: w.clone(),
            })
        })
        .collect();

    Ok(ReportTables {
        seed: cfg.seed,
        n_trials: trials.len(),
        units: "USD",
        margin_definition: MARGIN_DEFINITION,
        stream_derivation: STREAM_DERIVATION,
        models,
        ordering_violations,
        weak_direction_violations,
        reward_conservation_error,
        honest_utility: Stat::of(&utilities),
        honest_utility_histogram,
        rewards,
        stress,
        warnings,
        config: cfg.clone(),
    })
}

/// File format for per-trial and per-validator tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    model: &'static str,
    pool: Option<usize>,
    pi: f64,
    rate: f64,
    total_stake: f64,
    min_cost: f64,
    weak_secure: bool,
    strong_secure: bool,
    bribery_cost: Option<f64>,
    ruin_fraction: f64,
    mean_margin: f64,
    stressed_min_cost: Option<f64>,
    shocked_min_cost: Option<f64>,
    mean_margin_stressed: Option<f64>,
    mean_margin_shocked: Option<f64>,
    ordering_ok: bool,
    warnings: usize,
}

#[derive(Serialize)]
struct ValidatorRow {
    trial: usize,
    validator: usize,
    model: &'static str,
    stake: f64,
    honest_utility: f64,
    reward_total_stake: f64,
    reward_per_ssp_allocated: f64,
    best_attack_utility: Option<f64>,
    margin: f64,
    margin_stressed: Option<f64>,
    margin_shocked: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn trial_rows(results: &TrialResults) -> Vec<TrialRow> {
    let mut rows = Vec::new();
    for t in &results.trials {
        let p = &t.scenario.params;
        for m in &t.models {
            let pool = match m.model {
                ModelKind::SingleSsp(j) => Some(j),
                ModelKind::Isolated => Some(crate::model::argmin(&t.scenario.omega.column_sums())),
                ModelKind::Shared => None,
            };
            rows.push(TrialRow {
                trial: t.trial(),
                model: m.model.label(),
                pool,
                pi: p.pi,
                rate: p.rate,
                total_stake: t.scenario.stakes.total(),
                min_cost: m.min_cost,
                weak_secure: m.weak_secure,
                strong_secure: m.strong_secure,
                bribery_cost: m.bribery_cost,
                ruin_fraction: fraction(m.margins.iter().filter(|x| **x < 0.0).count(), m.margins.len()),
                mean_margin: mean(&m.margins),
                stressed_min_cost: m.stressed_min_cost,
                shocked_min_cost: m.shocked_min_cost,
                mean_margin_stressed: m.stressed_margins.as_deref().map(mean),
                mean_margin_shocked: m.shocked_margins.as_deref().map(mean),
                ordering_ok: t.ordering_ok(),
                warnings: t.warnings.len(),
            });
        }
    }
    rows
}

fn validator_rows(results: &TrialResults) -> Vec<ValidatorRow> {
    let mut rows = Vec::new();
    for t in &results.trials {
        for m in &t.models {
            for (i, v) in t.validators.iter().enumerate() {
                rows.push(ValidatorRow {
                    trial: t.trial(),
                    validator: i,
                    model: m.model.label(),
                    stake: v.stake,
                    honest_utility: v.honest_utility,
                    reward_total_stake: v.scheme_rewards[0],
                    reward_per_ssp_allocated: v.scheme_rewards[1],
                    best_attack_utility: m.best_attack[i],
                    margin: m.margins[i],
                    margin_stressed: m.stressed_margins.as_ref().map(|x| x[i]),
                    margin_shocked: m.shocked_margins.as_ref().map(|x| x[i]),
                });
            }
        }
    }
    rows
}

fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T], format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            for r in rows {
                w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            let text = serde_json::to_string_pretty(rows).map_err(|e| Error::Io(e.to_string()))?;
            fs::write(&path, text + "\n")?;
        }
    }
    Ok(())
}

/// Writes `trials.{csv,json}`, `validators.{csv,json}` and `summary.json`
/// into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, results: &TrialResults, report: &ReportTables, format: OutputFormat) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_table(dir, "trials", &trial_rows(results), format)?;
    write_table(dir, "validators", &validator_rows(results), format)?;
    let summary = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        let mut h = Histogram::new(&BinSpec {
            lo: 0.0,
            hi: 1.0,
            bins: 4,
        });
        assert_eq!(h.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        for x in [-0.1, 0.0, 0.3, 0.99, 1.0] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![1, 1, 0, 1]);
        assert_eq!((h.underflow, h.overflow), (1, 1));
        assert_eq!(h.total(), 5);
    }

    #[test]
    fn stat_examples() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!((s.count, s.mean, s.std), (3, 2.0, 1.0));
        assert_eq!(Stat::of(&[5.0]).std, 0.0);
        assert!(Stat::of(&[]).mean.is_nan());
    }
}
