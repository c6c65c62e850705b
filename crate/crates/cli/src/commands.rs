use std::path::{Path, PathBuf};

use restake::allocation::{
    default_max_iters, default_tol, equalize_iterative, equilibrium_check, maximin_allocate,
};
use restake::bribery::{
    aggregate_lambdas, bribery_cost_multi, bribery_cost_single, BriberyConfig, SlashingRule,
};
use restake::model::{
    validate_allocation, AllocationMatrix, AttackPlan, EconomicParams, ModelKind, StakeTable,
};
use restake::risk::{
    correlation_matrix, fsd_check, format_matrix_csv, ingest_prices, volatility_shock, CovModel,
    ReturnMatrix,
};
use restake::security::{
    min_attack_cost, model_security, strong_security, tightened_threshold, validator_bound,
    weak_security,
};
use restake::simulate::{build_report, run_trials, write_outputs, OutputFormat, SimulationConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::{values, ModelSection, OptimizeSection, RiskSection, RunConfig};
use crate::io::{allocation_csv, read_allocation, write_json, write_rows, write_text, LabeledAllocation};
use crate::CliError;

const DEFAULT_THETA: f64 = 1.0 / 3.0;

/// Settings every command receives after layering flags over the file.
pub struct Common {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub json: bool,
}

fn required<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Input(format!("missing required input '{name}'")))
}

fn load_allocation(
    file: &RunConfig,
    flag_path: Option<PathBuf>,
    section: &ModelSection,
) -> Result<LabeledAllocation, CliError> {
    if let Some(p) = flag_path {
        return read_allocation(&p);
    }
    if let Some(p) = &section.allocation {
        return read_allocation(&file.resolve(p));
    }
    if let Some(rows) = &section.omega {
        let rows = rows.iter().map(|r| values(r)).collect();
        return Ok(LabeledAllocation::unlabeled(AllocationMatrix::from_rows(rows)?));
    }
    Err(CliError::Input("missing required input 'allocation'".into()))
}

/// Stakes from the inputs, or the allocation's row sums.
fn stakes_for(stakes: Option<Vec<f64>>, omega: &AllocationMatrix) -> Result<StakeTable, CliError> {
    let s = stakes.unwrap_or_else(|| omega.rows().map(|r| r.iter().sum()).collect());
    Ok(StakeTable::new(s)?)
}

fn check_feasible(omega: &AllocationMatrix, stakes: &StakeTable) -> Result<(), CliError> {
    let report = validate_allocation(omega, stakes)?;
    if report.is_feasible() {
        Ok(())
    } else {
        Err(CliError::Input(format!("infeasible allocation:\n{report}")))
    }
}

/// Inputs for `security` and `bribery`, flags already merged.
pub struct ModelInputs {
    pub allocation: LabeledAllocation,
    pub stakes: StakeTable,
    pub params: EconomicParams,
    pub single_ssp: Option<usize>,
    pub slashing: Option<Vec<f64>>,
}

impl ModelInputs {
    pub fn resolve(file: &RunConfig, section: ModelSection, allocation_flag: Option<PathBuf>) -> Result<Self, CliError> {
        let allocation = load_allocation(file, allocation_flag, &section)?;
        let stakes = stakes_for(section.stakes.as_deref().map(values), &allocation.omega)?;
        check_feasible(&allocation.omega, &stakes)?;
        let pi = required(section.pi, "pi")?.0;
        let theta = section.theta.map_or(DEFAULT_THETA, |t| t.0);
        let delta = stakes.total();
        let params = match (section.rate, section.reward) {
            (Some(r), reward) => {
                let p = EconomicParams::new(pi, theta, r.0)?;
                match reward {
                    Some(total) => p.with_reward(total.0)?.resolved(delta)?,
                    None => p.resolved(delta)?,
                }
            }
            (None, Some(total)) => EconomicParams::from_total_reward(pi, theta, total.0, delta)?,
            (None, None) => return Err(CliError::Input("missing required input 'rate' (or 'reward')".into())),
        };
        Ok(ModelInputs {
            allocation,
            stakes,
            params,
            single_ssp: section.single_ssp,
            slashing: section.slashing.as_deref().map(values),
        })
    }

    fn models(&self) -> [ModelKind; 3] {
        let single = match self.single_ssp {
            Some(j) => ModelKind::SingleSsp(j),
            None => ModelKind::single_ssp_default(&self.allocation.omega),
        };
        [ModelKind::Isolated, ModelKind::Shared, single]
    }
}

#[derive(Serialize)]
struct ModelReport {
    model: &'static str,
    pool: Option<usize>,
    min_cost: f64,
    weak: restake::security::SecurityVerdict,
    strong: restake::security::SecurityVerdict,
    per_ssp_costs: Vec<f64>,
    degenerate: bool,
}

pub fn security(inputs: ModelInputs, common: &Common) -> Result<(), CliError> {
    let omega = &inputs.allocation.omega;
    let p = &inputs.params;
    let delta = inputs.stakes.total();
    let n = inputs.stakes.len();
    let mut models = Vec::new();
    for model in inputs.models() {
        let breakdown = min_attack_cost(omega, p, model)?;
        let alpha = AttackPlan::minimal_capture(omega, p.theta, model)?;
        models.push(ModelReport {
            model: model.label(),
            pool: breakdown.weakest_ssp,
            min_cost: breakdown.min_cost,
            weak: model_security(omega, p, model)?,
            strong: strong_security(&alpha, p, n)?,
            per_ssp_costs: breakdown.per_ssp_costs,
            degenerate: breakdown.degenerate,
        });
    }
    let [isolated, shared, single] = [&models[0], &models[1], &models[2]];
    if !(shared.min_cost >= single.min_cost && single.min_cost >= isolated.min_cost) {
        return Err(CliError::Internal("attack cost ordering violated".into()));
    }
    let report = json!({
        "total_stake": delta,
        "params": p,
        "ssps": inputs.allocation.ssps,
        "weak": weak_security(delta, p)?,
        "validator_bound": validator_bound(delta, p)?,
        "validators": n,
        "tightened_threshold": tightened_threshold(omega, p),
        "models": models,
    });
    write_json(&common.out, "security.json", &report)?;
    println!(
        "weak security (shared stake): {}; isolated min cost {:.6}, shared {:.6}, single {:.6}",
        if report["weak"]["secure"] == true { "secure" } else { "insecure" },
        isolated.min_cost,
        shared.min_cost,
        single.min_cost
    );
    Ok(())
}

#[derive(Serialize)]
struct PlanRow {
    ssp: String,
    coalition: String,
    lambda_star: f64,
    coalition_stake: f64,
    cost: f64,
}

pub fn bribery(inputs: ModelInputs, common: &Common) -> Result<(), CliError> {
    let omega = &inputs.allocation.omega;
    let p = &inputs.params;
    let mut cfg = BriberyConfig::from_params(p);
    if let Some(s) = inputs.slashing.clone() {
        cfg = cfg.with_slashing(SlashingRule::Fixed(s))?;
    }
    let lambdas = aggregate_lambdas(&inputs.stakes, p);
    let single = bribery_cost_single(&inputs.stakes, p, &lambdas)?;
    let multi = bribery_cost_multi(omega, &inputs.stakes, p, &cfg)?;
    let ids = &inputs.allocation.validators;
    let rows: Vec<PlanRow> = multi
        .plans
        .iter()
        .map(|plan| PlanRow {
            ssp: inputs.allocation.ssps[plan.ssp].clone(),
            coalition: plan.coalition.iter().map(|&i| ids[i].as_str()).collect::<Vec<_>>().join(" "),
            lambda_star: plan.lambda_star,
            coalition_stake: plan.coalition_stake,
            cost: plan.cost,
        })
        .collect();
    write_rows(&common.out, "bribery_plans", &rows, common.json)?;
    let report = json!({
        "params": p,
        "c_multi": multi.cost,
        "weakest_ssp": inputs.allocation.ssps[multi.weakest],
        "c_single": single,
        "lambda_single": lambdas.iter().copied().fold(0.0, f64::max),
        "plans": multi.plans,
    });
    write_json(&common.out, "bribery.json", &report)?;
    println!(
        "C_multi {:.6} (weakest {}), C_single {:.6}",
        multi.cost, inputs.allocation.ssps[multi.weakest], single
    );
    Ok(())
}

pub fn optimize(
    file: &RunConfig,
    section: OptimizeSection,
    allocation_flag: Option<PathBuf>,
    common: &Common,
) -> Result<(), CliError> {
    let initial = match allocation_flag.or_else(|| section.allocation.as_ref().map(|p| file.resolve(p))) {
        Some(p) => Some(read_allocation(&p)?),
        None => None,
    };
    let stakes = match (&section.stakes, &initial) {
        (Some(s), _) => StakeTable::new(values(s))?,
        (None, Some(a)) => stakes_for(None, &a.omega)?,
        (None, None) => return Err(CliError::Input("missing required input 'stakes'".into())),
    };
    let theta = section.theta.map_or(DEFAULT_THETA, |t| t.0);
    let params = EconomicParams::new(
        section.pi.map_or(0.0, |p| p.0),
        theta,
        section.rate.map_or(0.1, |r| r.0),
    )?;

    let (allocation, method) = match initial {
        Some(a) => {
            check_feasible(&a.omega, &stakes)?;
            if let Some(k) = section.k {
                if k != a.omega.n_ssps() {
                    return Err(CliError::Input(format!(
                        "k = {k} but the starting allocation has {} SSPs",
                        a.omega.n_ssps()
                    )));
                }
            }
            let iters = section
                .max_iters
                .unwrap_or_else(|| default_max_iters(a.omega.n_validators(), a.omega.n_ssps()));
            let out = equalize_iterative(&a.omega, &stakes, iters, default_tol(&a.omega))?;
            let method = json!({
                "method": "iterative",
                "iterations": out.iterations,
                "spread": out.spread,
            });
            (
                LabeledAllocation {
                    omega: out.allocation,
                    ..a
                },
                method,
            )
        }
        None => {
            let k = required(section.k, "k")?;
            let sol = maximin_allocate(&stakes, k)?;
            let method = json!({
                "method": "maximin",
                "min_stake": sol.min_stake,
                "objective": sol.objective(theta),
            });
            (LabeledAllocation::unlabeled(sol.allocation), method)
        }
    };
    let probes = section.probes.unwrap_or(256);
    let report = equilibrium_check(&allocation.omega, &stakes, &params, probes, common.seed.unwrap_or(0))?;
    if common.json {
        write_json(&common.out, "allocation.json", &allocation.omega)?;
    } else {
        write_text(&common.out, "allocation.csv", &allocation_csv(&allocation))?;
    }
    write_json(
        &common.out,
        "equilibrium.json",
        &json!({ "solver": method, "column_sums": allocation.omega.column_sums(), "equilibrium": report }),
    )?;
    println!(
        "equalized: {}; spread {:e}; min cost {:.6}",
        report.equalized, report.delta_spread, report.min_cost
    );
    Ok(())
}

#[derive(Serialize)]
struct ShockRow {
    asset: String,
    factor: f64,
    variance_before: f64,
    variance_after: f64,
    max_correlation_change: f64,
}

#[derive(Serialize)]
struct FsdRow {
    riskier: String,
    safer: String,
    dominates: bool,
    bound: f64,
    paired_min_cost: Option<f64>,
    bound_holds: Option<bool>,
}

fn full_precision_csv(assets: &[String], m: &[Vec<f64>]) -> String {
    let mut out = String::from("asset");
    for a in assets {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for (a, row) in assets.iter().zip(m) {
        out.push_str(a);
        for x in row {
            out.push(',');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn risk(file: &RunConfig, section: RiskSection, common: &Common) -> Result<(), CliError> {
    let prices = required(section.prices.as_ref(), "prices")?;
    let series = ingest_prices(&file.resolve(prices))?;
    let rm = ReturnMatrix::from_series(&series, Some(section.window.unwrap_or(365)))?;
    let corr = correlation_matrix(&rm)?;
    let cov = CovModel::estimate(&rm)?;
    write_text(&common.out, "correlation.csv", &corr.to_csv())?;
    write_json(&common.out, "correlation.json", &corr.to_json())?;
    write_text(&common.out, "covariance.csv", &full_precision_csv(cov.assets(), cov.matrix()))?;
    write_json(
        &common.out,
        "covariance.json",
        &json!({ "assets": cov.assets(), "matrix": cov.matrix(), "periods": rm.n_periods() }),
    )?;

    let factor = section.shock_factor.map_or(3.0, |f| f.0);
    let targets: Vec<String> = match section.shock_asset {
        Some(a) => vec![a],
        None => cov.assets().to_vec(),
    };
    let mut shocks = Vec::new();
    for asset in targets {
        let shocked = volatility_shock(&cov, &asset, factor)?;
        let a = cov.index_of(&asset)?;
        let after = shocked.correlation();
        let mut change: f64 = 0.0;
        for x in 0..cov.len() {
            for y in 0..cov.len() {
                let d = (after.get(x, y) - corr.get(x, y)).abs();
                if d.is_finite() {
                    change = change.max(d);
                }
            }
        }
        shocks.push(ShockRow {
            asset,
            factor,
            variance_before: cov.get(a, a),
            variance_after: shocked.get(a, a),
            max_correlation_change: change,
        });
    }
    write_rows(&common.out, "shocks", &shocks, common.json)?;

    // dollar security of one unit of each asset, relative to the window start
    let theta = section.theta.map_or(DEFAULT_THETA, |t| t.0);
    let levels: Vec<Vec<f64>> = (0..rm.assets.len())
        .map(|a| {
            let mut level = 1.0;
            let mut path = vec![level];
            for r in rm.column(a) {
                level *= r.exp();
                path.push(level);
            }
            path
        })
        .collect();
    let mut fsd = Vec::new();
    for (a, la) in levels.iter().enumerate() {
        for (b, lb) in levels.iter().enumerate() {
            if a != b {
                let v = fsd_check(la, lb, theta)?;
                fsd.push(FsdRow {
                    riskier: rm.assets[a].clone(),
                    safer: rm.assets[b].clone(),
                    dominates: v.dominates,
                    bound: v.bound,
                    paired_min_cost: v.paired_min_cost,
                    bound_holds: v.bound_holds,
                });
            }
        }
    }
    write_rows(&common.out, "fsd", &fsd, common.json)?;
    print!("{}", format_matrix_csv(&corr.assets, &corr.values));
    Ok(())
}

/// Simulation flags that override the config file.
#[derive(Debug, Default, Clone)]
pub struct SimulateOverrides {
    pub trials: Option<usize>,
    pub operators: Option<usize>,
    pub ssps: Option<usize>,
    pub theta: Option<f64>,
    pub workers: Option<usize>,
    pub no_bribery: bool,
    pub no_stress: bool,
}

pub fn simulation_config(
    file: &RunConfig,
    flags: &SimulateOverrides,
    seed_flag: Option<u64>,
) -> Result<SimulationConfig, CliError> {
    let table = file.simulate.clone().unwrap_or_default();
    let table_seed = table.get("seed").and_then(|v| v.as_integer()).map(|s| s as u64);
    let mut cfg: SimulationConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Input(format!("invalid [simulate] config: {e}")))?;
    if let Some(p) = &cfg.prices {
        if p.is_empty() {
            cfg.prices = None;
        }
    }
    cfg.seed = seed_flag
        .or(file.seed)
        .or(table_seed)
        .unwrap_or_else(rand::random);
    if let Some(t) = flags.trials {
        cfg.n_trials = t;
    }
    if let Some(n) = flags.operators {
        cfg.n_operators = n;
    }
    if let Some(k) = flags.ssps {
        cfg.n_ssps = k;
    }
    if let Some(t) = flags.theta {
        cfg.theta = t;
    }
    if flags.workers.is_some() {
        cfg.workers = flags.workers;
    }
    if flags.no_bribery {
        cfg.bribery = false;
    }
    if flags.no_stress {
        cfg.stress.enabled = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(cfg: SimulationConfig, common: &Common) -> Result<(), CliError> {
    let results = run_trials(&cfg)?;
    let report = build_report(&results)?;
    let format = if common.json { OutputFormat::Json } else { OutputFormat::Csv };
    write_outputs(&common.out, &results, &report, format)?;
    println!(
        "{} trials, seed {}; ordering violations {}; mean Gini {:.4}; ruin fraction isolated {:.4}, shared {:.4}",
        report.n_trials,
        report.seed,
        report.ordering_violations,
        report.rewards.schemes[0].gini.mean,
        report.models[0].ruin_fraction,
        report.models[1].ruin_fraction,
    );
    if report.ordering_violations > 0 {
        return Err(CliError::Internal(format!(
            "{} trials violate the attack-cost ordering",
            report.ordering_violations
        )));
    }
    Ok(())
}

pub fn default_out() -> &'static Path {
    Path::new("out")
}
