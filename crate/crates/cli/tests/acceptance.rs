//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use restake::allocation::maximin_allocate;
use restake::bribery::{brute_force_bribery_oracle, min_bribery_cost_ssp, BriberyConfig};
use restake::model::{
    proportional_reward_chain, AllocationMatrix, AttackPlan, EconomicParams, StakeTable,
};
use restake::risk::{
    correlated_normal_returns, correlation_matrix, fsd_check, security_variance, CovModel,
};
use restake::security::{
    security_level, strong_security, validator_bound, weak_security, ValidatorBound,
};
use restake::simulate::{build_report, run_trials, SimulationConfig};

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed ^ salt)
}

fn random_allocation(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (StakeTable, AllocationMatrix) {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..k)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.01..500.0) })
                .collect();
            if row.iter().all(|w| *w == 0.0) {
                row[0] = 1.0;
            }
            row
        })
        .collect();
    let stakes = StakeTable::new(rows.iter().map(|r| r.iter().sum()).collect()).unwrap();
    (stakes, AllocationMatrix::from_rows(rows).unwrap())
}

fn weak_boundary() -> Outcome {
    let mut rng = rng(1);
    let start = Instant::now();
    for _ in 0..1000 {
        let delta = rng.random_range(1.0..1e9);
        let theta = rng.random_range(0.01..0.99);
        let cap = theta * delta;
        let verdict = |pi: f64| {
            let params = EconomicParams::new(pi, theta, 0.05).unwrap();
            weak_security(delta, &params).unwrap().secure
        };
        ensure(verdict(cap), || format!("π = θΔ = {cap} judged insecure"))?;
        ensure(verdict(cap.next_down()), || format!("π just below {cap} judged insecure"))?;
        ensure(!verdict(cap.next_up()), || format!("π just above {cap} judged secure"))?;
        let pi = rng.random_range(0.0..2.0 * cap);
        ensure(verdict(pi) == (pi <= cap), || format!("π = {pi}, θΔ = {cap}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("4000 verdicts in {elapsed:.2?}"))
}

fn reward_identity() -> Outcome {
    let mut rng = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (n, k) = (rng.random_range(1..40), rng.random_range(1..12));
        let (stakes, omega) = random_allocation(&mut rng, n, k);
        let rate = rng.random_range(0.0..1.0);
        let paid = proportional_reward_chain(&omega, rate * stakes.total());
        for (i, u) in paid.iter().enumerate() {
            let expected = rate * stakes.get(i);
            let rel = (u - expected).abs() / expected.max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-9, || format!("relative error {worst:e}"))?;
    Ok(format!("500 allocations, max relative error {worst:.1e}"))
}

fn summary_of(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn cost_ordering(run: &Path) -> Outcome {
    let summary = summary_of(run);
    let reported = summary["ordering_violations"].as_u64().unwrap_or(u64::MAX);
    ensure(reported == 0, || format!("summary reports {reported} violations"))?;
    // recheck from the per-trial rows
    let mut reader = csv::Reader::from_path(run.join("trials.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (t, m, c) = (col("trial"), col("model"), col("min_cost"));
    let mut costs = std::collections::BTreeMap::<u64, [f64; 3]>::new();
    for row in reader.records() {
        let row = row.unwrap();
        let slot = match &row[m] {
            "isolated" => 0,
            "single" => 1,
            "shared" => 2,
            other => return Err(format!("unexpected model {other}")),
        };
        let cost: f64 = row[c].parse().unwrap();
        costs.entry(row[t].parse().unwrap()).or_insert([f64::NAN; 3])[slot] = cost;
    }
    ensure(costs.len() == 1000, || format!("{} trials in trials.csv", costs.len()))?;
    let bad = costs
        .values()
        .filter(|[iso, single, shared]| !(shared >= single && single >= iso))
        .count();
    ensure(bad == 0, || format!("{bad} trials violate the ordering"))?;
    Ok("1000 trials, 0 violations".into())
}

fn maximin() -> Outcome {
    let mut rng = rng(4);
    for _ in 0..1000 {
        let (n, k) = (rng.random_range(1..30), rng.random_range(1..10));
        let (stakes, omega) = random_allocation(&mut rng, n, k);
        let theta = rng.random_range(0.01..0.99);
        let sol = maximin_allocate(&stakes, k).unwrap();
        let delta: f64 = stakes.as_slice().iter().sum();
        let closed = theta * (delta / k as f64);
        ensure(sol.objective(theta) == closed, || {
            format!("objective {} vs θΔ/k {closed}", sol.objective(theta))
        })?;
        let min_col = omega.column_sums().into_iter().fold(f64::INFINITY, f64::min);
        let level = theta * min_col;
        ensure(sol.objective(theta) >= level * (1.0 - 1e-12), || {
            format!("random allocation beats the solver: {level} > {closed}")
        })?;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..10);
        let x: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1e4)).collect();
        let y: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1e4)).collect();
        let (lambda, theta) = (rng.random_range(0.0..=1.0), rng.random_range(0.01..0.99));
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let lhs = security_level(&z, theta).unwrap();
        let rhs = lambda * security_level(&x, theta).unwrap()
            + (1.0 - lambda) * security_level(&y, theta).unwrap();
        worst = worst.max((rhs - lhs) / rhs.abs().max(1.0));
    }
    ensure(worst <= 1e-12, || format!("concavity gap {worst:e}"))?;
    Ok(format!("1000 solver checks, 1000 convex combinations, worst gap {worst:.1e}"))
}

/// Exhaustive C_j on integer stakes with a dyadic θ = p/16, compared in
/// exact integer arithmetic.
fn enumerate_cost(rows: &[Vec<u32>], j: usize, rate: f64, p: u64) -> Option<f64> {
    let n = rows.len();
    let col: Vec<u64> = rows.iter().map(|r| u64::from(r[j])).collect();
    let delta_j: u64 = col.iter().sum();
    if delta_j == 0 {
        return None;
    }
    let lambda = |i: usize| {
        let sigma: u32 = rows[i].iter().sum();
        rate * f64::from(sigma) / col[i] as f64
    };
    let mut best: Option<f64> = None;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if members.iter().any(|&i| col[i] == 0) {
            continue;
        }
        let sum: u64 = members.iter().map(|&i| col[i]).sum();
        if sum * 16 < p * delta_j {
            continue;
        }
        let top = members.iter().map(|&i| lambda(i)).fold(0.0, f64::max);
        let cost = (1.0 + top) * sum as f64;
        if best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

fn bribery_oracle() -> Outcome {
    let mut rng = rng(5);
    let start = Instant::now();
    let mut compared = 0;
    for _ in 0..500 {
        let (n, k) = (rng.random_range(1..=12), rng.random_range(1..=5));
        let rows: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                let mut r: Vec<u32> =
                    (0..k).map(|_| if rng.random_bool(0.25) { 0 } else { rng.random_range(1..60) }).collect();
                if r.iter().all(|w| *w == 0) {
                    r[0] = 1;
                }
                r
            })
            .collect();
        let p = rng.random_range(2..16u64);
        let theta = p as f64 / 16.0;
        let rate = rng.random_range(0.0..0.5);
        let omega = AllocationMatrix::from_rows(
            rows.iter().map(|r| r.iter().map(|w| f64::from(*w)).collect()).collect(),
        )
        .unwrap();
        let stakes = StakeTable::new(rows.iter().map(|r| f64::from(r.iter().sum::<u32>())).collect()).unwrap();
        let params = EconomicParams::new(0.0, theta, rate).unwrap();
        let cfg = BriberyConfig::new(theta).unwrap();
        for j in 0..k {
            let solver = min_bribery_cost_ssp(j, &omega, &stakes, &params, &cfg).ok().map(|p| p.cost);
            let expected = enumerate_cost(&rows, j, rate, p);
            ensure(solver == expected, || format!("SSP {j}: solver {solver:?}, enumeration {expected:?}"))?;
            // same instance on the library's own enumerator
            let own = brute_force_bribery_oracle(j, &omega, &stakes, &params, &cfg).ok().map(|p| p.cost);
            ensure(own == expected, || format!("SSP {j}: built-in oracle {own:?}, enumeration {expected:?}"))?;
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("500 instances, {compared} pools equal, {elapsed:.2?}"))
}

fn gini(run: &Path) -> Outcome {
    let summary = summary_of(run);
    let mean = summary["rewards"]["schemes"][0]["gini"]["mean"].as_f64().unwrap_or(f64::NAN);
    let target = 3.0 / 11.0;
    ensure((mean - target).abs() <= 0.02, || format!("mean Gini {mean:.4}, target {target:.4}"))?;
    Ok(format!("mean Gini {mean:.4} (3/11 = {target:.4})"))
}

fn validator_chain() -> Outcome {
    let mut rng = rng(7);
    let mut strong = 0;
    for _ in 0..1000 {
        let (n, k) = (rng.random_range(1..25), rng.random_range(1..8));
        let (stakes, omega) = random_allocation(&mut rng, n, k);
        let delta = stakes.total();
        let theta = rng.random_range(0.05..0.95);
        let rate = rng.random_range(0.0..0.5);
        // π below (θ + r)Δ/n, so n < (θ + r)Δ/π
        let pi = (theta + rate) * delta / n as f64 * rng.random_range(0.01..0.99);
        let params = EconomicParams::new(pi, theta, rate).unwrap().resolved(delta).unwrap();
        // attackers hold strictly less than θ of every pool
        let fractions: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.999)).collect();
        let alpha = AttackPlan::bounded_by(
            omega
                .rows()
                .map(|r| r.iter().zip(&fractions).map(|(w, f)| w * theta * f).collect())
                .collect(),
            &omega,
        )
        .unwrap();
        let left = (theta + rate) * delta / n as f64;
        let middle = (alpha.committed() + rate * delta) / n as f64;
        ensure(left > middle, || format!("(θ+r)Δ/n = {left} ≤ {middle}"))?;
        ensure(left > pi, || format!("(θ+r)Δ/n = {left} ≤ π = {pi}"))?;
        match validator_bound(delta, &params).unwrap() {
            ValidatorBound::AtMost(m) => ensure(n as u64 <= m, || format!("n = {n} above bound {m}"))?,
            ValidatorBound::Unbounded => return Err("π > 0 reported unbounded".into()),
        }
        if strong_security(&alpha, &params, n).unwrap().secure {
            strong += 1;
            ensure(middle > pi, || "strong verdict disagrees with the average".into())?;
        }
    }
    Ok(format!("1000 draws, chain holds, {strong} strongly secure"))
}

fn fsd_cost_cap() -> Outcome {
    let mut rng = rng(8);
    let mut worst_gap = f64::INFINITY;
    for case in 0..500 {
        let len = rng.random_range(1..200);
        let theta = rng.random_range(0.05..0.95);
        let a: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1e4)).collect();
        // b dominates a: shift every sample up, then pair in shuffled order
        let mut b: Vec<f64> = a.iter().map(|x| x + rng.random_range(0.0..1e3)).collect();
        if case % 2 == 1 {
            for i in (1..b.len()).rev() {
                b.swap(i, rng.random_range(0..=i));
            }
        }
        let verdict = fsd_check(&a, &b, theta).unwrap();
        ensure(verdict.dominates, || format!("case {case}: dominance not detected"))?;
        let mins: f64 = a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum::<f64>() / len as f64;
        let lhs = theta * mins;
        let rhs = theta * b.iter().sum::<f64>() / len as f64;
        ensure(lhs <= rhs, || format!("case {case}: {lhs} > {rhs}"))?;
        ensure(verdict.bound_holds == Some(true), || format!("case {case}: verdict {verdict:?}"))?;
        worst_gap = worst_gap.min(rhs - lhs);
    }
    Ok(format!("500 cases, smallest slack {worst_gap:.3}"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn risk_recovery() -> Outcome {
    let mut rng = rng(9);
    let names = vec!["x".to_string(), "y".to_string()];
    let mut report = Vec::new();
    for rho in [0.0, 0.5, 0.8] {
        let cov = CovModel::from_vols_and_correlation(
            names.clone(),
            &[0.03, 0.05],
            &[vec![1.0, rho], vec![rho, 1.0]],
        )
        .unwrap();
        let returns = correlated_normal_returns(&cov, 10_000, &mut rng).unwrap();
        let est = correlation_matrix(&returns).unwrap().get(0, 1);
        ensure((est - rho).abs() <= 0.03, || format!("ρ = {rho}: estimated {est:.4}"))?;
        report.push(format!("{rho}→{est:.3}"));
    }
    for _ in 0..1000 {
        let col: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random_range(0.0..1e4)).collect();
        let var = rng.random_range(0.0..1.0);
        let total: f64 = col.iter().sum();
        let expected = total * total * var;
        let got = security_variance(&col, var).unwrap();
        ensure((got - expected).abs() <= 1e-12 * expected.max(f64::MIN_POSITIVE), || {
            format!("security variance {got} vs {expected}")
        })?;
    }
    // bundled fixture through the CLI table writer
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_restake"))
        .arg("risk")
        .arg("--prices")
        .arg(fixtures().join("prices.csv"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
    let table = std::fs::read_to_string(out.path().join("correlation.csv")).unwrap();
    let expected = std::fs::read_to_string(fixtures().join("correlation.csv")).unwrap();
    ensure(table == expected, || format!("table\n{table}differs from fixture\n{expected}"))?;
    Ok(format!("ρ {} ; variance identity ; fixture table matches", report.join(", ")))
}

fn simulate(dir: &Path, workers: usize) -> Result<Duration, String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_restake"))
        .args(["simulate", "--seed", "42", "--workers", &workers.to_string(), "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "simulate exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(start.elapsed())
}

fn determinism(runs: &[(PathBuf, Duration)]) -> Outcome {
    let reference = std::fs::read(runs[0].0.join("trials.csv")).unwrap();
    for (dir, _) in &runs[1..] {
        let other = std::fs::read(dir.join("trials.csv")).unwrap();
        ensure(other == reference, || format!("{} differs", dir.display()))?;
    }
    let slowest = runs.iter().map(|r| r.1).max().unwrap();
    ensure(slowest < Duration::from_secs(300), || format!("run took {slowest:?}"))?;
    Ok(format!("{} runs identical, slowest {slowest:.2?}", runs.len()))
}

fn shock_direction(run: &Path) -> Outcome {
    let summary = summary_of(run);
    ensure(summary["stress"]["ordering_violations_shocked"].as_u64() == Some(0), || {
        "seed 42: shocked ordering violated".into()
    })?;
    let seeds = 20;
    let mut negative = 0;
    for seed in 0..seeds {
        let cfg = SimulationConfig {
            seed,
            bribery: false,
            ..Default::default()
        };
        let report = build_report(&run_trials(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let stress = report.stress.as_ref().ok_or("stress disabled")?;
        ensure(stress.variance_increase_fraction == 1.0, || {
            format!("seed {seed}: variance rose in {:.3} of trials", stress.variance_increase_fraction)
        })?;
        ensure(stress.ordering_violations_shocked == 0, || {
            format!("seed {seed}: {} shocked ordering violations", stress.ordering_violations_shocked)
        })?;
        let isolated = report.models.iter().find(|m| m.model == "isolated").ok_or("no isolated model")?;
        let shift = isolated.stress.as_ref().ok_or("no stress summary")?.mean_margin_shift;
        if shift < 0.0 {
            negative += 1;
        }
    }
    let share = negative as f64 / seeds as f64;
    ensure(share >= 0.95, || format!("shift negative in {negative}/{seeds} runs"))?;
    Ok(format!("variance up in every trial, shift negative in {negative}/{seeds} runs"))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    let mut sim_error = None;
    for (name, workers) in [("w1", 1), ("w4", 4), ("w4-again", 4)] {
        let dir = tmp.path().join(name);
        match simulate(&dir, workers) {
            Ok(d) => runs.push((dir, d)),
            Err(e) => sim_error = Some(e),
        }
    }
    let needs_runs = |f: &dyn Fn() -> Outcome| match &sim_error {
        Some(e) => Err(e.clone()),
        None => f(),
    };
    let main_run = tmp.path().join("w1");

    let criteria: Vec<(&str, Check)> = vec![
        ("weak-security boundary", Box::new(weak_boundary)),
        ("reward identity", Box::new(reward_identity)),
        ("cost ordering", Box::new(|| needs_runs(&|| cost_ordering(&main_run)))),
        ("maximin optimality", Box::new(maximin)),
        ("bribery oracle equivalence", Box::new(bribery_oracle)),
        ("Gini concentration", Box::new(|| needs_runs(&|| gini(&main_run)))),
        ("validator-count bound", Box::new(validator_chain)),
        ("FSD cost cap", Box::new(fsd_cost_cap)),
        ("risk recovery", Box::new(risk_recovery)),
        ("determinism", Box::new(|| needs_runs(&|| determinism(&runs)))),
        ("volatility-shock direction", Box::new(|| needs_runs(&|| shock_direction(&main_run)))),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
