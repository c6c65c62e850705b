//! Price risk of dollar-denominated security.
//!
//! Stake is held in tokens, so an SSP's USD security Δ_j(t) moves with the
//! price of its asset. This module estimates return correlations from price
//! files, propagates price variance to Δ_j, compares security distributions
//! by first-order stochastic dominance, and builds volatility-shock
//! scenarios.

mod prices;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::sampling::standard_normal;

pub use prices::{ingest_prices, log_returns, parse_prices, PriceSeries, ReturnMatrix};

/// Symmetric covariance matrix over named assets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovModel {
    assets: Vec<String>,
    cov: Vec<Vec<f64>>,
}

impl CovModel {
    /// Validates shape, symmetry (to 1e-12 relative) and a nonnegative
    /// diagonal.
    pub fn new(assets: Vec<String>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let m = assets.len();
        if m == 0 {
            return Err(Error::Empty("assets"));
        }
        if cov.len() != m {
            return Err(Error::DimensionMismatch {
                what: "covariance rows",
                expected: m,
                actual: cov.len(),
            });
        }
        for row in &cov {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "covariance columns",
                    expected: m,
                    actual: row.len(),
                });
            }
            if row.iter().any(|c| !c.is_finite()) {
                return Err(invalid("covariance", "entries must be finite"));
            }
        }
        for a in 0..m {
            if cov[a][a] < 0.0 {
                return Err(invalid("covariance", format!("negative variance for {}", assets[a])));
            }
            for b in 0..a {
                let scale = cov[a][b].abs().max(cov[b][a].abs()).max(f64::MIN_POSITIVE);
                if (cov[a][b] - cov[b][a]).abs() > 1e-12 * scale {
                    return Err(invalid("covariance", "matrix is not symmetric"));
                }
            }
        }
        Ok(CovModel { assets, cov })
    }

    /// Sample covariance (divisor T − 1) of the return columns.
    pub fn estimate(rm: &ReturnMatrix) -> Result<Self> {
        let t = rm.n_periods();
        if t < 2 {
            return Err(invalid("returns", "need at least two periods"));
        }
        let m = rm.assets.len();
        let cols: Vec<Vec<f64>> = (0..m).map(|a| rm.column(a)).collect();
        let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
        let mut cov = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..=a {
                let s: f64 = cols[a]
                    .iter()
                    .zip(&cols[b])
                    .map(|(x, y)| (x - means[a]) * (y - means[b]))
                    .sum();
                cov[a][b] = s / (t - 1) as f64;
                cov[b][a] = cov[a][b];
            }
        }
        CovModel::new(rm.assets.clone(), cov)
    }

    /// Σ_ab = ρ_ab·s_a·s_b from volatilities and a correlation matrix.
    pub fn from_vols_and_correlation(assets: Vec<String>, vols: &[f64], corr: &[Vec<f64>]) -> Result<Self> {
        if vols.len() != assets.len() {
            return Err(Error::DimensionMismatch {
                what: "volatilities",
                expected: assets.len(),
                actual: vols.len(),
            });
        }
        if vols.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("volatilities", "must be >= 0"));
        }
        if corr.len() != vols.len() || corr.iter().any(|r| r.len() != vols.len()) {
            return Err(Error::DimensionMismatch {
                what: "correlation",
                expected: vols.len(),
                actual: corr.len(),
            });
        }
        if corr.iter().flatten().any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(invalid("correlation", "entries must lie in [-1, 1]"));
        }
        let cov = (0..vols.len())
            .map(|a| {
                (0..vols.len())
                    .map(|b| if a == b { vols[a] * vols[a] } else { corr[a][b] * vols[a] * vols[b] })
                    .collect()
            })
            .collect();
        CovModel::new(assets, cov)
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.cov[a][b]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.cov
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.len()).map(|a| self.cov[a][a]).collect()
    }

    pub fn index_of(&self, asset: &str) -> Result<usize> {
        self.assets
            .iter()
            .position(|a| a == asset)
            .ok_or_else(|| Error::UnknownAsset(asset.to_string()))
    }

    /// Correlations implied by the covariances. Pairs involving a
    /// zero-variance asset are NaN and the asset is listed as undefined.
    pub fn correlation(&self) -> CorrelationMatrix {
        let m = self.len();
        let sd: Vec<f64> = self.variances().iter().map(|v| v.sqrt()).collect();
        let values = (0..m)
            .map(|a| {
                (0..m)
                    .map(|b| {
                        if sd[a] == 0.0 || sd[b] == 0.0 {
                            f64::NAN
                        } else if a == b {
                            1.0
                        } else {
                            (self.cov[a][b] / (sd[a] * sd[b])).clamp(-1.0, 1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let undefined = (0..m)
            .filter(|&a| sd[a] == 0.0)
            .map(|a| self.assets[a].clone())
            .collect();
        CorrelationMatrix {
            assets: self.assets.clone(),
            values,
            undefined,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlations with their asset labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub assets: Vec<String>,
    /// NaN where a zero-variance asset makes the entry undefined.
    pub values: Vec<Vec<f64>>,
    /// Assets whose returns have zero variance.
    pub undefined: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a][b]
    }

    /// Table layout: header `asset,<ids…>`, one row per asset, entries with
    /// four decimals and `NA` for undefined entries.
    pub fn to_csv(&self) -> String {
        format_matrix_csv(&self.assets, &self.values)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = matrix_json(&self.assets, &self.values);
        v["undefined"] = serde_json::json!(self.undefined);
        v
    }
}

/// Pearson correlation of log returns. Needs at least two return periods.
pub fn correlation_matrix(rm: &ReturnMatrix) -> Result<CorrelationMatrix> {
    Ok(CovModel::estimate(rm)?.correlation())
}

fn round4(x: f64) -> Option<f64> {
    x.is_finite().then(|| format!("{x:.4}").parse().expect("formatted float parses"))
}

/// Square matrix as CSV with four-decimal entries.
pub fn format_matrix_csv(assets: &[String], values: &[Vec<f64>]) -> String {
    let mut out = String::from("asset");
    for a in assets {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for (a, row) in assets.iter().zip(values) {
        out.push_str(a);
        for x in row {
            if x.is_finite() {
                let _ = write!(out, ",{x:.4}");
            } else {
                out.push_str(",NA");
            }
        }
        out.push('\n');
    }
    out
}

/// `{"assets": [...], "matrix": [[...]]}` with entries rounded to four
/// decimals and `null` for undefined entries.
pub fn matrix_json(assets: &[String], values: &[Vec<f64>]) -> serde_json::Value {
    let matrix: Vec<Vec<Option<f64>>> = values
        .iter()
        .map(|row| row.iter().map(|x| round4(*x)).collect())
        .collect();
    serde_json::json!({ "assets": assets, "matrix": matrix })
}

/// Var[Δ_j] = Σ_v ω_v²·Var[p] + Σ_{v≠v'} ω_v·ω_v'·Cov[p, p] for validators
/// whose stake in s_j is all denominated in the same asset, which is
/// (Σ ω)²·Var[p].
pub fn security_variance(column: &[f64], var_p: f64) -> Result<f64> {
    if !(var_p.is_finite() && var_p >= 0.0) {
        return Err(invalid("variance", "must be >= 0"));
    }
    let mut own = 0.0;
    let mut cross = 0.0;
    for (v, a) in column.iter().enumerate() {
        own += a * a * var_p;
        for (w, b) in column.iter().enumerate() {
            if v != w {
                cross += a * b * var_p;
            }
        }
    }
    Ok(own + cross)
}

/// wᵀΣw for per-SSP USD stakes `weights`.
pub fn portfolio_variance(weights: &[f64], cov: &CovModel) -> Result<f64> {
    if weights.len() != cov.len() {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: cov.len(),
            actual: weights.len(),
        });
    }
    let mut total = 0.0;
    for (a, wa) in weights.iter().enumerate() {
        for (b, wb) in weights.iter().enumerate() {
            total += wa * wb * cov.get(a, b);
        }
    }
    Ok(total)
}

/// Outcome of [`fsd_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FsdVerdict {
    /// Empirical CDF of a ≥ that of b at every point of the merged support.
    pub dominates: bool,
    /// θ·mean(b).
    pub bound: f64,
    /// θ·mean_t min(a_t, b_t); present when the samples are paired (equal
    /// length).
    pub paired_min_cost: Option<f64>,
    /// Whether `paired_min_cost ≤ bound`; present when `dominates` and the
    /// samples are paired.
    pub bound_holds: Option<bool>,
}

fn check_samples(what: &'static str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Empty(what));
    }
    if xs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(invalid(what, "samples must be finite and >= 0"));
    }
    Ok(())
}

/// Weak first-order stochastic dominance of security samples `a` by `b`
/// (a ≼ b: a is the riskier, lower level), and the attack-cost cap θ·E[b].
///
/// CDF values are compared as exact count ratios, without tolerance.
pub fn fsd_check(a: &[f64], b: &[f64], theta: f64) -> Result<FsdVerdict> {
    check_samples("samples_a", a)?;
    check_samples("samples_b", b)?;
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as u128, sb.len() as u128);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut dominates = true;
    while ia < sa.len() || ib < sb.len() {
        let x = match (sa.get(ia), sb.get(ib)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while ia < sa.len() && sa[ia] <= x {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] <= x {
            ib += 1;
        }
        // F_a(x) ≥ F_b(x) ⇔ #a≤x · n_b ≥ #b≤x · n_a
        if (ia as u128) * nb < (ib as u128) * na {
            dominates = false;
            break;
        }
    }
    let bound = theta * mean(b);
    let paired_min_cost = (a.len() == b.len()).then(|| {
        let mins: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.min(*y)).collect();
        theta * mean(&mins)
    });
    let bound_holds = paired_min_cost.filter(|_| dominates).map(|c| c <= bound);
    Ok(FsdVerdict {
        dominates,
        bound,
        paired_min_cost,
        bound_holds,
    })
}

/// θ·mean_t min_j x_t[j]: expected cost of attacking whichever SSP is
/// weakest in each sampled state.
pub fn expected_min_cost(states: &[Vec<f64>], theta: f64) -> Result<f64> {
    if states.is_empty() || states.iter().any(|s| s.is_empty()) {
        return Err(Error::Empty("security states"));
    }
    let mins: Vec<f64> = states
        .iter()
        .map(|s| s.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    Ok(theta * mean(&mins))
}

/// Scales one asset's volatility by `factor`: its variance by factor² and
/// its covariances by factor. Correlations are unchanged.
pub fn volatility_shock(cov: &CovModel, asset: &str, factor: f64) -> Result<CovModel> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(invalid("factor", "must be > 0"));
    }
    let a = cov.index_of(asset)?;
    let mut out = cov.clone();
    for b in 0..cov.len() {
        if b == a {
            out.cov[a][a] = cov.cov[a][a] * factor * factor;
        } else {
            out.cov[a][b] = cov.cov[a][b] * factor;
            out.cov[b][a] = cov.cov[b][a] * factor;
        }
    }
    Ok(out)
}

/// Lower Cholesky factor of a positive definite covariance.
pub fn cholesky_factor(cov: &CovModel) -> Result<Vec<Vec<f64>>> {
    let m = cov.len();
    let mat = DMatrix::from_fn(m, m, |a, b| cov.get(a, b));
    let chol = mat
        .cholesky()
        .ok_or_else(|| invalid("covariance", "not positive definite"))?;
    let l = chol.l();
    Ok((0..m).map(|a| (0..m).map(|b| l[(a, b)]).collect()).collect())
}

/// Zero-mean Gaussian returns with covariance `cov`, `periods` rows.
pub fn correlated_normal_returns<R: Rng + ?Sized>(
    cov: &CovModel,
    periods: usize,
    rng: &mut R,
) -> Result<ReturnMatrix> {
    let l = cholesky_factor(cov)?;
    let m = cov.len();
    let lmat = DMatrix::from_fn(m, m, |a, b| l[a][b]);
    let returns = (0..periods)
        .map(|_| {
            let z = DVector::from_fn(m, |_, _| standard_normal(rng));
            (&lmat * z).iter().copied().collect()
        })
        .collect();
    ReturnMatrix::from_returns(cov.assets().to_vec(), returns)
}
