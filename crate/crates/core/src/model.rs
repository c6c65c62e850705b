//! Core primitives: validator stakes, the validator-to-SSP allocation table,
//! economic parameters, attack plans and the honest/adversarial utilities
//! built on top of them.
//!
//! Stake is USD-denominated throughout. Token-denominated allocations are
//! converted with [`AllocationMatrix::to_usd`] before any analysis.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative tolerance used for row-sum conservation (membership in the
/// feasible allocation set).
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Total stake held by each validator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StakeTable(Vec<f64>);

impl StakeTable {
    pub fn new(stakes: Vec<f64>) -> Result<Self> {
        if stakes.is_empty() {
            return Err(Error::Empty("stake table"));
        }
        if let Some((i, s)) = stakes
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s > 0.0))
        {
            return Err(invalid("stake", format!("validator {i} has stake {s}, must be > 0")));
        }
        Ok(StakeTable(stakes))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Δ computed from the stake table.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for StakeTable {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        StakeTable::new(v)
    }
}

impl From<StakeTable> for Vec<f64> {
    fn from(s: StakeTable) -> Self {
        s.0
    }
}

/// Dense row-major n×k table of stake amounts.
#[derive(Debug, Clone, PartialEq)]
struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    fn from_rows(what: &'static str, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty(what));
        }
        let k = rows[0].len();
        if k == 0 {
            return Err(Error::Empty(what));
        }
        let mut data = Vec::with_capacity(n * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: k,
                    actual: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(invalid(what, "entries must be finite"));
            }
            data.extend(row);
        }
        Ok(Grid {
            rows: n,
            cols: k,
            data,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn column_sum(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self.get(i, j)).sum()
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

/// The allocation table ω(v_i, s_j): stake validator `i` commits to SSP `j`.
///
/// Construction only checks shape and finiteness; use [`validate_allocation`]
/// to test membership in the feasible set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct AllocationMatrix(Grid);

impl TryFrom<Vec<Vec<f64>>> for AllocationMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        AllocationMatrix::from_rows(rows)
    }
}

impl From<AllocationMatrix> for Vec<Vec<f64>> {
    fn from(m: AllocationMatrix) -> Self {
        m.to_rows()
    }
}

impl AllocationMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Grid::from_rows("allocation matrix", rows).map(AllocationMatrix)
    }

    pub fn n_validators(&self) -> usize {
        self.0.rows
    }

    pub fn n_ssps(&self) -> usize {
        self.0.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.0.data.chunks(self.0.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.0.rows).map(|i| self.0.get(i, j)).collect()
    }

    /// Per-SSP stake Δ_j for every column.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.0.cols).map(|j| self.0.column_sum(j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.0.cols;
        self.0.data[i * k + j] = value;
    }

    /// Converts token-denominated stake into USD by scaling column `j` by p_j.
    pub fn to_usd(&self, prices: &PriceVector) -> Result<AllocationMatrix> {
        if prices.len() != self.n_ssps() {
            return Err(Error::DimensionMismatch {
                what: "price vector",
                expected: self.n_ssps(),
                actual: prices.len(),
            });
        }
        let rows = self
            .rows()
            .map(|row| row.iter().zip(prices.as_slice()).map(|(w, p)| w * p).collect())
            .collect();
        AllocationMatrix::from_rows(rows)
    }
}

/// Per-SSP USD price of the restaked asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::Empty("price vector"));
        }
        if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid("price", "all prices must be > 0"));
        }
        Ok(PriceVector(prices))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for PriceVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PriceVector::new(v)
    }
}

impl From<PriceVector> for Vec<f64> {
    fn from(p: PriceVector) -> Self {
        p.0
    }
}

/// Parameters governing one analysis.
///
/// `reward` is the total reward R. When absent it is derived as `rate · Δ`
/// by [`EconomicParams::resolved`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    /// Profit from a successful attack (π).
    pub pi: f64,
    /// Attack threshold fraction (θ).
    pub theta: f64,
    /// Reward rate per period (r).
    pub rate: f64,
    /// Total reward (R).
    pub reward: Option<f64>,
}

impl EconomicParams {
    pub fn new(pi: f64, theta: f64, rate: f64) -> Result<Self> {
        let params = EconomicParams {
            pi,
            theta,
            rate,
            reward: None,
        };
        params.check()?;
        Ok(params)
    }

    /// Parameters where the total reward is given and the rate follows from
    /// r = R / Δ.
    pub fn from_total_reward(pi: f64, theta: f64, reward: f64, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(invalid("total stake", "must be > 0"));
        }
        if !(reward.is_finite() && reward >= 0.0) {
            return Err(invalid("reward", "must be >= 0"));
        }
        let params = EconomicParams {
            pi,
            theta,
            rate: reward / delta,
            reward: Some(reward),
        };
        params.check()?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        if !(self.pi.is_finite() && self.pi >= 0.0) {
            return Err(invalid("pi", format!("{} must be >= 0", self.pi)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid("theta", format!("{} must lie in (0, 1)", self.theta)));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(invalid("rate", format!("{} must be >= 0", self.rate)));
        }
        if let Some(r) = self.reward {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid("reward", format!("{r} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Sets R explicitly; consistency with `rate` is checked by
    /// [`EconomicParams::resolved`].
    pub fn with_reward(mut self, reward: f64) -> Result<Self> {
        self.reward = Some(reward);
        self.check()?;
        Ok(self)
    }

    /// Fills in R = r·Δ, or checks |R − r·Δ| ≤ 1e-9·max(1, R) when R was given.
    pub fn resolved(mut self, delta: f64) -> Result<Self> {
        let derived = self.rate * delta;
        match self.reward {
            None => self.reward = Some(derived),
            Some(r) => {
                if (r - derived).abs() > 1e-9 * r.max(1.0) {
                    return Err(invalid(
                        "reward",
                        format!("R = {r} disagrees with r·Δ = {derived}"),
                    ));
                }
            }
        }
        Ok(self)
    }

    pub fn total_reward(&self) -> Result<f64> {
        self.reward.ok_or(Error::MissingReward)
    }
}

/// The attack table α(v_i, s_j): stake each validator commits to an attack
/// through each SSP.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan(Grid);

impl AttackPlan {
    /// Builds a plan checking only shape and nonnegativity. Rows may exceed
    /// the validator's total stake; [`attack_cost`] caps them.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let grid = Grid::from_rows("attack plan", rows)?;
        if grid.data.iter().any(|a| *a < 0.0) {
            return Err(invalid("attack plan", "entries must be >= 0"));
        }
        Ok(AttackPlan(grid))
    }

    /// Builds a plan and checks 0 ≤ α ≤ ω elementwise.
    pub fn bounded_by(rows: Vec<Vec<f64>>, omega: &AllocationMatrix) -> Result<Self> {
        let plan = AttackPlan::from_rows(rows)?;
        plan.check_against(omega)?;
        Ok(plan)
    }

    pub fn check_against(&self, omega: &AllocationMatrix) -> Result<()> {
        if self.0.rows != omega.n_validators() {
            return Err(Error::DimensionMismatch {
                what: "attack plan rows",
                expected: omega.n_validators(),
                actual: self.0.rows,
            });
        }
        if self.0.cols != omega.n_ssps() {
            return Err(Error::DimensionMismatch {
                what: "attack plan columns",
                expected: omega.n_ssps(),
                actual: self.0.cols,
            });
        }
        for i in 0..self.0.rows {
            for j in 0..self.0.cols {
                if self.0.get(i, j) > omega.get(i, j) {
                    return Err(invalid(
                        "attack plan",
                        format!("α({i},{j}) exceeds its allocation"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The cheapest plan that reaches the capture threshold for `model`:
    /// α = θ·ω on the attacked columns, zero elsewhere. For the isolated model
    /// the weakest column is attacked.
    pub fn minimal_capture(omega: &AllocationMatrix, theta: f64, model: ModelKind) -> Result<Self> {
        let sums = omega.column_sums();
        let target: Option<usize> = match model {
            ModelKind::Shared => None,
            ModelKind::SingleSsp(j0) => {
                check_index("SSP", j0, omega.n_ssps())?;
                Some(j0)
            }
            ModelKind::Isolated => Some(argmin(&sums)),
        };
        let rows = omega
            .rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, w)| match target {
                        Some(t) if t != j => 0.0,
                        _ => theta * w,
                    })
                    .collect()
            })
            .collect();
        AttackPlan::from_rows(rows)
    }

    pub fn n_validators(&self) -> usize {
        self.0.rows
    }

    pub fn n_ssps(&self) -> usize {
        self.0.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.0.column_sum(j)
    }

    /// ΣΣα.
    pub fn committed(&self) -> f64 {
        (0..self.0.cols).map(|j| self.0.column_sum(j)).sum()
    }
}

/// Which multi-SSP architecture an analysis targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// One independent consensus pool per SSP.
    Isolated,
    /// A single validator set securing every SSP.
    Shared,
    /// A single designated SSP pool (baseline).
    SingleSsp(usize),
}

impl ModelKind {
    /// Single-SSP baseline on the column with the most stake.
    pub fn single_ssp_default(omega: &AllocationMatrix) -> ModelKind {
        ModelKind::SingleSsp(argmax(&omega.column_sums()))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Isolated => "isolated",
            ModelKind::Shared => "shared",
            ModelKind::SingleSsp(_) => "single",
        }
    }
}

/// First index of the smallest value.
pub(crate) fn argmin(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

/// First index of the largest value.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        Err(Error::IndexOutOfRange { what, index, len })
    } else {
        Ok(())
    }
}

/// One way an allocation leaves the feasible set.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Negative { row: usize, col: usize, value: f64 },
    RowSum { row: usize, expected: f64, actual: f64 },
}

impl Violation {
    /// σ(v_i) − Σ_j ω(v_i, s_j) for row-sum violations; positive is a deficit.
    pub fn deficit(&self) -> Option<f64> {
        match self {
            Violation::RowSum {
                expected, actual, ..
            } => Some(expected - actual),
            Violation::Negative { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_feasible() {
            return write!(f, "feasible");
        }
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                write!(f, "; ")?;
            }
            match v {
                Violation::Negative { row, col, value } => {
                    write!(f, "row {row} column {col}: negative entry {value}")?
                }
                Violation::RowSum {
                    row,
                    expected,
                    actual,
                } => {
                    let d = expected - actual;
                    if d > 0.0 {
                        write!(f, "row {row}: deficit {d} (sum {actual}, stake {expected})")?
                    } else {
                        write!(f, "row {row}: excess {} (sum {actual}, stake {expected})", -d)?
                    }
                }
            }
        }
        Ok(())
    }
}

/// Checks ω against the feasible set: nonnegative entries and rows summing
/// to σ(v_i) within [`FEASIBILITY_TOL`] relative.
pub fn validate_allocation(omega: &AllocationMatrix, stakes: &StakeTable) -> Result<FeasibilityReport> {
    if omega.n_validators() != stakes.len() {
        return Err(Error::DimensionMismatch {
            what: "validators",
            expected: stakes.len(),
            actual: omega.n_validators(),
        });
    }
    let mut violations = Vec::new();
    for (i, row) in omega.rows().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w < 0.0 {
                violations.push(Violation::Negative {
                    row: i,
                    col: j,
                    value: w,
                });
            }
        }
        let sigma = stakes.get(i);
        let sum: f64 = row.iter().sum();
        if (sum - sigma).abs() > FEASIBILITY_TOL * sigma {
            violations.push(Violation::RowSum {
                row: i,
                expected: sigma,
                actual: sum,
            });
        }
    }
    Ok(FeasibilityReport { violations })
}

/// Δ, computed as the sum of the per-SSP stakes so that Δ ≥ Δ_j holds
/// exactly in floating point.
pub fn total_stake(omega: &AllocationMatrix) -> f64 {
    omega.column_sums().iter().sum()
}

/// Δ_j = Σ_i ω(v_i, s_j).
pub fn ssp_stake(omega: &AllocationMatrix, j: usize) -> Result<f64> {
    check_index("SSP", j, omega.n_ssps())?;
    Ok(omega.0.column_sum(j))
}

/// u(v_i) = r·σ(v_i), the honest reward under proportional distribution.
/// It does not depend on the allocation.
pub fn honest_utility(i: usize, stakes: &StakeTable, params: &EconomicParams) -> f64 {
    params.rate * stakes.get(i)
}

/// Per-validator honest rewards computed through the per-SSP chain:
/// R_j = (Δ_j/Δ)·R, then validator `i` receives ω(v_i,s_j)/Δ_j of R_j.
/// Columns with zero stake pay nothing.
pub fn proportional_reward_chain(omega: &AllocationMatrix, reward: f64) -> Vec<f64> {
    let sums = omega.column_sums();
    let delta: f64 = sums.iter().sum();
    let pools: Vec<f64> = sums.iter().map(|d| d / delta * reward).collect();
    omega
        .rows()
        .map(|row| {
            row.iter()
                .zip(sums.iter().zip(&pools))
                .filter(|(_, (d, _))| **d > 0.0)
                .map(|(w, (d, pool))| w / d * pool)
                .sum()
        })
        .collect()
}

/// c(v, α) = min(σ(v), Σ_s α(v, s)).
pub fn attack_cost(i: usize, alpha: &AttackPlan, stakes: &StakeTable) -> f64 {
    let committed: f64 = alpha.row(i).iter().sum();
    stakes.get(i).min(committed)
}

/// C(α) = Σ_v c(v, α).
pub fn total_attack_cost(alpha: &AttackPlan, stakes: &StakeTable) -> f64 {
    (0..alpha.n_validators())
        .map(|i| attack_cost(i, alpha, stakes))
        .sum()
}

/// γ(v, α) = c(v, α)/C(α). Undefined (an error) when C(α) = 0.
pub fn attack_share(i: usize, alpha: &AttackPlan, stakes: &StakeTable) -> Result<f64> {
    let total = total_attack_cost(alpha, stakes);
    if total <= 0.0 {
        return Err(Error::UndefinedShare);
    }
    Ok(attack_cost(i, alpha, stakes) / total)
}

/// u_v(α) = γ(v, α)·π − c(v, α).
pub fn attack_utility(
    i: usize,
    alpha: &AttackPlan,
    stakes: &StakeTable,
    params: &EconomicParams,
) -> Result<f64> {
    let share = attack_share(i, alpha, stakes)?;
    Ok(share * params.pi - attack_cost(i, alpha, stakes))
}

/// Outcome of [`attack_profitable`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfitabilityVerdict {
    /// Whether Σ_v α(v,s)/Σ_v ω(v,s) ≥ θ, per SSP. `None` for zero-stake
    /// columns where the ratio is undefined.
    pub capture_per_ssp: Vec<Option<bool>>,
    /// Capture under the requested model: any pool for the isolated model,
    /// the aggregate for the shared model, the designated pool otherwise.
    pub model_captured: bool,
    /// ΣΣα.
    pub committed: f64,
    /// θ·Δ < ΣΣα < π.
    pub globally_profitable: bool,
}

impl ProfitabilityVerdict {
    pub fn undefined_columns(&self) -> Vec<usize> {
        self.capture_per_ssp
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.is_none().then_some(j))
            .collect()
    }
}

pub fn attack_profitable(
    alpha: &AttackPlan,
    omega: &AllocationMatrix,
    params: &EconomicParams,
    model: ModelKind,
) -> Result<ProfitabilityVerdict> {
    alpha.check_against(omega)?;
    let sums = omega.column_sums();
    let capture_per_ssp: Vec<Option<bool>> = sums
        .iter()
        .enumerate()
        .map(|(j, &d)| (d > 0.0).then(|| alpha.column_sum(j) / d >= params.theta))
        .collect();
    let committed = alpha.committed();
    let delta: f64 = sums.iter().sum();
    let model_captured = match model {
        ModelKind::Isolated => capture_per_ssp.contains(&Some(true)),
        ModelKind::Shared => delta > 0.0 && committed / delta >= params.theta,
        ModelKind::SingleSsp(j0) => {
            check_index("SSP", j0, omega.n_ssps())?;
            capture_per_ssp[j0] == Some(true)
        }
    };
    let globally_profitable = params.theta * delta < committed && committed < params.pi;
    Ok(ProfitabilityVerdict {
        capture_per_ssp,
        model_captured,
        committed,
        globally_profitable,
    })
}

/// ω(v_i, s_j) = σ(v_i)/k.
pub fn uniform_allocation(stakes: &StakeTable, k: usize) -> Result<AllocationMatrix> {
    if k == 0 {
        return Err(invalid("k", "need at least one SSP"));
    }
    let rows = stakes
        .as_slice()
        .iter()
        .map(|s| vec![s / k as f64; k])
        .collect();
    AllocationMatrix::from_rows(rows)
}
