//! Price ingestion and log-return alignment.
//!
//! Input is CSV with the header `date,asset,close`, one row per asset-day,
//! ISO-8601 dates and positive decimal closes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};

/// Daily closes of one asset, in ascending date order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSeries {
    pub asset: String,
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(asset: impl Into<String>, dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        let asset = asset.into();
        if dates.len() != prices.len() {
            return Err(Error::DimensionMismatch {
                what: "price series",
                expected: dates.len(),
                actual: prices.len(),
            });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(crate::error::invalid("price series", "dates must be strictly increasing"));
        }
        if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(crate::error::invalid("price series", "prices must be > 0"));
        }
        Ok(PriceSeries {
            asset,
            dates,
            prices,
        })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

fn price_error(line: u64, reason: impl Into<String>) -> Error {
    Error::PriceData {
        line,
        reason: reason.into(),
    }
}

/// Parses `date,asset,close` CSV into one series per asset, sorted by asset
/// id. Malformed rows, nonpositive prices and duplicate (date, asset) pairs
/// are rejected with the offending line number.
pub fn parse_prices<R: Read>(reader: R) -> Result<Vec<PriceSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| price_error(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["date", "asset", "close"] {
        return Err(price_error(1, "expected header `date,asset,close`"));
    }
    let mut by_asset: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            price_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| price_error(line, format!("bad date '{}': {e}", &record[0])))?;
        let asset = record[1].to_string();
        if asset.is_empty() {
            return Err(price_error(line, "empty asset id"));
        }
        let close: f64 = record[2]
            .parse()
            .map_err(|_| price_error(line, format!("bad close '{}'", &record[2])))?;
        if !(close.is_finite() && close > 0.0) {
            return Err(price_error(line, format!("price {close} must be > 0")));
        }
        if by_asset
            .entry(asset.clone())
            .or_default()
            .insert(date, close)
            .is_some()
        {
            return Err(price_error(line, format!("duplicate row for {asset} on {date}")));
        }
    }
    Ok(by_asset
        .into_iter()
        .map(|(asset, rows)| {
            let (dates, prices) = rows.into_iter().unzip();
            PriceSeries {
                asset,
                dates,
                prices,
            }
        })
        .collect())
}

pub fn ingest_prices(path: &Path) -> Result<Vec<PriceSeries>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_prices(file)
}

/// r_t = ln(p_t / p_{t−1}).
pub fn log_returns(series: &PriceSeries) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(crate::error::invalid("price series", "need at least two prices"));
    }
    Ok(series.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Log returns of several assets on their common dates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnMatrix {
    pub assets: Vec<String>,
    /// End date of each return period.
    pub dates: Vec<NaiveDate>,
    /// T×m, one row per period.
    pub returns: Vec<Vec<f64>>,
}

impl ReturnMatrix {
    /// Aligns the series on the dates every asset has (inner join) and takes
    /// log returns between consecutive common dates. With `window = Some(w)`
    /// only the last `w` returns are kept.
    pub fn from_series(series: &[PriceSeries], window: Option<usize>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Empty("price series"));
        }
        let mut common: BTreeSet<NaiveDate> = series[0].dates.iter().copied().collect();
        for s in &series[1..] {
            let dates: BTreeSet<NaiveDate> = s.dates.iter().copied().collect();
            common = common.intersection(&dates).copied().collect();
        }
        let mut dates: Vec<NaiveDate> = common.into_iter().collect();
        if let Some(w) = window {
            let keep = w + 1;
            if dates.len() > keep {
                dates.drain(..dates.len() - keep);
            }
        }
        if dates.len() < 2 {
            return Err(crate::error::invalid(
                "price series",
                "fewer than two dates shared by every asset",
            ));
        }
        let aligned: Vec<Vec<f64>> = series
            .iter()
            .map(|s| {
                let lookup: BTreeMap<NaiveDate, f64> =
                    s.dates.iter().copied().zip(s.prices.iter().copied()).collect();
                dates.iter().map(|d| lookup[d]).collect()
            })
            .collect();
        let returns = (1..dates.len())
            .map(|t| aligned.iter().map(|p| (p[t] / p[t - 1]).ln()).collect())
            .collect();
        Ok(ReturnMatrix {
            assets: series.iter().map(|s| s.asset.clone()).collect(),
            dates: dates[1..].to_vec(),
            returns,
        })
    }

    /// Builds a matrix directly from return rows.
    pub fn from_returns(assets: Vec<String>, returns: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = returns.iter().find(|r| r.len() != assets.len()) {
            return Err(Error::DimensionMismatch {
                what: "return row",
                expected: assets.len(),
                actual: bad.len(),
            });
        }
        Ok(ReturnMatrix {
            assets,
            dates: Vec::new(),
            returns,
        })
    }

    pub fn n_periods(&self) -> usize {
        self.returns.len()
    }

    pub fn column(&self, a: usize) -> Vec<f64> {
        self.returns.iter().map(|r| r[a]).collect()
    }
}
