//! Production-vs-displacement correlation.
//!
//! Monthly well production is aggregated onto the interferometric epoch
//! intervals by day-overlap proration, then compared against the per-interval
//! displacement *rate* (mm/yr) with a lagged Pearson correlation. A positive
//! lag means the displacement response trails production by that many
//! intervals.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::network::temporal_baseline;
use crate::sim::YEAR_DAYS;

/// One month of production for one well.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionRecord {
    pub well_id: String,
    pub year: i32,
    pub month: u32,
    pub barrels: f64,
}

impl ProductionRecord {
    /// First day of the record's month.
    pub fn month_start(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("validated on construction")
    }

    /// First day of the following month (exclusive end).
    pub fn month_end(&self) -> NaiveDate {
        let (y, m) = if self.month == 12 {
            (self.year + 1, 1)
        } else {
            (self.year, self.month + 1)
        };
        NaiveDate::from_ymd_opt(y, m, 1).expect("validated on construction")
    }
}

/// Pearson correlation at one lag.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub well_id: String,
    /// Shift in interferometric intervals applied to the displacement rate
    /// relative to production; positive = displacement lags production.
    pub lag: i32,
    pub r: f64,
    pub n: usize,
}

/// Sum of production over `[start, end)`, prorating partial months by day
/// overlap. Months with no overlap contribute nothing; an interval disjoint
/// from all records yields 0.
pub fn aggregate_production(
    records: &[ProductionRecord],
    start: NaiveDate,
    end: NaiveDate,
) -> Result<f64> {
    if start > end {
        return Err(Error::Invalid(format!(
            "reversed aggregation interval: {start} > {end}"
        )));
    }
    let mut total = 0.0;
    for rec in records {
        let m0 = rec.month_start();
        let m1 = rec.month_end();
        let lo = start.max(m0);
        let hi = end.min(m1);
        if lo < hi {
            let overlap = temporal_baseline(lo, hi) as f64;
            let month_days = temporal_baseline(m0, m1) as f64;
            total += rec.barrels * overlap / month_days;
        }
    }
    Ok(total)
}

/// Sample Pearson correlation coefficient. Errors on mismatched lengths,
/// fewer than two samples, non-finite values, or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Invalid(format!(
            "correlation needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("correlation input contains non-finite values".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let da = a - mx;
        let db = b - my;
        cov += da * db;
        vx += da * da;
        vy += db * db;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Invalid("zero variance in correlation input".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Per-interval displacement rate (mm/yr) from an epoch displacement series.
pub fn displacement_rate(displacement_mm: &[f64], epochs: &[NaiveDate]) -> Result<Vec<f64>> {
    if displacement_mm.len() != epochs.len() || epochs.len() < 2 {
        return Err(Error::Invalid(format!(
            "need one displacement per epoch (>= 2), got {} values for {} epochs",
            displacement_mm.len(),
            epochs.len()
        )));
    }
    let mut rate = Vec::with_capacity(epochs.len() - 1);
    for k in 0..epochs.len() - 1 {
        let dt = temporal_baseline(epochs[k], epochs[k + 1]) as f64 / YEAR_DAYS;
        if dt <= 0.0 {
            return Err(Error::Invalid("epochs must be strictly increasing".into()));
        }
        rate.push((displacement_mm[k + 1] - displacement_mm[k]) / dt);
    }
    Ok(rate)
}

/// Lagged cross-correlation of two interval-aligned series. At lag `l`,
/// production sample `i` is paired with rate sample `i + l`. Lags whose
/// overlap drops below 2 samples, or where a truncated series becomes
/// constant (zero variance), are omitted from the report.
pub fn lagged_correlation(
    well_id: &str,
    production: &[f64],
    rate: &[f64],
    max_lag: i32,
) -> Result<Vec<CorrelationReport>> {
    if production.len() != rate.len() {
        return Err(Error::Invalid(format!(
            "production ({}) and rate ({}) series must align to the same intervals",
            production.len(),
            rate.len()
        )));
    }
    if max_lag < 0 {
        return Err(Error::Invalid(format!("max_lag must be >= 0, got {max_lag}")));
    }
    let n = production.len() as i32;
    let mut out = Vec::new();
    for lag in -max_lag..=max_lag {
        let overlap = n - lag.abs();
        if overlap < 2 {
            continue;
        }
        let (p_slice, r_slice): (&[f64], &[f64]) = if lag >= 0 {
            (
                &production[..(n - lag) as usize],
                &rate[lag as usize..],
            )
        } else {
            (
                &production[(-lag) as usize..],
                &rate[..(n + lag) as usize],
            )
        };
        match pearson(p_slice, r_slice) {
            Ok(r) => out.push(CorrelationReport {
                well_id: well_id.to_string(),
                lag,
                r,
                n: overlap as usize,
            }),
            Err(_) => continue, // zero-variance truncation: omit this lag
        }
    }
    Ok(out)
}

/// Entry with the largest |r|; ties go to the smallest |lag|.
pub fn best_lag(reports: &[CorrelationReport]) -> Option<&CorrelationReport> {
    reports.iter().min_by(|a, b| {
        b.r.abs()
            .partial_cmp(&a.r.abs())
            .unwrap()
            .then(a.lag.abs().cmp(&b.lag.abs()))
    })
}

/// Read a production CSV (`well_id,month,barrels`, month `YYYY-MM`).
/// Rejects negative barrels and duplicate (well, month) entries.
pub fn load_production(path: &Path) -> Result<Vec<ProductionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.into(),
            line: lineno + 1,
            msg,
        };
        if lineno == 0 {
            if line != "well_id,month,barrels" {
                return Err(err(format!(
                    "expected header \"well_id,month,barrels\", got {line:?}"
                )));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", fields.len())));
        }
        let well_id = fields[0].trim().to_string();
        let month_field = fields[1].trim();
        let (y, m) = month_field
            .split_once('-')
            .ok_or_else(|| err(format!("invalid month {month_field:?}, expected YYYY-MM")))?;
        let year: i32 = y
            .parse()
            .map_err(|e| err(format!("invalid year in {month_field:?}: {e}")))?;
        let month: u32 = m
            .parse()
            .map_err(|e| err(format!("invalid month in {month_field:?}: {e}")))?;
        if !(1..=12).contains(&month) || NaiveDate::from_ymd_opt(year, month, 1).is_none() {
            return Err(err(format!("month {month_field:?} out of range")));
        }
        let barrels: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| err(format!("invalid barrels {:?}: {e}", fields[2])))?;
        if !(barrels >= 0.0) {
            return Err(err(format!("barrels must be non-negative, got {barrels}")));
        }
        if !seen.insert((well_id.clone(), year, month)) {
            return Err(err(format!("duplicate record for well {well_id} {month_field}")));
        }
        out.push(ProductionRecord {
            well_id,
            year,
            month,
            barrels,
        });
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "production table contains no rows".into(),
        });
    }
    Ok(out)
}

/// Distinct well ids in first-appearance order.
pub fn well_ids(records: &[ProductionRecord]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in records {
        if !out.contains(&r.well_id) {
            out.push(r.well_id.clone());
        }
    }
    out
}
