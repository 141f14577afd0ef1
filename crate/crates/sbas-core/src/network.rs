//! Small-baseline network selection.
//!
//! Each acquisition carries a perpendicular baseline relative to a common
//! reference orbit, so a pair's baseline is the difference of the two epoch
//! values. Pairs are admitted when both the perpendicular and temporal
//! separations stay below the decorrelation thresholds (plus an optional
//! Doppler-centroid gate), which typically yields a multi-master network
//! that single-master stacking would not.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// One SAR acquisition. `bperp_m` is the perpendicular baseline of this
/// epoch's orbit relative to the shared reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub date: NaiveDate,
    pub orbit: i64,
    pub bperp_m: f64,
    pub doppler_hz: Option<f64>,
}

/// One interferometric pair; indices point into a date-sorted epoch list and
/// `master_idx < slave_idx` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpec {
    pub master_idx: usize,
    pub slave_idx: usize,
    pub bperp_m: f64,
    pub btemp_days: i64,
}

/// Pair admission thresholds; all limits must be positive when present.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkThresholds {
    pub max_bperp_m: f64,
    pub max_btemp_days: f64,
    pub max_doppler_hz: Option<f64>,
}

impl Default for NetworkThresholds {
    fn default() -> Self {
        NetworkThresholds {
            max_bperp_m: 400.0,
            max_btemp_days: 750.0,
            max_doppler_hz: None,
        }
    }
}

impl NetworkThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_bperp_m > 0.0) {
            return Err(Error::Invalid(format!(
                "max_bperp_m must be positive, got {}",
                self.max_bperp_m
            )));
        }
        if !(self.max_btemp_days > 0.0) {
            return Err(Error::Invalid(format!(
                "max_btemp_days must be positive, got {}",
                self.max_btemp_days
            )));
        }
        if let Some(d) = self.max_doppler_hz {
            if !(d > 0.0) {
                return Err(Error::Invalid(format!(
                    "max_doppler_hz must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Signed day count from `early` to `late` (negative when reversed).
pub fn temporal_baseline(early: NaiveDate, late: NaiveDate) -> i64 {
    (late - early).num_days()
}

/// Parse a compact `YYYYMMDD` date.
pub fn parse_compact_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y%m%d")
        .map_err(|e| Error::Invalid(format!("invalid date {s:?}: {e}")))
}

/// Compact `YYYYMMDD` rendering used in file names and CSVs.
pub fn compact_date(d: NaiveDate) -> String {
    d.format("%Y%m%d").to_string()
}

/// Enumerate all admissible pairs. Acquisitions are sorted by date first, so
/// the returned indices refer to the sorted copy that is handed back, and the
/// result is independent of input order. Duplicate dates are rejected.
pub fn build_network(
    acquisitions: &[Acquisition],
    thresholds: &NetworkThresholds,
) -> Result<(Vec<Acquisition>, Vec<PairSpec>)> {
    thresholds.validate()?;
    if acquisitions.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 acquisitions to form pairs, got {}",
            acquisitions.len()
        )));
    }
    let mut acqs = acquisitions.to_vec();
    acqs.sort_by_key(|a| a.date);
    for w in acqs.windows(2) {
        if w[0].date == w[1].date {
            return Err(Error::Invalid(format!(
                "duplicate acquisition date {}",
                compact_date(w[0].date)
            )));
        }
    }

    let mut pairs = Vec::new();
    for i in 0..acqs.len() {
        for j in i + 1..acqs.len() {
            let btemp = temporal_baseline(acqs[i].date, acqs[j].date);
            if btemp as f64 > thresholds.max_btemp_days {
                break; // later j only grow the gap
            }
            let bperp = acqs[j].bperp_m - acqs[i].bperp_m;
            if bperp.abs() > thresholds.max_bperp_m {
                continue;
            }
            if let (Some(limit), Some(fi), Some(fj)) =
                (thresholds.max_doppler_hz, acqs[i].doppler_hz, acqs[j].doppler_hz)
            {
                if (fj - fi).abs() > limit {
                    continue;
                }
            }
            pairs.push(PairSpec {
                master_idx: i,
                slave_idx: j,
                bperp_m: bperp,
                btemp_days: btemp,
            });
        }
    }
    Ok((acqs, pairs))
}

/// Connected-component labelling of the epoch graph induced by the pairs.
/// Labels are assigned in epoch order, so component 0 always contains the
/// earliest epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub labels: Vec<usize>,
    pub count: usize,
}

pub fn connected_components(n_epochs: usize, pairs: &[PairSpec]) -> Result<Components> {
    if n_epochs == 0 {
        return Err(Error::Invalid("component labelling needs at least one epoch".into()));
    }
    let mut parent: Vec<usize> = (0..n_epochs).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in pairs {
        if p.master_idx >= n_epochs || p.slave_idx >= n_epochs {
            return Err(Error::Invalid(format!(
                "pair ({}, {}) references epochs outside 0..{n_epochs}",
                p.master_idx, p.slave_idx
            )));
        }
        let (a, b) = (find(&mut parent, p.master_idx), find(&mut parent, p.slave_idx));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut labels = vec![usize::MAX; n_epochs];
    let mut count = 0;
    for i in 0..n_epochs {
        let root = find(&mut parent, i);
        if labels[root] == usize::MAX {
            labels[root] = count;
            count += 1;
        }
        labels[i] = labels[root];
    }
    Ok(Components { labels, count })
}

/// Human-readable component membership for diagnostics, e.g.
/// `component 0: 20030926..20040806 (6 epochs)`.
pub fn describe_components(epochs: &[NaiveDate], components: &Components) -> String {
    let mut out = String::new();
    for c in 0..components.count {
        let members: Vec<NaiveDate> = epochs
            .iter()
            .zip(&components.labels)
            .filter(|(_, &l)| l == c)
            .map(|(d, _)| *d)
            .collect();
        if c > 0 {
            out.push_str("; ");
        }
        let _ = write!(
            out,
            "component {c}: {}..{} ({} epochs)",
            compact_date(members[0]),
            compact_date(*members.last().unwrap()),
            members.len()
        );
    }
    out
}

/// Least-squares per-epoch baselines from per-pair values (first epoch fixed
/// at zero). Used to place epochs on the baseline axis of network plots when
/// only a pair list is available; with an inconsistent pair list this is the
/// minimum-residual embedding, not an exact inverse.
pub fn estimate_epoch_baselines(n_epochs: usize, pairs: &[PairSpec]) -> Result<Vec<f64>> {
    if n_epochs == 0 {
        return Err(Error::Invalid("baseline estimate needs at least one epoch".into()));
    }
    if pairs.is_empty() {
        return Ok(vec![0.0; n_epochs]);
    }
    let comps = connected_components(n_epochs, pairs)?;
    let mut a = nalgebra::DMatrix::<f64>::zeros(pairs.len(), n_epochs.saturating_sub(1));
    let mut rhs = nalgebra::DVector::<f64>::zeros(pairs.len());
    for (r, p) in pairs.iter().enumerate() {
        if p.master_idx > 0 {
            a[(r, p.master_idx - 1)] = -1.0;
        }
        if p.slave_idx > 0 {
            a[(r, p.slave_idx - 1)] = 1.0;
        }
        rhs[r] = p.bperp_m;
    }
    let svd = a.svd(true, true);
    let eps = 1e-10 * svd.singular_values.max();
    let sol = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::Invalid(format!("baseline least squares failed: {e}")))?;
    let mut b = Vec::with_capacity(n_epochs);
    b.push(0.0);
    b.extend(sol.iter().copied());
    // Minimum-norm SVD zeros epochs in components detached from epoch 0;
    // that is already the natural plot placement, so keep it, but re-anchor
    // each component on its own first epoch for stability.
    for c in 0..comps.count {
        if let Some(first) = (0..n_epochs).find(|&i| comps.labels[i] == c) {
            let anchor = b[first];
            for i in 0..n_epochs {
                if comps.labels[i] == c {
                    b[i] -= anchor;
                }
            }
        }
    }
    Ok(b)
}

/// Read a pair list CSV (`master,slave,bperp_m`, compact dates). Returns the
/// sorted unique epoch dates and the pairs indexed against them, sorted by
/// (master, slave). Reversed or duplicate pairs are rejected.
pub fn load_pairs(path: &Path) -> Result<(Vec<NaiveDate>, Vec<PairSpec>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(NaiveDate, NaiveDate, f64)> = Vec::new();
    let mut dates = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 {
            if line != "master,slave,bperp_m" {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    msg: format!("expected header \"master,slave,bperp_m\", got {line:?}"),
                });
            }
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.into(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", fields.len())));
        }
        let master = parse_compact_date(fields[0]).map_err(|e| err(e.to_string()))?;
        let slave = parse_compact_date(fields[1]).map_err(|e| err(e.to_string()))?;
        let bperp: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| err(format!("invalid bperp_m {:?}: {e}", fields[2])))?;
        if master >= slave {
            return Err(err(format!(
                "master {} must precede slave {}",
                compact_date(master),
                compact_date(slave)
            )));
        }
        dates.insert(master);
        dates.insert(slave);
        rows.push((master, slave, bperp));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "pair list contains no pairs".into(),
        });
    }
    let epochs: Vec<NaiveDate> = dates.into_iter().collect();
    let idx_of = |d: NaiveDate| epochs.binary_search(&d).unwrap();
    let mut pairs: Vec<PairSpec> = rows
        .into_iter()
        .map(|(m, s, b)| PairSpec {
            master_idx: idx_of(m),
            slave_idx: idx_of(s),
            bperp_m: b,
            btemp_days: temporal_baseline(m, s),
        })
        .collect();
    pairs.sort_by_key(|p| (p.master_idx, p.slave_idx));
    for w in pairs.windows(2) {
        if w[0].master_idx == w[1].master_idx && w[0].slave_idx == w[1].slave_idx {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!(
                    "duplicate pair {} -> {}",
                    compact_date(epochs[w[0].master_idx]),
                    compact_date(epochs[w[0].slave_idx])
                ),
            });
        }
    }
    Ok((epochs, pairs))
}

/// Render a pair list as CSV text in the canonical (master, slave) order;
/// inverse of [`load_pairs`] for well-formed lists.
pub fn pairs_to_csv(epochs: &[NaiveDate], pairs: &[PairSpec]) -> Result<String> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by_key(|p| (p.master_idx, p.slave_idx));
    let mut out = String::from("master,slave,bperp_m\n");
    for p in &sorted {
        if p.master_idx >= epochs.len() || p.slave_idx >= epochs.len() {
            return Err(Error::Invalid(format!(
                "pair ({}, {}) references epochs outside 0..{}",
                p.master_idx,
                p.slave_idx,
                epochs.len()
            )));
        }
        let _ = writeln!(
            out,
            "{},{},{}",
            compact_date(epochs[p.master_idx]),
            compact_date(epochs[p.slave_idx]),
            p.bperp_m
        );
    }
    Ok(out)
}

pub fn save_pairs(path: &Path, epochs: &[NaiveDate], pairs: &[PairSpec]) -> Result<()> {
    let out = pairs_to_csv(epochs, pairs)?;
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read an acquisition table CSV (`date,orbit,bperp_m[,doppler_hz]`).
pub fn load_acquisitions(path: &Path) -> Result<Vec<Acquisition>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut acqs = Vec::new();
    let mut with_doppler = false;
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
            with_doppler = match line {
                "date,orbit,bperp_m" => false,
                "date,orbit,bperp_m,doppler_hz" => true,
                other => {
                    return Err(err(format!(
                        "expected header \"date,orbit,bperp_m[,doppler_hz]\", got {other:?}"
                    )))
                }
            };
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if with_doppler { 4 } else { 3 };
        if fields.len() != expected {
            return Err(err(format!("expected {expected} fields, got {}", fields.len())));
        }
        let date = parse_compact_date(fields[0]).map_err(|e| err(e.to_string()))?;
        let orbit: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|e| err(format!("invalid orbit {:?}: {e}", fields[1])))?;
        let bperp_m: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| err(format!("invalid bperp_m {:?}: {e}", fields[2])))?;
        let doppler_hz = if with_doppler {
            Some(fields[3].trim().parse::<f64>().map_err(|e| {
                err(format!("invalid doppler_hz {:?}: {e}", fields[3]))
            })?)
        } else {
            None
        };
        acqs.push(Acquisition {
            date,
            orbit,
            bperp_m,
            doppler_hz,
        });
    }
    if acqs.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "acquisition table contains no rows".into(),
        });
    }
    Ok(acqs)
}
