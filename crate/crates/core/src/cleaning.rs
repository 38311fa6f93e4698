//! Quality control of observed generation series and alignment of simulated
//! and observed sets before aggregation.
//!
//! Rules never delete steps. Each series keeps its full time axis and a
//! per-step mask that records why a step was removed, so the removal report
//! is always derived from the mask itself.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{format_instant, parse_instant, Instant, TimeAxis, TimeRange};

pub const CONSTANT_RUN_HOURS: f64 = 24.0;
pub const ZERO_RUN_HOURS: f64 = 180.0;
pub const MIN_YEARS: f64 = 2.0;
pub const HOURS_PER_YEAR: f64 = 8760.0;
pub const ROUND_DECIMALS: i32 = 3;
/// Longest gap in sub-hourly data that is filled by interpolation.
pub const MAX_INTERPOLATED_GAP_SECONDS: i64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaskReason {
    Missing,
    Excluded,
    EdgeZeros,
    ConstantRun,
    ZeroRun,
    CfAboveOne,
    ZeroCapacity,
    Alignment,
}

impl MaskReason {
    pub const ALL: [MaskReason; 8] = [
        MaskReason::Missing,
        MaskReason::Excluded,
        MaskReason::EdgeZeros,
        MaskReason::ConstantRun,
        MaskReason::ZeroRun,
        MaskReason::CfAboveOne,
        MaskReason::ZeroCapacity,
        MaskReason::Alignment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskReason::Missing => "missing",
            MaskReason::Excluded => "excluded",
            MaskReason::EdgeZeros => "edge_zeros",
            MaskReason::ConstantRun => "constant_run",
            MaskReason::ZeroRun => "zero_run",
            MaskReason::CfAboveOne => "cf_above_one",
            MaskReason::ZeroCapacity => "zero_capacity",
            MaskReason::Alignment => "alignment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for MaskReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Observed (or simulated) series on a regular axis with a per-step mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub id: String,
    pub time: TimeAxis,
    /// Raw values; missing steps hold NaN.
    pub values: Vec<f64>,
    pub mask: Vec<Option<MaskReason>>,
}

impl ObservedSeries {
    /// Non-finite values are marked missing.
    pub fn new(id: impl Into<String>, time: TimeAxis, values: Vec<f64>) -> Result<Self> {
        if values.len() != time.len {
            return Err(Error::Format(format!(
                "{} values for a {}-step axis",
                values.len(),
                time.len
            )));
        }
        let mask = values
            .iter()
            .map(|v| (!v.is_finite()).then_some(MaskReason::Missing))
            .collect();
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        Ok(Self {
            id: id.into(),
            time,
            values,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.mask[i].is_some()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| m.is_some()).count()
    }

    pub fn unmasked_count(&self) -> usize {
        self.len() - self.masked_count()
    }

    /// True once every step is masked.
    pub fn is_degenerate(&self) -> bool {
        self.mask.iter().all(Option::is_some)
    }

    /// Unmasked value at `i`.
    pub fn value(&self, i: usize) -> Option<f64> {
        self.mask[i].is_none().then(|| self.values[i])
    }

    pub fn bool_mask(&self) -> Vec<bool> {
        self.mask.iter().map(Option::is_some).collect()
    }

    fn mask_step(&mut self, i: usize, reason: MaskReason) -> bool {
        if self.mask[i].is_none() {
            self.mask[i] = Some(reason);
            true
        } else {
            false
        }
    }

    /// Masked steps per rule.
    pub fn removal_log(&self) -> BTreeMap<MaskReason, usize> {
        let mut log = BTreeMap::new();
        for r in self.mask.iter().flatten() {
            *log.entry(*r).or_insert(0) += 1;
        }
        log
    }

    /// Per rule: masked step count and contiguous index intervals.
    pub fn removal_report(&self) -> Vec<RemovalEntry> {
        let mut out: BTreeMap<MaskReason, RemovalEntry> = BTreeMap::new();
        let mut i = 0;
        while i < self.len() {
            let Some(r) = self.mask[i] else {
                i += 1;
                continue;
            };
            let mut j = i + 1;
            while j < self.len() && self.mask[j] == Some(r) {
                j += 1;
            }
            let e = out.entry(r).or_insert_with(|| RemovalEntry {
                rule: r,
                steps_masked: 0,
                intervals: Vec::new(),
            });
            e.steps_masked += j - i;
            e.intervals.push((self.time.at(i), self.time.at(j - 1)));
            i = j;
        }
        out.into_values().collect()
    }

    pub fn has_rule(&self, reason: MaskReason) -> bool {
        self.mask.contains(&Some(reason))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalEntry {
    pub rule: MaskReason,
    pub steps_masked: usize,
    /// Inclusive first and last instant of each masked stretch.
    pub intervals: Vec<(Instant, Instant)>,
}

pub fn write_removal_report(series: &ObservedSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rule", "steps_masked", "intervals"])?;
    for e in series.removal_report() {
        let intervals = e
            .intervals
            .iter()
            .map(|(a, b)| format!("{}/{}", format_instant(*a), format_instant(*b)))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([e.rule.as_str().to_owned(), e.steps_masked.to_string(), intervals])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn steps_for_hours(time: &TimeAxis, hours: f64) -> usize {
    (hours * 3600.0 / time.step_seconds as f64).round() as usize
}

fn rounded_key(v: f64) -> i64 {
    (v * 10f64.powi(ROUND_DECIMALS)).round() as i64
}

/// Masks the maximal all-zero prefix and suffix. Computed on raw values, with
/// missing steps transparent, so repeated application masks nothing new.
/// Returns true when the series holds no nonzero value at all.
pub fn trim_edge_zeros(series: &mut ObservedSeries) -> bool {
    let nonzero = |v: f64| v.is_finite() && v != 0.0;
    let first = series.values.iter().position(|&v| nonzero(v));
    let Some(first) = first else {
        for i in 0..series.len() {
            series.mask_step(i, MaskReason::EdgeZeros);
        }
        return true;
    };
    let last = series
        .values
        .iter()
        .rposition(|&v| nonzero(v))
        .expect("a nonzero value exists");
    for i in (0..first).chain(last + 1..series.len()) {
        series.mask_step(i, MaskReason::EdgeZeros);
    }
    false
}

/// Masks runs of equal keys strictly longer than `max_len` steps. Runs only
/// span consecutive unmasked steps.
fn mask_runs(
    series: &mut ObservedSeries,
    max_len: usize,
    reason: MaskReason,
    key: impl Fn(f64) -> Option<i64>,
) -> usize {
    let n = series.len();
    let mut masked = 0;
    let mut i = 0;
    while i < n {
        let Some(k) = series.value(i).and_then(&key) else {
            i += 1;
            continue;
        };
        let mut j = i + 1;
        while j < n && series.value(j).and_then(&key) == Some(k) {
            j += 1;
        }
        if j - i > max_len {
            for m in i..j {
                masked += usize::from(series.mask_step(m, reason));
            }
        }
        i = j;
    }
    masked
}

/// Masks runs of one nonzero value (after rounding to three decimals) longer
/// than `max_hours`.
pub fn remove_constant_runs(series: &mut ObservedSeries, max_hours: f64) -> usize {
    let max_len = steps_for_hours(&series.time, max_hours);
    mask_runs(series, max_len, MaskReason::ConstantRun, |v| {
        let k = rounded_key(v);
        (k != 0).then_some(k)
    })
}

/// Masks zero runs longer than `max_hours`.
pub fn remove_zero_runs(series: &mut ObservedSeries, max_hours: f64) -> usize {
    let max_len = steps_for_hours(&series.time, max_hours);
    mask_runs(series, max_len, MaskReason::ZeroRun, |v| {
        (rounded_key(v) == 0).then_some(0)
    })
}

/// Masks steps whose value exceeds installed capacity. Nonzero output
/// against zero capacity is logged under its own reason.
pub fn remove_cf_above_one(series: &mut ObservedSeries, capacity: &[f64]) -> Result<usize> {
    if capacity.len() != series.len() {
        return Err(Error::Alignment(format!(
            "capacity timeline has {} steps, series `{}` has {}",
            capacity.len(),
            series.id,
            series.len()
        )));
    }
    let mut masked = 0;
    for (i, &cap) in capacity.iter().enumerate() {
        let Some(v) = series.value(i) else { continue };
        let reason = if cap == 0.0 && v != 0.0 {
            Some(MaskReason::ZeroCapacity)
        } else if v > cap {
            Some(MaskReason::CfAboveOne)
        } else {
            None
        };
        if let Some(r) = reason {
            masked += usize::from(series.mask_step(i, r));
        }
    }
    Ok(masked)
}

/// Keep iff at least `min_years` of unmasked steps remain, counted anywhere
/// in the series.
pub fn enforce_min_length(series: &ObservedSeries, min_years: f64) -> bool {
    let needed = steps_for_hours(&series.time, min_years * HOURS_PER_YEAR);
    series.unmasked_count() >= needed
}

/// Linearly fills interior gaps of missing steps spanning at most
/// `max_gap_seconds`. Longer gaps and gaps at either end stay masked.
pub fn interpolate_short_gaps(series: &ObservedSeries, max_gap_seconds: i64) -> ObservedSeries {
    let max_steps = (max_gap_seconds / series.time.step_seconds).max(0) as usize;
    let mut out = series.clone();
    let n = series.len();
    let mut i = 0;
    while i < n {
        if series.mask[i] != Some(MaskReason::Missing) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < n && series.mask[j] == Some(MaskReason::Missing) {
            j += 1;
        }
        let gap = j - i;
        if i > 0 && j < n && gap <= max_steps && !series.is_masked(i - 1) && !series.is_masked(j) {
            let (a, b) = (series.values[i - 1], series.values[j]);
            for k in i..j {
                let w = (k - i + 1) as f64 / (gap + 1) as f64;
                out.values[k] = a + (b - a) * w;
                out.mask[k] = None;
            }
        }
        i = j;
    }
    out
}

/// Averages sub-hourly steps into hourly buckets starting at the first whole
/// hour at or after the series start. An hour with no unmasked step is
/// missing.
pub fn resample_hourly(series: &ObservedSeries) -> Result<ObservedSeries> {
    let step = series.time.step_seconds;
    if step > 3600 || 3600 % step != 0 {
        return Err(Error::Format(format!("cannot resample a {step} s series to hourly")));
    }
    let per_hour = (3600 / step) as usize;
    let start_ts = series.time.start.timestamp();
    let offset = if start_ts.rem_euclid(3600) != 0 {
        ((3600 - start_ts.rem_euclid(3600)) / step) as usize
    } else {
        0
    };
    let hours = series.len().saturating_sub(offset) / per_hour;
    let mut values = Vec::with_capacity(hours);
    for h in 0..hours {
        let base = offset + h * per_hour;
        let (sum, count) = (base..base + per_hour)
            .filter_map(|i| series.value(i))
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        values.push(if count == 0 { f64::NAN } else { sum / count as f64 });
    }
    let start = series.time.at(offset);
    ObservedSeries::new(series.id.clone(), TimeAxis::hourly(start, hours), values)
}

/// Region-level exclusion; `range = None` excludes the whole series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub region: String,
    pub range: Option<TimeRange>,
}

/// Exclusion CSV: `region,start,end`, with empty start and end for a full exclusion.
pub fn load_exclusions(path: &Path) -> Result<Vec<Exclusion>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| rec.get(k).map(str::trim).unwrap_or("");
        let region = field(0);
        if region.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty region".into(),
            });
        }
        let range = match (field(1), field(2)) {
            ("", "") => None,
            (a, b) => {
                let start = if a.is_empty() {
                    TimeRange::unbounded().start
                } else {
                    parse_instant(a)?
                };
                let end = if b.is_empty() {
                    TimeRange::unbounded().end
                } else {
                    parse_instant(b)?
                };
                Some(TimeRange::new(start, end)?)
            }
        };
        out.push(Exclusion {
            region: region.to_owned(),
            range,
        });
    }
    Ok(out)
}

pub fn apply_exclusions(series: &mut ObservedSeries, regions: &[&str], exclusions: &[Exclusion]) -> usize {
    let mut masked = 0;
    for ex in exclusions.iter().filter(|e| regions.contains(&e.region.as_str())) {
        for i in 0..series.len() {
            if ex.range.is_none_or(|r| r.contains(series.time.at(i))) {
                masked += usize::from(series.mask_step(i, MaskReason::Excluded));
            }
        }
    }
    masked
}

/// Cleaning thresholds in hours and years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub constant_run_hours: f64,
    pub zero_run_hours: f64,
    pub min_years: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            constant_run_hours: CONSTANT_RUN_HOURS,
            zero_run_hours: ZERO_RUN_HOURS,
            min_years: MIN_YEARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningOutcome {
    pub series: ObservedSeries,
    pub kept: bool,
    /// Steps newly masked by each rule, in application order.
    pub newly_masked: Vec<(MaskReason, usize)>,
}

impl CleaningOutcome {
    pub fn total_newly_masked(&self) -> usize {
        self.newly_masked.iter().map(|(_, n)| n).sum()
    }

    pub fn hit(&self, reason: MaskReason) -> bool {
        self.series.has_rule(reason)
    }
}

/// Edge zeros, constant runs, zero runs, capacity filter, then minimum length.
pub fn clean_series(mut series: ObservedSeries, capacity: &[f64], cfg: &CleaningConfig) -> Result<CleaningOutcome> {
    let before = series.masked_count();
    trim_edge_zeros(&mut series);
    let edge = series.masked_count() - before;
    let constant = remove_constant_runs(&mut series, cfg.constant_run_hours);
    let zero = remove_zero_runs(&mut series, cfg.zero_run_hours);
    let cf = remove_cf_above_one(&mut series, capacity)?;
    let kept = enforce_min_length(&series, cfg.min_years);
    Ok(CleaningOutcome {
        series,
        kept,
        newly_masked: vec![
            (MaskReason::EdgeZeros, edge),
            (MaskReason::ConstantRun, constant),
            (MaskReason::ZeroRun, zero),
            (MaskReason::CfAboveOne, cf),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttritionRow {
    pub step: String,
    pub applies_to: Option<usize>,
    pub remaining: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttritionReport {
    pub rows: Vec<AttritionRow>,
}

impl AttritionReport {
    pub fn push(&mut self, step: impl Into<String>, applies_to: Option<usize>, remaining: usize) {
        self.rows.push(AttritionRow {
            step: step.into(),
            applies_to,
            remaining,
        });
    }

    pub fn remaining(&self) -> Option<usize> {
        self.rows.last().map(|r| r.remaining)
    }

    pub fn row(&self, step: &str) -> Option<&AttritionRow> {
        self.rows.iter().find(|r| r.step == step)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "applies_to", "remaining"])?;
        for r in &self.rows {
            w.write_record([
                r.step.clone(),
                r.applies_to.map(|n| n.to_string()).unwrap_or_default(),
                r.remaining.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Appends the cleaning rows: one per rule with the number of series it
/// touched, then the minimum-length cut.
pub fn attrition(report: &mut AttritionReport, outcomes: &[CleaningOutcome]) {
    let n = outcomes.len();
    for (step, reason) in [
        ("edge_zeros", MaskReason::EdgeZeros),
        ("constant_run", MaskReason::ConstantRun),
        ("zero_run", MaskReason::ZeroRun),
        ("cf_above_one", MaskReason::CfAboveOne),
    ] {
        let hits = outcomes.iter().filter(|o| o.hit(reason)).count();
        report.push(step, Some(hits), n);
    }
    let dropped = outcomes.iter().filter(|o| !o.kept).count();
    report.push("min_length", Some(dropped), n - dropped);
}

/// Propagates masks within one aggregation group: a step masked in any
/// observed member is masked in every simulated and observed member.
/// Returns true if the group has no unmasked step left.
pub fn align_and_mask(sim: &mut [ObservedSeries], obs: &mut [ObservedSeries]) -> Result<bool> {
    let Some(axis) = obs.first().or(sim.first()).map(|s| s.time) else {
        return Err(Error::Alignment("empty aggregation group".into()));
    };
    for s in sim.iter().chain(obs.iter()) {
        if s.time != axis {
            let disjoint = match (axis.end(), s.time.end()) {
                (Some(a_end), Some(b_end)) => a_end < s.time.start || b_end < axis.start,
                _ => true,
            };
            let what = if disjoint { "disjoint" } else { "different" };
            return Err(Error::Alignment(format!("series `{}` has a {what} time axis", s.id)));
        }
    }
    let union: Vec<bool> = (0..axis.len).map(|i| obs.iter().any(|s| s.is_masked(i))).collect();
    for s in sim.iter_mut().chain(obs.iter_mut()) {
        for (i, &m) in union.iter().enumerate() {
            if m {
                s.mask_step(i, MaskReason::Alignment);
            }
        }
    }
    let empty = union.iter().all(|&m| m);
    if empty {
        log::warn!("aggregation group is empty after alignment");
    }
    Ok(empty)
}

/// Observed CSV: `timestamp,value` with an optional `capacity_kw` and an
/// optional `mask` column. Rows may be absent; the axis spans first to last
/// timestamp at the smallest spacing present.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedFile {
    pub series: ObservedSeries,
    pub capacity_kw: Option<Vec<f64>>,
}

pub fn read_observed_csv(path: &Path, id: &str) -> Result<ObservedFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_observed_csv(&text, id).map_err(|e| match e {
        Error::Row { line, message } => Error::Format(format!("{}:{line}: {message}", path.display())),
        other => other,
    })
}

pub fn parse_observed_csv(text: &str, id: &str) -> Result<ObservedFile> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let t_col = col("timestamp").ok_or_else(|| Error::Format("missing `timestamp` column".into()))?;
    let v_col = col("value").ok_or_else(|| Error::Format("missing `value` column".into()))?;
    let c_col = col("capacity_kw");
    let m_col = col("mask");
    let mut rows: Vec<(Instant, f64, f64, Option<MaskReason>, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |k: usize| -> Result<f64> {
            let s = rec.get(k).unwrap_or("").trim();
            if s.is_empty() || s.eq_ignore_ascii_case("nan") {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| Error::Row {
                    line,
                    message: format!("invalid number `{s}`"),
                })
            }
        };
        let t = parse_instant(rec.get(t_col).unwrap_or("")).map_err(|e| Error::Row {
            line,
            message: e.to_string(),
        })?;
        let v = num(v_col)?;
        let c = c_col.map(num).transpose()?.unwrap_or(f64::NAN);
        let m = match m_col.and_then(|k| rec.get(k)).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(MaskReason::parse(s).ok_or_else(|| Error::Row {
                line,
                message: format!("unknown mask `{s}`"),
            })?),
        };
        rows.push((t, v, c, m, line));
    }
    if rows.is_empty() {
        return Err(Error::EmptySelection(format!("observed series `{id}` has no rows")));
    }
    rows.sort_by_key(|r| r.0);
    let step = rows
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).num_seconds())
        .min()
        .unwrap_or(3600);
    if step <= 0 {
        let dup = rows.windows(2).find(|w| w[0].0 == w[1].0).expect("duplicate exists");
        return Err(Error::Row {
            line: dup[1].4,
            message: format!("duplicate timestamp {}", format_instant(dup[1].0)),
        });
    }
    let start = rows[0].0;
    let len = ((rows.last().expect("non-empty").0 - start).num_seconds() / step) as usize + 1;
    let time = TimeAxis::new(start, chrono::Duration::seconds(step), len)?;
    let mut values = vec![f64::NAN; len];
    let mut caps = vec![f64::NAN; len];
    let mut masks = vec![None; len];
    for (t, v, c, m, line) in rows {
        let i = time.index_of(t).ok_or_else(|| Error::Row {
            line,
            message: format!("timestamp {} is off the {step} s grid", format_instant(t)),
        })?;
        values[i] = v;
        caps[i] = c;
        masks[i] = m;
    }
    let mut series = ObservedSeries::new(id, time, values)?;
    for (i, m) in masks.into_iter().enumerate() {
        if let Some(m) = m {
            series.mask[i] = Some(m);
        }
    }
    let capacity_kw = c_col.map(|_| caps);
    Ok(ObservedFile { series, capacity_kw })
}

/// Cleaned output keeps the original values next to the mask reason.
pub fn write_cleaned_csv(series: &ObservedSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "value", "mask"])?;
    for i in 0..series.len() {
        let v = series.values[i];
        w.write_record([
            format_instant(series.time.at(i)),
            if v.is_finite() { v.to_string() } else { String::new() },
            series.mask[i].map(|m| m.as_str().to_owned()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
