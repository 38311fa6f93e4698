//! Turbine and wind park registry: loading, attribute imputation, specific
//! power repair, and name matching against observed-generation sources.
//!
//! Fleet CSV (schema `windval-fleet/1`):
//!
//! ```text
//! # schema: windval-fleet/1
//! id,name,lat,lon,capacity_kw,hub_height_m,rotor_diameter_m,commissioning,commissioning_precision,state,country
//! BR-001,Praia Formosa,-3.02,-39.8,104400,80,82,2009-08-26,day,CE,BR
//! ```
//!
//! Empty cells (or `NA`) mark missing values. `commissioning` is written as
//! `YYYY-MM-DD`, `YYYY-MM` or `YYYY` to match its precision.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::power::specific_power;
use crate::reanalysis::LatLon;

pub const FLEET_SCHEMA: &str = "windval-fleet/1";
pub const FLEET_HEADER: [&str; 11] = [
    "id",
    "name",
    "lat",
    "lon",
    "capacity_kw",
    "hub_height_m",
    "rotor_diameter_m",
    "commissioning",
    "commissioning_precision",
    "state",
    "country",
];

/// Lower bound on specific power, W/m², below which power curves are unrealistic.
pub const SPECIFIC_POWER_FLOOR: f64 = 100.0;

/// Relative capacity tolerance for "similar capacity" peers.
pub const SIMILAR_CAPACITY_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatePrecision {
    Day,
    Month,
    Year,
}

impl DatePrecision {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" => Some(Self::Day),
            "month" => Some(Self::Month),
            "year" => Some(Self::Year),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Day => "day",
            Self::Month => "month",
            Self::Year => "year",
        }
    }
}

/// Commissioning date with the precision it is known to.
///
/// Month precision is pinned to the 15th; year precision to January 1st
/// (the capacity ramp spans the whole year).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commissioning {
    pub date: NaiveDate,
    pub precision: DatePrecision,
}

impl Commissioning {
    pub fn day(date: NaiveDate) -> Self {
        Self {
            date,
            precision: DatePrecision::Day,
        }
    }

    pub fn month(year: i32, month: u32) -> Option<Self> {
        Some(Self {
            date: NaiveDate::from_ymd_opt(year, month, 15)?,
            precision: DatePrecision::Month,
        })
    }

    pub fn year(year: i32) -> Option<Self> {
        Some(Self {
            date: NaiveDate::from_ymd_opt(year, 1, 1)?,
            precision: DatePrecision::Year,
        })
    }

    pub fn parse(value: &str, precision: &str) -> Option<Self> {
        let value = value.trim();
        let precision = DatePrecision::parse(precision)?;
        let mut parts = value.split('-');
        let year: i32 = parts.next()?.parse().ok()?;
        match precision {
            DatePrecision::Year => Self::year(year),
            DatePrecision::Month => Self::month(year, parts.next()?.parse().ok()?),
            DatePrecision::Day => NaiveDate::parse_from_str(value, "%Y-%m-%d").ok().map(Self::day),
        }
    }

    pub fn year_value(&self) -> i32 {
        self.date.year()
    }
}

impl fmt::Display for Commissioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.precision {
            DatePrecision::Day => write!(f, "{}", self.date.format("%Y-%m-%d")),
            DatePrecision::Month => write!(f, "{}", self.date.format("%Y-%m")),
            DatePrecision::Year => write!(f, "{}", self.date.year()),
        }
    }
}

/// One turbine or wind park. Optional attributes are `None` until imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetRecord {
    pub id: String,
    pub name: String,
    pub location: LatLon,
    pub capacity_kw: Option<f64>,
    pub hub_height_m: Option<f64>,
    pub rotor_diameter_m: Option<f64>,
    pub commissioning: Option<Commissioning>,
    pub state: String,
    pub country: String,
}

impl FleetRecord {
    pub fn specific_power(&self) -> Option<f64> {
        match (self.capacity_kw, self.rotor_diameter_m) {
            (Some(c), Some(d)) if c > 0.0 && d > 0.0 => Some(specific_power(c, d)),
            _ => None,
        }
    }

    /// Checks the post-repair invariants.
    pub fn check_invariants(&self, sp_floor: f64) -> Result<()> {
        let fail = |m: &str| Err(Error::Data(format!("record `{}`: {m}", self.id)));
        if !(self.location.lat.is_finite() && self.location.lon.is_finite()) {
            return fail("non-finite location");
        }
        if !self.capacity_kw.is_some_and(|c| c > 0.0) {
            return fail("capacity missing or not positive");
        }
        if !self.hub_height_m.is_some_and(|h| h > 0.0) {
            return fail("hub height missing or not positive");
        }
        if !self.rotor_diameter_m.is_some_and(|d| d > 0.0) {
            return fail("rotor diameter missing or not positive");
        }
        if self.commissioning.is_none() {
            return fail("commissioning date missing");
        }
        // small slack for the diameter round trip
        if self.specific_power().is_none_or(|sp| sp < sp_floor * (1.0 - 1e-12)) {
            return fail("specific power below floor");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetField {
    Capacity,
    HubHeight,
    RotorDiameter,
    Commissioning,
}

impl FleetField {
    pub const ALL: [FleetField; 4] = [
        FleetField::Capacity,
        FleetField::HubHeight,
        FleetField::RotorDiameter,
        FleetField::Commissioning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Capacity => "capacity",
            Self::HubHeight => "hub_height",
            Self::RotorDiameter => "rotor_diameter",
            Self::Commissioning => "commissioning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagAction {
    /// Value absent in the source.
    Missing,
    /// Value present but zero, to be replaced from similar-capacity peers.
    Zero,
    Imputed,
    SimilarCapacity,
    SameCapacitySpecificPower,
    GlobalSpecificPower,
    FloorSpecificPower,
}

impl FlagAction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Missing => "missing",
            Self::Zero => "zero",
            Self::Imputed => "imputed",
            Self::SimilarCapacity => "similar_capacity",
            Self::SameCapacitySpecificPower => "same_capacity_sp",
            Self::GlobalSpecificPower => "global_mean_sp",
            Self::FloorSpecificPower => "floor_sp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFlag {
    pub id: String,
    pub field: FleetField,
    pub action: FlagAction,
}

/// Missing-value flags and imputation bookkeeping for one fleet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub fleet_size: usize,
    pub missing: BTreeMap<FleetField, usize>,
    pub imputed: BTreeMap<FleetField, usize>,
    pub methods: BTreeMap<FleetField, String>,
    pub flags: Vec<RecordFlag>,
}

impl ImputationReport {
    fn flag(&mut self, id: &str, field: FleetField, action: FlagAction) {
        self.flags.push(RecordFlag {
            id: id.to_owned(),
            field,
            action,
        });
    }

    pub fn flags_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a RecordFlag> + 'a {
        self.flags.iter().filter(move |f| f.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.imputed.values().all(|&n| n == 0) && self.flags.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "field", "action"])?;
        for f in &self.flags {
            w.write_record([f.id.as_str(), f.field.as_str(), f.action.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn summary(&self) -> String {
        let mut s = format!("fleet size: {}\n", self.fleet_size);
        for field in FleetField::ALL {
            let missing = self.missing.get(&field).copied().unwrap_or(0);
            let imputed = self.imputed.get(&field).copied().unwrap_or(0);
            let method = self.methods.get(&field).map(String::as_str).unwrap_or("-");
            s.push_str(&format!(
                "{:<15} missing {:>6}  imputed {:>6}  method {}\n",
                field.as_str(),
                missing,
                imputed,
                method
            ));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

fn parse_optional(raw: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = raw.parse().map_err(|_| Error::Row {
        line,
        message: format!("invalid number `{raw}` in {column}"),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Row {
            line,
            message: format!("{column} must be finite and non-negative, got {raw}"),
        });
    }
    Ok(Some(v))
}

pub fn load_fleet(path: &Path) -> Result<(Vec<FleetRecord>, ImputationReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fleet(&text)
}

pub fn parse_fleet(text: &str) -> Result<(Vec<FleetRecord>, ImputationReport)> {
    let mut body = text;
    let mut header_offset = 0u64;
    if let Some(first) = text.lines().next() {
        if let Some(tag) = first.trim().strip_prefix('#') {
            let schema = tag.split_once(':').map(|(k, v)| (k.trim(), v.trim()));
            match schema {
                Some(("schema", FLEET_SCHEMA)) => {}
                _ => return Err(Error::Format(format!("unsupported fleet schema line `{first}`"))),
            }
            body = text[first.len()..].trim_start_matches(['\r', '\n']);
            header_offset = 1;
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 11];
    for (k, name) in FLEET_HEADER.iter().enumerate() {
        cols[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::MissingVariable((*name).into()))?;
    }

    let mut records = Vec::new();
    let mut report = ImputationReport::default();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0) + header_offset;
        let get = |k: usize| rec.get(cols[k]).unwrap_or("").trim();
        let id = get(0).to_owned();
        if id.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let coord = |k: usize, name: &str| -> Result<f64> {
            get(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Row {
                    line,
                    message: format!("invalid {name} `{}`", get(k)),
                })
        };
        let location = LatLon::new(coord(2, "lat")?, coord(3, "lon")?);
        let capacity_kw = parse_optional(get(4), line, "capacity_kw")?;
        if capacity_kw == Some(0.0) {
            return Err(Error::Row {
                line,
                message: "capacity_kw must be positive".into(),
            });
        }
        let hub_height_m = parse_optional(get(5), line, "hub_height_m")?;
        let rotor_diameter_m = parse_optional(get(6), line, "rotor_diameter_m")?;
        let commissioning = if get(7).is_empty() {
            None
        } else {
            Some(Commissioning::parse(get(7), get(8)).ok_or_else(|| Error::Row {
                line,
                message: format!("invalid commissioning `{}` with precision `{}`", get(7), get(8)),
            })?)
        };
        let record = FleetRecord {
            id,
            name: get(1).to_owned(),
            location,
            capacity_kw,
            hub_height_m,
            rotor_diameter_m,
            commissioning,
            state: get(9).to_owned(),
            country: get(10).to_owned(),
        };
        flag_missing(&record, &mut report);
        records.push(record);
    }
    report.fleet_size = records.len();
    Ok((records, report))
}

fn flag_missing(r: &FleetRecord, report: &mut ImputationReport) {
    let fields = [
        (FleetField::Capacity, r.capacity_kw),
        (FleetField::HubHeight, r.hub_height_m),
        (FleetField::RotorDiameter, r.rotor_diameter_m),
    ];
    for (field, value) in fields {
        match value {
            None => {
                *report.missing.entry(field).or_default() += 1;
                report.flag(&r.id, field, FlagAction::Missing);
            }
            Some(0.0) => report.flag(&r.id, field, FlagAction::Zero),
            Some(_) => {}
        }
    }
    if r.commissioning.is_none() {
        *report.missing.entry(FleetField::Commissioning).or_default() += 1;
        report.flag(&r.id, FleetField::Commissioning, FlagAction::Missing);
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_fleet(records: &[FleetRecord], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# schema: {FLEET_SCHEMA}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(FLEET_HEADER)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.name.clone(),
            r.location.lat.to_string(),
            r.location.lon.to_string(),
            fmt_opt(r.capacity_kw),
            fmt_opt(r.hub_height_m),
            fmt_opt(r.rotor_diameter_m),
            r.commissioning.map(|c| c.to_string()).unwrap_or_default(),
            r.commissioning
                .map(|c| c.precision.as_str().to_owned())
                .unwrap_or_default(),
            r.state.clone(),
            r.country.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn total_capacity_kw(records: &[FleetRecord]) -> f64 {
    records.iter().filter_map(|r| r.capacity_kw).sum()
}

// ---------------------------------------------------------------------------
// Repair and imputation
// ---------------------------------------------------------------------------

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Indices of peers with exactly the target capacity, else those at the
/// nearest capacity within [`SIMILAR_CAPACITY_TOLERANCE`].
fn similar_capacity_peers(target: f64, candidates: &[(usize, f64)]) -> Vec<usize> {
    let exact: Vec<usize> = candidates
        .iter()
        .filter(|(_, c)| *c == target)
        .map(|(i, _)| *i)
        .collect();
    if !exact.is_empty() {
        return exact;
    }
    let within: Vec<(usize, f64)> = candidates
        .iter()
        .filter(|(_, c)| (c - target).abs() <= SIMILAR_CAPACITY_TOLERANCE * target)
        .map(|&(i, c)| (i, (c - target).abs()))
        .collect();
    let Some(best) = within.iter().map(|(_, d)| *d).min_by(|a, b| a.total_cmp(b)) else {
        return Vec::new();
    };
    within.into_iter().filter(|(_, d)| *d == best).map(|(i, _)| i).collect()
}

/// Replaces zero hub heights and rotor diameters with the means of
/// similar-capacity records; zeros without peers become missing.
pub fn repair_zero_dimensions(records: &mut [FleetRecord], report: &mut ImputationReport) {
    let is_zero = |r: &FleetRecord| r.hub_height_m == Some(0.0) || r.rotor_diameter_m == Some(0.0);
    let donors: Vec<(usize, f64)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.hub_height_m.is_some_and(|h| h > 0.0) && r.rotor_diameter_m.is_some_and(|d| d > 0.0))
        .filter_map(|(i, r)| r.capacity_kw.map(|c| (i, c)))
        .collect();
    let targets: Vec<usize> = (0..records.len()).filter(|&i| is_zero(&records[i])).collect();
    for i in targets {
        let peers = records[i]
            .capacity_kw
            .map(|c| similar_capacity_peers(c, &donors))
            .unwrap_or_default();
        let hub = mean(peers.iter().filter_map(|&p| records[p].hub_height_m));
        let dia = mean(peers.iter().filter_map(|&p| records[p].rotor_diameter_m));
        let id = records[i].id.clone();
        let r = &mut records[i];
        if r.hub_height_m == Some(0.0) {
            r.hub_height_m = hub;
            let action = if hub.is_some() {
                FlagAction::SimilarCapacity
            } else {
                FlagAction::Missing
            };
            report.flag(&id, FleetField::HubHeight, action);
        }
        if r.rotor_diameter_m == Some(0.0) {
            r.rotor_diameter_m = dia;
            let action = if dia.is_some() {
                FlagAction::SimilarCapacity
            } else {
                FlagAction::Missing
            };
            report.flag(&id, FleetField::RotorDiameter, action);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputationPolicy {
    /// Impute capacity and hub height from same-commissioning-year means
    /// (falling back to the overall mean); otherwise use the overall mean only.
    pub yearly_means: bool,
}

impl Default for ImputationPolicy {
    fn default() -> Self {
        Self { yearly_means: true }
    }
}

/// Simple least-squares line `y = slope * x + intercept`.
fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = mean(points.iter().map(|p| p.0))?;
    let my = mean(points.iter().map(|p| p.1))?;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if n < 2.0 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fills missing commissioning years, capacities, hub heights and rotor diameters.
pub fn impute_missing(
    records: &[FleetRecord],
    policy: ImputationPolicy,
) -> Result<(Vec<FleetRecord>, ImputationReport)> {
    let mut out = records.to_vec();
    let mut report = ImputationReport {
        fleet_size: records.len(),
        ..Default::default()
    };

    // commissioning: overall mean year
    if out.iter().any(|r| r.commissioning.is_none()) {
        let mean_year = mean(
            records
                .iter()
                .filter_map(|r| r.commissioning.map(|c| c.year_value() as f64)),
        )
        .ok_or_else(|| Error::ImputationImpossible("commissioning".into()))?;
        let year = Commissioning::year(mean_year.round() as i32)
            .ok_or_else(|| Error::ImputationImpossible("commissioning".into()))?;
        for r in out.iter_mut().filter(|r| r.commissioning.is_none()) {
            r.commissioning = Some(year);
            report.flag(&r.id, FleetField::Commissioning, FlagAction::Imputed);
            *report.imputed.entry(FleetField::Commissioning).or_default() += 1;
        }
        report
            .methods
            .insert(FleetField::Commissioning, "overall mean year".into());
    }

    let year_of = |r: &FleetRecord| r.commissioning.map(|c| c.year_value());
    let field_value = |r: &FleetRecord, field: FleetField| match field {
        FleetField::Capacity => r.capacity_kw,
        _ => r.hub_height_m,
    };
    for field in [FleetField::Capacity, FleetField::HubHeight] {
        if out.iter().all(|r| field_value(r, field).is_some()) {
            continue;
        }
        // donors are the original, non-imputed values
        let donors: Vec<(Option<i32>, f64)> = records
            .iter()
            .zip(&out)
            .filter_map(|(orig, filled)| field_value(orig, field).map(|v| (year_of(filled), v)))
            .filter(|(_, v)| *v > 0.0)
            .collect();
        let overall =
            mean(donors.iter().map(|d| d.1)).ok_or_else(|| Error::ImputationImpossible(field.as_str().into()))?;
        let mut by_year: HashMap<i32, (f64, usize)> = HashMap::new();
        for (y, v) in donors.iter().filter_map(|(y, v)| y.map(|y| (y, *v))) {
            let e = by_year.entry(y).or_default();
            e.0 += v;
            e.1 += 1;
        }
        for r in out.iter_mut().filter(|r| field_value(r, field).is_none()) {
            let yearly = year_of(r).and_then(|y| by_year.get(&y)).map(|(s, n)| s / *n as f64);
            let value = if policy.yearly_means {
                yearly.unwrap_or(overall)
            } else {
                overall
            };
            match field {
                FleetField::Capacity => r.capacity_kw = Some(value),
                _ => r.hub_height_m = Some(value),
            }
            report.flag(&r.id, field, FlagAction::Imputed);
            *report.imputed.entry(field).or_default() += 1;
        }
        let method = if policy.yearly_means {
            "commissioning-year mean, overall mean fallback"
        } else {
            "overall mean"
        };
        report.methods.insert(field, method.into());
    }

    if out.iter().any(|r| r.rotor_diameter_m.is_none()) {
        let points: Vec<(f64, f64)> = records
            .iter()
            .filter_map(|r| match (r.hub_height_m, r.rotor_diameter_m) {
                (Some(h), Some(d)) if h > 0.0 && d > 0.0 => Some((h, d)),
                _ => None,
            })
            .collect();
        let mean_d =
            mean(points.iter().map(|p| p.1)).ok_or_else(|| Error::ImputationImpossible("rotor_diameter".into()))?;
        let line = fit_line(&points);
        for r in out.iter_mut().filter(|r| r.rotor_diameter_m.is_none()) {
            let hub = r.hub_height_m.expect("hub height imputed above");
            let d = line.map(|(a, b)| a * hub + b).filter(|d| *d > 0.0).unwrap_or(mean_d);
            r.rotor_diameter_m = Some(d);
            report.flag(&r.id, FleetField::RotorDiameter, FlagAction::Imputed);
            *report.imputed.entry(FleetField::RotorDiameter).or_default() += 1;
        }
        let method = if line.is_some() {
            "least-squares line on hub height"
        } else {
            "overall mean"
        };
        report.methods.insert(FleetField::RotorDiameter, method.into());
    }
    Ok((out, report))
}

fn diameter_for(capacity_kw: f64, sp: f64) -> f64 {
    2.0 * (1000.0 * capacity_kw / (std::f64::consts::PI * sp)).sqrt()
}

/// Raises records below `floor` W/m² to the mean specific power of
/// same-capacity records (global mean fallback) by recomputing the rotor diameter.
pub fn repair_specific_power(records: &[FleetRecord], floor: f64) -> (Vec<FleetRecord>, Vec<RecordFlag>) {
    let sps: Vec<Option<f64>> = records.iter().map(FleetRecord::specific_power).collect();
    let valid: Vec<(f64, f64)> = records
        .iter()
        .zip(&sps)
        .filter_map(|(r, sp)| sp.filter(|s| *s >= floor).map(|s| (r.capacity_kw.unwrap(), s)))
        .collect();
    let global = mean(valid.iter().map(|v| v.1));
    let mut out = records.to_vec();
    let mut flags = Vec::new();
    for (r, sp) in out.iter_mut().zip(&sps) {
        let Some(sp) = sp else { continue };
        if *sp >= floor {
            continue;
        }
        let cap = r.capacity_kw.unwrap();
        let same = mean(valid.iter().filter(|v| v.0 == cap).map(|v| v.1));
        let (target, action) = match (same, global) {
            (Some(s), _) => (s, FlagAction::SameCapacitySpecificPower),
            (None, Some(g)) => (g, FlagAction::GlobalSpecificPower),
            (None, None) => (floor, FlagAction::FloorSpecificPower),
        };
        r.rotor_diameter_m = Some(diameter_for(cap, target));
        flags.push(RecordFlag {
            id: r.id.clone(),
            field: FleetField::RotorDiameter,
            action,
        });
    }
    (out, flags)
}

/// Full repair sequence: zero dimensions, imputation, specific-power floor.
pub fn prepare_fleet(
    records: &[FleetRecord],
    policy: ImputationPolicy,
    sp_floor: f64,
) -> Result<(Vec<FleetRecord>, ImputationReport)> {
    let mut staged = records.to_vec();
    let mut zero_report = ImputationReport::default();
    repair_zero_dimensions(&mut staged, &mut zero_report);
    let (imputed, mut report) = impute_missing(&staged, policy)?;
    let (repaired, sp_flags) = repair_specific_power(&imputed, sp_floor);
    let mut flags = zero_report.flags;
    flags.append(&mut report.flags);
    flags.extend(sp_flags);
    report.flags = flags;
    for r in &repaired {
        r.check_invariants(sp_floor)?;
    }
    Ok((repaired, report))
}

// ---------------------------------------------------------------------------
// Name matching
// ---------------------------------------------------------------------------

/// Case-folds, strips accents, maps every non-alphanumeric character to a
/// space and collapses whitespace.
pub fn normalize_name(name: &str) -> String {
    let stripped: String = name
        .nfkd()
        .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Similarity on a 0-100 scale over normalized names; 100 iff they are equal.
pub fn name_score(a: &str, b: &str) -> u8 {
    let (a, b) = (normalize_name(a), normalize_name(b));
    if a == b {
        return 100;
    }
    ((strsim::normalized_levenshtein(&a, &b) * 100.0).floor() as u8).min(99)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameMatch {
    pub sim: String,
    pub obs: String,
    pub score: u8,
}

/// One-to-one matches at score 100, in `obs_names` order.
pub fn match_names(sim_names: &[String], obs_names: &[String]) -> Result<Vec<NameMatch>> {
    let mut sim_index: BTreeMap<String, Vec<&String>> = BTreeMap::new();
    for s in sim_names {
        sim_index.entry(normalize_name(s)).or_default().push(s);
    }
    let mut obs_index: BTreeMap<String, Vec<&String>> = BTreeMap::new();
    for o in obs_names {
        obs_index.entry(normalize_name(o)).or_default().push(o);
    }
    let mut matches = Vec::new();
    let mut used = HashSet::new();
    for o in obs_names {
        let key = normalize_name(o);
        let Some(sims) = sim_index.get(&key) else { continue };
        if sims.len() > 1 {
            return Err(Error::AmbiguousMatch {
                name: o.clone(),
                candidates: sims.iter().map(|s| s.to_string()).collect(),
            });
        }
        let obs_same = &obs_index[&key];
        if obs_same.len() > 1 {
            return Err(Error::AmbiguousMatch {
                name: sims[0].clone(),
                candidates: obs_same.iter().map(|s| s.to_string()).collect(),
            });
        }
        if used.insert(key) {
            matches.push(NameMatch {
                sim: sims[0].clone(),
                obs: o.clone(),
                score: 100,
            });
        }
    }
    Ok(matches)
}
