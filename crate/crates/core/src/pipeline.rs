//! Subcommand drivers: simulate, clean, validate, capacity-check and report.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! manifest.json                       tags, config hash, grids, file hashes
//! imputation.csv                      fleet repair flags
//! sim/<dataset>/<correction>/<id>.csv simulated generation
//! clean/<id>.csv                      cleaned observed series (values + mask)
//! clean/reports/<id>.csv              per-series removal report
//! matches.csv, attrition.csv, dropped.csv
//! metrics.csv, boxplot_stats.csv, significance.csv
//! capacity_ratio.csv, report.md
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::{
    aggregate_spatial, aggregate_temporal, generation_as_series, system_size, to_capacity_factor, SystemSize,
    TemporalLevel,
};
use crate::bias::load_raster;
use crate::cleaning::{
    align_and_mask, apply_exclusions, attrition, clean_series, load_exclusions, read_observed_csv, write_cleaned_csv,
    write_removal_report, AttritionReport, CleaningOutcome, Exclusion, ObservedSeries,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fleet::{
    load_fleet, match_names, prepare_fleet, FleetRecord, ImputationPolicy, ImputationReport, NameMatch,
};
use crate::power::{
    capacity_timeline, read_generation_csv, simulate_location, write_generation_csv, GenerationSeries, GwaLayer,
    SimulationOptions,
};
use crate::reanalysis::{load_wind_field, Grid, WindField};
use crate::stats::{boxplot_stats, notch_interval_with, validation_metrics};
use crate::time::{format_instant, TimeAxis, TimeRange};

/// Paths of every artifact under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn imputation(&self) -> PathBuf {
        self.root.join("imputation.csv")
    }
    pub fn sim_root(&self) -> PathBuf {
        self.root.join("sim")
    }
    pub fn sim_dir(&self, dataset: &str, correction: &str) -> PathBuf {
        self.sim_root().join(dataset).join(correction)
    }
    pub fn sim_file(&self, dataset: &str, correction: &str, id: &str) -> PathBuf {
        self.sim_dir(dataset, correction).join(format!("{id}.csv"))
    }
    pub fn clean_dir(&self) -> PathBuf {
        self.root.join("clean")
    }
    pub fn clean_file(&self, id: &str) -> PathBuf {
        self.clean_dir().join(format!("{id}.csv"))
    }
    pub fn clean_report(&self, id: &str) -> PathBuf {
        self.clean_dir().join("reports").join(format!("{id}.csv"))
    }
    pub fn audit_file(&self, id: &str) -> PathBuf {
        self.clean_dir().join("audit").join(format!("{id}.csv"))
    }
    pub fn matches(&self) -> PathBuf {
        self.root.join("matches.csv")
    }
    pub fn attrition(&self) -> PathBuf {
        self.root.join("attrition.csv")
    }
    pub fn dropped(&self) -> PathBuf {
        self.root.join("dropped.csv")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }
    pub fn boxplot(&self) -> PathBuf {
        self.root.join("boxplot_stats.csv")
    }
    pub fn significance(&self) -> PathBuf {
        self.root.join("significance.csv")
    }
    pub fn capacity_ratio(&self) -> PathBuf {
        self.root.join("capacity_ratio.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.md")
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn reset_dir(path: &Path) -> Result<()> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    create_dir(path)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))
}

/// Loads the fleet and applies the full repair sequence.
pub fn load_prepared_fleet(path: &Path, sp_floor: f64) -> Result<(Vec<FleetRecord>, ImputationReport)> {
    let (records, mut load_report) = load_fleet(path)?;
    let (mut prepared, mut report) = prepare_fleet(&records, ImputationPolicy::default(), sp_floor)?;
    load_report.flags.append(&mut report.flags);
    report.flags = load_report.flags;
    prepared.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((prepared, report))
}

/// Simulates every record on a bounded pool; output is ordered by record id
/// whatever the worker count.
pub fn simulate_fleet(
    records: &[FleetRecord],
    field: &WindField,
    gwa: Option<&GwaLayer>,
    options: &SimulationOptions,
    workers: usize,
) -> Result<Vec<GenerationSeries>> {
    let done = AtomicUsize::new(0);
    let total = records.len();
    let mut out = thread_pool(workers)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                let g = simulate_location(r, field, gwa, options);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                log::debug!("simulated {n}/{total}");
                g
            })
            .collect::<Result<Vec<_>>>()
    })?;
    out.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub wind_field: String,
    pub grid: Grid,
    pub levels_m: [f64; 2],
    pub time_start: String,
    pub step_seconds: i64,
    pub steps: usize,
}

/// Provenance written next to the simulated series. Holds no wall-clock
/// timestamps so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub datasets: BTreeMap<String, DatasetEntry>,
    pub corrections: Vec<String>,
    pub records: Vec<String>,
    /// `<dataset>/<correction>/<id>` to the applied mean-wind factor.
    pub correction_factors: BTreeMap<String, f64>,
    /// Output path relative to the output directory, to its SHA-256.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| {
            Error::MissingPrerequisite(format!("{} not found; run `windval simulate` first", path.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub files_written: usize,
    pub manifest: Manifest,
    pub warnings: Vec<String>,
}

pub fn cmd_simulate(cfg: &RunConfig, workers: usize) -> Result<SimulateSummary> {
    let layout = Layout::new(&cfg.output_dir);
    create_dir(&layout.root)?;
    let (records, report) = load_prepared_fleet(&cfg.fleet, cfg.thresholds.sp_floor)?;
    if records.is_empty() {
        return Err(Error::EmptySelection("fleet has no records".into()));
    }
    report.write_csv(&layout.imputation())?;
    reset_dir(&layout.sim_root())?;

    let mut manifest = Manifest {
        config_hash: cfg.hash.clone(),
        datasets: BTreeMap::new(),
        corrections: cfg.corrections.iter().map(|c| c.tag.clone()).collect(),
        records: records.iter().map(|r| r.id.clone()).collect(),
        correction_factors: BTreeMap::new(),
        files: BTreeMap::new(),
    };
    let mut warnings = Vec::new();
    let mut files_written = 0;
    let layers: Vec<(String, Option<GwaLayer>)> = cfg
        .corrections
        .iter()
        .map(|c| {
            let layer = c
                .raster
                .as_ref()
                .map(|(p, h)| {
                    load_raster(p, *h).map(|raster| GwaLayer {
                        tag: c.tag.clone(),
                        raster,
                    })
                })
                .transpose()?;
            Ok((c.tag.clone(), layer))
        })
        .collect::<Result<_>>()?;

    for ds in &cfg.datasets {
        log::info!("loading {} wind field {}", ds.tag, ds.wind_field.display());
        let field = load_wind_field(&ds.wind_field, &cfg.bbox, &cfg.time_range)?;
        manifest.datasets.insert(
            ds.tag.clone(),
            DatasetEntry {
                wind_field: ds
                    .wind_field
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                grid: field.grid,
                levels_m: [field.levels.lo(), field.levels.hi()],
                time_start: format_instant(field.time.start),
                step_seconds: field.time.step_seconds,
                steps: field.time.len,
            },
        );
        let options = SimulationOptions {
            dataset_tag: ds.tag.clone(),
        };
        for (tag, layer) in &layers {
            let series = simulate_fleet(&records, &field, layer.as_ref(), &options, workers)?;
            let dir = layout.sim_dir(&ds.tag, tag);
            create_dir(&dir)?;
            for g in &series {
                let path = layout.sim_file(&ds.tag, tag, &g.record_id);
                write_generation_csv(g, &path)?;
                let rel = format!("sim/{}/{}/{}.csv", ds.tag, tag, g.record_id);
                manifest.files.insert(rel, sha256_file(&path)?);
                if let Some(cf) = g.provenance.correction {
                    manifest
                        .correction_factors
                        .insert(format!("{}/{}/{}", ds.tag, tag, g.record_id), cf.factor);
                }
                files_written += 1;
            }
        }
        for r in &records {
            if let Ok(tl) = capacity_timeline(r, &field.time) {
                warnings.extend(tl.warning);
            }
        }
    }
    manifest
        .files
        .insert("imputation.csv".into(), sha256_file(&layout.imputation())?);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(layout.manifest(), text + "\n").map_err(|e| Error::io(layout.manifest(), e))?;
    Ok(SimulateSummary {
        files_written,
        manifest,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanOptions {
    /// Also write raw and cleaned values side by side per series.
    pub audit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanSummary {
    pub attrition: AttritionReport,
    pub matches: Vec<NameMatch>,
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
}

fn csv_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

fn write_audit(series_before: &ObservedSeries, after: &ObservedSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "raw", "cleaned"])?;
    for i in 0..after.len() {
        let raw = series_before.values[i];
        w.write_record([
            format_instant(after.time.at(i)),
            if raw.is_finite() {
                raw.to_string()
            } else {
                String::new()
            },
            fmt_opt(after.value(i)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_clean(cfg: &RunConfig, workers: usize, options: CleanOptions) -> Result<CleanSummary> {
    let layout = Layout::new(&cfg.output_dir);
    let obs_dir = cfg
        .observed_dir
        .as_ref()
        .ok_or_else(|| Error::Config("`paths.observed_dir` is required for cleaning".into()))?;
    let files = csv_stems(obs_dir)?;
    if files.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no observed CSV files in {}",
            obs_dir.display()
        )));
    }
    let (records, _) = load_prepared_fleet(&cfg.fleet, cfg.thresholds.sp_floor)?;
    let exclusions: Vec<Exclusion> = cfg
        .exclusions
        .as_deref()
        .map(load_exclusions)
        .transpose()?
        .unwrap_or_default();

    let sim_names: Vec<String> = records.iter().map(|r| r.name.clone()).collect();
    let obs_names: Vec<String> = files.iter().map(|(s, _)| s.clone()).collect();
    let matches = match_names(&sim_names, &obs_names)?;
    let by_name: BTreeMap<&str, &FleetRecord> = records.iter().map(|r| (r.name.as_str(), r)).collect();
    let by_stem: BTreeMap<&str, &PathBuf> = files.iter().map(|(s, p)| (s.as_str(), p)).collect();

    let mut report = AttritionReport::default();
    report.push("observed_series", None, files.len());
    report.push("matched", None, matches.len());

    let cleaning = cfg.thresholds.cleaning();
    let results: Vec<(ObservedSeries, CleaningOutcome)> = thread_pool(workers)?.install(|| {
        matches
            .par_iter()
            .map(|m| {
                let record = by_name[m.sim.as_str()];
                let file = read_observed_csv(by_stem[m.obs.as_str()], &record.id)?;
                let capacity = match file.capacity_kw {
                    Some(c) => c,
                    None => capacity_timeline(record, &file.series.time)?.installed_kw,
                };
                let mut series = file.series;
                let raw = series.clone();
                apply_exclusions(
                    &mut series,
                    &[record.id.as_str(), record.state.as_str(), record.country.as_str()],
                    &exclusions,
                );
                Ok((raw, clean_series(series, &capacity, &cleaning)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let outcomes: Vec<CleaningOutcome> = results.iter().map(|(_, o)| o.clone()).collect();
    attrition(&mut report, &outcomes);

    reset_dir(&layout.clean_dir())?;
    create_dir(&layout.clean_dir().join("reports"))?;
    if options.audit {
        create_dir(&layout.clean_dir().join("audit"))?;
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut dropped_csv = csv::Writer::from_path(layout.dropped())?;
    dropped_csv.write_record(["record_id", "unmasked_steps"])?;
    for (raw, o) in &results {
        let id = &o.series.id;
        write_removal_report(&o.series, &layout.clean_report(id))?;
        if options.audit {
            write_audit(raw, &o.series, &layout.audit_file(id))?;
        }
        if o.kept {
            write_cleaned_csv(&o.series, &layout.clean_file(id))?;
            kept.push(id.clone());
        } else {
            dropped_csv.write_record([id.clone(), o.series.unmasked_count().to_string()])?;
            dropped.push(id.clone());
        }
    }
    dropped_csv.flush().map_err(|e| Error::io(layout.dropped(), e))?;

    let mut mw = csv::Writer::from_path(layout.matches())?;
    mw.write_record(["observed_name", "record_id", "record_name", "score"])?;
    for m in &matches {
        mw.write_record([
            m.obs.clone(),
            by_name[m.sim.as_str()].id.clone(),
            m.sim.clone(),
            m.score.to_string(),
        ])?;
    }
    mw.flush().map_err(|e| Error::io(layout.matches(), e))?;
    report.write_csv(&layout.attrition())?;
    Ok(CleanSummary {
        attrition: report,
        matches,
        kept,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpatialLevel {
    Park,
    State,
    Country,
}

impl SpatialLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SpatialLevel::Park => "park",
            SpatialLevel::State => "state",
            SpatialLevel::Country => "country",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub region_id: String,
    pub dataset_tag: String,
    pub gwa_tag: String,
    pub temporal_level: TemporalLevel,
    pub spatial_level: SpatialLevel,
    pub system_size: usize,
    pub n: usize,
    pub pearson: Option<f64>,
    pub rmse: Option<f64>,
    pub mbe: Option<f64>,
}

pub const METRICS_HEADER: [&str; 10] = [
    "region_id",
    "dataset_tag",
    "gwa_tag",
    "temporal_level",
    "spatial_level",
    "system_size",
    "n",
    "pearson",
    "rmse",
    "mbe",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub region_id: String,
    pub level: SpatialLevel,
    pub members: Vec<String>,
}

/// Park, state and country groups. A group with the same members as one at
/// a finer level is skipped, so a lone park is reported once.
pub fn build_groups(records: &[&FleetRecord]) -> Vec<Group> {
    let mut groups = Vec::new();
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut push = |region_id: String, level: SpatialLevel, mut members: Vec<String>| {
        members.sort();
        if seen.insert(members.clone()) {
            groups.push(Group {
                region_id,
                level,
                members,
            });
        }
    };
    for r in records {
        push(r.id.clone(), SpatialLevel::Park, vec![r.id.clone()]);
    }
    let mut states: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    let mut countries: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in records {
        states
            .entry((r.country.clone(), r.state.clone()))
            .or_default()
            .push(r.id.clone());
        countries.entry(r.country.clone()).or_default().push(r.id.clone());
    }
    for ((_, state), members) in states {
        push(state, SpatialLevel::State, members);
    }
    for (country, members) in countries {
        push(country, SpatialLevel::Country, members);
    }
    groups
}

/// Common window of several axes with the same step.
fn common_window(axes: &[TimeAxis]) -> Result<TimeRange> {
    let first = axes.first().ok_or_else(|| Error::Alignment("no series".into()))?;
    if axes.iter().any(|a| a.step_seconds != first.step_seconds) {
        return Err(Error::Alignment("series have different time steps".into()));
    }
    let start = axes.iter().map(|a| a.start).max().expect("non-empty");
    let end = axes.iter().filter_map(TimeAxis::end).min();
    match end {
        Some(end) if start <= end => TimeRange::new(start, end),
        _ => Err(Error::Alignment("disjoint time axes".into())),
    }
}

fn slice_series(s: &ObservedSeries, window: &TimeRange) -> ObservedSeries {
    let r = s.time.select(window);
    ObservedSeries {
        id: s.id.clone(),
        time: s.time.slice(r.clone()),
        values: s.values[r.clone()].to_vec(),
        mask: s.mask[r].to_vec(),
    }
}

struct Member<'a> {
    record: &'a FleetRecord,
    sim: GenerationSeries,
    obs: ObservedSeries,
}

fn group_rows(
    group: &Group,
    members: &BTreeMap<String, Member<'_>>,
    grid: &Grid,
    dataset: &str,
    gwa: &str,
) -> Result<Vec<MetricRow>> {
    let ms: Vec<&Member> = group.members.iter().map(|id| &members[id]).collect();
    let axes: Vec<TimeAxis> = ms.iter().flat_map(|m| [m.sim.time, m.obs.time]).collect();
    let window = common_window(&axes).map_err(|e| Error::Alignment(format!("group `{}`: {e}", group.region_id)))?;
    let mut sims: Vec<ObservedSeries> = ms
        .iter()
        .map(|m| slice_series(&generation_as_series(&m.sim), &window))
        .collect();
    let mut obs: Vec<ObservedSeries> = ms.iter().map(|m| slice_series(&m.obs, &window)).collect();
    let caps: Vec<Vec<f64>> = ms
        .iter()
        .map(|m| m.sim.installed_kw[m.sim.time.select(&window)].to_vec())
        .collect();
    let empty = align_and_mask(&mut sims, &mut obs)?;
    let size =
        system_size(&ms.iter().map(|m| m.record.location).collect::<Vec<_>>(), grid).unwrap_or(SystemSize { cells: 0 });
    let row = |level: TemporalLevel, n: usize, p: Option<f64>, rmse: Option<f64>, mbe: Option<f64>| MetricRow {
        region_id: group.region_id.clone(),
        dataset_tag: dataset.to_owned(),
        gwa_tag: gwa.to_owned(),
        temporal_level: level,
        spatial_level: group.level,
        system_size: size.cells,
        n,
        pearson: p,
        rmse,
        mbe,
    };
    if empty {
        log::warn!("group `{}` has no unmasked step for {dataset}/{gwa}", group.region_id);
        return Ok(TemporalLevel::ALL
            .iter()
            .map(|&l| row(l, 0, None, None, None))
            .collect());
    }
    let cap_refs: Vec<&[f64]> = caps.iter().map(Vec::as_slice).collect();
    let sim_cf = sims
        .iter()
        .zip(&caps)
        .map(|(s, c)| to_capacity_factor(s, c))
        .collect::<Result<Vec<_>>>()?;
    let obs_cf = obs
        .iter()
        .zip(&caps)
        .map(|(s, c)| to_capacity_factor(s, c))
        .collect::<Result<Vec<_>>>()?;
    let sim_agg = aggregate_spatial(&group.region_id, &sim_cf, &cap_refs)?;
    let obs_agg = aggregate_spatial(&group.region_id, &obs_cf, &cap_refs)?;
    let mut rows = Vec::new();
    for level in TemporalLevel::ALL {
        let a = aggregate_temporal(&sim_agg, level);
        let b = aggregate_temporal(&obs_agg, level);
        let mask: Vec<bool> = a.mask.iter().zip(&b.mask).map(|(x, y)| *x || *y).collect();
        match validation_metrics(&a.cf, &b.cf, Some(&mask)) {
            Ok(m) => rows.push(row(level, m.n, m.pearson, Some(m.rmse), Some(m.mbe))),
            Err(Error::DegenerateSeries(_)) => rows.push(row(level, 0, None, None, None)),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateSummary {
    pub rows: Vec<MetricRow>,
}

pub fn cmd_validate(cfg: &RunConfig, workers: usize) -> Result<ValidateSummary> {
    let layout = Layout::new(&cfg.output_dir);
    let manifest = Manifest::load(&layout.manifest())?;
    if !layout.clean_dir().is_dir() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run `windval clean` first",
            layout.clean_dir().display()
        )));
    }
    let cleaned = csv_stems(&layout.clean_dir())?;
    if cleaned.is_empty() {
        return Err(Error::EmptySelection(
            "no cleaned series survived; nothing to validate".into(),
        ));
    }
    let (records, _) = load_prepared_fleet(&cfg.fleet, cfg.thresholds.sp_floor)?;
    let by_id: BTreeMap<&str, &FleetRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut valid_records = Vec::new();
    for (id, _) in &cleaned {
        let r = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Data(format!("cleaned series `{id}` has no fleet record")))?;
        valid_records.push(*r);
    }
    let groups = build_groups(&valid_records);
    let pool = thread_pool(workers)?;

    let mut rows = Vec::new();
    for ds in &cfg.datasets {
        let entry = manifest.datasets.get(&ds.tag).ok_or_else(|| {
            Error::MissingPrerequisite(format!(
                "dataset `{}` missing from manifest; rerun `windval simulate`",
                ds.tag
            ))
        })?;
        for corr in &cfg.corrections {
            let dir = layout.sim_dir(&ds.tag, &corr.tag);
            if !dir.is_dir() {
                return Err(Error::MissingPrerequisite(format!(
                    "{} not found; rerun `windval simulate`",
                    dir.display()
                )));
            }
            let mut members = BTreeMap::new();
            for r in &valid_records {
                let sim_path = layout.sim_file(&ds.tag, &corr.tag, &r.id);
                if !sim_path.is_file() {
                    return Err(Error::MissingPrerequisite(format!(
                        "{} not found; rerun `windval simulate`",
                        sim_path.display()
                    )));
                }
                let sim = read_generation_csv(&sim_path, &ds.tag, Some(&corr.tag))?;
                let obs = read_observed_csv(&layout.clean_file(&r.id), &r.id)?.series;
                members.insert(r.id.clone(), Member { record: r, sim, obs });
            }
            let per_group: Vec<Vec<MetricRow>> = pool.install(|| {
                groups
                    .par_iter()
                    .map(|g| group_rows(g, &members, &entry.grid, &ds.tag, &corr.tag))
                    .collect::<Result<_>>()
            })?;
            rows.extend(per_group.into_iter().flatten());
        }
    }
    rows.sort_by(|a, b| {
        (
            &a.dataset_tag,
            &a.gwa_tag,
            a.spatial_level,
            &a.region_id,
            a.temporal_level,
        )
            .cmp(&(
                &b.dataset_tag,
                &b.gwa_tag,
                b.spatial_level,
                &b.region_id,
                b.temporal_level,
            ))
    });
    write_metrics(&rows, &layout.metrics())?;
    write_boxplots(&rows, cfg.thresholds.notch_constant, &layout.boxplot())?;
    write_significance(&rows, cfg.thresholds.notch_constant, &layout.significance())?;
    Ok(ValidateSummary { rows })
}

pub fn write_metrics(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.region_id.clone(),
            r.dataset_tag.clone(),
            r.gwa_tag.clone(),
            r.temporal_level.as_str().to_owned(),
            r.spatial_level.as_str().to_owned(),
            r.system_size.to_string(),
            r.n.to_string(),
            fmt_opt(r.pearson),
            fmt_opt(r.rmse),
            fmt_opt(r.mbe),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

type MetricKey = (SpatialLevel, TemporalLevel, &'static str);

/// Per (spatial level, temporal level, metric): samples for each
/// dataset/correction pair.
fn metric_samples(rows: &[MetricRow]) -> BTreeMap<MetricKey, BTreeMap<(String, String), Vec<f64>>> {
    let mut out: BTreeMap<MetricKey, BTreeMap<(String, String), Vec<f64>>> = BTreeMap::new();
    for r in rows {
        for (name, v) in [("pearson", r.pearson), ("rmse", r.rmse), ("mbe", r.mbe)] {
            if let Some(v) = v.filter(|v| v.is_finite()) {
                out.entry((r.spatial_level, r.temporal_level, name))
                    .or_default()
                    .entry((r.dataset_tag.clone(), r.gwa_tag.clone()))
                    .or_default()
                    .push(v);
            }
        }
    }
    out
}

pub fn write_boxplots(rows: &[MetricRow], notch_constant: f64, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "dataset_tag",
        "gwa_tag",
        "spatial_level",
        "temporal_level",
        "metric",
        "n",
        "median",
        "q25",
        "q75",
        "notch_lo",
        "notch_hi",
        "whisker_lo",
        "whisker_hi",
        "outliers",
    ])?;
    for ((spatial, temporal, metric), configs) in metric_samples(rows) {
        for ((ds, gwa), samples) in configs {
            let b = boxplot_stats(&samples, notch_constant)?;
            w.write_record([
                ds,
                gwa,
                spatial.as_str().to_owned(),
                temporal.as_str().to_owned(),
                metric.to_owned(),
                b.n.to_string(),
                b.median.to_string(),
                b.q25.to_string(),
                b.q75.to_string(),
                b.notch_lo.to_string(),
                b.notch_hi.to_string(),
                b.whisker_lo.to_string(),
                b.whisker_hi.to_string(),
                b.outliers.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pairwise notch comparison of every two configurations per metric and level.
pub fn write_significance(rows: &[MetricRow], notch_constant: f64, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "spatial_level",
        "temporal_level",
        "metric",
        "config_a",
        "config_b",
        "median_a",
        "median_b",
        "medians_differ",
    ])?;
    for ((spatial, temporal, metric), configs) in metric_samples(rows) {
        let notches = configs
            .iter()
            .map(|((ds, gwa), s)| Ok((format!("{ds}/{gwa}"), notch_interval_with(s, notch_constant)?)))
            .collect::<Result<Vec<_>>>()?;
        for (i, (name_a, a)) in notches.iter().enumerate() {
            for (name_b, b) in &notches[i + 1..] {
                w.write_record([
                    spatial.as_str().to_owned(),
                    temporal.as_str().to_owned(),
                    metric.to_owned(),
                    name_a.clone(),
                    name_b.clone(),
                    a.median.to_string(),
                    b.median.to_string(),
                    (!a.overlaps(b)).to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub year: i32,
    pub fleet_mw: f64,
    pub reference_mw: Option<f64>,
    pub ratio: Option<f64>,
    pub flag: String,
}

/// Reference CSV: `year,capacity_mw`; an empty capacity marks a missing year.
pub fn load_reference_capacity(path: &Path) -> Result<BTreeMap<i32, Option<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let year: i32 = rec.get(0).unwrap_or("").trim().parse().map_err(|_| Error::Row {
            line,
            message: format!("invalid year `{}`", rec.get(0).unwrap_or("")),
        })?;
        let raw = rec.get(1).unwrap_or("").trim();
        let cap = if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| Error::Row {
                line,
                message: format!("invalid capacity `{raw}`"),
            })?)
        };
        if out.insert(year, cap).is_some() {
            return Err(Error::Row {
                line,
                message: format!("year {year} listed twice"),
            });
        }
    }
    Ok(out)
}

/// Year-end cumulative fleet capacity against a reference series. Records
/// without capacity or commissioning year are left out.
pub fn capacity_check(records: &[FleetRecord], reference: &BTreeMap<i32, Option<f64>>) -> Vec<CapacityRow> {
    let dated: Vec<(i32, f64)> = records
        .iter()
        .filter_map(|r| Some((r.commissioning?.year_value(), r.capacity_kw?)))
        .collect();
    let skipped = records.len() - dated.len();
    if skipped > 0 {
        log::warn!("{skipped} records lack capacity or commissioning year and are not counted");
    }
    let years: BTreeSet<i32> = reference.keys().copied().chain(dated.iter().map(|d| d.0)).collect();
    years
        .into_iter()
        .map(|year| {
            let fleet_mw = dated.iter().filter(|d| d.0 <= year).map(|d| d.1).sum::<f64>() / 1000.0;
            let reference_mw = reference.get(&year).copied().flatten();
            let (ratio, flag) = match reference_mw {
                None if reference.contains_key(&year) => (None, "empty_reference"),
                None => (None, "missing_reference"),
                Some(r) if r <= 0.0 => (None, "zero_reference"),
                Some(r) => (Some(fleet_mw / r), ""),
            };
            CapacityRow {
                year,
                fleet_mw,
                reference_mw,
                ratio,
                flag: flag.to_owned(),
            }
        })
        .collect()
}

pub fn write_capacity_rows(rows: &[CapacityRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["year", "fleet_mw", "reference_mw", "ratio", "flag"])?;
    for r in rows {
        w.write_record([
            r.year.to_string(),
            r.fleet_mw.to_string(),
            fmt_opt(r.reference_mw),
            fmt_opt(r.ratio),
            r.flag.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_capacity_check(fleet: &Path, reference: &Path, out: &Path) -> Result<Vec<CapacityRow>> {
    let (records, _) = load_fleet(fleet)?;
    let reference = load_reference_capacity(reference)?;
    let rows = capacity_check(&records, &reference);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_capacity_rows(&rows, out)?;
    Ok(rows)
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_table(path: &Path) -> Result<Option<Table>> {
    if !path.is_file() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| Ok(r?.iter().map(str::to_owned).collect()))
        .collect::<Result<_>>()?;
    Ok(Some((header, rows)))
}

fn markdown_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in rows {
        out.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    out.push('\n');
}

/// Collects the existing CSV outputs into one markdown summary.
pub fn cmd_report(cfg: &RunConfig) -> Result<PathBuf> {
    let layout = Layout::new(&cfg.output_dir);
    let boxplots = read_table(&layout.boxplot())?.ok_or_else(|| {
        Error::MissingPrerequisite(format!(
            "{} not found; run `windval validate` first",
            layout.boxplot().display()
        ))
    })?;
    let mut out = String::from("# Validation report\n\n");
    out.push_str(&format!("Config hash: `{}`\n\n", cfg.hash));
    for (title, path) in [
        ("Cleaning attrition", layout.attrition()),
        ("Capacity check", layout.capacity_ratio()),
    ] {
        if let Some((h, rows)) = read_table(&path)? {
            out.push_str(&format!("## {title}\n\n"));
            markdown_table(&mut out, &h, &rows);
        }
    }
    out.push_str("## Metric distributions\n\n");
    let keep = [
        "dataset_tag",
        "gwa_tag",
        "spatial_level",
        "temporal_level",
        "metric",
        "n",
        "median",
        "notch_lo",
        "notch_hi",
    ];
    let idx: Vec<usize> = keep
        .iter()
        .filter_map(|k| boxplots.0.iter().position(|h| h == k))
        .collect();
    let rows: Vec<Vec<String>> = boxplots
        .1
        .iter()
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect();
    markdown_table(&mut out, &keep.map(str::to_owned), &rows);
    if let Some((h, rows)) = read_table(&layout.significance())? {
        out.push_str("## Median differences\n\n");
        markdown_table(&mut out, &h, &rows);
    }
    fs::write(layout.report(), out).map_err(|e| Error::io(layout.report(), e))?;
    Ok(layout.report())
}
