//! Declarative run configuration.
//!
//! ```toml
//! output_dir = "out"
//! seed = 7
//!
//! [paths]
//! fleet = "fleet.csv"
//! observed_dir = "observed"
//!
//! [datasets.era5]
//! wind_field = "era5.nc"
//!
//! [[corrections]]
//! tag = "none"
//!
//! [[corrections]]
//! tag = "gwa3"
//! raster = "gwa3_100m.tif"
//! height_m = 100
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cleaning::CleaningConfig;
use crate::error::{Error, Result};
use crate::reanalysis::BBox;
use crate::stats::NOTCH_CONSTANT;
use crate::time::{parse_instant, TimeRange};

pub const DATASET_TAGS: [&str; 3] = ["era5", "merra2", "fixture"];
pub const CORRECTION_TAGS: [&str; 3] = ["none", "gwa2", "gwa3"];
pub const WORKERS_ENV: &str = "WINDVAL_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: PathBuf,
    #[serde(default)]
    seed: u64,
    workers: Option<usize>,
    time_range: Option<RawTimeRange>,
    bbox: Option<BBox>,
    paths: RawPaths,
    datasets: BTreeMap<String, RawDataset>,
    #[serde(default)]
    corrections: Vec<RawCorrection>,
    #[serde(default)]
    thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTimeRange {
    start: String,
    end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    fleet: PathBuf,
    observed_dir: Option<PathBuf>,
    exclusions: Option<PathBuf>,
    reference_capacity: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    wind_field: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorrection {
    tag: String,
    raster: Option<PathBuf>,
    height_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub zero_run_hours: f64,
    pub constant_run_hours: f64,
    pub min_years: f64,
    pub sp_floor: f64,
    pub notch_constant: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let c = CleaningConfig::default();
        Self {
            zero_run_hours: c.zero_run_hours,
            constant_run_hours: c.constant_run_hours,
            min_years: c.min_years,
            sp_floor: crate::fleet::SPECIFIC_POWER_FLOOR,
            notch_constant: NOTCH_CONSTANT,
        }
    }
}

impl Thresholds {
    pub fn cleaning(&self) -> CleaningConfig {
        CleaningConfig {
            constant_run_hours: self.constant_run_hours,
            zero_run_hours: self.zero_run_hours,
            min_years: self.min_years,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub tag: String,
    pub wind_field: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionConfig {
    pub tag: String,
    /// `None` only for the `none` tag.
    pub raster: Option<(PathBuf, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub time_range: TimeRange,
    pub bbox: BBox,
    pub fleet: PathBuf,
    pub observed_dir: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    pub reference_capacity: Option<PathBuf>,
    pub datasets: Vec<DatasetConfig>,
    pub corrections: Vec<CorrectionConfig>,
    pub thresholds: Thresholds,
    /// SHA-256 over the canonical form of the parsed file.
    pub hash: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let canonical = serde_json::to_vec(&raw)?;
        let hash = format!("{:x}", Sha256::digest(&canonical));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let existing = |p: &Path, what: &str| -> Result<PathBuf> {
            let r = resolve(p);
            if r.exists() {
                Ok(r)
            } else {
                Err(Error::Config(format!("{what} `{}` does not exist", r.display())))
            }
        };

        let t = &raw.thresholds;
        for (name, v) in [
            ("zero_run_hours", t.zero_run_hours),
            ("constant_run_hours", t.constant_run_hours),
            ("min_years", t.min_years),
            ("sp_floor", t.sp_floor),
            ("notch_constant", t.notch_constant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("threshold `{name}` must be positive, got {v}")));
            }
        }
        if raw.workers == Some(0) {
            return Err(Error::Config("`workers` must be at least 1".into()));
        }
        if raw.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        let mut datasets = Vec::new();
        for (tag, d) in &raw.datasets {
            if !DATASET_TAGS.contains(&tag.as_str()) {
                return Err(Error::Config(format!(
                    "unknown dataset tag `{tag}`; expected one of {DATASET_TAGS:?}"
                )));
            }
            datasets.push(DatasetConfig {
                tag: tag.clone(),
                wind_field: existing(&d.wind_field, "wind field")?,
            });
        }

        let mut corrections = Vec::new();
        let raw_corr = if raw.corrections.is_empty() {
            vec![RawCorrection {
                tag: "none".into(),
                raster: None,
                height_m: None,
            }]
        } else {
            raw.corrections.clone()
        };
        for c in &raw_corr {
            if !CORRECTION_TAGS.contains(&c.tag.as_str()) {
                return Err(Error::Config(format!(
                    "unknown correction tag `{}`; expected one of {CORRECTION_TAGS:?}",
                    c.tag
                )));
            }
            if corrections.iter().any(|x: &CorrectionConfig| x.tag == c.tag) {
                return Err(Error::Config(format!("correction `{}` listed twice", c.tag)));
            }
            let raster = match (c.tag.as_str(), &c.raster) {
                ("none", None) => None,
                ("none", Some(_)) => return Err(Error::Config("correction `none` cannot name a raster".into())),
                (tag, None) => return Err(Error::Config(format!("correction `{tag}` needs a raster path"))),
                (tag, Some(p)) => {
                    let h = c
                        .height_m
                        .ok_or_else(|| Error::Config(format!("correction `{tag}` needs `height_m`")))?;
                    Some((existing(p, "raster")?, h))
                }
            };
            corrections.push(CorrectionConfig {
                tag: c.tag.clone(),
                raster,
            });
        }

        let time_range = match &raw.time_range {
            None => TimeRange::unbounded(),
            Some(r) => TimeRange::new(
                parse_instant(&r.start).map_err(|e| Error::Config(e.to_string()))?,
                parse_instant(&r.end).map_err(|e| Error::Config(e.to_string()))?,
            )?,
        };

        Ok(Self {
            output_dir: resolve(&raw.output_dir),
            seed: raw.seed,
            workers: raw.workers,
            time_range,
            bbox: raw.bbox.unwrap_or_else(BBox::everything),
            fleet: existing(&raw.paths.fleet, "fleet")?,
            observed_dir: raw
                .paths
                .observed_dir
                .as_deref()
                .map(|p| existing(p, "observed directory"))
                .transpose()?,
            exclusions: raw
                .paths
                .exclusions
                .as_deref()
                .map(|p| existing(p, "exclusion list"))
                .transpose()?,
            reference_capacity: raw
                .paths
                .reference_capacity
                .as_deref()
                .map(|p| existing(p, "reference capacity"))
                .transpose()?,
            datasets,
            corrections,
            thresholds: raw.thresholds,
            hash,
        })
    }

    /// Worker count: the environment variable wins over the config value,
    /// which wins over the number of available cores.
    pub fn effective_workers(&self) -> Result<usize> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(Error::Config(format!(
                    "{WORKERS_ENV} must be a positive integer, got `{v}`"
                ))),
            },
            Err(_) => Ok(self
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))),
        }
    }
}
