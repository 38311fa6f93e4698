//! Seeded synthetic inputs: a wind field with diurnal and seasonal cycles,
//! a small fleet, observed series derived from the simulation, a mean-wind
//! raster and a ready-to-run config. Used by the test suites and by the
//! CLI `fixture` command.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bias::{write_ascii_grid, MeanWindRaster};
use crate::cleaning::{write_cleaned_csv, ObservedSeries};
use crate::error::{Error, Result};
use crate::fleet::{write_fleet, Commissioning, FleetRecord};
use crate::power::{simulate_location, SimulationOptions};
use crate::reanalysis::{write_netcdf, Grid, LatLon, WindField};
use crate::time::{Instant, TimeAxis};
use crate::wind_math::HeightPair;

const PARK_NAMES: [&str; 8] = ["Alpha", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot", "Golf", "Hotel"];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOptions {
    pub seed: u64,
    pub start: Instant,
    pub hours: usize,
    pub parks: usize,
    pub grid: Grid,
    pub levels: (f64, f64),
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            start: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
            // two years plus ten days, so trimmed series keep two full years
            hours: 2 * 8760 + 240,
            parks: 3,
            grid: Grid::new(-6.0, 0.5, -37.0, 0.625, 4, 4).expect("valid grid"),
            levels: (10.0, 100.0),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Cell means vary smoothly across the grid; every cell shares a regional
/// AR(1) anomaly plus its own local one.
pub fn synthetic_wind_field(grid: &Grid, time: TimeAxis, levels: HeightPair<f64>, seed: u64) -> Result<WindField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = (time.len, 2, grid.n_lat, grid.n_lon);
    let mut u = Array4::zeros(shape);
    let mut v = Array4::zeros(shape);
    let ratio = levels.lo() / levels.hi();
    let mut common = 0.0;
    let mut local = Array2::<f64>::zeros((grid.n_lat, grid.n_lon));
    let mut direction = 1.2f64;
    for t in 0..time.len {
        let at = time.at(t);
        let hour = at.hour() as f64;
        let day = at.ordinal() as f64;
        common = 0.95 * common + 0.9 * normal(&mut rng);
        direction += 0.05 * normal(&mut rng);
        let diurnal = (2.0 * std::f64::consts::PI * (hour - 14.0) / 24.0).sin();
        let seasonal = (2.0 * std::f64::consts::PI * (day - 200.0) / 365.0).cos();
        for i in 0..grid.n_lat {
            for j in 0..grid.n_lon {
                local[[i, j]] = 0.9 * local[[i, j]] + 0.6 * normal(&mut rng);
                let mean = 6.5 + 0.4 * i as f64 - 0.3 * j as f64;
                let hi = (mean + 0.8 * common + local[[i, j]] + 0.8 * diurnal + 1.2 * seasonal).max(0.0);
                let alpha = (0.14 + 0.04 * normal(&mut rng)).clamp(0.02, 0.4);
                let lo = hi * ratio.powf(alpha);
                let veer = 0.1 * normal(&mut rng);
                u[[t, 0, i, j]] = lo * (direction + veer).cos();
                v[[t, 0, i, j]] = lo * (direction + veer).sin();
                u[[t, 1, i, j]] = hi * direction.cos();
                v[[t, 1, i, j]] = hi * direction.sin();
            }
        }
    }
    WindField::new(*grid, time, levels, u, v)
}

pub fn park_name(k: usize) -> String {
    let base = PARK_NAMES[k % PARK_NAMES.len()];
    match k / PARK_NAMES.len() {
        0 => format!("Parque Eólico {base}"),
        n => format!("Parque Eólico {base} {}", n + 1),
    }
}

/// Parks spread over distinct cells where possible, commissioned before
/// `start` at day precision.
pub fn synthetic_fleet(n: usize, grid: &Grid, start: Instant, seed: u64) -> Vec<FleetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let cells = grid.n_lat * grid.n_lon;
    (0..n)
        .map(|k| {
            let cell = (k * 5) % cells;
            let (i, j) = (cell / grid.n_lon, cell % grid.n_lon);
            let location = LatLon::new(
                grid.lat_center(i) + rng.gen_range(-0.2..0.2) * grid.lat_step,
                grid.lon_center(j) + rng.gen_range(-0.2..0.2) * grid.lon_step,
            );
            let capacity = 20_000.0 + 5_000.0 * (k % 7) as f64;
            let sp = 250.0 + 25.0 * (k % 6) as f64;
            let diameter = (4.0 * 1000.0 * capacity / (std::f64::consts::PI * sp)).sqrt();
            let comm = NaiveDate::from_ymd_opt(start.year() - 1 - (k % 4) as i32, 1 + (k % 12) as u32, 10).unwrap();
            FleetRecord {
                id: format!("BR-{:03}", k + 1),
                name: park_name(k),
                location,
                capacity_kw: Some(capacity),
                hub_height_m: Some(80.0 + 10.0 * (k % 5) as f64),
                rotor_diameter_m: Some(diameter),
                commissioning: Some(Commissioning::day(comm)),
                state: if k % 2 == 0 { "RN" } else { "CE" }.into(),
                country: "BR".into(),
            }
        })
        .collect()
}

/// Observed generation: simulated power with multiplicative noise, clipped
/// to installed capacity, with a few missing hours.
pub fn synthetic_observed(record: &FleetRecord, field: &WindField, seed: u64) -> Result<ObservedSeries> {
    let g = simulate_location(
        record,
        field,
        None,
        &SimulationOptions {
            dataset_tag: "fixture".into(),
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = g
        .power_kw
        .iter()
        .zip(&g.installed_kw)
        .map(|(&p, &cap)| {
            if rng.gen_bool(0.005) {
                f64::NAN
            } else {
                let noisy = p * (0.95 + 0.1 * rng.gen::<f64>()) + 0.02 * cap * normal(&mut rng);
                (noisy.clamp(0.0, cap) * 1000.0).round() / 1000.0
            }
        })
        .collect();
    ObservedSeries::new(record.id.clone(), g.time, values)
}

/// Long-term mean at the upper level, scaled up slightly, on a fine raster
/// covering the grid.
pub fn synthetic_raster(field: &WindField, pixel: f64, scale: f64) -> Result<MeanWindRaster> {
    let g = &field.grid;
    let north = g.lat_center(g.n_lat - 1) + g.lat_step / 2.0;
    let west = g.lon_center(0) - g.lon_step / 2.0;
    let rows = ((g.n_lat as f64 * g.lat_step) / pixel).round() as usize;
    let cols = ((g.n_lon as f64 * g.lon_step) / pixel).round() as usize;
    let mut means = Array2::<f64>::zeros((g.n_lat, g.n_lon));
    for i in 0..g.n_lat {
        for j in 0..g.n_lon {
            let mut s = 0.0;
            for t in 0..field.time.len {
                s += field.u[[t, 1, i, j]].hypot(field.v[[t, 1, i, j]]);
            }
            means[[i, j]] = s / field.time.len as f64;
        }
    }
    let values = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let lat = north - (r as f64 + 0.5) * pixel;
        let lon = west + (c as f64 + 0.5) * pixel;
        let i = (((lat - g.lat_start) / g.lat_step).round().max(0.0) as usize).min(g.n_lat - 1);
        let j = (((lon - g.lon_start) / g.lon_step).round().max(0.0) as usize).min(g.n_lon - 1);
        means[[i, j]] * scale * (1.0 + 0.02 * ((r + 2 * c) % 5) as f64)
    });
    MeanWindRaster::new(LatLon::new(north, west), pixel, field.levels.hi(), values, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub fleet: PathBuf,
    pub wind_field: PathBuf,
    pub raster: PathBuf,
    pub observed_dir: PathBuf,
    pub reference_capacity: PathBuf,
}

/// Writes a complete runnable fixture into `dir`.
pub fn write_fixture(dir: &Path, opts: &FixtureOptions) -> Result<FixturePaths> {
    let io = |p: &Path, e| Error::io(p, e);
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let paths = FixturePaths {
        dir: dir.to_path_buf(),
        config: dir.join("windval.toml"),
        fleet: dir.join("fleet.csv"),
        wind_field: dir.join("wind.nc"),
        raster: dir.join("gwa3.asc"),
        observed_dir: dir.join("observed"),
        reference_capacity: dir.join("reference_capacity.csv"),
    };
    let levels = HeightPair::new(opts.levels.0, opts.levels.1)?;
    let field = synthetic_wind_field(&opts.grid, TimeAxis::hourly(opts.start, opts.hours), levels, opts.seed)?;
    write_netcdf(&field, &paths.wind_field)?;
    let fleet = synthetic_fleet(opts.parks, &opts.grid, opts.start, opts.seed);
    write_fleet(&fleet, &paths.fleet)?;
    write_ascii_grid(&synthetic_raster(&field, 0.125, 1.08)?, &paths.raster)?;

    fs::create_dir_all(&paths.observed_dir).map_err(|e| io(&paths.observed_dir, e))?;
    for (k, r) in fleet.iter().enumerate() {
        let mut obs = synthetic_observed(r, &field, opts.seed.wrapping_add(k as u64 + 1))?;
        if k == 0 && obs.len() > 1100 {
            // a stuck sensor, for the constant-run rule to find
            for i in 1000..1030 {
                obs.values[i] = 1234.5;
                obs.mask[i] = None;
            }
        }
        let file = paths.observed_dir.join(format!("{}.csv", r.name.to_lowercase()));
        write_cleaned_csv(&obs, &file)?;
    }

    let mut reference = String::from("year,capacity_mw\n");
    let first = fleet
        .iter()
        .filter_map(|r| r.commissioning)
        .map(|c| c.year_value())
        .min()
        .unwrap_or(opts.start.year());
    let last = (opts.start + Duration::hours(opts.hours as i64)).year();
    for year in first..=last {
        let mw: f64 = fleet
            .iter()
            .filter(|r| r.commissioning.is_some_and(|c| c.year_value() <= year))
            .filter_map(|r| r.capacity_kw)
            .sum::<f64>()
            / 1000.0;
        reference.push_str(&format!("{year},{mw}\n"));
    }
    fs::write(&paths.reference_capacity, reference).map_err(|e| io(&paths.reference_capacity, e))?;

    let config = format!(
        r#"output_dir = "out"
seed = {seed}

[paths]
fleet = "fleet.csv"
observed_dir = "observed"
reference_capacity = "reference_capacity.csv"

[datasets.fixture]
wind_field = "wind.nc"

[[corrections]]
tag = "none"

[[corrections]]
tag = "gwa3"
raster = "gwa3.asc"
height_m = {h}
"#,
        seed = opts.seed,
        h = opts.levels.1
    );
    fs::write(&paths.config, config).map_err(|e| io(&paths.config, e))?;
    Ok(paths)
}
