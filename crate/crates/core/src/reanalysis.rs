//! Gridded reanalysis wind fields: loading, subsetting and cell lookup.
//!
//! Two storage formats are accepted. NetCDF classic files with dimensions
//! `(time, level, lat, lon)` and variables `u`, `v`, and a plain-text CSV
//! fixture format:
//!
//! ```text
//! # levels_m: 10,100
//! # units: m/s
//! time,lat,lon,u_lo,v_lo,u_hi,v_hi
//! 2020-01-01T00:00:00Z,-5.0,-36.0,3.1,0.4,5.2,1.0
//! ```
//!
//! The `levels_m` comment is required; `units` defaults to m/s.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::Duration;
use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{format_instant, parse_instant, Instant, TimeAxis, TimeRange};
use crate::wind_math::HeightPair;

/// Regular latitude/longitude grid of cell centers, both axes ascending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lat_start: f64,
    pub lat_step: f64,
    pub lon_start: f64,
    pub lon_step: f64,
    pub n_lat: usize,
    pub n_lon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub i_lat: usize,
    pub i_lon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Inclusive latitude/longitude rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn everything() -> Self {
        Self {
            lat_min: f64::NEG_INFINITY,
            lat_max: f64::INFINITY,
            lon_min: f64::NEG_INFINITY,
            lon_max: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Lo,
    Hi,
}

impl Level {
    fn index(self) -> usize {
        match self {
            Level::Lo => 0,
            Level::Hi => 1,
        }
    }
}

impl Grid {
    pub fn new(
        lat_start: f64,
        lat_step: f64,
        lon_start: f64,
        lon_step: f64,
        n_lat: usize,
        n_lon: usize,
    ) -> Result<Self> {
        let ok = lat_step > 0.0
            && lon_step > 0.0
            && n_lat >= 1
            && n_lon >= 1
            && lat_start.is_finite()
            && lon_start.is_finite();
        if !ok {
            return Err(Error::Format(format!(
                "invalid grid: start ({lat_start}, {lon_start}), step ({lat_step}, {lon_step}), size {n_lat}x{n_lon}"
            )));
        }
        Ok(Self {
            lat_start,
            lat_step,
            lon_start,
            lon_step,
            n_lat,
            n_lon,
        })
    }

    pub fn lat_center(&self, i: usize) -> f64 {
        self.lat_start + self.lat_step * i as f64
    }

    pub fn lon_center(&self, j: usize) -> f64 {
        self.lon_start + self.lon_step * j as f64
    }

    pub fn center(&self, idx: GridIndex) -> LatLon {
        LatLon::new(self.lat_center(idx.i_lat), self.lon_center(idx.i_lon))
    }

    pub fn contains_index(&self, idx: GridIndex) -> bool {
        idx.i_lat < self.n_lat && idx.i_lon < self.n_lon
    }
}

/// Nearest cell center in degree space. Ties go to the lower latitude index,
/// then the lower longitude index.
pub fn nearest_cell(grid: &Grid, location: LatLon) -> Result<GridIndex> {
    if !(location.lat.is_finite() && location.lon.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite location ({}, {})",
            location.lat, location.lon
        )));
    }
    let i_lat = nearest_on_axis(location.lat, grid.lat_start, grid.lat_step, grid.n_lat);
    let i_lon = nearest_on_axis(location.lon, grid.lon_start, grid.lon_step, grid.n_lon);
    match (i_lat, i_lon) {
        (Some(i_lat), Some(i_lon)) => Ok(GridIndex { i_lat, i_lon }),
        _ => Err(Error::OutOfDomain {
            lat: location.lat,
            lon: location.lon,
        }),
    }
}

fn nearest_on_axis(x: f64, start: f64, step: f64, n: usize) -> Option<usize> {
    let last = start + step * (n - 1) as f64;
    if x < start - step || x > last + step {
        return None;
    }
    let f = (x - start) / step;
    // exact midpoints round down
    let k = (f - 0.5).ceil();
    Some(k.clamp(0.0, (n - 1) as f64) as usize)
}

/// Gridded u/v wind components at two heights, `[time, level, lat, lon]`, m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    pub grid: Grid,
    pub time: TimeAxis,
    pub levels: HeightPair<f64>,
    pub u: Array4<f64>,
    pub v: Array4<f64>,
}

impl WindField {
    pub fn new(grid: Grid, time: TimeAxis, levels: HeightPair<f64>, u: Array4<f64>, v: Array4<f64>) -> Result<Self> {
        let shape = [time.len, 2, grid.n_lat, grid.n_lon];
        if u.shape() != shape || v.shape() != shape {
            return Err(Error::Format(format!(
                "component arrays {:?}/{:?} do not match expected shape {:?}",
                u.shape(),
                v.shape(),
                shape
            )));
        }
        if time.len == 0 {
            return Err(Error::EmptySelection("wind field has no timesteps".into()));
        }
        if let Some(pos) = u.iter().chain(v.iter()).position(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite wind component at flat index {pos}")));
        }
        Ok(Self {
            grid,
            time,
            levels,
            u,
            v,
        })
    }

    pub fn height(&self, level: Level) -> f64 {
        match level {
            Level::Lo => self.levels.lo(),
            Level::Hi => self.levels.hi(),
        }
    }

    /// Restricts the field to cells with centers inside `bbox` and instants inside `range`.
    pub fn subset(&self, bbox: &BBox, range: &TimeRange) -> Result<Self> {
        let lat_idx: Vec<usize> = (0..self.grid.n_lat)
            .filter(|&i| {
                let c = self.grid.lat_center(i);
                bbox.lat_min <= c && c <= bbox.lat_max
            })
            .collect();
        let lon_idx: Vec<usize> = (0..self.grid.n_lon)
            .filter(|&j| {
                let c = self.grid.lon_center(j);
                bbox.lon_min <= c && c <= bbox.lon_max
            })
            .collect();
        if lat_idx.is_empty() || lon_idx.is_empty() {
            return Err(Error::EmptySelection(
                "bounding box does not contain any cell center".into(),
            ));
        }
        let t = self.time.select(range);
        if t.is_empty() {
            return Err(Error::EmptySelection(
                "time range does not intersect the time axis".into(),
            ));
        }
        // selected indices are contiguous because the axes are monotone
        let (la, lb) = (lat_idx[0], *lat_idx.last().unwrap() + 1);
        let (oa, ob) = (lon_idx[0], *lon_idx.last().unwrap() + 1);
        let grid = Grid {
            lat_start: self.grid.lat_center(la),
            lon_start: self.grid.lon_center(oa),
            n_lat: lb - la,
            n_lon: ob - oa,
            ..self.grid
        };
        let sl = s![t.clone(), .., la..lb, oa..ob];
        Ok(Self {
            grid,
            time: self.time.slice(t),
            levels: self.levels,
            u: self.u.slice(sl).to_owned(),
            v: self.v.slice(sl).to_owned(),
        })
    }

    fn check_cell(&self, cell: GridIndex) -> Result<()> {
        if self.grid.contains_index(cell) {
            Ok(())
        } else {
            Err(Error::Index(format!(
                "cell ({}, {}) outside {}x{} grid",
                cell.i_lat, cell.i_lon, self.grid.n_lat, self.grid.n_lon
            )))
        }
    }
}

/// Stored u and v components of one cell at one level.
pub fn extract_series(field: &WindField, cell: GridIndex, level: Level) -> Result<(Vec<f64>, Vec<f64>)> {
    field.check_cell(cell)?;
    let k = level.index();
    let u = field.u.slice(s![.., k, cell.i_lat, cell.i_lon]).to_vec();
    let v = field.v.slice(s![.., k, cell.i_lat, cell.i_lon]).to_vec();
    Ok((u, v))
}

/// Inverse of [`extract_series`].
pub fn insert_series(field: &mut WindField, cell: GridIndex, level: Level, u: &[f64], v: &[f64]) -> Result<()> {
    field.check_cell(cell)?;
    if u.len() != field.time.len || v.len() != field.time.len {
        return Err(Error::Index(format!(
            "series length {}/{} does not match time axis {}",
            u.len(),
            v.len(),
            field.time.len
        )));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite wind component".into()));
    }
    let k = level.index();
    for t in 0..field.time.len {
        field.u[[t, k, cell.i_lat, cell.i_lon]] = u[t];
        field.v[[t, k, cell.i_lat, cell.i_lon]] = v[t];
    }
    Ok(())
}

/// Loads a wind field from NetCDF (`.nc`) or the CSV fixture format, then subsets it.
pub fn load_wind_field(path: &Path, bbox: &BBox, range: &TimeRange) -> Result<WindField> {
    let full = match path.extension().and_then(|e| e.to_str()) {
        Some("nc") | Some("nc3") | Some("cdf") => read_netcdf(path)?,
        _ => read_csv_fixture(path)?,
    };
    full.subset(bbox, range)
}

fn speed_unit_factor(units: &str) -> Result<f64> {
    let u = units.trim().to_ascii_lowercase();
    match u.as_str() {
        "m/s" | "m s-1" | "m s**-1" | "m.s-1" | "ms-1" | "m s^-1" => Ok(1.0),
        "km/h" | "km h-1" | "kmh" | "km h**-1" => Ok(1.0 / 3.6),
        "kt" | "kn" | "knot" | "knots" => Ok(1852.0 / 3600.0),
        _ => Err(Error::Format(format!("unsupported speed units `{units}`"))),
    }
}

/// Infers a regular ascending axis from distinct coordinate values.
fn regular_axis(values: &[f64], name: &str) -> Result<(f64, f64)> {
    match values {
        [] => Err(Error::Format(format!("{name} axis is empty"))),
        [only] => Ok((*only, 1.0)),
        _ => {
            let step = values[1] - values[0];
            for w in values.windows(2) {
                if ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs().max(1e-9) {
                    return Err(Error::Format(format!("{name} axis is not regularly spaced")));
                }
            }
            Ok((values[0], step))
        }
    }
}

fn axis_position(x: f64, start: f64, step: f64, n: usize) -> Option<usize> {
    let f = (x - start) / step;
    let k = f.round();
    ((f - k).abs() < 1e-6 && k >= 0.0 && (k as usize) < n).then_some(k as usize)
}

pub fn read_csv_fixture(path: &Path) -> Result<WindField> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut levels: Option<(f64, f64)> = None;
    let mut unit_factor = 1.0;
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            break;
        }
        let Some(comment) = line.trim_start().strip_prefix('#') else {
            body.push_str(&line);
            break;
        };
        let Some((key, value)) = comment.split_once(':') else {
            continue;
        };
        match key.trim() {
            "levels_m" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Format(format!("bad levels_m `{}`", value.trim())))?;
                if parts.len() != 2 {
                    return Err(Error::Format("levels_m must list exactly two heights".into()));
                }
                levels = Some((parts[0], parts[1]));
            }
            "units" => unit_factor = speed_unit_factor(value)?,
            _ => {}
        }
    }
    std::io::Read::read_to_string(&mut reader, &mut body).map_err(|e| Error::io(path, e))?;
    let (h_lo, h_hi) = levels.ok_or_else(|| Error::MissingVariable("levels_m".into()))?;
    let levels = HeightPair::new(h_lo, h_hi)?;

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingVariable(name.to_owned()))
    };
    let cols = [
        col("time")?,
        col("lat")?,
        col("lon")?,
        col("u_lo")?,
        col("v_lo")?,
        col("u_hi")?,
        col("v_hi")?,
    ];

    struct Row {
        t: Instant,
        lat: f64,
        lon: f64,
        vals: [f64; 4],
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(k as u64 + 2);
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize| {
            field(c).parse::<f64>().map_err(|_| Error::Row {
                line,
                message: format!("invalid number `{}` in column {}", field(c), &headers[c]),
            })
        };
        let t = parse_instant(field(cols[0])).map_err(|e| Error::Row {
            line,
            message: e.to_string(),
        })?;
        let vals = [num(cols[3])?, num(cols[4])?, num(cols[5])?, num(cols[6])?];
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(Error::Row {
                line,
                message: "non-finite wind component".into(),
            });
        }
        rows.push(Row {
            t,
            lat: num(cols[1])?,
            lon: num(cols[2])?,
            vals,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptySelection(format!("{} has no data rows", path.display())));
    }

    let times: Vec<Instant> = rows.iter().map(|r| r.t).collect::<BTreeSet<_>>().into_iter().collect();
    let time = TimeAxis::from_instants(&times)?;
    let lats = distinct_sorted(rows.iter().map(|r| r.lat));
    let lons = distinct_sorted(rows.iter().map(|r| r.lon));
    let (lat0, dlat) = regular_axis(&lats, "lat")?;
    let (lon0, dlon) = regular_axis(&lons, "lon")?;
    let grid = Grid::new(lat0, dlat, lon0, dlon, lats.len(), lons.len())?;

    let shape = (time.len, 2, grid.n_lat, grid.n_lon);
    let mut u = Array4::<f64>::from_elem(shape, f64::NAN);
    let mut v = Array4::<f64>::from_elem(shape, f64::NAN);
    for r in &rows {
        let ti = time.index_of(r.t).expect("instant from axis");
        let i = axis_position(r.lat, lat0, dlat, grid.n_lat).expect("lat from axis");
        let j = axis_position(r.lon, lon0, dlon, grid.n_lon).expect("lon from axis");
        if !u[[ti, 0, i, j]].is_nan() {
            return Err(Error::Format(format!(
                "duplicate row for {} at ({}, {})",
                format_instant(r.t),
                r.lat,
                r.lon
            )));
        }
        u[[ti, 0, i, j]] = r.vals[0] * unit_factor;
        v[[ti, 0, i, j]] = r.vals[1] * unit_factor;
        u[[ti, 1, i, j]] = r.vals[2] * unit_factor;
        v[[ti, 1, i, j]] = r.vals[3] * unit_factor;
    }
    if u.iter().any(|x| x.is_nan()) {
        return Err(Error::Format(
            "fixture does not cover every (time, lat, lon) combination".into(),
        ));
    }
    WindField::new(grid, time, levels, u, v)
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

pub fn write_csv_fixture(field: &WindField, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "# levels_m: {},{}", field.levels.lo(), field.levels.hi()).map_err(io)?;
    writeln!(out, "# units: m/s").map_err(io)?;
    writeln!(out, "time,lat,lon,u_lo,v_lo,u_hi,v_hi").map_err(io)?;
    for t in 0..field.time.len {
        let ts = format_instant(field.time.at(t));
        for i in 0..field.grid.n_lat {
            for j in 0..field.grid.n_lon {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    ts,
                    field.grid.lat_center(i),
                    field.grid.lon_center(j),
                    field.u[[t, 0, i, j]],
                    field.v[[t, 0, i, j]],
                    field.u[[t, 1, i, j]],
                    field.v[[t, 1, i, j]],
                )
                .map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

// ---------------------------------------------------------------------------
// NetCDF classic
// ---------------------------------------------------------------------------

fn nc_err(path: &Path, e: impl std::fmt::Debug) -> Error {
    Error::Format(format!("{}: {e:?}", path.display()))
}

fn nc_mapper<E: std::fmt::Debug>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| nc_err(path, e)
}

fn first_present<'a>(ds: &netcdf3::DataSet, names: &[&'a str]) -> Option<&'a str> {
    names.iter().copied().find(|n| ds.has_var(n))
}

/// CF attributes needed to decode one variable.
struct VarMeta {
    scale: f64,
    offset: f64,
    fills: Vec<f64>,
    units: Option<String>,
}

impl VarMeta {
    fn of(ds: &netcdf3::DataSet, name: &str) -> Self {
        let attr = |a: &str| -> Option<f64> {
            let at = ds.get_var_attr(name, a)?;
            at.get_f64()
                .map(|x| x[0])
                .or_else(|| at.get_f32().map(|x| x[0] as f64))
                .or_else(|| at.get_i16().map(|x| x[0] as f64))
                .or_else(|| at.get_i32().map(|x| x[0] as f64))
                .or_else(|| at.get_i8().map(|x| x[0] as f64))
        };
        Self {
            scale: attr("scale_factor").unwrap_or(1.0),
            offset: attr("add_offset").unwrap_or(0.0),
            fills: ["_FillValue", "missing_value"].iter().filter_map(|a| attr(a)).collect(),
            units: ds.get_var_attr_as_string(name, "units"),
        }
    }
}

/// Reads a variable as `f64`, applying CF packing attributes and rejecting fill values.
fn read_numeric(reader: &mut netcdf3::FileReader, name: &str) -> Result<Vec<f64>> {
    use netcdf3::DataVector;
    let meta = VarMeta::of(reader.data_set(), name);
    let path = reader.file_path().to_owned();
    let raw: Vec<f64> = match reader.read_var(name).map_err(nc_mapper(&path))? {
        DataVector::I8(x) => x.into_iter().map(f64::from).collect(),
        DataVector::U8(x) => x.into_iter().map(f64::from).collect(),
        DataVector::I16(x) => x.into_iter().map(f64::from).collect(),
        DataVector::I32(x) => x.into_iter().map(f64::from).collect(),
        DataVector::F32(x) => x.into_iter().map(f64::from).collect(),
        DataVector::F64(x) => x,
    };
    if let Some(pos) = raw
        .iter()
        .position(|x| meta.fills.iter().any(|f| f == x) || !x.is_finite())
    {
        return Err(Error::Format(format!(
            "variable `{name}` has a missing value at flat index {pos}"
        )));
    }
    Ok(raw.into_iter().map(|x| x * meta.scale + meta.offset).collect())
}

fn parse_time_units(units: &str) -> Result<(i64, Instant)> {
    let (unit, since) = units
        .split_once(" since ")
        .ok_or_else(|| Error::Format(format!("unsupported time units `{units}`")))?;
    let secs = match unit.trim() {
        "seconds" | "second" | "s" => 1,
        "minutes" | "minute" | "min" => 60,
        "hours" | "hour" | "h" => 3600,
        "days" | "day" | "d" => 86400,
        other => return Err(Error::Format(format!("unsupported time unit `{other}`"))),
    };
    let since = since.trim().trim_end_matches(" UTC").trim_end_matches(".0");
    Ok((secs, parse_instant(since)?))
}

pub fn read_netcdf(path: &Path) -> Result<WindField> {
    let mut reader = netcdf3::FileReader::open(path).map_err(nc_mapper(path))?;
    let ds = reader.data_set();
    for var in ["u", "v"] {
        if !ds.has_var(var) {
            return Err(Error::MissingVariable(var.into()));
        }
    }
    let lat_name = first_present(ds, &["lat", "latitude"]).ok_or_else(|| Error::MissingVariable("lat".into()))?;
    let lon_name = first_present(ds, &["lon", "longitude"]).ok_or_else(|| Error::MissingVariable("lon".into()))?;
    let level_name = first_present(ds, &["level", "height"]).ok_or_else(|| Error::MissingVariable("level".into()))?;
    if !ds.has_var("time") {
        return Err(Error::MissingVariable("time".into()));
    }
    let expected = ["time", level_name, lat_name, lon_name];
    for var in ["u", "v"] {
        let dims = ds.get_var(var).expect("checked").dim_names();
        if dims != expected {
            return Err(Error::Format(format!(
                "variable `{var}` has dimensions {dims:?}, expected {expected:?}"
            )));
        }
    }
    let time_units = VarMeta::of(ds, "time")
        .units
        .ok_or_else(|| Error::Format("time variable lacks units".into()))?;
    let u_units = VarMeta::of(ds, "u").units;
    let v_units = VarMeta::of(ds, "v").units;

    let (unit_secs, epoch) = parse_time_units(&time_units)?;
    let times: Vec<Instant> = read_numeric(&mut reader, "time")?
        .into_iter()
        .map(|x| epoch + Duration::seconds((x * unit_secs as f64).round() as i64))
        .collect();
    let time = TimeAxis::from_instants(&times)?;

    let levels = read_numeric(&mut reader, level_name)?;
    if levels.len() != 2 {
        return Err(Error::Format(format!("expected two levels, found {}", levels.len())));
    }
    let level_flip = levels[0] > levels[1];
    let heights = HeightPair::new(levels[0].min(levels[1]), levels[0].max(levels[1]))?;

    let mut lats = read_numeric(&mut reader, lat_name)?;
    let mut lons = read_numeric(&mut reader, lon_name)?;
    let lat_flip = lats.len() > 1 && lats[0] > lats[1];
    let lon_flip = lons.len() > 1 && lons[0] > lons[1];
    if lat_flip {
        lats.reverse();
    }
    if lon_flip {
        lons.reverse();
    }
    let (lat0, dlat) = regular_axis(&lats, "lat")?;
    let (lon0, dlon) = regular_axis(&lons, "lon")?;
    let grid = Grid::new(lat0, dlat, lon0, dlon, lats.len(), lons.len())?;

    let shape = (time.len, 2, grid.n_lat, grid.n_lon);
    let mut load = |var: &str, units: Option<String>| -> Result<Array4<f64>> {
        let factor = match units {
            Some(u) => speed_unit_factor(&u)?,
            None => 1.0,
        };
        let data = read_numeric(&mut reader, var)?;
        let mut arr = Array4::from_shape_vec(shape, data).map_err(nc_mapper(path))?;
        arr.mapv_inplace(|x| x * factor);
        if level_flip {
            arr.invert_axis(ndarray::Axis(1));
        }
        if lat_flip {
            arr.invert_axis(ndarray::Axis(2));
        }
        if lon_flip {
            arr.invert_axis(ndarray::Axis(3));
        }
        Ok(arr.as_standard_layout().into_owned())
    };
    let u = load("u", u_units)?;
    let v = load("v", v_units)?;
    WindField::new(grid, time, heights, u, v)
}

/// Writes a field as NetCDF classic with `f64` variables.
pub fn write_netcdf(field: &WindField, path: &Path) -> Result<()> {
    use netcdf3::{DataSet, FileWriter, Version};
    let mut ds = DataSet::new();
    ds.add_fixed_dim("time", field.time.len).map_err(nc_mapper(path))?;
    ds.add_fixed_dim("level", 2).map_err(nc_mapper(path))?;
    ds.add_fixed_dim("lat", field.grid.n_lat).map_err(nc_mapper(path))?;
    ds.add_fixed_dim("lon", field.grid.n_lon).map_err(nc_mapper(path))?;
    ds.add_var_f64("time", &["time"]).map_err(nc_mapper(path))?;
    ds.add_var_attr_string(
        "time",
        "units",
        format!("seconds since {}", format_instant(field.time.start)),
    )
    .map_err(nc_mapper(path))?;
    ds.add_var_f64("level", &["level"]).map_err(nc_mapper(path))?;
    ds.add_var_attr_string("level", "units", "m").map_err(nc_mapper(path))?;
    ds.add_var_f64("lat", &["lat"]).map_err(nc_mapper(path))?;
    ds.add_var_f64("lon", &["lon"]).map_err(nc_mapper(path))?;
    for var in ["u", "v"] {
        ds.add_var_f64(var, &["time", "level", "lat", "lon"])
            .map_err(nc_mapper(path))?;
        ds.add_var_attr_string(var, "units", "m s-1").map_err(nc_mapper(path))?;
    }
    let mut w = FileWriter::open(path).map_err(nc_mapper(path))?;
    w.set_def(&ds, Version::Offset64Bit, 0).map_err(nc_mapper(path))?;
    let time: Vec<f64> = (0..field.time.len)
        .map(|i| (field.time.step_seconds * i as i64) as f64)
        .collect();
    w.write_var_f64("time", &time).map_err(nc_mapper(path))?;
    w.write_var_f64("level", &[field.levels.lo(), field.levels.hi()])
        .map_err(nc_mapper(path))?;
    let lats: Vec<f64> = (0..field.grid.n_lat).map(|i| field.grid.lat_center(i)).collect();
    let lons: Vec<f64> = (0..field.grid.n_lon).map(|j| field.grid.lon_center(j)).collect();
    w.write_var_f64("lat", &lats).map_err(nc_mapper(path))?;
    w.write_var_f64("lon", &lons).map_err(nc_mapper(path))?;
    w.write_var_f64("u", &field.u.iter().copied().collect::<Vec<_>>())
        .map_err(nc_mapper(path))?;
    w.write_var_f64("v", &field.v.iter().copied().collect::<Vec<_>>())
        .map_err(nc_mapper(path))?;
    w.close().map_err(nc_mapper(path))
}
