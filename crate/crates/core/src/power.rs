//! Specific-power power curves, installed-capacity timelines and the
//! per-location simulation chain.

use std::path::Path;

use chrono::{Datelike, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::bias::{apply_correction, check_height, correction_factor, sample_raster, CorrectionFactor, MeanWindRaster};
use crate::error::{Error, Result};
use crate::fleet::{DatePrecision, FleetRecord};
use crate::reanalysis::{extract_series, nearest_cell, GridIndex, Level, WindField};
use crate::scalar::Scalar;
use crate::time::{format_instant, Instant, TimeAxis};
use crate::wind_math::{effective_speed, extrapolate_to_hub, hellmann_exponent, ShearFlag};

pub const CUT_IN_SPEED: f64 = 3.5;
pub const CUT_OUT_SPEED: f64 = 25.0;
/// Air density, kg/m³.
pub const AIR_DENSITY: f64 = 1.225;
/// Reference rotor power coefficient at rated speed.
pub const REFERENCE_POWER_COEFFICIENT: f64 = 0.45;
pub const MIN_SPECIFIC_POWER: f64 = 100.0;

/// Installed capacity per swept rotor area, W/m².
pub fn specific_power<T: Scalar>(capacity_kw: T, rotor_diameter_m: T) -> T {
    let radius = rotor_diameter_m / T::lit(2.0);
    T::lit(1000.0) * capacity_kw / (T::lit(std::f64::consts::PI) * radius * radius)
}

/// Normalized power curve driven only by specific power.
///
/// Between cut-in and rated speed the output follows
/// `(v³ - v_in³) / (v_rated³ - v_in³)`; rated speed is where a rotor with the
/// reference power coefficient reaches the machine's specific power,
/// `v_rated = (2 sp / (rho cp))^(1/3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve<T> {
    pub specific_power: T,
    pub cut_in: T,
    pub rated_speed: T,
    pub cut_out: T,
}

pub fn build_power_curve<T: Scalar>(sp: T) -> Result<PowerCurve<T>> {
    if !(sp >= T::lit(MIN_SPECIFIC_POWER) && sp.is_finite()) {
        return Err(Error::Domain(format!(
            "specific power {sp} W/m² is below {MIN_SPECIFIC_POWER}"
        )));
    }
    let rated = (T::lit(2.0) * sp / T::lit(AIR_DENSITY * REFERENCE_POWER_COEFFICIENT)).cbrt();
    let curve = PowerCurve {
        specific_power: sp,
        cut_in: T::lit(CUT_IN_SPEED),
        rated_speed: rated,
        cut_out: T::lit(CUT_OUT_SPEED),
    };
    if curve.rated_speed >= curve.cut_out || curve.rated_speed.is_nan() {
        return Err(Error::Domain(format!(
            "specific power {sp} W/m² puts rated speed above cut-out"
        )));
    }
    Ok(curve)
}

impl<T: Scalar> PowerCurve<T> {
    /// Fraction of rated power at hub-height speed `v`.
    pub fn normalized(&self, v: T) -> T {
        if v < self.cut_in || v >= self.cut_out {
            T::zero()
        } else if v >= self.rated_speed {
            T::one()
        } else {
            let ci3 = self.cut_in.powi(3);
            (v.powi(3) - ci3) / (self.rated_speed.powi(3) - ci3)
        }
    }
}

pub fn power_output<T: Scalar>(curve: &PowerCurve<T>, v_hub: T, installed_kw: T) -> T {
    installed_kw * curve.normalized(v_hub)
}

/// Installed capacity of one record at each timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityTimeline {
    pub time: TimeAxis,
    pub installed_kw: Vec<f64>,
    pub warning: Option<String>,
}

fn midnight(date: NaiveDate) -> Instant {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
}

/// Day and month precision give a step at the commissioning instant; year
/// precision ramps linearly from January 1st to the end of that year.
pub fn capacity_timeline(record: &FleetRecord, time: &TimeAxis) -> Result<CapacityTimeline> {
    let capacity = record
        .capacity_kw
        .filter(|c| *c > 0.0)
        .ok_or_else(|| Error::Data(format!("record `{}` has no capacity", record.id)))?;
    let comm = record
        .commissioning
        .ok_or_else(|| Error::Data(format!("record `{}` has no commissioning date", record.id)))?;
    let installed: Vec<f64> = match comm.precision {
        DatePrecision::Day | DatePrecision::Month => {
            let at = midnight(comm.date);
            (0..time.len)
                .map(|i| if time.at(i) >= at { capacity } else { 0.0 })
                .collect()
        }
        DatePrecision::Year => {
            let start = midnight(NaiveDate::from_ymd_opt(comm.date.year(), 1, 1).expect("jan 1"));
            let end = midnight(NaiveDate::from_ymd_opt(comm.date.year() + 1, 1, 1).expect("jan 1"));
            let span = (end - start).num_seconds() as f64;
            (0..time.len)
                .map(|i| {
                    let frac = (time.at(i) - start).num_seconds() as f64 / span;
                    capacity * frac.clamp(0.0, 1.0)
                })
                .collect()
        }
    };
    let warning = installed
        .iter()
        .all(|&c| c == 0.0)
        .then(|| format!("record `{}` is commissioned after the simulated period", record.id));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(CapacityTimeline {
        time: *time,
        installed_kw: installed,
        warning,
    })
}

/// Mean wind layer used for bias correction, tagged with its source (e.g. `gwa3`).
#[derive(Debug, Clone)]
pub struct GwaLayer {
    pub tag: String,
    pub raster: MeanWindRaster,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub dataset_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub gwa: Option<String>,
    pub cell: GridIndex,
    pub correction: Option<CorrectionFactor<f64>>,
}

/// Per-timestep simulation flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags {
    pub shear_fallback: bool,
    pub shear_clamped: bool,
}

impl StepFlags {
    pub fn encode(self) -> &'static str {
        match (self.shear_fallback, self.shear_clamped) {
            (false, false) => "",
            (true, _) => "shear_fallback",
            (false, true) => "shear_clamped",
        }
    }

    pub fn decode(s: &str) -> Self {
        Self {
            shear_fallback: s.contains("shear_fallback"),
            shear_clamped: s.contains("shear_clamped"),
        }
    }
}

/// Simulated power of one record, kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSeries {
    pub record_id: String,
    pub time: TimeAxis,
    pub power_kw: Vec<f64>,
    pub installed_kw: Vec<f64>,
    pub flags: Vec<StepFlags>,
    pub provenance: Provenance,
}

/// Hub-height wind speeds for one record, before conversion to power.
#[derive(Debug, Clone, PartialEq)]
pub struct HubWind {
    pub cell: GridIndex,
    pub speed_lo: Vec<f64>,
    pub speed_hi: Vec<f64>,
    pub hub_speed: Vec<f64>,
    pub flags: Vec<StepFlags>,
}

pub fn hub_wind(record: &FleetRecord, field: &WindField) -> Result<HubWind> {
    let hub = record
        .hub_height_m
        .filter(|h| *h > 0.0)
        .ok_or_else(|| Error::Data("hub height missing".into()))?;
    let cell = nearest_cell(&field.grid, record.location)?;
    let (u_lo, v_lo) = extract_series(field, cell, Level::Lo)?;
    let (u_hi, v_hi) = extract_series(field, cell, Level::Hi)?;
    let speed_lo = u_lo
        .iter()
        .zip(&v_lo)
        .map(|(&u, &v)| effective_speed(u, v))
        .collect::<Result<Vec<_>>>()?;
    let speed_hi = u_hi
        .iter()
        .zip(&v_hi)
        .map(|(&u, &v)| effective_speed(u, v))
        .collect::<Result<Vec<_>>>()?;
    let h_ref = field.levels.hi();
    let mut hub_speed = Vec::with_capacity(speed_hi.len());
    let mut flags = Vec::with_capacity(speed_hi.len());
    for (&lo, &hi) in speed_lo.iter().zip(&speed_hi) {
        let shear = hellmann_exponent(lo, hi, field.levels);
        hub_speed.push(extrapolate_to_hub(hi, h_ref, shear.alpha, hub)?);
        flags.push(StepFlags {
            shear_fallback: shear.flag == ShearFlag::Fallback,
            shear_clamped: shear.flag == ShearFlag::Clamped,
        });
    }
    Ok(HubWind {
        cell,
        speed_lo,
        speed_hi,
        hub_speed,
        flags,
    })
}

/// Full chain for one record: nearest cell, effective speeds, shear
/// exponent, hub-height extrapolation, optional mean-bias correction, power
/// curve and capacity timeline.
pub fn simulate_location(
    record: &FleetRecord,
    field: &WindField,
    gwa: Option<&GwaLayer>,
    options: &SimulationOptions,
) -> Result<GenerationSeries> {
    simulate_inner(record, field, gwa, options).map_err(|e| e.for_record(&record.id))
}

fn simulate_inner(
    record: &FleetRecord,
    field: &WindField,
    gwa: Option<&GwaLayer>,
    options: &SimulationOptions,
) -> Result<GenerationSeries> {
    let wind = hub_wind(record, field)?;
    let (hub_speed, correction) = match gwa {
        Some(layer) => {
            check_height(layer.raster.height, field.levels.hi())?;
            let gwa_mean = sample_raster(&layer.raster, record.location)?;
            let cf = correction_factor(gwa_mean, &wind.speed_hi)?;
            (apply_correction(&wind.hub_speed, &cf), Some(cf))
        }
        None => (wind.hub_speed, None),
    };
    let sp = record
        .specific_power()
        .ok_or_else(|| Error::Data("specific power undefined".into()))?;
    let curve = build_power_curve(sp)?;
    let capacity = capacity_timeline(record, &field.time)?;
    let power_kw = hub_speed
        .iter()
        .zip(&capacity.installed_kw)
        .map(|(&v, &c)| power_output(&curve, v, c))
        .collect();
    Ok(GenerationSeries {
        record_id: record.id.clone(),
        time: field.time,
        power_kw,
        installed_kw: capacity.installed_kw,
        flags: wind.flags,
        provenance: Provenance {
            dataset: options.dataset_tag.clone(),
            gwa: gwa.map(|g| g.tag.clone()),
            cell: wind.cell,
            correction,
        },
    })
}

pub const GENERATION_HEADER: [&str; 5] = ["timestamp", "record_id", "power_kw", "installed_kw", "flags"];

pub fn write_generation_csv(series: &GenerationSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GENERATION_HEADER)?;
    for i in 0..series.time.len {
        w.write_record([
            format_instant(series.time.at(i)),
            series.record_id.clone(),
            series.power_kw[i].to_string(),
            series.installed_kw[i].to_string(),
            series.flags[i].encode().to_owned(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a generation CSV back; provenance is not stored per file.
pub fn read_generation_csv(path: &Path, dataset: &str, gwa: Option<&str>) -> Result<GenerationSeries> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != GENERATION_HEADER {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    let mut instants = Vec::new();
    let mut power_kw = Vec::new();
    let mut installed_kw = Vec::new();
    let mut flags = Vec::new();
    let mut record_id = String::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |k: usize| {
            rec[k].parse::<f64>().map_err(|_| Error::Row {
                line,
                message: format!("invalid number `{}`", &rec[k]),
            })
        };
        instants.push(crate::time::parse_instant(&rec[0])?);
        record_id = rec[1].to_owned();
        power_kw.push(num(2)?);
        installed_kw.push(num(3)?);
        flags.push(StepFlags::decode(&rec[4]));
    }
    Ok(GenerationSeries {
        record_id,
        time: TimeAxis::from_instants(&instants)?,
        power_kw,
        installed_kw,
        flags,
        provenance: Provenance {
            dataset: dataset.to_owned(),
            gwa: gwa.map(str::to_owned),
            cell: GridIndex { i_lat: 0, i_lon: 0 },
            correction: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::Commissioning;
    use crate::reanalysis::{Grid, LatLon};
    use crate::wind_math::HeightPair;
    use approx::assert_relative_eq;
    use ndarray::Array4;
    use proptest::prelude::*;

    #[test]
    fn specific_power_examples() {
        let sp = specific_power(2500.0, 100.0);
        assert_relative_eq!(sp, 2_500_000.0 / (std::f64::consts::PI * 2500.0), max_relative = 1e-15);
        assert_relative_eq!(sp, 318.31, epsilon = 0.01);
        assert_relative_eq!(specific_power(5000.0, 100.0), 2.0 * sp, max_relative = 1e-15);
        assert_relative_eq!(
            specific_power(2500.0, 100.0 * 2f64.sqrt()),
            sp / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn curve_contract() {
        let a = build_power_curve(200.0).unwrap();
        let b = build_power_curve(400.0).unwrap();
        assert!(a.rated_speed < b.rated_speed);
        assert_eq!(a.normalized(a.cut_in), 0.0);
        assert_eq!(a.normalized(a.rated_speed), 1.0);
        let mid = a.normalized((a.cut_in + a.rated_speed) / 2.0);
        assert!(mid > 0.0 && mid < 1.0);
        assert_eq!(a.normalized(24.99), 1.0);
        assert_eq!(a.normalized(25.0), 0.0);
        assert_eq!(a.normalized(3.49), 0.0);
        assert!(matches!(build_power_curve(99.0), Err(Error::Domain(_))));
        assert!(build_power_curve(5000.0).is_err());
        // rated speed at 318 W/m² is about 10.5 m/s
        let c = build_power_curve(specific_power(2500.0, 100.0)).unwrap();
        assert_relative_eq!(
            c.rated_speed,
            (2.0 * 318.309_886_18 / (1.225 * 0.45f64)).cbrt(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn power_output_examples() {
        let c = build_power_curve(300.0).unwrap();
        assert_eq!(power_output(&c, 2.0, 2000.0), 0.0);
        assert_eq!(power_output(&c, c.rated_speed, 2000.0), 2000.0);
        assert_eq!(power_output(&c, 25.0, 2000.0), 0.0);
        assert_eq!(power_output(&c, 30.0, 2000.0), 0.0);
        let c32 = build_power_curve(300.0f32).unwrap();
        assert_eq!(power_output(&c32, c32.rated_speed, 1.0), 1.0);
    }

    fn record(comm: Commissioning) -> FleetRecord {
        FleetRecord {
            id: "r".into(),
            name: "r".into(),
            location: LatLon::new(0.0, 0.0),
            capacity_kw: Some(2000.0),
            hub_height_m: Some(100.0),
            rotor_diameter_m: Some(90.0),
            commissioning: Some(comm),
            state: "s".into(),
            country: "c".into(),
        }
    }

    fn year_axis(year: i32) -> TimeAxis {
        let start = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
        let end = Utc.with_ymd_and_hms(year + 1, 1, 1, 0, 0, 0).unwrap();
        TimeAxis::hourly(start, (end - start).num_hours() as usize)
    }

    #[test]
    fn day_precision_step() {
        let axis = year_axis(2019);
        let comm = Commissioning::day(NaiveDate::from_ymd_opt(2019, 3, 10).unwrap());
        let tl = capacity_timeline(&record(comm), &axis).unwrap();
        let k = axis
            .index_of(Utc.with_ymd_and_hms(2019, 3, 10, 0, 0, 0).unwrap())
            .unwrap();
        assert_eq!(tl.installed_kw[k - 1], 0.0);
        assert_eq!(tl.installed_kw[k], 2000.0);
        assert!(tl.installed_kw[..k].iter().all(|&c| c == 0.0));
        assert!(tl.installed_kw[k..].iter().all(|&c| c == 2000.0));

        let month = Commissioning::month(2019, 6).unwrap();
        let tl = capacity_timeline(&record(month), &axis).unwrap();
        let k = axis
            .index_of(Utc.with_ymd_and_hms(2019, 6, 15, 0, 0, 0).unwrap())
            .unwrap();
        assert_eq!((tl.installed_kw[k - 1], tl.installed_kw[k]), (0.0, 2000.0));
    }

    #[test]
    fn year_precision_ramp() {
        let axis = year_axis(2019);
        let tl = capacity_timeline(&record(Commissioning::year(2019).unwrap()), &axis).unwrap();
        assert_eq!(tl.installed_kw[0], 0.0);
        let one_step = 2000.0 / 8760.0;
        // temporal midpoint of the year
        let mid = 8760 / 2;
        assert!((tl.installed_kw[mid] - 1000.0).abs() <= one_step);
        // July 1st sits 1.5 days before the midpoint
        let july1 = axis
            .index_of(Utc.with_ymd_and_hms(2019, 7, 1, 0, 0, 0).unwrap())
            .unwrap();
        assert_relative_eq!(tl.installed_kw[july1], 2000.0 * 181.0 / 365.0, max_relative = 1e-12);
        assert!(tl.installed_kw.windows(2).all(|w| w[1] >= w[0]));

        let later = year_axis(2021);
        let tl = capacity_timeline(&record(Commissioning::year(2019).unwrap()), &later).unwrap();
        assert!(tl.installed_kw.iter().all(|&c| c == 2000.0));
    }

    #[test]
    fn commissioning_after_series() {
        let axis = year_axis(2019);
        let comm = Commissioning::day(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        let tl = capacity_timeline(&record(comm), &axis).unwrap();
        assert!(tl.installed_kw.iter().all(|&c| c == 0.0));
        assert!(tl.warning.is_some());
    }

    fn constant_field(u_lo: f64, u_hi: f64, len: usize) -> WindField {
        let grid = Grid::new(0.0, 0.5, 0.0, 0.5, 1, 1).unwrap();
        let t0 = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
        let mut u = Array4::zeros((len, 2, 1, 1));
        for t in 0..len {
            u[[t, 0, 0, 0]] = u_lo;
            u[[t, 1, 0, 0]] = u_hi;
        }
        let v = Array4::zeros((len, 2, 1, 1));
        WindField::new(
            grid,
            TimeAxis::hourly(t0, len),
            HeightPair::new(10.0, 100.0).unwrap(),
            u,
            v,
        )
        .unwrap()
    }

    fn opts() -> SimulationOptions {
        SimulationOptions {
            dataset_tag: "fixture".into(),
        }
    }

    #[test]
    fn saturated_and_calm() {
        let r = record(Commissioning::year(2000).unwrap());
        let rated = build_power_curve(r.specific_power().unwrap()).unwrap().rated_speed;
        let f = constant_field(rated, rated + 0.5, 24);
        let g = simulate_location(&r, &f, None, &opts()).unwrap();
        assert!(g.power_kw.iter().all(|&p| p == 2000.0));

        let calm = constant_field(0.0, 0.0, 24);
        let g = simulate_location(&r, &calm, None, &opts()).unwrap();
        assert!(g.power_kw.iter().all(|&p| p == 0.0));
        assert!(g.flags.iter().all(|f| f.shear_fallback));
    }

    #[test]
    fn hand_composed_chain() {
        // three steps on a single cell, composed by hand
        let grid = Grid::new(-5.0, 0.5, -36.0, 0.5, 1, 1).unwrap();
        let t0 = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
        let comps = [
            [(3.0, 4.0), (6.0, 8.0)],
            [(1.0, 1.0), (4.0, 3.0)],
            [(0.05, 0.0), (9.0, 12.0)],
        ];
        let mut u = Array4::zeros((3, 2, 1, 1));
        let mut v = Array4::zeros((3, 2, 1, 1));
        for (t, step) in comps.iter().enumerate() {
            for (k, &(a, b)) in step.iter().enumerate() {
                u[[t, k, 0, 0]] = a;
                v[[t, k, 0, 0]] = b;
            }
        }
        let field = WindField::new(
            grid,
            TimeAxis::hourly(t0, 3),
            HeightPair::new(10.0, 100.0).unwrap(),
            u,
            v,
        )
        .unwrap();
        let mut r = record(Commissioning::year(2000).unwrap());
        r.location = LatLon::new(-5.1, -35.9);
        r.hub_height_m = Some(120.0);
        r.rotor_diameter_m = Some(100.0);
        r.capacity_kw = Some(2500.0);

        // speeds: (5, 10), (sqrt 2, 5), (0.05, 15)
        let speeds = [(5.0f64, 10.0f64), (2f64.sqrt(), 5.0), (0.05, 15.0)];
        let sp = 2_500_000.0 / (std::f64::consts::PI * 50.0 * 50.0);
        let rated = (2.0 * sp / (1.225 * 0.45)).cbrt();
        let expected: Vec<f64> = speeds
            .iter()
            .map(|&(lo, hi)| {
                let alpha = if lo > 0.1 && hi > 0.1 {
                    (hi / lo).ln() / 10f64.ln()
                } else {
                    1.0 / 7.0
                };
                let v = hi * 1.2f64.powf(alpha);
                let frac = if !(3.5..25.0).contains(&v) {
                    0.0
                } else if v >= rated {
                    1.0
                } else {
                    (v.powi(3) - 3.5f64.powi(3)) / (rated.powi(3) - 3.5f64.powi(3))
                };
                2500.0 * frac
            })
            .collect();
        let g = simulate_location(&r, &field, None, &opts()).unwrap();
        for (a, b) in g.power_kw.iter().zip(&expected) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
        assert!(g.flags[2].shear_fallback);
        assert!(g.power_kw[1] > 0.0 && g.power_kw[1] < 2500.0);
    }

    #[test]
    fn unit_factor_is_bit_identical() {
        let r = record(Commissioning::year(2000).unwrap());
        let f = constant_field(4.0, 7.0, 48);
        let plain = simulate_location(&r, &f, None, &opts()).unwrap();
        let raster = MeanWindRaster::new(
            LatLon::new(1.0, -1.0),
            0.5,
            100.0,
            ndarray::Array2::from_elem((4, 4), 7.0),
            None,
        )
        .unwrap();
        let layer = GwaLayer {
            tag: "gwa3".into(),
            raster,
        };
        let corrected = simulate_location(&r, &f, Some(&layer), &opts()).unwrap();
        assert_eq!(corrected.provenance.correction.unwrap().factor, 1.0);
        assert_eq!(plain.power_kw, corrected.power_kw);

        let wrong = GwaLayer {
            tag: "gwa3".into(),
            raster: MeanWindRaster::new(
                LatLon::new(1.0, -1.0),
                0.5,
                50.0,
                ndarray::Array2::from_elem((4, 4), 7.0),
                None,
            )
            .unwrap(),
        };
        let err = simulate_location(&r, &f, Some(&wrong), &opts()).unwrap_err();
        assert!(matches!(err, Error::Record { ref source, .. } if matches!(**source, Error::HeightMismatch { .. })));
    }

    #[test]
    fn park_equals_split_turbines() {
        let f = {
            let mut f = constant_field(0.0, 0.0, 200);
            for t in 0..200 {
                f.u[[t, 0, 0, 0]] = 2.0 + (t as f64 * 0.37).sin().abs() * 8.0;
                f.u[[t, 1, 0, 0]] = 3.0 + (t as f64 * 0.23).cos().abs() * 12.0;
            }
            f
        };
        let park = record(Commissioning::year(2000).unwrap());
        let n = 4.0;
        let mut piece = park.clone();
        piece.capacity_kw = Some(2000.0 / n);
        piece.rotor_diameter_m = Some(90.0 / n.sqrt());
        let whole = simulate_location(&park, &f, None, &opts()).unwrap();
        let part = simulate_location(&piece, &f, None, &opts()).unwrap();
        for (w, p) in whole.power_kw.iter().zip(&part.power_kw) {
            assert_relative_eq!(*w, n * p, max_relative = 1e-12, epsilon = 1e-9);
        }
    }

    #[test]
    fn generation_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = record(Commissioning::year(2018).unwrap());
        let g = simulate_location(&r, &constant_field(4.0, 7.0, 30), None, &opts()).unwrap();
        let p = dir.path().join("r.csv");
        write_generation_csv(&g, &p).unwrap();
        let back = read_generation_csv(&p, "fixture", None).unwrap();
        assert_eq!(back.power_kw, g.power_kw);
        assert_eq!(back.installed_kw, g.installed_kw);
        assert_eq!(back.time, g.time);
    }

    proptest! {
        #[test]
        fn output_bounded_and_monotone(sp in 100.0f64..1000.0, v1 in 0.0f64..30.0, v2 in 0.0f64..30.0, cap in 0.0f64..1e5) {
            let c = build_power_curve(sp).unwrap();
            let p1 = power_output(&c, v1, cap);
            prop_assert!(p1 >= 0.0 && p1 <= cap);
            let (a, b) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            if a >= c.cut_in && b <= c.rated_speed {
                prop_assert!(power_output(&c, b, cap) >= power_output(&c, a, cap));
            }
        }

        #[test]
        fn rated_speed_increasing(a in 100.0f64..4000.0, b in 100.0f64..4000.0) {
            prop_assume!(a < b);
            prop_assert!(build_power_curve(a).unwrap().rated_speed < build_power_curve(b).unwrap().rated_speed);
        }
    }
}
