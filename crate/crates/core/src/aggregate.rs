//! Capacity-factor normalization, spatial and temporal aggregation, and
//! system size.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{Datelike, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::cleaning::ObservedSeries;
use crate::error::{Error, Result};
use crate::power::GenerationSeries;
use crate::reanalysis::{nearest_cell, Grid, LatLon};
use crate::time::Instant;

/// Capacity factors on explicit timestamps; monthly buckets are not evenly
/// spaced, so no regular axis is assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityFactorSeries {
    pub id: String,
    pub timestamps: Vec<Instant>,
    pub cf: Vec<f64>,
    /// `true` drops the step.
    pub mask: Vec<bool>,
}

impl CapacityFactorSeries {
    pub fn len(&self) -> usize {
        self.cf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cf.is_empty()
    }

    pub fn unmasked_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }
}

/// Simulated generation viewed as an unmasked series.
pub fn generation_as_series(g: &GenerationSeries) -> ObservedSeries {
    ObservedSeries {
        id: g.record_id.clone(),
        time: g.time,
        values: g.power_kw.clone(),
        mask: vec![None; g.power_kw.len()],
    }
}

/// `cf = gen / cap`; zero-capacity steps are masked.
pub fn to_capacity_factor(gen: &ObservedSeries, capacity: &[f64]) -> Result<CapacityFactorSeries> {
    if capacity.len() != gen.len() {
        return Err(Error::Alignment(format!(
            "capacity has {} steps, generation `{}` has {}",
            capacity.len(),
            gen.id,
            gen.len()
        )));
    }
    let mut cf = Vec::with_capacity(gen.len());
    let mut mask = Vec::with_capacity(gen.len());
    for (i, &cap) in capacity.iter().enumerate() {
        match gen.value(i) {
            Some(v) if v < 0.0 => {
                return Err(Error::Data(format!(
                    "negative generation {v} in `{}` at step {i}",
                    gen.id
                )));
            }
            Some(v) if cap > 0.0 => {
                cf.push(v / cap);
                mask.push(false);
            }
            _ => {
                cf.push(f64::NAN);
                mask.push(true);
            }
        }
    }
    Ok(CapacityFactorSeries {
        id: gen.id.clone(),
        timestamps: gen.time.instants(),
        cf,
        mask,
    })
}

/// Capacity-weighted mean over unmasked members with positive capacity.
pub fn aggregate_spatial(
    id: &str,
    members: &[CapacityFactorSeries],
    capacities: &[&[f64]],
) -> Result<CapacityFactorSeries> {
    let first = members
        .first()
        .ok_or_else(|| Error::EmptySelection(format!("group `{id}` has no members")))?;
    if capacities.len() != members.len() {
        return Err(Error::Alignment(format!(
            "{} capacity series for {} members",
            capacities.len(),
            members.len()
        )));
    }
    for (m, c) in members.iter().zip(capacities) {
        if m.timestamps != first.timestamps || c.len() != m.len() {
            return Err(Error::Alignment(format!(
                "member `{}` is not aligned with `{}`",
                m.id, first.id
            )));
        }
    }
    let mut cf = Vec::with_capacity(first.len());
    let mut mask = Vec::with_capacity(first.len());
    for t in 0..first.len() {
        let (num, den) = members
            .iter()
            .zip(capacities)
            .filter(|(m, c)| !m.mask[t] && c[t] > 0.0)
            .fold((0.0, 0.0), |(n, d), (m, c)| (n + m.cf[t] * c[t], d + c[t]));
        if den > 0.0 {
            cf.push(num / den);
            mask.push(false);
        } else {
            cf.push(f64::NAN);
            mask.push(true);
        }
    }
    Ok(CapacityFactorSeries {
        id: id.to_owned(),
        timestamps: first.timestamps.clone(),
        cf,
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemporalLevel {
    Hourly,
    Daily,
    Monthly,
}

impl TemporalLevel {
    pub const ALL: [TemporalLevel; 3] = [TemporalLevel::Hourly, TemporalLevel::Daily, TemporalLevel::Monthly];

    pub fn as_str(self) -> &'static str {
        match self {
            TemporalLevel::Hourly => "hourly",
            TemporalLevel::Daily => "daily",
            TemporalLevel::Monthly => "monthly",
        }
    }

    /// Start of the UTC bucket holding `t`.
    pub fn bucket(self, t: Instant) -> Instant {
        let d = t.date_naive();
        let start = match self {
            TemporalLevel::Hourly => return t,
            TemporalLevel::Daily => d,
            TemporalLevel::Monthly => NaiveDate::from_ymd_opt(d.year(), d.month(), 1).expect("first of month"),
        };
        Utc.from_utc_datetime(&start.and_hms_opt(0, 0, 0).expect("midnight"))
    }
}

impl fmt::Display for TemporalLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bucket means of unmasked values per UTC day or month. A bucket with no
/// unmasked value is masked. Input timestamps must be ascending.
pub fn aggregate_temporal(series: &CapacityFactorSeries, level: TemporalLevel) -> CapacityFactorSeries {
    let mut timestamps: Vec<Instant> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (i, &t) in series.timestamps.iter().enumerate() {
        let b = level.bucket(t);
        if timestamps.last() != Some(&b) {
            timestamps.push(b);
            sums.push((0.0, 0));
        }
        if !series.mask[i] {
            let s = sums.last_mut().expect("bucket exists");
            s.0 += series.cf[i];
            s.1 += 1;
        }
    }
    let cf = sums
        .iter()
        .map(|&(s, n)| if n == 0 { f64::NAN } else { s / n as f64 })
        .collect();
    let mask = sums.iter().map(|&(_, n)| n == 0).collect();
    CapacityFactorSeries {
        id: series.id.clone(),
        timestamps,
        cf,
        mask,
    }
}

/// Bucket mean of a capacity timeline, matching `aggregate_temporal` buckets.
pub fn aggregate_capacity(timestamps: &[Instant], capacity: &[f64], level: TemporalLevel) -> Vec<f64> {
    let series = CapacityFactorSeries {
        id: String::new(),
        timestamps: timestamps.to_vec(),
        cf: capacity.to_vec(),
        mask: vec![false; capacity.len()],
    };
    aggregate_temporal(&series, level).cf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SystemSize {
    pub cells: usize,
}

/// Reporting bands: below 5 cells, 5 to 24, and 25 or more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeBand {
    Small,
    Medium,
    Large,
}

impl SystemSize {
    pub fn band(self) -> SizeBand {
        match self.cells {
            0..=4 => SizeBand::Small,
            5..=24 => SizeBand::Medium,
            _ => SizeBand::Large,
        }
    }
}

impl SizeBand {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeBand::Small => "ssp<5",
            SizeBand::Medium => "5<=ssp<25",
            SizeBand::Large => "ssp>=25",
        }
    }
}

/// Number of distinct reanalysis cells occupied by the locations.
pub fn system_size(locations: &[LatLon], grid: &Grid) -> Result<SystemSize> {
    if locations.is_empty() {
        return Err(Error::EmptySelection("system size of an empty location set".into()));
    }
    let cells: BTreeSet<_> = locations
        .iter()
        .map(|&l| nearest_cell(grid, l))
        .collect::<Result<_>>()?;
    Ok(SystemSize { cells: cells.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::TimeAxis;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn t0() -> Instant {
        Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap()
    }

    fn cf(values: Vec<f64>) -> CapacityFactorSeries {
        let n = values.len();
        CapacityFactorSeries {
            id: "x".into(),
            timestamps: TimeAxis::hourly(t0(), n).instants(),
            cf: values,
            mask: vec![false; n],
        }
    }

    #[test]
    fn capacity_factor_examples() {
        let axis = TimeAxis::hourly(t0(), 3);
        let g = ObservedSeries::new("g", axis, vec![2000.0, 0.0, 500.0]).unwrap();
        let c = to_capacity_factor(&g, &[2000.0, 2000.0, 2000.0]).unwrap();
        assert_eq!(c.cf, vec![1.0, 0.0, 0.25]);
        let c = to_capacity_factor(&g, &[2000.0, 0.0, 2000.0]).unwrap();
        assert_eq!(c.mask, vec![false, true, false]);
        let neg = ObservedSeries::new("n", axis, vec![1.0, -1.0, 0.0]).unwrap();
        assert!(matches!(to_capacity_factor(&neg, &[1.0; 3]), Err(Error::Data(_))));
    }

    #[test]
    fn spatial_examples() {
        let a = cf(vec![0.2]);
        let b = cf(vec![0.4]);
        let s = aggregate_spatial("g", &[a.clone(), b.clone()], &[&[1000.0], &[1000.0]]).unwrap();
        assert_relative_eq!(s.cf[0], 0.3, epsilon = 1e-15);
        let s = aggregate_spatial("g", std::slice::from_ref(&a), &[&[1000.0]]).unwrap();
        assert_eq!(s.cf, a.cf);
        let s = aggregate_spatial("g", &[cf(vec![0.4]), cf(vec![0.0])], &[&[1000.0], &[3000.0]]).unwrap();
        assert_relative_eq!(s.cf[0], 0.4 * 1000.0 / 4000.0, epsilon = 1e-15);
        assert!(aggregate_spatial("g", &[], &[]).is_err());
        let mut m = cf(vec![0.9]);
        m.mask[0] = true;
        let s = aggregate_spatial("g", &[m, b], &[&[1000.0], &[1000.0]]).unwrap();
        assert_eq!(s.cf[0], 0.4);
    }

    #[test]
    fn temporal_examples() {
        let d = aggregate_temporal(&cf(vec![0.5; 48]), TemporalLevel::Daily);
        assert_eq!(d.cf, vec![0.5, 0.5]);
        assert_eq!(d.timestamps[1], Utc.with_ymd_and_hms(2019, 1, 2, 0, 0, 0).unwrap());

        let mut one = cf(vec![0.5; 24]);
        one.mask[5] = true;
        one.cf[5] = 99.0;
        assert_eq!(aggregate_temporal(&one, TemporalLevel::Daily).cf, vec![0.5]);

        let ramp = cf((0..24).map(|i| i as f64 / 46.0).collect());
        assert_relative_eq!(
            aggregate_temporal(&ramp, TemporalLevel::Daily).cf[0],
            0.25,
            epsilon = 1e-15
        );

        let mut gone = cf(vec![0.5; 24]);
        gone.mask = vec![true; 24];
        assert_eq!(aggregate_temporal(&gone, TemporalLevel::Daily).mask, vec![true]);

        let year = cf(vec![0.1; 8760]);
        let m = aggregate_temporal(&year, TemporalLevel::Monthly);
        assert_eq!(m.len(), 12);
        assert_eq!(m.timestamps[1], Utc.with_ymd_and_hms(2019, 2, 1, 0, 0, 0).unwrap());
        assert_eq!(aggregate_temporal(&year, TemporalLevel::Hourly), year);
    }

    #[test]
    fn system_sizes() {
        let grid = Grid::new(0.0, 0.5, 0.0, 0.625, 10, 10).unwrap();
        let one = [LatLon::new(1.0, 1.0)];
        assert_eq!(system_size(&one, &grid).unwrap().cells, 1);
        let same = [LatLon::new(1.0, 1.25), LatLon::new(1.1, 1.3)];
        assert_eq!(system_size(&same, &grid).unwrap().cells, 1);
        let k: Vec<LatLon> = (0..7).map(|i| LatLon::new(i as f64 * 0.5, 0.0)).collect();
        assert_eq!(system_size(&k, &grid).unwrap().cells, 7);
        assert!(system_size(&[], &grid).is_err());
        assert_eq!(SystemSize { cells: 4 }.band(), SizeBand::Small);
        assert_eq!(SystemSize { cells: 5 }.band(), SizeBand::Medium);
        assert_eq!(SystemSize { cells: 25 }.band(), SizeBand::Large);
    }

    proptest! {
        #[test]
        fn spatial_and_temporal_commute(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 72), 1..5),
            caps in prop::collection::vec(1.0f64..5000.0, 5),
            level in prop_oneof![Just(TemporalLevel::Daily), Just(TemporalLevel::Monthly)],
        ) {
            let members: Vec<_> = rows.into_iter().map(cf).collect();
            let full: Vec<Vec<f64>> = members.iter().zip(&caps).map(|(m, &c)| vec![c; m.len()]).collect();
            let full_refs: Vec<&[f64]> = full.iter().map(Vec::as_slice).collect();
            let a = aggregate_temporal(&aggregate_spatial("g", &members, &full_refs).unwrap(), level);
            let temporal: Vec<_> = members.iter().map(|m| aggregate_temporal(m, level)).collect();
            let short: Vec<Vec<f64>> = temporal.iter().zip(&caps).map(|(m, &c)| vec![c; m.len()]).collect();
            let short_refs: Vec<&[f64]> = short.iter().map(Vec::as_slice).collect();
            let b = aggregate_spatial("g", &temporal, &short_refs).unwrap();
            prop_assert_eq!(&a.timestamps, &b.timestamps);
            for (x, y) in a.cf.iter().zip(&b.cf) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
