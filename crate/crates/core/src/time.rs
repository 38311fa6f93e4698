//! Uniform UTC time axes and inclusive time ranges.

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Instant = DateTime<Utc>;

/// A uniformly spaced sequence of UTC instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub start: Instant,
    pub step_seconds: i64,
    pub len: usize,
}

impl TimeAxis {
    pub fn new(start: Instant, step: Duration, len: usize) -> Result<Self> {
        let step_seconds = step.num_seconds();
        if step_seconds <= 0 {
            return Err(Error::Format(format!(
                "time step must be positive, got {step_seconds} s"
            )));
        }
        Ok(Self {
            start,
            step_seconds,
            len,
        })
    }

    pub fn hourly(start: Instant, len: usize) -> Self {
        Self {
            start,
            step_seconds: 3600,
            len,
        }
    }

    /// Builds an axis from explicit instants, rejecting non-uniform spacing.
    pub fn from_instants(instants: &[Instant]) -> Result<Self> {
        let Some(&start) = instants.first() else {
            return Err(Error::EmptySelection("no timestamps".into()));
        };
        if instants.len() == 1 {
            return Ok(Self {
                start,
                step_seconds: 3600,
                len: 1,
            });
        }
        let step = (instants[1] - instants[0]).num_seconds();
        if step <= 0 {
            return Err(Error::Format("time axis is not strictly increasing".into()));
        }
        for (k, w) in instants.windows(2).enumerate() {
            if (w[1] - w[0]).num_seconds() != step {
                return Err(Error::Format(format!(
                    "non-uniform time axis at index {}: {} -> {}",
                    k + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self {
            start,
            step_seconds: step,
            len: instants.len(),
        })
    }

    pub fn step(&self) -> Duration {
        Duration::seconds(self.step_seconds)
    }

    pub fn at(&self, i: usize) -> Instant {
        self.start + Duration::seconds(self.step_seconds * i as i64)
    }

    pub fn end(&self) -> Option<Instant> {
        self.len.checked_sub(1).map(|i| self.at(i))
    }

    pub fn instants(&self) -> Vec<Instant> {
        (0..self.len).map(|i| self.at(i)).collect()
    }

    /// Index of an instant that lies exactly on the axis.
    pub fn index_of(&self, t: Instant) -> Option<usize> {
        let dt = (t - self.start).num_seconds();
        if dt < 0 || dt % self.step_seconds != 0 {
            return None;
        }
        let i = (dt / self.step_seconds) as usize;
        (i < self.len).then_some(i)
    }

    /// Index range `[lo, hi)` of instants inside the inclusive range.
    pub fn select(&self, range: &TimeRange) -> std::ops::Range<usize> {
        let lo = (0..self.len).find(|&i| self.at(i) >= range.start).unwrap_or(self.len);
        let hi = (lo..self.len).find(|&i| self.at(i) > range.end).unwrap_or(self.len);
        lo..hi
    }

    pub fn slice(&self, r: std::ops::Range<usize>) -> Self {
        Self {
            start: self.at(r.start),
            step_seconds: self.step_seconds,
            len: r.len(),
        }
    }
}

/// Inclusive interval of instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: Instant,
    pub end: Instant,
}

impl TimeRange {
    pub fn new(start: Instant, end: Instant) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("time range end {end} precedes start {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn unbounded() -> Self {
        Self {
            start: DateTime::<Utc>::MIN_UTC,
            end: DateTime::<Utc>::MAX_UTC,
        }
    }

    pub fn contains(&self, t: Instant) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Parses ISO-8601 instants, with or without an offset; offset-free values are UTC.
pub fn parse_instant(s: &str) -> Result<Instant> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(Error::Format(format!("invalid timestamp `{s}`")))
}

pub fn format_instant(t: Instant) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
