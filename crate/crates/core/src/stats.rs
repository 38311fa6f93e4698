//! Validation statistics over jointly unmasked pairs and notched-boxplot
//! summaries.
//!
//! Quantiles interpolate linearly between order statistics: for sorted
//! `x[0..n]` the `q`-quantile sits at position `h = (n - 1) q` and is
//! `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const NOTCH_CONSTANT: f64 = 1.57;
pub const WHISKER_IQR: f64 = 1.5;

/// Pairs where neither value is masked. `masked[i] == true` drops step `i`.
pub fn joint<T: Scalar>(sim: &[T], obs: &[T], masked: Option<&[bool]>) -> Result<Vec<(T, T)>> {
    if sim.len() != obs.len() || masked.is_some_and(|m| m.len() != sim.len()) {
        return Err(Error::Alignment(format!(
            "series lengths differ: {} vs {}",
            sim.len(),
            obs.len()
        )));
    }
    Ok((0..sim.len())
        .filter(|&i| !masked.is_some_and(|m| m[i]) && sim[i].is_finite() && obs[i].is_finite())
        .map(|i| (sim[i], obs[i]))
        .collect())
}

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let sum = xs.iter().fold(T::zero(), |s, &x| s + x);
    Some(sum / T::from_count(xs.len()))
}

/// Population variance, two-pass.
pub fn variance<T: Scalar>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |s, &x| s + (x - m) * (x - m));
    Some(ss / T::from_count(xs.len()))
}

/// Pearson correlation; `None` when fewer than two pairs or either side has
/// zero variance.
pub fn pearson_pairs<T: Scalar>(pairs: &[(T, T)]) -> Option<T> {
    if pairs.len() < 2 {
        return None;
    }
    let n = T::from_count(pairs.len());
    let (sa, sb) = pairs
        .iter()
        .fold((T::zero(), T::zero()), |(x, y), &(a, b)| (x + a, y + b));
    let (ma, mb) = (sa / n, sb / n);
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for &(a, b) in pairs {
        let (da, db) = (a - ma, b - mb);
        sab = sab + da * db;
        saa = saa + da * da;
        sbb = sbb + db * db;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return None;
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Some(r.max(-T::one()).min(T::one()))
}

pub fn rmse_pairs<T: Scalar>(pairs: &[(T, T)]) -> Option<T> {
    let sq: Vec<T> = pairs.iter().map(|&(s, o)| (s - o) * (s - o)).collect();
    mean(&sq).map(Float::sqrt)
}

/// Mean of simulated minus observed; positive means overestimation.
pub fn mbe_pairs<T: Scalar>(pairs: &[(T, T)]) -> Option<T> {
    let d: Vec<T> = pairs.iter().map(|&(s, o)| s - o).collect();
    mean(&d)
}

pub fn pearson<T: Scalar>(sim: &[T], obs: &[T], masked: Option<&[bool]>) -> Result<Option<T>> {
    Ok(pearson_pairs(&joint(sim, obs, masked)?))
}

pub fn rmse<T: Scalar>(sim: &[T], obs: &[T], masked: Option<&[bool]>) -> Result<T> {
    rmse_pairs(&joint(sim, obs, masked)?).ok_or_else(|| Error::DegenerateSeries("no jointly unmasked steps".into()))
}

pub fn mbe<T: Scalar>(sim: &[T], obs: &[T], masked: Option<&[bool]>) -> Result<T> {
    mbe_pairs(&joint(sim, obs, masked)?).ok_or_else(|| Error::DegenerateSeries("no jointly unmasked steps".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics<T> {
    pub n: usize,
    /// `None` flags an undefined correlation.
    pub pearson: Option<T>,
    pub rmse: T,
    pub mbe: T,
}

pub fn validation_metrics<T: Scalar>(sim: &[T], obs: &[T], masked: Option<&[bool]>) -> Result<ValidationMetrics<T>> {
    let pairs = joint(sim, obs, masked)?;
    let rmse = rmse_pairs(&pairs).ok_or_else(|| Error::DegenerateSeries("no jointly unmasked steps".into()))?;
    let mbe = mbe_pairs(&pairs).expect("non-empty");
    Ok(ValidationMetrics {
        n: pairs.len(),
        pearson: pearson_pairs(&pairs),
        rmse,
        mbe,
    })
}

fn sorted<T: Scalar>(samples: &[T]) -> Result<Vec<T>> {
    if samples.is_empty() {
        return Err(Error::DegenerateSeries("no samples".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(s)
}

/// Quantile of already sorted data.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = T::lit(h - lo as f64);
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

pub fn quantile<T: Scalar>(samples: &[T], q: f64) -> Result<T> {
    Ok(quantile_sorted(&sorted(samples)?, q))
}

/// Median confidence interval `M ± c IQR / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchInterval<T> {
    pub median: T,
    pub iqr: T,
    pub n: usize,
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> NotchInterval<T> {
    pub fn overlaps(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

pub fn notch_interval_with<T: Scalar>(samples: &[T], constant: T) -> Result<NotchInterval<T>> {
    let s = sorted(samples)?;
    let median = quantile_sorted(&s, 0.5);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let half = constant * iqr / T::from_count(s.len()).sqrt();
    Ok(NotchInterval {
        median,
        iqr,
        n: s.len(),
        lo: median - half,
        hi: median + half,
    })
}

pub fn notch_interval<T: Scalar>(samples: &[T]) -> Result<NotchInterval<T>> {
    notch_interval_with(samples, T::lit(NOTCH_CONSTANT))
}

/// True iff the two notches do not overlap.
pub fn medians_differ<T: Scalar>(a: &[T], b: &[T]) -> Result<bool> {
    Ok(!notch_interval(a)?.overlaps(&notch_interval(b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats<T> {
    pub n: usize,
    pub median: T,
    pub q25: T,
    pub q75: T,
    pub notch_lo: T,
    pub notch_hi: T,
    /// Most extreme samples within 1.5 IQR of the quartiles.
    pub whisker_lo: T,
    pub whisker_hi: T,
    pub outliers: usize,
}

pub fn boxplot_stats<T: Scalar>(samples: &[T], notch_constant: T) -> Result<BoxplotStats<T>> {
    let s = sorted(samples)?;
    let q25 = quantile_sorted(&s, 0.25);
    let q75 = quantile_sorted(&s, 0.75);
    let notch = notch_interval_with(&s, notch_constant)?;
    let reach = T::lit(WHISKER_IQR) * (q75 - q25);
    let (fence_lo, fence_hi) = (q25 - reach, q75 + reach);
    let inside: Vec<T> = s.iter().copied().filter(|&x| x >= fence_lo && x <= fence_hi).collect();
    Ok(BoxplotStats {
        n: s.len(),
        median: notch.median,
        q25,
        q75,
        notch_lo: notch.lo,
        notch_hi: notch.hi,
        whisker_lo: inside.first().copied().unwrap_or(q25),
        whisker_hi: inside.last().copied().unwrap_or(q75),
        outliers: s.len() - inside.len(),
    })
}
