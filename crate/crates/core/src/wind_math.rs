//! Effective wind speed, power-law shear exponent and vertical extrapolation.
//!
//! The shear exponent is estimated per timestep from the two reanalysis
//! levels and then used to move the upper-level speed to hub height:
//!
//! ```text
//! alpha = ln(v_hi / v_lo) / ln(h_hi / h_lo)
//! v_hub = v_ref * (h_hub / h_ref)^alpha
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Speeds at or below this threshold make the log ratio unreliable.
pub const MIN_SHEAR_SPEED: f64 = 0.1;
/// Exponent used when either level is calm (neutral 1/7 profile).
pub const FALLBACK_EXPONENT: f64 = 1.0 / 7.0;
pub const MIN_EXPONENT: f64 = -1.0;
pub const MAX_EXPONENT: f64 = 2.0;

/// Two measurement heights, `0 < lo < hi`, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightPair<T> {
    lo: T,
    hi: T,
}

impl<T: Scalar> HeightPair<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo > T::zero() && lo < hi) {
            return Err(Error::Domain(format!("invalid height pair ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }
}

/// Power-law shear exponent, always within `[MIN_EXPONENT, MAX_EXPONENT]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HellmannExponent<T>(T);

impl<T: Scalar> HellmannExponent<T> {
    /// Wraps a value, clamping it into the admissible range.
    pub fn clamped(alpha: T) -> Self {
        Self(alpha.max(T::lit(MIN_EXPONENT)).min(T::lit(MAX_EXPONENT)))
    }

    pub fn neutral() -> Self {
        Self(T::lit(FALLBACK_EXPONENT))
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// How an exponent estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShearFlag {
    Computed,
    Clamped,
    /// One of the speeds was at or below [`MIN_SHEAR_SPEED`].
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearEstimate<T> {
    pub alpha: HellmannExponent<T>,
    pub flag: ShearFlag,
}

pub fn effective_speed<T: Scalar>(u: T, v: T) -> Result<T> {
    if !(u.is_finite() && v.is_finite()) {
        return Err(Error::Domain(format!("non-finite wind component ({u}, {v})")));
    }
    Ok(u.hypot(v))
}

pub fn hellmann_exponent<T: Scalar>(v_lo: T, v_hi: T, heights: HeightPair<T>) -> ShearEstimate<T> {
    let eps = T::lit(MIN_SHEAR_SPEED);
    if !(v_lo > eps && v_hi > eps) {
        return ShearEstimate {
            alpha: HellmannExponent::neutral(),
            flag: ShearFlag::Fallback,
        };
    }
    let raw = (v_hi / v_lo).ln() / (heights.hi / heights.lo).ln();
    let alpha = HellmannExponent::clamped(raw);
    let flag = if alpha.0 == raw {
        ShearFlag::Computed
    } else {
        ShearFlag::Clamped
    };
    ShearEstimate { alpha, flag }
}

pub fn extrapolate_to_hub<T: Scalar>(v_ref: T, h_ref: T, alpha: HellmannExponent<T>, hub: T) -> Result<T> {
    if !(v_ref >= T::zero() && h_ref > T::zero() && hub > T::zero()) {
        return Err(Error::Domain(format!(
            "extrapolation needs v_ref >= 0 and positive heights, got v_ref={v_ref}, h_ref={h_ref}, hub={hub}"
        )));
    }
    if hub == h_ref {
        return Ok(v_ref);
    }
    Ok(v_ref * (hub / h_ref).powf(alpha.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn h(lo: f64, hi: f64) -> HeightPair<f64> {
        HeightPair::new(lo, hi).unwrap()
    }

    #[test]
    fn effective_speed_examples() {
        assert_eq!(effective_speed(3.0, 4.0).unwrap(), 5.0);
        assert_eq!(effective_speed(0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(effective_speed(1.0, 1.0).unwrap(), std::f64::consts::SQRT_2);
        assert!(effective_speed(f64::NAN, 1.0).is_err());
        assert!(effective_speed(1.0f32, f32::INFINITY).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn exponent_examples() {
        let e = hellmann_exponent(5.0, 5.0, h(10.0, 100.0));
        assert_eq!(e.alpha.value(), 0.0);
        assert_eq!(e.flag, ShearFlag::Computed);

        let e = hellmann_exponent(5.0, 10.0, h(10.0, 100.0));
        assert_relative_eq!(e.alpha.value(), 2f64.ln() / 10f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(e.alpha.value(), 0.30103, epsilon = 1e-5);

        let e = hellmann_exponent(5.0, 5.0 * 10f64.powf(0.14), h(10.0, 100.0));
        assert_relative_eq!(e.alpha.value(), 0.14, max_relative = 1e-12);
    }

    #[test]
    fn calm_and_extreme_shear() {
        let e = hellmann_exponent(0.05, 6.0, h(10.0, 100.0));
        assert_eq!(e.flag, ShearFlag::Fallback);
        assert_eq!(e.alpha.value(), 1.0 / 7.0);
        let e = hellmann_exponent(0.1, 6.0, h(10.0, 100.0));
        assert_eq!(e.flag, ShearFlag::Fallback);

        let e = hellmann_exponent(0.2, 30.0, h(10.0, 11.0));
        assert_eq!(e.flag, ShearFlag::Clamped);
        assert_eq!(e.alpha.value(), MAX_EXPONENT);
        let e = hellmann_exponent(30.0, 0.2, h(10.0, 11.0));
        assert_eq!(e.alpha.value(), MIN_EXPONENT);
    }

    #[test]
    fn extrapolation_examples() {
        let a = HellmannExponent::clamped(1.0 / 7.0);
        assert_eq!(extrapolate_to_hub(8.0, 100.0, a, 100.0).unwrap(), 8.0);
        let v = extrapolate_to_hub(8.0, 100.0, a, 120.0).unwrap();
        assert_relative_eq!(v, 8.0 * 1.2f64.powf(1.0 / 7.0), max_relative = 1e-15);
        assert_relative_eq!(v, 8.211_104_770, epsilon = 1e-9);
        let zero = HellmannExponent::clamped(0.0);
        assert_eq!(extrapolate_to_hub(7.5, 50.0, zero, 140.0).unwrap(), 7.5);
        assert!(extrapolate_to_hub(-1.0, 50.0, zero, 140.0).is_err());
        assert!(extrapolate_to_hub(1.0, 0.0, zero, 140.0).is_err());
    }

    #[test]
    fn invalid_heights() {
        assert!(HeightPair::new(100.0, 10.0).is_err());
        assert!(HeightPair::new(0.0, 10.0).is_err());
        assert!(HeightPair::new(10.0, 10.0).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn single_precision_kernel() {
        let e = hellmann_exponent(5.0f32, 10.0f32, HeightPair::new(10.0f32, 100.0).unwrap());
        assert!((e.alpha.value() - 0.30103).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn speed_symmetric(u in -50.0f64..50.0, v in -50.0f64..50.0) {
            let s = effective_speed(u, v).unwrap();
            prop_assert_eq!(s, effective_speed(v, u).unwrap());
            prop_assert_eq!(s, effective_speed(-u, v).unwrap());
            prop_assert!(s >= 0.0);
        }

        #[test]
        fn round_trip_when_unclamped(
            v_lo in 0.5f64..30.0,
            v_hi in 0.5f64..30.0,
            lo in 2.0f64..60.0,
            ratio in 1.5f64..20.0,
        ) {
            let hp = h(lo, lo * ratio);
            let e = hellmann_exponent(v_lo, v_hi, hp);
            prop_assume!(e.flag == ShearFlag::Computed);
            let back = extrapolate_to_hub(v_lo, hp.lo(), e.alpha, hp.hi()).unwrap();
            prop_assert!((back - v_hi).abs() <= 1e-9 * v_hi);
        }

        #[test]
        fn monotone_in_height(
            v in 0.0f64..30.0,
            alpha in 0.001f64..2.0,
            h_ref in 5.0f64..100.0,
            d1 in 0.0f64..100.0,
            d2 in 0.0f64..100.0,
        ) {
            let a = HellmannExponent::clamped(alpha);
            let (d1, d2) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let s1 = extrapolate_to_hub(v, h_ref, a, h_ref + d1).unwrap();
            let s2 = extrapolate_to_hub(v, h_ref, a, h_ref + d2).unwrap();
            prop_assert!(s2 >= s1);
        }
    }
}
