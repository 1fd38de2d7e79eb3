//! Raw series and the relative-change-rate transform feeding the mixture fit.

use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative denominator guard used by [`relative_change_rate_default`].
pub const DEFAULT_DENOM_EPSILON_FACTOR: f64 = 1e-12;

/// A sample time. Dates are kept as labels; the rate transform is index based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    Date(NaiveDate),
    Seconds(f64),
}

impl Timestamp {
    /// Parses an ISO-8601 date (`YYYY-MM-DD`) or a plain real number.
    pub fn parse(s: &str) -> Option<Timestamp> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(Timestamp::Date(d));
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Timestamp::Seconds)
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Timestamp::Date(a), Timestamp::Date(b)) => a.partial_cmp(b),
            (Timestamp::Seconds(a), Timestamp::Seconds(b)) => a.partial_cmp(b),
            _ => None,
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Timestamp::Seconds(s) => write!(f, "{s}"),
        }
    }
}

/// System output `x_0..x_N`, optionally time stamped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    values: Vec<f64>,
    timestamps: Option<Vec<Timestamp>>,
}

impl RawSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::build(values, None)
    }

    pub fn with_timestamps(values: Vec<f64>, timestamps: Vec<Timestamp>) -> Result<Self> {
        Self::build(values, Some(timestamps))
    }

    fn build(values: Vec<f64>, timestamps: Option<Vec<Timestamp>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::SeriesTooShort { len: values.len() });
        }
        if let Some(&value) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample { value });
        }
        if let Some(ts) = &timestamps {
            if ts.len() != values.len() {
                return Err(Error::InvalidParams(format!(
                    "{} timestamps for {} values",
                    ts.len(),
                    values.len()
                )));
            }
            for i in 1..ts.len() {
                if ts[i].partial_cmp(&ts[i - 1]) != Some(Ordering::Greater) {
                    return Err(Error::UnorderedTimestamps { index: i });
                }
            }
        }
        Ok(Self { values, timestamps })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[Timestamp]> {
        self.timestamps.as_deref()
    }

    pub fn timestamp(&self, index: usize) -> Option<Timestamp> {
        self.timestamps.as_ref().and_then(|ts| ts.get(index).copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Relative change rates `y_i = (x_i - x_{i-1}) / x_{i-1}` with a validity mask.
///
/// Entry `i` describes the interval ending at raw index `origin_index[i]`.
/// Invalid entries hold `NaN` and are excluded from every statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    rates: Vec<f64>,
    valid: Vec<bool>,
    origin_index: Vec<usize>,
}

impl RateSeries {
    /// Builds a fully valid series directly from sample values. Origins are `1..=n`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if let Some(&value) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample { value });
        }
        Ok(Self {
            rates: samples.to_vec(),
            valid: vec![true; samples.len()],
            origin_index: (1..=samples.len()).collect(),
        })
    }

    pub fn empty() -> Self {
        Self {
            rates: Vec::new(),
            valid: Vec::new(),
            origin_index: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, rate: Option<f64>, origin: usize) {
        self.rates.push(rate.unwrap_or(f64::NAN));
        self.valid.push(rate.is_some());
        self.origin_index.push(origin);
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn origin_index(&self) -> &[usize] {
        &self.origin_index
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        if *self.valid.get(i)? {
            Some(self.rates[i])
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// The EM sample set: valid rates in index order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.rates
            .iter()
            .zip(&self.valid)
            .filter_map(|(r, v)| v.then_some(*r))
            .collect()
    }

    /// Positions (into this series) of the valid entries, aligned with [`valid_values`].
    ///
    /// [`valid_values`]: RateSeries::valid_values
    pub fn valid_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.valid[i]).collect()
    }
}

/// Computes relative change rates, masking entries whose denominator is below `denom_epsilon`
/// in magnitude (or exactly zero).
pub fn relative_change_rate(raw: &RawSeries, denom_epsilon: f64) -> Result<RateSeries> {
    if raw.len() < 2 {
        return Err(Error::SeriesTooShort { len: raw.len() });
    }
    if !(denom_epsilon >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "denominator epsilon must be non-negative, got {denom_epsilon}"
        )));
    }
    let x = raw.values();
    let mut out = RateSeries::empty();
    for i in 1..x.len() {
        let prev = x[i - 1];
        let rate = if prev == 0.0 || prev.abs() < denom_epsilon {
            None
        } else {
            Some((x[i] - prev) / prev)
        };
        out.push(rate, i);
    }
    Ok(out)
}

/// [`relative_change_rate`] with the guard set to `1e-12 * max|x|`.
pub fn relative_change_rate_default(raw: &RawSeries) -> Result<RateSeries> {
    relative_change_rate(raw, DEFAULT_DENOM_EPSILON_FACTOR * raw.max_abs())
}

pub fn log10_transform(raw: &RawSeries) -> Result<RawSeries> {
    let mut values = Vec::with_capacity(raw.len());
    for (index, &value) in raw.values().iter().enumerate() {
        if value <= 0.0 {
            return Err(Error::NonPositiveValue { index, value });
        }
        values.push(value.log10());
    }
    Ok(RawSeries {
        values,
        timestamps: raw.timestamps.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(v: &[f64]) -> RawSeries {
        RawSeries::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rates_by_direct_substitution() {
        let r = relative_change_rate(&raw(&[2.0, 4.0, 3.0]), 1e-12).unwrap();
        assert_eq!(r.rates(), &[1.0, -0.25]);
        assert_eq!(r.valid(), &[true, true]);
        assert_eq!(r.origin_index(), &[1, 2]);
    }

    #[test]
    fn constant_series_has_zero_rates() {
        let r = relative_change_rate(&raw(&[5.0, 5.0, 5.0]), 1e-12).unwrap();
        assert_eq!(r.valid_values(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_denominator_is_masked() {
        let r = relative_change_rate(&raw(&[1.0, 0.0, 2.0]), 1e-12).unwrap();
        assert_eq!(r.get(0), Some(-1.0));
        assert_eq!(r.get(1), None);
        assert!(r.rates()[1].is_nan());
        assert_eq!(r.valid_count(), 1);
        assert_eq!(r.valid_positions(), vec![0]);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            RawSeries::new(vec![1.0]),
            Err(Error::SeriesTooShort { len: 1 })
        ));
        assert!(matches!(
            RawSeries::new(vec![]),
            Err(Error::SeriesTooShort { len: 0 })
        ));
    }

    #[test]
    fn non_finite_raw_rejected() {
        assert!(matches!(
            RawSeries::new(vec![1.0, f64::NAN]),
            Err(Error::InvalidSample { .. })
        ));
    }

    #[test]
    fn timestamps_must_increase() {
        let ts = vec![Timestamp::Seconds(0.0), Timestamp::Seconds(0.0)];
        assert!(matches!(
            RawSeries::with_timestamps(vec![1.0, 2.0], ts),
            Err(Error::UnorderedTimestamps { index: 1 })
        ));
    }

    #[test]
    fn log10_examples() {
        let t = log10_transform(&raw(&[1.0, 10.0, 100.0])).unwrap();
        assert_eq!(t.values(), &[0.0, 1.0, 2.0]);
        let t = log10_transform(&raw(&[1000.0; 4])).unwrap();
        assert!(t.values().iter().all(|v| (*v - 3.0).abs() < 1e-15));
        match log10_transform(&raw(&[3.0, 0.0, 2.0])) {
            Err(Error::NonPositiveValue { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log10_keeps_timestamps() {
        let ts = vec![
            Timestamp::parse("2020-03-14").unwrap(),
            Timestamp::parse("2020-03-21").unwrap(),
        ];
        let r = RawSeries::with_timestamps(vec![10.0, 100.0], ts.clone()).unwrap();
        assert_eq!(log10_transform(&r).unwrap().timestamps(), Some(ts.as_slice()));
    }

    #[test]
    fn shift_changes_rates() {
        let a = relative_change_rate_default(&raw(&[1.0, 2.0, 4.0])).unwrap();
        let b = relative_change_rate_default(&raw(&[11.0, 12.0, 14.0])).unwrap();
        assert_ne!(a.valid_values(), b.valid_values());
    }

    proptest! {
        #[test]
        fn product_of_growth_factors_reconstructs_raw(
            x0 in 0.5f64..100.0,
            steps in prop::collection::vec(-0.5f64..0.5, 1..60),
        ) {
            let mut values = vec![x0];
            for s in &steps {
                let last = *values.last().unwrap();
                values.push(last * (1.0 + s));
            }
            let rates = relative_change_rate_default(&raw(&values)).unwrap();
            prop_assert_eq!(rates.valid_count(), rates.len());
            let mut acc = x0;
            for (i, y) in rates.valid_values().iter().enumerate() {
                acc *= 1.0 + y;
                let target = values[i + 1];
                prop_assert!((acc - target).abs() <= 1e-9 * target.abs().max(1e-300));
            }
        }

        #[test]
        fn rates_are_scale_invariant(
            values in prop::collection::vec(0.1f64..10.0, 2..40),
            c in prop_oneof![0.001f64..1000.0, -1000.0f64..-0.001],
        ) {
            let a = relative_change_rate_default(&raw(&values)).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let b = relative_change_rate_default(&raw(&scaled)).unwrap();
            for (ya, yb) in a.valid_values().iter().zip(b.valid_values()) {
                prop_assert!((ya - yb).abs() <= 1e-12 * (1.0 + ya.abs()));
            }
        }
    }
}
