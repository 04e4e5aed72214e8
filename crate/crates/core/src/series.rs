// SPDX-License-Identifier: MIT OR Apache-2.0

//! Count series, log-count curves and the curve distance.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CsasError, Result};

/// Raw cumulative counts for one region.
///
/// `dates`, when present, are day ordinals (any fixed epoch) and must form a
/// gap-free run of consecutive days.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSeries {
    pub region_id: String,
    pub counts: Vec<i64>,
    pub dates: Option<Vec<i64>>,
}

impl CountSeries {
    pub fn new(region_id: impl Into<String>, counts: Vec<i64>, dates: Option<Vec<i64>>) -> Result<Self> {
        let series = Self {
            region_id: region_id.into(),
            counts,
            dates,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() {
            return Err(CsasError::EmptySeries);
        }
        if let Some((index, &value)) = self.counts.iter().enumerate().find(|(_, &c)| c < 0) {
            return Err(CsasError::NegativeCount { index, value });
        }
        if let Some(dates) = &self.dates {
            if dates.len() != self.counts.len() {
                return Err(CsasError::LengthMismatch {
                    expected: self.counts.len(),
                    found: dates.len(),
                });
            }
            for (index, pair) in dates.windows(2).enumerate() {
                let step = pair[1] - pair[0];
                if step <= 0 {
                    return Err(CsasError::DatesNotIncreasing { index: index + 1 });
                }
                if step > 1 {
                    return Err(CsasError::MissingDate { index: index + 1 });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// A log-count curve `Z_t = log(1 + Y_t)` on the common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub region_id: String,
    pub values: Vec<f64>,
    /// Ground-truth class, only known for simulated panels.
    pub class_label: Option<usize>,
}

impl CurveSeries {
    pub fn new(region_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CsasError::EmptySeries);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CsasError::NonFinite { what: "curve value", index });
        }
        Ok(Self {
            region_id: region_id.into(),
            values,
            class_label: None,
        })
    }

    pub fn with_class(mut self, class_label: usize) -> Self {
        self.class_label = Some(class_label);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `K >= 1` curves of identical length with unique region ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    series: Vec<CurveSeries>,
}

impl SeriesPanel {
    pub fn new(series: Vec<CurveSeries>) -> Result<Self> {
        let first = series.first().ok_or(CsasError::TooFewRegions { needed: 1, found: 0 })?;
        let len = first.len();
        let mut seen = BTreeSet::new();
        for s in &series {
            if s.len() != len {
                return Err(CsasError::LengthMismatch {
                    expected: len,
                    found: s.len(),
                });
            }
            if let Some(index) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(CsasError::NonFinite { what: "curve value", index });
            }
            if !seen.insert(s.region_id.as_str()) {
                return Err(CsasError::DuplicateRegion(s.region_id.clone()));
            }
        }
        Ok(Self { series })
    }

    pub fn series(&self) -> &[CurveSeries] {
        &self.series
    }

    pub fn into_series(self) -> Vec<CurveSeries> {
        self.series
    }

    /// Number of regions `K`.
    pub fn num_regions(&self) -> usize {
        self.series.len()
    }

    /// Common series length `T`.
    pub fn series_length(&self) -> usize {
        self.series[0].len()
    }

    /// Ground-truth labels, if every member carries one.
    pub fn class_labels(&self) -> Option<Vec<usize>> {
        self.series.iter().map(|s| s.class_label).collect()
    }

    /// Pointwise mean of the member curves selected by `members`.
    pub fn mean_curve(&self, members: &[usize]) -> Vec<f64> {
        let t_len = self.series_length();
        let mut mean = alloc::vec![0.0; t_len];
        if members.is_empty() {
            return mean;
        }
        for &j in members {
            for (m, v) in mean.iter_mut().zip(&self.series[j].values) {
                *m += v;
            }
        }
        let k = members.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        mean
    }

    /// Upper-triangular pairwise distances, `(u, v, d)` with `u < v`.
    pub fn pairwise_distances(&self) -> Vec<(usize, usize, f64)> {
        let k = self.series.len();
        let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for u in 0..k {
            for v in (u + 1)..k {
                let d = rms_distance(&self.series[u].values, &self.series[v].values);
                out.push((u, v, d));
            }
        }
        out
    }
}

/// `log(1 + y)` applied to every count.
pub fn log1p_transform(raw: &CountSeries) -> Result<CurveSeries> {
    if raw.counts.is_empty() {
        return Err(CsasError::EmptySeries);
    }
    let values = raw
        .counts
        .iter()
        .enumerate()
        .map(|(index, &c)| {
            if c < 0 {
                Err(CsasError::NegativeCount { index, value: c })
            } else {
                Ok(libm::log1p(c as f64))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveSeries {
        region_id: raw.region_id.clone(),
        values,
        class_label: None,
    })
}

/// Root-mean-square distance `sqrt((1/T) sum (a_t - b_t)^2)`.
pub fn curve_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CsasError::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(CsasError::EmptySeries);
    }
    Ok(rms_distance(a, b))
}

fn rms_distance(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    libm::sqrt(ss / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn counts(c: &[i64]) -> CountSeries {
        CountSeries::new("r", c.to_vec(), None).unwrap()
    }

    #[test]
    fn log1p_of_zeros_is_zero() {
        let z = log1p_transform(&counts(&[0, 0, 0])).unwrap();
        assert_eq!(z.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn log1p_known_values() {
        let z = log1p_transform(&counts(&[0, 1, 9, 99])).unwrap();
        assert_eq!(z.values[0], 0.0);
        assert!((z.values[1] - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((z.values[2] - core::f64::consts::LN_10).abs() < 1e-15);
        assert!((z.values[3] - 4.605_170_185_988_092).abs() < 1e-14);
    }

    #[test]
    fn negative_count_names_index() {
        let raw = CountSeries {
            region_id: "x".into(),
            counts: vec![0, 3, -2],
            dates: None,
        };
        assert_eq!(
            log1p_transform(&raw),
            Err(CsasError::NegativeCount { index: 2, value: -2 })
        );
        assert!(raw.validate().is_err());
    }

    #[test]
    fn dates_must_be_consecutive() {
        assert!(CountSeries::new("a", vec![1, 2, 3], Some(vec![10, 11, 12])).is_ok());
        assert_eq!(
            CountSeries::new("a", vec![1, 2, 3], Some(vec![10, 12, 13])),
            Err(CsasError::MissingDate { index: 1 })
        );
        assert_eq!(
            CountSeries::new("a", vec![1, 2, 3], Some(vec![10, 11, 11])),
            Err(CsasError::DatesNotIncreasing { index: 2 })
        );
        assert!(CountSeries::new("a", vec![1, 2], Some(vec![10])).is_err());
        assert_eq!(CountSeries::new("a", vec![], None), Err(CsasError::EmptySeries));
    }

    #[test]
    fn distance_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(curve_distance(&a, &a).unwrap(), 0.0);
        assert!((curve_distance(&[0.0; 4], &[-2.5; 4]).unwrap() - 2.5).abs() < 1e-15);
        // direct sum: (1-2)^2 + (2-4)^2 + (3-0)^2 = 14
        let direct = libm::sqrt((1.0 + 4.0 + 9.0) / 3.0);
        let d = curve_distance(&a, &[2.0, 4.0, 0.0]).unwrap();
        assert!((d - direct).abs() < 1e-15);
        assert!((d - 2.160_246_899_469_287).abs() < 1e-12);
        assert!(curve_distance(&a, &[1.0]).is_err());
    }

    #[test]
    fn panel_validation() {
        let a = CurveSeries::new("a", vec![0.0, 1.0]).unwrap();
        let b = CurveSeries::new("b", vec![0.0]).unwrap();
        assert!(SeriesPanel::new(vec![a.clone(), b]).is_err());
        assert_eq!(
            SeriesPanel::new(vec![a.clone(), a.clone()]),
            Err(CsasError::DuplicateRegion("a".into()))
        );
        assert!(SeriesPanel::new(vec![]).is_err());
        assert!(CurveSeries::new("n", vec![f64::NAN]).is_err());
        let c = CurveSeries::new("c", vec![2.0, 3.0]).unwrap();
        let p = SeriesPanel::new(vec![a, c]).unwrap();
        assert_eq!(p.mean_curve(&[0, 1]), vec![1.0, 2.0]);
        assert_eq!(p.pairwise_distances().len(), 1);
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 12), 3)
        ) {
            let (a, b, c) = (&rows[0], &rows[1], &rows[2]);
            let ab = curve_distance(a, b).unwrap();
            let ba = curve_distance(b, a).unwrap();
            let bc = curve_distance(b, c).unwrap();
            let ac = curve_distance(a, c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn log1p_is_monotone_and_invertible(
            base in proptest::collection::vec(0i64..1_000_000_000, 1..20),
            bump in 0i64..1000,
        ) {
            let lo = log1p_transform(&counts(&base)).unwrap();
            let raised: Vec<i64> = base.iter().map(|c| c + bump).collect();
            let hi = log1p_transform(&counts(&raised)).unwrap();
            for (l, h) in lo.values.iter().zip(&hi.values) {
                prop_assert!(l <= h);
            }
            for (z, &y) in lo.values.iter().zip(&base) {
                let back = libm::expm1(*z);
                prop_assert!((back - y as f64).abs() <= 1e-12 * (y as f64).max(1.0));
            }
        }
    }
}
