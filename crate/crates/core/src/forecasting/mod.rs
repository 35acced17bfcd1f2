//! Per-series daily demand forecasting on lag and calendar features.
//!
//! Every series gets its own regularised linear model. Features for a target
//! date only look at observations dated strictly before it; days without an
//! observation count as zero demand.

mod backtest;
mod model;
mod persist;

pub use backtest::{backtest, backtest_with, BacktestReport, DEFAULT_FOLD_WINDOW};
pub use model::{predict, train, train_all, ForecastRecord, TrainedModel, TrainingSet};
pub use persist::{load_models, save_models, ModelFileError};

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use thiserror::Error;

use crate::ingestion::{DemandStore, Series, SeriesKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("unknown series {0}")]
    UnknownSeries(SeriesKey),
    #[error("insufficient history for {target_date}: need observations from {needed_from}")]
    InsufficientHistory {
        target_date: NaiveDate,
        needed_from: NaiveDate,
    },
    #[error("insufficient data: {rows} training rows, need {needed}")]
    InsufficientData { rows: usize, needed: usize },
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("dimension mismatch: model expects {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, ForecastError>;

/// Indicator feature evaluated on the target date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalendarFeature {
    Weekday(Weekday),
    /// Month of year, 1-12.
    Month(u32),
}

const WEEKDAY_NAMES: [&str; 7] = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];
const MONTH_NAMES: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

impl CalendarFeature {
    pub fn all_weekdays() -> Vec<Self> {
        (0..7)
            .map(|d| CalendarFeature::Weekday(Weekday::try_from(d as u8).expect("weekday index")))
            .collect()
    }

    pub fn all_months() -> Vec<Self> {
        (1..=12).map(CalendarFeature::Month).collect()
    }

    pub fn value(&self, date: NaiveDate) -> f64 {
        let hit = match self {
            CalendarFeature::Weekday(w) => date.weekday() == *w,
            CalendarFeature::Month(m) => date.month() == *m,
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for CalendarFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalendarFeature::Weekday(w) => {
                write!(f, "is_{}", WEEKDAY_NAMES[w.num_days_from_monday() as usize])
            }
            CalendarFeature::Month(m) => write!(f, "is_{}", MONTH_NAMES[(*m as usize) - 1]),
        }
    }
}

impl FromStr for CalendarFeature {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self> {
        let name = s
            .strip_prefix("is_")
            .ok_or_else(|| ForecastError::InvalidSpec(format!("unknown calendar feature `{s}`")))?;
        if let Some(i) = WEEKDAY_NAMES.iter().position(|n| *n == name) {
            return Ok(CalendarFeature::Weekday(
                Weekday::try_from(i as u8).expect("weekday index"),
            ));
        }
        if let Some(i) = MONTH_NAMES.iter().position(|n| *n == name) {
            return Ok(CalendarFeature::Month(i as u32 + 1));
        }
        Err(ForecastError::InvalidSpec(format!("unknown calendar feature `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub lags: Vec<u32>,
    pub calendar_features: Vec<CalendarFeature>,
    pub regularization: f64,
    pub clamp_nonnegative: bool,
}

pub const DEFAULT_LAGS: [u32; 5] = [1, 2, 7, 14, 28];

impl Default for ModelSpec {
    fn default() -> Self {
        let mut calendar = CalendarFeature::all_weekdays();
        calendar.extend(CalendarFeature::all_months());
        Self {
            lags: DEFAULT_LAGS.to_vec(),
            calendar_features: calendar,
            regularization: 0.1,
            clamp_nonnegative: true,
        }
    }
}

impl ModelSpec {
    pub fn new(lags: Vec<u32>, calendar_features: Vec<CalendarFeature>, regularization: f64) -> Result<Self> {
        let spec = Self {
            lags,
            calendar_features,
            regularization,
            clamp_nonnegative: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Lags only, no calendar indicators.
    pub fn lags_only(lags: Vec<u32>, regularization: f64) -> Result<Self> {
        Self::new(lags, Vec::new(), regularization)
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp_nonnegative = clamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags.is_empty() {
            return Err(ForecastError::InvalidSpec("lags must be non-empty".into()));
        }
        if self.lags[0] == 0 || self.lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ForecastError::InvalidSpec(
                "lags must be positive and strictly increasing".into(),
            ));
        }
        if !self.regularization.is_finite() || self.regularization < 0.0 {
            return Err(ForecastError::InvalidSpec("regularization must be non-negative".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.calendar_features.iter().all(|c| seen.insert(*c)) {
            return Err(ForecastError::InvalidSpec("duplicate calendar feature".into()));
        }
        if let Some(CalendarFeature::Month(m)) = self
            .calendar_features
            .iter()
            .find(|c| matches!(c, CalendarFeature::Month(m) if !(1..=12).contains(m)))
        {
            return Err(ForecastError::InvalidSpec(format!("month {m} out of range")));
        }
        Ok(())
    }

    pub fn feature_dimension(&self) -> usize {
        self.lags.len() + self.calendar_features.len()
    }

    pub fn max_lag(&self) -> u32 {
        *self.lags.last().expect("validated spec has lags")
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.lags
            .iter()
            .map(|l| format!("lag_{l}"))
            .chain(self.calendar_features.iter().map(ToString::to_string))
            .collect()
    }

    /// Writes the feature values for `target_date` into `out`.
    pub(crate) fn fill_features(&self, series: &Series, target_date: NaiveDate, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.lags
                .iter()
                .map(|&l| series.quantity_on(target_date - Duration::days(l as i64))),
        );
        out.extend(self.calendar_features.iter().map(|c| c.value(target_date)));
    }

    /// Earliest target date for which every lag falls on or after the first observation.
    pub(crate) fn first_target(&self, series: &Series) -> Option<NaiveDate> {
        series.first_date().map(|d| d + Duration::days(self.max_lag() as i64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub series: SeriesKey,
    pub target_date: NaiveDate,
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

impl FeatureVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Leakage-free features for `target_date`: lagged demand followed by
/// calendar indicators of the target date itself.
pub fn build_features(
    store: &DemandStore,
    series: &SeriesKey,
    target_date: NaiveDate,
    spec: &ModelSpec,
) -> Result<FeatureVector> {
    spec.validate()?;
    let data = store
        .series(series)
        .ok_or_else(|| ForecastError::UnknownSeries(series.clone()))?;
    let needed_from = target_date - Duration::days(spec.max_lag() as i64);
    match data.first_date() {
        Some(first) if first <= needed_from => {}
        _ => {
            return Err(ForecastError::InsufficientHistory {
                target_date,
                needed_from,
            })
        }
    }
    let mut values = Vec::with_capacity(spec.feature_dimension());
    spec.fill_features(data, target_date, &mut values);
    Ok(FeatureVector {
        series: series.clone(),
        target_date,
        values,
        names: spec.feature_names(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::DemandObservation;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn store_from(values: &[(NaiveDate, f64)]) -> DemandStore {
        DemandStore::from_observations(
            values
                .iter()
                .map(|&(d, q)| DemandObservation {
                    date: d,
                    material_id: "M1".into(),
                    client_id: "C1".into(),
                    quantity: q,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_series_lags() {
        let start = date("2021-03-01");
        let store = store_from(&(0..20).map(|i| (start + Duration::days(i), 5.0)).collect::<Vec<_>>());
        let spec = ModelSpec::lags_only(vec![1, 7], 0.0).unwrap();
        let fv = build_features(&store, &SeriesKey::new("M1", "C1"), start + Duration::days(15), &spec).unwrap();
        assert_eq!(fv.values, vec![5.0, 5.0]);
        assert_eq!(fv.names, vec!["lag_1", "lag_7"]);
    }

    #[test]
    fn lags_look_up_the_right_days() {
        let target = date("2021-03-20");
        let mut obs: Vec<(NaiveDate, f64)> = (1..=10).map(|i| (target - Duration::days(i), 0.5)).collect();
        obs[0].1 = 3.0; // t-1
        obs[6].1 = 9.0; // t-7
        let store = store_from(&obs);
        let spec = ModelSpec::lags_only(vec![1, 7], 0.0).unwrap();
        let fv = build_features(&store, &SeriesKey::new("M1", "C1"), target, &spec).unwrap();
        assert_eq!(fv.values, vec![3.0, 9.0]);
    }

    #[test]
    fn monday_indicator() {
        let monday = date("2021-03-22");
        assert_eq!(monday.weekday(), Weekday::Mon);
        let store = store_from(&(1..=3).map(|i| (monday - Duration::days(i), 1.0)).collect::<Vec<_>>());
        let spec = ModelSpec::new(vec![1], CalendarFeature::all_weekdays(), 0.1).unwrap();
        let fv = build_features(&store, &SeriesKey::new("M1", "C1"), monday, &spec).unwrap();
        let idx = fv.names.iter().position(|n| n == "is_monday").unwrap();
        for (i, v) in fv.values.iter().enumerate().skip(1) {
            assert_eq!(*v, if i == idx { 1.0 } else { 0.0 }, "{}", fv.names[i]);
        }
    }

    #[test]
    fn missing_days_are_zero_and_history_is_checked() {
        let store = store_from(&[(date("2021-01-01"), 4.0), (date("2021-01-05"), 2.0)]);
        let spec = ModelSpec::lags_only(vec![1, 3], 0.0).unwrap();
        let key = SeriesKey::new("M1", "C1");
        let fv = build_features(&store, &key, date("2021-01-05"), &spec).unwrap();
        assert_eq!(fv.values, vec![0.0, 0.0]);
        assert!(matches!(
            build_features(&store, &key, date("2021-01-03"), &spec),
            Err(ForecastError::InsufficientHistory { .. })
        ));
        assert!(matches!(
            build_features(&store, &SeriesKey::new("M9", "C1"), date("2021-01-05"), &spec),
            Err(ForecastError::UnknownSeries(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::lags_only(vec![], 0.1).is_err());
        assert!(ModelSpec::lags_only(vec![7, 1], 0.1).is_err());
        assert!(ModelSpec::lags_only(vec![0, 1], 0.1).is_err());
        assert!(ModelSpec::lags_only(vec![1], -1.0).is_err());
        let spec = ModelSpec::default();
        assert_eq!(spec.feature_dimension(), 5 + 7 + 12);
        assert_eq!(spec.feature_names().len(), spec.feature_dimension());
    }

    #[test]
    fn calendar_names_round_trip() {
        for c in CalendarFeature::all_weekdays()
            .into_iter()
            .chain(CalendarFeature::all_months())
        {
            assert_eq!(c.to_string().parse::<CalendarFeature>().unwrap(), c);
        }
        assert!("is_funday".parse::<CalendarFeature>().is_err());
    }
}
