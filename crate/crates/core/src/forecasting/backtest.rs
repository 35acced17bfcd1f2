use chrono::Duration;
use serde::Serialize;

use super::{ForecastError, ModelSpec, Result, TrainingSet};
use crate::ingestion::{DemandStore, SeriesKey};

/// Days scored after each cut date.
pub const DEFAULT_FOLD_WINDOW: u32 = 28;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub series: SeriesKey,
    pub folds: u32,
    pub scored_days: usize,
    pub mae: f64,
    pub baseline_mae: f64,
}

pub fn backtest(
    store: &DemandStore,
    series: &SeriesKey,
    spec: &ModelSpec,
    folds: u32,
    seed: u64,
) -> Result<BacktestReport> {
    backtest_with(store, series, spec, folds, DEFAULT_FOLD_WINDOW, seed)
}

/// Expanding-window backtest over the last `folds * window` days.
///
/// Fold `i` trains on every row before its cut date and scores one-day-ahead
/// predictions on the `window` days from the cut. The baseline predicts the
/// previous day's demand. Both errors are averaged over the same dates.
pub fn backtest_with(
    store: &DemandStore,
    series: &SeriesKey,
    spec: &ModelSpec,
    folds: u32,
    window: u32,
    seed: u64,
) -> Result<BacktestReport> {
    if folds == 0 {
        return Err(ForecastError::InvalidArgument("folds must be at least 1".into()));
    }
    if window == 0 {
        return Err(ForecastError::InvalidArgument(
            "fold window must be at least 1 day".into(),
        ));
    }
    let data = store
        .series(series)
        .ok_or_else(|| ForecastError::UnknownSeries(series.clone()))?;
    let all = TrainingSet::build(store, series, spec, None)?;
    let last = data.last_date().ok_or(ForecastError::InsufficientData {
        rows: 0,
        needed: spec.feature_dimension() + 2,
    })?;

    let mut model_error = 0.0;
    let mut baseline_error = 0.0;
    let mut scored = 0usize;
    for fold in 0..folds {
        let cut = last - Duration::days(((folds - fold) * window) as i64 - 1);
        let model = TrainingSet::build(store, series, spec, Some(cut))?.fit(spec, seed)?;
        let end = cut + Duration::days(window as i64 - 1);
        for (i, &date) in all.dates().iter().enumerate() {
            if date < cut || date > end {
                continue;
            }
            let observed = all.target(i);
            let predicted = model.predict_value(all.row(i))?;
            let previous = data.quantity_on(date - Duration::days(1));
            model_error += (predicted - observed).abs();
            baseline_error += (previous - observed).abs();
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(ForecastError::InsufficientData { rows: 0, needed: 1 });
    }
    Ok(BacktestReport {
        series: series.clone(),
        folds,
        scored_days: scored,
        mae: model_error / scored as f64,
        baseline_mae: baseline_error / scored as f64,
    })
}
