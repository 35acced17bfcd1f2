use chrono::{DateTime, Duration, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureVector, ForecastError, ModelSpec, Result};
use crate::ingestion::{DemandStore, SeriesKey};
use crate::linalg::{weighted_ridge, SolveError};

/// One daily demand prediction shown to the planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub forecast_id: String,
    pub series: SeriesKey,
    pub target_date: NaiveDate,
    pub quantity: f64,
    pub model_id: String,
    pub created_at: DateTime<Utc>,
}

/// Leakage-free (features, observed demand) rows of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub series: SeriesKey,
    n_cols: usize,
    design: Vec<f64>,
    targets: Vec<f64>,
    dates: Vec<NaiveDate>,
}

impl TrainingSet {
    /// Rows for every target date with full lag history, up to the last
    /// observation, or up to (excluding) `before` when given.
    pub fn build(store: &DemandStore, series: &SeriesKey, spec: &ModelSpec, before: Option<NaiveDate>) -> Result<Self> {
        spec.validate()?;
        let data = store
            .series(series)
            .ok_or_else(|| ForecastError::UnknownSeries(series.clone()))?;
        let n_cols = spec.feature_dimension();
        let mut set = Self {
            series: series.clone(),
            n_cols,
            design: Vec::new(),
            targets: Vec::new(),
            dates: Vec::new(),
        };
        let (Some(first), Some(last)) = (spec.first_target(data), data.last_date()) else {
            return Ok(set);
        };
        let end = match before {
            Some(b) => last.min(b - Duration::days(1)),
            None => last,
        };
        let mut row = Vec::with_capacity(n_cols);
        let mut date = first;
        while date <= end {
            spec.fill_features(data, date, &mut row);
            set.design.extend_from_slice(&row);
            set.targets.push(data.quantity_on(date));
            set.dates.push(date);
            date += Duration::days(1);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Rows picked by index, repetitions allowed (bootstrap resamples).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut design = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            design.extend_from_slice(self.row(i));
        }
        Self {
            series: self.series.clone(),
            n_cols: self.n_cols,
            design,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            dates: indices.iter().map(|&i| self.dates[i]).collect(),
        }
    }

    /// Fits the ridge predictor on these rows.
    pub fn fit(&self, spec: &ModelSpec, seed: u64) -> Result<TrainedModel> {
        let needed = spec.feature_dimension() + 2;
        if self.n_cols != spec.feature_dimension() {
            return Err(ForecastError::DimensionMismatch {
                expected: spec.feature_dimension(),
                found: self.n_cols,
            });
        }
        if self.len() < needed {
            return Err(ForecastError::InsufficientData {
                rows: self.len(),
                needed,
            });
        }
        let names = spec.feature_names();
        let fit =
            weighted_ridge(&self.design, self.n_cols, &self.targets, None, spec.regularization).map_err(
                |e| match e {
                    SolveError::ConstantColumn(j) => ForecastError::DegenerateDesign(format!(
                        "feature `{}` is constant and regularization is zero",
                        names[j]
                    )),
                    SolveError::Singular => {
                        ForecastError::DegenerateDesign("normal equations are singular".to_string())
                    }
                },
            )?;
        let n = self.len() as f64;
        let feature_means = (0..self.n_cols)
            .map(|j| (0..self.len()).map(|i| self.row(i)[j]).sum::<f64>() / n)
            .collect();
        Ok(TrainedModel {
            model_id: crate::new_id(),
            series: self.series.clone(),
            spec: spec.clone(),
            feature_names: names,
            coefficients: fit.coefficients,
            intercept: fit.intercept,
            feature_means,
            seed,
        })
    }
}

/// A glass-box linear demand predictor for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub(crate) model_id: String,
    pub(crate) series: SeriesKey,
    pub(crate) spec: ModelSpec,
    pub(crate) feature_names: Vec<String>,
    pub(crate) coefficients: Vec<f64>,
    pub(crate) intercept: f64,
    pub(crate) feature_means: Vec<f64>,
    pub(crate) seed: u64,
}

impl TrainedModel {
    /// Assembles a model from known parameters. `feature_means` are the
    /// training-set means used as the explainer's replacement values.
    pub fn from_parameters(
        series: SeriesKey,
        spec: ModelSpec,
        coefficients: Vec<f64>,
        intercept: f64,
        feature_means: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let d = spec.feature_dimension();
        for (len, what) in [
            (coefficients.len(), "coefficients"),
            (feature_means.len(), "feature means"),
        ] {
            if len != d {
                return Err(ForecastError::InvalidArgument(format!(
                    "{what} have length {len}, spec dimension is {d}"
                )));
            }
        }
        Ok(Self {
            model_id: crate::new_id(),
            series,
            feature_names: spec.feature_names(),
            spec,
            coefficients,
            intercept,
            feature_means,
            seed,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn series(&self) -> &SeriesKey {
        &self.series
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.coefficients.len()
    }

    fn check_dimension(&self, found: usize) -> Result<()> {
        if found != self.dimension() {
            return Err(ForecastError::DimensionMismatch {
                expected: self.dimension(),
                found,
            });
        }
        Ok(())
    }

    /// Linear score before any clamping.
    pub fn predict_unclamped(&self, values: &[f64]) -> Result<f64> {
        self.check_dimension(values.len())?;
        Ok(self.intercept + self.coefficients.iter().zip(values).map(|(c, v)| c * v).sum::<f64>())
    }

    /// Served prediction: clamped at zero when the model spec enables clamping.
    pub fn predict_value(&self, values: &[f64]) -> Result<f64> {
        let raw = self.predict_unclamped(values)?;
        Ok(if self.spec.clamp_nonnegative { raw.max(0.0) } else { raw })
    }
}

pub fn train(store: &DemandStore, series: &SeriesKey, spec: &ModelSpec, seed: u64) -> Result<TrainedModel> {
    TrainingSet::build(store, series, spec, None)?.fit(spec, seed)
}

/// Trains one model per series in parallel, in series-key order.
pub fn train_all(store: &DemandStore, spec: &ModelSpec, seed: u64) -> Vec<(SeriesKey, Result<TrainedModel>)> {
    let keys: Vec<&SeriesKey> = store.keys().collect();
    keys.par_iter()
        .map(|k| ((*k).clone(), train(store, k, spec, seed)))
        .collect()
}

pub fn predict(model: &TrainedModel, features: &FeatureVector) -> Result<ForecastRecord> {
    let quantity = model.predict_value(&features.values)?;
    Ok(ForecastRecord {
        forecast_id: crate::new_id(),
        series: features.series.clone(),
        target_date: features.target_date,
        quantity,
        model_id: model.model_id.clone(),
        created_at: crate::now(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasting::build_features;
    use crate::ingestion::DemandObservation;

    fn key() -> SeriesKey {
        SeriesKey::new("M1", "C1")
    }

    fn store_from(values: &[f64]) -> DemandStore {
        let start = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
        DemandStore::from_observations(
            values
                .iter()
                .enumerate()
                .map(|(i, &q)| DemandObservation {
                    date: start + Duration::days(i as i64),
                    material_id: "M1".into(),
                    client_id: "C1".into(),
                    quantity: q,
                })
                .collect(),
        )
        .unwrap()
    }

    fn features(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            series: key(),
            target_date: NaiveDate::from_ymd_opt(2021, 6, 1).unwrap(),
            names: (0..values.len()).map(|i| format!("f{i}")).collect(),
            values,
        }
    }

    #[test]
    fn constant_target_is_absorbed_by_intercept() {
        let store = store_from(&[4.0; 40]);
        let spec = ModelSpec::default();
        let spec = ModelSpec::new(vec![1, 7], spec.calendar_features[..7].to_vec(), 0.1).unwrap();
        let model = train(&store, &key(), &spec, 3).unwrap();
        for day in 10..40 {
            let date = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap() + Duration::days(day);
            let fv = build_features(&store, &key(), date, &spec).unwrap();
            assert!((model.predict_value(&fv.values).unwrap() - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_model_prediction() {
        let spec = ModelSpec::lags_only(vec![1, 2], 0.0).unwrap();
        let model = TrainedModel::from_parameters(key(), spec, vec![0.0, 0.0], 7.5, vec![0.0, 0.0], 0).unwrap();
        assert_eq!(predict(&model, &features(vec![100.0, -3.0])).unwrap().quantity, 7.5);
    }

    #[test]
    fn negative_prediction_is_clamped() {
        let spec = ModelSpec::lags_only(vec![1, 2], 0.0).unwrap();
        let model = TrainedModel::from_parameters(key(), spec.clone(), vec![1.0, 1.0], -10.0, vec![0.0; 2], 0).unwrap();
        assert_eq!(predict(&model, &features(vec![0.0, 0.0])).unwrap().quantity, 0.0);
        let unclamped =
            TrainedModel::from_parameters(key(), spec.with_clamp(false), vec![1.0, 1.0], -10.0, vec![0.0; 2], 0)
                .unwrap();
        assert_eq!(predict(&unclamped, &features(vec![0.0, 0.0])).unwrap().quantity, -10.0);
    }

    #[test]
    fn hand_arithmetic_prediction() {
        let spec = ModelSpec::lags_only(vec![1, 7], 0.0).unwrap();
        let model = TrainedModel::from_parameters(key(), spec, vec![2.0, -3.0], 1.0, vec![0.0; 2], 0).unwrap();
        assert_eq!(predict(&model, &features(vec![4.0, 1.0])).unwrap().quantity, 6.0);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = ModelSpec::lags_only(vec![1, 7], 0.0).unwrap();
        let model = TrainedModel::from_parameters(key(), spec, vec![2.0, -3.0], 1.0, vec![0.0; 2], 0).unwrap();
        assert!(matches!(
            predict(&model, &features(vec![1.0])),
            Err(ForecastError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn too_few_rows() {
        let store = store_from(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let spec = ModelSpec::lags_only(vec![1, 2], 0.1).unwrap();
        assert!(matches!(
            train(&store, &key(), &spec, 0),
            Err(ForecastError::InsufficientData { rows: 3, needed: 4 })
        ));
    }

    #[test]
    fn constant_feature_without_regularization_is_degenerate() {
        let store = store_from(&[4.0; 30]);
        let spec = ModelSpec::lags_only(vec![1], 0.0).unwrap();
        assert!(matches!(
            train(&store, &key(), &spec, 0),
            Err(ForecastError::DegenerateDesign(_))
        ));
    }

    #[test]
    fn heavy_regularization_shrinks_coefficients() {
        let values: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64).collect();
        let store = store_from(&values);
        let spec = ModelSpec::lags_only(vec![1, 2, 7], 1e6).unwrap();
        let model = train(&store, &key(), &spec, 0).unwrap();
        assert!(
            model.coefficients().iter().all(|c| c.abs() < 1e-3),
            "{:?}",
            model.coefficients()
        );
    }
}
