//! Local surrogate explanations of single forecasts.
//!
//! The instance is perturbed by replacing random subsets of its features with
//! their training-set means. The model is queried on every perturbed copy and
//! a proximity-weighted ridge regression on the binary inclusion masks gives
//! one signed weight per feature. The strongest `top_k` are reported.

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecasting::{FeatureVector, ForecastError, TrainedModel};
use crate::linalg::{weighted_ridge, SolveError};

/// Ridge penalty of the surrogate fit; numerical stability only.
pub const SURROGATE_REGULARIZATION: f64 = 1e-6;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("invalid explainer configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate surrogate fit: {0}")]
    DegenerateFit(String),
    #[error("need at least {needed} samples with non-zero weight, got {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ForecastError),
}

pub type Result<T> = std::result::Result<T, ExplainError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerConfig {
    pub n_perturbations: usize,
    /// Kernel width σ, in mask-space distance units.
    pub kernel_width: f64,
    pub top_k: usize,
    pub seed: u64,
}

impl ExplainerConfig {
    /// Defaults for a model with `dimension` features: 50·d samples,
    /// σ = 0.75·√d and the top three features.
    pub fn for_dimension(dimension: usize) -> Self {
        Self {
            n_perturbations: 50 * dimension.max(1),
            kernel_width: 0.75 * (dimension.max(1) as f64).sqrt(),
            top_k: DEFAULT_TOP_K.min(dimension.max(1)),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_top_k(mut self, top_k: usize) -> Self {
        self.top_k = top_k;
        self
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if self.top_k == 0 || self.top_k > dimension {
            return Err(ExplainError::InvalidConfig(format!(
                "top_k {} must lie in 1..={dimension}",
                self.top_k
            )));
        }
        if self.n_perturbations < 2 * dimension {
            return Err(ExplainError::InvalidConfig(format!(
                "{} perturbations are fewer than twice the feature dimension {dimension}",
                self.n_perturbations
            )));
        }
        if !self.kernel_width.is_finite() || self.kernel_width <= 0.0 {
            return Err(ExplainError::InvalidConfig("kernel width must be positive".into()));
        }
        Ok(())
    }
}

/// A perturbed copy of the instance; `mask[j]` is true when feature `j`
/// keeps its original value.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSample {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl PerturbedSample {
    /// Euclidean distance from the all-ones mask.
    pub fn mask_distance(&self) -> f64 {
        (self.mask.iter().filter(|m| !**m).count() as f64).sqrt()
    }
}

/// Draws `n` samples. Sample 0 is the original instance; every other sample
/// keeps each feature independently with probability ½, so each subset is
/// equally likely, and replaces the rest by `replacement`.
pub fn perturb(features: &[f64], replacement: &[f64], n: usize, seed: u64) -> Result<Vec<PerturbedSample>> {
    if n == 0 {
        return Err(ExplainError::InvalidConfig("at least one sample is required".into()));
    }
    if replacement.len() != features.len() {
        return Err(ExplainError::InvalidConfig(format!(
            "{} replacement values for {} features",
            replacement.len(),
            features.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    samples.push(PerturbedSample {
        values: features.to_vec(),
        mask: vec![true; features.len()],
    });
    for _ in 1..n {
        let mask: Vec<bool> = (0..features.len()).map(|_| rng.random_bool(0.5)).collect();
        let values = mask
            .iter()
            .zip(features.iter().zip(replacement))
            .map(|(&keep, (&v, &r))| if keep { v } else { r })
            .collect();
        samples.push(PerturbedSample { values, mask });
    }
    Ok(samples)
}

/// Exponential proximity kernel `exp(-d² / σ²)`.
pub fn kernel_weight(distance: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    (-(distance * distance) / (sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    /// One coefficient per feature, over the binary mask space.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Weighted R² clamped to [0, 1]; 1 when the target has no variance.
    pub fidelity: f64,
}

pub fn fit_surrogate(samples: &[PerturbedSample], predictions: &[f64], weights: &[f64]) -> Result<SurrogateFit> {
    let n = samples.len();
    if predictions.len() != n || weights.len() != n {
        return Err(ExplainError::InvalidConfig(format!(
            "{n} samples, {} predictions, {} weights",
            predictions.len(),
            weights.len()
        )));
    }
    let d = samples.first().map_or(0, |s| s.mask.len());
    let nonzero = weights.iter().filter(|w| **w > 0.0).count();
    if nonzero < d + 1 {
        return Err(ExplainError::InsufficientSamples {
            needed: d + 1,
            found: nonzero,
        });
    }
    if samples.iter().all(|s| s.mask == samples[0].mask) {
        return Err(ExplainError::DegenerateFit("all masks are identical".into()));
    }
    let design: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }))
        .collect();
    let fit = weighted_ridge(&design, d, predictions, Some(weights), SURROGATE_REGULARIZATION).map_err(|e| {
        ExplainError::DegenerateFit(match e {
            SolveError::ConstantColumn(j) => format!("mask column {j} is constant"),
            SolveError::Singular => "weighted normal equations are singular".into(),
        })
    })?;

    let total: f64 = weights.iter().sum();
    let mean = weights.iter().zip(predictions).map(|(w, y)| w * y).sum::<f64>() / total;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((s, &y), &w) in samples.iter().zip(predictions).zip(weights) {
        let fitted = fit.intercept
            + s.mask
                .iter()
                .zip(&fit.coefficients)
                .map(|(&m, c)| if m { *c } else { 0.0 })
                .sum::<f64>();
        ss_res += w * (y - fitted).powi(2);
        ss_tot += w * (y - mean).powi(2);
    }
    let scale = weights.iter().zip(predictions).map(|(w, y)| w * y * y).sum::<f64>();
    let fidelity = if ss_tot <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(SurrogateFit {
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        fidelity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature_name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub explanation_id: String,
    pub forecast_id: String,
    /// Descending |weight|, equal magnitudes by feature name.
    pub attributions: Vec<Attribution>,
    pub fidelity: f64,
    pub created_at: DateTime<Utc>,
}

/// Sorts by |weight| descending, ties by name ascending, and keeps `k`.
pub fn top_attributions(mut all: Vec<Attribution>, k: usize) -> Vec<Attribution> {
    all.sort_by(|a, b| {
        b.weight
            .abs()
            .total_cmp(&a.weight.abs())
            .then_with(|| a.feature_name.cmp(&b.feature_name))
    });
    all.truncate(k);
    all
}

pub fn explain(
    model: &TrainedModel,
    features: &FeatureVector,
    config: &ExplainerConfig,
    forecast_id: &str,
) -> Result<ExplanationRecord> {
    let d = model.dimension();
    if features.dimension() != d {
        return Err(ForecastError::DimensionMismatch {
            expected: d,
            found: features.dimension(),
        }
        .into());
    }
    config.validate(d)?;
    let samples = perturb(
        &features.values,
        model.feature_means(),
        config.n_perturbations,
        config.seed,
    )?;
    let predictions = samples
        .iter()
        .map(|s| model.predict_value(&s.values))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let weights: Vec<f64> = samples
        .iter()
        .map(|s| kernel_weight(s.mask_distance(), config.kernel_width))
        .collect();
    let fit = fit_surrogate(&samples, &predictions, &weights)?;
    let all = model
        .feature_names()
        .iter()
        .zip(&fit.coefficients)
        .map(|(name, &weight)| Attribution {
            feature_name: name.clone(),
            weight,
        })
        .collect();
    Ok(ExplanationRecord {
        explanation_id: crate::new_id(),
        forecast_id: forecast_id.to_string(),
        attributions: top_attributions(all, config.top_k),
        fidelity: fit.fidelity,
        created_at: crate::now(),
    })
}
