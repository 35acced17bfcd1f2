//! Query selection by committee disagreement.
//!
//! A committee of forecasters is fit on bootstrap resamples of one series'
//! training rows; the sample variance of their predictions scores how much a
//! label for that forecast would tell us. Decision snapshots are scored by
//! how little feedback their forecast's options have collected so far.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forecasting::{FeatureVector, ForecastError, ModelSpec, TrainedModel, TrainingSet};
use crate::ingestion::{DemandStore, SeriesKey};

#[derive(Debug, Clone, PartialEq)]
pub struct CommitteeConfig {
    pub committee_size: usize,
    pub resample_fraction: f64,
    pub seed: u64,
    /// Bootstrap draws with replacement. Without it each member sees a
    /// random subset, and a fraction of 1.0 gives identical members.
    pub with_replacement: bool,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        Self {
            committee_size: 5,
            resample_fraction: 1.0,
            seed: 0,
            with_replacement: true,
        }
    }
}

impl CommitteeConfig {
    pub fn new(committee_size: usize, seed: u64) -> Self {
        Self {
            committee_size,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.committee_size < 2 {
            return Err(ForecastError::InvalidArgument(format!(
                "committee needs at least 2 members, got {}",
                self.committee_size
            )));
        }
        if !(self.resample_fraction > 0.0 && self.resample_fraction <= 1.0) {
            return Err(ForecastError::InvalidArgument(format!(
                "resample fraction must lie in (0, 1], got {}",
                self.resample_fraction
            )));
        }
        Ok(())
    }
}

fn resample(rows: usize, config: &CommitteeConfig, member: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(member as u64);
    let m = ((rows as f64 * config.resample_fraction).round() as usize).clamp(1, rows);
    let mut idx: Vec<usize> = if config.with_replacement {
        (0..m).map(|_| rng.random_range(0..rows)).collect()
    } else {
        sample(&mut rng, rows, m).into_vec()
    };
    idx.sort_unstable();
    idx
}

/// Trains `committee_size` models on independent resamples of the series.
pub fn train_committee(
    store: &DemandStore,
    series: &SeriesKey,
    spec: &ModelSpec,
    config: &CommitteeConfig,
) -> Result<Vec<TrainedModel>, ForecastError> {
    config.validate()?;
    spec.validate()?;
    let set = TrainingSet::build(store, series, spec, None)?;
    let needed = spec.feature_dimension() + 2;
    if set.len() < needed {
        return Err(ForecastError::InsufficientData {
            rows: set.len(),
            needed,
        });
    }
    (0..config.committee_size)
        .into_par_iter()
        .map(|member| set.select(&resample(set.len(), config, member)).fit(spec, config.seed))
        .collect()
}

pub fn committee_predictions(committee: &[TrainedModel], features: &FeatureVector) -> Result<Vec<f64>, ForecastError> {
    committee
        .iter()
        .map(|m| m.predict_unclamped(&features.values))
        .collect()
}

/// Unbiased sample variance; 0 for fewer than two values. Computed from
/// pairwise differences, so equal inputs give exactly 0 and small integer
/// inputs are exact up to the final division.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            sum += (a - b) * (a - b);
        }
    }
    sum / (n * (n - 1)) as f64
}

pub fn forecast_uncertainty(committee: &[TrainedModel], features: &FeatureVector) -> Result<f64, ForecastError> {
    Ok(sample_variance(&committee_predictions(committee, features)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryTargetKind {
    Forecast,
    Snapshot,
}

impl QueryTargetKind {
    pub fn name(self) -> &'static str {
        match self {
            QueryTargetKind::Forecast => "forecast",
            QueryTargetKind::Snapshot => "snapshot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateInput {
    Forecast {
        target_id: String,
        member_predictions: Vec<f64>,
    },
    Snapshot {
        target_id: String,
        feedback_count: usize,
    },
}

impl CandidateInput {
    pub fn target_id(&self) -> &str {
        match self {
            CandidateInput::Forecast { target_id, .. } | CandidateInput::Snapshot { target_id, .. } => target_id,
        }
    }

    pub fn kind(&self) -> QueryTargetKind {
        match self {
            CandidateInput::Forecast { .. } => QueryTargetKind::Forecast,
            CandidateInput::Snapshot { .. } => QueryTargetKind::Snapshot,
        }
    }
}

pub trait Scorer {
    /// Non-negative informativeness plus a one-line rationale.
    fn score(&self, candidate: &CandidateInput) -> (f64, String);
}

/// Committee variance for forecasts, 1 / (1 + feedback count) for snapshots.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultScorer;

impl Scorer for DefaultScorer {
    fn score(&self, candidate: &CandidateInput) -> (f64, String) {
        match candidate {
            CandidateInput::Forecast { member_predictions, .. } => {
                let v = sample_variance(member_predictions);
                (
                    v,
                    format!(
                        "committee of {} disagrees with variance {v:.4}",
                        member_predictions.len()
                    ),
                )
            }
            CandidateInput::Snapshot { feedback_count, .. } => (
                1.0 / (1.0 + *feedback_count as f64),
                format!("{feedback_count} feedback records on this forecast's options"),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCandidate {
    pub candidate_id: String,
    pub target_kind: QueryTargetKind,
    pub target_id: String,
    pub informativeness: f64,
    pub rationale: String,
}

fn by_score(a: &QueryCandidate, b: &QueryCandidate) -> std::cmp::Ordering {
    b.informativeness
        .total_cmp(&a.informativeness)
        .then_with(|| a.target_id.cmp(&b.target_id))
}

/// Scores candidates and orders them by informativeness (ties by target id).
/// Forecast and snapshot scores are not comparable, so each kind is ranked
/// separately and the two lists are interleaved, forecast first.
pub fn rank_queries(candidates: &[CandidateInput], scorer: &dyn Scorer) -> Vec<QueryCandidate> {
    let (mut forecasts, mut snapshots): (Vec<_>, Vec<_>) = candidates
        .iter()
        .map(|c| {
            let (score, rationale) = scorer.score(c);
            QueryCandidate {
                candidate_id: crate::new_id(),
                target_kind: c.kind(),
                target_id: c.target_id().to_string(),
                informativeness: if score.is_finite() { score.max(0.0) } else { 0.0 },
                rationale,
            }
        })
        .partition(|q| q.target_kind == QueryTargetKind::Forecast);
    forecasts.sort_by(by_score);
    snapshots.sort_by(by_score);
    let mut out = Vec::with_capacity(candidates.len());
    let mut f = forecasts.into_iter();
    let mut s = snapshots.into_iter();
    loop {
        match (f.next(), s.next()) {
            (None, None) => break,
            (a, b) => out.extend(a.into_iter().chain(b)),
        }
    }
    out
}

pub fn select_batch(ranked: &[QueryCandidate], k: usize) -> Result<Vec<QueryCandidate>, ForecastError> {
    if k == 0 {
        return Err(ForecastError::InvalidArgument("k must be at least 1".into()));
    }
    Ok(ranked.iter().take(k).cloned().collect())
}
