//! Flat key-value model files, one per series.
//!
//! ```text
//! # assistant forecast model
//! format=1
//! model_id=<id>
//! material_id=<id>
//! client_id=<id>
//! seed=<u64>
//! lags=1,2,7
//! calendar=is_monday,is_tuesday
//! regularization=0.1
//! clamp_nonnegative=true
//! intercept=<f64>
//! coefficient.<feature name>=<f64>
//! mean.<feature name>=<f64>
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Values run from the
//! first `=` to the end of the line. Floats are written in shortest
//! round-trip form.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{CalendarFeature, ModelSpec, TrainedModel};
use crate::ingestion::SeriesKey;

const FORMAT_VERSION: &str = "1";
const EXTENSION: &str = "model";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: missing key `{key}`")]
    MissingKey { path: String, key: String },
    #[error("value for `{0}` contains a line break")]
    Unencodable(String),
}

impl TrainedModel {
    pub fn to_text(&self) -> Result<String, ModelFileError> {
        for (what, v) in [
            ("model_id", &self.model_id),
            ("material_id", &self.series.material_id),
            ("client_id", &self.series.client_id),
        ] {
            if v.contains(['\n', '\r']) {
                return Err(ModelFileError::Unencodable(what.to_string()));
            }
        }
        let mut out = String::new();
        let spec = &self.spec;
        let join = |items: Vec<String>| items.join(",");
        writeln!(out, "# assistant forecast model").unwrap();
        writeln!(out, "format={FORMAT_VERSION}").unwrap();
        writeln!(out, "model_id={}", self.model_id).unwrap();
        writeln!(out, "material_id={}", self.series.material_id).unwrap();
        writeln!(out, "client_id={}", self.series.client_id).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "lags={}", join(spec.lags.iter().map(u32::to_string).collect())).unwrap();
        writeln!(
            out,
            "calendar={}",
            join(spec.calendar_features.iter().map(ToString::to_string).collect())
        )
        .unwrap();
        writeln!(out, "regularization={:?}", spec.regularization).unwrap();
        writeln!(out, "clamp_nonnegative={}", spec.clamp_nonnegative).unwrap();
        writeln!(out, "intercept={:?}", self.intercept).unwrap();
        for (name, c) in self.feature_names.iter().zip(&self.coefficients) {
            writeln!(out, "coefficient.{name}={c:?}").unwrap();
        }
        for (name, m) in self.feature_names.iter().zip(&self.feature_means) {
            writeln!(out, "mean.{name}={m:?}").unwrap();
        }
        Ok(out)
    }

    /// Parses a model file; `origin` only labels error messages.
    pub fn from_text(text: &str, origin: &str) -> Result<Self, ModelFileError> {
        let parse_err = |line: usize, message: String| ModelFileError::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut values: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, format!("expected key=value, found `{line}`")))?;
            if values.insert(k, (i + 1, v)).is_some() {
                return Err(parse_err(i + 1, format!("duplicate key `{k}`")));
            }
        }
        let get = |key: &str| -> Result<(usize, &str), ModelFileError> {
            values.get(key).copied().ok_or_else(|| ModelFileError::MissingKey {
                path: origin.to_string(),
                key: key.to_string(),
            })
        };
        let float = |key: &str| -> Result<f64, ModelFileError> {
            let (line, v) = get(key)?;
            v.parse::<f64>().map_err(|e| parse_err(line, format!("`{key}`: {e}")))
        };

        let (line, format) = get("format")?;
        if format != FORMAT_VERSION {
            return Err(parse_err(line, format!("unsupported format `{format}`")));
        }
        let (line, lags_raw) = get("lags")?;
        let lags = lags_raw
            .split(',')
            .map(|l| l.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(line, format!("lags: {e}")))?;
        let (line, cal_raw) = get("calendar")?;
        let calendar_features = if cal_raw.trim().is_empty() {
            Vec::new()
        } else {
            cal_raw
                .split(',')
                .map(|c| c.trim().parse::<CalendarFeature>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(line, e.to_string()))?
        };
        let (line, clamp) = get("clamp_nonnegative")?;
        let clamp_nonnegative = clamp
            .parse::<bool>()
            .map_err(|e| parse_err(line, format!("clamp_nonnegative: {e}")))?;
        let (line, seed) = get("seed")?;
        let seed = seed.parse::<u64>().map_err(|e| parse_err(line, format!("seed: {e}")))?;
        let spec = ModelSpec {
            lags,
            calendar_features,
            regularization: float("regularization")?,
            clamp_nonnegative,
        };
        spec.validate().map_err(|e| parse_err(0, e.to_string()))?;

        let names = spec.feature_names();
        let coefficients = names
            .iter()
            .map(|n| float(&format!("coefficient.{n}")))
            .collect::<Result<Vec<_>, _>>()?;
        let feature_means = names
            .iter()
            .map(|n| float(&format!("mean.{n}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrainedModel {
            model_id: get("model_id")?.1.to_string(),
            series: SeriesKey::new(get("material_id")?.1, get("client_id")?.1),
            spec,
            feature_names: names,
            coefficients,
            intercept: float("intercept")?,
            feature_means,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

/// Writes `series_00001.model`, `series_00002.model`, … into `dir`.
pub fn save_models<'a>(
    dir: impl AsRef<Path>,
    models: impl IntoIterator<Item = &'a TrainedModel>,
) -> Result<Vec<PathBuf>, ModelFileError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, m) in models.into_iter().enumerate() {
        let path = dir.join(format!("series_{:05}.{EXTENSION}", i + 1));
        m.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Loads every `*.model` file in `dir`, ordered by file name.
pub fn load_models(dir: impl AsRef<Path>) -> Result<Vec<TrainedModel>, ModelFileError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == EXTENSION))
        .collect();
    paths.sort();
    paths.iter().map(TrainedModel::load).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrainedModel {
        let spec = ModelSpec::new(
            vec![1, 7],
            vec![CalendarFeature::Month(3), "is_friday".parse().unwrap()],
            0.25,
        )
        .unwrap();
        TrainedModel::from_parameters(
            SeriesKey::new("M1", "C=1"),
            spec,
            vec![0.1, -2.5e-7, 1.0 / 3.0, 4.0],
            -0.75,
            vec![12.5, 11.0, 0.08, 0.14],
            42,
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = sample();
        let text = m.to_text().unwrap();
        assert!(text.contains("coefficient.is_march=0.3333333333333333"));
        assert_eq!(TrainedModel::from_text(&text, "mem").unwrap(), m);
    }

    #[test]
    fn missing_key_reported() {
        let text = sample().to_text().unwrap().replace("intercept=", "# intercept=");
        assert!(matches!(
            TrainedModel::from_text(&text, "mem"),
            Err(ModelFileError::MissingKey { key, .. }) if key == "intercept"
        ));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let models = vec![sample(), sample()];
        save_models(dir.path(), &models).unwrap();
        assert_eq!(load_models(dir.path()).unwrap(), models);
    }
}
