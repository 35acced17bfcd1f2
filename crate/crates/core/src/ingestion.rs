//! Loading and generating the operational data the assistant works on.
//!
//! Demand history arrives as `demand.csv` (`date,material_id,client_id,quantity`)
//! and the transport plan as `transports.csv`
//! (`transport_id,departure_date,destination_client_id,capacity,committed`).
//! Both are validated into immutable in-memory stores.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEMAND_HEADER: [&str; 4] = ["date", "material_id", "client_id", "quantity"];
pub const TRANSPORT_HEADER: [&str; 5] = [
    "transport_id",
    "departure_date",
    "destination_client_id",
    "capacity",
    "committed",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: unexpected header, expected `{expected}`")]
    InvalidHeader { line: u64, expected: String },
    #[error("line {line}: malformed field `{field}`: {message}")]
    MalformedRow { line: u64, field: String, message: String },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: u64, key: String },
    #[error("line {line}: negative quantity {quantity}")]
    NegativeQuantity { line: u64, quantity: f64 },
    #[error("line {line}: transport {transport_id} commits {committed} above capacity {capacity}")]
    CommittedExceedsCapacity {
        line: u64,
        transport_id: String,
        capacity: f64,
        committed: f64,
    },
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// One (material, client) demand time-series.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub material_id: String,
    pub client_id: String,
}

impl SeriesKey {
    pub fn new(material_id: impl Into<String>, client_id: impl Into<String>) -> Self {
        Self {
            material_id: material_id.into(),
            client_id: client_id.into(),
        }
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.material_id, self.client_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandObservation {
    pub date: NaiveDate,
    pub material_id: String,
    pub client_id: String,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportRecord {
    pub transport_id: String,
    pub departure_date: NaiveDate,
    pub destination_client_id: String,
    pub capacity: f64,
    pub committed: f64,
}

impl TransportRecord {
    pub fn free_capacity(&self) -> f64 {
        self.capacity - self.committed
    }
}

/// Observations of one series, strictly increasing in date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    observations: Vec<(NaiveDate, f64)>,
}

impl Series {
    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.observations.first().map(|o| o.0)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.observations.last().map(|o| o.0)
    }

    /// Demand on `date`; days without an observation count as zero demand.
    pub fn quantity_on(&self, date: NaiveDate) -> f64 {
        match self.observations.binary_search_by_key(&date, |o| o.0) {
            Ok(i) => self.observations[i].1,
            Err(_) => 0.0,
        }
    }
}

/// Validated, immutable demand history keyed by series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandStore {
    series: BTreeMap<SeriesKey, Series>,
}

impl DemandStore {
    /// Builds a store, rejecting negative quantities and repeated
    /// (date, material, client) keys. Line numbers in errors are 1-based
    /// positions in `observations`, offset by one for a header row.
    pub fn from_observations(observations: Vec<DemandObservation>) -> Result<Self> {
        let lines: Vec<u64> = (0..observations.len() as u64).map(|i| i + 2).collect();
        Self::build(observations.into_iter().zip(lines))
    }

    fn build(rows: impl IntoIterator<Item = (DemandObservation, u64)>) -> Result<Self> {
        let mut seen: HashSet<(NaiveDate, String, String)> = HashSet::new();
        let mut series: BTreeMap<SeriesKey, Series> = BTreeMap::new();
        for (obs, line) in rows {
            if obs.material_id.is_empty() || obs.client_id.is_empty() {
                return Err(IngestError::MalformedRow {
                    line,
                    field: if obs.material_id.is_empty() {
                        "material_id"
                    } else {
                        "client_id"
                    }
                    .to_string(),
                    message: "empty identifier".to_string(),
                });
            }
            if !obs.quantity.is_finite() || obs.quantity < 0.0 {
                return Err(IngestError::NegativeQuantity {
                    line,
                    quantity: obs.quantity,
                });
            }
            if !seen.insert((obs.date, obs.material_id.clone(), obs.client_id.clone())) {
                return Err(IngestError::DuplicateKey {
                    line,
                    key: format!("({}, {}, {})", obs.date, obs.material_id, obs.client_id),
                });
            }
            series
                .entry(SeriesKey::new(obs.material_id, obs.client_id))
                .or_default()
                .observations
                .push((obs.date, obs.quantity));
        }
        for s in series.values_mut() {
            s.observations.sort_by_key(|o| o.0);
        }
        Ok(Self { series })
    }

    pub fn series(&self, key: &SeriesKey) -> Option<&Series> {
        self.series.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.series.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SeriesKey, &Series)> {
        self.series.iter()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn observation_count(&self) -> usize {
        self.series.values().map(|s| s.observations.len()).sum()
    }

    /// All observations, ordered by series key then date.
    pub fn observations(&self) -> impl Iterator<Item = DemandObservation> + '_ {
        self.series.iter().flat_map(|(k, s)| {
            s.observations.iter().map(move |&(date, quantity)| DemandObservation {
                date,
                material_id: k.material_id.clone(),
                client_id: k.client_id.clone(),
                quantity,
            })
        })
    }

    pub fn materials(&self) -> BTreeSet<&str> {
        self.series.keys().map(|k| k.material_id.as_str()).collect()
    }

    pub fn clients(&self) -> BTreeSet<&str> {
        self.series.keys().map(|k| k.client_id.as_str()).collect()
    }

    /// Series of one material, ordered by client id.
    pub fn series_for_material<'a>(&'a self, material_id: &'a str) -> impl Iterator<Item = &'a SeriesKey> + 'a {
        self.series.keys().filter(move |k| k.material_id == material_id)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.series.values().filter_map(Series::last_date).max()
    }
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_error)?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(IngestError::InvalidHeader {
            line: 1,
            expected: expected.join(","),
        });
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::MalformedRow {
            line,
            field: "record".to_string(),
            message: format!("{other:?}"),
        },
    }
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    line: u64,
    names: &'a [&'a str],
}

impl Row<'_> {
    fn text(&self, idx: usize) -> Result<&str> {
        match self.record.get(idx).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.malformed(idx, "missing value")),
        }
    }

    fn date(&self, idx: usize) -> Result<NaiveDate> {
        let raw = self.text(idx)?;
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|e| self.malformed(idx, &format!("invalid date `{raw}`: {e}")))
    }

    fn number(&self, idx: usize) -> Result<f64> {
        let raw = self.text(idx)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.malformed(idx, &format!("invalid number `{raw}`"))),
        }
    }

    fn malformed(&self, idx: usize, message: &str) -> IngestError {
        IngestError::MalformedRow {
            line: self.line,
            field: self.names[idx].to_string(),
            message: message.to_string(),
        }
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn records<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<Vec<(csv::StringRecord, u64)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != expected.len() {
            return Err(IngestError::MalformedRow {
                line,
                field: "record".to_string(),
                message: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        out.push((rec, line));
    }
    Ok(out)
}

/// Parses demand history from any reader holding `demand.csv` content.
pub fn parse_demand(input: impl Read) -> Result<DemandStore> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &DEMAND_HEADER)?;
    let mut rows = Vec::new();
    for (rec, line) in records(&mut rdr, &DEMAND_HEADER)? {
        let row = Row {
            record: &rec,
            line,
            names: &DEMAND_HEADER,
        };
        let obs = DemandObservation {
            date: row.date(0)?,
            material_id: row.text(1)?.to_string(),
            client_id: row.text(2)?.to_string(),
            quantity: row.number(3)?,
        };
        rows.push((obs, line));
    }
    DemandStore::build(rows)
}

pub fn load_demand_history(path: impl AsRef<Path>) -> Result<DemandStore> {
    parse_demand(File::open(path)?)
}

/// Parses `transports.csv` content.
pub fn parse_transports(input: impl Read) -> Result<Vec<TransportRecord>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &TRANSPORT_HEADER)?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (rec, line) in records(&mut rdr, &TRANSPORT_HEADER)? {
        let row = Row {
            record: &rec,
            line,
            names: &TRANSPORT_HEADER,
        };
        let t = TransportRecord {
            transport_id: row.text(0)?.to_string(),
            departure_date: row.date(1)?,
            destination_client_id: row.text(2)?.to_string(),
            capacity: row.number(3)?,
            committed: row.number(4)?,
        };
        if t.capacity <= 0.0 {
            return Err(row.malformed(3, "capacity must be positive"));
        }
        if t.committed < 0.0 {
            return Err(row.malformed(4, "committed must be non-negative"));
        }
        if t.committed > t.capacity {
            return Err(IngestError::CommittedExceedsCapacity {
                line,
                transport_id: t.transport_id,
                capacity: t.capacity,
                committed: t.committed,
            });
        }
        if !ids.insert(t.transport_id.clone()) {
            return Err(IngestError::DuplicateKey {
                line,
                key: t.transport_id,
            });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_transports(path: impl AsRef<Path>) -> Result<Vec<TransportRecord>> {
    parse_transports(File::open(path)?)
}

pub fn write_demand(store: &DemandStore, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DEMAND_HEADER).map_err(csv_error)?;
    for o in store.observations() {
        w.write_record([
            o.date.format("%Y-%m-%d").to_string(),
            o.material_id,
            o.client_id,
            o.quantity.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_transports(transports: &[TransportRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSPORT_HEADER).map_err(csv_error)?;
    for t in transports {
        w.write_record([
            t.transport_id.clone(),
            t.departure_date.format("%Y-%m-%d").to_string(),
            t.destination_client_id.clone(),
            t.capacity.to_string(),
            t.committed.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `demand.csv` and `transports.csv` into `dir`, creating it if needed.
pub fn save_store(dir: impl AsRef<Path>, store: &DemandStore, transports: &[TransportRecord]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_demand(store, std::io::BufWriter::new(File::create(dir.join("demand.csv"))?))?;
    write_transports(
        transports,
        std::io::BufWriter::new(File::create(dir.join("transports.csv"))?),
    )?;
    Ok(())
}

/// Reads the two CSV files of a store directory written by [`save_store`].
pub fn open_store(dir: impl AsRef<Path>) -> Result<(DemandStore, Vec<TransportRecord>)> {
    let dir = dir.as_ref();
    Ok((
        load_demand_history(dir.join("demand.csv"))?,
        load_transports(dir.join("transports.csv"))?,
    ))
}

/// Shape of generated demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub start_date: NaiveDate,
    /// Weekly swing relative to the base level.
    pub seasonal_amplitude: f64,
    /// Half-width of the uniform noise band relative to the base level.
    pub noise_ratio: f64,
    pub base_range: (f64, f64),
    pub max_transports_per_client: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            seasonal_amplitude: 0.5,
            noise_ratio: 0.1,
            base_range: (5.0, 50.0),
            max_transports_per_client: 3,
        }
    }
}

pub fn generate_synthetic(
    n_materials: usize,
    n_clients: usize,
    n_series: usize,
    days: usize,
    seed: u64,
) -> Result<(DemandStore, Vec<TransportRecord>)> {
    generate_synthetic_with(
        &SyntheticConfig::default(),
        n_materials,
        n_clients,
        n_series,
        days,
        seed,
    )
}

/// Deterministic synthetic history: each series is a base level times a
/// weekly profile plus bounded uniform noise, clamped at zero. Every client
/// gets at least one transport departing after the last history date.
pub fn generate_synthetic_with(
    config: &SyntheticConfig,
    n_materials: usize,
    n_clients: usize,
    n_series: usize,
    days: usize,
    seed: u64,
) -> Result<(DemandStore, Vec<TransportRecord>)> {
    if n_materials == 0 || n_clients == 0 || n_series == 0 {
        return Err(IngestError::InfeasibleParameters(
            "materials, clients and series must be positive".to_string(),
        ));
    }
    if n_series > n_materials.saturating_mul(n_clients) {
        return Err(IngestError::InfeasibleParameters(format!(
            "{n_series} series cannot be drawn from {n_materials}×{n_clients} pairs"
        )));
    }
    if days < 30 {
        return Err(IngestError::InfeasibleParameters(format!(
            "at least 30 days required, got {days}"
        )));
    }
    if config.max_transports_per_client == 0 {
        return Err(IngestError::InfeasibleParameters(
            "max_transports_per_client must be positive".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = choose_pairs(&mut rng, n_materials, n_clients, n_series);
    let material_width = digits(n_materials);
    let client_width = digits(n_clients);
    let material_id = |m: usize| format!("M{:0w$}", m + 1, w = material_width);
    let client_id = |c: usize| format!("C{:0w$}", c + 1, w = client_width);

    let mut observations = Vec::with_capacity(n_series * days);
    let mut client_level = vec![0.0; n_clients];
    for &(m, c) in &pairs {
        let base = rng.random_range(config.base_range.0..=config.base_range.1);
        let profile: [f64; 7] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        client_level[c] += base;
        for day in 0..days {
            let date = config.start_date + Duration::days(day as i64);
            let weekday = date.weekday().num_days_from_monday() as usize;
            let noise = rng.random_range(-1.0..=1.0) * config.noise_ratio * base;
            let value = base * (1.0 + config.seasonal_amplitude * profile[weekday]) + noise;
            observations.push(DemandObservation {
                date,
                material_id: material_id(m),
                client_id: client_id(c),
                quantity: round2(value.max(0.0)),
            });
        }
    }
    let store = DemandStore::from_observations(observations)?;

    let last = config.start_date + Duration::days(days as i64 - 1);
    let mut transports = Vec::new();
    for (c, level) in client_level.iter().enumerate() {
        let scale = level.max(10.0);
        let count = rng.random_range(1..=config.max_transports_per_client);
        for _ in 0..count {
            let capacity = round2(scale * rng.random_range(0.5..=3.0));
            let committed = round2(capacity * rng.random_range(0.0..=0.6)).min(capacity);
            transports.push(TransportRecord {
                transport_id: format!("T{:05}", transports.len() + 1),
                departure_date: last + Duration::days(rng.random_range(1..=7)),
                destination_client_id: client_id(c),
                capacity,
                committed,
            });
        }
    }
    Ok((store, transports))
}

/// Distinct (material, client) index pairs. The first `max(m, c)` pairs
/// cover every material and every client; the rest are drawn uniformly.
fn choose_pairs(rng: &mut ChaCha8Rng, m: usize, c: usize, n: usize) -> Vec<(usize, usize)> {
    let mut chosen: Vec<(usize, usize)> = (0..m.max(c)).take(n).map(|i| (i % m, i % c)).collect();
    let mut used: HashSet<(usize, usize)> = chosen.iter().copied().collect();
    let remaining = n - chosen.len();
    if remaining > 0 {
        if n * 2 > m * c {
            let mut rest: Vec<(usize, usize)> = (0..m)
                .flat_map(|a| (0..c).map(move |b| (a, b)))
                .filter(|p| !used.contains(p))
                .collect();
            use rand::seq::SliceRandom;
            rest.shuffle(rng);
            chosen.extend(rest.into_iter().take(remaining));
        } else {
            while chosen.len() < n {
                let p = (rng.random_range(0..m), rng.random_range(0..c));
                if used.insert(p) {
                    chosen.push(p);
                }
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

fn digits(n: usize) -> usize {
    n.to_string().len().max(3)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn single_row_round_trips() {
        let store = parse_demand("date,material_id,client_id,quantity\n2020-01-06,M1,C1,12.0\n".as_bytes()).unwrap();
        assert_eq!(store.observation_count(), 1);
        let obs: Vec<_> = store.observations().collect();
        assert_eq!(obs[0].quantity, 12.0);
        assert_eq!(obs[0].date, date("2020-01-06"));
    }

    #[test]
    fn negative_quantity_reports_line() {
        let err = parse_demand("date,material_id,client_id,quantity\n2020-01-06,M1,C1,-3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::NegativeQuantity { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_key_is_named() {
        let csv = "date,material_id,client_id,quantity\n2020-01-06,M1,C1,1\n2020-01-07,M1,C1,2\n2020-01-06,M1,C1,3\n";
        // oracle: first repeated (date, material, client) in file order
        let mut seen = HashSet::new();
        let mut expected_line = 0;
        for (i, l) in csv.lines().enumerate().skip(1) {
            let key: Vec<&str> = l.split(',').take(3).collect();
            if !seen.insert(key) && expected_line == 0 {
                expected_line = i as u64 + 1;
            }
        }
        match parse_demand(csv.as_bytes()).unwrap_err() {
            IngestError::DuplicateKey { line, key } => {
                assert_eq!(line, expected_line);
                assert!(key.contains("2020-01-06") && key.contains("M1") && key.contains("C1"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_row_names_field() {
        let err = parse_demand("date,material_id,client_id,quantity\n2020-13-06,M1,C1,1\n".as_bytes()).unwrap_err();
        match err {
            IngestError::MalformedRow { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "date");
            }
            other => panic!("unexpected {other}"),
        }
        let err = parse_demand("date,material_id,client_id,quantity\n2020-01-06,M1,C1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { ref field, .. } if field == "quantity"));
    }

    #[test]
    fn wrong_header_rejected() {
        let err = parse_demand("day,material,client,qty\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::InvalidHeader { .. }));
    }

    #[test]
    fn rows_sorted_within_series() {
        let csv = "date,material_id,client_id,quantity\n2020-01-08,M1,C1,3\n2020-01-06,M1,C1,1\n2020-01-07,M1,C1,2\n";
        let store = parse_demand(csv.as_bytes()).unwrap();
        let s = store.series(&SeriesKey::new("M1", "C1")).unwrap();
        let q: Vec<f64> = s.observations().iter().map(|o| o.1).collect();
        assert_eq!(q, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.quantity_on(date("2020-01-09")), 0.0);
    }

    #[test]
    fn transport_free_capacity() {
        let csv = "transport_id,departure_date,destination_client_id,capacity,committed\nT1,2020-02-01,C1,100,40\n";
        let t = parse_transports(csv.as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].free_capacity(), 60.0);
    }

    #[test]
    fn transport_overcommit_rejected() {
        let csv = "transport_id,departure_date,destination_client_id,capacity,committed\nT1,2020-02-01,C1,100,120\n";
        assert!(matches!(
            parse_transports(csv.as_bytes()).unwrap_err(),
            IngestError::CommittedExceedsCapacity { line: 2, .. }
        ));
    }

    #[test]
    fn header_only_transport_file_is_empty() {
        let csv = "transport_id,departure_date,destination_client_id,capacity,committed\n";
        assert!(parse_transports(csv.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn minimal_synthetic_case() {
        let (store, transports) = generate_synthetic(1, 1, 1, 30, 99).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.observation_count(), 30);
        assert!(!transports.is_empty());
    }

    #[test]
    fn infeasible_synthetic_parameters() {
        assert!(matches!(
            generate_synthetic(2, 2, 5, 30, 0),
            Err(IngestError::InfeasibleParameters(_))
        ));
        assert!(matches!(
            generate_synthetic(2, 2, 3, 29, 0),
            Err(IngestError::InfeasibleParameters(_))
        ));
    }

    #[test]
    fn synthetic_is_deterministic_and_valid() {
        let a = generate_synthetic(12, 9, 40, 60, 7).unwrap();
        let b = generate_synthetic(12, 9, 40, 60, 7).unwrap();
        assert_eq!(a, b);
        let (store, transports) = a;
        assert_eq!(store.len(), 40);
        assert_eq!(store.materials().len(), 12);
        assert_eq!(store.clients().len(), 9);
        assert!(store.observations().all(|o| o.quantity >= 0.0));
        let last = store.last_date().unwrap();
        for client in store.clients() {
            assert!(transports
                .iter()
                .any(|t| t.destination_client_id == client && t.departure_date > last));
        }
        assert!(transports.iter().all(|t| t.committed <= t.capacity && t.capacity > 0.0));
    }

    #[test]
    fn written_store_reloads() {
        let (store, transports) = generate_synthetic(3, 2, 4, 31, 1).unwrap();
        let mut demand = Vec::new();
        write_demand(&store, &mut demand).unwrap();
        let mut tr = Vec::new();
        write_transports(&transports, &mut tr).unwrap();
        assert_eq!(parse_demand(demand.as_slice()).unwrap(), store);
        assert_eq!(parse_transports(tr.as_slice()).unwrap(), transports);
    }
}
