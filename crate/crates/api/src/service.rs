//! Request-level operations over the whole system state.
//!
//! `Assistant` owns the demand store, trained models, transport ledger,
//! knowledge graph and per-session ledgers. Each mutating operation writes
//! at most one graph batch and updates in-memory caches only after that
//! batch committed, so a failed request changes nothing.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use assistant_core::active_learning::{
    rank_queries, select_batch, train_committee, CandidateInput, CommitteeConfig, DefaultScorer, QueryCandidate,
};
use assistant_core::explainer::{explain, Attribution, ExplainError, ExplainerConfig, ExplanationRecord};
use assistant_core::feedback::{
    close_session, record_explicit, record_reason, FeedbackError, FeedbackRecord, Reason, ReasonCatalog, SessionLedger,
};
use assistant_core::forecasting::{build_features, load_models, predict, ForecastError, ForecastRecord, TrainedModel};
use assistant_core::ingestion::{open_store, DemandStore, SeriesKey, TransportRecord};
use assistant_core::knowledge_graph::mapping::{assert_explanation, assert_forecast};
use assistant_core::knowledge_graph::{EntityKind, GraphError, KnowledgeGraph, Relation, TraceResult, Value};
use assistant_core::recommender::{
    DecisionOption, DecisionSnapshot, OptionKind, RecommendError, Recommender, RecommenderConfig, SelectionOutcome,
    Stage, Terminal, TransportLedger,
};
use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAPH_LOG: &str = "kg.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    Internal,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct ServiceError {
    pub kind: ErrorKind,
    pub code: &'static str,
    pub message: String,
}

impl ServiceError {
    fn new(kind: ErrorKind, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            code,
            message: message.into(),
        }
    }

    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Conflict, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, "internal", message)
    }
}

impl From<GraphError> for ServiceError {
    fn from(e: GraphError) -> Self {
        let message = e.to_string();
        match e {
            GraphError::UnknownEntity(_) => Self::not_found("unknown_entity", message),
            GraphError::NotTraceable(..) | GraphError::OrphanNode(_) => Self::validation("not_traceable", message),
            GraphError::CardinalityViolation(_) | GraphError::DuplicateEntity(_) | GraphError::CycleDetected { .. } => {
                Self::conflict("graph_conflict", message)
            }
            GraphError::SchemaViolation(_)
            | GraphError::OptionNotInSnapshot { .. }
            | GraphError::NoBinding
            | GraphError::InvalidAttribute { .. } => Self::validation("invalid_request", message),
            GraphError::Io(_) | GraphError::CorruptLog { .. } | GraphError::NTriples { .. } => Self::internal(message),
        }
    }
}

impl From<ForecastError> for ServiceError {
    fn from(e: ForecastError) -> Self {
        let message = e.to_string();
        match e {
            ForecastError::UnknownSeries(_) => Self::not_found("unknown_series", message),
            ForecastError::InsufficientHistory { .. } => Self::validation("insufficient_history", message),
            ForecastError::InvalidArgument(_) | ForecastError::InvalidSpec(_) => {
                Self::validation("invalid_request", message)
            }
            _ => Self::internal(message),
        }
    }
}

impl From<ExplainError> for ServiceError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Model(inner) => inner.into(),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<FeedbackError> for ServiceError {
    fn from(e: FeedbackError) -> Self {
        let message = e.to_string();
        match e {
            FeedbackError::UnknownTarget { .. } => Self::not_found("unknown_target", message),
            FeedbackError::SessionClosed(_) => Self::conflict("session_closed", message),
            FeedbackError::InvalidPayload(_) => Self::validation("invalid_payload", message),
            FeedbackError::NoSelectionYet { .. } => Self::conflict("no_selection_yet", message),
            FeedbackError::Graph(g) => g.into(),
        }
    }
}

impl From<RecommendError> for ServiceError {
    fn from(e: RecommendError) -> Self {
        let message = e.to_string();
        match e {
            RecommendError::OptionNotInSnapshot { .. } => Self::validation("option_not_in_snapshot", message),
            RecommendError::AlreadySelected(_) => Self::conflict("already_selected", message),
            RecommendError::CapacityExceeded { .. } => Self::conflict("capacity_exceeded", message),
            RecommendError::UnknownTransport(_) => Self::not_found("unknown_transport", message),
            RecommendError::InvalidAdjustment(_)
            | RecommendError::InvalidOption { .. }
            | RecommendError::InvalidQuantity(_)
            | RecommendError::ForecastMismatch { .. } => Self::validation("invalid_request", message),
            RecommendError::Graph(g) => g.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone)]
pub struct AssistantConfig {
    /// Seed of the explainer's perturbation sampling.
    pub explainer_seed: u64,
    pub committee: CommitteeConfig,
    pub recommender: RecommenderConfig,
}

impl Default for AssistantConfig {
    fn default() -> Self {
        Self {
            explainer_seed: 0,
            committee: CommitteeConfig::new(5, 0),
            recommender: RecommenderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastView {
    pub forecast_id: String,
    pub material_id: String,
    pub client_id: String,
    pub target_date: NaiveDate,
    pub quantity: f64,
}

impl From<&ForecastRecord> for ForecastView {
    fn from(f: &ForecastRecord) -> Self {
        Self {
            forecast_id: f.forecast_id.clone(),
            material_id: f.series.material_id.clone(),
            client_id: f.series.client_id.clone(),
            target_date: f.target_date,
            quantity: f.quantity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationView {
    pub explanation_id: String,
    pub forecast_id: String,
    pub attributions: Vec<Attribution>,
    pub fidelity: f64,
}

impl From<&ExplanationRecord> for ExplanationView {
    fn from(e: &ExplanationRecord) -> Self {
        Self {
            explanation_id: e.explanation_id.clone(),
            forecast_id: e.forecast_id.clone(),
            attributions: e.attributions.clone(),
            fidelity: e.fidelity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportView {
    pub transport_id: String,
    pub departure_date: NaiveDate,
    pub capacity: f64,
    pub free_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionView {
    pub option_id: String,
    pub kind: OptionKind,
    pub rank: u32,
    pub quantity: f64,
    pub transport_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotView {
    pub snapshot_id: String,
    pub forecast_id: String,
    pub stage: Stage,
    pub position: u32,
    pub options: Vec<OptionView>,
    pub selected_option_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Terminal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SelectionView {
    /// The flow continues with another snapshot.
    Next { snapshot: SnapshotView },
    Terminal {
        snapshot_id: String,
        position: u32,
        outcome: Terminal,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Chain {
    first: String,
    head: String,
}

#[derive(Debug)]
pub struct Assistant {
    store: DemandStore,
    models: BTreeMap<SeriesKey, TrainedModel>,
    ledger: TransportLedger,
    graph: KnowledgeGraph,
    config: AssistantConfig,
    recommender: Recommender,
    sessions: HashMap<String, (SessionToken, SessionLedger)>,
    forecasts: HashMap<String, ForecastRecord>,
    forecast_index: HashMap<(SeriesKey, NaiveDate), String>,
    explanations: HashMap<String, ExplanationRecord>,
    snapshots: HashMap<String, DecisionSnapshot>,
    chains: HashMap<String, Chain>,
    terminals: HashMap<String, Terminal>,
    catalog: ReasonCatalog,
    committees: BTreeMap<SeriesKey, Vec<TrainedModel>>,
}

fn text_attr<'a>(graph: &'a KnowledgeGraph, id: &str, key: &str) -> Option<&'a str> {
    graph.entity(id)?.attribute(key)?.as_text()
}

fn number_attr(graph: &KnowledgeGraph, id: &str, key: &str) -> Option<f64> {
    graph.entity(id)?.attribute(key)?.as_number()
}

fn parse_time(raw: Option<&str>) -> DateTime<Utc> {
    raw.and_then(|t| DateTime::parse_from_rfc3339(t).ok())
        .map(|t| t.with_timezone(&Utc))
        .unwrap_or_else(Utc::now)
}

fn parse_snake<T: serde::de::DeserializeOwned>(raw: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(raw.to_string())).ok()
}

impl Assistant {
    /// Builds the service state. `graph` may already hold history from an
    /// earlier run; caches, the transport ledger and the reason catalog are
    /// rebuilt from it.
    pub fn new(
        store: DemandStore,
        transports: Vec<TransportRecord>,
        models: Vec<TrainedModel>,
        graph: KnowledgeGraph,
        config: AssistantConfig,
    ) -> Result<Self> {
        let mut s = Self {
            store,
            models: models.into_iter().map(|m| (m.series().clone(), m)).collect(),
            ledger: TransportLedger::new(transports),
            graph,
            recommender: Recommender::new(config.recommender.clone()),
            config,
            sessions: HashMap::new(),
            forecasts: HashMap::new(),
            forecast_index: HashMap::new(),
            explanations: HashMap::new(),
            snapshots: HashMap::new(),
            chains: HashMap::new(),
            terminals: HashMap::new(),
            catalog: ReasonCatalog::default(),
            committees: BTreeMap::new(),
        };
        s.restore()?;
        Ok(s)
    }

    /// Opens a store directory (demand.csv, transports.csv, kg.log) and a
    /// model directory.
    pub fn open(store_dir: &Path, models_dir: &Path, config: AssistantConfig) -> anyhow::Result<Self> {
        let (store, transports) = open_store(store_dir)?;
        let models = load_models(models_dir)?;
        let graph = KnowledgeGraph::open(graph_path(store_dir))?;
        Ok(Self::new(store, transports, models, graph, config)?)
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn store(&self) -> &DemandStore {
        &self.store
    }

    pub fn ledger(&self) -> &TransportLedger {
        &self.ledger
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    pub fn session(&self, session_id: &str) -> Option<&SessionLedger> {
        self.sessions.get(session_id).map(|(_, l)| l)
    }

    pub fn forecast(&self, forecast_id: &str) -> Option<&ForecastRecord> {
        self.forecasts.get(forecast_id)
    }

    pub fn snapshot(&self, snapshot_id: &str) -> Option<&DecisionSnapshot> {
        self.snapshots.get(snapshot_id)
    }

    pub fn reasons(&self) -> &[String] {
        self.catalog.reasons()
    }

    fn restore(&mut self) -> Result<()> {
        for e in self.graph.entities_of_kind(EntityKind::Transport) {
            let (Some(id), Some(committed)) = (
                e.attribute("transport_id").and_then(Value::as_text),
                e.attribute("committed").and_then(Value::as_number),
            ) else {
                continue;
            };
            if self.ledger.get(id).is_some() {
                self.ledger.set_committed(id, committed)?;
            } else {
                let departure = e
                    .attribute("departure_date")
                    .and_then(Value::as_text)
                    .and_then(|d| d.parse().ok());
                let client = e.attribute("destination_client_id").and_then(Value::as_text);
                let capacity = e.attribute("capacity").and_then(Value::as_number);
                if let (Some(departure_date), Some(client), Some(capacity)) = (departure, client, capacity) {
                    self.ledger.insert(TransportRecord {
                        transport_id: id.to_string(),
                        departure_date,
                        destination_client_id: client.to_string(),
                        capacity,
                        committed,
                    });
                }
            }
        }

        let g = &self.graph;
        for e in g.entities_of_kind(EntityKind::Forecast) {
            let id = e.entity_id.as_str();
            let model_id = g
                .objects(id, Relation::ProducedBy)
                .first()
                .and_then(|m| g.entity(m))
                .and_then(|m| m.attribute("model_id")?.as_text().map(str::to_string));
            let (Some(material), Some(client), Some(date), Some(quantity), Some(model_id)) = (
                text_attr(g, id, "material_id"),
                text_attr(g, id, "client_id"),
                text_attr(g, id, "target_date").and_then(|d| d.parse::<NaiveDate>().ok()),
                number_attr(g, id, "quantity"),
                model_id,
            ) else {
                continue;
            };
            let record = ForecastRecord {
                forecast_id: id.to_string(),
                series: SeriesKey::new(material, client),
                target_date: date,
                quantity,
                model_id,
                created_at: parse_time(text_attr(g, id, "created_at")),
            };
            if self
                .models
                .get(&record.series)
                .is_some_and(|m| m.model_id() == record.model_id)
            {
                self.forecast_index
                    .insert((record.series.clone(), date), id.to_string());
            }
            self.forecasts.insert(id.to_string(), record);
        }

        for e in g.entities_of_kind(EntityKind::ForecastExplanation) {
            let id = e.entity_id.as_str();
            let Some(forecast_id) = g.objects(id, Relation::Explains).first().map(|f| f.to_string()) else {
                continue;
            };
            let n = e
                .attribute("attribution_count")
                .and_then(Value::as_integer)
                .unwrap_or(0);
            let attributions = (1..=n)
                .filter_map(|i| {
                    Some(Attribution {
                        feature_name: text_attr(g, id, &format!("attribution.{i}.feature"))?.to_string(),
                        weight: number_attr(g, id, &format!("attribution.{i}.weight"))?,
                    })
                })
                .collect();
            self.explanations.insert(
                forecast_id.clone(),
                ExplanationRecord {
                    explanation_id: id.to_string(),
                    forecast_id,
                    attributions,
                    fidelity: number_attr(g, id, "fidelity").unwrap_or(0.0),
                    created_at: parse_time(text_attr(g, id, "created_at")),
                },
            );
        }

        for e in g.entities_of_kind(EntityKind::DecisionSnapshot) {
            let id = e.entity_id.as_str();
            let (Some(forecast_id), Some(stage)) = (
                text_attr(g, id, "forecast_id"),
                text_attr(g, id, "stage").and_then(parse_snake::<Stage>),
            ) else {
                continue;
            };
            let mut options: Vec<DecisionOption> = g
                .objects(id, Relation::HasOption)
                .into_iter()
                .filter_map(|o| {
                    let entity = g.entity(o)?;
                    Some(DecisionOption {
                        option_id: o.to_string(),
                        kind: parse_snake(entity.attribute("kind")?.as_text()?)?,
                        transport_id: entity
                            .attribute("transport_id")
                            .and_then(Value::as_text)
                            .map(str::to_string),
                        payload: entity
                            .attributes
                            .iter()
                            .filter(|(k, _)| k.as_str() == "quantity")
                            .filter_map(|(k, v)| Some((k.clone(), v.as_number()?)))
                            .collect(),
                        rank: entity.attribute("rank")?.as_integer()? as u32,
                    })
                })
                .collect();
            options.sort_by_key(|o| o.rank);
            self.snapshots.insert(
                id.to_string(),
                DecisionSnapshot {
                    snapshot_id: id.to_string(),
                    forecast_id: forecast_id.to_string(),
                    options,
                    stage,
                    position: e.attribute("position").and_then(Value::as_integer).unwrap_or(1) as u32,
                    created_at: parse_time(text_attr(g, id, "created_at")),
                },
            );
        }
        let mut firsts: Vec<(&String, &str)> = Vec::new();
        for s in self.snapshots.values() {
            if let Some(f) = g.subjects(Relation::SuggestsActionFor, &s.snapshot_id).first() {
                firsts.push((&s.snapshot_id, f));
            }
        }
        firsts.sort_by_key(|(s, _)| (self.snapshots[*s].created_at, s.as_str()));
        for (first, forecast) in firsts {
            let mut head = first.clone();
            while let Some(next) = g.objects(&head, Relation::FollowedBy).first() {
                head = next.to_string();
            }
            self.chains.insert(
                forecast.to_string(),
                Chain {
                    first: first.clone(),
                    head,
                },
            );
        }
        let terminals: Vec<(String, Terminal)> = self
            .snapshots
            .values()
            .filter_map(|s| Some((s.snapshot_id.clone(), self.restored_terminal(s)?)))
            .collect();
        self.terminals.extend(terminals);

        for e in g.entities_of_kind(EntityKind::Feedback) {
            if let Some(text) = e.attribute("reason_text").and_then(Value::as_text) {
                self.catalog.add(text);
            }
        }
        Ok(())
    }

    fn restored_terminal(&self, s: &DecisionSnapshot) -> Option<Terminal> {
        let selected = self.graph.objects(&s.snapshot_id, Relation::SelectedOption);
        let option = s.option(selected.first()?)?;
        match option.kind {
            OptionKind::Cancel => Some(Terminal::Cancelled),
            OptionKind::ConfirmAssignment => Some(Terminal::Committed {
                transport_id: option.transport_id.clone().unwrap_or_default(),
                quantity: option.quantity(),
                created_transport: option.transport_id.is_none(),
            }),
            _ => None,
        }
    }

    pub fn open_session(&mut self, user_id: Option<String>) -> SessionToken {
        let token = SessionToken {
            session_id: assistant_core::new_id(),
            created_at: Utc::now(),
            user_id,
        };
        self.sessions.insert(
            token.session_id.clone(),
            (token.clone(), SessionLedger::new(&token.session_id)),
        );
        token
    }

    fn open_ledger(&self, session_id: &str) -> Result<&SessionLedger> {
        let (_, ledger) = self
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::not_found("unknown_session", format!("unknown session `{session_id}`")))?;
        if ledger.closed {
            return Err(ServiceError::conflict(
                "session_closed",
                format!("session `{session_id}` is closed"),
            ));
        }
        Ok(ledger)
    }

    fn ledger_mut(&mut self, session_id: &str) -> &mut SessionLedger {
        &mut self.sessions.get_mut(session_id).expect("session checked").1
    }

    fn known_forecast(&self, forecast_id: &str) -> Result<&ForecastRecord> {
        self.forecasts
            .get(forecast_id)
            .ok_or_else(|| ServiceError::not_found("unknown_forecast", format!("unknown forecast `{forecast_id}`")))
    }

    /// One forecast per client with history for `material_id`, ordered by
    /// client id. Forecasts are issued once per (series, date) and reused.
    pub fn get_forecasts(&mut self, session_id: &str, date: NaiveDate, material_id: &str) -> Result<Vec<ForecastView>> {
        self.open_ledger(session_id)?;
        let keys: Vec<SeriesKey> = self.store.series_for_material(material_id).cloned().collect();
        if keys.is_empty() {
            return Err(ServiceError::not_found(
                "unknown_material",
                format!("unknown material `{material_id}`"),
            ));
        }
        let mut fresh = Vec::new();
        let mut ids = Vec::with_capacity(keys.len());
        for key in &keys {
            if let Some(id) = self.forecast_index.get(&(key.clone(), date)) {
                ids.push(id.clone());
                continue;
            }
            let model = self
                .models
                .get(key)
                .ok_or_else(|| ServiceError::not_found("no_model", format!("no trained model for series {key}")))?;
            let features = build_features(&self.store, key, date, model.spec())?;
            let record = predict(model, &features)?;
            ids.push(record.forecast_id.clone());
            fresh.push(record);
        }
        self.graph
            .transaction(|g| fresh.iter().try_for_each(|f| assert_forecast(g, f)))?;
        for f in fresh {
            self.forecast_index
                .insert((f.series.clone(), f.target_date), f.forecast_id.clone());
            self.forecasts.insert(f.forecast_id.clone(), f);
        }
        let ledger = self.ledger_mut(session_id);
        for id in &ids {
            ledger.mark_displayed(id)?;
        }
        Ok(ids.iter().map(|id| ForecastView::from(&self.forecasts[id])).collect())
    }

    /// Explicit quantity edit; the new value replaces the forecast quantity
    /// used by later option requests.
    pub fn edit_forecast(&mut self, session_id: &str, forecast_id: &str, quantity: f64) -> Result<String> {
        self.open_ledger(session_id)?;
        self.known_forecast(forecast_id)?;
        let record = FeedbackRecord::edit_quantity(session_id, forecast_id, quantity);
        let mut ledger = self.sessions[session_id].1.clone();
        let id = record_explicit(&mut ledger, record, &mut self.graph)?;
        *self.ledger_mut(session_id) = ledger;
        self.forecasts.get_mut(forecast_id).expect("checked").quantity = quantity;
        Ok(id)
    }

    pub fn get_explanation(&mut self, session_id: &str, forecast_id: &str) -> Result<ExplanationView> {
        self.open_ledger(session_id)?;
        if let Some(e) = self.explanations.get(forecast_id) {
            return Ok(e.into());
        }
        let forecast = self.known_forecast(forecast_id)?;
        let model = self.models.get(&forecast.series).ok_or_else(|| {
            ServiceError::not_found("no_model", format!("no trained model for series {}", forecast.series))
        })?;
        let features = build_features(&self.store, &forecast.series, forecast.target_date, model.spec())?;
        let config = ExplainerConfig::for_dimension(model.dimension()).with_seed(self.config.explainer_seed);
        let record = explain(model, &features, &config, forecast_id)?;
        assert_explanation(&mut self.graph, &record)?;
        let view = ExplanationView::from(&record);
        self.explanations.insert(forecast_id.to_string(), record);
        Ok(view)
    }

    pub fn remove_feature(&mut self, session_id: &str, explanation_id: &str, feature_name: &str) -> Result<String> {
        self.open_ledger(session_id)?;
        let record = FeedbackRecord::remove_feature(session_id, explanation_id, feature_name);
        let mut ledger = self.sessions[session_id].1.clone();
        let id = record_explicit(&mut ledger, record, &mut self.graph)?;
        *self.ledger_mut(session_id) = ledger;
        Ok(id)
    }

    fn snapshot_view(&self, s: &DecisionSnapshot) -> SnapshotView {
        SnapshotView {
            snapshot_id: s.snapshot_id.clone(),
            forecast_id: s.forecast_id.clone(),
            stage: s.stage,
            position: s.position,
            options: s
                .options
                .iter()
                .map(|o| OptionView {
                    option_id: o.option_id.clone(),
                    kind: o.kind,
                    rank: o.rank,
                    quantity: o.quantity(),
                    transport_id: o.transport_id.clone(),
                    transport: o
                        .transport_id
                        .as_deref()
                        .and_then(|t| self.ledger.get(t))
                        .map(|t| TransportView {
                            transport_id: t.record.transport_id.clone(),
                            departure_date: t.record.departure_date,
                            capacity: t.record.capacity,
                            free_capacity: t.free_capacity,
                        }),
                })
                .collect(),
            selected_option_id: self
                .graph
                .objects(&s.snapshot_id, Relation::SelectedOption)
                .first()
                .map(|o| o.to_string()),
            outcome: self.terminals.get(&s.snapshot_id).cloned(),
        }
    }

    /// The current snapshot of the forecast's decision flow, created on the
    /// first request.
    pub fn get_options(&mut self, session_id: &str, forecast_id: &str) -> Result<SnapshotView> {
        self.open_ledger(session_id)?;
        if let Some(chain) = self.chains.get(forecast_id) {
            return Ok(self.snapshot_view(&self.snapshots[&chain.head]));
        }
        let forecast = self.known_forecast(forecast_id)?.clone();
        let snapshot = self
            .recommender
            .first_snapshot(&forecast, self.ledger.states(), &mut self.graph)?;
        self.chains.insert(
            forecast_id.to_string(),
            Chain {
                first: snapshot.snapshot_id.clone(),
                head: snapshot.snapshot_id.clone(),
            },
        );
        let view = self.snapshot_view(&snapshot);
        self.snapshots.insert(snapshot.snapshot_id.clone(), snapshot);
        Ok(view)
    }

    pub fn select_option(
        &mut self,
        session_id: &str,
        snapshot_id: &str,
        option_id: &str,
        quantity: Option<f64>,
    ) -> Result<SelectionView> {
        self.open_ledger(session_id)?;
        let snapshot = self
            .snapshots
            .get(snapshot_id)
            .ok_or_else(|| ServiceError::not_found("unknown_snapshot", format!("unknown snapshot `{snapshot_id}`")))?
            .clone();
        let forecast = self.known_forecast(&snapshot.forecast_id)?.clone();
        let outcome = self.recommender.apply_selection(
            &forecast,
            &snapshot,
            option_id,
            quantity,
            &mut self.ledger,
            &mut self.graph,
        )?;
        match outcome {
            SelectionOutcome::Next(next) => {
                if let Some(chain) = self.chains.get_mut(&forecast.forecast_id) {
                    chain.head = next.snapshot_id.clone();
                }
                let view = self.snapshot_view(&next);
                self.snapshots.insert(next.snapshot_id.clone(), next);
                Ok(SelectionView::Next { snapshot: view })
            }
            SelectionOutcome::Terminal(t) => {
                self.terminals.insert(snapshot_id.to_string(), t.clone());
                Ok(SelectionView::Terminal {
                    snapshot_id: snapshot_id.to_string(),
                    position: snapshot.position,
                    outcome: t,
                })
            }
        }
    }

    pub fn record_reason(
        &mut self,
        session_id: &str,
        snapshot_id: &str,
        option_id: &str,
        reason: Reason,
    ) -> Result<String> {
        let ledger = self.open_ledger(session_id)?.clone();
        if !self.snapshots.contains_key(snapshot_id) {
            return Err(ServiceError::not_found(
                "unknown_snapshot",
                format!("unknown snapshot `{snapshot_id}`"),
            ));
        }
        Ok(record_reason(
            &ledger,
            snapshot_id,
            option_id,
            reason,
            &mut self.catalog,
            &mut self.graph,
        )?)
    }

    /// Closes the session and returns the number of implicit approvals.
    pub fn close_session(&mut self, session_id: &str) -> Result<usize> {
        let (_, ledger) = self
            .sessions
            .get_mut(session_id)
            .ok_or_else(|| ServiceError::not_found("unknown_session", format!("unknown session `{session_id}`")))?;
        let mut copy = ledger.clone();
        let ids = close_session(&mut copy, &mut self.graph)?;
        *ledger = copy;
        Ok(ids.len())
    }

    pub fn trace(&self, entity_id: &str) -> Result<TraceResult> {
        Ok(self.graph.trace_to_forecast(entity_id)?)
    }

    fn committee(&mut self, series: &SeriesKey) -> Result<&[TrainedModel]> {
        if !self.committees.contains_key(series) {
            let model = self
                .models
                .get(series)
                .ok_or_else(|| ServiceError::not_found("no_model", format!("no trained model for series {series}")))?;
            let committee = train_committee(&self.store, series, model.spec(), &self.config.committee)?;
            self.committees.insert(series.clone(), committee);
        }
        Ok(&self.committees[series])
    }

    fn forecast_candidate(&mut self, target_id: String, series: &SeriesKey, date: NaiveDate) -> Result<CandidateInput> {
        let spec = self
            .models
            .get(series)
            .ok_or_else(|| ServiceError::not_found("no_model", format!("no trained model for series {series}")))?
            .spec()
            .clone();
        let features = build_features(&self.store, series, date, &spec)?;
        let committee = self.committee(series)?;
        let member_predictions = committee
            .iter()
            .map(|m| m.predict_unclamped(&features.values))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(CandidateInput::Forecast {
            target_id,
            member_predictions,
        })
    }

    fn snapshot_candidates(&self) -> Vec<CandidateInput> {
        let mut out = Vec::new();
        let mut forecasts: Vec<&String> = self.chains.keys().collect();
        forecasts.sort();
        for forecast_id in forecasts {
            let chain = &self.chains[forecast_id];
            let mut feedback_count = 0;
            let mut at = Some(chain.first.clone());
            while let Some(s) = at {
                for o in self.graph.objects(&s, Relation::HasOption) {
                    feedback_count += self.graph.subjects(Relation::FeedbackOnOption, o).len();
                }
                at = self
                    .graph
                    .objects(&s, Relation::FollowedBy)
                    .first()
                    .map(|n| n.to_string());
            }
            out.push(CandidateInput::Snapshot {
                target_id: chain.head.clone(),
                feedback_count,
            });
        }
        out
    }

    /// Ranks every issued forecast by committee disagreement and every
    /// decision flow by feedback scarcity.
    pub fn al_suggestions(&mut self, k: usize) -> Result<Vec<QueryCandidate>> {
        if k == 0 {
            return Err(ServiceError::validation("invalid_request", "k must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(ServiceError::not_found("no_models", "no trained models are loaded"));
        }
        let mut issued: Vec<(String, SeriesKey, NaiveDate)> = self
            .forecasts
            .values()
            .filter(|f| self.models.contains_key(&f.series))
            .map(|f| (f.forecast_id.clone(), f.series.clone(), f.target_date))
            .collect();
        issued.sort();
        let mut candidates = Vec::with_capacity(issued.len());
        for (id, series, date) in issued {
            candidates.push(self.forecast_candidate(id, &series, date)?);
        }
        candidates.extend(self.snapshot_candidates());
        Ok(select_batch(&rank_queries(&candidates, &DefaultScorer), k)?)
    }

    /// Offline ranking used by the CLI: the next-day forecast of every
    /// modelled series (identified as `material/client@date`, nothing is
    /// issued) plus recorded decision flows.
    pub fn al_suggestions_next_day(&mut self, k: usize) -> Result<Vec<QueryCandidate>> {
        if k == 0 {
            return Err(ServiceError::validation("invalid_request", "k must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(ServiceError::not_found("no_models", "no trained models are loaded"));
        }
        let keys: Vec<SeriesKey> = self.models.keys().cloned().collect();
        let mut candidates = Vec::with_capacity(keys.len());
        for key in keys {
            let Some(last) = self.store.series(&key).and_then(|s| s.last_date()) else {
                continue;
            };
            let date = last.succ_opt().expect("date in range");
            candidates.push(self.forecast_candidate(format!("{key}@{date}"), &key, date)?);
        }
        candidates.extend(self.snapshot_candidates());
        Ok(select_batch(&rank_queries(&candidates, &DefaultScorer), k)?)
    }
}

pub fn graph_path(store_dir: &Path) -> PathBuf {
    store_dir.join(GRAPH_LOG)
}
