//! Explicit and implicit user feedback.
//!
//! A forecast that was displayed during a session and never edited counts
//! as approved; the approval is emitted when the session closes.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge_graph::mapping::explanation_features;
use crate::knowledge_graph::{Entity, EntityKind, GraphError, KnowledgeGraph, Relation, Triple};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("unknown {kind} `{id}`")]
    UnknownTarget { kind: TargetKind, id: String },
    #[error("session `{0}` is closed")]
    SessionClosed(String),
    #[error("invalid feedback payload: {0}")]
    InvalidPayload(String),
    #[error("snapshot `{snapshot}` has no selection of option `{option}`")]
    NoSelectionYet { snapshot: String, option: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, FeedbackError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Forecast,
    Explanation,
    Option,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Forecast => "forecast",
            TargetKind::Explanation => "explanation",
            TargetKind::Option => "option",
        }
    }

    fn entity_kind(self) -> EntityKind {
        match self {
            TargetKind::Forecast => EntityKind::Forecast,
            TargetKind::Explanation => EntityKind::ForecastExplanation,
            TargetKind::Option => EntityKind::DecisionOption,
        }
    }

    fn relation(self) -> Relation {
        match self {
            TargetKind::Forecast => Relation::FeedbackOnForecast,
            TargetKind::Explanation => Relation::FeedbackOnExplanation,
            TargetKind::Option => Relation::FeedbackOnOption,
        }
    }
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackAction {
    Approve,
    EditQuantity,
    RemoveFeature,
    ReasonSelected,
    ReasonFreeText,
}

impl FeedbackAction {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackAction::Approve => "approve",
            FeedbackAction::EditQuantity => "edit_quantity",
            FeedbackAction::RemoveFeature => "remove_feature",
            FeedbackAction::ReasonSelected => "reason_selected",
            FeedbackAction::ReasonFreeText => "reason_free_text",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPayload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub new_quantity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason_code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub feedback_id: String,
    pub mode: FeedbackMode,
    pub target_kind: TargetKind,
    pub target_id: String,
    pub action: FeedbackAction,
    pub payload: FeedbackPayload,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
}

impl FeedbackRecord {
    pub fn explicit(
        session_id: &str,
        target_kind: TargetKind,
        target_id: &str,
        action: FeedbackAction,
        payload: FeedbackPayload,
    ) -> Self {
        Self {
            feedback_id: crate::new_id(),
            mode: FeedbackMode::Explicit,
            target_kind,
            target_id: target_id.to_string(),
            action,
            payload,
            session_id: session_id.to_string(),
            created_at: crate::now(),
        }
    }

    pub fn edit_quantity(session_id: &str, forecast_id: &str, new_quantity: f64) -> Self {
        Self::explicit(
            session_id,
            TargetKind::Forecast,
            forecast_id,
            FeedbackAction::EditQuantity,
            FeedbackPayload {
                new_quantity: Some(new_quantity),
                ..Default::default()
            },
        )
    }

    pub fn remove_feature(session_id: &str, explanation_id: &str, feature_name: &str) -> Self {
        Self::explicit(
            session_id,
            TargetKind::Explanation,
            explanation_id,
            FeedbackAction::RemoveFeature,
            FeedbackPayload {
                feature_name: Some(feature_name.to_string()),
                ..Default::default()
            },
        )
    }

    fn entity(&self) -> Entity {
        let p = &self.payload;
        let mut e = Entity::new(&self.feedback_id, EntityKind::Feedback)
            .with(
                "mode",
                if self.mode == FeedbackMode::Implicit {
                    "implicit"
                } else {
                    "explicit"
                },
            )
            .with("target_kind", self.target_kind.name())
            .with("target_id", self.target_id.as_str())
            .with("action", self.action.name())
            .with("session_id", self.session_id.as_str())
            .with("created_at", self.created_at.to_rfc3339());
        if let Some(q) = p.new_quantity {
            e = e.with("new_quantity", q);
        }
        for (key, value) in [
            ("feature_name", &p.feature_name),
            ("reason_code", &p.reason_code),
            ("reason_text", &p.reason_text),
        ] {
            if let Some(v) = value {
                e = e.with(key, v.as_str());
            }
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLedger {
    pub session_id: String,
    pub displayed_forecasts: BTreeSet<String>,
    pub edited_forecasts: BTreeSet<String>,
    pub closed: bool,
}

impl SessionLedger {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            displayed_forecasts: BTreeSet::new(),
            edited_forecasts: BTreeSet::new(),
            closed: false,
        }
    }

    pub fn mark_displayed(&mut self, forecast_id: &str) -> Result<()> {
        self.ensure_open()?;
        self.displayed_forecasts.insert(forecast_id.to_string());
        Ok(())
    }

    fn ensure_open(&self) -> Result<()> {
        if self.closed {
            Err(FeedbackError::SessionClosed(self.session_id.clone()))
        } else {
            Ok(())
        }
    }
}

/// Reasons shown to the user when they pick an option. Only grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonCatalog {
    reasons: Vec<String>,
}

pub const DEFAULT_REASONS: [&str; 5] = [
    "earliest departure",
    "best capacity fit",
    "customer request",
    "cost",
    "other",
];

impl Default for ReasonCatalog {
    fn default() -> Self {
        Self {
            reasons: DEFAULT_REASONS.iter().map(|r| r.to_string()).collect(),
        }
    }
}

impl ReasonCatalog {
    pub fn reasons(&self) -> &[String] {
        &self.reasons
    }

    pub fn contains(&self, reason: &str) -> bool {
        self.reasons.iter().any(|r| r == reason)
    }

    pub fn len(&self) -> usize {
        self.reasons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reasons.is_empty()
    }

    /// Returns false when the reason was already listed.
    pub fn add(&mut self, reason: &str) -> bool {
        if self.contains(reason) {
            return false;
        }
        self.reasons.push(reason.to_string());
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reason {
    Code(String),
    FreeText(String),
}

fn persist(graph: &mut KnowledgeGraph, record: &FeedbackRecord) -> std::result::Result<(), GraphError> {
    graph.assert_entity(record.entity())?;
    graph.assert_triple(Triple::new(
        &record.feedback_id,
        record.target_kind.relation(),
        &record.target_id,
    ))
}

fn require_target(graph: &KnowledgeGraph, kind: TargetKind, id: &str) -> Result<()> {
    match graph.entity(id) {
        Some(e) if e.kind == kind.entity_kind() => Ok(()),
        _ => Err(FeedbackError::UnknownTarget {
            kind,
            id: id.to_string(),
        }),
    }
}

/// Persists an explicit edit or feature removal.
///
/// An edit also overwrites the forecast's `quantity` attribute (last write
/// wins) and marks the forecast edited and displayed.
pub fn record_explicit(
    ledger: &mut SessionLedger,
    record: FeedbackRecord,
    graph: &mut KnowledgeGraph,
) -> Result<String> {
    ledger.ensure_open()?;
    if record.mode != FeedbackMode::Explicit {
        return Err(FeedbackError::InvalidPayload(
            "only explicit feedback can be recorded directly".into(),
        ));
    }
    if record.session_id != ledger.session_id {
        return Err(FeedbackError::InvalidPayload(format!(
            "record belongs to session `{}`",
            record.session_id
        )));
    }
    require_target(graph, record.target_kind, &record.target_id)?;
    match (record.action, record.target_kind) {
        (FeedbackAction::EditQuantity, TargetKind::Forecast) => {
            let q = record
                .payload
                .new_quantity
                .ok_or_else(|| FeedbackError::InvalidPayload("edit_quantity needs new_quantity".into()))?;
            if !q.is_finite() || q < 0.0 {
                return Err(FeedbackError::InvalidPayload(format!(
                    "new_quantity must be finite and non-negative, got {q}"
                )));
            }
            graph.transaction(|g| {
                persist(g, &record)?;
                g.set_attribute(&record.target_id, "quantity", q)
            })?;
            ledger.displayed_forecasts.insert(record.target_id.clone());
            ledger.edited_forecasts.insert(record.target_id.clone());
        }
        (FeedbackAction::RemoveFeature, TargetKind::Explanation) => {
            let name = record
                .payload
                .feature_name
                .as_deref()
                .ok_or_else(|| FeedbackError::InvalidPayload("remove_feature needs feature_name".into()))?;
            let features = explanation_features(graph.entity(&record.target_id).expect("target checked"));
            if !features.iter().any(|f| f == name) {
                return Err(FeedbackError::InvalidPayload(format!(
                    "`{name}` is not an attribution of explanation `{}`",
                    record.target_id
                )));
            }
            persist(graph, &record)?;
        }
        (action, kind) => {
            return Err(FeedbackError::InvalidPayload(format!(
                "action {} is not accepted on a {kind} here",
                action.name()
            )))
        }
    }
    Ok(record.feedback_id)
}

/// Records why the user picked `option_id` on `snapshot_id`. Free-text
/// reasons that are new are appended to the catalog.
pub fn record_reason(
    ledger: &SessionLedger,
    snapshot_id: &str,
    option_id: &str,
    reason: Reason,
    catalog: &mut ReasonCatalog,
    graph: &mut KnowledgeGraph,
) -> Result<String> {
    ledger.ensure_open()?;
    if !graph.contains_entity(snapshot_id) {
        return Err(FeedbackError::UnknownTarget {
            kind: TargetKind::Option,
            id: snapshot_id.to_string(),
        });
    }
    require_target(graph, TargetKind::Option, option_id)?;
    if !graph.contains(&Triple::new(snapshot_id, Relation::SelectedOption, option_id)) {
        return Err(FeedbackError::NoSelectionYet {
            snapshot: snapshot_id.to_string(),
            option: option_id.to_string(),
        });
    }
    let (action, payload) = match &reason {
        Reason::Code(code) => {
            if !catalog.contains(code) {
                return Err(FeedbackError::InvalidPayload(format!("unknown reason code `{code}`")));
            }
            (
                FeedbackAction::ReasonSelected,
                FeedbackPayload {
                    reason_code: Some(code.clone()),
                    ..Default::default()
                },
            )
        }
        Reason::FreeText(text) => {
            if text.trim().is_empty() {
                return Err(FeedbackError::InvalidPayload("reason text is empty".into()));
            }
            (
                FeedbackAction::ReasonFreeText,
                FeedbackPayload {
                    reason_text: Some(text.trim().to_string()),
                    ..Default::default()
                },
            )
        }
    };
    let record = FeedbackRecord::explicit(&ledger.session_id, TargetKind::Option, option_id, action, payload);
    persist(graph, &record)?;
    if let Reason::FreeText(text) = reason {
        catalog.add(text.trim());
    }
    Ok(record.feedback_id)
}

/// Closes the session, approving every displayed forecast that was not
/// edited. All approvals are one graph batch. Closing twice emits nothing.
pub fn close_session(ledger: &mut SessionLedger, graph: &mut KnowledgeGraph) -> Result<Vec<String>> {
    if ledger.closed {
        return Ok(Vec::new());
    }
    let records: Vec<FeedbackRecord> = ledger
        .displayed_forecasts
        .difference(&ledger.edited_forecasts)
        .filter(|id| graph.entity(id).is_some_and(|e| e.kind == EntityKind::Forecast))
        .map(|id| FeedbackRecord {
            feedback_id: crate::new_id(),
            mode: FeedbackMode::Implicit,
            target_kind: TargetKind::Forecast,
            target_id: id.clone(),
            action: FeedbackAction::Approve,
            payload: FeedbackPayload::default(),
            session_id: ledger.session_id.clone(),
            created_at: crate::now(),
        })
        .collect();
    graph.transaction(|g| records.iter().try_for_each(|r| persist(g, r)))?;
    ledger.closed = true;
    Ok(records.into_iter().map(|r| r.feedback_id).collect())
}

/// Feedback entities per target id, counted over all feedbackOn* triples.
pub fn feedback_counts(graph: &KnowledgeGraph) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in graph.triples().filter(|t| t.predicate.is_feedback_target()) {
        *out.entry(t.object.clone()).or_insert(0) += 1;
    }
    out
}
