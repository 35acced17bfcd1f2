//! Core engine of the planning assistant.
//!
//! Daily material×client demand forecasts flow through local explanations,
//! heuristic transport recommendations and user feedback. Every artefact the
//! user sees is mirrored into a provenance [`knowledge_graph`], and the
//! [`active_learning`] module ranks which items are worth asking the planner
//! about next.

pub mod active_learning;
pub mod explainer;
pub mod feedback;
pub mod forecasting;
pub mod ingestion;
pub mod knowledge_graph;
mod linalg;
pub mod recommender;

use chrono::{DateTime, Utc};

/// Issues a fresh opaque identifier (UUID v4, hyphenated).
pub fn new_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

pub(crate) fn now() -> DateTime<Utc> {
    Utc::now()
}
