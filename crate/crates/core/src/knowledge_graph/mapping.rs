//! How domain records are mirrored into graph entities.

use super::{Entity, EntityKind, KnowledgeGraph, Relation, Result, Triple, Value};
use crate::explainer::ExplanationRecord;
use crate::forecasting::ForecastRecord;
use crate::ingestion::TransportRecord;

pub fn material_entity_id(material_id: &str) -> String {
    format!("material/{material_id}")
}

pub fn client_entity_id(client_id: &str) -> String {
    format!("client/{client_id}")
}

pub fn transport_entity_id(transport_id: &str) -> String {
    format!("transport/{transport_id}")
}

pub fn model_entity_id(model_id: &str) -> String {
    format!("model/{model_id}")
}

pub fn transport_entity(t: &TransportRecord) -> Entity {
    Entity::new(transport_entity_id(&t.transport_id), EntityKind::Transport)
        .with("transport_id", t.transport_id.as_str())
        .with("departure_date", t.departure_date.to_string())
        .with("destination_client_id", t.destination_client_id.as_str())
        .with("capacity", t.capacity)
        .with("committed", t.committed)
}

/// Asserts the forecast with its model, material and client (created on
/// first use) and the linking triples.
pub fn assert_forecast(graph: &mut KnowledgeGraph, forecast: &ForecastRecord) -> Result<()> {
    graph.transaction(|g| {
        let material = material_entity_id(&forecast.series.material_id);
        let client = client_entity_id(&forecast.series.client_id);
        let model = model_entity_id(&forecast.model_id);
        g.ensure_entity(
            Entity::new(&material, EntityKind::Material).with("material_id", forecast.series.material_id.as_str()),
        )?;
        g.ensure_entity(
            Entity::new(&client, EntityKind::Client).with("client_id", forecast.series.client_id.as_str()),
        )?;
        g.ensure_entity(Entity::new(&model, EntityKind::AIModel).with("model_id", forecast.model_id.as_str()))?;
        g.assert_entity(
            Entity::new(&forecast.forecast_id, EntityKind::Forecast)
                .with("material_id", forecast.series.material_id.as_str())
                .with("client_id", forecast.series.client_id.as_str())
                .with("target_date", forecast.target_date.to_string())
                .with("predicted_quantity", forecast.quantity)
                .with("quantity", forecast.quantity)
                .with("created_at", forecast.created_at.to_rfc3339()),
        )?;
        g.assert_triple(Triple::new(&forecast.forecast_id, Relation::ProducedBy, model))?;
        g.assert_triple(Triple::new(&forecast.forecast_id, Relation::ForMaterial, material))?;
        g.assert_triple(Triple::new(&forecast.forecast_id, Relation::ForClient, client))
    })
}

pub fn assert_explanation(graph: &mut KnowledgeGraph, explanation: &ExplanationRecord) -> Result<()> {
    graph.transaction(|g| {
        let mut e = Entity::new(&explanation.explanation_id, EntityKind::ForecastExplanation)
            .with("fidelity", explanation.fidelity)
            .with("created_at", explanation.created_at.to_rfc3339())
            .with("attribution_count", explanation.attributions.len() as i64);
        for (i, a) in explanation.attributions.iter().enumerate() {
            e = e
                .with(format!("attribution.{}.feature", i + 1), a.feature_name.as_str())
                .with(format!("attribution.{}.weight", i + 1), a.weight);
        }
        g.assert_entity(e)?;
        g.assert_triple(Triple::new(
            &explanation.explanation_id,
            Relation::Explains,
            &explanation.forecast_id,
        ))
    })
}

/// Feature names listed by an explanation entity, in rank order.
pub fn explanation_features(entity: &Entity) -> Vec<String> {
    let n = entity
        .attribute("attribution_count")
        .and_then(Value::as_integer)
        .unwrap_or(0);
    (1..=n)
        .filter_map(|i| {
            entity
                .attribute(&format!("attribution.{i}.feature"))
                .and_then(Value::as_text)
                .map(str::to_string)
        })
        .collect()
}
