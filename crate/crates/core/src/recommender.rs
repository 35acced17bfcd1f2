//! Heuristic transport-scheduling recommendations.
//!
//! For a forecast the planner first chooses a transport: any existing one
//! bound for the forecast's client, departing on or after the target date,
//! with enough free capacity, or a brand-new transport. A confirmation step
//! follows where the assignment can be confirmed, its quantity adjusted, or
//! the flow cancelled. Each step is a snapshot in the knowledge graph,
//! chained by `followedBy` from the forecast's `suggestsActionFor` snapshot.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecasting::ForecastRecord;
use crate::ingestion::TransportRecord;
use crate::knowledge_graph::mapping::{transport_entity, transport_entity_id};
use crate::knowledge_graph::{Entity, EntityKind, GraphError, KnowledgeGraph, Relation, Triple};

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("option `{option}` does not belong to snapshot `{snapshot}`")]
    OptionNotInSnapshot { snapshot: String, option: String },
    #[error("snapshot `{0}` already has a selected option")]
    AlreadySelected(String),
    #[error("transport `{transport_id}` has {free} free capacity, {requested} requested")]
    CapacityExceeded {
        transport_id: String,
        free: f64,
        requested: f64,
    },
    #[error("unknown transport `{0}`")]
    UnknownTransport(String),
    #[error("invalid quantity adjustment: {0}")]
    InvalidAdjustment(String),
    #[error("option kind {kind:?} cannot be selected at stage {stage:?}")]
    InvalidOption { kind: OptionKind, stage: Stage },
    #[error("forecast quantity must be finite and non-negative, got {0}")]
    InvalidQuantity(f64),
    #[error("snapshot `{snapshot}` was built for forecast `{expected}`, not `{found}`")]
    ForecastMismatch {
        snapshot: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, RecommendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    AssignToTransport,
    CreateNewTransport,
    ConfirmAssignment,
    AdjustQuantity,
    Cancel,
}

impl OptionKind {
    pub fn name(self) -> &'static str {
        match self {
            OptionKind::AssignToTransport => "assign_to_transport",
            OptionKind::CreateNewTransport => "create_new_transport",
            OptionKind::ConfirmAssignment => "confirm_assignment",
            OptionKind::AdjustQuantity => "adjust_quantity",
            OptionKind::Cancel => "cancel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ChooseTransport,
    Confirm,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::ChooseTransport => "choose_transport",
            Stage::Confirm => "confirm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOption {
    pub option_id: String,
    pub kind: OptionKind,
    pub transport_id: Option<String>,
    pub payload: BTreeMap<String, f64>,
    pub rank: u32,
}

impl DecisionOption {
    fn new(kind: OptionKind, transport_id: Option<String>, quantity: f64, rank: u32) -> Self {
        Self {
            option_id: crate::new_id(),
            kind,
            transport_id,
            payload: BTreeMap::from([("quantity".to_string(), quantity)]),
            rank,
        }
    }

    pub fn quantity(&self) -> f64 {
        self.payload.get("quantity").copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSnapshot {
    pub snapshot_id: String,
    pub forecast_id: String,
    pub options: Vec<DecisionOption>,
    pub stage: Stage,
    /// 1 for the snapshot linked from the forecast, +1 per followedBy hop.
    pub position: u32,
    pub created_at: DateTime<Utc>,
}

impl DecisionSnapshot {
    pub fn option(&self, option_id: &str) -> Option<&DecisionOption> {
        self.options.iter().find(|o| o.option_id == option_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportState {
    pub record: TransportRecord,
    pub free_capacity: f64,
}

impl TransportState {
    pub fn new(record: TransportRecord) -> Self {
        let free_capacity = record.free_capacity();
        Self { record, free_capacity }
    }
}

/// Capacity ledger of the fleet, keyed by transport id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransportLedger {
    transports: BTreeMap<String, TransportState>,
}

impl TransportLedger {
    pub fn new(records: impl IntoIterator<Item = TransportRecord>) -> Self {
        Self {
            transports: records
                .into_iter()
                .map(|r| (r.transport_id.clone(), TransportState::new(r)))
                .collect(),
        }
    }

    pub fn get(&self, transport_id: &str) -> Option<&TransportState> {
        self.transports.get(transport_id)
    }

    pub fn states(&self) -> impl Iterator<Item = &TransportState> {
        self.transports.values()
    }

    pub fn len(&self) -> usize {
        self.transports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transports.is_empty()
    }

    pub fn total_committed(&self) -> f64 {
        self.transports.values().map(|t| t.record.committed).sum()
    }

    pub fn insert(&mut self, record: TransportRecord) {
        self.transports
            .insert(record.transport_id.clone(), TransportState::new(record));
    }

    /// Overwrites the committed quantity, e.g. when restoring persisted state.
    pub fn set_committed(&mut self, transport_id: &str, committed: f64) -> Result<()> {
        let state = self
            .transports
            .get_mut(transport_id)
            .ok_or_else(|| RecommendError::UnknownTransport(transport_id.to_string()))?;
        if !(0.0..=state.record.capacity).contains(&committed) {
            return Err(RecommendError::CapacityExceeded {
                transport_id: transport_id.to_string(),
                free: state.record.capacity,
                requested: committed,
            });
        }
        state.record.committed = committed;
        state.free_capacity = state.record.free_capacity();
        Ok(())
    }

    fn check(&self, transport_id: &str, quantity: f64) -> Result<&TransportState> {
        let state = self
            .transports
            .get(transport_id)
            .ok_or_else(|| RecommendError::UnknownTransport(transport_id.to_string()))?;
        if state.free_capacity < quantity {
            return Err(RecommendError::CapacityExceeded {
                transport_id: transport_id.to_string(),
                free: state.free_capacity,
                requested: quantity,
            });
        }
        Ok(state)
    }

    fn commit(&mut self, transport_id: &str, quantity: f64) -> Result<()> {
        self.check(transport_id, quantity)?;
        let state = self.transports.get_mut(transport_id).expect("checked above");
        state.record.committed += quantity;
        state.free_capacity = state.record.free_capacity();
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommenderConfig {
    /// Capacity of transports created through `create_new_transport`, raised
    /// to the forecast quantity when that is larger.
    pub default_new_capacity: f64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            default_new_capacity: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Terminal {
    Committed {
        transport_id: String,
        quantity: f64,
        created_transport: bool,
    },
    Cancelled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionOutcome {
    Next(DecisionSnapshot),
    Terminal(Terminal),
}

fn ranking_key(a: &TransportState, quantity: f64) -> (NaiveDate, f64, &str) {
    (
        a.record.departure_date,
        a.free_capacity - quantity,
        a.record.transport_id.as_str(),
    )
}

/// Transports bound for the forecast's client, departing on or after its
/// target date, with free capacity for its quantity. Ordered by departure
/// date, then capacity slack, then transport id.
pub fn feasible_transports<'a>(
    forecast: &ForecastRecord,
    transports: impl IntoIterator<Item = &'a TransportState>,
) -> Vec<TransportState> {
    let quantity = forecast.quantity;
    let mut out: Vec<TransportState> = transports
        .into_iter()
        .filter(|t| {
            t.record.destination_client_id == forecast.series.client_id
                && t.record.departure_date >= forecast.target_date
                && t.free_capacity >= quantity
        })
        .cloned()
        .collect();
    out.sort_by(|a, b| {
        let (da, sa, ia) = ranking_key(a, quantity);
        let (db, sb, ib) = ranking_key(b, quantity);
        da.cmp(&db).then(sa.total_cmp(&sb)).then_with(|| ia.cmp(ib))
    });
    out
}

#[derive(Debug, Clone, Default)]
pub struct Recommender {
    pub config: RecommenderConfig,
}

impl Recommender {
    pub fn new(config: RecommenderConfig) -> Self {
        Self { config }
    }

    /// Builds the first snapshot for a forecast and links it from the
    /// forecast entity, which must already be in the graph.
    pub fn first_snapshot<'a>(
        &self,
        forecast: &ForecastRecord,
        transports: impl IntoIterator<Item = &'a TransportState>,
        graph: &mut KnowledgeGraph,
    ) -> Result<DecisionSnapshot> {
        if !forecast.quantity.is_finite() || forecast.quantity < 0.0 {
            return Err(RecommendError::InvalidQuantity(forecast.quantity));
        }
        let feasible = feasible_transports(forecast, transports);
        let mut options: Vec<DecisionOption> = feasible
            .iter()
            .enumerate()
            .map(|(i, t)| {
                DecisionOption::new(
                    OptionKind::AssignToTransport,
                    Some(t.record.transport_id.clone()),
                    forecast.quantity,
                    i as u32 + 1,
                )
            })
            .collect();
        options.push(DecisionOption::new(
            OptionKind::CreateNewTransport,
            None,
            forecast.quantity,
            options.len() as u32 + 1,
        ));
        let snapshot = DecisionSnapshot {
            snapshot_id: crate::new_id(),
            forecast_id: forecast.forecast_id.clone(),
            options,
            stage: Stage::ChooseTransport,
            position: 1,
            created_at: crate::now(),
        };
        let records: BTreeMap<&str, &TransportRecord> = feasible
            .iter()
            .map(|t| (t.record.transport_id.as_str(), &t.record))
            .collect();
        graph.transaction(|g| {
            persist_snapshot(g, &snapshot, &records)?;
            g.assert_triple(Triple::new(
                &forecast.forecast_id,
                Relation::SuggestsActionFor,
                &snapshot.snapshot_id,
            ))
        })?;
        Ok(snapshot)
    }

    /// Records the user's choice on `snapshot` and advances the flow.
    ///
    /// `adjusted_quantity` is only read for `adjust_quantity` options. On
    /// error neither the graph nor the ledger is changed.
    pub fn apply_selection(
        &self,
        forecast: &ForecastRecord,
        snapshot: &DecisionSnapshot,
        option_id: &str,
        adjusted_quantity: Option<f64>,
        ledger: &mut TransportLedger,
        graph: &mut KnowledgeGraph,
    ) -> Result<SelectionOutcome> {
        if snapshot.forecast_id != forecast.forecast_id {
            return Err(RecommendError::ForecastMismatch {
                snapshot: snapshot.snapshot_id.clone(),
                expected: snapshot.forecast_id.clone(),
                found: forecast.forecast_id.clone(),
            });
        }
        let option = snapshot
            .option(option_id)
            .ok_or_else(|| RecommendError::OptionNotInSnapshot {
                snapshot: snapshot.snapshot_id.clone(),
                option: option_id.to_string(),
            })?;
        if !graph
            .objects(&snapshot.snapshot_id, Relation::SelectedOption)
            .is_empty()
        {
            return Err(RecommendError::AlreadySelected(snapshot.snapshot_id.clone()));
        }

        enum Effect {
            None,
            Commit(String, f64),
            Create(TransportRecord),
        }

        let (outcome, effect) = graph.transaction(|g| -> Result<(SelectionOutcome, Effect)> {
            g.assert_triple(Triple::new(&snapshot.snapshot_id, Relation::SelectedOption, option_id))
                .map_err(|e| match e {
                    GraphError::CardinalityViolation(_) => {
                        RecommendError::AlreadySelected(snapshot.snapshot_id.clone())
                    }
                    other => other.into(),
                })?;
            match (snapshot.stage, option.kind) {
                (Stage::ChooseTransport, OptionKind::AssignToTransport | OptionKind::CreateNewTransport) => {
                    let quantity = option.quantity();
                    if let Some(t) = &option.transport_id {
                        ledger.check(t, quantity)?;
                    }
                    let next = self.confirm_snapshot(g, snapshot, option.transport_id.clone(), quantity, ledger)?;
                    Ok((SelectionOutcome::Next(next), Effect::None))
                }
                (Stage::Confirm, OptionKind::AdjustQuantity) => {
                    let quantity = adjusted_quantity.ok_or_else(|| {
                        RecommendError::InvalidAdjustment("adjust_quantity needs a new quantity".into())
                    })?;
                    if !quantity.is_finite() || quantity < 0.0 {
                        return Err(RecommendError::InvalidAdjustment(format!(
                            "quantity must be finite and non-negative, got {quantity}"
                        )));
                    }
                    if let Some(t) = &option.transport_id {
                        ledger.check(t, quantity)?;
                    }
                    let next = self.confirm_snapshot(g, snapshot, option.transport_id.clone(), quantity, ledger)?;
                    Ok((SelectionOutcome::Next(next), Effect::None))
                }
                (Stage::Confirm, OptionKind::ConfirmAssignment) => {
                    let quantity = option.quantity();
                    match &option.transport_id {
                        Some(t) => {
                            let state = ledger.check(t, quantity)?;
                            g.set_attribute(&transport_entity_id(t), "committed", state.record.committed + quantity)?;
                            Ok((
                                SelectionOutcome::Terminal(Terminal::Committed {
                                    transport_id: t.clone(),
                                    quantity,
                                    created_transport: false,
                                }),
                                Effect::Commit(t.clone(), quantity),
                            ))
                        }
                        None => {
                            let record = TransportRecord {
                                transport_id: format!("NEW-{}", crate::new_id()),
                                departure_date: forecast.target_date,
                                destination_client_id: forecast.series.client_id.clone(),
                                capacity: quantity.max(self.config.default_new_capacity),
                                committed: quantity,
                            };
                            g.assert_entity(transport_entity(&record))?;
                            Ok((
                                SelectionOutcome::Terminal(Terminal::Committed {
                                    transport_id: record.transport_id.clone(),
                                    quantity,
                                    created_transport: true,
                                }),
                                Effect::Create(record),
                            ))
                        }
                    }
                }
                (Stage::Confirm, OptionKind::Cancel) => {
                    Ok((SelectionOutcome::Terminal(Terminal::Cancelled), Effect::None))
                }
                (stage, kind) => Err(RecommendError::InvalidOption { kind, stage }),
            }
        })?;

        match effect {
            Effect::None => {}
            Effect::Commit(t, q) => ledger.commit(&t, q)?,
            Effect::Create(record) => ledger.insert(record),
        }
        Ok(outcome)
    }

    fn confirm_snapshot(
        &self,
        graph: &mut KnowledgeGraph,
        previous: &DecisionSnapshot,
        transport_id: Option<String>,
        quantity: f64,
        ledger: &TransportLedger,
    ) -> Result<DecisionSnapshot> {
        let next = DecisionSnapshot {
            snapshot_id: crate::new_id(),
            forecast_id: previous.forecast_id.clone(),
            options: vec![
                DecisionOption::new(OptionKind::ConfirmAssignment, transport_id.clone(), quantity, 1),
                DecisionOption::new(OptionKind::AdjustQuantity, transport_id.clone(), quantity, 2),
                DecisionOption::new(OptionKind::Cancel, None, quantity, 3),
            ],
            stage: Stage::Confirm,
            position: previous.position + 1,
            created_at: crate::now(),
        };
        let mut records = BTreeMap::new();
        if let Some(t) = transport_id.as_deref() {
            let state = ledger
                .get(t)
                .ok_or_else(|| RecommendError::UnknownTransport(t.to_string()))?;
            records.insert(t, &state.record);
        }
        persist_snapshot(graph, &next, &records)?;
        graph.assert_triple(Triple::new(
            &previous.snapshot_id,
            Relation::FollowedBy,
            &next.snapshot_id,
        ))?;
        Ok(next)
    }
}

fn persist_snapshot(
    graph: &mut KnowledgeGraph,
    snapshot: &DecisionSnapshot,
    transports: &BTreeMap<&str, &TransportRecord>,
) -> std::result::Result<(), GraphError> {
    graph.assert_entity(
        Entity::new(&snapshot.snapshot_id, EntityKind::DecisionSnapshot)
            .with("forecast_id", snapshot.forecast_id.as_str())
            .with("stage", snapshot.stage.name())
            .with("position", snapshot.position as i64)
            .with("created_at", snapshot.created_at.to_rfc3339()),
    )?;
    for o in &snapshot.options {
        let mut e = Entity::new(&o.option_id, EntityKind::DecisionOption)
            .with("kind", o.kind.name())
            .with("rank", o.rank as i64);
        for (k, v) in &o.payload {
            e = e.with(k.as_str(), *v);
        }
        if let Some(t) = &o.transport_id {
            e = e.with("transport_id", t.as_str());
        }
        graph.assert_entity(e)?;
        graph.assert_triple(Triple::new(&snapshot.snapshot_id, Relation::HasOption, &o.option_id))?;
        if let Some(t) = &o.transport_id {
            if let Some(record) = transports.get(t.as_str()) {
                graph.ensure_entity(transport_entity(record))?;
            }
            graph.assert_triple(Triple::new(
                &o.option_id,
                Relation::ConcernsTransport,
                transport_entity_id(t),
            ))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::SeriesKey;
    use crate::knowledge_graph::mapping::assert_forecast;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn forecast(quantity: f64) -> ForecastRecord {
        ForecastRecord {
            forecast_id: crate::new_id(),
            series: SeriesKey::new("M1", "C1"),
            target_date: date("2020-02-01"),
            quantity,
            model_id: "m".into(),
            created_at: crate::now(),
        }
    }

    fn transport(id: &str, client: &str, departure: &str, capacity: f64, committed: f64) -> TransportRecord {
        TransportRecord {
            transport_id: id.into(),
            departure_date: date(departure),
            destination_client_id: client.into(),
            capacity,
            committed,
        }
    }

    fn setup(quantity: f64, fleet: Vec<TransportRecord>) -> (ForecastRecord, TransportLedger, KnowledgeGraph) {
        let f = forecast(quantity);
        let mut g = KnowledgeGraph::new();
        assert_forecast(&mut g, &f).unwrap();
        (f, TransportLedger::new(fleet), g)
    }

    #[test]
    fn capacity_filter_excludes_small_transport() {
        let (f, ledger, mut g) = setup(
            120.0,
            vec![
                transport("T1", "C1", "2020-02-01", 100.0, 0.0),
                transport("T2", "C1", "2020-02-01", 200.0, 50.0),
            ],
        );
        let s = Recommender::default()
            .first_snapshot(&f, ledger.states(), &mut g)
            .unwrap();
        let kinds: Vec<_> = s.options.iter().map(|o| (o.kind, o.transport_id.clone())).collect();
        assert_eq!(
            kinds,
            vec![
                (OptionKind::AssignToTransport, Some("T2".to_string())),
                (OptionKind::CreateNewTransport, None)
            ]
        );
        assert_eq!(s.options.iter().map(|o| o.rank).collect::<Vec<_>>(), vec![1, 2]);
        assert!(g.contains(&Triple::new(
            &f.forecast_id,
            Relation::SuggestsActionFor,
            &s.snapshot_id
        )));
        assert_eq!(g.objects(&s.snapshot_id, Relation::HasOption).len(), 2);
    }

    #[test]
    fn empty_fleet_still_offers_new_transport() {
        let (f, ledger, mut g) = setup(5.0, vec![]);
        let s = Recommender::default()
            .first_snapshot(&f, ledger.states(), &mut g)
            .unwrap();
        assert_eq!(s.options.len(), 1);
        assert_eq!(s.options[0].kind, OptionKind::CreateNewTransport);
    }

    #[test]
    fn zero_quantity_and_infeasible_fleets() {
        let fleet = vec![
            transport("T1", "C1", "2020-02-03", 10.0, 10.0),
            transport("T2", "C1", "2020-01-30", 10.0, 0.0),
            transport("T3", "C2", "2020-02-03", 10.0, 0.0),
        ];
        let ledger = TransportLedger::new(fleet);
        let ids: Vec<_> = feasible_transports(&forecast(0.0), ledger.states())
            .into_iter()
            .map(|t| t.record.transport_id)
            .collect();
        assert_eq!(ids, vec!["T1"]);
        assert!(feasible_transports(&forecast(1e9), ledger.states()).is_empty());
    }

    #[test]
    fn ranking_prefers_early_then_tight() {
        let ledger = TransportLedger::new(vec![
            transport("T9", "C1", "2020-02-02", 50.0, 0.0),
            transport("T1", "C1", "2020-02-03", 15.0, 0.0),
            transport("T5", "C1", "2020-02-02", 20.0, 0.0),
            transport("T4", "C1", "2020-02-02", 20.0, 0.0),
        ]);
        let ids: Vec<_> = feasible_transports(&forecast(10.0), ledger.states())
            .into_iter()
            .map(|t| t.record.transport_id)
            .collect();
        assert_eq!(ids, vec!["T4", "T5", "T9", "T1"]);
    }

    #[test]
    fn two_stage_commit_flow() {
        let (f, mut ledger, mut g) = setup(120.0, vec![transport("T2", "C1", "2020-02-02", 200.0, 50.0)]);
        let r = Recommender::default();
        let s1 = r.first_snapshot(&f, ledger.states(), &mut g).unwrap();
        let assign = s1.options[0].option_id.clone();
        let SelectionOutcome::Next(s2) = r.apply_selection(&f, &s1, &assign, None, &mut ledger, &mut g).unwrap() else {
            panic!("expected a confirm snapshot");
        };
        assert_eq!(s2.stage, Stage::Confirm);
        assert_eq!(s2.position, 2);
        assert_eq!(
            s2.options.iter().map(|o| o.kind).collect::<Vec<_>>(),
            vec![
                OptionKind::ConfirmAssignment,
                OptionKind::AdjustQuantity,
                OptionKind::Cancel
            ]
        );
        assert!(g.contains(&Triple::new(&s1.snapshot_id, Relation::FollowedBy, &s2.snapshot_id)));
        assert!(g.contains(&Triple::new(&s1.snapshot_id, Relation::SelectedOption, &assign)));

        let confirm = s2.options[0].option_id.clone();
        let out = r.apply_selection(&f, &s2, &confirm, None, &mut ledger, &mut g).unwrap();
        assert_eq!(
            out,
            SelectionOutcome::Terminal(Terminal::Committed {
                transport_id: "T2".into(),
                quantity: 120.0,
                created_transport: false
            })
        );
        assert_eq!(ledger.get("T2").unwrap().record.committed, 170.0);
        assert_eq!(
            g.entity(&transport_entity_id("T2"))
                .unwrap()
                .attribute("committed")
                .unwrap()
                .as_number(),
            Some(170.0)
        );
        assert!(matches!(
            r.apply_selection(&f, &s2, &confirm, None, &mut ledger, &mut g),
            Err(RecommendError::AlreadySelected(_))
        ));
        let trace = g.trace_to_forecast(&confirm).unwrap();
        assert_eq!(trace.origin_forecast, f.forecast_id);
        assert_eq!(trace.path, vec![s2.snapshot_id.clone(), s1.snapshot_id.clone()]);
    }

    #[test]
    fn new_transport_fits_demand() {
        let (f, mut ledger, mut g) = setup(250.0, vec![]);
        let r = Recommender::default();
        let s1 = r.first_snapshot(&f, ledger.states(), &mut g).unwrap();
        let SelectionOutcome::Next(s2) = r
            .apply_selection(&f, &s1, &s1.options[0].option_id.clone(), None, &mut ledger, &mut g)
            .unwrap()
        else {
            panic!()
        };
        let out = r
            .apply_selection(&f, &s2, &s2.options[0].option_id, None, &mut ledger, &mut g)
            .unwrap();
        let SelectionOutcome::Terminal(Terminal::Committed {
            transport_id,
            created_transport,
            ..
        }) = out
        else {
            panic!()
        };
        assert!(created_transport);
        let t = ledger.get(&transport_id).unwrap();
        assert_eq!(t.record.capacity, 250.0);
        assert_eq!(t.record.committed, 250.0);
        assert_eq!(t.record.destination_client_id, "C1");
    }

    #[test]
    fn adjust_then_cancel() {
        let (f, mut ledger, mut g) = setup(10.0, vec![transport("T1", "C1", "2020-02-05", 30.0, 0.0)]);
        let r = Recommender::default();
        let s1 = r.first_snapshot(&f, ledger.states(), &mut g).unwrap();
        let SelectionOutcome::Next(s2) = r
            .apply_selection(&f, &s1, &s1.options[0].option_id.clone(), None, &mut ledger, &mut g)
            .unwrap()
        else {
            panic!()
        };
        let adjust = s2.options[1].option_id.clone();
        assert!(matches!(
            r.apply_selection(&f, &s2, &adjust, None, &mut ledger, &mut g),
            Err(RecommendError::InvalidAdjustment(_))
        ));
        assert!(matches!(
            r.apply_selection(&f, &s2, &adjust, Some(31.0), &mut ledger, &mut g),
            Err(RecommendError::CapacityExceeded { .. })
        ));
        // failed attempts left no selection behind
        assert!(g.objects(&s2.snapshot_id, Relation::SelectedOption).is_empty());
        let SelectionOutcome::Next(s3) = r
            .apply_selection(&f, &s2, &adjust, Some(25.0), &mut ledger, &mut g)
            .unwrap()
        else {
            panic!()
        };
        assert_eq!(s3.position, 3);
        assert_eq!(s3.options[0].quantity(), 25.0);
        let out = r
            .apply_selection(&f, &s3, &s3.options[2].option_id.clone(), None, &mut ledger, &mut g)
            .unwrap();
        assert_eq!(out, SelectionOutcome::Terminal(Terminal::Cancelled));
        assert_eq!(ledger.total_committed(), 0.0);
    }

    #[test]
    fn foreign_option_rejected() {
        let (f, mut ledger, mut g) = setup(1.0, vec![]);
        let r = Recommender::default();
        let s1 = r.first_snapshot(&f, ledger.states(), &mut g).unwrap();
        let s_other = {
            let f2 = forecast(1.0);
            assert_forecast(&mut g, &f2).unwrap();
            r.first_snapshot(&f2, ledger.states(), &mut g).unwrap()
        };
        assert!(matches!(
            r.apply_selection(&f, &s1, &s_other.options[0].option_id, None, &mut ledger, &mut g),
            Err(RecommendError::OptionNotInSnapshot { .. })
        ));
    }
}
