//! Provenance knowledge graph.
//!
//! Typed entities and schema-checked triples relating forecasts, their
//! explanations, decision snapshots and options, and user feedback. Every
//! option can be traced back to the forecast whose decision flow produced it.
//!
//! Mutations performed inside [`KnowledgeGraph::transaction`] are applied
//! all-or-nothing. When a [`MutationLog`] is attached, each committed batch
//! is appended to it and can be replayed with [`KnowledgeGraph::open`].

mod log;
pub mod mapping;
mod ntriples;
mod schema;

pub use self::log::{LogRecord, MutationLog};
pub use ntriples::{from_ntriples, to_ntriples, BASE_IRI};
pub use schema::{EntityKind, OntologySchema, Relation, RelationRule};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("entity `{0}` already exists")]
    DuplicateEntity(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("cardinality violation: {0}")]
    CardinalityViolation(String),
    #[error("followedBy edge {from} -> {to} would close a cycle")]
    CycleDetected { from: String, to: String },
    #[error("option `{option}` is not displayed by snapshot `{snapshot}`")]
    OptionNotInSnapshot { snapshot: String, option: String },
    #[error("`{0}` cannot be traced back to a forecast")]
    OrphanNode(String),
    #[error("`{0}` is a {1}; only options and snapshots are traceable")]
    NotTraceable(String, EntityKind),
    #[error("query needs at least one bound position")]
    NoBinding,
    #[error("invalid attribute `{key}`: {message}")]
    InvalidAttribute { key: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log at byte {offset}: {message}")]
    CorruptLog { offset: u64, message: String },
    #[error("n-triples line {line}: {message}")]
    NTriples { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Scalar attribute value. Numbers must be finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Text(String),
    Number(f64),
    Integer(i64),
    Bool(bool),
}

impl Value {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Value::Integer(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    pub kind: EntityKind,
    pub attributes: BTreeMap<String, Value>,
}

impl Entity {
    pub fn new(entity_id: impl Into<String>, kind: EntityKind) -> Self {
        Self {
            entity_id: entity_id.into(),
            kind,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn attribute(&self, key: &str) -> Option<&Value> {
        self.attributes.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: Relation,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: Relation, object: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            predicate,
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceResult {
    pub origin_forecast: String,
    /// Snapshots from the queried node's snapshot back to the first one.
    pub path: Vec<String>,
}

#[derive(Debug, Clone)]
enum Undo {
    RemoveEntity(String),
    RemoveTriple(Triple),
    RestoreAttribute {
        entity_id: String,
        key: String,
        previous: Option<Value>,
    },
}

/// In-memory triple store. One writer at a time (`&mut self`); readers share
/// `&self` and never observe a partially inserted triple.
#[derive(Debug, Default)]
pub struct KnowledgeGraph {
    schema: OntologySchema,
    entities: HashMap<String, Entity>,
    triples: BTreeSet<Triple>,
    outgoing: HashMap<String, BTreeSet<(Relation, String)>>,
    incoming: HashMap<String, BTreeSet<(Relation, String)>>,
    by_predicate: BTreeMap<Relation, BTreeSet<(String, String)>>,
    depth: usize,
    undo: Vec<Undo>,
    pending: Vec<LogRecord>,
    log: Option<MutationLog>,
}

impl PartialEq for KnowledgeGraph {
    /// Graphs are equal when they hold the same entities and triples.
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.triples == other.triples
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::with_schema(OntologySchema::standard())
    }

    pub fn with_schema(schema: OntologySchema) -> Self {
        Self {
            schema,
            ..Self::default()
        }
    }

    /// Replays the committed batches of the log at `path` (creating it when
    /// absent) and keeps appending new batches to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let (log, batches) = MutationLog::open(path)?;
        let mut graph = Self::new();
        for batch in batches {
            graph.transaction(|g| {
                for record in batch {
                    g.apply_record(record)?;
                }
                Ok::<_, GraphError>(())
            })?;
        }
        graph.log = Some(log);
        Ok(graph)
    }

    fn apply_record(&mut self, record: LogRecord) -> Result<()> {
        match record {
            LogRecord::Entity { entity } => self.assert_entity(entity).map(|_| ()),
            LogRecord::Triple { triple } => self.assert_triple(triple),
            LogRecord::SetAttribute { entity_id, key, value } => self.set_attribute(&entity_id, &key, value),
            LogRecord::Commit { .. } => Ok(()),
        }
    }

    pub fn schema(&self) -> &OntologySchema {
        &self.schema
    }

    /// Runs `f` as one atomic write batch: on error every mutation made by
    /// `f` is undone. Nested calls join the outermost batch.
    pub fn transaction<T, E>(
        &mut self,
        f: impl FnOnce(&mut Self) -> std::result::Result<T, E>,
    ) -> std::result::Result<T, E>
    where
        E: From<GraphError>,
    {
        let mark = self.undo.len();
        self.depth += 1;
        let result = f(self);
        self.depth -= 1;
        match result {
            Ok(value) => {
                if self.depth == 0 {
                    if let Err(e) = self.flush() {
                        self.rollback_to(mark);
                        return Err(e.into());
                    }
                }
                Ok(value)
            }
            Err(e) => {
                self.rollback_to(mark);
                Err(e)
            }
        }
    }

    fn record(&mut self, undo: Undo, forward: LogRecord) -> Result<()> {
        self.undo.push(undo);
        self.pending.push(forward);
        if self.depth == 0 {
            let mark = self.undo.len() - 1;
            if let Err(e) = self.flush() {
                self.rollback_to(mark);
                return Err(e);
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            if !self.pending.is_empty() {
                log.append_batch(&self.pending)?;
            }
        }
        self.pending.clear();
        self.undo.clear();
        Ok(())
    }

    fn rollback_to(&mut self, mark: usize) {
        while self.undo.len() > mark {
            match self.undo.pop().expect("non-empty undo stack") {
                Undo::RemoveEntity(id) => {
                    self.entities.remove(&id);
                }
                Undo::RemoveTriple(t) => self.unindex(&t),
                Undo::RestoreAttribute {
                    entity_id,
                    key,
                    previous,
                } => {
                    if let Some(e) = self.entities.get_mut(&entity_id) {
                        match previous {
                            Some(v) => e.attributes.insert(key, v),
                            None => e.attributes.remove(&key),
                        };
                    }
                }
            }
            self.pending.pop();
        }
    }

    fn check_value(key: &str, value: &Value) -> Result<()> {
        if key.is_empty() || key.contains(['\n', '\r']) {
            return Err(GraphError::InvalidAttribute {
                key: key.to_string(),
                message: "keys must be non-empty single-line strings".into(),
            });
        }
        if let Value::Number(v) = value {
            if !v.is_finite() {
                return Err(GraphError::InvalidAttribute {
                    key: key.to_string(),
                    message: format!("non-finite number {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn assert_entity(&mut self, entity: Entity) -> Result<String> {
        if entity.entity_id.is_empty() {
            return Err(GraphError::SchemaViolation("entity ids must be non-empty".into()));
        }
        if self.entities.contains_key(&entity.entity_id) {
            return Err(GraphError::DuplicateEntity(entity.entity_id));
        }
        for (k, v) in &entity.attributes {
            Self::check_value(k, v)?;
        }
        let id = entity.entity_id.clone();
        self.entities.insert(id.clone(), entity.clone());
        self.record(Undo::RemoveEntity(id.clone()), LogRecord::Entity { entity })?;
        Ok(id)
    }

    /// Inserts an entity unless one with that id and kind already exists.
    pub fn ensure_entity(&mut self, entity: Entity) -> Result<()> {
        match self.entities.get(&entity.entity_id) {
            Some(existing) if existing.kind == entity.kind => Ok(()),
            Some(existing) => Err(GraphError::SchemaViolation(format!(
                "`{}` exists as {}, not {}",
                entity.entity_id, existing.kind, entity.kind
            ))),
            None => self.assert_entity(entity).map(|_| ()),
        }
    }

    pub fn set_attribute(&mut self, entity_id: &str, key: &str, value: impl Into<Value>) -> Result<()> {
        let value = value.into();
        Self::check_value(key, &value)?;
        let entity = self
            .entities
            .get_mut(entity_id)
            .ok_or_else(|| GraphError::UnknownEntity(entity_id.to_string()))?;
        let previous = entity.attributes.insert(key.to_string(), value.clone());
        self.record(
            Undo::RestoreAttribute {
                entity_id: entity_id.to_string(),
                key: key.to_string(),
                previous,
            },
            LogRecord::SetAttribute {
                entity_id: entity_id.to_string(),
                key: key.to_string(),
                value,
            },
        )
    }

    pub fn assert_triple(&mut self, triple: Triple) -> Result<()> {
        let subject_kind = self.kind_of(&triple.subject)?;
        let object_kind = self.kind_of(&triple.object)?;
        let rule = *self.schema.rule(triple.predicate).ok_or_else(|| {
            GraphError::SchemaViolation(format!("relation {} is not in the schema", triple.predicate))
        })?;
        if subject_kind != rule.subject || object_kind != rule.object {
            return Err(GraphError::SchemaViolation(format!(
                "{} expects {} -> {}, got {} -> {}",
                triple.predicate, rule.subject, rule.object, subject_kind, object_kind
            )));
        }
        if self.triples.contains(&triple) {
            return Ok(());
        }
        if triple.predicate == Relation::FollowedBy && self.reaches_by_followed(&triple.object, &triple.subject) {
            return Err(GraphError::CycleDetected {
                from: triple.subject,
                to: triple.object,
            });
        }
        if triple.predicate == Relation::SelectedOption
            && !self
                .triples
                .contains(&Triple::new(&triple.subject, Relation::HasOption, &triple.object))
        {
            return Err(GraphError::OptionNotInSnapshot {
                snapshot: triple.subject,
                option: triple.object,
            });
        }
        if let Some(max) = rule.max_out {
            let n = self.objects(&triple.subject, triple.predicate).len();
            if n >= max {
                return Err(GraphError::CardinalityViolation(format!(
                    "`{}` already has {n} outgoing {} edge(s)",
                    triple.subject, triple.predicate
                )));
            }
        }
        if let Some(max) = rule.max_in {
            let n = self.subjects(triple.predicate, &triple.object).len();
            if n >= max {
                return Err(GraphError::CardinalityViolation(format!(
                    "`{}` already has {n} incoming {} edge(s)",
                    triple.object, triple.predicate
                )));
            }
        }
        self.index(&triple);
        self.record(Undo::RemoveTriple(triple.clone()), LogRecord::Triple { triple })
    }

    fn reaches_by_followed(&self, from: &str, to: &str) -> bool {
        let mut current = from.to_string();
        let mut seen = HashSet::new();
        loop {
            if current == to {
                return true;
            }
            if !seen.insert(current.clone()) {
                return false;
            }
            match self.objects(&current, Relation::FollowedBy).first() {
                Some(next) => current = next.to_string(),
                None => return false,
            }
        }
    }

    fn index(&mut self, t: &Triple) {
        self.triples.insert(t.clone());
        self.outgoing
            .entry(t.subject.clone())
            .or_default()
            .insert((t.predicate, t.object.clone()));
        self.incoming
            .entry(t.object.clone())
            .or_default()
            .insert((t.predicate, t.subject.clone()));
        self.by_predicate
            .entry(t.predicate)
            .or_default()
            .insert((t.subject.clone(), t.object.clone()));
    }

    fn unindex(&mut self, t: &Triple) {
        self.triples.remove(t);
        if let Some(s) = self.outgoing.get_mut(&t.subject) {
            s.remove(&(t.predicate, t.object.clone()));
        }
        if let Some(s) = self.incoming.get_mut(&t.object) {
            s.remove(&(t.predicate, t.subject.clone()));
        }
        if let Some(s) = self.by_predicate.get_mut(&t.predicate) {
            s.remove(&(t.subject.clone(), t.object.clone()));
        }
    }

    fn kind_of(&self, id: &str) -> Result<EntityKind> {
        self.entities
            .get(id)
            .map(|e| e.kind)
            .ok_or_else(|| GraphError::UnknownEntity(id.to_string()))
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains_entity(&self, id: &str) -> bool {
        self.entities.contains_key(id)
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Entities ordered by id.
    pub fn entities(&self) -> Vec<&Entity> {
        let mut all: Vec<&Entity> = self.entities.values().collect();
        all.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
        all
    }

    pub fn entities_of_kind(&self, kind: EntityKind) -> Vec<&Entity> {
        let mut all: Vec<&Entity> = self.entities.values().filter(|e| e.kind == kind).collect();
        all.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
        all
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    /// Objects of `subject --relation-->`, ordered.
    pub fn objects(&self, subject: &str, relation: Relation) -> Vec<&str> {
        self.outgoing
            .get(subject)
            .map(|s| {
                s.iter()
                    .filter(|(r, _)| *r == relation)
                    .map(|(_, o)| o.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Subjects of `--relation--> object`, ordered.
    pub fn subjects(&self, relation: Relation, object: &str) -> Vec<&str> {
        self.incoming
            .get(object)
            .map(|s| {
                s.iter()
                    .filter(|(r, _)| *r == relation)
                    .map(|(_, o)| o.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn count_predicate(&self, relation: Relation) -> usize {
        self.by_predicate.get(&relation).map_or(0, BTreeSet::len)
    }

    /// Triples matching every bound position, in (subject, predicate, object) order.
    pub fn query(
        &self,
        subject: Option<&str>,
        predicate: Option<Relation>,
        object: Option<&str>,
    ) -> Result<Vec<Triple>> {
        let matches = |t: &Triple| {
            subject.is_none_or(|s| s == t.subject)
                && predicate.is_none_or(|p| p == t.predicate)
                && object.is_none_or(|o| o == t.object)
        };
        let mut out: Vec<Triple> = match (subject, predicate, object) {
            (None, None, None) => return Err(GraphError::NoBinding),
            (Some(s), _, _) => self
                .outgoing
                .get(s)
                .into_iter()
                .flatten()
                .map(|(p, o)| Triple::new(s, *p, o))
                .filter(matches)
                .collect(),
            (None, _, Some(o)) => self
                .incoming
                .get(o)
                .into_iter()
                .flatten()
                .map(|(p, s)| Triple::new(s, *p, o))
                .filter(matches)
                .collect(),
            (None, Some(p), None) => self
                .by_predicate
                .get(&p)
                .into_iter()
                .flatten()
                .map(|(s, o)| Triple::new(s, p, o))
                .collect(),
        };
        out.sort();
        Ok(out)
    }

    /// Walks from an option (or snapshot) back through its snapshot chain to
    /// the originating forecast.
    pub fn trace_to_forecast(&self, node: &str) -> Result<TraceResult> {
        let kind = self.kind_of(node)?;
        let mut current = match kind {
            EntityKind::DecisionSnapshot => node.to_string(),
            EntityKind::DecisionOption => self
                .subjects(Relation::HasOption, node)
                .first()
                .map(|s| s.to_string())
                .ok_or_else(|| GraphError::OrphanNode(node.to_string()))?,
            other => return Err(GraphError::NotTraceable(node.to_string(), other)),
        };
        let mut path = vec![current.clone()];
        while let Some(prev) = self.subjects(Relation::FollowedBy, &current).first() {
            current = prev.to_string();
            if path.len() > self.entities.len() {
                // unreachable while followedBy stays acyclic
                return Err(GraphError::CycleDetected {
                    from: current.clone(),
                    to: node.to_string(),
                });
            }
            path.push(current.clone());
        }
        let origin = self
            .subjects(Relation::SuggestsActionFor, &current)
            .first()
            .map(|s| s.to_string())
            .ok_or_else(|| GraphError::OrphanNode(node.to_string()))?;
        Ok(TraceResult {
            origin_forecast: origin,
            path,
        })
    }

    /// Checks graph-wide invariants that single inserts cannot enforce and
    /// returns one message per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for e in self.entities.values() {
            match e.kind {
                EntityKind::Feedback => {
                    let targets = self
                        .outgoing
                        .get(&e.entity_id)
                        .map_or(0, |s| s.iter().filter(|(r, _)| r.is_feedback_target()).count());
                    if targets == 0 {
                        problems.push(format!("feedback `{}` has no target", e.entity_id));
                    }
                }
                EntityKind::ForecastExplanation if self.objects(&e.entity_id, Relation::Explains).len() != 1 => {
                    problems.push(format!(
                        "explanation `{}` must explain exactly one forecast",
                        e.entity_id
                    ));
                }
                _ => {}
            }
        }
        for t in &self.triples {
            let rule = self.schema.rule(t.predicate);
            let ok = rule.is_some_and(|r| {
                self.kind_of(&t.subject).ok() == Some(r.subject) && self.kind_of(&t.object).ok() == Some(r.object)
            });
            if !ok {
                problems.push(format!("triple {t:?} violates the schema"));
            }
        }
        // followedBy chains must be acyclic; in/out degrees are bounded on insert
        let mut queue: VecDeque<&str> = VecDeque::new();
        let mut indegree: HashMap<&str, usize> = HashMap::new();
        for (s, o) in self.by_predicate.get(&Relation::FollowedBy).into_iter().flatten() {
            indegree.entry(s).or_insert(0);
            *indegree.entry(o).or_insert(0) += 1;
        }
        let total = indegree.len();
        queue.extend(indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k));
        let mut visited = 0;
        while let Some(n) = queue.pop_front() {
            visited += 1;
            for next in self.objects(n, Relation::FollowedBy) {
                let d = indegree.get_mut(next).expect("indexed node");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(next);
                }
            }
        }
        if visited != total {
            problems.push("followedBy contains a cycle".into());
        }
        problems
    }

    pub fn export_ntriples(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, to_ntriples(self))?;
        Ok(())
    }
}
