use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    AIModel,
    Forecast,
    ForecastExplanation,
    DecisionOption,
    DecisionSnapshot,
    Feedback,
    Material,
    Client,
    Transport,
}

impl EntityKind {
    pub const ALL: [EntityKind; 9] = [
        EntityKind::AIModel,
        EntityKind::Forecast,
        EntityKind::ForecastExplanation,
        EntityKind::DecisionOption,
        EntityKind::DecisionSnapshot,
        EntityKind::Feedback,
        EntityKind::Material,
        EntityKind::Client,
        EntityKind::Transport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::AIModel => "AIModel",
            EntityKind::Forecast => "Forecast",
            EntityKind::ForecastExplanation => "ForecastExplanation",
            EntityKind::DecisionOption => "DecisionOption",
            EntityKind::DecisionSnapshot => "DecisionSnapshot",
            EntityKind::Feedback => "Feedback",
            EntityKind::Material => "Material",
            EntityKind::Client => "Client",
            EntityKind::Transport => "Transport",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown entity kind `{s}`"))
    }
}

/// Relation vocabulary of the provenance ontology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    /// Forecast → the first snapshot of options shown for it.
    SuggestsActionFor,
    /// Snapshot → the next snapshot in the decision flow.
    FollowedBy,
    /// Snapshot → the option the user picked from it.
    SelectedOption,
    /// Snapshot → an option it displayed.
    HasOption,
    /// Explanation → the forecast it explains.
    Explains,
    FeedbackOnForecast,
    FeedbackOnExplanation,
    FeedbackOnOption,
    /// Forecast → model that produced it.
    ProducedBy,
    ForMaterial,
    ForClient,
    /// Option → the transport it would load.
    ConcernsTransport,
}

impl Relation {
    pub const ALL: [Relation; 12] = [
        Relation::SuggestsActionFor,
        Relation::FollowedBy,
        Relation::SelectedOption,
        Relation::HasOption,
        Relation::Explains,
        Relation::FeedbackOnForecast,
        Relation::FeedbackOnExplanation,
        Relation::FeedbackOnOption,
        Relation::ProducedBy,
        Relation::ForMaterial,
        Relation::ForClient,
        Relation::ConcernsTransport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::SuggestsActionFor => "suggestsActionFor",
            Relation::FollowedBy => "followedBy",
            Relation::SelectedOption => "selectedOption",
            Relation::HasOption => "hasOption",
            Relation::Explains => "explains",
            Relation::FeedbackOnForecast => "feedbackOnForecast",
            Relation::FeedbackOnExplanation => "feedbackOnExplanation",
            Relation::FeedbackOnOption => "feedbackOnOption",
            Relation::ProducedBy => "producedBy",
            Relation::ForMaterial => "forMaterial",
            Relation::ForClient => "forClient",
            Relation::ConcernsTransport => "concernsTransport",
        }
    }

    pub fn is_feedback_target(self) -> bool {
        matches!(
            self,
            Relation::FeedbackOnForecast | Relation::FeedbackOnExplanation | Relation::FeedbackOnOption
        )
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown relation `{s}`"))
    }
}

/// Allowed kinds and degree bounds of one relation. `max_out` bounds the
/// edges leaving one subject, `max_in` the edges reaching one object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationRule {
    pub subject: EntityKind,
    pub object: EntityKind,
    pub max_out: Option<usize>,
    pub max_in: Option<usize>,
}

impl RelationRule {
    fn new(subject: EntityKind, object: EntityKind, max_out: Option<usize>, max_in: Option<usize>) -> Self {
        Self {
            subject,
            object,
            max_out,
            max_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OntologySchema {
    relations: BTreeMap<Relation, RelationRule>,
}

impl Default for OntologySchema {
    fn default() -> Self {
        Self::standard()
    }
}

impl OntologySchema {
    pub fn standard() -> Self {
        use EntityKind::*;
        use Relation::*;
        let one = Some(1);
        let relations = BTreeMap::from([
            // a snapshot heads at most one forecast's flow
            (
                SuggestsActionFor,
                RelationRule::new(Forecast, DecisionSnapshot, None, one),
            ),
            // linear chains
            (
                FollowedBy,
                RelationRule::new(DecisionSnapshot, DecisionSnapshot, one, one),
            ),
            (
                SelectedOption,
                RelationRule::new(DecisionSnapshot, DecisionOption, one, one),
            ),
            // an option is displayed by exactly one snapshot
            (
                HasOption,
                RelationRule::new(DecisionSnapshot, DecisionOption, None, one),
            ),
            (Explains, RelationRule::new(ForecastExplanation, Forecast, one, None)),
            (FeedbackOnForecast, RelationRule::new(Feedback, Forecast, one, None)),
            (
                FeedbackOnExplanation,
                RelationRule::new(Feedback, ForecastExplanation, one, None),
            ),
            (FeedbackOnOption, RelationRule::new(Feedback, DecisionOption, one, None)),
            (ProducedBy, RelationRule::new(Forecast, AIModel, one, None)),
            (ForMaterial, RelationRule::new(Forecast, Material, one, None)),
            (ForClient, RelationRule::new(Forecast, Client, one, None)),
            (
                ConcernsTransport,
                RelationRule::new(DecisionOption, Transport, one, None),
            ),
        ]);
        Self { relations }
    }

    pub fn with_rule(mut self, relation: Relation, rule: RelationRule) -> Self {
        self.relations.insert(relation, rule);
        self
    }

    pub fn rule(&self, relation: Relation) -> Option<&RelationRule> {
        self.relations.get(&relation)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&Relation, &RelationRule)> {
        self.relations.iter()
    }
}
