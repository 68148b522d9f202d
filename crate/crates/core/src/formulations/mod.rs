//! Prompt instances for the four task formulations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{AnnotationError, MarkerStyle};
use crate::graph::{EventId, GraphError, RelationLabel};

mod generate;
pub(crate) mod render;
mod template;

pub use generate::{
    generate_cot_rationale, generate_for, generate_mrc, generate_nli, generate_pairwise,
    generate_timeline, select_demonstrations,
};
pub use render::{
    approx_tokens, build_instances, render_prompt, render_template, Budget, GenerationConfig,
    LengthFn, DEFAULT_BUDGET,
};
pub use template::{NliAnswers, PromptTemplate, TemplateMeta, TemplateSet, KNOWN_SLOTS};

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("document {doc} has {n} events; at least {min} required")]
    TooFewEvents { doc: String, n: usize, min: usize },
    #[error("{needed} demonstrations requested but only {available} development documents are available")]
    InsufficientDevDocs { needed: usize, available: usize },
    #[error("prompt length {length} exceeds budget {budget}")]
    BudgetExceeded { length: usize, budget: usize },
    #[error("template slot `{{{0}}}` has no value")]
    MissingSlot(String),
    #[error("template {template} is a {template_formulation} template but the instance is {instance_formulation}")]
    FormulationMismatch {
        template: String,
        template_formulation: Formulation,
        instance_formulation: Formulation,
    },
    #[error("template error: {0}")]
    Template(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Nli,
    Pairwise,
    Mrc,
    Timeline,
}

impl Formulation {
    pub const ALL: [Formulation; 4] = [
        Formulation::Nli,
        Formulation::Pairwise,
        Formulation::Mrc,
        Formulation::Timeline,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Formulation::Nli => "nli",
            Formulation::Pairwise => "pairwise",
            Formulation::Mrc => "mrc",
            Formulation::Timeline => "timeline",
        }
    }

    /// Number of instances generated for a document with `n` events.
    pub fn instance_count(&self, n: usize) -> usize {
        let pairs = n * n.saturating_sub(1);
        match self {
            Formulation::Nli => pairs * 3,
            Formulation::Pairwise => pairs,
            Formulation::Mrc => 3 * n,
            Formulation::Timeline => 1,
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nli" => Ok(Formulation::Nli),
            "pairwise" => Ok(Formulation::Pairwise),
            "mrc" => Ok(Formulation::Mrc),
            "timeline" => Ok(Formulation::Timeline),
            other => Err(format!("unknown formulation `{other}`")),
        }
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    #[default]
    Plain,
    Cot,
    Code,
}

impl Flavor {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flavor::Plain => "plain",
            Flavor::Cot => "cot",
            Flavor::Code => "code",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Flavor::Plain),
            "cot" => Ok(Flavor::Cot),
            "code" => Ok(Flavor::Code),
            other => Err(format!("unknown flavor `{other}`")),
        }
    }
}

/// What an instance asks about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryPayload {
    /// NLI statement "y `relation` x".
    Statement {
        x: EventId,
        y: EventId,
        relation: RelationLabel,
    },
    /// Relation of `x` to `y`.
    Pair {
        x: EventId,
        y: EventId,
    },
    /// Events standing in `relation` to the anchor.
    Anchor {
        event: EventId,
        relation: RelationLabel,
    },
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GoldPayload {
    Binary(bool),
    Relation(RelationLabel),
    Events(Vec<EventId>),
    Layers(Vec<Vec<EventId>>),
}

impl GoldPayload {
    pub fn matches(&self, formulation: Formulation) -> bool {
        matches!(
            (self, formulation),
            (GoldPayload::Binary(_), Formulation::Nli)
                | (GoldPayload::Relation(_), Formulation::Pairwise)
                | (GoldPayload::Events(_), Formulation::Mrc)
                | (GoldPayload::Layers(_), Formulation::Timeline)
        )
    }
}

/// An event as marked in one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedEvent {
    pub label: usize,
    pub id: EventId,
    pub mention: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub instance_id: String,
    pub doc_id: String,
    pub formulation: Formulation,
    pub template_id: String,
    pub flavor: Flavor,
    pub representation: MarkerStyle,
    pub n_demos: usize,
    pub demo_doc_ids: Vec<String>,
    pub query: QueryPayload,
    pub prompt: String,
    pub gold: GoldPayload,
    /// Expected continuation of the prompt in the template's answer format.
    pub gold_text: String,
    pub marked: Vec<MarkedEvent>,
    pub seed: u64,
    /// Slot values; kept only in memory for demonstration rendering.
    #[serde(skip)]
    pub slots: BTreeMap<String, String>,
}

impl PromptInstance {
    /// Event id behind a marker label.
    pub fn event_for_label(&self, label: usize) -> Option<&EventId> {
        self.marked.iter().find(|m| m.label == label).map(|m| &m.id)
    }
}

/// Stable sub-seed from a run seed and string parts.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
