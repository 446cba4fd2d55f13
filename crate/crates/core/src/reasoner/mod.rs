//! Reasoning contract shared by all five checks.

pub mod oracle;
pub mod vlm;

use thiserror::Error;

use crate::bt::BehaviorTree;
use crate::history::ExecutionHistory;
use crate::literal::Literal;
use crate::scene::SceneGraph;
use crate::skill::{GroundSkill, SkillCatalog};
use crate::verdict::{CheckKind, Verdict};

pub use oracle::OracleReasoner;
pub use vlm::VlmReasoner;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReasonerError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("query budget exceeded: {0}")]
    BudgetExceeded(String),
}

/// A skill that just ran, with the scene on both sides of it.
#[derive(Debug, Clone)]
pub struct ExecutedSkill {
    pub skill: GroundSkill,
    pub before: SceneGraph,
    pub after: SceneGraph,
}

/// Everything a reasoner sees for one check. Text fields come from the
/// canonical serializers; the structured fields carry the same content
/// for reasoners that work symbolically.
#[derive(Debug, Clone)]
pub struct ReasonerInput {
    pub kind: CheckKind,
    pub tree_text: String,
    pub scene_text: String,
    pub skills_text: String,
    pub goals: Vec<Literal>,
    pub history_text: String,
    pub pending: Option<GroundSkill>,
    pub executed: Option<ExecutedSkill>,
    /// Condition the planner could not find an achiever for.
    pub unachievable: Option<Literal>,
    pub tree: BehaviorTree,
    pub scene: SceneGraph,
    pub catalog: SkillCatalog,
}

impl ReasonerInput {
    pub fn new(
        kind: CheckKind,
        tree: &BehaviorTree,
        scene: &SceneGraph,
        catalog: &SkillCatalog,
        goals: &[Literal],
        history: &ExecutionHistory,
        window: usize,
    ) -> ReasonerInput {
        ReasonerInput {
            kind,
            tree_text: tree.render(),
            scene_text: scene.serialize(),
            skills_text: catalog.listing(),
            goals: goals.to_vec(),
            history_text: history.excerpt(window),
            pending: None,
            executed: None,
            unachievable: None,
            tree: tree.clone(),
            scene: scene.clone(),
            catalog: catalog.clone(),
        }
    }

    pub fn with_pending(mut self, skill: &GroundSkill) -> Self {
        self.pending = Some(skill.clone());
        self
    }

    pub fn with_executed(mut self, executed: ExecutedSkill) -> Self {
        self.executed = Some(executed);
        self
    }

    pub fn with_unachievable(mut self, lit: &Literal) -> Self {
        self.unachievable = Some(lit.clone());
        self
    }
}

pub trait Reasoner {
    fn judge(&mut self, input: &ReasonerInput) -> Result<Verdict, ReasonerError>;
}

impl<R: Reasoner + ?Sized> Reasoner for Box<R> {
    fn judge(&mut self, input: &ReasonerInput) -> Result<Verdict, ReasonerError> {
        (**self).judge(input)
    }
}
