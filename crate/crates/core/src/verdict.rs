//! Three-phase reasoner output: detection, identification, correction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::literal::{parse_literal, Literal};
use crate::skill::SuggestedSkillSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    PreExecution,
    PreconditionVerify,
    PostconditionVerify,
    PreconditionSuggest,
    SkillSuggest,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        CheckKind::PreExecution,
        CheckKind::PreconditionVerify,
        CheckKind::PostconditionVerify,
        CheckKind::PreconditionSuggest,
        CheckKind::SkillSuggest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::PreExecution => "pre-execution",
            CheckKind::PreconditionVerify => "precondition-verify",
            CheckKind::PostconditionVerify => "postcondition-verify",
            CheckKind::PreconditionSuggest => "precondition-suggest",
            CheckKind::SkillSuggest => "skill-suggest",
        }
    }

    pub fn from_name(s: &str) -> Option<CheckKind> {
        CheckKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Correction variants a detected verdict of this kind may carry.
    pub fn allowed_corrections(self) -> &'static [&'static str] {
        match self {
            CheckKind::PreExecution => &["add_precondition", "add_skill"],
            CheckKind::PreconditionVerify => &["mark_unsatisfied"],
            CheckKind::PostconditionVerify => &["report_skill_failure"],
            CheckKind::PreconditionSuggest => &["add_precondition"],
            CheckKind::SkillSuggest => &["add_skill"],
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What went wrong: a condition, or a capability the catalog lacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Culprit {
    Literal(Literal),
    Capability(String),
}

impl Culprit {
    /// `capability:<name>` or literal text.
    pub fn parse(text: &str) -> Result<Culprit, String> {
        let text = text.trim();
        match text.strip_prefix("capability:") {
            Some(name) if !name.trim().is_empty() => Ok(Culprit::Capability(name.trim().to_string())),
            Some(_) => Err("empty capability name".into()),
            None => parse_literal(text).map(Culprit::Literal).map_err(|e| e.to_string()),
        }
    }
}

impl fmt::Display for Culprit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Culprit::Literal(l) => write!(f, "{l}"),
            Culprit::Capability(c) => write!(f, "capability:{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identification {
    pub skill: String,
    pub culprit: Culprit,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Correction {
    AddPrecondition { skill: String, literal: Literal },
    MarkUnsatisfied { literals: Vec<Literal> },
    ReportSkillFailure,
    AddSkill { spec: SuggestedSkillSpec },
}

impl Correction {
    pub fn variant(&self) -> &'static str {
        match self {
            Correction::AddPrecondition { .. } => "add_precondition",
            Correction::MarkUnsatisfied { .. } => "mark_unsatisfied",
            Correction::ReportSkillFailure => "report_skill_failure",
            Correction::AddSkill { .. } => "add_skill",
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Correction::AddPrecondition { skill, literal } => write!(f, "add precondition {literal} to {skill}"),
            Correction::MarkUnsatisfied { literals } => {
                let l: Vec<String> = literals.iter().map(Literal::to_string).collect();
                write!(f, "mark unsatisfied [{}]", l.join(", "))
            }
            Correction::ReportSkillFailure => f.write_str("report skill failure"),
            Correction::AddSkill { spec } => write!(f, "add skill {}", spec.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: CheckKind,
    pub failure_detected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identification: Option<Identification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<Correction>,
}

impl Verdict {
    pub fn clear(kind: CheckKind) -> Verdict {
        Verdict {
            kind,
            failure_detected: false,
            identification: None,
            correction: None,
        }
    }

    pub fn detected(kind: CheckKind, identification: Identification, correction: Correction) -> Verdict {
        Verdict {
            kind,
            failure_detected: true,
            identification: Some(identification),
            correction: Some(correction),
        }
    }

    /// Structural invariants every reasoner reply must satisfy.
    pub fn validate(&self) -> Result<(), String> {
        if !self.failure_detected {
            if self.identification.is_some() || self.correction.is_some() {
                return Err(format!("{}: clear verdict carries identification or correction", self.kind));
            }
            return Ok(());
        }
        if self.identification.is_none() {
            return Err(format!("{}: detected failure without identification", self.kind));
        }
        match &self.correction {
            None if self.kind == CheckKind::PostconditionVerify => Ok(()),
            None => Err(format!("{}: detected failure without correction", self.kind)),
            Some(c) if self.kind.allowed_corrections().contains(&c.variant()) => Ok(()),
            Some(c) => Err(format!("{}: correction `{}` not allowed", self.kind, c.variant())),
        }
    }

    /// One-line summary for logs and history.
    pub fn summary(&self) -> String {
        if !self.failure_detected {
            return format!("{}: ok", self.kind);
        }
        let skill = self.identification.as_ref().map_or("?", |i| i.skill.as_str());
        match &self.correction {
            Some(c) => format!("{}: failure in {skill}, {c}", self.kind),
            None => format!("{}: failure in {skill}", self.kind),
        }
    }
}
