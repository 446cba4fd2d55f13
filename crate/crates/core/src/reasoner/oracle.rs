//! Ground-truth reasoner. It reads the scene it is given (the true world
//! at the time of the check) and applies fixed physical rules. It never
//! sees the fault schedule.

use std::collections::BTreeSet;

use crate::bt::{Status, TickContext};
use crate::literal::{Literal, Predicate};
use crate::planner::{Planner, PlannerConfig, ReplanEvent};
use crate::scene::{ground_derived_negation, SceneGraph};
use crate::simulator::{apply_lenient, nominal_edits};
use crate::skill::{EffectRule, GroundSkill, SkillCatalog, SkillTemplate, SuggestedSkillSpec};
use crate::verdict::{CheckKind, Correction, Culprit, Identification, Verdict};

use super::{Reasoner, ReasonerError, ReasonerInput};

#[derive(Debug, Clone)]
pub struct OracleReasoner {
    /// Tick bound for the symbolic dry run of the pre-execution check.
    pub max_sim_ticks: usize,
}

impl Default for OracleReasoner {
    fn default() -> Self {
        OracleReasoner { max_sim_ticks: 100 }
    }
}

/// A predicted failure of a pending skill and what would prevent it.
#[derive(Debug, Clone)]
enum Prediction {
    /// A missing precondition would let the planner clear the way.
    NeedsGuard {
        skill: String,
        guard: Literal,
        cause: String,
    },
    /// Only a latent skill can achieve a required condition.
    NeedsSkill {
        skill: String,
        latent: SkillTemplate,
        cause: String,
    },
    /// Nothing in the catalog can help.
    Hopeless {
        skill: String,
        literal: Literal,
        cause: String,
    },
}

fn effect_of(skill: &GroundSkill, catalog: &SkillCatalog) -> Option<EffectRule> {
    catalog.active_template(&skill.name).map(|t| t.effect)
}

fn has_guard(skill: &GroundSkill, catalog: &SkillCatalog, guard: &Literal) -> bool {
    skill.preconditions.contains(guard)
        || catalog
            .overrides_for(&skill.name)
            .iter()
            .any(|o| &o.substitute(&skill.binding) == guard)
}

/// Would `skill` fail physically in `g` in a way its preconditions do not
/// capture?
fn predict(skill: &GroundSkill, g: &SceneGraph, catalog: &SkillCatalog) -> Option<Prediction> {
    if effect_of(skill, catalog)? != EffectRule::PlaceInside {
        return None;
    }
    let x = skill.args.first()?;
    let y = skill.args.get(1)?;
    let occupants = g.occupants(y);
    if occupants.is_empty() {
        return None;
    }
    let guard = Literal::fact(Predicate::Occupied, &[y]).negate();
    if has_guard(skill, catalog, &guard) {
        return None;
    }
    let names: Vec<&str> = occupants.iter().map(|(o, _)| o.as_str()).collect();
    for part in ground_derived_negation(&guard, g).unwrap_or_default() {
        if catalog.achievers(&part, g).is_empty() {
            let occupant = part.arg(0).unwrap_or_default().to_string();
            return Some(match catalog.latent_achievers(&part, g).into_iter().next() {
                Some((name, _)) => Prediction::NeedsSkill {
                    skill: skill.name.clone(),
                    latent: catalog.latent_template(&name).expect("listed").clone(),
                    cause: format!(
                        "{occupant} blocks {y} and no available skill can move it; {name} can achieve {part}"
                    ),
                },
                None => Prediction::Hopeless {
                    skill: skill.name.clone(),
                    literal: part.clone(),
                    cause: format!("{occupant} blocks {y} and nothing can achieve {part}"),
                },
            });
        }
    }
    Some(Prediction::NeedsGuard {
        skill: skill.name.clone(),
        guard,
        cause: format!(
            "{} occupies {y}; {} would not fit {x} into it and the plan never checks that {y} is free",
            names.join(" and "),
            skill
        ),
    })
}

fn unachievable_prediction(lit: &Literal, skill: &str, g: &SceneGraph, catalog: &SkillCatalog) -> Prediction {
    match catalog.latent_achievers(lit, g).into_iter().next() {
        Some((name, _)) => Prediction::NeedsSkill {
            skill: skill.to_string(),
            latent: catalog.latent_template(&name).expect("listed").clone(),
            cause: format!("no available skill achieves {lit}; {name} can"),
        },
        None => Prediction::Hopeless {
            skill: skill.to_string(),
            literal: lit.clone(),
            cause: format!("no skill, available or not, achieves {lit}"),
        },
    }
}

/// A name no catalog provides, so admission fails and the run reports an
/// unrecovered failure.
fn missing_capability(lit: &Literal) -> SuggestedSkillSpec {
    SuggestedSkillSpec {
        name: format!("achieve_{}", lit.predicate.name()),
        description: format!("a skill that makes {lit} true"),
        preconditions: Vec::new(),
        postconditions: vec![lit.to_string()],
    }
}

fn to_verdict(kind: CheckKind, p: Prediction) -> Verdict {
    match p {
        Prediction::NeedsGuard { skill, guard, cause } => Verdict::detected(
            kind,
            Identification {
                skill: skill.clone(),
                culprit: Culprit::Literal(guard.clone()),
                cause,
            },
            Correction::AddPrecondition { skill, literal: guard },
        ),
        Prediction::NeedsSkill { skill, latent, cause } => Verdict::detected(
            kind,
            Identification {
                skill,
                culprit: Culprit::Capability(latent.name.clone()),
                cause,
            },
            Correction::AddSkill {
                spec: SuggestedSkillSpec::from_template(&latent),
            },
        ),
        Prediction::Hopeless { skill, literal, cause } => {
            let spec = missing_capability(&literal);
            Verdict::detected(
                kind,
                Identification {
                    skill,
                    culprit: Culprit::Capability(spec.name.clone()),
                    cause,
                },
                Correction::AddSkill { spec },
            )
        }
    }
}

impl OracleReasoner {
    /// Dry-run the tree on the given scene with nominal effects, expanding
    /// it like the runtime loop would, and stop at the first predicted
    /// failure.
    fn pre_execution(&self, input: &ReasonerInput) -> Verdict {
        let kind = CheckKind::PreExecution;
        let mut tree = input.tree.clone();
        let mut g = input.scene.clone();
        let mut planner = Planner::new(PlannerConfig::default());
        let marks = BTreeSet::new();
        for _ in 0..self.max_sim_ticks {
            let mut ctx = TickContext::new(&g, &marks);
            let status = tree.tick(&mut ctx);
            let (failed, pending) = (ctx.failed, ctx.pending);
            match status {
                Status::Success => return Verdict::clear(kind),
                Status::Failure => match planner.replan_step(&mut tree, &failed, &input.catalog, &g) {
                    ReplanEvent::Expanded { .. } => {}
                    ReplanEvent::NoAchiever { node, literal } => {
                        let skill = tree.served_action(node).map_or_else(String::new, |s| s.name.clone());
                        return to_verdict(kind, unachievable_prediction(&literal, &skill, &g, &input.catalog));
                    }
                    ReplanEvent::BudgetExhausted | ReplanEvent::Stuck => return Verdict::clear(kind),
                },
                Status::Running => {
                    let skill = pending.expect("running tick selects an action").skill;
                    if let Some(p) = predict(&skill, &g, &input.catalog) {
                        return to_verdict(kind, p);
                    }
                    let edits = nominal_edits(&skill, &g);
                    apply_lenient(&mut g, &edits);
                }
            }
        }
        Verdict::clear(kind)
    }

    fn precondition_verify(&self, input: &ReasonerInput) -> Verdict {
        let kind = CheckKind::PreconditionVerify;
        let Some(skill) = &input.pending else { return Verdict::clear(kind) };
        let mut conds: Vec<Literal> = skill.preconditions.clone();
        for o in input.catalog.overrides_for(&skill.name) {
            let l = o.substitute(&skill.binding);
            if !conds.contains(&l) {
                conds.push(l);
            }
        }
        let violated: Vec<Literal> = conds
            .into_iter()
            .filter(|c| input.scene.evaluate(c) != Ok(true))
            .collect();
        let Some(first) = violated.first().cloned() else { return Verdict::clear(kind) };
        let cause = match (first.predicate, input.scene.held_object()) {
            (Predicate::HandEmpty, Some(h)) => format!("the gripper already holds {h}"),
            _ => format!("{first} does not hold"),
        };
        Verdict::detected(
            kind,
            Identification {
                skill: skill.name.clone(),
                culprit: Culprit::Literal(first),
                cause,
            },
            Correction::MarkUnsatisfied { literals: violated },
        )
    }

    fn postcondition_verify(&self, input: &ReasonerInput) -> Verdict {
        let kind = CheckKind::PostconditionVerify;
        let Some(ex) = &input.executed else { return Verdict::clear(kind) };
        let Some(first) = ex
            .skill
            .postconditions
            .iter()
            .find(|p| ex.after.evaluate(p) != Ok(true))
        else {
            return Verdict::clear(kind);
        };
        let x = ex.skill.args.first().map(String::as_str).unwrap_or_default();
        let actual: Vec<String> = ex
            .after
            .relations
            .iter()
            .filter(|r| r.arg(0) == Some(x))
            .map(Literal::to_string)
            .collect();
        let cause = if actual.is_empty() {
            format!("{first} is violated after {}", ex.skill)
        } else {
            format!("{first} is violated after {}; observed {}", ex.skill, actual.join(", "))
        };
        Verdict::detected(
            kind,
            Identification {
                skill: ex.skill.name.clone(),
                culprit: Culprit::Literal(first.clone()),
                cause,
            },
            Correction::ReportSkillFailure,
        )
    }

    fn precondition_suggest(&self, input: &ReasonerInput) -> Verdict {
        let kind = CheckKind::PreconditionSuggest;
        match input.pending.as_ref().and_then(|s| predict(s, &input.scene, &input.catalog)) {
            Some(p @ Prediction::NeedsGuard { .. }) => to_verdict(kind, p),
            _ => Verdict::clear(kind),
        }
    }

    fn skill_suggest(&self, input: &ReasonerInput) -> Verdict {
        let kind = CheckKind::SkillSuggest;
        if let Some(lit) = &input.unachievable {
            let skill = input.pending.as_ref().map_or_else(String::new, |s| s.name.clone());
            return to_verdict(kind, unachievable_prediction(lit, &skill, &input.scene, &input.catalog));
        }
        match input.pending.as_ref().and_then(|s| predict(s, &input.scene, &input.catalog)) {
            Some(p @ (Prediction::NeedsSkill { .. } | Prediction::Hopeless { .. })) => to_verdict(kind, p),
            _ => Verdict::clear(kind),
        }
    }
}

impl Reasoner for OracleReasoner {
    fn judge(&mut self, input: &ReasonerInput) -> Result<Verdict, ReasonerError> {
        Ok(match input.kind {
            CheckKind::PreExecution => self.pre_execution(input),
            CheckKind::PreconditionVerify => self.precondition_verify(input),
            CheckKind::PostconditionVerify => self.postcondition_verify(input),
            CheckKind::PreconditionSuggest => self.precondition_suggest(input),
            CheckKind::SkillSuggest => self.skill_suggest(input),
        })
    }
}
