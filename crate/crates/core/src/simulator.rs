//! Deterministic tabletop world: rule-based skill effects, degraded
//! outcomes for physically impossible actions, and scripted faults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::literal::{parse_literal, Literal, Predicate};
use crate::scene::{ObjectClass, SceneDiff, SceneEdit, SceneError, SceneGraph, SceneObject};
use crate::skill::{EffectRule, GroundSkill, SkillCatalog, SkillTemplate};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
}

fn field_err(field: impl Into<String>, reason: impl fmt::Display) -> ScenarioError {
    ScenarioError::Field {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    PreDetectable,
    RuntimeOnly,
    Nominal,
}

/// When a fault fires. Skill activations and executions are counted from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trigger {
    PreExecution,
    AtTick(u64),
    AfterPrecheck(u64),
    AfterExecution(u64),
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::PreExecution => f.write_str("pre-execution"),
            Trigger::AtTick(t) => write!(f, "at-tick:{t}"),
            Trigger::AfterPrecheck(k) => write!(f, "after-precheck:{k}"),
            Trigger::AfterExecution(k) => write!(f, "after-execution:{k}"),
        }
    }
}

impl FromStr for Trigger {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "pre-execution" {
            return Ok(Trigger::PreExecution);
        }
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| format!("unknown trigger `{s}`"))?;
        let n: u64 = n.trim().parse().map_err(|_| format!("bad count in `{s}`"))?;
        if n == 0 {
            return Err(format!("counts start at 1 in `{s}`"));
        }
        match kind {
            "at-tick" => Ok(Trigger::AtTick(n)),
            "after-precheck" => Ok(Trigger::AfterPrecheck(n)),
            "after-execution" => Ok(Trigger::AfterExecution(n)),
            _ => Err(format!("unknown trigger `{s}`")),
        }
    }
}

impl Serialize for Trigger {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Trigger {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

/// A signed literal pattern over a skill's parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectPattern {
    pub add: bool,
    pub literal: Literal,
}

impl EffectPattern {
    fn parse(text: &str) -> Result<EffectPattern, String> {
        let text = text.trim();
        let (add, rest) = match text.as_bytes().first() {
            Some(b'+') => (true, &text[1..]),
            Some(b'-') => (false, &text[1..]),
            _ => return Err(format!("`{text}` must start with + or -")),
        };
        let literal = parse_literal(rest).map_err(|e| e.to_string())?;
        Ok(EffectPattern { add, literal })
    }
}

impl fmt::Display for EffectPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.add { "+" } else { "-" }, self.literal)
    }
}

/// Replaces the effects of the next execution of `skill`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeOverride {
    pub skill: String,
    pub effects: Vec<EffectPattern>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub trigger: Trigger,
    pub edits: Vec<SceneEdit>,
    pub overrides: Option<OutcomeOverride>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Expectation {
    /// Skills whose identification counts as correct.
    pub culprit_skills: Vec<String>,
    /// Latent skill the correction is expected to add.
    pub skill_addition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub task: String,
    pub description: String,
    pub objects: Vec<SceneObject>,
    pub relations: Vec<Literal>,
    pub goals: Vec<Literal>,
    pub active: Vec<String>,
    pub latent: Vec<String>,
    pub faults: Vec<FaultEvent>,
    pub tags: Vec<Tag>,
    pub expect: Expectation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    task: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    tags: Vec<Tag>,
    objects: Vec<RawObject>,
    #[serde(default)]
    relations: Vec<String>,
    goals: Vec<String>,
    #[serde(default)]
    catalog: RawCatalog,
    #[serde(default)]
    faults: Vec<RawFault>,
    #[serde(default)]
    expect: Expectation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: String,
    class: ObjectClass,
    #[serde(default)]
    color: String,
    pickable: Option<bool>,
    container: Option<bool>,
    reachable: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    active: Vec<String>,
    #[serde(default)]
    latent: Vec<String>,
}

impl Default for RawCatalog {
    fn default() -> Self {
        let c = SkillCatalog::builtin();
        RawCatalog {
            active: c.active.iter().map(|t| t.name.clone()).collect(),
            latent: c.latent.iter().map(|t| t.name.clone()).collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    trigger: String,
    #[serde(default)]
    note: String,
    #[serde(default)]
    edits: Vec<String>,
    #[serde(default)]
    add_objects: Vec<RawObject>,
    #[serde(default)]
    remove_objects: Vec<String>,
    #[serde(rename = "override")]
    outcome_override: Option<RawOverride>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    skill: String,
    #[serde(default)]
    effects: Vec<String>,
    #[serde(default = "default_outcome")]
    outcome: Outcome,
}

fn default_outcome() -> Outcome {
    Outcome::Success
}

impl RawObject {
    fn build(self) -> SceneObject {
        let mut o = SceneObject::new(self.id, self.class, self.color);
        if let Some(v) = self.pickable {
            o.pickable = v;
        }
        if let Some(v) = self.container {
            o.container = v;
        }
        if let Some(v) = self.reachable {
            o.reachable = v;
        }
        o
    }
}

fn parse_lits(items: &[String], field: &str) -> Result<Vec<Literal>, ScenarioError> {
    items
        .iter()
        .enumerate()
        .map(|(i, t)| parse_literal(t).map_err(|e| field_err(format!("{field}[{i}]"), format!("`{t}`: {e}"))))
        .collect()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::parse(&text)
    }

    /// Parse and validate a scenario document.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        let objects: Vec<SceneObject> = raw.objects.into_iter().map(RawObject::build).collect();
        let relations = parse_lits(&raw.relations, "relations")?;
        let goals = parse_lits(&raw.goals, "goals")?;
        if goals.is_empty() {
            return Err(field_err("goals", "at least one goal is required"));
        }
        if let Some((i, g)) = goals.iter().enumerate().find(|(_, g)| !g.is_ground()) {
            return Err(field_err(format!("goals[{i}]"), format!("`{g}` is not ground")));
        }
        let catalog = SkillCatalog::select(&raw.catalog.active, &raw.catalog.latent)
            .map_err(|e| field_err("catalog", e))?;
        let scene = SceneGraph::from_parts(objects.clone(), relations.clone())
            .map_err(|e| field_err("relations", e))?;
        for (i, g) in goals.iter().enumerate() {
            scene
                .evaluate(g)
                .map_err(|e| field_err(format!("goals[{i}]"), e))?;
        }

        let mut faults = Vec::new();
        for (i, f) in raw.faults.into_iter().enumerate() {
            let at = |sub: &str| format!("faults[{i}].{sub}");
            let trigger: Trigger = f.trigger.parse().map_err(|e| field_err(at("trigger"), e))?;
            let mut edits: Vec<SceneEdit> = f
                .add_objects
                .into_iter()
                .map(|o| SceneEdit::AddObject { object: o.build() })
                .collect();
            for (j, e) in f.edits.iter().enumerate() {
                edits.push(e.parse().map_err(|err: SceneError| field_err(at(&format!("edits[{j}]")), format!("`{e}`: {err}")))?);
            }
            edits.extend(f.remove_objects.into_iter().map(|id| SceneEdit::RemoveObject { id }));
            let overrides = match f.outcome_override {
                None => None,
                Some(o) => {
                    let template = catalog
                        .active_template(&o.skill)
                        .or_else(|| catalog.latent_template(&o.skill))
                        .ok_or_else(|| field_err(at("override.skill"), format!("unknown skill `{}`", o.skill)))?;
                    let mut effects = Vec::new();
                    for (j, e) in o.effects.iter().enumerate() {
                        let p = EffectPattern::parse(e).map_err(|err| field_err(at(&format!("override.effects[{j}]")), err))?;
                        if let Some(v) = p.literal.variables().find(|v| template.param(v).is_none()) {
                            return Err(field_err(
                                at(&format!("override.effects[{j}]")),
                                format!("`{v}` is not a parameter of {}", o.skill),
                            ));
                        }
                        effects.push(p);
                    }
                    Some(OutcomeOverride {
                        skill: o.skill,
                        effects,
                        outcome: o.outcome,
                    })
                }
            };
            faults.push(FaultEvent {
                trigger,
                edits,
                overrides,
                note: f.note,
            });
        }

        Ok(Scenario {
            name: raw.name,
            task: raw.task,
            description: raw.description,
            objects,
            relations,
            goals,
            active: raw.catalog.active,
            latent: raw.catalog.latent,
            faults,
            tags: raw.tags,
            expect: raw.expect,
        })
    }

    pub fn initial_scene(&self) -> SceneGraph {
        SceneGraph::from_parts(self.objects.clone(), self.relations.clone()).expect("validated on load")
    }

    pub fn catalog(&self) -> SkillCatalog {
        SkillCatalog::select(&self.active, &self.latent).expect("validated on load")
    }

    pub fn has_tag(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }
}

/// What a fired fault did to the world.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub index: usize,
    pub trigger: Trigger,
    pub note: String,
    pub diff: SceneDiff,
    /// Set when the scripted edits did not fit the scene at firing time.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub outcome: Outcome,
    pub edits: Vec<SceneEdit>,
    pub diff: SceneDiff,
    pub overridden: bool,
    /// Why the nominal effect was replaced, if it was.
    pub degraded: Option<String>,
}

/// The true world: scene, fault schedule and execution counter.
#[derive(Debug, Clone)]
pub struct World {
    pub scene: SceneGraph,
    faults: Vec<(FaultEvent, bool)>,
    armed: Vec<OutcomeOverride>,
    pub executions: u64,
}

impl World {
    pub fn new(scene: SceneGraph, faults: Vec<FaultEvent>) -> World {
        World {
            scene,
            faults: faults.into_iter().map(|f| (f, false)).collect(),
            armed: Vec::new(),
            executions: 0,
        }
    }

    pub fn from_scenario(s: &Scenario) -> World {
        World::new(s.initial_scene(), s.faults.clone())
    }

    pub fn unfired(&self) -> usize {
        self.faults.iter().filter(|(_, fired)| !fired).count()
    }

    /// Fire every unfired event whose trigger equals `at`, in declaration
    /// order.
    pub fn fire_faults(&mut self, at: Trigger) -> Vec<FaultRecord> {
        let mut out = Vec::new();
        for i in 0..self.faults.len() {
            let (event, fired) = &mut self.faults[i];
            if *fired || event.trigger != at {
                continue;
            }
            *fired = true;
            let event = event.clone();
            let before = self.scene.clone();
            let error = self.scene.apply_all(&event.edits).err().map(|e| e.to_string());
            if let Some(o) = &event.overrides {
                self.armed.push(o.clone());
            }
            out.push(FaultRecord {
                index: i,
                trigger: at,
                note: event.note.clone(),
                diff: before.diff(&self.scene),
                error,
            });
        }
        out
    }

    /// Execute a ground skill. Never fails: impossible actions degrade to a
    /// physically consistent outcome.
    pub fn execute(&mut self, skill: &GroundSkill) -> Execution {
        self.executions += 1;
        let before = self.scene.clone();
        let (outcome, edits, overridden, degraded) =
            if let Some(pos) = self.armed.iter().position(|o| o.skill == skill.name) {
                let o = self.armed.remove(pos);
                let edits = o
                    .effects
                    .iter()
                    .filter_map(|p| {
                        let sign = if p.add { "+" } else { "-" };
                        format!("{sign}{}", p.literal.substitute(&skill.binding)).parse().ok()
                    })
                    .collect();
                (o.outcome, edits, true, Some("scripted outcome".to_string()))
            } else {
                match effect_rule(&skill.name) {
                    Some(rule) => match physical_effect(rule, skill, &self.scene) {
                        Ok(edits) => (Outcome::Success, edits, false, None),
                        Err(Degraded { outcome, edits, reason }) => (outcome, edits, false, Some(reason)),
                    },
                    None => (Outcome::Failure, Vec::new(), false, Some("no effect rule".into())),
                }
            };
        // Edits are applied one by one so a stale scripted edit cannot
        // block the rest.
        let mut applied = Vec::new();
        for e in edits {
            if self.scene.apply(&e).is_ok() {
                applied.push(e);
            }
        }
        Execution {
            outcome,
            diff: before.diff(&self.scene),
            edits: applied,
            overridden,
            degraded,
        }
    }
}

fn effect_rule(name: &str) -> Option<EffectRule> {
    SkillTemplate::library().into_iter().find(|t| t.name == name).map(|t| t.effect)
}

struct Degraded {
    outcome: Outcome,
    edits: Vec<SceneEdit>,
    reason: String,
}

fn fail(reason: impl Into<String>) -> Degraded {
    Degraded {
        outcome: Outcome::Failure,
        edits: Vec::new(),
        reason: reason.into(),
    }
}

fn arg(skill: &GroundSkill, i: usize) -> &str {
    skill.args.get(i).map(String::as_str).unwrap_or_default()
}

fn clear_support(g: &SceneGraph, x: &str) -> Vec<SceneEdit> {
    g.relations
        .iter()
        .filter(|r| r.arg(0) == Some(x) && (r.predicate.is_support() || r.predicate == Predicate::At))
        .map(|r| SceneEdit::remove(r.clone()))
        .collect()
}

/// Effect of `skill` under the physics rules. `Err` carries the degraded
/// outcome when the nominal effect is impossible.
fn physical_effect(rule: EffectRule, skill: &GroundSkill, g: &SceneGraph) -> Result<Vec<SceneEdit>, Degraded> {
    let obj = |id: &str| g.object(id).cloned();
    let x = arg(skill, 0);
    let y = arg(skill, 1);
    let hand_empty = g.held_object().is_none();
    let held_x = g.held_object() == Some(x);
    match rule {
        EffectRule::Grasp => {
            let o = obj(x).ok_or_else(|| fail(format!("{x} is gone")))?;
            if !hand_empty {
                return Err(fail("gripper is occupied"));
            }
            if !o.pickable {
                return Err(fail(format!("{x} is not pickable")));
            }
            if !o.reachable {
                return Err(fail(format!("{x} is out of reach")));
            }
            let mut edits: Vec<SceneEdit> = g
                .relations
                .iter()
                .filter(|r| r.arg(0) == Some(x) && r.predicate == Predicate::At)
                .map(|r| SceneEdit::remove(r.clone()))
                .collect();
            edits.push(SceneEdit::add(Literal::fact(Predicate::Held, &[x])));
            Ok(edits)
        }
        EffectRule::PlaceOn | EffectRule::PlaceInside => {
            if !held_x {
                return Err(fail(format!("{x} is not held")));
            }
            let target = obj(y).ok_or_else(|| fail(format!("{y} is gone")))?;
            if !target.reachable {
                return Err(fail(format!("{y} is out of reach")));
            }
            if rule == EffectRule::PlaceOn {
                return Ok(vec![SceneEdit::add(Literal::fact(Predicate::On, &[x, y]))]);
            }
            if !target.container || !g.occupants(y).is_empty() {
                return Err(Degraded {
                    outcome: Outcome::Success,
                    edits: vec![SceneEdit::add(Literal::fact(Predicate::On, &[x, y]))],
                    reason: format!("{y} cannot take {x}; it lands on top"),
                });
            }
            Ok(vec![SceneEdit::add(Literal::fact(Predicate::Inside, &[x, y]))])
        }
        EffectRule::OpenDrawer | EffectRule::CloseDrawer => {
            let d = obj(x).ok_or_else(|| fail(format!("{x} is gone")))?;
            if !hand_empty {
                return Err(fail("gripper is occupied"));
            }
            if !d.reachable {
                return Err(fail(format!("{x} is out of reach")));
            }
            Ok(vec![SceneEdit::SetAttribute {
                object: x.to_string(),
                attribute: Predicate::Container,
                value: rule == EffectRule::OpenDrawer,
            }])
        }
        EffectRule::Push => {
            let o = obj(x).ok_or_else(|| fail(format!("{x} is gone")))?;
            if !hand_empty {
                return Err(fail("gripper is occupied"));
            }
            if !o.reachable {
                return Err(fail(format!("{x} is out of reach")));
            }
            let mut edits = clear_support(g, x);
            edits.push(SceneEdit::add(Literal::fact(Predicate::At, &[x, y])));
            Ok(edits)
        }
    }
}

/// Nominal effect edits of `skill` in `g`, ignoring physics. Used by the
/// belief model, which assumes every executed skill succeeded.
pub fn nominal_edits(skill: &GroundSkill, g: &SceneGraph) -> Vec<SceneEdit> {
    let x = arg(skill, 0);
    let y = arg(skill, 1);
    match effect_rule(&skill.name) {
        Some(EffectRule::Grasp) => {
            let mut e: Vec<SceneEdit> = g
                .relations
                .iter()
                .filter(|r| r.arg(0) == Some(x) && r.predicate == Predicate::At)
                .map(|r| SceneEdit::remove(r.clone()))
                .collect();
            e.push(SceneEdit::add(Literal::fact(Predicate::Held, &[x])));
            e
        }
        Some(EffectRule::PlaceOn) => vec![SceneEdit::add(Literal::fact(Predicate::On, &[x, y]))],
        Some(EffectRule::PlaceInside) => vec![SceneEdit::add(Literal::fact(Predicate::Inside, &[x, y]))],
        Some(r @ (EffectRule::OpenDrawer | EffectRule::CloseDrawer)) => vec![SceneEdit::SetAttribute {
            object: x.to_string(),
            attribute: Predicate::Container,
            value: r == EffectRule::OpenDrawer,
        }],
        Some(EffectRule::Push) => {
            let mut e = clear_support(g, x);
            e.push(SceneEdit::add(Literal::fact(Predicate::At, &[x, y])));
            e
        }
        None => Vec::new(),
    }
}

/// Apply edits one at a time, skipping any that no longer fit.
pub fn apply_lenient(g: &mut SceneGraph, edits: &[SceneEdit]) {
    for e in edits {
        let _ = g.apply(e);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "peg_sample"
task = "peg-in-hole"
tags = ["pre-detectable"]
goals = ["inside(blue_peg, green_hole)"]
relations = ["on(blue_peg, table)", "on(black_cube, green_hole)"]

[[objects]]
id = "blue_peg"
class = "peg"
color = "blue"

[[objects]]
id = "black_cube"
class = "cube"
color = "black"

[[objects]]
id = "green_hole"
class = "hole"
color = "green"

[[objects]]
id = "table"
class = "zone"

[catalog]
active = ["grasp", "place_on", "place_inside"]
latent = ["push"]

[[faults]]
trigger = "after-precheck:1"
edits = ["+held(black_cube)"]

[[faults]]
trigger = "pre-execution"
override = { skill = "place_inside", effects = ["+on(X, Y)"] }

[expect]
culprit_skills = ["place_inside"]
"#;

    fn lit(s: &str) -> Literal {
        parse_literal(s).unwrap()
    }

    fn ground(name: &str, args: &[&str], g: &SceneGraph) -> GroundSkill {
        let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        SkillCatalog::builtin().instantiate_args(name, &args, g).unwrap()
    }

    #[test]
    fn loads_scenario() {
        let s = Scenario::parse(SAMPLE).unwrap();
        assert_eq!(s.goals, [lit("inside(blue_peg, green_hole)")]);
        assert!(s.has_tag(Tag::PreDetectable));
        assert_eq!(s.faults[0].trigger, Trigger::AfterPrecheck(1));
        assert_eq!(s.faults[1].overrides.as_ref().unwrap().effects[0].to_string(), "+on(X, Y)");
        let g = s.initial_scene();
        assert_eq!(g.evaluate(&lit("occupied(green_hole)")), Ok(true));
    }

    #[test]
    fn load_errors_name_the_field() {
        let bad_rel = SAMPLE.replace("on(black_cube, green_hole)", "onn(black_cube, green_hole)");
        let e = Scenario::parse(&bad_rel).unwrap_err().to_string();
        assert!(e.contains("relations[1]") && e.contains("onn"), "{e}");

        let bad_skill = SAMPLE.replace("latent = [\"push\"]", "latent = [\"fly\"]");
        assert!(Scenario::parse(&bad_skill).unwrap_err().to_string().contains("catalog"));

        let bad_trigger = SAMPLE.replace("after-precheck:1", "sometime");
        assert!(Scenario::parse(&bad_trigger).unwrap_err().to_string().contains("faults[0].trigger"));

        let bad_var = SAMPLE.replace("+on(X, Y)", "+on(X, Q)");
        assert!(Scenario::parse(&bad_var).unwrap_err().to_string().contains("override.effects[0]"));

        let bad_toml = SAMPLE.replace("name = \"peg_sample\"", "name = ");
        assert!(matches!(Scenario::parse(&bad_toml), Err(ScenarioError::Syntax(_))));
    }

    #[test]
    fn nominal_place_inside() {
        let s = Scenario::parse(SAMPLE).unwrap();
        let mut g = s.initial_scene();
        g.apply(&"-on(black_cube, green_hole)".parse().unwrap()).unwrap();
        g.apply(&"+held(blue_peg)".parse().unwrap()).unwrap();
        let mut w = World::new(g.clone(), Vec::new());
        let ex = w.execute(&ground("place_inside", &["blue_peg", "green_hole"], &g));
        assert_eq!(ex.outcome, Outcome::Success);
        assert!(ex.degraded.is_none());
        assert_eq!(w.scene.evaluate(&lit("inside(blue_peg, green_hole)")), Ok(true));
        assert_eq!(w.scene.evaluate(&lit("hand_empty")), Ok(true));
    }

    #[test]
    fn occupied_hole_degrades_to_on_top() {
        let s = Scenario::parse(SAMPLE).unwrap();
        let mut g = s.initial_scene();
        g.apply(&"+held(blue_peg)".parse().unwrap()).unwrap();
        let mut w = World::new(g.clone(), Vec::new());
        let ex = w.execute(&ground("place_inside", &["blue_peg", "green_hole"], &g));
        assert!(ex.degraded.is_some());
        assert_eq!(w.scene.evaluate(&lit("on(blue_peg, green_hole)")), Ok(true));
    }

    #[test]
    fn armed_override_fires_once() {
        let s = Scenario::parse(SAMPLE).unwrap();
        let mut g = s.initial_scene();
        g.apply(&"-on(black_cube, green_hole)".parse().unwrap()).unwrap();
        g.apply(&"+held(blue_peg)".parse().unwrap()).unwrap();
        let mut w = World::new(g.clone(), s.faults.clone());
        assert_eq!(w.fire_faults(Trigger::PreExecution).len(), 1);
        assert!(w.fire_faults(Trigger::PreExecution).is_empty());
        let skill = ground("place_inside", &["blue_peg", "green_hole"], &g);
        let ex = w.execute(&skill);
        assert!(ex.overridden);
        assert_eq!(w.scene.evaluate(&lit("on(blue_peg, green_hole)")), Ok(true));
        // The override is spent; redoing the placement works nominally.
        w.scene.apply(&"+held(blue_peg)".parse().unwrap()).unwrap();
        assert!(!w.execute(&skill).overridden);
        assert_eq!(w.scene.evaluate(&lit("inside(blue_peg, green_hole)")), Ok(true));
    }

    #[test]
    fn nonpickable_grasp_fails_without_change() {
        let s = Scenario::parse(SAMPLE).unwrap();
        let mut g = s.initial_scene();
        g.apply(&"-pickable(black_cube)".parse().unwrap()).unwrap();
        let skill = ground("grasp", &["black_cube"], &g);
        let mut w = World::new(g.clone(), Vec::new());
        let ex = w.execute(&skill);
        assert_eq!(ex.outcome, Outcome::Failure);
        assert!(ex.diff.is_empty());
        assert!(w.scene.same_content(&g));
    }

    #[test]
    fn fault_fires_at_trigger_and_orders_events() {
        let s = Scenario::parse(SAMPLE).unwrap();
        let mut w = World::from_scenario(&s);
        assert!(w.fire_faults(Trigger::AtTick(3)).is_empty());
        let rec = w.fire_faults(Trigger::AfterPrecheck(1));
        assert_eq!(rec.len(), 1);
        assert!(rec[0].diff.added.contains(&lit("held(black_cube)")));

        let two = vec![
            FaultEvent {
                trigger: Trigger::AtTick(1),
                edits: vec!["+held(blue_peg)".parse().unwrap()],
                overrides: None,
                note: String::new(),
            },
            FaultEvent {
                trigger: Trigger::AtTick(1),
                edits: vec!["+on(blue_peg, table)".parse().unwrap()],
                overrides: None,
                note: String::new(),
            },
        ];
        let mut w = World::new(s.initial_scene(), two);
        let rec = w.fire_faults(Trigger::AtTick(1));
        assert_eq!(rec.iter().map(|r| r.index).collect::<Vec<_>>(), [0, 1]);
        assert!(rec[0].diff.added.contains(&lit("held(blue_peg)")));
        assert!(rec[1].diff.added.contains(&lit("on(blue_peg, table)")));
        assert_eq!(w.scene.evaluate(&lit("hand_empty")), Ok(true));
        assert_eq!(w.unfired(), 0);
    }

    #[test]
    fn trigger_text_roundtrip() {
        for t in ["pre-execution", "at-tick:4", "after-precheck:1", "after-execution:2"] {
            assert_eq!(t.parse::<Trigger>().unwrap().to_string(), t);
        }
        assert!("after-execution:0".parse::<Trigger>().is_err());
    }
}
