//! Parameterized skills, the active/latent catalog, grounding, achiever
//! lookup and runtime catalog edits (precondition overrides, latent
//! skill admission).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::literal::{parse_literal, unify, Binding, Literal, LiteralError, Predicate, PredicateKind, Term};
use crate::scene::{ObjectClass, SceneGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkillError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("no latent skill named `{0}`: capability absent")]
    CapabilityAbsent(String),
    #[error("skill `{skill}`: parameter `{param}` is unbound")]
    MissingBinding { skill: String, param: String },
    #[error("skill `{skill}`: `{value}` does not fit parameter `{param}`")]
    IllTyped {
        skill: String,
        param: String,
        value: String,
    },
    #[error("skill `{skill}`: variable `{var}` is not a parameter")]
    UnboundVariable { skill: String, var: String },
    #[error("skill `{0}` declares no postconditions")]
    NoPostconditions(String),
    #[error("skill `{0}` is listed twice")]
    Duplicate(String),
    #[error("vocabulary violation in `{text}`: {source}")]
    Vocabulary { text: String, source: LiteralError },
}

/// Simulator effect rule bound to a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectRule {
    Grasp,
    PlaceOn,
    PlaceInside,
    OpenDrawer,
    CloseDrawer,
    Push,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub var: String,
    /// Accepted object classes; empty accepts every class.
    pub classes: Vec<ObjectClass>,
}

impl Param {
    fn new(var: &str, classes: &[ObjectClass]) -> Param {
        Param {
            var: var.to_string(),
            classes: classes.to_vec(),
        }
    }

    fn accepts(&self, class: ObjectClass) -> bool {
        self.classes.is_empty() || self.classes.contains(&class)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SkillTemplate {
    pub name: String,
    pub params: Vec<Param>,
    pub preconditions: Vec<Literal>,
    pub postconditions: Vec<Literal>,
    /// Literals the effect rule makes true without declaring them as
    /// postconditions (e.g. grasping removes the old support). Used only
    /// for achiever matching; may contain wildcards.
    pub side_effects: Vec<Literal>,
    pub effect: EffectRule,
    pub description: String,
}

fn lits(texts: &[&str]) -> Vec<Literal> {
    texts
        .iter()
        .map(|t| parse_literal(t).expect("built-in literal"))
        .collect()
}

const MOVABLE: &[ObjectClass] = &[ObjectClass::Cube, ObjectClass::Peg];
const RECEPTACLE: &[ObjectClass] = &[ObjectClass::Hole, ObjectClass::Bin, ObjectClass::Drawer];

impl SkillTemplate {
    pub fn grasp() -> SkillTemplate {
        SkillTemplate {
            name: "grasp".into(),
            params: vec![Param::new("X", MOVABLE)],
            preconditions: lits(&["hand_empty", "reachable(X)", "pickable(X)"]),
            postconditions: lits(&["held(X)"]),
            side_effects: lits(&["~on(X, _)", "~inside(X, _)", "~at(X, _)"]),
            effect: EffectRule::Grasp,
            description: "Pick up object X with the gripper.".into(),
        }
    }

    pub fn place_on() -> SkillTemplate {
        SkillTemplate {
            name: "place_on".into(),
            params: vec![Param::new("X", MOVABLE), Param::new("Y", &[ObjectClass::Zone])],
            preconditions: lits(&["held(X)", "reachable(Y)"]),
            postconditions: lits(&["on(X, Y)", "~held(X)"]),
            side_effects: vec![],
            effect: EffectRule::PlaceOn,
            description: "Put the held object X down on surface Y.".into(),
        }
    }

    /// Ships without `~occupied(Y)`; that knowledge has to be supplied by
    /// a verdict at run time.
    pub fn place_inside() -> SkillTemplate {
        SkillTemplate {
            name: "place_inside".into(),
            params: vec![Param::new("X", MOVABLE), Param::new("Y", RECEPTACLE)],
            preconditions: lits(&["held(X)", "reachable(Y)", "container(Y)"]),
            postconditions: lits(&["inside(X, Y)", "~held(X)"]),
            side_effects: vec![],
            effect: EffectRule::PlaceInside,
            description: "Insert the held object X into receptacle Y.".into(),
        }
    }

    pub fn open_drawer() -> SkillTemplate {
        SkillTemplate {
            name: "open_drawer".into(),
            params: vec![Param::new("D", &[ObjectClass::Drawer])],
            preconditions: lits(&["hand_empty", "reachable(D)"]),
            postconditions: lits(&["container(D)"]),
            side_effects: vec![],
            effect: EffectRule::OpenDrawer,
            description: "Pull drawer D open so it can receive objects.".into(),
        }
    }

    pub fn close_drawer() -> SkillTemplate {
        SkillTemplate {
            name: "close_drawer".into(),
            params: vec![Param::new("D", &[ObjectClass::Drawer])],
            preconditions: lits(&["hand_empty", "reachable(D)"]),
            postconditions: lits(&["~container(D)"]),
            side_effects: vec![],
            effect: EffectRule::CloseDrawer,
            description: "Push drawer D closed.".into(),
        }
    }

    pub fn push() -> SkillTemplate {
        SkillTemplate {
            name: "push".into(),
            params: vec![Param::new("X", MOVABLE), Param::new("Z", &[ObjectClass::Zone])],
            preconditions: lits(&["hand_empty", "reachable(X)"]),
            postconditions: lits(&["at(X, Z)"]),
            side_effects: lits(&["~on(X, _)", "~inside(X, _)"]),
            effect: EffectRule::Push,
            description: "Shove object X off its support into zone Z without grasping it.".into(),
        }
    }

    /// Every built-in template, in default catalog order.
    pub fn library() -> Vec<SkillTemplate> {
        vec![
            SkillTemplate::grasp(),
            SkillTemplate::place_on(),
            SkillTemplate::place_inside(),
            SkillTemplate::open_drawer(),
            SkillTemplate::close_drawer(),
            SkillTemplate::push(),
        ]
    }

    pub fn validate(&self) -> Result<(), SkillError> {
        if self.postconditions.is_empty() {
            return Err(SkillError::NoPostconditions(self.name.clone()));
        }
        let params: BTreeSet<&str> = self.params.iter().map(|p| p.var.as_str()).collect();
        for lit in self
            .preconditions
            .iter()
            .chain(&self.postconditions)
            .chain(&self.side_effects)
        {
            for v in lit.variables() {
                if !params.contains(v) {
                    return Err(SkillError::UnboundVariable {
                        skill: self.name.clone(),
                        var: v.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn param(&self, var: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.var == var)
    }

    /// Ground the template. `extra` preconditions (catalog overrides) come
    /// first so the planner achieves them before the template's own.
    pub fn ground(&self, binding: &Binding, extra: &[Literal]) -> Result<GroundSkill, SkillError> {
        let mut args = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let v = binding.get(&p.var).ok_or_else(|| SkillError::MissingBinding {
                skill: self.name.clone(),
                param: p.var.clone(),
            })?;
            args.push(v.clone());
        }
        let binding: Binding = self
            .params
            .iter()
            .map(|p| (p.var.clone(), binding[&p.var].clone()))
            .collect();
        let mut preconditions: Vec<Literal> = Vec::new();
        for l in extra.iter().chain(&self.preconditions) {
            let g = l.substitute(&binding);
            if !preconditions.contains(&g) {
                preconditions.push(g);
            }
        }
        let postconditions = self.postconditions.iter().map(|l| l.substitute(&binding)).collect();
        Ok(GroundSkill {
            name: self.name.clone(),
            args,
            binding,
            preconditions,
            postconditions,
        })
    }

    fn check_types(&self, binding: &Binding, g: &SceneGraph) -> Result<(), SkillError> {
        for p in &self.params {
            let Some(v) = binding.get(&p.var) else { continue };
            let ok = g.object(v).is_some_and(|o| p.accepts(o.class));
            if !ok {
                return Err(SkillError::IllTyped {
                    skill: self.name.clone(),
                    param: p.var.clone(),
                    value: v.clone(),
                });
            }
        }
        Ok(())
    }

    /// One-line listing used in reasoner prompts.
    pub fn signature(&self) -> String {
        let params: Vec<&str> = self.params.iter().map(|p| p.var.as_str()).collect();
        let join = |v: &[Literal]| v.iter().map(Literal::to_string).collect::<Vec<_>>().join(", ");
        format!(
            "{}({}) pre: [{}] post: [{}]",
            self.name,
            params.join(", "),
            join(&self.preconditions),
            join(&self.postconditions)
        )
    }
}

/// A fully grounded skill instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundSkill {
    pub name: String,
    pub args: Vec<String>,
    pub binding: Binding,
    pub preconditions: Vec<Literal>,
    pub postconditions: Vec<Literal>,
}

impl fmt::Display for GroundSkill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

/// Skill suggestion as produced by a reasoner. Conditions stay as raw
/// text until [`SkillCatalog::admit_latent`] validates them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestedSkillSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub preconditions: Vec<String>,
    #[serde(default)]
    pub postconditions: Vec<String>,
}

impl SuggestedSkillSpec {
    pub fn from_template(t: &SkillTemplate) -> SuggestedSkillSpec {
        SuggestedSkillSpec {
            name: t.name.clone(),
            description: t.description.clone(),
            preconditions: t.preconditions.iter().map(Literal::to_string).collect(),
            postconditions: t.postconditions.iter().map(Literal::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SkillCatalog {
    pub active: Vec<SkillTemplate>,
    pub latent: Vec<SkillTemplate>,
    /// Task-scoped extra preconditions per skill name.
    pub overrides: BTreeMap<String, Vec<Literal>>,
}

impl SkillCatalog {
    /// Default catalog: every manipulation skill active, push latent.
    pub fn builtin() -> SkillCatalog {
        SkillCatalog::select(
            &["grasp", "place_on", "place_inside", "open_drawer", "close_drawer"],
            &["push"],
        )
        .expect("built-in names")
    }

    /// Pick templates from the built-in library by name, in the given order.
    pub fn select<S: AsRef<str>>(active: &[S], latent: &[S]) -> Result<SkillCatalog, SkillError> {
        let library = SkillTemplate::library();
        let find = |name: &str| {
            library
                .iter()
                .find(|t| t.name == name)
                .cloned()
                .ok_or_else(|| SkillError::UnknownSkill(name.to_string()))
        };
        let mut seen = BTreeSet::new();
        let mut pick = |names: &[S]| -> Result<Vec<SkillTemplate>, SkillError> {
            names
                .iter()
                .map(|n| {
                    let n = n.as_ref();
                    if !seen.insert(n.to_string()) {
                        return Err(SkillError::Duplicate(n.to_string()));
                    }
                    find(n)
                })
                .collect()
        };
        Ok(SkillCatalog {
            active: pick(active)?,
            latent: pick(latent)?,
            overrides: BTreeMap::new(),
        })
    }

    pub fn active_template(&self, name: &str) -> Option<&SkillTemplate> {
        self.active.iter().find(|t| t.name == name)
    }

    pub fn latent_template(&self, name: &str) -> Option<&SkillTemplate> {
        self.latent.iter().find(|t| t.name == name)
    }

    pub fn overrides_for(&self, name: &str) -> &[Literal] {
        self.overrides.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Ground an active skill, including its overrides, checking parameter
    /// classes against `g`.
    pub fn instantiate(&self, name: &str, binding: &Binding, g: &SceneGraph) -> Result<GroundSkill, SkillError> {
        let t = self
            .active_template(name)
            .ok_or_else(|| SkillError::UnknownSkill(name.to_string()))?;
        let ground = t.ground(binding, self.overrides_for(name))?;
        t.check_types(&ground.binding, g)?;
        Ok(ground)
    }

    /// Ground an active skill from positional arguments.
    pub fn instantiate_args(&self, name: &str, args: &[String], g: &SceneGraph) -> Result<GroundSkill, SkillError> {
        let t = self
            .active_template(name)
            .ok_or_else(|| SkillError::UnknownSkill(name.to_string()))?;
        let binding: Binding = t
            .params
            .iter()
            .zip(args)
            .map(|(p, a)| (p.var.clone(), a.clone()))
            .collect();
        self.instantiate(name, &binding, g)
    }

    /// Attribute predicates no active skill can change. A false static
    /// precondition rules an achiever out.
    fn static_attributes(&self) -> BTreeSet<Predicate> {
        let changeable: BTreeSet<Predicate> = self
            .active
            .iter()
            .flat_map(|t| t.postconditions.iter().chain(&t.side_effects))
            .map(|l| l.predicate)
            .collect();
        Predicate::ALL
            .into_iter()
            .filter(|p| p.kind() == PredicateKind::Attribute && !changeable.contains(p))
            .collect()
    }

    /// Ground active skills whose postconditions (or support side effects)
    /// produce `goal`. Unconstrained parameters are enumerated over scene
    /// objects that pass the class filters. Ordered by catalog position,
    /// then by arguments.
    pub fn achievers(&self, goal: &Literal, g: &SceneGraph) -> Vec<GroundSkill> {
        let statics = self.static_attributes();
        let mut out: Vec<GroundSkill> = Vec::new();
        for t in &self.active {
            let mut found: Vec<GroundSkill> = Vec::new();
            let patterns = t
                .postconditions
                .iter()
                .map(|p| (p, false))
                .chain(t.side_effects.iter().map(|p| (p, true)));
            for (pattern, via_side_effect) in patterns {
                let Some(partial) = unify(pattern, goal) else { continue };
                for binding in enumerate_bindings(t, partial, g) {
                    let Ok(mut skill) = self.instantiate(&t.name, &binding, g) else { continue };
                    let blocked = skill.preconditions.iter().any(|p| {
                        statics.contains(&p.predicate) && p.is_ground() && g.evaluate(p) == Ok(false)
                    });
                    if blocked {
                        continue;
                    }
                    if via_side_effect && !skill.postconditions.contains(goal) {
                        skill.postconditions.push(goal.clone());
                    }
                    if !found.iter().any(|s| s.args == skill.args) {
                        found.push(skill);
                    }
                }
            }
            found.sort_by(|a, b| a.args.cmp(&b.args));
            out.extend(found);
        }
        out
    }

    /// Like [`SkillCatalog::achievers`] but over latent templates, as if
    /// each were active. Used to decide whether a suggestion can help.
    pub fn latent_achievers(&self, goal: &Literal, g: &SceneGraph) -> Vec<(String, Vec<GroundSkill>)> {
        self.latent
            .iter()
            .filter_map(|t| {
                let mut probe = self.clone();
                probe.latent.retain(|l| l.name != t.name);
                probe.active.push(t.clone());
                let found: Vec<GroundSkill> = probe
                    .achievers(goal, g)
                    .into_iter()
                    .filter(|s| s.name == t.name)
                    .collect();
                (!found.is_empty()).then(|| (t.name.clone(), found))
            })
            .collect()
    }

    /// Record an extra precondition for an active skill. Returns `false`
    /// when the override was already present.
    pub fn add_precondition_override(&mut self, skill: &str, lit: Literal) -> Result<bool, SkillError> {
        let t = self
            .active_template(skill)
            .ok_or_else(|| SkillError::UnknownSkill(skill.to_string()))?;
        for v in lit.variables() {
            if t.param(v).is_none() {
                return Err(SkillError::UnboundVariable {
                    skill: skill.to_string(),
                    var: v.to_string(),
                });
            }
        }
        if lit.args.iter().any(|a| matches!(a, Term::Wildcard)) {
            return Err(SkillError::Vocabulary {
                text: lit.to_string(),
                source: LiteralError::Malformed {
                    text: lit.to_string(),
                    reason: "wildcards are not allowed in preconditions".into(),
                },
            });
        }
        let list = self.overrides.entry(skill.to_string()).or_default();
        if list.contains(&lit) {
            return Ok(false);
        }
        list.push(lit);
        Ok(true)
    }

    /// Same as [`SkillCatalog::add_precondition_override`] from surface text.
    pub fn add_precondition_override_text(&mut self, skill: &str, text: &str) -> Result<bool, SkillError> {
        let lit = parse_literal(text).map_err(|source| SkillError::Vocabulary {
            text: text.to_string(),
            source,
        })?;
        self.add_precondition_override(skill, lit)
    }

    /// Unlock a latent template named by a reasoner suggestion. The
    /// template body is moved unchanged; the suggestion's own conditions
    /// are only checked against the vocabulary.
    pub fn admit_latent(&mut self, spec: &SuggestedSkillSpec) -> Result<(), SkillError> {
        for text in spec.preconditions.iter().chain(&spec.postconditions) {
            parse_literal(text).map_err(|source| SkillError::Vocabulary {
                text: text.clone(),
                source,
            })?;
        }
        let idx = self
            .latent
            .iter()
            .position(|t| t.name == spec.name)
            .ok_or_else(|| SkillError::CapabilityAbsent(spec.name.clone()))?;
        let t = self.latent.remove(idx);
        self.active.push(t);
        Ok(())
    }

    /// Prompt listing of active skills (with overrides) and latent names.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for t in &self.active {
            out.push_str(&t.signature());
            let extra = self.overrides_for(&t.name);
            if !extra.is_empty() {
                let e: Vec<String> = extra.iter().map(Literal::to_string).collect();
                out.push_str(&format!(" added-pre: [{}]", e.join(", ")));
            }
            out.push('\n');
        }
        if !self.latent.is_empty() {
            let names: Vec<&str> = self.latent.iter().map(|t| t.name.as_str()).collect();
            out.push_str(&format!("latent: {}\n", names.join(", ")));
        }
        out
    }
}

/// All completions of `partial` over scene objects, respecting class filters.
fn enumerate_bindings(t: &SkillTemplate, partial: Binding, g: &SceneGraph) -> Vec<Binding> {
    let mut out = vec![partial];
    for p in &t.params {
        if out.first().is_some_and(|b| b.contains_key(&p.var)) {
            continue;
        }
        let candidates: Vec<&str> = g
            .objects
            .values()
            .filter(|o| p.accepts(o.class))
            .map(|o| o.id.as_str())
            .collect();
        out = out
            .into_iter()
            .flat_map(|b| {
                candidates.iter().map(move |c| {
                    let mut b = b.clone();
                    b.insert(p.var.clone(), c.to_string());
                    b
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    use super::*;
    use crate::scene::SceneObject;

    fn lit(s: &str) -> Literal {
        parse_literal(s).unwrap()
    }

    fn bind(pairs: &[(&str, &str)]) -> Binding {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn scene(red_pickable: bool, red_relation: &str) -> SceneGraph {
        SceneGraph::from_parts(
            [
                SceneObject::new("blue_peg", ObjectClass::Peg, "blue"),
                SceneObject::new("red_cube", ObjectClass::Cube, "red").with_pickable(red_pickable),
                SceneObject::new("black_cube", ObjectClass::Cube, "black"),
                SceneObject::new("green_hole", ObjectClass::Hole, "green"),
                SceneObject::new("table", ObjectClass::Zone, ""),
            ],
            [
                lit("on(blue_peg, table)"),
                lit("on(black_cube, table)"),
                lit(red_relation),
            ],
        )
        .unwrap()
    }

    #[test]
    fn builtin_templates_validate() {
        for t in SkillTemplate::library() {
            t.validate().unwrap();
        }
    }

    #[test]
    fn instantiate_grasp() {
        let c = SkillCatalog::builtin();
        let g = scene(true, "on(red_cube, table)");
        let s = c.instantiate("grasp", &bind(&[("X", "blue_peg")]), &g).unwrap();
        assert_eq!(
            s.preconditions,
            lits(&["hand_empty", "reachable(blue_peg)", "pickable(blue_peg)"])
        );
        assert_eq!(s.postconditions, lits(&["held(blue_peg)"]));
        assert_eq!(s.to_string(), "grasp(blue_peg)");
    }

    #[test]
    fn instantiate_place_inside() {
        let c = SkillCatalog::builtin();
        let g = scene(true, "on(red_cube, table)");
        let s = c
            .instantiate("place_inside", &bind(&[("X", "blue_peg"), ("Y", "green_hole")]), &g)
            .unwrap();
        assert_eq!(
            s.postconditions,
            lits(&["inside(blue_peg, green_hole)", "~held(blue_peg)"])
        );
    }

    #[test]
    fn instantiate_errors() {
        let c = SkillCatalog::builtin();
        let g = scene(true, "on(red_cube, table)");
        assert!(matches!(
            c.instantiate("place_inside", &bind(&[("X", "blue_peg")]), &g),
            Err(SkillError::MissingBinding { .. })
        ));
        assert!(matches!(
            c.instantiate("grasp", &bind(&[("X", "table")]), &g),
            Err(SkillError::IllTyped { .. })
        ));
        assert!(matches!(
            c.instantiate("push", &bind(&[("X", "red_cube"), ("Z", "table")]), &g),
            Err(SkillError::UnknownSkill(_))
        ));
    }

    #[test]
    fn achievers_for_held() {
        let c = SkillCatalog::builtin();
        let g = scene(true, "on(red_cube, table)");
        let a = c.achievers(&lit("held(blue_peg)"), &g);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].to_string(), "grasp(blue_peg)");
    }

    #[test]
    fn grasp_achieves_support_removal() {
        let c = SkillCatalog::builtin();
        let g = scene(true, "on(red_cube, green_hole)");
        let goal = lit("~on(red_cube, green_hole)");
        let a = c.achievers(&goal, &g);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].to_string(), "grasp(red_cube)");
        assert!(a[0].postconditions.contains(&goal));
    }

    #[test]
    fn non_pickable_has_no_active_achiever() {
        let c = SkillCatalog::builtin();
        let g = scene(false, "on(red_cube, green_hole)");
        assert!(c.achievers(&lit("~on(red_cube, green_hole)"), &g).is_empty());
        let latent = c.latent_achievers(&lit("~on(red_cube, green_hole)"), &g);
        assert_eq!(latent.len(), 1);
        assert_eq!(latent[0].0, "push");
    }

    #[test]
    fn place_on_comes_before_place_inside() {
        let c = SkillCatalog::builtin();
        let g = scene(true, "held(red_cube)");
        let a: Vec<String> = c
            .achievers(&lit("~held(red_cube)"), &g)
            .iter()
            .map(ToString::to_string)
            .collect();
        assert_eq!(a, vec!["place_on(red_cube, table)", "place_inside(red_cube, green_hole)"]);
    }

    #[test]
    fn overrides() {
        let mut c = SkillCatalog::builtin();
        assert!(c.add_precondition_override("place_inside", lit("~occupied(Y)")).unwrap());
        assert!(!c.add_precondition_override("place_inside", lit("~occupied(Y)")).unwrap());
        assert!(matches!(
            c.add_precondition_override_text("place_inside", "~frobnicate(Y)"),
            Err(SkillError::Vocabulary { .. })
        ));
        assert!(matches!(
            c.add_precondition_override("teleport", lit("hand_empty")),
            Err(SkillError::UnknownSkill(_))
        ));
        assert!(matches!(
            c.add_precondition_override("place_inside", lit("~occupied(Q)")),
            Err(SkillError::UnboundVariable { .. })
        ));
        let g = scene(true, "on(red_cube, table)");
        let s = c
            .instantiate("place_inside", &bind(&[("X", "blue_peg"), ("Y", "green_hole")]), &g)
            .unwrap();
        assert_eq!(s.preconditions[0], lit("~occupied(green_hole)"));
        assert_eq!(s.preconditions.len(), 4);
    }

    fn hash(t: &SkillTemplate) -> u64 {
        let mut h = DefaultHasher::new();
        t.hash(&mut h);
        h.finish()
    }

    #[test]
    fn admit_latent_moves_template_unchanged() {
        let mut c = SkillCatalog::builtin();
        let before = hash(c.latent_template("push").unwrap());
        let spec = SuggestedSkillSpec {
            name: "push".into(),
            description: "push it".into(),
            preconditions: vec!["hand_empty".into()],
            postconditions: vec!["at(X, Z)".into()],
        };
        c.admit_latent(&spec).unwrap();
        assert!(c.latent_template("push").is_none());
        assert_eq!(hash(c.active_template("push").unwrap()), before);
    }

    #[test]
    fn admit_latent_errors() {
        let mut c = SkillCatalog::builtin();
        let teleport = SuggestedSkillSpec {
            name: "teleport".into(),
            description: String::new(),
            preconditions: vec![],
            postconditions: vec![],
        };
        assert_eq!(
            c.admit_latent(&teleport),
            Err(SkillError::CapabilityAbsent("teleport".into()))
        );
        let bad = SuggestedSkillSpec {
            name: "push".into(),
            description: String::new(),
            preconditions: vec!["levitating(X)".into()],
            postconditions: vec![],
        };
        assert!(matches!(c.admit_latent(&bad), Err(SkillError::Vocabulary { .. })));
        assert!(c.latent_template("push").is_some());
    }

    #[test]
    fn select_rejects_unknown_and_duplicates() {
        assert!(matches!(
            SkillCatalog::select(&["grasp", "fly"], &[]),
            Err(SkillError::UnknownSkill(_))
        ));
        assert!(matches!(
            SkillCatalog::select(&["grasp"], &["grasp"]),
            Err(SkillError::Duplicate(_))
        ));
    }
}
