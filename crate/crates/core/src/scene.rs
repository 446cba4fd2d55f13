//! Incrementally maintained scene graph: objects, spatial relations and the
//! edits and diffs that move it between revisions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::literal::{parse_literal, Literal, LiteralError, Predicate, PredicateKind, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("object `{0}` already exists")]
    DuplicateObject(String),
    #[error("literal `{0}` is not ground")]
    NotGround(String),
    #[error("`{0}` is not a storable relation")]
    NotARelation(String),
    #[error("`{0}` is not an attribute predicate")]
    NotAnAttribute(String),
    #[error("relation `{0}` is not present")]
    MissingRelation(String),
    #[error("gripper already holds `{0}`")]
    GripperOccupied(String),
    #[error("object `{0}` has more than one support")]
    MultipleSupports(String),
    #[error("object `{0}` is at more than one zone")]
    MultipleZones(String),
    #[error("`{0}` is not a zone")]
    NotAZone(String),
    #[error("support cycle through `{0}`")]
    SupportCycle(String),
    #[error("diff expects revision {expected}, scene is at {found}")]
    RevisionMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Literal(#[from] LiteralError),
    #[error("malformed edit `{0}`")]
    MalformedEdit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Cube,
    Peg,
    Hole,
    Drawer,
    Bin,
    Zone,
}

impl ObjectClass {
    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Cube => "cube",
            ObjectClass::Peg => "peg",
            ObjectClass::Hole => "hole",
            ObjectClass::Drawer => "drawer",
            ObjectClass::Bin => "bin",
            ObjectClass::Zone => "zone",
        }
    }

    pub fn from_name(name: &str) -> Option<ObjectClass> {
        [
            ObjectClass::Cube,
            ObjectClass::Peg,
            ObjectClass::Hole,
            ObjectClass::Drawer,
            ObjectClass::Bin,
            ObjectClass::Zone,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub class: ObjectClass,
    #[serde(default)]
    pub color: String,
    #[serde(default)]
    pub pickable: bool,
    #[serde(default)]
    pub container: bool,
    #[serde(default = "default_true")]
    pub reachable: bool,
}

fn default_true() -> bool {
    true
}

impl SceneObject {
    pub fn new(id: impl Into<String>, class: ObjectClass, color: impl Into<String>) -> SceneObject {
        let pickable = matches!(class, ObjectClass::Cube | ObjectClass::Peg);
        let container = matches!(class, ObjectClass::Hole | ObjectClass::Bin | ObjectClass::Drawer);
        SceneObject {
            id: id.into(),
            class,
            color: color.into(),
            pickable,
            container,
            reachable: true,
        }
    }

    pub fn with_pickable(mut self, v: bool) -> Self {
        self.pickable = v;
        self
    }

    pub fn with_container(mut self, v: bool) -> Self {
        self.container = v;
        self
    }

    pub fn with_reachable(mut self, v: bool) -> Self {
        self.reachable = v;
        self
    }

    fn attribute(&self, p: Predicate) -> Option<bool> {
        match p {
            Predicate::Pickable => Some(self.pickable),
            Predicate::Container => Some(self.container),
            Predicate::Reachable => Some(self.reachable),
            _ => None,
        }
    }

    fn set_attribute(&mut self, p: Predicate, value: bool) {
        match p {
            Predicate::Pickable => self.pickable = value,
            Predicate::Container => self.container = value,
            Predicate::Reachable => self.reachable = value,
            _ => {}
        }
    }
}

/// A single change to the scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "kebab-case")]
pub enum SceneEdit {
    AddObject { object: SceneObject },
    RemoveObject { id: String },
    AddRelation { relation: Literal },
    RemoveRelation { relation: Literal },
    SetAttribute {
        object: String,
        attribute: Predicate,
        value: bool,
    },
}

impl SceneEdit {
    pub fn add(relation: Literal) -> SceneEdit {
        SceneEdit::AddRelation { relation }
    }

    pub fn remove(relation: Literal) -> SceneEdit {
        SceneEdit::RemoveRelation { relation }
    }
}

impl fmt::Display for SceneEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneEdit::AddObject { object } => write!(f, "add-object {} ({})", object.id, object.class),
            SceneEdit::RemoveObject { id } => write!(f, "remove-object {id}"),
            SceneEdit::AddRelation { relation } => write!(f, "+{relation}"),
            SceneEdit::RemoveRelation { relation } => write!(f, "-{relation}"),
            SceneEdit::SetAttribute {
                object,
                attribute,
                value,
            } => write!(f, "{}{attribute}({object})", if *value { "+" } else { "-" }),
        }
    }
}

/// `+lit` adds a relation (or sets an attribute), `-lit` removes it.
impl FromStr for SceneEdit {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (add, rest) = if let Some(r) = s.strip_prefix('+') {
            (true, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (false, r)
        } else {
            return Err(SceneError::MalformedEdit(s.to_string()));
        };
        let lit = parse_literal(rest)?;
        if lit.negated || !lit.is_ground() {
            return Err(SceneError::MalformedEdit(s.to_string()));
        }
        match lit.predicate.kind() {
            PredicateKind::Base if add => Ok(SceneEdit::AddRelation { relation: lit }),
            PredicateKind::Base => Ok(SceneEdit::RemoveRelation { relation: lit }),
            PredicateKind::Attribute => Ok(SceneEdit::SetAttribute {
                object: lit.arg(0).unwrap_or_default().to_string(),
                attribute: lit.predicate,
                value: add,
            }),
            PredicateKind::Derived => Err(SceneError::NotARelation(lit.to_string())),
        }
    }
}

/// Difference between two scene revisions over objects and facts
/// (relations plus true attribute flags).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SceneDiff {
    pub from_revision: u64,
    pub to_revision: u64,
    pub added: BTreeSet<Literal>,
    pub removed: BTreeSet<Literal>,
    pub objects_added: Vec<SceneObject>,
    pub objects_removed: BTreeSet<String>,
    /// Full records of removed objects, kept so the diff can be inverted.
    #[serde(default)]
    pub removed_records: Vec<SceneObject>,
}

impl SceneDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.objects_added.is_empty()
            && self.objects_removed.is_empty()
    }

    pub fn inverse(&self) -> SceneDiff {
        SceneDiff {
            from_revision: self.to_revision,
            to_revision: self.from_revision,
            added: self.removed.clone(),
            removed: self.added.clone(),
            objects_added: self.removed_records.clone(),
            objects_removed: self.objects_added.iter().map(|o| o.id.clone()).collect(),
            removed_records: self.objects_added.clone(),
        }
    }
}

impl fmt::Display for SceneDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        parts.extend(self.objects_added.iter().map(|o| format!("+object {}", o.id)));
        parts.extend(self.objects_removed.iter().map(|o| format!("-object {o}")));
        parts.extend(self.removed.iter().map(|l| format!("-{l}")));
        parts.extend(self.added.iter().map(|l| format!("+{l}")));
        if parts.is_empty() {
            f.write_str("(no change)")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

/// Objects and stored relations. Derived predicates are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SceneGraph {
    pub objects: BTreeMap<String, SceneObject>,
    pub relations: BTreeSet<Literal>,
    pub revision: u64,
}

impl SceneGraph {
    pub fn new() -> SceneGraph {
        SceneGraph::default()
    }

    /// Build from parts, checking every invariant. Revision starts at 0.
    pub fn from_parts(
        objects: impl IntoIterator<Item = SceneObject>,
        relations: impl IntoIterator<Item = Literal>,
    ) -> Result<SceneGraph, SceneError> {
        let mut g = SceneGraph::new();
        for o in objects {
            if g.objects.contains_key(&o.id) {
                return Err(SceneError::DuplicateObject(o.id));
            }
            g.objects.insert(o.id.clone(), o);
        }
        for r in relations {
            g.check_relation_shape(&r)?;
            g.relations.insert(r);
        }
        g.validate()?;
        Ok(g)
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.get(id)
    }

    pub fn same_content(&self, other: &SceneGraph) -> bool {
        self.objects == other.objects && self.relations == other.relations
    }

    /// The object currently in the gripper.
    pub fn held_object(&self) -> Option<&str> {
        self.relations
            .iter()
            .find(|r| r.predicate == Predicate::Held)
            .and_then(|r| r.arg(0))
    }

    /// Objects resting on or inside `container`, with the relation used.
    pub fn occupants(&self, container: &str) -> Vec<(String, Predicate)> {
        self.relations
            .iter()
            .filter(|r| matches!(r.predicate, Predicate::On | Predicate::Inside))
            .filter(|r| r.arg(1) == Some(container))
            .map(|r| (r.arg(0).unwrap_or_default().to_string(), r.predicate))
            .collect()
    }

    /// The support relation of `id` (held, on or inside), if any.
    pub fn support_of(&self, id: &str) -> Option<&Literal> {
        self.relations
            .iter()
            .find(|r| r.predicate.is_support() && r.arg(0) == Some(id))
    }

    /// Relations plus one positive literal per true attribute flag.
    pub fn facts(&self) -> BTreeSet<Literal> {
        let mut facts = self.relations.clone();
        for o in self.objects.values() {
            for p in [Predicate::Pickable, Predicate::Container, Predicate::Reachable] {
                if o.attribute(p) == Some(true) {
                    facts.insert(Literal::fact(p, &[&o.id]));
                }
            }
        }
        facts
    }

    fn require_object(&self, id: &str) -> Result<&SceneObject, SceneError> {
        self.objects
            .get(id)
            .ok_or_else(|| SceneError::UnknownObject(id.to_string()))
    }

    fn check_relation_shape(&self, r: &Literal) -> Result<(), SceneError> {
        if !r.is_ground() {
            return Err(SceneError::NotGround(r.to_string()));
        }
        if r.negated || r.predicate.kind() != PredicateKind::Base {
            return Err(SceneError::NotARelation(r.to_string()));
        }
        for a in &r.args {
            self.require_object(a.as_const().unwrap_or_default())?;
        }
        if r.predicate == Predicate::At {
            let zone = r.arg(1).unwrap_or_default();
            if self.require_object(zone)?.class != ObjectClass::Zone {
                return Err(SceneError::NotAZone(zone.to_string()));
            }
        }
        Ok(())
    }

    /// Exhaustive invariant scan.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut supports: BTreeMap<&str, &str> = BTreeMap::new();
        let mut zones: BTreeSet<&str> = BTreeSet::new();
        let mut held: Option<&str> = None;
        for r in &self.relations {
            self.check_relation_shape(r)?;
            let subject = r.arg(0).unwrap_or_default();
            match r.predicate {
                Predicate::At => {
                    if !zones.insert(subject) {
                        return Err(SceneError::MultipleZones(subject.to_string()));
                    }
                }
                p if p.is_support() => {
                    if supports.insert(subject, r.arg(1).unwrap_or("")).is_some() {
                        return Err(SceneError::MultipleSupports(subject.to_string()));
                    }
                    if p == Predicate::Held {
                        if let Some(h) = held {
                            return Err(SceneError::GripperOccupied(h.to_string()));
                        }
                        held = Some(subject);
                    }
                }
                _ => {}
            }
        }
        for start in supports.keys() {
            let mut seen = BTreeSet::new();
            let mut cur = *start;
            while let Some(parent) = supports.get(cur) {
                if parent.is_empty() {
                    break;
                }
                if !seen.insert(cur) || *parent == *start {
                    return Err(SceneError::SupportCycle(start.to_string()));
                }
                cur = parent;
            }
        }
        Ok(())
    }

    /// Truth value of a ground literal. Derived predicates are computed here.
    pub fn evaluate(&self, lit: &Literal) -> Result<bool, SceneError> {
        if !lit.is_ground() {
            return Err(SceneError::NotGround(lit.to_string()));
        }
        for a in &lit.args {
            self.require_object(a.as_const().unwrap_or_default())?;
        }
        let value = match lit.predicate.kind() {
            PredicateKind::Base => self.relations.contains(&lit.positive()),
            PredicateKind::Attribute => self
                .require_object(lit.arg(0).unwrap_or_default())?
                .attribute(lit.predicate)
                .unwrap_or(false),
            PredicateKind::Derived => match lit.predicate {
                Predicate::Occupied => !self.occupants(lit.arg(0).unwrap_or_default()).is_empty(),
                _ => self.held_object().is_none(),
            },
        };
        Ok(value != lit.negated)
    }

    /// Apply an edit, returning the new graph. The receiver is untouched,
    /// so a rejected edit leaves no trace.
    pub fn apply_edit(&self, edit: &SceneEdit) -> Result<SceneGraph, SceneError> {
        let mut next = self.clone();
        match edit {
            SceneEdit::AddObject { object } => {
                if next.objects.contains_key(&object.id) {
                    return Err(SceneError::DuplicateObject(object.id.clone()));
                }
                next.objects.insert(object.id.clone(), object.clone());
            }
            SceneEdit::RemoveObject { id } => {
                next.require_object(id)?;
                next.objects.remove(id);
                next.relations
                    .retain(|r| !r.args.iter().any(|a| a.as_const() == Some(id.as_str())));
            }
            SceneEdit::AddRelation { relation } => {
                next.check_relation_shape(relation)?;
                let subject = relation.arg(0).unwrap_or_default().to_string();
                if relation.predicate.is_support() {
                    next.relations
                        .retain(|r| !(r.predicate.is_support() && r.arg(0) == Some(subject.as_str())));
                } else if relation.predicate == Predicate::At {
                    next.relations
                        .retain(|r| !(r.predicate == Predicate::At && r.arg(0) == Some(subject.as_str())));
                }
                next.relations.insert(relation.clone());
            }
            SceneEdit::RemoveRelation { relation } => {
                if !next.relations.remove(relation) {
                    return Err(SceneError::MissingRelation(relation.to_string()));
                }
            }
            SceneEdit::SetAttribute {
                object,
                attribute,
                value,
            } => {
                if attribute.kind() != PredicateKind::Attribute {
                    return Err(SceneError::NotAnAttribute(attribute.to_string()));
                }
                next.objects
                    .get_mut(object)
                    .ok_or_else(|| SceneError::UnknownObject(object.clone()))?
                    .set_attribute(*attribute, *value);
            }
        }
        next.validate()?;
        next.revision += 1;
        Ok(next)
    }

    /// In-place variant of [`SceneGraph::apply_edit`].
    pub fn apply(&mut self, edit: &SceneEdit) -> Result<(), SceneError> {
        *self = self.apply_edit(edit)?;
        Ok(())
    }

    /// Apply edits atomically: either all are accepted or none.
    pub fn apply_all(&mut self, edits: &[SceneEdit]) -> Result<(), SceneError> {
        let mut next = self.clone();
        for e in edits {
            next.apply(e)?;
        }
        *self = next;
        Ok(())
    }

    pub fn diff(&self, after: &SceneGraph) -> SceneDiff {
        let before_facts = self.facts();
        let after_facts = after.facts();
        let mut objects_added = Vec::new();
        let mut removed_records = Vec::new();
        for (id, o) in &after.objects {
            match self.objects.get(id) {
                Some(prev) if prev.class == o.class && prev.color == o.color => {}
                Some(prev) => {
                    removed_records.push(prev.clone());
                    objects_added.push(o.clone());
                }
                None => objects_added.push(o.clone()),
            }
        }
        for (id, o) in &self.objects {
            if !after.objects.contains_key(id) {
                removed_records.push(o.clone());
            }
        }
        removed_records.sort_by(|a, b| a.id.cmp(&b.id));
        SceneDiff {
            from_revision: self.revision,
            to_revision: after.revision,
            added: after_facts.difference(&before_facts).cloned().collect(),
            removed: before_facts.difference(&after_facts).cloned().collect(),
            objects_removed: removed_records.iter().map(|o| o.id.clone()).collect(),
            objects_added,
            removed_records,
        }
    }

    /// Apply a diff recorded against this graph's revision.
    pub fn apply_diff(&self, diff: &SceneDiff) -> Result<SceneGraph, SceneError> {
        if self.revision != diff.from_revision {
            return Err(SceneError::RevisionMismatch {
                expected: diff.from_revision,
                found: self.revision,
            });
        }
        let mut next = self.clone();
        for lit in &diff.removed {
            next.set_fact(lit, false)?;
        }
        for id in &diff.objects_removed {
            next.objects.remove(id);
            next.relations
                .retain(|r| !r.args.iter().any(|a| a.as_const() == Some(id.as_str())));
        }
        for o in &diff.objects_added {
            next.objects.insert(o.id.clone(), o.clone());
        }
        for lit in &diff.added {
            next.set_fact(lit, true)?;
        }
        next.validate()?;
        next.revision = diff.to_revision;
        Ok(next)
    }

    fn set_fact(&mut self, lit: &Literal, value: bool) -> Result<(), SceneError> {
        match lit.predicate.kind() {
            PredicateKind::Base => {
                if value {
                    self.relations.insert(lit.clone());
                } else {
                    self.relations.remove(lit);
                }
            }
            PredicateKind::Attribute => {
                let id = lit.arg(0).unwrap_or_default();
                // An attribute of an object removed by the same diff.
                if let Some(o) = self.objects.get_mut(id) {
                    o.set_attribute(lit.predicate, value);
                }
            }
            PredicateKind::Derived => return Err(SceneError::NotARelation(lit.to_string())),
        }
        Ok(())
    }

    /// Canonical text: a header, one line per object (by id), then one
    /// relation per line in lexicographic order.
    pub fn serialize(&self) -> String {
        let mut out = format!(
            "scene objects={} relations={}\n",
            self.objects.len(),
            self.relations.len()
        );
        for o in self.objects.values() {
            out.push_str(&format!(
                "object {} class={} color={} pickable={} container={} reachable={}\n",
                o.id,
                o.class,
                if o.color.is_empty() { "-" } else { &o.color },
                o.pickable,
                o.container,
                o.reachable
            ));
        }
        let mut rels: Vec<String> = self.relations.iter().map(Literal::to_string).collect();
        rels.sort();
        for r in rels {
            out.push_str(&r);
            out.push('\n');
        }
        out
    }
}

/// Expand a negated derived literal into the ground base literals that
/// make it true in `g`. Returns `None` for literals that are not
/// `~occupied(c)` or `hand_empty`.
pub fn ground_derived_negation(lit: &Literal, g: &SceneGraph) -> Option<Vec<Literal>> {
    match (lit.predicate, lit.negated) {
        (Predicate::Occupied, true) => {
            let c = lit.arg(0)?;
            Some(
                g.occupants(c)
                    .into_iter()
                    .map(|(o, p)| Literal {
                        predicate: p,
                        args: vec![Term::constant(o), Term::constant(c)],
                        negated: true,
                    })
                    .collect(),
            )
        }
        (Predicate::HandEmpty, false) => Some(
            g.held_object()
                .map(|o| vec![Literal::fact(Predicate::Held, &[o]).negate()])
                .unwrap_or_default(),
        ),
        _ => None,
    }
}
