//! Generators and independent reference models shared by the property
//! and acceptance tests. Nothing here calls into the code under test to
//! decide an expected value.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;
use recovery_core::bt::{BehaviorTree, Node, Status, TickContext};
use recovery_core::literal::{parse_literal, Literal};
use recovery_core::planner::{Planner, PlannerConfig, ReplanEvent};
use recovery_core::scene::{ObjectClass, SceneGraph, SceneObject};
use recovery_core::simulator::World;
use recovery_core::skill::{GroundSkill, SkillCatalog};

pub fn lit(s: &str) -> Literal {
    parse_literal(s).unwrap()
}

// ---------------------------------------------------------------------------
// Planning worlds

/// Where a movable object is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Loc {
    Table,
    Hole(usize),
    Hand,
}

#[derive(Debug, Clone)]
pub struct PlanWorld {
    pub holes: usize,
    /// Initial location and peg-or-cube per movable.
    pub movables: Vec<(Loc, bool)>,
    /// (movable, target) pairs; `Loc::Table` means on the table.
    pub goals: Vec<(usize, Loc)>,
}

impl PlanWorld {
    pub fn movable(i: usize) -> String {
        format!("m{i}")
    }

    pub fn hole(i: usize) -> String {
        format!("h{i}")
    }

    pub fn scene(&self) -> SceneGraph {
        let mut objects = vec![SceneObject::new("table", ObjectClass::Zone, "")];
        for h in 0..self.holes {
            objects.push(SceneObject::new(Self::hole(h), ObjectClass::Hole, "green"));
        }
        let mut relations = Vec::new();
        for (i, (loc, peg)) in self.movables.iter().enumerate() {
            let class = if *peg { ObjectClass::Peg } else { ObjectClass::Cube };
            objects.push(SceneObject::new(Self::movable(i), class, "red"));
            relations.push(match loc {
                Loc::Table => lit(&format!("on({}, table)", Self::movable(i))),
                Loc::Hole(h) => lit(&format!("inside({}, {})", Self::movable(i), Self::hole(*h))),
                Loc::Hand => lit(&format!("held({})", Self::movable(i))),
            });
        }
        SceneGraph::from_parts(objects, relations).unwrap()
    }

    pub fn goal_literals(&self) -> Vec<Literal> {
        self.goals
            .iter()
            .map(|(m, target)| match target {
                Loc::Hole(h) => lit(&format!("inside({}, {})", Self::movable(*m), Self::hole(*h))),
                _ => lit(&format!("on({}, table)", Self::movable(*m))),
            })
            .collect()
    }

    /// Shortest plan length by breadth-first search over object locations,
    /// with a hole accepting an object only while empty.
    pub fn bfs_plan_length(&self, max_depth: usize) -> Option<usize> {
        let start: Vec<Loc> = self.movables.iter().map(|(l, _)| *l).collect();
        let done = |s: &[Loc]| self.goals.iter().all(|(m, t)| s[*m] == *t);
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([(start, 0)]);
        while let Some((s, d)) = queue.pop_front() {
            if done(&s) {
                return Some(d);
            }
            if d == max_depth {
                continue;
            }
            let holding = s.iter().position(|l| *l == Loc::Hand);
            let mut next = Vec::new();
            match holding {
                None => {
                    for i in 0..s.len() {
                        let mut n = s.clone();
                        n[i] = Loc::Hand;
                        next.push(n);
                    }
                }
                Some(i) => {
                    let mut n = s.clone();
                    n[i] = Loc::Table;
                    next.push(n);
                    for h in 0..self.holes {
                        if !s.contains(&Loc::Hole(h)) {
                            let mut n = s.clone();
                            n[i] = Loc::Hole(h);
                            next.push(n);
                        }
                    }
                }
            }
            for n in next {
                if seen.insert(n.clone()) {
                    queue.push_back((n, d + 1));
                }
            }
        }
        None
    }
}

/// Up to five objects: the table, one or two holes and one to three
/// movables, with one or two goals.
pub fn plan_world() -> impl Strategy<Value = PlanWorld> {
    (1usize..=2, 1usize..=3)
        .prop_filter("at most five objects", |(h, m)| 1 + h + m <= 5)
        .prop_flat_map(|(holes, n)| {
            let loc = prop_oneof![Just(Loc::Table), (0..holes).prop_map(Loc::Hole)];
            let target = prop_oneof![Just(Loc::Table), (0..holes).prop_map(Loc::Hole)];
            (
                Just(holes),
                prop::collection::vec((loc, any::<bool>()), n),
                prop::collection::vec((0..n, target), 1..=2),
            )
        })
        .prop_map(|(holes, movables, mut goals)| {
            goals.sort();
            goals.dedup_by_key(|(m, _)| *m);
            PlanWorld { holes, movables, goals }
        })
}

/// Catalog for soundness runs: the built-in pick-and-place skills with the
/// emptiness guard on insertion already known.
pub fn guarded_catalog() -> SkillCatalog {
    let mut c = SkillCatalog::select(&["grasp", "place_on", "place_inside"], &[] as &[&str]).unwrap();
    c.add_precondition_override("place_inside", lit("~occupied(Y)")).unwrap();
    c
}

/// Plan and execute without faults. Returns (ticks, expansions) on root
/// Success.
pub fn plan_and_execute(w: &PlanWorld, max_ticks: u64) -> Result<(u64, usize), String> {
    let catalog = guarded_catalog();
    let mut world = World::new(w.scene(), Vec::new());
    let mut planner = Planner::new(PlannerConfig::default());
    let mut tree = planner.plan_initial(&w.goal_literals()).map_err(|e| e.to_string())?;
    let marks = BTreeSet::new();
    for t in 1..=max_ticks {
        let mut ctx = TickContext::new(&world.scene, &marks);
        let status = tree.tick(&mut ctx);
        let (failed, pending) = (ctx.failed, ctx.pending);
        match status {
            Status::Success => return Ok((t, planner.expansions)),
            Status::Failure => {
                let scene = world.scene.clone();
                match planner.replan_step(&mut tree, &failed, &catalog, &scene) {
                    ReplanEvent::Expanded { .. } => {}
                    other => return Err(format!("tick {t}: {other:?}")),
                }
            }
            Status::Running => {
                let skill = pending.unwrap().skill;
                world.execute(&skill);
            }
        }
    }
    Err(format!("no success within {max_ticks} ticks"))
}

// ---------------------------------------------------------------------------
// Behavior trees

/// Fixed scene for tree properties: `a` is on the table, `b` is held.
pub fn tree_scene() -> SceneGraph {
    SceneGraph::from_parts(
        [
            SceneObject::new("a", ObjectClass::Cube, "red"),
            SceneObject::new("b", ObjectClass::Cube, "blue"),
            SceneObject::new("table", ObjectClass::Zone, ""),
        ],
        [lit("on(a, table)"), lit("held(b)")],
    )
    .unwrap()
}

/// Literal pool small enough that duplicates are common.
pub const TREE_LITERALS: [&str; 6] = [
    "on(a, table)",
    "held(b)",
    "held(a)",
    "hand_empty",
    "~held(a)",
    "inside(a, table)",
];

pub fn tree_skill(i: usize) -> GroundSkill {
    let g = tree_scene();
    let (name, args): (&str, &[&str]) = match i % 3 {
        0 => ("grasp", &["a"]),
        1 => ("place_on", &["b", "table"]),
        _ => ("grasp", &["b"]),
    };
    let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    SkillCatalog::builtin().instantiate_args(name, &args, &g).unwrap()
}

pub fn resolve_skill(name: &str, args: &[String]) -> Option<GroundSkill> {
    SkillCatalog::builtin().instantiate_args(name, args, &tree_scene()).ok()
}

/// Shape of a random tree before ids are assigned.
#[derive(Debug, Clone)]
pub enum Shape {
    Seq(Vec<Shape>),
    Fb(Vec<Shape>),
    Cond(usize, bool),
    Act(usize),
}

pub fn shape() -> impl Strategy<Value = Shape> {
    let leaf = prop_oneof![
        3 => (0..TREE_LITERALS.len(), any::<bool>()).prop_map(|(i, e)| Shape::Cond(i, e)),
        1 => (0usize..3).prop_map(Shape::Act),
    ];
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Shape::Seq),
            prop::collection::vec(inner, 1..4).prop_map(Shape::Fb),
        ]
    })
}

pub fn build(shape: &Shape) -> BehaviorTree {
    fn go(s: &Shape, next: &mut u32) -> Node {
        let id = *next;
        *next += 1;
        match s {
            Shape::Seq(cs) => Node::sequence(id, cs.iter().map(|c| go(c, next)).collect()),
            Shape::Fb(cs) => Node::fallback(id, cs.iter().map(|c| go(c, next)).collect()),
            Shape::Cond(i, expanded) => {
                let mut n = Node::condition(id, lit(TREE_LITERALS[*i]));
                if let recovery_core::bt::NodeKind::Condition { expanded: e, .. } = &mut n.kind {
                    *e = *expanded;
                }
                n
            }
            Shape::Act(i) => Node::action(id, tree_skill(*i)),
        }
    }
    let mut next = 0;
    BehaviorTree::new(go(shape, &mut next))
}

/// Reference tick semantics written from the textbook definition: returns
/// the status and the first action reached.
pub fn reference_tick(n: &Node, truth: &dyn Fn(&Literal) -> bool) -> (Status, Option<u32>) {
    use recovery_core::bt::NodeKind as K;
    match &n.kind {
        K::Condition { literal, .. } => (if truth(literal) { Status::Success } else { Status::Failure }, None),
        K::Action(_) => (Status::Running, Some(n.id)),
        K::Sequence | K::Fallback => {
            let stop_on = if matches!(n.kind, K::Sequence) { Status::Success } else { Status::Failure };
            for c in &n.children {
                let (s, a) = reference_tick(c, truth);
                if s != stop_on {
                    return (s, a);
                }
            }
            (stop_on, None)
        }
    }
}

/// Truth values of the pool literals in an arbitrary world, as a bit mask
/// over [`TREE_LITERALS`].
pub fn masked_truth(mask: u8) -> impl Fn(&Literal) -> bool {
    move |l: &Literal| {
        let i = TREE_LITERALS.iter().position(|t| lit(t) == *l).expect("pool literal");
        mask & (1 << i) != 0
    }
}

// ---------------------------------------------------------------------------
// Scene edits

/// Plain model of a scene: object ids with class and flags, and relations
/// as text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SceneModel {
    pub objects: BTreeMap<String, (ObjectClass, [bool; 3])>,
    pub relations: BTreeSet<(String, String, Option<String>)>,
}

#[derive(Debug, Clone)]
pub enum ModelEdit {
    AddObject(String, ObjectClass),
    RemoveObject(String),
    Add(String, String, Option<String>),
    Remove(String, String, Option<String>),
    Attr(String, usize, bool),
}

pub const IDS: [&str; 6] = ["a", "b", "c", "h", "t", "z"];
pub const ATTRS: [&str; 3] = ["pickable", "container", "reachable"];

fn default_flags(class: ObjectClass) -> [bool; 3] {
    let pick = matches!(class, ObjectClass::Cube | ObjectClass::Peg);
    let cont = matches!(class, ObjectClass::Hole | ObjectClass::Bin | ObjectClass::Drawer);
    [pick, cont, true]
}

pub fn class_of(id: &str) -> ObjectClass {
    match id {
        "h" => ObjectClass::Hole,
        "t" | "z" => ObjectClass::Zone,
        _ => ObjectClass::Cube,
    }
}

impl SceneModel {
    pub fn initial() -> SceneModel {
        let mut m = SceneModel::default();
        for id in ["a", "b", "h", "t"] {
            m.objects.insert(id.into(), (class_of(id), default_flags(class_of(id))));
        }
        m
    }

    /// Apply an edit with the scene rules restated: objects must exist,
    /// `at` targets a zone, one support and one zone per object, one held
    /// object, no support cycles. `None` when the edit must be rejected.
    pub fn apply(&self, e: &ModelEdit) -> Option<SceneModel> {
        let mut m = self.clone();
        match e {
            ModelEdit::AddObject(id, class) => {
                if m.objects.contains_key(id) {
                    return None;
                }
                m.objects.insert(id.clone(), (*class, default_flags(*class)));
            }
            ModelEdit::RemoveObject(id) => {
                m.objects.remove(id)?;
                m.relations.retain(|(_, a, b)| a != id && b.as_deref() != Some(id));
            }
            ModelEdit::Add(p, a, b) => {
                if !m.objects.contains_key(a) || b.as_ref().is_some_and(|b| !m.objects.contains_key(b)) {
                    return None;
                }
                if p == "at" && m.objects[b.as_ref().unwrap()].0 != ObjectClass::Zone {
                    return None;
                }
                let support = |q: &str| matches!(q, "on" | "inside" | "held");
                if support(p) {
                    m.relations.retain(|(q, x, _)| !(support(q) && x == a));
                } else {
                    m.relations.retain(|(q, x, _)| !(q == "at" && x == a));
                }
                m.relations.insert((p.clone(), a.clone(), b.clone()));
            }
            ModelEdit::Remove(p, a, b) => {
                if !m.relations.remove(&(p.clone(), a.clone(), b.clone())) {
                    return None;
                }
            }
            ModelEdit::Attr(id, i, v) => m.objects.get_mut(id)?.1[*i] = *v,
        }
        m.valid().then_some(m)
    }

    fn valid(&self) -> bool {
        let held = self.relations.iter().filter(|(p, _, _)| p == "held").count();
        if held > 1 {
            return false;
        }
        let parent: BTreeMap<&str, &str> = self
            .relations
            .iter()
            .filter(|(p, _, _)| p == "on" || p == "inside")
            .map(|(_, a, b)| (a.as_str(), b.as_deref().unwrap()))
            .collect();
        for start in parent.keys() {
            let mut cur = *start;
            for _ in 0..=parent.len() {
                match parent.get(cur) {
                    Some(p) if p == start => return false,
                    Some(p) => cur = p,
                    None => break,
                }
            }
        }
        true
    }

    pub fn to_graph(&self) -> SceneGraph {
        let objects = self.objects.iter().map(|(id, (class, f))| {
            SceneObject::new(id.clone(), *class, "")
                .with_pickable(f[0])
                .with_container(f[1])
                .with_reachable(f[2])
        });
        let relations = self.relations.iter().map(|(p, a, b)| match b {
            Some(b) => lit(&format!("{p}({a}, {b})")),
            None => lit(&format!("{p}({a})")),
        });
        SceneGraph::from_parts(objects, relations).expect("model keeps scenes valid")
    }
}

impl ModelEdit {
    /// The same edit in the crate's vocabulary.
    pub fn to_edit(&self) -> recovery_core::scene::SceneEdit {
        use recovery_core::scene::SceneEdit;
        match self {
            ModelEdit::AddObject(id, class) => SceneEdit::AddObject {
                object: SceneObject::new(id.clone(), *class, ""),
            },
            ModelEdit::RemoveObject(id) => SceneEdit::RemoveObject { id: id.clone() },
            ModelEdit::Add(p, a, b) | ModelEdit::Remove(p, a, b) => {
                let sign = if matches!(self, ModelEdit::Add(..)) { "+" } else { "-" };
                let text = match b {
                    Some(b) => format!("{sign}{p}({a}, {b})"),
                    None => format!("{sign}{p}({a})"),
                };
                text.parse().unwrap()
            }
            ModelEdit::Attr(id, i, v) => format!("{}{}({id})", if *v { "+" } else { "-" }, ATTRS[*i])
                .parse()
                .unwrap(),
        }
    }
}

pub fn model_edit() -> impl Strategy<Value = ModelEdit> {
    let id = || prop::sample::select(IDS.to_vec()).prop_map(String::from);
    prop_oneof![
        1 => id().prop_map(|i| ModelEdit::AddObject(i.clone(), class_of(&i))),
        1 => id().prop_map(ModelEdit::RemoveObject),
        4 => (prop::sample::select(vec!["on", "inside", "at"]), id(), id())
            .prop_map(|(p, a, b)| ModelEdit::Add(p.into(), a, Some(b))),
        2 => id().prop_map(|a| ModelEdit::Add("held".into(), a, None)),
        3 => (prop::sample::select(vec!["on", "inside", "at"]), id(), id())
            .prop_map(|(p, a, b)| ModelEdit::Remove(p.into(), a, Some(b))),
        1 => id().prop_map(|a| ModelEdit::Remove("held".into(), a, None)),
        2 => (id(), 0usize..3, any::<bool>()).prop_map(|(i, k, v)| ModelEdit::Attr(i, k, v)),
    ]
}
