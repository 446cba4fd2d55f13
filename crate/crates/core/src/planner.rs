//! Backchaining planner: grows a behavior tree from goal literals and
//! repairs it in place when a condition fails at run time.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BehaviorTree, FailedCondition, Node, NodeId, NodeKind};
use crate::literal::Literal;
use crate::scene::{ground_derived_negation, SceneGraph};
use crate::skill::SkillCatalog;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("goal list is empty")]
    EmptyGoals,
    #[error("goal `{0}` is not ground")]
    NotGround(Literal),
    #[error("node #{0} is not an unexpanded condition")]
    NotExpandable(NodeId),
    #[error("no achiever for `{0}`")]
    NoAchiever(Literal),
    #[error("expansion budget of {0} exhausted")]
    BudgetExhausted(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlannerConfig {
    pub max_expansions: usize,
    pub prune_redundant: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_expansions: 25,
            prune_redundant: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum ReplanEvent {
    Expanded {
        node: NodeId,
        literal: Literal,
        /// Achievers in the order they were tried, or the ground literals
        /// of a derived-negation split.
        alternatives: Vec<String>,
    },
    NoAchiever {
        node: NodeId,
        literal: Literal,
    },
    BudgetExhausted,
    /// The tick failed without any unexpanded condition to work on.
    Stuck,
}

/// Planner state for one task: configuration plus the expansion counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planner {
    pub config: PlannerConfig,
    pub expansions: usize,
}

impl Planner {
    pub fn new(config: PlannerConfig) -> Planner {
        Planner {
            config,
            expansions: 0,
        }
    }

    /// A sequence of unexpanded goal conditions. Resets the budget.
    pub fn plan_initial(&mut self, goals: &[Literal]) -> Result<BehaviorTree, PlannerError> {
        plan_initial(goals).inspect(|_| self.expansions = 0)
    }

    /// Expand one failed condition node. Returns the alternatives used.
    pub fn expand(
        &mut self,
        tree: &mut BehaviorTree,
        node: NodeId,
        catalog: &SkillCatalog,
        g: &SceneGraph,
    ) -> Result<Vec<String>, PlannerError> {
        if self.expansions >= self.config.max_expansions {
            return Err(PlannerError::BudgetExhausted(self.config.max_expansions));
        }
        let out = expand(tree, node, catalog, g)?;
        self.expansions += 1;
        Ok(out)
    }

    /// Expand the deepest, then leftmost, failed unexpanded condition from
    /// the last tick. Candidates without achievers are skipped; if none can
    /// be expanded the first of them is reported.
    pub fn replan_step(
        &mut self,
        tree: &mut BehaviorTree,
        failed: &[FailedCondition],
        catalog: &SkillCatalog,
        g: &SceneGraph,
    ) -> ReplanEvent {
        let mut candidates: Vec<(usize, &FailedCondition)> = failed
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.expanded)
            .collect();
        candidates.sort_by(|(ia, a), (ib, b)| b.depth.cmp(&a.depth).then(ia.cmp(ib)));
        let mut first_blocked = None;
        for (_, f) in candidates {
            match self.expand(tree, f.node, catalog, g) {
                Ok(alternatives) => {
                    if self.config.prune_redundant {
                        *tree = prune_redundant(tree);
                    }
                    return ReplanEvent::Expanded {
                        node: f.node,
                        literal: f.literal.clone(),
                        alternatives,
                    };
                }
                Err(PlannerError::BudgetExhausted(_)) => return ReplanEvent::BudgetExhausted,
                Err(PlannerError::NoAchiever(l)) => {
                    first_blocked.get_or_insert((f.node, l));
                }
                Err(_) => {}
            }
        }
        match first_blocked {
            Some((node, literal)) => ReplanEvent::NoAchiever { node, literal },
            None => ReplanEvent::Stuck,
        }
    }
}

pub fn plan_initial(goals: &[Literal]) -> Result<BehaviorTree, PlannerError> {
    if goals.is_empty() {
        return Err(PlannerError::EmptyGoals);
    }
    let mut seen = BTreeSet::new();
    let mut children = Vec::new();
    for g in goals {
        if !g.is_ground() {
            return Err(PlannerError::NotGround(g.clone()));
        }
        if seen.insert(g.clone()) {
            children.push(Node::condition(children.len() as NodeId + 1, g.clone()));
        }
    }
    Ok(BehaviorTree::new(Node::sequence(0, children)))
}

/// Expand an unexpanded condition node without budget accounting.
///
/// A negated derived literal becomes a sequence of the base literals that
/// make it true in `g`. Anything else becomes
/// `Fallback(condition, Sequence(preconditions.., action)..)` with one
/// sequence per achiever.
pub fn expand(
    tree: &mut BehaviorTree,
    node: NodeId,
    catalog: &SkillCatalog,
    g: &SceneGraph,
) -> Result<Vec<String>, PlannerError> {
    let literal = match tree.find(node).map(|n| &n.kind) {
        Some(NodeKind::Condition {
            literal,
            expanded: false,
        }) => literal.clone(),
        _ => return Err(PlannerError::NotExpandable(node)),
    };

    if let Some(parts) = ground_derived_negation(&literal, g).filter(|p| !p.is_empty()) {
        let seq_id = tree.alloc();
        let children = parts.iter().map(|l| Node::condition(tree.alloc(), l.clone())).collect();
        tree.replace_node(node, Node::sequence(seq_id, children))
            .expect("fresh ids cannot collide");
        return Ok(parts.iter().map(ToString::to_string).collect());
    }

    let achievers = catalog.achievers(&literal, g);
    if achievers.is_empty() {
        return Err(PlannerError::NoAchiever(literal));
    }
    let mut children = vec![Node {
        id: node,
        kind: NodeKind::Condition {
            literal,
            expanded: true,
        },
        children: Vec::new(),
    }];
    for skill in &achievers {
        let seq_id = tree.alloc();
        let mut seq: Vec<Node> = skill
            .preconditions
            .iter()
            .map(|p| Node::condition(tree.alloc(), p.clone()))
            .collect();
        seq.push(Node::action(tree.alloc(), skill.clone()));
        children.push(Node::sequence(seq_id, seq));
    }
    let fb_id = tree.alloc();
    tree.replace_node(node, Node::fallback(fb_id, children))
        .expect("fresh ids cannot collide");
    Ok(achievers.iter().map(ToString::to_string).collect())
}

/// Literals that hold whenever `n` returns Success within a tick. `None`
/// means the node never returns Success (it contains a reachable action on
/// every successful path).
fn guaranteed(n: &Node) -> Option<BTreeSet<Literal>> {
    match &n.kind {
        NodeKind::Condition { literal, .. } => Some([literal.clone()].into_iter().collect()),
        NodeKind::Action(_) => None,
        NodeKind::Sequence => {
            let mut out = BTreeSet::new();
            for c in &n.children {
                out.extend(guaranteed(c)?);
            }
            Some(out)
        }
        NodeKind::Fallback => n
            .children
            .iter()
            .filter_map(guaranteed)
            .reduce(|a, b| a.intersection(&b).cloned().collect()),
    }
}

/// Drop conditions already established earlier in the same tick and
/// collapse single-child control nodes. Root status and the selected
/// action are unchanged for every scene.
pub fn prune_redundant(tree: &BehaviorTree) -> BehaviorTree {
    let mut out = tree.clone();
    out.root = prune_node(&tree.root, &BTreeSet::new());
    out
}

fn known_true(n: &Node, known: &BTreeSet<Literal>) -> bool {
    n.literal().is_some_and(|l| known.contains(l))
}

fn prune_node(n: &Node, known: &BTreeSet<Literal>) -> Node {
    match &n.kind {
        NodeKind::Sequence => {
            let mut k = known.clone();
            let mut kept = Vec::new();
            let mut last_dropped = None;
            for c in &n.children {
                let p = prune_node(c, &k);
                if known_true(&p, &k) {
                    last_dropped = Some(p);
                } else {
                    kept.push(p);
                }
                if let Some(gs) = guaranteed(c) {
                    k.extend(gs);
                }
            }
            if kept.is_empty() {
                kept.extend(last_dropped);
            }
            collapse(n.id, NodeKind::Sequence, kept)
        }
        NodeKind::Fallback => {
            let mut kept = Vec::new();
            for c in &n.children {
                let p = prune_node(c, known);
                let stop = known_true(&p, known);
                kept.push(p);
                if stop {
                    break;
                }
            }
            collapse(n.id, NodeKind::Fallback, kept)
        }
        _ => n.clone(),
    }
}

fn collapse(id: NodeId, kind: NodeKind, mut children: Vec<Node>) -> Node {
    if children.len() == 1 {
        children.pop().expect("one child")
    } else {
        Node { id, kind, children }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::{Status, TickContext};
    use crate::literal::parse_literal;
    use crate::scene::{ObjectClass, SceneEdit, SceneObject};

    fn lit(s: &str) -> Literal {
        parse_literal(s).unwrap()
    }

    fn peg_scene() -> SceneGraph {
        SceneGraph::from_parts(
            [
                SceneObject::new("blue_peg", ObjectClass::Peg, "blue"),
                SceneObject::new("red_cube", ObjectClass::Cube, "red"),
                SceneObject::new("green_hole", ObjectClass::Hole, "green"),
                SceneObject::new("table", ObjectClass::Zone, ""),
            ],
            [lit("on(blue_peg, table)"), lit("on(red_cube, table)")],
        )
        .unwrap()
    }

    fn tick(t: &BehaviorTree, g: &SceneGraph) -> (Status, Vec<FailedCondition>, Option<String>) {
        let marks = BTreeSet::new();
        let mut ctx = TickContext::new(g, &marks);
        let s = t.tick(&mut ctx);
        (s, ctx.failed, ctx.pending.map(|p| p.skill.to_string()))
    }

    #[test]
    fn initial_plan_shapes() {
        let t = plan_initial(&[lit("inside(blue_peg, green_hole)")]).unwrap();
        assert_eq!(t.render(), "Sequence #0\n  Condition #1 inside(blue_peg, green_hole)\n");
        let two = plan_initial(&[lit("held(a)"), lit("held(b)")]).unwrap();
        assert_eq!(two.root.children.len(), 2);
        let dup = plan_initial(&[lit("held(a)"), lit("held(b)"), lit("held(a)")]).unwrap();
        let lits: Vec<String> = dup.root.children.iter().map(|c| c.literal().unwrap().to_string()).collect();
        assert_eq!(lits, ["held(a)", "held(b)"]);
        assert_eq!(plan_initial(&[]), Err(PlannerError::EmptyGoals));
        assert!(matches!(plan_initial(&[lit("held(X)")]), Err(PlannerError::NotGround(_))));
    }

    #[test]
    fn expand_goal_builds_place_subtree() {
        let g = peg_scene();
        let mut cat = SkillCatalog::builtin();
        cat.add_precondition_override_text("place_inside", "~occupied(Y)").unwrap();
        let mut t = plan_initial(&[lit("inside(blue_peg, green_hole)")]).unwrap();
        expand(&mut t, 1, &cat, &g).unwrap();
        let fb = &t.root.children[0];
        assert_eq!(fb.kind, NodeKind::Fallback);
        assert_eq!(fb.children.len(), 2);
        let seq: Vec<String> = fb.children[1]
            .children
            .iter()
            .map(|c| match &c.kind {
                NodeKind::Condition { literal, .. } => literal.to_string(),
                NodeKind::Action(s) => s.to_string(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(
            seq,
            [
                "~occupied(green_hole)",
                "held(blue_peg)",
                "reachable(green_hole)",
                "container(green_hole)",
                "place_inside(blue_peg, green_hole)"
            ]
        );
        assert!(matches!(expand(&mut t, 1, &cat, &g), Err(PlannerError::NotExpandable(1))));
    }

    #[test]
    fn hand_empty_splits_then_places_held_object() {
        let g = peg_scene().apply_edit(&SceneEdit::add(lit("held(red_cube)"))).unwrap();
        let cat = SkillCatalog::builtin();
        let mut t = BehaviorTree::new(Node::sequence(0, vec![Node::condition(1, lit("hand_empty"))]));
        let parts = expand(&mut t, 1, &cat, &g).unwrap();
        assert_eq!(parts, ["~held(red_cube)"]);
        let (s, failed, _) = tick(&t, &g);
        assert_eq!(s, Status::Failure);
        let node = failed[0].node;
        let alts = expand(&mut t, node, &cat, &g).unwrap();
        assert_eq!(alts[0], "place_on(red_cube, table)");
        assert_eq!(tick(&t, &g).2.as_deref(), Some("place_on(red_cube, table)"));
    }

    #[test]
    fn no_achiever_for_nonpickable_occupant_without_push() {
        let g = peg_scene()
            .apply_edit(&SceneEdit::add(lit("inside(red_cube, green_hole)")))
            .unwrap()
            .apply_edit(&"-pickable(red_cube)".parse().unwrap())
            .unwrap();
        let cat = SkillCatalog::builtin();
        let mut t = BehaviorTree::new(Node::condition(0, lit("~inside(red_cube, green_hole)")));
        assert_eq!(
            expand(&mut t, 0, &cat, &g),
            Err(PlannerError::NoAchiever(lit("~inside(red_cube, green_hole)")))
        );
        let mut with_push = cat.clone();
        with_push
            .admit_latent(&crate::skill::SuggestedSkillSpec::from_template(
                &crate::skill::SkillTemplate::push(),
            ))
            .unwrap();
        let alts = expand(&mut t, 0, &with_push, &g).unwrap();
        assert!(alts.iter().all(|a| a.starts_with("push(red_cube")));
    }

    #[test]
    fn budget_is_enforced() {
        let g = peg_scene();
        let cat = SkillCatalog::builtin();
        let mut p = Planner::new(PlannerConfig {
            max_expansions: 1,
            prune_redundant: false,
        });
        let mut t = p.plan_initial(&[lit("inside(blue_peg, green_hole)")]).unwrap();
        let (_, failed, _) = tick(&t, &g);
        assert!(matches!(p.replan_step(&mut t, &failed, &cat, &g), ReplanEvent::Expanded { .. }));
        let (s, failed, _) = tick(&t, &g);
        assert_eq!(s, Status::Failure);
        assert_eq!(p.replan_step(&mut t, &failed, &cat, &g), ReplanEvent::BudgetExhausted);
    }

    #[test]
    fn replan_reaches_running_on_peg_task() {
        let g = peg_scene();
        let cat = SkillCatalog::builtin();
        let mut p = Planner::new(PlannerConfig::default());
        let mut t = p.plan_initial(&[lit("inside(blue_peg, green_hole)")]).unwrap();
        let mut steps = 0;
        loop {
            let (s, failed, pending) = tick(&t, &g);
            if s == Status::Running {
                assert_eq!(pending.as_deref(), Some("grasp(blue_peg)"));
                break;
            }
            assert!(matches!(p.replan_step(&mut t, &failed, &cat, &g), ReplanEvent::Expanded { .. }));
            steps += 1;
        }
        assert_eq!((steps, p.expansions), (2, 2));
    }

    #[test]
    fn unachievable_goal_reports_no_achiever() {
        let g = peg_scene();
        let cat = SkillCatalog::builtin();
        let mut p = Planner::new(PlannerConfig::default());
        let mut t = p.plan_initial(&[lit("~pickable(blue_peg)")]).unwrap();
        let (_, failed, _) = tick(&t, &g);
        assert_eq!(
            p.replan_step(&mut t, &failed, &cat, &g),
            ReplanEvent::NoAchiever {
                node: 1,
                literal: lit("~pickable(blue_peg)")
            }
        );
    }

    #[test]
    fn prune_collapses_inner_duplicate() {
        let t = BehaviorTree::new(Node::sequence(
            0,
            vec![
                Node::condition(1, lit("hand_empty")),
                Node::fallback(
                    2,
                    vec![Node::condition(3, lit("hand_empty")), Node::condition(4, lit("held(a)"))],
                ),
                Node::condition(5, lit("held(b)")),
            ],
        ));
        let p = prune_redundant(&t);
        assert_eq!(p.render(), "Sequence #0\n  Condition #1 hand_empty\n  Condition #5 held(b)\n");
        let single = BehaviorTree::new(Node::fallback(0, vec![Node::condition(1, lit("held(a)"))]));
        assert_eq!(prune_redundant(&single).render(), "Condition #1 held(a)\n");
    }

    #[test]
    fn prune_keeps_minimal_tree() {
        let g = peg_scene();
        let cat = SkillCatalog::builtin();
        let mut t = BehaviorTree::new(Node::condition(0, lit("inside(blue_peg, green_hole)")));
        expand(&mut t, 0, &cat, &g).unwrap();
        let held = tick(&t, &g).1.into_iter().find(|f| !f.expanded).unwrap();
        expand(&mut t, held.node, &cat, &g).unwrap();
        assert_eq!(prune_redundant(&t), t);
    }
}
