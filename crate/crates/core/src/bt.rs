//! Reactive behavior-tree interpreter.
//!
//! Nodes are memoryless: every tick re-evaluates from the root. Action
//! leaves never run their skill inside the tick; the selected action is
//! handed back through [`TickContext::pending`] and the orchestration loop
//! executes it between the verification hooks.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::literal::{parse_literal, Literal};
use crate::scene::SceneGraph;
use crate::skill::GroundSkill;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BtError {
    #[error("no node with id #{0}")]
    UnknownNode(NodeId),
    #[error("node id #{0} already used")]
    IdCollision(NodeId),
    #[error("control node #{0} has no children")]
    EmptyControl(NodeId),
    #[error("leaf node #{0} has children")]
    LeafWithChildren(NodeId),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Sequence,
    Fallback,
    Condition { literal: Literal, expanded: bool },
    Action(GroundSkill),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub children: Vec<Node>,
}

impl Node {
    pub fn sequence(id: NodeId, children: Vec<Node>) -> Node {
        Node {
            id,
            kind: NodeKind::Sequence,
            children,
        }
    }

    pub fn fallback(id: NodeId, children: Vec<Node>) -> Node {
        Node {
            id,
            kind: NodeKind::Fallback,
            children,
        }
    }

    pub fn condition(id: NodeId, literal: Literal) -> Node {
        Node {
            id,
            kind: NodeKind::Condition {
                literal,
                expanded: false,
            },
            children: Vec::new(),
        }
    }

    pub fn action(id: NodeId, skill: GroundSkill) -> Node {
        Node {
            id,
            kind: NodeKind::Action(skill),
            children: Vec::new(),
        }
    }

    pub fn is_control(&self) -> bool {
        matches!(self.kind, NodeKind::Sequence | NodeKind::Fallback)
    }

    pub fn literal(&self) -> Option<&Literal> {
        match &self.kind {
            NodeKind::Condition { literal, .. } => Some(literal),
            _ => None,
        }
    }

    pub fn skill(&self) -> Option<&GroundSkill> {
        match &self.kind {
            NodeKind::Action(s) => Some(s),
            _ => None,
        }
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&Node> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.walk().into_iter().map(|n| n.id).collect()
    }

    pub fn find(&self, id: NodeId) -> Option<&Node> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn find_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Node::size).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), BtError> {
        let mut seen = BTreeSet::new();
        for n in self.walk() {
            if !seen.insert(n.id) {
                return Err(BtError::IdCollision(n.id));
            }
            if n.is_control() && n.children.is_empty() {
                return Err(BtError::EmptyControl(n.id));
            }
            if !n.is_control() && !n.children.is_empty() {
                return Err(BtError::LeafWithChildren(n.id));
            }
        }
        Ok(())
    }
}

/// A condition leaf that returned Failure during a tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedCondition {
    pub node: NodeId,
    pub depth: usize,
    pub literal: Literal,
    pub expanded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingAction {
    pub node: NodeId,
    pub skill: GroundSkill,
}

/// Per-tick inputs and outputs.
pub struct TickContext<'a> {
    pub scene: &'a SceneGraph,
    /// Literals forced to evaluate false regardless of the scene.
    pub marks: &'a BTreeSet<Literal>,
    pub pending: Option<PendingAction>,
    pub failed: Vec<FailedCondition>,
}

impl<'a> TickContext<'a> {
    pub fn new(scene: &'a SceneGraph, marks: &'a BTreeSet<Literal>) -> TickContext<'a> {
        TickContext {
            scene,
            marks,
            pending: None,
            failed: Vec::new(),
        }
    }
}

pub fn tick(node: &Node, ctx: &mut TickContext<'_>) -> Status {
    tick_at(node, ctx, 0)
}

fn tick_at(node: &Node, ctx: &mut TickContext<'_>, depth: usize) -> Status {
    match &node.kind {
        NodeKind::Sequence => {
            for c in &node.children {
                let s = tick_at(c, ctx, depth + 1);
                if s != Status::Success {
                    return s;
                }
            }
            Status::Success
        }
        NodeKind::Fallback => {
            for c in &node.children {
                let s = tick_at(c, ctx, depth + 1);
                if s != Status::Failure {
                    return s;
                }
            }
            Status::Failure
        }
        NodeKind::Condition { literal, expanded } => {
            let holds = !ctx.marks.contains(literal) && ctx.scene.evaluate(literal).unwrap_or(false);
            if holds {
                Status::Success
            } else {
                ctx.failed.push(FailedCondition {
                    node: node.id,
                    depth,
                    literal: literal.clone(),
                    expanded: *expanded,
                });
                Status::Failure
            }
        }
        NodeKind::Action(skill) => {
            if ctx.pending.is_none() {
                ctx.pending = Some(PendingAction {
                    node: node.id,
                    skill: skill.clone(),
                });
            }
            Status::Running
        }
    }
}

/// A tree plus its id allocator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorTree {
    pub root: Node,
    next_id: NodeId,
}

impl BehaviorTree {
    pub fn new(root: Node) -> BehaviorTree {
        let next_id = root.ids().into_iter().max().map_or(0, |m| m + 1);
        BehaviorTree { root, next_id }
    }

    pub fn alloc(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn tick(&self, ctx: &mut TickContext<'_>) -> Status {
        tick(&self.root, ctx)
    }

    pub fn find(&self, id: NodeId) -> Option<&Node> {
        self.root.find(id)
    }

    pub fn find_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.root.find_mut(id)
    }

    /// Swap the node `id` for `subtree`. The subtree may reuse `id` itself
    /// but no other id already in the tree.
    pub fn replace_node(&mut self, id: NodeId, subtree: Node) -> Result<(), BtError> {
        let target = self.find(id).ok_or(BtError::UnknownNode(id))?;
        let replaced: BTreeSet<NodeId> = target.ids().into_iter().collect();
        let remaining: BTreeSet<NodeId> = self
            .root
            .ids()
            .into_iter()
            .filter(|i| !replaced.contains(i))
            .collect();
        subtree.validate()?;
        if let Some(c) = subtree.ids().into_iter().find(|i| remaining.contains(i)) {
            return Err(BtError::IdCollision(c));
        }
        let max = subtree.ids().into_iter().max().unwrap_or(0);
        *self.find_mut(id).expect("checked above") = subtree;
        self.next_id = self.next_id.max(max + 1);
        Ok(())
    }

    /// Parent of `id` and the child's index in it.
    pub fn parent_of(&self, id: NodeId) -> Option<(NodeId, usize)> {
        self.root.walk().into_iter().find_map(|n| {
            n.children
                .iter()
                .position(|c| c.id == id)
                .map(|i| (n.id, i))
        })
    }

    /// The action a condition node guards: the closest enclosing sequence
    /// that ends in an action.
    pub fn served_action(&self, id: NodeId) -> Option<&GroundSkill> {
        let mut cur = id;
        while let Some((parent, _)) = self.parent_of(cur) {
            let p = self.find(parent)?;
            if p.kind == NodeKind::Sequence {
                if let Some(s) = p.children.last().and_then(Node::skill) {
                    return Some(s);
                }
            }
            cur = parent;
        }
        None
    }

    /// Put a condition in front of every action of `skill` whose binding
    /// grounds `lit`, skipping sequences that already test it. Returns the
    /// number of conditions added.
    pub fn insert_precondition(&mut self, skill: &str, lit: &Literal) -> usize {
        let targets: Vec<(NodeId, Literal)> = self
            .root
            .walk()
            .into_iter()
            .filter_map(|n| {
                let s = n.skill()?;
                (s.name == skill).then(|| (n.id, lit.substitute(&s.binding)))
            })
            .filter(|(_, g)| g.is_ground())
            .collect();
        let mut added = 0;
        for (action, ground) in targets {
            let parent = self
                .parent_of(action)
                .filter(|(p, _)| self.find(*p).map(|n| &n.kind) == Some(&NodeKind::Sequence));
            let id = self.alloc();
            match parent {
                Some((parent, _)) => {
                    let node = self.find_mut(parent).expect("parent exists");
                    if node.children.iter().any(|c| c.literal() == Some(&ground)) {
                        continue;
                    }
                    node.children.insert(0, Node::condition(id, ground));
                }
                None => {
                    // Pruned or root action: wrap it in its own sequence.
                    let seq_id = self.alloc();
                    let act = self.find(action).expect("action exists").clone();
                    let wrapped = Node::sequence(seq_id, vec![Node::condition(id, ground), act]);
                    let slot = self.find_mut(action).expect("action exists");
                    *slot = wrapped;
                }
            }
            added += 1;
        }
        added
    }

    pub fn render(&self) -> String {
        render(&self.root)
    }
}

/// Indented listing, two spaces per level:
///
/// ```text
/// Sequence #0
///   Fallback #1
///     Condition #2 inside(blue_peg, green_hole) [expanded]
///     Sequence #3
///       Condition #4 held(blue_peg)
///       Action #5 place_inside(blue_peg, green_hole)
/// ```
pub fn render(root: &Node) -> String {
    let mut out = String::new();
    render_into(root, 0, &mut out);
    out
}

fn render_into(node: &Node, depth: usize, out: &mut String) {
    out.push_str(&"  ".repeat(depth));
    match &node.kind {
        NodeKind::Sequence => out.push_str(&format!("Sequence #{}", node.id)),
        NodeKind::Fallback => out.push_str(&format!("Fallback #{}", node.id)),
        NodeKind::Condition { literal, expanded } => {
            out.push_str(&format!("Condition #{} {literal}", node.id));
            if *expanded {
                out.push_str(" [expanded]");
            }
        }
        NodeKind::Action(s) => out.push_str(&format!("Action #{} {s}", node.id)),
    }
    out.push('\n');
    for c in &node.children {
        render_into(c, depth + 1, out);
    }
}

impl fmt::Display for BehaviorTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Parse the [`render`] format. Action lines are resolved back into
/// ground skills by `resolve(name, args)`.
pub fn parse_tree(
    text: &str,
    resolve: &dyn Fn(&str, &[String]) -> Option<GroundSkill>,
) -> Result<BehaviorTree, BtError> {
    let mut lines: Vec<(usize, usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();
        if indent % 2 != 0 {
            return Err(BtError::Parse {
                line: i + 1,
                reason: "odd indentation".into(),
            });
        }
        lines.push((i + 1, indent / 2, raw.trim()));
    }
    if lines.is_empty() {
        return Err(BtError::Parse {
            line: 0,
            reason: "empty tree".into(),
        });
    }
    let mut pos = 0;
    let root = parse_node(&lines, &mut pos, 0, resolve)?;
    if pos != lines.len() {
        return Err(BtError::Parse {
            line: lines[pos].0,
            reason: "more than one root".into(),
        });
    }
    root.validate()?;
    Ok(BehaviorTree::new(root))
}

fn parse_node(
    lines: &[(usize, usize, &str)],
    pos: &mut usize,
    depth: usize,
    resolve: &dyn Fn(&str, &[String]) -> Option<GroundSkill>,
) -> Result<Node, BtError> {
    let (line, d, text) = lines[*pos];
    let err = |reason: String| BtError::Parse { line, reason };
    if d != depth {
        return Err(err(format!("expected depth {depth}, found {d}")));
    }
    *pos += 1;
    let (kind, rest) = text.split_once(' ').ok_or_else(|| err("missing node id".into()))?;
    let rest = rest.trim();
    let (id_text, body) = rest.split_once(' ').unwrap_or((rest, ""));
    let id: NodeId = id_text
        .strip_prefix('#')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(format!("bad node id `{id_text}`")))?;
    let mut node = match kind {
        "Sequence" => Node::sequence(id, Vec::new()),
        "Fallback" => Node::fallback(id, Vec::new()),
        "Condition" => {
            let (lit_text, expanded) = match body.strip_suffix("[expanded]") {
                Some(l) => (l.trim(), true),
                None => (body, false),
            };
            let literal = parse_literal(lit_text).map_err(|e| err(e.to_string()))?;
            Node {
                id,
                kind: NodeKind::Condition { literal, expanded },
                children: Vec::new(),
            }
        }
        "Action" => {
            let (name, args) = body
                .split_once('(')
                .and_then(|(n, a)| Some((n, a.strip_suffix(')')?)))
                .ok_or_else(|| err(format!("bad action `{body}`")))?;
            let args: Vec<String> = args
                .split(',')
                .map(|a| a.trim().to_string())
                .filter(|a| !a.is_empty())
                .collect();
            let skill = resolve(name, &args).ok_or_else(|| err(format!("unknown skill `{body}`")))?;
            Node::action(id, skill)
        }
        other => return Err(err(format!("unknown node kind `{other}`"))),
    };
    while *pos < lines.len() && lines[*pos].1 > depth {
        node.children.push(parse_node(lines, pos, depth + 1, resolve)?);
    }
    Ok(node)
}
