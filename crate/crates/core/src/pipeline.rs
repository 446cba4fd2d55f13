//! Orchestration loop: plan, verify before execution, then tick the tree
//! against the world with per-activation checks, corrections and history.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bt::{BehaviorTree, Node, NodeKind, Status, TickContext};
use crate::history::{
    AppliedCorrection, CheckRecord, Disturbance, ExecutionHistory, HistoryEntry, VerdictSummary,
};
use crate::literal::{Literal, Term};
use crate::planner::{Planner, PlannerConfig, ReplanEvent};
use crate::reasoner::{ExecutedSkill, Reasoner, ReasonerInput};
use crate::scene::SceneGraph;
use crate::simulator::{apply_lenient, nominal_edits, Expectation, Scenario, Tag, Trigger, World};
use crate::skill::{GroundSkill, SkillCatalog};
use crate::verdict::{CheckKind, Correction, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Verify the plan once, then execute open loop on a belief model.
    Pre,
    /// Per-activation checks only.
    Reactive,
    /// Both.
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Pre, Mode::Reactive, Mode::Combined];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Pre => "pre",
            Mode::Reactive => "reactive",
            Mode::Combined => "combined",
        }
    }

    pub fn pre_check(self) -> bool {
        matches!(self, Mode::Pre | Mode::Combined)
    }

    pub fn runtime_checks(self) -> bool {
        matches!(self, Mode::Reactive | Mode::Combined)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected pre, reactive or combined)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub mode: Mode,
    pub max_ticks: u64,
    /// History entries shown to the reasoner.
    pub history_window: usize,
    pub planner: PlannerConfig,
    pub max_precheck_rounds: usize,
    /// Consecutive postcondition failures of one ground skill before the
    /// run gives up.
    pub max_post_failures: usize,
}

impl RunConfig {
    pub fn new(mode: Mode) -> RunConfig {
        RunConfig {
            mode,
            max_ticks: 100,
            history_window: 5,
            planner: PlannerConfig::default(),
            max_precheck_rounds: 3,
            max_post_failures: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Termination {
    /// The tree reported Success.
    Completed,
    Unrecovered { reason: String },
    TickBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckCounter {
    pub queries: u64,
    pub detected: u64,
    pub identified: u64,
    pub corrected: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerRecord {
    pub tick: u64,
    /// Checks recorded before this event, for ordering within a tick.
    pub after_checks: usize,
    pub event: ReplanEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub task: String,
    pub mode: Mode,
    pub tags: Vec<Tag>,
    pub expect: Expectation,
    pub goals: Vec<Literal>,
    pub task_success: bool,
    pub termination: Termination,
    pub ticks: u64,
    pub skills_executed: u64,
    pub reasoner_queries: u64,
    pub reasoner_errors: Vec<String>,
    pub counters: BTreeMap<CheckKind, CheckCounter>,
    pub planner_events: Vec<PlannerRecord>,
    pub history: ExecutionHistory,
    pub initial_scene: SceneGraph,
    pub final_scene: String,
    pub final_tree: String,
    pub active_skills: Vec<String>,
    pub precondition_overrides: BTreeMap<String, Vec<Literal>>,
}

impl RunReport {
    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn normalized(&self) -> RunReport {
        let mut r = self.clone();
        for e in &mut r.history.entries {
            e.timestamp_us = 0;
        }
        r
    }

    /// Counters rebuilt from the history log.
    pub fn recount(history: &ExecutionHistory) -> BTreeMap<CheckKind, CheckCounter> {
        let mut out: BTreeMap<CheckKind, CheckCounter> =
            CheckKind::ALL.into_iter().map(|k| (k, CheckCounter::default())).collect();
        for c in &history.checks {
            let e = out.entry(c.verdict.kind).or_default();
            e.queries += 1;
            if c.verdict.failure_detected {
                e.detected += 1;
            }
            if c.verdict.identification.is_some() {
                e.identified += 1;
            }
        }
        for c in history.corrections.iter().filter(|c| c.applied) {
            out.entry(c.kind).or_default().corrected += 1;
        }
        out
    }

    pub fn detected_any(&self) -> bool {
        self.history.detected_checks().next().is_some()
    }
}

/// Ground skills and scenes visited by a nominal dry run of `tree`.
type Trajectory = BTreeSet<(String, BTreeSet<Literal>)>;

fn nominal_trajectory(tree: &BehaviorTree, scene: &SceneGraph, catalog: &SkillCatalog, cfg: PlannerConfig) -> Trajectory {
    let mut tree = tree.clone();
    let mut g = scene.clone();
    let mut planner = Planner::new(cfg);
    let marks = BTreeSet::new();
    let mut out = Trajectory::new();
    for _ in 0..200 {
        let mut ctx = TickContext::new(&g, &marks);
        let status = tree.tick(&mut ctx);
        let (failed, pending) = (ctx.failed, ctx.pending);
        match status {
            Status::Success => break,
            Status::Failure => {
                if !matches!(planner.replan_step(&mut tree, &failed, catalog, &g), ReplanEvent::Expanded { .. }) {
                    break;
                }
            }
            Status::Running => {
                let skill = pending.expect("running tick selects an action").skill;
                out.insert((skill.to_string(), g.facts()));
                let edits = nominal_edits(&skill, &g);
                apply_lenient(&mut g, &edits);
            }
        }
    }
    out
}

/// Replace constants bound by an in-tree action of `skill` with the
/// parameter names, so a suggestion made for one grounding applies to all.
fn lift(tree: &BehaviorTree, skill: &str, lit: &Literal) -> Option<Literal> {
    let action = tree
        .root
        .walk()
        .into_iter()
        .filter_map(Node::skill)
        .find(|s| s.name == skill)?;
    let mut lifted = lit.clone();
    for t in &mut lifted.args {
        if let Term::Const(c) = t {
            if let Some((var, _)) = action.binding.iter().find(|(_, v)| *v == c) {
                *t = Term::Var(var.clone());
            }
        }
    }
    Some(lifted)
}

/// Make in-tree actions of `skill` list the override among their
/// preconditions.
fn refresh_actions(node: &mut Node, skill: &str, lifted: &Literal) {
    if let NodeKind::Action(s) = &mut node.kind {
        if s.name == skill {
            let g = lifted.substitute(&s.binding);
            if !s.preconditions.contains(&g) {
                s.preconditions.insert(0, g);
            }
        }
    }
    for c in &mut node.children {
        refresh_actions(c, skill, lifted);
    }
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    scenario: &'a Scenario,
    reasoner: &'a mut dyn Reasoner,
    world: World,
    /// Believed scene in open-loop execution; `None` means the true scene
    /// is observed.
    belief: Option<SceneGraph>,
    catalog: SkillCatalog,
    planner: Planner,
    tree: BehaviorTree,
    marks: BTreeSet<Literal>,
    history: ExecutionHistory,
    planner_events: Vec<PlannerRecord>,
    reasoner_errors: Vec<String>,
    tick: u64,
    activation: u64,
    start: Instant,
    verified: Trajectory,
    post_failures: BTreeMap<String, usize>,
}

type Step = Result<(), String>;

impl<'a> Runner<'a> {
    fn view(&self) -> &SceneGraph {
        self.belief.as_ref().unwrap_or(&self.world.scene)
    }

    fn input(&self, kind: CheckKind) -> ReasonerInput {
        ReasonerInput::new(
            kind,
            &self.tree,
            self.view(),
            &self.catalog,
            &self.scenario.goals,
            &self.history,
            self.cfg.history_window,
        )
    }

    fn query(&mut self, input: ReasonerInput) -> Result<Verdict, String> {
        let v = self
            .reasoner
            .judge(&input)
            .and_then(|v| {
                v.validate()
                    .map(|_| v)
                    .map_err(crate::reasoner::ReasonerError::SchemaViolation)
            })
            .map_err(|e| {
                let msg = format!("{} check: {e}", input.kind);
                self.reasoner_errors.push(msg.clone());
                msg
            })?;
        self.history.checks.push(CheckRecord {
            tick: self.tick,
            activation: (self.tick > 0).then_some(self.activation),
            verdict: v.clone(),
        });
        Ok(v)
    }

    fn fire(&mut self, at: Trigger) {
        for r in self.world.fire_faults(at) {
            self.history.disturbances.push(Disturbance {
                tick: self.tick,
                trigger: r.trigger,
                note: r.note,
                diff: r.diff,
                error: r.error,
            });
        }
    }

    fn record_correction(&mut self, kind: CheckKind, correction: Correction, result: &Step) {
        self.history.corrections.push(AppliedCorrection {
            tick: self.tick,
            check: self.history.checks.len() - 1,
            kind,
            correction,
            applied: result.is_ok(),
            error: result.as_ref().err().cloned(),
        });
    }

    fn tick_tree(&self) -> (Status, Vec<crate::bt::FailedCondition>, Option<GroundSkill>) {
        let mut ctx = TickContext::new(self.view(), &self.marks);
        let s = self.tree.tick(&mut ctx);
        (s, ctx.failed, ctx.pending.map(|p| p.skill))
    }

    fn replan(&mut self, failed: &[crate::bt::FailedCondition]) -> ReplanEvent {
        let g = self.view().clone();
        let ev = self.planner.replan_step(&mut self.tree, failed, &self.catalog, &g);
        self.planner_events.push(PlannerRecord {
            tick: self.tick,
            after_checks: self.history.checks.len(),
            event: ev.clone(),
        });
        ev
    }

    /// Grow a fresh tree until it selects an action or cannot grow.
    fn expansion_pass(&mut self) {
        for _ in 0..=self.cfg.planner.max_expansions {
            let (status, failed, _) = self.tick_tree();
            if status != Status::Failure {
                return;
            }
            if !matches!(self.replan(&failed), ReplanEvent::Expanded { .. }) {
                return;
            }
        }
    }

    fn fresh_plan(&mut self) -> Step {
        self.tree = self.planner.plan_initial(&self.scenario.goals).map_err(|e| e.to_string())?;
        self.expansion_pass();
        Ok(())
    }

    fn apply_add_precondition(&mut self, skill: &str, lit: &Literal, insert: bool) -> Step {
        let lifted = lift(&self.tree, skill, lit).ok_or_else(|| format!("{skill} is not in the behavior tree"))?;
        let added = self
            .catalog
            .add_precondition_override(skill, lifted.clone())
            .map_err(|e| e.to_string())?;
        if insert {
            let n = self.tree.insert_precondition(skill, &lifted);
            refresh_actions(&mut self.tree.root, skill, &lifted);
            if !added && n == 0 {
                return Err(format!("{lifted} is already a precondition of {skill}"));
            }
        } else if !added {
            return Err(format!("{lifted} is already a precondition of {skill}"));
        }
        Ok(())
    }

    fn apply_add_skill(&mut self, spec: &crate::skill::SuggestedSkillSpec) -> Step {
        self.catalog.admit_latent(spec).map_err(|e| e.to_string())
    }

    fn pre_execution(&mut self) -> Step {
        self.fresh_plan()?;
        let mut applied = 0;
        loop {
            let input = self.input(CheckKind::PreExecution);
            let v = self.query(input)?;
            if !v.failure_detected {
                if self.cfg.mode == Mode::Combined {
                    self.verified = nominal_trajectory(&self.tree, self.view(), &self.catalog, self.cfg.planner);
                }
                return Ok(());
            }
            if applied == self.cfg.max_precheck_rounds {
                return Ok(());
            }
            let correction = v.correction.expect("validated");
            let result = match &correction {
                Correction::AddPrecondition { skill, literal } => self.apply_add_precondition(skill, literal, false),
                Correction::AddSkill { spec } => self.apply_add_skill(spec),
                other => Err(format!("{} cannot be applied before execution", other.variant())),
            };
            self.record_correction(CheckKind::PreExecution, correction, &result);
            if result.is_err() {
                return Ok(());
            }
            applied += 1;
            self.fresh_plan()?;
        }
    }

    /// Runtime checks before executing `skill`. `Ok(true)` defers the
    /// execution to a later tick.
    fn before_execution(&mut self, skill: &GroundSkill) -> Result<(bool, Option<VerdictSummary>), String> {
        let input = self.input(CheckKind::PreconditionVerify).with_pending(skill);
        let v = self.query(input)?;
        let summary = Some(VerdictSummary::from(&v));
        if v.failure_detected {
            let correction = v.correction.expect("validated");
            let result = match &correction {
                Correction::MarkUnsatisfied { literals } => {
                    self.marks.extend(literals.iter().cloned());
                    Ok(())
                }
                other => Err(format!("unexpected {}", other.variant())),
            };
            self.record_correction(CheckKind::PreconditionVerify, correction, &result);
            result?;
            return Ok((true, summary));
        }
        if self.cfg.mode == Mode::Combined && self.verified.contains(&(skill.to_string(), self.view().facts())) {
            return Ok((false, summary));
        }

        let input = self.input(CheckKind::PreconditionSuggest).with_pending(skill);
        let v = self.query(input)?;
        if v.failure_detected {
            let correction = v.correction.expect("validated");
            let result = match &correction {
                Correction::AddPrecondition { skill, literal } => self.apply_add_precondition(skill, literal, true),
                other => Err(format!("unexpected {}", other.variant())),
            };
            self.record_correction(CheckKind::PreconditionSuggest, correction, &result);
            result?;
            return Ok((true, summary));
        }

        let input = self.input(CheckKind::SkillSuggest).with_pending(skill);
        let v = self.query(input)?;
        if v.failure_detected {
            let correction = v.correction.expect("validated");
            let result = match &correction {
                Correction::AddSkill { spec } => self.apply_add_skill(spec),
                other => Err(format!("unexpected {}", other.variant())),
            };
            self.record_correction(CheckKind::SkillSuggest, correction, &result);
            result?;
            return Ok((true, summary));
        }
        Ok((false, summary))
    }

    fn execute(&mut self, skill: GroundSkill, precheck: Option<VerdictSummary>) -> Step {
        let before = self.world.scene.clone();
        let exec = self.world.execute(&skill);
        self.fire(Trigger::AfterExecution(self.activation));
        if let Some(b) = &mut self.belief {
            let edits = nominal_edits(&skill, b);
            apply_lenient(b, &edits);
        }
        let mut postcheck = None;
        let mut outcome = Ok(());
        if self.cfg.mode.runtime_checks() {
            let input = self.input(CheckKind::PostconditionVerify).with_executed(ExecutedSkill {
                skill: skill.clone(),
                before,
                after: self.world.scene.clone(),
            });
            let v = self.query(input)?;
            postcheck = Some(VerdictSummary::from(&v));
            let key = skill.to_string();
            if v.failure_detected {
                self.record_correction(CheckKind::PostconditionVerify, Correction::ReportSkillFailure, &Ok(()));
                let n = self.post_failures.entry(key.clone()).or_default();
                *n += 1;
                if *n >= self.cfg.max_post_failures {
                    outcome = Err(format!("{key} failed {n} times in a row"));
                }
            } else {
                self.post_failures.remove(&key);
            }
        }
        self.marks.clear();
        self.history.entries.push(HistoryEntry {
            tick: self.tick,
            activation: self.activation,
            timestamp_us: self.start.elapsed().as_micros() as u64,
            skill: skill.to_string(),
            outcome: exec.outcome,
            precheck,
            postcheck,
            diff: exec.diff,
        });
        outcome
    }

    /// The planner found no achiever: ask for a missing skill.
    fn missing_skill(&mut self, node: crate::bt::NodeId, literal: &Literal) -> Step {
        if !self.cfg.mode.runtime_checks() {
            return Err(format!("no achiever for {literal}"));
        }
        let served = self.tree.served_action(node).cloned();
        let mut input = self.input(CheckKind::SkillSuggest).with_unachievable(literal);
        if let Some(s) = &served {
            input = input.with_pending(s);
        }
        let v = self.query(input)?;
        if !v.failure_detected {
            return Err(format!("no achiever for {literal}"));
        }
        let correction = v.correction.expect("validated");
        let result = match &correction {
            Correction::AddSkill { spec } => self.apply_add_skill(spec),
            other => Err(format!("unexpected {}", other.variant())),
        };
        self.record_correction(CheckKind::SkillSuggest, correction, &result);
        result
    }

    fn run(&mut self) -> Termination {
        if self.cfg.mode.pre_check() {
            if let Err(reason) = self.pre_execution() {
                return Termination::Unrecovered { reason };
            }
        } else if let Err(reason) = self.fresh_plan() {
            return Termination::Unrecovered { reason };
        }
        self.fire(Trigger::PreExecution);

        while self.tick < self.cfg.max_ticks {
            self.tick += 1;
            self.fire(Trigger::AtTick(self.tick));
            let (status, failed, pending) = self.tick_tree();
            let step = match status {
                Status::Success => return Termination::Completed,
                Status::Failure => match self.replan(&failed) {
                    ReplanEvent::Expanded { .. } => Ok(()),
                    ReplanEvent::NoAchiever { node, literal } => self.missing_skill(node, &literal),
                    ReplanEvent::BudgetExhausted => Err("planner expansion budget exhausted".into()),
                    ReplanEvent::Stuck => Err("tree failed with nothing left to expand".into()),
                },
                Status::Running => {
                    let skill = pending.expect("running tick selects an action");
                    self.activation += 1;
                    self.fire(Trigger::AfterPrecheck(self.activation));
                    let checked = if self.cfg.mode.runtime_checks() {
                        self.before_execution(&skill)
                    } else {
                        Ok((false, None))
                    };
                    match checked {
                        Ok((true, _)) => Ok(()),
                        Ok((false, precheck)) => self.execute(skill, precheck),
                        Err(e) => Err(e),
                    }
                }
            };
            if let Err(reason) = step {
                return Termination::Unrecovered { reason };
            }
        }
        Termination::TickBudget
    }
}

/// Execute `scenario` end to end and report.
pub fn run_task(scenario: &Scenario, cfg: &RunConfig, reasoner: &mut dyn Reasoner) -> RunReport {
    let world = World::from_scenario(scenario);
    let initial_scene = world.scene.clone();
    let mut r = Runner {
        cfg,
        scenario,
        reasoner,
        belief: (cfg.mode == Mode::Pre).then(|| world.scene.clone()),
        world,
        catalog: scenario.catalog(),
        planner: Planner::new(cfg.planner),
        tree: BehaviorTree::new(Node::sequence(0, Vec::new())),
        marks: BTreeSet::new(),
        history: ExecutionHistory::default(),
        planner_events: Vec::new(),
        reasoner_errors: Vec::new(),
        tick: 0,
        activation: 0,
        start: Instant::now(),
        verified: Trajectory::new(),
        post_failures: BTreeMap::new(),
    };
    let termination = r.run();
    let goals_hold = scenario
        .goals
        .iter()
        .all(|g| r.world.scene.evaluate(g) == Ok(true));
    let counters = RunReport::recount(&r.history);
    RunReport {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        task: scenario.task.clone(),
        mode: cfg.mode,
        tags: scenario.tags.clone(),
        expect: scenario.expect.clone(),
        goals: scenario.goals.clone(),
        task_success: termination == Termination::Completed && goals_hold,
        termination,
        ticks: r.tick,
        skills_executed: r.history.entries.len() as u64,
        reasoner_queries: r.history.checks.len() as u64,
        reasoner_errors: r.reasoner_errors,
        counters,
        planner_events: r.planner_events,
        initial_scene,
        final_scene: r.world.scene.serialize(),
        final_tree: r.tree.render(),
        active_skills: r.catalog.active.iter().map(|t| t.name.clone()).collect(),
        precondition_overrides: r.catalog.overrides.clone(),
        history: r.history,
    }
}
