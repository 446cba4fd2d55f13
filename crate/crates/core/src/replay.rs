//! Human-readable reconstruction of a run from its saved report.

use std::fmt::Write as _;

use thiserror::Error;

use crate::pipeline::{RunReport, Termination};
use crate::planner::ReplanEvent;
use crate::scene::SceneError;
use crate::simulator::Trigger;
use crate::verdict::CheckKind;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("recorded diffs do not apply")]
    Diff(#[from] SceneError),
    #[error("replayed scene differs from the recorded final scene")]
    Mismatch { replayed: String, recorded: String },
}

enum Event<'a> {
    Planner(&'a ReplanEvent),
    Disturbance(&'a crate::history::Disturbance),
    Check(&'a crate::history::CheckRecord),
    Correction(&'a crate::history::AppliedCorrection),
    Execution(&'a crate::history::HistoryEntry),
}

/// Tick-by-tick story of the run. Fails if replaying the recorded diffs
/// does not reproduce the recorded final scene.
pub fn narrative(report: &RunReport) -> Result<String, ReplayError> {
    let replayed = report.history.replay(&report.initial_scene)?.serialize();
    if replayed != report.final_scene {
        return Err(ReplayError::Mismatch {
            replayed,
            recorded: report.final_scene.clone(),
        });
    }

    // Within a tick: early disturbances, then planner steps, checks and
    // corrections in the order they happened, then the execution, whatever
    // was scripted to follow it and the postcondition check.
    let h = &report.history;
    let mut events: Vec<(u64, u8, usize, Event)> = Vec::new();
    let phase_of = |kind: CheckKind| if kind == CheckKind::PostconditionVerify { 4 } else { 1 };
    events.extend(h.disturbances.iter().enumerate().map(|(i, d)| {
        let late = matches!(d.trigger, Trigger::AfterExecution(_) | Trigger::PreExecution);
        (d.tick, if late { 3 } else { 0 }, i, Event::Disturbance(d))
    }));
    events.extend(
        report
            .planner_events
            .iter()
            .map(|p| (p.tick, 1, 4 * p.after_checks, Event::Planner(&p.event))),
    );
    events.extend(h.checks.iter().enumerate().map(|(i, c)| (c.tick, phase_of(c.verdict.kind), 4 * i + 2, Event::Check(c))));
    events.extend(
        h.corrections
            .iter()
            .map(|c| (c.tick, phase_of(c.kind), 4 * c.check + 3, Event::Correction(c))),
    );
    events.extend(h.entries.iter().enumerate().map(|(i, e)| (e.tick, 2, i, Event::Execution(e))));
    // Stable: equal keys keep insertion order.
    events.sort_by_key(|(t, phase, i, _)| (*t, *phase, *i));

    let mut out = String::new();
    let _ = writeln!(out, "scenario {} ({}), mode {}", report.scenario, report.task, report.mode);
    let goals: Vec<String> = report.goals.iter().map(|g| g.to_string()).collect();
    let _ = writeln!(out, "goals: {}", goals.join(", "));
    let mut last_tick = None;
    for (tick, _, _, ev) in &events {
        if last_tick != Some(*tick) {
            let _ = writeln!(out, "{}", if *tick == 0 { "before execution".to_string() } else { format!("tick {tick}") });
            last_tick = Some(*tick);
        }
        let _ = match ev {
            Event::Planner(ReplanEvent::Expanded { literal, alternatives, .. }) => {
                writeln!(out, "  plan: expand {literal} via {}", alternatives.join(" | "))
            }
            Event::Planner(ReplanEvent::NoAchiever { literal, .. }) => writeln!(out, "  plan: nothing achieves {literal}"),
            Event::Planner(ReplanEvent::BudgetExhausted) => writeln!(out, "  plan: expansion budget exhausted"),
            Event::Planner(ReplanEvent::Stuck) => writeln!(out, "  plan: nothing left to expand"),
            Event::Disturbance(d) => writeln!(
                out,
                "  disturbance [{}] {}: {}",
                d.trigger,
                d.note,
                d.error.clone().unwrap_or_else(|| d.diff.to_string())
            ),
            Event::Check(c) => match (&c.verdict.identification, c.verdict.failure_detected) {
                (Some(id), true) => writeln!(
                    out,
                    "  {} check: failure in {} ({}): {}",
                    c.verdict.kind, id.skill, id.culprit, id.cause
                ),
                _ if c.verdict.failure_detected => writeln!(out, "  {} check: failure", c.verdict.kind),
                _ => writeln!(out, "  {} check: ok", c.verdict.kind),
            },
            Event::Correction(c) => match &c.error {
                None => writeln!(out, "  applied: {}", c.correction),
                Some(e) => writeln!(out, "  rejected: {} ({e})", c.correction),
            },
            Event::Execution(e) => writeln!(
                out,
                "  execute {} -> {:?}: {}",
                e.skill,
                e.outcome,
                if e.diff.is_empty() { "no change".to_string() } else { e.diff.to_string() }
            ),
        };
    }
    let end = match &report.termination {
        Termination::Completed => "tree succeeded".to_string(),
        Termination::Unrecovered { reason } => format!("unrecovered: {reason}"),
        Termination::TickBudget => "tick budget exhausted".to_string(),
    };
    let _ = writeln!(
        out,
        "end after {} ticks, {} skills, {} queries: {end}; task {}",
        report.ticks,
        report.skills_executed,
        report.reasoner_queries,
        if report.task_success { "achieved" } else { "not achieved" }
    );
    let _ = writeln!(out, "final scene:\n{}", report.final_scene.trim_end());
    Ok(out)
}
