//! Append-only execution log: skill executions, check outcomes, applied
//! corrections and scripted disturbances, each with its scene diff.

use serde::{Deserialize, Serialize};

use crate::scene::{SceneDiff, SceneError, SceneGraph};
use crate::simulator::{Outcome, Trigger};
use crate::verdict::{CheckKind, Correction, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub kind: CheckKind,
    pub detected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<String>,
}

impl From<&Verdict> for VerdictSummary {
    fn from(v: &Verdict) -> Self {
        VerdictSummary {
            kind: v.kind,
            detected: v.failure_detected,
            correction: v.correction.as_ref().map(|c| c.variant().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub tick: u64,
    pub activation: u64,
    /// Microseconds since the run started.
    pub timestamp_us: u64,
    pub skill: String,
    pub outcome: Outcome,
    pub precheck: Option<VerdictSummary>,
    pub postcheck: Option<VerdictSummary>,
    pub diff: SceneDiff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disturbance {
    pub tick: u64,
    pub trigger: Trigger,
    pub note: String,
    pub diff: SceneDiff,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedCorrection {
    pub tick: u64,
    /// Index into [`ExecutionHistory::checks`] of the verdict proposing it.
    pub check: usize,
    pub kind: CheckKind,
    pub correction: Correction,
    pub applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<u64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionHistory {
    pub entries: Vec<HistoryEntry>,
    pub checks: Vec<CheckRecord>,
    pub corrections: Vec<AppliedCorrection>,
    pub disturbances: Vec<Disturbance>,
}

impl ExecutionHistory {
    /// Text of the last `window` executions for reasoner prompts.
    pub fn excerpt(&self, window: usize) -> String {
        let start = self.entries.len().saturating_sub(window);
        let mut out = String::new();
        for e in &self.entries[start..] {
            let pre = e.precheck.as_ref().map_or("-", |v| if v.detected { "failed" } else { "ok" });
            let post = e.postcheck.as_ref().map_or("-", |v| if v.detected { "failed" } else { "ok" });
            out.push_str(&format!(
                "t={} {} outcome={:?} pre={pre} post={post} changes: {}\n",
                e.tick,
                e.skill,
                e.outcome,
                if e.diff.is_empty() { "none".to_string() } else { e.diff.to_string() }
            ));
        }
        if out.is_empty() {
            out.push_str("(no skills executed yet)\n");
        }
        out
    }

    /// Every non-empty diff of the true world in revision order.
    pub fn diffs_in_order(&self) -> Vec<&SceneDiff> {
        let mut all: Vec<&SceneDiff> = self
            .entries
            .iter()
            .map(|e| &e.diff)
            .chain(self.disturbances.iter().map(|d| &d.diff))
            .filter(|d| d.from_revision != d.to_revision)
            .collect();
        all.sort_by_key(|d| d.from_revision);
        all
    }

    /// Rebuild the final scene by applying every recorded diff to `initial`.
    pub fn replay(&self, initial: &SceneGraph) -> Result<SceneGraph, SceneError> {
        let mut g = initial.clone();
        for d in self.diffs_in_order() {
            g = g.apply_diff(d)?;
        }
        Ok(g)
    }

    pub fn detected_checks(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.verdict.failure_detected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::literal::parse_literal;
    use crate::scene::{ObjectClass, SceneEdit, SceneObject};

    #[test]
    fn replay_interleaved_diffs() {
        let g0 = SceneGraph::from_parts(
            [
                SceneObject::new("a", ObjectClass::Cube, ""),
                SceneObject::new("t", ObjectClass::Zone, ""),
            ],
            [parse_literal("on(a, t)").unwrap()],
        )
        .unwrap();
        let mut g = g0.clone();
        let mut h = ExecutionHistory::default();
        let before = g.clone();
        g.apply(&"+held(a)".parse::<SceneEdit>().unwrap()).unwrap();
        h.disturbances.push(Disturbance {
            tick: 1,
            trigger: Trigger::AtTick(1),
            note: String::new(),
            diff: before.diff(&g),
            error: None,
        });
        let before = g.clone();
        g.apply(&"+on(a, t)".parse::<SceneEdit>().unwrap()).unwrap();
        h.entries.push(HistoryEntry {
            tick: 1,
            activation: 1,
            timestamp_us: 0,
            skill: "place_on(a, t)".into(),
            outcome: Outcome::Success,
            precheck: None,
            postcheck: None,
            diff: before.diff(&g),
        });
        // Entries are listed before disturbances; replay must reorder.
        let r = h.replay(&g0).unwrap();
        assert_eq!(r.serialize(), g.serialize());
        assert_eq!(r.revision, g.revision);
        assert!(h.excerpt(5).contains("place_on(a, t)"));
    }
}
