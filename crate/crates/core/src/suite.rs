//! Batch evaluation: every scenario under every mode, repeated, with
//! aggregate detection, identification and correction rates.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{run_task, Mode, RunConfig, RunReport, SCHEMA_VERSION};
use crate::reasoner::Reasoner;
use crate::simulator::{Scenario, Tag};
use crate::verdict::Correction;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no scenario files under {0}")]
    Empty(String),
}

fn collect_toml(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), SuiteError> {
    let io = |source| SuiteError::Io {
        path: dir.display().to_string(),
        source,
    };
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            collect_toml(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "toml") {
            out.push(path);
        }
    }
    Ok(())
}

/// A scenario file that could not be loaded; the suite runs without it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErroredCase {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedSuite {
    pub scenarios: Vec<Scenario>,
    pub errored: Vec<ErroredCase>,
}

/// Load every `*.toml` scenario below `dir`, ordered by path. Files that
/// fail to load are set aside as errored cases.
pub fn load_dir(dir: &Path) -> Result<LoadedSuite, SuiteError> {
    let mut paths = Vec::new();
    collect_toml(dir, &mut paths)?;
    if paths.is_empty() {
        return Err(SuiteError::Empty(dir.display().to_string()));
    }
    paths.sort();
    let mut out = LoadedSuite::default();
    for p in paths {
        match Scenario::load(&p) {
            Ok(s) => out.scenarios.push(s),
            Err(e) => out.errored.push(ErroredCase {
                path: p.display().to_string(),
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Whether `mode` is expected to recover the scenario: open-loop runs
/// cannot see faults that only appear during execution.
pub fn expected_success(r: &RunReport) -> bool {
    r.mode.runtime_checks() || !r.tags.contains(&Tag::RuntimeOnly)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Rate {
    pub hits: u32,
    pub total: u32,
}

impl Rate {
    fn count(&mut self, hit: bool) {
        self.total += 1;
        self.hits += u32::from(hit);
    }

    /// `None` when nothing was counted.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| f64::from(self.hits) / f64::from(self.total))
    }
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{}/{} ({:.0}%)", self.hits, self.total, v * 100.0),
            None => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub mode: Mode,
    /// Over failure scenarios.
    pub task_success: Rate,
    pub detection: Rate,
    /// Over failure scenarios where something was detected.
    pub identification: Rate,
    pub correction: Rate,
    /// Over scenarios that expect a skill to be added.
    pub skill_suggestion: Rate,
    pub nominal_success: Rate,
    /// Nominal runs where some check reported a failure.
    pub false_alarms: u32,
    pub mean_queries: f64,
    pub mean_ticks: f64,
}

/// Did every detected verdict name an expected culprit skill?
pub fn identified(r: &RunReport) -> bool {
    r.history.detected_checks().all(|c| {
        c.verdict
            .identification
            .as_ref()
            .is_some_and(|i| r.expect.culprit_skills.contains(&i.skill))
    })
}

pub fn suggested_expected_skill(r: &RunReport) -> bool {
    let Some(want) = &r.expect.skill_addition else { return false };
    r.history
        .corrections
        .iter()
        .any(|c| c.applied && matches!(&c.correction, Correction::AddSkill { spec } if &spec.name == want))
}

impl ModeMetrics {
    pub fn compute(mode: Mode, runs: &[RunReport]) -> ModeMetrics {
        let mut m = ModeMetrics {
            mode,
            task_success: Rate::default(),
            detection: Rate::default(),
            identification: Rate::default(),
            correction: Rate::default(),
            skill_suggestion: Rate::default(),
            nominal_success: Rate::default(),
            false_alarms: 0,
            mean_queries: 0.0,
            mean_ticks: 0.0,
        };
        let runs: Vec<&RunReport> = runs.iter().filter(|r| r.mode == mode).collect();
        for r in &runs {
            if r.tags.contains(&Tag::Nominal) {
                m.nominal_success.count(r.task_success);
                m.false_alarms += u32::from(r.detected_any());
                continue;
            }
            m.task_success.count(r.task_success);
            let detected = r.detected_any();
            m.detection.count(detected);
            if detected {
                m.identification.count(identified(r));
                m.correction.count(r.task_success);
            }
            if r.expect.skill_addition.is_some() {
                m.skill_suggestion.count(suggested_expected_skill(r));
            }
        }
        if !runs.is_empty() {
            let n = runs.len() as f64;
            m.mean_queries = runs.iter().map(|r| r.reasoner_queries as f64).sum::<f64>() / n;
            m.mean_ticks = runs.iter().map(|r| r.ticks as f64).sum::<f64>() / n;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub modes: Vec<Mode>,
    /// Runs per (scenario, mode); all must agree for the suite to count
    /// as deterministic.
    pub reps: usize,
    /// Template for every run; its mode is overwritten.
    pub run: RunConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            modes: Mode::ALL.to_vec(),
            reps: 1,
            run: RunConfig::new(Mode::Combined),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub reps: usize,
    pub deterministic: bool,
    /// Scenario and mode pairs whose repetitions disagreed.
    pub divergent: Vec<String>,
    pub errored: Vec<ErroredCase>,
    pub runs: Vec<RunReport>,
    pub metrics: Vec<ModeMetrics>,
}

/// Run every scenario under every mode. `reasoner` builds a fresh
/// reasoner per run so runs share no state.
pub fn run_suite<F>(suite: &LoadedSuite, cfg: &SuiteConfig, reasoner: F) -> SuiteReport
where
    F: Fn() -> Box<dyn Reasoner> + Sync,
{
    let jobs: Vec<(&Scenario, Mode)> = suite
        .scenarios
        .iter()
        .flat_map(|s| cfg.modes.iter().map(move |&m| (s, m)))
        .collect();
    let results: Vec<(RunReport, bool)> = jobs
        .par_iter()
        .map(|&(s, mode)| {
            let run_cfg = RunConfig { mode, ..cfg.run.clone() };
            let first = run_task(s, &run_cfg, &mut reasoner());
            let reference = first.normalized();
            let stable = (1..cfg.reps).all(|_| run_task(s, &run_cfg, &mut reasoner()).normalized() == reference);
            (first, stable)
        })
        .collect();
    let divergent = results
        .iter()
        .filter(|(_, stable)| !stable)
        .map(|(r, _)| format!("{}/{}", r.scenario, r.mode))
        .collect::<Vec<_>>();
    let runs: Vec<RunReport> = results.into_iter().map(|(r, _)| r).collect();
    let metrics = cfg.modes.iter().map(|&m| ModeMetrics::compute(m, &runs)).collect();
    SuiteReport {
        schema_version: SCHEMA_VERSION,
        reps: cfg.reps,
        deterministic: divergent.is_empty(),
        divergent,
        errored: suite.errored.clone(),
        runs,
        metrics,
    }
}

impl SuiteReport {
    pub fn run(&self, scenario: &str, mode: Mode) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.scenario == scenario && r.mode == mode)
    }

    /// Runs expected to succeed that did not.
    pub fn unexpected_failures(&self) -> impl Iterator<Item = &RunReport> {
        self.runs.iter().filter(|r| expected_success(r) && !r.task_success)
    }

    pub fn metrics(&self, mode: Mode) -> Option<&ModeMetrics> {
        self.metrics.iter().find(|m| m.mode == mode)
    }

    /// Per-run lines followed by the per-mode aggregate table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<26} {:<9} {:<7} {:>7} {:>5} {:>5}", "scenario", "mode", "success", "queries", "ticks", "skills");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:<26} {:<9} {:<7} {:>7} {:>5} {:>5}",
                r.scenario,
                r.mode,
                if r.task_success { "yes" } else { "no" },
                r.reasoner_queries,
                r.ticks,
                r.skills_executed
            );
        }
        out.push('\n');
        for m in &self.metrics {
            let _ = writeln!(out, "[{}]", m.mode);
            let _ = writeln!(out, "  task success      {}", m.task_success);
            let _ = writeln!(out, "  detection         {}", m.detection);
            let _ = writeln!(out, "  identification    {}", m.identification);
            let _ = writeln!(out, "  correction        {}", m.correction);
            let _ = writeln!(out, "  skill suggestion  {}", m.skill_suggestion);
            let _ = writeln!(out, "  nominal success   {} ({} false alarms)", m.nominal_success, m.false_alarms);
            let _ = writeln!(out, "  mean queries      {:.2}", m.mean_queries);
            let _ = writeln!(out, "  mean ticks        {:.2}", m.mean_ticks);
        }
        for e in &self.errored {
            let _ = writeln!(out, "errored: {}: {}", e.path, e.error);
        }
        let _ = writeln!(
            out,
            "\n{} repetitions per run: {}",
            self.reps,
            if self.deterministic { "deterministic".to_string() } else { format!("divergent {:?}", self.divergent) }
        );
        out
    }
}
