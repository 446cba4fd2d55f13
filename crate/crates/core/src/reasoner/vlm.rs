//! Vision-language reasoner over an OpenAI-compatible chat-completions
//! endpoint. Each check is a short conversation with one round-trip per
//! phase; a clear detection ends it after the first.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::literal::{parse_literal, Literal};
use crate::skill::SuggestedSkillSpec;
use crate::verdict::{CheckKind, Correction, Culprit, Identification, Verdict};

use super::{Reasoner, ReasonerError, ReasonerInput};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: usize,
    /// Hard cap on round-trips for one reasoner instance.
    #[serde(default)]
    pub max_calls: Option<usize>,
    /// Directory with replacement prompt templates.
    #[serde(default)]
    pub prompt_dir: Option<String>,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> usize {
    2
}

impl EndpointConfig {
    pub fn load(path: &Path) -> Result<EndpointConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Detection,
    Identification,
    Correction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// One round-trip. `phase` and `check` label the request for fixtures and
/// logs; only `messages` goes over the wire.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub phase: Phase,
    pub check: CheckKind,
    pub messages: Vec<ChatMessage>,
}

pub trait Transport {
    /// Send the conversation and return the assistant's reply text.
    fn complete(&mut self, req: &ChatRequest) -> Result<String, ReasonerError>;
}

pub struct HttpTransport {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: EndpointConfig) -> HttpTransport {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        HttpTransport { config, agent }
    }
}

impl Transport for HttpTransport {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, ReasonerError> {
        let body = json!({
            "model": self.config.model,
            "messages": req.messages,
            "temperature": 0,
            "response_format": {"type": "json_object"},
        });
        let mut request = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(var) = &self.config.api_key_env {
            let key = std::env::var(var).map_err(|_| ReasonerError::Transport(format!("environment variable {var} is not set")))?;
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = request
            .send_json(&body)
            .map_err(|e| ReasonerError::Transport(e.to_string()))?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ReasonerError::MalformedResponse(format!("response body: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ReasonerError::MalformedResponse("no choices[0].message.content".into()))
    }
}

/// One recorded reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub phase: Phase,
    pub check: CheckKind,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default)]
    pub scenario: String,
    #[serde(default)]
    pub mode: String,
    pub exchanges: Vec<Exchange>,
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Fixture, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Replays recorded replies in order, checking that each request asks for
/// the phase and check the recording answered.
pub struct FixtureTransport {
    queue: VecDeque<Exchange>,
}

impl FixtureTransport {
    pub fn new(fixture: Fixture) -> FixtureTransport {
        FixtureTransport {
            queue: fixture.exchanges.into(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }
}

impl Transport for FixtureTransport {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, ReasonerError> {
        let next = self
            .queue
            .pop_front()
            .ok_or_else(|| ReasonerError::Transport("fixture exhausted".into()))?;
        if next.phase != req.phase || next.check != req.check {
            return Err(ReasonerError::Transport(format!(
                "fixture expected {:?}/{} but the request is {:?}/{}",
                next.phase, next.check, req.phase, req.check
            )));
        }
        Ok(next.reply)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub detection: String,
    pub identification: String,
    pub correction: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: include_str!("../../prompts/system.txt").to_string(),
            detection: include_str!("../../prompts/detection.txt").to_string(),
            identification: include_str!("../../prompts/identification.txt").to_string(),
            correction: include_str!("../../prompts/correction.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Defaults, with any of `system.txt`, `detection.txt`,
    /// `identification.txt`, `correction.txt` found in `dir` taking over.
    pub fn load_dir(dir: &Path) -> Result<PromptTemplates, String> {
        let mut t = PromptTemplates::default();
        for (name, slot) in [
            ("system.txt", &mut t.system),
            ("detection.txt", &mut t.detection),
            ("identification.txt", &mut t.identification),
            ("correction.txt", &mut t.correction),
        ] {
            let p = dir.join(name);
            if p.exists() {
                *slot = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
            }
        }
        Ok(t)
    }
}

/// Substitute `{name}` placeholders; other braces are left alone.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn question(input: &ReasonerInput) -> String {
    let pending = input.pending.as_ref().map(|s| s.to_string()).unwrap_or_default();
    match input.kind {
        CheckKind::PreExecution => "Before execution starts: will the planned behavior tree fail in this scene \
             because a skill lacks a precondition or because a needed skill is missing?"
            .into(),
        CheckKind::PreconditionVerify => {
            format!("The skill {pending} is about to run. Does any of its preconditions fail in the current scene?")
        }
        CheckKind::PostconditionVerify => {
            let s = input.executed.as_ref().map(|e| e.skill.to_string()).unwrap_or_default();
            format!("The skill {s} has just run. Does any of its postconditions fail in the scene after execution?")
        }
        CheckKind::PreconditionSuggest => format!(
            "The skill {pending} is about to run and its listed preconditions hold. Will it still fail because \
             a condition it needs is missing from its preconditions, while the available skills could establish it?"
        ),
        CheckKind::SkillSuggest => match &input.unachievable {
            Some(l) => format!("No available skill achieves {l}. Is a skill missing that the task needs?"),
            None => format!(
                "The skill {pending} is about to run. Will it fail because the task needs a skill that is not \
                 among the available skills?"
            ),
        },
    }
}

fn focus(input: &ReasonerInput) -> String {
    let mut out = String::new();
    if let Some(s) = &input.pending {
        let pre: Vec<String> = s.preconditions.iter().map(Literal::to_string).collect();
        let post: Vec<String> = s.postconditions.iter().map(Literal::to_string).collect();
        out.push_str(&format!(
            "Pending skill: {s}\n  preconditions: {}\n  postconditions: {}\n",
            pre.join(", "),
            post.join(", ")
        ));
    }
    if let Some(e) = &input.executed {
        let post: Vec<String> = e.skill.postconditions.iter().map(Literal::to_string).collect();
        out.push_str(&format!(
            "Executed skill: {}\n  postconditions: {}\n  scene changes: {}\n",
            e.skill,
            post.join(", "),
            e.before.diff(&e.after)
        ));
    }
    if let Some(l) = &input.unachievable {
        out.push_str(&format!("Unachievable condition: {l}\n"));
    }
    out
}

/// Pull the JSON object out of a reply, tolerating code fences and prose.
fn extract_json(reply: &str) -> Result<Value, String> {
    let start = reply.find('{').ok_or("reply contains no JSON object")?;
    let end = reply.rfind('}').ok_or("reply contains no JSON object")?;
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    serde_json::from_str(&reply[start..=end]).map_err(|e| format!("invalid JSON: {e}"))
}

/// Parse failures are retried; vocabulary or variant violations are not.
enum ParseError {
    Malformed(String),
    Schema(String),
}

fn parse_detection(reply: &str) -> Result<bool, ParseError> {
    let v = extract_json(reply).map_err(ParseError::Malformed)?;
    v["failure_detected"]
        .as_bool()
        .ok_or_else(|| ParseError::Malformed("field `failure_detected` must be a boolean".into()))
}

fn str_field<'a>(v: &'a Value, field: &str) -> Result<&'a str, ParseError> {
    v[field]
        .as_str()
        .ok_or_else(|| ParseError::Malformed(format!("field `{field}` must be a string")))
}

fn parse_identification(reply: &str) -> Result<Identification, ParseError> {
    let v = extract_json(reply).map_err(ParseError::Malformed)?;
    let skill = str_field(&v, "skill")?.to_string();
    let culprit = Culprit::parse(str_field(&v, "culprit")?)
        .map_err(|e| ParseError::Schema(format!("culprit: {e}")))?;
    let cause = str_field(&v, "cause")?.to_string();
    Ok(Identification { skill, culprit, cause })
}

fn vocab(text: &str) -> Result<Literal, ParseError> {
    parse_literal(text).map_err(|e| ParseError::Schema(format!("`{text}`: {e}")))
}

fn parse_correction(reply: &str, kind: CheckKind) -> Result<Correction, ParseError> {
    let v = extract_json(reply).map_err(ParseError::Malformed)?;
    let c = &v["correction"];
    if !c.is_object() {
        return Err(ParseError::Malformed("field `correction` must be an object".into()));
    }
    let ty = str_field(c, "type")?;
    if !kind.allowed_corrections().contains(&ty) {
        return Err(ParseError::Schema(format!("correction type `{ty}` is not allowed for {kind}")));
    }
    match ty {
        "add_precondition" => Ok(Correction::AddPrecondition {
            skill: str_field(c, "skill")?.to_string(),
            literal: vocab(str_field(c, "literal")?)?,
        }),
        "mark_unsatisfied" => {
            let items = c["literals"]
                .as_array()
                .ok_or_else(|| ParseError::Malformed("field `literals` must be a list".into()))?;
            let literals = items
                .iter()
                .map(|i| i.as_str().ok_or_else(|| ParseError::Malformed("literals must be strings".into())).and_then(vocab))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Correction::MarkUnsatisfied { literals })
        }
        "report_skill_failure" => Ok(Correction::ReportSkillFailure),
        "add_skill" => {
            let spec: SuggestedSkillSpec = serde_json::from_value(c["spec"].clone())
                .map_err(|e| ParseError::Malformed(format!("field `spec`: {e}")))?;
            for t in spec.preconditions.iter().chain(&spec.postconditions) {
                vocab(t)?;
            }
            Ok(Correction::AddSkill { spec })
        }
        _ => unreachable!("checked against the allowed list"),
    }
}

/// The replies a faithful endpoint would give for `v`, phase by phase.
/// Used to record fixtures from reference verdicts.
pub fn phase_replies(v: &Verdict) -> Vec<(Phase, String)> {
    let mut out = vec![(Phase::Detection, json!({"failure_detected": v.failure_detected}).to_string())];
    if let Some(i) = &v.identification {
        out.push((
            Phase::Identification,
            json!({"skill": i.skill, "culprit": i.culprit.to_string(), "cause": i.cause}).to_string(),
        ));
    }
    if v.kind != CheckKind::PostconditionVerify {
        if let Some(c) = &v.correction {
            out.push((Phase::Correction, json!({ "correction": c }).to_string()));
        }
    }
    out
}

/// Wraps a reasoner and records the replies a faithful endpoint would
/// have sent for each of its verdicts.
pub struct Recorder<R> {
    pub inner: R,
    pub fixture: Fixture,
}

impl<R: Reasoner> Recorder<R> {
    pub fn new(inner: R, scenario: &str, mode: &str) -> Recorder<R> {
        Recorder {
            inner,
            fixture: Fixture {
                scenario: scenario.to_string(),
                mode: mode.to_string(),
                exchanges: Vec::new(),
            },
        }
    }
}

impl<R: Reasoner> Reasoner for Recorder<R> {
    fn judge(&mut self, input: &ReasonerInput) -> Result<Verdict, ReasonerError> {
        let v = self.inner.judge(input)?;
        self.fixture
            .exchanges
            .extend(phase_replies(&v).into_iter().map(|(phase, reply)| Exchange {
                phase,
                check: v.kind,
                reply,
            }));
        Ok(v)
    }
}

pub struct VlmReasoner {
    transport: Box<dyn Transport>,
    templates: PromptTemplates,
    retries: usize,
    max_calls: Option<usize>,
    /// Round-trips made so far, retries included.
    pub round_trips: usize,
}

impl VlmReasoner {
    pub fn new(transport: Box<dyn Transport>, templates: PromptTemplates, retries: usize) -> VlmReasoner {
        VlmReasoner {
            transport,
            templates,
            retries,
            max_calls: None,
            round_trips: 0,
        }
    }

    pub fn from_config(config: EndpointConfig) -> Result<VlmReasoner, String> {
        let templates = match &config.prompt_dir {
            Some(d) => PromptTemplates::load_dir(Path::new(d))?,
            None => PromptTemplates::default(),
        };
        let retries = config.retries;
        let max_calls = config.max_calls;
        let mut r = VlmReasoner::new(Box::new(HttpTransport::new(config)), templates, retries);
        r.max_calls = max_calls;
        Ok(r)
    }

    pub fn with_fixture(fixture: Fixture) -> VlmReasoner {
        VlmReasoner::new(Box::new(FixtureTransport::new(fixture)), PromptTemplates::default(), 2)
    }

    /// Ask one phase question, retrying with the parser's complaint.
    fn ask<T>(
        &mut self,
        conversation: &mut Vec<ChatMessage>,
        phase: Phase,
        check: CheckKind,
        prompt: String,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, ReasonerError> {
        let mut content = prompt.clone();
        for attempt in 0..=self.retries {
            if self.max_calls.is_some_and(|m| self.round_trips >= m) {
                return Err(ReasonerError::BudgetExceeded(format!("{} round-trips", self.round_trips)));
            }
            let mut messages = conversation.clone();
            messages.push(ChatMessage::new("user", content.clone()));
            self.round_trips += 1;
            let reply = self.transport.complete(&ChatRequest { phase, check, messages })?;
            match parse(&reply) {
                Ok(v) => {
                    conversation.push(ChatMessage::new("user", prompt));
                    conversation.push(ChatMessage::new("assistant", reply));
                    return Ok(v);
                }
                Err(ParseError::Schema(e)) => return Err(ReasonerError::SchemaViolation(e)),
                Err(ParseError::Malformed(e)) if attempt == self.retries => {
                    return Err(ReasonerError::MalformedResponse(format!(
                        "{phase:?} reply unusable after {} retries: {e}",
                        self.retries
                    )))
                }
                Err(ParseError::Malformed(e)) => {
                    content = format!(
                        "{prompt}\n\nYour previous reply could not be used: {e}\nAnswer again with the JSON object only."
                    );
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

impl Reasoner for VlmReasoner {
    fn judge(&mut self, input: &ReasonerInput) -> Result<Verdict, ReasonerError> {
        let kind = input.kind;
        let goals: Vec<String> = input.goals.iter().map(Literal::to_string).collect();
        let question = question(input);
        let focus = focus(input);
        let detection_prompt = render_template(
            &self.templates.detection,
            &[
                ("check", kind.name()),
                ("goals", &goals.join("\n")),
                ("tree", &input.tree_text),
                ("scene", &input.scene_text),
                ("skills", &input.skills_text),
                ("history", &input.history_text),
                ("focus", &focus),
                ("question", &question),
            ],
        );
        let mut conversation = vec![ChatMessage::new("system", self.templates.system.clone())];
        let detected = self.ask(&mut conversation, Phase::Detection, kind, detection_prompt, parse_detection)?;
        if !detected {
            return Ok(Verdict::clear(kind));
        }
        let ident_prompt = self.templates.identification.clone();
        let identification =
            self.ask(&mut conversation, Phase::Identification, kind, ident_prompt, parse_identification)?;
        let correction = if kind == CheckKind::PostconditionVerify {
            Correction::ReportSkillFailure
        } else {
            let summary = format!(
                "skill {}, culprit {}, cause: {}",
                identification.skill, identification.culprit, identification.cause
            );
            let prompt = render_template(
                &self.templates.correction,
                &[("identification", &summary), ("allowed", &kind.allowed_corrections().join(", "))],
            );
            self.ask(&mut conversation, Phase::Correction, kind, prompt, |r| parse_correction(r, kind))?
        };
        Ok(Verdict::detected(kind, identification, correction))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::BehaviorTree;
    use crate::history::ExecutionHistory;
    use crate::planner::plan_initial;
    use crate::scene::{ObjectClass, SceneGraph, SceneObject};
    use crate::skill::SkillCatalog;
    use std::cell::RefCell;
    use std::rc::Rc;

    /// Scripted transport that records every request.
    struct Script {
        replies: VecDeque<String>,
        seen: Rc<RefCell<Vec<ChatRequest>>>,
    }

    impl Transport for Script {
        fn complete(&mut self, req: &ChatRequest) -> Result<String, ReasonerError> {
            self.seen.borrow_mut().push(req.clone());
            self.replies
                .pop_front()
                .ok_or_else(|| ReasonerError::Transport("connection refused".into()))
        }
    }

    fn reasoner(replies: &[&str]) -> (VlmReasoner, Rc<RefCell<Vec<ChatRequest>>>) {
        let seen = Rc::new(RefCell::new(Vec::new()));
        let t = Script {
            replies: replies.iter().map(|s| s.to_string()).collect(),
            seen: seen.clone(),
        };
        (VlmReasoner::new(Box::new(t), PromptTemplates::default(), 2), seen)
    }

    fn input(kind: CheckKind) -> ReasonerInput {
        let g = SceneGraph::from_parts(
            [
                SceneObject::new("blue_peg", ObjectClass::Peg, "blue"),
                SceneObject::new("green_hole", ObjectClass::Hole, "green"),
            ],
            [],
        )
        .unwrap();
        let goals = [parse_literal("inside(blue_peg, green_hole)").unwrap()];
        let tree: BehaviorTree = plan_initial(&goals).unwrap();
        ReasonerInput::new(kind, &tree, &g, &SkillCatalog::builtin(), &goals, &ExecutionHistory::default(), 5)
    }

    #[test]
    fn clear_detection_is_one_round_trip() {
        let (mut r, seen) = reasoner(&[r#"{"failure_detected": false}"#]);
        let v = r.judge(&input(CheckKind::PreExecution)).unwrap();
        assert_eq!(v, Verdict::clear(CheckKind::PreExecution));
        assert_eq!(seen.borrow().len(), 1);
        let prompt = &seen.borrow()[0].messages[1].content;
        assert!(prompt.contains("Condition #1 inside(blue_peg, green_hole)"));
        assert!(prompt.contains("scene objects=2 relations=0"));
        assert!(!prompt.contains("{question}"));
    }

    #[test]
    fn three_phases_build_verdict() {
        let (mut r, seen) = reasoner(&[
            "```json\n{\"failure_detected\": true}\n```",
            r#"{"skill": "place_inside", "culprit": "~occupied(green_hole)", "cause": "black cube blocks the hole"}"#,
            r#"{"correction": {"type": "add_precondition", "skill": "place_inside", "literal": "~occupied(green_hole)"}}"#,
        ]);
        let v = r.judge(&input(CheckKind::PreExecution)).unwrap();
        assert_eq!(
            v.correction,
            Some(Correction::AddPrecondition {
                skill: "place_inside".into(),
                literal: parse_literal("~occupied(green_hole)").unwrap()
            })
        );
        let phases: Vec<Phase> = seen.borrow().iter().map(|r| r.phase).collect();
        assert_eq!(phases, [Phase::Detection, Phase::Identification, Phase::Correction]);
        // Later phases carry the earlier exchange.
        assert_eq!(seen.borrow()[2].messages.len(), 6);
    }

    #[test]
    fn postcondition_correction_is_fixed() {
        let (mut r, seen) = reasoner(&[
            r#"{"failure_detected": true}"#,
            r#"{"skill": "place_inside", "culprit": "inside(blue_peg, green_hole)", "cause": "on top"}"#,
        ]);
        let v = r.judge(&input(CheckKind::PostconditionVerify)).unwrap();
        assert_eq!(v.correction, Some(Correction::ReportSkillFailure));
        assert_eq!(seen.borrow().len(), 2);
    }

    #[test]
    fn garbage_fails_after_two_retries() {
        let (mut r, seen) = reasoner(&["no idea", "still no", "{\"failure\": 1}"]);
        let e = r.judge(&input(CheckKind::PreExecution)).unwrap_err();
        assert!(matches!(e, ReasonerError::MalformedResponse(_)), "{e}");
        assert_eq!(seen.borrow().len(), 3);
        let seen = seen.borrow();
        let retry = &seen[1].messages.last().unwrap().content;
        assert!(retry.contains("could not be used"));
        assert!(retry.starts_with(&seen[0].messages.last().unwrap().content));
    }

    #[test]
    fn retry_recovers() {
        let (mut r, _) = reasoner(&["hmm", r#"{"failure_detected": false}"#]);
        assert!(!r.judge(&input(CheckKind::PreExecution)).unwrap().failure_detected);
        assert_eq!(r.round_trips, 2);
    }

    #[test]
    fn unknown_predicate_is_schema_violation() {
        let (mut r, _) = reasoner(&[
            r#"{"failure_detected": true}"#,
            r#"{"skill": "place_inside", "culprit": "~occupied(green_hole)", "cause": "x"}"#,
            r#"{"correction": {"type": "add_precondition", "skill": "place_inside", "literal": "clear(green_hole)"}}"#,
        ]);
        let e = r.judge(&input(CheckKind::PreExecution)).unwrap_err();
        assert!(matches!(e, ReasonerError::SchemaViolation(_)), "{e}");
    }

    #[test]
    fn disallowed_variant_is_schema_violation() {
        let (mut r, _) = reasoner(&[
            r#"{"failure_detected": true}"#,
            r#"{"skill": "grasp", "culprit": "hand_empty", "cause": "x"}"#,
            r#"{"correction": {"type": "add_skill", "spec": {"name": "push"}}}"#,
        ]);
        let e = r.judge(&input(CheckKind::PreconditionVerify)).unwrap_err();
        assert!(matches!(e, ReasonerError::SchemaViolation(_)));
    }

    #[test]
    fn endpoint_down_is_transport_error() {
        let (mut r, _) = reasoner(&[]);
        assert!(matches!(
            r.judge(&input(CheckKind::PreExecution)),
            Err(ReasonerError::Transport(_))
        ));
    }

    #[test]
    fn call_budget() {
        let (mut r, _) = reasoner(&[r#"{"failure_detected": false}"#, r#"{"failure_detected": false}"#]);
        r.max_calls = Some(1);
        r.judge(&input(CheckKind::PreExecution)).unwrap();
        assert!(matches!(
            r.judge(&input(CheckKind::PreExecution)),
            Err(ReasonerError::BudgetExceeded(_))
        ));
    }

    #[test]
    fn phase_replies_roundtrip_through_parser() {
        let v = Verdict::detected(
            CheckKind::SkillSuggest,
            Identification {
                skill: "place_inside".into(),
                culprit: Culprit::Capability("push".into()),
                cause: "red cube cannot be grasped".into(),
            },
            Correction::AddSkill {
                spec: SuggestedSkillSpec::from_template(&crate::skill::SkillTemplate::push()),
            },
        );
        let replies: Vec<String> = phase_replies(&v).into_iter().map(|(_, r)| r).collect();
        let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
        let (mut r, _) = reasoner(&refs);
        assert_eq!(r.judge(&input(CheckKind::SkillSuggest)).unwrap(), v);
    }

    #[test]
    fn fixture_checks_labels() {
        let fx = Fixture {
            scenario: String::new(),
            mode: String::new(),
            exchanges: vec![Exchange {
                phase: Phase::Detection,
                check: CheckKind::PreconditionVerify,
                reply: r#"{"failure_detected": false}"#.into(),
            }],
        };
        let mut r = VlmReasoner::with_fixture(fx);
        assert!(matches!(r.judge(&input(CheckKind::PreExecution)), Err(ReasonerError::Transport(_))));
    }

    #[test]
    fn config_defaults() {
        let c: EndpointConfig = toml::from_str("url = \"http://localhost:8000/v1/chat/completions\"\nmodel = \"m\"").unwrap();
        assert_eq!((c.timeout_secs, c.retries, c.api_key_env), (60, 2, None));
    }
}
