//! Adapter for a chat-completion style HTTP endpoint.
//!
//! The model is prompted with the history and must answer in the special
//! token protocol:
//!
//! ```text
//! Action: go to shelf 1
//! Action: take mug 1 from shelf 1\n[Reflection]<reflection> ... </reflection>\nAction: go to desk 1
//! [Knowledge]
//! ```
//!
//! A bare `[Knowledge]` answer makes the adapter call the knowledge provider
//! once and send a follow-up turn carrying the knowledge text.

use std::time::Duration;

use serde_json::{json, Value};

use super::templates::match_template;
use super::{
    Agent, DecodeMode, KnowledgeProvider, KnowledgeRef, PolicyError, Reflection, StepInput, StructuredOutput,
};
use crate::minienv::{Action, History};

/// Moves one JSON request to the endpoint and returns the JSON reply.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, body: &Value) -> Result<Value, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        Self { agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

impl Transport for HttpTransport {
    fn post(&self, url: &str, body: &Value) -> Result<Value, String> {
        let resp = self.agent.post(url).send_json(body.clone()).map_err(|e| e.to_string())?;
        resp.into_json::<Value>().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// System prompt sent before every history.
    pub request_template: String,
    pub attempts: u32,
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, request_template: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: "default".into(),
            request_template: request_template.into(),
            attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

pub struct RemotePolicy {
    cfg: RemoteConfig,
    transport: Box<dyn Transport>,
}

/// A parsed model reply.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Fast(Action),
    Slow { first: Action, reflection: String, revised: Action },
    NeedKnowledge,
}

fn parse_action_line(line: &str) -> Result<Action, PolicyError> {
    let l = line.trim();
    let l = l.strip_prefix("Action:").map(str::trim).unwrap_or(l);
    l.parse().map_err(|_| PolicyError::Parse(format!("cannot read an action from `{l}`")))
}

/// Parse one reply in the special token protocol.
pub fn parse_reply(text: &str) -> Result<Reply, PolicyError> {
    let text = text.trim();
    if text.contains("[Knowledge]") {
        return Ok(Reply::NeedKnowledge);
    }
    if let Some((head, tail)) = text.split_once("[Reflection]") {
        let first = head
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| PolicyError::Parse("reflection without a first action".into()))
            .and_then(parse_action_line)?;
        let body = tail
            .trim_start()
            .strip_prefix("<reflection>")
            .ok_or_else(|| PolicyError::Parse("missing <reflection> tag".into()))?;
        let (reflection, after) =
            body.split_once("</reflection>").ok_or_else(|| PolicyError::Parse("unclosed reflection tag".into()))?;
        let revised = after
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| PolicyError::Parse("reflection without a revised action".into()))
            .and_then(parse_action_line)?;
        return Ok(Reply::Slow { first, reflection: reflection.trim().to_string(), revised });
    }
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with("Action:"))
        .or_else(|| text.lines().next())
        .ok_or_else(|| PolicyError::Parse("empty reply".into()))?;
    Ok(Reply::Fast(parse_action_line(line)?))
}

pub fn render_history(h: &History) -> String {
    let mut s = format!("{}\n", h.initial.text);
    for st in &h.steps {
        s.push_str(&format!("Action: {}\nObservation: {}\n", st.action, st.observation.text));
    }
    s
}

impl RemotePolicy {
    pub fn new(cfg: RemoteConfig, transport: Box<dyn Transport>) -> Self {
        Self { cfg, transport }
    }

    pub fn http(cfg: RemoteConfig, timeout: Duration) -> Self {
        Self::new(cfg, Box::new(HttpTransport::new(timeout)))
    }

    fn messages(&self, h: &History) -> Vec<Value> {
        vec![
            json!({"role": "system", "content": self.cfg.request_template}),
            json!({"role": "user", "content": render_history(h)}),
        ]
    }

    /// One completion with retries and exponential backoff.
    fn complete(&self, messages: &[Value]) -> Result<String, PolicyError> {
        let body = json!({"model": self.cfg.model, "temperature": 0, "messages": messages});
        let mut last = String::new();
        for attempt in 0..self.cfg.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.cfg.backoff * 2u32.pow(attempt - 1));
            }
            match self.transport.post(&self.cfg.endpoint, &body) {
                Ok(v) => {
                    return v["choices"][0]["message"]["content"]
                        .as_str()
                        .map(str::to_string)
                        .ok_or_else(|| PolicyError::Parse("reply has no choices[0].message.content".into()));
                }
                Err(e) => {
                    log::warn!("remote attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(PolicyError::Remote(format!("{} attempts failed: {last}", self.cfg.attempts.max(1))))
    }

    fn with_knowledge(&self, step: &StepInput, k: KnowledgeRef) -> Result<StructuredOutput, PolicyError> {
        let mut m = self.messages(step.history);
        m.push(json!({"role": "assistant", "content": "[Knowledge]"}));
        m.push(json!({
            "role": "user",
            "content": format!("[Knowledge]<knowledge> {} </knowledge>\nGive the next action as `Action: ...`.", k.text),
        }));
        match parse_reply(&self.complete(&m)?)? {
            Reply::Fast(a) => Ok(StructuredOutput::knowledgeable(k, a)),
            _ => Err(PolicyError::Parse("expected a single action after knowledge".into())),
        }
    }
}

impl Agent for RemotePolicy {
    fn predict(&self, step: &StepInput) -> Result<Action, PolicyError> {
        match parse_reply(&self.complete(&self.messages(step.history))?)? {
            Reply::Fast(a) | Reply::Slow { first: a, .. } => Ok(a),
            Reply::NeedKnowledge => Err(PolicyError::Parse("expected an action, got a knowledge request".into())),
        }
    }

    fn rethink(&self, step: &StepInput, wrong: &Action) -> Result<(String, Action), PolicyError> {
        let mut m = self.messages(step.history);
        m.push(json!({"role": "assistant", "content": format!("Action: {wrong}")}));
        m.push(json!({
            "role": "user",
            "content": "That action is wrong. Reconsider your situation and change another action. \
                        Answer as `[Reflection]<reflection> ... </reflection>` followed by `Action: ...`.",
        }));
        let reply = self.complete(&m)?;
        match parse_reply(&format!("Action: {wrong}\n{reply}"))? {
            Reply::Slow { reflection, revised, .. } => Ok((reflection, revised)),
            _ => Err(PolicyError::Parse("expected a reflection".into())),
        }
    }

    fn decode(
        &self,
        step: &StepInput,
        mode: DecodeMode,
        provider: &mut dyn KnowledgeProvider,
    ) -> Result<StructuredOutput, PolicyError> {
        if mode == DecodeMode::ForceKnow {
            let k = provider.provide(step.history)?;
            return self.with_knowledge(step, k);
        }
        match parse_reply(&self.complete(&self.messages(step.history))?)? {
            Reply::Fast(a) => Ok(StructuredOutput::fast(a)),
            Reply::Slow { first, revised, .. } if !mode.allows_refl() || first == revised => {
                Ok(StructuredOutput::fast(first))
            }
            Reply::Slow { first, reflection, revised } => {
                let template_id = match_template(&reflection).map(|(t, _, _)| t).unwrap_or(7);
                Ok(StructuredOutput::slow(first, Reflection { template_id, text: reflection }, revised))
            }
            Reply::NeedKnowledge if mode.allows_know() => {
                let k = provider.provide(step.history)?;
                self.with_knowledge(step, k)
            }
            Reply::NeedKnowledge => Err(PolicyError::Parse(format!("knowledge requested under mode {mode}"))),
        }
    }
}
