//! Canonical text of an output `y`.
//!
//! ```text
//! fast:           <action>
//! slow:           <a_p>\n[Reflection]<reflection> <ret> </reflection>\n<gold>
//! knowledgeable:  [Knowledge]<knowledge> <know> </knowledge>\n<gold>
//! ```

use thiserror::Error;

use crate::minienv::Action;
use crate::policy::templates::match_template;
use crate::policy::{KnowledgeRef, Reflection, Situation, StructuredOutput};

pub const REFLECTION_TOKEN: &str = "[Reflection]";
pub const REFLECTION_OPEN: &str = "<reflection>";
pub const REFLECTION_CLOSE: &str = "</reflection>";
pub const KNOWLEDGE_TOKEN: &str = "[Knowledge]";
pub const KNOWLEDGE_OPEN: &str = "<knowledge>";
pub const KNOWLEDGE_CLOSE: &str = "</knowledge>";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{message} at `{span}`")]
pub struct ParseError {
    pub message: String,
    pub span: String,
}

fn err(message: &str, span: &str) -> ParseError {
    let span: String = span.chars().take(40).collect();
    ParseError { message: message.to_string(), span }
}

pub fn render(y: &StructuredOutput) -> String {
    match y.situation {
        Situation::Fast => y.final_action.to_string(),
        Situation::Slow => format!(
            "{}\n{REFLECTION_TOKEN}{REFLECTION_OPEN} {} {REFLECTION_CLOSE}\n{}",
            y.first_action,
            y.reflection.as_ref().map(|r| r.text.as_str()).unwrap_or_default(),
            y.final_action
        ),
        Situation::Knowledgeable => format!(
            "{KNOWLEDGE_TOKEN}{KNOWLEDGE_OPEN} {} {KNOWLEDGE_CLOSE}\n{}",
            y.knowledge.as_ref().map(|k| k.text.as_str()).unwrap_or_default(),
            y.final_action
        ),
    }
}

fn action(s: &str) -> Result<Action, ParseError> {
    s.parse().map_err(|_| err("unknown leading token", s))
}

/// Parse canonical text. The knowledge entry id is not part of the text
/// and comes back as `None`.
pub fn parse(text: &str) -> Result<StructuredOutput, ParseError> {
    if let Some(rest) = text.strip_prefix(KNOWLEDGE_TOKEN) {
        let body = rest
            .strip_prefix(KNOWLEDGE_OPEN)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| err("missing knowledge tag", rest))?;
        let close = format!(" {KNOWLEDGE_CLOSE}\n");
        let (know, gold) = body.split_once(&close).ok_or_else(|| err("unclosed knowledge tag", body))?;
        let a = action(gold)?;
        return Ok(StructuredOutput::knowledgeable(KnowledgeRef { entry_id: None, text: know.to_string() }, a));
    }
    let lines: Vec<&str> = text.split('\n').collect();
    match lines.as_slice() {
        [one] => Ok(StructuredOutput::fast(action(one)?)),
        [first, refl, gold] => {
            let a = action(first)?;
            let inner = refl
                .strip_prefix(REFLECTION_TOKEN)
                .ok_or_else(|| err("expected reflection token", refl))?
                .strip_prefix(REFLECTION_OPEN)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| err("missing reflection tag", refl))?;
            let ret = inner
                .strip_suffix(REFLECTION_CLOSE)
                .and_then(|r| r.strip_suffix(' '))
                .ok_or_else(|| err("unclosed reflection tag", inner))?;
            let g = action(gold)?;
            let (template_id, w, r) = match_template(ret).ok_or_else(|| err("unrecognized reflection", ret))?;
            if w != a || r != g {
                return Err(err("reflection does not match its actions", ret));
            }
            let y = StructuredOutput::slow(a, Reflection { template_id, text: ret.to_string() }, g);
            y.validate().map_err(|_| err("slow output must revise its first action", text))?;
            Ok(y)
        }
        [first, rest, ..] if rest.starts_with(REFLECTION_TOKEN) && !rest.contains(REFLECTION_CLOSE) => {
            let _ = first;
            Err(err("unclosed reflection tag", rest))
        }
        _ => Err(err("unknown leading token", text)),
    }
}

/// Label implied by the leading token of canonical text.
pub fn leading_label(text: &str) -> Situation {
    if text.starts_with(KNOWLEDGE_TOKEN) {
        Situation::Knowledgeable
    } else if text.contains(REFLECTION_TOKEN) {
        Situation::Slow
    } else {
        Situation::Fast
    }
}
