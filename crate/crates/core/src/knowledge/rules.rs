//! Rule text: situation phrases, advice phrases and the reverse lookup used
//! to turn injected knowledge text back into features.

use crate::minienv::view::{ActionKind, HoldingClass, Phase, StateKey};
use crate::minienv::TaskType;

/// Marker that starts every Success Process rule after the situation.
pub const STEPS_MARKER: &str = "the agent should follow these steps:";

fn article(t: TaskType) -> &'static str {
    if t == TaskType::Examine {
        "an"
    } else {
        "a"
    }
}

fn processed_word(t: TaskType) -> &'static str {
    match t {
        TaskType::Clean => "cleaned",
        TaskType::Heat => "heated",
        TaskType::Cool => "cooled",
        _ => "handled",
    }
}

pub fn situation(k: &StateKey) -> String {
    let t = k.task_type;
    let a = article(t);
    let tp = t.phrase();
    if t == TaskType::Purchase {
        return match (k.phase, k.holding) {
            (_, HoldingClass::Other) => format!("has opened a product that does not match {a} {tp} task"),
            (Phase::Seeking, _) | (_, HoldingClass::None) => format!("is searching for the product of {a} {tp} task"),
            (Phase::AtTarget, _) => format!("has selected every option for {a} {tp} task"),
            _ => format!("has opened a matching product for {a} {tp} task"),
        };
    }
    match (k.phase, k.holding) {
        (_, HoldingClass::Other) => format!("is holding an unrelated object during {a} {tp} task"),
        (Phase::Seeking, _) | (_, HoldingClass::None) => format!("is looking for the object of {a} {tp} task"),
        (Phase::Holding, _) => format!("has taken an object for {a} {tp} task"),
        (Phase::PostProcess, _) => format!("has {} the object for {a} {tp} task", processed_word(t)),
        (Phase::AtTarget, _) if t == TaskType::Examine => format!("has reached the desklamp with the object for {a} {tp} task"),
        (Phase::AtTarget, _) => format!("has reached the target receptacle with the object for {a} {tp} task"),
    }
}

fn tool_name(t: TaskType) -> &'static str {
    match t {
        TaskType::Clean => "sink",
        TaskType::Heat => "microwave",
        TaskType::Cool => "cooler",
        _ => "desklamp",
    }
}

/// Imperative advice phrase for an action role under a task type.
pub fn advice(k: ActionKind, t: TaskType) -> String {
    match k {
        ActionKind::TakeGoal => "take the object it is looking for".into(),
        ActionKind::PutHere => "put the object in the target receptacle".into(),
        ActionKind::UseTool => match t {
            TaskType::Examine => "turn on the desklamp".into(),
            _ => format!("{} it with the {}", t.phrase(), tool_name(t)),
        },
        ActionKind::Open => "open the receptacle in front of it".into(),
        ActionKind::Close => "close the receptacle in front of it".into(),
        ActionKind::GoToTool => format!("go to the {}", tool_name(t)),
        ActionKind::GoToTarget => "go to the target receptacle".into(),
        ActionKind::GoToSeen => "go back to where the object was seen".into(),
        ActionKind::Explore => "explore the next unvisited receptacle".into(),
        ActionKind::Wander => "jump to a far receptacle".into(),
        ActionKind::GoBack => "return to the previous location".into(),
        ActionKind::TakeOther => "pick up an unrelated object".into(),
        ActionKind::Buy => "buy the item".into(),
        ActionKind::ClickColor => "select the requested color".into(),
        ActionKind::ClickSize => "select the requested size".into(),
        ActionKind::ClickBest => "click the result that matches every attribute".into(),
        ActionKind::SearchGoal => "search with both color and category".into(),
        ActionKind::SearchCategory => "search by category alone".into(),
        ActionKind::ClickFirst => "click the first result".into(),
        ActionKind::ClickOther => "click another result".into(),
        ActionKind::ClickOtherOption => "select a different option".into(),
        ActionKind::BackToSearch => "go back to the search page".into(),
    }
}

/// Gerund used in the warning clause.
pub fn gerund(k: ActionKind, t: TaskType) -> String {
    match k {
        ActionKind::TakeGoal => "taking the object".into(),
        ActionKind::PutHere => "putting".into(),
        ActionKind::UseTool => match t {
            TaskType::Examine => "using the desklamp".into(),
            TaskType::Clean => "cleaning it".into(),
            TaskType::Heat => "heating it".into(),
            _ => "cooling it".into(),
        },
        ActionKind::Open => "opening the receptacle".into(),
        ActionKind::Close => "closing the receptacle".into(),
        ActionKind::GoToTool => format!("going to the {}", tool_name(t)),
        ActionKind::GoToTarget => "going to the target receptacle".into(),
        ActionKind::GoToSeen => "going back to a seen object".into(),
        ActionKind::Explore => "exploring".into(),
        ActionKind::Wander => "jumping to a far receptacle".into(),
        ActionKind::GoBack => "returning to the previous location".into(),
        ActionKind::TakeOther => "picking up unrelated objects".into(),
        ActionKind::Buy => "buying".into(),
        ActionKind::ClickColor => "selecting the color".into(),
        ActionKind::ClickSize => "selecting the size".into(),
        ActionKind::ClickBest => "clicking a matching result".into(),
        ActionKind::SearchGoal => "searching".into(),
        ActionKind::SearchCategory => "searching by category alone".into(),
        ActionKind::ClickFirst => "clicking the first result".into(),
        ActionKind::ClickOther => "clicking another result".into(),
        ActionKind::ClickOtherOption => "selecting other options".into(),
        ActionKind::BackToSearch => "going back to search".into(),
    }
}

/// Position of a role in the successful step schema, if it has one.
pub fn schema_rank(k: ActionKind) -> Option<usize> {
    match k {
        ActionKind::Explore | ActionKind::GoToSeen | ActionKind::SearchGoal => Some(0),
        ActionKind::Open | ActionKind::ClickBest => Some(1),
        ActionKind::TakeGoal | ActionKind::ClickColor => Some(2),
        ActionKind::GoToTool | ActionKind::ClickSize => Some(3),
        ActionKind::UseTool | ActionKind::Buy => Some(4),
        ActionKind::GoToTarget => Some(5),
        ActionKind::PutHere => Some(6),
        _ => None,
    }
}

/// Error rule: advise `win`, warn against `loss` when known.
pub fn error_rule(key: &StateKey, win: ActionKind, loss: Option<ActionKind>) -> String {
    let t = key.task_type;
    let mut s = format!("When the agent {}, the agent should {}", situation(key), advice(win, t));
    if let Some(l) = loss {
        let conj = match (schema_rank(win), schema_rank(l)) {
            (Some(w), Some(lr)) if lr > w => "before",
            _ => "instead of",
        };
        s.push_str(&format!(" {conj} {}", gerund(l, t)));
    }
    s
}

/// Gold step schema of a task family.
pub fn steps(t: TaskType) -> Vec<&'static str> {
    let fetch = ["locate the object", "take it"];
    let place = ["go to the target receptacle", "put it in the target receptacle"];
    match t {
        TaskType::Put => [&fetch[..], &place[..]].concat(),
        TaskType::Clean => [&fetch[..], &["go to the sink", "clean it with the sink"], &place[..]].concat(),
        TaskType::Heat => [&fetch[..], &["go to the microwave", "heat it with the microwave"], &place[..]].concat(),
        TaskType::Cool => [&fetch[..], &["go to the cooler", "cool it with the cooler"], &place[..]].concat(),
        TaskType::Examine => [&fetch[..], &["find the desklamp", "turn on the desklamp"]].concat(),
        TaskType::PutTwo => [&fetch[..], &place[..], &["locate the second object", "take it"], &place[..]].concat(),
        TaskType::Purchase => vec![
            "search with both color and category",
            "click the result that matches every attribute",
            "select the requested color",
            "select the requested size",
            "buy the item",
        ],
    }
}

pub fn success_rule(t: TaskType) -> String {
    let body: Vec<String> = steps(t).iter().map(|s| format!("[Step] {s}")).collect();
    format!("When the agent is solving {} {} task, {STEPS_MARKER} {}", article(t), t.phrase(), body.join(" "))
}

const ALL_KINDS: [ActionKind; 22] = [
    ActionKind::TakeGoal,
    ActionKind::PutHere,
    ActionKind::UseTool,
    ActionKind::Open,
    ActionKind::GoToTool,
    ActionKind::GoToTarget,
    ActionKind::GoToSeen,
    ActionKind::Explore,
    ActionKind::Wander,
    ActionKind::GoBack,
    ActionKind::TakeOther,
    ActionKind::Close,
    ActionKind::Buy,
    ActionKind::ClickColor,
    ActionKind::ClickSize,
    ActionKind::ClickBest,
    ActionKind::SearchGoal,
    ActionKind::SearchCategory,
    ActionKind::ClickFirst,
    ActionKind::ClickOther,
    ActionKind::ClickOtherOption,
    ActionKind::BackToSearch,
];

const ALL_TYPES: [TaskType; 7] = [
    TaskType::Put,
    TaskType::Clean,
    TaskType::Heat,
    TaskType::Cool,
    TaskType::Examine,
    TaskType::PutTwo,
    TaskType::Purchase,
];

/// What a piece of injected knowledge tells the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KnowledgeSignal {
    pub advice: Option<ActionKind>,
    pub success_process: bool,
}

/// Read the advice role back out of rule text. Text that was not produced
/// by the rule templates yields an empty signal.
pub fn read_signal(text: &str) -> KnowledgeSignal {
    if text.contains(STEPS_MARKER) {
        return KnowledgeSignal { advice: None, success_process: true };
    }
    let Some((_, rest)) = text.split_once("the agent should ") else {
        return KnowledgeSignal::default();
    };
    for t in ALL_TYPES {
        for k in ALL_KINDS {
            let a = advice(k, t);
            if let Some(tail) = rest.strip_prefix(a.as_str()) {
                if tail.is_empty() || tail.starts_with(" before ") || tail.starts_with(" instead of ") {
                    return KnowledgeSignal { advice: Some(k), success_process: false };
                }
            }
        }
    }
    KnowledgeSignal::default()
}

/// Whether the rule's warning clause names `loss`.
pub fn warns_against(text: &str, t: TaskType, loss: ActionKind) -> bool {
    let g = gerund(loss, t);
    text.ends_with(&format!(" before {g}")) || text.ends_with(&format!(" instead of {g}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cool_rule_text() {
        let key = StateKey { task_type: TaskType::Cool, phase: Phase::Holding, holding: HoldingClass::Goal };
        assert_eq!(
            error_rule(&key, ActionKind::UseTool, Some(ActionKind::PutHere)),
            "When the agent has taken an object for a cool task, the agent should cool it with the cooler before putting"
        );
    }

    #[test]
    fn advice_roundtrips_for_every_role() {
        for t in ALL_TYPES {
            for k in ALL_KINDS {
                let key = StateKey { task_type: t, phase: Phase::Seeking, holding: HoldingClass::None };
                for loss in [None, Some(ActionKind::Explore), Some(ActionKind::Buy)] {
                    let sig = read_signal(&error_rule(&key, k, loss));
                    // roles with identical phrasing across families still map to one role
                    assert_eq!(advice(sig.advice.unwrap(), t), advice(k, t));
                }
            }
        }
    }

    #[test]
    fn success_rule_lists_put_schema() {
        let r = success_rule(TaskType::Put);
        assert_eq!(
            r,
            "When the agent is solving a put task, the agent should follow these steps: [Step] locate the object \
             [Step] take it [Step] go to the target receptacle [Step] put it in the target receptacle"
        );
        assert!(read_signal(&r).success_process);
        assert!(success_rule(TaskType::Examine).starts_with("When the agent is solving an examine task"));
    }

    #[test]
    fn warning_clause_detected() {
        let key = StateKey { task_type: TaskType::Heat, phase: Phase::Seeking, holding: HoldingClass::None };
        let r = error_rule(&key, ActionKind::Open, Some(ActionKind::Wander));
        assert!(r.ends_with("instead of jumping to a far receptacle"));
        assert!(warns_against(&r, TaskType::Heat, ActionKind::Wander));
        assert!(!warns_against(&r, TaskType::Heat, ActionKind::Explore));
    }

    #[test]
    fn foreign_text_has_no_signal() {
        assert_eq!(read_signal("be careful"), KnowledgeSignal::default());
    }
}
