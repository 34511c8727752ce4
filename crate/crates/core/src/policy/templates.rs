//! The eight reflection templates.

use crate::minienv::view::ActionKind;
use crate::minienv::Action;

pub const TEMPLATES: [&str; 8] = [
    "{wrong} does not bring me closer to what I need. I should keep searching and {revised}.",
    "{wrong} skips a closed container. I should {revised} first.",
    "{wrong} leaves the item I need where it is. I should {revised}.",
    "{wrong} is premature because the object still needs an appliance. I should {revised}.",
    "{wrong} does not change the object as the task requires. I should {revised} now.",
    "{wrong} does not move me toward the goal location. I should {revised}.",
    "{wrong} delays finishing the task. I should {revised}.",
    "{wrong} was a mistake. I will reconsider and {revised}.",
];

/// Template chosen for a reflection that ends in the given revised role.
pub fn template_for(revised: Option<ActionKind>) -> usize {
    match revised {
        Some(ActionKind::Explore | ActionKind::GoToSeen | ActionKind::SearchGoal | ActionKind::SearchCategory) => 0,
        Some(ActionKind::Open | ActionKind::Close) => 1,
        Some(
            ActionKind::TakeGoal
            | ActionKind::TakeOther
            | ActionKind::ClickBest
            | ActionKind::ClickFirst
            | ActionKind::ClickOther,
        ) => 2,
        Some(ActionKind::GoToTool) => 3,
        Some(ActionKind::UseTool | ActionKind::ClickColor | ActionKind::ClickSize | ActionKind::ClickOtherOption) => 4,
        Some(ActionKind::GoToTarget) => 5,
        Some(ActionKind::PutHere | ActionKind::Buy) => 6,
        _ => 7,
    }
}

pub fn instantiate(id: usize, wrong: &Action, revised: &Action) -> String {
    TEMPLATES[id].replace("{wrong}", &wrong.to_string()).replace("{revised}", &revised.to_string())
}

/// Recover `(template id, wrong, revised)` from reflection text.
pub fn match_template(text: &str) -> Option<(usize, Action, Action)> {
    for (id, t) in TEMPLATES.iter().enumerate() {
        let (mid, suffix) = t.strip_prefix("{wrong}")?.split_once("{revised}")?;
        let Some(body) = text.strip_suffix(suffix) else { continue };
        let Some((w, r)) = body.split_once(mid) else { continue };
        if let (Ok(w), Ok(r)) = (w.parse::<Action>(), r.parse::<Action>()) {
            if instantiate(id, &w, &r) == text {
                return Some((id, w, r));
            }
        }
    }
    None
}
