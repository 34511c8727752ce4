//! MiniHouse: receptacles, objects and six household task families.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Action, EnvError, EnvKind, Goal, Observation, Task, TaskType, Verb, WorldState};

pub const SINK: &str = "sinkbasin 1";
pub const MICROWAVE: &str = "microwave 1";
pub const FRIDGE: &str = "fridge 1";
pub const LAMP: &str = "desklamp 1";

const OPENABLE: [&str; 5] = ["cabinet", "drawer", "fridge", "microwave", "safe"];
const FILLER_RECEPTACLES: [&str; 12] = [
    "cabinet", "drawer", "shelf", "diningtable", "sidetable", "desk", "dresser", "garbagecan",
    "stoveburner", "coffeetable", "countertop", "safe",
];
const TOOL_RECEPTACLES: [&str; 3] = ["sinkbasin", "microwave", "fridge"];

const ALL_KINDS: [&str; 24] = [
    "apple", "tomato", "potato", "egg", "lettuce", "bread", "mug", "cup", "plate", "bowl", "pan", "knife",
    "spoon", "fork", "book", "cellphone", "pen", "pencil", "cd", "keychain", "creditcard", "vase",
    "remotecontrol", "statue",
];
const CLEANABLE: [&str; 12] = [
    "mug", "cup", "plate", "bowl", "pan", "knife", "spoon", "fork", "apple", "tomato", "potato", "lettuce",
];
const HEATABLE: [&str; 9] = ["mug", "cup", "plate", "bowl", "apple", "tomato", "potato", "egg", "bread"];
const COOLABLE: [&str; 11] = [
    "mug", "cup", "plate", "bowl", "pan", "apple", "tomato", "potato", "egg", "bread", "lettuce",
];
const EXAMINABLE: [&str; 10] = [
    "book", "cellphone", "pen", "pencil", "cd", "keychain", "creditcard", "vase", "remotecontrol", "statue",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receptacle {
    pub id: String,
    pub openable: bool,
    pub open: bool,
    pub contents: Vec<String>,
}

impl Receptacle {
    pub fn visible(&self) -> bool {
        !self.openable || self.open
    }

    pub fn kind(&self) -> &str {
        kind_of(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub id: String,
    pub kind: String,
    pub clean: bool,
    pub hot: bool,
    pub cold: bool,
    pub examined: bool,
}

impl Object {
    fn new(kind: &str, n: usize) -> Self {
        Self {
            id: format!("{kind} {n}"),
            kind: kind.to_string(),
            clean: false,
            hot: false,
            cold: false,
            examined: false,
        }
    }

    pub fn takeable(&self) -> bool {
        self.kind != "desklamp"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseState {
    /// Receptacles in the order the room listing reports them.
    pub receptacles: Vec<Receptacle>,
    pub objects: Vec<Object>,
    /// `None` while the agent stands in the middle of the room.
    pub location: Option<String>,
    pub holding: Option<String>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseGoal {
    pub task_type: TaskType,
    pub object_kind: String,
    /// Receptacle that must end up holding the object(s); `None` for examine.
    pub target: Option<String>,
    /// Appliance (or the desk lamp) the task requires.
    pub tool: Option<String>,
}

impl HouseGoal {
    pub fn required_count(&self) -> usize {
        if self.task_type == TaskType::PutTwo {
            2
        } else {
            1
        }
    }

    /// Whether `o` carries the property the task asks for.
    pub fn satisfied_by(&self, o: &Object) -> bool {
        o.kind == self.object_kind
            && match self.task_type {
                TaskType::Clean => o.clean,
                TaskType::Heat => o.hot,
                TaskType::Cool => o.cold,
                _ => true,
            }
    }
}

/// Whether receptacles of this kind have a door.
pub fn openable_kind(kind: &str) -> bool {
    OPENABLE.contains(&kind)
}

/// "cabinet 3" -> "cabinet".
pub fn kind_of(id: &str) -> &str {
    id.rsplit_once(' ').map(|(k, _)| k).unwrap_or(id)
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn goal_text(g: &HouseGoal) -> String {
    let k = &g.object_kind;
    let t = g.target.as_deref().unwrap_or("");
    match g.task_type {
        TaskType::Put => format!("put {} {k} in {t}", article(k)),
        TaskType::Clean => format!("put a clean {k} in {t}"),
        TaskType::Heat => format!("put a hot {k} in {t}"),
        TaskType::Cool => format!("put a cool {k} in {t}"),
        TaskType::Examine => format!("look at {k} under the desklamp"),
        TaskType::PutTwo => format!("put two {k} in {t}"),
        TaskType::Purchase => unreachable!("purchase is a shop task"),
    }
}

fn goal_pool(t: TaskType) -> &'static [&'static str] {
    match t {
        TaskType::Clean => &CLEANABLE,
        TaskType::Heat => &HEATABLE,
        TaskType::Cool => &COOLABLE,
        TaskType::Examine => &EXAMINABLE,
        _ => &ALL_KINDS,
    }
}

pub(crate) fn generate(task_type: TaskType, seed: u64) -> Result<Task, EnvError> {
    for attempt in 0..64 {
        let mut rng = seeded_rng(seed, &format!("house/{task_type}/{attempt}"));
        let (state, goal) = build_world(&mut rng, task_type);
        let task = Task {
            id: format!("house-{}-{seed}", task_type.phrase().replace(' ', "")),
            env_kind: EnvKind::MiniHouse,
            task_type,
            goal_text: goal_text(&goal),
            seed,
            goal: Goal::House(goal),
            initial_state: WorldState::House(state),
        };
        if let Ok(plan) = super::oracle_plan(&task) {
            if plan.len() <= super::HOUSE_STEP_CAP {
                return Ok(task);
            }
        }
    }
    Err(EnvError::OracleFailure(format!("house {task_type} seed {seed}")))
}

fn build_world(rng: &mut impl Rng, task_type: TaskType) -> (HouseState, HouseGoal) {
    let n_recep = rng.gen_range(8..=14);
    let lamp_holder = if rng.gen_bool(0.5) { "desk" } else { "sidetable" };
    let mut kinds: Vec<&str> = vec!["countertop", "sinkbasin", "microwave", "fridge", lamp_holder];
    while kinds.len() < n_recep {
        kinds.push(FILLER_RECEPTACLES[rng.gen_range(0..FILLER_RECEPTACLES.len())]);
    }
    let mut receptacles = Vec::with_capacity(kinds.len());
    for (i, k) in kinds.iter().enumerate() {
        let n = kinds[..i].iter().filter(|x| *x == k).count() + 1;
        let openable = OPENABLE.contains(k);
        receptacles.push(Receptacle { id: format!("{k} {n}"), openable, open: false, contents: vec![] });
    }
    let lamp_holder_id = format!("{lamp_holder} 1");
    receptacles.shuffle(rng);

    let pool = goal_pool(task_type);
    let goal_kind = pool[rng.gen_range(0..pool.len())];
    let n_goal = match task_type {
        TaskType::PutTwo => rng.gen_range(2..=3),
        _ => rng.gen_range(1..=2),
    };
    let target = match task_type {
        TaskType::Examine => None,
        _ => {
            let cands: Vec<&Receptacle> = receptacles
                .iter()
                .filter(|r| !TOOL_RECEPTACLES.contains(&r.kind()))
                .collect();
            Some(cands[rng.gen_range(0..cands.len())].id.clone())
        }
    };
    let tool = match task_type {
        TaskType::Clean => Some(SINK.to_string()),
        TaskType::Heat => Some(MICROWAVE.to_string()),
        TaskType::Cool => Some(FRIDGE.to_string()),
        TaskType::Examine => Some(LAMP.to_string()),
        _ => None,
    };

    let n_obj = rng.gen_range(10..=20usize);
    let mut objects: Vec<Object> = Vec::with_capacity(n_obj + 1);
    let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
    let mk = |kind: &'static str, counts: &mut std::collections::BTreeMap<&str, usize>| {
        let c = counts.entry(kind).or_insert(0);
        *c += 1;
        Object::new(kind, *c)
    };
    for _ in 0..n_goal {
        objects.push(mk(goal_kind, &mut counts));
    }
    while objects.len() < n_obj {
        let k = ALL_KINDS[rng.gen_range(0..ALL_KINDS.len())];
        if k == goal_kind {
            continue;
        }
        objects.push(mk(k, &mut counts));
    }

    for o in &objects {
        let slots: Vec<usize> = (0..receptacles.len())
            .filter(|&i| !(o.kind == goal_kind && Some(&receptacles[i].id) == target.as_ref()))
            .collect();
        let i = slots[rng.gen_range(0..slots.len())];
        receptacles[i].contents.push(o.id.clone());
    }
    let lamp = Object::new("desklamp", 1);
    let li = receptacles.iter().position(|r| r.id == lamp_holder_id).expect("lamp holder present");
    receptacles[li].contents.push(lamp.id.clone());
    objects.push(lamp);

    let state = HouseState { receptacles, objects, location: None, holding: None, done: false };
    let goal = HouseGoal { task_type, object_kind: goal_kind.to_string(), target, tool };
    (state, goal)
}

fn list_items(items: &[String]) -> String {
    match items.len() {
        0 => "nothing".to_string(),
        1 => format!("a {}", items[0]),
        n => {
            let head: Vec<String> = items[..n - 1].iter().map(|i| format!("a {i}")).collect();
            format!("{}, and a {}", head.join(", "), items[n - 1])
        }
    }
}

fn describe(r: &Receptacle) -> (String, Option<Vec<String>>) {
    if !r.visible() {
        return (format!("The {} is closed.", r.id), None);
    }
    let text = if r.openable {
        format!("The {} is open. In it, you see {}.", r.id, list_items(&r.contents))
    } else {
        format!("On the {}, you see {}.", r.id, list_items(&r.contents))
    };
    (text, Some(r.contents.clone()))
}

pub(crate) fn observe(s: &HouseState, g: &HouseGoal) -> Observation {
    match &s.location {
        None => {
            let ids: Vec<String> = s.receptacles.iter().map(|r| r.id.clone()).collect();
            Observation::with(
                format!(
                    "You are in the middle of a room. Looking quickly around you, you see {}.\nYour task is to: {}.",
                    list_items(&ids),
                    goal_text(g)
                ),
                ids,
            )
        }
        Some(loc) => {
            let r = s.receptacles.iter().find(|r| &r.id == loc).expect("location is a receptacle");
            let (text, ids) = describe(r);
            let holding = match &s.holding {
                Some(o) => format!(" You are holding the {o}."),
                None => String::new(),
            };
            Observation { text: format!("You are at {loc}. {text}{holding}"), structured: ids }
        }
    }
}

fn goal_reached(s: &HouseState, g: &HouseGoal) -> bool {
    let Some(target) = &g.target else { return false };
    let Some(r) = s.receptacles.iter().find(|r| &r.id == target) else { return false };
    let n = r
        .contents
        .iter()
        .filter_map(|id| s.objects.iter().find(|o| &o.id == id))
        .filter(|o| g.satisfied_by(o))
        .count();
    n >= g.required_count()
}

pub(crate) fn step(s: &HouseState, g: &HouseGoal, a: &Action) -> (HouseState, Observation, f64, bool) {
    if s.done {
        return (s.clone(), Observation::nothing(), 0.0, true);
    }
    match apply(s, g, a) {
        Some((next, obs)) => {
            let done = next.done;
            (next, obs, if done { 1.0 } else { 0.0 }, done)
        }
        None => (s.clone(), Observation::nothing(), 0.0, false),
    }
}

fn apply(s: &HouseState, g: &HouseGoal, a: &Action) -> Option<(HouseState, Observation)> {
    let mut n = s.clone();
    let here = s.location.as_deref();
    let ri = |id: &str| n.receptacles.iter().position(|r| r.id == id);
    let obs = match a.verb {
        Verb::GoTo => {
            let dest = &a.args[0];
            if here == Some(dest.as_str()) {
                return None;
            }
            let i = ri(dest)?;
            n.location = Some(dest.clone());
            let (text, ids) = describe(&n.receptacles[i]);
            Observation { text: format!("You arrive at {dest}. {text}"), structured: ids }
        }
        Verb::Open => {
            let r = &a.args[0];
            if here != Some(r.as_str()) {
                return None;
            }
            let i = ri(r)?;
            let rec = &mut n.receptacles[i];
            if !rec.openable || rec.open {
                return None;
            }
            rec.open = true;
            let (text, ids) = describe(rec);
            Observation { text: format!("You open the {r}. {text}"), structured: ids }
        }
        Verb::Close => {
            let r = &a.args[0];
            if here != Some(r.as_str()) {
                return None;
            }
            let i = ri(r)?;
            let rec = &mut n.receptacles[i];
            if !rec.openable || !rec.open {
                return None;
            }
            rec.open = false;
            Observation::text(format!("You close the {r}."))
        }
        Verb::Take => {
            let (o, r) = (&a.args[0], &a.args[1]);
            if n.holding.is_some() || here != Some(r.as_str()) {
                return None;
            }
            let i = ri(r)?;
            let rec = &mut n.receptacles[i];
            if !rec.visible() {
                return None;
            }
            let pos = rec.contents.iter().position(|c| c == o)?;
            if !s.objects.iter().find(|x| &x.id == o)?.takeable() {
                return None;
            }
            rec.contents.remove(pos);
            n.holding = Some(o.clone());
            Observation::text(format!("You pick up the {o} from the {r}."))
        }
        Verb::Put => {
            let (o, r) = (&a.args[0], &a.args[1]);
            if n.holding.as_ref() != Some(o) || here != Some(r.as_str()) {
                return None;
            }
            let i = ri(r)?;
            if !n.receptacles[i].visible() {
                return None;
            }
            n.receptacles[i].contents.push(o.clone());
            n.holding = None;
            if goal_reached(&n, g) {
                n.done = true;
            }
            Observation::text(format!("You put the {o} in/on the {r}."))
        }
        Verb::Use => {
            let o = &a.args[0];
            let loc = here?;
            let obj = s.objects.iter().find(|x| &x.id == o)?;
            if obj.kind != "desklamp" {
                return None;
            }
            let i = ri(loc)?;
            if !n.receptacles[i].contents.contains(o) {
                return None;
            }
            if g.task_type == TaskType::Examine {
                if let Some(h) = &n.holding {
                    let held = n.objects.iter_mut().find(|x| &x.id == h)?;
                    if held.kind == g.object_kind {
                        held.examined = true;
                        n.done = true;
                    }
                }
            }
            Observation::text(format!("You turn on the {o}."))
        }
        Verb::Clean | Verb::Heat | Verb::Cool => {
            let (o, r) = (&a.args[0], &a.args[1]);
            let needed = match a.verb {
                Verb::Clean => "sinkbasin",
                Verb::Heat => "microwave",
                _ => "fridge",
            };
            if n.holding.as_ref() != Some(o) || here != Some(r.as_str()) || kind_of(r) != needed {
                return None;
            }
            let held = n.objects.iter_mut().find(|x| &x.id == o)?;
            let word = match a.verb {
                Verb::Clean => {
                    held.clean = true;
                    "clean"
                }
                Verb::Heat => {
                    held.hot = true;
                    held.cold = false;
                    "heat"
                }
                _ => {
                    held.cold = true;
                    held.hot = false;
                    "cool"
                }
            };
            Observation::text(format!("You {word} the {o} using the {r}."))
        }
        Verb::Click | Verb::Search | Verb::Buy => return None,
    };
    Some((n, obs))
}
