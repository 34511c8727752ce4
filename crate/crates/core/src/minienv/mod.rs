//! Seeded text-world environments.
//!
//! Two deterministic POMDPs share one action grammar:
//!
//! * **MiniHouse**: a household with receptacles and objects. Six task
//!   families (put, clean, heat, cool, examine, put two). Reward is binary and
//!   emitted only when the goal is reached.
//! * **MiniShop**: a small catalog behind a search page. One task family
//!   (purchase). `buy` ends the episode with a dense reward in `[0, 1]`.
//!
//! States are plain values. [`step`] never fails: an action whose
//! preconditions do not hold returns the state unchanged together with the
//! observation `"Nothing happens"`.

pub mod house;
pub mod shop;
pub mod view;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use house::{HouseGoal, HouseState};
pub use shop::{ShopGoal, ShopState};

/// Observation text returned for every invalid action.
pub const NOTHING_HAPPENS: &str = "Nothing happens";

/// Step cap for MiniHouse episodes.
pub const HOUSE_STEP_CAP: usize = 40;
/// Step cap for MiniShop episodes.
pub const SHOP_STEP_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("task type {task_type} is not valid for {env_kind}")]
    InvalidTaskType { env_kind: EnvKind, task_type: TaskType },
    #[error("oracle failed to solve generated task {0}")]
    OracleFailure(String),
    #[error("cannot parse action `{0}`")]
    BadAction(String),
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json (line {line}): {source}")]
    Json { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvKind {
    MiniHouse,
    MiniShop,
}

impl EnvKind {
    pub fn step_cap(self) -> usize {
        match self {
            EnvKind::MiniHouse => HOUSE_STEP_CAP,
            EnvKind::MiniShop => SHOP_STEP_CAP,
        }
    }

    pub fn task_types(self) -> &'static [TaskType] {
        match self {
            EnvKind::MiniHouse => &TaskType::HOUSE,
            EnvKind::MiniShop => &[TaskType::Purchase],
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::MiniHouse => "minihouse",
            EnvKind::MiniShop => "minishop",
        })
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minihouse" | "house" => Ok(EnvKind::MiniHouse),
            "minishop" | "shop" => Ok(EnvKind::MiniShop),
            _ => Err(EnvError::Unknown { what: "env kind", value: s.into() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    Put,
    Clean,
    Heat,
    Cool,
    Examine,
    PutTwo,
    Purchase,
}

impl TaskType {
    /// The six household families, in report column order.
    pub const HOUSE: [TaskType; 6] = [
        TaskType::Put,
        TaskType::Clean,
        TaskType::Heat,
        TaskType::Cool,
        TaskType::Examine,
        TaskType::PutTwo,
    ];

    pub fn env_kind(self) -> EnvKind {
        match self {
            TaskType::Purchase => EnvKind::MiniShop,
            _ => EnvKind::MiniHouse,
        }
    }

    /// Position among the task types of its environment.
    pub fn index(self) -> usize {
        match self {
            TaskType::Put | TaskType::Purchase => 0,
            TaskType::Clean => 1,
            TaskType::Heat => 2,
            TaskType::Cool => 3,
            TaskType::Examine => 4,
            TaskType::PutTwo => 5,
        }
    }

    /// Lower-case phrase used in goals and rule text.
    pub fn phrase(self) -> &'static str {
        match self {
            TaskType::Put => "put",
            TaskType::Clean => "clean",
            TaskType::Heat => "heat",
            TaskType::Cool => "cool",
            TaskType::Examine => "examine",
            TaskType::PutTwo => "put two",
            TaskType::Purchase => "purchase",
        }
    }

    /// Whether the held object needs an appliance step before placing.
    pub fn needs_processing(self) -> bool {
        matches!(self, TaskType::Clean | TaskType::Heat | TaskType::Cool)
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for TaskType {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = match s.to_ascii_lowercase().as_str() {
            "put" => TaskType::Put,
            "clean" => TaskType::Clean,
            "heat" => TaskType::Heat,
            "cool" => TaskType::Cool,
            "examine" => TaskType::Examine,
            "puttwo" | "put_two" | "put two" => TaskType::PutTwo,
            "purchase" => TaskType::Purchase,
            _ => return Err(EnvError::Unknown { what: "task type", value: s.into() }),
        };
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verb {
    GoTo,
    Open,
    Close,
    Take,
    Put,
    Use,
    Clean,
    Heat,
    Cool,
    Click,
    Search,
    Buy,
}

impl Verb {
    pub fn arity(self) -> usize {
        match self {
            Verb::Buy => 0,
            Verb::GoTo | Verb::Open | Verb::Close | Verb::Use | Verb::Click | Verb::Search => 1,
            Verb::Take | Verb::Put | Verb::Clean | Verb::Heat | Verb::Cool => 2,
        }
    }

    pub fn is_shop(self) -> bool {
        matches!(self, Verb::Click | Verb::Search | Verb::Buy)
    }
}

/// A concrete, grounded command.
///
/// The text form follows the household prompt grammar (`take apple 1 from
/// countertop 1`) and the shop bracket form (`search[red mug]`,
/// `click[item 3]`, `click[buy now]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Action {
    pub verb: Verb,
    pub args: Vec<String>,
}

impl Action {
    pub fn new(verb: Verb, args: Vec<String>) -> Self {
        debug_assert_eq!(verb.arity(), args.len());
        Self { verb, args }
    }

    pub fn go_to(r: &str) -> Self {
        Self::new(Verb::GoTo, vec![r.into()])
    }
    pub fn open(r: &str) -> Self {
        Self::new(Verb::Open, vec![r.into()])
    }
    pub fn close(r: &str) -> Self {
        Self::new(Verb::Close, vec![r.into()])
    }
    pub fn take(o: &str, r: &str) -> Self {
        Self::new(Verb::Take, vec![o.into(), r.into()])
    }
    pub fn put(o: &str, r: &str) -> Self {
        Self::new(Verb::Put, vec![o.into(), r.into()])
    }
    pub fn use_obj(o: &str) -> Self {
        Self::new(Verb::Use, vec![o.into()])
    }
    pub fn search(q: &str) -> Self {
        Self::new(Verb::Search, vec![q.into()])
    }
    pub fn click(x: &str) -> Self {
        Self::new(Verb::Click, vec![x.into()])
    }
    pub fn buy() -> Self {
        Self::new(Verb::Buy, vec![])
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.args;
        match self.verb {
            Verb::GoTo => write!(f, "go to {}", a[0]),
            Verb::Open => write!(f, "open {}", a[0]),
            Verb::Close => write!(f, "close {}", a[0]),
            Verb::Take => write!(f, "take {} from {}", a[0], a[1]),
            Verb::Put => write!(f, "put {} in/on {}", a[0], a[1]),
            Verb::Use => write!(f, "use {}", a[0]),
            Verb::Clean => write!(f, "clean {} with {}", a[0], a[1]),
            Verb::Heat => write!(f, "heat {} with {}", a[0], a[1]),
            Verb::Cool => write!(f, "cool {} with {}", a[0], a[1]),
            Verb::Search => write!(f, "search[{}]", a[0]),
            Verb::Click => write!(f, "click[{}]", a[0]),
            Verb::Buy => f.write_str("click[buy now]"),
        }
    }
}

impl FromStr for Action {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EnvError::BadAction(s.to_string());
        let t = s.trim();
        if t != s || t.is_empty() {
            return Err(bad());
        }
        if let Some(rest) = t.strip_prefix("search[") {
            let q = rest.strip_suffix(']').ok_or_else(bad)?;
            if q.is_empty() {
                return Err(bad());
            }
            return Ok(Action::search(q));
        }
        if let Some(rest) = t.strip_prefix("click[") {
            let x = rest.strip_suffix(']').ok_or_else(bad)?;
            if x.is_empty() {
                return Err(bad());
            }
            return Ok(if x == "buy now" { Action::buy() } else { Action::click(x) });
        }
        let two = |verb: Verb, rest: &str, sep: &str| -> Result<Action, EnvError> {
            let (o, r) = rest.split_once(sep).ok_or_else(bad)?;
            if o.is_empty() || r.is_empty() {
                return Err(bad());
            }
            Ok(Action::new(verb, vec![o.into(), r.into()]))
        };
        let one = |verb: Verb, rest: &str| -> Result<Action, EnvError> {
            if rest.is_empty() {
                return Err(bad());
            }
            Ok(Action::new(verb, vec![rest.into()]))
        };
        if let Some(r) = t.strip_prefix("go to ") {
            one(Verb::GoTo, r)
        } else if let Some(r) = t.strip_prefix("open ") {
            one(Verb::Open, r)
        } else if let Some(r) = t.strip_prefix("close ") {
            one(Verb::Close, r)
        } else if let Some(r) = t.strip_prefix("use ") {
            one(Verb::Use, r)
        } else if let Some(r) = t.strip_prefix("take ") {
            two(Verb::Take, r, " from ")
        } else if let Some(r) = t.strip_prefix("put ") {
            two(Verb::Put, r, " in/on ")
        } else if let Some(r) = t.strip_prefix("clean ") {
            two(Verb::Clean, r, " with ")
        } else if let Some(r) = t.strip_prefix("heat ") {
            two(Verb::Heat, r, " with ")
        } else if let Some(r) = t.strip_prefix("cool ") {
            two(Verb::Cool, r, " with ")
        } else {
            Err(bad())
        }
    }
}

impl TryFrom<String> for Action {
    type Error = EnvError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Action> for String {
    fn from(a: Action) -> Self {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    /// Entity ids revealed by this observation, when any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<Vec<String>>,
}

impl Observation {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), structured: None }
    }

    pub fn with(text: impl Into<String>, ids: Vec<String>) -> Self {
        Self { text: text.into(), structured: Some(ids) }
    }

    pub fn nothing() -> Self {
        Self::text(NOTHING_HAPPENS)
    }

    pub fn is_nothing(&self) -> bool {
        self.text == NOTHING_HAPPENS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Goal {
    House(HouseGoal),
    Shop(ShopGoal),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WorldState {
    House(HouseState),
    Shop(ShopState),
}

impl WorldState {
    pub fn is_done(&self) -> bool {
        match self {
            WorldState::House(s) => s.done,
            WorldState::Shop(s) => s.done,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub env_kind: EnvKind,
    pub task_type: TaskType,
    pub goal_text: String,
    pub seed: u64,
    pub goal: Goal,
    pub initial_state: WorldState,
}

impl Task {
    pub fn house_goal(&self) -> Option<&HouseGoal> {
        match &self.goal {
            Goal::House(g) => Some(g),
            Goal::Shop(_) => None,
        }
    }

    pub fn shop_goal(&self) -> Option<&ShopGoal> {
        match &self.goal {
            Goal::Shop(g) => Some(g),
            Goal::House(_) => None,
        }
    }

    /// The first observation an agent receives.
    pub fn initial_observation(&self) -> Observation {
        observe(&self.initial_state, &self.goal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub observation: Observation,
}

/// Task plus the append-only record of (action, observation) pairs.
///
/// The agent-facing view reads only the goal, the initial observation and the
/// steps; the task's initial state is carried for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub task: Arc<Task>,
    pub initial: Observation,
    pub steps: Vec<Step>,
}

impl History {
    pub fn new(task: Arc<Task>) -> Self {
        let initial = task.initial_observation();
        Self { task, initial, steps: Vec::new() }
    }

    pub fn push(&mut self, action: Action, observation: Observation) {
        self.steps.push(Step { action, observation });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Prefix with the first `n` steps.
    pub fn prefix(&self, n: usize) -> History {
        History { task: self.task.clone(), initial: self.initial.clone(), steps: self.steps[..n].to_vec() }
    }

    /// Stable hex digest of the agent-visible history.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task.id.as_bytes());
        h.update([0u8]);
        h.update(self.task.goal_text.as_bytes());
        h.update([0u8]);
        h.update(self.initial.text.as_bytes());
        for s in &self.steps {
            h.update([1u8]);
            h.update(s.action.to_string().as_bytes());
            h.update([0u8]);
            h.update(s.observation.text.as_bytes());
        }
        hex::encode(&h.finalize()[..12])
    }
}

/// Generate a task. Same `(task_type, seed)` always yields the same task.
pub fn generate_task(env_kind: EnvKind, task_type: TaskType, seed: u64) -> Result<Task, EnvError> {
    if task_type.env_kind() != env_kind {
        return Err(EnvError::InvalidTaskType { env_kind, task_type });
    }
    let task = match env_kind {
        EnvKind::MiniHouse => house::generate(task_type, seed)?,
        EnvKind::MiniShop => shop::generate(seed)?,
    };
    Ok(task)
}

/// Transition function. Returns the successor, its observation, the reward
/// emitted by this step and whether the episode is over.
pub fn step(state: &WorldState, goal: &Goal, action: &Action) -> (WorldState, Observation, f64, bool) {
    match (state, goal) {
        (WorldState::House(s), Goal::House(g)) => {
            let (s2, o, r, d) = house::step(s, g, action);
            (WorldState::House(s2), o, r, d)
        }
        (WorldState::Shop(s), Goal::Shop(g)) => {
            let (s2, o, r, d) = shop::step(s, g, action);
            (WorldState::Shop(s2), o, r, d)
        }
        _ => (state.clone(), Observation::nothing(), 0.0, state.is_done()),
    }
}

/// Render what the agent can currently see.
pub fn observe(state: &WorldState, goal: &Goal) -> Observation {
    match (state, goal) {
        (WorldState::House(s), Goal::House(g)) => house::observe(s, g),
        (WorldState::Shop(s), Goal::Shop(g)) => shop::observe(s, g),
        _ => Observation::nothing(),
    }
}

/// A replayed episode: actions with their observations and the final reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub steps: Vec<Step>,
    pub reward: f64,
}

/// Execute `actions` from the task's initial state.
pub fn replay(task: &Task, actions: &[Action]) -> (WorldState, Trajectory, bool) {
    let mut state = task.initial_state.clone();
    let mut steps = Vec::with_capacity(actions.len());
    let mut reward = 0.0;
    let mut done = false;
    for a in actions {
        if done {
            break;
        }
        let (s2, obs, r, d) = step(&state, &task.goal, a);
        state = s2;
        reward = r;
        done = d;
        steps.push(Step { action: a.clone(), observation: obs });
    }
    (state, Trajectory { task_id: task.id.clone(), steps, reward }, done)
}

/// Gold trajectory for a generated task.
pub fn oracle_plan(task: &Task) -> Result<Vec<Action>, EnvError> {
    view::oracle_plan(task)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), EnvError> {
    for it in items {
        let line = serde_json::to_string(it).map_err(|e| EnvError::Json { line: 0, source: e })?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<T>, EnvError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EnvError::Json { line: i + 1, source: e })?);
    }
    Ok(out)
}

/// Deterministic RNG stream derived from a seed and a label.
pub(crate) fn seeded_rng(seed: u64, label: &str) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&d);
    rand_chacha::ChaCha8Rng::from_seed(key)
}

/// Uniform in [0, 1) from a stable hash of the parts.
pub(crate) fn hash_unit(parts: &[&[u8]]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64
}
