//! The agent's side of the world: a belief built only from the goal, the
//! initial observation and the step records, plus the role-based action
//! vocabulary grounded against that belief.
//!
//! The same belief drives the oracle planner, feature extraction and the
//! state abstraction used by the knowledge base, so gold actions are always
//! a function of what the agent could have seen.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::house::{self, kind_of, LAMP};
use super::shop::{parse_listing, Listing, BACK};
use super::{Action, EnvError, EnvKind, History, HouseGoal, Observation, ShopGoal, Step, Task, TaskType, Verb};

/// Abstract action roles. A role grounds to at most one concrete command
/// in a given belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    TakeGoal,
    PutHere,
    UseTool,
    Open,
    GoToTool,
    GoToTarget,
    GoToSeen,
    Explore,
    Wander,
    GoBack,
    TakeOther,
    Close,
    Buy,
    ClickColor,
    ClickSize,
    ClickBest,
    SearchGoal,
    SearchCategory,
    ClickFirst,
    ClickOther,
    ClickOtherOption,
    BackToSearch,
}

const HOUSE_VOCAB: [ActionKind; 12] = [
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
];

const SHOP_VOCAB: [ActionKind; 10] = [
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

/// Action vocabulary of an environment; the position is the action id.
pub fn vocab(env: EnvKind) -> &'static [ActionKind] {
    match env {
        EnvKind::MiniHouse => &HOUSE_VOCAB,
        EnvKind::MiniShop => &SHOP_VOCAB,
    }
}

impl ActionKind {
    pub fn id(self, env: EnvKind) -> Option<usize> {
        vocab(env).iter().position(|k| *k == self)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::TakeGoal => "TakeGoal",
            ActionKind::PutHere => "PutHere",
            ActionKind::UseTool => "UseTool",
            ActionKind::Open => "Open",
            ActionKind::GoToTool => "GoToTool",
            ActionKind::GoToTarget => "GoToTarget",
            ActionKind::GoToSeen => "GoToSeen",
            ActionKind::Explore => "Explore",
            ActionKind::Wander => "Wander",
            ActionKind::GoBack => "GoBack",
            ActionKind::TakeOther => "TakeOther",
            ActionKind::Close => "Close",
            ActionKind::Buy => "Buy",
            ActionKind::ClickColor => "ClickColor",
            ActionKind::ClickSize => "ClickSize",
            ActionKind::ClickBest => "ClickBest",
            ActionKind::SearchGoal => "SearchGoal",
            ActionKind::SearchCategory => "SearchCategory",
            ActionKind::ClickFirst => "ClickFirst",
            ActionKind::ClickOther => "ClickOther",
            ActionKind::ClickOtherOption => "ClickOtherOption",
            ActionKind::BackToSearch => "BackToSearch",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionKind {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HOUSE_VOCAB
            .iter()
            .chain(SHOP_VOCAB.iter())
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| EnvError::Unknown { what: "action kind", value: s.into() })
    }
}

/// Grounded, deduplicated actions available at one step. Each command
/// appears once under the lowest action id that produces it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionSpace {
    pub entries: Vec<(usize, Action)>,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.entries.iter().any(|(i, _)| *i == id)
    }

    pub fn action(&self, id: usize) -> Option<&Action> {
        self.entries.iter().find(|(i, _)| *i == id).map(|(_, a)| a)
    }

    pub fn id_of(&self, a: &Action) -> Option<usize> {
        self.entries.iter().find(|(_, x)| x == a).map(|(i, _)| *i)
    }
}

/// Progress phase of the state abstraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Seeking,
    Holding,
    AtTarget,
    PostProcess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HoldingClass {
    None,
    Goal,
    Other,
}

/// Machine-evaluable condition key: `(task_type, phase, holding_class)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey {
    pub task_type: TaskType,
    pub phase: Phase,
    pub holding: HoldingClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseBelief {
    goal: HouseGoal,
    receptacles: Vec<String>,
    location: Option<String>,
    prev_location: Option<String>,
    holding: Option<String>,
    processed: bool,
    contents: BTreeMap<String, Vec<String>>,
    open: BTreeMap<String, bool>,
    visited: BTreeSet<String>,
    placed: usize,
    last_failed: bool,
    lamp_at: Option<String>,
}

impl HouseBelief {
    fn new(goal: HouseGoal, initial: &Observation) -> Self {
        Self {
            goal,
            receptacles: initial.structured.clone().unwrap_or_default(),
            location: None,
            prev_location: None,
            holding: None,
            processed: false,
            contents: BTreeMap::new(),
            open: BTreeMap::new(),
            visited: BTreeSet::new(),
            placed: 0,
            last_failed: false,
            lamp_at: None,
        }
    }

    fn see(&mut self, r: &str, obs: &Observation) {
        match &obs.structured {
            Some(ids) => {
                if ids.iter().any(|i| i == LAMP) {
                    self.lamp_at = Some(r.to_string());
                }
                self.contents.insert(r.to_string(), ids.clone());
                if house::openable_kind(kind_of(r)) {
                    self.open.insert(r.to_string(), true);
                }
            }
            None => {
                self.open.insert(r.to_string(), false);
            }
        }
    }

    fn update(&mut self, s: &Step) {
        if s.observation.is_nothing() {
            self.last_failed = true;
            return;
        }
        self.last_failed = false;
        let a = &s.action;
        match a.verb {
            Verb::GoTo => {
                let r = &a.args[0];
                self.prev_location = self.location.replace(r.clone());
                self.visited.insert(r.clone());
                self.see(r, &s.observation);
            }
            Verb::Open => self.see(&a.args[0], &s.observation),
            Verb::Close => {
                self.open.insert(a.args[0].clone(), false);
            }
            Verb::Take => {
                if let Some(c) = self.contents.get_mut(&a.args[1]) {
                    c.retain(|o| o != &a.args[0]);
                }
                self.holding = Some(a.args[0].clone());
                self.processed = false;
            }
            Verb::Put => {
                let (o, r) = (&a.args[0], &a.args[1]);
                self.contents.entry(r.clone()).or_default().push(o.clone());
                if Some(r) == self.goal.target.as_ref() && self.holding_goal() && self.ready() {
                    self.placed += 1;
                }
                self.holding = None;
                self.processed = false;
            }
            Verb::Clean | Verb::Heat | Verb::Cool => {
                let wanted = match self.goal.task_type {
                    TaskType::Clean => Verb::Clean,
                    TaskType::Heat => Verb::Heat,
                    TaskType::Cool => Verb::Cool,
                    _ => return,
                };
                if a.verb == wanted {
                    self.processed = true;
                }
            }
            _ => {}
        }
    }

    fn holding_goal(&self) -> bool {
        self.holding.as_deref().is_some_and(|h| kind_of(h) == self.goal.object_kind)
    }

    /// Holding a goal object that needs no further processing.
    fn ready(&self) -> bool {
        self.holding_goal() && (!self.goal.task_type.needs_processing() || self.processed)
    }

    fn pending_process(&self) -> bool {
        self.holding_goal() && self.goal.task_type.needs_processing() && !self.processed
    }

    fn here(&self) -> Option<&str> {
        self.location.as_deref()
    }

    fn here_openable(&self) -> bool {
        self.here().is_some_and(|l| house::openable_kind(kind_of(l)))
    }

    fn here_closed(&self) -> bool {
        self.here_openable() && !self.open.get(self.here().unwrap_or_default()).copied().unwrap_or(false)
    }

    fn here_open(&self) -> bool {
        self.here_openable() && !self.here_closed()
    }

    fn at_target(&self) -> bool {
        match self.goal.task_type {
            TaskType::Examine => self.lamp_at.is_some() && self.location == self.lamp_at,
            _ => self.location.is_some() && self.location == self.goal.target,
        }
    }

    fn tool_location(&self) -> Option<&str> {
        match self.goal.task_type {
            TaskType::Examine => self.lamp_at.as_deref(),
            _ => self.goal.tool.as_deref(),
        }
    }

    fn at_tool(&self) -> bool {
        self.tool_location().is_some() && self.here() == self.tool_location()
    }

    fn visible_here(&self) -> &[String] {
        match self.here() {
            Some(l) if !self.here_closed() => self.contents.get(l).map(Vec::as_slice).unwrap_or(&[]),
            _ => &[],
        }
    }

    fn goal_here(&self) -> Option<&String> {
        if self.location.is_some() && self.location == self.goal.target {
            return None;
        }
        self.visible_here().iter().find(|o| kind_of(o) == self.goal.object_kind)
    }

    fn other_here(&self) -> Option<&String> {
        self.visible_here()
            .iter()
            .find(|o| kind_of(o) != self.goal.object_kind && kind_of(o) != "desklamp")
    }

    fn seen_elsewhere(&self) -> Option<&String> {
        self.receptacles.iter().find(|r| {
            Some(r.as_str()) != self.here()
                && Some(*r) != self.goal.target.as_ref()
                && self
                    .contents
                    .get(*r)
                    .is_some_and(|c| c.iter().any(|o| kind_of(o) == self.goal.object_kind))
        })
    }

    fn unvisited(&self) -> impl DoubleEndedIterator<Item = &String> {
        self.receptacles.iter().filter(|r| {
            !self.visited.contains(*r) && Some(*r) != self.goal.target.as_ref() && Some(r.as_str()) != self.here()
        })
    }

    fn ground(&self, k: ActionKind) -> Option<Action> {
        let here = self.here();
        match k {
            ActionKind::TakeGoal => {
                if self.holding.is_some() {
                    return None;
                }
                Some(Action::take(self.goal_here()?, here?))
            }
            ActionKind::TakeOther => {
                if self.holding.is_some() {
                    return None;
                }
                Some(Action::take(self.other_here()?, here?))
            }
            ActionKind::PutHere => {
                let o = self.holding.as_ref()?;
                if self.here_closed() {
                    return None;
                }
                Some(Action::put(o, here?))
            }
            ActionKind::UseTool => match self.goal.task_type {
                TaskType::Examine => (self.at_tool()).then(|| Action::use_obj(LAMP)),
                TaskType::Clean | TaskType::Heat | TaskType::Cool => {
                    let o = self.holding.as_ref()?;
                    if !self.at_tool() {
                        return None;
                    }
                    let verb = match self.goal.task_type {
                        TaskType::Clean => Verb::Clean,
                        TaskType::Heat => Verb::Heat,
                        _ => Verb::Cool,
                    };
                    Some(Action::new(verb, vec![o.clone(), here?.to_string()]))
                }
                _ => None,
            },
            ActionKind::Open => self.here_closed().then(|| Action::open(here.unwrap_or_default())),
            ActionKind::Close => self.here_open().then(|| Action::close(here.unwrap_or_default())),
            ActionKind::GoToTool => {
                let t = self.tool_location()?;
                (here != Some(t)).then(|| Action::go_to(t))
            }
            ActionKind::GoToTarget => {
                let t = self.goal.target.as_deref()?;
                (here != Some(t)).then(|| Action::go_to(t))
            }
            ActionKind::GoToSeen => {
                if self.holding.is_some() {
                    return None;
                }
                self.seen_elsewhere().map(|r| Action::go_to(r))
            }
            ActionKind::Explore => self.unvisited().next().map(|r| Action::go_to(r)),
            ActionKind::Wander => self.unvisited().next_back().map(|r| Action::go_to(r)),
            ActionKind::GoBack => {
                let p = self.prev_location.as_deref()?;
                (here != Some(p)).then(|| Action::go_to(p))
            }
            _ => None,
        }
    }

    fn gold(&self) -> Option<ActionKind> {
        let k = if self.holding.is_some() {
            if self.goal.task_type == TaskType::Examine {
                if self.at_tool() {
                    ActionKind::UseTool
                } else if self.lamp_at.is_some() {
                    ActionKind::GoToTool
                } else {
                    ActionKind::Explore
                }
            } else if self.pending_process() {
                if self.at_tool() {
                    ActionKind::UseTool
                } else {
                    ActionKind::GoToTool
                }
            } else if self.at_target() {
                if self.here_closed() {
                    ActionKind::Open
                } else {
                    ActionKind::PutHere
                }
            } else {
                ActionKind::GoToTarget
            }
        } else if self.goal_here().is_some() {
            ActionKind::TakeGoal
        } else if self.here_closed() {
            ActionKind::Open
        } else if self.seen_elsewhere().is_some() {
            ActionKind::GoToSeen
        } else {
            ActionKind::Explore
        };
        self.ground(k).map(|_| k)
    }

    fn key(&self) -> StateKey {
        let holding = match &self.holding {
            None => HoldingClass::None,
            Some(_) if self.holding_goal() => HoldingClass::Goal,
            Some(_) => HoldingClass::Other,
        };
        let phase = if self.holding.is_none() {
            Phase::Seeking
        } else if self.at_target() {
            Phase::AtTarget
        } else if self.holding_goal() && self.goal.task_type.needs_processing() && self.processed {
            Phase::PostProcess
        } else {
            Phase::Holding
        };
        StateKey { task_type: self.goal.task_type, phase, holding }
    }

    fn features(&self) -> Vec<usize> {
        // Processing progress is left out on purpose: the policy cannot tell
        // a cleaned object from a dirty one, the knowledge state key can.
        let t = self.goal.task_type;
        let flags = [
            self.holding.is_some(),
            self.holding_goal(),
            self.at_target(),
            self.at_tool(),
            self.here_closed(),
            self.here_open(),
            self.goal_here().is_some(),
            self.seen_elsewhere().is_some(),
            self.tool_location().is_some(),
            self.placed > 0,
            self.location.is_none(),
            self.last_failed,
            self.unvisited().next().is_some(),
            self.other_here().is_some(),
        ];
        let mut f = vec![0, 1 + t.index()];
        f.extend(flags.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| 7 + i));
        f
    }
}

const HOUSE_FEATURES: usize = 7 + 14;

#[derive(Debug, Clone, PartialEq)]
pub struct ShopBelief {
    goal: ShopGoal,
    page: ShopPage,
    results: Vec<Listing>,
    item: Option<Listing>,
    color: Option<String>,
    size: Option<String>,
    searched: bool,
    last_failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShopPage {
    Start,
    Results,
    Item,
}

impl ShopBelief {
    fn new(goal: ShopGoal) -> Self {
        Self {
            goal,
            page: ShopPage::Start,
            results: vec![],
            item: None,
            color: None,
            size: None,
            searched: false,
            last_failed: false,
        }
    }

    fn good(&self, l: &Listing) -> bool {
        l.category == self.goal.category
            && l.colors.contains(&self.goal.color)
            && l.sizes.contains(&self.goal.size)
            && l.price_cents <= self.goal.price_cap * 100
    }

    fn update(&mut self, s: &Step) {
        if s.observation.is_nothing() {
            self.last_failed = true;
            return;
        }
        self.last_failed = false;
        let a = &s.action;
        let listings = || s.observation.text.lines().filter_map(parse_listing).collect::<Vec<_>>();
        match a.verb {
            Verb::Search => {
                self.page = ShopPage::Results;
                self.results = listings();
                self.searched = true;
            }
            Verb::Click if a.args[0] == BACK => {
                self.page = ShopPage::Start;
                self.item = None;
            }
            Verb::Click if self.page == ShopPage::Results => {
                self.page = ShopPage::Item;
                self.item = listings().into_iter().next();
                self.color = None;
                self.size = None;
            }
            Verb::Click => {
                let o = &a.args[0];
                if let Some(it) = &self.item {
                    if it.colors.contains(o) {
                        self.color = Some(o.clone());
                    } else if it.sizes.contains(o) {
                        self.size = Some(o.clone());
                    }
                }
            }
            _ => {}
        }
    }

    fn best(&self) -> Option<&Listing> {
        self.results.iter().find(|l| self.good(l))
    }

    fn item_good(&self) -> bool {
        self.item.as_ref().is_some_and(|l| self.good(l))
    }

    fn color_pending(&self) -> bool {
        self.item.as_ref().is_some_and(|l| l.colors.contains(&self.goal.color))
            && self.color.as_ref() != Some(&self.goal.color)
    }

    fn size_pending(&self) -> bool {
        self.item.as_ref().is_some_and(|l| l.sizes.contains(&self.goal.size))
            && self.size.as_ref() != Some(&self.goal.size)
    }

    fn ground(&self, k: ActionKind) -> Option<Action> {
        let on = |p: ShopPage| self.page == p;
        match k {
            ActionKind::Buy => on(ShopPage::Item).then(Action::buy),
            ActionKind::ClickColor => (on(ShopPage::Item) && self.color_pending()).then(|| Action::click(&self.goal.color)),
            ActionKind::ClickSize => (on(ShopPage::Item) && self.size_pending()).then(|| Action::click(&self.goal.size)),
            ActionKind::ClickBest => {
                if !on(ShopPage::Results) {
                    return None;
                }
                self.best().map(|l| Action::click(&l.id))
            }
            ActionKind::SearchGoal => (!on(ShopPage::Item)).then(|| Action::search(&self.goal.query())),
            ActionKind::SearchCategory => (!on(ShopPage::Item)).then(|| Action::search(&self.goal.category)),
            ActionKind::ClickFirst => {
                if !on(ShopPage::Results) {
                    return None;
                }
                self.results.first().map(|l| Action::click(&l.id))
            }
            ActionKind::ClickOther => {
                if !on(ShopPage::Results) {
                    return None;
                }
                let best = self.best().map(|l| l.id.as_str());
                self.results.iter().skip(1).find(|l| Some(l.id.as_str()) != best).map(|l| Action::click(&l.id))
            }
            ActionKind::ClickOtherOption => {
                let it = self.item.as_ref().filter(|_| on(ShopPage::Item))?;
                let taken = [self.color.as_ref(), self.size.as_ref()];
                it.colors
                    .iter()
                    .filter(|c| **c != self.goal.color)
                    .chain(it.sizes.iter().filter(|s| **s != self.goal.size))
                    .find(|o| !taken.contains(&Some(*o)))
                    .map(|o| Action::click(o))
            }
            ActionKind::BackToSearch => (!on(ShopPage::Start)).then(|| Action::click(BACK)),
            _ => None,
        }
    }

    fn gold(&self) -> Option<ActionKind> {
        let k = match self.page {
            ShopPage::Start => ActionKind::SearchGoal,
            ShopPage::Results => ActionKind::ClickBest,
            ShopPage::Item if !self.item_good() => ActionKind::BackToSearch,
            ShopPage::Item if self.color_pending() => ActionKind::ClickColor,
            ShopPage::Item if self.size_pending() => ActionKind::ClickSize,
            ShopPage::Item => ActionKind::Buy,
        };
        self.ground(k).map(|_| k)
    }

    fn key(&self) -> StateKey {
        let (phase, holding) = match self.page {
            ShopPage::Start | ShopPage::Results => (Phase::Seeking, HoldingClass::None),
            ShopPage::Item if !self.item_good() => (Phase::Holding, HoldingClass::Other),
            ShopPage::Item if self.color_pending() || self.size_pending() => (Phase::Holding, HoldingClass::Goal),
            ShopPage::Item => (Phase::AtTarget, HoldingClass::Goal),
        };
        StateKey { task_type: TaskType::Purchase, phase, holding }
    }

    fn features(&self) -> Vec<usize> {
        let best_first = match (self.best(), self.results.first()) {
            (Some(b), Some(f)) => b.id == f.id,
            _ => false,
        };
        let on_item = self.page == ShopPage::Item;
        let flags = [
            self.page == ShopPage::Start,
            self.page == ShopPage::Results,
            on_item,
            self.best().is_some(),
            best_first,
            on_item && self.item_good(),
            on_item && !self.item_good(),
            on_item && self.color_pending(),
            on_item && self.size_pending(),
            on_item && !self.color_pending() && !self.size_pending(),
            self.last_failed,
            self.searched,
        ];
        let mut f = vec![0];
        f.extend(flags.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| 1 + i));
        f
    }
}

const SHOP_FEATURES: usize = 1 + 12;

/// What the agent believes about the world after a history.
#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    House(HouseBelief),
    Shop(ShopBelief),
}

impl Belief {
    pub fn new(task: &Task, initial: &Observation) -> Self {
        match (&task.goal, task.house_goal()) {
            (_, Some(g)) => Belief::House(HouseBelief::new(g.clone(), initial)),
            (super::Goal::Shop(g), None) => Belief::Shop(ShopBelief::new(g.clone())),
            (super::Goal::House(_), None) => unreachable!(),
        }
    }

    pub fn from_history(h: &History) -> Self {
        let mut b = Belief::new(&h.task, &h.initial);
        for s in &h.steps {
            b.update(s);
        }
        b
    }

    pub fn update(&mut self, s: &Step) {
        match self {
            Belief::House(b) => b.update(s),
            Belief::Shop(b) => b.update(s),
        }
    }

    pub fn env_kind(&self) -> EnvKind {
        match self {
            Belief::House(_) => EnvKind::MiniHouse,
            Belief::Shop(_) => EnvKind::MiniShop,
        }
    }

    pub fn ground(&self, k: ActionKind) -> Option<Action> {
        match self {
            Belief::House(b) => b.ground(k),
            Belief::Shop(b) => b.ground(k),
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        let mut entries: Vec<(usize, Action)> = Vec::new();
        for (i, k) in vocab(self.env_kind()).iter().enumerate() {
            if let Some(a) = self.ground(*k) {
                if !entries.iter().any(|(_, x)| *x == a) {
                    entries.push((i, a));
                }
            }
        }
        ActionSpace { entries }
    }

    /// Gold action role, or `None` if the belief admits no progress.
    pub fn gold(&self) -> Option<ActionKind> {
        match self {
            Belief::House(b) => b.gold(),
            Belief::Shop(b) => b.gold(),
        }
    }

    /// Gold action id within the deduplicated action space.
    pub fn gold_id(&self) -> Option<usize> {
        let a = self.ground(self.gold()?)?;
        self.action_space().id_of(&a)
    }

    pub fn state_key(&self) -> StateKey {
        match self {
            Belief::House(b) => b.key(),
            Belief::Shop(b) => b.key(),
        }
    }

    /// Active binary features; index 0 is the bias.
    pub fn features(&self) -> Vec<usize> {
        match self {
            Belief::House(b) => b.features(),
            Belief::Shop(b) => b.features(),
        }
    }
}

/// Width of the belief feature block for an environment.
pub fn base_feature_dim(env: EnvKind) -> usize {
    match env {
        EnvKind::MiniHouse => HOUSE_FEATURES,
        EnvKind::MiniShop => SHOP_FEATURES,
    }
}

pub(crate) fn oracle_plan(task: &Task) -> Result<Vec<Action>, EnvError> {
    let task_arc = Arc::new(task.clone());
    let initial = task_arc.initial_observation();
    let mut belief = Belief::new(&task_arc, &initial);
    let mut state = task.initial_state.clone();
    let mut plan = Vec::new();
    let fail = || EnvError::OracleFailure(task.id.clone());
    for _ in 0..task.env_kind.step_cap() {
        let kind = belief.gold().ok_or_else(fail)?;
        let action = belief.ground(kind).ok_or_else(fail)?;
        let (next, obs, _, done) = super::step(&state, &task.goal, &action);
        state = next;
        belief.update(&Step { action: action.clone(), observation: obs });
        plan.push(action);
        if done {
            return Ok(plan);
        }
    }
    Err(fail())
}

/// Gold action role at every step of the oracle trajectory, with the
/// history prefix it was taken from.
pub fn gold_steps(task: &Arc<Task>) -> Result<Vec<(History, Action)>, EnvError> {
    let plan = oracle_plan(task)?;
    let (_, traj, _) = super::replay(task, &plan);
    let mut h = History::new(task.clone());
    let mut out = Vec::with_capacity(plan.len());
    for s in traj.steps {
        out.push((h.clone(), s.action.clone()));
        h.push(s.action, s.observation);
    }
    Ok(out)
}
