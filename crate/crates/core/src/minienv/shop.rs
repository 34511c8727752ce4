//! MiniShop: a seeded catalog behind a search page.
//!
//! Reward on `buy` is `matched / required * (1 if price <= cap else 0.5)`
//! where the required attributes are category, color and size.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Action, EnvError, EnvKind, Goal, Observation, Task, TaskType, Verb, WorldState};

pub const BACK: &str = "back to search";
const CATEGORIES: [&str; 7] = ["t-shirt", "sneakers", "backpack", "mug", "lamp", "jacket", "watch"];
const COLORS: [&str; 6] = ["red", "blue", "black", "white", "green", "grey"];
const SIZES: [&str; 3] = ["small", "medium", "large"];
const MATERIALS: [&str; 5] = ["cotton", "leather", "canvas", "steel", "ceramic"];
const CATALOG_SIZE: usize = 24;
const RESULTS_SHOWN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub category: String,
    pub material: String,
    pub colors: Vec<String>,
    pub sizes: Vec<String>,
    pub price_cents: u32,
}

impl Product {
    pub fn title(&self) -> String {
        format!("{} {}", self.material, self.category)
    }

    pub fn price(&self) -> f64 {
        self.price_cents as f64 / 100.0
    }

    fn listing(&self) -> String {
        format!(
            "[{}] {} | colors: {} | sizes: {} | ${}.{:02}",
            self.id,
            self.title(),
            self.colors.join(", "),
            self.sizes.join(", "),
            self.price_cents / 100,
            self.price_cents % 100
        )
    }
}

/// A product line as shown on a results or item page.
#[derive(Debug, Clone, PartialEq)]
pub struct Listing {
    pub id: String,
    pub category: String,
    pub colors: Vec<String>,
    pub sizes: Vec<String>,
    pub price_cents: u32,
}

/// Parse `[item 3] canvas backpack | colors: red, blue | sizes: small | $12.50`.
pub fn parse_listing(line: &str) -> Option<Listing> {
    let rest = line.strip_prefix('[')?;
    let (id, rest) = rest.split_once("] ")?;
    let mut parts = rest.split(" | ");
    let title = parts.next()?;
    let category = title.split_once(' ')?.1.to_string();
    let list = |p: Option<&str>, key: &str| -> Option<Vec<String>> {
        Some(p?.strip_prefix(key)?.split(", ").map(str::to_string).collect())
    };
    let colors = list(parts.next(), "colors: ")?;
    let sizes = list(parts.next(), "sizes: ")?;
    let (d, c) = parts.next()?.strip_prefix('$')?.split_once('.')?;
    let price_cents = d.parse::<u32>().ok()? * 100 + c.parse::<u32>().ok()?;
    Some(Listing { id: id.to_string(), category, colors, sizes, price_cents })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "page")]
pub enum Page {
    Start,
    Results { query: String, items: Vec<String> },
    Item { item: String, color: Option<String>, size: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopState {
    pub products: Vec<Product>,
    pub page: Page,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopGoal {
    pub category: String,
    pub color: String,
    pub size: String,
    pub price_cap: u32,
}

impl ShopGoal {
    pub fn query(&self) -> String {
        format!("{} {}", self.color, self.category)
    }

    pub fn text(&self) -> String {
        format!(
            "i am looking for a {} {} in size {}, and price lower than {} dollars",
            self.color, self.category, self.size, self.price_cap
        )
    }
}

pub(crate) fn generate(seed: u64) -> Result<Task, EnvError> {
    for attempt in 0..64 {
        let mut rng = seeded_rng(seed, &format!("shop/{attempt}"));
        let products: Vec<Product> = (1..=CATALOG_SIZE).map(|i| random_product(&mut rng, i)).collect();
        let p = &products[rng.gen_range(0..products.len())];
        let goal = ShopGoal {
            category: p.category.clone(),
            color: p.colors.choose(&mut rng).expect("non-empty").clone(),
            size: p.sizes.choose(&mut rng).expect("non-empty").clone(),
            price_cap: p.price_cents / 100 + rng.gen_range(1..=10),
        };
        let state = ShopState { products, page: Page::Start, done: false };
        let task = Task {
            id: format!("shop-purchase-{seed}"),
            env_kind: EnvKind::MiniShop,
            task_type: TaskType::Purchase,
            goal_text: goal.text(),
            seed,
            goal: Goal::Shop(goal),
            initial_state: WorldState::Shop(state),
        };
        if let Ok(plan) = super::oracle_plan(&task) {
            let (_, traj, done) = super::replay(&task, &plan);
            if done && traj.reward >= 0.8 && plan.len() <= super::SHOP_STEP_CAP {
                return Ok(task);
            }
        }
    }
    Err(EnvError::OracleFailure(format!("shop seed {seed}")))
}

fn random_product(rng: &mut impl Rng, i: usize) -> Product {
    let pick = |rng: &mut _, xs: &[&str], lo: usize, hi: usize| -> Vec<String> {
        let n = Rng::gen_range(rng, lo..=hi);
        let mut v: Vec<String> = xs.choose_multiple(rng, n).map(|s| s.to_string()).collect();
        v.sort_by_key(|s| xs.iter().position(|x| x == s));
        v
    };
    Product {
        id: format!("item {i}"),
        category: CATEGORIES[rng.gen_range(0..CATEGORIES.len())].to_string(),
        material: MATERIALS[rng.gen_range(0..MATERIALS.len())].to_string(),
        colors: pick(rng, &COLORS, 1, 3),
        sizes: pick(rng, &SIZES, 1, 3),
        price_cents: rng.gen_range(500..8000),
    }
}

fn search(products: &[Product], query: &str) -> Vec<String> {
    let words: Vec<&str> = query.split_whitespace().collect();
    let mut scored: Vec<(usize, usize, &Product)> = products
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let mut score = 0;
            for w in &words {
                if p.category == *w {
                    score += 2;
                }
                if p.material == *w || p.colors.iter().any(|c| c == w) {
                    score += 1;
                }
            }
            (score > 0).then_some((score, i, p))
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(RESULTS_SHOWN).map(|(_, _, p)| p.id.clone()).collect()
}

fn product<'a>(s: &'a ShopState, id: &str) -> Option<&'a Product> {
    s.products.iter().find(|p| p.id == id)
}

pub(crate) fn observe(s: &ShopState, g: &ShopGoal) -> Observation {
    match &s.page {
        Page::Start => Observation::text(format!("You are on the search page.\nInstruction: {}.", g.text())),
        Page::Results { query, items } => {
            let mut lines = vec![format!("Results for \"{query}\":")];
            for id in items {
                if let Some(p) = product(s, id) {
                    lines.push(p.listing());
                }
            }
            lines.push(format!("[{BACK}]"));
            Observation::with(lines.join("\n"), items.clone())
        }
        Page::Item { item, color, size } => {
            let p = product(s, item).expect("item page shows a catalog product");
            let mut opts = p.colors.clone();
            opts.extend(p.sizes.iter().cloned());
            let sel: Vec<&str> = [color.as_deref(), size.as_deref()].into_iter().flatten().collect();
            let text = format!(
                "{}\nselected: {}\n[buy now] [{BACK}]",
                p.listing(),
                if sel.is_empty() { "none".to_string() } else { sel.join(", ") }
            );
            Observation::with(text, opts)
        }
    }
}

/// Dense purchase reward for buying `p` with the chosen options.
pub fn purchase_reward(p: &Product, color: Option<&str>, size: Option<&str>, g: &ShopGoal) -> f64 {
    let matched = [p.category == g.category, color == Some(g.color.as_str()), size == Some(g.size.as_str())]
        .iter()
        .filter(|m| **m)
        .count();
    let price_factor = if p.price_cents <= g.price_cap * 100 { 1.0 } else { 0.5 };
    matched as f64 / 3.0 * price_factor
}

pub(crate) fn step(s: &ShopState, g: &ShopGoal, a: &Action) -> (ShopState, Observation, f64, bool) {
    if s.done {
        return (s.clone(), Observation::nothing(), 0.0, true);
    }
    let mut n = s.clone();
    let mut reward = 0.0;
    let ok = match (&s.page, a.verb) {
        (Page::Start | Page::Results { .. }, Verb::Search) => {
            let items = search(&s.products, &a.args[0]);
            n.page = Page::Results { query: a.args[0].clone(), items };
            true
        }
        (Page::Results { items, .. }, Verb::Click) if items.contains(&a.args[0]) => {
            n.page = Page::Item { item: a.args[0].clone(), color: None, size: None };
            true
        }
        (Page::Results { .. } | Page::Item { .. }, Verb::Click) if a.args[0] == BACK => {
            n.page = Page::Start;
            true
        }
        (Page::Item { item, color, size }, Verb::Click) => {
            let p = product(s, item).expect("catalog item");
            let o = &a.args[0];
            if p.colors.contains(o) {
                n.page = Page::Item { item: item.clone(), color: Some(o.clone()), size: size.clone() };
                true
            } else if p.sizes.contains(o) {
                n.page = Page::Item { item: item.clone(), color: color.clone(), size: Some(o.clone()) };
                true
            } else {
                false
            }
        }
        (Page::Item { item, color, size }, Verb::Buy) => {
            let p = product(s, item).expect("catalog item");
            reward = purchase_reward(p, color.as_deref(), size.as_deref(), g);
            n.done = true;
            true
        }
        _ => false,
    };
    if !ok {
        return (s.clone(), Observation::nothing(), 0.0, false);
    }
    let obs = if n.done {
        Observation::text(format!("Thank you for shopping with us! Your score: {reward:.4}"))
    } else {
        observe(&n, g)
    };
    let done = n.done;
    (n, obs, reward, done)
}
