//! Upper-confidence tree search over assignment histories.
//!
//! A node is identified by the sequence of states visited from `∅`. The
//! search is generic over an [`Environment`] that lists the surviving
//! successors of a state and executes a transition, so the same tree drives
//! the constraint-graph sampler and small synthetic decision problems.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::varset::VarSet;

/// Keeps lambda strictly inside (0, 1).
pub const LAMBDA_EPS: f64 = 1e-6;
pub const DEFAULT_N_EQUIV: u32 = 10;

/// Result of executing one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub feasible: bool,
    /// Cost already expressed in reward units.
    pub cost: f64,
}

pub trait Environment {
    /// Successor states reachable from `state` through surviving transitions.
    fn options(&self, state: VarSet) -> &[VarSet];
    fn goal(&self) -> VarSet;
    /// Clears any partial assignment before a new rollout.
    fn reset(&mut self);
    fn step<R: Rng>(&mut self, from: VarSet, to: VarSet, rng: &mut R) -> StepOutcome;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSource {
    WallClock,
    CostProxy,
}

impl CostSource {
    /// Default normalisation: one reward unit per second of wall clock, or
    /// per thousand proxy units.
    pub fn default_time_unit(self) -> f64 {
        match self {
            CostSource::WallClock => 1.0,
            CostSource::CostProxy => 1000.0,
        }
    }
}

impl fmt::Display for CostSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostSource::WallClock => "wall_clock",
            CostSource::CostProxy => "cost_proxy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda: f64,
    pub r_g: f64,
    pub cost_source: CostSource,
    /// Raw cost units (seconds or proxy units) per reward unit.
    pub time_unit: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { lambda: 0.5, r_g: 1.0, cost_source: CostSource::WallClock, time_unit: 1.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.time_unit > 0.0 && self.time_unit.is_finite()) {
            return Err(format!("time_unit must be positive, got {}", self.time_unit));
        }
        if !self.r_g.is_finite() {
            return Err("r_g must be finite".into());
        }
        Ok(())
    }

    /// Converts a raw cost (seconds or proxy units) to reward units.
    pub fn normalize(&self, raw: f64) -> f64 {
        raw / self.time_unit
    }

    pub fn reward(&self, reached: bool, total_cost: f64) -> f64 {
        let goal = if reached { self.r_g } else { 0.0 };
        (1.0 - self.lambda) * goal - self.lambda * total_cost
    }
}

/// `λ = 1 / (ĉ + 1)` where `ĉ` is the mean total cost per calibration
/// rollout, clamped into the open unit interval.
pub fn auto_lambda(rollout_costs: &[f64]) -> f64 {
    let c_hat = if rollout_costs.is_empty() {
        0.0
    } else {
        rollout_costs.iter().sum::<f64>() / rollout_costs.len() as f64
    };
    (1.0 / (c_hat + 1.0)).clamp(LAMBDA_EPS, 1.0 - LAMBDA_EPS)
}

/// UCT choice among children given as `(q, visits)`.
///
/// Unvisited children win in declaration order; ties go to the lowest index.
pub fn uct_select(children: &[(f64, u64)], parent_visits: u64, c: f64) -> Option<usize> {
    if let Some(i) = children.iter().position(|&(_, n)| n == 0) {
        return Some(i);
    }
    let ln_n = (parent_visits.max(1) as f64).ln();
    let mut best: Option<(usize, f64)> = None;
    for (i, &(q, n)) in children.iter().enumerate() {
        let score = q + c * (ln_n / n as f64).sqrt();
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: VarSet,
    pub parent: Option<usize>,
    pub depth: usize,
    pub q_value: f64,
    /// Includes any prior visits injected by warmstarting.
    pub visits: u64,
    pub prior_visits: u64,
    /// `None` until the node is first expanded.
    pub children: Option<Vec<usize>>,
    pub terminal: bool,
    pub signature: String,
}

impl SearchNode {
    /// Visits from actual rollouts.
    pub fn real_visits(&self) -> u64 {
        self.visits - self.prior_visits
    }
}

/// `{}>{0}>{0,1}`: the state history joined with `>`.
pub fn extend_signature(parent: &str, state: VarSet) -> String {
    if parent.is_empty() {
        state.to_string()
    } else {
        format!("{parent}>{state}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub exploration: f64,
    /// Longest allowed history (the horizon).
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub history: Vec<VarSet>,
    pub reached_goal: bool,
    pub reward: f64,
    pub total_cost: f64,
    /// The transition whose operation failed, if any.
    pub failed: Option<(VarSet, VarSet)>,
    /// Nodes updated during backpropagation, root first.
    pub path: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    goal: VarSet,
    prior: Option<WarmstartStore>,
}

impl SearchTree {
    pub fn new(goal: VarSet) -> Self {
        Self::with_prior(goal, None)
    }

    pub fn with_prior(goal: VarSet, prior: Option<WarmstartStore>) -> Self {
        let mut tree = SearchTree { nodes: Vec::new(), goal, prior };
        tree.push(VarSet::EMPTY, None);
        tree
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    fn push(&mut self, state: VarSet, parent: Option<usize>) -> usize {
        let (depth, signature) = match parent {
            Some(p) => (self.nodes[p].depth + 1, extend_signature(&self.nodes[p].signature, state)),
            None => (0, extend_signature("", state)),
        };
        let mut node = SearchNode {
            state,
            parent,
            depth,
            q_value: 0.0,
            visits: 0,
            prior_visits: 0,
            children: None,
            terminal: state == self.goal,
            signature,
        };
        if let Some(store) = &self.prior {
            if let Some(entry) = store.get(&node.signature) {
                node.q_value = entry.mean_q;
                node.visits = store.n_equiv as u64;
                node.prior_visits = node.visits;
            }
        }
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Creates child nodes for every option on first use.
    pub fn expand<E: Environment>(&mut self, id: usize, env: &E) -> &[usize] {
        if self.nodes[id].children.is_none() {
            let state = self.nodes[id].state;
            let kids: Vec<usize> = env.options(state).to_vec().into_iter().map(|s| self.push(s, Some(id))).collect();
            self.nodes[id].children = Some(kids);
        }
        self.nodes[id].children.as_deref().unwrap_or(&[])
    }

    /// UCT choice among the expanded children of `id`.
    pub fn select_child(&self, id: usize, c: f64) -> Option<usize> {
        let kids = self.nodes[id].children.as_deref()?;
        let stats: Vec<(f64, u64)> = kids.iter().map(|&k| (self.nodes[k].q_value, self.nodes[k].visits)).collect();
        let child_total: u64 = stats.iter().map(|s| s.1).sum();
        let parent = self.nodes[id].visits.max(child_total);
        uct_select(&stats, parent, c).map(|i| kids[i])
    }

    /// Running-mean update of every node on the path.
    pub fn backpropagate(&mut self, path: &[usize], reward: f64) {
        for &id in path {
            let n = &mut self.nodes[id];
            n.visits += 1;
            n.q_value += (reward - n.q_value) / n.visits as f64;
        }
    }

    /// One simulation: descend with UCT until the first never-visited node,
    /// continue with uniformly random surviving transitions, then back up
    /// the total reward along the tree part of the path.
    pub fn rollout<E: Environment, R: Rng>(
        &mut self,
        env: &mut E,
        reward_cfg: &RewardConfig,
        search: &SearchConfig,
        rng: &mut R,
    ) -> RolloutOutcome {
        env.reset();
        let goal = env.goal();
        let mut node = self.root();
        let mut path = vec![node];
        let mut history = vec![VarSet::EMPTY];
        let mut state = VarSet::EMPTY;
        let mut in_tree = true;
        let mut total_cost = 0.0;
        let mut failed = None;
        while state != goal && history.len() <= search.horizon {
            let next = if in_tree {
                self.expand(node, env);
                let Some(child) = self.select_child(node, search.exploration) else { break };
                if self.nodes[child].visits == 0 {
                    in_tree = false;
                }
                node = child;
                path.push(child);
                self.nodes[child].state
            } else {
                match env.options(state).choose(rng) {
                    Some(&s) => s,
                    None => break,
                }
            };
            let out = env.step(state, next, rng);
            total_cost += out.cost;
            history.push(next);
            if !out.feasible {
                failed = Some((state, next));
                break;
            }
            state = next;
        }
        let reached_goal = failed.is_none() && state == goal;
        let reward = reward_cfg.reward(reached_goal, total_cost);
        self.backpropagate(&path, reward);
        RolloutOutcome { history, reached_goal, reward, total_cost, failed, path }
    }

    /// Visit counts of the root's children, in declaration order.
    pub fn root_visit_counts(&self) -> Vec<(VarSet, u64)> {
        self.nodes[0]
            .children
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|&k| (self.nodes[k].state, self.nodes[k].real_visits()))
            .collect()
    }

    /// Follows the most visited child from the root.
    pub fn best_sequence(&self) -> Vec<VarSet> {
        let mut out = vec![self.nodes[0].state];
        let mut id = 0;
        while let Some(kids) = self.nodes[id].children.as_deref() {
            let Some(&best) = kids.iter().max_by_key(|&&k| (self.nodes[k].real_visits(), std::cmp::Reverse(k))) else {
                break;
            };
            if self.nodes[best].real_visits() == 0 {
                break;
            }
            out.push(self.nodes[best].state);
            id = best;
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum WarmstartError {
    #[error("warmstart store line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmEntry {
    pub mean_q: f64,
    pub instance_count: u32,
}

/// Q values averaged over previously solved instances, keyed by history
/// signature.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmstartStore {
    entries: BTreeMap<String, WarmEntry>,
    pub n_equiv: u32,
}

impl Default for WarmstartStore {
    fn default() -> Self {
        WarmstartStore { entries: BTreeMap::new(), n_equiv: DEFAULT_N_EQUIV }
    }
}

impl WarmstartStore {
    pub fn new(n_equiv: u32) -> Self {
        WarmstartStore { entries: BTreeMap::new(), n_equiv }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, signature: &str) -> Option<&WarmEntry> {
        self.entries.get(signature)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &WarmEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Folds one instance's Q value into the running mean for `signature`.
    pub fn merge(&mut self, signature: &str, q: f64) {
        let e = self.entries.entry(signature.to_string()).or_insert(WarmEntry { mean_q: 0.0, instance_count: 0 });
        e.instance_count += 1;
        e.mean_q += (q - e.mean_q) / e.instance_count as f64;
    }

    /// Adds every node of a finished tree that received real visits.
    pub fn record_tree(&mut self, tree: &SearchTree) {
        for n in tree.nodes() {
            if n.real_visits() > 0 {
                self.merge(&n.signature, n.q_value);
            }
        }
    }

    /// Sets `q = mean_q` and `visits = n_equiv` on matching nodes.
    pub fn apply(&self, tree: &mut SearchTree) {
        for n in &mut tree.nodes {
            if let Some(e) = self.entries.get(&n.signature) {
                let real = n.real_visits();
                n.q_value = e.mean_q;
                n.prior_visits = self.n_equiv as u64;
                n.visits = n.prior_visits + real;
            }
        }
        tree.prior = Some(self.clone());
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (sig, e) in &self.entries {
            out.push_str(&format!("{sig} {} {}\n", e.mean_q, e.instance_count));
        }
        out
    }

    pub fn parse(text: &str, n_equiv: u32) -> Result<Self, WarmstartError> {
        let mut store = WarmstartStore::new(n_equiv);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| WarmstartError::Format { line: i + 1, message: message.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [sig, q, count] = fields[..] else {
                return Err(err("expected `<signature> <mean_q> <instance_count>`"));
            };
            let mean_q: f64 = q.parse().map_err(|_| err("mean_q is not a number"))?;
            let instance_count: u32 = count.parse().map_err(|_| err("instance_count is not an integer"))?;
            if instance_count == 0 || !mean_q.is_finite() {
                return Err(err("instance_count must be ≥ 1 and mean_q finite"));
            }
            store.entries.insert(sig.to_string(), WarmEntry { mean_q, instance_count });
        }
        Ok(store)
    }

    pub fn load(path: &Path, n_equiv: u32) -> Result<Self, WarmstartError> {
        Self::parse(&fs::read_to_string(path)?, n_equiv)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_text())
    }
}
