//! Budgeted generation of full samples with a pluggable strategy: the
//! learned tree (cold or warm-started), a fixed expert sequence, or uniformly
//! random surviving transitions.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Assignment, ConstraintGraph};
use crate::mcts::{
    auto_lambda, CostSource, Environment, RewardConfig, SearchConfig, SearchTree, StepOutcome, WarmstartStore,
};
use crate::solve::{conditional_sample, SolverConfig};
use crate::states::TransitionTable;
use crate::varset::VarSet;

/// Proxy cost units per virtual second when the clock runs on cost_proxy.
pub const DEFAULT_PROXY_RATE: f64 = 2.0e6;

/// Random attempts allowed per calibration rollout.
pub const MAX_CALIBRATION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("no surviving path from the empty state to the full set")]
    NoPath,
    #[error("budget must be positive, got {0}")]
    Budget(f64),
    #[error("invalid expert sequence: {0}")]
    Expert(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown strategy `{0}` (expected tree, tree_warm, expert, random)")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Tree,
    TreeWarm,
    Expert,
    Random,
}

impl FromStr for StrategyKind {
    type Err = RuntimeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tree" => Ok(StrategyKind::Tree),
            "tree_warm" | "tree-warm" => Ok(StrategyKind::TreeWarm),
            "expert" => Ok(StrategyKind::Expert),
            "random" => Ok(StrategyKind::Random),
            other => Err(RuntimeError::UnknownStrategy(other.to_string())),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Tree => "tree",
            StrategyKind::TreeWarm => "tree_warm",
            StrategyKind::Expert => "expert",
            StrategyKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Label used in reports (`tree`, `expert1-handover`, ...).
    pub label: String,
    /// States after `∅`, ending at the full set.
    pub expert_sequence: Option<Vec<VarSet>>,
    pub warmstart: Option<WarmstartStore>,
}

impl Strategy {
    pub fn tree() -> Self {
        Strategy { kind: StrategyKind::Tree, label: "tree".into(), expert_sequence: None, warmstart: None }
    }

    pub fn tree_warm(store: WarmstartStore) -> Self {
        Strategy { kind: StrategyKind::TreeWarm, label: "tree_warm".into(), expert_sequence: None, warmstart: Some(store) }
    }

    pub fn random() -> Self {
        Strategy { kind: StrategyKind::Random, label: "random".into(), expert_sequence: None, warmstart: None }
    }

    pub fn expert(label: impl Into<String>, sequence: Vec<VarSet>) -> Self {
        Strategy { kind: StrategyKind::Expert, label: label.into(), expert_sequence: Some(sequence), warmstart: None }
    }
}

/// Expert sequences shipped with the scenarios: `(name, sequence)`.
pub const BUILTIN_EXPERTS: [(&str, &str); 9] = [
    ("expert1-pick_place", "(t,q1,q2)"),
    ("expert2-pick_place", "t,q1,q2"),
    ("expert3-pick_place", "(q1,t),q2"),
    ("expert1-handover", "(q_a1,q_a2,t_a,q_b1,q_b2,t_b,p)"),
    ("expert2-handover", "p,t_a,t_b,q_a1,q_a2,q_b2,q_b1"),
    ("expert3-handover", "(q_a1,t_a),(q_a2,p,q_b2,t_b),q_b1"),
    ("expert1-banana", "(q_a1,q_a2,t_a,p,q_x,t_x,q_b1,q_b2,t_b)"),
    ("expert2-banana", "p,t_a,t_b,t_x,q_a1,q_a2,q_x,q_b1,q_b2"),
    ("expert3-banana", "(q_a1,t_a),(q_a2,p),(q_x,t_x),(q_b1,t_b),q_b2"),
];

/// Names of the builtin experts whose suffix matches `family`.
pub fn builtin_experts_for(family: &str) -> Vec<&'static str> {
    BUILTIN_EXPERTS
        .iter()
        .filter(|(n, _)| n.split_once('-').map(|(_, f)| f) == Some(family))
        .map(|(n, _)| *n)
        .collect()
}

/// Parses `(a,b),c,(d,e)`: left to right, tuples are sampled jointly.
pub fn parse_sequence(g: &ConstraintGraph, text: &str) -> Result<Vec<VarSet>, RuntimeError> {
    let cleaned: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join(" ");
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut current: Option<Vec<String>> = None;
    let mut token = String::new();
    let flush = |token: &mut String, into: &mut Vec<String>| {
        let t = token.trim();
        if !t.is_empty() {
            into.push(t.to_string());
        }
        token.clear();
    };
    for ch in cleaned.chars() {
        match (ch, current.as_mut()) {
            ('(', None) => {
                let mut top = Vec::new();
                flush(&mut token, &mut top);
                if !top.is_empty() {
                    return Err(RuntimeError::Expert(format!("missing comma before `(` after {top:?}")));
                }
                current = Some(Vec::new());
            }
            ('(', Some(_)) => return Err(RuntimeError::Expert("nested parentheses".into())),
            (')', Some(group)) => {
                flush(&mut token, group);
                groups.push(current.take().unwrap_or_default());
            }
            (')', None) => return Err(RuntimeError::Expert("unbalanced `)`".into())),
            (',', Some(group)) => flush(&mut token, group),
            (',', None) => {
                let mut single = Vec::new();
                flush(&mut token, &mut single);
                groups.extend(single.into_iter().map(|s| vec![s]));
            }
            (c, Some(_)) | (c, None) if c.is_whitespace() => {
                let mut sink = Vec::new();
                if current.is_none() {
                    flush(&mut token, &mut sink);
                    groups.extend(sink.into_iter().map(|s| vec![s]));
                } else if let Some(group) = current.as_mut() {
                    flush(&mut token, group);
                }
            }
            (c, _) => token.push(c),
        }
    }
    if current.is_some() {
        return Err(RuntimeError::Expert("unclosed `(`".into()));
    }
    let mut tail = Vec::new();
    flush(&mut token, &mut tail);
    groups.extend(tail.into_iter().map(|s| vec![s]));
    if groups.is_empty() {
        return Err(RuntimeError::Expert("empty sequence".into()));
    }

    let mut acc = VarSet::EMPTY;
    let mut states = Vec::with_capacity(groups.len());
    for group in &groups {
        if group.is_empty() {
            return Err(RuntimeError::Expert("empty tuple".into()));
        }
        for id in group {
            let v = g
                .var_index(id)
                .ok_or_else(|| RuntimeError::Expert(format!("unknown variable `{id}`")))?;
            if acc.contains(v) {
                return Err(RuntimeError::Expert(format!("variable `{id}` assigned twice")));
            }
            acc = acc.with(v);
        }
        states.push(acc);
    }
    Ok(states)
}

/// Checks that the sequence ends at the full set and every step survives.
pub fn validate_sequence(g: &ConstraintGraph, table: &TransitionTable, seq: &[VarSet]) -> Result<(), RuntimeError> {
    if seq.last() != Some(&table.goal()) {
        let missing = table.goal().difference(seq.last().copied().unwrap_or(VarSet::EMPTY));
        return Err(RuntimeError::Expert(format!("sequence does not reach the full set; missing {}", g.format_set(missing))));
    }
    let mut from = VarSet::EMPTY;
    for &to in seq {
        match table.get(from, to) {
            Some(t) if t.survives() => {}
            Some(t) => {
                return Err(RuntimeError::Expert(format!(
                    "transition {} -> {} is pruned ({})",
                    g.format_set(from),
                    g.format_set(to),
                    t.pruned_by.map(|r| r.to_string()).unwrap_or_default()
                )))
            }
            None => {
                return Err(RuntimeError::Expert(format!(
                    "{} -> {} is not a valid transition",
                    g.format_set(from),
                    g.format_set(to)
                )))
            }
        }
        from = to;
    }
    Ok(())
}

/// Resolves a builtin expert name, a file holding a sequence, or an inline
/// sequence, and validates it against the pruned table.
pub fn load_expert(g: &ConstraintGraph, table: &TransitionTable, spec: &str) -> Result<Strategy, RuntimeError> {
    let (label, text) = if let Some((name, seq)) = BUILTIN_EXPERTS.iter().find(|(n, _)| *n == spec) {
        (name.to_string(), seq.to_string())
    } else if Path::new(spec).is_file() {
        let text = fs::read_to_string(spec).map_err(|e| RuntimeError::Expert(format!("{spec}: {e}")))?;
        let label = Path::new(spec).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        (label, text)
    } else {
        (format!("expert[{spec}]"), spec.to_string())
    };
    let seq = parse_sequence(g, &text)?;
    validate_sequence(g, table, &seq)?;
    Ok(Strategy::expert(label, seq))
}

/// How the reward weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSpec {
    Fixed(f64),
    /// `1 / (ĉ + 1)` from this many calibration rollouts, each running
    /// random attempts until a sample is produced.
    Auto(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub lambda: LambdaSpec,
    pub r_g: f64,
    pub cost_source: CostSource,
    /// Raw cost units per reward unit; the cost source default when absent.
    pub time_unit: Option<f64>,
    pub exploration: f64,
    /// Proxy units per virtual second under the cost_proxy clock.
    pub proxy_rate: f64,
    pub n_equiv: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            solver: SolverConfig::default(),
            lambda: LambdaSpec::Auto(20),
            r_g: 1.0,
            cost_source: CostSource::WallClock,
            time_unit: None,
            exploration: 1.0,
            proxy_rate: DEFAULT_PROXY_RATE,
            n_equiv: crate::mcts::DEFAULT_N_EQUIV,
        }
    }
}

impl RunConfig {
    pub fn deterministic() -> Self {
        RunConfig { cost_source: CostSource::CostProxy, ..Default::default() }
    }

    pub fn time_unit(&self) -> f64 {
        self.time_unit.unwrap_or_else(|| self.cost_source.default_time_unit())
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        self.solver.validate().map_err(RuntimeError::Config)?;
        match self.lambda {
            LambdaSpec::Fixed(l) if !(l > 0.0 && l < 1.0) => {
                return Err(RuntimeError::Config(format!("lambda must lie in (0, 1), got {l}")))
            }
            LambdaSpec::Auto(0) => return Err(RuntimeError::Config("auto lambda needs ≥ 1 calibration rollout".into())),
            _ => {}
        }
        if !(self.time_unit() > 0.0) || !(self.proxy_rate > 0.0) || !(self.exploration >= 0.0) {
            return Err(RuntimeError::Config("time_unit and proxy_rate must be positive, exploration ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// One slice per variable, in declaration order.
    pub values: Vec<Vec<f64>>,
    pub sequence: Vec<VarSet>,
    pub max_eq: f64,
    pub max_ineq: f64,
    /// Clock duration of each transition in the sequence.
    pub timings: Vec<f64>,
    /// Clock reading when the sample was completed.
    pub t_emit: f64,
    pub seed: u64,
}

impl SampleRecord {
    pub fn signature(&self) -> String {
        let mut s = VarSet::EMPTY.to_string();
        for st in &self.sequence {
            s = crate::mcts::extend_signature(&s, *st);
        }
        s
    }

    /// One JSON object: variable id → values, residuals, sequence, timings.
    pub fn to_json(&self, g: &ConstraintGraph) -> serde_json::Value {
        let values: serde_json::Map<String, serde_json::Value> = g
            .variables()
            .iter()
            .zip(&self.values)
            .map(|(v, x)| (v.id.clone(), serde_json::json!(x)))
            .collect();
        let seq: Vec<String> = std::iter::once(VarSet::EMPTY).chain(self.sequence.iter().copied()).map(|s| g.format_set(s)).collect();
        serde_json::json!({
            "values": values,
            "sequence": seq.join(">"),
            "max_eq": self.max_eq,
            "max_ineq": self.max_ineq,
            "timings": self.timings,
            "t_emit": self.t_emit,
            "seed": self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub strategy: String,
    pub seed: u64,
    pub samples: Vec<SampleRecord>,
    pub attempts: u64,
    pub wall_time: f64,
    pub samples_per_second: f64,
    pub lambda: f64,
    /// Total cost (reward units) of each calibration rollout.
    pub calibration_costs: Vec<f64>,
    pub tallies: BTreeMap<(VarSet, VarSet), Tally>,
    /// The final tree for tree strategies.
    pub tree: Option<SearchTree>,
}

impl RunReport {
    pub const CSV_HEADER: &'static str = "strategy,seed,samples,attempts,wall_time,samples_per_second,lambda";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.strategy,
            self.seed,
            self.samples.len(),
            self.attempts,
            self.wall_time,
            self.samples_per_second,
            self.lambda
        )
    }

    /// Samples completed by clock time `t`.
    pub fn samples_before(&self, t: f64) -> usize {
        self.samples.iter().filter(|s| s.t_emit <= t).count()
    }
}

/// Wall clock or the deterministic proxy clock.
#[derive(Debug)]
struct Clock {
    source: CostSource,
    start: Instant,
    proxy_units: u64,
    proxy_rate: f64,
}

impl Clock {
    fn now(&self) -> f64 {
        match self.source {
            CostSource::WallClock => self.start.elapsed().as_secs_f64(),
            CostSource::CostProxy => self.proxy_units as f64 / self.proxy_rate,
        }
    }
}

/// The constraint graph seen as a decision process over the pruned table.
struct GraphEnv<'a> {
    g: &'a ConstraintGraph,
    table: &'a TransitionTable,
    solver: &'a SolverConfig,
    reward: RewardConfig,
    clock: Clock,
    x: Assignment,
    timings: Vec<f64>,
    tallies: BTreeMap<(VarSet, VarSet), Tally>,
}

impl GraphEnv<'_> {
    /// Runs one operation; returns feasibility and the raw cost.
    fn execute<R: Rng>(&mut self, from: VarSet, to: VarSet, rng: &mut R) -> (bool, f64) {
        debug_assert_eq!(self.x.assigned, from);
        let new = to.difference(from);
        let before = self.clock.now();
        let r = conditional_sample(self.g, &self.x, new, self.solver, rng);
        self.clock.proxy_units += r.cost_proxy;
        let raw = match self.clock.source {
            CostSource::WallClock => r.elapsed,
            CostSource::CostProxy => r.cost_proxy as f64,
        };
        self.timings.push(self.clock.now() - before);
        let tally = self.tallies.entry((from, to)).or_default();
        tally.attempts += 1;
        if r.feasible {
            tally.successes += 1;
            r.apply_to(self.g, new, &mut self.x);
        }
        (r.feasible, raw)
    }
}

impl Environment for GraphEnv<'_> {
    fn options(&self, state: VarSet) -> &[VarSet] {
        self.table.surviving_from(state)
    }

    fn goal(&self) -> VarSet {
        self.table.goal()
    }

    fn reset(&mut self) {
        self.x.clear();
        self.timings.clear();
    }

    fn step<R: Rng>(&mut self, from: VarSet, to: VarSet, rng: &mut R) -> StepOutcome {
        let (feasible, raw) = self.execute(from, to, rng);
        StepOutcome { feasible, cost: self.reward.normalize(raw) }
    }
}

/// Follows uniformly random surviving transitions; returns the visited
/// states, whether the goal was reached, and the total raw cost.
fn random_attempt<R: Rng>(env: &mut GraphEnv<'_>, rng: &mut R) -> (Vec<VarSet>, bool, f64) {
    env.reset();
    let goal = env.table.goal();
    let mut state = VarSet::EMPTY;
    let mut seq = Vec::new();
    let mut cost = 0.0;
    while state != goal && seq.len() < env.g.n_vars() {
        let Some(&next) = env.table.surviving_from(state).choose(rng) else { break };
        let (ok, raw) = env.execute(state, next, rng);
        cost += raw;
        seq.push(next);
        if !ok {
            return (seq, false, cost);
        }
        state = next;
    }
    (seq, state == goal, cost)
}

fn expert_attempt<R: Rng>(env: &mut GraphEnv<'_>, seq: &[VarSet], rng: &mut R) -> bool {
    env.reset();
    let mut from = VarSet::EMPTY;
    for &to in seq.iter().take(env.g.n_vars()) {
        if !env.execute(from, to, rng).0 {
            return false;
        }
        from = to;
    }
    from == env.table.goal()
}

/// Runs `strategy` until the clock passes `budget` seconds; the loop never
/// starts an attempt after the budget is spent.
pub fn generate(
    g: &ConstraintGraph,
    table: &TransitionTable,
    strategy: &Strategy,
    budget: f64,
    cfg: &RunConfig,
    seed: u64,
) -> Result<RunReport, RuntimeError> {
    if !(budget > 0.0) {
        return Err(RuntimeError::Budget(budget));
    }
    cfg.validate()?;
    if !table.has_complete_path() {
        return Err(RuntimeError::NoPath);
    }
    if strategy.kind == StrategyKind::Expert {
        let seq = strategy
            .expert_sequence
            .as_deref()
            .ok_or_else(|| RuntimeError::Expert("expert strategy without a sequence".into()))?;
        validate_sequence(g, table, seq)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let time_unit = cfg.time_unit();
    let mut env = GraphEnv {
        g,
        table,
        solver: &cfg.solver,
        reward: RewardConfig { lambda: 0.5, r_g: cfg.r_g, cost_source: cfg.cost_source, time_unit },
        clock: Clock { source: cfg.cost_source, start: Instant::now(), proxy_units: 0, proxy_rate: cfg.proxy_rate },
        x: Assignment::empty(g),
        timings: Vec::new(),
        tallies: BTreeMap::new(),
    };
    let mut samples = Vec::new();
    let mut attempts = 0u64;

    let emit = |env: &GraphEnv<'_>, seq: Vec<VarSet>, samples: &mut Vec<SampleRecord>| {
        let (max_eq, max_ineq) = g.violation(&env.x.values);
        // every constraint was active in exactly one operation
        debug_assert!(max_eq <= cfg.solver.tol_eq && max_ineq <= cfg.solver.tol_ineq);
        if max_eq <= cfg.solver.tol_eq && max_ineq <= cfg.solver.tol_ineq {
            samples.push(SampleRecord {
                values: env.x.parts(g),
                sequence: seq,
                max_eq,
                max_ineq,
                timings: env.timings.clone(),
                t_emit: env.clock.now(),
                seed,
            });
        }
    };

    let mut calibration_costs = Vec::new();
    let uses_tree = matches!(strategy.kind, StrategyKind::Tree | StrategyKind::TreeWarm);
    let lambda = match (uses_tree, cfg.lambda) {
        (_, LambdaSpec::Fixed(l)) => l,
        (false, LambdaSpec::Auto(_)) => f64::NAN,
        (true, LambdaSpec::Auto(k)) => {
            // a calibration rollout repeats random attempts until one sample
            // is produced, so ĉ is the random policy's cost per sample
            for _ in 0..k {
                let mut total = 0.0;
                for _ in 0..MAX_CALIBRATION_ATTEMPTS {
                    if env.clock.now() >= budget {
                        break;
                    }
                    attempts += 1;
                    let (seq, reached, raw) = random_attempt(&mut env, &mut rng);
                    total += raw / time_unit;
                    if reached {
                        emit(&env, seq, &mut samples);
                        break;
                    }
                }
                calibration_costs.push(total);
                if env.clock.now() >= budget {
                    break;
                }
            }
            auto_lambda(&calibration_costs)
        }
    };
    env.reward.lambda = lambda;

    let mut tree = None;
    match strategy.kind {
        StrategyKind::Tree | StrategyKind::TreeWarm => {
            let prior = if strategy.kind == StrategyKind::TreeWarm { strategy.warmstart.clone() } else { None };
            let mut t = SearchTree::with_prior(table.goal(), prior);
            let search = SearchConfig { exploration: cfg.exploration, horizon: g.n_vars() };
            while env.clock.now() < budget {
                attempts += 1;
                let reward = env.reward;
                let out = t.rollout(&mut env, &reward, &search, &mut rng);
                if out.reached_goal {
                    emit(&env, out.history[1..].to_vec(), &mut samples);
                }
            }
            tree = Some(t);
        }
        StrategyKind::Expert => {
            let seq = strategy.expert_sequence.clone().unwrap_or_default();
            while env.clock.now() < budget {
                attempts += 1;
                if expert_attempt(&mut env, &seq, &mut rng) {
                    emit(&env, seq.clone(), &mut samples);
                }
            }
        }
        StrategyKind::Random => {
            while env.clock.now() < budget {
                attempts += 1;
                let (seq, reached, _) = random_attempt(&mut env, &mut rng);
                if reached {
                    emit(&env, seq, &mut samples);
                }
            }
        }
    }

    let wall_time = env.clock.now();
    Ok(RunReport {
        strategy: strategy.label.clone(),
        seed,
        samples_per_second: samples.len() as f64 / wall_time,
        samples,
        attempts,
        wall_time,
        lambda,
        calibration_costs,
        tallies: env.tallies,
        tree,
    })
}
