mod common;

use std::collections::HashMap;

use cgraph_core::mcts::{
    auto_lambda, extend_signature, uct_select, CostSource, Environment, RewardConfig, SearchConfig, SearchTree,
    StepOutcome, WarmstartStore, LAMBDA_EPS,
};
use cgraph_core::scenarios::build_scenario;
use cgraph_core::states::{pruned_table, Structure, TransitionTable};
use cgraph_core::VarSet;
use common::TwoArmEnv;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reward_cfg(lambda: f64) -> RewardConfig {
    RewardConfig { lambda, r_g: 1.0, cost_source: CostSource::CostProxy, time_unit: 1.0 }
}

/// Walks a pruned scenario lattice; each step succeeds with probability
/// `success` and costs a uniform draw from `[0, max_cost]`.
struct LatticeEnv {
    table: TransitionTable,
    success: f64,
    max_cost: f64,
}

impl LatticeEnv {
    fn new(family: &str, success: f64, max_cost: f64) -> Self {
        let table = pruned_table(&Structure::from(&build_scenario(family, 0).unwrap())).unwrap();
        LatticeEnv { table, success, max_cost }
    }
}

impl Environment for LatticeEnv {
    fn options(&self, state: VarSet) -> &[VarSet] {
        self.table.surviving_from(state)
    }

    fn goal(&self) -> VarSet {
        self.table.goal()
    }

    fn reset(&mut self) {}

    fn step<R: Rng>(&mut self, _from: VarSet, _to: VarSet, rng: &mut R) -> StepOutcome {
        let cost = rng.gen::<f64>() * self.max_cost;
        StepOutcome { feasible: rng.gen::<f64>() < self.success, cost }
    }
}

#[test]
fn uct_score_examples() {
    // direct evaluation of the two scores
    let s0 = 0.5 + (10f64.ln() / 2.0).sqrt();
    let s1 = 0.5 + (10f64.ln() / 8.0).sqrt();
    assert!((s0 - 1.5730).abs() < 5e-5 && (s1 - 1.0365).abs() < 5e-5);
    assert_eq!(uct_select(&[(0.5, 2), (0.5, 8)], 10, 1.0), Some(0));
    assert_eq!(uct_select(&[(-3.0, 7)], 7, 1.0), Some(0));
    assert_eq!(uct_select(&[(0.9, 5), (0.1, 1)], 6, 0.0), Some(0));
    assert_eq!(uct_select(&[], 0, 1.0), None);
    // unvisited children win in declaration order, ties to the lowest index
    assert_eq!(uct_select(&[(9.0, 3), (0.0, 0), (0.0, 0)], 3, 1.0), Some(1));
    assert_eq!(uct_select(&[(0.2, 4), (0.2, 4)], 8, 1.0), Some(0));
}

#[test]
fn rollout_reward_examples() {
    let cfg = reward_cfg(0.3);
    let search = SearchConfig { exploration: 1.0, horizon: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut free = TwoArmEnv::new([1.0, 1.0], 0.0, 1);
    let out = SearchTree::new(free.goal()).rollout(&mut free, &cfg, &search, &mut rng);
    assert!(out.reached_goal);
    assert!((out.reward - 0.7).abs() < 1e-15);

    let mut doomed = TwoArmEnv::new([0.0, 0.0], 0.25, 1);
    let out = SearchTree::new(doomed.goal()).rollout(&mut doomed, &cfg, &search, &mut rng);
    assert!(!out.reached_goal);
    assert_eq!(out.history.len(), 2);
    assert!((out.reward + 0.3 * 0.25).abs() < 1e-15);
}

#[test]
fn backpropagation_examples() {
    let env = TwoArmEnv::new([1.0, 1.0], 0.0, 0);
    let mut tree = SearchTree::new(env.goal());
    tree.backpropagate(&[0], 1.0);
    assert_eq!((tree.node(0).q_value, tree.node(0).visits), (1.0, 1));

    let mut tree = SearchTree::new(env.goal());
    tree.backpropagate(&[0], 0.5);
    tree.backpropagate(&[0], 0.0);
    assert_eq!((tree.node(0).q_value, tree.node(0).visits), (0.25, 2));

    let mut tree = SearchTree::new(env.goal());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rewards: Vec<f64> = (0..1000).map(|_| rng.gen_range(-2.0..1.0)).collect();
    for &r in &rewards {
        tree.backpropagate(&[0], r);
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    assert!((tree.node(0).q_value - mean).abs() < 1e-12);
}

#[test]
fn auto_lambda_examples() {
    assert_eq!(auto_lambda(&[0.0, 0.0]), 1.0 - LAMBDA_EPS);
    assert_eq!(auto_lambda(&[1.0]), 0.5);
    assert!((auto_lambda(&[0.5, 1.5, 4.0]) - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn warmstart_examples() {
    let env = TwoArmEnv::new([1.0, 1.0], 0.0, 0);
    let child = extend_signature(&extend_signature("", VarSet::EMPTY), VarSet::from_bits(0b01));

    let mut store = WarmstartStore::new(10);
    store.merge(&child, 0.6);
    store.merge(&child, 1.0);
    let entry = store.get(&child).unwrap();
    assert!((entry.mean_q - 0.8).abs() < 1e-15);
    assert_eq!(entry.instance_count, 2);

    let mut tree = SearchTree::with_prior(env.goal(), Some(store.clone()));
    let kids = tree.expand(0, &env).to_vec();
    let primed = tree.node(kids[0]);
    assert!((primed.q_value - 0.8).abs() < 1e-15);
    assert_eq!((primed.visits, primed.real_visits()), (10, 0));
    assert_eq!(tree.node(kids[1]).visits, 0);

    // an empty store leaves a tree exactly as it was
    let mut cold = SearchTree::new(env.goal());
    cold.expand(0, &env);
    let mut applied = cold.clone();
    WarmstartStore::new(10).apply(&mut applied);
    assert_eq!(cold.nodes(), applied.nodes());

    let text = store.to_text();
    assert_eq!(WarmstartStore::parse(&text, 10).unwrap(), store);
    assert!(WarmstartStore::parse("sig 0.5 0\n", 10).is_err());
    assert!(WarmstartStore::parse("sig nan 1\n", 10).is_err());
}

/// Replays the two-armed bandit with an independent UCB loop that reads
/// outcomes from the same stream, and demands identical visit counts.
#[test]
fn two_arm_search_matches_a_standalone_bandit_simulation() {
    let (lambda, cost, c) = (0.5, 0.05, 1.0);
    let cfg = reward_cfg(lambda);
    let search = SearchConfig { exploration: c, horizon: 2 };
    for seed in 0..10 {
        let mut env = TwoArmEnv::new([0.9, 0.2], cost, seed);
        let mut tree = SearchTree::new(env.goal());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..500 {
            tree.rollout(&mut env, &cfg, &search, &mut rng);
        }
        let visits: Vec<u64> = tree.root_visit_counts().iter().map(|&(_, n)| n).collect();

        let mut draws = ChaCha8Rng::seed_from_u64(seed);
        let (mut q, mut n) = ([0.0f64; 2], [0u64; 2]);
        for t in 0..500u64 {
            let arm = if n[0] == 0 {
                0
            } else if n[1] == 0 {
                1
            } else {
                let score = |i: usize| q[i] + c * ((t as f64).ln() / n[i] as f64).sqrt();
                if score(1) > score(0) { 1 } else { 0 }
            };
            let ok = draws.gen::<f64>() < [0.9, 0.2][arm];
            // success pays the goal reward and both step costs
            let reward = if ok { (1.0 - lambda) - lambda * 2.0 * cost } else { -lambda * cost };
            n[arm] += 1;
            q[arm] += (reward - q[arm]) / n[arm] as f64;
        }
        assert_eq!(visits, n.to_vec(), "seed {seed}");
        assert!(n[0] as f64 / 500.0 > 0.8, "seed {seed}: {n:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn uct_choice_is_shift_invariant(
        children in prop::collection::vec((-1.0f64..1.0, 1u64..50), 1..6),
        shift in -10.0f64..10.0,
        c in 0.0f64..2.0,
    ) {
        let parent: u64 = children.iter().map(|x| x.1).sum();
        let scores: Vec<f64> = children.iter().map(|&(q, n)| q + c * ((parent as f64).ln() / n as f64).sqrt()).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        // a near-tie could flip under rounding after the shift
        prop_assume!(sorted.len() < 2 || sorted[0] - sorted[1] > 1e-9);
        let shifted: Vec<(f64, u64)> = children.iter().map(|&(q, n)| (q + shift, n)).collect();
        prop_assert_eq!(uct_select(&children, parent, c), uct_select(&shifted, parent, c));
    }

    /// Checks visit bookkeeping, reward bounds and the unvisited-first rule
    /// on real scenario lattices with random step outcomes.
    #[test]
    fn tree_bookkeeping_holds_on_scenario_lattices(
        family in prop::sample::select(vec!["pick_place", "handover"]),
        success in 0.3f64..1.0,
        seed in any::<u64>(),
        lambda in 0.05f64..0.95,
    ) {
        let max_cost = 0.4;
        let mut env = LatticeEnv::new(family, success, max_cost);
        let horizon = env.table.n_vars();
        let cfg = reward_cfg(lambda);
        let search = SearchConfig { exploration: 1.0, horizon };
        let mut tree = SearchTree::new(env.goal());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let root_kids = env.options(VarSet::EMPTY).len();
        // times each node was the last node on a rollout's tree path
        let mut ended: HashMap<usize, u64> = HashMap::new();
        for r in 1..=150usize {
            let out = tree.rollout(&mut env, &cfg, &search, &mut rng);
            prop_assert!(out.reward <= (1.0 - lambda) + 1e-12);
            prop_assert!(out.reward >= -lambda * max_cost * horizon as f64 - 1e-12);
            prop_assert_eq!(out.history[0], VarSet::EMPTY);
            for w in out.history.windows(2) {
                prop_assert!(w[0].is_proper_subset(w[1]));
            }
            *ended.entry(*out.path.last().unwrap()).or_default() += 1;
            if r == root_kids {
                prop_assert!(tree.root_visit_counts().iter().all(|&(_, n)| n >= 1));
            }
        }
        for (id, node) in tree.nodes().iter().enumerate() {
            prop_assert!(node.q_value.is_finite());
            let Some(kids) = &node.children else { continue };
            let child_sum: u64 = kids.iter().map(|&k| tree.node(k).real_visits()).sum();
            let here = ended.get(&id).copied().unwrap_or(0);
            prop_assert_eq!(child_sum + here, node.real_visits());
            if id == tree.root() {
                prop_assert_eq!(child_sum, node.real_visits());
            }
        }
    }

    /// With every step succeeding, an interior node stops a rollout only on
    /// its first visit.
    #[test]
    fn child_visits_are_parent_visits_minus_one(seed in any::<u64>(), rollouts in 1usize..200) {
        let mut env = LatticeEnv::new("handover", 1.0, 0.1);
        let cfg = reward_cfg(0.5);
        let search = SearchConfig { exploration: 0.5, horizon: 7 };
        let mut tree = SearchTree::new(env.goal());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..rollouts {
            tree.rollout(&mut env, &cfg, &search, &mut rng);
        }
        let root = tree.node(tree.root());
        prop_assert_eq!(root.real_visits(), rollouts as u64);
        for (id, node) in tree.nodes().iter().enumerate() {
            if node.terminal || node.real_visits() == 0 {
                continue;
            }
            let child_sum: u64 =
                node.children.iter().flatten().map(|&k| tree.node(k).real_visits()).sum();
            let expected = if id == tree.root() { node.real_visits() } else { node.real_visits() - 1 };
            prop_assert_eq!(child_sum, expected);
        }
    }
}
