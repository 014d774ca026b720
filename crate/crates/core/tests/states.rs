use std::collections::{BTreeSet, VecDeque};

use cgraph_core::scenarios::build_scenario;
use cgraph_core::states::{
    apply_rules, closure_prune, enumerate_transitions, prune_cond_independence, prune_zero_probability, pruned_table,
    FactorShape, PruneReason, Structure, Transition,
};
use cgraph_core::VarSet;
use proptest::prelude::*;

fn structure(family: &str) -> Structure {
    Structure::from(&build_scenario(family, 0).unwrap())
}

fn pair_set<'a>(it: impl Iterator<Item = &'a Transition>) -> BTreeSet<(u32, u32)> {
    it.map(|t| (t.from.bits(), t.to.bits())).collect()
}

#[test]
fn lattice_size_matches_a_double_loop() {
    for n in 1..=10usize {
        let s = Structure { dims: vec![1; n], factors: vec![] };
        let table = enumerate_transitions(&s).unwrap();
        let mut brute = BTreeSet::new();
        for a in 0u32..(1 << n) {
            for b in 0u32..(1 << n) {
                // a ⊂ b strictly
                if a & b == a && a != b {
                    brute.insert((a, b));
                }
            }
        }
        assert_eq!(table.transitions().len(), 3usize.pow(n as u32) - (1 << n), "n = {n}");
        assert_eq!(pair_set(table.transitions().iter()), brute, "n = {n}");
    }
}

#[test]
fn scenario_lattices_have_the_expected_totals() {
    assert_eq!(enumerate_transitions(&structure("pick_place")).unwrap().transitions().len(), 19);
    assert_eq!(enumerate_transitions(&structure("handover")).unwrap().transitions().len(), 2059);
    assert_eq!(enumerate_transitions(&structure("banana")).unwrap().transitions().len(), 19171);
}

#[test]
fn pick_place_rule_examples() {
    let g = build_scenario("pick_place", 0).unwrap();
    let s = Structure::from(&g);
    let table = enumerate_transitions(&s).unwrap();
    let set = |ids: &[&str]| g.var_set(ids).unwrap();
    let t = |from: &[&str], to: &[&str]| *table.get(set(from), set(to)).unwrap();

    let q1_to_q1t = t(&["q1"], &["q1", "t"]);
    assert_eq!((q1_to_q1t.new_dof, q1_to_q1t.new_eq_rows), (3, 5));
    assert!(prune_zero_probability(&q1_to_q1t));
    let t_to_q1t = t(&["t"], &["q1", "t"]);
    assert_eq!((t_to_q1t.new_dof, t_to_q1t.new_eq_rows), (3, 3));
    assert!(!prune_zero_probability(&t_to_q1t));

    assert!(prune_cond_independence(&t(&["t"], &["t", "q1", "q2"]), &s));
    assert!(prune_cond_independence(&t(&[], &["q1", "q2"]), &s));
    assert!(!prune_cond_independence(&t(&[], &["t", "q1", "q2"]), &s));
}

#[test]
fn unconstrained_additions_are_never_zero_probability() {
    let s = Structure { dims: vec![2, 1], factors: vec![FactorShape { scope: VarSet::from_bits(0b01), eq_rows: 2 }] };
    let table = enumerate_transitions(&s).unwrap();
    let t = table.get(VarSet::EMPTY, VarSet::from_bits(0b10)).unwrap();
    assert_eq!(t.new_eq_rows, 0);
    assert!(!prune_zero_probability(t));
}

#[test]
fn pick_place_keeps_exactly_the_eight_expected_transitions() {
    let g = build_scenario("pick_place", 0).unwrap();
    let table = pruned_table(&Structure::from(&g)).unwrap();
    let set = |ids: &[&str]| g.var_set(ids).unwrap().bits();
    let expected: BTreeSet<(u32, u32)> = [
        (set(&[]), set(&["t"])),
        (set(&[]), set(&["q1", "t"])),
        (set(&[]), set(&["q2", "t"])),
        (set(&[]), set(&["t", "q1", "q2"])),
        (set(&["t"]), set(&["q1", "t"])),
        (set(&["t"]), set(&["q2", "t"])),
        (set(&["q1", "t"]), set(&["t", "q1", "q2"])),
        (set(&["q2", "t"]), set(&["t", "q1", "q2"])),
    ]
    .into_iter()
    .collect();
    assert_eq!(pair_set(table.surviving()), expected);
    let counts = table.counts();
    assert_eq!((counts.total, counts.surviving), (19, 8));
    assert!((counts.ratio() - 100.0 * 11.0 / 19.0).abs() < 1e-12);
}

#[test]
fn closure_without_rule_pruning_is_the_identity() {
    let s = structure("handover");
    let table = enumerate_transitions(&s).unwrap();
    let closed = closure_prune(table.clone());
    assert_eq!(closed.counts().surviving, table.transitions().len());
}

#[test]
fn goal_unreachable_removes_everything() {
    // variable 0 carries three equality rows but only one degree of freedom,
    // so every transition that adds it is pruned
    let s = Structure { dims: vec![1, 1], factors: vec![FactorShape { scope: VarSet::from_bits(0b01), eq_rows: 3 }] };
    let table = pruned_table(&s).unwrap();
    assert_eq!(table.counts().surviving, 0);
    assert!(!table.has_complete_path());
}

/// Random structure over at most six variables.
fn arb_structure() -> impl Strategy<Value = Structure> {
    (1usize..7).prop_flat_map(|n| {
        let dims = prop::collection::vec(1usize..4, n);
        let factors = prop::collection::vec((1u32..(1 << n), 0usize..5), 0..8);
        (dims, factors).prop_map(|(dims, factors)| Structure {
            dims,
            factors: factors.into_iter().map(|(bits, eq_rows)| FactorShape { scope: VarSet::from_bits(bits), eq_rows }).collect(),
        })
    })
}

/// States reachable from `start` by walking `edges` forwards (or backwards).
fn reachable(n: usize, edges: &BTreeSet<(u32, u32)>, start: u32, forward: bool) -> Vec<bool> {
    let mut seen = vec![false; 1 << n];
    let mut queue = VecDeque::from([start]);
    seen[start as usize] = true;
    while let Some(s) = queue.pop_front() {
        for &(a, b) in edges {
            let (src, dst) = if forward { (a, b) } else { (b, a) };
            if src == s && !seen[dst as usize] {
                seen[dst as usize] = true;
                queue.push_back(dst);
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The closure keeps exactly the rule survivors lying on some complete
    /// path, computed here by two independent graph searches.
    #[test]
    fn closure_matches_reachability_oracle(s in arb_structure()) {
        let n = s.n_vars();
        let mut ruled = enumerate_transitions(&s).unwrap();
        apply_rules(&mut ruled, &s);
        let rule_edges = pair_set(ruled.surviving());
        let goal = (1u32 << n) - 1;
        let fwd = reachable(n, &rule_edges, 0, true);
        let bwd = reachable(n, &rule_edges, goal, false);
        let oracle: BTreeSet<(u32, u32)> =
            rule_edges.iter().copied().filter(|&(a, b)| fwd[a as usize] && bwd[b as usize]).collect();

        let closed = closure_prune(ruled.clone());
        prop_assert_eq!(pair_set(closed.surviving()), oracle.clone());
        prop_assert_eq!(closed.has_complete_path(), !oracle.is_empty());

        // a second pass changes nothing
        let again = closure_prune(closed.clone());
        prop_assert_eq!(pair_set(again.surviving()), oracle);

        // closure only ever adds the two closure tags
        for (before, after) in ruled.transitions().iter().zip(closed.transitions()) {
            if before.pruned_by.is_some() {
                prop_assert_eq!(before.pruned_by, after.pruned_by);
            } else if let Some(r) = after.pruned_by {
                prop_assert!(matches!(r, PruneReason::DeadEnd | PruneReason::Unreachable));
            }
        }
    }

    #[test]
    fn rule_tags_match_their_predicates(s in arb_structure()) {
        let mut table = enumerate_transitions(&s).unwrap();
        apply_rules(&mut table, &s);
        for t in table.transitions() {
            prop_assert!(t.from.is_proper_subset(t.to));
            let zero = prune_zero_probability(t);
            let indep = prune_cond_independence(t, &s);
            let expected = if zero {
                Some(PruneReason::ZeroProbability)
            } else if indep {
                Some(PruneReason::CondIndependence)
            } else {
                None
            };
            prop_assert_eq!(t.pruned_by, expected);
            // the row count is the sum over factors that become complete
            let rows: usize = s
                .factors
                .iter()
                .filter(|f| f.scope.is_subset(t.to) && !f.scope.is_subset(t.from))
                .map(|f| f.eq_rows)
                .sum();
            prop_assert_eq!(t.new_eq_rows as usize, rows);
        }
    }
}
