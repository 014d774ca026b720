//! The lattice of computational states (which variables are assigned) and
//! the transitions between them, with structural pruning.
//!
//! Two rules remove transitions that cannot be useful: adding more new
//! equality rows than new degrees of freedom (zero success probability),
//! and jointly sampling blocks that are conditionally independent given the
//! assigned variables. A closure pass then drops transitions into states
//! that can no longer reach the full set and out of states that can no
//! longer be reached from the empty set.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::graph::{components, ConstraintGraph};
use crate::varset::VarSet;

/// A set of assigned variable indices.
pub type ComputationState = VarSet;

/// Largest variable count whose lattice is materialized.
pub const MAX_LATTICE_VARS: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatesError {
    #[error("lattice over {0} variables exceeds the limit of {MAX_LATTICE_VARS}")]
    TooLarge(usize),
}

/// Dimensions and factor shapes; everything pruning needs from a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Structure {
    pub dims: Vec<usize>,
    pub factors: Vec<FactorShape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorShape {
    pub scope: VarSet,
    /// Rows counted by the zero-probability rule; 0 for inequalities.
    pub eq_rows: usize,
}

impl From<&ConstraintGraph> for Structure {
    fn from(g: &ConstraintGraph) -> Self {
        Structure {
            dims: g.variables().iter().map(|v| v.dim).collect(),
            factors: g
                .constraints()
                .iter()
                .enumerate()
                .map(|(c, con)| FactorShape {
                    scope: g.scope_set(c),
                    eq_rows: if con.is_eq() { con.codim } else { 0 },
                })
                .collect(),
        }
    }
}

impl Structure {
    pub fn n_vars(&self) -> usize {
        self.dims.len()
    }

    pub fn goal(&self) -> VarSet {
        VarSet::full(self.dims.len())
    }

    fn scopes(&self) -> Vec<VarSet> {
        self.factors.iter().map(|f| f.scope).collect()
    }

    /// Equality rows that become active on `from → to`.
    pub fn new_eq_rows(&self, from: VarSet, to: VarSet) -> usize {
        self.factors
            .iter()
            .filter(|f| f.scope.is_subset(to) && !f.scope.is_subset(from))
            .map(|f| f.eq_rows)
            .sum()
    }

    pub fn dof(&self, set: VarSet) -> usize {
        set.iter().map(|i| self.dims[i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PruneReason {
    ZeroProbability,
    CondIndependence,
    DeadEnd,
    Unreachable,
}

impl fmt::Display for PruneReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneReason::ZeroProbability => "zero_probability",
            PruneReason::CondIndependence => "cond_independence",
            PruneReason::DeadEnd => "dead_end",
            PruneReason::Unreachable => "unreachable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: ComputationState,
    pub to: ComputationState,
    pub new_dof: u32,
    pub new_eq_rows: u32,
    pub pruned_by: Option<PruneReason>,
}

impl Transition {
    pub fn new_vars(&self) -> VarSet {
        self.to.difference(self.from)
    }

    pub fn survives(&self) -> bool {
        self.pruned_by.is_none()
    }
}

/// Zero-probability rule: more new equality rows than new degrees of freedom.
pub fn prune_zero_probability(t: &Transition) -> bool {
    t.new_eq_rows > t.new_dof
}

/// Conditional-independence rule: the new variables split into two or more
/// components once the assigned ones are removed.
pub fn prune_cond_independence(t: &Transition, s: &Structure) -> bool {
    components(&s.scopes(), t.from, t.new_vars()).len() >= 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TableCounts {
    pub total: usize,
    pub zero_probability: usize,
    pub cond_independence: usize,
    pub dead_end: usize,
    pub unreachable: usize,
    pub surviving: usize,
}

impl TableCounts {
    pub fn pruned(&self) -> usize {
        self.total - self.surviving
    }

    /// Percentage of transitions removed.
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.pruned() as f64 / self.total as f64
        }
    }
}

impl fmt::Display for TableCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "transitions total      {}", self.total)?;
        writeln!(f, "  zero_probability     {}", self.zero_probability)?;
        writeln!(f, "  cond_independence    {}", self.cond_independence)?;
        writeln!(f, "  dead_end             {}", self.dead_end)?;
        writeln!(f, "  unreachable          {}", self.unreachable)?;
        writeln!(f, "transitions surviving  {}", self.surviving)?;
        write!(f, "pruning ratio          {:.2}%", self.ratio())
    }
}

/// Every transition of the lattice, grouped by source state.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    n: usize,
    transitions: Vec<Transition>,
    /// `group[s]..group[s + 1]` indexes the transitions leaving state `s`.
    group: Vec<usize>,
    survivors: HashMap<VarSet, Vec<VarSet>>,
}

impl TransitionTable {
    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn goal(&self) -> VarSet {
        VarSet::full(self.n)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// All transitions leaving `from`, in increasing order of target.
    pub fn from_state(&self, from: VarSet) -> &[Transition] {
        let s = from.bits() as usize;
        &self.transitions[self.group[s]..self.group[s + 1]]
    }

    pub fn get(&self, from: VarSet, to: VarSet) -> Option<&Transition> {
        self.from_state(from).iter().find(|t| t.to == to)
    }

    /// Targets of the surviving transitions out of `from`.
    pub fn surviving_from(&self, from: VarSet) -> &[VarSet] {
        self.survivors.get(&from).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn surviving(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.survives())
    }

    pub fn counts(&self) -> TableCounts {
        let mut c = TableCounts { total: self.transitions.len(), ..Default::default() };
        for t in &self.transitions {
            match t.pruned_by {
                None => c.surviving += 1,
                Some(PruneReason::ZeroProbability) => c.zero_probability += 1,
                Some(PruneReason::CondIndependence) => c.cond_independence += 1,
                Some(PruneReason::DeadEnd) => c.dead_end += 1,
                Some(PruneReason::Unreachable) => c.unreachable += 1,
            }
        }
        c
    }

    /// True when some chain of surviving transitions leads from `∅` to `S`.
    pub fn has_complete_path(&self) -> bool {
        self.goal_reachability()[0]
    }

    /// `reach[s]`: state `s` reaches `S` through surviving transitions.
    fn goal_reachability(&self) -> Vec<bool> {
        let states = 1usize << self.n;
        let mut reach = vec![false; states];
        reach[states - 1] = true;
        for s in (0..states).rev() {
            let range = self.group[s]..self.group[s + 1];
            if self.transitions[range].iter().any(|t| t.survives() && reach[t.to.bits() as usize]) {
                reach[s] = true;
            }
        }
        reach
    }

    fn start_reachability(&self) -> Vec<bool> {
        let states = 1usize << self.n;
        let mut reach = vec![false; states];
        reach[0] = true;
        for s in 0..states {
            if !reach[s] {
                continue;
            }
            for t in &self.transitions[self.group[s]..self.group[s + 1]] {
                if t.survives() {
                    reach[t.to.bits() as usize] = true;
                }
            }
        }
        reach
    }

    fn rebuild_survivors(&mut self) {
        self.survivors.clear();
        for t in &self.transitions {
            if t.survives() {
                self.survivors.entry(t.from).or_default().push(t.to);
            }
        }
    }

    /// Renders the surviving transitions as a DOT digraph, labelling
    /// states with variable ids.
    pub fn to_dot(&self, g: &ConstraintGraph) -> String {
        let mut out = format!("digraph \"{}\" {{\n", g.name);
        for t in self.surviving() {
            out.push_str(&format!("  \"{}\" -> \"{}\";\n", g.format_set(t.from), g.format_set(t.to)));
        }
        out.push_str("}\n");
        out
    }
}

/// All `3^n - 2^n` transitions `s_i → s_j` with `s_i ⊂ s_j`, unpruned.
pub fn enumerate_transitions(s: &Structure) -> Result<TransitionTable, StatesError> {
    let n = s.n_vars();
    if n > MAX_LATTICE_VARS {
        return Err(StatesError::TooLarge(n));
    }
    let full = s.goal();
    let states = 1usize << n;
    let expected = 3usize.pow(n as u32) - states;
    let mut transitions = Vec::with_capacity(expected);
    let mut group = Vec::with_capacity(states + 1);
    for bits in 0..states {
        group.push(transitions.len());
        let from = VarSet::from_bits(bits as u32);
        for add in full.difference(from).nonempty_subsets() {
            let to = from.union(add);
            transitions.push(Transition {
                from,
                to,
                new_dof: s.dof(add) as u32,
                new_eq_rows: s.new_eq_rows(from, to) as u32,
                pruned_by: None,
            });
        }
    }
    group.push(transitions.len());
    debug_assert_eq!(transitions.len(), expected);
    let mut table = TransitionTable { n, transitions, group, survivors: HashMap::new() };
    table.rebuild_survivors();
    Ok(table)
}

/// Applies both rule-level criteria; the zero-probability rule is checked
/// first and wins when both apply.
pub fn apply_rules(table: &mut TransitionTable, s: &Structure) {
    let scopes = s.scopes();
    for t in &mut table.transitions {
        if t.pruned_by.is_some() {
            continue;
        }
        if prune_zero_probability(t) {
            t.pruned_by = Some(PruneReason::ZeroProbability);
        } else if components(&scopes, t.from, t.new_vars()).len() >= 2 {
            t.pruned_by = Some(PruneReason::CondIndependence);
        }
    }
    table.rebuild_survivors();
}

/// Iteratively removes transitions into states that cannot reach `S` and
/// out of states that cannot be reached from `∅`, until nothing changes.
pub fn closure_prune(mut table: TransitionTable) -> TransitionTable {
    loop {
        let to_goal = table.goal_reachability();
        let from_start = table.start_reachability();
        let mut changed = false;
        for t in table.transitions.iter_mut().filter(|t| t.pruned_by.is_none()) {
            if !to_goal[t.to.bits() as usize] {
                t.pruned_by = Some(PruneReason::DeadEnd);
                changed = true;
            } else if !from_start[t.from.bits() as usize] {
                t.pruned_by = Some(PruneReason::Unreachable);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    table.rebuild_survivors();
    table
}

/// Enumeration, both pruning rules, then closure.
pub fn pruned_table(s: &Structure) -> Result<TransitionTable, StatesError> {
    let mut table = enumerate_transitions(s)?;
    apply_rules(&mut table, s);
    Ok(closure_prune(table))
}
