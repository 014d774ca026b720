//! Constraint graphs: factored feasibility problems whose variables are
//! connected by equality and inequality factors.

mod format;
pub mod residual;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use format::{parse_graph, serialize_graph};
pub use residual::{Clearance, PoseRows, Residual, RESIDUAL_TAGS};

use crate::varset::VarSet;

/// Errors raised while building, parsing or evaluating a graph.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("constraint `{constraint}`: unknown residual tag `{tag}`")]
    UnknownResidual { constraint: String, tag: String },
    #[error("constraint `{constraint}`: invalid parameter `{param}`: {message}")]
    InvalidParam { constraint: String, param: String, message: String },
    #[error("constraint `{constraint}`: scope references undeclared variable `{variable}`")]
    UnresolvedScope { constraint: String, variable: String },
    #[error("`{entity}`: dimension mismatch: {message}")]
    DimensionMismatch { entity: String, message: String },
    #[error("`{entity}`: {message}")]
    Invalid { entity: String, message: String },
    #[error("duplicate id `{0}`")]
    Duplicate(String),
    #[error("constraint `{constraint}`: scope variable `{variable}` is not assigned")]
    Unassigned { constraint: String, variable: String },
}

/// A factored variable `x_i` with its ambient box.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub id: String,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl VariableSpec {
    pub fn new(id: impl Into<String>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { id: id.into(), dim: lower.len(), lower, upper }
    }

    fn validate(&self) -> Result<(), GraphError> {
        if self.dim == 0 {
            return Err(GraphError::Invalid { entity: self.id.clone(), message: "dim must be >= 1".into() });
        }
        if self.lower.len() != self.dim || self.upper.len() != self.dim {
            return Err(GraphError::DimensionMismatch {
                entity: self.id.clone(),
                message: format!(
                    "dim={} but lo has {} and hi has {} entries",
                    self.dim,
                    self.lower.len(),
                    self.upper.len()
                ),
            });
        }
        for k in 0..self.dim {
            if !(self.lower[k] < self.upper[k]) {
                return Err(GraphError::Invalid {
                    entity: self.id.clone(),
                    message: format!("bound {k}: lo={} must be < hi={}", self.lower[k], self.upper[k]),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    Eq,
    Ineq,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Eq => "eq",
            ConstraintKind::Ineq => "ineq",
        })
    }
}

/// A factor `h_j` acting on an ordered scope of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub id: String,
    pub kind: ConstraintKind,
    /// Variable indices, in the order the residual consumes them.
    pub scope: Vec<usize>,
    pub codim: usize,
    pub residual: Residual,
}

impl ConstraintSpec {
    pub fn scope_set(&self) -> VarSet {
        VarSet::from_indices(self.scope.iter().copied())
    }

    pub fn is_eq(&self) -> bool {
        self.kind == ConstraintKind::Eq
    }
}

/// A validated constraint graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGraph {
    pub name: String,
    variables: Vec<VariableSpec>,
    constraints: Vec<ConstraintSpec>,
    offsets: Vec<usize>,
    scope_sets: Vec<VarSet>,
    /// Optional known-feasible assignment shipped with the problem.
    pub witness: Option<Vec<Vec<f64>>>,
}

/// A constraint as written by hand: scope given by variable id.
#[derive(Debug, Clone)]
pub struct ConstraintDraft {
    pub id: String,
    pub kind: ConstraintKind,
    pub scope: Vec<String>,
    pub residual: Residual,
    /// Declared row count, checked against the residual when present.
    pub codim: Option<usize>,
}

impl ConstraintDraft {
    pub fn new(id: &str, kind: ConstraintKind, scope: &[&str], residual: Residual) -> Self {
        Self {
            id: id.into(),
            kind,
            scope: scope.iter().map(|s| s.to_string()).collect(),
            residual,
            codim: None,
        }
    }
}

impl ConstraintGraph {
    /// Resolves scopes and validates every invariant.
    pub fn build(
        name: impl Into<String>,
        variables: Vec<VariableSpec>,
        drafts: Vec<ConstraintDraft>,
    ) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            v.validate()?;
            if index.insert(v.id.clone(), i).is_some() {
                return Err(GraphError::Duplicate(v.id.clone()));
            }
        }
        if variables.len() > crate::varset::MAX_SET_VARIABLES {
            return Err(GraphError::Invalid {
                entity: "graph".into(),
                message: format!("{} variables exceed the supported maximum", variables.len()),
            });
        }
        let mut seen = std::collections::HashSet::new();
        let mut constraints = Vec::with_capacity(drafts.len());
        for d in drafts {
            if index.contains_key(&d.id) || !seen.insert(d.id.clone()) {
                return Err(GraphError::Duplicate(d.id.clone()));
            }
            if d.scope.is_empty() {
                return Err(GraphError::Invalid { entity: d.id.clone(), message: "empty scope".into() });
            }
            let mut scope = Vec::with_capacity(d.scope.len());
            for s in &d.scope {
                let i = *index.get(s).ok_or_else(|| GraphError::UnresolvedScope {
                    constraint: d.id.clone(),
                    variable: s.clone(),
                })?;
                if scope.contains(&i) {
                    return Err(GraphError::Invalid {
                        entity: d.id.clone(),
                        message: format!("variable `{s}` appears twice in scope"),
                    });
                }
                scope.push(i);
            }
            let dims: Vec<usize> = scope.iter().map(|&i| variables[i].dim).collect();
            let codim = d
                .residual
                .check_scope(&dims)
                .map_err(|message| GraphError::DimensionMismatch { entity: d.id.clone(), message })?;
            if let Some(declared) = d.codim {
                if declared != codim {
                    return Err(GraphError::DimensionMismatch {
                        entity: d.id.clone(),
                        message: format!("declared codim={declared} but residual has {codim} rows"),
                    });
                }
            }
            match (d.residual.inequality_only(), d.kind) {
                (Some(true), ConstraintKind::Eq) | (Some(false), ConstraintKind::Ineq) => {
                    return Err(GraphError::Invalid {
                        entity: d.id.clone(),
                        message: format!("residual `{}` cannot be used with kind={}", d.residual.tag(), d.kind),
                    })
                }
                _ => {}
            }
            constraints.push(ConstraintSpec { id: d.id, kind: d.kind, scope, codim, residual: d.residual });
        }
        let mut offsets = Vec::with_capacity(variables.len() + 1);
        let mut acc = 0;
        for v in &variables {
            offsets.push(acc);
            acc += v.dim;
        }
        offsets.push(acc);
        let scope_sets = constraints.iter().map(|c| c.scope_set()).collect();
        Ok(Self { name: name.into(), variables, constraints, offsets, scope_sets, witness: None })
    }

    /// Attaches a witness assignment after checking its shape.
    pub fn with_witness(mut self, witness: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        if witness.len() != self.variables.len() {
            return Err(GraphError::Invalid {
                entity: "witness".into(),
                message: format!("{} entries for {} variables", witness.len(), self.variables.len()),
            });
        }
        for (v, w) in self.variables.iter().zip(&witness) {
            if w.len() != v.dim {
                return Err(GraphError::DimensionMismatch {
                    entity: v.id.clone(),
                    message: format!("witness has {} values for dim {}", w.len(), v.dim),
                });
            }
        }
        self.witness = Some(witness);
        Ok(self)
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    /// Number of variables `n`.
    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    /// Total ambient dimension `Σ dim(x_i)`.
    pub fn total_dim(&self) -> usize {
        self.offsets[self.variables.len()]
    }

    pub fn offset(&self, var: usize) -> usize {
        self.offsets[var]
    }

    pub fn var_index(&self, id: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.id == id)
    }

    pub fn constraint_index(&self, id: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.id == id)
    }

    /// The full index set `S`.
    pub fn all_vars(&self) -> VarSet {
        VarSet::full(self.variables.len())
    }

    pub fn scope_set(&self, constraint: usize) -> VarSet {
        self.scope_sets[constraint]
    }

    /// Σ dims of the variables in `set`.
    pub fn dof(&self, set: VarSet) -> usize {
        set.iter().map(|i| self.variables[i].dim).sum()
    }

    /// Resolves a list of variable ids into a set.
    pub fn var_set(&self, ids: &[&str]) -> Option<VarSet> {
        ids.iter().map(|id| self.var_index(id)).collect::<Option<Vec<_>>>().map(VarSet::from_indices)
    }

    /// Renders a set with variable ids, e.g. `{t,q1}`.
    pub fn format_set(&self, set: VarSet) -> String {
        let ids: Vec<&str> = set.iter().map(|i| self.variables[i].id.as_str()).collect();
        format!("{{{}}}", ids.join(","))
    }

    /// Evaluates constraint `c` on the stacked full-dimension vector `x`
    /// (values of unassigned variables are ignored by the residual).
    pub fn eval_into(&self, c: usize, x: &[f64], out: &mut [f64]) {
        let con = &self.constraints[c];
        let mut slices: [&[f64]; 8] = [&[]; 8];
        let mut owned: Vec<&[f64]> = Vec::new();
        let xs: &[&[f64]] = if con.scope.len() <= 8 {
            for (k, &v) in con.scope.iter().enumerate() {
                slices[k] = &x[self.offsets[v]..self.offsets[v + 1]];
            }
            &slices[..con.scope.len()]
        } else {
            owned.extend(con.scope.iter().map(|&v| &x[self.offsets[v]..self.offsets[v + 1]]));
            &owned
        };
        con.residual.eval(xs, out);
    }

    /// Residual of constraint `c` under a (partial) assignment covering its scope.
    pub fn eval_residual(&self, c: usize, x: &Assignment) -> Result<Vec<f64>, GraphError> {
        let con = &self.constraints[c];
        if let Some(&v) = con.scope.iter().find(|&&v| !x.assigned.contains(v)) {
            return Err(GraphError::Unassigned {
                constraint: con.id.clone(),
                variable: self.variables[v].id.clone(),
            });
        }
        let mut out = vec![0.0; con.codim];
        self.eval_into(c, &x.values, &mut out);
        Ok(out)
    }

    /// Analytic Jacobian of constraint `c`, when its residual provides one.
    pub fn analytic_jacobian(&self, c: usize, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        let con = &self.constraints[c];
        let xs: Vec<&[f64]> = con.scope.iter().map(|&v| &x[self.offsets[v]..self.offsets[v + 1]]).collect();
        con.residual.analytic_jacobian(&xs)
    }

    /// Partition of `candidate` into conditionally independent blocks given
    /// `assigned`; see [`components`].
    pub fn conditional_independence_components(&self, assigned: VarSet, candidate: VarSet) -> Vec<VarSet> {
        components(&self.scope_sets, assigned, candidate)
    }

    /// Maximum equality violation (`‖·‖∞`) and maximum inequality row over
    /// all constraints, on a full assignment.
    pub fn violation(&self, x: &[f64]) -> (f64, f64) {
        let mut max_eq: f64 = 0.0;
        let mut max_ineq = f64::NEG_INFINITY;
        let mut buf = Vec::new();
        for (c, con) in self.constraints.iter().enumerate() {
            buf.resize(con.codim, 0.0);
            self.eval_into(c, x, &mut buf);
            for &r in &buf {
                match con.kind {
                    ConstraintKind::Eq => max_eq = max_eq.max(r.abs()),
                    ConstraintKind::Ineq => max_ineq = max_ineq.max(r),
                }
            }
        }
        (max_eq, max_ineq)
    }
}

/// Splits `candidate` into connected components, linking two candidate
/// variables whenever some factor with scope inside `assigned ∪ candidate`
/// touches both. Assigned variables are deleted from paths, so they never
/// connect anything. Components come out ordered by their lowest index.
pub fn components(scopes: &[VarSet], assigned: VarSet, candidate: VarSet) -> Vec<VarSet> {
    let within = assigned.union(candidate);
    let mut comps: Vec<VarSet> = candidate.iter().map(VarSet::singleton).collect();
    for &scope in scopes {
        if !scope.is_subset(within) {
            continue;
        }
        let touched = scope.intersection(candidate);
        if touched.len() < 2 {
            continue;
        }
        let mut merged = VarSet::EMPTY;
        comps.retain(|c| {
            if c.is_disjoint(touched) {
                true
            } else {
                merged = merged.union(*c);
                false
            }
        });
        comps.push(merged);
    }
    comps.sort_by_key(|c| c.iter().next());
    comps
}

/// A (possibly partial) assignment stored as one stacked vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub values: Vec<f64>,
    pub assigned: VarSet,
}

impl Assignment {
    pub fn empty(g: &ConstraintGraph) -> Self {
        Self { values: vec![0.0; g.total_dim()], assigned: VarSet::EMPTY }
    }

    /// A full assignment from per-variable slices.
    pub fn from_parts(g: &ConstraintGraph, parts: &[Vec<f64>]) -> Self {
        let mut a = Self::empty(g);
        for (i, p) in parts.iter().enumerate() {
            a.set(g, i, p);
        }
        a
    }

    pub fn set(&mut self, g: &ConstraintGraph, var: usize, value: &[f64]) {
        let o = g.offset(var);
        self.values[o..o + value.len()].copy_from_slice(value);
        self.assigned = self.assigned.with(var);
    }

    pub fn get<'a>(&'a self, g: &ConstraintGraph, var: usize) -> &'a [f64] {
        &self.values[g.offset(var)..g.offset(var + 1)]
    }

    /// Per-variable slices in declaration order.
    pub fn parts(&self, g: &ConstraintGraph) -> Vec<Vec<f64>> {
        (0..g.n_vars()).map(|i| self.get(g, i).to_vec()).collect()
    }

    pub fn clear(&mut self) {
        self.assigned = VarSet::EMPTY;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Pose2;

    fn unit_box(id: &str, dim: usize) -> VariableSpec {
        VariableSpec::new(id, vec![-1.0; dim], vec![1.0; dim])
    }

    fn pick_place_like() -> ConstraintGraph {
        let fk = |target: Pose2| Residual::PlanarFk {
            links: vec![1.0, 1.0, 1.0],
            base: Pose2::IDENTITY,
            target,
            nbase: 0,
            rows: PoseRows::ALL,
        };
        let coll = Residual::CircleClearance(Clearance::Point { center: [5.0, 5.0], radius: 0.1 });
        ConstraintGraph::build(
            "pp",
            vec![unit_box("t", 3), unit_box("q1", 3), unit_box("q2", 3)],
            vec![
                ConstraintDraft::new(
                    "grasp",
                    ConstraintKind::Eq,
                    &["t"],
                    Residual::FixedPose {
                        target: Pose2::IDENTITY,
                        offset: Pose2::new(0.1, 0.0, 0.0),
                        rows: PoseRows::parse("xy").unwrap(),
                    },
                ),
                ConstraintDraft::new("kin1", ConstraintKind::Eq, &["q1", "t"], fk(Pose2::new(1.0, 1.0, 0.0))),
                ConstraintDraft::new("kin2", ConstraintKind::Eq, &["q2", "t"], fk(Pose2::new(-1.0, 1.0, 0.0))),
                ConstraintDraft::new("coll1", ConstraintKind::Ineq, &["q1"], coll.clone()),
                ConstraintDraft::new("coll2", ConstraintKind::Ineq, &["q2"], coll),
            ],
        )
        .unwrap()
    }

    #[test]
    fn components_follow_unassigned_paths() {
        let g = pick_place_like();
        let t = g.var_set(&["t"]).unwrap();
        let q1 = g.var_set(&["q1"]).unwrap();
        let q2 = g.var_set(&["q2"]).unwrap();
        // fixing t separates the two arm configurations
        let comps = g.conditional_independence_components(t, q1.union(q2));
        assert_eq!(comps, vec![q1, q2]);
        // without t assigned, q1 and t are linked by Kin
        let comps = g.conditional_independence_components(VarSet::EMPTY, q1.union(t));
        assert_eq!(comps, vec![q1.union(t)]);
        let comps = g.conditional_independence_components(VarSet::EMPTY, q1);
        assert_eq!(comps, vec![q1]);
        // q1, q2 alone: only unary factors apply
        let comps = g.conditional_independence_components(VarSet::EMPTY, q1.union(q2));
        assert_eq!(comps.len(), 2);
    }

    #[test]
    fn eval_requires_assigned_scope() {
        let g = pick_place_like();
        let mut x = Assignment::empty(&g);
        x.set(&g, 1, &[0.0, 0.0, 0.0]);
        let err = g.eval_residual(1, &x).unwrap_err();
        assert!(matches!(err, GraphError::Unassigned { ref variable, .. } if variable == "t"));
        x.set(&g, 0, &[0.0, 0.0, 0.0]);
        let r = g.eval_residual(1, &x).unwrap();
        // straight arm at (3,0,0) against the target (1,1,0) composed with identity
        assert_eq!(r, vec![2.0, -1.0, 0.0]);
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let err = ConstraintGraph::build(
            "g",
            vec![unit_box("a", 2)],
            vec![ConstraintDraft::new(
                "c",
                ConstraintKind::Eq,
                &["b"],
                Residual::CustomAffine { a: vec![1.0, 0.0], b: vec![0.0] },
            )],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::UnresolvedScope { constraint: "c".into(), variable: "b".into() });

        let err = ConstraintGraph::build("g", vec![unit_box("a", 1), unit_box("a", 1)], vec![]).unwrap_err();
        assert_eq!(err, GraphError::Duplicate("a".into()));

        let bad = VariableSpec::new("a", vec![1.0], vec![1.0]);
        assert!(ConstraintGraph::build("g", vec![bad], vec![]).is_err());

        let err = ConstraintGraph::build(
            "g",
            vec![unit_box("a", 2)],
            vec![ConstraintDraft::new(
                "c",
                ConstraintKind::Eq,
                &["a"],
                Residual::CircleClearance(Clearance::Point { center: [0.0, 0.0], radius: 1.0 }),
            )],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Invalid { .. }));
    }

    #[test]
    fn unconstrained_graph_is_valid() {
        let g = ConstraintGraph::build("solo", vec![unit_box("x", 2)], vec![]).unwrap();
        assert_eq!(g.n_vars(), 1);
        assert_eq!(g.total_dim(), 2);
        assert!(g.constraints().is_empty());
    }
}
