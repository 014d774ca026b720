//! Conditional sampling operations: draw the new variables uniformly from
//! their boxes, then project onto the constraints that become active, with
//! every previously assigned variable held fixed.
//!
//! The projection is a damped Gauss-Newton iteration on the stacked
//! equality residuals plus a squared hinge on the inequality rows. The
//! hinge weight grows geometrically whenever progress stalls with an
//! inequality still violated. Jacobians are central finite differences.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Assignment, ConstraintGraph, ConstraintKind};
use crate::pose::wrap_angle;
use crate::varset::VarSet;

/// Finite-difference step for all Jacobians.
pub const FD_STEP: f64 = 1e-6;
/// Backtracking stops once the scaled step falls below this length.
pub const MIN_STEP: f64 = 1e-12;
const MAX_PENALTY: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// `‖·‖∞` tolerance on equality rows.
    pub tol_eq: f64,
    /// Inequality rows must end up `<= tol_ineq`.
    pub tol_ineq: f64,
    pub max_iters: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Levenberg damping added to the Gauss-Newton normal equations.
    pub step_damping: f64,
    /// The hinge acts on `g + ineq_margin`, so converged points sit
    /// strictly inside the inequality region.
    pub ineq_margin: f64,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_eq: 1e-6,
            tol_ineq: 1e-8,
            max_iters: 100,
            penalty_init: 1.0,
            penalty_growth: 10.0,
            step_damping: 1e-6,
            ineq_margin: 1e-6,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.tol_eq >= 0.0, "tol_eq must be >= 0"),
            (self.tol_ineq >= 0.0, "tol_ineq must be >= 0"),
            (self.max_iters > 0, "max_iters must be > 0"),
            (self.penalty_init > 0.0, "penalty_init must be > 0"),
            (self.penalty_growth > 0.0, "penalty_growth must be > 0"),
            (self.step_damping > 0.0, "step_damping must be > 0"),
            (self.ineq_margin >= 0.0, "ineq_margin must be >= 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}

/// One active constraint inside the stacked residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveRows {
    pub constraint: usize,
    pub row_offset: usize,
    pub rows: usize,
}

/// The constraints a transition `from → to` must satisfy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualStack {
    /// Scope inside `to` but not inside `from`, in declaration order.
    pub active: Vec<ActiveRows>,
    pub total_rows: usize,
    /// Constraints entirely inside `from`; they only get re-checked.
    pub recheck: Vec<usize>,
}

pub fn residual_stack(g: &ConstraintGraph, to: VarSet, from: VarSet) -> ResidualStack {
    let mut active = Vec::new();
    let mut recheck = Vec::new();
    let mut total_rows = 0;
    for (c, con) in g.constraints().iter().enumerate() {
        let scope = g.scope_set(c);
        if scope.is_subset(from) {
            recheck.push(c);
        } else if scope.is_subset(to) {
            active.push(ActiveRows { constraint: c, row_offset: total_rows, rows: con.codim });
            total_rows += con.codim;
        }
    }
    ResidualStack { active, total_rows, recheck }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleAttemptResult {
    pub feasible: bool,
    /// Values of the new variables in ascending index order; `Some` iff
    /// `feasible`.
    pub values: Option<Vec<Vec<f64>>>,
    pub residual_norm: f64,
    pub iters: usize,
    /// Wall-clock seconds spent in the call.
    pub elapsed: f64,
    /// Deterministic cost: `(iters + 1) * max(total_rows, 1)`.
    pub cost_proxy: u64,
}

impl SampleAttemptResult {
    /// Writes the new values into `x`. No-op for infeasible results.
    pub fn apply_to(&self, g: &ConstraintGraph, new_vars: VarSet, x: &mut Assignment) {
        if let Some(values) = &self.values {
            for (v, val) in new_vars.iter().zip(values) {
                x.set(g, v, val);
            }
        }
    }
}

/// Outcome of a projection from an explicit starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub feasible: bool,
    /// Final stacked values of the new variables.
    pub z: Vec<f64>,
    pub iters: usize,
    pub residual_norm: f64,
    /// `(penalty, merit)` before the first step and after every accepted one.
    pub merit_trace: Vec<(f64, f64)>,
}

struct Problem<'a> {
    g: &'a ConstraintGraph,
    stack: &'a ResidualStack,
    /// (new variable, offset in full vector, dim)
    blocks: Vec<(usize, usize, usize)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    angular: Vec<Vec<usize>>,
}

impl<'a> Problem<'a> {
    fn new(g: &'a ConstraintGraph, stack: &'a ResidualStack, base: &[f64], new_vars: VarSet) -> Self {
        let mut blocks = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for v in new_vars.iter() {
            let spec = &g.variables()[v];
            blocks.push((v, g.offset(v), spec.dim));
            lower.extend_from_slice(&spec.lower);
            upper.extend_from_slice(&spec.upper);
        }
        let angular = stack
            .active
            .iter()
            .map(|a| g.constraints()[a.constraint].residual.angular_rows())
            .collect();
        Self { g, stack, blocks, lower, upper, x: base.to_vec(), angular }
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn load(&mut self, z: &[f64]) {
        let mut k = 0;
        for &(_, off, dim) in &self.blocks {
            self.x[off..off + dim].copy_from_slice(&z[k..k + dim]);
            k += dim;
        }
    }

    /// Clamps to the box, except that a coordinate bounded by exactly
    /// `[-π, π]` spans the whole circle and is wrapped instead.
    fn clamp(&self, z: &mut [f64]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = if is_full_circle(self.lower[i], self.upper[i]) {
                wrap_angle(*v)
            } else {
                v.clamp(self.lower[i], self.upper[i])
            };
        }
    }

    /// Raw residual rows of every active constraint.
    fn residuals(&mut self, z: &[f64], out: &mut [f64]) {
        self.load(z);
        for a in &self.stack.active {
            self.g.eval_into(a.constraint, &self.x, &mut out[a.row_offset..a.row_offset + a.rows]);
        }
    }

    /// Finite-difference Jacobian of the raw residual rows.
    fn jacobian(&mut self, z: &[f64]) -> DMatrix<f64> {
        let m = self.stack.total_rows;
        let n = self.dim();
        let mut jac = DMatrix::zeros(m, n);
        let mut zp = z.to_vec();
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        let mut col = 0;
        for b in 0..self.blocks.len() {
            let (var, _, dim) = self.blocks[b];
            for _ in 0..dim {
                for (k, a) in self.stack.active.iter().enumerate() {
                    if !self.g.scope_set(a.constraint).contains(var) {
                        continue;
                    }
                    plus.resize(a.rows, 0.0);
                    minus.resize(a.rows, 0.0);
                    zp[col] = z[col] + FD_STEP;
                    self.load(&zp);
                    self.g.eval_into(a.constraint, &self.x, &mut plus);
                    zp[col] = z[col] - FD_STEP;
                    self.load(&zp);
                    self.g.eval_into(a.constraint, &self.x, &mut minus);
                    zp[col] = z[col];
                    for r in 0..a.rows {
                        let mut d = plus[r] - minus[r];
                        if self.angular[k].contains(&r) {
                            d = wrap_angle(d);
                        }
                        jac[(a.row_offset + r, col)] = d / (2.0 * FD_STEP);
                    }
                }
                col += 1;
            }
        }
        self.load(z);
        jac
    }

    fn is_eq_row(&self) -> Vec<bool> {
        let mut v = vec![false; self.stack.total_rows];
        for a in &self.stack.active {
            if self.g.constraints()[a.constraint].kind == ConstraintKind::Eq {
                v[a.row_offset..a.row_offset + a.rows].fill(true);
            }
        }
        v
    }
}

fn is_full_circle(lower: f64, upper: f64) -> bool {
    lower == -std::f64::consts::PI && upper == std::f64::consts::PI
}

/// `(‖eq‖∞, max ineq)` for a raw residual vector.
fn violations(raw: &[f64], is_eq: &[bool]) -> (f64, f64) {
    let mut eq: f64 = 0.0;
    let mut ineq = f64::NEG_INFINITY;
    for (r, &e) in raw.iter().zip(is_eq) {
        if e {
            eq = eq.max(r.abs());
        } else {
            ineq = ineq.max(*r);
        }
    }
    (eq, ineq)
}

fn merit(raw: &[f64], is_eq: &[bool], penalty: f64, margin: f64) -> f64 {
    raw.iter()
        .zip(is_eq)
        .map(|(r, &e)| if e { r * r } else { penalty * (r + margin).max(0.0).powi(2) })
        .sum()
}

/// Projects `init` (stacked new-variable values) onto the active
/// constraints of `from → from ∪ new_vars`.
pub fn project(
    g: &ConstraintGraph,
    assigned: &Assignment,
    new_vars: VarSet,
    init: &[f64],
    cfg: &SolverConfig,
) -> Projection {
    let from = assigned.assigned;
    assert!(from.is_disjoint(new_vars), "new variables overlap the assigned set");
    let stack = residual_stack(g, from.union(new_vars), from);
    project_with(g, &stack, assigned, new_vars, init, cfg)
}

fn project_with(
    g: &ConstraintGraph,
    stack: &ResidualStack,
    assigned: &Assignment,
    new_vars: VarSet,
    init: &[f64],
    cfg: &SolverConfig,
) -> Projection {
    let mut p = Problem::new(g, stack, &assigned.values, new_vars);
    assert_eq!(init.len(), p.dim(), "initial point has the wrong dimension");

    // constraints over fixed variables can only be re-checked
    let mut buf = Vec::new();
    for &c in &stack.recheck {
        let con = &g.constraints()[c];
        buf.resize(con.codim, 0.0);
        g.eval_into(c, &assigned.values, &mut buf);
        let bad = match con.kind {
            ConstraintKind::Eq => buf.iter().any(|r| r.abs() > cfg.tol_eq),
            ConstraintKind::Ineq => buf.iter().any(|&r| r > cfg.tol_ineq),
        };
        if bad {
            let norm = buf.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
            return Projection { feasible: false, z: init.to_vec(), iters: 0, residual_norm: norm, merit_trace: vec![] };
        }
    }

    let mut z = init.to_vec();
    p.clamp(&mut z);
    let m = stack.total_rows;
    let n = p.dim();
    let is_eq = p.is_eq_row();
    let mut raw = vec![0.0; m];
    let mut trial_raw = vec![0.0; m];
    let mut penalty = cfg.penalty_init;
    let mut iters = 0;
    p.residuals(&z, &mut raw);
    let mut current = merit(&raw, &is_eq, penalty, cfg.ineq_margin);
    let mut trace = vec![(penalty, current)];

    loop {
        let (eq, ineq) = violations(&raw, &is_eq);
        let residual_norm = eq.max(ineq.max(0.0));
        if eq <= cfg.tol_eq && ineq <= cfg.tol_ineq {
            return Projection { feasible: true, z, iters, residual_norm, merit_trace: trace };
        }
        if iters >= cfg.max_iters {
            return Projection { feasible: false, z, iters, residual_norm, merit_trace: trace };
        }
        iters += 1;

        // weighted residual e and its Jacobian
        let jac_raw = p.jacobian(&z);
        let sqrt_pen = penalty.sqrt();
        let mut e = DVector::zeros(m);
        let mut jac = jac_raw;
        for r in 0..m {
            if is_eq[r] {
                e[r] = raw[r];
            } else if raw[r] + cfg.ineq_margin > 0.0 {
                e[r] = sqrt_pen * (raw[r] + cfg.ineq_margin);
                jac.row_mut(r).scale_mut(sqrt_pen);
            } else {
                jac.row_mut(r).fill(0.0);
            }
        }
        let jt = jac.transpose();
        let mut normal = &jt * &jac;
        for i in 0..n {
            normal[(i, i)] += cfg.step_damping;
        }
        let rhs = -(&jt * &e);
        let step = match normal.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match normal.lu().solve(&rhs) {
                Some(s) => s,
                None => return Projection { feasible: false, z, iters, residual_norm, merit_trace: trace },
            },
        };

        let step_norm = step.norm();
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial = z.clone();
        while alpha * step_norm > MIN_STEP {
            for i in 0..n {
                trial[i] = z[i] + alpha * step[i];
            }
            p.clamp(&mut trial);
            p.residuals(&trial, &mut trial_raw);
            let cand = merit(&trial_raw, &is_eq, penalty, cfg.ineq_margin);
            if cand < current {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }

        let ineq_violated = ineq > cfg.tol_ineq;
        if accepted {
            std::mem::swap(&mut z, &mut trial);
            std::mem::swap(&mut raw, &mut trial_raw);
            current = merit(&raw, &is_eq, penalty, cfg.ineq_margin);
            trace.push((penalty, current));
            let (eq_now, ineq_now) = violations(&raw, &is_eq);
            if eq_now <= cfg.tol_eq && ineq_now > cfg.tol_ineq && penalty < MAX_PENALTY {
                penalty *= cfg.penalty_growth;
                current = merit(&raw, &is_eq, penalty, cfg.ineq_margin);
                trace.push((penalty, current));
            }
        } else if ineq_violated && penalty < MAX_PENALTY {
            penalty *= cfg.penalty_growth;
            current = merit(&raw, &is_eq, penalty, cfg.ineq_margin);
            trace.push((penalty, current));
        } else {
            // stuck in a local minimum of the merit
            return Projection { feasible: false, z, iters, residual_norm, merit_trace: trace };
        }
    }
}

/// Draws the new variables uniformly from their boxes.
pub fn draw_initial<R: Rng + ?Sized>(g: &ConstraintGraph, new_vars: VarSet, rng: &mut R) -> Vec<f64> {
    let mut z = Vec::with_capacity(g.dof(new_vars));
    for v in new_vars.iter() {
        let spec = &g.variables()[v];
        for k in 0..spec.dim {
            z.push(rng.gen_range(spec.lower[k]..spec.upper[k]));
        }
    }
    z
}

/// The operation `x_{s_j} = o_{s_i, s_j}(x_{s_i})`: one randomized
/// projection attempt for `new_vars` given the assigned variables.
pub fn conditional_sample<R: Rng + ?Sized>(
    g: &ConstraintGraph,
    assigned: &Assignment,
    new_vars: VarSet,
    cfg: &SolverConfig,
    rng: &mut R,
) -> SampleAttemptResult {
    let start = Instant::now();
    let from = assigned.assigned;
    assert!(from.is_disjoint(new_vars), "new variables overlap the assigned set");
    let stack = residual_stack(g, from.union(new_vars), from);
    let init = draw_initial(g, new_vars, rng);
    let proj = project_with(g, &stack, assigned, new_vars, &init, cfg);
    let values = proj.feasible.then(|| {
        let mut k = 0;
        new_vars
            .iter()
            .map(|v| {
                let d = g.variables()[v].dim;
                let part = proj.z[k..k + d].to_vec();
                k += d;
                part
            })
            .collect()
    });
    SampleAttemptResult {
        feasible: proj.feasible,
        values,
        residual_norm: proj.residual_norm,
        iters: proj.iters,
        elapsed: start.elapsed().as_secs_f64(),
        cost_proxy: ((proj.iters + 1) * stack.total_rows.max(1)) as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ConstraintDraft, Residual, VariableSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn affine_target(c: [f64; 2]) -> ConstraintGraph {
        ConstraintGraph::build(
            "affine",
            vec![VariableSpec::new("x", vec![-2.0, -2.0], vec![2.0, 2.0])],
            vec![ConstraintDraft::new(
                "pin",
                ConstraintKind::Eq,
                &["x"],
                Residual::CustomAffine { a: vec![1.0, 0.0, 0.0, 1.0], b: vec![-c[0], -c[1]] },
            )],
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_draw_is_free() {
        let g = ConstraintGraph::build("box", vec![VariableSpec::new("x", vec![0.0, 0.0], vec![1.0, 1.0])], vec![])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let res = conditional_sample(&g, &Assignment::empty(&g), g.all_vars(), &SolverConfig::default(), &mut rng);
        assert!(res.feasible);
        assert_eq!(res.iters, 0);
        let v = &res.values.unwrap()[0];
        assert!(v.iter().all(|&c| (0.0..1.0).contains(&c)));
    }

    #[test]
    fn affine_pin_converges_to_target() {
        let g = affine_target([0.3, -1.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let res = conditional_sample(&g, &Assignment::empty(&g), g.all_vars(), &SolverConfig::default(), &mut rng);
            assert!(res.feasible);
            let v = &res.values.as_ref().unwrap()[0];
            assert!((v[0] - 0.3).abs() <= 1e-6 && (v[1] + 1.2).abs() <= 1e-6);
        }
    }

    #[test]
    fn target_outside_box_is_infeasible() {
        let g = affine_target([3.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let res = conditional_sample(&g, &Assignment::empty(&g), g.all_vars(), &SolverConfig::default(), &mut rng);
        assert!(!res.feasible);
        assert!(res.values.is_none());
        assert!(res.residual_norm > 0.9);
    }

    #[test]
    fn hinge_pushes_inside_region() {
        let g = ConstraintGraph::build(
            "disc",
            vec![VariableSpec::new("p", vec![-2.0, -2.0], vec![2.0, 2.0])],
            vec![ConstraintDraft::new(
                "inside",
                ConstraintKind::Ineq,
                &["p"],
                Residual::PositionRegion { center: [1.0, 1.0], radius: 0.25 },
            )],
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let res = conditional_sample(&g, &Assignment::empty(&g), g.all_vars(), &cfg, &mut rng);
            assert!(res.feasible, "{res:?}");
            let v = &res.values.unwrap()[0];
            let d = ((v[0] - 1.0).powi(2) + (v[1] - 1.0).powi(2)).sqrt();
            assert!(d - 0.25 <= cfg.tol_ineq);
        }
    }

    #[test]
    fn empty_transition_stack() {
        let g = affine_target([0.0, 0.0]);
        let s = residual_stack(&g, g.all_vars(), g.all_vars());
        assert!(s.active.is_empty());
        assert_eq!(s.total_rows, 0);
        assert_eq!(s.recheck, vec![0]);
    }
}
