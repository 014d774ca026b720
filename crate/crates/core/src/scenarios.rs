//! Planar benchmark problems with the factor topology of the classic
//! manipulation graphs: pick-and-place, a two-arm handover, and the banana
//! problem where a box is placed and then used as the base of a second arm.
//! `ik2` is a two-link arm whose tip is pinned to a vertical line, giving a
//! one-parameter family of solutions.
//!
//! The shipped problem files (with certified witnesses) live in
//! `fixtures/`; [`template`] regenerates them from the parameters here.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::residual::{Clearance, PoseRows, Residual};
use crate::graph::{parse_graph, serialize_graph, Assignment, ConstraintDraft, ConstraintGraph, ConstraintKind, GraphError, VariableSpec};
use crate::pose::{wrap_angle, PlanarArm, Pose2};
use crate::solve::{conditional_sample, SolverConfig};
use crate::states::{FactorShape, Structure};
use crate::varset::VarSet;

use std::f64::consts::PI;

pub const FAMILIES: [&str; 4] = ["pick_place", "handover", "banana", "ik2"];
pub const INSTANCES: usize = 8;

/// Rows of the canonical Grasp and Position factors.
pub const GRASP_ROWS: usize = 2;
pub const POSITION_ROWS: usize = 2;

/// Distance from the gripper frame to the grasped object's centre.
const GRASP_REACH: f64 = 0.25;
const LINKS: [f64; 3] = [1.0, 0.8, 0.6];
const SHORT_LINKS: [f64; 3] = [0.8, 0.6, 0.4];
const PAIR_CLEARANCE: f64 = 0.1;
/// Pick-place object distances from the arm base, close to full reach.
const R_FAR: f64 = 2.05;
const R_NEAR: f64 = 1.95;
const HEADING_SLACK: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario family `{0}` (expected one of pick_place, handover, banana, ik2)")]
    UnknownFamily(String),
    #[error("scenario {family} has no instance {index} (instances 0..{count})")]
    UnknownInstance { family: String, index: usize, count: usize },
    #[error("bad scenario selector `{0}`; expected <name>[:<index>]")]
    Selector(String),
    #[error("fixture {0} is broken: {1}")]
    Fixture(String, GraphError),
    #[error("fixture {name} witness violates constraints (eq {eq:e}, ineq {ineq:e})")]
    Witness { name: String, eq: f64, ineq: f64 },
}

/// `name[:index]`, index defaulting to 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioRef {
    pub family: String,
    pub index: usize,
}

impl ScenarioRef {
    pub fn parse(sel: &str) -> Result<Self, ScenarioError> {
        let (name, idx) = match sel.split_once(':') {
            Some((n, i)) => (n, i.parse().map_err(|_| ScenarioError::Selector(sel.to_string()))?),
            None => (sel, 0),
        };
        if !FAMILIES.contains(&name) {
            return Err(ScenarioError::UnknownFamily(name.to_string()));
        }
        let count = instance_count(name)?;
        if idx >= count {
            return Err(ScenarioError::UnknownInstance { family: name.to_string(), index: idx, count });
        }
        Ok(ScenarioRef { family: name.to_string(), index: idx })
    }
}

impl fmt::Display for ScenarioRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.index)
    }
}

pub fn instance_count(family: &str) -> Result<usize, ScenarioError> {
    match family {
        "pick_place" | "handover" | "banana" => Ok(INSTANCES),
        "ik2" => Ok(1),
        other => Err(ScenarioError::UnknownFamily(other.to_string())),
    }
}

macro_rules! fixtures {
    ($($fam:literal => [$($i:literal),*]),* $(,)?) => {
        /// Embedded problem file for a scenario instance.
        pub fn fixture_text(family: &str, index: usize) -> Option<&'static str> {
            match (family, index) {
                $($(($fam, $i) => Some(include_str!(concat!("../fixtures/", $fam, "_", $i, ".cg"))),)*)*
                _ => None,
            }
        }
    };
}

fixtures! {
    "pick_place" => [0, 1, 2, 3, 4, 5, 6, 7],
    "handover" => [0, 1, 2, 3, 4, 5, 6, 7],
    "banana" => [0, 1, 2, 3, 4, 5, 6, 7],
    "ik2" => [0],
}

/// File name of a fixture inside the fixtures directory.
pub fn fixture_file_name(family: &str, index: usize) -> String {
    format!("{family}_{index}.cg")
}

/// Golden adjacency list for a family (`factor: var var ...`).
pub fn golden_adjacency(family: &str) -> Option<&'static str> {
    match family {
        "pick_place" => Some(include_str!("../fixtures/pick_place.adjacency")),
        "handover" => Some(include_str!("../fixtures/handover.adjacency")),
        "banana" => Some(include_str!("../fixtures/banana.adjacency")),
        _ => None,
    }
}

/// Parses the shipped problem file and checks its witness.
pub fn build_scenario(family: &str, index: usize) -> Result<ConstraintGraph, ScenarioError> {
    let count = instance_count(family)?;
    let text = fixture_text(family, index)
        .ok_or_else(|| ScenarioError::UnknownInstance { family: family.to_string(), index, count })?;
    let name = fixture_file_name(family, index);
    let g = parse_graph(text).map_err(|e| ScenarioError::Fixture(name.clone(), e))?;
    check_witness(&g, &name)?;
    Ok(g)
}

pub fn check_witness(g: &ConstraintGraph, name: &str) -> Result<(), ScenarioError> {
    let cfg = SolverConfig::default();
    let Some(w) = &g.witness else {
        return Err(ScenarioError::Fixture(
            name.to_string(),
            GraphError::Invalid { entity: "witness".into(), message: "missing".into() },
        ));
    };
    let x: Vec<f64> = w.iter().flatten().copied().collect();
    let (eq, ineq) = g.violation(&x);
    if eq > cfg.tol_eq || ineq > cfg.tol_ineq {
        return Err(ScenarioError::Witness { name: name.to_string(), eq, ineq });
    }
    Ok(())
}

/// Per-factor adjacency (factor id and the sorted ids of its variables).
pub fn adjacency(g: &ConstraintGraph) -> Vec<(String, Vec<String>)> {
    g.constraints()
        .iter()
        .map(|c| {
            let mut vars: Vec<String> = c.scope.iter().map(|&v| g.variables()[v].id.clone()).collect();
            vars.sort();
            (c.id.clone(), vars)
        })
        .collect()
}

pub fn format_adjacency(adj: &[(String, Vec<String>)]) -> String {
    adj.iter().map(|(c, vs)| format!("{c}: {}\n", vs.join(" "))).collect()
}

/// Parses the `factor: var ...` lines, ignoring blanks and `#` comments.
pub fn parse_adjacency(text: &str) -> Vec<(String, Vec<String>)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let (c, vs) = l.split_once(':')?;
            let mut vars: Vec<String> = vs.split_whitespace().map(String::from).collect();
            vars.sort();
            Some((c.trim().to_string(), vars))
        })
        .collect()
}

/// Pruning-only view of a family with adjustable factor rows and arm DOF.
pub fn canonical_structure(family: &str, grasp_rows: usize, position_rows: usize, arm_dof: usize) -> Option<Structure> {
    let s = |ix: &[usize]| VarSet::from_indices(ix.iter().copied());
    let (dims, eq): (Vec<usize>, Vec<(VarSet, usize)>) = match family {
        // t q1 q2
        "pick_place" => (
            vec![3, arm_dof, arm_dof],
            vec![(s(&[0]), grasp_rows), (s(&[0, 1]), 3), (s(&[0, 2]), 3), (s(&[1]), 0), (s(&[2]), 0)],
        ),
        // p t_a t_b q_a1 q_a2 q_b1 q_b2
        "handover" => (
            vec![3, 3, 3, arm_dof, arm_dof, arm_dof, arm_dof],
            vec![
                (s(&[1, 3]), 3),
                (s(&[1, 4, 0]), 3),
                (s(&[2, 6, 0]), 3),
                (s(&[2, 5]), 3),
                (s(&[1]), grasp_rows),
                (s(&[2]), grasp_rows),
                (s(&[0]), position_rows),
                (s(&[3]), 0),
                (s(&[4]), 0),
                (s(&[5]), 0),
                (s(&[6]), 0),
                (s(&[4, 6]), 0),
            ],
        ),
        // p t_a t_b t_x q_a1 q_a2 q_b1 q_b2 q_x
        "banana" => (
            vec![3, 3, 3, 3, arm_dof, arm_dof, arm_dof, arm_dof, arm_dof],
            vec![
                (s(&[1, 4]), 3),
                (s(&[1, 5, 0]), 3),
                (s(&[3, 8, 0]), 3),
                (s(&[2, 6, 0, 3]), 3),
                (s(&[2, 7, 3, 0]), 3),
                (s(&[1]), grasp_rows),
                (s(&[2]), grasp_rows),
                (s(&[3]), grasp_rows),
                (s(&[0]), position_rows),
                (s(&[4]), 0),
                (s(&[5]), 0),
                (s(&[6]), 0),
                (s(&[7]), 0),
                (s(&[8]), 0),
            ],
        ),
        _ => return None,
    };
    Some(Structure { dims, factors: eq.into_iter().map(|(scope, eq_rows)| FactorShape { scope, eq_rows }).collect() })
}

fn angles(n: usize) -> VariableSpec {
    VariableSpec::new("", vec![-PI; n], vec![PI; n])
}

fn joint_var(id: &str) -> VariableSpec {
    VariableSpec { id: id.to_string(), ..angles(3) }
}

fn grasp_var(id: &str) -> VariableSpec {
    let r = 1.2 * GRASP_REACH;
    VariableSpec::new(id, vec![-r, -r, -PI], vec![r, r, PI])
}

fn rows(n: usize) -> PoseRows {
    match n {
        1 => PoseRows { x: true, y: false, theta: false },
        2 => PoseRows { x: true, y: true, theta: false },
        _ => PoseRows::ALL,
    }
}

/// Gripper frame at distance `GRASP_REACH` from the object centre, facing it.
fn grasp(id: &str, var: &str) -> ConstraintDraft {
    ConstraintDraft::new(
        id,
        ConstraintKind::Eq,
        &[var],
        Residual::FixedPose {
            target: Pose2::IDENTITY,
            offset: Pose2::new(GRASP_REACH, 0.0, 0.0),
            rows: rows(GRASP_ROWS),
        },
    )
}

fn kin(id: &str, scope: &[&str], arm: &PlanarArm, target: Pose2, nbase: usize) -> ConstraintDraft {
    ConstraintDraft::new(
        id,
        ConstraintKind::Eq,
        scope,
        Residual::PlanarFk { links: arm.links.clone(), base: arm.base, target, nbase, rows: PoseRows::ALL },
    )
}

fn coll(id: &str, var: &str, arm: &PlanarArm, circles: &[[f64; 3]]) -> ConstraintDraft {
    ConstraintDraft::new(
        id,
        ConstraintKind::Ineq,
        &[var],
        Residual::CircleClearance(Clearance::Arm { arm: arm.clone(), circles: circles.to_vec() }),
    )
}

/// Forbidden disc in the plane of the first two joint angles.
fn joint_coll(id: &str, var: &str, disc: [f64; 3]) -> ConstraintDraft {
    ConstraintDraft::new(
        id,
        ConstraintKind::Ineq,
        &[var],
        Residual::CircleClearance(Clearance::Point { center: [disc[0], disc[1]], radius: disc[2] }),
    )
}

fn position(id: &str, var: &str, at: [f64; 2]) -> ConstraintDraft {
    ConstraintDraft::new(
        id,
        ConstraintKind::Eq,
        &[var],
        Residual::FixedPose { target: Pose2::new(at[0], at[1], 0.0), offset: Pose2::IDENTITY, rows: rows(POSITION_ROWS) },
    )
}

/// Obstacle discs placed by a seeded stream, kept away from the given keep-out
/// discs.
fn scatter(rng: &mut ChaCha8Rng, count: usize, area: [f64; 4], radius: [f64; 2], keep_out: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::new();
    while out.len() < count {
        let c = [
            rng.gen_range(area[0]..area[1]),
            rng.gen_range(area[2]..area[3]),
            rng.gen_range(radius[0]..radius[1]),
        ];
        let clear = keep_out.iter().chain(out.iter()).all(|k| ((c[0] - k[0]).powi(2) + (c[1] - k[1]).powi(2)).sqrt() > c[2] + k[2]);
        if clear {
            out.push(c);
        }
    }
    out.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = (*v * 1000.0).round() / 1000.0));
    out
}

fn family_rng(family: &str, index: usize) -> ChaCha8Rng {
    let salt = family.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    ChaCha8Rng::seed_from_u64(salt ^ (index as u64) << 32)
}

/// Builds a scenario from its generating parameters (no witness).
pub fn template(family: &str, index: usize) -> Result<ConstraintGraph, ScenarioError> {
    let count = instance_count(family)?;
    if index >= count {
        return Err(ScenarioError::UnknownInstance { family: family.to_string(), index, count });
    }
    let mut rng = family_rng(family, index);
    let name = format!("{family}_{index}");
    let g = match family {
        "pick_place" => pick_place(&name, index, &mut rng),
        "handover" => handover(&name, index, &mut rng),
        "banana" => banana(&name, index, &mut rng),
        _ => ik2(&name),
    };
    Ok(g.expect("scenario templates are well formed"))
}

fn pick_place(name: &str, index: usize, rng: &mut ChaCha8Rng) -> Result<ConstraintGraph, GraphError> {
    let arm = PlanarArm::new(Pose2::IDENTITY, LINKS.to_vec());
    // polar placement keeps objects away from the joint-limit seam at ±π
    let a = 0.8 * index as f64 / INSTANCES as f64;
    // the farther object has the narrower grasp window; alternate it
    let (r_pick, r_place) = if index.is_multiple_of(2) { (R_FAR, R_NEAR) } else { (R_NEAR, R_FAR) };
    let (pick_at, place_at) = (0.35 + a, PI - 0.6 - a);
    // near full reach both approaches are roughly radial; the shared grasp
    // angle is feasible only if the object headings differ by about the
    // polar gap, so the place heading gets a bounded offset from that
    let start_heading = rng.gen_range(-PI..PI);
    let place_heading = wrap_angle(start_heading + place_at - pick_at + rng.gen_range(-HEADING_SLACK..HEADING_SLACK));
    let start = Pose2::new(r_pick * pick_at.cos(), r_pick * pick_at.sin(), start_heading);
    let goal = Pose2::new(r_place * place_at.cos(), r_place * place_at.sin(), place_heading);
    // the midpoint discs keep the fully stretched arm clear
    let keep = [
        [0.0, 0.0, 0.9],
        [start.x, start.y, 0.6],
        [goal.x, goal.y, 0.6],
        [start.x / 2.0, start.y / 2.0, 0.5],
        [goal.x / 2.0, goal.y / 2.0, 0.5],
    ];
    let obstacles = scatter(rng, 2 + index % 2, [-2.4, 2.4, -0.8, 2.4], [0.12, 0.3], &keep);
    let vars = vec![grasp_var("t"), joint_var("q1"), joint_var("q2")];
    let cons = vec![
        grasp("grasp", "t"),
        kin("kin1", &["q1", "t"], &arm, start, 0),
        kin("kin2", &["q2", "t"], &arm, goal, 0),
        coll("coll1", "q1", &arm, &obstacles),
        coll("coll2", "q2", &arm, &obstacles),
    ];
    ConstraintGraph::build(name, vars, cons)
}

fn handover(name: &str, index: usize, rng: &mut ChaCha8Rng) -> Result<ConstraintGraph, GraphError> {
    let arm_a = PlanarArm::new(Pose2::new(-1.3, 0.0, 0.0), LINKS.to_vec());
    let arm_b = PlanarArm::new(Pose2::new(1.3, 0.0, PI), LINKS.to_vec());
    let s = 0.25 * (index as f64 - 3.5) / 3.5;
    let start = Pose2::new(-2.4 - 0.3 * s, 1.2 + s, rng.gen_range(-PI..PI));
    let goal = Pose2::new(2.4 + 0.3 * s, 1.2 - s, rng.gen_range(-PI..PI));
    let handover_at = [0.0, 1.1 + 0.4 * s];
    let keep = [
        [-1.3, 0.0, 0.9],
        [1.3, 0.0, 0.9],
        [start.x, start.y, 0.6],
        [goal.x, goal.y, 0.6],
        [handover_at[0], handover_at[1], 0.6],
    ];
    let obstacles = scatter(rng, 2 + index % 2, [-3.4, 3.4, -0.6, 2.8], [0.12, 0.25], &keep);
    let vars = vec![
        VariableSpec::new("p", vec![-1.0, 0.0, -PI], vec![1.0, 2.5, PI]),
        grasp_var("t_a"),
        grasp_var("t_b"),
        joint_var("q_a1"),
        joint_var("q_a2"),
        joint_var("q_b1"),
        joint_var("q_b2"),
    ];
    let cons = vec![
        kin("kin_a1", &["q_a1", "t_a"], &arm_a, start, 0),
        kin("kin_a2", &["q_a2", "p", "t_a"], &arm_a, Pose2::IDENTITY, 0),
        kin("kin_b2", &["q_b2", "p", "t_b"], &arm_b, Pose2::IDENTITY, 0),
        kin("kin_b1", &["q_b1", "t_b"], &arm_b, goal, 0),
        grasp("grasp_a", "t_a"),
        grasp("grasp_b", "t_b"),
        position("position", "p", handover_at),
        coll("coll_a1", "q_a1", &arm_a, &obstacles),
        coll("coll_a2", "q_a2", &arm_a, &obstacles),
        coll("coll_b1", "q_b1", &arm_b, &obstacles),
        coll("coll_b2", "q_b2", &arm_b, &obstacles),
        ConstraintDraft::new(
            "coll_ab",
            ConstraintKind::Ineq,
            &["q_a2", "q_b2"],
            Residual::CircleClearance(Clearance::ArmPair {
                first: arm_a.clone(),
                second: arm_b.clone(),
                radius: PAIR_CLEARANCE,
            }),
        ),
    ];
    ConstraintGraph::build(name, vars, cons)
}

fn banana(name: &str, index: usize, rng: &mut ChaCha8Rng) -> Result<ConstraintGraph, GraphError> {
    let arm_a = PlanarArm::new(Pose2::new(-1.6, 0.0, 0.0), LINKS.to_vec());
    let arm_x = PlanarArm::new(Pose2::new(1.0, 0.0, PI), LINKS.to_vec());
    // arm b is mounted on the box contact frame, given by p and t_x
    let arm_b = PlanarArm::new(Pose2::IDENTITY, SHORT_LINKS.to_vec());
    let s = 0.2 * (index as f64 - 3.5) / 3.5;
    let start = Pose2::new(-2.5, 0.9 + s, rng.gen_range(-PI..PI));
    let place = [-0.3 + s, 1.0];
    let banana_start = Pose2::new(0.5 + s, 2.0, rng.gen_range(-PI..PI));
    let banana_goal = Pose2::new(-1.0, 2.1 - s, rng.gen_range(-PI..PI));
    let keep = [
        [-1.6, 0.0, 0.5],
        [1.0, 0.0, 0.5],
        [start.x, start.y, 0.4],
        [place[0], place[1], 0.6],
    ];
    let obstacles = scatter(rng, 2 + index % 3, [-3.2, 2.4, -0.6, 1.8], [0.15, 0.3], &keep);
    let disc_b1 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.3..0.8)];
    let disc_b2 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.3..0.8)];
    let disc_b1 = disc_b1.map(|v: f64| (v * 1000.0).round() / 1000.0);
    let disc_b2 = disc_b2.map(|v: f64| (v * 1000.0).round() / 1000.0);
    let vars = vec![
        VariableSpec::new("p", vec![-1.5, 0.0, -PI], vec![1.5, 2.0, PI]),
        grasp_var("t_a"),
        grasp_var("t_b"),
        grasp_var("t_x"),
        joint_var("q_a1"),
        joint_var("q_a2"),
        joint_var("q_b1"),
        joint_var("q_b2"),
        joint_var("q_x"),
    ];
    let cons = vec![
        kin("kin_a1", &["q_a1", "t_a"], &arm_a, start, 0),
        kin("kin_a2", &["q_a2", "p", "t_a"], &arm_a, Pose2::IDENTITY, 0),
        kin("kin_x", &["q_x", "p", "t_x"], &arm_x, Pose2::IDENTITY, 0),
        kin("kin_b1", &["q_b1", "p", "t_x", "t_b"], &arm_b, banana_start, 2),
        kin("kin_b2", &["q_b2", "p", "t_x", "t_b"], &arm_b, banana_goal, 2),
        grasp("grasp_a", "t_a"),
        grasp("grasp_b", "t_b"),
        grasp("grasp_x", "t_x"),
        position("position", "p", place),
        coll("coll_a1", "q_a1", &arm_a, &obstacles),
        coll("coll_a2", "q_a2", &arm_a, &obstacles),
        joint_coll("coll_b1", "q_b1", disc_b1),
        joint_coll("coll_b2", "q_b2", disc_b2),
        coll("coll_x", "q_x", &arm_x, &obstacles),
    ];
    ConstraintGraph::build(name, vars, cons)
}

/// Target line `x = IK2_LINE` for the two-link arm with unit links.
pub const IK2_LINE: f64 = 1.3;

fn ik2(name: &str) -> Result<ConstraintGraph, GraphError> {
    let vars = vec![VariableSpec { id: "q".into(), ..angles(2) }];
    let cons = vec![ConstraintDraft::new(
        "line",
        ConstraintKind::Eq,
        &["q"],
        Residual::PlanarFk {
            links: vec![1.0, 1.0],
            base: Pose2::IDENTITY,
            target: Pose2::new(IK2_LINE, 0.0, 0.0),
            nbase: 0,
            rows: rows(1),
        },
    )];
    ConstraintGraph::build(name, vars, cons)
}

/// Searches for a feasible full assignment by sampling along `sequence`
/// (a strictly increasing chain of states ending at the full set), with
/// restarts.
pub fn find_witness(
    g: &ConstraintGraph,
    sequence: &[VarSet],
    attempts: usize,
    seed: u64,
) -> Option<Vec<Vec<f64>>> {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..attempts {
        let mut x = Assignment::empty(g);
        let mut from = VarSet::EMPTY;
        for &to in sequence {
            let new = to.difference(from);
            let r = conditional_sample(g, &x, new, &cfg, &mut rng);
            if !r.feasible {
                continue 'attempt;
            }
            r.apply_to(g, new, &mut x);
            from = to;
        }
        let (eq, ineq) = g.violation(&x.values);
        if eq <= cfg.tol_eq && ineq <= cfg.tol_ineq {
            return Some(x.parts(g));
        }
    }
    None
}

/// Attempts spent on the witness search per fixture.
const WITNESS_ATTEMPTS: usize = 2000;

/// Problem-file text for an instance: the template plus a witness found by
/// joint sampling with a fixed seed. Deterministic.
pub fn generate_fixture(family: &str, index: usize) -> Result<String, ScenarioError> {
    let mut g = template(family, index)?;
    let full = VarSet::full(g.n_vars());
    let name = fixture_file_name(family, index);
    let witness = find_witness(&g, &[full], WITNESS_ATTEMPTS, index as u64)
        .ok_or_else(|| ScenarioError::Witness { name: name.clone(), eq: f64::NAN, ineq: f64::NAN })?;
    g.witness = Some(witness);
    Ok(serialize_graph(&g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selectors() {
        let r = ScenarioRef::parse("handover:3").unwrap();
        assert_eq!((r.family.as_str(), r.index), ("handover", 3));
        assert_eq!(ScenarioRef::parse("ik2").unwrap().index, 0);
        assert!(matches!(ScenarioRef::parse("handover:8"), Err(ScenarioError::UnknownInstance { .. })));
        assert!(matches!(ScenarioRef::parse("kitchen"), Err(ScenarioError::UnknownFamily(_))));
    }

    #[test]
    fn topology_matches_golden_lists() {
        for family in ["pick_place", "handover", "banana"] {
            let golden = parse_adjacency(golden_adjacency(family).unwrap());
            for i in 0..INSTANCES {
                assert_eq!(adjacency(&build_scenario(family, i).unwrap()), golden, "{family}_{i}");
            }
        }
    }

    #[test]
    fn pick_place_zero_shape() {
        let g = build_scenario("pick_place", 0).unwrap();
        assert_eq!((g.n_vars(), g.constraints().len()), (3, 5));
    }

    #[test]
    fn every_fixture_has_a_valid_witness() {
        for family in FAMILIES {
            for i in 0..instance_count(family).unwrap() {
                build_scenario(family, i).unwrap();
            }
        }
    }
}
