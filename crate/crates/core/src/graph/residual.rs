//! Builtin residual kinds.
//!
//! Every residual maps the stacked values of its scope variables to a fixed
//! number of rows. Pose-valued residuals compare SE(2) poses with the angular
//! component wrapped into `(-pi, pi]`; inequality residuals follow the
//! "feasible iff every row is `<= 0`" convention.

use crate::pose::{PlanarArm, Pose2};

/// Which components of a pose difference a residual keeps, in `x, y, theta`
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoseRows {
    pub x: bool,
    pub y: bool,
    pub theta: bool,
}

impl PoseRows {
    pub const ALL: PoseRows = PoseRows { x: true, y: true, theta: true };

    /// Parses a mask such as `xy` or `xyt`.
    pub fn parse(s: &str) -> Option<Self> {
        let mut rows = PoseRows { x: false, y: false, theta: false };
        for c in s.chars() {
            let slot = match c {
                'x' => &mut rows.x,
                'y' => &mut rows.y,
                't' => &mut rows.theta,
                _ => return None,
            };
            if *slot {
                return None;
            }
            *slot = true;
        }
        (rows.count() > 0).then_some(rows)
    }

    pub fn count(&self) -> usize {
        self.x as usize + self.y as usize + self.theta as usize
    }

    fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        [self.x, self.y, self.theta]
            .into_iter()
            .enumerate()
            .filter_map(|(i, on)| on.then_some(i))
    }
}

impl std::fmt::Display for PoseRows {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.x {
            write!(f, "x")?;
        }
        if self.y {
            write!(f, "y")?;
        }
        if self.theta {
            write!(f, "t")?;
        }
        Ok(())
    }
}

/// Obstacle-clearance variants. Rows are `radius - distance`.
#[derive(Debug, Clone, PartialEq)]
pub enum Clearance {
    /// The first two coordinates of a single variable against one disc.
    Point { center: [f64; 2], radius: f64 },
    /// The probe points of a fixed-base arm against a set of discs
    /// `(cx, cy, r)`; one row per (probe point, disc).
    Arm { arm: PlanarArm, circles: Vec<[f64; 3]> },
    /// Probe points of two arms kept at least `radius` apart; one row per
    /// point pair.
    ArmPair { first: PlanarArm, second: PlanarArm, radius: f64 },
}

/// A builtin residual descriptor together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Residual {
    /// Scope `[q, v_1, .., v_m]`: end-effector of an arm whose base is
    /// `base ∘ v_1 ∘ .. ∘ v_nbase`, minus `target ∘ v_{nbase+1} ∘ .. ∘ v_m`.
    PlanarFk {
        links: Vec<f64>,
        base: Pose2,
        target: Pose2,
        nbase: usize,
        rows: PoseRows,
    },
    /// Scope `[a, b]`: `(a ∘ offset) - b`.
    RelativePose { offset: Pose2, rows: PoseRows },
    /// Scope `[v]`: `(v ∘ offset) - target`.
    FixedPose { target: Pose2, offset: Pose2, rows: PoseRows },
    /// Scope `[v]`: `|v_xy - center| - radius`.
    PositionRegion { center: [f64; 2], radius: f64 },
    CircleClearance(Clearance),
    /// Scope `[v]`: `lo - v` followed by `v - hi`.
    BoxMembership { lo: Vec<f64>, hi: Vec<f64> },
    /// `A x + b` over the stacked scope, `A` row-major.
    CustomAffine { a: Vec<f64>, b: Vec<f64> },
}

/// Tags accepted in problem files.
pub const RESIDUAL_TAGS: [&str; 7] = [
    "planar_fk",
    "relative_pose",
    "fixed_pose",
    "position_region",
    "circle_clearance",
    "box_membership",
    "custom_affine",
];

impl Residual {
    pub fn tag(&self) -> &'static str {
        match self {
            Residual::PlanarFk { .. } => "planar_fk",
            Residual::RelativePose { .. } => "relative_pose",
            Residual::FixedPose { .. } => "fixed_pose",
            Residual::PositionRegion { .. } => "position_region",
            Residual::CircleClearance(_) => "circle_clearance",
            Residual::BoxMembership { .. } => "box_membership",
            Residual::CustomAffine { .. } => "custom_affine",
        }
    }

    /// Whether the tag only makes sense as an inequality (`Some(true)`),
    /// only as an equality (`Some(false)`), or either.
    pub fn inequality_only(&self) -> Option<bool> {
        match self {
            Residual::PlanarFk { .. } | Residual::RelativePose { .. } | Residual::FixedPose { .. } => {
                Some(false)
            }
            Residual::PositionRegion { .. }
            | Residual::CircleClearance(_)
            | Residual::BoxMembership { .. } => Some(true),
            Residual::CustomAffine { .. } => None,
        }
    }

    /// Checks the scope dimensions against the parameters and returns the
    /// output row count.
    pub fn check_scope(&self, dims: &[usize]) -> Result<usize, String> {
        let need = |cond: bool, msg: String| if cond { Ok(()) } else { Err(msg) };
        match self {
            Residual::PlanarFk { links, nbase, rows, .. } => {
                need(!dims.is_empty(), "planar_fk needs a joint variable".into())?;
                need(
                    dims[0] == links.len(),
                    format!("joint variable has dim {} but {} links", dims[0], links.len()),
                )?;
                need(
                    dims[1..].iter().all(|&d| d == 3),
                    "pose variables of planar_fk must have dim 3".into(),
                )?;
                need(
                    *nbase < dims.len(),
                    format!("nbase={} exceeds {} pose variables", nbase, dims.len() - 1),
                )?;
                Ok(rows.count())
            }
            Residual::RelativePose { rows, .. } => {
                need(dims == [3, 3], format!("relative_pose needs two dim-3 variables, got {dims:?}"))?;
                Ok(rows.count())
            }
            Residual::FixedPose { rows, .. } => {
                need(dims == [3], format!("fixed_pose needs one dim-3 variable, got {dims:?}"))?;
                Ok(rows.count())
            }
            Residual::PositionRegion { .. } | Residual::CircleClearance(Clearance::Point { .. }) => {
                need(
                    dims.len() == 1 && dims[0] >= 2,
                    format!("{} needs one variable of dim >= 2, got {dims:?}", self.tag()),
                )?;
                Ok(1)
            }
            Residual::CircleClearance(Clearance::Arm { arm, circles }) => {
                need(
                    dims == [arm.dof()],
                    format!("circle_clearance arm has {} links, scope dims {dims:?}", arm.dof()),
                )?;
                Ok(2 * arm.dof() * circles.len())
            }
            Residual::CircleClearance(Clearance::ArmPair { first, second, .. }) => {
                need(
                    dims == [first.dof(), second.dof()],
                    format!(
                        "circle_clearance arm pair has {}+{} links, scope dims {dims:?}",
                        first.dof(),
                        second.dof()
                    ),
                )?;
                Ok(4 * first.dof() * second.dof())
            }
            Residual::BoxMembership { lo, hi } => {
                need(
                    dims.len() == 1 && dims[0] == lo.len() && dims[0] == hi.len(),
                    format!("box_membership bounds of length {} for scope dims {dims:?}", lo.len()),
                )?;
                Ok(2 * lo.len())
            }
            Residual::CustomAffine { a, b } => {
                let cols: usize = dims.iter().sum();
                need(!b.is_empty(), "custom_affine needs a non-empty offset b".into())?;
                need(
                    a.len() == b.len() * cols,
                    format!("custom_affine matrix has {} entries, expected {}x{}", a.len(), b.len(), cols),
                )?;
                Ok(b.len())
            }
        }
    }

    /// Rows holding wrapped angle differences.
    pub fn angular_rows(&self) -> Vec<usize> {
        match self {
            Residual::PlanarFk { rows, .. }
            | Residual::RelativePose { rows, .. }
            | Residual::FixedPose { rows, .. } => {
                if rows.theta {
                    vec![rows.count() - 1]
                } else {
                    vec![]
                }
            }
            _ => vec![],
        }
    }

    /// Evaluates the residual; `xs` holds one slice per scope variable and
    /// `out` has exactly the residual's row count.
    pub fn eval(&self, xs: &[&[f64]], out: &mut [f64]) {
        match self {
            Residual::PlanarFk { links, base, target, nbase, rows } => {
                let base = chain(base, &xs[1..1 + nbase]);
                let ee = PlanarArm::new(base, links.clone()).end_effector(xs[0]);
                let goal = chain(target, &xs[1 + nbase..]);
                write_rows(rows, ee.difference(&goal), out);
            }
            Residual::RelativePose { offset, rows } => {
                let a = Pose2::from_slice(xs[0]).compose(offset);
                write_rows(rows, a.difference(&Pose2::from_slice(xs[1])), out);
            }
            Residual::FixedPose { target, offset, rows } => {
                let v = Pose2::from_slice(xs[0]).compose(offset);
                write_rows(rows, v.difference(target), out);
            }
            Residual::PositionRegion { center, radius } => {
                out[0] = dist(&[xs[0][0], xs[0][1]], center) - radius;
            }
            Residual::CircleClearance(c) => match c {
                Clearance::Point { center, radius } => {
                    out[0] = radius - dist(&[xs[0][0], xs[0][1]], center);
                }
                Clearance::Arm { arm, circles } => {
                    let pts = arm.probe_points(xs[0]);
                    let mut k = 0;
                    for circle in circles {
                        for p in &pts {
                            out[k] = circle[2] - dist(p, &[circle[0], circle[1]]);
                            k += 1;
                        }
                    }
                }
                Clearance::ArmPair { first, second, radius } => {
                    let pa = first.probe_points(xs[0]);
                    let pb = second.probe_points(xs[1]);
                    let mut k = 0;
                    for a in &pa {
                        for b in &pb {
                            out[k] = radius - dist(a, b);
                            k += 1;
                        }
                    }
                }
            },
            Residual::BoxMembership { lo, hi } => {
                let d = lo.len();
                for i in 0..d {
                    out[i] = lo[i] - xs[0][i];
                    out[d + i] = xs[0][i] - hi[i];
                }
            }
            Residual::CustomAffine { a, b } => {
                let cols = a.len() / b.len();
                let mut stacked = Vec::with_capacity(cols);
                for x in xs {
                    stacked.extend_from_slice(x);
                }
                for (r, out_r) in out.iter_mut().enumerate() {
                    let row = &a[r * cols..(r + 1) * cols];
                    *out_r = b[r] + row.iter().zip(&stacked).map(|(u, v)| u * v).sum::<f64>();
                }
            }
        }
    }

    /// Analytic Jacobian (row-major, rows x stacked scope dimension) for
    /// the tags that provide one. The solver itself uses finite differences;
    /// these exist to cross-check them.
    pub fn analytic_jacobian(&self, xs: &[&[f64]]) -> Option<Vec<Vec<f64>>> {
        let cols: usize = xs.iter().map(|x| x.len()).sum();
        match self {
            Residual::CustomAffine { a, b } => {
                Some((0..b.len()).map(|r| a[r * cols..(r + 1) * cols].to_vec()).collect())
            }
            Residual::BoxMembership { lo, .. } => {
                let d = lo.len();
                let mut j = vec![vec![0.0; d]; 2 * d];
                for i in 0..d {
                    j[i][i] = -1.0;
                    j[d + i][i] = 1.0;
                }
                Some(j)
            }
            Residual::PositionRegion { center, .. }
            | Residual::CircleClearance(Clearance::Point { center, .. }) => {
                let dx = xs[0][0] - center[0];
                let dy = xs[0][1] - center[1];
                let n = (dx * dx + dy * dy).sqrt();
                let sign = if matches!(self, Residual::PositionRegion { .. }) { 1.0 } else { -1.0 };
                let mut row = vec![0.0; cols];
                row[0] = sign * dx / n;
                row[1] = sign * dy / n;
                Some(vec![row])
            }
            Residual::FixedPose { offset, rows, .. } => {
                let (da, _) = Pose2::compose_jacobians(&Pose2::from_slice(xs[0]), offset);
                Some(select_rows(rows, &da.map(|r| r.to_vec())))
            }
            Residual::RelativePose { offset, rows } => {
                let (da, _) = Pose2::compose_jacobians(&Pose2::from_slice(xs[0]), offset);
                let full: Vec<Vec<f64>> = (0..3)
                    .map(|r| {
                        let mut row = da[r].to_vec();
                        row.extend((0..3).map(|c| if r == c { -1.0 } else { 0.0 }));
                        row
                    })
                    .collect();
                Some(select_rows(rows, &full))
            }
            Residual::PlanarFk { links, base, target, nbase, rows } => {
                let base_vars = &xs[1..1 + nbase];
                let target_vars = &xs[1 + nbase..];
                let base_pose = chain(base, base_vars);
                let local = PlanarArm::new(Pose2::IDENTITY, links.clone());
                let tip_local = local.end_effector(xs[0]);
                let (d_base, d_tip) = Pose2::compose_jacobians(&base_pose, &tip_local);
                let mut full = vec![vec![0.0; cols]; 3];
                // joints
                let jq = local.end_effector_jacobian(xs[0]);
                for (c, col) in jq.iter().enumerate() {
                    for r in 0..3 {
                        full[r][c] = (0..3).map(|k| d_tip[r][k] * col[k]).sum();
                    }
                }
                let mut offset = xs[0].len();
                for dv in chain_jacobians(base, base_vars) {
                    for r in 0..3 {
                        for c in 0..3 {
                            full[r][offset + c] = (0..3).map(|k| d_base[r][k] * dv[k][c]).sum();
                        }
                    }
                    offset += 3;
                }
                for dv in chain_jacobians(target, target_vars) {
                    for r in 0..3 {
                        for c in 0..3 {
                            full[r][offset + c] = -dv[r][c];
                        }
                    }
                    offset += 3;
                }
                Some(select_rows(rows, &full))
            }
            Residual::CircleClearance(_) => None,
        }
    }
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn write_rows(rows: &PoseRows, diff: [f64; 3], out: &mut [f64]) {
    for (k, i) in rows.indices().enumerate() {
        out[k] = diff[i];
    }
}

fn select_rows(rows: &PoseRows, full: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.indices().map(|i| full[i].clone()).collect()
}

/// `head ∘ v_1 ∘ .. ∘ v_m`.
fn chain(head: &Pose2, vars: &[&[f64]]) -> Pose2 {
    vars.iter().fold(*head, |acc, v| acc.compose(&Pose2::from_slice(v)))
}

/// Jacobian of `head ∘ v_1 ∘ .. ∘ v_m` with respect to each `v_i`.
fn chain_jacobians(head: &Pose2, vars: &[&[f64]]) -> Vec<[[f64; 3]; 3]> {
    let poses: Vec<Pose2> = vars.iter().map(|v| Pose2::from_slice(v)).collect();
    (0..poses.len())
        .map(|i| {
            let left = poses[..i].iter().fold(*head, |acc, p| acc.compose(p));
            let right = poses[i + 1..].iter().fold(Pose2::IDENTITY, |acc, p| acc.compose(p));
            let lv = left.compose(&poses[i]);
            let (d_outer, _) = Pose2::compose_jacobians(&lv, &right);
            let (_, d_inner) = Pose2::compose_jacobians(&left, &poses[i]);
            let mut m = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    m[r][c] = (0..3).map(|k| d_outer[r][k] * d_inner[k][c]).sum();
                }
            }
            m
        })
        .collect()
}
