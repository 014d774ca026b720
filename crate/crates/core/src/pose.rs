//! Planar rigid transforms (SE(2)) and the kinematic helpers used by the
//! builtin residuals.

use std::f64::consts::PI;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// A planar pose `(x, y, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Reads a pose from the first three entries of `v`.
    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2 {
            x: self.x + c * other.x - s * other.y,
            y: self.y + s * other.x + c * other.y,
            theta: self.theta + other.theta,
        }
    }

    /// Maps a point given in this frame into the parent frame.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Componentwise difference with the angular part wrapped.
    pub fn difference(&self, other: &Pose2) -> [f64; 3] {
        [
            self.x - other.x,
            self.y - other.y,
            wrap_angle(self.theta - other.theta),
        ]
    }

    /// Jacobians of `a ∘ b` with respect to `a` and `b` (row-major 3x3).
    pub fn compose_jacobians(a: &Pose2, b: &Pose2) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
        let (s, c) = a.theta.sin_cos();
        let da = [
            [1.0, 0.0, -s * b.x - c * b.y],
            [0.0, 1.0, c * b.x - s * b.y],
            [0.0, 0.0, 1.0],
        ];
        let db = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        (da, db)
    }
}

/// A serial planar arm with revolute joints mounted at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarArm {
    pub base: Pose2,
    pub links: Vec<f64>,
}

impl PlanarArm {
    pub fn new(base: Pose2, links: Vec<f64>) -> Self {
        Self { base, links }
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    /// End-effector pose for the joint angles `q`.
    pub fn end_effector(&self, q: &[f64]) -> Pose2 {
        let mut frame = self.base;
        for (l, a) in self.links.iter().zip(q) {
            frame = frame.compose(&Pose2::new(0.0, 0.0, *a));
            frame = frame.compose(&Pose2::new(*l, 0.0, 0.0));
        }
        frame
    }

    /// Collision probe points: each link's midpoint followed by its endpoint,
    /// for every link in order (`2 * dof` points).
    pub fn probe_points(&self, q: &[f64]) -> Vec<[f64; 2]> {
        let mut pts = Vec::with_capacity(2 * self.links.len());
        let mut frame = self.base;
        for (l, a) in self.links.iter().zip(q) {
            frame = frame.compose(&Pose2::new(0.0, 0.0, *a));
            pts.push(frame.apply([0.5 * l, 0.0]));
            frame = frame.compose(&Pose2::new(*l, 0.0, 0.0));
            pts.push([frame.x, frame.y]);
        }
        pts
    }

    /// Jacobian of the end-effector pose with respect to the joints, as
    /// `3 x dof` row-major rows.
    pub fn end_effector_jacobian(&self, q: &[f64]) -> Vec<[f64; 3]> {
        // column j: rotation about joint j moves the tip by z x (tip - joint_j)
        let tip = self.end_effector(q);
        let mut cols = Vec::with_capacity(q.len());
        let mut frame = self.base;
        for (l, a) in self.links.iter().zip(q) {
            let (jx, jy) = (frame.x, frame.y);
            cols.push([-(tip.y - jy), tip.x - jx, 1.0]);
            frame = frame.compose(&Pose2::new(0.0, 0.0, *a));
            frame = frame.compose(&Pose2::new(*l, 0.0, 0.0));
        }
        cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wrap_is_half_open() {
        assert_abs_diff_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn straight_arm_reaches_sum_of_links() {
        let arm = PlanarArm::new(Pose2::IDENTITY, vec![1.0, 1.0, 1.0]);
        let ee = arm.end_effector(&[0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(ee.x, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ee.y, 0.0, epsilon = 1e-15);
        // right angle at the first joint
        let ee = arm.end_effector(&[PI / 2.0, 0.0, 0.0]);
        assert_abs_diff_eq!(ee.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ee.y, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ee.theta, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn compose_then_inverse_offsets() {
        let a = Pose2::new(1.0, 2.0, 0.5);
        let b = Pose2::new(-0.3, 0.7, -1.1);
        let c = a.compose(&b);
        // undoing b's rotation restores a's heading
        let back = c.compose(&Pose2::new(0.0, 0.0, -b.theta));
        assert_abs_diff_eq!(back.theta, a.theta, epsilon = 1e-12);
        let p = a.apply([b.x, b.y]);
        assert_abs_diff_eq!(p[0], c.x, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], c.y, epsilon = 1e-12);
    }
}
