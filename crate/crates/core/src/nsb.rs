//! Null-space based behavioural control.
//!
//! Each elementary behaviour is a task function `σ = f(p)` of the robot
//! position with Jacobian `J = ∂f/∂p`. A task asks for the velocity
//! `v = J†(σ̇_d + Λ(σ_d − σ))`; tasks are composed in priority order, every
//! lower-priority velocity being projected onto the null space of the stacked
//! Jacobians above it so that it cannot disturb them.
//!
//! Task spaces here are one- or two-dimensional and the configuration space
//! is the plane, so every inverse is a closed-form 1×1 or 2×2 one.

use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default damping used once a task Jacobian gets close to singular.
pub const DEFAULT_DAMPING: f64 = 1e-3;
/// Smallest eigenvalue of `JJᵀ` below which damping is switched on.
pub const DAMPING_ACTIVATION: f64 = 1e-6;
/// Below this eigenvalue an undamped inverse is refused.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;
/// Minimum robot-to-reference distance for distance-type tasks.
pub const POSITION_EPSILON: f64 = 1e-6;

/// A 2×2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    Vec2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NsbError {
    #[error("task Jacobian is singular and no damping was configured")]
    SingularTask,
    #[error("robot is within {eps} m of the task reference point; direction undefined")]
    DegeneratePosition { eps: f64 },
    #[error("no tasks to compose")]
    EmptyTaskList,
    #[error("unsupported task dimension {0} (expected 1 or 2 rows)")]
    InvalidDimension(usize),
    #[error("invalid task request: {0}")]
    InvalidTask(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DistanceFromPoint,
    EqualDistance,
    MoveToGoal,
    ObstacleAvoid,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::DistanceFromPoint => "distance",
            TaskKind::EqualDistance => "equal_distance",
            TaskKind::MoveToGoal => "goal",
            TaskKind::ObstacleAvoid => "obstacle",
        }
    }
}

/// One prioritized elementary behaviour.
///
/// `p1` is the reference point (goal for [`TaskKind::MoveToGoal`], obstacle
/// point for [`TaskKind::ObstacleAvoid`]); `p2` is only read by
/// [`TaskKind::EqualDistance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskRequest {
    pub kind: TaskKind,
    pub p1: Vec2,
    pub p2: Vec2,
    pub desired_distance: f64,
    pub gain: f64,
}

impl TaskRequest {
    pub fn distance_from(point: Vec2, desired_distance: f64, gain: f64) -> Self {
        Self {
            kind: TaskKind::DistanceFromPoint,
            p1: point,
            p2: Vec2::ZERO,
            desired_distance,
            gain,
        }
    }

    pub fn equal_distance(p1: Vec2, p2: Vec2, gain: f64) -> Self {
        Self {
            kind: TaskKind::EqualDistance,
            p1,
            p2,
            desired_distance: 0.0,
            gain,
        }
    }

    pub fn move_to(goal: Vec2, gain: f64) -> Self {
        Self {
            kind: TaskKind::MoveToGoal,
            p1: goal,
            p2: Vec2::ZERO,
            desired_distance: 0.0,
            gain,
        }
    }

    pub fn avoid(obstacle: Vec2, safe_distance: f64, gain: f64) -> Self {
        Self {
            kind: TaskKind::ObstacleAvoid,
            p1: obstacle,
            p2: Vec2::ZERO,
            desired_distance: safe_distance,
            gain,
        }
    }

    /// Reference points the task actually reads.
    pub fn reference_points(&self) -> Vec<Vec2> {
        match self.kind {
            TaskKind::EqualDistance => vec![self.p1, self.p2],
            _ => vec![self.p1],
        }
    }
}

/// Evaluated task: value, Jacobian rows, and the regulation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEval {
    pub value: Vec<f64>,
    pub jacobian: Vec<[f64; 2]>,
    pub desired_value: Vec<f64>,
    pub desired_rate: Vec<f64>,
    /// Diagonal of the gain matrix Λ.
    pub gain: Vec<f64>,
}

impl TaskEval {
    pub fn dim(&self) -> usize {
        self.value.len()
    }

    /// Task error σ̃ = σ_d − σ.
    pub fn error(&self) -> Vec<f64> {
        self.desired_value
            .iter()
            .zip(&self.value)
            .map(|(d, v)| d - v)
            .collect()
    }

    fn check(&self) -> Result<(), NsbError> {
        let m = self.value.len();
        if m == 0 || m > 2 {
            return Err(NsbError::InvalidDimension(m));
        }
        if self.jacobian.len() != m
            || self.desired_value.len() != m
            || self.desired_rate.len() != m
            || self.gain.len() != m
        {
            return Err(NsbError::InvalidTask("mismatched task dimensions"));
        }
        if self.gain.iter().any(|g| !(*g > 0.0)) {
            return Err(NsbError::InvalidTask("gain must be strictly positive"));
        }
        Ok(())
    }
}

/// Eigenvalues (descending) of a symmetric 2×2 matrix.
fn sym_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    (mean + r, mean - r)
}

/// Gram matrix `JJᵀ` (m×m, m ≤ 2) and its smallest eigenvalue.
fn row_gram(j: &[[f64; 2]]) -> (Mat2, f64) {
    let dot = |u: &[f64; 2], v: &[f64; 2]| u[0] * v[0] + u[1] * v[1];
    match j.len() {
        1 => {
            let g = dot(&j[0], &j[0]);
            ([[g, 0.0], [0.0, 0.0]], g)
        }
        _ => {
            let a = dot(&j[0], &j[0]);
            let b = dot(&j[0], &j[1]);
            let c = dot(&j[1], &j[1]);
            ([[a, b], [b, c]], sym_eigenvalues(a, b, c).1)
        }
    }
}

/// Damped pseudo-inverse `Jᵀ(JJᵀ + damping²·I)⁻¹` of an m×2 Jacobian.
///
/// The result is returned as its `m` columns, each a planar vector. With
/// `damping == 0` a Gram matrix whose smallest eigenvalue is below
/// [`SINGULAR_TOLERANCE`] is rejected with [`NsbError::SingularTask`].
pub fn damped_pinv(j: &[[f64; 2]], damping: f64) -> Result<Vec<Vec2>, NsbError> {
    let m = j.len();
    if m == 0 || m > 2 {
        return Err(NsbError::InvalidDimension(m));
    }
    if !(damping >= 0.0) {
        return Err(NsbError::InvalidTask("damping must be non-negative"));
    }
    let (g, min_eig) = row_gram(j);
    if damping == 0.0 && min_eig < SINGULAR_TOLERANCE {
        return Err(NsbError::SingularTask);
    }
    let d2 = damping * damping;
    let row = |r: &[f64; 2]| Vec2::new(r[0], r[1]);
    if m == 1 {
        let inv = 1.0 / (g[0][0] + d2);
        return Ok(vec![row(&j[0]) * inv]);
    }
    let (a, b, c) = (g[0][0] + d2, g[0][1], g[1][1] + d2);
    let det = a * c - b * b;
    let inv = [[c / det, -b / det], [-b / det, a / det]];
    // Column k of Jᵀ·inv is Σ_i J_iᵀ · inv[i][k].
    Ok((0..2)
        .map(|k| row(&j[0]) * inv[0][k] + row(&j[1]) * inv[1][k])
        .collect())
}

/// Pseudo-inverse with damping engaged only near singularities.
fn adaptive_pinv(j: &[[f64; 2]], damping: f64) -> Result<Vec<Vec2>, NsbError> {
    let m = j.len();
    if m == 0 || m > 2 {
        return Err(NsbError::InvalidDimension(m));
    }
    let (_, min_eig) = row_gram(j);
    if min_eig >= DAMPING_ACTIVATION || damping == 0.0 {
        damped_pinv(j, 0.0)
    } else {
        damped_pinv(j, damping)
    }
}

/// Null-space projector `I − J†J` of a stack of Jacobian rows.
///
/// `J†J` is the orthogonal projector onto the row space of the stack, so it
/// is built from the eigendecomposition of the 2×2 matrix `JᵀJ`; this handles
/// stacks with more rows than columns. Directions whose eigenvalue falls
/// below [`DAMPING_ACTIVATION`] are weighted `λ/(λ + damping²)` instead of
/// one, i.e. the damped inverse is used only along ill-conditioned directions.
pub fn null_projector(j_stack: &[[f64; 2]], damping: f64) -> Mat2 {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for r in j_stack {
        a += r[0] * r[0];
        b += r[0] * r[1];
        c += r[1] * r[1];
    }
    let (l1, l2) = sym_eigenvalues(a, b, c);
    // Eigenvector of the larger eigenvalue; pick the better conditioned form.
    let e1 = if b.abs() < f64::MIN_POSITIVE && (a - c).abs() < f64::MIN_POSITIVE {
        Vec2::new(1.0, 0.0)
    } else if b == 0.0 {
        if a >= c {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(0.0, 1.0)
        }
    } else {
        let u = Vec2::new(l1 - c, b);
        let w = Vec2::new(b, l1 - a);
        let v = if u.norm_sq() >= w.norm_sq() { u } else { w };
        v * (1.0 / v.norm())
    };
    let e2 = Vec2::new(-e1.y, e1.x);
    let weight = |l: f64| {
        if l >= DAMPING_ACTIVATION {
            1.0
        } else if damping > 0.0 {
            let l = l.max(0.0);
            l / (l + damping * damping)
        } else if l >= SINGULAR_TOLERANCE {
            1.0
        } else {
            0.0
        }
    };
    let (w1, w2) = (weight(l1), weight(l2));
    let mut n = IDENTITY;
    for (w, e) in [(w1, e1), (w2, e2)] {
        n[0][0] -= w * e.x * e.x;
        n[0][1] -= w * e.x * e.y;
        n[1][0] -= w * e.y * e.x;
        n[1][1] -= w * e.y * e.y;
    }
    n
}

/// Evaluates a task at position `p` with the default position epsilon.
pub fn eval_task(req: &TaskRequest, p: Vec2) -> Result<TaskEval, NsbError> {
    eval_task_eps(req, p, POSITION_EPSILON)
}

pub fn eval_task_eps(req: &TaskRequest, p: Vec2, eps_pos: f64) -> Result<TaskEval, NsbError> {
    if !(req.gain > 0.0) || !req.gain.is_finite() {
        return Err(NsbError::InvalidTask("gain must be strictly positive"));
    }
    if !(req.desired_distance >= 0.0) {
        return Err(NsbError::InvalidTask(
            "desired distance must be non-negative",
        ));
    }
    match req.kind {
        TaskKind::DistanceFromPoint | TaskKind::ObstacleAvoid => {
            let r = p - req.p1;
            let dist = r.norm();
            if dist <= eps_pos {
                return Err(NsbError::DegeneratePosition { eps: eps_pos });
            }
            let unit = r * (1.0 / dist);
            Ok(TaskEval {
                value: vec![dist],
                jacobian: vec![[unit.x, unit.y]],
                desired_value: vec![req.desired_distance],
                desired_rate: vec![0.0],
                gain: vec![req.gain],
            })
        }
        TaskKind::EqualDistance => {
            let value = (p - req.p1).norm_sq() - (p - req.p2).norm_sq();
            let d = req.p2 - req.p1;
            Ok(TaskEval {
                value: vec![value],
                jacobian: vec![[2.0 * d.x, 2.0 * d.y]],
                desired_value: vec![0.0],
                desired_rate: vec![0.0],
                gain: vec![req.gain],
            })
        }
        TaskKind::MoveToGoal => Ok(TaskEval {
            value: vec![p.x, p.y],
            jacobian: vec![[1.0, 0.0], [0.0, 1.0]],
            desired_value: vec![req.p1.x, req.p1.y],
            desired_rate: vec![0.0, 0.0],
            gain: vec![req.gain, req.gain],
        }),
    }
}

/// Velocity requested by a single task acting alone.
pub fn task_velocity(eval: &TaskEval, damping: f64) -> Result<Vec2, NsbError> {
    eval.check()?;
    let pinv = adaptive_pinv(&eval.jacobian, damping)?;
    let err = eval.error();
    Ok(pinv.iter().enumerate().fold(Vec2::ZERO, |acc, (i, col)| {
        acc + *col * (eval.desired_rate[i] + eval.gain[i] * err[i])
    }))
}

/// Prioritized composition, highest priority first, saturated to `v_max`.
///
/// `v = v₁ + N₁,₁v₂ + N₁,₂v₃ + …` where `N₁,ₖ` projects onto the null space of
/// the Jacobians of tasks 1..k stacked.
pub fn compose(tasks: &[TaskEval], damping: f64, v_max: f64) -> Result<Vec2, NsbError> {
    Ok(compose_unsaturated(tasks, damping)?.saturate(v_max))
}

pub fn compose_unsaturated(tasks: &[TaskEval], damping: f64) -> Result<Vec2, NsbError> {
    let (first, rest) = tasks.split_first().ok_or(NsbError::EmptyTaskList)?;
    let mut v = task_velocity(first, damping)?;
    let mut stack: Vec<[f64; 2]> = first.jacobian.clone();
    for task in rest {
        let vi = task_velocity(task, damping)?;
        let n = null_projector(&stack, damping);
        v += mat_vec(&n, vi);
        stack.extend_from_slice(&task.jacobian);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn pinv_unit_row() {
        let p = damped_pinv(&[[1.0, 0.0]], 0.0).unwrap();
        assert_eq!(p, vec![Vec2::new(1.0, 0.0)]);
    }

    #[test]
    fn pinv_identity() {
        let p = damped_pinv(&[[1.0, 0.0], [0.0, 1.0]], 0.0).unwrap();
        assert_eq!(p, vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]);
    }

    #[test]
    fn pinv_three_four_five() {
        let j = [[0.6, 0.8]];
        let p = damped_pinv(&j, 0.0).unwrap();
        assert!(close(p[0].x, 0.6) && close(p[0].y, 0.8));
        // J·J† = 1
        assert!(close(j[0][0] * p[0].x + j[0][1] * p[0].y, 1.0));
    }

    #[test]
    fn pinv_singular_without_damping() {
        assert_eq!(damped_pinv(&[[0.0, 0.0]], 0.0), Err(NsbError::SingularTask));
        assert_eq!(
            damped_pinv(&[[1.0, 2.0], [2.0, 4.0]], 0.0),
            Err(NsbError::SingularTask)
        );
        let p = damped_pinv(&[[0.0, 0.0]], 1e-3).unwrap();
        assert_eq!(p[0], Vec2::ZERO);
    }

    #[test]
    fn pinv_bad_dimension() {
        assert_eq!(damped_pinv(&[], 0.0), Err(NsbError::InvalidDimension(0)));
        let j = [[1.0, 0.0]; 3];
        assert_eq!(damped_pinv(&j, 0.0), Err(NsbError::InvalidDimension(3)));
    }

    #[test]
    fn projector_examples() {
        let n = null_projector(&[[1.0, 0.0]], 0.0);
        assert_eq!(n, [[0.0, 0.0], [0.0, 1.0]]);
        let n = null_projector(&[[1.0, 0.0], [0.0, 1.0]], 0.0);
        for row in n {
            for v in row {
                assert!(v.abs() < 1e-15);
            }
        }
        let n = null_projector(&[[0.6, 0.8]], 0.0);
        let k = mat_vec(&n, Vec2::new(0.6, 0.8));
        assert!(k.norm() < 1e-12);
        let r = mat_vec(&n, Vec2::new(-0.8, 0.6));
        assert!((r - Vec2::new(-0.8, 0.6)).norm() < 1e-12);
    }

    #[test]
    fn projector_of_zero_stack_is_identity() {
        assert_eq!(null_projector(&[[0.0, 0.0]], 1e-3), IDENTITY);
        assert_eq!(null_projector(&[], 0.0), IDENTITY);
    }

    #[test]
    fn distance_task_example() {
        let req = TaskRequest::distance_from(Vec2::ZERO, 2.0, 1.0);
        let e = eval_task(&req, Vec2::new(3.0, 4.0)).unwrap();
        assert!(close(e.value[0], 5.0));
        assert!(close(e.jacobian[0][0], 0.6) && close(e.jacobian[0][1], 0.8));
        assert_eq!(e.desired_value, vec![2.0]);
        let v = task_velocity(&e, 0.0).unwrap();
        assert!((v - Vec2::new(-1.8, -2.4)).norm() < 1e-12);
    }

    #[test]
    fn equal_distance_midpoint() {
        let req = TaskRequest::equal_distance(Vec2::ZERO, Vec2::new(2.0, 0.0), 1.0);
        let e = eval_task(&req, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(e.value, vec![0.0]);
        assert_eq!(e.jacobian, vec![[4.0, 0.0]]);
        // Jacobian does not depend on p.
        let e2 = eval_task(&req, Vec2::new(-7.0, 3.0)).unwrap();
        assert_eq!(e.jacobian, e2.jacobian);
    }

    #[test]
    fn goal_task() {
        let at_goal = TaskRequest::move_to(Vec2::new(5.0, 5.0), 0.5);
        let e = eval_task(&at_goal, Vec2::new(5.0, 5.0)).unwrap();
        assert_eq!(e.error(), vec![0.0, 0.0]);
        assert_eq!(task_velocity(&e, 0.0).unwrap(), Vec2::ZERO);

        let req = TaskRequest::move_to(Vec2::new(1.0, 0.0), 0.5);
        let e = eval_task(&req, Vec2::ZERO).unwrap();
        assert_eq!(task_velocity(&e, 0.0).unwrap(), Vec2::new(0.5, 0.0));
    }

    #[test]
    fn degenerate_distance_task() {
        let req = TaskRequest::avoid(Vec2::new(1.0, 1.0), 0.5, 1.0);
        assert!(matches!(
            eval_task(&req, Vec2::new(1.0, 1.0)),
            Err(NsbError::DegeneratePosition { .. })
        ));
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(&[], 0.0, 1.0), Err(NsbError::EmptyTaskList));

        // Task 1 with J = [1 0] already satisfied.
        let t1 = TaskEval {
            value: vec![0.0],
            jacobian: vec![[1.0, 0.0]],
            desired_value: vec![0.0],
            desired_rate: vec![0.0],
            gain: vec![1.0],
        };
        let t2 = eval_task(&TaskRequest::move_to(Vec2::new(3.0, 4.0), 1.0), Vec2::ZERO).unwrap();
        let v = compose_unsaturated(&[t1.clone(), t2.clone()], 0.0).unwrap();
        assert!((v - Vec2::new(0.0, 4.0)).norm() < 1e-12);
        let v = compose(&[t1, t2.clone()], 0.0, 0.2).unwrap();
        assert!((v - Vec2::new(0.0, 0.2)).norm() < 1e-12);

        let single = compose(std::slice::from_ref(&t2), 0.0, 10.0).unwrap();
        assert_eq!(single, task_velocity(&t2, 0.0).unwrap());
    }

    #[test]
    fn damping_only_near_singularity() {
        // Well-conditioned: identical to the undamped inverse.
        let e = eval_task(
            &TaskRequest::equal_distance(Vec2::ZERO, Vec2::new(10.0, 0.0), 0.5),
            Vec2::new(3.0, 0.0),
        )
        .unwrap();
        assert_eq!(
            task_velocity(&e, 1e-3).unwrap(),
            task_velocity(&e, 0.0).unwrap()
        );
        // Coincident reference points: J = 0, damped velocity is zero.
        let e = eval_task(
            &TaskRequest::equal_distance(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0), 0.5),
            Vec2::new(3.0, 0.0),
        )
        .unwrap();
        assert_eq!(task_velocity(&e, 1e-3).unwrap(), Vec2::ZERO);
        assert_eq!(task_velocity(&e, 0.0), Err(NsbError::SingularTask));
    }
}
