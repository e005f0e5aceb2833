//! Analytic forward and inverse kinematics for six-axis arms with the
//! Universal Robots joint layout (shoulder offset, three parallel middle axes,
//! non-spherical wrist).
//!
//! The inverse solution enumerates the shoulder, elbow and wrist branches in
//! closed form, so a generic target yields eight joint configurations. A
//! weighted least-squares selector then picks the branch closest to the
//! previous configuration.

mod config;

pub use config::{load_robot_config, parse_robot_config, RobotConfigError};

use std::f64::consts::{PI, TAU};

use nalgebra::{Isometry3, Matrix3, Matrix4, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Wrist singularity threshold on `|sin q5|`.
pub const WRIST_SINGULAR_EPS: f64 = 1e-8;
/// Two solutions closer than this (wrapped L∞, radians) are considered equal.
pub const DUPLICATE_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target is outside the reachable set (near_singular = {near_singular})")]
    Unreachable { near_singular: bool },
    #[error("no candidate solutions to select from")]
    EmptyCandidates,
    #[error("selection weights must be finite, nonnegative and not all zero")]
    InvalidWeights,
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// One Denavit–Hartenberg row (standard convention: `Rz(θ) Tz(d) Tx(a) Rx(α)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub fn transform(&self, q: f64) -> Matrix4<f64> {
        let (st, ct) = (q + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Matrix4::new(
            ct, -st * ca, st * sa, self.a * ct, //
            st, ct * ca, -ct * sa, self.a * st, //
            0.0, sa, ca, self.d, //
            0.0, 0.0, 0.0, 1.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lo: f64,
    pub hi: f64,
}

impl JointLimit {
    pub fn contains(&self, q: f64) -> bool {
        q >= self.lo && q <= self.hi
    }
}

/// Arm geometry: six DH rows, joint limits and a tool-center offset along the
/// flange z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhModel {
    pub rows: [DhRow; 6],
    pub limits: [JointLimit; 6],
    /// Distance from the flange to the tool center point along flange z.
    pub tool_offset: f64,
}

impl DhModel {
    /// Manufacturer-published UR3 geometry, ±2π limits, no tool offset.
    pub fn ur3() -> Self {
        let a = [0.0, -0.24365, -0.21325, 0.0, 0.0, 0.0];
        let d = [0.1519, 0.0, 0.0, 0.11235, 0.08535, 0.0819];
        let alpha = [PI / 2.0, 0.0, 0.0, PI / 2.0, -PI / 2.0, 0.0];
        let rows = std::array::from_fn(|i| DhRow {
            a: a[i],
            d: d[i],
            alpha: alpha[i],
            theta_offset: 0.0,
        });
        DhModel {
            rows,
            limits: [JointLimit { lo: -TAU, hi: TAU }; 6],
            tool_offset: 0.0,
        }
    }

    pub fn with_tool_offset(mut self, offset: f64) -> Self {
        self.tool_offset = offset;
        self
    }

    /// Checks the structural assumptions the closed-form solver relies on.
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (i, l) in self.limits.iter().enumerate() {
            if !(l.lo < l.hi) {
                return Err(KinematicsError::InvalidModel(format!(
                    "joint {} limits lo ({}) must be below hi ({})",
                    i + 1,
                    l.lo,
                    l.hi
                )));
            }
        }
        let r = &self.rows;
        let near = |x: f64, y: f64| (x - y).abs() < 1e-9;
        let layout_ok = near(r[0].a, 0.0)
            && near(r[3].a, 0.0)
            && near(r[4].a, 0.0)
            && near(r[5].a, 0.0)
            && near(r[1].d, 0.0)
            && near(r[2].d, 0.0)
            && near(r[1].alpha, 0.0)
            && near(r[2].alpha, 0.0)
            && near(r[3].alpha, PI / 2.0)
            && near(r[4].alpha, -PI / 2.0)
            && near(r[5].alpha, 0.0)
            && near(r[0].alpha, PI / 2.0);
        if !layout_ok {
            return Err(KinematicsError::InvalidModel(
                "DH table does not match the UR joint layout".into(),
            ));
        }
        if r[1].a == 0.0 || r[2].a == 0.0 || r[5].d == 0.0 {
            return Err(KinematicsError::InvalidModel(
                "upper arm, forearm and wrist-3 lengths must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

impl Default for DhModel {
    fn default() -> Self {
        Self::ur3()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointConfig(pub [f64; 6]);

impl JointConfig {
    pub fn new(q: [f64; 6]) -> Self {
        JointConfig(q)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|q| q.is_finite())
    }

    /// Largest wrapped per-joint difference.
    pub fn wrapped_distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| wrap_angle(a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for JointConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Tool pose in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EePose {
    pub position: Vector3<f64>,
    pub orientation: Rotation3<f64>,
}

impl EePose {
    pub fn new(position: Vector3<f64>, orientation: Rotation3<f64>) -> Self {
        EePose {
            position,
            orientation,
        }
    }

    /// Builds a pose from a raw 3×3 matrix, rejecting non-rotations.
    pub fn from_matrix(position: Vector3<f64>, m: Matrix3<f64>) -> Option<Self> {
        let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
        if orth > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return None;
        }
        Some(EePose::new(position, Rotation3::from_matrix_unchecked(m)))
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.position),
            UnitQuaternion::from_rotation_matrix(&self.orientation),
        )
    }

    fn from_homogeneous(t: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
        EePose::new(
            Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]),
            Rotation3::from_matrix_unchecked(r),
        )
    }

    fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.orientation.matrix());
        t[(0, 3)] = self.position.x;
        t[(1, 3)] = self.position.y;
        t[(2, 3)] = self.position.z;
        t
    }

    /// Geodesic distance between orientations, radians.
    pub fn angle_to(&self, other: &EePose) -> f64 {
        let rel = self.orientation.transpose() * other.orientation;
        let c = ((rel.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        // acos is ill-conditioned near 0; use the skew part there.
        let m = rel.matrix();
        let s = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
            .norm()
            / 2.0;
        s.atan2(c)
    }
}

/// Weights of the joint-space least-squares selection cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights([f64; 6]);

impl SelectionWeights {
    pub fn new(w: [f64; 6]) -> Result<Self, KinematicsError> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().all(|x| *x == 0.0) {
            return Err(KinematicsError::InvalidWeights);
        }
        Ok(SelectionWeights(w))
    }

    pub fn as_array(&self) -> &[f64; 6] {
        &self.0
    }

    /// Weighted squared wrapped distance.
    pub fn cost(&self, q: &JointConfig, previous: &JointConfig) -> f64 {
        (0..6)
            .map(|i| {
                let d = wrap_angle(q.0[i] - previous.0[i]);
                self.0[i] * d * d
            })
            .sum()
    }
}

impl Default for SelectionWeights {
    /// Proximal joints are penalised harder so the heavy links stay steady.
    fn default() -> Self {
        SelectionWeights([6.0, 5.0, 4.0, 3.0, 2.0, 1.0])
    }
}

pub fn forward_kinematics(model: &DhModel, q: &JointConfig) -> EePose {
    let mut t = Matrix4::identity();
    for (row, qi) in model.rows.iter().zip(q.0.iter()) {
        t *= row.transform(*qi);
    }
    if model.tool_offset != 0.0 {
        t *= Matrix4::new_translation(&Vector3::new(0.0, 0.0, model.tool_offset));
    }
    EePose::from_homogeneous(&t)
}

/// Output of [`inverse_kinematics`].
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolutions {
    /// Up to eight configurations, ordered by (shoulder, elbow, wrist) branch.
    pub configs: Vec<JointConfig>,
    /// Set when at least one branch was dropped at the wrist singularity.
    pub near_singular: bool,
}

/// Closed-form inverse kinematics.
///
/// Branch indices are enumerated shoulder-major: `(shoulder, elbow, wrist)`
/// with each flag in `{0, 1}`. Infeasible branches (negative radicals, joint
/// limits, wrist singularity) are dropped; duplicates are removed keeping the
/// first occurrence.
pub fn inverse_kinematics(
    model: &DhModel,
    target: &EePose,
) -> Result<IkSolutions, KinematicsError> {
    let r = &model.rows;
    let a2 = r[1].a;
    let a3 = r[2].a;
    let d4 = r[3].d;
    let d6 = r[5].d;

    let mut t06 = target.to_homogeneous();
    if model.tool_offset != 0.0 {
        t06 *= Matrix4::new_translation(&Vector3::new(0.0, 0.0, -model.tool_offset));
    }
    // Solve on raw joint angles and add the theta offsets back at the end.
    let p06 = Vector3::new(t06[(0, 3)], t06[(1, 3)], t06[(2, 3)]);
    let z6 = Vector3::new(t06[(0, 2)], t06[(1, 2)], t06[(2, 2)]);
    let p05 = p06 - d6 * z6;

    let mut branches: [Option<[f64; 6]>; 8] = [None; 8];
    let mut near_singular = false;

    let rho = p05.x.hypot(p05.y);
    if rho < d4.abs() || rho == 0.0 {
        return Err(KinematicsError::Unreachable {
            near_singular: false,
        });
    }
    let phi = p05.y.atan2(p05.x);
    let psi = (d4 / rho).clamp(-1.0, 1.0).asin();
    let q1_branches = [phi + psi, phi + PI - psi];

    let raw_rows: [DhRow; 6] = std::array::from_fn(|i| DhRow {
        theta_offset: 0.0,
        ..r[i]
    });

    for (s, &q1) in q1_branches.iter().enumerate() {
        let (s1, c1) = q1.sin_cos();
        let c5 = (p06.x * s1 - p06.y * c1 - d4) / d6;
        let c5 = match clamp_unit(c5) {
            Some(c) => c,
            None => continue,
        };
        let q5_abs = c5.acos();
        // Joint-2 axis expressed in the flange frame gives q6.
        let z1 = Vector3::new(s1, -c1, 0.0);
        let rot06: Matrix3<f64> = t06.fixed_view::<3, 3>(0, 0).into_owned();
        let w = rot06.transpose() * z1;
        for (wb, q5) in [q5_abs, -q5_abs].into_iter().enumerate() {
            let s5 = q5.sin();
            if s5.abs() < WRIST_SINGULAR_EPS {
                near_singular = true;
                continue;
            }
            let q6 = (-w.y / s5).atan2(w.x / s5);
            let t01 = raw_rows[0].transform(q1);
            let t45 = raw_rows[4].transform(q5);
            let t56 = raw_rows[5].transform(q6);
            let t14 = match (t01.try_inverse(), (t45 * t56).try_inverse()) {
                (Some(i01), Some(i46)) => i01 * t06 * i46,
                _ => continue,
            };
            let px = t14[(0, 3)];
            let py = t14[(1, 3)];
            let c3 = (px * px + py * py - a2 * a2 - a3 * a3) / (2.0 * a2 * a3);
            let c3 = match clamp_unit(c3) {
                Some(c) => c,
                None => continue,
            };
            let q3_abs = c3.acos();
            for (eb, q3) in [q3_abs, -q3_abs].into_iter().enumerate() {
                let q2 = py.atan2(px) - (a3 * q3.sin()).atan2(a2 + a3 * q3.cos());
                let q4 = t14[(1, 0)].atan2(t14[(0, 0)]) - q2 - q3;
                let raw = [q1, q2, q3, q4, q5, q6];
                let q: [f64; 6] = std::array::from_fn(|i| raw[i] - r[i].theta_offset);
                branches[s * 4 + eb * 2 + wb] = Some(q);
            }
        }
    }

    let mut configs: Vec<JointConfig> = Vec::with_capacity(8);
    for q in branches.into_iter().flatten() {
        let Some(fitted) = fit_limits(model, &q) else {
            continue;
        };
        if configs
            .iter()
            .all(|c| c.wrapped_distance(&fitted) > DUPLICATE_EPS)
        {
            configs.push(fitted);
        }
    }
    if configs.is_empty() {
        return Err(KinematicsError::Unreachable { near_singular });
    }
    Ok(IkSolutions {
        configs,
        near_singular,
    })
}

/// Tolerates round-off just outside `[-1, 1]`.
fn clamp_unit(c: f64) -> Option<f64> {
    if !c.is_finite() || c.abs() > 1.0 + 1e-10 {
        None
    } else {
        Some(c.clamp(-1.0, 1.0))
    }
}

/// Wraps each joint into `(-π, π]` and shifts by ±2π where that is needed to
/// land inside the joint's limit interval.
fn fit_limits(model: &DhModel, q: &[f64; 6]) -> Option<JointConfig> {
    let mut out = [0.0; 6];
    for i in 0..6 {
        let w = wrap_angle(q[i]);
        let lim = model.limits[i];
        out[i] = [w, w + TAU, w - TAU]
            .into_iter()
            .find(|x| lim.contains(*x))?;
    }
    Some(JointConfig(out))
}

/// Picks the candidate with the smallest weighted wrapped distance to
/// `previous`. Ties go to the lowest index.
pub fn select_solution(
    candidates: &[JointConfig],
    previous: &JointConfig,
    weights: &SelectionWeights,
) -> Result<JointConfig, KinematicsError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let cost = weights.cost(c, previous);
        match best {
            Some((_, b)) if cost >= b => {}
            _ => best = Some((i, cost)),
        }
    }
    best.map(|(i, _)| candidates[i])
        .ok_or(KinematicsError::EmptyCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(rng: &mut ChaCha8Rng) -> JointConfig {
        JointConfig(std::array::from_fn(|_| rng.random_range(-PI..PI)))
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    // Golden value: straight product of the six UR3 DH matrices at q = 0.
    // At zero angles the arm is stretched along -x with the wrist folded:
    // x = a2 + a3, y = -(d4 + d6), z = d1 - d5.
    #[test]
    fn fk_zero_configuration_golden() {
        let pose = forward_kinematics(&DhModel::ur3(), &JointConfig::default());
        assert_relative_eq!(pose.position.x, -0.4569, epsilon = 1e-12);
        assert_relative_eq!(pose.position.y, -0.19425, epsilon = 1e-12);
        assert_relative_eq!(pose.position.z, 0.06655, epsilon = 1e-12);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(*pose.orientation.matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn fk_base_half_turn_mirrors_position() {
        let model = DhModel::ur3();
        let p0 = forward_kinematics(&model, &JointConfig::default()).position;
        let p1 = forward_kinematics(&model, &JointConfig([PI, 0.0, 0.0, 0.0, 0.0, 0.0])).position;
        assert_relative_eq!(p1.x, -p0.x, epsilon = 1e-12);
        assert_relative_eq!(p1.y, -p0.y, epsilon = 1e-12);
        assert_relative_eq!(p1.z, p0.z, epsilon = 1e-12);
    }

    #[test]
    fn fk_orientation_is_rotation() {
        let model = DhModel::ur3();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pose = forward_kinematics(&model, &random_q(&mut rng));
            let m = pose.orientation.matrix();
            for c in 0..3 {
                assert_relative_eq!(m.column(c).norm(), 1.0, epsilon = 1e-12);
            }
            assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ik_recovers_source_configuration() {
        let model = DhModel::ur3().with_tool_offset(0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = random_q(&mut rng);
            let target = forward_kinematics(&model, &q);
            let sols = inverse_kinematics(&model, &target).unwrap();
            assert!(sols.configs.len() <= 8);
            assert!(
                sols.configs.iter().any(|c| c.wrapped_distance(&q) < 1e-6),
                "source configuration {q:?} missing"
            );
            for c in &sols.configs {
                let p = forward_kinematics(&model, c);
                assert!((p.position - target.position).norm() <= 1e-6);
                assert!(p.angle_to(&target) <= 1e-6);
            }
        }
    }

    #[test]
    fn ik_far_target_unreachable() {
        let model = DhModel::ur3();
        let target = EePose::new(Vector3::new(3.0, 1.0, 0.5), Rotation3::identity());
        assert!(matches!(
            inverse_kinematics(&model, &target),
            Err(KinematicsError::Unreachable { .. })
        ));
    }

    #[test]
    fn ik_discards_singular_wrist_branches() {
        let model = DhModel::ur3();
        let q = JointConfig([0.3, -1.2, 1.0, -0.4, 0.0, 0.2]);
        let target = forward_kinematics(&model, &q);
        match inverse_kinematics(&model, &target) {
            Ok(sols) => {
                assert!(sols.near_singular);
                for c in &sols.configs {
                    assert!(c.0[4].sin().abs() >= WRIST_SINGULAR_EPS);
                }
            }
            Err(KinematicsError::Unreachable { near_singular }) => assert!(near_singular),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ik_respects_joint_limits() {
        let mut model = DhModel::ur3();
        model.limits[0] = JointLimit { lo: -0.5, hi: 0.5 };
        let q = JointConfig([0.2, -1.0, 1.2, -0.7, 1.1, 0.4]);
        let target = forward_kinematics(&model, &q);
        let sols = inverse_kinematics(&model, &target).unwrap();
        assert!(sols.configs.len() < 8);
        assert!(sols.configs.iter().all(|c| c.0[0].abs() <= 0.5));
    }

    #[test]
    fn select_returns_previous_when_present() {
        let prev = JointConfig([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let cands = vec![JointConfig([1.0; 6]), prev, JointConfig([-1.0; 6])];
        let got = select_solution(&cands, &prev, &SelectionWeights::default()).unwrap();
        assert_eq!(got, prev);
    }

    #[test]
    fn select_empty_is_error() {
        let r = select_solution(&[], &JointConfig::default(), &SelectionWeights::default());
        assert_eq!(r, Err(KinematicsError::EmptyCandidates));
    }

    #[test]
    fn select_wraps_across_pi() {
        let prev = JointConfig([PI - 0.05, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let across = JointConfig([-PI + 0.05, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let near_zero = JointConfig([2.8, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let got = select_solution(&[near_zero, across], &prev, &SelectionWeights::default());
        assert_eq!(got.unwrap(), across);
    }

    #[test]
    fn weights_validation() {
        assert!(SelectionWeights::new([0.0; 6]).is_err());
        assert!(SelectionWeights::new([1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(SelectionWeights::new([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn model_validation_rejects_bad_limits() {
        let mut m = DhModel::ur3();
        m.limits[2] = JointLimit { lo: 1.0, hi: 1.0 };
        assert!(m.validate().is_err());
        assert!(DhModel::ur3().validate().is_ok());
    }
}
