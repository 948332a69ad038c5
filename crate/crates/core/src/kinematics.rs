//! Forward kinematics of the controlled four-joint arm segment.
//!
//! The chain is a serial list of revolute joints. Each joint rotates about its
//! own axis and then applies a fixed link translation, so the frame after
//! joint `i` is `T_i = T_{i-1} * Rot(axis_i, q_i) * Trans(offset_i)`. The pencil
//! tip sits at `tool_offset` in the last frame.

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::JointTrajectory;

pub const JOINT_COUNT: usize = 4;

/// Joint angles in radians, canonical order pitch, roll, yaw, elbow.
pub type JointVector = [f64; JOINT_COUNT];

/// Canonical joint names, in the order every trajectory is stored.
pub const PREFERRED_JOINTS: [&str; JOINT_COUNT] = [
    "LeftShoulderPitch",
    "LeftShoulderRoll",
    "LeftShoulderYaw",
    "LeftElbow",
];

const AXIS_NORM_TOLERANCE: f64 = 1e-12;
const MIN_TOTAL_REACH_M: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevoluteJoint {
    pub name: String,
    /// Unit rotation axis in the parent frame.
    pub axis: [f64; 3],
    /// Link translation applied after the rotation, meters.
    pub offset: [f64; 3],
    /// Lower and upper angle limits, radians.
    #[serde(default = "default_limits")]
    pub limits: [f64; 2],
}

fn default_limits() -> [f64; 2] {
    [-std::f64::consts::PI, std::f64::consts::PI]
}

/// Rigid transform of the shoulder in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BasePose {
    pub translation: [f64; 3],
    /// Roll, pitch, yaw in radians (extrinsic x, y, z).
    pub rotation_rpy: [f64; 3],
}

impl BasePose {
    pub fn isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rotation_rpy;
        let [tx, ty, tz] = self.translation;
        Isometry3::from_parts(
            Translation3::new(tx, ty, tz),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let (r, p, y) = iso.rotation.euler_angles();
        let t = iso.translation.vector;
        BasePose {
            translation: [t.x, t.y, t.z],
            rotation_rpy: [r, p, y],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub joints: Vec<RevoluteJoint>,
    #[serde(default)]
    pub base: BasePose,
    pub tool_offset: [f64; 3],
}

impl Default for KinematicChain {
    /// Upper arm 0.22 m, forearm 0.20 m, pencil 0.15 m along the forearm.
    ///
    /// World frame: x forward, y left, z up. At `q = 0` the arm hangs straight
    /// down, so the home tip is at `(0, 0, -0.57)`.
    fn default() -> Self {
        let joint = |name: &str, axis: [f64; 3], offset: [f64; 3]| RevoluteJoint {
            name: name.to_string(),
            axis,
            offset,
            limits: default_limits(),
        };
        KinematicChain {
            joints: vec![
                joint(PREFERRED_JOINTS[0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]),
                joint(PREFERRED_JOINTS[1], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
                joint(PREFERRED_JOINTS[2], [0.0, 0.0, 1.0], [0.0, 0.0, -0.22]),
                joint(PREFERRED_JOINTS[3], [0.0, 1.0, 0.0], [0.0, 0.0, -0.20]),
            ],
            base: BasePose::default(),
            tool_offset: [0.0, 0.0, -0.15],
        }
    }
}

fn finite3(v: &[f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl KinematicChain {
    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != JOINT_COUNT {
            return Err(Error::validation(
                "chain.joints",
                format!("expected {JOINT_COUNT} joints, got {}", self.joints.len()),
            ));
        }
        for (i, (joint, expected)) in self.joints.iter().zip(PREFERRED_JOINTS).enumerate() {
            let field = format!("chain.joints[{i}]");
            if joint.name != expected {
                return Err(Error::validation(
                    field,
                    format!("expected joint `{expected}`, got `{}`", joint.name),
                ));
            }
            if !finite3(&joint.axis) || (norm3(&joint.axis) - 1.0).abs() > AXIS_NORM_TOLERANCE {
                return Err(Error::validation(field, "rotation axis must have unit norm"));
            }
            if !finite3(&joint.offset) {
                return Err(Error::validation(field, "link offset must be finite"));
            }
            let [lo, hi] = joint.limits;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::validation(field, "joint limits must satisfy lo < hi"));
            }
        }
        if !finite3(&self.tool_offset) || !finite3(&self.base.translation) {
            return Err(Error::validation("chain", "tool offset and base must be finite"));
        }
        if !self.base.rotation_rpy.iter().all(|x| x.is_finite()) {
            return Err(Error::validation("chain.base", "rotation must be finite"));
        }
        let reach = self.total_reach();
        if reach <= MIN_TOTAL_REACH_M {
            return Err(Error::validation(
                "chain",
                format!("total reach {reach:.3} m must exceed {MIN_TOTAL_REACH_M} m"),
            ));
        }
        Ok(())
    }

    /// Sum of link offset norms plus the tool offset norm.
    pub fn total_reach(&self) -> f64 {
        self.joints.iter().map(|j| norm3(&j.offset)).sum::<f64>() + norm3(&self.tool_offset)
    }

    /// Returns true when every angle is finite and inside the joint limits.
    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(a, j)| a.is_finite() && *a >= j.limits[0] && *a <= j.limits[1])
    }

    /// World-frame transform after each joint; index 0 is the base.
    pub fn link_frames(&self, q: &JointVector) -> Result<[Isometry3<f64>; JOINT_COUNT + 1]> {
        check_finite(q)?;
        let mut frames = [Isometry3::identity(); JOINT_COUNT + 1];
        frames[0] = self.base.isometry();
        for (i, (joint, angle)) in self.joints.iter().zip(q).enumerate() {
            let axis = Unit::new_normalize(Vector3::from(joint.axis));
            let rot = UnitQuaternion::from_axis_angle(&axis, *angle);
            let [ox, oy, oz] = joint.offset;
            let local = Isometry3::from_parts(Translation3::identity(), rot)
                * Isometry3::translation(ox, oy, oz);
            frames[i + 1] = frames[i] * local;
        }
        Ok(frames)
    }

    /// World-frame origins of the base and each link frame.
    pub fn link_origins(&self, q: &JointVector) -> Result<[Point3<f64>; JOINT_COUNT + 1]> {
        let frames = self.link_frames(q)?;
        Ok(frames.map(|f| f * Point3::origin()))
    }

    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Point3<f64>> {
        let frames = self.link_frames(q)?;
        Ok(frames[JOINT_COUNT] * Point3::from(self.tool_offset))
    }

    /// Euclidean distance between the pencil tips of two configurations.
    pub fn task_distance(&self, q_a: &JointVector, q_b: &JointVector) -> Result<f64> {
        let a = self.forward_kinematics(q_a)?;
        let b = self.forward_kinematics(q_b)?;
        Ok((a - b).norm())
    }

    /// Horizontal distance from the shoulder to the tip, divided by total reach.
    pub fn horizontal_extension(&self, q: &JointVector) -> Result<f64> {
        let tip = self.forward_kinematics(q)?;
        let shoulder = self.base.isometry() * Point3::origin();
        let d = tip - shoulder;
        Ok((d.x * d.x + d.y * d.y).sqrt() / self.total_reach())
    }
}

fn check_finite(q: &JointVector) -> Result<()> {
    if q.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "joint vector contains non-finite values: {q:?}"
        )))
    }
}

/// How the per-joint velocity vector is reduced to a scalar speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedNorm {
    #[default]
    L2,
    MaxAbs,
}

impl SpeedNorm {
    pub fn apply(self, v: &JointVector) -> f64 {
        match self {
            SpeedNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            SpeedNorm::MaxAbs => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// Finite-difference joint velocity at `index`: central in the interior,
/// one-sided at the two ends.
pub fn joint_velocity(traj: &JointTrajectory, index: usize) -> Result<JointVector> {
    let q = &traj.q;
    let n = q.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if index >= n {
        return Err(Error::InvalidArgument(format!(
            "frame index {index} out of range for {n} frames"
        )));
    }
    let (lo, hi, span) = if index == 0 {
        (0, 1, traj.dt)
    } else if index == n - 1 {
        (n - 2, n - 1, traj.dt)
    } else {
        (index - 1, index + 1, 2.0 * traj.dt)
    };
    let mut v = [0.0; JOINT_COUNT];
    for (j, vj) in v.iter_mut().enumerate() {
        *vj = (q[hi][j] - q[lo][j]) / span;
    }
    Ok(v)
}

/// L2 norm of the finite-difference joint velocity, rad/s.
pub fn joint_speed(traj: &JointTrajectory, index: usize) -> Result<f64> {
    Ok(SpeedNorm::L2.apply(&joint_velocity(traj, index)?))
}

/// Speeds at every frame under the chosen norm.
pub fn joint_speeds(traj: &JointTrajectory, norm: SpeedNorm) -> Result<Vec<f64>> {
    (0..traj.q.len())
        .map(|i| joint_velocity(traj, i).map(|v| norm.apply(&v)))
        .collect()
}
