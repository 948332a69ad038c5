//! Open-loop autoregressive deployment against the kinematic chain.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointVector, KinematicChain, JOINT_COUNT};
use crate::policy::PolicyBundle;
use crate::trajectory::JointTrajectory;

/// Anything that maps a joint history to the next configuration.
pub trait Policy {
    fn history_len(&self) -> usize;

    /// `step` counts predictions since hand-off, starting at 1.
    fn predict(&self, history: &[JointVector], distance_m: f64, step: usize) -> Result<JointVector>;
}

impl Policy for PolicyBundle {
    fn history_len(&self) -> usize {
        self.config.history_len
    }

    fn predict(&self, history: &[JointVector], distance_m: f64, _step: usize) -> Result<JointVector> {
        PolicyBundle::predict(self, history, distance_m)
    }
}

/// Plays back a recorded trajectory from a given hand-off frame, then holds
/// the final frame. Useful as a reference policy that ignores its input.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    pub frames: Vec<JointVector>,
    pub handoff: usize,
    pub history_len: usize,
}

impl Policy for ReplayPolicy {
    fn history_len(&self) -> usize {
        self.history_len
    }

    fn predict(&self, _history: &[JointVector], _distance_m: f64, step: usize) -> Result<JointVector> {
        let last = self.frames.len().saturating_sub(1);
        self.frames
            .get((self.handoff + step - 1).min(last))
            .copied()
            .ok_or_else(|| Error::Contract("replay policy has no frames".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SuccessRule {
    /// Euclidean distance from the tip to the target within the radius.
    #[default]
    Radius,
    /// Tip inside a square of side `2 * success_radius_m` centred on the
    /// target in the horizontal (x, y) plane; height is not checked.
    Square,
}

/// Joint bias proportional to how far the arm reaches out horizontally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Disturbance {
    pub gain: JointVector,
}

impl Disturbance {
    pub fn apply(&self, chain: &KinematicChain, q_hat: &JointVector) -> Result<JointVector> {
        apply_disturbance(chain, q_hat, self)
    }
}

/// `q = q_hat - gain * extension(q_hat)` with extension the normalized
/// horizontal reach of the tip.
pub fn apply_disturbance(
    chain: &KinematicChain,
    q_hat: &JointVector,
    model: &Disturbance,
) -> Result<JointVector> {
    let ext = chain.horizontal_extension(q_hat)?;
    let mut q = *q_hat;
    for j in 0..JOINT_COUNT {
        q[j] -= model.gain[j] * ext;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub success_radius_m: f64,
    /// Chosen by the analysis settings of an experiment, so it is not read
    /// from the rollout block.
    #[serde(skip)]
    pub success_rule: SuccessRule,
    pub sample_rate_hz: f64,
    pub warm_start_s: f64,
    /// Timeout is `timeout_factor * T_human + timeout_margin_steps`, with
    /// `T_human` the demonstration's frame count.
    pub timeout_factor: usize,
    pub timeout_margin_steps: usize,
    pub disturbance: Option<Disturbance>,
    /// Keep predicting after success until the timeout. The reported success
    /// step is still the first one.
    pub continue_after_success: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            success_radius_m: 0.01,
            success_rule: SuccessRule::Radius,
            sample_rate_hz: 50.0,
            warm_start_s: 0.2,
            timeout_factor: 2,
            timeout_margin_steps: 50,
            disturbance: None,
            continue_after_success: false,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_radius_m > 0.0 && self.success_radius_m.is_finite()) {
            return Err(Error::validation("rollout.success_radius_m", "must be positive"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::validation("rollout.sample_rate_hz", "must be positive"));
        }
        if !(self.warm_start_s > 0.0 && self.warm_start_s.is_finite()) {
            return Err(Error::validation("rollout.warm_start_s", "must be positive"));
        }
        if let Some(d) = &self.disturbance {
            if d.gain.iter().any(|g| !g.is_finite()) {
                return Err(Error::validation("rollout.disturbance.gain", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn warm_start_frames(&self) -> usize {
        (self.warm_start_s * self.sample_rate_hz).round() as usize
    }

    pub fn timeout_steps(&self, human_frames: usize) -> usize {
        self.timeout_factor * human_frames + self.timeout_margin_steps
    }

    fn succeeded(&self, tip: &Point3<f64>, target: &Point3<f64>) -> bool {
        match self.success_rule {
            SuccessRule::Radius => (tip - target).norm() <= self.success_radius_m,
            SuccessRule::Square => {
                (tip.x - target.x).abs() <= self.success_radius_m
                    && (tip.y - target.y).abs() <= self.success_radius_m
            }
        }
    }
}

/// The last `history_len` frames of the warm-start window.
pub fn init_history(demo: &JointTrajectory, warm_frames: usize, history_len: usize) -> Result<Vec<JointVector>> {
    if warm_frames < history_len {
        return Err(Error::InsufficientWarmStart { needed: history_len, available: warm_frames });
    }
    if demo.len() < warm_frames {
        return Err(Error::InsufficientWarmStart { needed: warm_frames, available: demo.len() });
    }
    Ok(demo.q[warm_frames - history_len..warm_frames].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    Timeout,
    /// The policy produced a non-finite configuration.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Warm-start frames followed by one frame per prediction.
    pub trajectory: JointTrajectory,
    /// Tip position for every frame of `trajectory`.
    pub tip_path: Vec<[f64; 3]>,
    pub warm_frames: usize,
    pub steps: usize,
    pub success: bool,
    pub success_step: Option<usize>,
    pub movement_time_s: Option<f64>,
    pub termination: Termination,
    /// Steps spent within twice the success radius without succeeding.
    pub orbit_steps: usize,
    pub min_distance_m: f64,
}

impl RolloutResult {
    /// Predicted frames only, aligned with demo frames from the hand-off on.
    pub fn predicted(&self) -> &[JointVector] {
        &self.trajectory.q[self.warm_frames..]
    }
}

/// Runs `policy` open loop from the demo's warm start until success or the
/// timeout. Each prediction becomes the newest history frame.
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    chain: &KinematicChain,
    demo: &JointTrajectory,
    target: &Point3<f64>,
    cfg: &RolloutConfig,
) -> Result<RolloutResult> {
    cfg.validate()?;
    if !target.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("target is not finite".into()));
    }
    let h = policy.history_len();
    let warm = cfg.warm_start_frames();
    let mut history = init_history(demo, warm, h)?;
    let timeout = cfg.timeout_steps(demo.len());

    let mut q: Vec<JointVector> = demo.q[..warm].to_vec();
    let mut tips = Vec::with_capacity(warm + timeout);
    for frame in &q {
        tips.push(chain.forward_kinematics(frame)?.coords.into());
    }
    let mut success_step = None;
    let mut orbit_steps = 0;
    let mut min_distance = f64::INFINITY;
    let mut termination = Termination::Timeout;
    let mut steps = 0;

    for step in 1..=timeout {
        let q_hat = policy.predict(&history, demo.distance_m, step)?;
        if q_hat.iter().any(|v| !v.is_finite()) {
            termination = Termination::Diverged;
            break;
        }
        let next = match &cfg.disturbance {
            Some(d) => d.apply(chain, &q_hat)?,
            None => q_hat,
        };
        history.remove(0);
        history.push(next);
        q.push(next);
        steps = step;
        let tip = chain.forward_kinematics(&next)?;
        tips.push(tip.coords.into());
        let dist = (tip - target).norm();
        min_distance = min_distance.min(dist);
        if success_step.is_none() {
            if cfg.succeeded(&tip, target) {
                success_step = Some(step);
                termination = Termination::Success;
                if !cfg.continue_after_success {
                    break;
                }
            } else if dist <= 2.0 * cfg.success_radius_m {
                orbit_steps += 1;
            }
        }
    }

    let mut trajectory = JointTrajectory::from_frames(q, 1.0 / cfg.sample_rate_hz, demo.distance_m, demo.width_m);
    trajectory.joint_names = demo.joint_names.clone();
    Ok(RolloutResult {
        trajectory,
        tip_path: tips,
        warm_frames: warm,
        steps,
        success: success_step.is_some(),
        success_step,
        movement_time_s: success_step.map(|s| s as f64 / cfg.sample_rate_hz),
        termination,
        orbit_steps,
        min_distance_m: min_distance,
    })
}
