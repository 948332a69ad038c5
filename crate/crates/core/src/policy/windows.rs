//! Sliding-window dataset construction and z-score normalization.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointVector, JOINT_COUNT};
use crate::trajectory::JointTrajectory;

pub const NORM_EPSILON: f64 = 1e-8;

/// Width of the policy input for a given history length.
pub fn input_dim(history_len: usize) -> usize {
    history_len * JOINT_COUNT + 1
}

/// Flattens a history (oldest first) and appends the scaled distance.
pub fn features(history: &[JointVector], distance_m: f64, distance_scale: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(input_dim(history.len()));
    for q in history {
        x.extend_from_slice(q);
    }
    x.push(distance_scale * distance_m);
    x
}

/// Input/target pairs for one trajectory, stacked as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl Windows {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds one pair per frame `t` in `[H, T)`: the `H` preceding frames plus
/// distance as input, and the absolute configuration at `t` as target.
pub fn build_windows(
    traj: &JointTrajectory,
    history_len: usize,
    distance_m: f64,
    distance_scale: f64,
) -> Result<Windows> {
    if history_len == 0 {
        return Err(Error::InvalidArgument("history length must be at least 1".into()));
    }
    let t_len = traj.len();
    if t_len <= history_len {
        return Err(Error::InsufficientData { needed: history_len + 1, got: t_len });
    }
    let n = t_len - history_len;
    let dim = input_dim(history_len);
    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n * JOINT_COUNT);
    for t in history_len..t_len {
        xs.extend(features(&traj.q[t - history_len..t], distance_m, distance_scale));
        ys.extend_from_slice(&traj.q[t]);
    }
    Ok(Windows {
        x: Array2::from_shape_vec((n, dim), xs).expect("row-major window buffer"),
        y: Array2::from_shape_vec((n, JOINT_COUNT), ys).expect("row-major target buffer"),
    })
}

/// Per-dimension mean and population standard deviation of inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu_x: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub epsilon: f64,
}

fn column_stats(m: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows() as f64;
    let mut mu = Vec::with_capacity(m.ncols());
    let mut sigma = Vec::with_capacity(m.ncols());
    for col in m.axis_iter(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        mu.push(mean);
        sigma.push(var.sqrt());
    }
    (mu, sigma)
}

fn scale_in_place(mut row: ArrayViewMut1<f64>, mu: &[f64], sigma: &[f64], eps: f64) {
    for ((v, m), s) in row.iter_mut().zip(mu).zip(sigma) {
        *v = (*v - m) / (s + eps);
    }
}

impl NormStats {
    pub fn fit(x: &Array2<f64>, y: &Array2<f64>) -> Result<Self> {
        if x.nrows() < 2 || x.nrows() != y.nrows() {
            return Err(Error::InsufficientData { needed: 2, got: x.nrows().min(y.nrows()) });
        }
        let (mu_x, sigma_x) = column_stats(x);
        let (mu_y, sigma_y) = column_stats(y);
        Ok(Self { mu_x, sigma_x, mu_y, sigma_y, epsilon: NORM_EPSILON })
    }

    pub fn input_dim(&self) -> usize {
        self.mu_x.len()
    }

    pub fn output_dim(&self) -> usize {
        self.mu_y.len()
    }

    pub fn normalize_x(&self, x: &mut Array2<f64>) {
        for row in x.axis_iter_mut(Axis(0)) {
            scale_in_place(row, &self.mu_x, &self.sigma_x, self.epsilon);
        }
    }

    pub fn normalize_y(&self, y: &mut Array2<f64>) {
        for row in y.axis_iter_mut(Axis(0)) {
            scale_in_place(row, &self.mu_y, &self.sigma_y, self.epsilon);
        }
    }

    /// Inverse of [`normalize_y`](Self::normalize_y), including the epsilon.
    pub fn denormalize_y(&self, y: ArrayView1<f64>) -> Vec<f64> {
        y.iter()
            .zip(&self.mu_y)
            .zip(&self.sigma_y)
            .map(|((v, m), s)| v * (s + self.epsilon) + m)
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let all = self.mu_x.iter().chain(&self.sigma_x).chain(&self.mu_y).chain(&self.sigma_y);
        if self.mu_x.len() != self.sigma_x.len() || self.mu_y.len() != self.sigma_y.len() {
            return Err(Error::Contract("normalization vectors differ in length".into()));
        }
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Contract("normalization statistics are not finite".into()));
        }
        if self.sigma_x.iter().chain(&self.sigma_y).any(|s| *s < 0.0) {
            return Err(Error::Contract("negative standard deviation".into()));
        }
        Ok(())
    }
}
