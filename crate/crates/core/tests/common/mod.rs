//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the code it checks, except for data types and the
//! generators that produce inputs.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use fitts_bench::demogen::{DemoGenerator, GeneratorConfig, SynthDemo};
use fitts_bench::kinematics::{JointVector, KinematicChain};
use fitts_bench::policy::{Mlp, PolicyConfig};
use fitts_bench::stats::RegressionModel;
use fitts_bench::trajectory::{MtOptions, Source, TrialMetric};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| (0..3).map(|k| a[i][k] * v[k]).sum())
}

/// Rotation about a unit axis by Rodrigues' formula.
fn rodrigues(axis: &[f64; 3], angle: f64) -> Mat3 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|v| v / n);
    let k = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
    let k2 = mat_mul(&k, &k);
    let (s, c) = angle.sin_cos();
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = f64::from(u8::from(i == j)) + s * k[i][j] + (1.0 - c) * k2[i][j];
        }
    }
    r
}

/// Tip position from plain 3x3 matrices, base rotation as Rz * Ry * Rx.
pub fn fk_oracle(chain: &KinematicChain, q: &JointVector) -> [f64; 3] {
    let [roll, pitch, yaw] = chain.base.rotation_rpy;
    let mut rot = mat_mul(
        &rodrigues(&[0.0, 0.0, 1.0], yaw),
        &mat_mul(&rodrigues(&[0.0, 1.0, 0.0], pitch), &rodrigues(&[1.0, 0.0, 0.0], roll)),
    );
    let mut pos = chain.base.translation;
    for (joint, angle) in chain.joints.iter().zip(q) {
        rot = mat_mul(&rot, &rodrigues(&joint.axis, *angle));
        let step = mat_vec(&rot, &joint.offset);
        for i in 0..3 {
            pos[i] += step[i];
        }
    }
    let step = mat_vec(&rot, &chain.tool_offset);
    [0, 1, 2].map(|i| pos[i] + step[i])
}

/// `int_0^x t^(a-1) (1-t)^(b-1) dt` by tanh-sinh quadrature.
pub fn beta_integral(x: f64, a: f64, b: f64, h: f64) -> f64 {
    let k_max = (7.0 / h).ceil() as i64;
    let mut sum = 0.0;
    for k in -k_max..=k_max {
        let u = k as f64 * h;
        let v = FRAC_PI_2 * u.sinh();
        // distances to both ends, computed without cancellation
        let from_lo = x / (1.0 + (-2.0 * v).exp());
        let from_hi = x / (1.0 + (2.0 * v).exp());
        let one_minus_t = (1.0 - x) + from_hi;
        let weight = 0.5 * x * FRAC_PI_2 * u.cosh() / v.cosh().powi(2);
        if from_lo <= 0.0 || one_minus_t <= 0.0 || weight == 0.0 || !weight.is_finite() {
            continue;
        }
        let log_f = (a - 1.0) * from_lo.ln() + (b - 1.0) * one_minus_t.ln();
        sum += weight * log_f.exp();
    }
    sum * h
}

/// Fixed (F, df1, df2) grid for p-value checks.
pub const F_GRID: [f64; 8] = [0.05, 0.3, 1.0, 2.0, 3.5, 7.0, 15.0, 60.0];
pub const DF1_GRID: [f64; 5] = [1.0, 2.0, 3.0, 5.0, 10.0];
pub const DF2_GRID: [f64; 5] = [2.0, 5.0, 10.0, 30.0, 97.0];

/// F distribution CDF as a ratio of two quadratures.
pub fn f_cdf_quadrature(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let x = df1 * f / (df1 * f + df2);
    let (a, b) = (df1 / 2.0, df2 / 2.0);
    let h = 1.0 / 128.0;
    beta_integral(x, a, b, h) / beta_integral(1.0, a, b, h)
}

/// Largest relative gap between analytic and central-difference gradients.
///
/// Entries where both values are below `floor` are compared against `floor`
/// so that round-off on vanishing gradients is not amplified.
pub fn max_gradient_error(net: &Mlp, x: ArrayView2<f64>, y: ArrayView2<f64>, step: f64, floor: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, grads) = net.loss_and_grad(x, y, 0.0, &mut rng).unwrap();
    let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let loss_at = |p: &Mlp| p.loss_and_grad(x, y, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().0;
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    for t in 0..net.tensors().len() {
        for i in 0..net.tensors()[t].len() {
            let mut plus = net.clone();
            plus.tensors_mut()[t][i] += step;
            let mut minus = net.clone();
            minus.tensors_mut()[t][i] -= step;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
            let a = analytic[flat];
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
            flat += 1;
        }
    }
    worst
}

/// A random small network and batch for gradient checks.
pub fn random_net_and_batch(seed: u64) -> (Mlp, Array2<f64>, Array2<f64>) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = rng.random_range(2..=6);
    let hidden_layers = rng.random_range(1..=2);
    let mut sizes = vec![inputs];
    for _ in 0..hidden_layers {
        sizes.push(rng.random_range(3..=8));
    }
    sizes.push(rng.random_range(1..=4));
    let net = Mlp::init(&sizes, &mut rng);
    let batch = rng.random_range(2..=6);
    let x = Array2::from_shape_fn((batch, inputs), |_| rng.random_range(-2.0..2.0));
    let y = Array2::from_shape_fn((batch, *sizes.last().unwrap()), |_| rng.random_range(-2.0..2.0));
    (net, x, y)
}

/// Trials drawn from `MT = a + b * regressor + N(0, sigma)` over the
/// four-distance, 2 cm target design with `reps` replicates per distance.
pub fn model_trials(model: RegressionModel, a: f64, b: f64, sigma: f64, reps: usize, seed: u64) -> Vec<TrialMetric> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let width: f64 = 0.02;
    let mut out = Vec::new();
    for d in [0.20f64, 0.30, 0.40, 0.50] {
        let x = match model {
            RegressionModel::Fitts => (2.0 * d / width).log2(),
            RegressionModel::Ballistic => f64::sqrt(d),
        };
        for k in 0..reps {
            out.push(TrialMetric {
                trial_id: format!("d{d}_{k}"),
                source: Source::Human,
                distance_m: d,
                width_m: width,
                movement_time_s: Some(a + b * x + noise.sample(&mut rng)),
                success: true,
            });
        }
    }
    out
}

/// The noiseless single demonstration used for memorization checks.
pub fn memorization_demo() -> SynthDemo {
    let cfg = GeneratorConfig { mt_noise_sigma_s: 0.0, ..Default::default() };
    let generator = DemoGenerator::new(cfg, KinematicChain::default(), MtOptions::default()).unwrap();
    generator.synth_demo(1, 0).unwrap()
}

/// Training recipe that drives a single demonstration to near-zero loss.
pub fn memorization_config() -> PolicyConfig {
    PolicyConfig {
        batch_size: 16,
        max_epochs: 1500,
        early_stopping: false,
        plateau_patience: 100,
        ..Default::default()
    }
}

/// Largest per-joint gap between rollout frames and the demo over the first
/// `frames` frames; the demo is held at its last frame once it ends.
pub fn tracking_error(rollout: &[JointVector], demo: &[JointVector], frames: usize) -> f64 {
    let last = demo.len() - 1;
    rollout
        .iter()
        .take(frames)
        .enumerate()
        .flat_map(|(i, q)| {
            let d = demo[i.min(last)];
            (0..q.len()).map(move |j| (q[j] - d[j]).abs())
        })
        .fold(0.0, f64::max)
}
