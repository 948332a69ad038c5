//! Synthetic minimum-jerk reaching demonstrations whose movement times follow
//! a configured Fitts relation.
//!
//! Each trial moves along a straight line in joint space from `start_q`
//! towards `start_q + s * direction`, where `s` is chosen so the pencil tip
//! travels exactly the condition's distance. Timing follows the quintic
//! minimum-jerk phase.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{derive_seed, write_atomic};
use crate::kinematics::{JointVector, KinematicChain, JOINT_COUNT};
use crate::stats::index_of_difficulty;
use crate::trajectory::{
    provenance_comment, DemoRecord, JointTrajectory, MtOptions, Provenance,
};

const MIN_COMMANDED_MT_S: f64 = 0.1;
const DISTANCE_TOLERANCE_M: f64 = 1e-6;

/// `10 tau^3 - 15 tau^4 + 6 tau^5`.
pub fn min_jerk_phase(tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("phase {tau} outside [0, 1]")));
    }
    Ok(tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau)))
}

/// Derivative of the minimum-jerk phase, `30 tau^2 (1 - tau)^2`.
pub fn min_jerk_rate(tau: f64) -> f64 {
    let u = tau * (1.0 - tau);
    30.0 * u * u
}

/// Finds `q_end = start + s * direction` whose tip lies `distance_m` from the
/// start tip. Scans outward in small steps, then bisects the bracketing step.
pub fn solve_end_config(
    chain: &KinematicChain,
    start_q: &JointVector,
    direction: &JointVector,
    distance_m: f64,
) -> Result<JointVector> {
    if !distance_m.is_finite() || distance_m < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "distance must be finite and non-negative, got {distance_m}"
        )));
    }
    if distance_m == 0.0 {
        return Ok(*start_q);
    }
    let dir_norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if !(dir_norm > 0.0 && dir_norm.is_finite()) {
        return Err(Error::InvalidArgument("displacement direction is zero".into()));
    }
    let at = |s: f64| -> JointVector {
        let mut q = *start_q;
        for (qi, di) in q.iter_mut().zip(direction) {
            *qi += s * di;
        }
        q
    };
    let dist = |s: f64| chain.task_distance(start_q, &at(s));

    let step = 0.01 / dir_norm;
    let (mut lo, mut hi) = (0.0, step);
    loop {
        if !chain.within_limits(&at(hi)) {
            return Err(Error::UnreachableDistance {
                distance_m,
                reason: "joint limits reached before the distance was bracketed".into(),
            });
        }
        if dist(hi)? >= distance_m {
            break;
        }
        lo = hi;
        hi += step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist(mid)? < distance_m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let q_end = at(0.5 * (lo + hi));
    let reached = chain.task_distance(start_q, &q_end)?;
    if (reached - distance_m).abs() > DISTANCE_TOLERANCE_M {
        return Err(Error::UnreachableDistance {
            distance_m,
            reason: format!("bisection converged to {reached} m"),
        });
    }
    Ok(q_end)
}

/// How the motion duration relates to the sampled Fitts movement time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DurationModel {
    /// The minimum-jerk profile lasts exactly the sampled movement time.
    Commanded,
    /// The profile is stretched so its above-threshold speed window, as
    /// measured by onset/offset extraction, equals the sampled movement time.
    #[default]
    ThresholdWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub fitts_a_s: f64,
    pub fitts_b_s_per_bit: f64,
    pub mt_noise_sigma_s: f64,
    pub distances_m: Vec<f64>,
    pub width_m: f64,
    pub trials_per_condition: usize,
    pub start_q: JointVector,
    pub displacement_direction: JointVector,
    pub seed: u64,
    pub sample_rate_hz: f64,
    /// Rest before motion starts. Kept shorter than the rollout warm start so
    /// the policy's initial history already contains the onset.
    pub pre_pad_s: f64,
    pub post_pad_s: f64,
    pub duration_model: DurationModel,
    /// Per-frame Gaussian jitter on every joint, radians. Zero disables it.
    pub frame_noise_sigma_rad: f64,
    /// Drop one random trial from a full grid, giving 99 of 100 demonstrations.
    pub paper_replica: bool,
    /// Extra joints recorded at a fixed zero angle, like the locked wrist.
    pub locked_joints: Vec<String>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            fitts_a_s: 0.2,
            fitts_b_s_per_bit: 0.15,
            mt_noise_sigma_s: 0.05,
            distances_m: vec![0.20, 0.30, 0.40, 0.50],
            width_m: 0.02,
            trials_per_condition: 25,
            start_q: [-0.4, 0.25, 0.0, -1.3],
            displacement_direction: [-0.8, 0.3, 0.3, 0.6],
            seed: 0,
            sample_rate_hz: 50.0,
            pre_pad_s: 0.1,
            post_pad_s: 0.3,
            duration_model: DurationModel::ThresholdWindow,
            frame_noise_sigma_rad: 0.0,
            paper_replica: false,
            locked_joints: vec![
                "LeftWristRoll".into(),
                "LeftWristPitch".into(),
                "LeftWristYaw".into(),
            ],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::validation(format!("generator.{field}"), msg));
        if !(self.fitts_a_s >= 0.0) {
            return bad("fitts_a_s", "must be >= 0");
        }
        if !(self.fitts_b_s_per_bit > 0.0) {
            return bad("fitts_b_s_per_bit", "must be > 0");
        }
        if !(self.mt_noise_sigma_s >= 0.0) {
            return bad("mt_noise_sigma_s", "must be >= 0");
        }
        if !(self.frame_noise_sigma_rad >= 0.0) {
            return bad("frame_noise_sigma_rad", "must be >= 0");
        }
        if self.trials_per_condition < 3 {
            return bad("trials_per_condition", "need at least 3 replicates");
        }
        if self.distances_m.is_empty() || !self.distances_m.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return bad("distances_m", "need positive, finite distances");
        }
        if !(self.width_m > 0.0) {
            return bad("width_m", "must be > 0");
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad("sample_rate_hz", "must be > 0");
        }
        if !(self.pre_pad_s >= 0.0 && self.post_pad_s >= 0.0) {
            return bad("pre_pad_s", "padding must be >= 0");
        }
        if self.displacement_direction.iter().all(|d| *d == 0.0) {
            return bad("displacement_direction", "must be nonzero");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

/// A generated trial with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthDemo {
    pub trial_id: String,
    pub file_name: String,
    pub condition_index: usize,
    pub trial_index: usize,
    pub trial_seed: u64,
    /// Sampled Fitts movement time, seconds.
    pub commanded_mt_s: f64,
    /// Length of the minimum-jerk profile, seconds.
    pub duration_s: f64,
    pub q_end: JointVector,
    pub target: [f64; 3],
    pub trajectory: JointTrajectory,
    pub record: DemoRecord,
}

/// Above-threshold window of a straight joint-space minimum-jerk move of
/// the given joint-space amplitude and duration.
pub fn threshold_window(duration_s: f64, amplitude: f64, threshold: f64) -> f64 {
    let g = (threshold * duration_s / (30.0 * amplitude)).sqrt();
    let disc = 1.0 - 4.0 * g;
    if disc <= 0.0 {
        0.0
    } else {
        duration_s * disc.sqrt()
    }
}

/// Smallest duration whose above-threshold window equals `window_s`.
///
/// The window grows with duration until `sqrt(threshold T / 30 A) = 1/5`
/// and shrinks afterwards, so the root is bracketed on `[window_s, T_peak]`.
pub fn duration_for_window(window_s: f64, amplitude: f64, threshold: f64) -> Result<f64> {
    let k = threshold / (30.0 * amplitude);
    let t_peak = 0.04 / k;
    if threshold_window(t_peak, amplitude, threshold) < window_s {
        return Err(Error::Domain(format!(
            "a {window_s:.3} s window is unattainable for joint amplitude {amplitude:.3} rad"
        )));
    }
    let (mut lo, mut hi) = (window_s, t_peak);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if threshold_window(mid, amplitude, threshold) < window_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generator bound to a chain and to the onset rule used for measuring MT.
#[derive(Debug, Clone)]
pub struct DemoGenerator {
    pub config: GeneratorConfig,
    pub chain: KinematicChain,
    pub mt: MtOptions,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub demos: Vec<SynthDemo>,
    pub dropped: Option<String>,
}

impl DemoGenerator {
    pub fn new(config: GeneratorConfig, chain: KinematicChain, mt: MtOptions) -> Result<Self> {
        config.validate()?;
        chain.validate()?;
        Ok(DemoGenerator {
            config,
            chain,
            mt,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, prov: Provenance) -> Self {
        self.provenance = Some(prov);
        self
    }

    pub fn trial_seed(&self, condition_index: usize, trial_index: usize) -> u64 {
        derive_seed(
            "fitts-bench/trial",
            &[self.config.seed, condition_index as u64, trial_index as u64],
        )
    }

    pub fn end_config(&self, distance_m: f64) -> Result<JointVector> {
        solve_end_config(
            &self.chain,
            &self.config.start_q,
            &self.config.displacement_direction,
            distance_m,
        )
    }

    fn sample_mt(&self, rng: &mut ChaCha8Rng, id_bits: f64) -> f64 {
        let c = &self.config;
        let mean = c.fitts_a_s + c.fitts_b_s_per_bit * id_bits;
        if c.mt_noise_sigma_s == 0.0 {
            return mean.max(MIN_COMMANDED_MT_S);
        }
        let normal = Normal::new(0.0, c.mt_noise_sigma_s).expect("sigma validated");
        for _ in 0..10_000 {
            let mt = mean + normal.sample(rng);
            if mt > MIN_COMMANDED_MT_S {
                return mt;
            }
        }
        MIN_COMMANDED_MT_S
    }

    pub fn synth_demo(&self, condition_index: usize, trial_index: usize) -> Result<SynthDemo> {
        let c = &self.config;
        let distance_m = *c.distances_m.get(condition_index).ok_or_else(|| {
            Error::InvalidArgument(format!("condition {condition_index} out of range"))
        })?;
        let trial_seed = self.trial_seed(condition_index, trial_index);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);

        let id_bits = index_of_difficulty(distance_m, c.width_m)?;
        let commanded_mt_s = self.sample_mt(&mut rng, id_bits);
        let q_end = self.end_config(distance_m)?;
        let mut delta = [0.0; JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            delta[j] = q_end[j] - c.start_q[j];
        }
        let amplitude = self.mt.norm.apply(&delta);
        let dt = c.dt();
        let duration_s = match c.duration_model {
            DurationModel::Commanded => commanded_mt_s,
            // Index-based extraction loses one frame on average.
            DurationModel::ThresholdWindow => duration_for_window(
                commanded_mt_s + dt,
                amplitude,
                self.mt.threshold_rad_s,
            )?,
        };

        let total = c.pre_pad_s + duration_s + c.post_pad_s;
        let n_frames = (total / dt).ceil() as usize + 1;
        let jitter = (c.frame_noise_sigma_rad > 0.0)
            .then(|| Normal::new(0.0, c.frame_noise_sigma_rad).expect("sigma validated"));
        let mut q = Vec::with_capacity(n_frames);
        for k in 0..n_frames {
            let t = k as f64 * dt;
            let tau = ((t - c.pre_pad_s) / duration_s).clamp(0.0, 1.0);
            let s = min_jerk_phase(tau)?;
            let mut row = [0.0; JOINT_COUNT];
            for j in 0..JOINT_COUNT {
                row[j] = c.start_q[j] + s * delta[j];
                if let Some(n) = &jitter {
                    row[j] += n.sample(&mut rng);
                }
            }
            q.push(row);
        }
        let trajectory = JointTrajectory::from_frames(q, dt, distance_m, c.width_m);
        let tip = self.chain.forward_kinematics(&q_end)?;

        let cm = (distance_m * 100.0).round() as i64;
        let trial_id = format!("d{cm}_t{trial_index:03}");
        let mut record = trajectory.to_record(Some(trial_id.clone()), self.provenance.clone());
        for name in &c.locked_joints {
            record.metadata.joint_names.push(name.clone());
            for f in &mut record.frames {
                f.positions.insert(name.clone(), 0.0);
            }
        }
        Ok(SynthDemo {
            file_name: format!("demo_d{cm}cm_t{trial_index:03}.json"),
            trial_id,
            condition_index,
            trial_index,
            trial_seed,
            commanded_mt_s,
            duration_s,
            q_end,
            target: [tip.x, tip.y, tip.z],
            trajectory,
            record,
        })
    }

    /// Every (condition, trial) pair; paper-replica mode drops one at random.
    pub fn generate_dataset(&self) -> Result<Dataset> {
        let c = &self.config;
        let mut demos = Vec::with_capacity(c.distances_m.len() * c.trials_per_condition);
        for cond in 0..c.distances_m.len() {
            for trial in 0..c.trials_per_condition {
                demos.push(self.synth_demo(cond, trial)?);
            }
        }
        let mut dropped = None;
        if c.paper_replica && !demos.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed("fitts-bench/drop", &[c.seed]));
            let idx = rng.random_range(0..demos.len());
            dropped = Some(demos.remove(idx).trial_id);
        }
        Ok(Dataset { demos, dropped })
    }
}

pub const MANIFEST_HEADER: [&str; 8] = [
    "file",
    "distance_m",
    "width_m",
    "commanded_mt_s",
    "seed",
    "target_x",
    "target_y",
    "target_z",
];

/// Writes one JSON file per demonstration plus `manifest.csv`.
pub fn write_dataset(dir: &Path, dataset: &Dataset, prov: &Provenance) -> Result<()> {
    let manifest_path = dir.join("manifest.csv");
    let mut buf = provenance_comment(prov).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| Error::Csv {
            path: manifest_path.clone(),
            message: e.to_string(),
        };
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for d in &dataset.demos {
            crate::trajectory::write_demo(&dir.join(&d.file_name), &d.record)?;
            w.write_record([
                d.file_name.clone(),
                d.trajectory.distance_m.to_string(),
                d.trajectory.width_m.to_string(),
                d.commanded_mt_s.to_string(),
                d.trial_seed.to_string(),
                d.target[0].to_string(),
                d.target[1].to_string(),
                d.target[2].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&manifest_path, e))?;
    }
    write_atomic(&manifest_path, &buf)
}

/// One row of `manifest.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub distance_m: f64,
    pub width_m: f64,
    pub commanded_mt_s: f64,
    pub seed: u64,
    pub target: [f64; 3],
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join("manifest.csv");
    let bytes = crate::io::read_input(&path)?;
    let csv_err = |message: String| Error::Csv {
        path: path.clone(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(csv_err(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        let f = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| csv_err(format!("bad number `{}` in column {}", &row[i], MANIFEST_HEADER[i])))
        };
        out.push(ManifestEntry {
            file: row[0].to_string(),
            distance_m: f(1)?,
            width_m: f(2)?,
            commanded_mt_s: f(3)?,
            seed: row[4]
                .parse()
                .map_err(|_| csv_err(format!("bad seed `{}`", &row[4])))?,
            target: [f(5)?, f(6)?, f(7)?],
        });
    }
    Ok(out)
}
