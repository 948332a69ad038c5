//! Demonstration records (`demo-v1` JSON), joint selection, and movement-time
//! extraction from joint-speed onset and offset.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{joint_speeds, JointVector, SpeedNorm, JOINT_COUNT, PREFERRED_JOINTS};

pub const DEMO_SCHEMA: &str = "demo-v1";
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 50.0;
pub const DEFAULT_ONSET_THRESHOLD: f64 = 0.05;
const SPACING_TOLERANCE_S: f64 = 1e-6;

/// Where a demo file came from. Written by the generator, ignored when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoMetadata {
    pub joint_names: Vec<String>,
    pub distance_m: f64,
    pub width_m: f64,
    pub sample_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub positions: BTreeMap<String, f64>,
}

/// One kinesthetic demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub metadata: DemoMetadata,
    pub frames: Vec<Frame>,
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

/// Extracts the backtick-quoted field name from a serde message, if any.
fn field_from_message(msg: &str) -> String {
    let mut parts = msg.split('`');
    match (parts.next(), parts.next()) {
        (Some(_), Some(field)) => field.to_string(),
        _ => "record".to_string(),
    }
}

/// Parses and validates a `demo-v1` document.
pub fn parse_demo(bytes: &[u8]) -> Result<DemoRecord> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if let Some(schema) = value.get("schema") {
        let found = schema.as_str().unwrap_or("<non-string>");
        if found != DEMO_SCHEMA {
            return Err(Error::SchemaMismatch {
                expected: DEMO_SCHEMA.to_string(),
                found: found.to_string(),
            });
        }
    }
    let record: DemoRecord = serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        Error::validation(field_from_message(&msg), msg)
    })?;
    record.validate()?;
    Ok(record)
}

impl DemoRecord {
    pub fn validate(&self) -> Result<()> {
        let meta = &self.metadata;
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be positive, got {v}")))
            }
        };
        positive("metadata.distance_m", meta.distance_m)?;
        positive("metadata.width_m", meta.width_m)?;
        positive("metadata.sample_rate_hz", meta.sample_rate_hz)?;
        if meta.joint_names.is_empty() {
            return Err(Error::validation("metadata.joint_names", "empty"));
        }
        let mut seen = HashSet::new();
        for name in &meta.joint_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::validation(
                    "metadata.joint_names",
                    format!("duplicate joint `{name}`"),
                ));
            }
        }
        if self.frames.len() < 2 {
            return Err(Error::validation("frames", "need at least 2 frames"));
        }
        let dt = 1.0 / meta.sample_rate_hz;
        for (i, frame) in self.frames.iter().enumerate() {
            if !frame.t.is_finite() {
                return Err(Error::validation(format!("frames[{i}].t"), "not finite"));
            }
            for name in &meta.joint_names {
                match frame.positions.get(name) {
                    None => {
                        return Err(Error::validation(
                            format!("frames[{i}].positions"),
                            format!("missing joint `{name}`"),
                        ))
                    }
                    Some(v) if !v.is_finite() => {
                        return Err(Error::validation(
                            format!("frames[{i}].positions.{name}"),
                            "not finite",
                        ))
                    }
                    Some(_) => {}
                }
            }
            if i > 0 {
                let step = frame.t - self.frames[i - 1].t;
                if step <= 0.0 {
                    return Err(Error::Ordering {
                        frame: i,
                        message: format!("timestamp {} does not increase", frame.t),
                    });
                }
                if (step - dt).abs() > SPACING_TOLERANCE_S {
                    return Err(Error::Ordering {
                        frame: i,
                        message: format!("spacing {step} s differs from 1/sample_rate {dt} s"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Pretty JSON with sorted position keys; stable bytes for identical records.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("demo records always serialize");
        s.push('\n');
        s
    }
}

/// The four controlled joints of one demonstration, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub joint_names: Vec<String>,
    pub q: Vec<JointVector>,
    pub dt: f64,
    pub t0: f64,
    pub distance_m: f64,
    pub width_m: f64,
}

impl JointTrajectory {
    pub fn from_frames(q: Vec<JointVector>, dt: f64, distance_m: f64, width_m: f64) -> Self {
        JointTrajectory {
            joint_names: PREFERRED_JOINTS.iter().map(|s| s.to_string()).collect(),
            q,
            dt,
            t0: 0.0,
            distance_m,
            width_m,
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, row) in self.q.iter().enumerate() {
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::validation(format!("q[{i}]"), "non-finite joint angle"));
            }
        }
        Ok(())
    }

    /// Converts back to a `demo-v1` record with the four canonical joints.
    pub fn to_record(&self, trial_id: Option<String>, provenance: Option<Provenance>) -> DemoRecord {
        let frames = self
            .q
            .iter()
            .enumerate()
            .map(|(k, row)| Frame {
                t: self.t0 + k as f64 * self.dt,
                positions: self
                    .joint_names
                    .iter()
                    .cloned()
                    .zip(row.iter().copied())
                    .collect(),
            })
            .collect();
        DemoRecord {
            schema: Some(DEMO_SCHEMA.to_string()),
            metadata: DemoMetadata {
                joint_names: self.joint_names.clone(),
                distance_m: self.distance_m,
                width_m: self.width_m,
                sample_rate_hz: self.sample_rate_hz(),
                trial_id,
                provenance,
            },
            frames,
        }
    }
}

/// Reorders the record's joints into canonical order, dropping the rest.
pub fn select_joints(record: &DemoRecord) -> Result<JointTrajectory> {
    let names = &record.metadata.joint_names;
    let missing: Vec<String> = PREFERRED_JOINTS
        .iter()
        .filter(|p| !names.iter().any(|n| n == *p))
        .map(|p| p.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingJoints(missing));
    }
    let q = record
        .frames
        .iter()
        .map(|f| {
            let mut row = [0.0; JOINT_COUNT];
            for (slot, name) in row.iter_mut().zip(PREFERRED_JOINTS) {
                *slot = f.positions[name];
            }
            row
        })
        .collect();
    let meta = &record.metadata;
    let mut traj = JointTrajectory::from_frames(
        q,
        1.0 / meta.sample_rate_hz,
        meta.distance_m,
        meta.width_m,
    );
    traj.t0 = record.frames[0].t;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MtOptions {
    pub threshold_rad_s: f64,
    pub norm: SpeedNorm,
    /// Centered moving-average width applied to speeds; 1 disables smoothing.
    pub smoothing_window: usize,
}

impl Default for MtOptions {
    fn default() -> Self {
        MtOptions {
            threshold_rad_s: DEFAULT_ONSET_THRESHOLD,
            norm: SpeedNorm::L2,
            smoothing_window: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MovementTime {
    Moved {
        onset: usize,
        offset: usize,
        mt_s: f64,
    },
    NoMovement,
}

impl MovementTime {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            MovementTime::Moved { mt_s, .. } => Some(*mt_s),
            MovementTime::NoMovement => None,
        }
    }
}

fn moving_average(xs: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return xs.to_vec();
    }
    let half = width / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(xs.len());
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Time between the first and last frame whose joint speed exceeds the threshold.
pub fn extract_movement_time(traj: &JointTrajectory, opts: &MtOptions) -> Result<MovementTime> {
    if traj.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: traj.len(),
        });
    }
    traj.check_finite()?;
    let speeds = moving_average(&joint_speeds(traj, opts.norm)?, opts.smoothing_window);
    let above = |s: &f64| *s > opts.threshold_rad_s;
    let Some(onset) = speeds.iter().position(above) else {
        return Ok(MovementTime::NoMovement);
    };
    let offset = speeds.iter().rposition(above).unwrap_or(onset);
    Ok(MovementTime::Moved {
        onset,
        offset,
        mt_s: (offset - onset) as f64 * traj.dt,
    })
}

/// Why a demonstration was excluded from analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct DropReason {
    pub code: &'static str,
    pub detail: String,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct ScreenedDemo {
    pub record: DemoRecord,
    pub trajectory: JointTrajectory,
    pub onset: usize,
    pub offset: usize,
    pub movement_time_s: f64,
}

/// Validation pass applied to every raw demonstration before analysis.
pub fn screen_demo(bytes: &[u8], opts: &MtOptions) -> std::result::Result<ScreenedDemo, DropReason> {
    let reject = |e: Error| DropReason {
        code: e.code(),
        detail: e.to_string(),
    };
    let record = parse_demo(bytes).map_err(reject)?;
    let trajectory = select_joints(&record).map_err(reject)?;
    match extract_movement_time(&trajectory, opts).map_err(reject)? {
        MovementTime::Moved {
            onset,
            offset,
            mt_s,
        } if mt_s > 0.0 => Ok(ScreenedDemo {
            record,
            trajectory,
            onset,
            offset,
            movement_time_s: mt_s,
        }),
        MovementTime::Moved { .. } => Err(DropReason {
            code: "zero-duration",
            detail: "speed exceeded the threshold on a single frame".into(),
        }),
        MovementTime::NoMovement => Err(DropReason {
            code: "no-movement",
            detail: format!("joint speed never exceeded {} rad/s", opts.threshold_rad_s),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Policy,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Human => "human",
            Source::Policy => "policy",
        })
    }
}

impl std::str::FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(Source::Human),
            "policy" => Ok(Source::Policy),
            other => Err(Error::validation("source", format!("unknown source `{other}`"))),
        }
    }
}

/// One trial's outcome, the unit of the Fitts analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetric {
    pub trial_id: String,
    pub source: Source,
    pub distance_m: f64,
    pub width_m: f64,
    pub movement_time_s: Option<f64>,
    pub success: bool,
}

impl TrialMetric {
    pub fn index_of_difficulty(&self) -> f64 {
        (2.0 * self.distance_m / self.width_m).log2()
    }
}

pub const METRIC_HEADER: [&str; 7] = [
    "trial_id",
    "source",
    "distance_m",
    "width_m",
    "id_bits",
    "mt_s",
    "success",
];

/// Header comment embedding provenance; readers skip `#` lines.
pub(crate) fn provenance_comment(prov: &Provenance) -> String {
    format!("# config_hash={} seed={}\n", prov.config_hash, prov.seed)
}

pub fn write_metrics_csv(path: &Path, metrics: &[TrialMetric], prov: &Provenance) -> Result<()> {
    let mut buf = provenance_comment(prov).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        w.write_record(METRIC_HEADER).map_err(csv_err)?;
        for m in metrics {
            w.write_record([
                m.trial_id.clone(),
                m.source.to_string(),
                m.distance_m.to_string(),
                m.width_m.to_string(),
                format!("{:.6}", m.index_of_difficulty()),
                m.movement_time_s.map(|t| t.to_string()).unwrap_or_default(),
                m.success.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    crate::io::write_atomic(path, &buf)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<TrialMetric>> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.iter().ne(METRIC_HEADER) {
        return Err(csv_err(format!("unexpected header {header:?}")));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| csv_err(format!("bad {what} value `{s}`")))
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        let mt = match &row[5] {
            "" => None,
            s => Some(num(s, "mt_s")?),
        };
        out.push(TrialMetric {
            trial_id: row[0].to_string(),
            source: row[1].parse()?,
            distance_m: num(&row[2], "distance_m")?,
            width_m: num(&row[3], "width_m")?,
            movement_time_s: mt,
            success: match &row[6] {
                "true" => true,
                "false" => false,
                s => return Err(csv_err(format!("bad success value `{s}`"))),
            },
        });
    }
    Ok(out)
}

/// Writes one demonstration as `demo-v1` JSON.
pub fn write_demo(path: &Path, record: &DemoRecord) -> Result<()> {
    let mut buf = Vec::new();
    buf.write_all(record.to_json().as_bytes())
        .map_err(|e| Error::io(path, e))?;
    crate::io::write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demogen::min_jerk_phase;

    fn minimal_json(names: &[&str], frames: &[(f64, &[f64])]) -> String {
        let frames: Vec<String> = frames
            .iter()
            .map(|(t, vals)| {
                let pos: Vec<String> = names
                    .iter()
                    .zip(vals.iter())
                    .map(|(n, v)| format!("\"{n}\": {v}"))
                    .collect();
                format!("{{\"t\": {t}, \"positions\": {{{}}}}}", pos.join(", "))
            })
            .collect();
        let names: Vec<String> = names.iter().map(|n| format!("\"{n}\"")).collect();
        format!(
            "{{\"metadata\": {{\"joint_names\": [{}], \"distance_m\": 0.2, \"width_m\": 0.02, \
             \"sample_rate_hz\": 50}}, \"frames\": [{}]}}",
            names.join(", "),
            frames.join(", ")
        )
    }

    fn ramp(n_still: usize, n_move: usize, step: f64) -> JointTrajectory {
        let mut q = Vec::new();
        let mut x = 0.0;
        for _ in 0..n_still {
            q.push([x, 0.0, 0.0, 0.0]);
        }
        for _ in 0..n_move {
            x += step;
            q.push([x, 0.0, 0.0, 0.0]);
        }
        for _ in 0..n_still {
            q.push([x, 0.0, 0.0, 0.0]);
        }
        JointTrajectory::from_frames(q, 0.02, 0.2, 0.02)
    }

    #[test]
    fn parses_minimal_record() {
        let json = minimal_json(
            &PREFERRED_JOINTS,
            &[(0.0, &[0.0, 0.1, 0.2, 0.3]), (0.02, &[0.0, 0.1, 0.2, 0.31])],
        );
        let rec = parse_demo(json.as_bytes()).unwrap();
        assert_eq!(rec.frames.len(), 2);
        assert_eq!(select_joints(&rec).unwrap().len(), 2);
    }

    #[test]
    fn missing_joint_in_frame_names_the_frame() {
        let names = PREFERRED_JOINTS;
        let json = minimal_json(&names, &[(0.0, &[0.0, 0.1, 0.2, 0.3]), (0.02, &[0.0, 0.1, 0.2])]);
        match parse_demo(json.as_bytes()) {
            Err(Error::Validation { field, message }) => {
                assert_eq!(field, "frames[1].positions");
                assert!(message.contains("LeftElbow"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let json = b"{\"metadata\": {\n  \"joint_names\": [,]}}";
        match parse_demo(json) {
            Err(Error::Parse { offset, .. }) => assert_eq!(json[offset], b','),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_a_validation_error() {
        let json = r#"{"metadata": {"joint_names": ["a"], "width_m": 0.02, "sample_rate_hz": 50}, "frames": []}"#;
        match parse_demo(json.as_bytes()) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "distance_m"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let json = minimal_json(
            &PREFERRED_JOINTS,
            &[
                (0.0, &[0.0; 4]),
                (0.02, &[0.0; 4]),
                (0.02, &[0.0; 4]),
            ],
        );
        assert!(matches!(
            parse_demo(json.as_bytes()),
            Err(Error::Ordering { frame: 2, .. })
        ));
        let gap = minimal_json(&PREFERRED_JOINTS, &[(0.0, &[0.0; 4]), (0.05, &[0.0; 4])]);
        assert!(matches!(
            parse_demo(gap.as_bytes()),
            Err(Error::Ordering { frame: 1, .. })
        ));
    }

    #[test]
    fn schema_mismatch_fails_loudly() {
        let json = minimal_json(&PREFERRED_JOINTS, &[(0.0, &[0.0; 4]), (0.02, &[0.0; 4])]);
        let json = json.replacen('{', "{\"schema\": \"demo-v0\", ", 1);
        assert!(matches!(
            parse_demo(json.as_bytes()),
            Err(Error::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn select_joints_is_permutation_invariant_and_drops_extras() {
        let canonical = minimal_json(
            &PREFERRED_JOINTS,
            &[(0.0, &[1.0, 2.0, 3.0, 4.0]), (0.02, &[1.5, 2.5, 3.5, 4.5])],
        );
        let shuffled = minimal_json(
            &[
                "LeftWristRoll",
                "LeftElbow",
                "LeftShoulderYaw",
                "LeftWristPitch",
                "LeftShoulderPitch",
                "LeftWristYaw",
                "LeftShoulderRoll",
            ],
            &[
                (0.0, &[9.0, 4.0, 3.0, 9.0, 1.0, 9.0, 2.0]),
                (0.02, &[9.0, 4.5, 3.5, 9.0, 1.5, 9.0, 2.5]),
            ],
        );
        let a = select_joints(&parse_demo(canonical.as_bytes()).unwrap()).unwrap();
        let b = select_joints(&parse_demo(shuffled.as_bytes()).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.q[0], [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(b.joint_names.len(), 4);
    }

    #[test]
    fn select_joints_lists_absentees() {
        let json = minimal_json(
            &["LeftShoulderPitch", "LeftShoulderRoll"],
            &[(0.0, &[0.0, 0.0]), (0.02, &[0.0, 0.0])],
        );
        match select_joints(&parse_demo(json.as_bytes()).unwrap()) {
            Err(Error::MissingJoints(m)) => assert_eq!(m, vec!["LeftShoulderYaw", "LeftElbow"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_trajectory_has_no_movement() {
        let t = JointTrajectory::from_frames(vec![[0.3; 4]; 10], 0.02, 0.2, 0.02);
        assert_eq!(
            extract_movement_time(&t, &MtOptions::default()).unwrap(),
            MovementTime::NoMovement
        );
    }

    #[test]
    fn rectangular_pulse_gives_one_second() {
        // 50 ramp frames at 0.1 rad/frame: 5 rad/s for exactly 1.0 s.
        let t = ramp(10, 50, 0.1);
        let mt = extract_movement_time(&t, &MtOptions::default())
            .unwrap()
            .seconds()
            .unwrap();
        assert!((mt - 1.0).abs() <= 0.02 + 1e-12, "mt = {mt}");
    }

    #[test]
    fn min_jerk_window_matches_analytic_crossings() {
        let dt: f64 = 0.02;
        let duration: f64 = 0.8;
        let delta = [0.6, -0.3, 0.2, 0.9];
        let amp = delta.iter().map(|d: &f64| d * d).sum::<f64>().sqrt();
        let pad = 15;
        let n_move = (duration / dt).round() as usize;
        let mut q = vec![[0.0; 4]; pad];
        for k in 0..=n_move {
            let s = min_jerk_phase(k as f64 * dt / duration).unwrap();
            q.push(delta.map(|d| d * s));
        }
        q.extend(std::iter::repeat_n(delta, pad));
        let traj = JointTrajectory::from_frames(q, dt, 0.2, 0.02);
        let mt = extract_movement_time(&traj, &MtOptions::default())
            .unwrap()
            .seconds()
            .unwrap();

        // Oracle: bisect 30 tau^2 (1 - tau)^2 * amp / duration = threshold on [0, 0.5].
        let speed = |tau: f64| 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau) * amp / duration;
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if speed(mid) > 0.05 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let window = (1.0 - 2.0 * hi) * duration;
        assert!((mt - window).abs() <= 2.0 * dt, "{mt} vs {window}");
    }

    #[test]
    fn stationary_padding_and_time_shift_do_not_change_mt() {
        let base = ramp(5, 20, 0.05);
        let mt = extract_movement_time(&base, &MtOptions::default()).unwrap().seconds();
        let mut padded = base.clone();
        let first = padded.q[0];
        let last = *padded.q.last().unwrap();
        padded.q.splice(0..0, std::iter::repeat_n(first, 7));
        padded.q.extend(std::iter::repeat_n(last, 11));
        padded.t0 = 123.4;
        assert_eq!(
            extract_movement_time(&padded, &MtOptions::default()).unwrap().seconds(),
            mt
        );
    }

    #[test]
    fn smoothing_suppresses_isolated_spikes() {
        let mut t = JointTrajectory::from_frames(vec![[0.0; 4]; 30], 0.02, 0.2, 0.02);
        t.q[15][0] = 0.004;
        let raw = extract_movement_time(&t, &MtOptions::default()).unwrap();
        assert!(matches!(raw, MovementTime::Moved { .. }));
        let smooth = MtOptions {
            smoothing_window: 5,
            threshold_rad_s: 0.05,
            ..MtOptions::default()
        };
        assert_eq!(
            extract_movement_time(&t, &smooth).unwrap(),
            MovementTime::NoMovement
        );
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let metrics = vec![
            TrialMetric {
                trial_id: "d20_t001".into(),
                source: Source::Human,
                distance_m: 0.2,
                width_m: 0.02,
                movement_time_s: Some(0.84),
                success: true,
            },
            TrialMetric {
                trial_id: "d50_t002".into(),
                source: Source::Policy,
                distance_m: 0.5,
                width_m: 0.02,
                movement_time_s: None,
                success: false,
            },
        ];
        let prov = Provenance {
            config_hash: "abc".into(),
            seed: 7,
        };
        write_metrics_csv(&path, &metrics, &prov).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=abc seed=7\ntrial_id,source,distance_m,width_m,id_bits,mt_s,success\n"));
        assert_eq!(read_metrics_csv(&path).unwrap(), metrics);
    }
}
