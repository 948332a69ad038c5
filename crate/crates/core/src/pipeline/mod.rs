//! Stage orchestration: generate, measure, train, roll out, analyze.
//!
//! Layout under the output root:
//!
//! ```text
//! config.toml                 resolved configuration
//! demos/                      demo-v1 files and manifest.csv
//! metrics/human.csv           thresholded movement times
//! metrics/human_dropped.csv   demonstrations rejected by screening
//! metrics/policy.csv          rollout movement times
//! metrics/rollouts.csv        per-trial rollout diagnostics
//! policy/policy.json          policy-v1 bundle
//! policy/history.csv          per-epoch losses
//! rollouts/                   optional per-trial rollout trajectories
//! report/fits.csv, report/*.svg, report/summary.md
//! .cache/                     stage stamps
//! ```

mod cache;
mod config;
mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::Point3;

pub use cache::{StageOutcome, StageStatus};
pub use config::{apply_override, AnalysisConfig, ExperimentConfig, OUTPUT_ENV};
pub use report::{
    analyze_metrics, fits_csv, scatter_svg, summary_markdown, AnalysisReport, ConditionSummary,
    SourceReport, FITS_HEADER,
};

use crate::demogen::{read_manifest, write_dataset, DemoGenerator};
use crate::error::{Error, Result};
use crate::io::{read_input, write_atomic};
use crate::policy::{train, PolicyBundle, TrainingHistory};
use crate::rollout::{rollout, RolloutResult};
use crate::trajectory::{
    provenance_comment, read_metrics_csv, screen_demo, write_demo, write_metrics_csv,
    DropReason, JointTrajectory, Provenance, Source, TrialMetric,
};
use cache::{dir_files, StageCache};

/// A demonstration that passed screening.
#[derive(Debug, Clone)]
pub struct LoadedDemo {
    pub file: String,
    pub trial_id: String,
    pub trajectory: JointTrajectory,
    pub movement_time_s: f64,
}

/// Screens every `*.json` file in `dir`, in file-name order.
pub fn load_demos(dir: &Path, mt: &crate::trajectory::MtOptions) -> Result<(Vec<LoadedDemo>, Vec<(String, DropReason)>)> {
    if !dir.is_dir() {
        return Err(Error::MissingInput(dir.to_path_buf()));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for path in dir_files(dir)? {
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let file = path.file_name().expect("file").to_string_lossy().into_owned();
        let bytes = read_input(&path)?;
        match screen_demo(&bytes, mt) {
            Ok(s) => kept.push(LoadedDemo {
                trial_id: s.record.metadata.trial_id.clone().unwrap_or_else(|| {
                    path.file_stem().expect("stem").to_string_lossy().into_owned()
                }),
                file,
                trajectory: s.trajectory,
                movement_time_s: s.movement_time_s,
            }),
            Err(reason) => {
                warn!("dropping {file}: {reason}");
                dropped.push((file, reason));
            }
        }
    }
    if kept.is_empty() && dropped.is_empty() {
        return Err(Error::MissingInput(dir.join("*.json")));
    }
    Ok((kept, dropped))
}

pub struct Pipeline {
    pub config: ExperimentConfig,
    provenance: Provenance,
    cache: StageCache,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let provenance = config.provenance();
        let cache = StageCache::new(&config.output_dir, &provenance.config_hash);
        Ok(Self { config, provenance, cache })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn root(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn generated_demo_dir(&self) -> PathBuf {
        self.root().join("demos")
    }

    /// Where demonstrations are read from by the later stages.
    pub fn demo_dir(&self) -> PathBuf {
        self.config.demo_dir.clone().unwrap_or_else(|| self.generated_demo_dir())
    }

    pub fn human_metrics_path(&self) -> PathBuf {
        self.root().join("metrics/human.csv")
    }

    pub fn policy_metrics_path(&self) -> PathBuf {
        self.root().join("metrics/policy.csv")
    }

    pub fn policy_path(&self) -> PathBuf {
        self.root().join("policy/policy.json")
    }

    pub fn history_path(&self) -> PathBuf {
        self.root().join("policy/history.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root().join("report")
    }

    fn demo_inputs(&self) -> Result<Vec<PathBuf>> {
        dir_files(&self.demo_dir())
    }

    fn write_resolved_config(&self) -> Result<PathBuf> {
        let path = self.root().join("config.toml");
        let mut text = format!(
            "# config_hash={} seed={}\n",
            self.provenance.config_hash, self.provenance.seed
        );
        let mut archived = self.config.clone();
        archived.output_dir = PathBuf::from(".");
        text.push_str(&archived.to_toml());
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    fn gen_body(&self) -> Result<Vec<PathBuf>> {
        let generator = DemoGenerator::new(
            self.config.generator.clone(),
            self.config.chain.clone(),
            self.config.metrics,
        )?
        .with_provenance(self.provenance.clone());
        let dataset = generator.generate_dataset()?;
        if let Some(id) = &dataset.dropped {
            info!("paper-replica mode dropped trial {id}");
        }
        let dir = self.generated_demo_dir();
        // stale files from an earlier, larger run would otherwise be picked up
        for old in dir_files(&dir)? {
            fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
        }
        write_dataset(&dir, &dataset, &self.provenance)?;
        let mut out = dir_files(&dir)?;
        out.push(self.write_resolved_config()?);
        info!("wrote {} demonstrations to {}", dataset.demos.len(), dir.display());
        Ok(out)
    }

    fn metrics_body(&self) -> Result<Vec<PathBuf>> {
        let (kept, dropped) = load_demos(&self.demo_dir(), &self.config.metrics)?;
        let metrics: Vec<TrialMetric> = kept
            .iter()
            .map(|d| TrialMetric {
                trial_id: d.trial_id.clone(),
                source: Source::Human,
                distance_m: d.trajectory.distance_m,
                width_m: d.trajectory.width_m,
                movement_time_s: Some(d.movement_time_s),
                success: true,
            })
            .collect();
        let path = self.human_metrics_path();
        write_metrics_csv(&path, &metrics, &self.provenance)?;
        let drop_path = self.root().join("metrics/human_dropped.csv");
        let mut text = provenance_comment(&self.provenance);
        text.push_str("file,code,detail\n");
        for (file, reason) in &dropped {
            let _ = writeln!(text, "{file},{},\"{}\"", reason.code, reason.detail.replace('"', "'"));
        }
        write_atomic(&drop_path, text.as_bytes())?;
        info!("{} human trials measured, {} dropped", metrics.len(), dropped.len());
        Ok(vec![path, drop_path])
    }

    fn train_body(&self) -> Result<(Vec<PathBuf>, TrainingHistory)> {
        let (kept, _) = load_demos(&self.demo_dir(), &self.config.metrics)?;
        let trajectories: Vec<JointTrajectory> = kept.into_iter().map(|d| d.trajectory).collect();
        let (bundle, history) = train(&trajectories, &self.config.policy)?;
        let bundle = bundle.with_provenance(self.provenance.clone());
        bundle.save(&self.policy_path())?;
        history.write_csv(&self.history_path(), &self.provenance)?;
        info!(
            "trained for {} epochs, best epoch {} (validation loss {:.3e})",
            history.stopped_epoch,
            history.best_epoch,
            history.best_val_loss()
        );
        Ok((vec![self.policy_path(), self.history_path()], history))
    }

    /// Targets from the manifest when available, else the final demo frame.
    fn targets(&self, demos: &[LoadedDemo]) -> Result<Vec<Point3<f64>>> {
        let manifest: BTreeMap<String, [f64; 3]> = match read_manifest(&self.demo_dir()) {
            Ok(entries) => entries.into_iter().map(|e| (e.file, e.target)).collect(),
            Err(Error::MissingInput(_)) => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        demos
            .iter()
            .map(|d| match manifest.get(&d.file) {
                Some(t) => Ok(Point3::from(*t)),
                None => {
                    let last = d.trajectory.q.last().ok_or(Error::EmptyDataset)?;
                    self.config.chain.forward_kinematics(last)
                }
            })
            .collect()
    }

    fn rollout_body(&self) -> Result<Vec<PathBuf>> {
        let bundle = PolicyBundle::load(&self.policy_path())?;
        let (demos, _) = load_demos(&self.demo_dir(), &self.config.metrics)?;
        let targets = self.targets(&demos)?;
        let results = std::thread::scope(|s| {
            let handles: Vec<_> = demos
                .iter()
                .zip(&targets)
                .map(|(d, t)| {
                    let bundle = &bundle;
                    s.spawn(move || rollout(bundle, &self.config.chain, &d.trajectory, t, &self.config.rollout))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("rollout thread")).collect::<Result<Vec<_>>>()
        })?;
        let mut written = Vec::new();
        let metrics: Vec<TrialMetric> = demos
            .iter()
            .zip(&results)
            .map(|(d, r)| TrialMetric {
                trial_id: d.trial_id.clone(),
                source: Source::Policy,
                distance_m: d.trajectory.distance_m,
                width_m: d.trajectory.width_m,
                movement_time_s: r.movement_time_s,
                success: r.success,
            })
            .collect();
        write_metrics_csv(&self.policy_metrics_path(), &metrics, &self.provenance)?;
        written.push(self.policy_metrics_path());
        written.push(self.write_diagnostics(&demos, &results)?);
        if self.config.dump_rollouts {
            let dir = self.root().join("rollouts");
            for (d, r) in demos.iter().zip(&results) {
                let path = dir.join(format!("rollout_{}.json", d.trial_id));
                write_demo(&path, &r.trajectory.to_record(Some(d.trial_id.clone()), Some(self.provenance.clone())))?;
                written.push(path);
            }
        }
        let successes = results.iter().filter(|r| r.success).count();
        info!("{successes}/{} rollouts reached the target", results.len());
        Ok(written)
    }

    fn write_diagnostics(&self, demos: &[LoadedDemo], results: &[RolloutResult]) -> Result<PathBuf> {
        let path = self.root().join("metrics/rollouts.csv");
        let mut text = provenance_comment(&self.provenance);
        text.push_str("trial_id,termination,steps,timeout_steps,success_step,orbit_steps,min_distance_m\n");
        for (d, r) in demos.iter().zip(results) {
            let term = serde_json::to_value(r.termination).expect("enum");
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{}",
                d.trial_id,
                term.as_str().unwrap_or_default(),
                r.steps,
                self.config.rollout.timeout_steps(d.trajectory.len()),
                r.success_step.map_or(String::new(), |s| s.to_string()),
                r.orbit_steps,
                r.min_distance_m
            );
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    fn read_optional(path: &Path) -> Result<Option<Vec<TrialMetric>>> {
        match read_metrics_csv(path) {
            Ok(m) => Ok(Some(m)),
            Err(Error::MissingInput(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn analyze_body(&self) -> Result<(Vec<PathBuf>, AnalysisReport)> {
        let human = Self::read_optional(&self.human_metrics_path())?;
        let policy = Self::read_optional(&self.policy_metrics_path())?;
        if human.is_none() && policy.is_none() {
            return Err(Error::MissingInput(self.human_metrics_path()));
        }
        let report = analyze_metrics(human.as_deref(), policy.as_deref(), self.config.analysis.outlier_rule);
        let dir = self.report_dir();
        let mut written = Vec::new();
        let fits = dir.join("fits.csv");
        write_atomic(&fits, fits_csv(&report, &self.provenance).as_bytes())?;
        written.push(fits);
        for (src, title, name) in [
            (&report.human, "Human demonstrations", "fitts_human.svg"),
            (&report.policy, "Policy rollouts", "fitts_policy.svg"),
        ] {
            let path = dir.join(name);
            match src.as_ref().map(|s| &s.fitts) {
                Some(Ok(fit)) => {
                    write_atomic(&path, scatter_svg(title, fit, &self.provenance).as_bytes())?;
                    written.push(path);
                }
                _ => {
                    if path.exists() {
                        fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                    }
                }
            }
        }
        let summary = dir.join("summary.md");
        write_atomic(&summary, summary_markdown(&report, &self.provenance).as_bytes())?;
        written.push(summary);
        Ok((written, report))
    }

    pub fn gen(&self) -> Result<StageOutcome> {
        self.cache.run("gen", &[], true, || self.gen_body())
    }

    pub fn metrics(&self) -> Result<StageOutcome> {
        self.cache.run("metrics", &self.demo_inputs()?, true, || self.metrics_body())
    }

    pub fn train(&self) -> Result<TrainingHistory> {
        let mut history = None;
        self.cache.run("train", &self.demo_inputs()?, true, || {
            let (files, h) = self.train_body()?;
            history = Some(h);
            Ok(files)
        })?;
        Ok(history.expect("stage ran"))
    }

    pub fn rollout(&self) -> Result<StageOutcome> {
        let mut inputs = self.demo_inputs()?;
        inputs.push(self.policy_path());
        self.cache.run("rollout", &inputs, true, || self.rollout_body())
    }

    pub fn analyze(&self) -> Result<AnalysisReport> {
        let mut report = None;
        let inputs = self.analysis_inputs();
        self.cache.run("analyze", &inputs, true, || {
            let (files, r) = self.analyze_body()?;
            report = Some(r);
            Ok(files)
        })?;
        Ok(report.expect("stage ran"))
    }

    fn analysis_inputs(&self) -> Vec<PathBuf> {
        [self.human_metrics_path(), self.policy_metrics_path()]
            .into_iter()
            .filter(|p| p.exists())
            .collect()
    }

    /// Every stage in order, skipping those whose inputs are unchanged.
    pub fn all(&self) -> Result<Vec<StageOutcome>> {
        let mut outcomes = Vec::new();
        if self.config.demo_dir.is_none() {
            outcomes.push(self.cache.run("gen", &[], false, || self.gen_body())?);
        }
        outcomes.push(self.cache.run("metrics", &self.demo_inputs()?, false, || self.metrics_body())?);
        outcomes.push(self.cache.run("train", &self.demo_inputs()?, false, || {
            Ok(self.train_body()?.0)
        })?);
        let mut inputs = self.demo_inputs()?;
        inputs.push(self.policy_path());
        outcomes.push(self.cache.run("rollout", &inputs, false, || self.rollout_body())?);
        let inputs = self.analysis_inputs();
        outcomes.push(self.cache.run("analyze", &inputs, false, || Ok(self.analyze_body()?.0))?);
        Ok(outcomes)
    }
}
