use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bundle::PolicyBundle;
use super::mlp::{mse, Mlp};
use super::optim::{clip_grad_norm, AdamW, PlateauScheduler};
use super::sampler::ConditionSampler;
use super::windows::{build_windows, NormStats, Windows};
use super::{PolicyConfig, SplitLevel};
use crate::error::{Error, Result};
use crate::io::{derive_seed, write_atomic};
use crate::kinematics::JOINT_COUNT;
use crate::trajectory::{provenance_comment, JointTrajectory, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainingHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(f64::NAN, |e| e.val_loss)
    }

    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut out = provenance_comment(prov);
        out.push_str("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:e},{:e},{:e}", e.epoch, e.train_loss, e.val_loss, e.lr);
        }
        out
    }

    pub fn write_csv(&self, path: &Path, prov: &Provenance) -> Result<()> {
        write_atomic(path, self.to_csv(prov).as_bytes())
    }
}

/// Seeded partition of `0..n` into (train, validation) index lists.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed("fitts-bench/split", &[seed])));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

struct Assembled {
    x: Array2<f64>,
    y: Array2<f64>,
    condition: Vec<usize>,
    demo: Vec<usize>,
    n_conditions: usize,
}

fn assemble(demos: &[JointTrajectory], cfg: &PolicyConfig) -> Result<Assembled> {
    let mut levels: BTreeMap<u64, usize> = BTreeMap::new();
    let mut parts: Vec<(usize, Windows)> = Vec::new();
    for (i, d) in demos.iter().enumerate() {
        d.check_finite()?;
        match build_windows(d, cfg.history_len, d.distance_m, cfg.distance_scale) {
            Ok(w) => parts.push((i, w)),
            Err(e @ Error::InsufficientData { .. }) => warn!("skipping demonstration {i}: {e}"),
            Err(e) => return Err(e),
        }
    }
    if parts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted: Vec<f64> = parts.iter().map(|(i, _)| demos[*i].distance_m).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for (k, d) in sorted.iter().enumerate() {
        levels.insert(d.to_bits(), k);
    }
    let mut condition = Vec::new();
    let mut demo = Vec::new();
    for (i, w) in &parts {
        let c = levels[&demos[*i].distance_m.to_bits()];
        condition.extend(std::iter::repeat_n(c, w.len()));
        demo.extend(std::iter::repeat_n(*i, w.len()));
    }
    let xs: Vec<_> = parts.iter().map(|(_, w)| w.x.view()).collect();
    let ys: Vec<_> = parts.iter().map(|(_, w)| w.y.view()).collect();
    Ok(Assembled {
        x: concatenate(Axis(0), &xs).expect("equal widths"),
        y: concatenate(Axis(0), &ys).expect("equal widths"),
        condition,
        demo,
        n_conditions: sorted.len(),
    })
}

fn partition(data: &Assembled, cfg: &PolicyConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    match cfg.split {
        SplitLevel::Window => split_indices(data.x.nrows(), cfg.val_fraction, cfg.seed),
        SplitLevel::Demo => {
            let mut ids = data.demo.clone();
            ids.dedup();
            let (train_demos, _) = split_indices(ids.len(), cfg.val_fraction, cfg.seed)?;
            let train_set: std::collections::BTreeSet<usize> =
                train_demos.iter().map(|&k| ids[k]).collect();
            let (train, val) = (0..data.demo.len()).partition(|&r| train_set.contains(&data.demo[r]));
            Ok((train, val))
        }
    }
}

/// Trains a policy on the given demonstrations.
///
/// Deterministic for a fixed config: the split, initialization, sampling and
/// dropout each draw from their own stream derived from `cfg.seed`.
pub fn train(demos: &[JointTrajectory], cfg: &PolicyConfig) -> Result<(PolicyBundle, TrainingHistory)> {
    cfg.validate()?;
    let first = demos.first().ok_or(Error::EmptyDataset)?;
    if let Some(d) = demos.iter().find(|d| d.joint_names != first.joint_names) {
        return Err(Error::Contract(format!(
            "joint order differs between demonstrations: {:?} vs {:?}",
            first.joint_names, d.joint_names
        )));
    }
    let data = assemble(demos, cfg)?;
    let (train_idx, val_idx) = partition(&data, cfg)?;
    if train_idx.len() < 2 || val_idx.is_empty() {
        return Err(Error::InsufficientData { needed: 3, got: data.x.nrows() });
    }

    let mut x_train = data.x.select(Axis(0), &train_idx);
    let mut y_train = data.y.select(Axis(0), &train_idx);
    let mut x_val = data.x.select(Axis(0), &val_idx);
    let mut y_val = data.y.select(Axis(0), &val_idx);
    let norm = NormStats::fit(&x_train, &y_train)?;
    norm.normalize_x(&mut x_train);
    norm.normalize_y(&mut y_train);
    norm.normalize_x(&mut x_val);
    norm.normalize_y(&mut y_val);

    let train_conditions: Vec<usize> = train_idx.iter().map(|&r| data.condition[r]).collect();
    let mut present: Vec<usize> = train_conditions.clone();
    present.sort_unstable();
    present.dedup();
    let dense: Vec<usize> = train_conditions
        .iter()
        .map(|c| present.binary_search(c).expect("present"))
        .collect();
    let sampler = ConditionSampler::new(&dense, present.len())?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed("fitts-bench/init", &[cfg.seed]));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed("fitts-bench/sample", &[cfg.seed]));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed("fitts-bench/dropout", &[cfg.seed]));

    let mut net = Mlp::init(&cfg.layer_sizes(JOINT_COUNT), &mut init_rng);
    let mut opt = AdamW::new(&net, cfg.weight_decay);
    let mut sched =
        PlateauScheduler::new(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    let mut history = TrainingHistory::default();
    let mut best = (f64::INFINITY, net.clone(), 0usize);

    info!(
        "training on {} windows ({} validation), {} conditions",
        train_idx.len(),
        val_idx.len(),
        data.n_conditions
    );
    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        let draws = sampler.draw(train_idx.len(), &mut sample_rng);
        let mut loss_sum = 0.0;
        for batch in draws.chunks(cfg.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let yb = y_train.select(Axis(0), batch);
            let (loss, mut grads) = net.loss_and_grad(xb.view(), yb.view(), cfg.dropout, &mut drop_rng)?;
            clip_grad_norm(&mut grads, cfg.grad_clip_norm);
            opt.step(&mut net, &grads, lr);
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / draws.len() as f64;
        let val_loss = mse(&net.forward(x_val.view())?, &y_val);
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, lr });
        history.stopped_epoch = epoch;
        if !val_loss.is_finite() {
            warn!("validation loss became non-finite at epoch {epoch}; stopping");
            break;
        }
        if val_loss < best.0 {
            best = (val_loss, net.clone(), epoch);
        }
        sched.step(val_loss);
        if cfg.early_stopping && epoch - best.2 >= cfg.early_stop_patience {
            info!("early stop at epoch {epoch}, best epoch {}", best.2);
            break;
        }
    }
    if best.2 == 0 {
        return Err(Error::Contract("training produced no finite validation loss".into()));
    }
    history.best_epoch = best.2;
    let bundle = PolicyBundle::new(cfg.clone(), norm, best.1, first.joint_names.clone())?;
    Ok((bundle, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = split_indices(50, 0.2, 4).unwrap();
        assert_eq!((a.len(), b.len()), (40, 10));
        let (a2, b2) = split_indices(50, 0.2, 4).unwrap();
        assert_eq!((&a, &b), (&a2, &b2));
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_ne!(split_indices(50, 0.2, 5).unwrap().1, b);
    }

    #[test]
    fn tiny_split_keeps_both_sides() {
        let (a, b) = split_indices(2, 0.01, 0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
    }
}
