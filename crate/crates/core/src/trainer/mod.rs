//! Minibatch training with a plateau schedule, best-validation
//! checkpointing and per-epoch CSV metrics.

pub mod checkpoint;
pub mod metrics;
pub mod optim;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchNormStats, Tape};
use crate::datasets::Example;
use crate::error::{Error, Result};
use crate::models::{Mode, Model, Targets};
use crate::tensor::{precision, set_precision, Tensor};

pub use checkpoint::{Checkpoint, RngState};
pub use metrics::{accuracy, average_precision, roc_auc, tagging_metrics, TaggingMetrics};
pub use optim::{OptimizerKind, OptimizerState, Plateau};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    /// Overrides the architecture's penalty weight when set.
    pub lambda: Option<f64>,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Stop once the learning rate falls below this.
    pub lr_floor: Option<f64>,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
    /// Each batch is split into this many shards whose gradients are
    /// computed concurrently and summed in shard order.
    pub shards: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            optimizer: OptimizerKind::adam(),
            lr: 1e-3,
            weight_decay: 0.0,
            lambda: None,
            plateau_patience: 5,
            plateau_factor: 0.5,
            lr_floor: Some(1e-7),
            max_steps: None,
            shards: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.shards == 0 || self.shards > self.batch_size {
            return Err(Error::config("shards", "must be in 1..=batch_size"));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::config("lr", "must be non-negative"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::config("plateau_factor", "must be in (0, 1]"));
        }
        if self.lambda.is_some_and(|l| !(l >= 0.0)) {
            return Err(Error::config("lambda", "must be non-negative"));
        }
        Ok(())
    }
}

/// One row of `metrics.csv`. Fields that do not apply to the head are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: Option<f64>,
    pub val_loss: f64,
    pub val_acc: Option<f64>,
    pub val_auc_class: Option<f64>,
    pub val_auc_clip: Option<f64>,
    pub val_map: Option<f64>,
    pub filter_avg: Option<f64>,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str =
        "epoch,steps,lr,train_loss,train_acc,val_loss,val_acc,val_auc_class,val_auc_clip,val_map,filter_avg";

    pub fn csv_row(&self) -> String {
        let o = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.steps,
            self.lr,
            self.train_loss,
            o(self.train_acc),
            self.val_loss,
            o(self.val_acc),
            o(self.val_auc_class),
            o(self.val_auc_clip),
            o(self.val_map),
            o(self.filter_avg)
        )
    }
}

pub fn write_metrics_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut s = String::from(EpochRecord::CSV_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// A labelled batch held in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `[n, channels, len]`.
    pub inputs: Tensor,
    pub targets: DatasetTargets,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetTargets {
    Classes(Vec<usize>),
    /// `[n, classes]` in {0, 1}.
    MultiLabel(Tensor),
}

impl Dataset {
    pub fn from_examples(examples: &[Example]) -> Result<Self> {
        let len = examples.first().map_or(0, |e| e.samples.len());
        if let Some(e) = examples.iter().find(|e| e.samples.len() != len) {
            return Err(Error::dim("dataset", "example length", len, e.samples.len()));
        }
        let data = examples.iter().flat_map(|e| e.samples.iter().copied()).collect();
        Ok(Dataset {
            inputs: Tensor::new(&[examples.len(), 1, len], data)?,
            targets: DatasetTargets::Classes(examples.iter().map(|e| e.label).collect()),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inputs and targets of the rows `idx`, in that order.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Targets)> {
        let row = self.inputs.len() / self.len().max(1);
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = idx.len();
        let mut x = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            x.extend_from_slice(&self.inputs.data()[i * row..(i + 1) * row]);
        }
        let t = match &self.targets {
            DatasetTargets::Classes(l) => Targets::Classes(idx.iter().map(|&i| l[i]).collect()),
            DatasetTargets::MultiLabel(t) => {
                let k = t.dim(1);
                let mut d = Vec::with_capacity(idx.len() * k);
                for &i in idx {
                    d.extend_from_slice(&t.data()[i * k..(i + 1) * k]);
                }
                Targets::MultiLabel(Tensor::new(&[idx.len(), k], d)?)
            }
        };
        Ok((Tensor::new(&shape, x)?, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub tagging: Option<TaggingMetrics>,
}

/// Evaluation-mode loss (without penalty) and metrics over a whole dataset.
pub fn evaluate(model: &mut Model, data: &Dataset, batch_size: usize) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::UndefinedMetric("evaluation of an empty split".into()));
    }
    let n = data.len();
    let mut logits = Vec::with_capacity(n);
    let mut loss_sum = 0.0;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, t) = data.batch(chunk)?;
        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let xv = tape.constant(x);
        let f = model.forward(&mut tape, &vars, xv, Mode::Eval)?;
        let l = model.loss(&mut tape, &vars, f.logits, &t, 0.0)?;
        loss_sum += tape.value(l).item() * chunk.len() as f64;
        logits.extend_from_slice(tape.value(f.logits).data());
    }
    let k = logits.len() / n;
    let logits = Tensor::new(&[n, k], logits)?;
    let (accuracy, tagging) = match &data.targets {
        DatasetTargets::Classes(l) => (Some(metrics::accuracy(&logits, l)?), None),
        DatasetTargets::MultiLabel(t) => (None, Some(tagging_metrics(&logits, t)?)),
    };
    Ok(EvalReport {
        loss: loss_sum / n as f64,
        accuracy,
        tagging,
    })
}

pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Lowest validation loss seen, with the full training state.
    pub best: Checkpoint,
    /// State after the last step.
    pub last: Checkpoint,
    pub steps: usize,
}

struct ShardResult {
    loss: f64,
    grads: Vec<Tensor>,
    bn: Vec<BatchNormStats>,
}

fn shard_step(model: &mut Model, x: Tensor, t: &Targets, lambda: f64, rng: &mut ChaCha8Rng) -> Result<ShardResult> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let xv = tape.constant(x);
    let f = model.forward(&mut tape, &vars, xv, Mode::Train(rng))?;
    let loss = model.loss(&mut tape, &vars, f.logits, t, lambda)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss {
            layer: Model::first_non_finite(&tape, &f),
        });
    }
    let mut g = tape.backward(loss)?;
    let grads = vars
        .iter()
        .zip(&model.params)
        .map(|(v, p)| g.take(*v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    Ok(ShardResult {
        loss: value,
        grads,
        bn: model.bn_stats.clone(),
    })
}

/// Gradients of the mean loss over `idx`, computed on `shards` parallel
/// model copies and reduced in shard order.
fn batch_gradients(
    model: &mut Model,
    data: &Dataset,
    idx: &[usize],
    shards: usize,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Tensor>)> {
    if shards <= 1 || idx.len() < 2 {
        let (x, t) = data.batch(idx)?;
        let r = shard_step(model, x, &t, lambda, rng)?;
        return Ok((r.loss, r.grads));
    }
    let size = idx.len().div_ceil(shards);
    let parts: Vec<&[usize]> = idx.chunks(size).collect();
    // each shard gets its own dropout stream, derived in order from the trainer rng
    let seeds: Vec<u64> = parts.iter().map(|_| rand::Rng::random(rng)).collect();
    let prec = precision();
    let results: Vec<Result<ShardResult>> = parts
        .par_iter()
        .zip(seeds)
        .map(|(p, seed)| {
            set_precision(prec);
            let mut m = model.clone();
            let (x, t) = data.batch(p)?;
            shard_step(&mut m, x, &t, lambda, &mut ChaCha8Rng::seed_from_u64(seed))
        })
        .collect();
    let mut loss = 0.0;
    let mut grads: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
    let mut stats: Vec<BatchNormStats> = Vec::new();
    for (p, r) in parts.iter().zip(results) {
        let r = r?;
        let w = p.len() as f64 / idx.len() as f64;
        loss += w * r.loss;
        for (g, s) in grads.iter_mut().zip(&r.grads) {
            g.add_assign(&s.scaled(w));
        }
        if stats.is_empty() {
            stats = r.bn.iter().map(|b| BatchNormStats { mean: vec![0.0; b.mean.len()], var: vec![0.0; b.var.len()], ..b.clone() }).collect();
        }
        for (acc, b) in stats.iter_mut().zip(&r.bn) {
            for c in 0..b.mean.len() {
                acc.mean[c] += w * b.mean[c];
                acc.var[c] += w * b.var[c];
            }
        }
    }
    model.bn_stats = stats;
    Ok((loss, grads))
}

fn snapshot(model: &Model, cfg: &TrainConfig, opt: &OptimizerState, rng: &ChaCha8Rng, history: &[EpochRecord]) -> Checkpoint {
    Checkpoint {
        train: Some(cfg.clone()),
        optimizer: Some(opt.clone()),
        rng: Some(RngState::capture(rng)),
        history: history.to_vec(),
        ..Checkpoint::of_model(model)
    }
}

/// Trains `model` in place. With `out`, writes `metrics.csv` after every
/// epoch and `best.swck` whenever validation loss improves.
///
/// Every reduction runs in a fixed order, so a run is bitwise reproducible
/// for a given seed and shard count.
pub fn train(
    model: &mut Model,
    train_data: &Dataset,
    val_data: &Dataset,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::config("data", "train and validation splits must be non-empty"));
    }
    set_precision(model.config.precision);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let lambda = cfg.lambda.unwrap_or(model.config.lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr, cfg.weight_decay, &model.params);
    let mut plateau = Plateau::new(cfg.plateau_factor, cfg.plateau_patience);
    let wavelet = model.config.is_wavelet_net();
    let mut history = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut steps = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let (_, grads) = batch_gradients(model, train_data, idx, cfg.shards, lambda, &mut rng)?;
            opt.apply(&mut model.params, &grads)?;
            steps += 1;
        }
        let tr = evaluate(model, train_data, cfg.batch_size)?;
        let va = evaluate(model, val_data, cfg.batch_size)?;
        let rec = EpochRecord {
            epoch,
            steps,
            lr: opt.lr,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_loss: va.loss,
            val_acc: va.accuracy,
            val_auc_class: va.tagging.map(|t| t.auc_per_class),
            val_auc_clip: va.tagging.map(|t| t.auc_per_clip),
            val_map: va.tagging.map(|t| t.map),
            filter_avg: if wavelet { Some(model.mean_abs_filter_average()?) } else { None },
        };
        log::info!(
            "epoch {epoch}: lr {:.2e} train {:.4} val {:.4} acc {:?}",
            rec.lr,
            rec.train_loss,
            rec.val_loss,
            rec.val_acc
        );
        history.push(rec);
        if best.as_ref().is_none_or(|(l, _)| va.loss < *l) {
            let ck = snapshot(model, cfg, &opt, &rng, &history);
            if let Some(dir) = out {
                ck.save(&dir.join("best.swck"))?;
            }
            best = Some((va.loss, ck));
        }
        if let Some(dir) = out {
            write_metrics_csv(&dir.join("metrics.csv"), &history)?;
        }
        opt.lr = plateau.observe(va.loss, opt.lr);
        if cfg.lr_floor.is_some_and(|f| opt.lr < f) || cfg.max_steps.is_some_and(|m| steps >= m) {
            break 'epochs;
        }
    }
    let last = snapshot(model, cfg, &opt, &rng, &history);
    let best = best.map_or_else(|| last.clone(), |(_, c)| c);
    Ok(TrainOutcome {
        history,
        best,
        last,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_task, SyntheticTask};
    use crate::models::{preset, ArchitectureConfig, LayerSpec};

    fn tiny_task() -> SyntheticTask {
        SyntheticTask {
            per_class: [6, 2, 2],
            len: 64,
            ..SyntheticTask::desk()
        }
    }

    fn data(seed: u64) -> (Dataset, Dataset) {
        let d = generate_task(&tiny_task(), seed).unwrap();
        (Dataset::from_examples(&d.train).unwrap(), Dataset::from_examples(&d.val).unwrap())
    }

    /// Lifting → relu → project → GAP → dense, no batch norm.
    fn plain_wnet() -> ArchitectureConfig {
        let mut c = preset("desk-wnet").unwrap();
        c.input_len = 64;
        c.scales = 3;
        c.layers = vec![
            LayerSpec::Lifting { width: 4, kernel: 9, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::Project { reduce: Default::default() },
            LayerSpec::GlobalMaxPool,
            LayerSpec::Dense { width: 4 },
        ];
        c
    }

    fn bn_wnet() -> ArchitectureConfig {
        let mut c = plain_wnet();
        c.layers.insert(1, LayerSpec::Batchnorm);
        c
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            lr: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_lr_keeps_metrics_constant() {
        let (tr, va) = data(1);
        let mut m = Model::build(&plain_wnet(), 0).unwrap();
        let before = m.params.clone();
        let out = train(&mut m, &tr, &va, &TrainConfig { lr: 0.0, lr_floor: None, ..cfg(3) }, None).unwrap();
        assert_eq!(m.params, before);
        let h = &out.history;
        assert_eq!(h.len(), 3);
        for r in &h[1..] {
            assert_eq!((r.train_loss, r.val_loss, r.val_acc), (h[0].train_loss, h[0].val_loss, h[0].val_acc));
        }
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let (tr, va) = data(2);
        let run = |shards| {
            let mut m = Model::build(&bn_wnet(), 4).unwrap();
            let out = train(&mut m, &tr, &va, &TrainConfig { shards, ..cfg(2) }, None).unwrap();
            (out.history, m.params)
        };
        assert_eq!(run(1), run(1));
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn training_reduces_loss() {
        let (tr, va) = data(3);
        let mut m = Model::build(&plain_wnet(), 1).unwrap();
        let out = train(&mut m, &tr, &va, &cfg(15), None).unwrap();
        assert!(out.history.last().unwrap().train_loss < out.history[0].train_loss);
    }

    #[test]
    fn penalty_shrinks_filter_average() {
        let (tr, va) = data(4);
        let mut m = Model::build(&plain_wnet(), 2).unwrap();
        let init = m.mean_abs_filter_average().unwrap();
        train(&mut m, &tr, &va, &TrainConfig { lambda: Some(1.0), ..cfg(10) }, None).unwrap();
        assert!(m.mean_abs_filter_average().unwrap() < init);
    }

    #[test]
    fn non_finite_loss_names_a_layer() {
        let (mut tr, va) = data(5);
        tr.inputs.data_mut()[3] = f64::NAN;
        let mut m = Model::build(&plain_wnet(), 0).unwrap();
        match train(&mut m, &tr, &va, &cfg(1), None) {
            Err(Error::NonFiniteLoss { layer }) => assert_eq!(layer, "0:lifting"),
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn max_steps_and_outputs() {
        let (tr, va) = data(6);
        let dir = tempfile::tempdir().unwrap();
        let mut m = Model::build(&plain_wnet(), 0).unwrap();
        let out = train(&mut m, &tr, &va, &TrainConfig { max_steps: Some(4), ..cfg(10) }, Some(dir.path())).unwrap();
        assert_eq!(out.steps, 4);
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + out.history.len());
        let best = Checkpoint::load(&dir.path().join("best.swck")).unwrap();
        assert_eq!(best, out.best);
    }

    #[test]
    fn checkpoint_inference_is_bitwise() {
        let mut m = Model::build(&preset("desk-wnet").unwrap(), 0).unwrap();
        m.bn_stats[1].mean[2] = 0.1 + 0.2;
        m.bn_stats[1].var[0] = 1.0 / 3.0;
        let x = Tensor::new(&[2, 1, 512], (0..1024).map(|i| (i as f64 * 0.01).sin()).collect()).unwrap();
        let y = m.predict(&x).unwrap();
        let bytes = Checkpoint::of_model(&m).to_bytes().unwrap();
        let mut back = Checkpoint::from_bytes(&bytes).unwrap().to_model().unwrap();
        assert_eq!(back.predict(&x).unwrap().data(), y.data());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { shards: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
        let toml = toml::to_string(&TrainConfig::default()).unwrap();
        assert_eq!(toml::from_str::<TrainConfig>(&toml).unwrap(), TrainConfig::default());
    }
}
