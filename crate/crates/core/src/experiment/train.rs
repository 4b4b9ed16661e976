//! Training loop and the three evaluation protocols.

use crate::data::{augment, holdout_split, kfold, load_cifar10, standardize, synthetic_dataset, Dataset, DatasetStats};
use crate::error::{Error, Result};
use crate::experiment::config::{CrossValidation, DatasetSource, ExperimentConfig, OptimizerKind};
use crate::nn::{network_backward, network_forward, softmax, softmax_xent, Mode, NetworkConfig, Params};
use crate::optim::{Adam, Optimizer, Sgd};
use crate::parallel::ordered_map;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Samples per gradient shard. Shards, not workers, fix the summation
/// order, so results do not depend on the thread count.
pub const SHARD: usize = 16;
const EVAL_BATCH: usize = 128;

/// Stream ids under the experiment seed.
const DATA_STREAM: u64 = 100;
const INIT_STREAM: u64 = 10;
const SPLIT_STREAM: u64 = 5;
const EPOCH_STREAM: u64 = 20;

pub const METRICS_HEADER: &str = "phase,epoch,lr,weight_decay,train_loss,train_error,test_loss,test_error";

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub phase: String,
    pub epoch: u32,
    pub lr: f64,
    pub weight_decay: f64,
    pub train_loss: f64,
    pub train_error: f64,
    pub test_loss: f64,
    pub test_error: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:.10},{:.6},{:.10},{:.6}",
            self.phase, self.epoch, self.lr, self.weight_decay, self.train_loss, self.train_error, self.test_loss, self.test_error
        )
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub error: f64,
    /// `N × classes` softmax probabilities.
    pub probs: Tensor,
}

/// Eval-mode loss, error rate and class probabilities.
pub fn evaluate(cfg: &NetworkConfig, params: &Params, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let chunks: Vec<&[usize]> = idx.chunks(EVAL_BATCH).collect();
    let parts = ordered_map(&chunks, |_, c| -> Result<(f64, Tensor)> {
        let (x, labels) = data.batch(c)?;
        let (logits, _) = network_forward(cfg, params, &x, Mode::Eval)?;
        let (loss, _) = softmax_xent(&logits, &labels)?;
        Ok((loss * c.len() as f64, softmax(&logits)))
    });
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(data.len() * cfg.classes());
    for p in parts {
        let (l, pr) = p?;
        loss += l;
        probs.extend_from_slice(pr.data());
    }
    let probs = Tensor::new([data.len(), cfg.classes()], probs)?;
    let pred = argmax_rows(&probs);
    let wrong = pred.iter().zip(data.labels()).filter(|(p, l)| **p != *l).count();
    Ok(Evaluation {
        loss: loss / data.len() as f64,
        error: wrong as f64 / data.len() as f64,
        probs,
    })
}

pub fn argmax_rows(scores: &Tensor) -> Vec<usize> {
    let k = scores.cols();
    scores
        .data()
        .chunks(k)
        .map(|r| (0..k).fold(0, |b, j| if r[j] > r[b] { j } else { b }))
        .collect()
}

/// Predictions from summed per-model softmax scores.
pub fn vote(probs: &[Tensor]) -> Result<Vec<usize>> {
    let first = probs.first().ok_or_else(|| Error::invalid("vote needs at least one model"))?;
    let mut sum = first.clone();
    for p in &probs[1..] {
        sum = sum.add(p)?;
    }
    Ok(argmax_rows(&sum))
}

/// Mean and standard error over per-model error rates.
pub fn average_error(errors: &[f64]) -> (f64, f64) {
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    if errors.len() < 2 {
        return (mean, 0.0);
    }
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn new_optimizer(kind: OptimizerKind, params: &Params) -> Optimizer {
    match kind {
        OptimizerKind::Sgd { momentum } => Optimizer::Sgd(Sgd::new(params, 0.0, momentum, 0.0)),
        OptimizerKind::Adam => Optimizer::Adam(Adam::new(params, 0.0)),
    }
}

/// One pass over `data` in minibatches. `stream` is private to this epoch.
pub fn train_epoch(
    exp: &ExperimentConfig,
    cfg: &NetworkConfig,
    params: &mut Params,
    opt: &mut Optimizer,
    data: &Dataset,
    stream: &RngStream,
) -> Result<()> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    stream.split(0).shuffle(&mut order);
    for (b, batch) in order.chunks(exp.batch_size).enumerate() {
        let shards: Vec<&[usize]> = batch.chunks(SHARD).collect();
        let batch_stream = stream.split(1 + b as u64);
        let frozen: &Params = params;
        let parts = ordered_map(&shards, |s, idx| -> Result<Params> {
            let mut rng = batch_stream.split(s as u64);
            let mut x = Vec::new();
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx.iter() {
                let im = &data.images[i];
                let px = if exp.augment.hflip || exp.augment.shift > 0 {
                    augment(&im.pixels, &mut rng, exp.augment)?
                } else {
                    im.pixels.clone()
                };
                x.extend_from_slice(px.data());
                labels.push(im.label);
            }
            let mut shape = vec![idx.len()];
            shape.extend_from_slice(data.images[idx[0]].pixels.shape());
            let x = Tensor::new(shape, x)?;
            let (logits, cache) = network_forward(cfg, frozen, &x, Mode::Train(&mut rng))?;
            let (_, g) = softmax_xent(&logits, &labels)?;
            Ok(network_backward(cfg, frozen, &cache, &g)?.0)
        });
        let mut grads = params.zeros_like();
        for (p, idx) in parts.into_iter().zip(&shards) {
            grads.add_scaled(&p?, idx.len() as f64 / batch.len() as f64)?;
        }
        opt.step(params, &grads)?;
    }
    Ok(())
}

/// Train and test splits, standardised with training statistics if configured.
pub fn load_datasets(exp: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (mut train, mut test) = match &exp.dataset {
        DatasetSource::Synthetic(spec) => {
            let d = synthetic_dataset(&RngStream::new(exp.seed).split(DATA_STREAM), spec)?;
            (d.train, d.test)
        }
        DatasetSource::Cifar10 {
            path,
            train_subset,
            test_subset,
        } => {
            let (mut tr, mut te) = load_cifar10(path)?;
            if let Some(n) = train_subset {
                tr.images.truncate(*n);
            }
            if let Some(n) = test_subset {
                te.images.truncate(*n);
            }
            (tr, te)
        }
    };
    if exp.standardize {
        let stats = DatasetStats::compute(&train.images)?;
        train.images = standardize(&train.images, &stats)?;
        test.images = standardize(&test.images, &stats)?;
    }
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub name: String,
    pub params: Params,
    pub optimizer: Optimizer,
    pub epoch: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub network: NetworkConfig,
    pub models: Vec<TrainedModel>,
    pub metrics: Vec<EpochMetrics>,
    /// `(metric, value)` pairs describing the protocol's final result.
    pub summary: Vec<(String, f64)>,
}

impl TrainOutcome {
    pub const SUMMARY_HEADER: &'static str = "metric,value";

    pub fn summary_csv(&self) -> String {
        let mut s = format!("{}\n", Self::SUMMARY_HEADER);
        for (k, v) in &self.summary {
            s.push_str(&format!("{k},{v:.10}\n"));
        }
        s
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

struct Run<'a> {
    exp: &'a ExperimentConfig,
    cfg: &'a NetworkConfig,
    root: RngStream,
}

impl Run<'_> {
    /// Trains a fresh model from initialisation `init`, calling `stop` after
    /// every epoch with the metrics row; training ends early when it returns true.
    fn fit(
        &self,
        phase: &str,
        init: u64,
        train: &Dataset,
        monitor: &Dataset,
        metrics: &mut Vec<EpochMetrics>,
        mut stop: impl FnMut(&EpochMetrics) -> bool,
    ) -> Result<TrainedModel> {
        let mut params = self.cfg.init_params(&mut self.root.split(INIT_STREAM).split(init));
        let mut opt = new_optimizer(self.exp.optimizer, &params);
        let streams = self.root.split(EPOCH_STREAM).split(init);
        let mut epoch = 0;
        for e in 1..=self.exp.epochs {
            let (lr, wd) = self.exp.schedule.at(e);
            opt.set_hyper(lr, wd);
            train_epoch(self.exp, self.cfg, &mut params, &mut opt, train, &streams.split(e as u64))?;
            let tr = evaluate(self.cfg, &params, train)?;
            let te = evaluate(self.cfg, &params, monitor)?;
            let row = EpochMetrics {
                phase: phase.to_string(),
                epoch: e,
                lr,
                weight_decay: wd,
                train_loss: tr.loss,
                train_error: tr.error,
                test_loss: te.loss,
                test_error: te.error,
            };
            epoch = e;
            let done = stop(&row);
            metrics.push(row);
            if done {
                break;
            }
        }
        Ok(TrainedModel {
            name: phase.to_string(),
            params,
            optimizer: opt,
            epoch,
        })
    }
}

/// Runs the configured protocol. For `single` the holdout phase reports the
/// holdout set in its test columns.
pub fn run_experiment(exp: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<TrainOutcome> {
    let cfg = exp.network_config()?;
    let run = Run {
        exp,
        cfg: &cfg,
        root: RngStream::new(exp.seed),
    };
    let mut metrics = Vec::new();
    let mut summary = Vec::new();
    let mut models = Vec::new();
    match exp.cv {
        CrossValidation::None => {
            let m = run.fit("train", 0, train, test, &mut metrics, |_| false)?;
            let ev = evaluate(&cfg, &m.params, test)?;
            summary.push(("test_error".into(), ev.error));
            summary.push(("test_loss".into(), ev.loss));
            models.push(m);
        }
        CrossValidation::Single { holdout } => {
            let (rest, hold) = holdout_split(train.len(), holdout, &mut run.root.split(SPLIT_STREAM))?;
            let (rest, hold) = (train.subset(&rest), train.subset(&hold));
            let first = run.fit("holdout", 0, &rest, &hold, &mut metrics, |_| false)?;
            let target = evaluate(&cfg, &first.params, &hold)?.loss;
            let m = run.fit("retrain", 0, train, test, &mut metrics, |row| row.train_loss <= target)?;
            let ev = evaluate(&cfg, &m.params, test)?;
            summary.push(("holdout_loss".into(), target));
            summary.push(("retrain_epochs".into(), m.epoch as f64));
            summary.push(("test_error".into(), ev.error));
            summary.push(("test_loss".into(), ev.loss));
            models.push(m);
        }
        CrossValidation::KFold { folds } => {
            let parts = kfold(train.len(), folds, &mut run.root.split(SPLIT_STREAM))?;
            let mut errors = Vec::with_capacity(folds);
            let mut probs = Vec::with_capacity(folds);
            for k in 0..parts.len() {
                let keep: Vec<usize> = parts
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                let m = run.fit(&format!("fold{k}"), k as u64, &train.subset(&keep), test, &mut metrics, |_| false)?;
                let ev = evaluate(&cfg, &m.params, test)?;
                errors.push(ev.error);
                probs.push(ev.probs);
                models.push(m);
            }
            let (mean, se) = average_error(&errors);
            let pred = vote(&probs)?;
            let wrong = pred.iter().zip(test.labels()).filter(|(p, l)| **p != *l).count();
            summary.push(("average_test_error".into(), mean));
            summary.push(("average_test_error_se".into(), se));
            summary.push(("vote_test_error".into(), wrong as f64 / test.len() as f64));
        }
    }
    Ok(TrainOutcome {
        network: cfg,
        models,
        metrics,
        summary,
    })
}
