//! Losses, reverse-mode gradients through the unrolled dynamics, and the
//! train/evaluate protocol (stratified split, repeated rounds).

pub mod loss;
pub mod optim;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event_data::{Dataset, EventStream};
use crate::layers::Retention;
use crate::model::{Architecture, Family, Fusion, Model, ModelSpec, ModelTrace, Prediction, RawOutput};
use crate::neurons::SpikeFn;

pub use loss::{count_grad, loss_count, loss_lsrm, loss_mse, loss_weighted, one_hot, spike_counts, SpikeCountTarget};
pub use optim::{Optimizer, OptimizerKind};

/// Which loss drives training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Spike-count loss on the time-branch output.
    TimeCount,
    /// Spike-count loss on the location-branch output.
    LocationCount,
    /// Weighted spike-count loss over both branches.
    Weighted { lambda: f64 },
    /// Squared error on the (fused) label vector.
    Mse,
}

impl Objective {
    pub fn for_arch(arch: Architecture, lambda: f64) -> Self {
        match arch {
            Architecture::HybridSrmFc => Objective::Weighted { lambda },
            Architecture::SnnTsrm => Objective::TimeCount,
            Architecture::SnnLsrm => Objective::LocationCount,
            _ => Objective::Mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub optimizer: OptimizerKind,
    pub l2: f64,
    /// Weight of the location counts in the weighted count loss.
    pub lambda: f64,
    pub seed: u64,
    pub rounds: usize,
    /// Fraction of each class assigned to the training split.
    pub split: f64,
    /// Desired true-class count as a fraction of the output domain length.
    pub target_true_rate: f64,
    /// Desired false-class count as a fraction of the output domain length.
    pub target_false_rate: f64,
}

impl TrainConfig {
    /// RMSProp with L2 for the SRM family, Adam with decay for the LIF family.
    pub fn for_family(family: Family) -> Self {
        let (optimizer, lr, lr_decay, l2) = match family {
            Family::Srm => (OptimizerKind::Rmsprop, 0.01, 1.0, 1e-4),
            Family::Lif => (OptimizerKind::Adam, 0.002, 0.97, 0.0),
        };
        Self {
            epochs: 50,
            batch_size: 8,
            lr,
            lr_decay,
            optimizer,
            l2,
            lambda: 1.0,
            seed: 0,
            rounds: 5,
            split: 0.8,
            target_true_rate: 0.5,
            target_false_rate: 0.03,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split must lie in (0, 1), got {}", self.split));
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(self.l2 >= 0.0) {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.target_true_rate > self.target_false_rate && self.target_false_rate >= 0.0) {
            return bad(format!(
                "targets need true > false >= 0, got {} and {}",
                self.target_true_rate, self.target_false_rate
            ));
        }
        Ok(())
    }

    fn target(&self, len: usize) -> SpikeCountTarget {
        let len = len as f64;
        SpikeCountTarget {
            true_count: (self.target_true_rate * len).ceil(),
            false_count: (self.target_false_rate * len).ceil(),
        }
    }
}

/// Loss configuration resolved for one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSetup {
    pub objective: Objective,
    pub fusion: Fusion,
    pub time_target: SpikeCountTarget,
    pub location_target: SpikeCountTarget,
    pub combined_target: SpikeCountTarget,
}

impl LossSetup {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Self {
        let (t, n) = (model.spec.n_steps, model.spec.n_taxels);
        Self {
            objective: Objective::for_arch(model.spec.arch, cfg.lambda),
            fusion: model.spec.fusion,
            time_target: cfg.target(t),
            location_target: cfg.target(n),
            combined_target: cfg.target(t + n),
        }
    }
}

/// Loss gradient w.r.t. the branch outputs, class-major like [`RawOutput`].
#[derive(Debug, Clone)]
pub struct OutputGrad {
    pub time: Option<Array2<f64>>,
    pub location: Option<Array2<f64>>,
}

fn need<'a>(o: &'a Option<Array2<f64>>, what: &str) -> Result<&'a Array2<f64>> {
    o.as_ref()
        .ok_or_else(|| Error::Contract(format!("objective needs the {what} branch output")))
}

fn row_means(o: &Array2<f64>) -> Vec<f64> {
    spike_counts(o).into_iter().map(|c| c / o.ncols() as f64).collect()
}

/// Loss value and its gradient w.r.t. the branch outputs.
pub fn output_loss(raw: &RawOutput, label: usize, setup: &LossSetup) -> Result<(f64, OutputGrad)> {
    match setup.objective {
        Objective::TimeCount => {
            let o1 = need(&raw.time, "time")?;
            let target = setup.time_target.vector(label, o1.nrows());
            Ok((
                loss_count(o1, &target)?,
                OutputGrad {
                    time: Some(count_grad(o1, &target, 1.0)),
                    location: None,
                },
            ))
        }
        Objective::LocationCount => {
            let o2 = need(&raw.location, "location")?;
            let target = setup.location_target.vector(label, o2.nrows());
            Ok((
                loss_lsrm(o2, &target)?,
                OutputGrad {
                    time: None,
                    location: Some(count_grad(o2, &target, 1.0)),
                },
            ))
        }
        Objective::Weighted { lambda } => {
            let o1 = need(&raw.time, "time")?;
            let o2 = need(&raw.location, "location")?;
            let target = setup.combined_target.vector(label, o1.nrows());
            let l = loss_weighted(o1, o2, lambda, &target)?;
            let diff: Vec<f64> = spike_counts(o1)
                .iter()
                .zip(spike_counts(o2))
                .zip(&target)
                .map(|((a, b), t)| a + lambda * b - t)
                .collect();
            Ok((
                l,
                OutputGrad {
                    time: Some(Array2::from_shape_fn(o1.dim(), |(k, _)| diff[k])),
                    location: Some(Array2::from_shape_fn(o2.dim(), |(k, _)| lambda * diff[k])),
                },
            ))
        }
        Objective::Mse => {
            let l1 = raw.time.as_ref().map(row_means);
            let l2 = raw.location.as_ref().map(row_means);
            let k = l1.as_ref().or(l2.as_ref()).map(Vec::len).ok_or_else(|| {
                Error::Contract("objective needs at least one branch output".into())
            })?;
            let y = one_hot(label, k);
            // Weight of each branch in the fused vector, per class.
            let (fused, w1, w2): (Vec<f64>, Vec<f64>, Vec<f64>) = match (&l1, &l2) {
                (Some(a), Some(b)) => match setup.fusion {
                    Fusion::Mean => (
                        a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect(),
                        vec![0.5; k],
                        vec![0.5; k],
                    ),
                    Fusion::Max => {
                        let first: Vec<bool> = a.iter().zip(b).map(|(x, y)| x >= y).collect();
                        (
                            a.iter().zip(b).map(|(x, y)| x.max(*y)).collect(),
                            first.iter().map(|&f| f64::from(u8::from(f))).collect(),
                            first.iter().map(|&f| f64::from(u8::from(!f))).collect(),
                        )
                    }
                },
                (Some(a), None) => (a.clone(), vec![1.0; k], vec![0.0; k]),
                (None, Some(b)) => (b.clone(), vec![0.0; k], vec![1.0; k]),
                (None, None) => unreachable!(),
            };
            let l = loss_mse(&fused, &y)?;
            let d: Vec<f64> = fused.iter().zip(&y).map(|(o, t)| 2.0 * (o - t)).collect();
            let spread = |o: &Array2<f64>, w: &[f64]| {
                let len = o.ncols() as f64;
                Array2::from_shape_fn(o.dim(), |(c, _)| d[c] * w[c] / len)
            };
            Ok((
                l,
                OutputGrad {
                    time: raw.time.as_ref().map(|o| spread(o, &w1)),
                    location: raw.location.as_ref().map(|o| spread(o, &w2)),
                },
            ))
        }
    }
}

/// Reverse pass through every branch; gradients come back in
/// [`Model::params`] order.
pub fn backward(model: &Model, trace: &ModelTrace, grad: &OutputGrad) -> Result<Vec<Vec<f64>>> {
    let surrogate = &model.spec.surrogate;
    let mut out = Vec::new();
    for (branch, tr, g) in [
        (&model.time, &trace.time, &grad.time),
        (&model.location, &trace.location, &grad.location),
    ] {
        let Some(branch) = branch else { continue };
        let tr = tr
            .as_ref()
            .ok_or_else(|| Error::Contract("trace is missing a branch of this model".into()))?;
        match g {
            Some(g) => out.extend(branch.backward(tr, &g.t().to_owned(), surrogate)?),
            None => out.extend(branch.params().into_iter().map(|p| vec![0.0; p.len()])),
        }
    }
    Ok(out)
}

/// Loss, gradients and prediction for one labelled stream.
#[derive(Debug, Clone)]
pub struct SampleResult {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    pub prediction: Prediction,
}

pub fn sample_gradient(model: &Model, stream: &EventStream, setup: &LossSetup, spike: SpikeFn) -> Result<SampleResult> {
    let trace = model.forward_trace(stream, spike, Retention::Full)?;
    let raw = trace.raw_output();
    let (loss, og) = output_loss(&raw, stream.label, setup)?;
    let grads = backward(model, &trace, &og)?;
    let prediction = model.predict_raw(&raw)?;
    Ok(SampleResult { loss, grads, prediction })
}

/// Train/test indices into a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class split: each class contributes `round(n_c * fraction)` samples
/// to training and the rest to testing, both non-empty.
pub fn stratified_split(labels: &[usize], n_classes: usize, fraction: f64, rng: &mut impl Rng) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::Split(format!("label {l} outside 0..{n_classes}")));
        }
        by_class[l].push(i);
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (c, mut idx) in by_class.into_iter().enumerate() {
        let n = idx.len();
        let n_train = (n as f64 * fraction).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::Split(format!(
                "class {c} has {n} samples; cannot give both splits at least one at fraction {fraction}"
            )));
        }
        idx.shuffle(rng);
        split.train.extend_from_slice(&idx[..n_train]);
        split.test.extend_from_slice(&idx[n_train..]);
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub round: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

pub const METRICS_HEADER: &str = "round,epoch,train_loss,train_acc,test_acc";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6}",
            self.round, self.epoch, self.train_loss, self.train_acc, self.test_acc
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    /// Final test accuracy of each round.
    pub round_accuracy: Vec<f64>,
}

impl TrainReport {
    pub fn mean_test_accuracy(&self) -> f64 {
        self.round_accuracy.iter().sum::<f64>() / self.round_accuracy.len() as f64
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for m in &self.metrics {
            s.push_str(&m.csv_row());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model trained in the last round.
    pub model: Model,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub predictions: Vec<usize>,
    pub correct: usize,
}

impl EvalSummary {
    pub fn accuracy(&self) -> f64 {
        if self.predictions.is_empty() {
            return 0.0;
        }
        self.correct as f64 / self.predictions.len() as f64
    }
}

pub fn evaluate(model: &Model, streams: &[&EventStream]) -> Result<EvalSummary> {
    let predictions = streams
        .par_iter()
        .map(|s| model.predict(s).map(|p| p.class))
        .collect::<Result<Vec<_>>>()?;
    let correct = predictions.iter().zip(streams).filter(|(p, s)| **p == s.label).count();
    Ok(EvalSummary { predictions, correct })
}

/// Checks that a dataset fits a model before any compute happens.
pub fn check_compatible(spec: &ModelSpec, dataset: &Dataset) -> Result<()> {
    let m = &dataset.meta;
    if (m.n_taxels, m.n_steps, m.n_classes) != (spec.n_taxels, spec.n_steps, spec.n_classes) {
        return Err(Error::Config(format!(
            "model expects N={} T={} K={}, dataset `{}` has N={} T={} K={}",
            spec.n_taxels, spec.n_steps, spec.n_classes, m.name, m.n_taxels, m.n_steps, m.n_classes
        )));
    }
    Ok(())
}

/// Trains `model` in place on `train_set`, evaluating on `test_set` after
/// every epoch. Batches are processed in parallel per sample and reduced
/// in a fixed order, so results do not depend on the thread count.
pub fn train_model(
    model: &mut Model,
    train_set: &[&EventStream],
    test_set: &[&EventStream],
    cfg: &TrainConfig,
    round: usize,
    rng: &mut impl Rng,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    let setup = LossSetup::new(model, cfg);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.l2);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        order.shuffle(rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| sample_gradient(model, train_set[i], &setup, SpikeFn::Heaviside))
                .collect::<Result<Vec<_>>>()?;
            let mut acc: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
            for (r, &i) in results.iter().zip(batch) {
                loss_sum += r.loss;
                correct += usize::from(r.prediction.class == train_set[i].label);
                for (a, g) in acc.iter_mut().zip(&r.grads) {
                    for (x, y) in a.iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                a.iter_mut().for_each(|x| *x *= scale);
            }
            opt.step(model.params_mut(), &acc)?;
        }
        let n = train_set.len().max(1) as f64;
        metrics.push(EpochMetrics {
            round,
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            test_acc: evaluate(model, test_set)?.accuracy(),
        });
    }
    Ok(metrics)
}

/// Full protocol: `rounds` independent rounds, each with its own seeded
/// stratified split and freshly initialized model.
pub fn train(spec: &ModelSpec, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    check_compatible(spec, dataset)?;
    let labels = dataset.labels();
    let mut report = TrainReport {
        metrics: Vec::new(),
        round_accuracy: Vec::new(),
    };
    let mut last = None;
    for round in 0..cfg.rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(round as u64));
        let split = stratified_split(&labels, spec.n_classes, cfg.split, &mut rng)?;
        let mut model = Model::new(spec.clone(), rng.gen())?;
        let pick = |idx: &[usize]| idx.iter().map(|&i| &dataset.streams[i]).collect::<Vec<_>>();
        let (train_set, test_set) = (pick(&split.train), pick(&split.test));
        let m = train_model(&mut model, &train_set, &test_set, cfg, round, &mut rng)?;
        let final_acc = match m.last() {
            Some(e) => e.test_acc,
            None => evaluate(&model, &test_set)?.accuracy(),
        };
        report.round_accuracy.push(final_acc);
        report.metrics.extend(m);
        last = Some(model);
    }
    Ok(TrainOutcome {
        model: last.expect("at least one round"),
        report,
    })
}
