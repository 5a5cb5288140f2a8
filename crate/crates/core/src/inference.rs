//! Timestep-wise (streaming) inference.
//!
//! After `t` elapsed steps the time branch has seen the length-`t` prefix
//! and the location branch sees the prefix zero-padded to the full window.
//! [`StreamState`] carries the time-branch state forward between steps and
//! recomputes the location branch, while [`stream_srm`] and [`stream_lif`]
//! evaluate a single `t` from scratch.

use crate::error::{Error, Result};
use crate::event_data::{EventStream, SpikeGrid};
use crate::layers::{Axis, BranchStepper, Retention};
use crate::model::{argmax_lowest, fuse, Family, Model};
use crate::neurons::SpikeFn;

/// How branch outputs are balanced as the stream unfolds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// The model's own prediction rule (count sum or fusion).
    None,
    /// Sigmoid schedule for count outputs, controlled by `psi`.
    Sigmoid { psi: f64 },
    /// Linear schedule for label vectors, controlled by `zeta`.
    Linear { zeta: f64 },
}

/// Counts and prediction of the SRM hybrid after `t` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SrmStreamOutput {
    pub t: usize,
    /// `K x t`.
    pub o1: Option<SpikeGrid>,
    /// `K x N`.
    pub o2: Option<SpikeGrid>,
    /// Per-class count over the concatenated outputs.
    pub counts: Vec<f64>,
    pub class: usize,
}

/// Label vectors and prediction of the LIF hybrid after `t` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LifStreamOutput {
    pub t: usize,
    pub o1: Option<Vec<f64>>,
    pub o2: Option<Vec<f64>>,
    pub fused: Vec<f64>,
    pub class: usize,
}

/// Weighted count output of the SRM hybrid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCounts {
    pub omega: f64,
    /// `(1 - ω) · O_1(t)` followed by `ω · O_2(t)`, class-major rows.
    pub concatenated: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub class: usize,
}

fn check_t(stream: &EventStream, t: usize) -> Result<()> {
    if t == 0 || t > stream.n_steps() {
        return Err(Error::Bounds(format!("t={t} outside 1..={}", stream.n_steps())));
    }
    Ok(())
}

fn counts(g: &SpikeGrid) -> Vec<f64> {
    (0..g.rows())
        .map(|k| g.row(k).iter().map(|&b| f64::from(b)).sum())
        .collect()
}

fn label(g: &SpikeGrid) -> Vec<f64> {
    counts(g).into_iter().map(|c| c / g.cols() as f64).collect()
}

fn grid_from_steps(steps: &[Vec<f64>], k: usize) -> SpikeGrid {
    let mut g = SpikeGrid::zeros(k, steps.len());
    for (t, row) in steps.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            g.set(c, t, v != 0.0);
        }
    }
    g
}

fn time_prefix(model: &Model, stream: &EventStream, t: usize) -> Result<Option<SpikeGrid>> {
    let Some(branch) = &model.time else { return Ok(None) };
    let input = model.time_input(stream.prefix(t).grid())?;
    let tr = branch.forward(&input, SpikeFn::Heaviside, Retention::SpikesOnly)?;
    let steps: Vec<Vec<f64>> = tr.output().rows().into_iter().map(|r| r.to_vec()).collect();
    Ok(Some(grid_from_steps(&steps, model.n_classes())))
}

fn location_padded(model: &Model, stream: &EventStream, t: usize) -> Result<Option<SpikeGrid>> {
    if model.location.is_none() {
        return Ok(None);
    }
    model.forward_branch(&stream.padded_prefix(t), Axis::Location).map(Some)
}

fn require(model: &Model, family: Family) -> Result<()> {
    if model.family() != family {
        return Err(Error::Config(format!("{} is not a {family:?}-family model", model.spec.arch)));
    }
    Ok(())
}

fn srm_output(t: usize, o1: Option<SpikeGrid>, o2: Option<SpikeGrid>, k: usize) -> SrmStreamOutput {
    let mut total = vec![0.0; k];
    for g in [&o1, &o2].into_iter().flatten() {
        for (a, c) in total.iter_mut().zip(counts(g)) {
            *a += c;
        }
    }
    let class = argmax_lowest(&total);
    SrmStreamOutput {
        t,
        o1,
        o2,
        counts: total,
        class,
    }
}

fn lif_output(t: usize, o1: Option<Vec<f64>>, o2: Option<Vec<f64>>, model: &Model) -> Result<LifStreamOutput> {
    let fused = match (&o1, &o2) {
        (Some(a), Some(b)) => fuse(a, b, model.spec.fusion)?.0,
        (Some(a), None) | (None, Some(a)) => a.clone(),
        (None, None) => return Err(Error::Contract("model has no branches".into())),
    };
    let class = argmax_lowest(&fused);
    Ok(LifStreamOutput { t, o1, o2, fused, class })
}

/// Literal evaluation of the SRM hybrid after `t` steps.
pub fn stream_srm(stream: &EventStream, model: &Model, t: usize) -> Result<SrmStreamOutput> {
    require(model, Family::Srm)?;
    check_t(stream, t)?;
    Ok(srm_output(
        t,
        time_prefix(model, stream, t)?,
        location_padded(model, stream, t)?,
        model.n_classes(),
    ))
}

/// Literal evaluation of the LIF hybrid after `t` steps.
pub fn stream_lif(stream: &EventStream, model: &Model, t: usize) -> Result<LifStreamOutput> {
    require(model, Family::Lif)?;
    check_t(stream, t)?;
    let o1 = time_prefix(model, stream, t)?.map(|g| label(&g));
    let o2 = location_padded(model, stream, t)?.map(|g| label(&g));
    lif_output(t, o1, o2, model)
}

/// Sigmoid weight of the location-branch counts: `1 / (1 + exp(-psi (t/T - 1)))`.
pub fn sigmoid_weight(psi: f64, t: usize, total: usize) -> f64 {
    1.0 / (1.0 + (-psi * (t as f64 / total as f64 - 1.0)).exp())
}

/// Sigmoid-weighted concatenation of the two branch outputs.
pub fn time_weight_srm(o1: &SpikeGrid, o2: &SpikeGrid, psi: f64, t: usize, total: usize) -> Result<WeightedCounts> {
    if o1.rows() != o2.rows() {
        return Err(Error::Shape(format!("{} vs {} output neurons", o1.rows(), o2.rows())));
    }
    let omega = sigmoid_weight(psi, t, total);
    let concatenated: Vec<Vec<f64>> = (0..o1.rows())
        .map(|k| {
            o1.row(k)
                .iter()
                .map(|&b| (1.0 - omega) * f64::from(b))
                .chain(o2.row(k).iter().map(|&b| omega * f64::from(b)))
                .collect()
        })
        .collect();
    let scores: Vec<f64> = counts(o1)
        .iter()
        .zip(counts(o2))
        .map(|(a, b)| (1.0 - omega) * a + omega * b)
        .collect();
    let class = argmax_lowest(&scores);
    Ok(WeightedCounts {
        omega,
        concatenated,
        scores,
        class,
    })
}

/// Linear shift from the time-branch to the location-branch label vector:
/// `O_1' (1 − t/(ζT)) + O_2' t/(ζT)`.
pub fn time_weight_lif(o1: &[f64], o2: &[f64], zeta: f64, t: usize, total: usize) -> Result<Vec<f64>> {
    if o1.len() != o2.len() {
        return Err(Error::Shape(format!("label vectors of width {} and {}", o1.len(), o2.len())));
    }
    if !(zeta > 0.0) {
        return Err(Error::Param(format!("zeta must be positive, got {zeta}")));
    }
    let w = t as f64 / (zeta * total as f64);
    Ok(o1.iter().zip(o2).map(|(a, b)| a * (1.0 - w) + b * w).collect())
}

/// One emitted row of a streaming run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub t: usize,
    /// Time-branch counts (SRM) or running label vector (LIF).
    pub time: Option<Vec<f64>>,
    /// Location-branch counts (SRM) or label vector (LIF).
    pub location: Option<Vec<f64>>,
    pub scores: Vec<f64>,
    pub class: usize,
}

/// Incremental streaming evaluation of one stream.
pub struct StreamState<'a> {
    model: &'a Model,
    stream: &'a EventStream,
    weighting: Weighting,
    t: usize,
    stepper: Option<BranchStepper>,
    time_steps: Vec<Vec<f64>>,
}

impl<'a> StreamState<'a> {
    pub fn new(model: &'a Model, stream: &'a EventStream, weighting: Weighting) -> Result<Self> {
        if stream.n_taxels() != model.spec.n_taxels || stream.n_steps() != model.spec.n_steps {
            return Err(Error::Shape(format!(
                "stream is {}x{}, model expects {}x{}",
                stream.n_taxels(),
                stream.n_steps(),
                model.spec.n_taxels,
                model.spec.n_steps
            )));
        }
        match (model.family(), weighting) {
            (Family::Srm, Weighting::Linear { .. }) | (Family::Lif, Weighting::Sigmoid { .. }) => {
                return Err(Error::Config("weighting schedule does not match the model family".into()))
            }
            (_, Weighting::Linear { zeta }) if !(zeta > 0.0) => {
                return Err(Error::Param(format!("zeta must be positive, got {zeta}")))
            }
            _ => {}
        }
        Ok(Self {
            model,
            stream,
            weighting,
            t: 0,
            stepper: model.time.as_ref().map(|b| b.stepper()),
            time_steps: Vec::new(),
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t == self.stream.n_steps()
    }

    /// Time-branch output spikes so far (`K x t`).
    pub fn time_output(&self) -> Option<SpikeGrid> {
        self.stepper
            .as_ref()
            .map(|_| grid_from_steps(&self.time_steps, self.model.n_classes()))
    }

    /// Consumes the next stream column and reports the outputs at the new `t`.
    pub fn advance(&mut self) -> Result<StepOutput> {
        if self.is_done() {
            return Err(Error::Bounds(format!("stream already ended at t={}", self.t)));
        }
        let col: Vec<f64> = (0..self.stream.n_taxels())
            .map(|n| f64::from(self.stream.grid().get(n, self.t)))
            .collect();
        if let (Some(st), Some(branch)) = (self.stepper.as_mut(), self.model.time.as_ref()) {
            self.time_steps.push(st.step(branch, &col));
        }
        self.t += 1;
        let t = self.t;
        let o1 = self.time_output();
        let o2 = location_padded(self.model, self.stream, t)?;
        let k = self.model.n_classes();
        match self.model.family() {
            Family::Srm => {
                let (time, location) = (o1.as_ref().map(counts), o2.as_ref().map(counts));
                let (scores, class) = match (self.weighting, &o1, &o2) {
                    (Weighting::Sigmoid { psi }, Some(a), Some(b)) => {
                        let w = time_weight_srm(a, b, psi, t, self.stream.n_steps())?;
                        (w.scores, w.class)
                    }
                    _ => {
                        let out = srm_output(t, o1, o2, k);
                        (out.counts, out.class)
                    }
                };
                Ok(StepOutput {
                    t,
                    time,
                    location,
                    scores,
                    class,
                })
            }
            Family::Lif => {
                let (time, location) = (o1.as_ref().map(label), o2.as_ref().map(label));
                let (scores, class) = match (self.weighting, &time, &location) {
                    (Weighting::Linear { zeta }, Some(a), Some(b)) => {
                        let v = time_weight_lif(a, b, zeta, t, self.stream.n_steps())?;
                        let c = argmax_lowest(&v);
                        (v, c)
                    }
                    _ => {
                        let out = lif_output(t, time.clone(), location.clone(), self.model)?;
                        (out.fused, out.class)
                    }
                };
                Ok(StepOutput {
                    t,
                    time,
                    location,
                    scores,
                    class,
                })
            }
        }
    }

    /// Runs to the end of the stream, one output per elapsed step.
    pub fn run(mut self) -> Result<Vec<StepOutput>> {
        let mut out = Vec::with_capacity(self.stream.n_steps());
        while !self.is_done() {
            out.push(self.advance()?);
        }
        Ok(out)
    }
}
