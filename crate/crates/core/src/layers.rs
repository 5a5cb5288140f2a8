//! Spiking layers and branches.
//!
//! Every layer is a population of neurons stepping along one recurrence
//! axis. A branch is a stack of layers sharing that axis; its input is
//! step-major (`L x in_width`): row `l` holds the presynaptic activity at
//! step `l`.
//!
//! Batch forward passes, streaming steppers and traced training passes all
//! run through [`Layer::step`], so they agree bit for bit. Backward passes
//! replay a trace and are exact for the relaxed model (spikes given by the
//! surrogate primitive); on a hard trace they give the usual surrogate
//! gradient.

use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurons::{lif_potential, LifParams, SpikeFn, SrmKernels, SrmParams, SrmStepper, Surrogate};
use crate::topology::{HopOperator, TactileGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    /// Fully connected, time-domain SRM.
    SFc,
    /// Fully connected, location-domain SRM.
    SFcLoc,
    /// Spatial spiking graph layer (TLIF).
    Ssg,
    /// Temporal spiking graph layer (LLIF).
    Tsg,
    /// Fully connected TLIF.
    SsFc,
    /// Fully connected LLIF.
    TsFc,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::SFc => "SFc",
            LayerKind::SFcLoc => "SFc-location",
            LayerKind::Ssg => "SSG",
            LayerKind::Tsg => "TSG",
            LayerKind::SsFc => "SSFc",
            LayerKind::TsFc => "TSFc",
        }
    }
}

/// Uniform Glorot-style initializer in `±gain * sqrt(6 / (fan_in + fan_out))`.
pub fn init_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, gain: f64, rng: &mut impl Rng) -> Array2<f64> {
    let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SrmDense {
    pub kind: LayerKind,
    /// `out x in`.
    pub weights: Array2<f64>,
    pub params: SrmParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LifDense {
    pub kind: LayerKind,
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub params: LifParams,
}

/// Hop-wise graph map over scalar node signals followed by leaky neurons,
/// one neuron per `(node, filter)`; outputs are node-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LifGraph {
    pub kind: LayerKind,
    pub graph: TactileGraph,
    pub hops: usize,
    /// `(hops + 1) x filters`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub params: LifParams,
    #[serde(skip)]
    op: OnceLock<HopOperator>,
}

impl LifGraph {
    pub fn new(kind: LayerKind, graph: TactileGraph, hops: usize, weights: Array2<f64>, bias: Array1<f64>, params: LifParams) -> Self {
        Self {
            kind,
            graph,
            hops,
            weights,
            bias,
            params,
            op: OnceLock::new(),
        }
    }

    pub fn operator(&self) -> &HopOperator {
        self.op.get_or_init(|| HopOperator::new(&self.graph, self.hops))
    }

    pub fn filters(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    Srm(SrmDense),
    Lif(LifDense),
    Graph(LifGraph),
}

/// Per-layer recurrent state carried between steps.
#[derive(Debug, Clone)]
pub enum LayerState {
    Srm(SrmStepper),
    Lif { u: Vec<f64>, o: Vec<f64> },
}

/// What one layer produced at one step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Filtered presynaptic trace (SRM) or hop features (graph); empty otherwise.
    pub aux: Vec<f64>,
    pub potential: Vec<f64>,
    pub spikes: Vec<f64>,
}

/// Everything a backward pass needs from one layer, step-major.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub inputs: Array2<f64>,
    pub aux: Option<Array2<f64>>,
    pub potentials: Option<Array2<f64>>,
    pub spikes: Array2<f64>,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Srm(l) => l.kind,
            Layer::Lif(l) => l.kind,
            Layer::Graph(l) => l.kind,
        }
    }

    pub fn in_width(&self) -> usize {
        match self {
            Layer::Srm(l) => l.weights.ncols(),
            Layer::Lif(l) => l.weights.ncols(),
            Layer::Graph(l) => l.n_nodes(),
        }
    }

    pub fn out_width(&self) -> usize {
        match self {
            Layer::Srm(l) => l.weights.nrows(),
            Layer::Lif(l) => l.weights.nrows(),
            Layer::Graph(l) => l.n_nodes() * l.filters(),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Layer::Srm(l) => l.params.threshold,
            Layer::Lif(l) => l.params.threshold,
            Layer::Graph(l) => l.params.threshold,
        }
    }

    pub fn new_state(&self) -> LayerState {
        match self {
            Layer::Srm(l) => LayerState::Srm(SrmStepper::new(&l.params)),
            _ => {
                let n = self.out_width();
                LayerState::Lif {
                    u: vec![0.0; n],
                    o: vec![0.0; n],
                }
            }
        }
    }

    /// Advances the population by one step given presynaptic activity `x`.
    pub fn step(&self, state: &mut LayerState, x: &[f64], spike: SpikeFn) -> StepRecord {
        debug_assert_eq!(x.len(), self.in_width());
        match (self, state) {
            (Layer::Srm(l), LayerState::Srm(stepper)) => {
                let s = stepper.step(&l.weights, x, spike);
                StepRecord {
                    aux: s.psp,
                    potential: s.potential,
                    spikes: s.spikes,
                }
            }
            (Layer::Lif(l), LayerState::Lif { u, o }) => {
                let active: Vec<(usize, f64)> = x.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
                let mut drive = l.bias.to_vec();
                for (i, d) in drive.iter_mut().enumerate() {
                    let row = l.weights.row(i);
                    for &(j, xj) in &active {
                        *d += row[j] * xj;
                    }
                }
                let potential = lif_update(u, o, &drive, &l.params, spike);
                StepRecord {
                    aux: Vec::new(),
                    potential,
                    spikes: o.clone(),
                }
            }
            (Layer::Graph(l), LayerState::Lif { u, o }) => {
                let hop = l.operator().hop_features(x);
                let h1 = l.hops + 1;
                let f = l.filters();
                let mut drive = Vec::with_capacity(l.n_nodes() * f);
                for m in 0..l.n_nodes() {
                    let feats = &hop[m * h1..(m + 1) * h1];
                    for c in 0..f {
                        let mut d = l.bias[c];
                        for (k, &p) in feats.iter().enumerate() {
                            if p != 0.0 {
                                d += p * l.weights[(k, c)];
                            }
                        }
                        drive.push(d);
                    }
                }
                let potential = lif_update(u, o, &drive, &l.params, spike);
                StepRecord {
                    aux: hop,
                    potential,
                    spikes: o.clone(),
                }
            }
            _ => unreachable!("layer state does not match layer type"),
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        fn slice(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        match self {
            Layer::Srm(l) => vec![slice(&l.weights)],
            Layer::Lif(l) => vec![slice(&l.weights), l.bias.as_slice().expect("contiguous")],
            Layer::Graph(l) => vec![slice(&l.weights), l.bias.as_slice().expect("contiguous")],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Srm(l) => vec![l.weights.as_slice_mut().expect("standard layout")],
            Layer::Lif(l) => vec![
                l.weights.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("contiguous"),
            ],
            Layer::Graph(l) => vec![
                l.weights.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("contiguous"),
            ],
        }
    }

    /// Reverse pass through one layer.
    ///
    /// `grad_out` is `L x out_width` (loss gradient w.r.t. this layer's
    /// spikes). Returns parameter gradients in [`Layer::params`] order and
    /// the gradient w.r.t. the layer inputs when `input_grad` is set.
    pub fn backward(
        &self,
        trace: &LayerTrace,
        grad_out: &Array2<f64>,
        surrogate: &Surrogate,
        input_grad: bool,
    ) -> Result<(Vec<Vec<f64>>, Option<Array2<f64>>)> {
        let potentials = trace
            .potentials
            .as_ref()
            .ok_or_else(|| Error::Contract("backward needs a trace that retained potentials".into()))?;
        let len = trace.spikes.nrows();
        if grad_out.dim() != (len, self.out_width()) {
            return Err(Error::Shape(format!(
                "gradient is {:?}, layer output is {:?}",
                grad_out.dim(),
                (len, self.out_width())
            )));
        }
        match self {
            Layer::Srm(l) => {
                let aux = trace
                    .aux
                    .as_ref()
                    .ok_or_else(|| Error::Contract("SRM backward needs the filtered input trace".into()))?;
                Ok(srm_backward(l, &trace.inputs, aux, potentials, grad_out, surrogate, input_grad))
            }
            Layer::Lif(l) => {
                let g_drive = lif_backward(potentials, &trace.spikes, grad_out, &l.params, surrogate);
                let d_w = g_drive.t().dot(&trace.inputs);
                let d_b = g_drive.sum_axis(ndarray::Axis(0));
                let g_x = input_grad.then(|| g_drive.dot(&l.weights));
                Ok((vec![d_w.into_raw_vec_and_offset().0, d_b.to_vec()], g_x))
            }
            Layer::Graph(l) => {
                let aux = trace
                    .aux
                    .as_ref()
                    .ok_or_else(|| Error::Contract("graph backward needs hop features".into()))?;
                let g_drive = lif_backward(potentials, &trace.spikes, grad_out, &l.params, surrogate);
                Ok(graph_backward(l, aux, &g_drive, input_grad))
            }
        }
    }
}

fn lif_update(u: &mut [f64], o: &mut [f64], drive: &[f64], p: &LifParams, spike: SpikeFn) -> Vec<f64> {
    for i in 0..u.len() {
        u[i] = lif_potential(u[i], o[i], drive[i], p);
        o[i] = spike.fire(u[i], p.threshold);
    }
    u.to_vec()
}

/// Gradient w.r.t. the drive of a leaky population, unrolled in reverse.
fn lif_backward(u: &Array2<f64>, o: &Array2<f64>, grad_out: &Array2<f64>, p: &LifParams, surrogate: &Surrogate) -> Array2<f64> {
    let (len, n) = u.dim();
    let mut g_drive = Array2::zeros((len, n));
    let mut carry = vec![0.0; n];
    for l in (0..len).rev() {
        for i in 0..n {
            let c = carry[i];
            let g_o = grad_out[(l, i)] + c * p.decay * (p.reset - u[(l, i)]);
            let g_u = g_o * surrogate.grad(u[(l, i)], p.threshold) + c * p.decay * (1.0 - o[(l, i)]);
            g_drive[(l, i)] = g_u;
            carry[i] = g_u;
        }
    }
    g_drive
}

fn srm_backward(
    l: &SrmDense,
    inputs: &Array2<f64>,
    psp: &Array2<f64>,
    u: &Array2<f64>,
    grad_out: &Array2<f64>,
    surrogate: &Surrogate,
    input_grad: bool,
) -> (Vec<Vec<f64>>, Option<Array2<f64>>) {
    let kernels = SrmKernels::new(&l.params);
    let window = kernels.window();
    let (len, n_out) = u.dim();
    let mut g_u = Array2::<f64>::zeros((len, n_out));
    for t in (0..len).rev() {
        for i in 0..n_out {
            let mut g_o = grad_out[(t, i)];
            for s in 1..=window.min(len - 1 - t) {
                g_o += g_u[(t + s, i)] * kernels.eta[s];
            }
            g_u[(t, i)] = g_o * surrogate.grad(u[(t, i)], l.params.threshold);
        }
    }
    let d_w = g_u.t().dot(psp).into_raw_vec_and_offset().0;
    if !input_grad {
        return (vec![d_w], None);
    }
    let g_psp = g_u.dot(&l.weights);
    let n_in = inputs.ncols();
    let mut g_x = Array2::zeros((len, n_in));
    for f in 0..len {
        for s in 0..=window.min(len - 1 - f) {
            let k = kernels.eps[s];
            if k != 0.0 {
                for j in 0..n_in {
                    g_x[(f, j)] += k * g_psp[(f + s, j)];
                }
            }
        }
    }
    (vec![d_w], Some(g_x))
}

fn graph_backward(
    l: &LifGraph,
    hop: &Array2<f64>,
    g_drive: &Array2<f64>,
    input_grad: bool,
) -> (Vec<Vec<f64>>, Option<Array2<f64>>) {
    let h1 = l.hops + 1;
    let f = l.filters();
    let nodes = l.n_nodes();
    let len = g_drive.nrows();
    let mut d_w = Array2::<f64>::zeros((h1, f));
    let mut d_b = vec![0.0; f];
    // Gradient w.r.t. hop features, then through the fixed hop operator.
    let mut g_x = Array2::zeros((len, nodes));
    let op = l.operator();
    for t in 0..len {
        let mut g_hop = vec![0.0; nodes * h1];
        for m in 0..nodes {
            for c in 0..f {
                let g = g_drive[(t, m * f + c)];
                if g == 0.0 {
                    continue;
                }
                d_b[c] += g;
                for k in 0..h1 {
                    d_w[(k, c)] += hop[(t, m * h1 + k)] * g;
                    g_hop[m * h1 + k] += l.weights[(k, c)] * g;
                }
            }
        }
        if !input_grad {
            continue;
        }
        for k in 0..h1 {
            let p = op.power(k);
            for m in 0..nodes {
                let g = g_hop[m * h1 + k];
                if g != 0.0 {
                    for n in 0..nodes {
                        g_x[(t, n)] += p[(m, n)] * g;
                    }
                }
            }
        }
    }
    (vec![d_w.into_raw_vec_and_offset().0, d_b], input_grad.then_some(g_x))
}

/// Which axis a branch recurs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Location,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub axis: Axis,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct BranchTrace {
    pub layers: Vec<LayerTrace>,
}

impl BranchTrace {
    /// Output spikes of the last layer, `L x out`.
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("branch has layers").spikes
    }
}

/// How much of a forward pass to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    /// Potentials and auxiliary traces, enough for a backward pass.
    Full,
    /// Spikes per layer only.
    SpikesOnly,
}

impl Branch {
    pub fn in_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("branch has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].out_width() != w[1].in_width() {
                return Err(Error::Shape(format!(
                    "{} outputs {} but next {} expects {}",
                    w[0].kind().name(),
                    w[0].out_width(),
                    w[1].kind().name(),
                    w[1].in_width()
                )));
            }
        }
        Ok(())
    }

    pub fn stepper(&self) -> BranchStepper {
        BranchStepper {
            states: self.layers.iter().map(Layer::new_state).collect(),
        }
    }

    /// Runs the branch over a step-major input (`L x in_width`).
    pub fn forward(&self, input: &Array2<f64>, spike: SpikeFn, retain: Retention) -> Result<BranchTrace> {
        if input.ncols() != self.in_width() {
            return Err(Error::Shape(format!(
                "{:?} branch expects input width {}, got {}",
                self.axis,
                self.in_width(),
                input.ncols()
            )));
        }
        let len = input.nrows();
        let mut stepper = self.stepper();
        let mut traces: Vec<LayerTrace> = self
            .layers
            .iter()
            .map(|layer| LayerTrace {
                inputs: Array2::zeros((len, layer.in_width())),
                aux: None,
                potentials: (retain == Retention::Full).then(|| Array2::zeros((len, layer.out_width()))),
                spikes: Array2::zeros((len, layer.out_width())),
            })
            .collect();
        for l in 0..len {
            let x: Vec<f64> = input.row(l).to_vec();
            let records = stepper.step_records(self, &x, spike);
            let mut layer_in = x;
            for (trace, rec) in traces.iter_mut().zip(records) {
                trace.inputs.row_mut(l).assign(&ndarray::ArrayView1::from(&layer_in));
                trace.spikes.row_mut(l).assign(&ndarray::ArrayView1::from(&rec.spikes));
                if let Some(p) = trace.potentials.as_mut() {
                    p.row_mut(l).assign(&ndarray::ArrayView1::from(&rec.potential));
                    if !rec.aux.is_empty() {
                        let aux = trace.aux.get_or_insert_with(|| Array2::zeros((len, rec.aux.len())));
                        aux.row_mut(l).assign(&ndarray::ArrayView1::from(&rec.aux));
                    }
                }
                layer_in = rec.spikes;
            }
        }
        Ok(BranchTrace { layers: traces })
    }

    /// Gradients of all branch parameters given `grad_output` (`L x out`).
    pub fn backward(&self, trace: &BranchTrace, grad_output: &Array2<f64>, surrogate: &Surrogate) -> Result<Vec<Vec<f64>>> {
        if trace.layers.len() != self.layers.len() {
            return Err(Error::Contract("trace does not belong to this branch".into()));
        }
        let mut grads_rev = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.clone();
        for (i, (layer, lt)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            let (pg, g_in) = layer.backward(lt, &g, surrogate, i > 0)?;
            grads_rev.push(pg);
            if let Some(g_in) = g_in {
                g = g_in;
            }
        }
        Ok(grads_rev.into_iter().rev().flatten().collect())
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }
}

/// Recurrent state for a whole branch, for step-by-step evaluation.
#[derive(Debug, Clone)]
pub struct BranchStepper {
    states: Vec<LayerState>,
}

impl BranchStepper {
    fn step_records(&mut self, branch: &Branch, x: &[f64], spike: SpikeFn) -> Vec<StepRecord> {
        let mut out = Vec::with_capacity(branch.layers.len());
        let mut input = x.to_vec();
        for (layer, state) in branch.layers.iter().zip(self.states.iter_mut()) {
            let rec = layer.step(state, &input, spike);
            input = rec.spikes.clone();
            out.push(rec);
        }
        out
    }

    /// Feeds one input step and returns the spikes of every layer.
    pub fn step_all(&mut self, branch: &Branch, x: &[f64]) -> Vec<Vec<f64>> {
        self.step_records(branch, x, SpikeFn::Heaviside)
            .into_iter()
            .map(|r| r.spikes)
            .collect()
    }

    /// Feeds one input step and returns the output spikes of the branch.
    pub fn step(&mut self, branch: &Branch, x: &[f64]) -> Vec<f64> {
        self.step_all(branch, x).pop().unwrap_or_default()
    }
}
