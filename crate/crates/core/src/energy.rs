//! Synaptic operation counting for spiking models and their dense
//! (multiply-accumulate) equivalents.
//!
//! Spiking layers receive binary inputs, so every synaptic event is an
//! addition of one weight into each target neuron and no multiplications
//! occur. Graph layers fold the hop operator into effective per-node
//! weights; that one-time precomputation is not counted.

use rayon::prelude::*;

use crate::error::Result;
use crate::event_data::EventStream;
use crate::layers::{Axis, Layer, LayerKind, LayerTrace, Retention};
use crate::model::Model;
use crate::neurons::SpikeFn;

/// Counting rules for spiking layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountOptions {
    /// Count a membrane update for every neuron at every step instead of
    /// only at steps where the neuron receives an input spike.
    pub strict: bool,
    /// Count one addition per kernel-window step for every SRM synaptic
    /// event and own spike (the truncated-kernel implementation) instead of
    /// one addition per event.
    pub kernel_window: bool,
}

impl Default for CountOptions {
    fn default() -> Self {
        Self {
            strict: false,
            kernel_window: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOps {
    pub axis: Axis,
    pub index: usize,
    pub kind: LayerKind,
    /// Input spikes delivered to this layer.
    pub input_spikes: f64,
    pub synaptic_additions: f64,
    pub update_additions: f64,
    pub multiplications: f64,
}

impl LayerOps {
    pub fn additions(&self) -> f64 {
        self.synaptic_additions + self.update_additions
    }
}

/// Operation tally; for evaluation sets every figure is a per-sample mean.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCount {
    pub additions: f64,
    pub multiplications: f64,
    pub layers: Vec<LayerOps>,
}

impl OpCount {
    fn from_layers(layers: Vec<LayerOps>) -> Self {
        let additions = layers.iter().map(LayerOps::additions).sum();
        let multiplications = layers.iter().map(|l| l.multiplications).sum();
        Self {
            additions,
            multiplications,
            layers,
        }
    }

    /// `(additions, multiplications)` of one branch.
    pub fn branch_totals(&self, axis: Axis) -> (f64, f64) {
        self.layers
            .iter()
            .filter(|l| l.axis == axis)
            .fold((0.0, 0.0), |(a, m), l| (a + l.additions(), m + l.multiplications))
    }

    pub fn total(&self) -> f64 {
        self.additions + self.multiplications
    }
}

fn layer_ops(layer: &Layer, trace: &LayerTrace, axis: Axis, index: usize, opts: CountOptions) -> LayerOps {
    let len = trace.inputs.nrows();
    let out = layer.out_width();
    let (mut input_spikes, mut syn, mut upd) = (0u64, 0u64, 0u64);
    let reach = match layer {
        Layer::Graph(g) => Some(g.operator().reach()),
        _ => None,
    };
    for l in 0..len {
        let active: Vec<usize> = trace
            .inputs
            .row(l)
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(j, _)| j)
            .collect();
        input_spikes += active.len() as u64;
        match layer {
            Layer::Srm(s) => {
                let window = if opts.kernel_window {
                    s.params.kernel_window.min(len - 1 - l) as u64
                } else {
                    1
                };
                let own = trace.spikes.row(l).iter().filter(|&&o| o != 0.0).count() as u64;
                syn += active.len() as u64 * out as u64 * window;
                upd += own * window;
                if opts.strict {
                    upd += out as u64;
                }
            }
            Layer::Lif(_) => {
                syn += active.len() as u64 * out as u64;
                if opts.strict || !active.is_empty() {
                    upd += out as u64;
                }
            }
            Layer::Graph(g) => {
                let reach = reach.as_ref().expect("graph reach");
                let f = g.filters() as u64;
                let mut touched = vec![false; g.n_nodes()];
                for &j in &active {
                    syn += reach[j].len() as u64 * f;
                    for &m in &reach[j] {
                        touched[m] = true;
                    }
                }
                upd += if opts.strict {
                    out as u64
                } else {
                    touched.iter().filter(|&&t| t).count() as u64 * f
                };
            }
        }
    }
    LayerOps {
        axis,
        index,
        kind: layer.kind(),
        input_spikes: input_spikes as f64,
        synaptic_additions: syn as f64,
        update_additions: upd as f64,
        multiplications: 0.0,
    }
}

/// Operation tally of one forward pass.
pub fn count_sample_ops(model: &Model, stream: &EventStream, opts: CountOptions) -> Result<OpCount> {
    let trace = model.forward_trace(stream, SpikeFn::Heaviside, Retention::SpikesOnly)?;
    let mut layers = Vec::new();
    for (axis, branch, tr) in [
        (Axis::Time, &model.time, &trace.time),
        (Axis::Location, &model.location, &trace.location),
    ] {
        let (Some(branch), Some(tr)) = (branch, tr) else { continue };
        for (i, (layer, lt)) in branch.layers.iter().zip(&tr.layers).enumerate() {
            layers.push(layer_ops(layer, lt, axis, i, opts));
        }
    }
    Ok(OpCount::from_layers(layers))
}

/// Per-sample mean operation tally over an evaluation set.
pub fn count_snn_ops(model: &Model, streams: &[&EventStream], opts: CountOptions) -> Result<OpCount> {
    let per_sample = streams
        .par_iter()
        .map(|s| count_sample_ops(model, s, opts))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = per_sample.first() else {
        return Ok(OpCount::from_layers(Vec::new()));
    };
    let n = per_sample.len() as f64;
    let mut layers = first.layers.clone();
    for l in &mut layers {
        l.input_spikes = 0.0;
        l.synaptic_additions = 0.0;
        l.update_additions = 0.0;
    }
    for c in &per_sample {
        for (acc, l) in layers.iter_mut().zip(&c.layers) {
            acc.input_spikes += l.input_spikes;
            acc.synaptic_additions += l.synaptic_additions;
            acc.update_additions += l.update_additions;
            acc.multiplications += l.multiplications;
        }
    }
    for l in &mut layers {
        l.input_spikes /= n;
        l.synaptic_additions /= n;
        l.update_additions /= n;
        l.multiplications /= n;
    }
    Ok(OpCount::from_layers(layers))
}

/// A dense `f_in -> f_out` map applied at every one of `steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseMap {
    pub f_in: usize,
    pub f_out: usize,
    pub steps: usize,
}

/// Shape-equivalent dense maps of a model: one per layer, over its branch axis.
pub fn dense_maps(model: &Model) -> Vec<DenseMap> {
    let mut maps = Vec::new();
    for (branch, steps) in [
        (&model.time, model.spec.n_steps),
        (&model.location, model.spec.n_taxels),
    ] {
        let Some(branch) = branch else { continue };
        for layer in &branch.layers {
            maps.push(DenseMap {
                f_in: layer.in_width(),
                f_out: layer.out_width(),
                steps,
            });
        }
    }
    maps
}

/// Multiply-accumulate count: `f_in * f_out * steps` of each, independent of activity.
pub fn count_dense_ops(maps: &[DenseMap]) -> OpCount {
    let macs: u64 = maps.iter().map(|m| (m.f_in * m.f_out * m.steps) as u64).sum();
    OpCount {
        additions: macs as f64,
        multiplications: macs as f64,
        layers: Vec::new(),
    }
}

/// Dense total over spiking total; infinite when the spiking model did no work.
pub fn compression_ratio(dense: &OpCount, snn: &OpCount) -> f64 {
    dense.total() / snn.total()
}
