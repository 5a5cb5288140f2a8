//! Model assemblies: the SRM hybrid (time + location fully connected
//! branches) and the LIF graph hybrid (spatial + temporal graph branches),
//! along with their single-branch variants.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_data::{EventStream, SpikeGrid};
use crate::layers::{init_uniform, Axis, Branch, BranchTrace, Layer, LayerKind, LifDense, LifGraph, Retention, SrmDense};
use crate::neurons::{LifParams, SpikeFn, SrmParams, Surrogate};
use crate::topology::{
    build_spatial_graph, build_temporal_graph, default_coords, Coord, LocationOrder, OrderKind, TactileGraph,
    TemporalMode,
};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Time-domain SRM branch plus location-domain SRM branch.
    HybridSrmFc,
    /// Time-domain SRM branch alone.
    SnnTsrm,
    /// Location-domain SRM branch alone.
    SnnLsrm,
    /// Spatial graph branch (TLIF) plus temporal graph branch (LLIF).
    HybridLifGnn,
    /// Spatial graph branch alone.
    Ssgnn,
    /// Temporal graph branch alone.
    Tsgnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Srm,
    Lif,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::HybridSrmFc,
        Architecture::SnnTsrm,
        Architecture::SnnLsrm,
        Architecture::HybridLifGnn,
        Architecture::Ssgnn,
        Architecture::Tsgnn,
    ];

    pub fn family(&self) -> Family {
        match self {
            Architecture::HybridSrmFc | Architecture::SnnTsrm | Architecture::SnnLsrm => Family::Srm,
            _ => Family::Lif,
        }
    }

    pub fn has_time(&self) -> bool {
        !matches!(self, Architecture::SnnLsrm | Architecture::Tsgnn)
    }

    pub fn has_location(&self) -> bool {
        !matches!(self, Architecture::SnnTsrm | Architecture::Ssgnn)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::HybridSrmFc => "hybrid-srm-fc",
            Architecture::SnnTsrm => "snn-tsrm",
            Architecture::SnnLsrm => "snn-lsrm",
            Architecture::HybridLifGnn => "hybrid-lif-gnn",
            Architecture::Ssgnn => "ssgnn",
            Architecture::Tsgnn => "tsgnn",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    Mean,
    Max,
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Fusion::Mean),
            "max" => Ok(Fusion::Max),
            other => Err(Error::Config(format!("unknown fusion rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for Fusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fusion::Mean => "mean",
            Fusion::Max => "max",
        })
    }
}

/// Everything needed to build a model with freshly initialized weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub n_taxels: usize,
    pub n_steps: usize,
    pub n_classes: usize,
    /// Widths of the fully connected layers between the first layer (or the
    /// graph layer) and the output layer. For the SRM family the first
    /// entry is the first layer itself.
    pub hidden: Vec<usize>,
    pub srm: SrmParams,
    pub lif: LifParams,
    pub hops: usize,
    pub filters: usize,
    pub temporal_mode: TemporalMode,
    pub fusion: Fusion,
    pub order: LocationOrder,
    pub coords: Vec<Coord>,
    pub surrogate: Surrogate,
    /// Multiplier on the uniform initialization bound.
    pub init_gain: f64,
}

impl ModelSpec {
    /// Default hyperparameters for `arch` on an `n_taxels x n_steps` stream.
    pub fn new(arch: Architecture, n_taxels: usize, n_steps: usize, n_classes: usize) -> Self {
        let (hidden, surrogate) = match arch.family() {
            Family::Srm => (vec![32], Surrogate::Exponential { steepness: 5.0 }),
            Family::Lif => (vec![128, 256], Surrogate::Rectangular { width: 1.0 }),
        };
        Self {
            arch,
            n_taxels,
            n_steps,
            n_classes,
            hidden,
            srm: SrmParams::default(),
            lif: LifParams::default(),
            hops: 3,
            filters: 64,
            temporal_mode: TemporalMode::Sparse,
            fusion: Fusion::Mean,
            order: LocationOrder::named_or_identity(OrderKind::Arch, n_taxels),
            coords: default_coords(n_taxels),
            surrogate,
            init_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_taxels == 0 || self.n_steps == 0 || self.n_classes == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive (N={}, T={}, K={})",
                self.n_taxels, self.n_steps, self.n_classes
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be at least 1".into()));
        }
        if self.arch.family() == Family::Srm && self.hidden.is_empty() {
            return Err(Error::Config("SRM branches need at least one hidden layer".into()));
        }
        if self.arch.family() == Family::Lif && self.filters == 0 {
            return Err(Error::Config("graph layers need at least one filter".into()));
        }
        if !(self.init_gain > 0.0 && self.init_gain.is_finite()) {
            return Err(Error::Config(format!("init_gain must be positive, got {}", self.init_gain)));
        }
        if self.order.len() != self.n_taxels {
            return Err(Error::Config(format!(
                "location order covers {} taxels, model has N={}",
                self.order.len(),
                self.n_taxels
            )));
        }
        if self.coords.len() != self.n_taxels {
            return Err(Error::Config(format!(
                "{} taxel coordinates for N={}",
                self.coords.len(),
                self.n_taxels
            )));
        }
        self.srm.validate()?;
        self.lif.validate()?;
        self.surrogate.validate()
    }

    fn fc_widths(&self, first_in: usize) -> Vec<(usize, usize)> {
        let mut widths = vec![first_in];
        widths.extend(&self.hidden);
        widths.push(self.n_classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn srm_branch(&self, axis: Axis, rng: &mut ChaCha8Rng) -> Branch {
        let (kind, input) = match axis {
            Axis::Time => (LayerKind::SFc, self.n_taxels),
            Axis::Location => (LayerKind::SFcLoc, self.n_steps),
        };
        let layers = self
            .fc_widths(input)
            .into_iter()
            .map(|(i, o)| {
                Layer::Srm(SrmDense {
                    kind,
                    weights: init_uniform(o, i, i, o, self.init_gain, rng),
                    params: self.srm.clone(),
                })
            })
            .collect();
        Branch { axis, layers }
    }

    fn lif_branch(&self, axis: Axis, rng: &mut ChaCha8Rng) -> Result<Branch> {
        let (graph_kind, fc_kind, graph) = match axis {
            Axis::Time => (
                LayerKind::Ssg,
                LayerKind::SsFc,
                TactileGraph::Spatial(build_spatial_graph(&self.coords)?),
            ),
            Axis::Location => (
                LayerKind::Tsg,
                LayerKind::TsFc,
                if self.n_steps == 1 {
                    TactileGraph::Edgeless { n_nodes: 1 }
                } else {
                    TactileGraph::Temporal(build_temporal_graph(self.n_steps, self.temporal_mode)?)
                },
            ),
        };
        let h1 = self.hops + 1;
        let nodes = graph.n_nodes();
        let mut layers = vec![Layer::Graph(LifGraph::new(
            graph_kind,
            graph,
            self.hops,
            init_uniform(h1, self.filters, h1, self.filters, self.init_gain, rng),
            Array1::zeros(self.filters),
            self.lif.clone(),
        ))];
        for (i, o) in self.fc_widths(nodes * self.filters) {
            layers.push(Layer::Lif(LifDense {
                kind: fc_kind,
                weights: init_uniform(o, i, i, o, self.init_gain, rng),
                bias: Array1::zeros(o),
                params: self.lif.clone(),
            }));
        }
        Ok(Branch { axis, layers })
    }
}

/// Output spikes of each branch, class-major (`K x T` and `K x N`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeOutput {
    pub time: Option<SpikeGrid>,
    pub location: Option<SpikeGrid>,
}

fn row_counts(g: &SpikeGrid) -> Vec<f64> {
    (0..g.rows())
        .map(|k| g.row(k).iter().map(|&b| f64::from(b)).sum())
        .collect()
}

fn row_means(g: &SpikeGrid) -> Vec<f64> {
    row_counts(g).into_iter().map(|c| c / g.cols() as f64).collect()
}

impl SpikeOutput {
    pub fn time_counts(&self) -> Option<Vec<f64>> {
        self.time.as_ref().map(row_counts)
    }

    pub fn location_counts(&self) -> Option<Vec<f64>> {
        self.location.as_ref().map(row_counts)
    }

    /// Time-branch label vector: spikes averaged over the time window.
    pub fn time_label(&self) -> Option<Vec<f64>> {
        self.time.as_ref().map(row_means)
    }

    /// Location-branch label vector: spikes averaged over the taxels.
    pub fn location_label(&self) -> Option<Vec<f64>> {
        self.location.as_ref().map(row_means)
    }
}

/// Scores per class and the predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub class: usize,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Prediction by spike count over the concatenated `K x (T + N)` grid.
pub fn concat_predict(o1: &SpikeGrid, o2: &SpikeGrid) -> Result<usize> {
    if o1.rows() != o2.rows() {
        return Err(Error::Shape(format!("{} vs {} output neurons", o1.rows(), o2.rows())));
    }
    let totals: Vec<f64> = row_counts(o1).iter().zip(row_counts(o2)).map(|(a, b)| a + b).collect();
    Ok(argmax_lowest(&totals))
}

/// Fuses two label vectors; returns the fused vector and its class.
pub fn fuse(o1: &[f64], o2: &[f64], rule: Fusion) -> Result<(Vec<f64>, usize)> {
    if o1.len() != o2.len() {
        return Err(Error::Shape(format!("label vectors of width {} and {}", o1.len(), o2.len())));
    }
    let fused: Vec<f64> = o1
        .iter()
        .zip(o2)
        .map(|(&a, &b)| match rule {
            Fusion::Mean => (a + b) / 2.0,
            Fusion::Max => a.max(b),
        })
        .collect();
    let class = argmax_lowest(&fused);
    Ok((fused, class))
}

/// Retained forward state for both branches, step-major.
#[derive(Debug, Clone)]
pub struct ModelTrace {
    pub time: Option<BranchTrace>,
    pub location: Option<BranchTrace>,
}

/// Real-valued branch outputs, class-major (`K x L`).
#[derive(Debug, Clone)]
pub struct RawOutput {
    pub time: Option<Array2<f64>>,
    pub location: Option<Array2<f64>>,
}

impl ModelTrace {
    pub fn raw_output(&self) -> RawOutput {
        RawOutput {
            time: self.time.as_ref().map(|t| t.output().t().to_owned()),
            location: self.location.as_ref().map(|t| t.output().t().to_owned()),
        }
    }
}

fn to_grid(a: &Array2<f64>) -> SpikeGrid {
    let mut g = SpikeGrid::zeros(a.nrows(), a.ncols());
    for ((r, c), &v) in a.indexed_iter() {
        g.set(r, c, v != 0.0);
    }
    g
}

impl RawOutput {
    /// Spike grids; valid when the trace came from a hard (Heaviside) pass.
    pub fn to_spikes(&self) -> SpikeOutput {
        SpikeOutput {
            time: self.time.as_ref().map(to_grid),
            location: self.location.as_ref().map(to_grid),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub time: Option<Branch>,
    pub location: Option<Branch>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: Model,
}

impl Model {
    /// Builds a model with seeded uniform initialization.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (time, location) = match spec.arch.family() {
            Family::Srm => (
                spec.arch.has_time().then(|| spec.srm_branch(Axis::Time, &mut rng)),
                spec.arch.has_location().then(|| spec.srm_branch(Axis::Location, &mut rng)),
            ),
            Family::Lif => (
                spec.arch
                    .has_time()
                    .then(|| spec.lif_branch(Axis::Time, &mut rng))
                    .transpose()?,
                spec.arch
                    .has_location()
                    .then(|| spec.lif_branch(Axis::Location, &mut rng))
                    .transpose()?,
            ),
        };
        let model = Self { spec, time, location };
        for b in model.branches() {
            b.validate()?;
        }
        Ok(model)
    }

    pub fn family(&self) -> Family {
        self.spec.arch.family()
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn branches(&self) -> impl Iterator<Item = &Branch> {
        self.time.iter().chain(self.location.iter())
    }

    pub fn branch(&self, axis: Axis) -> Option<&Branch> {
        match axis {
            Axis::Time => self.time.as_ref(),
            Axis::Location => self.location.as_ref(),
        }
    }

    fn check_taxels(&self, grid: &SpikeGrid) -> Result<()> {
        if grid.rows() != self.spec.n_taxels {
            return Err(Error::Shape(format!(
                "stream has {} taxels, model expects {}",
                grid.rows(),
                self.spec.n_taxels
            )));
        }
        Ok(())
    }

    /// Step-major input for the time branch: row `t` is column `t` of the grid.
    /// Any number of columns is accepted so that prefixes can be stepped.
    pub fn time_input(&self, grid: &SpikeGrid) -> Result<Array2<f64>> {
        self.check_taxels(grid)?;
        Ok(Array2::from_shape_fn((grid.cols(), grid.rows()), |(t, n)| f64::from(grid.get(n, t))))
    }

    /// Step-major input for the location branch: row `l` is the time course
    /// of the taxel at position `l` of the location order.
    pub fn location_input(&self, grid: &SpikeGrid) -> Result<Array2<f64>> {
        self.check_taxels(grid)?;
        if grid.cols() != self.spec.n_steps {
            return Err(Error::Shape(format!(
                "location branch needs {} steps, stream has {}",
                self.spec.n_steps,
                grid.cols()
            )));
        }
        let order = self.spec.order.as_slice();
        Ok(Array2::from_shape_fn((grid.rows(), grid.cols()), |(l, t)| {
            f64::from(grid.get(order[l], t))
        }))
    }

    fn check_stream(&self, stream: &EventStream) -> Result<()> {
        self.check_taxels(stream.grid())?;
        if stream.n_steps() != self.spec.n_steps {
            return Err(Error::Shape(format!(
                "stream has {} steps, model expects {}",
                stream.n_steps(),
                self.spec.n_steps
            )));
        }
        Ok(())
    }

    /// Forward pass keeping as much state as `retain` asks for.
    pub fn forward_trace(&self, stream: &EventStream, spike: SpikeFn, retain: Retention) -> Result<ModelTrace> {
        self.check_stream(stream)?;
        let time = match &self.time {
            Some(b) => Some(b.forward(&self.time_input(stream.grid())?, spike, retain)?),
            None => None,
        };
        let location = match &self.location {
            Some(b) => Some(b.forward(&self.location_input(stream.grid())?, spike, retain)?),
            None => None,
        };
        Ok(ModelTrace { time, location })
    }

    /// Hard spiking forward pass.
    pub fn forward(&self, stream: &EventStream) -> Result<SpikeOutput> {
        Ok(self
            .forward_trace(stream, SpikeFn::Heaviside, Retention::SpikesOnly)?
            .raw_output()
            .to_spikes())
    }

    /// One branch alone; returns `K x T` (time) or `K x N` (location, in
    /// location-order positions).
    pub fn forward_branch(&self, stream: &EventStream, axis: Axis) -> Result<SpikeGrid> {
        self.check_stream(stream)?;
        let branch = self
            .branch(axis)
            .ok_or_else(|| Error::Config(format!("{} has no {axis:?} branch", self.spec.arch)))?;
        let input = match axis {
            Axis::Time => self.time_input(stream.grid())?,
            Axis::Location => self.location_input(stream.grid())?,
        };
        let tr = branch.forward(&input, SpikeFn::Heaviside, Retention::SpikesOnly)?;
        Ok(to_grid(&tr.output().t().to_owned()))
    }

    /// Spatial graph branch: `O_1` and its time-averaged label vector.
    pub fn forward_ssgnn(&self, stream: &EventStream) -> Result<(SpikeGrid, Vec<f64>)> {
        let o1 = self.forward_branch(stream, Axis::Time)?;
        let label = row_means(&o1);
        Ok((o1, label))
    }

    /// Temporal graph branch: `O_2` and its location-averaged label vector.
    pub fn forward_tsgnn(&self, stream: &EventStream) -> Result<(SpikeGrid, Vec<f64>)> {
        let o2 = self.forward_branch(stream, Axis::Location)?;
        let label = row_means(&o2);
        Ok((o2, label))
    }

    /// Class scores: summed spike counts for the SRM family, the fused
    /// label vector for the LIF family.
    pub fn predict_output(&self, out: &SpikeOutput) -> Result<Prediction> {
        let time = out.time.as_ref().map(|g| (row_counts(g), g.cols()));
        let location = out.location.as_ref().map(|g| (row_counts(g), g.cols()));
        self.score(time, location)
    }

    /// Same rule applied to real-valued outputs (as produced by relaxed passes).
    pub fn predict_raw(&self, out: &RawOutput) -> Result<Prediction> {
        let counts = |a: &Array2<f64>| (a.rows().into_iter().map(|r| r.sum()).collect::<Vec<f64>>(), a.ncols());
        self.score(out.time.as_ref().map(counts), out.location.as_ref().map(counts))
    }

    fn score(&self, time: Option<(Vec<f64>, usize)>, location: Option<(Vec<f64>, usize)>) -> Result<Prediction> {
        let mean = |(c, len): (Vec<f64>, usize)| c.into_iter().map(|x| x / len as f64).collect::<Vec<f64>>();
        let scores = match (self.family(), time, location) {
            (_, None, None) => return Err(Error::Contract("output has no branches".into())),
            (Family::Srm, Some((a, _)), Some((b, _))) => a.iter().zip(&b).map(|(x, y)| x + y).collect(),
            (Family::Srm, Some((a, _)), None) | (Family::Srm, None, Some((a, _))) => a,
            (Family::Lif, Some(a), Some(b)) => fuse(&mean(a), &mean(b), self.spec.fusion)?.0,
            (Family::Lif, Some(a), None) | (Family::Lif, None, Some(a)) => mean(a),
        };
        let class = argmax_lowest(&scores);
        Ok(Prediction { scores, class })
    }

    pub fn predict(&self, stream: &EventStream) -> Result<Prediction> {
        self.predict_output(&self.forward(stream)?)
    }

    /// Flat views of all parameters: time branch first, then the location
    /// branch, each layer's weights before its bias.
    pub fn params(&self) -> Vec<&[f64]> {
        self.time
            .iter()
            .chain(self.location.iter())
            .flat_map(Branch::params)
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.time
            .iter_mut()
            .chain(self.location.iter_mut())
            .flat_map(Branch::params_mut)
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = CheckpointRef {
            format_version: CHECKPOINT_VERSION,
            model: self,
        };
        serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        ck.model.spec.validate()?;
        for b in ck.model.branches() {
            b.validate()?;
        }
        Ok(ck.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format_version: u32,
    model: &'a Model,
}
