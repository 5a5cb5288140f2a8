//! Neuron dynamics shared by the time-recurrent and location-recurrent families.
//!
//! The same update rules drive both families; only the recurrence axis
//! differs. A time-domain neuron steps over time bins, a location-domain
//! neuron steps over taxels in a chosen location order.
//!
//! Kernel-based (SRM) neurons use a normalized alpha kernel for the
//! incoming response and a `-2 * threshold` scaled alpha kernel for the
//! refractory response, both truncated after `kernel_window` steps.
//! Leaky (LIF) neurons use the multiplicative reset
//! `u = decay * u_prev * (1 - o_prev) + I`.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_data::SpikeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrmParams {
    pub threshold: f64,
    pub tau_s: f64,
    pub tau_r: f64,
    pub kernel_window: usize,
}

impl Default for SrmParams {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            tau_s: 2.0,
            tau_r: 2.0,
            kernel_window: 16,
        }
    }
}

impl SrmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::Param(format!("SRM threshold must be > 0, got {}", self.threshold)));
        }
        if !(self.tau_s > 0.0 && self.tau_r > 0.0) {
            return Err(Error::Param(format!(
                "SRM time constants must be > 0, got tau_s={} tau_r={}",
                self.tau_s, self.tau_r
            )));
        }
        if self.kernel_window == 0 {
            return Err(Error::Param("SRM kernel_window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// alpha for time-domain neurons, beta for location-domain neurons.
    pub decay: f64,
    pub threshold: f64,
    pub reset: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            decay: 0.2,
            threshold: 0.5,
            reset: 0.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Param(format!("LIF decay must be in (0, 1], got {}", self.decay)));
        }
        if !(self.threshold > self.reset) {
            return Err(Error::Param(format!(
                "LIF threshold {} must exceed reset {}",
                self.threshold, self.reset
            )));
        }
        Ok(())
    }
}

/// Stand-in for the derivative of the Heaviside spike function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Surrogate {
    /// Box of height `1/width` centred on the threshold.
    Rectangular { width: f64 },
    /// Laplace density `k/2 * exp(-k |u - threshold|)`.
    Exponential { steepness: f64 },
}

impl Surrogate {
    pub fn grad(&self, u: f64, threshold: f64) -> f64 {
        let x = u - threshold;
        match *self {
            Surrogate::Rectangular { width } => {
                if x.abs() < width / 2.0 {
                    1.0 / width
                } else {
                    0.0
                }
            }
            Surrogate::Exponential { steepness } => 0.5 * steepness * (-steepness * x.abs()).exp(),
        }
    }

    /// Antiderivative of [`Surrogate::grad`] rising from 0 to 1; the smooth
    /// spike function of the relaxed model.
    pub fn primitive(&self, u: f64, threshold: f64) -> f64 {
        let x = u - threshold;
        match *self {
            Surrogate::Rectangular { width } => (x / width + 0.5).clamp(0.0, 1.0),
            Surrogate::Exponential { steepness } => {
                if x < 0.0 {
                    0.5 * (steepness * x).exp()
                } else {
                    1.0 - 0.5 * (-steepness * x).exp()
                }
            }
        }
    }

    /// Potentials where the relaxed spike function is not differentiable.
    pub fn kinks(&self, threshold: f64) -> Vec<f64> {
        match *self {
            Surrogate::Rectangular { width } => vec![threshold - width / 2.0, threshold + width / 2.0],
            Surrogate::Exponential { .. } => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Surrogate::Rectangular { width } => width > 0.0,
            Surrogate::Exponential { steepness } => steepness > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("surrogate scale must be > 0: {self:?}")))
        }
    }
}

/// Parses `rectangular:<width>` or `exponential:<steepness>`.
impl std::str::FromStr for Surrogate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Param(format!("cannot parse surrogate `{s}`"));
        let (name, scale) = s.split_once(':').ok_or_else(bad)?;
        let scale: f64 = scale.trim().parse().map_err(|_| bad())?;
        let sg = match name.trim() {
            "rectangular" => Surrogate::Rectangular { width: scale },
            "exponential" => Surrogate::Exponential { steepness: scale },
            _ => return Err(bad()),
        };
        sg.validate()?;
        Ok(sg)
    }
}

impl std::fmt::Display for Surrogate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Surrogate::Rectangular { width } => write!(f, "rectangular:{width}"),
            Surrogate::Exponential { steepness } => write!(f, "exponential:{steepness}"),
        }
    }
}

/// Spike nonlinearity used by a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    Heaviside,
    /// The surrogate-relaxed model: spikes are the surrogate primitive.
    Relaxed(Surrogate),
}

impl SpikeFn {
    #[inline]
    pub fn fire(&self, u: f64, threshold: f64) -> f64 {
        match self {
            SpikeFn::Heaviside => {
                if u >= threshold {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFn::Relaxed(s) => s.primitive(u, threshold),
        }
    }
}

/// Incoming spike response kernel.
pub fn kernel_eps(s: i64, tau_s: f64, window: usize) -> f64 {
    if s < 0 || s as u64 > window as u64 {
        return 0.0;
    }
    let x = s as f64 / tau_s;
    x * (1.0 - x).exp()
}

/// Refractory kernel, never positive.
pub fn kernel_eta(s: i64, tau_r: f64, threshold: f64, window: usize) -> f64 {
    -2.0 * threshold * kernel_eps(s, tau_r, window)
}

/// Kernel values tabulated for offsets `0..=kernel_window`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrmKernels {
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
}

impl SrmKernels {
    pub fn new(p: &SrmParams) -> Self {
        let w = p.kernel_window;
        Self {
            eps: (0..=w as i64).map(|s| kernel_eps(s, p.tau_s, w)).collect(),
            eta: (0..=w as i64).map(|s| kernel_eta(s, p.tau_r, p.threshold, w)).collect(),
        }
    }

    pub fn window(&self) -> usize {
        self.eps.len() - 1
    }
}

/// Firing times (or locations) of one neuron, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiringRecord(Vec<usize>);

impl FiringRecord {
    pub fn push(&mut self, index: usize) {
        debug_assert!(self.0.last().is_none_or(|&l| l < index));
        self.0.push(index);
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Values produced by one SRM population step.
#[derive(Debug, Clone)]
pub struct SrmStep {
    /// Kernel-filtered presynaptic trace, one entry per input.
    pub psp: Vec<f64>,
    pub potential: Vec<f64>,
    pub spikes: Vec<f64>,
}

/// Incremental SRM population state: spike histories bounded by the kernel window.
#[derive(Debug, Clone)]
pub struct SrmStepper {
    kernels: SrmKernels,
    threshold: f64,
    inputs: VecDeque<Vec<f64>>,
    outputs: VecDeque<Vec<f64>>,
}

impl SrmStepper {
    pub fn new(params: &SrmParams) -> Self {
        Self {
            kernels: SrmKernels::new(params),
            threshold: params.threshold,
            inputs: VecDeque::new(),
            outputs: VecDeque::new(),
        }
    }

    /// Advances by one step along the recurrence axis.
    ///
    /// `weights` is `out x in`; `x` is the presynaptic spike column.
    pub fn step(&mut self, weights: &Array2<f64>, x: &[f64], spike: SpikeFn) -> SrmStep {
        let window = self.kernels.window();
        self.inputs.push_front(x.to_vec());
        self.inputs.truncate(window + 1);

        let mut psp = vec![0.0; x.len()];
        for (s, col) in self.inputs.iter().enumerate() {
            let k = self.kernels.eps[s];
            for (a, &xj) in psp.iter_mut().zip(col) {
                if xj != 0.0 {
                    *a += k * xj;
                }
            }
        }

        let n_out = weights.nrows();
        let mut potential = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let mut z = 0.0;
            for (w, &a) in weights.row(i).iter().zip(&psp) {
                z += w * a;
            }
            let mut r = 0.0;
            for (s, col) in self.outputs.iter().enumerate() {
                let o = col[i];
                if o != 0.0 {
                    r += self.kernels.eta[s + 1] * o;
                }
            }
            potential.push(z + r);
        }
        let spikes: Vec<f64> = potential.iter().map(|&u| spike.fire(u, self.threshold)).collect();

        self.outputs.push_front(spikes.clone());
        self.outputs.truncate(window);
        SrmStep {
            psp,
            potential,
            spikes,
        }
    }
}

/// Result of running an SRM population over a whole recurrence axis.
#[derive(Debug, Clone)]
pub struct SrmOutput {
    /// `out x L`.
    pub spikes: SpikeGrid,
    /// `out x L`.
    pub potentials: Array2<f64>,
    pub firing: Vec<FiringRecord>,
}

/// Runs a kernel-based population over a presynaptic spike grid
/// (`in x L`, recurrence along columns).
///
/// Works for either family: pass time bins as columns for a time-domain
/// population, or ordered locations for a location-domain one.
pub fn srm_forward(inputs: &SpikeGrid, weights: &Array2<f64>, params: &SrmParams) -> Result<SrmOutput> {
    params.validate()?;
    if weights.ncols() != inputs.rows() {
        return Err(Error::Shape(format!(
            "weights expect {} inputs, grid has {}",
            weights.ncols(),
            inputs.rows()
        )));
    }
    let len = inputs.cols();
    let n_out = weights.nrows();
    let mut stepper = SrmStepper::new(params);
    let mut spikes = SpikeGrid::zeros(n_out, len);
    let mut potentials = Array2::zeros((n_out, len));
    let mut firing = vec![FiringRecord::default(); n_out];
    for l in 0..len {
        let x: Vec<f64> = (0..inputs.rows()).map(|j| f64::from(inputs.get(j, l))).collect();
        let step = stepper.step(weights, &x, SpikeFn::Heaviside);
        for i in 0..n_out {
            potentials[(i, l)] = step.potential[i];
            if step.spikes[i] == 1.0 {
                spikes.set(i, l, true);
                firing[i].push(l);
            }
        }
    }
    Ok(SrmOutput {
        spikes,
        potentials,
        firing,
    })
}

/// Leaky update shared by both families; returns the new potential.
#[inline]
pub fn lif_potential(u_prev: f64, o_prev: f64, drive: f64, p: &LifParams) -> f64 {
    p.decay * (u_prev * (1.0 - o_prev) + p.reset * o_prev) + drive
}

/// One time-domain leaky step.
pub fn tlif_step(u_prev: f64, spiked_prev: bool, drive: f64, p: &LifParams) -> (f64, bool) {
    let u = lif_potential(u_prev, f64::from(u8::from(spiked_prev)), drive, p);
    (u, u >= p.threshold)
}

/// One location-domain leaky step; the caller supplies the predecessor
/// location's state under the active order (zeros for the first location).
pub fn llif_step(u_prev_location: f64, spiked_prev: bool, drive: f64, p: &LifParams) -> (f64, bool) {
    tlif_step(u_prev_location, spiked_prev, drive, p)
}

/// Runs independent leaky neurons over a drive matrix (`neurons x L`).
pub fn lif_forward(drive: &Array2<f64>, p: &LifParams) -> (SpikeGrid, Array2<f64>) {
    let (n, len) = drive.dim();
    let mut spikes = SpikeGrid::zeros(n, len);
    let mut potentials = Array2::zeros((n, len));
    for i in 0..n {
        let (mut u, mut o) = (0.0, false);
        for l in 0..len {
            (u, o) = tlif_step(u, o, drive[(i, l)], p);
            potentials[(i, l)] = u;
            spikes.set(i, l, o);
        }
    }
    (spikes, potentials)
}
