//! First-order optimizers over the flat parameter groups of a model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Rmsprop,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
        })
    }
}

const RHO: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Optimizer state; moment buffers are allocated on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Coupled L2 penalty added to every gradient as `l2 * w`.
    pub l2: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, l2: f64) -> Self {
        Self {
            kind,
            lr,
            l2,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    /// Applies one update; `grads` must be shaped like `params`.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::Shape("gradient groups do not match parameter groups".into()));
        }
        if self.second.is_empty() {
            self.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            if self.kind == OptimizerKind::Adam {
                self.first = self.second.clone();
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        for (gi, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let v = &mut self.second[gi];
            match self.kind {
                OptimizerKind::Rmsprop => {
                    for i in 0..p.len() {
                        let gr = g[i] + self.l2 * p[i];
                        v[i] = RHO * v[i] + (1.0 - RHO) * gr * gr;
                        p[i] -= self.lr * gr / (v[i].sqrt() + EPS);
                    }
                }
                OptimizerKind::Adam => {
                    let m = &mut self.first[gi];
                    let c1 = 1.0 - BETA1.powi(t);
                    let c2 = 1.0 - BETA2.powi(t);
                    for i in 0..p.len() {
                        let gr = g[i] + self.l2 * p[i];
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * gr;
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * gr * gr;
                        p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                    }
                }
            }
        }
        Ok(())
    }
}
