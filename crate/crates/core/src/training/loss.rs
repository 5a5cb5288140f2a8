//! Spike-count and label-vector losses with their output gradients.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Desired output spike counts for the true class and for every other class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeCountTarget {
    pub true_count: f64,
    pub false_count: f64,
}

impl SpikeCountTarget {
    pub fn new(true_count: f64, false_count: f64) -> Result<Self> {
        if !(true_count > false_count && false_count >= 0.0 && true_count.is_finite()) {
            return Err(Error::Param(format!(
                "spike-count targets need true > false >= 0, got {true_count} and {false_count}"
            )));
        }
        Ok(Self {
            true_count,
            false_count,
        })
    }

    /// `ceil(0.5 * len)` for the true class and `ceil(0.03 * len)` otherwise.
    pub fn for_domain(len: usize) -> Self {
        let len = len as f64;
        Self {
            true_count: (0.5 * len).ceil(),
            false_count: (0.03 * len).ceil(),
        }
    }

    pub fn vector(&self, label: usize, n_classes: usize) -> Vec<f64> {
        (0..n_classes)
            .map(|k| if k == label { self.true_count } else { self.false_count })
            .collect()
    }
}

/// Row sums of a class-major output (`K x L`).
pub fn spike_counts(o: &Array2<f64>) -> Vec<f64> {
    o.rows().into_iter().map(|r| r.sum()).collect()
}

fn half_sq(counts: &[f64], target: &[f64]) -> f64 {
    0.5 * counts.iter().zip(target).map(|(c, t)| (c - t) * (c - t)).sum::<f64>()
}

fn check_classes(o: &Array2<f64>, target: &[f64]) -> Result<()> {
    if o.nrows() != target.len() {
        return Err(Error::Shape(format!("{} output rows, {} targets", o.nrows(), target.len())));
    }
    Ok(())
}

/// Spike-count loss over one output domain: `½ Σ_k (Σ_l o_k(l) − target_k)²`.
pub fn loss_count(o: &Array2<f64>, target: &[f64]) -> Result<f64> {
    check_classes(o, target)?;
    Ok(half_sq(&spike_counts(o), target))
}

/// Location spike-count loss on `O_2` (`K x N`).
pub fn loss_lsrm(o2: &Array2<f64>, target: &[f64]) -> Result<f64> {
    loss_count(o2, target)
}

/// Weighted spike-count loss: the time counts plus `lambda` times the
/// location counts are compared against a target over the combined domain.
pub fn loss_weighted(o1: &Array2<f64>, o2: &Array2<f64>, lambda: f64, target: &[f64]) -> Result<f64> {
    check_classes(o1, target)?;
    check_classes(o2, target)?;
    if !(lambda > 0.0) {
        return Err(Error::Param(format!("lambda must be positive, got {lambda}")));
    }
    let combined: Vec<f64> = spike_counts(o1)
        .iter()
        .zip(spike_counts(o2))
        .map(|(a, b)| a + lambda * b)
        .collect();
    Ok(half_sq(&combined, target))
}

/// Squared error between a label vector and a one-hot target.
pub fn loss_mse(o_prime: &[f64], y: &[f64]) -> Result<f64> {
    if o_prime.len() != y.len() {
        return Err(Error::Shape(format!("label vector {} vs target {}", o_prime.len(), y.len())));
    }
    Ok(o_prime.iter().zip(y).map(|(o, t)| (t - o) * (t - o)).sum())
}

pub fn one_hot(label: usize, n_classes: usize) -> Vec<f64> {
    (0..n_classes).map(|k| f64::from(u8::from(k == label))).collect()
}

/// `∂ loss_count / ∂ o_k(l)`, identical for every `l` of row `k`.
pub fn count_grad(o: &Array2<f64>, target: &[f64], scale: f64) -> Array2<f64> {
    let counts = spike_counts(o);
    Array2::from_shape_fn(o.dim(), |(k, _)| scale * (counts[k] - target[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lsrm_examples() {
        let o = array![[1.0, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0]];
        assert_eq!(loss_lsrm(&o, &[2.0, 2.0]).unwrap(), 0.0);
        let o = array![[1.0, 1.0, 1.0]];
        assert_eq!(loss_lsrm(&o, &[1.0]).unwrap(), 2.0);
        let o = array![[1.0, 1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0, 0.0]];
        assert_eq!(loss_lsrm(&o, &[5.0, 2.0]).unwrap(), 2.0);
    }

    #[test]
    fn weighted_examples() {
        let o1 = array![[1.0, 1.0, 1.0, 1.0, 0.0]];
        let o2 = array![[1.0, 0.0, 1.0]];
        assert_eq!(loss_weighted(&o1, &o2, 0.5, &[5.0]).unwrap(), 0.0);
        assert_eq!(loss_weighted(&o1, &o2, 1.0, &[6.0]).unwrap(), 0.0);
        assert!(loss_weighted(&o1, &o2, 0.0, &[6.0]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(loss_mse(&[0.0, 0.0, 0.0], &one_hot(2, 3)).unwrap(), 1.0);
    }

    #[test]
    fn default_targets() {
        let t = SpikeCountTarget::for_domain(325);
        assert_eq!((t.true_count, t.false_count), (163.0, 10.0));
        assert_eq!(t.vector(1, 3), vec![10.0, 163.0, 10.0]);
        assert!(SpikeCountTarget::new(1.0, 2.0).is_err());
    }
}
