//! Location orders: the sequence in which location-domain neurons visit taxels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Taxels on one fingertip sensor.
pub const SENSOR_TAXELS: usize = 39;

// 1-based taxel indices for a single sensor.
const ARCH: [usize; SENSOR_TAXELS] = [
    11, 25, 35, 4, 18, 30, 7, 2, 20, 37, 29, 12, 9, 33, 23, 16, 1, 6, 15, 21, 27, 34, 39, 24, 17,
    10, 31, 38, 28, 14, 3, 22, 32, 8, 19, 36, 5, 13, 26,
];
const WHORL: [usize; SENSOR_TAXELS] = [
    21, 15, 16, 23, 27, 24, 17, 6, 9, 12, 20, 29, 33, 34, 31, 28, 22, 14, 10, 1, 2, 7, 18, 30, 37,
    39, 38, 32, 19, 8, 3, 4, 11, 25, 35, 36, 26, 13, 5,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    Arch,
    Whorl,
    Loop,
    Custom,
}

impl std::str::FromStr for OrderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arch" => Ok(OrderKind::Arch),
            "whorl" => Ok(OrderKind::Whorl),
            "loop" => Ok(OrderKind::Loop),
            "custom" | "identity" => Ok(OrderKind::Custom),
            other => Err(Error::Order(format!("unknown location order `{other}`"))),
        }
    }
}

impl std::fmt::Display for OrderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OrderKind::Arch => "arch",
            OrderKind::Whorl => "whorl",
            OrderKind::Loop => "loop",
            OrderKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// A bijection on taxel indices. Stored zero-based: `permutation[i]` is
/// the taxel visited at position `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationOrder {
    kind: OrderKind,
    permutation: Vec<usize>,
}

impl LocationOrder {
    /// One of the fingerprint-inspired orders. `n` must be a multiple of 39;
    /// for several sensors the single-sensor order repeats per sensor.
    pub fn named(kind: OrderKind, n: usize) -> Result<Self> {
        let base: Vec<usize> = match kind {
            OrderKind::Arch => ARCH.to_vec(),
            OrderKind::Whorl => WHORL.to_vec(),
            OrderKind::Loop => (1..=SENSOR_TAXELS).collect(),
            OrderKind::Custom => {
                return Err(Error::Order("custom orders need an explicit permutation".into()))
            }
        };
        if n == 0 || n % SENSOR_TAXELS != 0 {
            return Err(Error::Order(format!(
                "{kind} order is defined for multiples of {SENSOR_TAXELS} taxels, got N={n}"
            )));
        }
        let permutation = (0..n / SENSOR_TAXELS)
            .flat_map(|sensor| base.iter().map(move |&t| sensor * SENSOR_TAXELS + t - 1))
            .collect();
        Ok(Self { kind, permutation })
    }

    /// Zero-based explicit permutation.
    pub fn custom(permutation: Vec<usize>) -> Result<Self> {
        let n = permutation.len();
        if n == 0 {
            return Err(Error::Order("empty permutation".into()));
        }
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || seen[p] {
                return Err(Error::Order(format!("not a permutation of 0..{n}: {permutation:?}")));
            }
            seen[p] = true;
        }
        Ok(Self {
            kind: OrderKind::Custom,
            permutation,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            kind: OrderKind::Custom,
            permutation: (0..n).collect(),
        }
    }

    /// Named kinds when `n` allows it; otherwise falls back to the identity order.
    pub fn named_or_identity(kind: OrderKind, n: usize) -> Self {
        Self::named(kind, n).unwrap_or_else(|_| Self::identity(n))
    }

    pub fn kind(&self) -> OrderKind {
        self.kind
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.permutation
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.permutation.iter().map(|&p| p + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.len()];
        for (i, &p) in self.permutation.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }
}

/// Builds an order of the requested kind; `custom` must be supplied for
/// [`OrderKind::Custom`] and is zero-based.
pub fn make_order(kind: OrderKind, n: usize, custom: Option<Vec<usize>>) -> Result<LocationOrder> {
    match kind {
        OrderKind::Custom => {
            let perm = custom.ok_or_else(|| Error::Order("custom order without permutation".into()))?;
            if perm.len() != n {
                return Err(Error::Order(format!("permutation has {} entries, N={n}", perm.len())));
            }
            LocationOrder::custom(perm)
        }
        named => LocationOrder::named(named, n),
    }
}
