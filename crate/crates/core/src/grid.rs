//! Time partitions of `[0, T]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    dyadic: bool,
}

impl TimeGrid {
    /// Uniform grid with `n` steps. The dyadic flag is set when `n` is a power of two.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        let mut nodes: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        nodes[n] = horizon;
        Ok(Self { nodes, dyadic: n.is_power_of_two() })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidParameter("grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidParameter(format!("first node must be 0, got {}", nodes[0])));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nodes must be strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { nodes, dyadic: false })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of steps.
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.n()]
    }

    pub fn is_dyadic(&self) -> bool {
        self.dyadic
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn mesh(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Inserts the midpoint of every step.
    pub fn refine(&self) -> Self {
        self.refine_by(2)
    }

    /// Splits every step into `factor` equal sub-steps. Original nodes keep their values.
    pub fn refine_by(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut nodes = Vec::with_capacity(self.n() * factor + 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            for k in 1..factor {
                nodes.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
            }
        }
        nodes.push(self.horizon());
        Self { nodes, dyadic: self.dyadic && factor.is_power_of_two() }
    }

    /// Keeps every other node. Requires an even number of steps.
    pub fn coarsen(&self) -> Option<Self> {
        if !self.n().is_multiple_of(2) || self.n() < 2 {
            return None;
        }
        let nodes = self.nodes.iter().step_by(2).copied().collect();
        Some(Self { nodes, dyadic: self.dyadic })
    }

    /// Index of the node equal to `t` up to `1e-12 * T`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let pos = self.nodes.partition_point(|&x| x < t - tol);
        if pos < self.nodes.len() && (self.nodes[pos] - t).abs() <= tol {
            Ok(pos)
        } else {
            Err(Error::NodeNotOnGrid(t))
        }
    }

    /// Restriction to `[0, t_k]`.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n() {
            return Err(Error::InvalidParameter(format!("prefix index {k} out of range")));
        }
        Ok(Self { nodes: self.nodes[..=k].to_vec(), dyadic: self.dyadic && k.is_power_of_two() })
    }
}
