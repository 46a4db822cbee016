use crate::covariance::CovKernel;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// `h = sum_i a_i R(t_i, .)` per driver component.
#[derive(Clone, Debug)]
pub struct CMElement {
    kernel: CovKernel,
    nodes: Vec<f64>,
    /// `coeffs[j][i]` multiplies `R(t_i, .)` in component `j`.
    coeffs: Vec<Vec<f64>>,
}

impl CMElement {
    pub fn new(kernel: &CovKernel, nodes: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| c.len() != nodes.len()) {
            return Err(Error::DimensionMismatch("one coefficient per node and component".into()));
        }
        for &t in &nodes {
            kernel.eval(t, t)?;
        }
        Ok(Self { kernel: kernel.clone(), nodes, coeffs })
    }

    pub fn zero(kernel: &CovKernel, d: usize) -> Self {
        Self { kernel: kernel.clone(), nodes: vec![kernel.horizon()], coeffs: vec![vec![0.0]; d] }
    }

    /// `R(t, .)` in every component.
    pub fn atom(kernel: &CovKernel, t: f64, d: usize) -> Result<Self> {
        Self::new(kernel, vec![t], vec![vec![1.0]; d])
    }

    pub fn kernel(&self) -> &CovKernel {
        &self.kernel
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn same_kernel(&self, other: &Self) -> Result<()> {
        if self.kernel.spec() != other.kernel.spec() {
            return Err(Error::KernelMismatch);
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("component counts differ".into()));
        }
        Ok(())
    }

    /// Sum of two elements (node lists are concatenated).
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_kernel(other)?;
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Ok(Self { kernel: self.kernel.clone(), nodes, coeffs })
    }

    pub fn scale(&self, c: f64) -> Self {
        let coeffs = self.coeffs.iter().map(|a| a.iter().map(|x| c * x).collect()).collect();
        Self { kernel: self.kernel.clone(), nodes: self.nodes.clone(), coeffs }
    }

    /// `sum_j sum_{i,l} a^j_i b^j_l R(t_i, s_l)`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_kernel(other)?;
        let mut total = 0.0;
        for (i, &t) in self.nodes.iter().enumerate() {
            for (l, &s) in other.nodes.iter().enumerate() {
                let r = self.kernel.eval(t, s)?;
                for j in 0..self.dim() {
                    total += self.coeffs[j][i] * other.coeffs[j][l] * r;
                }
            }
        }
        Ok(total)
    }

    pub fn norm_sq(&self) -> Result<f64> {
        self.inner(self)
    }

    /// `h(t)` per component.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        for (i, &s) in self.nodes.iter().enumerate() {
            let r = self.kernel.eval(s, t)?;
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.coeffs[j][i] * r;
            }
        }
        Ok(out)
    }

    /// Trace on every grid node, node-major like sampled paths.
    pub fn trace(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = vec![0.0; grid.nodes().len() * d];
        for (n, &t) in grid.nodes().iter().enumerate() {
            out[n * d..(n + 1) * d].copy_from_slice(&self.eval(t)?);
        }
        Ok(out)
    }
}

pub fn cm_inner(h1: &CMElement, h2: &CMElement) -> Result<f64> {
    h1.inner(h2)
}

/// Wiener integral `X(h) = sum_i a_i X_{t_i}` for a node-major path on `grid`.
pub fn wiener_integral(h: &CMElement, grid: &TimeGrid, path: &[f64]) -> Result<Vec<f64>> {
    let d = h.dim();
    if path.len() != grid.nodes().len() * d {
        return Err(Error::DimensionMismatch("path length does not match grid and dimension".into()));
    }
    let mut out = vec![0.0; d];
    for (i, &t) in h.nodes.iter().enumerate() {
        let node = grid.index_of(t)?;
        for (j, o) in out.iter_mut().enumerate() {
            *o += h.coeffs[j][i] * path[node * d + j];
        }
    }
    Ok(out)
}
