//! p-variation over sub-grid partitions.

use serde::{Deserialize, Serialize};

/// Largest grid for which the exact O(N^2) dynamic program is used.
pub const EXACT_DP_MAX: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PVarMethod {
    ExactDp,
    /// Maximum of exact values on dyadic sub-grids; a lower bound.
    DyadicLowerBound,
}

/// `sup_partitions (sum |inc(a, b)|^p)^{1/p}` over partitions of nodes `0..=n`,
/// for an arbitrary (not necessarily additive) increment norm.
pub fn p_variation_with<F: Fn(usize, usize) -> f64>(n: usize, p: f64, norm: F) -> (f64, PVarMethod) {
    if n == 0 {
        return (0.0, PVarMethod::ExactDp);
    }
    if n <= EXACT_DP_MAX {
        return (dp(&(0..=n).collect::<Vec<_>>(), p, &norm), PVarMethod::ExactDp);
    }
    let mut stride = 1;
    while n / stride > EXACT_DP_MAX {
        stride *= 2;
    }
    let mut best = 0.0f64;
    for s in [stride, stride * 2, stride * 4] {
        let mut nodes: Vec<usize> = (0..=n).step_by(s).collect();
        if *nodes.last().unwrap() != n {
            nodes.push(n);
        }
        best = best.max(dp(&nodes, p, &norm));
    }
    (best, PVarMethod::DyadicLowerBound)
}

fn dp<F: Fn(usize, usize) -> f64>(nodes: &[usize], p: f64, norm: &F) -> f64 {
    let m = nodes.len();
    let mut best = vec![0.0f64; m];
    for k in 1..m {
        let mut acc = f64::NEG_INFINITY;
        for j in 0..k {
            let v = best[j] + norm(nodes[j], nodes[k]).powf(p);
            if v > acc {
                acc = v;
            }
        }
        best[k] = acc;
    }
    best[m - 1].powf(1.0 / p)
}

/// p-variation of a node-major path with `d` components, Euclidean norm.
pub fn p_variation_path(path: &[f64], d: usize, p: f64) -> (f64, PVarMethod) {
    let n = path.len() / d - 1;
    p_variation_with(n, p, |a, b| {
        (0..d).map(|j| (path[b * d + j] - path[a * d + j]).powi(2)).sum::<f64>().sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_path_one_variation() {
        let path = [0.0, 0.3, 0.35, 1.0, 2.5];
        assert!((p_variation_path(&path, 1, 1.0).0 - 2.5).abs() < 1e-15);
        assert_eq!(p_variation_path(&[0.0; 6], 1, 2.0).0, 0.0);
    }

    #[test]
    fn sawtooth() {
        // Partitions {0,2}: 0; {0,1,2}: 2 -> sqrt(2).
        let (v, m) = p_variation_path(&[0.0, 1.0, 0.0], 1, 2.0);
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m, PVarMethod::ExactDp);
    }

    #[test]
    fn large_grid_is_lower_bound() {
        let path: Vec<f64> = (0..=1024).map(|i| (i as f64 * 0.37).sin()).collect();
        let (v, m) = p_variation_path(&path, 1, 2.0);
        assert_eq!(m, PVarMethod::DyadicLowerBound);
        let coarse: Vec<f64> = path.iter().step_by(2).copied().collect();
        assert!(v >= p_variation_path(&coarse, 1, 2.0).0 - 1e-12);
    }
}
