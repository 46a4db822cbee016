//! Level-2 geometric lift of piecewise-linear paths.

use serde::{Deserialize, Serialize};

pub use crate::pvar::{p_variation_path, p_variation_with, PVarMethod};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughPath2 {
    grid: TimeGrid,
    d: usize,
    /// Node-major path values.
    values: Vec<f64>,
    /// Per-step increments, `level1[i * d + j]`.
    level1: Vec<f64>,
    /// Per-step iterated integrals, `level2[(i * d + j) * d + k]`.
    level2: Vec<f64>,
}

/// Chen product of `(a1, a2)` followed by `(b1, b2)`, written into `(a1, a2)`.
fn chen(d: usize, a1: &mut [f64], a2: &mut [f64], b1: &[f64], b2: &[f64]) {
    for j in 0..d {
        for k in 0..d {
            a2[j * d + k] += b2[j * d + k] + a1[j] * b1[k];
        }
    }
    for j in 0..d {
        a1[j] += b1[j];
    }
}

impl RoughPath2 {
    /// Lifts a node-major path: per step `x2 = dx (x) dx / 2`.
    pub fn lift(grid: &TimeGrid, d: usize, path: &[f64]) -> Result<Self> {
        let n = grid.n();
        if d == 0 || path.len() != (n + 1) * d {
            return Err(Error::DimensionMismatch(format!(
                "path has {} values, grid needs {} x {d}",
                path.len(),
                n + 1
            )));
        }
        let mut level1 = vec![0.0; n * d];
        let mut level2 = vec![0.0; n * d * d];
        for i in 0..n {
            for j in 0..d {
                level1[i * d + j] = path[(i + 1) * d + j] - path[i * d + j];
            }
            for j in 0..d {
                for k in 0..d {
                    level2[(i * d + j) * d + k] = 0.5 * level1[i * d + j] * level1[i * d + k];
                }
            }
        }
        Ok(Self { grid: grid.clone(), d, values: path.to_vec(), level1, level2 })
    }

    /// Dilation by `eps`. Increments are recomputed from `eps * path`, so for a
    /// piecewise-linear lift this is bitwise the lift of `eps * path`; any area
    /// carried by the steps is scaled by `eps^2`.
    pub fn scaled(&self, eps: f64) -> Self {
        let path: Vec<f64> = self.values.iter().map(|x| eps * x).collect();
        let mut out = Self::lift(&self.grid, self.d, &path).expect("same shape");
        let d = self.d;
        let e2 = eps * eps;
        for i in 0..self.grid.n() {
            let x2 = self.step2(i);
            for j in 0..d {
                for k in 0..d {
                    let area = 0.5 * (x2[j * d + k] - x2[k * d + j]);
                    if area != 0.0 {
                        out.level2[(i * d + j) * d + k] += e2 * area;
                    }
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step1(&self, i: usize) -> &[f64] {
        &self.level1[i * self.d..(i + 1) * self.d]
    }

    pub fn step2(&self, i: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.level2[i * dd..(i + 1) * dd]
    }

    /// `(x1_{t_a t_b}, x2_{t_a t_b})` by sequential Chen composition.
    pub fn increment(&self, a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let (mut x1, mut x2) = (vec![0.0; d], vec![0.0; d * d]);
        for i in a..b {
            chen(d, &mut x1, &mut x2, self.step1(i), self.step2(i));
        }
        (x1, x2)
    }

    /// Level-2 increments from node `a` to every later node, `out[b - a]`.
    pub fn increments_from(&self, a: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let d = self.d;
        let (mut x1, mut x2) = (vec![0.0; d], vec![0.0; d * d]);
        let mut out = vec![(x1.clone(), x2.clone())];
        for i in a..self.grid.n() {
            chen(d, &mut x1, &mut x2, self.step1(i), self.step2(i));
            out.push((x1.clone(), x2.clone()));
        }
        out
    }

    /// Coarse-grained lift on every `stride`-th node, composing steps with Chen.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let n = self.grid.n();
        if stride == 0 || !n.is_multiple_of(stride) {
            return Err(Error::InvalidParameter(format!("stride {stride} does not divide {n}")));
        }
        let nodes: Vec<f64> = self.grid.nodes().iter().step_by(stride).copied().collect();
        let grid = if self.grid.is_dyadic() && stride.is_power_of_two() {
            TimeGrid::uniform(self.grid.horizon(), n / stride)?
        } else {
            TimeGrid::from_nodes(nodes)?
        };
        let d = self.d;
        let mut level1 = Vec::with_capacity(grid.n() * d);
        let mut level2 = Vec::with_capacity(grid.n() * d * d);
        for c in 0..grid.n() {
            let (x1, x2) = self.increment(c * stride, (c + 1) * stride);
            level1.extend(x1);
            level2.extend(x2);
        }
        let values = (0..=grid.n()).flat_map(|c| self.values[c * stride * d..(c * stride + 1) * d].to_vec()).collect();
        Ok(Self { grid, d, values, level1, level2 })
    }

    /// Largest Chen defect `|x2_ac - x2_ab - x2_bc - x1_ab (x) x1_bc|` over all node triples.
    pub fn chen_defect(&self) -> f64 {
        let n = self.grid.n();
        let d = self.d;
        let tables: Vec<_> = (0..=n).map(|a| self.increments_from(a)).collect();
        let mut worst = 0.0f64;
        for a in 0..=n {
            for b in a..=n {
                let (ab1, ab2) = &tables[a][b - a];
                for c in b..=n {
                    let (bc1, bc2) = &tables[b][c - b];
                    let (_, ac2) = &tables[a][c - a];
                    for j in 0..d {
                        for k in 0..d {
                            let e = ac2[j * d + k] - ab2[j * d + k] - bc2[j * d + k] - ab1[j] * bc1[k];
                            worst = worst.max(e.abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// `|x1|_{p-var} + |x2|_{p/2-var}^{1/2}` on nodes `0..=b`, Frobenius norm at level 2.
    pub fn rough_norm_until(&self, p: f64, b: usize) -> f64 {
        let d = self.d;
        let v = &self.values;
        let (l1, _) = p_variation_with(b, p, |s, t| {
            (0..d).map(|j| (v[t * d + j] - v[s * d + j]).powi(2)).sum::<f64>().sqrt()
        });
        let tables: Vec<Vec<f64>> = (0..=b)
            .map(|a| {
                self.increments_from(a)
                    .into_iter()
                    .take(b - a + 1)
                    .map(|(_, x2)| x2.iter().map(|x| x * x).sum::<f64>().sqrt())
                    .collect()
            })
            .collect();
        let (l2, _) = p_variation_with(b, p / 2.0, |s, t| tables[s][t - s]);
        l1 + l2.sqrt()
    }

    pub fn rough_norm(&self, p: f64) -> f64 {
        self.rough_norm_until(p, self.grid.n())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{CovKernel, KernelSpec};
    use crate::gaussian_path::PathSampler;
    use proptest::prelude::*;

    fn brownian_path(n: usize, d: usize, seed: u64) -> RoughPath2 {
        let k = CovKernel::new(KernelSpec::brownian(1.0)).unwrap();
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        let s = PathSampler::new(&k, &grid, d, seed).unwrap();
        RoughPath2::lift(&grid, d, &s.sample_path(0)).unwrap()
    }

    #[test]
    fn single_step() {
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let rp = RoughPath2::lift(&grid, 2, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(rp.step2(0), &[0.5, 0.0, 0.0, 0.0]);
        let n = rp.rough_norm(2.5);
        assert!((n - (1.0 + 0.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn two_step_area() {
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let path = [0.0, 0.0, 1.0, 0.5, 0.3, 2.0];
        let rp = RoughPath2::lift(&grid, 2, &path).unwrap();
        let (x1, x2) = rp.increment(0, 2);
        let a = [1.0, 0.5];
        let b = [-0.7, 1.5];
        for j in 0..2 {
            for k in 0..2 {
                let anti = 0.5 * (x2[j * 2 + k] - x2[k * 2 + j]);
                let want = 0.5 * (a[j] * b[k] - b[j] * a[k]);
                assert!((anti - want).abs() < 1e-15);
                let sym = 0.5 * (x2[j * 2 + k] + x2[k * 2 + j]);
                assert!((sym - 0.5 * x1[j] * x1[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scaling_keeps_area_of_coarse_lifts() {
        let coarse = brownian_path(64, 2, 4).subsample(8).unwrap();
        let eps = 0.6;
        let s = coarse.scaled(eps);
        for i in 0..8 {
            let (a, b) = (coarse.step2(i), s.step2(i));
            assert!((b[1] - eps * eps * a[1]).abs() < 1e-14);
            assert!((b[2] - eps * eps * a[2]).abs() < 1e-14);
        }
        assert!(s.chen_defect() < 1e-13);
    }

    #[test]
    fn one_dimensional_is_half_square() {
        let rp = brownian_path(16, 1, 2);
        for (a, b) in [(0, 16), (3, 9), (5, 6)] {
            let (x1, x2) = rp.increment(a, b);
            assert!((x2[0] - 0.5 * x1[0] * x1[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn chen_holds_on_all_triples() {
        for seed in 0..5 {
            let rp = brownian_path(32, 2, seed);
            let scale = rp.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2).max(1.0);
            assert!(rp.chen_defect() <= 1e-13 * scale);
        }
    }

    #[test]
    fn scaling_is_exact() {
        let rp = brownian_path(16, 2, 3);
        let eps = 0.35;
        let s = rp.scaled(eps);
        for i in 0..16 {
            for j in 0..2 {
                assert_eq!(s.step1(i)[j], (eps * rp.values()[(i + 1) * 2 + j]) - (eps * rp.values()[i * 2 + j]));
                assert!((s.step1(i)[j] - eps * rp.step1(i)[j]).abs() < 1e-15);
            }
            for (a, b) in s.step2(i).iter().zip(rp.step2(i)) {
                assert!((a - eps * eps * b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn subsample_composes() {
        let rp = brownian_path(16, 2, 4);
        let c = rp.subsample(4).unwrap();
        assert_eq!(c.grid().n(), 4);
        let (x1, x2) = rp.increment(4, 8);
        assert_eq!(c.step1(1), x1.as_slice());
        assert_eq!(c.step2(1), x2.as_slice());
        assert!(rp.rough_norm(2.5) >= 0.0);
        assert_eq!(RoughPath2::lift(&TimeGrid::uniform(1.0, 4).unwrap(), 1, &[0.0; 5]).unwrap().rough_norm(2.5), 0.0);
    }

    #[test]
    fn rough_norm_grows_with_horizon() {
        let rp = brownian_path(64, 2, 6);
        let mut prev = 0.0;
        for b in [8, 16, 32, 64] {
            let v = rp.rough_norm_until(2.5, b);
            assert!(v >= prev);
            prev = v;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pvar_nonincreasing_in_p(steps in prop::collection::vec(-1.0f64..1.0, 1..40)) {
            let mut path = vec![0.0];
            for s in &steps {
                path.push(path.last().unwrap() + s);
            }
            let mut prev = f64::INFINITY;
            for p in [1.0, 1.5, 2.0, 2.5, 3.0] {
                let v = p_variation_path(&path, 1, p).0;
                prop_assert!(v <= prev * (1.0 + 1e-12));
                prev = v;
            }
        }

        #[test]
        fn chen_random(steps in prop::collection::vec(-1.0f64..1.0, 4..40)) {
            let n = steps.len() / 2;
            let mut path = vec![0.0, 0.0];
            for i in 0..n {
                let (x, y) = (path[2 * i] + steps[2 * i], path[2 * i + 1] + steps[2 * i + 1]);
                path.push(x);
                path.push(y);
            }
            let rp = RoughPath2::lift(&TimeGrid::uniform(1.0, n).unwrap(), 2, &path).unwrap();
            let scale = path.iter().fold(1.0f64, |m, v| m.max(v.abs())).powi(2);
            prop_assert!(rp.chen_defect() <= 1e-13 * scale);
        }
    }
}
