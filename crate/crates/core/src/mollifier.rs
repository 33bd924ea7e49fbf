//! Mollifier J_δ and the mollified gradient ∇^δ = ∇(J_δ ⋆ f).
//!
//! The convolution runs over pore cells only; near grains and the outer
//! boundary the stencil weights are renormalized over the covered pore
//! cells, so constants are reproduced exactly. The gradient is taken by
//! centered differences of the mollified field, one-sided at ∂Ω.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::par;

/// Discrete mollifier: offsets strictly inside radius δ with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierKernel {
    delta: f64,
    spacing: f64,
    offsets: Vec<(isize, isize)>,
    weights: Vec<f64>,
}

/// Smooth bump profile in the scaled variable `z = |s|/δ`.
fn bump(z2: f64) -> f64 {
    if z2 < 1.0 {
        (1.0 / (z2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// Builds the discrete kernel for radius `delta` on a grid of spacing `spacing`.
pub fn build_kernel(delta: f64, spacing: f64) -> Result<MollifierKernel> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::param("spacing", format!("must be positive, got {spacing}")));
    }
    if !(delta.is_finite() && delta >= 2.0 * spacing * (1.0 - 1e-12)) {
        return Err(Error::param(
            "delta",
            format!("must be at least two grid spacings ({}), got {delta}", 2.0 * spacing),
        ));
    }
    let reach = (delta / spacing).ceil() as isize;
    let mut offsets = Vec::new();
    let mut raw = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let z2 = ((dx * dx + dy * dy) as f64) * spacing * spacing / (delta * delta);
            let w = bump(z2);
            if w > 0.0 {
                offsets.push((dx, dy));
                raw.push(w);
            }
        }
    }
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();
    Ok(MollifierKernel { delta, spacing, offsets, weights })
}

impl MollifierKernel {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((isize, isize), f64)> + '_ {
        self.offsets.iter().copied().zip(self.weights.iter().copied())
    }

    /// Weight at a grid offset, zero outside the support.
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        self.offsets.iter().position(|&o| o == (dx, dy)).map_or(0.0, |k| self.weights[k])
    }

    /// Kernel dump: `dx,dy,weight` rows in grid units.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dx,dy,weight\n");
        for ((dx, dy), w) in self.iter() {
            let _ = writeln!(s, "{dx},{dy},{w:e}");
        }
        s
    }
}

/// Precomputed mollified-gradient operator on one masked grid.
#[derive(Debug, Clone)]
pub struct MollifiedGradient {
    grid: Grid,
    kernel: MollifierKernel,
    /// Flat grid indices where the mollified field is needed.
    targets: Vec<usize>,
    target_of: Vec<u32>,
    inv_den: Vec<f64>,
}

const NO_TARGET: u32 = u32::MAX;

impl MollifiedGradient {
    pub fn new(grid: &Grid, kernel: &MollifierKernel) -> Result<Self> {
        let n = grid.side();
        if (kernel.spacing - grid.spacing()).abs() > 1e-12 * grid.spacing() {
            return Err(Error::param("spacing", "kernel and grid spacings differ"));
        }
        let mut target_of = vec![NO_TARGET; n * n];
        let mut targets = Vec::new();
        for p in 0..grid.len() {
            let (i, j) = grid.ij(p);
            let mut mark = |ii: usize, jj: usize| {
                let k = jj * n + ii;
                if target_of[k] == NO_TARGET {
                    target_of[k] = 0;
                    targets.push(k);
                }
            };
            mark(i, j);
            if i + 1 < n {
                mark(i + 1, j);
            }
            if i > 0 {
                mark(i - 1, j);
            }
            if j + 1 < n {
                mark(i, j + 1);
            }
            if j > 0 {
                mark(i, j - 1);
            }
        }
        targets.sort_unstable();
        for (t, &k) in targets.iter().enumerate() {
            target_of[k] = t as u32;
        }
        let mut inv_den = Vec::with_capacity(targets.len());
        for &k in &targets {
            let den: f64 = stencil(grid, kernel, k).map(|(_, w)| w).sum();
            if den <= 0.0 {
                return Err(Error::EmptyStencil { cell: k });
            }
            inv_den.push(1.0 / den);
        }
        Ok(MollifiedGradient { grid: grid.clone(), kernel: kernel.clone(), targets, target_of, inv_den })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &MollifierKernel {
        &self.kernel
    }

    /// J_δ ⋆ f at every target cell.
    pub fn mollify(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid.len(), "field length");
        if f.is_empty() {
            return Vec::new();
        }
        let reference = f[0];
        par::map_indices(self.targets.len(), |t| {
            let acc: f64 = stencil(&self.grid, &self.kernel, self.targets[t]).map(|(q, w)| w * (f[q] - reference)).sum();
            reference + acc * self.inv_den[t]
        })
    }

    /// ∇^δ f at every pore cell.
    pub fn apply(&self, f: &[f64]) -> Vec<[f64; 2]> {
        let m = self.mollify(f);
        par::map_indices(self.grid.len(), |p| {
            let mut g = [0.0; 2];
            for (axis, slot) in g.iter_mut().enumerate() {
                let ((hi, lo), scale) = self.difference(p, axis);
                *slot = (m[hi] - m[lo]) * scale;
            }
            g
        })
    }

    /// Adjoint of [`apply`](Self::apply) in the cell-weighted L² pairing.
    pub fn apply_transpose(&self, g: &[[f64; 2]]) -> Vec<f64> {
        assert_eq!(g.len(), self.grid.len(), "field length");
        let mut z = vec![0.0; self.targets.len()];
        for (p, gp) in g.iter().enumerate() {
            for (axis, &value) in gp.iter().enumerate() {
                let ((hi, lo), scale) = self.difference(p, axis);
                z[hi] += scale * value;
                z[lo] -= scale * value;
            }
        }
        let mut out = vec![0.0; self.grid.len()];
        for (t, &k) in self.targets.iter().enumerate() {
            let zt = z[t] * self.inv_den[t];
            if zt == 0.0 {
                continue;
            }
            for (q, w) in stencil(&self.grid, &self.kernel, k) {
                out[q] += w * zt;
            }
        }
        out
    }

    /// Difference stencil `(hi, lo)` in target indices and its 1/width factor.
    fn difference(&self, p: usize, axis: usize) -> ((usize, usize), f64) {
        let n = self.grid.side();
        let (i, j) = self.grid.ij(p);
        let (c, step) = if axis == 0 { (i, 1) } else { (j, n) };
        let k = j * n + i;
        let t = |k: usize| self.target_of[k] as usize;
        let h = self.grid.spacing();
        match (c + 1 < n, c > 0) {
            (true, true) => ((t(k + step), t(k - step)), 0.5 / h),
            (true, false) => ((t(k + step), t(k)), 1.0 / h),
            (false, true) => ((t(k), t(k - step)), 1.0 / h),
            (false, false) => ((t(k), t(k)), 0.0),
        }
    }

    /// Power-iteration estimate of the L² → L² operator norm.
    pub fn operator_norm(&self, iterations: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..self.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut sigma2 = 0.0;
        for _ in 0..iterations {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            let y = self.apply_transpose(&self.apply(&x));
            sigma2 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            x = y;
        }
        sigma2.max(0.0).sqrt()
    }
}

/// Pore cells covered by the kernel centered at flat index `k`, with raw weights.
fn stencil<'a>(grid: &'a Grid, kernel: &'a MollifierKernel, k: usize) -> impl Iterator<Item = (usize, f64)> + 'a {
    let n = grid.side() as isize;
    let (i, j) = ((k as isize) % n, (k as isize) / n);
    kernel.iter().filter_map(move |((dx, dy), w)| {
        let (ii, jj) = (i + dx, j + dy);
        if ii < 0 || jj < 0 || ii >= n || jj >= n {
            return None;
        }
        grid.pore_at_flat((jj * n + ii) as usize).map(|q| (q, w))
    })
}

/// One-shot ∇^δ f on `grid`.
pub fn mollified_gradient(field: &[f64], kernel: &MollifierKernel, grid: &Grid) -> Result<Vec<[f64; 2]>> {
    Ok(MollifiedGradient::new(grid, kernel)?.apply(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_unit_cell, tile_domain, GrainShape};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    #[test]
    fn weights_partition_unity() {
        for (delta, h) in [(4.0 / 64.0, 1.0 / 64.0), (0.03, 0.01), (2.0 / 256.0, 1.0 / 256.0), (0.1, 1.0 / 128.0)] {
            let kernel = build_kernel(delta, h).unwrap();
            let total: f64 = kernel.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(kernel.iter().all(|(_, w)| w > 0.0));
        }
    }

    #[test]
    fn rejects_point_mass() {
        assert!(build_kernel(1.5 / 64.0, 1.0 / 64.0).is_err());
        assert!(build_kernel(0.1, 0.0).is_err());
    }

    #[test]
    fn radial_profile() {
        let h = 1.0 / 64.0;
        let kernel = build_kernel(4.0 * h, h).unwrap();
        assert!(kernel.weight(0, 0) > kernel.weight(2, 0));
        assert!(kernel.weight(2, 0) > 0.0);
        assert_eq!(kernel.weight(2, 0), kernel.weight(0, 2));
        assert_eq!(kernel.weight(1, 2), kernel.weight(-2, -1));
        assert_eq!(kernel.weight(4, 0), 0.0);
        let w0 = bump(0.0);
        let w2 = bump(0.25);
        assert!((kernel.weight(2, 0) / kernel.weight(0, 0) - w2 / w0).abs() < 1e-14);
    }

    #[test]
    fn kernel_csv_lists_support() {
        let kernel = build_kernel(2.0 / 32.0, 1.0 / 32.0).unwrap();
        let csv = kernel.to_csv();
        assert_eq!(csv.lines().count(), kernel.len() + 1);
        assert!(csv.starts_with("dx,dy,weight\n"));
    }

    fn perforated(eps: f64) -> Grid {
        let cell = build_unit_cell(GrainShape::disc([0.5, 0.5], 0.25), 16, 1.0).unwrap();
        tile_domain(&cell, eps).unwrap().grid().clone()
    }

    #[test]
    fn constants_have_zero_gradient() {
        let grid = perforated(0.25);
        let kernel = build_kernel(4.0 * grid.spacing(), grid.spacing()).unwrap();
        let g = mollified_gradient(&vec![0.7316; grid.len()], &kernel, &grid).unwrap();
        assert!(g.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn affine_field_in_interior() {
        let grid = Grid::full(256);
        let h = grid.spacing();
        let kernel = build_kernel(4.0 * h, h).unwrap();
        let f: Vec<f64> = (0..grid.len()).map(|p| 3.0 * grid.center(p)[0] - 2.0 * grid.center(p)[1]).collect();
        let g = mollified_gradient(&f, &kernel, &grid).unwrap();
        for p in 0..grid.len() {
            let c = grid.center(p);
            if c.iter().all(|&x| x > kernel.delta() + 2.0 * h && x < 1.0 - kernel.delta() - 2.0 * h) {
                assert!((g[p][0] - 3.0).abs() < 1e-6 && (g[p][1] + 2.0).abs() < 1e-6, "{:?}", g[p]);
            }
        }
    }

    #[test]
    fn transpose_matches_pairing() {
        let grid = perforated(0.5);
        let kernel = build_kernel(3.0 * grid.spacing(), grid.spacing()).unwrap();
        let op = MollifiedGradient::new(&grid, &kernel).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<[f64; 2]> = (0..grid.len()).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let af = op.apply(&f);
        let atg = op.apply_transpose(&g);
        let lhs: f64 = af.iter().zip(&g).map(|(a, b)| a[0] * b[0] + a[1] * b[1]).sum();
        let rhs: f64 = f.iter().zip(&atg).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn norm_independent_of_period() {
        let delta = 1.0 / 16.0;
        let norms: Vec<f64> = [0.25, 0.125]
            .iter()
            .map(|&eps| {
                let grid = perforated(eps);
                let kernel = build_kernel(delta, grid.spacing()).unwrap();
                MollifiedGradient::new(&grid, &kernel).unwrap().operator_norm(60, 3)
            })
            .collect();
        let ratio = norms[0] / norms[1];
        assert!((ratio - 1.0).abs() < 0.2, "{norms:?}");
    }

    #[test]
    fn sup_norm_shrinks_with_radius() {
        let grid = perforated(0.25);
        let h = grid.spacing();
        let step: Vec<f64> = (0..grid.len()).map(|p| if grid.center(p)[0] < 0.5 { 1.0 } else { 0.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        for f in [step, noise] {
            let sup = |d: f64| {
                let kernel = build_kernel(d, h).unwrap();
                mollified_gradient(&f, &kernel, &grid).unwrap().iter().map(|v| v[0].abs().max(v[1].abs())).fold(0.0, f64::max)
            };
            let (s2, s4, s8) = (sup(2.0 * h), sup(4.0 * h), sup(8.0 * h));
            assert!(s4 <= s2 && s8 <= s4, "{s2} {s4} {s8}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let grid = perforated(0.5);
            let kernel = build_kernel(2.5 * grid.spacing(), grid.spacing()).unwrap();
            let op = MollifiedGradient::new(&grid, &kernel).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let (gf, gg, gm) = (op.apply(&f), op.apply(&g), op.apply(&mix));
            for p in 0..grid.len() {
                for k in 0..2 {
                    let want = a * gf[p][k] + b * gg[p][k];
                    prop_assert!((gm[p][k] - want).abs() < 1e-11 * (1.0 + want.abs()) / grid.spacing());
                }
            }
        }
    }
}
