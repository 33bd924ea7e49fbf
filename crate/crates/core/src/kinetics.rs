//! Smoluchowski aggregation rates, truncation and the deposition exchange law.
//!
//! Species are 1-based in the physics (species `i` is an aggregate of `i`
//! monomers) and 0-based in every slice here: `s[0]` is the monomer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// σ_M: clip to `[0, m]`.
pub fn sigma(r: f64, m: f64) -> f64 {
    if r < 0.0 {
        0.0
    } else if r > m {
        m
    } else {
        r
    }
}

/// Named coagulation kernels, `c` times the listed shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelPreset {
    /// β_ij = c
    Constant,
    /// β_ij = c (i + j)
    Additive,
    /// β_ij = c i j
    Multiplicative,
    /// β_ij = c (i^{1/3} + j^{1/3}) (i^{-1/3} + j^{-1/3})
    Brownian,
}

impl KernelPreset {
    pub fn value(self, i: usize, j: usize, c: f64) -> f64 {
        let (x, y) = (i as f64, j as f64);
        c * match self {
            KernelPreset::Constant => 1.0,
            KernelPreset::Additive => x + y,
            KernelPreset::Multiplicative => x * y,
            KernelPreset::Brownian => (x.cbrt() + y.cbrt()) * (1.0 / x.cbrt() + 1.0 / y.cbrt()),
        }
    }
}

/// Symmetric aggregation matrix β with truncation threshold M.
#[derive(Debug, Clone, PartialEq)]
pub struct CoagulationKernel {
    n: usize,
    beta: Vec<f64>,
    threshold: f64,
}

impl CoagulationKernel {
    /// `beta` is row-major `n × n`.
    pub fn new(n: usize, beta: Vec<f64>, threshold: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("species", format!("need at least 2 species, got {n}")));
        }
        if beta.len() != n * n {
            return Err(Error::param("beta", format!("expected {} entries, got {}", n * n, beta.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let b = beta[i * n + j];
                if !(b >= 0.0 && b.is_finite()) {
                    return Err(Error::param("beta", format!("entry ({}, {}) = {b} must be finite and nonnegative", i + 1, j + 1)));
                }
                if b != beta[j * n + i] {
                    return Err(Error::param("beta", format!("not symmetric at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        if !(threshold > 0.0) {
            return Err(Error::param("threshold", format!("must be positive, got {threshold}")));
        }
        Ok(CoagulationKernel { n, beta, threshold })
    }

    pub fn preset(n: usize, preset: KernelPreset, c: f64, threshold: f64) -> Result<Self> {
        let beta = (0..n * n).map(|k| preset.value(k / n + 1, k % n + 1, c)).collect();
        Self::new(n, beta, threshold)
    }

    /// Kernel with every rate zero.
    pub fn inert(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n], 1.0)
    }

    pub fn species(&self) -> usize {
        self.n
    }

    /// β for 0-based indices.
    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.beta[i * self.n + j]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        Self::new(self.n, self.beta.clone(), threshold)
    }

    pub fn is_inert(&self) -> bool {
        self.beta.iter().all(|&b| b == 0.0)
    }

    /// R_i(s) = ½ Σ_{k+j=i} β_kj s_k s_j − Σ_j β_ij s_i s_j.
    pub fn rates(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.n, "state length");
        let n = self.n;
        (0..n)
            .map(|i| {
                // 1-based sizes k + j = i + 1, i.e. 0-based k + j = i - 1
                let gain: f64 = (0..i).map(|k| self.beta(k, i - 1 - k) * s[k] * s[i - 1 - k]).sum::<f64>() * 0.5;
                let loss: f64 = (0..n).map(|j| self.beta(i, j) * s[j]).sum::<f64>() * s[i];
                gain - loss
            })
            .collect()
    }

    /// R^M(s) = R(σ_M(s)).
    pub fn truncated_rates(&self, s: &[f64]) -> Vec<f64> {
        let clipped: Vec<f64> = s.iter().map(|&r| sigma(r, self.threshold)).collect();
        self.rates(&clipped)
    }

    /// −½ Σ_{i+j>N} (i+j) β_ij s_i s_j, the monomer mass leaving the truncated system.
    pub fn mass_outflow(&self, s: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i + j + 2 > n {
                    acc += ((i + j + 2) as f64) * self.beta(i, j) * s[i] * s[j];
                }
            }
        }
        -0.5 * acc
    }

    /// A priori bounds: u_1 ≤ M_1 and u_i ≤ M_i (T+1) for i ≥ 2.
    ///
    /// Returns the bounds on `(u_i, v_i)` over `[0, t_end]`.
    pub fn a_priori_bounds(&self, u0_sup: &[f64], v0_sup: &[f64], dep: &DepositionParams, t_end: f64) -> Vec<(f64, f64)> {
        let n = self.n;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (dep.a[i], dep.b[i]);
            let gain: f64 = (0..i).map(|k| 0.5 * self.beta(k, i - 1 - k) * out[k].0 * out[i - 1 - k].0).sum();
            let m = u0_sup[i].max(b * v0_sup[i] / a).max(gain);
            let growth = if i == 0 { 1.0 } else { t_end + 1.0 };
            out.push((m * growth, a * m / b * growth));
        }
        out
    }

    /// Default truncation threshold: twice the largest a priori bound.
    pub fn auto_threshold(&self, theta0_sup: f64, bounds: &[(f64, f64)]) -> f64 {
        let m = bounds.iter().fold(theta0_sup, |acc, &(u, _)| acc.max(u));
        if m > 0.0 {
            2.0 * m
        } else {
            1.0
        }
    }
}

/// Deposition exchange rates a_i (attach) and b_i (release).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositionParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DepositionParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::param("b", format!("length {} differs from a ({})", b.len(), a.len())));
        }
        for (name, v) in [("a", &a), ("b", &b)] {
            if let Some(k) = v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::param(name, format!("entry {} = {} must be positive", k + 1, v[k])));
            }
        }
        Ok(DepositionParams { a, b })
    }

    pub fn species(&self) -> usize {
        self.a.len()
    }
}

/// dv/dt = a u − b v.
pub fn deposition_rhs(u_trace: f64, v: f64, i: usize, params: &DepositionParams) -> f64 {
    params.a[i] * u_trace - params.b[i] * v
}

/// φ(z) = (1 − e^{−z}) / z, with φ(0) = 1.
pub fn phi(z: f64) -> f64 {
    if z.abs() < 1e-300 {
        1.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Exact step of dv/dt = a u − b v over `dt` with `u` frozen.
pub fn deposition_step(u: f64, v: f64, a: f64, b: f64, dt: f64) -> f64 {
    v + dt * phi(b * dt) * (a * u - b * v)
}

/// Per-cell linearization of the truncated reaction term around a lagged state.
///
/// Loss is implicit, `−λ_i u_i^{new}`; gain uses the already updated smaller
/// species, so species must be solved in increasing size. The split keeps the
/// total monomer mass from increasing and reproduces R^M at a fixed point.
#[derive(Debug, Clone, Copy)]
pub struct ReactionSplit<'a> {
    kernel: &'a CoagulationKernel,
    lagged: &'a [f64],
}

impl<'a> ReactionSplit<'a> {
    pub fn new(kernel: &'a CoagulationKernel, lagged: &'a [f64]) -> Self {
        ReactionSplit { kernel, lagged }
    }

    fn clipped(&self, i: usize) -> f64 {
        sigma(self.lagged[i], self.kernel.threshold)
    }

    /// σ_M(r)/r, the factor turning a new value into a clipped one.
    fn ratio(&self, i: usize) -> f64 {
        let r = self.lagged[i];
        if r > self.kernel.threshold {
            self.kernel.threshold / r
        } else if r > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Loss coefficient λ_i ≥ 0.
    pub fn loss(&self, i: usize) -> f64 {
        let k = self.kernel;
        let rate: f64 = (0..k.n).map(|j| k.beta(i, j) * self.clipped(j)).sum();
        rate * self.ratio(i)
    }

    /// Gain for species `i` given updated values of species `0..i`.
    pub fn gain(&self, i: usize, updated: &[f64]) -> f64 {
        let k = self.kernel;
        let size = (i + 1) as f64;
        let mut acc = 0.0;
        for a in 0..i {
            let b = i - 1 - a;
            let w = 0.5 * k.beta(a, b);
            if w == 0.0 {
                continue;
            }
            let (sa, sb) = ((a + 1) as f64 / size, (b + 1) as f64 / size);
            acc += w * (sa * self.ratio(a) * updated[a] * self.clipped(b) + sb * self.ratio(b) * updated[b] * self.clipped(a));
        }
        acc
    }

    /// True when some lagged value exceeds M.
    pub fn truncated(&self) -> bool {
        self.lagged.iter().any(|&r| r > self.kernel.threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ones(n: usize) -> CoagulationKernel {
        CoagulationKernel::preset(n, KernelPreset::Constant, 1.0, 100.0).unwrap()
    }

    #[test]
    fn zero_state_zero_rates() {
        assert!(ones(3).rates(&[0.0; 3]).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn hand_evaluated_rates() {
        assert_eq!(ones(2).rates(&[1.0, 0.0]), vec![-1.0, 0.5]);
        assert_eq!(ones(3).rates(&[1.0, 1.0, 1.0]), vec![-3.0, -2.5, -2.0]);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(-1.0, 5.0), 0.0);
        assert_eq!(sigma(3.0, 5.0), 3.0);
        assert_eq!(sigma(7.0, 5.0), 5.0);
    }

    #[test]
    fn truncation_clips_before_evaluating() {
        let k = CoagulationKernel::preset(2, KernelPreset::Constant, 1.0, 1.0).unwrap();
        assert_eq!(k.truncated_rates(&[10.0, 0.0]), vec![-1.0, 0.5]);
    }

    #[test]
    fn presets() {
        assert_eq!(KernelPreset::Additive.value(1, 2, 2.0), 6.0);
        assert_eq!(KernelPreset::Multiplicative.value(2, 3, 1.0), 6.0);
        assert!((KernelPreset::Brownian.value(1, 1, 1.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_kernels() {
        assert!(CoagulationKernel::new(2, vec![1.0, 2.0, 1.0, 1.0], 1.0).is_err());
        assert!(CoagulationKernel::new(2, vec![1.0, -1.0, -1.0, 1.0], 1.0).is_err());
        assert!(CoagulationKernel::new(1, vec![1.0], 1.0).is_err());
        assert!(CoagulationKernel::new(2, vec![1.0; 4], 0.0).is_err());
        assert!(DepositionParams::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(DepositionParams::new(vec![1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn deposition_law() {
        let p = DepositionParams::new(vec![2.0], vec![1.0]).unwrap();
        assert_eq!(deposition_rhs(0.0, 0.0, 0, &p), 0.0);
        assert_eq!(deposition_rhs(1.0, 2.0, 0, &p), 0.0);
        let v1 = deposition_step(1.0, 0.0, 2.0, 1.0, 1.0);
        assert!((v1 - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((v1 - 1.26424).abs() < 1e-5);
        assert_eq!(phi(0.0), 1.0);
    }

    #[test]
    fn deposition_steps_compose() {
        let (a, b, u) = (0.7, 1.3, 0.4);
        let mut v = 0.2;
        for _ in 0..1000 {
            v = deposition_step(u, v, a, b, 1e-3);
        }
        let exact = a * u / b * (1.0 - (-b).exp()) + 0.2 * (-b).exp();
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn bounds_follow_recursion() {
        let k = ones(3);
        let dep = DepositionParams::new(vec![2.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        let b = k.a_priori_bounds(&[1.0, 0.0, 0.0], &[0.0; 3], &dep, 1.0);
        assert_eq!(b[0], (1.0, 2.0));
        assert_eq!(b[1], (1.0, 1.0));
        // gain bound for i = 3 uses β_12 M_1 M_2 (T+1)
        assert_eq!(b[2], (2.0, 2.0));
        assert_eq!(k.auto_threshold(3.0, &b), 6.0);
    }

    #[test]
    fn split_reproduces_rates_at_fixed_point() {
        let k = CoagulationKernel::preset(4, KernelPreset::Brownian, 0.5, 10.0).unwrap();
        let s = [0.9, 0.4, 0.2, 0.1];
        let split = ReactionSplit::new(&k, &s);
        let r = k.rates(&s);
        for i in 0..4 {
            let approx = split.gain(i, &s) - split.loss(i) * s[i];
            assert!((approx - r[i]).abs() < 1e-14, "{i}");
        }
        assert!(!split.truncated());
    }

    proptest! {
        #[test]
        fn split_never_creates_mass(s in prop::collection::vec(0.0f64..3.0, 3), new in prop::collection::vec(0.0f64..3.0, 3)) {
            let k = CoagulationKernel::preset(3, KernelPreset::Additive, 1.0, 2.0).unwrap();
            let split = ReactionSplit::new(&k, &s);
            let total: f64 = (0..3).map(|i| (i + 1) as f64 * (split.gain(i, &new) - split.loss(i) * new[i])).sum();
            prop_assert!(total <= 1e-12);
        }

        #[test]
        fn truncated_rates_depend_on_clip(s in prop::collection::vec(-2.0f64..8.0, 3)) {
            let k = CoagulationKernel::preset(3, KernelPreset::Constant, 1.0, 5.0).unwrap();
            let clipped: Vec<f64> = s.iter().map(|&r| sigma(r, 5.0)).collect();
            prop_assert_eq!(k.truncated_rates(&s), k.truncated_rates(&clipped));
        }

        #[test]
        fn truncated_rates_lipschitz(x in prop::collection::vec(-5.0f64..10.0, 3), y in prop::collection::vec(-5.0f64..10.0, 3)) {
            let m = 4.0;
            let k = CoagulationKernel::preset(3, KernelPreset::Constant, 1.0, m).unwrap();
            let (rx, ry) = (k.truncated_rates(&x), k.truncated_rates(&y));
            let num = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // each R_i is a quadratic form in clipped values bounded by M
            let lip = 2.0 * 3.0 * 3.0 * m;
            prop_assert!(num <= lip * den + 1e-12);
        }
    }
}
