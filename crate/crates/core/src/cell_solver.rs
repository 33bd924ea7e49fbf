//! Corrector problems on the unit cell and the effective tensors built from them.
//!
//! A corrector χ^j solves, on the pore part of the periodic unit cell,
//!
//! ```text
//! ∫_{Y₁} c (∇χ^j + e_j)·∇φ = 0   for all periodic φ,   mean(χ^j) = 0,
//! ```
//!
//! which contains both the volume source ∂c/∂y_j and the grain flux
//! condition c∇χ^j·ν = −c ν_j. The discretization is cell-centered finite
//! volumes with arithmetic face conductances, the same operator the
//! pore-scale solver uses.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, UnitCell};
use crate::kinetics::DepositionParams;
use crate::linalg::{conjugate_gradient, CsrMatrix};
use crate::par;

/// Relative residual target for corrector solves.
pub const CORRECTOR_TOL: f64 = 1e-10;

/// Asymmetry above this fraction of ‖𝕂‖ is reported as a warning.
pub const ASYMMETRY_WARN: f64 = 1e-6;

/// Asymmetry above this fraction of ‖𝕂‖ is an error.
pub const ASYMMETRY_FAIL: f64 = 1e-2;

/// A scalar coefficient on the unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoefficientField {
    Constant(f64),
    /// `mean + amplitude·sin(2π y_axis)`
    Layered { mean: f64, amplitude: f64, axis: Axis },
}

impl CoefficientField {
    pub fn value(&self, y: [f64; 2]) -> f64 {
        match *self {
            CoefficientField::Constant(c) => c,
            CoefficientField::Layered { mean, amplitude, axis } => {
                let s = if axis == Axis::X { y[0] } else { y[1] };
                mean + amplitude * (2.0 * std::f64::consts::PI * s).sin()
            }
        }
    }

    /// Values at the cell centers of an `r × r` grid, row-major.
    pub fn sample(&self, r: usize) -> Vec<f64> {
        let h = 1.0 / r as f64;
        (0..r * r).map(|k| self.value([((k % r) as f64 + 0.5) * h, ((k / r) as f64 + 0.5) * h])).collect()
    }

    /// Infimum over the cell.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            CoefficientField::Constant(c) => c,
            CoefficientField::Layered { mean, amplitude, .. } => mean - amplitude.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self, CoefficientField::Constant(c) if c == 0.0)
    }
}

/// κ, τ, d_i and δ_i sampled on the unit-cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCoefficients {
    pub resolution: usize,
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
    pub d: Vec<Vec<f64>>,
    pub dufour: Vec<Vec<f64>>,
}

impl CellCoefficients {
    pub fn sample(resolution: usize, kappa: &CoefficientField, tau: &CoefficientField, d: &[CoefficientField], dufour: &[CoefficientField]) -> Result<Self> {
        if d.len() != dufour.len() {
            return Err(Error::param("dufour", format!("{} entries for {} species", dufour.len(), d.len())));
        }
        if !(kappa.lower_bound() > 0.0) {
            return Err(Error::param("kappa", "must be bounded below by a positive constant"));
        }
        for (i, di) in d.iter().enumerate() {
            if !(di.lower_bound() > 0.0) {
                return Err(Error::param(format!("d[{}]", i + 1), "must be bounded below by a positive constant"));
            }
        }
        let r = resolution;
        Ok(CellCoefficients {
            resolution: r,
            kappa: kappa.sample(r),
            tau: tau.sample(r),
            d: d.iter().map(|f| f.sample(r)).collect(),
            dufour: dufour.iter().map(|f| f.sample(r)).collect(),
        })
    }

    /// Constant coefficients on every cell.
    pub fn constant(resolution: usize, kappa: f64, tau: f64, d: &[f64], dufour: &[f64]) -> Result<Self> {
        let c = |v: &[f64]| v.iter().map(|&x| CoefficientField::Constant(x)).collect::<Vec<_>>();
        Self::sample(resolution, &CoefficientField::Constant(kappa), &CoefficientField::Constant(tau), &c(d), &c(dufour))
    }

    pub fn species(&self) -> usize {
        self.d.len()
    }

    /// Multiplies κ by `c`.
    pub fn scale_kappa(&mut self, c: f64) {
        self.kappa.iter_mut().for_each(|k| *k *= c);
    }
}

/// Zero-mean corrector for one direction, on the unit-cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    pub direction: usize,
    /// Row-major `r × r`; grain cells hold 0.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Periodic pore-cell bookkeeping on the unit cell.
struct CellGrid {
    r: usize,
    h: f64,
    pore_of: Vec<Option<usize>>,
    cells: Vec<usize>,
    /// Open periodic faces `(low, high, axis)` in pore indices.
    faces: Vec<(usize, usize, usize)>,
}

impl CellGrid {
    fn new(cell: &UnitCell) -> Result<Self> {
        let components = cell.pore_components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        let r = cell.resolution();
        let mask = cell.pore_mask();
        let mut pore_of = vec![None; r * r];
        let mut cells = Vec::new();
        for (k, &p) in mask.iter().enumerate() {
            if p {
                pore_of[k] = Some(cells.len());
                cells.push(k);
            }
        }
        let mut faces = Vec::new();
        for (p, &k) in cells.iter().enumerate() {
            let (i, j) = (k % r, k / r);
            if let Some(q) = pore_of[j * r + (i + 1) % r] {
                faces.push((p, q, 0));
            }
            if let Some(q) = pore_of[((j + 1) % r) * r + i] {
                faces.push((p, q, 1));
            }
        }
        Ok(CellGrid { r, h: 1.0 / r as f64, pore_of, cells, faces })
    }

    fn conductance(&self, c: &[f64], p: usize, q: usize) -> f64 {
        0.5 * (c[self.cells[p]] + c[self.cells[q]])
    }
}

/// Solves the corrector problem for coefficient `coeff` and direction `j ∈ {0, 1}`.
pub fn solve_corrector(coeff: &[f64], cell: &UnitCell, direction: usize) -> Result<Corrector> {
    let grid = CellGrid::new(cell)?;
    solve_on(&grid, coeff, direction)
}

fn solve_on(grid: &CellGrid, coeff: &[f64], direction: usize) -> Result<Corrector> {
    assert!(direction < 2, "direction must be 0 or 1");
    assert_eq!(coeff.len(), grid.r * grid.r, "coefficient size");
    let np = grid.cells.len();
    let mut rows: Vec<Vec<usize>> = (0..np).map(|p| vec![p]).collect();
    for &(p, q, _) in &grid.faces {
        rows[p].push(q);
        rows[q].push(p);
    }
    let mut a = CsrMatrix::with_pattern(rows);
    let mut b = vec![0.0; np];
    for &(p, q, axis) in &grid.faces {
        let c = grid.conductance(coeff, p, q);
        // r = 2 wraps a cell onto itself; such faces carry no net flux
        if p != q {
            a.add(p, p, c);
            a.add(q, q, c);
            a.add(p, q, -c);
            a.add(q, p, -c);
        }
        if axis == direction {
            b[p] += grid.h * c;
            b[q] -= grid.h * c;
        }
    }
    let mut x = vec![0.0; np];
    let cap = (50 * np).max(1000);
    let stats = conjugate_gradient(&a, &b, &mut x, CORRECTOR_TOL, cap, true)?;
    let mut values = vec![0.0; grid.r * grid.r];
    for (p, &k) in grid.cells.iter().enumerate() {
        values[k] = x[p];
    }
    Ok(Corrector { direction, values, iterations: stats.iterations, residual: stats.residual })
}

/// Gradient quadrature: `(1/|Y₁|) ∫ c ∂_k χ^j` as matrix `[j][k]`.
///
/// The cell gradient averages the two face quotients; a face closed by the
/// grain takes the value −δ_jk, the no-flux condition for χ^j + y_j.
fn moment(grid: &CellGrid, c: &[f64], correctors: &[Corrector; 2]) -> [[f64; 2]; 2] {
    let r = grid.r;
    let mut out = [[0.0; 2]; 2];
    for (j, chi) in correctors.iter().enumerate() {
        for (k, slot) in out[j].iter_mut().enumerate() {
            let closed = if j == k { -1.0 } else { 0.0 };
            let mut acc = Neumaier::default();
            for &cell in &grid.cells {
                let (i, jj) = (cell % r, cell / r);
                let (hi, lo) = if k == 0 {
                    (jj * r + (i + 1) % r, jj * r + (i + r - 1) % r)
                } else {
                    (((jj + 1) % r) * r + i, ((jj + r - 1) % r) * r + i)
                };
                let quotient = |other: usize, sign: f64| {
                    if grid.pore_of[other].is_some() {
                        sign * (chi.values[other] - chi.values[cell]) / grid.h
                    } else {
                        closed
                    }
                };
                let g = 0.5 * (quotient(hi, 1.0) + quotient(lo, -1.0));
                acc.add(c[cell] * g * grid.h * grid.h);
            }
            *slot = acc.total();
        }
    }
    let area = grid.cells.len() as f64 * grid.h * grid.h;
    out.map(|row| row.map(|v| v / area))
}

fn pore_mean(grid: &CellGrid, c: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for &k in &grid.cells {
        acc.add(c[k]);
    }
    acc.total() / grid.cells.len() as f64
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.comp
    }
}

pub type Mat2 = [[f64; 2]; 2];

fn transpose(m: Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

fn plus_scalar(m: Mat2, s: f64) -> Mat2 {
    [[m[0][0] + s, m[0][1]], [m[1][0], m[1][1] + s]]
}

fn frobenius(m: Mat2) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Effective coefficients of the upscaled system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensors {
    /// 𝕂, symmetrized, normalized by |Y₁|.
    pub k: Mat2,
    pub k0: f64,
    /// 𝕋 (one tensor shared by all species).
    pub t: Mat2,
    pub d: Vec<Mat2>,
    pub f: Vec<Mat2>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// g₀ |Γ_R| / |Y₁|.
    pub g_robin: f64,
    pub pore_area: f64,
    pub perimeter: f64,
    pub robin_perimeter: f64,
    /// ‖𝕂 − 𝕂ᵀ‖ / ‖𝕂‖ before symmetrization.
    pub asymmetry: f64,
}

impl EffectiveTensors {
    pub fn species(&self) -> usize {
        self.d.len()
    }

    /// |Y₁|·𝕂: conductivity per unit bulk area.
    pub fn bulk(&self) -> Mat2 {
        self.k.map(|row| row.map(|v| v * self.pore_area))
    }

    /// |Γ| / |Y₁|, the deposit surface per unit pore area.
    pub fn surface_density(&self) -> f64 {
        self.perimeter / self.pore_area
    }

    /// Isotropic tensors for a cell without grain and constant coefficients.
    pub fn homogeneous(kappa: f64, tau: f64, d: &[f64], dufour: &[f64]) -> Self {
        let iso = |s: f64| [[s, 0.0], [0.0, s]];
        EffectiveTensors {
            k: iso(kappa),
            k0: kappa,
            t: iso(tau),
            d: d.iter().map(|&x| iso(x)).collect(),
            f: dufour.iter().map(|&x| iso(x)).collect(),
            a: vec![0.0; d.len()],
            b: vec![0.0; d.len()],
            g_robin: 0.0,
            pore_area: 1.0,
            perimeter: 0.0,
            robin_perimeter: 0.0,
            asymmetry: 0.0,
        }
    }

    fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut mat = |name: &str, m: &Mat2| {
            for (a, row) in m.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    out.push((format!("{name}{}{}", a + 1, b + 1), *v));
                }
            }
        };
        mat("K", &self.k);
        mat("T", &self.t);
        for (i, m) in self.d.iter().enumerate() {
            mat(&format!("D{}_", i + 1), m);
        }
        for (i, m) in self.f.iter().enumerate() {
            mat(&format!("F{}_", i + 1), m);
        }
        out.push(("K0".into(), self.k0));
        for (i, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            out.push((format!("A{}", i + 1), *a));
            out.push((format!("B{}", i + 1), *b));
        }
        out.push(("g_robin".into(), self.g_robin));
        out.push(("pore_area".into(), self.pore_area));
        out.push(("perimeter".into(), self.perimeter));
        out.push(("robin_perimeter".into(), self.robin_perimeter));
        out.push(("asymmetry".into(), self.asymmetry));
        out
    }

    /// `key,value` lines, full precision.
    pub fn to_csv(&self) -> String {
        let mut s = format!("key,value\nspecies,{}\n", self.species());
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(',').ok_or_else(|| Error::Config(format!("tensors line {}: expected key,value", ln + 1)))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("tensors line {}: bad number `{v}`", ln + 1)))?;
            map.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Config(format!("tensors: missing key `{k}`")));
        let mat = |name: &str| -> Result<Mat2> {
            Ok([[get(&format!("{name}11"))?, get(&format!("{name}12"))?], [get(&format!("{name}21"))?, get(&format!("{name}22"))?]])
        };
        let n = get("species")? as usize;
        Ok(EffectiveTensors {
            k: mat("K")?,
            k0: get("K0")?,
            t: mat("T")?,
            d: (1..=n).map(|i| mat(&format!("D{i}_"))).collect::<Result<_>>()?,
            f: (1..=n).map(|i| mat(&format!("F{i}_"))).collect::<Result<_>>()?,
            a: (1..=n).map(|i| get(&format!("A{i}"))).collect::<Result<_>>()?,
            b: (1..=n).map(|i| get(&format!("B{i}"))).collect::<Result<_>>()?,
            g_robin: get("g_robin")?,
            pore_area: get("pore_area")?,
            perimeter: get("perimeter")?,
            robin_perimeter: get("robin_perimeter")?,
            asymmetry: get("asymmetry")?,
        })
    }

    /// Human-readable report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let m = |m: &Mat2| format!("[[{:.10}, {:.10}], [{:.10}, {:.10}]]", m[0][0], m[0][1], m[1][0], m[1][1]);
        let _ = writeln!(s, "pore area |Y1|      {}", self.pore_area);
        let _ = writeln!(s, "perimeter |G|       {}", self.perimeter);
        let _ = writeln!(s, "robin part |G_R|    {}", self.robin_perimeter);
        let _ = writeln!(s, "K0                  {}", self.k0);
        let _ = writeln!(s, "K                   {}", m(&self.k));
        let _ = writeln!(s, "|Y1| K (bulk)       {}", m(&self.bulk()));
        let _ = writeln!(s, "K asymmetry         {:e}", self.asymmetry);
        let _ = writeln!(s, "T                   {}", m(&self.t));
        for i in 0..self.species() {
            let _ = writeln!(s, "D{}                  {}", i + 1, m(&self.d[i]));
            let _ = writeln!(s, "F{}                  {}", i + 1, m(&self.f[i]));
            let _ = writeln!(s, "A{} B{}               {} {}", i + 1, i + 1, self.a[i], self.b[i]);
        }
        let _ = writeln!(s, "g0 |G_R|/|Y1|       {}", self.g_robin);
        s
    }
}

/// Correctors and tensors for one cell.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub theta_bar: [Corrector; 2],
    pub u_bar: Vec<[Corrector; 2]>,
    pub tensors: EffectiveTensors,
    /// Set when the asymmetry exceeds the warning level.
    pub warning: Option<String>,
}

/// Whether `a` is a positive multiple of `b` (correctors then coincide).
fn proportional(a: &[f64], b: &[f64]) -> bool {
    let s = a[0] / b[0];
    a.iter().zip(b).all(|(x, y)| (x - s * y).abs() <= 1e-14 * x.abs().max(1e-300))
}

/// Solves every corrector problem and assembles the effective tensors.
pub fn solve_cell(cell: &UnitCell, coeffs: &CellCoefficients, deposition: &DepositionParams, g0: f64) -> Result<CellSolution> {
    if coeffs.resolution != cell.resolution() {
        return Err(Error::param("resolution", "coefficients sampled on a different grid"));
    }
    if deposition.species() != coeffs.species() {
        return Err(Error::param("a", format!("{} deposition rates for {} species", deposition.species(), coeffs.species())));
    }
    let grid = CellGrid::new(cell)?;
    // fields whose correctors must be solved: κ then each distinct d_i
    let mut fields: Vec<&[f64]> = vec![&coeffs.kappa];
    let mut which = Vec::with_capacity(coeffs.species());
    for d in &coeffs.d {
        match fields.iter().position(|f| proportional(d, f)) {
            Some(k) => which.push(k),
            None => {
                which.push(fields.len());
                fields.push(d);
            }
        }
    }
    let solved: Vec<Result<Corrector>> = par::map_jobs(2 * fields.len(), |job| solve_on(&grid, fields[job / 2], job % 2));
    let mut solved = solved.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let mut pairs: Vec<[Corrector; 2]> = Vec::with_capacity(fields.len());
    while let (Some(x), Some(y)) = (solved.next(), solved.next()) {
        pairs.push([x, y]);
    }
    let theta_bar = pairs[0].clone();
    let u_bar: Vec<[Corrector; 2]> = which.iter().map(|&k| pairs[k].clone()).collect();

    let k0 = pore_mean(&grid, &coeffs.kappa);
    let raw_k = plus_scalar(transpose(moment(&grid, &coeffs.kappa, &theta_bar)), k0);
    let asym_abs = frobenius([[0.0, raw_k[0][1] - raw_k[1][0]], [raw_k[1][0] - raw_k[0][1], 0.0]]);
    let asymmetry = asym_abs / frobenius(raw_k);
    if asymmetry > ASYMMETRY_FAIL {
        return Err(Error::Asymmetric { asymmetry });
    }
    let warning = (asymmetry > ASYMMETRY_WARN).then(|| format!("effective conductivity asymmetry {asymmetry:e}"));
    let off = 0.5 * (raw_k[0][1] + raw_k[1][0]);
    let k = [[raw_k[0][0], off], [off, raw_k[1][1]]];

    let t = plus_scalar(moment(&grid, &coeffs.tau, &theta_bar), pore_mean(&grid, &coeffs.tau));
    let d = coeffs.d.iter().zip(&u_bar).map(|(c, chi)| plus_scalar(moment(&grid, c, chi), pore_mean(&grid, c))).collect();
    let f = coeffs.dufour.iter().zip(&u_bar).map(|(c, chi)| plus_scalar(moment(&grid, c, chi), pore_mean(&grid, c))).collect();

    let m = cell.measures();
    let s = m.perimeter / m.pore_area;
    let tensors = EffectiveTensors {
        k,
        k0,
        t,
        d,
        f,
        a: deposition.a.iter().map(|a| a * s).collect(),
        b: deposition.b.iter().map(|b| b * s).collect(),
        g_robin: g0 * m.robin_perimeter / m.pore_area,
        pore_area: m.pore_area,
        perimeter: m.perimeter,
        robin_perimeter: m.robin_perimeter,
        asymmetry,
    };
    Ok(CellSolution { theta_bar, u_bar, tensors, warning })
}

/// Symmetric part of a 2 × 2 matrix.
pub fn symmetric_part(m: Mat2) -> Mat2 {
    let off = 0.5 * (m[0][1] + m[1][0]);
    [[m[0][0], off], [off, m[1][1]]]
}

/// Eigenvalues of a symmetric 2 × 2 matrix, ascending.
pub fn eigenvalues(m: Mat2) -> [f64; 2] {
    let s = symmetric_part(m);
    let mean = 0.5 * (s[0][0] + s[1][1]);
    let rad = (0.25 * (s[0][0] - s[1][1]).powi(2) + s[0][1] * s[0][1]).sqrt();
    [mean - rad, mean + rad]
}

/// Flux form of the bulk conductivity, `Σ_faces c_f h² (Δχ^j/h + δ_{axis,j})`.
///
/// Independent of the gradient quadrature; used to cross-check it.
pub fn flux_bulk(cell: &UnitCell, c: &[f64], correctors: &[Corrector; 2]) -> Result<Mat2> {
    let grid = CellGrid::new(cell)?;
    let mut out = [[0.0; 2]; 2];
    for &(p, q, axis) in &grid.faces {
        let cf = grid.conductance(c, p, q);
        let (kp, kq) = (grid.cells[p], grid.cells[q]);
        for (j, chi) in correctors.iter().enumerate() {
            let g = (chi.values[kq] - chi.values[kp]) / grid.h + if axis == j { 1.0 } else { 0.0 };
            out[axis][j] += cf * g * grid.h * grid.h;
        }
    }
    Ok(out)
}
