//! Shared finite-volume engine for the pore-scale and upscaled systems.
//!
//! Both systems have the same shape on a (possibly masked) square grid:
//! one heat equation and `N` colloid equations with diffusion, a linear sink,
//! a cross-advection term driven by a mollified gradient of the partner
//! field(s), reactions, and an exchange with deposited mass living on a set
//! of sites. Every equation is scaled by the cell area h² and stepped with
//! backward Euler inside a Jacobi fixed-point loop over the cross terms.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Grid, Side};
use crate::kinetics::{phi, CoagulationKernel, DepositionParams, ReactionSplit};
use crate::linalg::{bicgstab, conjugate_gradient, CsrMatrix};
use crate::mollifier::MollifiedGradient;

/// Temperature, concentrations and deposited mass at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    /// One value per pore cell.
    pub theta: Vec<f64>,
    /// `u[i][p]`, species `i`, pore cell `p`.
    pub u: Vec<Vec<f64>>,
    /// `v[i][s]`, species `i`, deposit site `s`.
    pub v: Vec<Vec<f64>>,
}

impl FieldState {
    /// All fields zero at `t = 0`.
    pub fn zeros(cells: usize, sites: usize, species: usize) -> Self {
        FieldState { t: 0.0, theta: vec![0.0; cells], u: vec![vec![0.0; cells]; species], v: vec![vec![0.0; sites]; species] }
    }

    pub fn species(&self) -> usize {
        self.u.len()
    }

    fn check(&self, cells: usize, sites: usize, species: usize) -> Result<()> {
        let bad = |what: &str, got: usize, want: usize| Err(Error::param(what, format!("{got} values, expected {want}")));
        if self.theta.len() != cells {
            return bad("theta0", self.theta.len(), cells);
        }
        if self.u.len() != species || self.v.len() != species {
            return bad("u0", self.u.len(), species);
        }
        for (i, (u, v)) in self.u.iter().zip(&self.v).enumerate() {
            if u.len() != cells {
                return bad(&format!("u0[{}]", i + 1), u.len(), cells);
            }
            if v.len() != sites {
                return bad(&format!("v0[{}]", i + 1), v.len(), sites);
            }
        }
        let all = self.theta.iter().chain(self.u.iter().flatten()).chain(self.v.iter().flatten());
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::param("initial", "non-finite value"));
        }
        if all.clone().any(|&x| x < 0.0) {
            return Err(Error::param("initial", "initial data must be nonnegative"));
        }
        Ok(())
    }
}

/// Checks `initial` against `disc`, derives the a priori bounds and sets the
/// truncation threshold (automatic unless `threshold` is given).
pub fn prepare_run(disc: &mut Discretization, initial: &FieldState, t_end: f64, threshold: Option<f64>) -> Result<Vec<(f64, f64)>> {
    let ns = disc.species.len();
    if disc.kernel.species() != ns || disc.deposition.species() != ns || disc.dufour.len() != ns {
        return Err(Error::param("species", "kernel, deposition and diffusion disagree on the species count"));
    }
    initial.check(disc.grid.len(), disc.sites.len(), ns)?;
    if !(t_end >= initial.t) || !t_end.is_finite() {
        return Err(Error::param("t_end", format!("must be finite and not before the start time, got {t_end}")));
    }
    let u0: Vec<f64> = initial.u.iter().map(|u| sup(u)).collect();
    let v0: Vec<f64> = initial.v.iter().map(|v| sup(v)).collect();
    let bounds = disc.kernel.a_priori_bounds(&u0, &v0, &disc.deposition, t_end);
    let m = match threshold {
        Some(m) => m,
        None => disc.kernel.auto_threshold(sup(&initial.theta), &bounds),
    };
    disc.kernel = disc.kernel.with_threshold(m)?;
    Ok(bounds)
}

/// Coefficient turning a mollified gradient `g` into an advection velocity.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    None,
    /// `b_p = c_p g_p`
    Scalar(Vec<f64>),
    /// `b_p = M g_p`
    Tensor([[f64; 2]; 2]),
}

impl Coupling {
    pub fn is_active(&self) -> bool {
        match self {
            Coupling::None => false,
            Coupling::Scalar(c) => c.iter().any(|&x| x != 0.0),
            Coupling::Tensor(m) => m.iter().flatten().any(|&x| x != 0.0),
        }
    }

    fn velocity(&self, p: usize, g: [f64; 2]) -> [f64; 2] {
        match self {
            Coupling::None => [0.0; 2],
            Coupling::Scalar(c) => [c[p] * g[0], c[p] * g[1]],
            Coupling::Tensor(m) => [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]],
        }
    }
}

/// Deposit site: a pore cell and the measure weighting its exchange flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub cell: usize,
    pub measure: f64,
}

/// Linear heat sink, already integrated over each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSink {
    pub per_cell: Vec<f64>,
    /// Replace the rate γ by (e^{γ dt} − 1)/dt so uniform decay is exact.
    pub exponential: bool,
}

/// Volumetric heat source `f(x, t)`, used for manufactured solutions.
pub type HeatSource = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Diffusion: one conductance per interior face plus an optional uniform
/// off-diagonal tensor entry (full grids only).
#[derive(Debug, Clone, PartialEq)]
pub struct Diffusion {
    pub faces: Vec<f64>,
    pub cross: f64,
}

#[derive(Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub heat: Diffusion,
    pub species: Vec<Diffusion>,
    pub heat_sink: HeatSink,
    pub sites: Vec<Site>,
    pub soret: Coupling,
    pub dufour: Vec<Coupling>,
    pub kernel: CoagulationKernel,
    pub deposition: DepositionParams,
    pub mollifier: Option<MollifiedGradient>,
    pub heat_source: Option<HeatSource>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("cells", &self.grid.len())
            .field("species", &self.species.len())
            .field("sites", &self.sites.len())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub dt: f64,
    pub fp_tol: f64,
    pub fp_max: usize,
    pub linear_tol: f64,
}

/// Per-step record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    /// ∫θ.
    pub heat: f64,
    /// Per species ∫u_i + Σ measure·v_i.
    pub mass: Vec<f64>,
    /// Σ_i i·mass_i.
    pub monomer_mass: f64,
    /// ‖θ‖² + 2 ∫₀ᵗ ∫κ|∇θ|², cumulative.
    pub energy: f64,
    pub iterations: usize,
    /// Geometric mean of successive increment ratios, 0 if undefined.
    pub contraction: f64,
    pub last_increment: f64,
    /// Cells whose lagged concentration exceeded the truncation threshold.
    pub truncations: usize,
}

/// Precomputed sparsity and face bookkeeping for one discretization.
pub struct Stepper<'a> {
    disc: &'a Discretization,
    opts: StepperOptions,
    faces: Vec<(usize, usize)>,
    /// Face index per side, order E, W, N, S.
    cell_faces: Vec<[Option<usize>; 4]>,
    neighbours: Vec<[Option<usize>; 4]>,
    corners: Vec<[usize; 4]>,
    matrix: CsrMatrix,
    face_slots: Vec<[usize; 4]>,
    diag_slots: Vec<usize>,
    site_cells: Vec<Vec<usize>>,
    dissipated: f64,
}

const SIDES: [Side; 4] = [Side::East, Side::West, Side::North, Side::South];

impl<'a> Stepper<'a> {
    pub fn new(disc: &'a Discretization, opts: StepperOptions) -> Result<Self> {
        if !(opts.dt > 0.0 && opts.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", opts.dt)));
        }
        if !(opts.fp_tol > 0.0) {
            return Err(Error::param("fp_tol", format!("must be positive, got {}", opts.fp_tol)));
        }
        if opts.fp_max == 0 {
            return Err(Error::param("fp_max", "must be at least 1"));
        }
        let grid = &disc.grid;
        let n = grid.side();
        let np = grid.len();
        let faces: Vec<(usize, usize)> = grid.interior_faces().into_iter().map(|(p, q, _)| (p, q)).collect();
        for d in std::iter::once(&disc.heat).chain(&disc.species) {
            if d.faces.len() != faces.len() {
                return Err(Error::param("conductance", format!("{} values for {} faces", d.faces.len(), faces.len())));
            }
        }
        let mut cell_faces = vec![[None; 4]; np];
        for (f, &(p, q)) in faces.iter().enumerate() {
            let (ip, jp) = grid.ij(p);
            let (iq, _) = grid.ij(q);
            if iq != ip {
                cell_faces[p][0] = Some(f);
                cell_faces[q][1] = Some(f);
            } else {
                let _ = jp;
                cell_faces[p][2] = Some(f);
                cell_faces[q][3] = Some(f);
            }
        }
        let neighbours: Vec<[Option<usize>; 4]> =
            (0..np).map(|p| SIDES.map(|s| grid.neighbour(p, s).flatten())).collect();

        let any_cross = disc.heat.cross != 0.0 || disc.species.iter().any(|d| d.cross != 0.0);
        let mut corners = Vec::new();
        if any_cross {
            for j in 0..n.saturating_sub(1) {
                for i in 0..n - 1 {
                    let c = [grid.pore_at(i, j), grid.pore_at(i + 1, j), grid.pore_at(i, j + 1), grid.pore_at(i + 1, j + 1)];
                    if let [Some(a), Some(b), Some(c), Some(d)] = c {
                        corners.push([a, b, c, d]);
                    }
                }
            }
        }
        let mut rows: Vec<Vec<usize>> = (0..np).map(|p| vec![p]).collect();
        for &(p, q) in &faces {
            rows[p].push(q);
            rows[q].push(p);
        }
        for c in &corners {
            for &a in c {
                rows[a].extend_from_slice(c);
            }
        }
        let matrix = CsrMatrix::with_pattern(rows);
        let face_slots = faces
            .iter()
            .map(|&(p, q)| {
                let s = |r, c| matrix.slot(r, c).expect("pattern");
                [s(p, p), s(q, q), s(p, q), s(q, p)]
            })
            .collect();
        let diag_slots = (0..np).map(|p| matrix.slot(p, p).expect("pattern")).collect();
        let mut site_cells = vec![Vec::new(); np];
        for (s, site) in disc.sites.iter().enumerate() {
            site_cells[site.cell].push(s);
        }
        Ok(Stepper {
            disc,
            opts,
            faces,
            cell_faces,
            neighbours,
            corners,
            matrix,
            face_slots,
            diag_slots,
            site_cells,
            dissipated: 0.0,
        })
    }

    pub fn options(&self) -> StepperOptions {
        self.opts
    }

    fn coupled(&self) -> bool {
        self.disc.soret.is_active() || self.disc.dufour.iter().any(Coupling::is_active)
    }

    /// Assembles `mass·I + diffusion + diag + advection` into the matrix.
    fn assemble(&mut self, mass: f64, diffusion: &Diffusion, diag: &[f64], velocity: Option<&[[f64; 2]]>) {
        let h = self.disc.grid.spacing();
        let m = &mut self.matrix;
        m.clear();
        for (p, &slot) in self.diag_slots.iter().enumerate() {
            m.add_at(slot, mass + diag[p]);
        }
        for (f, slots) in self.face_slots.iter().enumerate() {
            let c = diffusion.faces[f];
            m.add_at(slots[0], c);
            m.add_at(slots[1], c);
            m.add_at(slots[2], -c);
            m.add_at(slots[3], -c);
        }
        if diffusion.cross != 0.0 {
            const P: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
            const Q: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
            let w = diffusion.cross / 4.0;
            for c in &self.corners {
                for a in 0..4 {
                    for b in 0..4 {
                        let v = w * (P[a] * Q[b] + Q[a] * P[b]);
                        if v != 0.0 {
                            m.add(c[a], c[b], v);
                        }
                    }
                }
            }
        }
        let Some(vel) = velocity else { return };
        for (p, b) in vel.iter().enumerate() {
            for axis in 0..2 {
                let bx = b[axis];
                if bx == 0.0 {
                    continue;
                }
                let (hi_side, lo_side) = if axis == 0 { (0, 1) } else { (2, 3) };
                let hi = self.neighbours[p][hi_side];
                let lo = self.neighbours[p][lo_side];
                let c_hi = self.cell_faces[p][hi_side].map_or(0.0, |f| diffusion.faces[f]);
                let c_lo = self.cell_faces[p][lo_side].map_or(0.0, |f| diffusion.faces[f]);
                // equation carries −h² b·∇w on the left
                let half = 0.5 * h * bx;
                let centered_ok = (hi.is_none() || half >= -c_hi) && (lo.is_none() || half <= c_lo);
                if centered_ok {
                    match hi {
                        Some(q) => m.add(p, q, -half),
                        None => m.add(p, p, -half),
                    }
                    match lo {
                        Some(q) => m.add(p, q, half),
                        None => m.add(p, p, half),
                    }
                } else if bx > 0.0 {
                    if let Some(q) = hi {
                        m.add(p, q, -h * bx);
                        m.add(p, p, h * bx);
                    }
                } else if let Some(q) = lo {
                    m.add(p, p, -h * bx);
                    m.add(p, q, h * bx);
                }
            }
        }
    }

    fn solve(&self, rhs: &[f64], x: &mut [f64], symmetric: bool) -> Result<()> {
        let n = rhs.len();
        let cap = (20 * n).clamp(200, 200_000);
        if symmetric {
            let mut trial = x.to_vec();
            if conjugate_gradient(&self.matrix, rhs, &mut trial, self.opts.linear_tol, cap, false).is_ok() {
                x.copy_from_slice(&trial);
                return Ok(());
            }
        }
        bicgstab(&self.matrix, rhs, x, self.opts.linear_tol, cap).map(|_| ())
    }

    fn velocities(&self, coupling: &Coupling, g: &[[f64; 2]]) -> Vec<[f64; 2]> {
        g.iter().enumerate().map(|(p, &gp)| coupling.velocity(p, gp)).collect()
    }

    fn gradient(&self, f: &[f64]) -> Result<Vec<[f64; 2]>> {
        match &self.disc.mollifier {
            Some(op) => Ok(op.apply(f)),
            None => Err(Error::param("delta", "cross-diffusion is active but no mollifier is configured")),
        }
    }

    /// Heat solve (P1) with the colloid iterate frozen.
    pub fn step_heat(&mut self, state: &FieldState, u_frozen: &[Vec<f64>], t_new: f64, guess: &[f64]) -> Result<Vec<f64>> {
        let dt = self.opts.dt;
        let grid = &self.disc.grid;
        let area = grid.spacing() * grid.spacing();
        let velocity = if self.disc.soret.is_active() {
            let mut total = vec![0.0; grid.len()];
            for ui in u_frozen {
                total.iter_mut().zip(ui).for_each(|(t, x)| *t += x);
            }
            let g = self.gradient(&total)?;
            Some(self.velocities(&self.disc.soret, &g))
        } else {
            None
        };
        let sink = &self.disc.heat_sink;
        let diag: Vec<f64> = if sink.exponential {
            sink.per_cell.iter().map(|&c| if c == 0.0 { 0.0 } else { area * (c / area * dt).exp_m1() / dt }).collect()
        } else {
            sink.per_cell.clone()
        };
        let heat = self.disc.heat.clone();
        self.assemble(area / dt, &heat, &diag, velocity.as_deref());
        let mut rhs: Vec<f64> = state.theta.iter().map(|&th| area / dt * th).collect();
        if let Some(src) = &self.disc.heat_source {
            for (p, r) in rhs.iter_mut().enumerate() {
                *r += area * src(grid.center(p), t_new);
            }
        }
        let mut x = guess.to_vec();
        self.solve(&rhs, &mut x, velocity.is_none())?;
        Ok(x)
    }

    /// Colloid and deposit update (P2) with the temperature iterate frozen.
    pub fn step_colloids(&mut self, state: &FieldState, theta_frozen: &[f64], guess: &[Vec<f64>], truncations: &mut usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let dt = self.opts.dt;
        let grid = &self.disc.grid;
        let np = grid.len();
        let area = grid.spacing() * grid.spacing();
        let ns = state.species();
        let g = if self.disc.dufour.iter().any(Coupling::is_active) { Some(self.gradient(theta_frozen)?) } else { None };
        let reacting = !self.disc.kernel.is_inert();
        let mut u_new: Vec<Vec<f64>> = Vec::with_capacity(ns);
        let mut v_new: Vec<Vec<f64>> = Vec::with_capacity(ns);
        let mut lagged = vec![0.0; ns];
        let mut updated = vec![0.0; ns];
        for i in 0..ns {
            let (a, b) = (self.disc.deposition.a[i], self.disc.deposition.b[i]);
            let fit = phi(b * dt);
            let mut diag = vec![0.0; np];
            let mut rhs: Vec<f64> = state.u[i].iter().map(|&x| area / dt * x).collect();
            for (s, site) in self.disc.sites.iter().enumerate() {
                diag[site.cell] += site.measure * fit * a;
                rhs[site.cell] += site.measure * fit * b * state.v[i][s];
            }
            if reacting {
                for p in 0..np {
                    for k in 0..ns {
                        lagged[k] = state.u[k][p];
                    }
                    for (k, uk) in u_new.iter().enumerate() {
                        updated[k] = uk[p];
                    }
                    let split = ReactionSplit::new(&self.disc.kernel, &lagged);
                    if i == 0 && split.truncated() {
                        *truncations += 1;
                    }
                    diag[p] += area * split.loss(i);
                    rhs[p] += area * split.gain(i, &updated);
                }
            }
            let velocity = match (&g, &self.disc.dufour[i]) {
                (Some(g), c) if c.is_active() => Some(self.velocities(c, g)),
                _ => None,
            };
            let diffusion = self.disc.species[i].clone();
            self.assemble(area / dt, &diffusion, &diag, velocity.as_deref());
            let mut x = guess[i].clone();
            self.solve(&rhs, &mut x, velocity.is_none())?;
            let v: Vec<f64> = self
                .disc
                .sites
                .iter()
                .enumerate()
                .map(|(s, site)| state.v[i][s] + dt * fit * (a * x[site.cell] - b * state.v[i][s]))
                .collect();
            u_new.push(x);
            v_new.push(v);
        }
        Ok((u_new, v_new))
    }

    /// One time step: Jacobi fixed-point loop over the heat and colloid solves.
    pub fn step(&mut self, state: &FieldState) -> Result<(FieldState, StepDiagnostics)> {
        let t_new = state.t + self.opts.dt;
        let coupled = self.coupled();
        let grid = self.disc.grid.clone();
        let mut theta_k = state.theta.clone();
        let mut u_k = state.u.clone();
        let mut v_k = state.v.clone();
        let mut increments: Vec<f64> = Vec::new();
        let mut truncations = 0;
        let mut converged = false;
        for _ in 0..self.opts.fp_max {
            let mut trunc_iter = 0;
            let theta_next = self.step_heat(state, &u_k, t_new, &theta_k)?;
            let (u_next, v_next) = self.step_colloids(state, &theta_k, &u_k, &mut trunc_iter)?;
            truncations = trunc_iter;
            let diff = |a: &[f64], b: &[f64]| grid.l2_norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
            let inc = diff(&theta_next, &theta_k) + u_next.iter().zip(&u_k).map(|(a, b)| diff(a, b)).sum::<f64>();
            increments.push(inc);
            theta_k = theta_next;
            u_k = u_next;
            v_k = v_next;
            if !coupled || inc < self.opts.fp_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::FixedPoint { iterations: self.opts.fp_max, increment: *increments.last().unwrap_or(&f64::NAN) });
        }
        let scale = grid.l2_norm(&theta_k) + u_k.iter().map(|u| grid.l2_norm(u)).sum::<f64>();
        let contraction = contraction_factor(&increments, 1e-12 * scale.max(f64::MIN_POSITIVE));
        let next = FieldState { t: t_new, theta: theta_k, u: u_k, v: v_k };
        self.dissipated += 2.0 * self.opts.dt * self.dirichlet_form(&next.theta);
        let diag = self.diagnostics(&next, increments.len(), contraction, *increments.last().unwrap_or(&0.0), truncations);
        Ok((next, diag))
    }

    /// Σ_faces c_f (θ_p − θ_q)², the discrete ∫κ|∇θ|².
    fn dirichlet_form(&self, theta: &[f64]) -> f64 {
        self.faces.iter().zip(&self.disc.heat.faces).map(|(&(p, q), c)| c * (theta[p] - theta[q]).powi(2)).sum()
    }

    pub fn diagnostics(&self, s: &FieldState, iterations: usize, contraction: f64, last_increment: f64, truncations: usize) -> StepDiagnostics {
        let grid = &self.disc.grid;
        let area = grid.spacing() * grid.spacing();
        let (theta_min, theta_max) = min_max(&s.theta);
        let (u_min, u_max): (Vec<f64>, Vec<f64>) = s.u.iter().map(|u| min_max(u)).unzip();
        let (v_min, v_max): (Vec<f64>, Vec<f64>) = s.v.iter().map(|v| min_max(v)).unzip();
        let mass: Vec<f64> = s
            .u
            .iter()
            .zip(&s.v)
            .map(|(u, v)| area * u.iter().sum::<f64>() + self.disc.sites.iter().zip(v).map(|(site, x)| site.measure * x).sum::<f64>())
            .collect();
        let monomer_mass = mass.iter().enumerate().map(|(i, m)| (i + 1) as f64 * m).sum();
        let norm = grid.l2_norm(&s.theta);
        StepDiagnostics {
            t: s.t,
            theta_min,
            theta_max,
            u_min,
            u_max,
            v_min,
            v_max,
            heat: grid.integral(&s.theta),
            mass,
            monomer_mass,
            energy: norm * norm + self.dissipated,
            iterations,
            contraction,
            last_increment,
            truncations,
        }
    }

    /// Sites attached to pore cell `p`.
    pub fn sites_of(&self, p: usize) -> &[usize] {
        &self.site_cells[p]
    }
}

fn min_max(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Geometric mean of successive increment ratios, using only increments above
/// `floor` (round-off level); 0 when fewer than two qualify.
pub fn contraction_factor(increments: &[f64], floor: f64) -> f64 {
    let live: Vec<f64> = increments.iter().copied().take_while(|&x| x > floor).collect();
    if live.len() < 2 {
        return 0.0;
    }
    (live[live.len() - 1] / live[0]).powf(1.0 / (live.len() - 1) as f64)
}

/// Tracks invariant violations over a run.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct Audit {
    pub steps: usize,
    pub theta_floor: f64,
    pub theta_ceiling: f64,
    pub worst_theta_min: f64,
    pub worst_theta_max: f64,
    pub worst_u_min: f64,
    pub worst_v_min: f64,
    pub max_iterations: usize,
    pub max_contraction: f64,
    pub truncations: usize,
    pub violations: Vec<String>,
}

/// Absolute slack on the positivity and maximum-principle checks.
pub const AUDIT_TOL: f64 = 1e-8;

impl Audit {
    pub fn new(theta0_sup: f64) -> Self {
        Audit {
            theta_floor: 0.0,
            theta_ceiling: theta0_sup,
            worst_theta_min: f64::INFINITY,
            worst_theta_max: f64::NEG_INFINITY,
            worst_u_min: f64::INFINITY,
            worst_v_min: f64::INFINITY,
            ..Default::default()
        }
    }

    /// Records one step, with optional upper bounds on each `(u_i, v_i)`.
    pub fn record(&mut self, d: &StepDiagnostics, bounds: Option<&[(f64, f64)]>) {
        self.steps += 1;
        self.worst_theta_min = self.worst_theta_min.min(d.theta_min);
        self.worst_theta_max = self.worst_theta_max.max(d.theta_max);
        self.max_iterations = self.max_iterations.max(d.iterations);
        self.max_contraction = self.max_contraction.max(d.contraction);
        self.truncations += d.truncations;
        let t = d.t;
        if d.theta_min < self.theta_floor - AUDIT_TOL {
            self.violations.push(format!("t={t}: theta min {} below 0", d.theta_min));
        }
        if d.theta_max > self.theta_ceiling + AUDIT_TOL {
            self.violations.push(format!("t={t}: theta max {} above initial sup {}", d.theta_max, self.theta_ceiling));
        }
        for (i, (&lo, &hi)) in d.u_min.iter().zip(&d.u_max).enumerate() {
            self.worst_u_min = self.worst_u_min.min(lo);
            if lo < -AUDIT_TOL {
                self.violations.push(format!("t={t}: u_{} min {lo} negative", i + 1));
            }
            if let Some(b) = bounds {
                if hi > b[i].0 * (1.0 + 1e-12) + AUDIT_TOL {
                    self.violations.push(format!("t={t}: u_{} max {hi} above bound {}", i + 1, b[i].0));
                }
            }
        }
        for (i, (&lo, &hi)) in d.v_min.iter().zip(&d.v_max).enumerate() {
            self.worst_v_min = self.worst_v_min.min(lo);
            if lo < -AUDIT_TOL {
                self.violations.push(format!("t={t}: v_{} min {lo} negative", i + 1));
            }
            if let Some(b) = bounds {
                if hi > b[i].1 * (1.0 + 1e-12) + AUDIT_TOL {
                    self.violations.push(format!("t={t}: v_{} max {hi} above bound {}", i + 1, b[i].1));
                }
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Sup norm of a set of fields.
pub fn sup(fields: &[f64]) -> f64 {
    fields.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Run summary shared by both solvers.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: FieldState,
    pub final_state: FieldState,
    pub diagnostics: Vec<StepDiagnostics>,
    pub audit: Audit,
    /// A priori upper bounds on `(u_i, v_i)` used by the audit.
    pub bounds: Vec<(f64, f64)>,
    pub threshold: f64,
}

/// Drives a stepper from `initial` to `t_end`, calling `observe` after every step.
pub fn integrate<F>(stepper: &mut Stepper<'_>, initial: FieldState, t_end: f64, bounds: Vec<(f64, f64)>, mut observe: F) -> Result<Trajectory>
where
    F: FnMut(usize, &FieldState, &StepDiagnostics) -> Result<()>,
{
    let dt = stepper.options().dt;
    let steps = ((t_end - initial.t) / dt - 1e-9).ceil().max(0.0) as usize;
    let theta0 = sup(&initial.theta);
    let mut audit = Audit::new(theta0);
    let mut state = initial.clone();
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let d0 = stepper.diagnostics(&state, 0, 0.0, 0.0, 0);
    observe(0, &state, &d0)?;
    diagnostics.push(d0);
    for k in 1..=steps {
        let (next, d) = stepper.step(&state)?;
        audit.record(&d, Some(&bounds));
        observe(k, &next, &d)?;
        diagnostics.push(d);
        state = next;
    }
    let threshold = stepper.disc.kernel.threshold();
    Ok(Trajectory { initial, final_state: state, diagnostics, audit, bounds, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_disc(n: usize, conductance: f64) -> Discretization {
        let grid = Grid::full(n);
        let nf = grid.interior_faces().len();
        Discretization {
            heat: Diffusion { faces: vec![conductance; nf], cross: 0.0 },
            species: vec![Diffusion { faces: vec![conductance; nf], cross: 0.0 }; 2],
            heat_sink: HeatSink { per_cell: vec![0.0; grid.len()], exponential: false },
            sites: Vec::new(),
            soret: Coupling::None,
            dufour: vec![Coupling::None; 2],
            kernel: CoagulationKernel::inert(2).unwrap(),
            deposition: DepositionParams::new(vec![1.0; 2], vec![1.0; 2]).unwrap(),
            mollifier: None,
            heat_source: None,
            grid,
        }
    }

    fn opts(dt: f64) -> StepperOptions {
        StepperOptions { dt, fp_tol: 1e-10, fp_max: 30, linear_tol: 1e-12 }
    }

    #[test]
    fn contraction_of_geometric_sequence() {
        let inc = [1.0, 0.5, 0.25, 0.125];
        assert!((contraction_factor(&inc, 0.0) - 0.5).abs() < 1e-15);
        assert!((contraction_factor(&[1.0, 0.5, 0.25, 1e-20], 1e-15) - 0.5).abs() < 1e-15);
        assert_eq!(contraction_factor(&[1.0], 0.0), 0.0);
    }

    #[test]
    fn cross_term_keeps_symmetry_and_constants() {
        let mut disc = full_disc(8, 1.0);
        disc.heat.cross = 0.3;
        let mut st = Stepper::new(&disc, opts(0.1)).unwrap();
        let heat = disc.heat.clone();
        st.assemble(0.0, &heat, &vec![0.0; 64], None);
        assert!(st.matrix.asymmetry() < 1e-15);
        let mut y = vec![0.0; 64];
        st.matrix.matvec(&vec![1.0; 64], &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn hybrid_advection_is_m_matrix() {
        let disc = full_disc(8, 1e-3);
        let mut st = Stepper::new(&disc, opts(0.1)).unwrap();
        let vel: Vec<[f64; 2]> = (0..64).map(|p| [((p * 37) % 11) as f64 - 5.0, ((p * 13) % 7) as f64 - 3.0]).collect();
        let heat = disc.heat.clone();
        st.assemble(1.0, &heat, &vec![0.0; 64], Some(&vel));
        for p in 0..64 {
            let mut sum = 0.0;
            for (q, v) in st.matrix.row(p) {
                if q != p {
                    assert!(v <= 0.0);
                }
                sum += v;
            }
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn audit_flags_violations() {
        let disc = full_disc(4, 1.0);
        let st = Stepper::new(&disc, opts(0.1)).unwrap();
        let state = FieldState { t: 0.1, theta: vec![1.5; 16], u: vec![vec![-1e-6; 16], vec![0.0; 16]], v: vec![vec![], vec![]] };
        let d = st.diagnostics(&state, 1, 0.0, 0.0, 0);
        let mut audit = Audit::new(1.0);
        audit.record(&d, None);
        assert_eq!(audit.violations.len(), 2);
        assert!(!audit.passed());
    }

    #[test]
    fn rejects_bad_options() {
        let disc = full_disc(4, 1.0);
        assert!(Stepper::new(&disc, opts(0.0)).is_err());
        assert!(Stepper::new(&disc, StepperOptions { fp_max: 0, ..opts(0.1) }).is_err());
    }
}
