//! Upscaled system on the homogeneous unit square.
//!
//! Unknowns are pore-averaged: the heat equation carries 𝕂, the Robin sink
//! g₀|Γ_R|/|Y₁| and the Soret tensor 𝕋; each colloid equation carries 𝔻ⁱ, 𝔽ⁱ
//! and the exchange A_i u_i − B_i v_i. Deposits obey ∂_t v_i = a_i u_i − b_i v_i
//! in every cell.

use crate::cell_solver::{symmetric_part, EffectiveTensors, Mat2};
use crate::error::{Error, Result};
use crate::geometry::{Axis, Grid};
use crate::kinetics::{CoagulationKernel, DepositionParams};
use crate::mollifier::{build_kernel, MollifiedGradient};
use crate::scheme::{self, Coupling, Diffusion, Discretization, FieldState, HeatSink, HeatSource, Site, StepDiagnostics, Stepper, StepperOptions, Trajectory};

#[derive(Clone)]
pub struct MacroRunConfig {
    /// Cells per side.
    pub resolution: usize,
    pub tensors: EffectiveTensors,
    pub kernel: CoagulationKernel,
    /// Unweighted a_i, b_i of the deposit law.
    pub deposition: DepositionParams,
    pub delta: f64,
    pub options: StepperOptions,
    pub t_end: f64,
    pub threshold: Option<f64>,
    pub heat_source: Option<HeatSource>,
}

impl std::fmt::Debug for MacroRunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MacroRunConfig")
            .field("resolution", &self.resolution)
            .field("tensors", &self.tensors)
            .field("t_end", &self.t_end)
            .finish_non_exhaustive()
    }
}

fn diffusion(grid: &Grid, m: Mat2) -> Diffusion {
    let s = symmetric_part(m);
    let faces = grid.interior_faces().iter().map(|&(_, _, axis)| if axis == Axis::X { s[0][0] } else { s[1][1] }).collect();
    Diffusion { faces, cross: s[0][1] }
}

fn tensor(m: Mat2) -> Coupling {
    if m.iter().flatten().all(|&x| x == 0.0) {
        Coupling::None
    } else {
        Coupling::Tensor(m)
    }
}

fn transpose(m: Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Builds the operators of the upscaled system.
pub fn discretize(cfg: &MacroRunConfig) -> Result<Discretization> {
    let tn = &cfg.tensors;
    let ns = tn.species();
    if ns < 2 {
        return Err(Error::param("species", format!("need at least 2, got {ns}")));
    }
    if cfg.kernel.species() != ns || cfg.deposition.species() != ns || tn.f.len() != ns {
        return Err(Error::param("species", "kernel, deposition and tensors disagree on the species count"));
    }
    if cfg.resolution < 2 || cfg.resolution > crate::geometry::MAX_GRID_SIDE {
        return Err(Error::param("resolution", format!("must lie in [2, {}], got {}", crate::geometry::MAX_GRID_SIDE, cfg.resolution)));
    }
    let positive = |name: &str, m: Mat2| -> Result<()> {
        let s = symmetric_part(m);
        if !(s[0][0] > 0.0 && s[0][0] * s[1][1] - s[0][1] * s[0][1] > 0.0) {
            return Err(Error::param(name, "symmetric part must be positive definite"));
        }
        Ok(())
    };
    positive("K", tn.k)?;
    for (i, d) in tn.d.iter().enumerate() {
        positive(&format!("D{}", i + 1), *d)?;
    }
    if !(tn.g_robin >= 0.0) {
        return Err(Error::param("g_robin", format!("must be nonnegative, got {}", tn.g_robin)));
    }
    let surface = if tn.pore_area > 0.0 { tn.surface_density() } else { 0.0 };
    if !(surface >= 0.0 && surface.is_finite()) {
        return Err(Error::param("perimeter", "surface density must be finite and nonnegative"));
    }
    let grid = Grid::full(cfg.resolution);
    let h = grid.spacing();
    let area = h * h;
    let sites = if surface > 0.0 { (0..grid.len()).map(|p| Site { cell: p, measure: surface * area }).collect() } else { Vec::new() };
    let soret = tensor(tn.t);
    let dufour: Vec<Coupling> = tn.f.iter().map(|&f| tensor(transpose(f))).collect();
    let mollifier = if soret.is_active() || dufour.iter().any(Coupling::is_active) {
        Some(MollifiedGradient::new(&grid, &build_kernel(cfg.delta, h)?)?)
    } else {
        None
    };
    Ok(Discretization {
        heat: diffusion(&grid, tn.k),
        species: tn.d.iter().map(|&d| diffusion(&grid, d)).collect(),
        heat_sink: HeatSink { per_cell: vec![tn.g_robin * area; grid.len()], exponential: true },
        sites,
        soret,
        dufour,
        kernel: cfg.kernel.clone(),
        deposition: cfg.deposition.clone(),
        mollifier,
        heat_source: cfg.heat_source.clone(),
        grid,
    })
}

/// Zero state with the right shapes for `cfg`.
pub fn zero_state(cfg: &MacroRunConfig) -> FieldState {
    let cells = cfg.resolution * cfg.resolution;
    let sites = if cfg.tensors.perimeter > 0.0 { cells } else { 0 };
    FieldState::zeros(cells, sites, cfg.tensors.species())
}

/// Runs the upscaled system from `initial` to `cfg.t_end`.
pub fn simulate_macro<F>(cfg: &MacroRunConfig, initial: FieldState, observe: F) -> Result<Trajectory>
where
    F: FnMut(usize, &FieldState, &StepDiagnostics) -> Result<()>,
{
    let mut disc = discretize(cfg)?;
    let bounds = scheme::prepare_run(&mut disc, &initial, cfg.t_end, cfg.threshold)?;
    let mut stepper = Stepper::new(&disc, cfg.options)?;
    scheme::integrate(&mut stepper, initial, cfg.t_end, bounds, observe)
}
