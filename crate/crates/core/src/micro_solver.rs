//! Pore-scale system on the perforated domain Ω^ε.
//!
//! Coefficients are sampled at x/ε from the unit-cell grid. Heat leaks through
//! Robin grain faces at rate ε·g₀; colloids exchange with deposits through every
//! grain face at ε(a_i u_i − b_i v_i). Deposits live on the grain faces.

use crate::cell_solver::CellCoefficients;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryClass, PerforatedDomain};
use crate::kinetics::{CoagulationKernel, DepositionParams};
use crate::mollifier::{build_kernel, MollifiedGradient};
use crate::scheme::{self, Coupling, Diffusion, Discretization, FieldState, HeatSink, Site, StepDiagnostics, Stepper, StepperOptions, Trajectory};

#[derive(Debug, Clone)]
pub struct MicroRunConfig {
    pub domain: PerforatedDomain,
    /// Sampled on the unit-cell grid.
    pub coefficients: CellCoefficients,
    pub kernel: CoagulationKernel,
    pub deposition: DepositionParams,
    pub g0: f64,
    /// Mollifier radius, used only when a cross term is active.
    pub delta: f64,
    pub options: StepperOptions,
    pub t_end: f64,
    /// Overrides the automatic truncation threshold.
    pub threshold: Option<f64>,
}

/// Builds the finite-volume operators of the pore-scale system.
pub fn discretize(cfg: &MicroRunConfig) -> Result<Discretization> {
    let dom = &cfg.domain;
    let coeff = &cfg.coefficients;
    let ns = coeff.species();
    if coeff.resolution != dom.cell().resolution() {
        return Err(Error::param("coefficients", format!("sampled at {} but the cell has resolution {}", coeff.resolution, dom.cell().resolution())));
    }
    if ns < 2 {
        return Err(Error::param("species", format!("need at least 2, got {ns}")));
    }
    if cfg.kernel.species() != ns || cfg.deposition.species() != ns {
        return Err(Error::param("species", "kernel, deposition and coefficients disagree on the species count"));
    }
    if !(cfg.g0 >= 0.0 && cfg.g0.is_finite()) {
        return Err(Error::param("g0", format!("must be nonnegative, got {}", cfg.g0)));
    }
    let grid = dom.grid().clone();
    let eps = dom.epsilon();
    let idx: Vec<usize> = (0..grid.len()).map(|p| dom.cell_index(p)).collect();
    let faces = grid.interior_faces();
    let conductance = |c: &[f64]| -> Diffusion {
        Diffusion { faces: faces.iter().map(|&(p, q, _)| 0.5 * (c[idx[p]] + c[idx[q]])).collect(), cross: 0.0 }
    };
    let mut sink = vec![0.0; grid.len()];
    let mut sites = Vec::with_capacity(dom.faces().len());
    for f in dom.faces() {
        if f.class == BoundaryClass::Robin {
            sink[f.pore] += eps * cfg.g0 * f.length;
        }
        sites.push(Site { cell: f.pore, measure: eps * f.length });
    }
    let scalar = |c: &[f64]| -> Coupling {
        if c.iter().all(|&x| x == 0.0) {
            Coupling::None
        } else {
            Coupling::Scalar(idx.iter().map(|&k| c[k]).collect())
        }
    };
    let soret = scalar(&coeff.tau);
    let dufour: Vec<Coupling> = coeff.dufour.iter().map(|c| scalar(c)).collect();
    let mollifier = if soret.is_active() || dufour.iter().any(Coupling::is_active) {
        Some(MollifiedGradient::new(&grid, &build_kernel(cfg.delta, grid.spacing())?)?)
    } else {
        None
    };
    Ok(Discretization {
        heat: conductance(&coeff.kappa),
        species: coeff.d.iter().map(|d| conductance(d)).collect(),
        heat_sink: HeatSink { per_cell: sink, exponential: false },
        sites,
        soret,
        dufour,
        kernel: cfg.kernel.clone(),
        deposition: cfg.deposition.clone(),
        mollifier,
        heat_source: None,
        grid,
    })
}

/// Zero state with the right shapes for `cfg`.
pub fn zero_state(cfg: &MicroRunConfig) -> FieldState {
    FieldState::zeros(cfg.domain.grid().len(), cfg.domain.faces().len(), cfg.coefficients.species())
}

/// Runs the pore-scale system from `initial` to `cfg.t_end`.
pub fn simulate_micro<F>(cfg: &MicroRunConfig, initial: FieldState, observe: F) -> Result<Trajectory>
where
    F: FnMut(usize, &FieldState, &StepDiagnostics) -> Result<()>,
{
    let mut disc = discretize(cfg)?;
    let bounds = scheme::prepare_run(&mut disc, &initial, cfg.t_end, cfg.threshold)?;
    let mut stepper = Stepper::new(&disc, cfg.options)?;
    scheme::integrate(&mut stepper, initial, cfg.t_end, bounds, observe)
}
