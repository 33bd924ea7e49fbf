//! Browser bindings: unit-cell tensors, a steppable pore-scale run and
//! well-mixed coagulation.

use perihom::cell_solver::{solve_cell, CellCoefficients};
use perihom::geometry::{build_unit_cell, tile_domain, GrainShape};
use perihom::kinetics::{CoagulationKernel, DepositionParams, KernelPreset, ReactionSplit};
use perihom::micro_solver::{self, MicroRunConfig};
use perihom::scheme::{self, Discretization, FieldState, Stepper, StepperOptions};
use serde_json::json;
use wasm_bindgen::prelude::*;

const SPECIES: usize = 2;

fn disc(radius: f64) -> GrainShape {
    if radius > 0.0 {
        GrainShape::disc([0.5, 0.5], radius)
    } else {
        GrainShape::None
    }
}

/// Effective tensors of a cell with a centred disc, as JSON.
#[wasm_bindgen]
pub fn cell_tensors(radius: f64, resolution: usize, kappa: f64, d1: f64, d2: f64, g0: f64) -> Result<String, JsError> {
    let cell = build_unit_cell(disc(radius), resolution, 1.0)?;
    let coeffs = CellCoefficients::constant(resolution, kappa, 0.0, &[d1, d2], &[0.0, 0.0])?;
    let dep = DepositionParams::new(vec![1.0; SPECIES], vec![1.0; SPECIES])?;
    let sol = solve_cell(&cell, &coeffs, &dep, g0)?;
    let t = &sol.tensors;
    let mask: Vec<u8> = cell.pore_mask().iter().map(|&p| p as u8).collect();
    Ok(json!({
        "k": t.k,
        "bulk": t.bulk(),
        "d": t.d,
        "pore_area": t.pore_area,
        "perimeter": t.perimeter,
        "g_robin": t.g_robin,
        "side": resolution,
        "mask": mask,
        "warning": sol.warning,
    })
    .to_string())
}

/// Pore-scale heat and two-species colloid run on an ε-periodic medium.
#[wasm_bindgen]
pub struct Simulation {
    disc: Discretization,
    options: StepperOptions,
    state: FieldState,
    last: String,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(radius: f64, epsilon: f64, resolution: usize, beta: f64, tau: f64, dt: f64) -> Result<Simulation, JsError> {
        let cell = build_unit_cell(disc(radius), resolution, 1.0)?;
        let domain = tile_domain(&cell, epsilon)?;
        let h = domain.grid().spacing();
        let cfg = MicroRunConfig {
            coefficients: CellCoefficients::constant(resolution, 1.0, tau, &[1.0, 0.5], &[0.0, 0.0])?,
            kernel: CoagulationKernel::new(SPECIES, vec![beta; SPECIES * SPECIES], f64::INFINITY)?,
            deposition: DepositionParams::new(vec![1.0; SPECIES], vec![1.0; SPECIES])?,
            g0: 1.0,
            delta: 4.0 * h,
            options: StepperOptions { dt, fp_tol: 1e-8, fp_max: 30, linear_tol: 1e-8 },
            t_end: 10.0,
            threshold: None,
            domain,
        };
        let mut disc = micro_solver::discretize(&cfg)?;
        let grid = &disc.grid;
        let bump = |x: f64, y: f64, cx: f64, cy: f64| (-((x - cx).powi(2) + (y - cy).powi(2)) / 0.02).exp();
        let centers: Vec<[f64; 2]> = (0..grid.len()).map(|p| grid.center(p)).collect();
        let mut state = FieldState::zeros(grid.len(), disc.sites.len(), SPECIES);
        state.theta = centers.iter().map(|&[x, y]| bump(x, y, 0.3, 0.5)).collect();
        state.u[0] = centers.iter().map(|&[x, y]| bump(x, y, 0.7, 0.5)).collect();
        scheme::prepare_run(&mut disc, &state, cfg.t_end, None)?;
        Ok(Simulation { disc, options: cfg.options, state, last: String::from("{}") })
    }

    /// Advances `steps` time steps and returns the last diagnostics as JSON.
    pub fn advance(&mut self, steps: usize) -> Result<String, JsError> {
        let mut stepper = Stepper::new(&self.disc, self.options)?;
        for _ in 0..steps {
            let (next, d) = stepper.step(&self.state)?;
            self.state = next;
            self.last = json!({
                "t": d.t,
                "theta_max": d.theta_max,
                "heat": d.heat,
                "mass": d.mass,
                "monomer_mass": d.monomer_mass,
                "iterations": d.iterations,
                "contraction": d.contraction,
            })
            .to_string();
        }
        Ok(self.last.clone())
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn side(&self) -> usize {
        self.disc.grid.side()
    }

    /// Field on the full grid, NaN in solid cells. 0 is θ, `k ≥ 1` is species `k`.
    pub fn field(&self, which: usize) -> Result<Vec<f64>, JsError> {
        let values = match which {
            0 => &self.state.theta,
            k if k <= SPECIES => &self.state.u[k - 1],
            _ => return Err(JsError::new("unknown field")),
        };
        let g = &self.disc.grid;
        let mut out = vec![f64::NAN; g.side() * g.side()];
        for (p, &x) in values.iter().enumerate() {
            out[g.flat(p)] = x;
        }
        Ok(out)
    }
}

/// Well-mixed coagulation with the split used by the solvers, row-major
/// `(steps + 1) × n`.
#[wasm_bindgen]
pub fn coagulation(preset: &str, c: f64, initial: Vec<f64>, dt: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    let preset = match preset {
        "constant" => KernelPreset::Constant,
        "additive" => KernelPreset::Additive,
        "multiplicative" => KernelPreset::Multiplicative,
        "brownian" => KernelPreset::Brownian,
        other => return Err(JsError::new(&format!("unknown kernel `{other}`"))),
    };
    if !(dt > 0.0) || initial.iter().any(|&x| !(x >= 0.0)) {
        return Err(JsError::new("dt must be positive and the initial data nonnegative"));
    }
    let n = initial.len();
    let kernel = CoagulationKernel::preset(n, preset, c, f64::INFINITY)?;
    let mut u = initial;
    let mut out = Vec::with_capacity((steps + 1) * n);
    out.extend_from_slice(&u);
    for _ in 0..steps {
        let split = ReactionSplit::new(&kernel, &u);
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = (u[i] + dt * split.gain(i, &next)) / (1.0 + dt * split.loss(i));
        }
        u = next;
        out.extend_from_slice(&u);
    }
    Ok(out)
}
