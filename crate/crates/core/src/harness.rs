//! Run orchestration: mode dispatch, output files and the ε → 0 study.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cell_solver::{solve_cell, CellSolution, EffectiveTensors};
use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::{mask_pgm, tile_domain, Grid, PerforatedDomain};
use crate::macro_solver::{self, MacroRunConfig};
use crate::micro_solver::{self, MicroRunConfig};
use crate::mollifier::build_kernel;
use crate::scheme::{Audit, FieldState, StepDiagnostics, Trajectory};

/// Exit status for config and validation errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for solver failures.
pub const EXIT_SOLVER: i32 = 3;
/// Exit status for invariant violations under `--strict`.
pub const EXIT_INVARIANT: i32 = 4;

/// Maps an error to the CLI exit status.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parameter { .. } | Error::Geometry(_) | Error::Disconnected { .. } => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

/// Sets the size of the global worker pool. Has no effect without the
/// `parallel` feature or after the pool is in use.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Output directory with atomic writes and a running file list.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` through a temporary file and a rename.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(contents)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| Error::Io(e.error))?;
        let record = FileRecord { name: name.to_string(), sha256: hex::encode(Sha256::digest(contents)), bytes: contents.len() };
        match self.files.iter_mut().find(|f| f.name == name) {
            Some(f) => *f = record,
            None => self.files.push(record),
        }
        Ok(())
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeRow {
    pub epsilon: f64,
    pub micro_side: usize,
    pub theta_error: f64,
    pub u_error: f64,
    pub error: f64,
    /// e(previous ε) / e(ε); NaN on the first row.
    pub ratio: f64,
}

/// What a run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub mode: Mode,
    pub files: Vec<FileRecord>,
    pub audit: Vec<(String, Audit)>,
    pub warnings: Vec<String>,
    pub tensors: Option<EffectiveTensors>,
    pub converge: Vec<ConvergeRow>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.audit.iter().all(|(_, a)| a.passed())
    }

    pub fn violations(&self) -> Vec<String> {
        self.audit.iter().flat_map(|(name, a)| a.violations.iter().map(move |v| format!("{name}: {v}"))).collect()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    config_sha256: String,
    parallel: bool,
    passed: bool,
    audit: &'a [(String, Audit)],
    warnings: &'a [String],
    files: &'a [FileRecord],
}

/// Runs `mode` and writes every artifact into `out_dir`.
///
/// `base` resolves relative paths inside the config.
pub fn run(mode: Mode, cfg: &RunConfig, config_text: &str, base: &Path, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate(mode)?;
    let mut out = Outputs::new(out_dir)?;
    let mut outcome = RunOutcome { mode, files: Vec::new(), audit: Vec::new(), warnings: Vec::new(), tensors: None, converge: Vec::new() };
    let result = match mode {
        Mode::Cell => run_cell(cfg, &mut out, &mut outcome),
        Mode::Micro => run_micro(cfg, &mut out, &mut outcome),
        Mode::Macro => run_macro(cfg, base, &mut out, &mut outcome),
        Mode::Converge => run_converge(cfg, &mut out, &mut outcome),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode,
        config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
        parallel: cfg!(feature = "parallel"),
        passed: result.is_ok() && outcome.passed(),
        audit: &outcome.audit,
        warnings: &outcome.warnings,
        files: out.files(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    out.write("manifest.json", json.as_bytes())?;
    result?;
    outcome.files = out.files().to_vec();
    Ok(outcome)
}

fn cell_solution(cfg: &RunConfig, out: &mut Outputs, outcome: &mut RunOutcome) -> Result<CellSolution> {
    let cell = cfg.unit_cell()?;
    out.write("mask.pgm", mask_pgm(cell.resolution(), cell.pore_mask()).as_bytes())?;
    let sol = solve_cell(&cell, &cfg.cell_coefficients()?, &cfg.deposition()?, cfg.g0())?;
    out.write("tensors.csv", sol.tensors.to_csv().as_bytes())?;
    let mut report = sol.tensors.report();
    for (j, c) in sol.theta_bar.iter().enumerate() {
        let _ = writeln!(report, "theta corrector {}: {} iterations, residual {:e}", j + 1, c.iterations, c.residual);
    }
    out.write("tensors.txt", report.as_bytes())?;
    if let Some(w) = &sol.warning {
        outcome.warnings.push(w.clone());
    }
    outcome.tensors = Some(sol.tensors.clone());
    Ok(sol)
}

fn run_cell(cfg: &RunConfig, out: &mut Outputs, outcome: &mut RunOutcome) -> Result<()> {
    cell_solution(cfg, out, outcome).map(|_| ())
}

/// Initial state on `grid` with `sites` deposit sites.
fn initial_state(cfg: &RunConfig, grid: &Grid, sites: usize) -> FieldState {
    let init = cfg.initial.as_ref().expect("validated");
    let ns = init.u.len();
    let v0 = init.v.clone().unwrap_or_else(|| vec![0.0; ns]);
    FieldState { t: 0.0, theta: init.theta.sample(grid), u: init.u.iter().map(|p| p.sample(grid)).collect(), v: v0.iter().map(|&v| vec![v; sites]).collect() }
}

fn default_delta(cfg: &RunConfig, spacing: f64) -> f64 {
    cfg.solver.as_ref().and_then(|s| s.delta).unwrap_or(4.0 * spacing)
}

fn micro_config(cfg: &RunConfig, epsilon: f64, delta: f64) -> Result<MicroRunConfig> {
    let cell = cfg.unit_cell()?;
    let domain = tile_domain(&cell, epsilon)?;
    let s = cfg.solver.as_ref().expect("validated");
    Ok(MicroRunConfig {
        domain,
        coefficients: cfg.cell_coefficients()?,
        kernel: cfg.kernel()?,
        deposition: cfg.deposition()?,
        g0: cfg.g0(),
        delta,
        options: cfg.stepper_options()?,
        t_end: s.t_end,
        threshold: cfg.threshold(),
    })
}

fn macro_config(cfg: &RunConfig, tensors: EffectiveTensors, delta: f64) -> Result<MacroRunConfig> {
    let s = cfg.solver.as_ref().expect("validated");
    Ok(MacroRunConfig {
        resolution: s.macro_resolution,
        tensors,
        kernel: cfg.kernel()?,
        deposition: cfg.deposition()?,
        delta,
        options: cfg.stepper_options()?,
        t_end: s.t_end,
        threshold: cfg.threshold(),
        heat_source: None,
    })
}

fn diag_header(ns: usize) -> String {
    let mut s = String::from("step,t,theta_min,theta_max,heat,energy,monomer_mass,iterations,contraction,last_increment,truncations");
    for i in 1..=ns {
        let _ = write!(s, ",u{i}_min,u{i}_max,v{i}_min,v{i}_max,mass{i}");
    }
    s.push('\n');
    s
}

fn diag_row(step: usize, d: &StepDiagnostics) -> String {
    let mut s = format!(
        "{step},{},{},{},{},{},{},{},{},{},{}",
        d.t, d.theta_min, d.theta_max, d.heat, d.energy, d.monomer_mass, d.iterations, d.contraction, d.last_increment, d.truncations
    );
    for i in 0..d.mass.len() {
        let _ = write!(s, ",{},{},{},{},{}", d.u_min[i], d.u_max[i], d.v_min[i], d.v_max[i], d.mass[i]);
    }
    s.push('\n');
    s
}

fn diag_csv(diags: &[StepDiagnostics]) -> String {
    let ns = diags.first().map_or(0, |d| d.mass.len());
    let mut s = diag_header(ns);
    for (k, d) in diags.iter().enumerate() {
        s.push_str(&diag_row(k, d));
    }
    s
}

/// `x,y,theta,u1..uN` per pore cell.
pub fn snapshot_csv(grid: &Grid, st: &FieldState) -> String {
    let mut s = String::from("x,y,theta");
    for i in 1..=st.species() {
        let _ = write!(s, ",u{i}");
    }
    s.push('\n');
    for p in 0..grid.len() {
        let [x, y] = grid.center(p);
        let _ = write!(s, "{x},{y},{}", st.theta[p]);
        for u in &st.u {
            let _ = write!(s, ",{}", u[p]);
        }
        s.push('\n');
    }
    s
}

/// Legacy VTK structured points; grain cells hold 0 and `pore` marks Ω^ε.
pub fn snapshot_vtk(grid: &Grid, st: &FieldState) -> String {
    let n = grid.side();
    let h = grid.spacing();
    let mut s = format!(
        "# vtk DataFile Version 3.0\nfields t={}\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS {} {} 2\nORIGIN 0 0 0\nSPACING {h} {h} {h}\nCELL_DATA {}\n",
        st.t,
        n + 1,
        n + 1,
        n * n
    );
    let mut scalar = |name: &str, f: &dyn Fn(usize) -> f64| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for k in 0..n * n {
            let _ = writeln!(s, "{}", f(k));
        }
    };
    scalar("pore", &|k| if grid.pore_at_flat(k).is_some() { 1.0 } else { 0.0 });
    scalar("theta", &|k| grid.pore_at_flat(k).map_or(0.0, |p| st.theta[p]));
    for (i, u) in st.u.iter().enumerate() {
        scalar(&format!("u{}", i + 1), &|k| grid.pore_at_flat(k).map_or(0.0, |p| u[p]));
    }
    s
}

fn deposit_csv(positions: &[[f64; 2]], st: &FieldState) -> String {
    let mut s = String::from("site,x,y");
    for i in 1..=st.species() {
        let _ = write!(s, ",v{i}");
    }
    s.push('\n');
    for (k, [x, y]) in positions.iter().enumerate() {
        let _ = write!(s, "{k},{x},{y}");
        for v in &st.v {
            let _ = write!(s, ",{}", v[k]);
        }
        s.push('\n');
    }
    s
}

fn face_positions(domain: &PerforatedDomain) -> Vec<[f64; 2]> {
    let grid = domain.grid();
    let h = grid.spacing();
    domain
        .faces()
        .iter()
        .map(|f| {
            let c = grid.center(f.pore);
            let nrm = f.side.normal();
            [c[0] + 0.5 * h * nrm[0], c[1] + 0.5 * h * nrm[1]]
        })
        .collect()
}

/// Observer writing snapshots at the configured cadence.
fn snapshots<'a>(cfg: &RunConfig, grid: &'a Grid, out: &'a mut Outputs, prefix: &'a str) -> impl FnMut(usize, &FieldState, &StepDiagnostics) -> Result<()> + 'a {
    let every = cfg.output.snapshot_every;
    let vtk = cfg.output.vtk;
    let t_end = cfg.solver.as_ref().map_or(0.0, |s| s.t_end);
    let dt = cfg.solver.as_ref().map_or(1.0, |s| s.dt);
    move |step, st, _| {
        let last = st.t >= t_end - 0.5 * dt;
        if step == 0 || last || (every > 0 && step % every == 0) {
            let name = format!("{prefix}snap_{:.6}", st.t);
            out.write(&format!("{name}.csv"), snapshot_csv(grid, st).as_bytes())?;
            if vtk {
                out.write(&format!("{name}.vtk"), snapshot_vtk(grid, st).as_bytes())?;
            }
        }
        Ok(())
    }
}

fn record(outcome: &mut RunOutcome, name: &str, tr: &Trajectory) {
    outcome.audit.push((name.to_string(), tr.audit.clone()));
    if tr.audit.truncations > 0 {
        outcome.warnings.push(format!("{name}: truncation threshold {} reached in {} cell updates", tr.threshold, tr.audit.truncations));
    }
}

fn run_micro(cfg: &RunConfig, out: &mut Outputs, outcome: &mut RunOutcome) -> Result<()> {
    let eps = cfg.geometry.as_ref().and_then(|g| g.epsilon).expect("validated");
    let cell = cfg.unit_cell()?;
    let spacing = eps / cell.resolution() as f64;
    let mc = micro_config(cfg, eps, default_delta(cfg, spacing))?;
    let grid = mc.domain.grid().clone();
    out.write("mask.pgm", mask_pgm(grid.side(), grid.mask()).as_bytes())?;
    if cfg.coupled() {
        out.write("kernel.csv", build_kernel(mc.delta, spacing)?.to_csv().as_bytes())?;
    }
    let initial = initial_state(cfg, &grid, mc.domain.faces().len());
    let tr = micro_solver::simulate_micro(&mc, initial, snapshots(cfg, &grid, out, ""))?;
    out.write("diag.csv", diag_csv(&tr.diagnostics).as_bytes())?;
    out.write("deposit.csv", deposit_csv(&face_positions(&mc.domain), &tr.final_state).as_bytes())?;
    record(outcome, "micro", &tr);
    Ok(())
}

fn macro_tensors(cfg: &RunConfig, base: &Path, out: &mut Outputs, outcome: &mut RunOutcome) -> Result<EffectiveTensors> {
    match cfg.explicit_tensors(base)? {
        Some(t) => {
            out.write("tensors.csv", t.to_csv().as_bytes())?;
            outcome.tensors = Some(t.clone());
            Ok(t)
        }
        None => Ok(cell_solution(cfg, out, outcome)?.tensors),
    }
}

fn run_macro(cfg: &RunConfig, base: &Path, out: &mut Outputs, outcome: &mut RunOutcome) -> Result<()> {
    let tensors = macro_tensors(cfg, base, out, outcome)?;
    let n = cfg.solver.as_ref().expect("validated").macro_resolution;
    let spacing = 1.0 / n as f64;
    let mc = macro_config(cfg, tensors, default_delta(cfg, spacing))?;
    let grid = Grid::full(n);
    let initial = initial_state(cfg, &grid, macro_solver::zero_state(&mc).v[0].len());
    if mc.tensors.t != [[0.0; 2]; 2] || mc.tensors.f.iter().any(|f| *f != [[0.0; 2]; 2]) {
        out.write("kernel.csv", build_kernel(mc.delta, spacing)?.to_csv().as_bytes())?;
    }
    let tr = macro_solver::simulate_macro(&mc, initial, snapshots(cfg, &grid, out, ""))?;
    out.write("diag.csv", diag_csv(&tr.diagnostics).as_bytes())?;
    let sites: Vec<[f64; 2]> = if tr.final_state.v[0].is_empty() { Vec::new() } else { (0..grid.len()).map(|p| grid.center(p)).collect() };
    out.write("deposit.csv", deposit_csv(&sites, &tr.final_state).as_bytes())?;
    record(outcome, "macro", &tr);
    Ok(())
}

/// Restricts a full-grid field of side `n_macro` to the pore cells of `micro`:
/// block averages when the micro grid is coarser, injection when finer.
pub fn restrict(field: &[f64], n_macro: usize, micro: &Grid) -> Result<Vec<f64>> {
    let n = micro.side();
    if field.len() != n_macro * n_macro {
        return Err(Error::param("restrict", format!("{} values for a {n_macro}² grid", field.len())));
    }
    if n_macro >= n {
        if !n_macro.is_multiple_of(n) {
            return Err(Error::param("solver.macro_resolution", format!("{n_macro} is not a multiple of the micro grid side {n}")));
        }
        let k = n_macro / n;
        Ok((0..micro.len())
            .map(|p| {
                let (i, j) = micro.ij(p);
                let mut s = 0.0;
                for b in 0..k {
                    for a in 0..k {
                        s += field[(j * k + b) * n_macro + i * k + a];
                    }
                }
                s / (k * k) as f64
            })
            .collect())
    } else {
        if !n.is_multiple_of(n_macro) {
            return Err(Error::param("solver.macro_resolution", format!("{n_macro} does not divide the micro grid side {n}")));
        }
        let k = n / n_macro;
        Ok((0..micro.len())
            .map(|p| {
                let (i, j) = micro.ij(p);
                field[(j / k) * n_macro + i / k]
            })
            .collect())
    }
}

/// `‖θ^ε − θ‖ + Σ‖u_i^ε − u_i‖` over the pore cells, plus its two parts.
pub fn homogenization_error(micro_grid: &Grid, micro: &FieldState, n_macro: usize, macro_state: &FieldState) -> Result<(f64, f64)> {
    let diff = |a: &[f64], b: &[f64]| -> Result<f64> {
        let r = restrict(b, n_macro, micro_grid)?;
        Ok(micro_grid.l2_norm(&a.iter().zip(&r).map(|(x, y)| x - y).collect::<Vec<_>>()))
    };
    let et = diff(&micro.theta, &macro_state.theta)?;
    let mut eu = 0.0;
    for (a, b) in micro.u.iter().zip(&macro_state.u) {
        eu += diff(a, b)?;
    }
    Ok((et, eu))
}

fn converge_csv(rows: &[ConvergeRow]) -> String {
    let mut s = String::from("epsilon,micro_side,theta_error,u_error,error,ratio\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.epsilon, r.micro_side, r.theta_error, r.u_error, r.error, r.ratio);
    }
    s
}

fn run_converge(cfg: &RunConfig, out: &mut Outputs, outcome: &mut RunOutcome) -> Result<()> {
    let mut eps = cfg.geometry.as_ref().and_then(|g| g.epsilons.clone()).unwrap_or_else(|| vec![0.25, 0.125, 0.0625]);
    eps.sort_by(|a, b| b.total_cmp(a));
    let cell = cfg.unit_cell()?;
    let coarsest = eps[0] / cell.resolution() as f64;
    let delta = default_delta(cfg, coarsest);
    let tensors = cell_solution(cfg, out, outcome)?.tensors;
    let mc = macro_config(cfg, tensors, delta)?;
    let n_macro = mc.resolution;
    let mgrid = Grid::full(n_macro);
    let macro_init = initial_state(cfg, &mgrid, macro_solver::zero_state(&mc).v[0].len());
    let mtr = macro_solver::simulate_macro(&mc, macro_init, |_, _, _| Ok(()))?;
    out.write("macro_diag.csv", diag_csv(&mtr.diagnostics).as_bytes())?;
    out.write("macro_final.csv", snapshot_csv(&mgrid, &mtr.final_state).as_bytes())?;
    record(outcome, "macro", &mtr);

    let mut rows: Vec<ConvergeRow> = Vec::new();
    out.write("converge.csv", converge_csv(&rows).as_bytes())?;
    for &e in &eps {
        let name = format!("micro_eps_{e}");
        let result = micro_config(cfg, e, delta).and_then(|mic| {
            let grid = mic.domain.grid().clone();
            let init = initial_state(cfg, &grid, mic.domain.faces().len());
            let tr = micro_solver::simulate_micro(&mic, init, |_, _, _| Ok(()))?;
            let (et, eu) = homogenization_error(&grid, &tr.final_state, n_macro, &mtr.final_state)?;
            Ok((grid.side(), tr, et, eu))
        });
        let (side, tr, et, eu) = match result {
            Ok(r) => r,
            Err(err) => {
                outcome.converge = rows;
                return Err(err);
            }
        };
        out.write(&format!("{name}_diag.csv"), diag_csv(&tr.diagnostics).as_bytes())?;
        record(outcome, &name, &tr);
        let error = et + eu;
        let ratio = rows.last().map_or(f64::NAN, |r| r.error / error);
        rows.push(ConvergeRow { epsilon: e, micro_side: side, theta_error: et, u_error: eu, error, ratio });
        out.write("converge.csv", converge_csv(&rows).as_bytes())?;
    }
    outcome.converge = rows;
    Ok(())
}
