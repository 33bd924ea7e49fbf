//! Run configuration, read from TOML.
//!
//! Unknown keys are rejected. Each section is optional at parse time; the
//! sections a mode needs are checked by [`RunConfig::validate`].

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell_solver::{CellCoefficients, CoefficientField, EffectiveTensors, Mat2};
use crate::error::{Error, Result};
use crate::geometry::{build_unit_cell, Axis, GrainShape, Grid, UnitCell, MIN_CELL_RESOLUTION};
use crate::kinetics::{CoagulationKernel, DepositionParams, KernelPreset};
use crate::scheme::StepperOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cell,
    Micro,
    Macro,
    Converge,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Cell => "cell",
            Mode::Micro => "micro",
            Mode::Macro => "macro",
            Mode::Converge => "converge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub geometry: Option<GeometryConfig>,
    pub coefficients: Option<CoefficientConfig>,
    pub kinetics: Option<KineticsConfig>,
    pub initial: Option<InitialConfig>,
    pub solver: Option<SolverConfig>,
    pub tensors: Option<TensorConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    None,
    Disc,
    Rectangle,
}

fn default_robin_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub shape: ShapeKind,
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    /// Disc radius from a grain volume fraction, instead of `radius`.
    pub volume_fraction: Option<f64>,
    pub min: Option<[f64; 2]>,
    pub max: Option<[f64; 2]>,
    pub resolution: usize,
    #[serde(default = "default_robin_fraction")]
    pub robin_fraction: f64,
    /// Period of the micro run.
    pub epsilon: Option<f64>,
    /// Periods of the convergence study.
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    X,
    Y,
}

/// A coefficient: a number or `{ mean, amplitude, axis }` for a layered field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldInput {
    Constant(f64),
    Layered { mean: f64, amplitude: f64, axis: AxisName },
}

impl FieldInput {
    fn field(self) -> CoefficientField {
        match self {
            FieldInput::Constant(c) => CoefficientField::Constant(c),
            FieldInput::Layered { mean, amplitude, axis } => {
                CoefficientField::Layered { mean, amplitude, axis: if axis == AxisName::X { Axis::X } else { Axis::Y } }
            }
        }
    }

    fn is_zero(self) -> bool {
        matches!(self, FieldInput::Constant(c) if c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub kappa: FieldInput,
    #[serde(default = "zero_field")]
    pub tau: FieldInput,
    pub d: Vec<FieldInput>,
    pub dufour: Option<Vec<FieldInput>>,
    #[serde(default)]
    pub g0: f64,
}

fn zero_field() -> FieldInput {
    FieldInput::Constant(0.0)
}

/// β as a constant, a full matrix, or a named preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaInput {
    Constant(f64),
    Matrix(Vec<Vec<f64>>),
    Preset { preset: KernelPreset, c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsConfig {
    pub beta: BetaInput,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Truncation threshold M; automatic when absent.
    pub threshold: Option<f64>,
}

/// Initial profile on the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    Gaussian { base: f64, amplitude: f64, center: [f64; 2], width: f64 },
    Cosine { base: f64, amplitude: f64, kx: f64, ky: f64 },
    /// `base + amplitude·Σ c_k cos(πm x) cos(πn y)` with Σ|c_k| = 1, seeded.
    Random { base: f64, amplitude: f64, seed: u64, modes: usize },
}

impl Profile {
    fn validate(&self, name: &str) -> Result<()> {
        let min = match *self {
            Profile::Constant { value } => value,
            Profile::Gaussian { base, amplitude, width, .. } => {
                if !(width > 0.0) {
                    return Err(Error::param(format!("{name}.width"), "must be positive"));
                }
                base + amplitude.min(0.0)
            }
            Profile::Cosine { base, amplitude, .. } | Profile::Random { base, amplitude, .. } => base - amplitude.abs(),
        };
        if !(min >= 0.0) || !min.is_finite() {
            return Err(Error::param(name, "initial data must be nonnegative"));
        }
        if let Profile::Random { modes: 0, .. } = self {
            return Err(Error::param(format!("{name}.modes"), "must be at least 1"));
        }
        Ok(())
    }

    /// Values at the centers of the pore cells of `grid`.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let pts = (0..grid.len()).map(|p| grid.center(p));
        match *self {
            Profile::Constant { value } => vec![value; grid.len()],
            Profile::Gaussian { base, amplitude, center, width } => pts
                .map(|[x, y]| base + amplitude * (-((x - center[0]).powi(2) + (y - center[1]).powi(2)) / (width * width)).exp())
                .collect(),
            Profile::Cosine { base, amplitude, kx, ky } => pts.map(|[x, y]| base + amplitude * (kx * PI * x).cos() * (ky * PI * y).cos()).collect(),
            Profile::Random { base, amplitude, seed, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut terms: Vec<(f64, f64, f64)> =
                    (0..modes).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64)).collect();
                let total: f64 = terms.iter().map(|t| t.0.abs()).sum();
                if total > 0.0 {
                    terms.iter_mut().for_each(|t| t.0 /= total);
                }
                pts.map(|[x, y]| base + amplitude * terms.iter().map(|&(c, m, n)| c * (m * PI * x).cos() * (n * PI * y).cos()).sum::<f64>())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub theta: Profile,
    pub u: Vec<Profile>,
    /// Uniform initial deposits, one per species; zero when absent.
    pub v: Option<Vec<f64>>,
}

fn default_fp_tol() -> f64 {
    1e-10
}
fn default_fp_max() -> usize {
    50
}
fn default_linear_tol() -> f64 {
    1e-10
}
fn default_macro_resolution() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "default_fp_max")]
    pub fp_max: usize,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
    #[serde(default = "default_macro_resolution")]
    pub macro_resolution: usize,
    /// Mollifier radius; four cells of the reference grid when absent.
    pub delta: Option<f64>,
}

/// Explicit effective coefficients for macro runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorConfig {
    /// A tensor CSV written by a cell run, relative to the config file.
    pub file: Option<String>,
    pub k: Option<Mat2>,
    pub t: Option<Mat2>,
    pub d: Option<Vec<Mat2>>,
    pub f: Option<Vec<Mat2>>,
    #[serde(default)]
    pub g_robin: f64,
    #[serde(default = "one")]
    pub pore_area: f64,
    #[serde(default)]
    pub perimeter: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Snapshot every k steps; 0 writes only the first and last.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_true")]
    pub vtk: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { snapshot_every: 0, vtk: true }
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str, mode: Mode) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("section [{name}] is required by mode `{mode}`")))
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be nonnegative, got {x}")))
    }
}

fn field_lower(name: &str, f: FieldInput, strict: bool) -> Result<()> {
    let lo = f.field().lower_bound();
    if strict {
        positive(name, lo).map_err(|_| Error::param(name, format!("must be bounded below by a positive constant, infimum {lo}")))
    } else {
        nonnegative(name, lo)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical TOML of the parsed config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Checks everything `mode` needs.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::Config(format!("config is for mode `{m}` but `{mode}` was requested")));
            }
        }
        let needs_cell = mode != Mode::Macro || self.tensors.is_none();
        let ns = if needs_cell {
            let g = section(&self.geometry, "geometry", mode)?;
            self.unit_cell_shape()?;
            if g.resolution < MIN_CELL_RESOLUTION {
                return Err(Error::param("geometry.resolution", format!("must be at least {MIN_CELL_RESOLUTION}, got {}", g.resolution)));
            }
            if !(0.0..=1.0).contains(&g.robin_fraction) {
                return Err(Error::param("geometry.robin_fraction", format!("must lie in [0, 1], got {}", g.robin_fraction)));
            }
            let c = section(&self.coefficients, "coefficients", mode)?;
            field_lower("coefficients.kappa", c.kappa, true)?;
            for (i, d) in c.d.iter().enumerate() {
                field_lower(&format!("coefficients.d[{}]", i + 1), *d, true)?;
            }
            if let Some(df) = &c.dufour {
                if df.len() != c.d.len() {
                    return Err(Error::param("coefficients.dufour", format!("{} entries for {} species", df.len(), c.d.len())));
                }
            }
            nonnegative("coefficients.g0", c.g0)?;
            c.d.len()
        } else {
            let t = self.tensors.as_ref().expect("checked above");
            match (&t.file, &t.d) {
                (Some(_), _) => 0,
                (None, Some(d)) => d.len(),
                (None, None) => return Err(Error::param("tensors", "give either `file` or the entries `k` and `d`")),
            }
        };
        if ns != 0 && ns < 2 {
            return Err(Error::param("coefficients.d", format!("need at least 2 species, got {ns}")));
        }
        let k = section(&self.kinetics, "kinetics", mode)?;
        let nk = k.a.len();
        if ns != 0 && nk != ns {
            return Err(Error::param("kinetics.a", format!("{nk} entries for {ns} species")));
        }
        if k.b.len() != nk {
            return Err(Error::param("kinetics.b", format!("{} entries for {nk} species", k.b.len())));
        }
        for i in 0..nk {
            positive(&format!("kinetics.a[{}]", i + 1), k.a[i])?;
            positive(&format!("kinetics.b[{}]", i + 1), k.b[i])?;
        }
        if let Some(m) = k.threshold {
            positive("kinetics.threshold", m)?;
        }
        self.kernel()?;
        if mode == Mode::Cell {
            return Ok(());
        }
        let s = section(&self.solver, "solver", mode)?;
        positive("solver.dt", s.dt)?;
        positive("solver.t_end", s.t_end)?;
        positive("solver.fp_tol", s.fp_tol)?;
        positive("solver.linear_tol", s.linear_tol)?;
        if s.fp_max == 0 {
            return Err(Error::param("solver.fp_max", "must be at least 1"));
        }
        if let Some(d) = s.delta {
            positive("solver.delta", d)?;
        }
        let init = section(&self.initial, "initial", mode)?;
        init.theta.validate("initial.theta")?;
        if init.u.len() != nk {
            return Err(Error::param("initial.u", format!("{} profiles for {nk} species", init.u.len())));
        }
        for (i, p) in init.u.iter().enumerate() {
            p.validate(&format!("initial.u[{}]", i + 1))?;
        }
        if let Some(v) = &init.v {
            if v.len() != nk {
                return Err(Error::param("initial.v", format!("{} values for {nk} species", v.len())));
            }
            for (i, &x) in v.iter().enumerate() {
                nonnegative(&format!("initial.v[{}]", i + 1), x)?;
            }
        }
        let g = self.geometry.as_ref();
        match mode {
            Mode::Micro => {
                let e = g.and_then(|g| g.epsilon).ok_or_else(|| Error::param("geometry.epsilon", "required by mode `micro`"))?;
                positive("geometry.epsilon", e)?;
            }
            Mode::Converge => {
                let es = g.and_then(|g| g.epsilons.clone()).unwrap_or_else(|| vec![0.25, 0.125, 0.0625]);
                if es.is_empty() {
                    return Err(Error::param("geometry.epsilons", "must not be empty"));
                }
                for (i, &e) in es.iter().enumerate() {
                    positive(&format!("geometry.epsilons[{}]", i + 1), e)?;
                }
                if s.macro_resolution < 2 {
                    return Err(Error::param("solver.macro_resolution", "must be at least 2"));
                }
            }
            Mode::Macro => {
                if s.macro_resolution < 2 {
                    return Err(Error::param("solver.macro_resolution", "must be at least 2"));
                }
            }
            Mode::Cell => {}
        }
        Ok(())
    }

    fn unit_cell_shape(&self) -> Result<GrainShape> {
        let g = self.geometry.as_ref().ok_or_else(|| Error::Config("section [geometry] is missing".into()))?;
        Ok(match g.shape {
            ShapeKind::None => GrainShape::None,
            ShapeKind::Disc => {
                let center = g.center.unwrap_or([0.5, 0.5]);
                let radius = match (g.radius, g.volume_fraction) {
                    (Some(r), None) => r,
                    (None, Some(f)) => {
                        if !(f > 0.0 && f < 1.0) {
                            return Err(Error::param("geometry.volume_fraction", format!("must lie in (0, 1), got {f}")));
                        }
                        (f / PI).sqrt()
                    }
                    _ => return Err(Error::param("geometry.radius", "give exactly one of `radius` and `volume_fraction`")),
                };
                GrainShape::Disc { center, radius }
            }
            ShapeKind::Rectangle => {
                let min = g.min.ok_or_else(|| Error::param("geometry.min", "required for a rectangle"))?;
                let max = g.max.ok_or_else(|| Error::param("geometry.max", "required for a rectangle"))?;
                GrainShape::Rectangle { min, max }
            }
        })
    }

    pub fn unit_cell(&self) -> Result<UnitCell> {
        let g = self.geometry.as_ref().ok_or_else(|| Error::Config("section [geometry] is missing".into()))?;
        build_unit_cell(self.unit_cell_shape()?, g.resolution, g.robin_fraction)
    }

    pub fn cell_coefficients(&self) -> Result<CellCoefficients> {
        let g = self.geometry.as_ref().ok_or_else(|| Error::Config("section [geometry] is missing".into()))?;
        let c = self.coefficients.as_ref().ok_or_else(|| Error::Config("section [coefficients] is missing".into()))?;
        let d: Vec<CoefficientField> = c.d.iter().map(|f| f.field()).collect();
        let dufour: Vec<CoefficientField> = match &c.dufour {
            Some(v) => v.iter().map(|f| f.field()).collect(),
            None => vec![CoefficientField::Constant(0.0); d.len()],
        };
        CellCoefficients::sample(g.resolution, &c.kappa.field(), &c.tau.field(), &d, &dufour)
    }

    /// Whether any cross-diffusion coefficient is nonzero.
    pub fn coupled(&self) -> bool {
        self.coefficients.as_ref().is_some_and(|c| !c.tau.is_zero() || c.dufour.iter().flatten().any(|f| !f.is_zero()))
    }

    pub fn g0(&self) -> f64 {
        self.coefficients.as_ref().map_or(0.0, |c| c.g0)
    }

    pub fn kernel(&self) -> Result<CoagulationKernel> {
        let k = self.kinetics.as_ref().ok_or_else(|| Error::Config("section [kinetics] is missing".into()))?;
        let n = k.a.len();
        let m = k.threshold.unwrap_or(1.0);
        let prefix = |e: Error| match e {
            Error::Parameter { name, reason } => Error::Parameter { name: format!("kinetics.{name}"), reason },
            other => other,
        };
        match &k.beta {
            BetaInput::Constant(c) => CoagulationKernel::new(n, vec![*c; n * n], m),
            BetaInput::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::param("kinetics.beta", format!("must be a {n}×{n} matrix")));
                }
                CoagulationKernel::new(n, rows.concat(), m)
            }
            BetaInput::Preset { preset, c } => CoagulationKernel::preset(n, *preset, *c, m),
        }
        .map_err(prefix)
    }

    pub fn deposition(&self) -> Result<DepositionParams> {
        let k = self.kinetics.as_ref().ok_or_else(|| Error::Config("section [kinetics] is missing".into()))?;
        DepositionParams::new(k.a.clone(), k.b.clone())
    }

    pub fn threshold(&self) -> Option<f64> {
        self.kinetics.as_ref().and_then(|k| k.threshold)
    }

    pub fn stepper_options(&self) -> Result<StepperOptions> {
        let s = self.solver.as_ref().ok_or_else(|| Error::Config("section [solver] is missing".into()))?;
        Ok(StepperOptions { dt: s.dt, fp_tol: s.fp_tol, fp_max: s.fp_max, linear_tol: s.linear_tol })
    }

    /// Explicit tensors from `[tensors]`, reading `file` relative to `base`.
    pub fn explicit_tensors(&self, base: &Path) -> Result<Option<EffectiveTensors>> {
        let Some(t) = &self.tensors else { return Ok(None) };
        if let Some(file) = &t.file {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("tensors.file {}: {e}", path.display())))?;
            return EffectiveTensors::from_csv(&text).map(Some);
        }
        let k = t.k.ok_or_else(|| Error::param("tensors.k", "required when no file is given"))?;
        let d = t.d.clone().ok_or_else(|| Error::param("tensors.d", "required when no file is given"))?;
        let n = d.len();
        let zero = [[0.0; 2]; 2];
        let f = t.f.clone().unwrap_or_else(|| vec![zero; n]);
        if f.len() != n {
            return Err(Error::param("tensors.f", format!("{} entries for {n} species", f.len())));
        }
        positive("tensors.pore_area", t.pore_area)?;
        nonnegative("tensors.perimeter", t.perimeter)?;
        nonnegative("tensors.g_robin", t.g_robin)?;
        let dep = self.deposition()?;
        let s = t.perimeter / t.pore_area;
        Ok(Some(EffectiveTensors {
            k,
            k0: (k[0][0] + k[1][1]) / 2.0,
            t: t.t.unwrap_or(zero),
            d,
            f,
            a: dep.a.iter().map(|a| a * s).collect(),
            b: dep.b.iter().map(|b| b * s).collect(),
            g_robin: t.g_robin,
            pore_area: t.pore_area,
            perimeter: t.perimeter,
            robin_perimeter: 0.0,
            asymmetry: 0.0,
        }))
    }
}
