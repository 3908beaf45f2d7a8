//! Experiment driver: a JSON configuration turned into a mesh, model, initial
//! data and a stepping loop, with monitor/VTK output and convergence ladders.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::Assembler;
use crate::diagnostics::{eoc, error_norms, mean_radius, monitor, h_proxy, ErrorNorms, MonitorRow, MonitorWriter, RadialSolution};
use crate::error::{Error, Result};
use crate::geometry::{build_initial_data, U0Preset};
use crate::mesh::{surface_mesh, write_off, write_vtk, write_vtk_quadratic, Field, ImplicitSurface, SurfaceKind, SurfaceMesh};
use crate::model::{FlowModel, ModelSpec};
use crate::stepper::{bootstrap_exact, bootstrap_substep, BootstrapMode, FlowState, History, Scheme, StepOptions, Stepper, MAX_BDF_ORDER};
use crate::vec3::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Run,
    ConvergeSpace,
    ConvergeTime,
}

/// Refinement ladders for the convergence modes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ladder {
    /// Mesh levels for `converge-space`.
    pub levels: Vec<u32>,
    /// Step sizes for `converge-time`.
    pub taus: Vec<f64>,
}

/// One experiment, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub surface: SurfaceKind,
    #[serde(default = "default_level")]
    pub level: u32,
    #[serde(default = "default_two")]
    pub degree: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub model: ModelSpec,
    /// Initial concentration; the per-surface default when absent.
    #[serde(default)]
    pub initial_u: Option<U0Preset>,
    #[serde(default = "default_two")]
    pub q: usize,
    pub tau: f64,
    pub t_end: f64,
    /// VTK snapshot every this many steps; 0 disables snapshots.
    #[serde(default)]
    pub output_every: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub bootstrap: BootstrapMode,
    #[serde(default)]
    pub step: StepOptions,
    #[serde(default)]
    pub ladder: Ladder,
}

fn default_level() -> u32 {
    3
}

fn default_two() -> usize {
    2
}

fn default_scheme() -> Scheme {
    Scheme::P1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

impl ExperimentConfig {
    /// Radial shrinking-sphere setup for the gradient-flow model.
    pub fn radial(alpha: f64, level: u32, tau: f64, t_end: f64) -> Self {
        Self {
            surface: SurfaceKind::Sphere { radius: 1.0 },
            level,
            degree: 2,
            scheme: Scheme::P1,
            model: ModelSpec::GradientFlow { alpha, d0: 1.0 },
            initial_u: Some(U0Preset::Constant { value: 1.0 }),
            q: 2,
            tau,
            t_end,
            output_every: 0,
            output_dir: default_output_dir(),
            mode: Mode::Run,
            bootstrap: BootstrapMode::Exact,
            step: StepOptions::default(),
            ladder: Ladder::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !matches!(self.degree, 1 | 2) {
            return bad(format!("degree must be 1 or 2, got {}", self.degree));
        }
        if !(1..=MAX_BDF_ORDER).contains(&self.q) {
            return bad(format!("q must be in 1..={MAX_BDF_ORDER}, got {}", self.q));
        }
        ImplicitSurface::new(self.surface).map_err(|e| Error::Config(e.to_string()))?;
        self.model.build().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = &self.initial_u {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let needs_radial = self.mode != Mode::Run || self.bootstrap == BootstrapMode::Exact;
        if needs_radial && self.radial_solution().is_none() {
            return bad("convergence modes and exact bootstrap need the radial setup: a sphere, the gradient-flow model and a constant initial concentration".into());
        }
        match self.mode {
            Mode::ConvergeSpace if self.ladder.levels.len() < 2 => bad("converge-space needs at least two ladder levels".into()),
            Mode::ConvergeTime if self.ladder.taus.len() < 2 => bad("converge-time needs at least two ladder step sizes".into()),
            Mode::ConvergeTime if self.ladder.taus.iter().any(|&t| !(t > 0.0)) => bad("ladder step sizes must be positive".into()),
            _ => Ok(()),
        }
    }

    pub fn initial_preset(&self) -> U0Preset {
        self.initial_u.unwrap_or_else(|| U0Preset::default_for(&self.surface))
    }

    /// Exact reference solution when the setup is radially symmetric.
    pub fn radial_solution(&self) -> Option<RadialSolution> {
        match (self.surface, self.model, self.initial_preset()) {
            (SurfaceKind::Sphere { radius }, ModelSpec::GradientFlow { alpha, .. }, U0Preset::Constant { value }) => {
                RadialSolution::new(radius, value, alpha, 2.0).ok()
            }
            _ => None,
        }
    }

    /// Number of steps; `t_end` must be a multiple of `tau` up to rounding.
    pub fn step_count(&self) -> Result<usize> {
        let n = (self.t_end / self.tau).round();
        if n < 1.0 || (n * self.tau - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Config(format!(
                "t_end = {} is not a positive multiple of tau = {}",
                self.t_end, self.tau
            )));
        }
        Ok(n as usize)
    }
}

/// A configured experiment in progress.
#[derive(Debug)]
pub struct Simulation {
    config: ExperimentConfig,
    mesh: SurfaceMesh,
    stepper: Stepper,
    history: History,
    radial: Option<RadialSolution>,
    steps_done: usize,
}

impl Simulation {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let surface = ImplicitSurface::new(config.surface)?;
        let mesh = surface_mesh(&surface, config.level, config.degree)?;
        let model = config.model.build()?;
        let stepper = Stepper::new(&mesh, model.clone(), config.scheme, config.q, config.tau, config.step)?;
        let radial = config.radial_solution();
        let with_h = config.scheme == Scheme::P2;
        let history = match config.bootstrap {
            BootstrapMode::Exact => {
                let sol = radial.ok_or_else(|| Error::Unsupported("exact bootstrap needs the radial setup".into()))?;
                bootstrap_exact(&stepper, |t| sol.exact_state(&mesh.nodes, t, with_h))?
            }
            BootstrapMode::Substep { log2_refinement } => {
                let preset = config.initial_preset();
                let init = build_initial_data(&mesh, &surface, model.as_ref(), |p| preset.value(p))?;
                let state = FlowState::new(0.0, init.x, init.n, init.v, init.u, with_h.then_some(init.h))?;
                bootstrap_substep(&stepper, state, log2_refinement)?
            }
        };
        Ok(Self {
            config: config.clone(),
            mesh,
            stepper,
            history,
            radial,
            steps_done: config.q - 1,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn assembler(&self) -> &Assembler {
        self.stepper.assembler()
    }

    pub fn model(&self) -> &dyn FlowModel {
        self.stepper.model()
    }

    pub fn radial(&self) -> Option<&RadialSolution> {
        self.radial.as_ref()
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn state(&self) -> &FlowState {
        self.history.latest().expect("history is never empty")
    }

    /// Index of the newest level.
    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn is_finished(&self) -> Result<bool> {
        Ok(self.steps_done >= self.config.step_count()?)
    }

    pub fn advance(&mut self) -> Result<()> {
        self.stepper.step(&mut self.history)?;
        self.steps_done += 1;
        Ok(())
    }

    pub fn monitor(&self) -> Result<MonitorRow> {
        monitor(self.assembler(), self.model(), self.state())
    }

    /// Errors of the newest level against the radial solution.
    pub fn errors(&self) -> Result<ErrorNorms> {
        let sol = self
            .radial
            .as_ref()
            .ok_or_else(|| Error::Unsupported("error norms need the radial setup".into()))?;
        error_norms(self.assembler(), self.state(), sol, &self.mesh.nodes)
    }

    /// Nodal fields written to snapshots.
    pub fn fields(&self, s: &FlowState) -> Result<Vec<Field>> {
        Ok(vec![
            Field::scalar("u", s.u.clone()),
            Field::scalar("V", s.v.clone()),
            Field::scalar("H", h_proxy(self.model(), s)?),
            Field::scalar("normal_length", s.n.iter().map(|&n| norm(n)).collect()),
            Field::vector("normal", s.n.clone()),
        ])
    }
}

/// Outcome of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub t: f64,
    pub mean_radius: f64,
    pub rows: Vec<MonitorRow>,
    /// Largest errors over all levels, radial setup only.
    pub max_errors: Option<ErrorNorms>,
    pub exact_radius: Option<f64>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn last_row(&self) -> &MonitorRow {
        self.rows.last().expect("at least one monitor row")
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.last_row();
        writeln!(f, "steps        {}", self.steps)?;
        writeln!(f, "t            {:.6}", self.t)?;
        writeln!(f, "mean radius  {:.9}", self.mean_radius)?;
        if let Some(e) = self.exact_radius {
            writeln!(f, "exact radius {e:.9}")?;
        }
        writeln!(f, "mass         {:.9e}", r.mass)?;
        writeln!(f, "energy       {:.9e}", r.energy)?;
        writeln!(f, "u range      [{:.6e}, {:.6e}]", r.u_min, r.u_max)?;
        writeln!(f, "H min        {:.6e}", r.h_min)?;
        write!(f, "area         {:.9e}", r.area)?;
        if let Some(e) = &self.max_errors {
            for (name, v) in ErrorNorms::NAMES.iter().zip(e.as_array()) {
                write!(f, "\nmax error {name:<2} {v:.6e}")?;
            }
        }
        Ok(())
    }
}

fn write_snapshot(sim: &Simulation, state: &FlowState, dir: &Path, index: usize) -> Result<PathBuf> {
    let path = dir.join(format!("snapshot_{index:05}.vtk"));
    write_vtk(&path, sim.mesh(), &state.x, &sim.fields(state)?)?;
    Ok(path)
}

/// Runs `config` to `t_end`. With `out_dir`, writes `monitor.csv` (one row per
/// level) and VTK snapshots every `output_every` steps.
pub fn run(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunSummary> {
    let mut sim = Simulation::new(config)?;
    let steps = config.step_count()?;
    let mut files = Vec::new();
    let mut writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("monitor.csv");
            let w = MonitorWriter::new(BufWriter::new(fs::File::create(&path)?))?;
            files.push(path);
            Some(w)
        }
        None => None,
    };
    let track_errors = sim.radial().is_some();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut max_errors = ErrorNorms::default();

    // start levels first, oldest to newest
    let start: Vec<FlowState> = sim.history().levels().map(|l| l.state.clone()).collect();
    for (i, st) in start.iter().enumerate() {
        let row = monitor(sim.assembler(), sim.model(), st)?;
        if let Some(w) = writer.as_mut() {
            w.write(&row)?;
        }
        if track_errors {
            let e = error_norms(sim.assembler(), st, sim.radial().unwrap(), &sim.mesh().nodes)?;
            max_errors = max_errors.max(&e);
        }
        rows.push(row);
        if let Some(dir) = out_dir {
            if config.output_every > 0 && i % config.output_every == 0 {
                files.push(write_snapshot(&sim, st, dir, i)?);
            }
        }
    }

    while sim.steps_done() < steps {
        sim.advance()?;
        let row = sim.monitor()?;
        if let Some(w) = writer.as_mut() {
            w.write(&row)?;
        }
        if track_errors {
            max_errors = max_errors.max(&sim.errors()?);
        }
        rows.push(row);
        if let Some(dir) = out_dir {
            let n = sim.steps_done();
            if config.output_every > 0 && (n % config.output_every == 0 || n == steps) {
                files.push(write_snapshot(&sim, sim.state(), dir, n)?);
            }
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let st = sim.state();
    let exact_radius = match sim.radial() {
        Some(sol) => Some(sol.radius(st.t)?),
        None => None,
    };
    Ok(RunSummary {
        steps,
        t: st.t,
        mean_radius: mean_radius(&st.x),
        rows,
        max_errors: track_errors.then_some(max_errors),
        exact_radius,
        files,
    })
}

/// One rung of a convergence ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct Rung {
    /// Mesh width or step size.
    pub size: f64,
    pub level: u32,
    pub tau: f64,
    pub errors: ErrorNorms,
}

/// Errors per rung and experimental orders between successive rungs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub mode: Mode,
    pub rungs: Vec<Rung>,
    /// `eocs[i][v]`: order between rungs `i` and `i+1` for variable `v`.
    pub eocs: Vec<[f64; 5]>,
}

impl ConvergenceTable {
    pub fn eoc_of(&self, var: &str) -> Option<Vec<f64>> {
        let k = ErrorNorms::NAMES.iter().position(|&n| n == var)?;
        Some(self.eocs.iter().map(|e| e[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let size = if self.mode == Mode::ConvergeTime { "tau" } else { "h" };
        let mut s = format!("level,tau,{size}");
        for n in ErrorNorms::NAMES {
            s.push_str(&format!(",err_{n},eoc_{n}"));
        }
        s.push('\n');
        for (i, r) in self.rungs.iter().enumerate() {
            s.push_str(&format!("{},{:.16e},{:.16e}", r.level, r.tau, r.size));
            for (k, e) in r.errors.as_array().iter().enumerate() {
                match i.checked_sub(1).map(|j| self.eocs[j][k]) {
                    Some(o) => s.push_str(&format!(",{e:.16e},{o:.16e}")),
                    None => s.push_str(&format!(",{e:.16e},")),
                }
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let size = if self.mode == Mode::ConvergeTime { "tau" } else { "h" };
        write!(f, "{:>5} {:>11}", "level", size)?;
        for n in ErrorNorms::NAMES {
            write!(f, " {:>11} {:>5}", format!("err {n}"), "eoc")?;
        }
        for (i, r) in self.rungs.iter().enumerate() {
            write!(f, "\n{:>5} {:>11.4e}", r.level, r.size)?;
            for (k, e) in r.errors.as_array().iter().enumerate() {
                match i.checked_sub(1).map(|j| self.eocs[j][k]) {
                    Some(o) => write!(f, " {e:>11.4e} {o:>5.2}")?,
                    None => write!(f, " {e:>11.4e} {:>5}", "-")?,
                }
            }
        }
        Ok(())
    }
}

fn rung(config: &ExperimentConfig, mode: Mode) -> Result<Rung> {
    let summary = run(config, None)?;
    let size = match mode {
        Mode::ConvergeTime => config.tau,
        _ => {
            let surface = ImplicitSurface::new(config.surface)?;
            surface_mesh(&surface, config.level, config.degree)?.mesh_width()
        }
    };
    Ok(Rung {
        size,
        level: config.level,
        tau: config.tau,
        errors: summary.max_errors.expect("radial setup checked by validate"),
    })
}

/// Runs the ladder of a `converge-space` or `converge-time` config. Rungs run
/// on separate threads; results do not depend on scheduling.
pub fn converge(config: &ExperimentConfig) -> Result<ConvergenceTable> {
    config.validate()?;
    let configs: Vec<ExperimentConfig> = match config.mode {
        Mode::ConvergeSpace => config
            .ladder
            .levels
            .iter()
            .map(|&level| ExperimentConfig {
                level,
                mode: Mode::Run,
                ..config.clone()
            })
            .collect(),
        Mode::ConvergeTime => config
            .ladder
            .taus
            .iter()
            .map(|&tau| ExperimentConfig {
                tau,
                mode: Mode::Run,
                ..config.clone()
            })
            .collect(),
        Mode::Run => return Err(Error::Config("converge needs mode converge-space or converge-time".into())),
    };
    let rungs: Vec<Rung> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || rung(c, config.mode))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("convergence rung panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let sizes: Vec<f64> = rungs.iter().map(|r| r.size).collect();
    let mut eocs = vec![[f64::NAN; 5]; rungs.len() - 1];
    for k in 0..5 {
        let errs: Vec<f64> = rungs.iter().map(|r| r.errors.as_array()[k]).collect();
        // per-pair so that a zero entry only blanks its own pairs
        for i in 0..rungs.len() - 1 {
            if let Ok(o) = eoc(&errs[i..i + 2], &sizes[i..i + 2]) {
                eocs[i][k] = o[0];
            }
        }
    }
    Ok(ConvergenceTable {
        mode: config.mode,
        rungs,
        eocs,
    })
}

/// Writes the initial mesh of `surface`: OFF for flat meshes (unless the path
/// ends in `.vtk`), quadratic VTK for degree 2.
pub fn meshgen(surface: SurfaceKind, level: u32, degree: usize, out: &Path) -> Result<SurfaceMesh> {
    let surf = ImplicitSurface::new(surface)?;
    let mesh = surface_mesh(&surf, level, degree)?;
    let vtk = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("vtk"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    match (degree, vtk) {
        (1, false) => write_off(out, &mesh)?,
        (1, true) => write_vtk(out, &mesh, &mesh.nodes, &[])?,
        (_, true) => write_vtk_quadratic(out, &mesh, &mesh.nodes, &[])?,
        (_, false) => {
            return Err(Error::Unsupported(
                "OFF holds flat triangles only; use a .vtk path for quadratic meshes".into(),
            ))
        }
    }
    Ok(mesh)
}
