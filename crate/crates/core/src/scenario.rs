//! Scenario plumbing: the flat key-value config format, solver dispatch,
//! and the CSV/manifest writers.
//!
//! Config files are plain text, one `key = value` per line, `#` starts a
//! comment, section membership is spelled with dotted prefixes
//! (`grid.cells_x = 128`). Parsing collects every problem it finds, each
//! tagged with its line number, instead of stopping at the first.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::closure::{
    closure_exact, multipliers_to_moments, MomentState, Multipliers, RegimeTag,
};
use crate::diffusion::{
    advance_diffusion, relaxation_limit_study, steady_state_1d, DiffusionModel, MobilityLaw,
};
use crate::error::{ClosureError, ConfigError, ConfigIssue, RunError, SolverError};
use crate::grid::{BandConfig, Boundary, FieldState, Grid, PotentialField, Species};
use crate::hydro::{
    advance, run_collimation_degenerate, run_collimation_mb, CollimationState, HydroScheme,
};
use crate::tensor::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Hydro,
    CollimationMb,
    CollimationDegenerate,
    Diffusion,
    RelaxationStudy,
    ClosureTable,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Hydro => "hydro",
            SolverKind::CollimationMb => "collimation_mb",
            SolverKind::CollimationDegenerate => "collimation_degenerate",
            SolverKind::Diffusion => "diffusion",
            SolverKind::RelaxationStudy => "relaxation_study",
            SolverKind::ClosureTable => "closure_table",
        }
    }
}

/// Analytic potential descriptor; the field itself is built on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialSpec {
    Zero,
    UniformSlope { slope_x: f64, slope_y: f64 },
    Gaussian { amplitude: f64, center_x: f64, center_y: f64, width: f64 },
    Step { height: f64, position: f64, width: f64 },
}

impl PotentialSpec {
    pub fn build(&self, grid: &Grid) -> PotentialField {
        match *self {
            PotentialSpec::Zero => PotentialField::zero(grid),
            PotentialSpec::UniformSlope { slope_x, slope_y } => {
                PotentialField::uniform_slope(grid, Vec2::new(slope_x, slope_y))
            }
            PotentialSpec::Gaussian { amplitude, center_x, center_y, width } => {
                PotentialField::gaussian_bump(grid, amplitude, (center_x, center_y), width)
            }
            PotentialSpec::Step { height, position, width } => {
                PotentialField::smoothed_step(grid, height, position, width)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Uniform,
    Gaussian,
    Sine,
}

/// Initial data: a named density profile plus uniform velocity and energy.
/// For the collimation solvers `u0` sets the base direction and
/// `angle_amplitude`/`angle_mode` modulate its angle along x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSpec {
    pub profile: ProfileKind,
    pub n0: f64,
    pub u0: Vec2,
    pub e0: f64,
    pub amplitude: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub mode: u32,
    pub angle_amplitude: f64,
    pub angle_mode: u32,
}

impl InitialSpec {
    pub fn density(&self, grid: &Grid, x: f64, y: f64) -> f64 {
        match self.profile {
            ProfileKind::Uniform => self.n0,
            ProfileKind::Gaussian => {
                let dx = x - self.center_x;
                let dy = if grid.is_1d() { 0.0 } else { y - self.center_y };
                self.n0
                    + self.amplitude
                        * (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp()
            }
            ProfileKind::Sine => {
                let k = 2.0 * std::f64::consts::PI * self.mode as f64 / grid.length_x();
                self.n0 * (1.0 + self.amplitude * (k * x).sin())
            }
        }
    }

    pub fn direction(&self, grid: &Grid, x: f64) -> Vec2 {
        let base = self.u0.y.atan2(self.u0.x);
        let k = 2.0 * std::f64::consts::PI * self.angle_mode as f64 / grid.length_x();
        let th = base + self.angle_amplitude * (k * x).sin();
        Vec2::new(th.cos(), th.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSpec {
    pub law: MobilityLaw,
    pub tau0: f64,
    pub temp: f64,
    /// Solve for the zero-flux steady state instead of time marching.
    pub steady: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub taus: Vec<f64>,
    pub temp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub a_min: f64,
    pub a_max: f64,
    pub a_count: usize,
    pub b_count: usize,
    pub temps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub solver: SolverKind,
    pub grid: Grid,
    pub band: BandConfig,
    pub regime: RegimeTag,
    pub scheme: HydroScheme,
    pub potential: PotentialSpec,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub snapshot_every: f64,
    /// Reserved for stochastic scenarios; recorded for reproducibility.
    pub seed: u64,
    /// Physical Fermi speed in m/s; 1.0 keeps everything scaled.
    pub units_c: f64,
    /// Reference temperature in kelvin; 1.0 keeps everything scaled.
    pub units_t_ref: f64,
    pub diffusion: DiffusionSpec,
    pub study: StudySpec,
    pub table: TableSpec,
}

// ---------------------------------------------------------------------------
// Parsing

struct RawConfig {
    entries: HashMap<String, (usize, String)>,
    issues: Vec<ConfigIssue>,
}

impl RawConfig {
    fn from_text(text: &str) -> Self {
        let mut entries: HashMap<String, (usize, String)> = HashMap::new();
        let mut issues = Vec::new();
        for (k, raw_line) in text.lines().enumerate() {
            let line = k + 1;
            let body = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            let Some(eq) = body.find('=') else {
                issues.push(ConfigIssue {
                    line,
                    message: format!("expected `key = value`, got `{body}`"),
                });
                continue;
            };
            let key = body[..eq].trim().to_string();
            let value = body[eq + 1..].trim().to_string();
            if key.is_empty() {
                issues.push(ConfigIssue {
                    line,
                    message: "empty key before `=`".into(),
                });
                continue;
            }
            if let Some((first, _)) = entries.get(&key) {
                issues.push(ConfigIssue {
                    line,
                    message: format!("duplicate key `{key}` (first set at line {first})"),
                });
                continue;
            }
            entries.insert(key, (line, value));
        }
        Self { entries, issues }
    }

    fn issue(&mut self, line: usize, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> (usize, f64) {
        match self.take(key) {
            None => (0, default),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => (line, x),
                _ => {
                    self.issue(line, format!("key `{key}`: expected a finite number, got `{v}`"));
                    (line, default)
                }
            },
        }
    }

    fn f64_req(&mut self, key: &str) -> Option<(usize, f64)> {
        match self.take(key) {
            None => {
                self.issue(0, format!("missing required key `{key}`"));
                None
            }
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Some((line, x)),
                _ => {
                    self.issue(line, format!("key `{key}`: expected a finite number, got `{v}`"));
                    None
                }
            },
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> (usize, usize) {
        match self.take(key) {
            None => (0, default),
            Some((line, v)) => match v.parse::<usize>() {
                Ok(x) => (line, x),
                Err(_) => {
                    self.issue(
                        line,
                        format!("key `{key}`: expected a nonnegative integer, got `{v}`"),
                    );
                    (line, default)
                }
            },
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> u64 {
        match self.take(key) {
            None => default,
            Some((line, v)) => match v.parse::<u64>() {
                Ok(x) => x,
                Err(_) => {
                    self.issue(
                        line,
                        format!("key `{key}`: expected a nonnegative integer, got `{v}`"),
                    );
                    default
                }
            },
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some((line, v)) => match v.as_str() {
                "true" => true,
                "false" => false,
                _ => {
                    self.issue(line, format!("key `{key}`: expected true or false, got `{v}`"));
                    default
                }
            },
        }
    }

    fn f64_list_or(&mut self, key: &str, default: &[f64]) -> (usize, Vec<f64>) {
        match self.take(key) {
            None => (0, default.to_vec()),
            Some((line, v)) => {
                let mut out = Vec::new();
                for piece in v.split(',') {
                    match piece.trim().parse::<f64>() {
                        Ok(x) if x.is_finite() => out.push(x),
                        _ => {
                            self.issue(
                                line,
                                format!(
                                    "key `{key}`: expected comma-separated numbers, got `{}`",
                                    piece.trim()
                                ),
                            );
                            return (line, default.to_vec());
                        }
                    }
                }
                if out.is_empty() {
                    self.issue(line, format!("key `{key}`: empty list"));
                    return (line, default.to_vec());
                }
                (line, out)
            }
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> (usize, T) {
        match self.take(key) {
            None => (0, default),
            Some((line, v)) => {
                for (name, val) in options {
                    if v == *name {
                        return (line, *val);
                    }
                }
                let valid: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.issue(
                    line,
                    format!("key `{key}`: unknown value `{v}`; valid: {}", valid.join(", ")),
                );
                (line, default)
            }
        }
    }

    fn finish(mut self) -> Vec<ConfigIssue> {
        let mut leftovers: Vec<(String, usize)> = self
            .entries
            .drain()
            .map(|(k, (line, _))| (k, line))
            .collect();
        leftovers.sort_by_key(|(_, line)| *line);
        for (key, line) in leftovers {
            self.issues.push(ConfigIssue {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        self.issues.sort_by_key(|i| i.line);
        self.issues
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut raw = RawConfig::from_text(text);

    let (_, solver) = match raw.take("solver") {
        None => {
            raw.issue(0, "missing required key `solver`".into());
            (0, SolverKind::Hydro)
        }
        Some((line, v)) => {
            let options = [
                ("hydro", SolverKind::Hydro),
                ("collimation_mb", SolverKind::CollimationMb),
                ("collimation_degenerate", SolverKind::CollimationDegenerate),
                ("diffusion", SolverKind::Diffusion),
                ("relaxation_study", SolverKind::RelaxationStudy),
                ("closure_table", SolverKind::ClosureTable),
            ];
            match options.iter().find(|(n, _)| v == *n) {
                Some((_, kind)) => (line, *kind),
                None => {
                    let valid: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    raw.issue(
                        line,
                        format!("unknown solver `{v}`; valid: {}", valid.join(", ")),
                    );
                    (line, SolverKind::Hydro)
                }
            }
        }
    };
    let needs_grid = solver != SolverKind::ClosureTable;

    // Grid. The table solver samples multiplier space, not physical space,
    // so its configs may omit the grid entirely.
    let (cx_line, cells_x) = if needs_grid {
        match raw.take("grid.cells_x") {
            None => {
                raw.issue(0, "missing required key `grid.cells_x`".into());
                (0, 8)
            }
            Some((line, v)) => match v.parse::<usize>() {
                Ok(x) => (line, x),
                Err(_) => {
                    raw.issue(line, format!("key `grid.cells_x`: expected an integer, got `{v}`"));
                    (line, 8)
                }
            },
        }
    } else {
        raw.usize_or("grid.cells_x", 8)
    };
    let (cy_line, cells_y) = raw.usize_or("grid.cells_y", 1);
    let (dx_line, dx) = if needs_grid {
        raw.f64_req("grid.dx").map(|(l, v)| (l, v)).unwrap_or((0, 1.0))
    } else {
        raw.f64_or("grid.dx", 1.0)
    };
    let (dy_line, dy) = raw.f64_or("grid.dy", dx);
    let bcs = [("periodic", Boundary::Periodic), ("outflow", Boundary::Outflow)];
    let (_, bc_x) = raw.choice("grid.bc_x", Boundary::Periodic, &bcs);
    let (_, bc_y) = raw.choice("grid.bc_y", Boundary::Periodic, &bcs);
    if needs_grid {
        if cells_x < 4 {
            raw.issue(cx_line, format!("grid.cells_x must be at least 4, got {cells_x}"));
        }
        if cells_y != 1 && cells_y < 4 {
            raw.issue(cy_line, format!("grid.cells_y must be 1 or at least 4, got {cells_y}"));
        }
        if !(dx > 0.0) {
            raw.issue(dx_line, format!("grid.dx must be positive, got {dx}"));
        }
        if !(dy > 0.0) {
            raw.issue(dy_line, format!("grid.dy must be positive, got {dy}"));
        }
    }
    let grid = Grid {
        cells_x: cells_x.max(4),
        cells_y: cells_y.max(1),
        dx: if dx > 0.0 { dx } else { 1.0 },
        dy: if dy > 0.0 { dy } else { 1.0 },
        bc_x,
        bc_y,
    };

    // Band.
    let (_, species) = raw.choice(
        "band.species",
        Species::ElectronUpper,
        &[("electron", Species::ElectronUpper), ("hole", Species::HoleLower)],
    );
    let relaxation_tau = match raw.take("band.relaxation_tau") {
        None => None,
        Some((line, v)) => match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Some(x),
            _ => {
                raw.issue(
                    line,
                    format!("key `band.relaxation_tau`: expected a positive number, got `{v}`"),
                );
                None
            }
        },
    };
    let band = BandConfig { species, relaxation_tau };

    let (_, regime) = raw.choice(
        "regime",
        RegimeTag::Exact,
        &[
            ("exact", RegimeTag::Exact),
            ("maxwell_boltzmann", RegimeTag::MaxwellBoltzmann),
            ("degenerate", RegimeTag::Degenerate),
            ("diffusive", RegimeTag::Diffusive),
        ],
    );

    // Scheme.
    let muscl = raw.bool_or("scheme.muscl", false);
    let (cfl_line, cfl) = raw.f64_or("scheme.cfl", 0.45);
    if !(cfl > 0.0 && cfl <= 0.9) {
        raw.issue(cfl_line, format!("scheme.cfl must lie in (0, 0.9], got {cfl}"));
    }
    let isothermal = match raw.take("scheme.isothermal_temp") {
        None => None,
        Some((line, v)) => match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Some(x),
            _ => {
                raw.issue(
                    line,
                    format!("key `scheme.isothermal_temp`: expected a positive number, got `{v}`"),
                );
                None
            }
        },
    };
    let scheme = HydroScheme {
        regime,
        muscl,
        cfl: if cfl > 0.0 && cfl <= 0.9 { cfl } else { 0.45 },
        isothermal,
    };

    // Potential.
    let domain_cx = 0.5 * grid.length_x();
    let domain_cy = 0.5 * grid.length_y();
    let (_, pot_kind) = raw.choice(
        "potential.kind",
        0usize,
        &[("zero", 0), ("uniform_slope", 1), ("gaussian", 2), ("step", 3)],
    );
    let potential = match pot_kind {
        0 => PotentialSpec::Zero,
        1 => {
            let (_, sx) = raw.f64_or("potential.slope_x", 0.0);
            let (_, sy) = raw.f64_or("potential.slope_y", 0.0);
            PotentialSpec::UniformSlope { slope_x: sx, slope_y: sy }
        }
        2 => {
            let (_, amplitude) = raw.f64_or("potential.amplitude", 0.0);
            let (_, center_x) = raw.f64_or("potential.center_x", domain_cx);
            let (_, center_y) = raw.f64_or("potential.center_y", domain_cy);
            let (w_line, width) = raw.f64_or("potential.width", 1.0);
            if !(width > 0.0) {
                raw.issue(w_line, format!("potential.width must be positive, got {width}"));
            }
            PotentialSpec::Gaussian {
                amplitude,
                center_x,
                center_y,
                width: if width > 0.0 { width } else { 1.0 },
            }
        }
        _ => {
            let (_, height) = raw.f64_or("potential.height", 0.0);
            let (_, position) = raw.f64_or("potential.position", domain_cx);
            let (w_line, width) = raw.f64_or("potential.width", 1.0);
            if !(width > 0.0) {
                raw.issue(w_line, format!("potential.width must be positive, got {width}"));
            }
            PotentialSpec::Step {
                height,
                position,
                width: if width > 0.0 { width } else { 1.0 },
            }
        }
    };

    // Initial data.
    let (_, profile) = raw.choice(
        "initial.profile",
        ProfileKind::Uniform,
        &[
            ("uniform", ProfileKind::Uniform),
            ("gaussian", ProfileKind::Gaussian),
            ("sine", ProfileKind::Sine),
        ],
    );
    let (n0_line, n0) = raw.f64_or("initial.n0", 1.0);
    let (u0x_line, u0x) = raw.f64_or("initial.u0_x", 0.0);
    let (_, u0y) = raw.f64_or("initial.u0_y", 0.0);
    let (e0_line, e0) = raw.f64_or("initial.e0", 3.0);
    let (amp_line, amplitude) = raw.f64_or("initial.amplitude", 0.0);
    let (_, icx) = raw.f64_or("initial.center_x", domain_cx);
    let (_, icy) = raw.f64_or("initial.center_y", domain_cy);
    let (iw_line, iwidth) = raw.f64_or("initial.width", 1.0);
    let (_, mode) = raw.usize_or("initial.mode", 1);
    let (_, angle_amplitude) = raw.f64_or("initial.angle_amplitude", 0.0);
    let (_, angle_mode) = raw.usize_or("initial.angle_mode", 1);

    if !(n0 > 0.0) {
        raw.issue(n0_line, format!("initial.n0 must be positive, got {n0}"));
    }
    if !(e0 > 0.0) {
        raw.issue(e0_line, format!("initial.e0 must be positive, got {e0}"));
    }
    if !(iwidth > 0.0) {
        raw.issue(iw_line, format!("initial.width must be positive, got {iwidth}"));
    }
    let u0 = Vec2::new(u0x, u0y);
    let collimation =
        solver == SolverKind::CollimationMb || solver == SolverKind::CollimationDegenerate;
    if collimation {
        if u0.norm() == 0.0 {
            raw.issue(
                u0x_line,
                "collimation needs a nonzero initial direction (initial.u0_x, initial.u0_y)"
                    .into(),
            );
        }
    } else if u0.norm() >= 1.0 {
        raw.issue(
            u0x_line,
            format!(
                "initial speed violates the subluminal invariant |u| < 1 (|u| = {})",
                u0.norm()
            ),
        );
    }
    match profile {
        ProfileKind::Gaussian => {
            if n0 + amplitude.min(0.0) <= 0.0 {
                raw.issue(
                    amp_line,
                    format!(
                        "gaussian profile dips to n = {}, density must stay positive",
                        n0 + amplitude.min(0.0)
                    ),
                );
            }
        }
        ProfileKind::Sine => {
            if amplitude.abs() >= 1.0 {
                raw.issue(
                    amp_line,
                    format!(
                        "sine profile needs |initial.amplitude| < 1 to keep n positive, got {amplitude}"
                    ),
                );
            }
        }
        ProfileKind::Uniform => {}
    }
    let initial = InitialSpec {
        profile,
        n0,
        u0,
        e0,
        amplitude,
        center_x: icx,
        center_y: icy,
        width: iwidth,
        mode: mode as u32,
        angle_amplitude,
        angle_mode: angle_mode as u32,
    };

    // Horizon and output cadence.
    let needs_time = matches!(
        solver,
        SolverKind::Hydro
            | SolverKind::CollimationMb
            | SolverKind::CollimationDegenerate
            | SolverKind::RelaxationStudy
    ) || (solver == SolverKind::Diffusion && !raw_peek_steady(&raw));
    let t_end = if needs_time {
        match raw.f64_req("t_end") {
            Some((line, v)) => {
                if !(v > 0.0) {
                    raw.issue(line, format!("t_end must be positive, got {v}"));
                    1.0
                } else {
                    v
                }
            }
            None => 1.0,
        }
    } else {
        let (line, v) = raw.f64_or("t_end", 1.0);
        if !(v > 0.0) {
            raw.issue(line, format!("t_end must be positive, got {v}"));
        }
        v.max(f64::MIN_POSITIVE)
    };
    let (se_line, snapshot_every) = raw.f64_or("snapshot_every", 0.0);
    if snapshot_every < 0.0 {
        raw.issue(
            se_line,
            format!("snapshot_every must be zero (final only) or positive, got {snapshot_every}"),
        );
    }
    let seed = raw.u64_or("seed", 0);
    let (uc_line, units_c) = raw.f64_or("units.c", 1.0);
    if !(units_c > 0.0) {
        raw.issue(uc_line, format!("units.c must be positive, got {units_c}"));
    }
    let (ut_line, units_t_ref) = raw.f64_or("units.t_ref", 1.0);
    if !(units_t_ref > 0.0) {
        raw.issue(ut_line, format!("units.t_ref must be positive, got {units_t_ref}"));
    }

    // Diffusion block.
    let (_, law) = raw.choice(
        "diffusion.law",
        MobilityLaw::GeneralFermi,
        &[
            ("general_fermi", MobilityLaw::GeneralFermi),
            ("maxwell_boltzmann", MobilityLaw::MaxwellBoltzmann),
            ("degenerate", MobilityLaw::Degenerate),
        ],
    );
    let (t0_line, tau0) = raw.f64_or("diffusion.tau0", 1.0);
    if !(tau0 > 0.0) {
        raw.issue(t0_line, format!("diffusion.tau0 must be positive, got {tau0}"));
    }
    let (dt_line, dtemp) = raw.f64_or("diffusion.temp", 1.0);
    if !(dtemp > 0.0) {
        raw.issue(dt_line, format!("diffusion.temp must be positive, got {dtemp}"));
    }
    let steady = raw.bool_or("diffusion.steady", false);
    let diffusion = DiffusionSpec {
        law,
        tau0: if tau0 > 0.0 { tau0 } else { 1.0 },
        temp: if dtemp > 0.0 { dtemp } else { 1.0 },
        steady,
    };

    // Study block.
    let (taus_line, taus) = raw.f64_list_or("study.tau_list", &[0.4, 0.2, 0.1, 0.05]);
    if taus.iter().any(|t| !(*t > 0.0)) || taus.windows(2).any(|w| w[1] >= w[0]) {
        raw.issue(
            taus_line,
            "study.tau_list must be positive and strictly decreasing".into(),
        );
    }
    let (st_line, stemp) = raw.f64_or("study.temp", 1.0);
    if !(stemp > 0.0) {
        raw.issue(st_line, format!("study.temp must be positive, got {stemp}"));
    }
    let study = StudySpec {
        taus,
        temp: if stemp > 0.0 { stemp } else { 1.0 },
    };

    // Table block.
    let (_, a_min) = raw.f64_or("table.a_min", -10.0);
    let (amax_line, a_max) = raw.f64_or("table.a_max", 40.0);
    if a_max <= a_min {
        raw.issue(
            amax_line,
            format!("table.a_max must exceed table.a_min, got {a_min}..{a_max}"),
        );
    }
    let (ac_line, a_count) = raw.usize_or("table.a_count", 12);
    if a_count < 2 {
        raw.issue(ac_line, format!("table.a_count must be at least 2, got {a_count}"));
    }
    let (bc_line, b_count) = raw.usize_or("table.b_count", 12);
    if b_count < 2 {
        raw.issue(bc_line, format!("table.b_count must be at least 2, got {b_count}"));
    }
    let (tv_line, temps) = raw.f64_list_or("table.t_values", &[1.0]);
    if temps.iter().any(|t| !(*t > 0.0)) {
        raw.issue(tv_line, "table.t_values must all be positive".into());
    }
    let table = TableSpec {
        a_min,
        a_max: if a_max > a_min { a_max } else { a_min + 1.0 },
        a_count: a_count.max(2),
        b_count: b_count.max(2),
        temps,
    };

    let issues = raw.finish();
    if !issues.is_empty() {
        return Err(ConfigError { issues });
    }
    Ok(ScenarioConfig {
        solver,
        grid,
        band,
        regime,
        scheme,
        potential,
        initial,
        t_end,
        snapshot_every,
        seed,
        units_c,
        units_t_ref,
        diffusion,
        study,
        table,
    })
}

/// Whether `diffusion.steady = true` without consuming the key; the horizon
/// requirement depends on it.
fn raw_peek_steady(raw: &RawConfig) -> bool {
    raw.entries
        .get("diffusion.steady")
        .map(|(_, v)| v == "true")
        .unwrap_or(false)
}

// ---------------------------------------------------------------------------
// Manifest

fn push_kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {value}");
}

/// The resolved configuration in canonical key order; parsing this text
/// yields an equivalent ScenarioConfig.
pub fn to_manifest_text(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    push_kv(&mut s, "solver", cfg.solver.name());
    push_kv(&mut s, "grid.cells_x", cfg.grid.cells_x);
    push_kv(&mut s, "grid.cells_y", cfg.grid.cells_y);
    push_kv(&mut s, "grid.dx", cfg.grid.dx);
    push_kv(&mut s, "grid.dy", cfg.grid.dy);
    let bc_name = |b: Boundary| match b {
        Boundary::Periodic => "periodic",
        Boundary::Outflow => "outflow",
    };
    push_kv(&mut s, "grid.bc_x", bc_name(cfg.grid.bc_x));
    push_kv(&mut s, "grid.bc_y", bc_name(cfg.grid.bc_y));
    push_kv(
        &mut s,
        "band.species",
        match cfg.band.species {
            Species::ElectronUpper => "electron",
            Species::HoleLower => "hole",
        },
    );
    if let Some(tau) = cfg.band.relaxation_tau {
        push_kv(&mut s, "band.relaxation_tau", tau);
    }
    push_kv(
        &mut s,
        "regime",
        match cfg.regime {
            RegimeTag::Exact => "exact",
            RegimeTag::MaxwellBoltzmann => "maxwell_boltzmann",
            RegimeTag::Degenerate => "degenerate",
            RegimeTag::Diffusive => "diffusive",
        },
    );
    push_kv(&mut s, "scheme.muscl", cfg.scheme.muscl);
    push_kv(&mut s, "scheme.cfl", cfg.scheme.cfl);
    if let Some(t) = cfg.scheme.isothermal {
        push_kv(&mut s, "scheme.isothermal_temp", t);
    }
    match cfg.potential {
        PotentialSpec::Zero => push_kv(&mut s, "potential.kind", "zero"),
        PotentialSpec::UniformSlope { slope_x, slope_y } => {
            push_kv(&mut s, "potential.kind", "uniform_slope");
            push_kv(&mut s, "potential.slope_x", slope_x);
            push_kv(&mut s, "potential.slope_y", slope_y);
        }
        PotentialSpec::Gaussian { amplitude, center_x, center_y, width } => {
            push_kv(&mut s, "potential.kind", "gaussian");
            push_kv(&mut s, "potential.amplitude", amplitude);
            push_kv(&mut s, "potential.center_x", center_x);
            push_kv(&mut s, "potential.center_y", center_y);
            push_kv(&mut s, "potential.width", width);
        }
        PotentialSpec::Step { height, position, width } => {
            push_kv(&mut s, "potential.kind", "step");
            push_kv(&mut s, "potential.height", height);
            push_kv(&mut s, "potential.position", position);
            push_kv(&mut s, "potential.width", width);
        }
    }
    push_kv(
        &mut s,
        "initial.profile",
        match cfg.initial.profile {
            ProfileKind::Uniform => "uniform",
            ProfileKind::Gaussian => "gaussian",
            ProfileKind::Sine => "sine",
        },
    );
    push_kv(&mut s, "initial.n0", cfg.initial.n0);
    push_kv(&mut s, "initial.u0_x", cfg.initial.u0.x);
    push_kv(&mut s, "initial.u0_y", cfg.initial.u0.y);
    push_kv(&mut s, "initial.e0", cfg.initial.e0);
    push_kv(&mut s, "initial.amplitude", cfg.initial.amplitude);
    push_kv(&mut s, "initial.center_x", cfg.initial.center_x);
    push_kv(&mut s, "initial.center_y", cfg.initial.center_y);
    push_kv(&mut s, "initial.width", cfg.initial.width);
    push_kv(&mut s, "initial.mode", cfg.initial.mode);
    push_kv(&mut s, "initial.angle_amplitude", cfg.initial.angle_amplitude);
    push_kv(&mut s, "initial.angle_mode", cfg.initial.angle_mode);
    push_kv(&mut s, "t_end", cfg.t_end);
    push_kv(&mut s, "snapshot_every", cfg.snapshot_every);
    push_kv(&mut s, "seed", cfg.seed);
    push_kv(&mut s, "units.c", cfg.units_c);
    push_kv(&mut s, "units.t_ref", cfg.units_t_ref);
    push_kv(
        &mut s,
        "diffusion.law",
        match cfg.diffusion.law {
            MobilityLaw::GeneralFermi => "general_fermi",
            MobilityLaw::MaxwellBoltzmann => "maxwell_boltzmann",
            MobilityLaw::Degenerate => "degenerate",
        },
    );
    push_kv(&mut s, "diffusion.tau0", cfg.diffusion.tau0);
    push_kv(&mut s, "diffusion.temp", cfg.diffusion.temp);
    push_kv(&mut s, "diffusion.steady", cfg.diffusion.steady);
    let taus: Vec<String> = cfg.study.taus.iter().map(|t| format!("{t}")).collect();
    push_kv(&mut s, "study.tau_list", taus.join(","));
    push_kv(&mut s, "study.temp", cfg.study.temp);
    push_kv(&mut s, "table.a_min", cfg.table.a_min);
    push_kv(&mut s, "table.a_max", cfg.table.a_max);
    push_kv(&mut s, "table.a_count", cfg.table.a_count);
    push_kv(&mut s, "table.b_count", cfg.table.b_count);
    let temps: Vec<String> = cfg.table.temps.iter().map(|t| format!("{t}")).collect();
    push_kv(&mut s, "table.t_values", temps.join(","));
    s
}

// ---------------------------------------------------------------------------
// Output writers

const K_BOLTZMANN: f64 = 1.380_649e-23;
const HBAR: f64 = 1.054_571_817e-34;

fn unit_header(cfg: &ScenarioConfig) -> String {
    let mut s = String::from("# units: scaled (c = hbar = k_B = 1)\n");
    if cfg.units_c != 1.0 || cfg.units_t_ref != 1.0 {
        // Conversion factors for c in m/s and T_ref in kelvin.
        let length = HBAR * cfg.units_c / (K_BOLTZMANN * cfg.units_t_ref);
        let _ = writeln!(s, "# x_to_meters = {:e}", length);
        let _ = writeln!(s, "# t_to_seconds = {:e}", length / cfg.units_c);
        let _ = writeln!(s, "# n_to_per_m2 = {:e}", 1.0 / (length * length));
        let _ = writeln!(s, "# e_to_joules = {:e}", K_BOLTZMANN * cfg.units_t_ref);
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text)?;
    Ok(())
}

/// One snapshot: cell centers with (n, u, e) rows.
fn snapshot_text(
    cfg: &ScenarioConfig,
    grid: &Grid,
    time: f64,
    cells: impl Fn(usize) -> (f64, Vec2, f64),
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gmep snapshot");
    let _ = writeln!(s, "# solver: {}", cfg.solver.name());
    let _ = writeln!(s, "# time: {time}");
    if grid.is_1d() {
        let _ = writeln!(s, "# columns: x,n,u_x,u_y,e");
    } else {
        let _ = writeln!(s, "# columns: x,y,n,u_x,u_y,e");
    }
    s.push_str(&unit_header(cfg));
    for j in 0..grid.cells_y {
        for i in 0..grid.cells_x {
            let (n, u, e) = cells(grid.idx(i, j));
            if grid.is_1d() {
                let _ = writeln!(s, "{},{},{},{},{}", grid.x_center(i), n, u.x, u.y, e);
            } else {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    grid.x_center(i),
                    grid.y_center(j),
                    n,
                    u.x,
                    u.y,
                    e
                );
            }
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub wall_seconds: f64,
    pub steps: usize,
    pub snapshots: usize,
    /// Relative drift of total density over the run, when meaningful.
    pub mass_drift: Option<f64>,
}

/// Snapshot times: multiples of the cadence, with t = 0 and t_end always
/// included.
fn snapshot_times(t_end: f64, every: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    if every > 0.0 {
        let mut k = 1usize;
        while (k as f64) * every < t_end * (1.0 - 1e-12) {
            times.push(k as f64 * every);
            k += 1;
        }
    }
    times.push(t_end);
    times
}

pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let mut report = RunReport {
        files: Vec::new(),
        wall_seconds: 0.0,
        steps: 0,
        snapshots: 0,
        mass_drift: None,
    };
    let result = dispatch(cfg, out_dir, &mut report);
    report.wall_seconds = started.elapsed().as_secs_f64();
    // The manifest is written even for failed runs so partial output stays
    // interpretable.
    let manifest = manifest_text(cfg, &report, result.as_ref().err());
    let path = out_dir.join("manifest.txt");
    write_file(&path, &manifest)?;
    report.files.push(path);
    result.map(|()| report)
}

fn manifest_text(cfg: &ScenarioConfig, report: &RunReport, failure: Option<&RunError>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gmep run manifest");
    let _ = writeln!(s, "# version: {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# wall_seconds: {:.3}", report.wall_seconds);
    let _ = writeln!(s, "# steps: {}", report.steps);
    let _ = writeln!(s, "# snapshots: {}", report.snapshots);
    if let Some(d) = report.mass_drift {
        let _ = writeln!(s, "# mass_drift_rel: {d:e}");
    }
    for f in &report.files {
        let _ = writeln!(s, "# output: {}", f.file_name().unwrap_or_default().to_string_lossy());
    }
    if let Some(err) = failure {
        let _ = writeln!(s, "# failed: {err}");
    }
    let _ = writeln!(s, "# resolved configuration follows; this block re-parses.");
    s.push_str(&to_manifest_text(cfg));
    s
}

fn dispatch(cfg: &ScenarioConfig, out_dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    match cfg.solver {
        SolverKind::Hydro => run_hydro(cfg, out_dir, report),
        SolverKind::CollimationMb | SolverKind::CollimationDegenerate => {
            run_collimation(cfg, out_dir, report)
        }
        SolverKind::Diffusion => run_diffusion(cfg, out_dir, report),
        SolverKind::RelaxationStudy => run_study(cfg, out_dir, report),
        SolverKind::ClosureTable => run_table(cfg, out_dir, report),
    }
}

fn write_snapshot_indexed(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    report: &mut RunReport,
    index: usize,
    time: f64,
    cells: impl Fn(usize) -> (f64, Vec2, f64),
) -> Result<(), RunError> {
    let text = snapshot_text(cfg, &cfg.grid, time, cells);
    let path = out_dir.join(format!("snapshot_{index:04}.csv"));
    write_file(&path, &text)?;
    report.files.push(path);
    report.snapshots += 1;
    Ok(())
}

fn run_hydro(cfg: &ScenarioConfig, out_dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    let grid = cfg.grid;
    let pot = cfg.potential.build(&grid);
    let mut state = FieldState::from_fn(&grid, |x, y| {
        MomentState::new(cfg.initial.density(&grid, x, y), cfg.initial.u0, cfg.initial.e0)
    });
    state.validate(&grid).map_err(RunError::Solver)?;
    let mass0 = state.total_mass(&grid);
    let times = snapshot_times(cfg.t_end, cfg.snapshot_every);
    for (k, &t) in times.iter().enumerate() {
        if t > state.time {
            let (next, steps) = advance(state, &grid, &pot, &cfg.band, &cfg.scheme, t)
                .map_err(RunError::Solver)?;
            state = next;
            report.steps += steps;
        }
        let cells = &state.cells;
        write_snapshot_indexed(cfg, out_dir, report, k, state.time, |idx| {
            let c = &cells[idx];
            (c.n, c.u, c.e)
        })?;
    }
    let drift = (state.total_mass(&grid) - mass0).abs() / mass0;
    report.mass_drift = Some(drift);
    Ok(())
}

fn run_collimation(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let grid = cfg.grid;
    let pot = cfg.potential.build(&grid);
    let mut state = CollimationState::from_fn(&grid, |x, y| {
        (
            cfg.initial.density(&grid, x, y),
            cfg.initial.direction(&grid, x),
            cfg.initial.e0,
        )
    })
    .map_err(RunError::Solver)?;
    let mass0: f64 = state.n.iter().sum();
    let times = snapshot_times(cfg.t_end, cfg.snapshot_every);
    for (k, &t) in times.iter().enumerate() {
        if t > state.time {
            let steps = match cfg.solver {
                SolverKind::CollimationMb => {
                    run_collimation_mb(&mut state, &grid, &pot, &cfg.band, cfg.scheme.cfl, t)
                }
                _ => run_collimation_degenerate(
                    &mut state,
                    &grid,
                    &pot,
                    &cfg.band,
                    cfg.scheme.cfl,
                    t,
                ),
            }
            .map_err(RunError::Solver)?;
            report.steps += steps;
        }
        let (n, u, e) = (&state.n, &state.u, &state.e);
        write_snapshot_indexed(cfg, out_dir, report, k, state.time, |idx| {
            (n[idx], u[idx], e[idx])
        })?;
    }
    let mass: f64 = state.n.iter().sum();
    report.mass_drift = Some((mass - mass0).abs() / mass0);
    Ok(())
}

fn run_diffusion(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let grid = cfg.grid;
    let pot = cfg.potential.build(&grid);
    let model = DiffusionModel::new(cfg.diffusion.law, cfg.diffusion.tau0, cfg.diffusion.temp)
        .map_err(RunError::Solver)?;
    let e_iso = 2.0 * cfg.diffusion.temp;
    let mut n: Vec<f64> = (0..grid.n_cells())
        .map(|idx| {
            let i = idx % grid.cells_x;
            let j = idx / grid.cells_x;
            cfg.initial.density(&grid, grid.x_center(i), grid.y_center(j))
        })
        .collect();
    if cfg.diffusion.steady {
        let steady = steady_state_1d(&n, &grid, &pot, &cfg.band, &model).map_err(RunError::Solver)?;
        let text = snapshot_text(cfg, &grid, f64::NAN, |idx| {
            (steady[idx], Vec2::ZERO, e_iso)
        });
        // Steady output: the time header carries NaN, there is no horizon.
        let path = out_dir.join("steady.csv");
        write_file(&path, &text)?;
        report.files.push(path);
        report.snapshots += 1;
        let mass0: f64 = n.iter().sum();
        let mass: f64 = steady.iter().sum();
        report.mass_drift = Some((mass - mass0).abs() / mass0);
        return Ok(());
    }
    let mass0: f64 = n.iter().sum();
    let times = snapshot_times(cfg.t_end, cfg.snapshot_every);
    let mut now = 0.0;
    for (k, &t) in times.iter().enumerate() {
        if t > now {
            let segment = t - now;
            let steps = advance_diffusion(&mut n, &grid, &pot, &cfg.band, &model, segment)
                .map_err(RunError::Solver)?;
            report.steps += steps;
            now = t;
        }
        let n_ref = &n;
        write_snapshot_indexed(cfg, out_dir, report, k, now, |idx| {
            (n_ref[idx], Vec2::ZERO, e_iso)
        })?;
    }
    let mass: f64 = n.iter().sum();
    report.mass_drift = Some((mass - mass0).abs() / mass0);
    Ok(())
}

fn run_study(cfg: &ScenarioConfig, out_dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    let grid = cfg.grid;
    let pot = cfg.potential.build(&grid);
    let n0: Vec<f64> = (0..grid.n_cells())
        .map(|idx| {
            let i = idx % grid.cells_x;
            let j = idx / grid.cells_x;
            cfg.initial.density(&grid, grid.x_center(i), grid.y_center(j))
        })
        .collect();
    let study = relaxation_limit_study(
        &n0,
        &grid,
        &pot,
        &cfg.band,
        cfg.study.temp,
        cfg.t_end,
        &cfg.study.taus,
    )
    .map_err(RunError::Solver)?;

    let mut s = String::new();
    let _ = writeln!(s, "# gmep relaxation study");
    let _ = writeln!(
        s,
        "# reference: drift-diffusion, maxwell_boltzmann mobility, tau0 = 1, t_end = {}",
        study.t_end
    );
    let _ = writeln!(s, "# hydro: maxwell_boltzmann closure, isothermal T = {}, muscl", study.temp);
    let _ = writeln!(s, "# monotone: {}", study.monotone);
    if let Some(f) = &study.failure {
        let _ = writeln!(s, "# aborted: {f}");
    }
    let _ = writeln!(s, "# columns: tau,l1_distance");
    s.push_str(&unit_header(cfg));
    for (tau, dist) in study.taus.iter().zip(&study.distances) {
        let _ = writeln!(s, "{tau},{dist}");
    }
    let path = out_dir.join("study.csv");
    write_file(&path, &s)?;
    report.files.push(path);
    if let Some(f) = study.failure {
        // Partial report on disk, numeric failure surfaced to the caller.
        return Err(RunError::Solver(SolverError::InvalidSetup(format!(
            "relaxation study aborted: {f}"
        ))));
    }
    Ok(())
}

fn run_table(cfg: &ScenarioConfig, out_dir: &Path, report: &mut RunReport) -> Result<(), RunError> {
    let t = &cfg.table;
    let mut s = String::new();
    let _ = writeln!(s, "# gmep closure table");
    let _ = writeln!(s, "# columns: a,b,temp,n,u_mag,e,p_lo,p_hi,q_lo,q_hi,s_mag");
    let _ = writeln!(s, "# p_lo/p_hi, q_lo/q_hi: tensor eigenvalues, ascending");
    s.push_str(&unit_header(cfg));
    for &temp in &t.temps {
        for ka in 0..t.a_count {
            let a = t.a_min + (t.a_max - t.a_min) * ka as f64 / (t.a_count - 1) as f64;
            // Anisotropy stays inside the admissible wedge B < |A| scale.
            let b_max = 1.8 * a.abs().max(1.0) * 0.5;
            for kb in 0..t.b_count {
                let b = b_max * kb as f64 / (t.b_count - 1) as f64;
                let mult = Multipliers::new(a, Vec2::new(b, 0.0), temp);
                let state = multipliers_to_moments(&mult);
                let tensors = closure_exact(&state, &mult);
                let (p_lo, p_hi) = tensors.p.eigenvalues();
                let (q_lo, q_hi) = tensors.q.eigenvalues();
                let _ = writeln!(
                    s,
                    "{a},{b},{temp},{},{},{},{p_lo},{p_hi},{q_lo},{q_hi},{}",
                    state.n,
                    state.u.norm(),
                    state.e,
                    tensors.s_flux.norm()
                );
            }
        }
    }
    let path = out_dir.join("closure_table.csv");
    write_file(&path, &s)?;

    // Audit the freshly written file: parse every row back and re-check the
    // trace identity p_lo + p_hi = n.
    let text = std::fs::read_to_string(&path)?;
    report.files.push(path);
    let mut rows = 0usize;
    for (k, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|p| p.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| {
                RunError::Closure(ClosureError::InvalidState(format!(
                    "closure table line {}: unparseable field ({e})",
                    k + 1
                )))
            })?;
        if fields.len() != 11 {
            return Err(RunError::Closure(ClosureError::InvalidState(format!(
                "closure table line {}: expected 11 fields, got {}",
                k + 1,
                fields.len()
            ))));
        }
        let (n, p_lo, p_hi) = (fields[3], fields[6], fields[7]);
        if !fields.iter().all(|f| f.is_finite()) || (p_lo + p_hi - n).abs() > 1e-12 * n.abs() {
            return Err(RunError::Closure(ClosureError::InvalidState(format!(
                "closure table line {}: trace(P) = {} but n = {}",
                k + 1,
                p_lo + p_hi,
                n
            ))));
        }
        rows += 1;
    }
    report.steps = rows;
    Ok(())
}
