//! Spatial plumbing shared by the hyperbolic and parabolic solvers: cell
//! grid with per-axis boundary handling, band selection, the prescribed
//! potential, and per-cell field state.

use crate::closure::MomentState;
use crate::error::SolverError;
use crate::tensor::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// Zero-gradient ghost cells. The diffusion solver treats this as a
    /// no-flux wall.
    Outflow,
}

/// Uniform cell-centered grid. 1D runs use cells_y = 1; y-direction
/// transport is skipped entirely in that case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub dx: f64,
    pub dy: f64,
    pub bc_x: Boundary,
    pub bc_y: Boundary,
}

impl Grid {
    pub fn line(cells_x: usize, dx: f64, bc_x: Boundary) -> Self {
        Self {
            cells_x,
            cells_y: 1,
            dx,
            dy: dx,
            bc_x,
            bc_y: Boundary::Periodic,
        }
    }

    pub fn rect(cells_x: usize, cells_y: usize, dx: f64, dy: f64, bc_x: Boundary, bc_y: Boundary) -> Self {
        Self {
            cells_x,
            cells_y,
            dx,
            dy,
            bc_x,
            bc_y,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.cells_x < 4 || (self.cells_y != 1 && self.cells_y < 4) {
            return Err(SolverError::InvalidSetup(format!(
                "need at least 4 cells per active axis, got {} x {}",
                self.cells_x, self.cells_y
            )));
        }
        if !(self.dx > 0.0) || !(self.dy > 0.0) || !self.dx.is_finite() || !self.dy.is_finite() {
            return Err(SolverError::InvalidSetup(format!(
                "cell sizes must be positive, got dx = {}, dy = {}",
                self.dx, self.dy
            )));
        }
        Ok(())
    }

    pub fn is_1d(&self) -> bool {
        self.cells_y == 1
    }

    pub fn n_cells(&self) -> usize {
        self.cells_x * self.cells_y
    }

    /// Cell volume (area), the weight of every discrete sum.
    pub fn cell_volume(&self) -> f64 {
        if self.is_1d() {
            self.dx
        } else {
            self.dx * self.dy
        }
    }

    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy
    }

    pub fn length_x(&self) -> f64 {
        self.cells_x as f64 * self.dx
    }

    pub fn length_y(&self) -> f64 {
        self.cells_y as f64 * self.dy
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.cells_x + i
    }

    /// Index i + d with the x-boundary applied: periodic wrap, or clamp
    /// (which realizes the zero-gradient ghost of an outflow boundary).
    pub fn shift_x(&self, i: usize, d: i64) -> usize {
        shift(i, d, self.cells_x, self.bc_x)
    }

    pub fn shift_y(&self, j: usize, d: i64) -> usize {
        shift(j, d, self.cells_y, self.bc_y)
    }
}

fn shift(i: usize, d: i64, cells: usize, bc: Boundary) -> usize {
    let n = cells as i64;
    let raw = i as i64 + d;
    match bc {
        Boundary::Periodic => raw.rem_euclid(n) as usize,
        Boundary::Outflow => raw.clamp(0, n - 1) as usize,
    }
}

/// Which Dirac cone the run evolves. The two bands obey the same moment
/// system up to the sign of the force coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    ElectronUpper,
    HoleLower,
}

impl Species {
    /// Force-coupling sign sigma: the potential sources are
    /// -sigma Q grad V (momentum) and -sigma c n u . grad V (energy).
    pub fn sign(self) -> f64 {
        match self {
            Species::ElectronUpper => 1.0,
            Species::HoleLower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConfig {
    pub species: Species,
    /// Current-relaxation time; None disables the -n u / tau term.
    pub relaxation_tau: Option<f64>,
}

impl BandConfig {
    pub fn new(species: Species, relaxation_tau: Option<f64>) -> Self {
        Self {
            species,
            relaxation_tau,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if let Some(tau) = self.relaxation_tau {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(SolverError::InvalidSetup(format!(
                    "relaxation time must be positive, got {tau}"
                )));
            }
        }
        Ok(())
    }
}

/// Prescribed external potential, cell-centered values with the gradient
/// stored alongside. Analytic constructors fill the gradient exactly;
/// tabulated input falls back to central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub values: Vec<f64>,
    pub grad: Vec<Vec2>,
}

impl PotentialField {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.n_cells()],
            grad: vec![Vec2::ZERO; grid.n_cells()],
        }
    }

    /// V and grad V given analytically.
    pub fn from_fn(
        grid: &Grid,
        v: impl Fn(f64, f64) -> f64,
        g: impl Fn(f64, f64) -> Vec2,
    ) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        let mut grad = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.cells_y {
            for i in 0..grid.cells_x {
                let (x, y) = (grid.x_center(i), grid.y_center(j));
                values.push(v(x, y));
                grad.push(g(x, y));
            }
        }
        Self { values, grad }
    }

    pub fn uniform_slope(grid: &Grid, slope: Vec2) -> Self {
        Self::from_fn(grid, |x, y| slope.x * x + slope.y * y, |_, _| slope)
    }

    pub fn gaussian_bump(grid: &Grid, amplitude: f64, center: (f64, f64), width: f64) -> Self {
        let v = move |x: f64, y: f64| {
            let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
            amplitude * (-r2 / (2.0 * width * width)).exp()
        };
        Self::from_fn(grid, v, move |x, y| {
            let val = v(x, y);
            Vec2::new(
                -(x - center.0) / (width * width) * val,
                -(y - center.1) / (width * width) * val,
            )
        })
    }

    /// Step along x of the given height, smoothed by tanh over `width`.
    pub fn smoothed_step(grid: &Grid, height: f64, position: f64, width: f64) -> Self {
        Self::from_fn(
            grid,
            move |x, _| 0.5 * height * (1.0 + ((x - position) / width).tanh()),
            move |x, _| {
                let sech2 = 1.0 / ((x - position) / width).cosh().powi(2);
                Vec2::new(0.5 * height / width * sech2, 0.0)
            },
        )
    }

    /// Tabulated values; the gradient is central-differenced with the
    /// grid's boundary rule.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self, SolverError> {
        if values.len() != grid.n_cells() {
            return Err(SolverError::InvalidSetup(format!(
                "potential table has {} entries, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidSetup(
                "potential table contains non-finite entries".into(),
            ));
        }
        let mut grad = vec![Vec2::ZERO; grid.n_cells()];
        for j in 0..grid.cells_y {
            for i in 0..grid.cells_x {
                // Clamped neighbors collapse to a one-sided difference at
                // outflow edges; the spacing shrinks accordingly.
                let (im, ip) = (grid.shift_x(i, -1), grid.shift_x(i, 1));
                let span = wrap_span(ip, im, grid.cells_x);
                let gx = if span > 0.0 {
                    (values[grid.idx(ip, j)] - values[grid.idx(im, j)]) / (span * grid.dx)
                } else {
                    0.0
                };
                let gy = if grid.is_1d() {
                    0.0
                } else {
                    let (jm, jp) = (grid.shift_y(j, -1), grid.shift_y(j, 1));
                    let span = wrap_span(jp, jm, grid.cells_y);
                    if span > 0.0 {
                        (values[grid.idx(i, jp)] - values[grid.idx(i, jm)]) / (span * grid.dy)
                    } else {
                        0.0
                    }
                };
                grad[grid.idx(i, j)] = Vec2::new(gx, gy);
            }
        }
        Ok(Self { values, grad })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Number of cell spacings between the two stencil neighbors, accounting
/// for periodic wrap (where ip < im at the seam means distance 2).
fn wrap_span(ip: usize, im: usize, cells: usize) -> f64 {
    if ip >= im {
        (ip - im) as f64
    } else {
        (ip + cells - im) as f64
    }
}

/// Per-cell moment fields of one band at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub cells: Vec<MomentState>,
    pub time: f64,
}

impl FieldState {
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> MomentState) -> Self {
        let mut cells = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.cells_y {
            for i in 0..grid.cells_x {
                cells.push(f(grid.x_center(i), grid.y_center(j)));
            }
        }
        Self { cells, time: 0.0 }
    }

    pub fn uniform(grid: &Grid, state: MomentState) -> Self {
        Self {
            cells: vec![state; grid.n_cells()],
            time: 0.0,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), SolverError> {
        if self.cells.len() != grid.n_cells() {
            return Err(SolverError::InvalidSetup(format!(
                "field has {} cells, grid has {}",
                self.cells.len(),
                grid.n_cells()
            )));
        }
        for (k, c) in self.cells.iter().enumerate() {
            if !c.is_admissible() || c.n == 0.0 {
                return Err(SolverError::InvalidSetup(format!(
                    "cell {k} holds an inadmissible state: n = {}, |u| = {}, e = {}",
                    c.n,
                    c.u.norm(),
                    c.e
                )));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self, grid: &Grid) -> f64 {
        self.cells.iter().map(|c| c.n).sum::<f64>() * grid.cell_volume()
    }

    pub fn total_momentum(&self, grid: &Grid) -> Vec2 {
        let mut acc = Vec2::ZERO;
        for c in &self.cells {
            acc = acc + c.u * c.n;
        }
        acc * grid.cell_volume()
    }

    pub fn total_energy(&self, grid: &Grid) -> f64 {
        self.cells.iter().map(|c| c.n * c.e).sum::<f64>() * grid.cell_volume()
    }
}
