//! Drift-diffusion limit of the moment system: the parabolic density
//! equation with the Fermi-statistics mobility laws, an implicit 1D
//! steady-state solver, and the harness that demonstrates the relaxed
//! hyperbolic system collapsing onto the parabolic one.

use crate::closure::{
    mobility_degenerate, mobility_general, mobility_mb, thermal_density, MomentState, RegimeTag,
};
use crate::error::SolverError;
use crate::grid::{BandConfig, Boundary, FieldState, Grid, PotentialField};
use crate::hydro::{advance, HydroScheme};
use crate::special::{fermi_integral, fermi_integral_inverse};
use crate::tensor::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityLaw {
    /// Full Fermi-statistics law, valid at any degeneracy.
    GeneralFermi,
    /// Dilute limit n/T.
    MaxwellBoltzmann,
    /// Strongly degenerate limit sqrt(n/pi); temperature-free.
    Degenerate,
}

/// Parabolic model dn/dt = div[(tau0 c^2/2)(grad n + sigma mobility(n) grad V)].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionModel {
    pub law: MobilityLaw,
    /// Relaxation time; the diffusion coefficient is tau0 c^2 / 2.
    pub tau0: f64,
    /// Lattice temperature; the degenerate law ignores it.
    pub temp: f64,
}

impl DiffusionModel {
    pub fn new(law: MobilityLaw, tau0: f64, temp: f64) -> Result<Self, SolverError> {
        if !(tau0 > 0.0) || !tau0.is_finite() {
            return Err(SolverError::InvalidSetup(format!(
                "relaxation time must be positive, got {tau0}"
            )));
        }
        if !(temp > 0.0) || !temp.is_finite() {
            return Err(SolverError::InvalidSetup(format!(
                "temperature must be positive, got {temp}"
            )));
        }
        Ok(Self { law, tau0, temp })
    }

    pub fn mobility(&self, n: f64) -> f64 {
        match self.law {
            MobilityLaw::GeneralFermi => mobility_general(n, self.temp),
            MobilityLaw::MaxwellBoltzmann => mobility_mb(n, self.temp),
            MobilityLaw::Degenerate => mobility_degenerate(n),
        }
    }

    /// d(mobility)/dn, for the Newton linearization of the drift term.
    fn mobility_slope(&self, n: f64) -> f64 {
        match self.law {
            MobilityLaw::GeneralFermi => {
                let y = n / thermal_density(self.temp);
                let a = fermi_integral_inverse(2.0, y).expect("positive density inverts");
                // d/dn of n_T/T phi_1(phi_2^-1(n/n_T)) is phi_0 / (T phi_1),
                // and phi_0 is the logistic function.
                let phi0 = if a > 0.0 {
                    1.0 / (1.0 + (-a).exp())
                } else {
                    let e = a.exp();
                    e / (1.0 + e)
                };
                let phi1 = fermi_integral(1.0, a).expect("finite argument");
                phi0 / (self.temp * phi1)
            }
            MobilityLaw::MaxwellBoltzmann => 1.0 / self.temp,
            MobilityLaw::Degenerate => 0.5 / (std::f64::consts::PI * n).sqrt(),
        }
    }

    /// Explicit step size 0.4 dx^2/(tau0 c^2), shared per-dimension in 2D.
    pub fn stable_dt(&self, grid: &Grid) -> f64 {
        let (h, dim) = if grid.is_1d() {
            (grid.dx, 1.0)
        } else {
            (grid.dx.min(grid.dy), 2.0)
        };
        0.4 * h * h / (self.tau0 * dim)
    }
}

/// Density flux through the face between two cells, per unit face length.
/// The mobility sits at the face through the arithmetic mean of n.
fn face_flux(
    model: &DiffusionModel,
    sigma: f64,
    nl: f64,
    nr: f64,
    vl: f64,
    vr: f64,
    h: f64,
) -> f64 {
    let kappa = 0.5 * model.tau0;
    -kappa * ((nr - nl) / h + sigma * model.mobility(0.5 * (nl + nr)) * (vr - vl) / h)
}

fn edge(raw: i64, cells: usize, bc: Boundary) -> usize {
    match bc {
        Boundary::Periodic => raw.rem_euclid(cells as i64) as usize,
        Boundary::Outflow => raw.clamp(0, cells as i64 - 1) as usize,
    }
}

/// One explicit step. Outflow boundaries clamp both n and V differences to
/// zero across the edge, which makes them no-flux walls.
pub fn diffusion_step(
    n: &mut [f64],
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    model: &DiffusionModel,
    time: f64,
    dt: f64,
) -> Result<(), SolverError> {
    let sigma = band.species.sign();
    let nx = grid.cells_x;
    let ny = grid.cells_y;
    let fx = |f: i64, j: usize| -> f64 {
        let l = grid.idx(edge(f - 1, nx, grid.bc_x), j);
        let r = grid.idx(edge(f, nx, grid.bc_x), j);
        face_flux(model, sigma, n[l], n[r], pot.values[l], pot.values[r], grid.dx)
    };
    let fy = |i: usize, f: i64| -> f64 {
        let l = grid.idx(i, edge(f - 1, ny, grid.bc_y));
        let r = grid.idx(i, edge(f, ny, grid.bc_y));
        face_flux(model, sigma, n[l], n[r], pot.values[l], pot.values[r], grid.dy)
    };
    let mut next = vec![0.0; n.len()];
    for idx in 0..n.len() {
        let j = idx / nx;
        let i = idx % nx;
        let mut v = n[idx] - dt / grid.dx * (fx(i as i64 + 1, j) - fx(i as i64, j));
        if !grid.is_1d() {
            v -= dt / grid.dy * (fy(i, j as i64 + 1) - fy(i, j as i64));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(SolverError::PositivityLoss {
                cell: idx,
                time,
                detail: format!("density update produced n = {v}"),
            });
        }
        next[idx] = v;
    }
    n.copy_from_slice(&next);
    Ok(())
}

/// March to t_end with the explicit stable step (shortened final step).
pub fn advance_diffusion(
    n: &mut [f64],
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    model: &DiffusionModel,
    t_end: f64,
) -> Result<usize, SolverError> {
    grid.validate()?;
    if n.len() != grid.n_cells() {
        return Err(SolverError::InvalidSetup(format!(
            "density field has {} cells, grid has {}",
            n.len(),
            grid.n_cells()
        )));
    }
    let dt0 = model.stable_dt(grid);
    let mut time = 0.0;
    let mut steps = 0usize;
    while time < t_end - 1e-14 * t_end.max(1.0) {
        let dt = dt0.min(t_end - time);
        diffusion_step(n, grid, pot, band, model, time, dt)?;
        time += dt;
        steps += 1;
    }
    Ok(steps)
}

/// Thomas elimination for a tridiagonal system; diag is consumed.
fn solve_tridiagonal(
    lower: &[f64],
    diag: &mut [f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> Result<(), SolverError> {
    let m = diag.len();
    for i in 1..m {
        if diag[i - 1] == 0.0 {
            return Err(SolverError::NewtonStall(
                "singular tridiagonal pivot in the steady-state solve".into(),
            ));
        }
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if diag[m - 1] == 0.0 {
        return Err(SolverError::NewtonStall(
            "singular tridiagonal pivot in the steady-state solve".into(),
        ));
    }
    rhs[m - 1] /= diag[m - 1];
    for i in (0..m - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
    Ok(())
}

/// Zero-flux steady state on a 1D no-flux grid, by pseudo-transient
/// backward-Euler with one Newton linearization per step (tridiagonal).
/// Total mass is that of the initial guess; convergence is declared when
/// the bracket grad n + sigma mobility grad V is flat to rounding.
pub fn steady_state_1d(
    n0: &[f64],
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    model: &DiffusionModel,
) -> Result<Vec<f64>, SolverError> {
    grid.validate()?;
    if !grid.is_1d() || grid.bc_x != Boundary::Outflow {
        return Err(SolverError::InvalidSetup(
            "steady-state solve needs a 1D grid with no-flux boundaries".into(),
        ));
    }
    let m = grid.cells_x;
    if n0.len() != m {
        return Err(SolverError::InvalidSetup(format!(
            "initial guess has {} cells, grid has {m}",
            n0.len()
        )));
    }
    if n0.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SolverError::InvalidSetup(
            "steady-state initial guess must be positive".into(),
        ));
    }
    let sigma = band.species.sign();
    let kappa = 0.5 * model.tau0;
    let dx = grid.dx;
    let n_mean = n0.iter().sum::<f64>() / m as f64;
    // Convergence on the flux bracket itself, relative to its crudest
    // possible scale n_mean/dx.
    let tol = 1e-11 * n_mean / dx;

    // Interior face f sits between cells f-1 and f, f = 1..m-1.
    let bracket = |n: &[f64], f: usize| -> f64 {
        let (l, r) = (f - 1, f);
        (n[r] - n[l]) / dx
            + sigma * model.mobility(0.5 * (n[l] + n[r])) * (pot.values[r] - pot.values[l]) / dx
    };

    let mut n = n0.to_vec();
    let mut dtau = 10.0 * dx * dx / kappa;
    for _ in 0..1000 {
        let worst = (1..m)
            .map(|f| bracket(&n, f).abs())
            .fold(0.0_f64, f64::max);
        if worst <= tol {
            return Ok(n);
        }
        // Residual R_i = (F_{i+1/2} - F_{i-1/2})/dx with F = -kappa*bracket,
        // zero flux at the walls. Solve (I/dtau + dR/dn) delta = -R.
        let mut resid = vec![0.0; m];
        for f in 1..m {
            let flux = -kappa * bracket(&n, f);
            resid[f - 1] += flux / dx;
            resid[f] -= flux / dx;
        }
        let mut lower = vec![0.0; m];
        let mut diag = vec![1.0 / dtau; m];
        let mut upper = vec![0.0; m];
        for f in 1..m {
            let (l, r) = (f - 1, f);
            let nb = 0.5 * (n[l] + n[r]);
            let dv = (pot.values[r] - pot.values[l]) / dx;
            // dF/dn_l and dF/dn_r of F = -kappa*bracket.
            let df_dl = -kappa * (-1.0 / dx + sigma * 0.5 * model.mobility_slope(nb) * dv);
            let df_dr = -kappa * (1.0 / dx + sigma * 0.5 * model.mobility_slope(nb) * dv);
            // R_l += F/dx, R_r -= F/dx.
            diag[l] += df_dl / dx;
            upper[l] += df_dr / dx;
            lower[r] -= df_dl / dx;
            diag[r] -= df_dr / dx;
        }
        let mut rhs: Vec<f64> = resid.iter().map(|r| -r).collect();
        solve_tridiagonal(&lower, &mut diag, &mut upper, &mut rhs)?;
        let trial: Vec<f64> = n.iter().zip(&rhs).map(|(v, d)| v + d).collect();
        if trial.iter().all(|v| *v > 0.0 && v.is_finite()) {
            n = trial;
            dtau *= 2.0;
        } else {
            dtau *= 0.25;
            if dtau < 1e-12 * dx * dx / kappa {
                return Err(SolverError::NewtonStall(
                    "pseudo-transient step collapsed while keeping n positive".into(),
                ));
            }
        }
    }
    let worst = (1..m)
        .map(|f| bracket(&n, f).abs())
        .fold(0.0_f64, f64::max);
    Err(SolverError::NewtonStall(format!(
        "steady-state residual stuck at {worst:.3e} (tol {tol:.3e})"
    )))
}

/// Outcome of the relaxation-limit comparison. `taus`/`distances` hold the
/// sub-runs that completed; `failure` records the first sub-run error, if
/// any, leaving a partial report.
#[derive(Debug, Clone)]
pub struct RelaxationStudy {
    pub temp: f64,
    pub t_end: f64,
    pub taus: Vec<f64>,
    pub distances: Vec<f64>,
    pub monotone: bool,
    pub failure: Option<String>,
}

/// Compare the relaxed hyperbolic system against its parabolic limit.
///
/// The reference is the drift-diffusion solution with tau0 = 1 advanced to
/// `t_end` of diffusive time. A hydro run with relaxation time tau matches
/// that diffusive window after physical time t_end/tau (the diffusive
/// scaling is t* = tau t), so each sub-run integrates the isothermal MB
/// system to t_end/tau and reports the L1 distance of its density profile
/// from the reference.
pub fn relaxation_limit_study(
    n0: &[f64],
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    temp: f64,
    t_end: f64,
    taus: &[f64],
) -> Result<RelaxationStudy, SolverError> {
    grid.validate()?;
    if taus.is_empty() {
        return Err(SolverError::InvalidSetup("empty tau list".into()));
    }
    if taus.windows(2).any(|w| w[1] >= w[0]) || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(SolverError::InvalidSetup(
            "tau list must be positive and strictly decreasing".into(),
        ));
    }
    if !(t_end > 0.0) {
        return Err(SolverError::InvalidSetup(format!(
            "study horizon must be positive, got {t_end}"
        )));
    }

    let model = DiffusionModel::new(MobilityLaw::MaxwellBoltzmann, 1.0, temp)?;
    let mut n_ref = n0.to_vec();
    advance_diffusion(&mut n_ref, grid, pot, band, &model, t_end)?;

    let vol = grid.cell_volume();
    let mut done_taus = Vec::new();
    let mut distances = Vec::new();
    let mut failure = None;
    let h = if grid.is_1d() {
        grid.dx
    } else {
        grid.dx.min(grid.dy)
    };
    for &tau in taus {
        let band_tau = BandConfig::new(band.species, Some(tau));
        // The relaxation source is integrated by the explicit stages, so the
        // step must resolve tau; otherwise the stiff error grows like 1/tau
        // and buries the limit being measured.
        let cfl = (tau / (12.0 * h)).min(0.45);
        let scheme = HydroScheme {
            regime: RegimeTag::MaxwellBoltzmann,
            muscl: true,
            cfl,
            isothermal: Some(temp),
        };
        let state = FieldState {
            cells: n0
                .iter()
                .map(|&n| MomentState::new(n, Vec2::ZERO, 2.0 * temp))
                .collect(),
            time: 0.0,
        };
        match advance(state, grid, pot, &band_tau, &scheme, t_end / tau) {
            Ok((final_state, _)) => {
                let dist: f64 = final_state
                    .cells
                    .iter()
                    .zip(&n_ref)
                    .map(|(c, r)| (c.n - r).abs() * vol)
                    .sum();
                done_taus.push(tau);
                distances.push(dist);
            }
            Err(e) => {
                failure = Some(format!("tau = {tau}: {e}"));
                break;
            }
        }
    }
    let monotone = distances.windows(2).all(|w| w[1] < w[0]) && failure.is_none();
    Ok(RelaxationStudy {
        temp,
        t_end,
        taus: done_taus,
        distances,
        monotone,
        failure,
    })
}
