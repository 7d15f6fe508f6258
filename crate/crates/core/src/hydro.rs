//! Finite-volume integrator for the moment system: Rusanov fluxes with the
//! Dirac-cone signal bound c = 1, optional MUSCL reconstruction, Strang-split
//! potential and relaxation sources, the collimation-regime reduced
//! integrators, and a hyperbolicity diagnostic.

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::closure::{closure_for_regime, ClosureTensors, MomentState, RegimeTag};
use crate::error::{ClosureError, SolverError};
use crate::grid::{BandConfig, FieldState, Grid, PotentialField};
use crate::tensor::Vec2;

/// Division guard when recovering (u, e) from the conserved variables.
/// Not a positivity fix: n <= 0 still aborts the step.
const VACUUM_FLOOR: f64 = 1e-14;

/// Conserved vector per cell: (n, n u_x, n u_y, n e).
pub type Cons = [f64; 4];

pub fn to_cons(s: &MomentState) -> Cons {
    [s.n, s.n * s.u.x, s.n * s.u.y, s.n * s.e]
}

pub fn to_prim(c: &Cons) -> MomentState {
    let d = c[0].max(VACUUM_FLOOR);
    MomentState::new(c[0], Vec2::new(c[1] / d, c[2] / d), c[3] / d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroScheme {
    pub regime: RegimeTag,
    /// Second-order minmod-limited reconstruction of the conserved vector.
    pub muscl: bool,
    /// Courant factor; the hard admissible ceiling is 0.9.
    pub cfl: f64,
    /// Some(T): freeze e = 2T, drop the energy equation. Only consistent
    /// with u . grad V = 0; honored regardless, with a logged warning.
    pub isothermal: Option<f64>,
}

impl Default for HydroScheme {
    fn default() -> Self {
        Self {
            regime: RegimeTag::Exact,
            muscl: false,
            cfl: 0.45,
            isothermal: None,
        }
    }
}

impl HydroScheme {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(SolverError::InvalidSetup(format!(
                "cfl factor must lie in (0, 0.9], got {}",
                self.cfl
            )));
        }
        if let Some(t) = self.isothermal {
            if !(t > 0.0) || !t.is_finite() {
                return Err(SolverError::InvalidSetup(format!(
                    "isothermal temperature must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }

    /// Largest stable step on this grid (signal speeds are bounded by c = 1).
    pub fn max_dt(&self, grid: &Grid) -> f64 {
        let h = if grid.is_1d() {
            grid.dx
        } else {
            grid.dx.min(grid.dy)
        };
        self.cfl * h
    }
}

/// Directional flux vectors of one cell, c = 1:
/// f = (n u_x, P_xx, P_xy, S_x), g = (n u_y, P_xy, P_yy, S_y).
#[derive(Debug, Clone, Copy)]
pub struct CellFlux {
    pub f: Cons,
    pub g: Cons,
    pub tensors: ClosureTensors,
}

/// Fluxes and the source vector (0, -sigma (Q grad V) - n u / tau,
/// -sigma c n u . grad V) of a single cell.
pub fn flux_and_sources(
    cell: &MomentState,
    band: &BandConfig,
    gradv: Vec2,
    regime: RegimeTag,
) -> Result<(CellFlux, Cons), ClosureError> {
    let t = closure_for_regime(regime, cell)?;
    let flux = CellFlux {
        f: [cell.n * cell.u.x, t.p.xx, t.p.xy, t.s_flux.x],
        g: [cell.n * cell.u.y, t.p.xy, t.p.yy, t.s_flux.y],
        tensors: t,
    };
    let sigma = band.species.sign();
    let qg = t.q.mul_vec(gradv);
    let mut src = [
        0.0,
        -sigma * qg.x,
        -sigma * qg.y,
        -sigma * cell.n * cell.u.dot(gradv),
    ];
    if let Some(tau) = band.relaxation_tau {
        src[1] -= cell.n * cell.u.x / tau;
        src[2] -= cell.n * cell.u.y / tau;
    }
    Ok((flux, src))
}

fn closure_at(regime: RegimeTag, cell: usize, s: &MomentState) -> Result<ClosureTensors, SolverError> {
    closure_for_regime(regime, s).map_err(|source| SolverError::ClosureAtCell { cell, source })
}

fn flux_x(s: &MomentState, t: &ClosureTensors) -> Cons {
    [s.n * s.u.x, t.p.xx, t.p.xy, t.s_flux.x]
}

fn flux_y(s: &MomentState, t: &ClosureTensors) -> Cons {
    [s.n * s.u.y, t.p.xy, t.p.yy, t.s_flux.y]
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// The exact solution of dm/dt = -q - m/tau over h, and its time integral
/// (which drives the energy source). q is frozen over the substep.
fn affine_kick(m0: Vec2, q: Vec2, tau: Option<f64>, h: f64) -> (Vec2, Vec2) {
    match tau {
        Some(tau) => {
            // em = exp(-h/tau) - 1, stable as h/tau -> 0.
            let em = (-h / tau).exp_m1();
            let decay = 1.0 + em;
            let m = m0 * decay - q * (tau * (-em));
            let int_m = m0 * (tau * (-em)) - q * (tau * (h - tau * (-em)));
            (m, int_m)
        }
        None => (m0 - q * h, m0 * h - q * (0.5 * h * h)),
    }
}

/// Half-step of the potential + relaxation sources, integrated exactly for
/// the frozen per-cell Q. Returns early when the stage is the identity.
fn source_stage(
    cons: &mut [Cons],
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    scheme: &HydroScheme,
    h: f64,
) -> Result<(), SolverError> {
    if pot.is_zero() && band.relaxation_tau.is_none() {
        return Ok(());
    }
    let sigma = band.species.sign();
    let _ = grid;
    let updated: Vec<Result<Cons, SolverError>> = cons
        .par_iter()
        .enumerate()
        .map(|(k, u)| {
            let gv = pot.grad[k];
            if gv == Vec2::ZERO && band.relaxation_tau.is_none() {
                return Ok(*u);
            }
            let prim = to_prim(u);
            let t = closure_at(scheme.regime, k, &prim)?;
            let q = t.q.mul_vec(gv) * sigma;
            let m0 = Vec2::new(u[1], u[2]);
            let (m, int_m) = affine_kick(m0, q, band.relaxation_tau, h);
            let energy = if scheme.isothermal.is_some() {
                u[3]
            } else {
                u[3] - sigma * int_m.dot(gv)
            };
            Ok([u[0], m.x, m.y, energy])
        })
        .collect();
    for (k, r) in updated.into_iter().enumerate() {
        cons[k] = r?;
    }
    Ok(())
}

/// One Rusanov face flux with signal bound c = 1.
fn rusanov(fl: &Cons, fr: &Cons, ul: &Cons, ur: &Cons) -> Cons {
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * (ur[k] - ul[k]);
    }
    out
}

/// Reconstructed face states of cell `c` toward its x-neighbors. Falls back
/// to the cell value when the limited extrapolation leaves the admissible
/// set (possible right at the degeneracy floor).
fn face_states(u: &Cons, um: &Cons, up: &Cons) -> (Cons, Cons) {
    let mut lo = *u;
    let mut hi = *u;
    for k in 0..4 {
        let s = 0.5 * minmod(u[k] - um[k], up[k] - u[k]);
        lo[k] -= s;
        hi[k] += s;
    }
    if !to_prim(&lo).is_admissible() || !to_prim(&hi).is_admissible() {
        (*u, *u)
    } else {
        (lo, hi)
    }
}

struct FaceSide {
    cons: Cons,
    flux: Cons,
}

/// Interface index helper honoring each axis's boundary rule.
fn face_cell(raw: i64, cells: usize, bc: crate::grid::Boundary) -> usize {
    match bc {
        crate::grid::Boundary::Periodic => raw.rem_euclid(cells as i64) as usize,
        crate::grid::Boundary::Outflow => raw.clamp(0, cells as i64 - 1) as usize,
    }
}

fn transport_stage(
    cons: &mut Vec<Cons>,
    grid: &Grid,
    scheme: &HydroScheme,
    time: f64,
    dt: f64,
) -> Result<(), SolverError> {
    let (nx, ny) = (grid.cells_x, grid.cells_y);
    let regime = scheme.regime;

    // Per-cell face states: (left x-face, right x-face, low y-face, high
    // y-face). First order uses the cell value on all four.
    let sides: Vec<(Cons, Cons, Cons, Cons)> = if scheme.muscl {
        (0..cons.len())
            .into_par_iter()
            .map(|idx| {
                let j = idx / nx;
                let i = idx % nx;
                let u = &cons[idx];
                let xm = &cons[grid.idx(grid.shift_x(i, -1), j)];
                let xp = &cons[grid.idx(grid.shift_x(i, 1), j)];
                let (xl, xr) = face_states(u, xm, xp);
                if grid.is_1d() {
                    (xl, xr, *u, *u)
                } else {
                    let ym = &cons[grid.idx(i, grid.shift_y(j, -1))];
                    let yp = &cons[grid.idx(i, grid.shift_y(j, 1))];
                    let (yl, yr) = face_states(u, ym, yp);
                    (xl, xr, yl, yr)
                }
            })
            .collect()
    } else {
        cons.par_iter().map(|u| (*u, *u, *u, *u)).collect()
    };

    // Closure evaluation per face side (shared with the cell when not
    // reconstructing, but evaluating per side keeps the code uniform and
    // the cost is the same two evaluations per cell either way in 1D).
    let eval = |state: &Cons, k: usize| -> Result<(MomentState, ClosureTensors), SolverError> {
        let prim = to_prim(state);
        let t = closure_at(regime, k, &prim)?;
        Ok((prim, t))
    };
    let side_fluxes: Vec<Result<(FaceSide, FaceSide, FaceSide, FaceSide), SolverError>> = sides
        .par_iter()
        .enumerate()
        .map(|(k, (xl, xr, yl, yh))| {
            let (pl, tl) = eval(xl, k)?;
            let (pr, tr) = eval(xr, k)?;
            let fx_l = FaceSide {
                cons: *xl,
                flux: flux_x(&pl, &tl),
            };
            let fx_r = FaceSide {
                cons: *xr,
                flux: flux_x(&pr, &tr),
            };
            let (fy_l, fy_h) = if grid.is_1d() {
                (
                    FaceSide {
                        cons: *yl,
                        flux: [0.0; 4],
                    },
                    FaceSide {
                        cons: *yh,
                        flux: [0.0; 4],
                    },
                )
            } else {
                let (ql, sl) = eval(yl, k)?;
                let (qh, sh) = eval(yh, k)?;
                (
                    FaceSide {
                        cons: *yl,
                        flux: flux_y(&ql, &sl),
                    },
                    FaceSide {
                        cons: *yh,
                        flux: flux_y(&qh, &sh),
                    },
                )
            };
            Ok((fx_l, fx_r, fy_l, fy_h))
        })
        .collect();
    let mut faces = Vec::with_capacity(side_fluxes.len());
    for r in side_fluxes {
        faces.push(r?);
    }

    // x-interfaces: nx+1 per row, indexed by the right cell; the two
    // boundary entries coincide for periodic wrap, so the discrete sum
    // telescopes to zero and mass is conserved bitwise.
    let flux_face_x = |f: i64, j: usize| -> Cons {
        let l = face_cell(f - 1, nx, grid.bc_x);
        let r = face_cell(f, nx, grid.bc_x);
        let left = &faces[grid.idx(l, j)].1;
        let right = &faces[grid.idx(r, j)].0;
        rusanov(&left.flux, &right.flux, &left.cons, &right.cons)
    };
    let flux_face_y = |i: usize, f: i64| -> Cons {
        let l = face_cell(f - 1, ny, grid.bc_y);
        let r = face_cell(f, ny, grid.bc_y);
        let low = &faces[grid.idx(i, l)].3;
        let high = &faces[grid.idx(i, r)].2;
        rusanov(&low.flux, &high.flux, &low.cons, &high.cons)
    };

    let rx = dt / grid.dx;
    let ry = dt / grid.dy;
    let next: Vec<Result<Cons, SolverError>> = (0..cons.len())
        .into_par_iter()
        .map(|idx| {
            let j = idx / nx;
            let i = idx % nx;
            let mut u = cons[idx];
            let fr = flux_face_x(i as i64 + 1, j);
            let fl = flux_face_x(i as i64, j);
            for k in 0..4 {
                u[k] -= rx * (fr[k] - fl[k]);
            }
            if !grid.is_1d() {
                let gh = flux_face_y(i, j as i64 + 1);
                let gl = flux_face_y(i, j as i64);
                for k in 0..4 {
                    u[k] -= ry * (gh[k] - gl[k]);
                }
            }
            if !(u[0] > 0.0) || !u.iter().all(|v| v.is_finite()) {
                return Err(SolverError::PositivityLoss {
                    cell: idx,
                    time,
                    detail: format!("n = {} after transport", u[0]),
                });
            }
            Ok(u)
        })
        .collect();
    for (k, r) in next.into_iter().enumerate() {
        cons[k] = r?;
    }
    Ok(())
}

/// Advance one step of size dt: half source, transport, half source
/// (Strang). dt must respect the hard CFL ceiling 0.9 min(dx,dy)/c.
pub fn step(
    state: &FieldState,
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    scheme: &HydroScheme,
    dt: f64,
) -> Result<FieldState, SolverError> {
    let h = if grid.is_1d() {
        grid.dx
    } else {
        grid.dx.min(grid.dy)
    };
    let bound = 0.9 * h;
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(SolverError::CflViolation { dt, bound });
    }
    let mut cons: Vec<Cons> = state
        .cells
        .iter()
        .map(|c| match scheme.isothermal {
            Some(t) => to_cons(&MomentState::new(c.n, c.u, 2.0 * t)),
            None => to_cons(c),
        })
        .collect();

    source_stage(&mut cons, grid, pot, band, scheme, 0.5 * dt)?;
    transport_stage(&mut cons, grid, scheme, state.time, dt)?;
    if let Some(t) = scheme.isothermal {
        for u in cons.iter_mut() {
            u[3] = 2.0 * t * u[0];
        }
    }
    source_stage(&mut cons, grid, pot, band, scheme, 0.5 * dt)?;

    let mut cells = Vec::with_capacity(cons.len());
    for (k, u) in cons.iter().enumerate() {
        let p = to_prim(u);
        if !p.is_admissible() {
            return Err(SolverError::PositivityLoss {
                cell: k,
                time: state.time,
                detail: format!(
                    "left the admissible set: n = {}, |u| = {}, e = {}",
                    p.n,
                    p.u.norm(),
                    p.e
                ),
            });
        }
        cells.push(p);
    }
    Ok(FieldState {
        cells,
        time: state.time + dt,
    })
}

/// Integrate to t_end with the scheme's CFL step (shortened final step).
/// Returns the final state and the number of steps taken.
pub fn advance(
    state: FieldState,
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    scheme: &HydroScheme,
    t_end: f64,
) -> Result<(FieldState, usize), SolverError> {
    grid.validate()?;
    band.validate()?;
    scheme.validate()?;
    state.validate(grid)?;
    if scheme.isothermal.is_some() && !pot.is_zero() {
        let worst = state
            .cells
            .iter()
            .zip(pot.grad.iter())
            .map(|(c, g)| c.u.dot(*g).abs())
            .fold(0.0_f64, f64::max);
        if worst > 1e-12 {
            log::warn!(
                "isothermal run with u . grad V up to {worst:.3e}: the frozen-temperature model drops the energy the potential pumps in"
            );
        }
    }
    let mut s = state;
    let mut steps = 0usize;
    let dt0 = scheme.max_dt(grid);
    while s.time < t_end - 1e-14 * t_end.max(1.0) {
        let dt = dt0.min(t_end - s.time);
        s = step(&s, grid, pot, band, scheme, dt)?;
        steps += 1;
    }
    Ok((s, steps))
}

// ---------------------------------------------------------------------------
// Collimation-regime reduced systems, |u| = 1

/// Direction + energy (+ passively advected density) fields for the
/// collimation integrators.
#[derive(Debug, Clone, PartialEq)]
pub struct CollimationState {
    pub n: Vec<f64>,
    pub u: Vec<Vec2>,
    pub e: Vec<f64>,
    pub time: f64,
}

impl CollimationState {
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> (f64, Vec2, f64)) -> Result<Self, SolverError> {
        let mut n = Vec::with_capacity(grid.n_cells());
        let mut u = Vec::with_capacity(grid.n_cells());
        let mut e = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.cells_y {
            for i in 0..grid.cells_x {
                let (nv, uv, ev) = f(grid.x_center(i), grid.y_center(j));
                let norm = uv.norm();
                if !(norm > 0.0) || !uv.is_finite() {
                    return Err(SolverError::InvalidSetup(format!(
                        "collimation direction undefined at cell ({i},{j})"
                    )));
                }
                if !(nv > 0.0) || !(ev > 0.0) {
                    return Err(SolverError::InvalidSetup(format!(
                        "need n > 0 and e > 0 at cell ({i},{j}), got n = {nv}, e = {ev}"
                    )));
                }
                n.push(nv);
                u.push(uv * (1.0 / norm));
                e.push(ev);
            }
        }
        Ok(Self {
            n,
            u,
            e,
            time: 0.0,
        })
    }
}

/// Upwind gradient of a scalar field, biased by the advecting velocity.
fn upwind_grad_scalar(
    field: &[f64],
    grid: &Grid,
    i: usize,
    j: usize,
    vel: Vec2,
) -> Vec2 {
    let idx = grid.idx(i, j);
    let v = field[idx];
    let gx = if vel.x >= 0.0 {
        (v - field[grid.idx(grid.shift_x(i, -1), j)]) / grid.dx
    } else {
        (field[grid.idx(grid.shift_x(i, 1), j)] - v) / grid.dx
    };
    let gy = if grid.is_1d() {
        0.0
    } else if vel.y >= 0.0 {
        (v - field[grid.idx(i, grid.shift_y(j, -1))]) / grid.dy
    } else {
        (field[grid.idx(i, grid.shift_y(j, 1))] - v) / grid.dy
    };
    Vec2::new(gx, gy)
}

/// Time derivatives of (u, e) for the collimation systems. The potential
/// couples to u only in the MB variant; the degenerate variant's u-advection
/// is potential-free (vanishing effective-mass tensor).
fn collimation_rhs(
    u: &[Vec2],
    e: &[f64],
    grid: &Grid,
    pot: &PotentialField,
    sigma: f64,
    couple_u: bool,
) -> (Vec<Vec2>, Vec<f64>) {
    let nx = grid.cells_x;
    let ux: Vec<f64> = u.iter().map(|v| v.x).collect();
    let uy: Vec<f64> = u.iter().map(|v| v.y).collect();
    let mut du = vec![Vec2::ZERO; u.len()];
    let mut de = vec![0.0; e.len()];
    du.par_iter_mut()
        .zip(de.par_iter_mut())
        .enumerate()
        .for_each(|(idx, (du_k, de_k))| {
            let j = idx / nx;
            let i = idx % nx;
            let vel = u[idx];
            let gx = upwind_grad_scalar(&ux, grid, i, j, vel);
            let gy = upwind_grad_scalar(&uy, grid, i, j, vel);
            let adv = Vec2::new(vel.dot(gx), vel.dot(gy));
            let mut d = -adv;
            if couple_u {
                let perp = vel.perp();
                d = d - perp * (sigma * 2.0 / e[idx] * perp.dot(pot.grad[idx]));
            }
            *du_k = d;
            let ge = upwind_grad_scalar(e, grid, i, j, vel);
            *de_k = -vel.dot(ge) - sigma * vel.dot(pot.grad[idx]);
        });
    (du, de)
}

/// Conservative Rusanov update of the passively advected density.
fn advect_density(n: &mut [f64], u: &[Vec2], grid: &Grid, dt: f64) {
    let nx = grid.cells_x;
    let ny = grid.cells_y;
    let flux_x = |f: i64, j: usize| -> f64 {
        let l = face_cell(f - 1, nx, grid.bc_x);
        let r = face_cell(f, nx, grid.bc_x);
        let (il, ir) = (grid.idx(l, j), grid.idx(r, j));
        0.5 * (n[il] * u[il].x + n[ir] * u[ir].x) - 0.5 * (n[ir] - n[il])
    };
    let flux_y = |i: usize, f: i64| -> f64 {
        let l = face_cell(f - 1, ny, grid.bc_y);
        let r = face_cell(f, ny, grid.bc_y);
        let (il, ir) = (grid.idx(i, l), grid.idx(i, r));
        0.5 * (n[il] * u[il].y + n[ir] * u[ir].y) - 0.5 * (n[ir] - n[il])
    };
    let mut next = vec![0.0; n.len()];
    for idx in 0..n.len() {
        let j = idx / nx;
        let i = idx % nx;
        let mut v = n[idx] - dt / grid.dx * (flux_x(i as i64 + 1, j) - flux_x(i as i64, j));
        if !grid.is_1d() {
            v -= dt / grid.dy * (flux_y(i, j as i64 + 1) - flux_y(i, j as i64));
        }
        next[idx] = v;
    }
    n.copy_from_slice(&next);
}

fn collimation_step(
    state: &mut CollimationState,
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    dt: f64,
    couple_u: bool,
) -> Result<(), SolverError> {
    let sigma = band.species.sign();
    // Heun: predictor, corrector, then direction renormalization.
    let (du1, de1) = collimation_rhs(&state.u, &state.e, grid, pot, sigma, couple_u);
    let u1: Vec<Vec2> = state
        .u
        .iter()
        .zip(&du1)
        .map(|(u, d)| *u + *d * dt)
        .collect();
    let e1: Vec<f64> = state.e.iter().zip(&de1).map(|(e, d)| e + d * dt).collect();
    let (du2, de2) = collimation_rhs(&u1, &e1, grid, pot, sigma, couple_u);

    advect_density(&mut state.n, &state.u, grid, dt);

    for idx in 0..state.u.len() {
        let u_new = state.u[idx] + (du1[idx] + du2[idx]) * (0.5 * dt);
        let norm = u_new.norm();
        // A direction field folding onto itself cancels before the
        // constraint is re-imposed. Losing 30% of the norm within one step
        // means the direction turned by order a radian across a single
        // cell: the smooth field is gone, renormalizing would fake one.
        if norm < 0.7 || !u_new.is_finite() {
            return Err(SolverError::Caustic {
                cell: idx,
                time: state.time,
                detail: format!("|u| collapsed to {norm:.3e} before renormalization"),
            });
        }
        state.u[idx] = u_new * (1.0 / norm);
        let e_new = state.e[idx] + 0.5 * dt * (de1[idx] + de2[idx]);
        if !(e_new > 0.0) || !e_new.is_finite() {
            return Err(SolverError::PositivityLoss {
                cell: idx,
                time: state.time,
                detail: format!("energy left (0, inf): e = {e_new}"),
            });
        }
        state.e[idx] = e_new;
        if !(state.n[idx] > 0.0) || !state.n[idx].is_finite() {
            return Err(SolverError::PositivityLoss {
                cell: idx,
                time: state.time,
                detail: format!("advected density n = {}", state.n[idx]),
            });
        }
    }
    state.time += dt;
    Ok(())
}

fn run_collimation(
    state: &mut CollimationState,
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    cfl: f64,
    t_end: f64,
    couple_u: bool,
) -> Result<usize, SolverError> {
    grid.validate()?;
    band.validate()?;
    if !(cfl > 0.0 && cfl <= 0.9) {
        return Err(SolverError::InvalidSetup(format!(
            "cfl factor must lie in (0, 0.9], got {cfl}"
        )));
    }
    let h = if grid.is_1d() {
        grid.dx
    } else {
        grid.dx.min(grid.dy)
    };
    let dt0 = cfl * h;
    let mut steps = 0usize;
    while state.time < t_end - 1e-14 * t_end.max(1.0) {
        let dt = dt0.min(t_end - state.time);
        collimation_step(state, grid, pot, band, dt, couple_u)?;
        steps += 1;
    }
    Ok(steps)
}

/// Collimated MB carriers: direction field steered by the transverse
/// potential gradient, energy advected with the parallel one.
pub fn run_collimation_mb(
    state: &mut CollimationState,
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    cfl: f64,
    t_end: f64,
) -> Result<usize, SolverError> {
    run_collimation(state, grid, pot, band, cfl, t_end, true)
}

/// Collimated degenerate carriers: the direction field never sees the
/// potential, only the energy equation does.
pub fn run_collimation_degenerate(
    state: &mut CollimationState,
    grid: &Grid,
    pot: &PotentialField,
    band: &BandConfig,
    cfl: f64,
    t_end: f64,
) -> Result<usize, SolverError> {
    run_collimation(state, grid, pot, band, cfl, t_end, false)
}

// ---------------------------------------------------------------------------
// Hyperbolicity diagnostic

#[derive(Debug, Clone, Copy)]
pub struct EigenReport {
    /// Eigenvalues of the directional flux Jacobian, sorted by real part.
    pub re: [f64; 4],
    pub im: [f64; 4],
    pub max_imag: f64,
    /// Largest modulus: the fastest signal speed in units of c.
    pub max_speed: f64,
    pub hyperbolic: bool,
}

/// Tolerance on spurious imaginary parts, in units of c.
pub const HYPERBOLIC_IMAG_TOL: f64 = 1e-7;

/// Eigenvalues of dF_dir/dU at the sample state, by fourth-order central
/// differences on the conserved variables.
pub fn hyperbolicity_probe(
    sample: &MomentState,
    regime: RegimeTag,
    direction: Vec2,
) -> Result<EigenReport, ClosureError> {
    let d = direction.unit_or_zero();
    if d == Vec2::ZERO {
        return Err(ClosureError::InvalidState(
            "probe direction must be nonzero".into(),
        ));
    }
    let u0 = to_cons(sample);
    let fdir = |u: &Cons| -> Result<Cons, ClosureError> {
        let p = to_prim(u);
        let t = closure_for_regime(regime, &p)?;
        let f = flux_x(&p, &t);
        let g = flux_y(&p, &t);
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = d.x * f[k] + d.y * g[k];
        }
        Ok(out)
    };
    let scale = u0[0].abs().max(u0[3].abs());
    let mut jac = Matrix4::<f64>::zeros();
    for col in 0..4 {
        let h = 1e-3 * u0[col].abs().max(1e-2 * scale);
        let probe = |mult: f64| -> Result<Cons, ClosureError> {
            let mut u = u0;
            u[col] += mult * h;
            fdir(&u)
        };
        let p2 = probe(2.0)?;
        let p1 = probe(1.0)?;
        let m1 = probe(-1.0)?;
        let m2 = probe(-2.0)?;
        for row in 0..4 {
            jac[(row, col)] =
                (-p2[row] + 8.0 * p1[row] - 8.0 * m1[row] + m2[row]) / (12.0 * h);
        }
    }
    let eig = jac.complex_eigenvalues();
    let mut pairs: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut re = [0.0; 4];
    let mut im = [0.0; 4];
    for (k, (r, i)) in pairs.iter().enumerate() {
        re[k] = *r;
        im[k] = *i;
    }
    let max_imag = im.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let max_speed = pairs
        .iter()
        .map(|(r, i)| r.hypot(*i))
        .fold(0.0_f64, f64::max);
    Ok(EigenReport {
        re,
        im,
        max_imag,
        max_speed,
        hyperbolic: max_imag <= HYPERBOLIC_IMAG_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Species};
    use std::f64::consts::PI;

    fn band() -> BandConfig {
        BandConfig::new(Species::ElectronUpper, None)
    }

    fn smooth_state(grid: &Grid) -> FieldState {
        let l = grid.length_x();
        FieldState::from_fn(grid, |x, _| {
            let n = 1.0 + 0.3 * (2.0 * PI * x / l).sin();
            MomentState::new(n, Vec2::new(0.2, 0.0), 2.2)
        })
    }

    #[test]
    fn uniform_state_is_fixed_point() {
        let grid = Grid::line(16, 0.1, Boundary::Periodic);
        let pot = PotentialField::zero(&grid);
        let s0 = FieldState::uniform(&grid, MomentState::new(1.0, Vec2::new(0.3, 0.0), 3.0));
        let scheme = HydroScheme::default();
        let s1 = step(&s0, &grid, &pot, &band(), &scheme, scheme.max_dt(&grid)).unwrap();
        for (a, b) in s0.cells.iter().zip(&s1.cells) {
            assert_eq!(a.n, b.n);
            assert_eq!(a.u, b.u);
            assert_eq!(a.e, b.e);
        }
    }

    #[test]
    fn mass_conserved_with_potential() {
        let grid = Grid::line(32, 0.2, Boundary::Periodic);
        let pot = PotentialField::gaussian_bump(&grid, 0.4, (3.2, 0.0), 0.8);
        let mut s = smooth_state(&grid);
        let scheme = HydroScheme {
            regime: RegimeTag::MaxwellBoltzmann,
            ..Default::default()
        };
        let m0 = s.total_mass(&grid);
        for _ in 0..50 {
            s = step(&s, &grid, &pot, &band(), &scheme, scheme.max_dt(&grid)).unwrap();
        }
        assert!((s.total_mass(&grid) - m0).abs() <= 1e-13 * m0);
    }

    #[test]
    fn momentum_energy_conserved_without_potential() {
        let grid = Grid::line(32, 0.2, Boundary::Periodic);
        let pot = PotentialField::zero(&grid);
        let mut s = smooth_state(&grid);
        let scheme = HydroScheme {
            regime: RegimeTag::MaxwellBoltzmann,
            ..Default::default()
        };
        let p0 = s.total_momentum(&grid);
        let e0 = s.total_energy(&grid);
        for _ in 0..50 {
            s = step(&s, &grid, &pot, &band(), &scheme, scheme.max_dt(&grid)).unwrap();
        }
        assert!((s.total_momentum(&grid) - p0).norm() <= 1e-12 * p0.norm().max(1.0));
        assert!((s.total_energy(&grid) - e0).abs() <= 1e-12 * e0);
    }

    #[test]
    fn cfl_gate_rejects_oversized_step() {
        let grid = Grid::line(16, 0.1, Boundary::Periodic);
        let pot = PotentialField::zero(&grid);
        let s = smooth_state(&grid);
        let err = step(&s, &grid, &pot, &band(), &HydroScheme::default(), 0.2).unwrap_err();
        assert!(matches!(err, SolverError::CflViolation { .. }));
    }

    #[test]
    fn probe_rest_state_spectrum_symmetric() {
        let s = MomentState::new(1.0, Vec2::ZERO, 3.0);
        let r = hyperbolicity_probe(&s, RegimeTag::Exact, Vec2::new(1.0, 0.0)).unwrap();
        assert!(r.hyperbolic, "imag {:.3e}", r.max_imag);
        assert!(r.max_speed <= 1.0 + 1e-6, "speed {}", r.max_speed);
        // Rest state: spectrum symmetric about zero.
        assert!((r.re[0] + r.re[3]).abs() < 1e-5);
        assert!((r.re[1] + r.re[2]).abs() < 1e-5);
    }

    #[test]
    fn probe_moving_and_collimated_states() {
        let s = MomentState::new(1.0, Vec2::new(0.5, 0.0), 2.0);
        let r = hyperbolicity_probe(&s, RegimeTag::MaxwellBoltzmann, Vec2::new(1.0, 0.0)).unwrap();
        assert!(r.hyperbolic, "imag {:.3e}", r.max_imag);
        assert!(r.max_speed <= 1.0 + 1e-6);

        let s = MomentState::new(1.0, Vec2::new(0.99, 0.0), 2.0);
        let r = hyperbolicity_probe(&s, RegimeTag::MaxwellBoltzmann, Vec2::new(1.0, 0.0)).unwrap();
        assert!(r.hyperbolic, "imag {:.3e}", r.max_imag);
        // Collimated spectrum accumulates near +c.
        assert!(r.re[3] > 0.9, "fastest {}", r.re[3]);
    }

    #[test]
    fn degenerate_collimation_ignores_potential() {
        let grid = Grid::line(32, 0.125, Boundary::Periodic);
        let l = grid.length_x();
        let init = |x: f64, _y: f64| {
            let th = 0.3 * (2.0 * PI * x / l).sin();
            (1.0, Vec2::new(th.cos(), th.sin()), 2.0)
        };
        let pot = PotentialField::gaussian_bump(&grid, 0.5, (2.0, 0.0), 0.6);
        let mut with_v = CollimationState::from_fn(&grid, init).unwrap();
        let mut no_v = CollimationState::from_fn(&grid, init).unwrap();
        run_collimation_degenerate(&mut with_v, &grid, &pot, &band(), 0.4, 1.0).unwrap();
        run_collimation_degenerate(&mut no_v, &grid, &PotentialField::zero(&grid), &band(), 0.4, 1.0)
            .unwrap();
        for (a, b) in with_v.u.iter().zip(&no_v.u) {
            assert!((*a - *b).norm() <= 1e-12);
        }
        // The energy field does see the potential.
        let de: f64 = with_v
            .e
            .iter()
            .zip(&no_v.e)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(de > 1e-6, "energy fields unexpectedly identical");
    }

    #[test]
    fn direction_field_breakup_raises_caustic() {
        let grid = Grid::line(64, 0.1, Boundary::Outflow);
        let mid = 0.5 * grid.length_x();
        // Oppositely directed beams separating at the center: the smooth
        // direction field cannot survive, the unit constraint collapses.
        let init = |x: f64, _y: f64| (1.0, Vec2::new((x - mid).signum(), 0.0), 2.0);
        let mut s = CollimationState::from_fn(&grid, init).unwrap();
        let pot = PotentialField::zero(&grid);
        let err = run_collimation_mb(&mut s, &grid, &pot, &band(), 0.4, 2.0).unwrap_err();
        assert!(matches!(err, SolverError::Caustic { .. }), "got {err:?}");
    }

    #[test]
    fn relaxation_drives_momentum_down() {
        let grid = Grid::line(16, 0.2, Boundary::Periodic);
        let pot = PotentialField::zero(&grid);
        let band = BandConfig::new(Species::ElectronUpper, Some(0.05));
        let s0 = FieldState::uniform(&grid, MomentState::new(1.0, Vec2::new(0.4, 0.0), 2.0));
        let scheme = HydroScheme {
            regime: RegimeTag::MaxwellBoltzmann,
            ..Default::default()
        };
        let (s1, _) = advance(s0, &grid, &pot, &band, &scheme, 0.5).unwrap();
        let u_final = s1.cells[0].u.norm();
        // 0.5 / 0.05 = 10 relaxation times: u should be essentially gone.
        assert!(u_final < 0.4 * (-9.0_f64).exp() * 2.0, "u = {u_final}");
    }

    #[test]
    fn isothermal_freezes_energy() {
        let grid = Grid::line(16, 0.2, Boundary::Periodic);
        let pot = PotentialField::uniform_slope(&grid, Vec2::new(0.1, 0.0));
        let scheme = HydroScheme {
            regime: RegimeTag::MaxwellBoltzmann,
            isothermal: Some(1.1),
            ..Default::default()
        };
        let s0 = smooth_state(&grid);
        let (s1, _) = advance(s0, &grid, &pot, &band(), &scheme, 0.3).unwrap();
        for c in &s1.cells {
            assert!((c.e - 2.2).abs() < 1e-12, "e = {}", c.e);
        }
    }
}
