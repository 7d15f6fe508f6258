//! Entropy-optimal moment closure for a single Dirac-cone band.
//!
//! The carrier distribution maximizing Fermi-Dirac entropy under the
//! constraints (n, u, e) is f(p) = 1/(exp(|p|/T - B.nu - A) + 1) with
//! nu = p/|p|. Its moments reduce to the angular-Fermi functions
//! AF_N^s(A, |B|), so the whole closure lives in (A, |B|, T):
//!
//!   n = n_T AF_0^2,  |u| = AF_1^2 / AF_0^2,  e = 2 T AF_0^3 / AF_0^2,
//!
//! with the thermal density n_T = T^2/(2 pi). This module maps both ways
//! between (n, u, e) and (A, B, T) and evaluates the flux tensors P
//! (pressure part), Q (inverse-mass moment) and S (energy flux) exactly
//! and in the Maxwell-Boltzmann, degenerate, and diffusive limits.

use crate::error::ClosureError;
use crate::special::{
    afermi, bessel_i_scaled, bessel_ratio_inverse, dfermi, fermi_integral_inverse, phi_int,
    PSI_MAX,
};
use crate::tensor::{SymMat2, Vec2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Relative tolerance requested from the angular quadrature; the closure
/// accuracy budget (1e-8 against the kinetic oracle) sits well above it.
const AF_TOL: f64 = 1e-12;

/// Below this |u| the dyadic tensor decomposition is 0/0; the isotropic
/// limits are exact to O(|u|) there, far below every test tolerance.
const U_ISOTROPIC: f64 = 1e-7;

/// Hydrodynamic state of one band, scaled units (c = hbar = k_B = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    /// Number density per area, n >= 0.
    pub n: f64,
    /// Mean direction vector, |u| < 1 (|u| = 1 only as the collimation limit).
    pub u: Vec2,
    /// Mean energy per particle, e > 0.
    pub e: f64,
}

impl MomentState {
    pub fn new(n: f64, u: Vec2, e: f64) -> Self {
        Self { n, u, e }
    }

    pub fn is_admissible(&self) -> bool {
        self.n >= 0.0
            && self.n.is_finite()
            && self.u.is_finite()
            && self.u.norm() < 1.0
            && self.e > 0.0
            && self.e.is_finite()
    }
}

/// Lagrange multipliers of the entropy-optimal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipliers {
    /// Scalar multiplier A (chemical-potential-like, in units of T).
    pub a: f64,
    /// Vector multiplier B, parallel to u.
    pub b: Vec2,
    /// Temperature T > 0, scaled units.
    pub temp: f64,
}

impl Multipliers {
    pub fn new(a: f64, b: Vec2, temp: f64) -> Self {
        Self { a, b, temp }
    }

    pub fn isotropic(a: f64, temp: f64) -> Self {
        Self::new(a, Vec2::ZERO, temp)
    }
}

/// Closure output: the tensors entering the fluxes of the moment system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureTensors {
    /// Pressure-like tensor, trace(p) = n exactly.
    pub p: SymMat2,
    /// Inverse-mass tensor coupling the force to the momentum balance.
    pub q: SymMat2,
    /// Energy flux vector.
    pub s_flux: Vec2,
}

/// Which closure variant a solver run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeTag {
    Exact,
    MaxwellBoltzmann,
    Degenerate,
    Diffusive,
}

/// Thermal density scale n_T = T^2 / (2 pi).
pub fn thermal_density(temp: f64) -> f64 {
    temp * temp / (2.0 * PI)
}

// ---------------------------------------------------------------------------
// Angular-moment bundle

/// The six AF_N^s values every closure evaluation needs. Derivatives with
/// respect to A and B close within the set:
/// d(AF_N^s)/dA = AF_N^(s-1), d(AF_N^s)/dB = (AF_(N-1)^(s-1)+AF_(N+1)^(s-1))/2.
#[derive(Debug, Clone, Copy)]
struct AfSet {
    i01: f64,
    i11: f64,
    i21: f64,
    i02: f64,
    i12: f64,
    i03: f64,
}

impl AfSet {
    fn eval(a: f64, b: f64) -> Self {
        let g = |n: u32, s: u32| {
            afermi(n, s, a, b, AF_TOL)
                .expect("angular quadrature converges for finite multipliers")
        };
        AfSet {
            i01: g(0, 1),
            i11: g(1, 1),
            i21: g(2, 1),
            i02: g(0, 2),
            i12: g(1, 2),
            i03: g(0, 3),
        }
    }

    fn speed(&self) -> f64 {
        self.i12 / self.i02
    }

    /// e / sqrt(2 pi n) with T eliminated: 2 AF_0^3 / (AF_0^2)^(3/2).
    fn energy_ratio(&self) -> f64 {
        2.0 * self.i03 / self.i02.powf(1.5)
    }
}

// ---------------------------------------------------------------------------
// Multipliers -> moments

/// Evaluates (n, u, e) from (A, B, T). Infallible for finite multipliers
/// with temp > 0.
pub fn multipliers_to_moments(m: &Multipliers) -> MomentState {
    debug_assert!(m.temp > 0.0 && m.a.is_finite() && m.b.is_finite());
    let b = m.b.norm();
    if b == 0.0 {
        let n = thermal_density(m.temp) * phi_int(2, m.a);
        let e = 2.0 * m.temp * phi_int(3, m.a) / phi_int(2, m.a);
        return MomentState::new(n, Vec2::ZERO, e);
    }
    let set = AfSet::eval(m.a, b);
    let n = thermal_density(m.temp) * set.i02;
    let e = 2.0 * m.temp * set.i03 / set.i02;
    let u = m.b.unit_or_zero() * set.speed();
    MomentState::new(n, u, e)
}

// ---------------------------------------------------------------------------
// Moments -> multipliers

/// Speed |u| carried by the degenerate state at sector angle psi.
pub fn degenerate_speed(psi: f64) -> f64 {
    dfermi(1, 2, psi) / dfermi(0, 2, psi)
}

/// Inverts degenerate_speed over psi in [0, 3pi/4). Monotone increasing
/// from 0 toward 1, so bisection is safe.
pub fn psi_from_speed(u: f64) -> Result<f64, ClosureError> {
    if !(0.0..1.0).contains(&u) {
        return Err(ClosureError::CollimationSingularity { u_mag: u });
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let hi = PSI_MAX - 1e-9;
    if degenerate_speed(hi) <= u {
        return Err(ClosureError::CollimationSingularity { u_mag: u });
    }
    let mut f = |psi: f64| degenerate_speed(psi) - u;
    crate::quad::bracketed_root(&mut f, 0.0, hi, 1e-14, "psi_from_speed")
        .map_err(ClosureError::from)
}

/// Smallest admissible e / sqrt(2 pi n) at speed |u|: the fully degenerate
/// state. States at or below this bound carry no Fermi-Dirac realization.
pub fn min_energy_ratio(u: f64) -> Result<f64, ClosureError> {
    let psi = psi_from_speed(u)?;
    Ok(2.0 * dfermi(0, 3, psi) / dfermi(0, 2, psi).powf(1.5))
}

/// Newton residuals at (a, b): match |u| and the T-eliminated energy ratio.
fn residuals(set: &AfSet, u: f64, erat: f64) -> (f64, f64) {
    (set.speed() - u, set.energy_ratio() - erat)
}

fn residual_norm(r: (f64, f64), erat: f64) -> f64 {
    r.0.abs().max(r.1.abs() / erat.max(1.0))
}

/// Damped Newton on (A, B) with the analytic Jacobian. Returns the last
/// residual norm on failure so the caller can decide about restarts.
fn newton_ab(u: f64, erat: f64, mut a: f64, mut b: f64) -> Result<(f64, f64, AfSet), f64> {
    let tol = 1e-11;
    let mut set = AfSet::eval(a, b);
    let mut r = residuals(&set, u, erat);
    let mut rn = residual_norm(r, erat);
    for _ in 0..60 {
        if rn <= tol {
            return Ok((a, b, set));
        }
        // Jacobian of (speed, energy_ratio) in (a, b).
        let d02_da = set.i01;
        let d02_db = set.i11;
        let d12_da = set.i11;
        let d12_db = 0.5 * (set.i01 + set.i21);
        let d03_da = set.i02;
        let d03_db = set.i12;
        let j11 = (d12_da * set.i02 - set.i12 * d02_da) / (set.i02 * set.i02);
        let j12 = (d12_db * set.i02 - set.i12 * d02_db) / (set.i02 * set.i02);
        let pref = 2.0 / set.i02.powf(1.5);
        let j21 = pref * (d03_da - 1.5 * set.i03 * d02_da / set.i02);
        let j22 = pref * (d03_db - 1.5 * set.i03 * d02_db / set.i02);
        let det = j11 * j22 - j12 * j21;
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(rn);
        }
        let da = (r.0 * j22 - r.1 * j12) / det;
        let db = (r.1 * j11 - r.0 * j21) / det;
        // Backtracking line search on the residual norm.
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let an = (a - lambda * da).clamp(-1e6, 1e6);
            let mut bn = b - lambda * db;
            if bn < 0.0 {
                bn = if u > 1e-13 { b * 0.25 } else { 0.0 };
            }
            bn = bn.min(1e7);
            let set_n = AfSet::eval(an, bn);
            let r_n = residuals(&set_n, u, erat);
            let rn_n = residual_norm(r_n, erat);
            if rn_n < rn {
                a = an;
                b = bn;
                set = set_n;
                r = r_n;
                rn = rn_n;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            return Err(rn);
        }
    }
    if rn <= 1e-10 * erat.max(1.0) {
        Ok((a, b, set))
    } else {
        Err(rn)
    }
}

/// First guess for (A, B) from the closed-form limits: Maxwell-Boltzmann
/// inversion when the state is hot, degenerate polar scaling when it is
/// cold.
fn initial_guess(n: f64, u: f64, erat: f64) -> Result<(f64, f64), ClosureError> {
    if erat >= 3.0 {
        // MB: e = 2T, n = n_T e^A I_0(B), |u| = I_1/I_0.
        let b = bessel_ratio_inverse(u)?;
        let e = erat * (2.0 * PI * n).sqrt();
        let t0 = 0.5 * e;
        let ln_i0 = b + bessel_i_scaled(0, b).ln();
        let a = (2.0 * PI * n / (t0 * t0)).ln() - ln_i0;
        return Ok((a, b));
    }
    let psi = psi_from_speed(u)?;
    let (cp, sp) = (psi.cos(), psi.sin());
    // The energy ratio decreases along the ray (A, B) = R (cos psi, sin psi)
    // toward its degenerate floor; bracket R if the target lies en route.
    let ray = |r: f64| AfSet::eval(r * cp, r * sp).energy_ratio() - erat;
    let (mut lo, mut hi) = (0.5, 4096.0);
    if ray(lo) > 0.0 && ray(hi) < 0.0 {
        for _ in 0..24 {
            let mid = 0.5 * (lo + hi);
            if ray(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        Ok((r * cp, r * sp))
    } else {
        Ok((cp, sp))
    }
}

/// Recovers (A, B, T) from (n, u, e). T is eliminated analytically via
/// T = sqrt(2 pi n / AF_0^2), leaving a 2x2 Newton solve in (A, B).
pub fn moments_to_multipliers(s: &MomentState) -> Result<Multipliers, ClosureError> {
    let u = s.u.norm();
    if u >= 1.0 || !u.is_finite() {
        return Err(ClosureError::CollimationSingularity { u_mag: u });
    }
    if !(s.n > 0.0) || !s.n.is_finite() || !(s.e > 0.0) || !s.e.is_finite() {
        return Err(ClosureError::InvalidState(format!(
            "need n > 0 and e > 0, got n = {}, e = {}",
            s.n, s.e
        )));
    }
    let erat = s.e / (2.0 * PI * s.n).sqrt();
    let floor = min_energy_ratio(u)?;
    if erat <= floor * (1.0 + 1e-12) {
        return Err(ClosureError::InvalidState(format!(
            "energy ratio e/sqrt(2 pi n) = {erat:.6e} at or below the degenerate bound {floor:.6e} for |u| = {u:.6e}"
        )));
    }

    if u < 1e-13 {
        // B = 0: single monotone equation 2 phi_3(A)/phi_2(A)^(3/2) = erat.
        let g = |a: f64| 2.0 * phi_int(3, a) / phi_int(2, a).powf(1.5) - erat;
        let (mut lo, mut hi) = (0.0, 0.0);
        while g(lo) < 0.0 {
            lo -= 8.0;
            if lo < -2000.0 {
                return Err(ClosureError::InvalidState("no bracket for A".into()));
            }
        }
        while g(hi) > 0.0 {
            hi += 8.0;
            if hi > 2000.0 {
                return Err(ClosureError::InvalidState("no bracket for A".into()));
            }
        }
        let mut gm = |a: f64| g(a);
        let a = crate::quad::bracketed_root(&mut gm, lo, hi, 1e-13, "moments_to_multipliers")?;
        let temp = (2.0 * PI * s.n / phi_int(2, a)).sqrt();
        return Ok(Multipliers::new(a, Vec2::ZERO, temp));
    }

    let (a0, b0) = initial_guess(s.n, u, erat)?;
    let mut attempt = newton_ab(u, erat, a0, b0);
    if attempt.is_err() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x006d_6570);
        for _ in 0..5 {
            let a_try = a0 + rng.gen_range(-1.5..1.5) * (1.0 + 0.3 * a0.abs());
            let b_try = (b0 * (1.0 + rng.gen_range(-0.6..0.6)) + rng.gen_range(0.0..0.5)).max(1e-6);
            attempt = newton_ab(u, erat, a_try, b_try);
            if attempt.is_ok() {
                break;
            }
        }
    }
    match attempt {
        Ok((a, b, set)) => {
            let temp = (2.0 * PI * s.n / set.i02).sqrt();
            Ok(Multipliers::new(a, s.u.unit_or_zero() * b, temp))
        }
        Err(rn) => Err(ClosureError::NonConvergence {
            residual: rn,
            iterations: 60,
            u_target: u,
            energy_ratio: erat,
        }),
    }
}

// ---------------------------------------------------------------------------
// Closure tensors

/// Exact closure tensors from a consistent (state, multipliers) pair.
pub fn closure_exact(s: &MomentState, m: &Multipliers) -> ClosureTensors {
    let b = m.b.norm();
    let set = AfSet::eval(m.a, b);
    let u_mag = s.u.norm();
    if u_mag < U_ISOTROPIC {
        return ClosureTensors {
            p: SymMat2::isotropic(0.5 * s.n),
            q: SymMat2::isotropic(0.5 * s.n * set.i01 / (m.temp * set.i02)),
            s_flux: Vec2::ZERO,
        };
    }
    let uhat = s.u.unit_or_zero();
    let i22 = afermi(2, 2, m.a, b, AF_TOL).expect("angular quadrature converges");
    let i13 = afermi(1, 3, m.a, b, AF_TOL).expect("angular quadrature converges");
    let p = SymMat2::from_axes(
        uhat,
        (set.i02 + i22) / (2.0 * set.i02),
        (set.i02 - i22) / (2.0 * set.i02),
    ) * s.n;
    let q = SymMat2::from_axes(
        uhat,
        0.5 * (set.i01 - set.i21),
        0.5 * (set.i01 + set.i21),
    ) * (s.n / (m.temp * set.i02));
    let s_flux = uhat * (2.0 * m.temp * s.n * i13 / set.i02);
    ClosureTensors { p, q, s_flux }
}

/// Maxwell-Boltzmann anisotropy factor X(|u|) = (I_0(B) + I_2(B))/(2 I_0(B))
/// with B the speed's Bessel-ratio preimage.
pub fn mb_anisotropy(u: f64) -> Result<f64, ClosureError> {
    let b = bessel_ratio_inverse(u)?;
    Ok(0.5 * (1.0 + bessel_i_scaled(2, b) / bessel_i_scaled(0, b)))
}

/// Maxwell-Boltzmann limit closure: S = n e u exactly, P and Q from X(|u|).
pub fn closure_mb(s: &MomentState) -> Result<ClosureTensors, ClosureError> {
    let u_mag = s.u.norm();
    if u_mag >= 1.0 {
        return Err(ClosureError::CollimationSingularity { u_mag });
    }
    let s_flux = s.u * (s.n * s.e);
    if u_mag < U_ISOTROPIC {
        return Ok(ClosureTensors {
            p: SymMat2::isotropic(0.5 * s.n),
            q: SymMat2::isotropic(s.n / s.e),
            s_flux,
        });
    }
    let x = mb_anisotropy(u_mag)?;
    let uhat = s.u.unit_or_zero();
    let p = SymMat2::from_axes(uhat, x, 1.0 - x) * s.n;
    let q = SymMat2::from_axes(uhat, 1.0 - x, x) * (2.0 * s.n / s.e);
    Ok(ClosureTensors { p, q, s_flux })
}

/// Degenerate-limit coefficient functions (Y, Z, Z_perp, W) of the sector
/// angle psi.
pub fn degenerate_coefficients(psi: f64) -> (f64, f64, f64, f64) {
    let f02 = dfermi(0, 2, psi);
    let f22 = dfermi(2, 2, psi);
    let f01 = dfermi(0, 1, psi);
    let f21 = dfermi(2, 1, psi);
    let f03 = dfermi(0, 3, psi);
    let f13 = dfermi(1, 3, psi);
    let y = (f02 + f22) / (2.0 * f02);
    let den = 2.0 * (2.0 * f02).sqrt();
    let z = (f01 - f21) / den;
    let zperp = (f01 + f21) / den;
    let w = f13 / f03;
    (y, z, zperp, w)
}

/// Strong-degeneracy closure: coefficients from the sector angle found by
/// inverting the speed relation.
pub fn closure_degenerate(s: &MomentState) -> Result<ClosureTensors, ClosureError> {
    let u_mag = s.u.norm();
    if u_mag >= 1.0 {
        return Err(ClosureError::CollimationSingularity { u_mag });
    }
    let qscale = (s.n / PI).sqrt();
    if u_mag < U_ISOTROPIC {
        return Ok(ClosureTensors {
            p: SymMat2::isotropic(0.5 * s.n),
            q: SymMat2::isotropic(0.5 * qscale),
            s_flux: Vec2::ZERO,
        });
    }
    let psi = psi_from_speed(u_mag)?;
    let (y, z, zperp, w) = degenerate_coefficients(psi);
    let uhat = s.u.unit_or_zero();
    Ok(ClosureTensors {
        p: SymMat2::from_axes(uhat, y, 1.0 - y) * s.n,
        q: SymMat2::from_axes(uhat, z, zperp) * qscale,
        s_flux: uhat * (w * s.n * s.e),
    })
}

/// Drift mobility n_T/T phi_1(phi_2^-1(n/n_T)): the coefficient of the
/// potential gradient in the diffusive flux.
pub fn mobility_general(n: f64, temp: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let nt = thermal_density(temp);
    let a = fermi_integral_inverse(2.0, n / nt).expect("positive density inverts");
    nt / temp * phi_int(1, a)
}

/// Maxwell-Boltzmann mobility n/T (small-density limit of the general law).
pub fn mobility_mb(n: f64, temp: f64) -> f64 {
    n / temp
}

/// Degenerate mobility sqrt(n/pi); temperature drops out.
pub fn mobility_degenerate(n: f64) -> f64 {
    (n / PI).sqrt()
}

/// Diffusive (u = 0) closure: isotropic P, mobility-valued Q, no flux.
pub fn closure_diffusive(n: f64, temp: f64) -> ClosureTensors {
    if n == 0.0 {
        return ClosureTensors {
            p: SymMat2::ZERO,
            q: SymMat2::ZERO,
            s_flux: Vec2::ZERO,
        };
    }
    ClosureTensors {
        p: SymMat2::isotropic(0.5 * n),
        q: SymMat2::isotropic(0.5 * mobility_general(n, temp)),
        s_flux: Vec2::ZERO,
    }
}

/// Regime dispatcher used by the field solvers.
pub fn closure_for_regime(
    regime: RegimeTag,
    s: &MomentState,
) -> Result<ClosureTensors, ClosureError> {
    match regime {
        RegimeTag::Exact => {
            let m = moments_to_multipliers(s)?;
            Ok(closure_exact(s, &m))
        }
        RegimeTag::MaxwellBoltzmann => closure_mb(s),
        RegimeTag::Degenerate => closure_degenerate(s),
        RegimeTag::Diffusive => {
            let m = moments_to_multipliers(&MomentState::new(s.n, Vec2::ZERO, s.e))?;
            Ok(closure_diffusive(s.n, m.temp))
        }
    }
}

/// The entropy-optimal occupation at momentum p (|p| > 0), in (0, 1).
pub fn mep_distribution(m: &Multipliers, p: Vec2) -> Result<f64, ClosureError> {
    let r = p.norm();
    if r == 0.0 || !p.is_finite() {
        return Err(ClosureError::InvalidState(
            "momentum direction undefined at p = 0".into(),
        ));
    }
    let nu = p * (1.0 / r);
    let x = r / m.temp - nu.dot(m.b) - m.a;
    Ok(if x > 0.0 {
        let t = (-x).exp();
        t / (1.0 + t)
    } else {
        1.0 / (x.exp() + 1.0)
    })
}
