//! Scalar special functions for the moment closure.
//!
//! The closure is built from three families:
//!
//! - the Fermi-Dirac integral of order s > 0,
//!   `phi_s(z) = (1/Gamma(s)) int_0^inf t^(s-1)/(e^(t-z)+1) dt`,
//! - modified Bessel functions `I_n(b) = (1/pi) int_0^pi cos(n th) e^(b cos th) d th`,
//! - the angular moments
//!   `AF_N^s(A,B) = (1/pi) int_0^pi cos(N th) phi_s(A + B cos th) d th`
//!   and their strong-degeneracy limits
//!   `DF_N^s(psi) = (1/(pi Gamma(s+1))) int_0^C(psi) cos(N th)
//!    (cos psi + sin psi cos th)^s d th`.
//!
//! phi_s uses the polylogarithm identity phi_s(z) = -Li_s(-e^z): an
//! alternating series where it converges geometrically, an eta-function
//! Taylor series around z = 0 for the integer orders the model actually
//! uses, reflection formulas on the large-z side, and Sommerfeld
//! asymptotics plus direct quadrature for non-integer orders.

use crate::error::SpecialError;
use crate::quad::{adaptive_gl, bracketed_root, fixed_gl, gl64, DEFAULT_REL_TOL};

use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Gamma

/// Lanczos approximation, g = 7, 9 terms.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the approximation in its accurate range.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn gamma(x: f64) -> f64 {
    if x > 0.0 && x == x.floor() && x < 23.0 {
        let mut acc = 1.0;
        let mut k = 2.0;
        while k < x {
            acc *= k;
            k += 1.0;
        }
        return acc;
    }
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        ln_gamma(x).exp()
    }
}

// ---------------------------------------------------------------------------
// Fermi-Dirac integrals

/// Dirichlet eta at integer arguments 3, 2, 1, 0, -1, ..., -32; entry k is
/// eta(3-k). Values from 30-digit arithmetic; eta(-2k) = 0.
const ETA_FROM_3: [f64; 36] = [
    0.901542677369695714,
    0.822467033424113218,
    0.693147180559945309,
    0.5,
    0.25,
    0.0,
    -0.125,
    0.0,
    0.25,
    0.0,
    -1.0625,
    0.0,
    7.75,
    0.0,
    -86.375,
    0.0,
    1365.25,
    0.0,
    -29049.03125,
    0.0,
    800572.75,
    0.0,
    -27741322.625,
    0.0,
    1180529130.25,
    0.0,
    -60523980051.6875,
    0.0,
    3679416778537.75,
    0.0,
    -261707609906583.875,
    0.0,
    21531418140800295.3,
    0.0,
    -2.02887755751730159e18,
    0.0,
];

/// eta(2n) for n = 1..=12, for the Sommerfeld expansion.
const ETA_EVEN: [f64; 12] = [
    0.822467033424113218,
    0.947032829497245918,
    0.985551091297435104,
    0.996233001852647899,
    0.999039507598271566,
    0.999757685143858191,
    0.999939170345979718,
    0.999984764214906106,
    0.999996187869610113,
    0.999999046611581522,
    0.999999761613230823,
    0.999999940398892395,
];

/// Alternating series sum_{k>=1} (-1)^(k+1) w^k / k^s = phi_s(ln w),
/// valid and fast for 0 <= w <= ~0.5.
fn alt_series(s: f64, w: f64) -> f64 {
    let mut term = w;
    let mut sum = w;
    let mut k = 1.0_f64;
    loop {
        k += 1.0;
        term *= -w;
        let add = term / k.powf(s);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() || k > 700.0 {
            return sum;
        }
    }
}

/// Same series with integer exponent (hot path).
fn alt_series_int(s: u32, w: f64) -> f64 {
    let mut term = w;
    let mut sum = w;
    let mut k = 1u32;
    loop {
        k += 1;
        term *= -w;
        let kf = k as f64;
        let kp = match s {
            1 => kf,
            2 => kf * kf,
            _ => kf * kf * kf,
        };
        let add = term / kp;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() || k > 700 {
            return sum;
        }
    }
}

/// Taylor series of phi_s around z = 0 for s in {2, 3}:
/// phi_s(z) = sum_k eta(s-k) z^k / k!, radius pi; used for |z| < 0.8.
fn eta_series(s: u32, z: f64) -> f64 {
    let offset = (3 - s) as usize;
    let mut sum = 0.0;
    let mut zk = 1.0; // z^k / k!
    for (k, eta) in ETA_FROM_3[offset..].iter().enumerate() {
        if k > 0 {
            zk *= z / k as f64;
        }
        sum += eta * zk;
    }
    sum
}

/// phi_s for the integer orders s = 1, 2, 3 used by the closure.
/// Accurate to a few ulps on the whole real line; never fails.
pub(crate) fn phi_int(s: u32, z: f64) -> f64 {
    debug_assert!((1..=3).contains(&s));
    match s {
        1 => {
            // ln(1 + e^z), stable on both tails.
            if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            }
        }
        2 => {
            if z.abs() < 0.8 {
                eta_series(2, z)
            } else if z < 0.0 {
                alt_series_int(2, z.exp())
            } else {
                // phi_2(z) + phi_2(-z) = z^2/2 + pi^2/6
                0.5 * z * z + PI * PI / 6.0 - alt_series_int(2, (-z).exp())
            }
        }
        _ => {
            if z.abs() < 0.8 {
                eta_series(3, z)
            } else if z < 0.0 {
                alt_series_int(3, z.exp())
            } else {
                // phi_3(z) - phi_3(-z) = z^3/6 + pi^2 z / 6
                z * z * z / 6.0 + PI * PI * z / 6.0 + alt_series_int(3, (-z).exp())
            }
        }
    }
}

/// Sommerfeld expansion for z >> 1:
/// phi_s(z) ~ (z^s/Gamma(s+1)) [1 + sum_n 2 eta(2n) s(s-1)...(s-2n+1) z^(-2n)].
/// Truncated at the smallest term; the neglected piece is O(e^-z).
fn phi_sommerfeld(s: f64, z: f64) -> f64 {
    let mut sum = 1.0;
    let mut poch = 1.0; // s (s-1) ... (s-2n+1)
    let mut last = f64::INFINITY;
    for (n, eta) in ETA_EVEN.iter().enumerate() {
        poch *= (s - 2.0 * n as f64) * (s - 2.0 * n as f64 - 1.0);
        let term = 2.0 * eta * poch / z.powi(2 * (n as i32 + 1));
        if term.abs() >= last || term == 0.0 {
            break;
        }
        sum += term;
        last = term.abs();
        if last < 1e-17 * sum.abs() {
            break;
        }
    }
    (s * z.ln() - ln_gamma(s + 1.0)).exp() * sum
}

/// Direct quadrature of the defining integral, for non-integer s in the
/// band where neither the series nor the asymptotics apply.
fn phi_quadrature(s: f64, z: f64) -> Result<f64, SpecialError> {
    // Fermi factor, stable against overflow on both sides.
    let fermi = |t: f64| {
        let d = t - z;
        if d > 0.0 {
            let e = (-d).exp();
            e / (1.0 + e)
        } else {
            1.0 / (d.exp() + 1.0)
        }
    };
    let knee = z.max(1.0);
    let breaks = [1.0, knee, knee + 12.0, knee + 30.0, knee + 64.0];

    // First panel [0, 1] with t = x^m soaking up the t^(s-1) endpoint power.
    let m = if s >= 2.0 { 1 } else { (2.0 / s).ceil() as i32 };
    let mf = m as f64;
    let mut f0 = |x: f64| {
        let t = x.powi(m);
        mf * x.powi(m - 1) * t.powf(s - 1.0) * fermi(t)
    };
    let mut panels: Vec<(f64, f64)> = Vec::new();
    let mut rough = fixed_gl(&mut f0, 0.0, 1.0, gl64());
    let mut f = |t: f64| t.powf(s - 1.0) * fermi(t);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            panels.push((w[0], w[1]));
            rough += fixed_gl(&mut f, w[0], w[1], gl64());
        }
    }
    let tol = 1e-14 * rough.abs().max(1e-280);
    let mut total = adaptive_gl(&mut f0, 0.0, 1.0, tol, "fermi_integral")?;
    for (a, b) in panels {
        total += adaptive_gl(&mut f, a, b, tol, "fermi_integral")?;
    }
    Ok(total / gamma(s))
}

fn near_int(s: f64) -> Option<u32> {
    let r = s.round();
    if (s - r).abs() < 1e-12 && (1.0..=3.0).contains(&r) {
        Some(r as u32)
    } else {
        None
    }
}

/// The Fermi-Dirac integral phi_s(z), s > 0. Strictly increasing in z,
/// positive, and phi_s(z) < e^z everywhere.
pub fn fermi_integral(s: f64, z: f64) -> Result<f64, SpecialError> {
    if !(s > 0.0) || !s.is_finite() || !z.is_finite() {
        return Err(SpecialError::Domain {
            func: "fermi_integral",
            detail: format!("need finite z and s > 0, got s = {s}, z = {z}"),
        });
    }
    if let Some(si) = near_int(s) {
        return Ok(phi_int(si, z));
    }
    if z.exp() <= 0.5 {
        Ok(alt_series(s, z.exp()))
    } else if z >= 20.0 {
        Ok(phi_sommerfeld(s, z))
    } else {
        phi_quadrature(s, z)
    }
}

/// Inverse of phi_s in z for fixed s: returns z with phi_s(z) = y.
pub fn fermi_integral_inverse(s: f64, y: f64) -> Result<f64, SpecialError> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(SpecialError::Domain {
            func: "fermi_integral_inverse",
            detail: format!("need finite y > 0, got {y}"),
        });
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(SpecialError::Domain {
            func: "fermi_integral_inverse",
            detail: format!("need s > 0, got {s}"),
        });
    }
    // phi_s(z) < e^z makes z = ln y a guaranteed lower bracket end; on the
    // degenerate side phi_s(z) ~ z^s / Gamma(s+1) supplies the upper end.
    let lo = y.ln();
    let mut hi = (lo + 2.0).max((gamma(s + 1.0) * y).powf(1.0 / s) + 2.0);
    let mut expand = 0;
    while fermi_integral(s, hi)? < y {
        hi = hi * 1.5 + 2.0;
        expand += 1;
        if expand > 200 {
            return Err(SpecialError::BracketFailure {
                func: "fermi_integral_inverse",
                detail: format!("no upper bracket for y = {y}"),
            });
        }
    }
    let mut g = |z: f64| fermi_integral(s, z).map_or(f64::NAN, |v| v - y);
    let x_tol = 1e-13 * hi.abs().max(1.0);
    bracketed_root(&mut g, lo, hi, x_tol, "fermi_integral_inverse")
}

// ---------------------------------------------------------------------------
// Modified Bessel functions

/// e^-b I_n(b). Series summed outward from its largest term for b below the
/// switch point, standard large-b asymptotics above it.
pub fn bessel_i_scaled(n: u32, b: f64) -> f64 {
    if b == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mu = 4.0 * (n as f64) * (n as f64);
    let switch = 45.0_f64.max(1.8 * mu);
    if b < switch {
        bessel_series_scaled(n, b)
    } else {
        bessel_asymptotic_scaled(mu, b)
    }
}

fn bessel_series_scaled(n: u32, b: f64) -> f64 {
    let nf = n as f64;
    // Peak term index of (b/2)^(2k+n)/(k!(k+n)!).
    let kstar = (0.5 * (-(nf + 1.0) + ((nf + 1.0) * (nf + 1.0) + b * b).sqrt()))
        .floor()
        .max(0.0);
    let ln_peak =
        -b + (2.0 * kstar + nf) * (0.5 * b).ln() - ln_gamma(kstar + 1.0) - ln_gamma(nf + kstar + 1.0);
    if ln_peak < -720.0 {
        return 0.0;
    }
    let q = 0.25 * b * b;
    // Terms relative to the peak, summed in both directions.
    let mut sum = 1.0;
    let mut t = 1.0;
    let mut k = kstar;
    while k > 0.0 {
        t *= k * (nf + k) / q;
        sum += t;
        if t < 1e-18 * sum {
            break;
        }
        k -= 1.0;
    }
    t = 1.0;
    k = kstar;
    loop {
        t *= q / ((k + 1.0) * (nf + k + 1.0));
        sum += t;
        k += 1.0;
        if t < 1e-18 * sum || k > kstar + 600.0 {
            break;
        }
    }
    ln_peak.exp() * sum
}

fn bessel_asymptotic_scaled(mu: f64, b: f64) -> f64 {
    let mut sum = 1.0;
    let mut t = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..=20 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        t *= -(mu - odd * odd) / (kf * 8.0 * b);
        if t.abs() >= last {
            break;
        }
        sum += t;
        last = t.abs();
        if last < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * b).sqrt()
}

/// I_n(b). Overflows to +inf for b beyond ~709; use [`bessel_i_scaled`]
/// for ratios at large argument.
pub fn bessel_i(n: u32, b: f64) -> Result<f64, SpecialError> {
    if !b.is_finite() || b < 0.0 {
        return Err(SpecialError::Domain {
            func: "bessel_i",
            detail: format!("need finite b >= 0, got {b}"),
        });
    }
    Ok(bessel_i_scaled(n, b) * b.exp())
}

/// Solves I_1(B)/I_0(B) = u for B, 0 <= u < 1. The ratio is strictly
/// increasing from 0 to 1, so the root is unique.
pub fn bessel_ratio_inverse(u: f64) -> Result<f64, SpecialError> {
    if !(0.0..1.0).contains(&u) {
        return Err(SpecialError::Domain {
            func: "bessel_ratio_inverse",
            detail: format!("need 0 <= u < 1, got {u}"),
        });
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let ratio = |b: f64| bessel_i_scaled(1, b) / bessel_i_scaled(0, b);
    // Interpolates B ~ 2u at small u and B ~ 1/(2(1-u)) near 1.
    let mut b = (u * (2.0 - u * u) / (1.0 - u * u)).max(1e-12);
    // Newton with r'(B) = (I_0 + I_2)/(2 I_0) - r^2, bisection fallback.
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    for _ in 0..200 {
        let r = ratio(b);
        if r > u {
            hi = hi.min(b);
        } else {
            lo = lo.max(b);
        }
        let x = 0.5 * (1.0 + bessel_i_scaled(2, b) / bessel_i_scaled(0, b));
        let dr = x - r * r;
        let step = (r - u) / dr;
        let mut next = b - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * b.max(1.0)
            };
        }
        if (next - b).abs() <= 1e-14 * b.abs().max(1e-300) {
            return Ok(next);
        }
        b = next;
    }
    Ok(b)
}

// ---------------------------------------------------------------------------
// Angular moments

/// Arguments of the angular-Fermi moment AF_N^s(A, B).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularFermiArgs {
    /// Harmonic index N >= 0.
    pub order_n: u32,
    /// Fermi order s > 0.
    pub order_s: f64,
    /// Scalar multiplier A (dimensionless).
    pub a: f64,
    /// Vector multiplier magnitude B = |B| >= 0.
    pub b: f64,
}

impl AngularFermiArgs {
    pub fn new(order_n: u32, order_s: f64, a: f64, b: f64) -> Self {
        Self {
            order_n,
            order_s,
            a,
            b,
        }
    }

    fn validate(&self) -> Result<(), SpecialError> {
        if !(self.order_s > 0.0) || !self.order_s.is_finite() {
            return Err(SpecialError::Domain {
                func: "angular_fermi",
                detail: format!("order_s must be positive, got {}", self.order_s),
            });
        }
        if !self.a.is_finite() || !self.b.is_finite() || self.b < 0.0 {
            return Err(SpecialError::Domain {
                func: "angular_fermi",
                detail: format!("need finite a and b >= 0, got a = {}, b = {}", self.a, self.b),
            });
        }
        Ok(())
    }
}

/// The opening angle of the region where A + B cos(theta) > 0:
/// pi if A >= B, 0 if A <= -B, arccos(-A/B) in between (the real part of
/// the complex arccos outside [-1, 1]).
pub fn critical_angle(a: f64, b: f64) -> f64 {
    debug_assert!(b >= 0.0);
    if a >= b {
        PI
    } else if a <= -b {
        0.0
    } else {
        (-a / b).acos()
    }
}

/// Shared adaptive driver for the theta integrals: splits at the critical
/// angle (the only place the integrand has concentrated curvature), sets
/// the absolute budget from the L1 size of the integrand, then refines.
fn theta_integral(
    f: &mut impl FnMut(f64) -> f64,
    split: f64,
    rel_tol: f64,
    func: &'static str,
) -> Result<f64, SpecialError> {
    let mut edges = vec![0.0];
    if split > 1e-12 && split < PI - 1e-12 {
        edges.push(split);
    }
    edges.push(PI);
    let mut scale = 0.0;
    for w in edges.windows(2) {
        scale += fixed_gl(&mut |t| f(t).abs(), w[0], w[1], gl64());
    }
    let tol = rel_tol * scale.abs().max(1e-290);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += adaptive_gl(f, w[0], w[1], tol, func)?;
    }
    Ok(total)
}

/// AF_N^s(A,B) with an explicit relative tolerance; integer orders take
/// the fast phi path.
pub(crate) fn angular_fermi_tol(
    args: &AngularFermiArgs,
    rel_tol: f64,
) -> Result<f64, SpecialError> {
    args.validate()?;
    let &AngularFermiArgs {
        order_n: n,
        order_s: s,
        a,
        b,
    } = args;
    if b == 0.0 {
        return if n == 0 {
            fermi_integral(s, a)
        } else {
            Ok(0.0)
        };
    }
    let nf = n as f64;
    let split = critical_angle(a, b);
    let value = if let Some(si) = near_int(s) {
        let mut f = |th: f64| (nf * th).cos() * phi_int(si, a + b * th.cos());
        theta_integral(&mut f, split, rel_tol, "angular_fermi")?
    } else {
        let mut err = None;
        let mut f = |th: f64| match fermi_integral(s, a + b * th.cos()) {
            Ok(v) => (nf * th).cos() * v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        };
        let v = theta_integral(&mut f, split, rel_tol, "angular_fermi")?;
        if let Some(e) = err {
            return Err(e);
        }
        v
    };
    Ok(value / PI)
}

/// The angular-Fermi moment AF_N^s(A,B).
pub fn angular_fermi(args: &AngularFermiArgs) -> Result<f64, SpecialError> {
    angular_fermi_tol(args, DEFAULT_REL_TOL * 1e-2)
}

/// Hot-path helper for the closure: integer order, no arg struct.
pub(crate) fn afermi(n: u32, s: u32, a: f64, b: f64, rel_tol: f64) -> Result<f64, SpecialError> {
    angular_fermi_tol(&AngularFermiArgs::new(n, s as f64, a, b), rel_tol)
}

// ---------------------------------------------------------------------------
// Degenerate angular moments

/// Multiplier pair in polar form: (A, B) = (R cos psi, R sin psi).
/// The admissible sector is 0 <= psi < 3pi/4; beyond it the occupied
/// momentum region collapses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarMultiplier {
    pub r: f64,
    pub psi: f64,
}

impl PolarMultiplier {
    pub fn new(r: f64, psi: f64) -> Self {
        Self { r, psi }
    }

    pub fn from_cartesian(a: f64, b: f64) -> Self {
        Self {
            r: a.hypot(b),
            psi: b.atan2(a),
        }
    }

    pub fn a(&self) -> f64 {
        self.r * self.psi.cos()
    }

    pub fn b(&self) -> f64 {
        self.r * self.psi.sin()
    }
}

pub(crate) const PSI_MAX: f64 = 3.0 * PI / 4.0;

fn degenerate_cutoff(psi: f64) -> f64 {
    // critical_angle(cos psi, sin psi): pi for psi <= pi/4, else
    // arccos(-cot psi).
    critical_angle(psi.cos(), psi.sin())
}

/// Exact closed form for integer s: the integrand is a trigonometric
/// polynomial, so expand (cos psi + sin psi cos th)^s binomially, reduce
/// cos^m th to harmonics, and integrate term by term.
pub(crate) fn degenerate_angular_int(n: u32, s: u32, psi: f64) -> f64 {
    let c = degenerate_cutoff(psi);
    let (cp, sp) = (psi.cos(), psi.sin());
    // primitive: int_0^C cos(k th) d th
    let prim = |k: f64| if k == 0.0 { c } else { (k * c).sin() / k };
    let mut total = 0.0;
    let mut binom = 1.0;
    for m in 0..=s {
        if m > 0 {
            binom *= (s - m + 1) as f64 / m as f64;
        }
        let coeff = binom * cp.powi((s - m) as i32) * sp.powi(m as i32);
        // cos^m th = 2^-m sum_k C(m,k) cos((m-2k) th)
        let mut cm = 1.0;
        let mut harm = 0.0;
        for k in 0..=m {
            if k > 0 {
                cm *= (m - k + 1) as f64 / k as f64;
            }
            let j = (m as i64 - 2 * k as i64).unsigned_abs() as f64;
            // int cos(N th) cos(j th) = [prim(N-j) + prim(N+j)] / 2
            harm += cm * 0.5 * (prim(n as f64 - j) + prim(n as f64 + j));
        }
        total += coeff * harm / 2.0_f64.powi(m as i32);
    }
    total / (PI * gamma(s as f64 + 1.0))
}

/// Quadrature route for general s, also used as the cross-check for the
/// closed form. Substituting th = C - x^2 turns the (C - th)^s endpoint
/// behavior into a smooth odd function of x.
fn degenerate_angular_quad(n: u32, s: f64, psi: f64, rel_tol: f64) -> Result<f64, SpecialError> {
    let c = degenerate_cutoff(psi);
    if c == 0.0 {
        return Ok(0.0);
    }
    let (cp, sp) = (psi.cos(), psi.sin());
    let nf = n as f64;
    // On the collapsed branch cos C = -cp/sp, so the occupation factor
    // cp + sp cos th equals 2 sp sin((C+th)/2) sin((C-th)/2) exactly.
    // Evaluating the product keeps full relative accuracy near the
    // cutoff, where the direct sum cancels to the roundoff of cp.
    let collapsed = c < PI;
    let mut f = |x: f64| {
        let th = c - x * x;
        let base = if collapsed {
            2.0 * sp * (c - 0.5 * x * x).sin() * (0.5 * x * x).sin()
        } else {
            (cp + sp * th.cos()).max(0.0)
        };
        2.0 * x * (nf * th).cos() * base.powf(s)
    };
    let root = c.sqrt();
    let scale = fixed_gl(&mut |x| f(x).abs(), 0.0, root, gl64());
    let v = adaptive_gl(
        &mut f,
        0.0,
        root,
        rel_tol * scale.abs().max(1e-290),
        "degenerate_angular",
    )?;
    Ok(v / (PI * gamma(s + 1.0)))
}

/// The degenerate angular moment DF_N^s(psi), psi in [0, 3pi/4).
pub fn degenerate_angular(n: u32, s: f64, psi: f64) -> Result<f64, SpecialError> {
    if !(0.0..PSI_MAX).contains(&psi) {
        return Err(SpecialError::Domain {
            func: "degenerate_angular",
            detail: format!("psi = {psi} outside [0, 3pi/4)"),
        });
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(SpecialError::Domain {
            func: "degenerate_angular",
            detail: format!("order_s must be positive, got {s}"),
        });
    }
    let r = s.round();
    if (s - r).abs() < 1e-12 && (1.0..=40.0).contains(&r) {
        Ok(degenerate_angular_stable(n, r as u32, psi))
    } else {
        degenerate_angular_quad(n, s, psi, DEFAULT_REL_TOL * 1e-2)
    }
}

/// Integer order with the cancellation guard: the closed form sums
/// primitives of size O(C) toward a result of size O(C^(2s+1)), so once
/// the cutoff C collapses it loses 2s digits per decade. The substituted
/// quadrature keeps full relative accuracy there, and a sub-0.35 cutoff
/// is one smooth panel, so its budget cannot be exhausted.
fn degenerate_angular_stable(n: u32, s: u32, psi: f64) -> f64 {
    if degenerate_cutoff(psi) < 0.35 {
        degenerate_angular_quad(n, s as f64, psi, DEFAULT_REL_TOL * 1e-2)
            .expect("single-panel quadrature over a collapsed sector")
    } else {
        degenerate_angular_int(n, s, psi)
    }
}

/// Hot-path helper: integer order, no validation.
pub(crate) fn dfermi(n: u32, s: u32, psi: f64) -> f64 {
    degenerate_angular_stable(n, s, psi)
}
