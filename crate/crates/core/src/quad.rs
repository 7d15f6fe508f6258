//! Gauss-Legendre quadrature with adaptive bisection, plus a bracketed
//! scalar root finder. These are the only numerical kernels shared by the
//! special-function layer and the solvers.

use std::sync::OnceLock;

use crate::error::SpecialError;

/// Default relative tolerance for scalar roots and quadratures.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
/// Computed once by Newton iteration on the Legendre recurrence; accurate
/// to a few ulps for the orders used here.
pub(crate) fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: evaluates P_n(x) and P_n'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
    }
    // Mirror to the full rule, symmetric about 0.
    let mut full = Vec::with_capacity(n);
    for &(x, w) in &rule {
        full.push((-x, w));
    }
    if n % 2 == 1 {
        full.pop();
    }
    for &(x, w) in rule.iter().rev() {
        full.push((x, w));
    }
    full.sort_by(|a, b| a.0.total_cmp(&b.0));
    full
}

pub fn gl32() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

pub fn gl64() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

/// Integrate f over [a, b] with a fixed rule.
pub fn fixed_gl(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for &(x, w) in rule {
        acc += w * f(c + h * x);
    }
    acc * h
}

/// Same, but also returns the integral of |f|, the panel's roundoff scale.
fn fixed_gl_abs(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rule: &[(f64, f64)]) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    let mut mass = 0.0;
    for &(x, w) in rule {
        let v = w * f(c + h * x);
        acc += v;
        mass += v.abs();
    }
    (acc * h, mass * h)
}

/// Adaptive Gauss-Legendre on [a, b]: each panel is accepted when the GL-64
/// value agrees with the sum of its two GL-64 halves. `abs_tol` is the
/// per-call absolute target; panels split depth-first (deterministic order)
/// until the summed error estimate is below it.
pub fn adaptive_gl(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    func: &'static str,
) -> Result<f64, SpecialError> {
    struct Panel {
        a: f64,
        b: f64,
        coarse: f64,
        depth: u32,
    }
    let mut total = 0.0;
    let mut evals: usize = 0;
    let coarse0 = fixed_gl(f, a, b, gl64());
    let mut stack = vec![Panel {
        a,
        b,
        coarse: coarse0,
        depth: 0,
    }];
    while let Some(p) = stack.pop() {
        let mid = 0.5 * (p.a + p.b);
        let (left, lmass) = fixed_gl_abs(f, p.a, mid, gl64());
        let (right, rmass) = fixed_gl_abs(f, mid, p.b, gl64());
        evals += 128;
        let fine = left + right;
        let err = (fine - p.coarse).abs();
        // Per-panel share of the budget, relaxed with depth so the total
        // stays bounded by ~abs_tol regardless of how the splits fall. The
        // second bound is the panel's f64 noise floor: under it, splitting
        // only chases roundoff. Floor-accepted panels contribute at most
        // ~5e-16 * int |f| in total.
        let floor = 5e-16 * (lmass + rmass);
        if err <= abs_tol * 0.5_f64.powi(p.depth.min(40) as i32) || err <= floor {
            total += fine;
            continue;
        }
        if p.depth >= 48 {
            if err > abs_tol {
                return Err(SpecialError::QuadratureNonConvergence {
                    func,
                    tol: abs_tol,
                    detail: format!(
                        "panel [{}, {}] error {err:e} at max depth ({evals} evaluations)",
                        p.a, p.b
                    ),
                });
            }
            total += fine;
            continue;
        }
        if evals > 4_000_000 {
            return Err(SpecialError::QuadratureNonConvergence {
                func,
                tol: abs_tol,
                detail: format!("evaluation budget exhausted ({evals} evaluations)"),
            });
        }
        stack.push(Panel {
            a: mid,
            b: p.b,
            coarse: right,
            depth: p.depth + 1,
        });
        stack.push(Panel {
            a: p.a,
            b: mid,
            coarse: left,
            depth: p.depth + 1,
        });
    }
    Ok(total)
}

/// Find the root of a monotone continuous f on [lo, hi] (f(lo), f(hi) must
/// bracket zero). Bisection with a secant-accelerated midpoint; converges
/// for any monotone f, fast for smooth ones.
pub fn bracketed_root(
    f: &mut impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    func: &'static str,
) -> Result<f64, SpecialError> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(SpecialError::BracketFailure {
            func,
            detail: format!("f({lo}) = {flo:e} and f({hi}) = {fhi:e} have the same sign"),
        });
    }
    for iter in 0..200 {
        // Secant proposal, clamped into the middle 90% of the bracket;
        // every other iteration force a plain bisection step to guarantee
        // the bracket halves at a geometric rate.
        let mid = if iter % 2 == 0 {
            0.5 * (lo + hi)
        } else {
            let s = lo - flo * (hi - lo) / (fhi - flo);
            let guard = 0.05 * (hi - lo);
            s.clamp(lo + guard, hi - guard)
        };
        let fmid = f(mid);
        if fmid == 0.0 || (hi - lo).abs() <= x_tol {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
            fhi = fmid;
        }
    }
    Ok(0.5 * (lo + hi))
}
