//! Brute-force kinetic moments: direct 2D momentum-space quadrature of the
//! entropy-optimal distribution. Ground truth for the closure formulas --
//! nothing here touches the angular-Fermi machinery.

use crate::closure::{ClosureTensors, MomentState, Multipliers};
use crate::error::OracleError;
use crate::quad::gauss_legendre;
use crate::tensor::{SymMat2, Vec2};

use rayon::prelude::*;
use std::f64::consts::PI;

/// Node counts and radial extent of the product quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per radial panel (three panels per ray).
    pub radial_nodes: usize,
    /// Equispaced angular nodes over [0, 2 pi) (trapezoid rule, spectrally
    /// accurate for periodic integrands).
    pub angular_nodes: usize,
    /// Upper |p| bound; the tail beyond it must be negligible.
    pub radial_cutoff: f64,
}

impl QuadratureSpec {
    /// Default resolution: the distribution decays like e^(-|p|/T) beyond
    /// the Fermi edge T(A+B), so 60 thermal lengths of headroom keep the
    /// tail under 1e-20. The trapezoid rule converges like e^(-w n) with
    /// strip width w ~ pi/B (the occupation factor's nearest complex pole),
    /// so the angular count grows with B to hold ~12 digits.
    pub fn default_for(m: &Multipliers) -> Self {
        let b = m.b.norm();
        QuadratureSpec {
            radial_nodes: 160,
            angular_nodes: 512.max((9.0 * b).ceil() as usize),
            radial_cutoff: m.temp * (m.a + b + 60.0).max(60.0),
        }
    }

    /// Same cutoff, doubled node counts; for convergence checks.
    pub fn doubled(&self) -> Self {
        QuadratureSpec {
            radial_nodes: self.radial_nodes * 2,
            angular_nodes: self.angular_nodes * 2,
            radial_cutoff: self.radial_cutoff,
        }
    }

    fn validate(&self) -> Result<(), OracleError> {
        if self.radial_nodes < 8 || self.angular_nodes < 8 {
            return Err(OracleError::InvalidSpec(format!(
                "need at least 8 nodes per direction, got {} x {}",
                self.radial_nodes, self.angular_nodes
            )));
        }
        if !(self.radial_cutoff > 0.0) || !self.radial_cutoff.is_finite() {
            return Err(OracleError::InvalidSpec(format!(
                "radial_cutoff must be positive, got {}",
                self.radial_cutoff
            )));
        }
        Ok(())
    }
}

/// Per-ray radial sums of f against {1, rho, rho^2}.
fn radial_moments(
    rule: &[(f64, f64)],
    edges: &[f64],
    inv_t: f64,
    shift: f64, // A + B cos(theta)
) -> (f64, f64, f64) {
    let mut r0 = 0.0;
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for &(x, wt) in rule {
            let rho = mid + half * x;
            let arg = rho * inv_t - shift;
            let f = if arg > 0.0 {
                let e = (-arg).exp();
                e / (1.0 + e)
            } else {
                1.0 / (arg.exp() + 1.0)
            };
            let wf = wt * half * f;
            r0 += wf;
            r1 += wf * rho;
            r2 += wf * rho * rho;
        }
    }
    (r0, r1, r2)
}

/// All six moments of the distribution at `m` by polar quadrature with the
/// phase-space measure d^2p/(2 pi)^2. Deterministic for a fixed spec: the
/// parallel map is reduced in index order.
pub fn oracle_moments(
    m: &Multipliers,
    spec: &QuadratureSpec,
) -> Result<(MomentState, ClosureTensors), OracleError> {
    spec.validate()?;
    if !(m.temp > 0.0) || !m.a.is_finite() || !m.b.is_finite() {
        return Err(OracleError::InvalidSpec(format!(
            "multipliers out of domain: a = {}, |b| = {}, temp = {}",
            m.a,
            m.b.norm(),
            m.temp
        )));
    }
    let b_mag = m.b.norm();
    let t = m.temp;
    let inv_t = 1.0 / t;
    let cutoff = spec.radial_cutoff;
    let rule = gauss_legendre(spec.radial_nodes);
    let n_ang = spec.angular_nodes;

    // Work in the frame with B along +x; rotate the results back at the end.
    let rays: Vec<[f64; 12]> = (0..n_ang)
        .into_par_iter()
        .map(|j| {
            let th = 2.0 * PI * (j as f64) / (n_ang as f64);
            let (sn, cs) = th.sin_cos();
            let shift = m.a + b_mag * cs;
            // Panel edges hugging the Fermi edge at rho = T(A + B cos th),
            // where f drops from 1 to 0 over a few thermal lengths.
            let mu = (t * shift).clamp(0.0, cutoff);
            let lo = (mu - 25.0 * t).clamp(0.0, cutoff);
            let hi = (mu + 25.0 * t).clamp(0.0, cutoff);
            let edges = [0.0, lo, hi, cutoff];
            let (r0, r1, r2) = radial_moments(&rule, &edges, inv_t, shift);
            [
                r1,           // n
                r1 * cs,      // n u_x
                r1 * sn,      // n u_y
                r2,           // n e
                r1 * cs * cs, // P_xx
                r1 * cs * sn, // P_xy
                r1 * sn * sn, // P_yy
                r0 * sn * sn, // Q_xx   (nu_perp = (-sin, cos))
                -r0 * sn * cs, // Q_xy
                r0 * cs * cs, // Q_yy
                r2 * cs,      // S_x
                r2 * sn,      // S_y
            ]
        })
        .collect();
    let mut acc = [0.0_f64; 12];
    for ray in &rays {
        for (a, v) in acc.iter_mut().zip(ray) {
            *a += v;
        }
    }
    // Prefactor: 1/(2 pi)^2 from the measure, 2 pi / n_ang from the rule.
    let pref = (2.0 * PI / n_ang as f64) / (2.0 * PI * 2.0 * PI);
    for a in acc.iter_mut() {
        *a *= pref;
    }

    // Tail audit at the cutoff, along the most slowly decaying ray.
    let edge_arg = cutoff * inv_t - (m.a + b_mag);
    let f_edge = if edge_arg > 0.0 {
        (-edge_arg).exp()
    } else {
        1.0
    };
    let tail = f_edge * t * (cutoff * cutoff + 2.0 * cutoff * t + 2.0 * t * t) / (2.0 * PI);
    let tail_fraction = tail / acc[3].max(f64::MIN_POSITIVE);
    if tail_fraction > 1e-12 {
        return Err(OracleError::CutoffTooSmall {
            cutoff,
            tail_fraction,
        });
    }

    let n = acc[0];
    let u_aligned = Vec2::new(acc[1] / n, acc[2] / n);
    let e = acc[3] / n;
    let p_aligned = SymMat2::new(acc[4], acc[5], acc[6]);
    let q_aligned = SymMat2::new(acc[7], acc[8], acc[9]);
    let s_aligned = Vec2::new(acc[10], acc[11]);

    // Rotate x-hat onto the b direction (identity when B = 0).
    let bhat = if b_mag > 0.0 {
        m.b.unit_or_zero()
    } else {
        Vec2::new(1.0, 0.0)
    };
    let rot_v = |v: Vec2| {
        Vec2::new(
            bhat.x * v.x - bhat.y * v.y,
            bhat.y * v.x + bhat.x * v.y,
        )
    };
    let rot_m = |mm: SymMat2| {
        let (c, s) = (bhat.x, bhat.y);
        SymMat2::new(
            c * c * mm.xx - 2.0 * c * s * mm.xy + s * s * mm.yy,
            c * s * (mm.xx - mm.yy) + (c * c - s * s) * mm.xy,
            s * s * mm.xx + 2.0 * c * s * mm.xy + c * c * mm.yy,
        )
    };

    Ok((
        MomentState::new(n, rot_v(u_aligned), e),
        ClosureTensors {
            p: rot_m(p_aligned),
            q: rot_m(q_aligned),
            s_flux: rot_v(s_aligned),
        },
    ))
}
