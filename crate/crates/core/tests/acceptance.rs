//! Whole-project acceptance gate: ten scripted checks, one printed line each.
//!
//!     cargo test -p graphene-mep --test acceptance -- --nocapture
//!
//! Every tolerance is pinned here on purpose. A red line means the product
//! misses the contract for that check; loosening the number is not a fix.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use graphene_mep::closure::{
    closure_exact, degenerate_coefficients, mb_anisotropy, min_energy_ratio,
    moments_to_multipliers, multipliers_to_moments, psi_from_speed, MomentState, Multipliers,
    RegimeTag,
};
use graphene_mep::diffusion::{
    relaxation_limit_study, steady_state_1d, DiffusionModel, MobilityLaw,
};
use graphene_mep::grid::{BandConfig, Boundary, FieldState, Grid, PotentialField, Species};
use graphene_mep::hydro::{
    hyperbolicity_probe, run_collimation_degenerate, step, CollimationState, HydroScheme,
};
use graphene_mep::oracle::{oracle_moments, QuadratureSpec};
use graphene_mep::scenario::{parse_config, run_scenario};
use graphene_mep::special::{angular_fermi, bessel_i, degenerate_angular, AngularFermiArgs};
use graphene_mep::tensor::{SymMat2, Vec2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Small shared helpers

fn frob(m: &SymMat2) -> f64 {
    (m.xx * m.xx + 2.0 * m.xy * m.xy + m.yy * m.yy).sqrt()
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn tensor_rel(a: &SymMat2, b: &SymMat2, floor: f64) -> f64 {
    let d = SymMat2::new(a.xx - b.xx, a.xy - b.xy, a.yy - b.yy);
    frob(&d) / frob(b).max(floor)
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

fn logspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

/// Least-squares slope of ln y against ln x.
fn fit_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Geometric-mean amplitude of y = amp * x^p with the exponent pinned.
fn fit_amplitude(xs: &[f64], ys: &[f64], p: f64) -> f64 {
    let s: f64 = xs.iter().zip(ys).map(|(x, y)| y.ln() - p * x.ln()).sum();
    (s / xs.len() as f64).exp()
}

/// Tracks the largest error-to-tolerance ratio seen, with a description of
/// where it happened. A check passes while the ratio stays at or below one.
struct Worst {
    margin: f64,
    what: String,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: 0.0,
            what: "no deviation measured".into(),
        }
    }

    fn push(&mut self, err: f64, tol: f64, what: impl FnOnce() -> String) {
        let margin = err / tol;
        if !margin.is_finite() || margin > self.margin {
            self.margin = if margin.is_finite() {
                margin
            } else {
                f64::INFINITY
            };
            self.what = what();
        }
    }

    fn ok(&self) -> bool {
        self.margin <= 1.0
    }

    fn verdict(&self, label: &str) -> Result<String, String> {
        let line = format!(
            "{label}; worst {:.3} of tolerance ({})",
            self.margin, self.what
        );
        if self.ok() {
            Ok(line)
        } else {
            Err(line)
        }
    }
}

// ---------------------------------------------------------------------------
// 1. Exact closure against the brute-force kinetic quadrature

fn closure_against_oracle() -> Result<String, String> {
    let dir = Vec2::new(0.37f64.cos(), 0.37f64.sin());
    let temps: [f64; 3] = [0.5, 1.0, 2.0];
    let mut worst = Worst::new();
    let mut count = 0usize;
    for &a in &linspace(-15.0, 150.0, 15) {
        for &b in &linspace(0.0, 0.9 * a.abs().max(1.0) * 2.0, 15) {
            for &t in &temps {
                let m = Multipliers::new(a, dir * b, t);
                let spec = QuadratureSpec::default_for(&m);
                let (so, to) = oracle_moments(&m, &spec)
                    .map_err(|e| format!("oracle failed at A={a:.2}, B={b:.3}, T={t}: {e}"))?;
                let s = multipliers_to_moments(&m);
                let tens = closure_exact(&s, &m);
                let q_tol = if so.u.norm() > 0.95 { 1e-6 } else { 1e-8 };
                let checks = [
                    ("n", rel(s.n, so.n, 1e-300), 1e-8),
                    ("u", (s.u - so.u).norm() / so.u.norm().max(1e-3), 1e-8),
                    ("e", rel(s.e, so.e, 1e-300), 1e-8),
                    ("p", tensor_rel(&tens.p, &to.p, 1e-3 * so.n), 1e-8),
                    ("q", tensor_rel(&tens.q, &to.q, 1e-300), q_tol),
                    (
                        "s",
                        (tens.s_flux - to.s_flux).norm()
                            / to.s_flux.norm().max(1e-3 * so.n * so.e),
                        1e-8,
                    ),
                ];
                for (name, err, tol) in checks {
                    worst.push(err, tol, || {
                        format!("{name} at A={a:.2}, B={b:.3}, T={t}: {err:.3e}")
                    });
                }
                count += 1;
            }
        }
    }
    worst.verdict(&format!(
        "{count} states, rel tol 1e-8 (1e-6 for heat flux past u = 0.95)"
    ))
}

// ---------------------------------------------------------------------------
// 2. Inversion roundtrips in both directions over the same stress grid

fn inversion_roundtrips() -> Result<String, String> {
    let dir = Vec2::new(0.81f64.cos(), 0.81f64.sin());
    let temps: [f64; 3] = [0.5, 1.0, 2.0];
    let mut worst = Worst::new();
    let mut skipped = 0usize;
    for &a in &linspace(-15.0, 150.0, 15) {
        for &b in &linspace(0.0, 0.9 * a.abs().max(1.0) * 2.0, 15) {
            for &t in &temps {
                let m = Multipliers::new(a, dir * b, t);
                let s = multipliers_to_moments(&m);
                if s.u.norm() > 0.99 {
                    skipped += 1;
                    continue;
                }
                let m2 = moments_to_multipliers(&s).map_err(|e| {
                    format!("inversion failed at A={a:.2}, B={b:.3}, T={t}: {e}")
                })?;
                let s2 = multipliers_to_moments(&m2);
                let at = || format!("A={a:.2}, B={b:.3}, T={t}");
                worst.push(rel(s2.n, s.n, 1e-300), 1e-6, || format!("n roundtrip at {}", at()));
                worst.push(
                    (s2.u - s.u).norm() / s.u.norm().max(1e-3),
                    1e-6,
                    || format!("u roundtrip at {}", at()),
                );
                worst.push(rel(s2.e, s.e, 1e-300), 1e-6, || format!("e roundtrip at {}", at()));
                worst.push(
                    (m2.a - m.a).abs() / m.a.abs().max(1.0),
                    1e-5,
                    || format!("a roundtrip at {}", at()),
                );
                worst.push(
                    (m2.b - m.b).norm() / m.b.norm().max(1.0),
                    1e-5,
                    || format!("b roundtrip at {}", at()),
                );
                worst.push(
                    (m2.temp - m.temp).abs() / m.temp,
                    1e-5,
                    || format!("temp roundtrip at {}", at()),
                );
            }
        }
    }
    worst.verdict(&format!(
        "state tol 1e-6, multiplier tol 1e-5, {skipped} near-ridge states skipped"
    ))
}

// ---------------------------------------------------------------------------
// 3. Asymptotics of the angular integrals: dilute factorization and
//    degenerate power-law scaling

fn angular_integral_asymptotics() -> Result<String, String> {
    // Dilute corner: the integral should factor as e^A I_N(B) to 1e-3
    // whenever A <= -5 and B <= |A| - 5.
    let mut dilute = Worst::new();
    for &a in &[-5.0f64, -6.0, -7.0, -8.0, -10.0, -12.0, -15.0] {
        for frac in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
            let b = frac * (-a - 5.0);
            for n in 0u32..=2 {
                if b == 0.0 && n > 0 {
                    continue; // both sides vanish identically
                }
                for s in 1..=3 {
                    let full = angular_fermi(&AngularFermiArgs::new(n, s as f64, a, b))
                        .map_err(|e| format!("integral failed at A={a}, B={b:.3}: {e}"))?;
                    let lead = a.exp()
                        * bessel_i(n, b).map_err(|e| format!("bessel failed at B={b:.3}: {e}"))?;
                    let err = (full / lead - 1.0).abs();
                    dilute.push(err, 1e-3, || {
                        format!("A={a}, B={b:.3}, N={n}, s={s}: {err:.4e}")
                    });
                }
            }
        }
    }

    // Degenerate rays: along (A, B) = R (cos psi, sin psi) the integral should
    // approach R^s times the degenerate angular coefficient. The pair
    // (N=2, s=1) at small psi is skipped: its leading coefficient is exactly
    // zero (full angular range, second harmonic of a degree-one integrand),
    // so the ratio has no limit there.
    let mut deg = Worst::new();
    for &psi in &[0.3f64, 0.9, 1.3, 1.7, 2.1] {
        for n in 0u32..=2 {
            for s in 1..=3 {
                if psi == 0.3 && n == 2 && s == 1 {
                    continue;
                }
                let f = degenerate_angular(n, s as f64, psi)
                    .map_err(|e| format!("coefficient failed at psi={psi}: {e}"))?;
                for (r, tol) in [(100.0, 5e-2), (400.0, 1e-2)] {
                    let full = angular_fermi(&AngularFermiArgs::new(
                        n,
                        s as f64,
                        r * psi.cos(),
                        r * psi.sin(),
                    ))
                    .map_err(|e| format!("integral failed at psi={psi}, R={r}: {e}"))?;
                    let err = (full / (r.powi(s) * f) - 1.0).abs();
                    deg.push(err, tol, || {
                        format!("psi={psi}, N={n}, s={s}, R={r}: {err:.4e}")
                    });
                }
            }
        }
    }

    let line = format!(
        "dilute factorization worst {:.3} of 1e-3 ({}); degenerate scaling worst {:.3} of tolerance ({})",
        dilute.margin, dilute.what, deg.margin, deg.what
    );
    if dilute.ok() && deg.ok() {
        Ok(line)
    } else {
        Err(line)
    }
}

// ---------------------------------------------------------------------------
// 4. Closure coefficients against their slow-drift and beam expansions

fn coefficient_limits() -> Result<String, String> {
    let mut worst = Worst::new();

    // Nondegenerate anisotropy near rest: X - 1/2 = u^2/4 + ...
    let us = logspace(0.01, 0.1, 9);
    let ys: Vec<f64> = us
        .iter()
        .map(|&u| mb_anisotropy(u).unwrap() - 0.5)
        .collect();
    let amp = fit_amplitude(&us, &ys, 2.0);
    worst.push((amp - 0.25).abs() / 0.25, 0.02, || {
        format!("rest anisotropy amplitude {amp:.5} vs 1/4")
    });

    // Nondegenerate anisotropy near the beam: 1 - X = 2 (1 - u) + ...
    let eps = logspace(1e-4, 1e-2, 9);
    let ys: Vec<f64> = eps
        .iter()
        .map(|&ep| 1.0 - mb_anisotropy(1.0 - ep).unwrap())
        .collect();
    let amp = fit_amplitude(&eps, &ys, 1.0);
    worst.push((amp - 2.0).abs() / 2.0, 0.02, || {
        format!("beam anisotropy amplitude {amp:.5} vs 2")
    });

    // Degenerate coefficients near rest: Y = 1/2 + u^2/8, Z = Zp = 1/2 - u^2/8,
    // W = 3u/2.
    let us = logspace(0.005, 0.05, 9);
    let mut series = [const { Vec::new() }; 4];
    for &u in &us {
        let psi = psi_from_speed(u).map_err(|e| format!("psi({u}): {e}"))?;
        let (y, z, zp, w) = degenerate_coefficients(psi);
        series[0].push(y - 0.5);
        series[1].push(0.5 - z);
        series[2].push(0.5 - zp);
        series[3].push(w);
    }
    for (label, ys, p, expect) in [
        ("pressure coefficient", &series[0], 2.0, 0.125),
        ("heat coefficient", &series[1], 2.0, 0.125),
        ("transverse heat coefficient", &series[2], 2.0, 0.125),
        ("energy-flux coefficient", &series[3], 1.0, 1.5),
    ] {
        let amp = fit_amplitude(&us, ys, p);
        worst.push((amp - expect).abs() / expect, 0.02, || {
            format!("rest {label} amplitude {amp:.5} vs {expect}")
        });
    }

    // Degenerate coefficients near the beam, in powers of 1 - u: the observed
    // exponents of 1-Y, Z, Zp and 1-W, plus the amplitude of Z.
    let eps = logspace(1e-4, 1e-2, 9);
    let mut series = [const { Vec::new() }; 4];
    for &ep in &eps {
        let psi = psi_from_speed(1.0 - ep).map_err(|e| format!("psi(1-{ep}): {e}"))?;
        let (y, z, zp, w) = degenerate_coefficients(psi);
        series[0].push(1.0 - y);
        series[1].push(z);
        series[2].push(zp);
        series[3].push(1.0 - w);
    }
    for (label, ys, expect) in [
        ("1 - pressure coefficient", &series[0], 1.0),
        ("heat coefficient", &series[1], 1.25),
        ("transverse heat coefficient", &series[2], 0.25),
        ("1 - energy-flux coefficient", &series[3], 1.0),
    ] {
        let p = fit_exponent(&eps, ys);
        worst.push((p - expect).abs() / expect, 0.03, || {
            format!("beam {label} exponent {p:.5} vs {expect}")
        });
    }
    let z_amp_ref = 14f64.powf(1.25) / (30.0 * PI).sqrt();
    let amp = fit_amplitude(&eps, &series[1], 1.25);
    worst.push((amp - z_amp_ref).abs() / z_amp_ref, 0.05, || {
        format!("beam heat amplitude {amp:.5} vs {z_amp_ref:.5}")
    });

    worst.verdict("ten fitted coefficients and exponents")
}

// ---------------------------------------------------------------------------
// 5. Hyperbolicity and signal-speed bound across random states, all regimes

fn hyperbolic_everywhere() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let regimes = [
        RegimeTag::Exact,
        RegimeTag::MaxwellBoltzmann,
        RegimeTag::Degenerate,
        RegimeTag::Diffusive,
    ];
    let mut worst_im = Worst::new();
    let mut worst_sp = Worst::new();
    let mut probes = 0usize;
    for k in 0..1000 {
        let n = 10f64.powf(rng.gen_range(-2.0..2.0));
        let umag: f64 = rng.gen_range(0.0..0.9);
        let th: f64 = rng.gen_range(0.0..TAU);
        let lift: f64 = rng.gen_range(1.05..3.0);
        let floor = min_energy_ratio(umag).map_err(|e| format!("energy floor: {e}"))?;
        let s = MomentState::new(
            n,
            Vec2::new(th.cos(), th.sin()) * umag,
            (2.0 * PI * n).sqrt() * floor * lift,
        );
        let pd: f64 = rng.gen_range(0.0..TAU);
        let dir = Vec2::new(pd.cos(), pd.sin());
        for &regime in &regimes {
            let rep = hyperbolicity_probe(&s, regime, dir).map_err(|e| {
                format!("probe failed ({regime:?}, n={n:.3e}, u={umag:.3}, state {k}): {e}")
            })?;
            worst_im.push(rep.max_imag, 1e-7, || {
                format!("imag {:.2e} in {regime:?}, state {k}", rep.max_imag)
            });
            worst_sp.push(rep.max_speed, 1.0 + 1e-6, || {
                format!("speed {:.9} in {regime:?}, state {k}", rep.max_speed)
            });
            probes += 1;
        }
    }
    let line = format!(
        "{probes} probes; imaginary parts worst {:.3} of 1e-7 ({}); speeds worst {:.7} of c ({})",
        worst_im.margin, worst_im.what, worst_sp.margin, worst_sp.what
    );
    if worst_im.ok() && worst_sp.ok() {
        Ok(line)
    } else {
        Err(line)
    }
}

// ---------------------------------------------------------------------------
// 6. Conservation over a long periodic march

fn conservation_march() -> Result<String, String> {
    let grid = Grid::rect(
        16,
        16,
        0.5,
        0.5,
        Boundary::Periodic,
        Boundary::Periodic,
    );
    let init = |x: f64, y: f64| {
        let r2 = (x - 4.0).powi(2) + (y - 4.0).powi(2);
        MomentState::new(1.0 + 0.4 * (-r2 / 2.0).exp(), Vec2::new(0.2, -0.1), 2.2)
    };
    let scheme = HydroScheme {
        regime: RegimeTag::MaxwellBoltzmann,
        muscl: true,
        cfl: 0.45,
        isothermal: None,
    };
    let dt = scheme.max_dt(&grid);

    // Forced, relaxing march: only the density is conserved.
    let pot = PotentialField::gaussian_bump(&grid, 0.25, (4.0, 4.0), 1.2);
    let band = BandConfig::new(Species::ElectronUpper, Some(0.8));
    let mut state = FieldState::from_fn(&grid, init);
    let m0 = state.total_mass(&grid);
    for k in 0..1000 {
        state = step(&state, &grid, &pot, &band, &scheme, dt)
            .map_err(|e| format!("forced march step {k}: {e}"))?;
    }
    let forced_mass = rel(state.total_mass(&grid), m0, 1e-300);

    // Free march: no potential, no relaxation; momentum and energy join in.
    let pot = PotentialField::zero(&grid);
    let band = BandConfig::new(Species::ElectronUpper, None);
    let mut state = FieldState::from_fn(&grid, init);
    let m0 = state.total_mass(&grid);
    let p0 = state.total_momentum(&grid);
    let e0 = state.total_energy(&grid);
    for k in 0..1000 {
        state = step(&state, &grid, &pot, &band, &scheme, dt)
            .map_err(|e| format!("free march step {k}: {e}"))?;
    }
    let free_mass = rel(state.total_mass(&grid), m0, 1e-300);
    let free_mom = (state.total_momentum(&grid) - p0).norm() / p0.norm();
    let free_energy = rel(state.total_energy(&grid), e0, 1e-300);

    let mut worst = Worst::new();
    worst.push(forced_mass, 1e-13, || {
        format!("density drift {forced_mass:.2e} under forcing")
    });
    worst.push(free_mass, 1e-13, || {
        format!("density drift {free_mass:.2e} in free flow")
    });
    worst.push(free_mom, 1e-12, || {
        format!("momentum drift {free_mom:.2e} in free flow")
    });
    worst.push(free_energy, 1e-12, || {
        format!("energy drift {free_energy:.2e} in free flow")
    });
    worst.verdict("1000 steps forced, 1000 steps free, 16x16 periodic")
}

// ---------------------------------------------------------------------------
// 7. Drift-diffusion steady profiles against the closed-form density laws

fn steady_profiles() -> Result<String, String> {
    let grid = Grid::line(512, 1.0 / 64.0, Boundary::Outflow);
    let mut worst = Worst::new();

    // Nondegenerate law: n proportional to exp(-sign V / T), both carriers.
    let pot = PotentialField::uniform_slope(&grid, Vec2::new(0.125, 0.0));
    let temp = 1.0;
    let model = DiffusionModel::new(MobilityLaw::MaxwellBoltzmann, 1.0, temp)
        .map_err(|e| format!("model: {e}"))?;
    for (species, label) in [
        (Species::ElectronUpper, "electron"),
        (Species::HoleLower, "hole"),
    ] {
        let band = BandConfig::new(species, None);
        let n0 = vec![1.0; 512];
        let steady = steady_state_1d(&n0, &grid, &pot, &band, &model)
            .map_err(|e| format!("{label} steady solve: {e}"))?;
        let weights: Vec<f64> = pot
            .values
            .iter()
            .map(|v| (-species.sign() * v / temp).exp())
            .collect();
        let scale = steady.iter().sum::<f64>() / weights.iter().sum::<f64>();
        for (i, (&n, &w)) in steady.iter().zip(&weights).enumerate() {
            worst.push((n / (scale * w) - 1.0).abs(), 1e-6, || {
                format!("{label} exponential profile, cell {i}")
            });
        }
    }

    // Degenerate law: 2 sqrt(n) + sign V / sqrt(pi) is uniform.
    let pot = PotentialField::smoothed_step(&grid, 0.5, 4.0, 0.9);
    let band = BandConfig::new(Species::ElectronUpper, None);
    let model = DiffusionModel::new(MobilityLaw::Degenerate, 1.0, temp)
        .map_err(|e| format!("model: {e}"))?;
    let n0 = vec![1.0; 512];
    let steady = steady_state_1d(&n0, &grid, &pot, &band, &model)
        .map_err(|e| format!("degenerate steady solve: {e}"))?;
    let invariant: Vec<f64> = steady
        .iter()
        .zip(&pot.values)
        .map(|(&n, &v)| 2.0 * n.sqrt() + v / PI.sqrt())
        .collect();
    let mean = invariant.iter().sum::<f64>() / invariant.len() as f64;
    for (i, &v) in invariant.iter().enumerate() {
        worst.push((v - mean).abs() / mean.abs(), 1e-6, || {
            format!("degenerate invariant, cell {i}")
        });
    }
    worst.verdict("512-cell steady solves vs closed-form laws, rel tol 1e-6")
}

// ---------------------------------------------------------------------------
// 8. The relaxation cascade approaches the diffusion limit monotonically

fn relaxation_cascade() -> Result<String, String> {
    let grid = Grid::line(256, 0.0625, Boundary::Periodic);
    let pot = PotentialField::zero(&grid);
    let band = BandConfig::new(Species::ElectronUpper, None);
    let n0: Vec<f64> = (0..256)
        .map(|i| {
            let x = grid.x_center(i);
            1.0 + 0.5 * (-((x - 8.0) / 1.5).powi(2)).exp()
        })
        .collect();
    let taus = [0.4, 0.2, 0.1, 0.05];
    let study = relaxation_limit_study(&n0, &grid, &pot, &band, 1.0, 1.0, &taus)
        .map_err(|e| format!("study setup: {e}"))?;
    if let Some(f) = &study.failure {
        return Err(format!("a run inside the study failed: {f}"));
    }
    let dist: Vec<String> = study.distances.iter().map(|d| format!("{d:.4e}")).collect();
    let ratio = study.distances.last().unwrap() / study.distances[0];
    let line = format!(
        "distances to the diffusion profile {} (final/first = {ratio:.3})",
        dist.join(", ")
    );
    if study.monotone && ratio < 0.25 {
        Ok(line)
    } else {
        Err(line)
    }
}

// ---------------------------------------------------------------------------
// 9. The collimated direction field never reacts to the potential

fn collimation_blind_direction() -> Result<String, String> {
    let grid = Grid::rect(
        32,
        32,
        0.25,
        0.25,
        Boundary::Periodic,
        Boundary::Periodic,
    );
    let band = BandConfig::new(Species::ElectronUpper, None);
    let init = |x: f64, y: f64| {
        let th = 0.35 * (TAU * x / 8.0).sin() + 0.25 * (TAU * y / 8.0).cos();
        let r2 = (x - 4.0).powi(2) + (y - 4.0).powi(2);
        (
            1.0 + 0.5 * (-r2 / 3.0).exp(),
            Vec2::new(th.cos(), th.sin()),
            2.0,
        )
    };
    let mut lensed = CollimationState::from_fn(&grid, init).map_err(|e| format!("init: {e}"))?;
    let mut free = CollimationState::from_fn(&grid, init).unwrap();
    let lens = PotentialField::gaussian_bump(&grid, 0.4, (4.0, 4.0), 1.5);
    run_collimation_degenerate(&mut lensed, &grid, &lens, &band, 0.4, 1.0)
        .map_err(|e| format!("lensed run: {e}"))?;
    run_collimation_degenerate(&mut free, &grid, &PotentialField::zero(&grid), &band, 0.4, 1.0)
        .map_err(|e| format!("free run: {e}"))?;
    let mut du = 0.0f64;
    let mut de = 0.0f64;
    for i in 0..grid.n_cells() {
        du = du.max((lensed.u[i] - free.u[i]).norm());
        de = de.max((lensed.e[i] - free.e[i]).abs());
    }
    if de < 1e-3 {
        return Err(format!(
            "the lens left no trace on the energy field (max {de:.1e}); run is vacuous"
        ));
    }
    let mut worst = Worst::new();
    worst.push(du, 1e-12, || format!("direction deviation {du:.2e}"));
    worst.verdict(&format!(
        "lensed vs free direction fields (energy meanwhile moved by {de:.2e})"
    ))
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reruns and closure-table self-consistency

const RERUN_HYDRO: &str = "solver = hydro
regime = maxwell_boltzmann
grid.cells_x = 32
grid.dx = 0.25
grid.bc_x = periodic
band.species = electron
band.relaxation_tau = 0.5
scheme.muscl = true
scheme.cfl = 0.45
potential.kind = gaussian
potential.amplitude = 0.1
potential.center_x = 4.0
potential.width = 1.0
initial.profile = gaussian
initial.n0 = 1.0
initial.amplitude = 0.4
initial.width = 0.8
initial.center_x = 4.0
initial.e0 = 2.2
t_end = 0.5
snapshot_every = 0.25
";

fn rerun(cfg_text: &str, label: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let cfg = parse_config(cfg_text).map_err(|e| format!("{label} config: {e}"))?;
    let dir = tempfile::tempdir().map_err(|e| format!("tempdir: {e}"))?;
    let report = run_scenario(&cfg, dir.path()).map_err(|e| format!("{label} run: {e}"))?;
    let mut payload = Vec::new();
    for f in &report.files {
        let name = f.file_name().unwrap().to_string_lossy().into_owned();
        if name == "manifest.txt" {
            continue; // carries wall-clock time, exempt from byte identity
        }
        let bytes = std::fs::read(f).map_err(|e| format!("read {name}: {e}"))?;
        payload.push((name, bytes));
    }
    payload.sort();
    Ok(payload)
}

fn deterministic_artifacts() -> Result<String, String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let table_cfg = std::fs::read_to_string(root.join("configs/closure_table.conf"))
        .map_err(|e| format!("reading configs/closure_table.conf: {e}"))?;

    let mut compared = 0usize;
    let mut first_table = None;
    for (label, text) in [("closure table", table_cfg.as_str()), ("hydro", RERUN_HYDRO)] {
        let run_a = rerun(text, label)?;
        let run_b = rerun(text, label)?;
        if run_a.len() != run_b.len() || run_a.is_empty() {
            return Err(format!(
                "{label}: reruns produced {} vs {} files",
                run_a.len(),
                run_b.len()
            ));
        }
        for ((name_a, bytes_a), (name_b, bytes_b)) in run_a.iter().zip(&run_b) {
            if name_a != name_b || bytes_a != bytes_b {
                return Err(format!("{label}: rerun differs in {name_a}"));
            }
            compared += 1;
        }
        if label == "closure table" {
            let table = run_a
                .iter()
                .find(|(name, _)| name == "closure_table.csv")
                .ok_or("closure table run produced no closure_table.csv")?;
            first_table = Some(String::from_utf8_lossy(&table.1).into_owned());
        }
    }

    // Re-validate the table rows: eigenvalues of the pressure tensor must sum
    // back to the density, and every entry must be finite.
    let table = first_table.unwrap();
    let mut rows = 0usize;
    let mut worst = Worst::new();
    for line in table.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>().map_err(|e| format!("bad field {f:?}: {e}")))
            .collect::<Result<_, _>>()?;
        if fields.len() != 11 {
            return Err(format!("table row has {} fields, want 11", fields.len()));
        }
        if fields.iter().any(|f| !f.is_finite()) {
            return Err(format!("non-finite table entry in row {rows}"));
        }
        let (n, p_lo, p_hi) = (fields[3], fields[6], fields[7]);
        worst.push((p_lo + p_hi - n).abs() / n.abs(), 1e-12, || {
            format!("pressure trace vs density, row {rows}")
        });
        rows += 1;
    }
    if rows == 0 {
        return Err("closure table had no data rows".into());
    }
    worst.verdict(&format!(
        "{compared} artifact files byte-identical across reruns; {rows} table rows re-validated"
    ))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    type Check = fn() -> Result<String, String>;
    let criteria: [(&str, Check); 10] = [
        ("closure matches kinetic quadrature", closure_against_oracle),
        ("inversion roundtrips", inversion_roundtrips),
        ("angular integral asymptotics", angular_integral_asymptotics),
        ("coefficient limits", coefficient_limits),
        ("hyperbolic in all regimes", hyperbolic_everywhere),
        ("periodic conservation", conservation_march),
        ("steady density laws", steady_profiles),
        ("relaxation cascade", relaxation_cascade),
        ("potential-blind collimation", collimation_blind_direction),
        ("deterministic artifacts", deterministic_artifacts),
    ];
    let mut failed = Vec::new();
    for (idx, (name, check)) in criteria.iter().enumerate() {
        let id = idx + 1;
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let (verdict, detail) = match outcome {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "opaque panic".into());
                ("FAIL", format!("panicked: {msg}"))
            }
        };
        println!("criterion {id:2} {verdict} {name}: {detail}");
        if verdict == "FAIL" {
            failed.push(id);
        }
    }
    assert!(
        failed.is_empty(),
        "acceptance criteria failed: {failed:?} (see the lines above)"
    );
}
