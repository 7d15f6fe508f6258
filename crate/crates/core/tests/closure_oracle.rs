//! Cross-checks of the closure formulas against the brute-force kinetic
//! quadrature, plus inversion roundtrips on random states.

use graphene_mep::closure::{
    closure_exact, min_energy_ratio, moments_to_multipliers, multipliers_to_moments, MomentState,
    Multipliers,
};
use graphene_mep::oracle::{oracle_moments, QuadratureSpec};
use graphene_mep::tensor::{SymMat2, Vec2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

#[test]
fn closure_matches_oracle_on_spot_grid() {
    let a_values: [f64; 5] = [-8.0, -2.0, 1.0, 6.0, 25.0];
    let b_fracs: [f64; 3] = [0.0, 0.35, 0.8];
    let temps: [f64; 2] = [0.7, 1.6];
    let mut worst = (0.0f64, String::new());
    for &a in &a_values {
        for &bf in &b_fracs {
            let b = bf * 1.8 * a.abs().max(1.0);
            for &t in &temps {
                let m = Multipliers::new(a, Vec2::new(b, 0.0), t);
                let s = multipliers_to_moments(&m);
                let tens = closure_exact(&s, &m);
                let spec = QuadratureSpec::default_for(&m);
                let (so, to) = oracle_moments(&m, &spec).unwrap();

                let ridge = so.u.norm() > 0.95;
                let q_tol = if ridge { 1e-6 } else { 1e-8 };
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
                    let margin = err / tol;
                    if margin > worst.0 {
                        worst = (margin, format!("{name} at A={a}, B={b:.2}, T={t}: {err:.3e}"));
                    }
                    assert!(
                        err <= tol,
                        "{name} mismatch {err:.3e} > {tol:.0e} at A={a}, B={b:.2}, T={t}"
                    );
                }
            }
        }
    }
    println!("tightest margin: {} of tolerance ({})", worst.0, worst.1);
}

#[test]
fn oracle_is_self_converged() {
    for (a, b, t) in [(1.0, 2.0, 1.0), (-6.0, 1.5, 0.8), (40.0, 30.0, 1.3)] {
        let m = Multipliers::new(a, Vec2::new(b, 0.0), t);
        let spec = QuadratureSpec::default_for(&m);
        let (s1, t1) = oracle_moments(&m, &spec).unwrap();
        let (s2, t2) = oracle_moments(&m, &spec.doubled()).unwrap();
        assert!(rel(s1.n, s2.n, 1e-300) < 1e-10, "n drifts at ({a},{b},{t})");
        assert!(rel(s1.e, s2.e, 1e-300) < 1e-10, "e drifts at ({a},{b},{t})");
        assert!(tensor_rel(&t1.p, &t2.p, 1e-300) < 1e-10);
        assert!(tensor_rel(&t1.q, &t2.q, 1e-300) < 1e-10);
    }
}

#[test]
fn inversion_roundtrip_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..100 {
        let n = 10f64.powf(rng.gen_range(-2.0..2.0));
        let u_mag = rng.gen_range(0.0..0.9);
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let u = Vec2::new(u_mag * th.cos(), u_mag * th.sin());
        let floor = min_energy_ratio(u_mag).unwrap();
        let e = (2.0 * std::f64::consts::PI * n).sqrt() * floor * rng.gen_range(1.05..3.0);
        let s = MomentState::new(n, u, e);

        let m = moments_to_multipliers(&s).unwrap_or_else(|err| {
            panic!("trial {trial}: inversion failed for n={n:.3e}, |u|={u_mag:.3}, e={e:.3e}: {err}")
        });
        let s2 = multipliers_to_moments(&m);
        assert!(rel(s2.n, s.n, 1e-300) < 1e-9, "trial {trial}: n roundtrip");
        assert!((s2.u - s.u).norm() < 1e-9, "trial {trial}: u roundtrip");
        assert!(rel(s2.e, s.e, 1e-300) < 1e-9, "trial {trial}: e roundtrip");
    }
}
