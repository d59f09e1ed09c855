use std::f64::consts::PI;

use proptest::prelude::*;
use sgl_core::analytic::{
    choose_h_window, f_eps, f_eps_coefficient, f_root, glued_area, h_eps_rule, merged_limit_spectrum, model_dirichlet_spectrum,
    model_lambda0, model_mu1, predicted_lambda1, psi_boundary_flux, psi_l1_norm, psi_profile, BackgroundSpectrum,
    ModelPiece, PieceKind,
};
use sgl_core::Error;

/// Composite Gauss-Legendre (5 points) on `[a, b]` with `n` panels.
fn gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let hpan = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let mid = a + (i as f64 + 0.5) * hpan;
            X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * hpan * x)).sum::<f64>() * 0.5 * hpan
        })
        .sum()
}

/// Integrates `u'' = −λu` from `u(0) = 0, u'(0) = 1` with RK4 and returns
/// `(u(T), u'(T))`.
fn shoot(lambda: f64, t_end: f64, steps: usize) -> (f64, f64) {
    let dt = t_end / steps as f64;
    let (mut u, mut v) = (0.0, 1.0);
    for _ in 0..steps {
        let f = |u: f64, v: f64| (v, -lambda * u);
        let k1 = f(u, v);
        let k2 = f(u + 0.5 * dt * k1.0, v + 0.5 * dt * k1.1);
        let k3 = f(u + 0.5 * dt * k2.0, v + 0.5 * dt * k2.1);
        let k4 = f(u + dt * k3.0, v + dt * k3.1);
        u += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (u, v)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * b.abs() {
            break;
        }
    }
    0.5 * (a + b)
}

/// Rotationally symmetric Dirichlet eigenvalues by shooting: the cylinder
/// needs `u(h) = 0`, the cross cap `u'(h/2) = 0` (profiles even about `h/2`).
fn shooting_spectrum(kind: PieceKind, h: f64, count: usize) -> Vec<f64> {
    let cond = |lam: f64| match kind {
        PieceKind::Cylinder => shoot(lam, h, 4000).0,
        PieceKind::CrossCap => shoot(lam, 0.5 * h, 4000).1,
    };
    let mut out = Vec::new();
    let base = PI * PI / (h * h);
    let mut lo = 0.2 * base;
    let step = 0.37 * base;
    while out.len() < count {
        let hi = lo + step;
        if (cond(lo) > 0.0) != (cond(hi) > 0.0) {
            out.push(bisect(cond, lo, hi));
        }
        lo = hi;
    }
    out
}

fn kind_of(b: bool) -> PieceKind {
    if b {
        PieceKind::CrossCap
    } else {
        PieceKind::Cylinder
    }
}

/// Fundamental domain height: half the strip for the cross cap.
fn domain_height(p: &ModelPiece<f64>) -> f64 {
    match p.kind {
        PieceKind::CrossCap => 0.5 * p.h,
        PieceKind::Cylinder => p.h,
    }
}

#[test]
fn analytic_layer_matches_oracles_on_random_pieces() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let kind = kind_of(rng.gen_bool(0.5));
        let eps = rng.gen_range(0.002..0.05);
        let h = rng.gen_range(0.3..0.8);
        let piece = ModelPiece::new(kind, eps, h, 2.0).unwrap();

        let l0 = model_lambda0(&piece).unwrap();
        let spec = model_dirichlet_spectrum(&piece, 3).unwrap();
        let oracle = shooting_spectrum(kind, h, 3);
        assert!((l0 - oracle[0]).abs() <= 1e-8 * oracle[0]);
        for (a, b) in spec.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8 * b, "{kind:?} h={h}: {a} vs {b}");
        }

        let circ = 2.0 * PI * eps;
        let top = domain_height(&piece);
        let l2 = gauss(|t| psi_profile(&piece, t).unwrap().powi(2), 0.0, top, 64) * circ;
        assert!((l2 - 1.0).abs() < 1e-10);
        let l1 = gauss(|t| psi_profile(&piece, t).unwrap().abs(), 0.0, top, 64) * circ;
        let want = psi_l1_norm(&piece).unwrap();
        assert!((l1 - want).abs() <= 1e-8 * want, "{kind:?}: {l1} vs {want}");

        // Richardson-extrapolated central difference at t = 0 using the odd
        // extension of the profile; the cylinder has two equal ends.
        let d = |dt: f64| psi_profile(&piece, dt).unwrap() / dt;
        let dt = 1e-3 * h;
        let slope = (4.0 * d(dt / 2.0) - d(dt)) / 3.0;
        let ends = match kind {
            PieceKind::CrossCap => 1.0,
            PieceKind::Cylinder => 2.0,
        };
        let flux = -ends * slope * circ;
        let want = psi_boundary_flux(&piece).unwrap();
        assert!((flux - want).abs() <= 1e-8 * want.abs(), "{kind:?}: {flux} vs {want}");
    }
}

#[test]
fn cross_cap_keeps_only_odd_modes() {
    let p = ModelPiece::new(PieceKind::CrossCap, 0.01, 0.5, 2.0).unwrap();
    let s = model_dirichlet_spectrum(&p, 3).unwrap();
    let base = PI * PI / 0.25;
    assert!((s[1] / base - 9.0).abs() < 1e-12);
    assert!((s[2] / base - 25.0).abs() < 1e-12);
}

#[test]
fn piece_validation_errors() {
    assert!(matches!(ModelPiece::new(PieceKind::Cylinder, 0.0, 0.5, 2.0), Err(Error::InvalidParameter(_))));
    assert!(matches!(ModelPiece::new(PieceKind::Cylinder, 0.01, -1.0, 2.0), Err(Error::InvalidParameter(_))));
    let p = ModelPiece::new(PieceKind::CrossCap, 0.01, 0.5, 2.0).unwrap();
    assert!(matches!(psi_profile(&p, 0.6), Err(Error::Domain { .. })));
    let wide = ModelPiece::new(PieceKind::Cylinder, 0.2, 0.5, 2.0).unwrap();
    assert!(matches!(model_mu1(&wide), Err(Error::ModeCrossing { .. })));
    let thin = ModelPiece::new(PieceKind::Cylinder, 0.01, 0.5, 2.0).unwrap();
    assert!((model_mu1(&thin).unwrap().value - 4.0 * PI * PI).abs() < 1e-12);
}

#[test]
fn torus_window_and_critical_height() {
    let bg = BackgroundSpectrum::<f64>::unit_torus(12);
    let w = choose_h_window(&bg, 1.0).unwrap();
    assert!((w.h_star - 0.5).abs() < 1e-14);
    assert_eq!(w.k_mult, 4);
    assert!(w.check().is_ok());
    assert!(w.h0 < w.h_star && w.h_star < w.h1);
    assert!(matches!(choose_h_window(&bg, 100.0), Err(Error::InfeasibleWindow(_))));
}

#[test]
fn f_eps_is_one_at_critical_height() {
    let l1 = 4.0 * PI * PI;
    for kind in [PieceKind::CrossCap, PieceKind::Cylinder] {
        for eps in [0.04, 0.01, 0.001] {
            let f = f_eps(0.5, eps, l1, 2.0, kind).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn f_eps_worked_value_against_bisection() {
    let (h, eps, l1, phi) = (0.52, 0.01, 4.0 * PI * PI, 2.0);
    let f = f_eps(h, eps, l1, phi, PieceKind::CrossCap).unwrap();
    // Defining relation: ((h/2π)^{3/2}(λ₁ − π²/h²)/ε^{1/2}) = φ₀(x₀)(1/f − f).
    let lhs = (h / (2.0 * PI)).powf(1.5) * (l1 - PI * PI / (h * h)) / eps.sqrt();
    let oracle = bisect(|x| phi * (1.0 / x - x) - lhs, 1e-6, 10.0);
    assert!((f - oracle).abs() < 1e-10);
    assert!((f - 0.8384).abs() < 1e-3, "{f}");
}

#[test]
fn prediction_at_critical_height() {
    let l1 = 4.0 * PI * PI;
    let p = predicted_lambda1(0.01, 0.5, l1, 2.0, PieceKind::CrossCap, 2.0).unwrap();
    assert!((p.lambda1_predicted - 0.8 * l1).abs() < 1e-10);
    assert!(p.in_window);
    let far = predicted_lambda1(0.01, 0.8, l1, 2.0, PieceKind::CrossCap, 2.0).unwrap();
    assert!(!far.in_window);
}

#[test]
fn h_eps_rule_shifts_the_model_eigenvalue() {
    let h = h_eps_rule(0.01, 0.5).unwrap();
    let lhs = PI * PI / (h * h) - 4.0 * PI * PI;
    assert!((lhs - 0.01f64.powf(0.75)).abs() < 1e-10);
    assert!(h < 0.5);
}

#[test]
fn merged_spectrum_at_h045() {
    let bg = BackgroundSpectrum::<f64>::unit_torus(12);
    let nu = merged_limit_spectrum(&bg, PieceKind::CrossCap, 0.45, 7).unwrap();
    assert_eq!(nu[0], 0.0);
    let model = PI * PI / (0.45 * 0.45);
    assert!((nu[5] - model).abs() < 1e-12);
    assert!((nu[5] - 48.738).abs() < 1e-3);
}

#[test]
fn glued_area_accounts_for_holes() {
    let p = ModelPiece::new(PieceKind::Cylinder, 0.01, 0.5, 2.0).unwrap();
    let a = glued_area(1.0, &p).unwrap();
    assert!((a - (1.0 - 2.0 * PI * 1e-8 + 2.0 * PI * 0.005)).abs() < 1e-15);
}

proptest! {
    #[test]
    fn f_root_solves_quadratic(b in -1e3f64..1e3) {
        let f = f_root(b);
        prop_assert!(f > 0.0);
        prop_assert!((f * f + b * f - 1.0).abs() <= 1e-12 * (1.0 + b.abs() * f + f * f));
        // The other root is −b − f; the product of the roots is −1.
        let g = -b - f;
        prop_assert!((f * g + 1.0).abs() <= 1e-12 * (1.0 + b.abs() * f));
    }

    #[test]
    fn f_eps_decreases_with_h(eps in 0.001f64..0.05, h in 0.35f64..0.7, dh in 1e-3f64..0.05) {
        let l1 = 4.0 * PI * PI;
        let a = f_eps(h, eps, l1, 2.0, PieceKind::CrossCap).unwrap();
        let b = f_eps(h + dh, eps, l1, 2.0, PieceKind::CrossCap).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn f_eps_coefficient_sign_follows_gap(eps in 0.001f64..0.05, h in 0.3f64..0.8) {
        let l1 = 4.0 * PI * PI;
        let b = f_eps_coefficient(h, eps, l1, 2.0, PieceKind::Cylinder).unwrap();
        prop_assert_eq!(b > 0.0, h > 0.5);
    }

    #[test]
    fn spectrum_is_ascending(eps in 0.001f64..0.1, h in 0.1f64..2.0, cross in any::<bool>()) {
        let p = ModelPiece::new(kind_of(cross), eps, h, 2.0).unwrap();
        let s = model_dirichlet_spectrum(&p, 6).unwrap();
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}
