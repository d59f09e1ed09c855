use std::f64::consts::PI;

use proptest::prelude::*;
use sgl_core::analytic::{predicted_lambda1, PieceKind};
use sgl_lab::branches::track_branches;
use sgl_lab::fit::{fit_power_law, median, within_band};
use sgl_lab::record::{BoundsSummary, Flag, SweepRecord};
use sgl_lab::verify::{
    mass_ratio_vs_f, verify_bounds, verify_limit_spectrum, verify_main1, verify_main1_vanishing_point, verify_main2,
    Status, TORUS_LAMBDA1,
};
use sgl_lab::LabError;

fn synth(eps: f64, h: f64, kind: PieceKind, lambda1: f64) -> SweepRecord {
    let mut r = SweepRecord::failed(eps, h, 2.0, kind, String::new());
    r.flags.clear();
    r.lambdas = vec![0.0, lambda1, TORUS_LAMBDA1];
    r.lambdas_extrapolated = r.lambdas.clone();
    r.disc_errs = vec![0.0; 3];
    r.eval0 = 2.0;
    r.background_lambda1 = TORUS_LAMBDA1;
    r
}

fn predicted(eps: f64, h: f64) -> f64 {
    predicted_lambda1(eps, h, TORUS_LAMBDA1, 2.0, PieceKind::CrossCap, 2.0).unwrap().lambda1_predicted
}

fn main2_data(res_c: f64) -> (Vec<SweepRecord>, Vec<SweepRecord>) {
    let at: Vec<SweepRecord> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&e| synth(e, 0.5, PieceKind::CrossCap, predicted(e, 0.5) + res_c * e * (1.0 / e).ln()))
        .collect();
    let window = (0..7)
        .map(|i| {
            let h = 0.5 + 0.02 * (i as f64 - 3.0);
            synth(0.01, h, PieceKind::CrossCap, predicted(0.01, h))
        })
        .collect();
    (at, window)
}

#[test]
fn main2_accepts_exact_leading_order_data() {
    let (at, window) = main2_data(5.0);
    let v = verify_main2(&at, &window, 2.0).unwrap();
    assert_eq!(v.status, Status::Pass, "{}", v.details);
    assert!((v.fitted_constants["leading_slope"] - 0.5).abs() < 0.1);
    assert!(v.fitted_constants["window_shape_max_deviation"] < 1e-9);
    assert_eq!(v.exit_code(), 0);
}

#[test]
fn main2_rejects_linear_deficit() {
    let (mut at, window) = main2_data(0.0);
    for r in &mut at {
        r.lambdas_extrapolated[1] = TORUS_LAMBDA1 - 100.0 * r.eps;
    }
    let v = verify_main2(&at, &window, 2.0).unwrap();
    assert_eq!(v.status, Status::Fail);
    assert!((v.fitted_constants["leading_slope"] - 1.0).abs() < 1e-9);
    assert_eq!(v.exit_code(), 1);
}

#[test]
fn main2_is_inconclusive_under_a_large_floor() {
    let (mut at, window) = main2_data(5.0);
    at[3].disc_errs[1] = 0.2 * TORUS_LAMBDA1 * 2.0 * 0.005f64.sqrt();
    let v = verify_main2(&at, &window, 2.0).unwrap();
    assert_eq!(v.status, Status::Inconclusive);
    assert!(!v.pass);
    assert_eq!(v.exit_code(), 4);
}

#[test]
fn main2_needs_three_eps() {
    let (at, window) = main2_data(5.0);
    assert!(matches!(verify_main2(&at[..2], &window, 2.0), Err(LabError::InsufficientData(_))));
}

fn cylinder(eps: f64, lambda1: f64) -> SweepRecord {
    let h = 0.45;
    let mut r = synth(eps, h, PieceKind::Cylinder, lambda1);
    r.area = 1.0 + 2.0 * PI * eps * h;
    r
}

#[test]
fn main1_passes_when_gap_equals_area_gain() {
    let v = verify_main1(&[cylinder(0.02, TORUS_LAMBDA1), cylinder(0.01, TORUS_LAMBDA1)]).unwrap();
    assert!(v.pass, "{}", v.details);
}

#[test]
fn main1_fails_on_a_large_deficit() {
    let v = verify_main1(&[cylinder(0.02, 0.9 * TORUS_LAMBDA1), cylinder(0.01, 0.9 * TORUS_LAMBDA1)]).unwrap();
    assert!(!v.pass);
    assert_eq!(v.details["gap_positive"], false);
}

#[test]
fn vanishing_point_variant_is_not_applicable() {
    let v = verify_main1_vanishing_point();
    assert_eq!(v.status, Status::NotApplicable);
    assert_eq!(v.exit_code(), 4);
}

fn window_record(h: f64, f_scale: f64) -> SweepRecord {
    let eps = 0.01;
    let mut r = synth(eps, h, PieceKind::CrossCap, predicted(eps, h));
    let p = predicted_lambda1(eps, h, TORUS_LAMBDA1, 2.0, PieceKind::CrossCap, 2.0).unwrap();
    let f = p.f_eps * f_scale;
    r.prediction = Some(p);
    r.mass_piece = 1.0 / (1.0 + f * f).sqrt();
    r.mass_sigma = f * r.mass_piece;
    r.n = 0.5;
    r.m_coef = f * r.n;
    r.mode_n = vec![0.0, r.n, 0.4];
    r.mode_m = vec![0.0, r.m_coef, -0.4 / p.f_eps];
    r
}

#[test]
fn mass_ratio_matches_f_and_pairs_roots() {
    let recs: Vec<_> = (0..5).map(|i| window_record(0.48 + 0.01 * i as f64, 1.0)).collect();
    let v = mass_ratio_vs_f(&recs, 0.15, 3.0).unwrap();
    assert!(v.pass, "{}", v.details);
    assert!(v.fitted_constants["max_relative_deviation"] < 1e-12);
}

#[test]
fn mass_ratio_rejects_a_biased_ratio() {
    let recs: Vec<_> = (0..5).map(|i| window_record(0.48 + 0.01 * i as f64, 1.3)).collect();
    let v = mass_ratio_vs_f(&recs, 0.15, 3.0).unwrap();
    assert!(!v.pass);
}

#[test]
fn mass_ratio_skips_flagged_points() {
    let mut recs: Vec<_> = (0..5).map(|i| window_record(0.48 + 0.01 * i as f64, 1.0)).collect();
    recs[2].mass_sigma *= 5.0;
    recs[2].flag(Flag::BranchAmbiguous);
    assert!(mass_ratio_vs_f(&recs, 0.15, 3.0).unwrap().pass);
}

fn limit_records(distances: [f64; 3]) -> Vec<SweepRecord> {
    [0.04, 0.02, 0.01]
        .iter()
        .zip(distances)
        .map(|(&e, d)| {
            let mut r = synth(e, 0.45, PieceKind::CrossCap, TORUS_LAMBDA1 - d);
            r.decomp_residual = e * (1.0 / e).ln();
            r
        })
        .collect()
}

#[test]
fn limit_spectrum_accepts_shrinking_distances() {
    let limit = [0.0, TORUS_LAMBDA1, TORUS_LAMBDA1];
    let v = verify_limit_spectrum(&limit_records([2.0, 1.0, 0.5]), &limit, 0.02).unwrap();
    assert!(v.pass, "{}", v.details);
}

#[test]
fn limit_spectrum_rejects_growth_and_large_final_gap() {
    let limit = [0.0, TORUS_LAMBDA1, TORUS_LAMBDA1];
    let v = verify_limit_spectrum(&limit_records([0.5, 1.0, 0.7]), &limit, 0.02).unwrap();
    assert_eq!(v.details["all_monotone"], false);
    let v = verify_limit_spectrum(&limit_records([4.0, 3.0, 2.0]), &limit, 0.02).unwrap();
    assert_eq!(v.details["all_monotone"], true);
    assert!(!v.pass);
}

fn bounds_record(eps: f64, c: f64) -> SweepRecord {
    let mut r = synth(eps, 0.5, PieceKind::CrossCap, 30.0);
    r.bounds = Some(BoundsSummary { sup_const: c, sup_spread: 1.0, grad_const: c, grad_spread: 1.0, trace_ratio: 0.7 });
    r
}

#[test]
fn bounds_allow_bounded_growth_only() {
    let ok = [bounds_record(0.04, 1.0), bounds_record(0.02, 1.2), bounds_record(0.01, 1.4)];
    assert!(verify_bounds(&ok, 1.5).unwrap().pass);
    let bad = [bounds_record(0.04, 1.0), bounds_record(0.02, 1.2), bounds_record(0.01, 2.5)];
    assert!(!verify_bounds(&bad, 1.5).unwrap().pass);
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
}

fn with_signatures(sigs: Vec<Vec<f64>>) -> SweepRecord {
    let mut r = synth(0.01, 0.5, PieceKind::CrossCap, 30.0);
    r.signatures = sigs;
    r
}

#[test]
fn branches_follow_a_permutation() {
    let n = 6;
    let mut recs = vec![
        with_signatures((0..n).map(|i| unit(n, i)).collect()),
        with_signatures([0, 2, 1, 3, 5, 4].iter().map(|&i| unit(n, i)).collect()),
    ];
    let rep = track_branches(&mut recs);
    assert!(rep.ambiguous.is_empty());
    assert_eq!(recs[1].branches, [0, 2, 1, 3, 5, 4].map(Some).to_vec());
    assert!(!recs[1].is_flagged());
}

#[test]
fn branches_flag_an_unresolved_crossing() {
    let n = 6;
    let spread: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { 1.0 / 5f64.sqrt() }).collect();
    let mut next: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i)).collect();
    next[1] = spread;
    let mut recs = vec![with_signatures((0..n).map(|i| unit(n, i)).collect()), with_signatures(next)];
    let rep = track_branches(&mut recs);
    assert_eq!(recs[1].branches[1], None);
    assert!(rep.ambiguous.contains(&(1, 1)));
    assert!(recs[1].flags.contains(&Flag::BranchAmbiguous));
    assert_eq!(recs[1].branch_label(), "?");
}

#[test]
fn power_law_fit_needs_three_points() {
    assert!(matches!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0]), Err(LabError::InsufficientData(_))));
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert!(within_band(&[1.0, 2.0, 2.9], 3.0));
    assert!(!within_band(&[1.0, 10.0], 3.0));
}

proptest! {
    #[test]
    fn power_law_fit_recovers_exponent(p in -2.0f64..2.0, a in 0.01f64..100.0, n in 3usize..8) {
        let xs: Vec<f64> = (0..n).map(|i| 0.04 / 2f64.powi(i as i32)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| a * x.powf(p)).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!((fit.prefactor() / a - 1.0).abs() < 1e-8);
        prop_assert!(fit.r_squared > 1.0 - 1e-9 || p.abs() < 1e-6);
        prop_assert!((fit.predict(xs[1]) / ys[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tracking_recovers_any_permutation(perm in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle()) {
        let n = perm.len();
        let mut recs = vec![
            with_signatures((0..n).map(|i| unit(n, i)).collect()),
            with_signatures(perm.iter().map(|&i| unit(n, i)).collect()),
        ];
        track_branches(&mut recs);
        prop_assert_eq!(recs[1].branches.clone(), perm.iter().map(|&i| Some(i)).collect::<Vec<_>>());
    }
}
