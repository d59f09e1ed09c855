use std::sync::OnceLock;

use sgl_core::analytic::PieceKind;
use sgl_core::mesh::GluedSurfaces;
use sgl_lab::bounds::{check_pointwise_bounds, summarize_bounds, off_piece_operators};
use sgl_core::analytic::choose_h_window;
use sgl_lab::config::{torus_spectrum, HGrid, MeshSettings, SweepConfig};
use sgl_lab::record::{read_csv, write_csv, Flag, SweepRecord};
use sgl_lab::sweep::{run_points, run_sweep};
use sgl_lab::verify::TORUS_LAMBDA1;

fn small(mut cfg: SweepConfig) -> SweepConfig {
    cfg.mesh = MeshSettings { n_background: 32, n_theta: 32, grading_ratio: 1.5 };
    cfg.richardson = false;
    cfg
}

fn grid_config() -> SweepConfig {
    small(SweepConfig::crosscap(
        [0.3, 0.4],
        vec![0.04, 0.01, 0.02],
        HGrid::Explicit { values: vec![0.55, 0.45, 0.5, 0.475, 0.525] },
    ))
}

fn grid_records() -> &'static Vec<SweepRecord> {
    static R: OnceLock<Vec<SweepRecord>> = OnceLock::new();
    R.get_or_init(|| run_sweep(&grid_config(), None).expect("sweep"))
}

#[test]
fn three_by_five_grid_gives_fifteen_sorted_records() {
    let r = grid_records();
    assert_eq!(r.len(), 15);
    for w in r.windows(2) {
        assert!((w[0].eps, w[0].h) < (w[1].eps, w[1].h));
    }
    assert!(r.iter().all(|x| !x.is_failed()), "{:?}", r.iter().map(|x| &x.flags).collect::<Vec<_>>());
}

#[test]
fn mass_split_and_coefficient_ranges() {
    for r in grid_records() {
        let total = r.mass_sigma.powi(2) + r.mass_piece.powi(2);
        assert!((total - 1.0).abs() < 1e-6, "eps {} h {}: {total}", r.eps, r.h);
        assert!((-1.0..=1.0).contains(&r.n));
        assert!(r.m_coef > -1.0 && r.m_coef < 1.0);
        assert!(r.n >= 0.0);
        assert!(r.lambdas.windows(2).all(|w| w[0] <= w[1] + 1e-9));
        assert!(r.lambdas[0].abs() < 1e-8);
    }
}

#[test]
fn first_eigenvalue_drops_below_background_at_small_height() {
    // Dichotomy: some low mode carries a visible share of the piece.
    for r in grid_records() {
        assert!(r.lambda1() < r.background_lambda1, "eps {} h {}", r.eps, r.h);
        let best = r.mode_mass_piece[1..6].iter().fold(0.0f64, |m, x| m.max(x * x));
        assert!(best >= 0.05);
    }
}

#[test]
fn branches_follow_modes_across_heights() {
    for r in grid_records() {
        assert_eq!(r.branches.len(), r.lambdas.len());
        assert_eq!(r.branches[0], Some(0), "constant mode keeps its label");
    }
}

#[test]
fn csv_has_fixed_columns_and_round_trips() {
    let header = SweepRecord::csv_header().join(",");
    assert_eq!(
        header,
        "eps,h,k,kind,lambda0,lambda1,lambda2,lambda3,lambda4,lambda5,lambda6,branch,n,m_coef,beta,\
         mass_sigma,mass_piece,predicted_lambda1,f_eps,disc_err,flags"
    );
    let mut buf = Vec::new();
    write_csv(&mut buf, grid_records()).unwrap();
    let rows = read_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), 15);
    for (row, rec) in rows.iter().zip(grid_records()) {
        assert_eq!(row.eps, rec.eps);
        assert_eq!(row.kind, PieceKind::CrossCap);
        assert!((row.lambdas[1] - rec.lambda1()).abs() <= 1e-10 * rec.lambda1());
        assert!(row.disc_err.is_nan());
    }
}

#[test]
fn identical_config_gives_identical_csv() {
    let cfg = small(SweepConfig::crosscap([0.3, 0.4], vec![0.04], HGrid::Explicit { values: vec![0.5] }));
    let csv = |recs: &[SweepRecord]| {
        let mut b = Vec::new();
        write_csv(&mut b, recs).unwrap();
        b
    };
    let a = csv(&run_sweep(&cfg, Some(1)).unwrap());
    let b = csv(&run_sweep(&cfg, Some(2)).unwrap());
    assert_eq!(a, b);
}

#[test]
fn failed_point_is_flagged_and_others_survive() {
    let cfg = grid_config();
    let recs = run_points(&cfg, &[(0.04, 0.5), (0.04, -0.1)], None).unwrap();
    assert_eq!(recs.len(), 2);
    let bad = recs.iter().find(|r| r.h < 0.0).unwrap();
    assert!(bad.is_failed());
    assert!(bad.csv_row().last().unwrap().contains("FAILED"));
    let good = recs.iter().find(|r| r.h > 0.0).unwrap();
    assert!(!good.is_failed());
}

#[test]
fn richardson_estimate_is_small_for_background_modes() {
    let mut cfg = small(SweepConfig::crosscap([0.3, 0.4], vec![0.04], HGrid::Explicit { values: vec![0.5] }));
    cfg.richardson = true;
    let r = &run_sweep(&cfg, None).unwrap()[0];
    // Modes 2..=4 are torus modes vanishing at x0; extrapolation lands near 4π².
    for l in 2..=4 {
        assert!((r.lambdas_extrapolated[l] - TORUS_LAMBDA1).abs() < 0.02 * TORUS_LAMBDA1, "{l}: {}", r.lambdas_extrapolated[l]);
        assert!(r.disc_errs[l].is_finite());
    }
}

#[test]
fn critical_window_grid_is_clipped_to_the_admissible_window() {
    let window = choose_h_window(&torus_spectrum(), 1.0).unwrap();
    assert!((window.h_star - 0.5).abs() < 1e-12);
    let cfg = SweepConfig::crosscap([0.3, 0.4], vec![0.01], HGrid::CriticalWindow { d: 2.0, points: 21 });
    for eps in [0.001, 0.01, 0.04] {
        let hs = cfg.heights(eps).unwrap();
        assert_eq!(hs.len(), 21);
        let half = 2.0 * eps.sqrt();
        assert!((hs[0] - (0.5 - half).max(window.h0)).abs() < 1e-12);
        assert!((hs[20] - (0.5 + half).min(window.h1)).abs() < 1e-12);
    }
    let tight = cfg.heights(0.001).unwrap();
    assert!((tight[10] - 0.5).abs() < 1e-12, "unclipped grids are centred on h*");
}

#[test]
fn cylinder_records_flag_missing_beta() {
    let cfg = small(SweepConfig::cylinder([0.25, 0.25], [0.75, 0.75], vec![0.04], HGrid::EpsRule));
    let r = &run_sweep(&cfg, None).unwrap()[0];
    assert!(r.beta.is_nan());
    assert!(r.flags.iter().any(|f| matches!(f, Flag::NoBeta(_))));
    assert!(r.h < 0.5);
    assert!((r.mass_sigma.powi(2) + r.mass_piece.powi(2) - 1.0).abs() < 1e-6);
}

#[test]
fn config_round_trips_through_json() {
    let cfg = SweepConfig::cylinder([0.25, 0.25], [0.75, 0.75], vec![0.02, 0.01], HGrid::EpsRule);
    let s = serde_json::to_string(&cfg).unwrap();
    let back: SweepConfig = serde_json::from_str(&s).unwrap();
    assert_eq!(cfg, back);
    let bad = s.replace("\"modes\"", "\"nodes\"");
    assert!(serde_json::from_str::<SweepConfig>(&bad).is_err());
}

#[test]
fn constant_function_has_vanishing_gradient_ratio() {
    let cfg = grid_config();
    let spec = cfg.attachment(0.02, 0.5);
    let glued = GluedSurfaces::build(&spec, &cfg.mesh.params(0)).unwrap().glued;
    let u = vec![1.0; glued.n_dofs];
    let r_hole = 0.02f64.powi(2);
    let rep = check_pointwise_bounds(&glued, &u, 0, r_hole).unwrap();
    assert!(rep.grad_const < 1e-10, "{}", rep.grad_const);
    // |u| = 1 against log(1/r) grows outward and stays below 1/log 2.
    assert!(rep.sup_ratios.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    assert!(rep.sup_const > 0.0 && rep.sup_const < 1.0 / 2f64.ln());
    let off = off_piece_operators(&glued).unwrap();
    let s = summarize_bounds(&glued, &off, &u, r_hole).unwrap();
    assert!(s.grad_const < 1e-10 && s.trace_ratio.is_finite());
}
