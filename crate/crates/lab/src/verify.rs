use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sgl_core::analytic::predicted_lambda1;

use crate::error::{LabError, Result};
use crate::fit::{fit_power_law, max_consecutive_growth, median, within_band};
use crate::record::{Flag, SweepRecord};

/// Exact first eigenvalue of the unit torus.
pub const TORUS_LAMBDA1: f64 = 4.0 * PI * PI;
/// `π/√λ₁` for the unit torus.
pub const TORUS_H_STAR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The discretization floor hides the effect being measured.
    Inconclusive,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub pass: bool,
    pub status: Status,
    pub details: Value,
    pub fitted_constants: BTreeMap<String, f64>,
}

impl Verdict {
    pub fn new(criterion: &str, pass: bool, details: Value) -> Self {
        Verdict {
            criterion: criterion.into(),
            pass,
            status: if pass { Status::Pass } else { Status::Fail },
            details,
            fitted_constants: BTreeMap::new(),
        }
    }

    pub fn with_status(criterion: &str, status: Status, details: Value) -> Self {
        Verdict { status, pass: status == Status::Pass, ..Verdict::new(criterion, false, details) }
    }

    pub fn constant(mut self, name: &str, value: f64) -> Self {
        self.fitted_constants.insert(name.into(), value);
        self
    }

    /// 0 pass, 1 fail, 4 inconclusive or not applicable.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive | Status::NotApplicable => 4,
        }
    }

    /// One line for terminal output.
    pub fn summary(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
            Status::NotApplicable => "N/A",
        };
        let consts: Vec<String> = self.fitted_constants.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        format!("{tag} {} {}", self.criterion, consts.join(" "))
    }
}

fn eps_log(eps: f64) -> f64 {
    eps * (1.0 / eps).ln()
}

fn usable(records: &[SweepRecord]) -> Vec<&SweepRecord> {
    records.iter().filter(|r| !r.is_flagged()).collect()
}

/// Records by decreasing `ε`.
fn by_eps_desc<'a>(records: &[&'a SweepRecord]) -> Vec<&'a SweepRecord> {
    let mut v = records.to_vec();
    v.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    v
}

/// Limit spectrum check at fixed `h`: for every `l < limit.len()` the
/// distance `|λ_l − ν_l|` (extrapolated `λ`) must not grow as `ε` halves,
/// up to the discretization estimate of the finer point, and must end
/// within `rel_tol` of `ν_l`; the piece-mode decomposition residual over
/// `ε log(1/ε)` must stay in a factor-5 band around its median.
pub fn verify_limit_spectrum(records: &[SweepRecord], limit: &[f64], rel_tol: f64) -> Result<Verdict> {
    let ok: Vec<&SweepRecord> = records.iter().filter(|r| !r.is_failed()).collect();
    if ok.len() < 3 {
        return Err(LabError::InsufficientData(format!("limit spectrum needs 3 values of eps, got {}", ok.len())));
    }
    let rs = by_eps_desc(&ok);
    let scale = limit.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let mut modes = Vec::new();
    let mut all_monotone = true;
    let mut all_close = true;
    for (l, &nu) in limit.iter().enumerate() {
        let dist: Vec<f64> = rs.iter().map(|r| (r.lambdas_extrapolated[l] - nu).abs()).collect();
        // Discretization estimate plus a solver roundoff floor relative to the spectral scale.
        let floor = 1e-9 * scale;
        let slack: Vec<f64> = rs
            .iter()
            .map(|r| r.disc_errs[l].abs())
            .map(|e| if e.is_finite() { e + floor } else { floor })
            .collect();
        let monotone = (1..dist.len()).all(|i| dist[i] <= dist[i - 1] + slack[i]);
        let last = *dist.last().expect("3 records");
        let rel = last / if nu > 0.0 { nu } else { scale };
        let close = rel <= rel_tol;
        all_monotone &= monotone;
        all_close &= close;
        modes.push(json!({
            "l": l, "nu": nu, "distances": dist, "monotone": monotone,
            "final_relative": rel, "within_tolerance": close,
        }));
    }
    let ratios: Vec<f64> = rs.iter().map(|r| r.decomp_residual / eps_log(r.eps)).collect();
    let decomp_ok = within_band(&ratios, 5.0);
    let eps: Vec<f64> = rs.iter().map(|r| r.eps).collect();
    let lambdas: Vec<&Vec<f64>> = rs.iter().map(|r| &r.lambdas_extrapolated).collect();
    let c = median(&ratios).unwrap_or(f64::NAN);
    Ok(Verdict::new(
        "conv",
        all_monotone && all_close && decomp_ok,
        json!({
            "h": rs[0].h, "eps": eps, "lambdas_extrapolated": lambdas, "modes": modes,
            "all_monotone": all_monotone, "all_within_tolerance": all_close, "relative_tolerance": rel_tol,
            "decomposition_residual": rs.iter().map(|r| r.decomp_residual).collect::<Vec<_>>(),
            "decomposition_ratio": ratios, "decomposition_in_band": decomp_ok,
            "piece_mode": rs.iter().map(|r| r.piece_mode).collect::<Vec<_>>(),
        }),
    )
    .constant("decomposition_c", c))
}

/// Index of the `v`-branch partner of the λ₁ mode: the largest overlap with
/// `ψ` among the other nonconstant modes.
pub fn v_branch_mode(r: &SweepRecord) -> Option<usize> {
    (2..r.mode_n.len()).max_by(|&a, &b| r.mode_n[a].total_cmp(&r.mode_n[b]))
}

/// Measured `‖u‖_{Σ∖B}/‖u‖_M` against `f_ε(h)` over the window and the
/// root pairing `m/n ≈ f` on the `u`-branch, `≈ −1/f` on the `v`-branch.
pub fn mass_ratio_vs_f(records: &[SweepRecord], max_rel_dev: f64, pairing_factor: f64) -> Result<Verdict> {
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    let mut pairing_ok = true;
    let mut dis_scaled = Vec::new();
    for r in usable(records) {
        let Some(p) = r.prediction else { continue };
        if !p.in_window || r.flags.contains(&Flag::NBelowFloor) {
            continue;
        }
        let f = p.f_eps;
        let ratio = r.mass_sigma / r.mass_piece;
        let dev = (ratio / f - 1.0).abs();
        worst = worst.max(dev);
        let ratio_u = r.m_coef / r.n;
        let band = pairing_factor * r.eps.sqrt();
        let u_ok = ((ratio_u - f) / f).abs() <= band;
        let (ratio_v, v_ok) = match v_branch_mode(r) {
            Some(v) if r.mode_n[v] >= crate::sweep::N_FLOOR => {
                let rv = r.mode_m[v] / r.mode_n[v];
                (rv, ((rv + 1.0 / f) * f).abs() <= band)
            }
            _ => (f64::NAN, false),
        };
        pairing_ok &= u_ok && v_ok;
        let dis = (ratio_u * ratio_u - f * f) / (r.eps.powf(1.5) * (1.0 / r.eps).ln());
        dis_scaled.push(dis);
        rows.push(json!({
            "eps": r.eps, "h": r.h, "f_eps": f, "mass_ratio": ratio, "relative_deviation": dev,
            "m_over_n_u": ratio_u, "m_over_n_v": ratio_v, "u_pairs_with_f": u_ok, "v_pairs_with_minus_inv_f": v_ok,
            "dispersion_scaled": dis,
        }));
    }
    if rows.len() < 3 {
        return Err(LabError::InsufficientData(format!("{} usable window points", rows.len())));
    }
    let pass = worst <= max_rel_dev && pairing_ok;
    Ok(Verdict::new(
        "mass_ratio",
        pass,
        json!({ "rows": rows, "max_relative_deviation": worst, "tolerance": max_rel_dev, "pairing_ok": pairing_ok }),
    )
    .constant("max_relative_deviation", worst)
    .constant("max_abs_dispersion_scaled", dis_scaled.iter().fold(0.0f64, |m, x| m.max(x.abs()))))
}

/// Prediction with the exact torus λ₁ and the measured `φ₀(x₀)`, matching
/// the extrapolated eigenvalues it is compared with.
fn prediction(r: &SweepRecord, d: f64) -> Result<f64> {
    Ok(predicted_lambda1(r.eps, r.h, TORUS_LAMBDA1, r.eval0, r.kind, d)?.lambda1_predicted)
}

fn f_of(r: &SweepRecord, d: f64) -> Result<f64> {
    Ok(predicted_lambda1(r.eps, r.h, TORUS_LAMBDA1, r.eval0, r.kind, d)?.f_eps)
}

/// Leading-order check of the first eigenvalue near the critical height.
///
/// `at_h_star` holds one record per `ε` at `h*`; `window` holds one `ε`
/// across the critical window.
pub fn verify_main2(at_h_star: &[SweepRecord], window: &[SweepRecord], d: f64) -> Result<Verdict> {
    let hs = by_eps_desc(&usable(at_h_star));
    if hs.len() < 3 {
        return Err(LabError::InsufficientData(format!("main2 needs 3 values of eps at h*, got {}", hs.len())));
    }
    let eps: Vec<f64> = hs.iter().map(|r| r.eps).collect();
    let deficit: Vec<f64> = hs.iter().map(|r| TORUS_LAMBDA1 - r.lambda1_best()).collect();
    let lead = fit_power_law(&eps, &deficit)?;
    let slope_ok = (lead.slope - 0.5).abs() <= 0.1;
    let predicted: Vec<f64> = hs.iter().map(|r| prediction(r, d)).collect::<Result<_>>()?;
    let residual: Vec<f64> = hs.iter().zip(&predicted).map(|(r, p)| (r.lambda1_best() - p).abs()).collect();
    let res_ratio: Vec<f64> = hs.iter().zip(&residual).map(|(r, x)| x / eps_log(r.eps)).collect();
    let residual_ok = within_band(&res_ratio, 3.0);
    let residual_fit = fit_power_law(&eps, &residual).ok();

    let floor: Vec<f64> = hs.iter().map(|r| r.disc_err().abs()).collect();
    let term: Vec<f64> = hs.iter().map(|r| TORUS_LAMBDA1 * r.eval0 * r.eps.sqrt()).collect();
    let floor_ratio = floor.iter().zip(&term).map(|(a, b)| a / b).fold(0.0f64, f64::max);

    let win = usable(window);
    let center = win
        .iter()
        .min_by(|a, b| (a.h - TORUS_H_STAR).abs().total_cmp(&(b.h - TORUS_H_STAR).abs()))
        .copied()
        .ok_or_else(|| LabError::InsufficientData("empty window".into()))?;
    let d0 = TORUS_LAMBDA1 - center.lambda1_best();
    let f0 = f_of(center, d)?;
    let mut shape = Vec::new();
    let mut shape_worst = 0.0f64;
    for r in &win {
        let measured = (TORUS_LAMBDA1 - r.lambda1_best()) / d0;
        let expected = f0 / f_of(r, d)?;
        let dev = (measured / expected - 1.0).abs();
        shape_worst = shape_worst.max(dev);
        shape.push(json!({ "h": r.h, "deficit_ratio": measured, "inverse_f_ratio": expected, "relative_deviation": dev }));
    }
    let shape_ok = win.len() >= 3 && shape_worst <= 0.2;

    let details = json!({
        "eps": eps, "h_star_values": hs.iter().map(|r| r.h).collect::<Vec<_>>(),
        "lambda1_extrapolated": hs.iter().map(|r| r.lambda1_best()).collect::<Vec<_>>(),
        "deficit": deficit, "leading_fit": lead, "leading_slope_ok": slope_ok,
        "leading_slope_in_narrow_range": (0.45..=0.55).contains(&lead.slope),
        "predicted": predicted, "residual": residual, "residual_over_eps_log": res_ratio,
        "residual_in_band": residual_ok, "residual_fit": residual_fit,
        "window_eps": center.eps, "window_shape": shape, "window_shape_ok": shape_ok,
        "discretization_floor": floor, "sqrt_eps_term": term, "floor_over_term": floor_ratio,
    });
    let mut v = if floor_ratio > 0.1 {
        Verdict::with_status("main2", Status::Inconclusive, details)
    } else {
        Verdict::new("main2", slope_ok && residual_ok && shape_ok, details)
    };
    v = v
        .constant("leading_slope", lead.slope)
        .constant("leading_prefactor", lead.prefactor())
        .constant("residual_c", median(&res_ratio).unwrap_or(f64::NAN))
        .constant("window_shape_max_deviation", shape_worst)
        .constant("floor_over_term", floor_ratio);
    Ok(v)
}

/// Area-normalized gain for the cylinder at `h_ε`.
pub fn verify_main1(records: &[SweepRecord]) -> Result<Verdict> {
    let rs = by_eps_desc(&usable(records));
    if rs.len() < 2 {
        return Err(LabError::InsufficientData(format!("main1 needs 2 values of eps, got {}", rs.len())));
    }
    let mut rows = Vec::new();
    let mut all_positive = true;
    let mut all_in_band = true;
    let mut cs = Vec::new();
    for r in &rs {
        let l1 = r.lambda1_best();
        let gap = l1 * r.area - TORUS_LAMBDA1;
        let gain = 2.0 * PI * r.eps * r.h * TORUS_LAMBDA1;
        let ratio = gap / gain;
        let c = (TORUS_LAMBDA1 - l1).max(0.0) / r.eps.powf(1.25);
        all_positive &= gap > 0.0;
        all_in_band &= (0.5..=1.5).contains(&ratio);
        cs.push(c);
        rows.push(json!({
            "eps": r.eps, "h": r.h, "lambda1": l1, "area": r.area, "product_gap": gap,
            "area_gain": gain, "gap_over_gain": ratio, "deficit_over_eps_5_4": c,
        }));
    }
    let positive: Vec<f64> = cs.iter().copied().filter(|c| *c > 0.0).collect();
    let stable = positive.len() < 2 || {
        let (lo, hi) = positive.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(*c), hi.max(*c)));
        hi <= 1.5 * lo
    };
    Ok(Verdict::new(
        "main1",
        all_positive && all_in_band && stable,
        json!({ "rows": rows, "gap_positive": all_positive, "gap_in_band": all_in_band, "deficit_constant_stable": stable }),
    )
    .constant("deficit_c", cs.iter().copied().fold(0.0, f64::max)))
}

/// Part (i) needs a background on which every λ₁-eigenfunction vanishes at
/// one point; the flat torus has none.
pub fn verify_main1_vanishing_point() -> Verdict {
    Verdict::with_status(
        "main1_vanishing_point",
        Status::NotApplicable,
        json!({ "notice": "the flat torus has no point where all first eigenfunctions vanish; supply another background" }),
    )
}

/// One fitted constant per bound, allowed to grow by at most `max_growth`
/// between consecutive `ε`.
pub fn verify_bounds(records: &[SweepRecord], max_growth: f64) -> Result<Verdict> {
    let rs: Vec<&SweepRecord> = by_eps_desc(&usable(records)).into_iter().filter(|r| r.bounds.is_some()).collect();
    if rs.len() < 2 {
        return Err(LabError::InsufficientData("bounds need at least two values of eps".into()));
    }
    let b: Vec<_> = rs.iter().map(|r| r.bounds.clone().expect("filtered")).collect();
    let sup: Vec<f64> = b.iter().map(|x| x.sup_const).collect();
    let grad: Vec<f64> = b.iter().map(|x| x.grad_const).collect();
    let trace: Vec<f64> = b.iter().map(|x| x.trace_ratio).collect();
    let growth = [max_consecutive_growth(&sup), max_consecutive_growth(&grad), max_consecutive_growth(&trace)];
    let pass = growth.iter().all(|g| *g <= max_growth);
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(Verdict::new(
        "bounds",
        pass,
        json!({
            "eps": rs.iter().map(|r| r.eps).collect::<Vec<_>>(),
            "sup_const": sup, "grad_const": grad, "trace_ratio": trace,
            "sup_spread": b.iter().map(|x| x.sup_spread).collect::<Vec<_>>(),
            "grad_spread": b.iter().map(|x| x.grad_spread).collect::<Vec<_>>(),
            "growth": { "sup": growth[0], "grad": growth[1], "trace": growth[2] }, "max_growth": max_growth,
        }),
    )
    .constant("sup_c", max(&sup))
    .constant("grad_c", max(&grad))
    .constant("trace_c", max(&trace)))
}
