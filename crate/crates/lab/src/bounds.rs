use serde::{Deserialize, Serialize};
use sgl_core::fem::{loop_l2_squared, CsrMatrix};
use sgl_core::mesh::{ChartRole, GluedMesh};
use sgl_core::GluedMesh64;

use crate::error::{LabError, Result};
use crate::fit::median;
use crate::record::BoundsSummary;

/// Log-spaced rings between the hole and radius 1/2.
pub const RINGS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingStat {
    pub r_lo: f64,
    pub r_hi: f64,
    /// Geometric mid-radius used to scale the ring.
    pub r: f64,
    /// `sup |u|` over vertices in the ring; NaN for empty rings.
    pub sup: f64,
    /// `sup |∇u|` over triangles with centroid in the ring and `r ≥ 2ε^k`.
    pub grad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub pole: usize,
    pub rings: Vec<RingStat>,
    /// `sup / log(1/r)` per ring.
    pub sup_ratios: Vec<f64>,
    /// `grad · r` per ring.
    pub grad_ratios: Vec<f64>,
    pub sup_const: f64,
    pub grad_const: f64,
    /// Largest ring ratio over the median ring ratio.
    pub sup_spread: f64,
    pub grad_spread: f64,
}

fn spread(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let max = finite.iter().copied().fold(0.0, f64::max);
    match median(&finite) {
        Some(m) if m > 0.0 => max / m,
        _ => 0.0,
    }
}

fn non_strip_charts(mesh: &GluedMesh64) -> Vec<usize> {
    (0..mesh.charts.len())
        .filter(|&c| !matches!(mesh.charts[c].role, ChartRole::Strip))
        .collect()
}

/// Ring-wise `sup |u|` against `log(1/r)` and `sup |∇u|` against `1/r`
/// around `pole`, for radii in `[r_min, 1/2]`; gradients only count for
/// `r ≥ 2 r_min`.
pub fn check_pointwise_bounds(mesh: &GluedMesh64, u: &[f64], pole: usize, r_min: f64) -> Result<PointwiseReport> {
    if u.len() != mesh.n_dofs {
        return Err(LabError::InsufficientData(format!("{} values for {} DOFs", u.len(), mesh.n_dofs)));
    }
    if !(r_min > 0.0 && r_min < 0.25) {
        return Err(LabError::Config(format!("r_min must lie in (0, 1/4), got {r_min}")));
    }
    let r_max = 0.5;
    let ratio = (r_max / r_min).powf(1.0 / RINGS as f64);
    let mut rings: Vec<RingStat> = (0..RINGS)
        .map(|j| {
            let r_lo = r_min * ratio.powi(j as i32);
            let r_hi = r_lo * ratio;
            RingStat { r_lo, r_hi, r: (r_lo * r_hi).sqrt(), sup: f64::NAN, grad: f64::NAN }
        })
        .collect();
    let ring_of = |r: f64| -> Option<usize> {
        if !(r >= r_min * (1.0 - 1e-9) && r <= r_max) {
            return None;
        }
        Some((((r / r_min).ln() / ratio.ln()).floor().max(0.0) as usize).min(RINGS - 1))
    };
    let upd = |slot: &mut f64, v: f64| {
        if slot.is_nan() || v > *slot {
            *slot = v;
        }
    };
    for ci in non_strip_charts(mesh) {
        let ch = &mesh.charts[ci];
        let radii: Vec<Option<f64>> =
            (0..ch.vertices.len()).map(|v| mesh.radial_distance(ci, v, pole)).collect();
        for (v, r) in radii.iter().enumerate() {
            if let Some(j) = r.and_then(ring_of) {
                upd(&mut rings[j].sup, u[mesh.dof_map[ci][v]].abs());
            }
        }
        for (t, tri) in ch.triangles.iter().enumerate() {
            let Some(rc) = tri.iter().map(|&v| radii[v]).sum::<Option<f64>>().map(|s| s / 3.0) else {
                continue;
            };
            if rc < 2.0 * r_min {
                continue;
            }
            let Some(j) = ring_of(rc) else { continue };
            let [p0, p1, p2] = ch.triangle_coords(t);
            let [u0, u1, u2] = tri.map(|v| u[mesh.dof_map[ci][v]]);
            let (ax, ay) = (p1[0] - p0[0], p1[1] - p0[1]);
            let (bx, by) = (p2[0] - p0[0], p2[1] - p0[1]);
            let det = ax * by - ay * bx;
            if det == 0.0 {
                continue;
            }
            let (du1, du2) = (u1 - u0, u2 - u0);
            let gx = (du1 * by - du2 * ay) / det;
            let gy = (du2 * ax - du1 * bx) / det;
            upd(&mut rings[j].grad, gx.hypot(gy));
        }
    }
    let sup_ratios: Vec<f64> = rings.iter().map(|g| g.sup / (1.0 / g.r).ln()).collect();
    let grad_ratios: Vec<f64> = rings.iter().map(|g| g.grad * g.r).collect();
    let max = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
    Ok(PointwiseReport {
        pole,
        sup_const: max(&sup_ratios),
        grad_const: max(&grad_ratios),
        sup_spread: spread(&sup_ratios),
        grad_spread: spread(&grad_ratios),
        rings,
        sup_ratios,
        grad_ratios,
    })
}

/// `Σ_p ∫_{∂B_{ε^k}(x_p)} |u|² / (ε^k log(1/ε^k) uᵀ(K+M)u)` with `K, M`
/// assembled on the charts off the piece.
pub fn trace_ratio(
    mesh: &GluedMesh64,
    k_off: &CsrMatrix<f64>,
    m_off: &CsrMatrix<f64>,
    u: &[f64],
    hole_radius: f64,
) -> Result<f64> {
    let mut boundary = 0.0;
    for p in 0..mesh.poles.len() {
        let ci = mesh
            .chart_index(ChartRole::Annulus { pole: p })
            .ok_or_else(|| LabError::Config(format!("no annulus around pole {p}")))?;
        boundary += loop_l2_squared(mesh, ci, 0, u)?;
    }
    let w = k_off.quad_form(u) + m_off.quad_form(u);
    if !(w > 0.0) {
        return Ok(0.0);
    }
    Ok(boundary / (hole_radius * (1.0 / hole_radius).ln() * w))
}

/// Assembles `K, M` on every chart except the strip.
pub fn off_piece_operators(mesh: &GluedMesh64) -> Result<(CsrMatrix<f64>, CsrMatrix<f64>)> {
    Ok(sgl_core::fem::assemble_charts(mesh, &non_strip_charts(mesh))?)
}

/// Pointwise reports at every pole plus the trace ratio, folded into one
/// summary (worst pole).
pub fn summarize_bounds(
    mesh: &GluedMesh<f64>,
    off: &(CsrMatrix<f64>, CsrMatrix<f64>),
    u: &[f64],
    hole_radius: f64,
) -> Result<BoundsSummary> {
    let mut s = BoundsSummary::default();
    for p in 0..mesh.poles.len() {
        let r = check_pointwise_bounds(mesh, u, p, hole_radius)?;
        s.sup_const = s.sup_const.max(r.sup_const);
        s.grad_const = s.grad_const.max(r.grad_const);
        s.sup_spread = s.sup_spread.max(r.sup_spread);
        s.grad_spread = s.grad_spread.max(r.grad_spread);
    }
    s.trace_ratio = trace_ratio(mesh, &off.0, &off.1, u, hole_radius)?;
    Ok(s)
}
