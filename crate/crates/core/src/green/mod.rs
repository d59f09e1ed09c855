//! Eigenbasis rotation at the attachment point, deflated resolvent kernels,
//! cutoff functions, quasimodes and the spectral localization bound.

mod kernel;
mod quasimode;
mod tail;

pub use kernel::{deflated_resolvent, symmetric_kernel, BackgroundProblem, KernelField, PoleData};
pub use quasimode::{
    append_jsonl, quasimode_crosscap_chi, quasimode_crosscap_green, quasimode_cylinder_green,
    quasimode_neumann_bridge, quasimode_surface, zero_extended_piece, GluedOperators, Quasimode, QuasimodeKind,
    QuasimodeRecord,
};
pub use tail::{certify_window, spectral_tail_bound, TailBoundReport, WindowCertificate};

use serde::{Deserialize, Serialize};

use crate::dense::align_with_first_axis;
use crate::fem::EigenPair;
use crate::mesh::{ChartRole, GluedMesh};
use crate::{c, Error, Real, Result};

/// λ₁-eigenvectors rotated so that only the first one sees the attachment
/// point(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RotatedBasis<T: Real> {
    /// Mass-orthonormal rotated vectors.
    pub vectors: Vec<Vec<T>>,
    /// Rayleigh quotients of the rotated vectors.
    pub rayleigh: Vec<T>,
    /// `φ₀(x₀)`, or `φ₀(x₀) + φ₀(x₁)` with two poles; never negative.
    pub eval0: T,
    /// Evaluation vector after rotation, `(eval0, 0, …, 0)` up to rounding.
    pub evaluations: Vec<T>,
    /// Row-major `K×K` orthogonal matrix: `vectors[j] = Σᵢ R[j][i] φᵢ`.
    pub rotation: Vec<T>,
    /// Every eigenvector vanishes at the pole(s).
    pub vanishing: bool,
}

/// Rotates the cluster `pairs` so that the evaluation functional at
/// `pole_dofs` (summed over the poles) is carried by the first vector alone.
pub fn rotate_basis<T: Real>(pairs: &[EigenPair<T>], pole_dofs: &[usize]) -> Result<RotatedBasis<T>> {
    let kk = pairs.len();
    if kk == 0 {
        return Err(Error::InvalidParameter("rotate_basis needs at least one vector".into()));
    }
    if pole_dofs.is_empty() {
        return Err(Error::InvalidParameter("rotate_basis needs at least one pole".into()));
    }
    let n = pairs[0].vector.len();
    if let Some(&d) = pole_dofs.iter().find(|&&d| d >= n) {
        return Err(Error::InvalidParameter(format!("pole DOF {d} outside vectors of length {n}")));
    }
    let eval: Vec<T> = pairs
        .iter()
        .map(|p| pole_dofs.iter().map(|&d| p.vector[d]).sum())
        .collect();
    let scale = pairs
        .iter()
        .flat_map(|p| p.vector.iter())
        .fold(T::zero(), |a, x| a.max(x.abs()));
    let norm = eval.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
    let vanishing = norm <= scale * c(1e-12);
    let rotation = if vanishing {
        let mut id = vec![T::zero(); kk * kk];
        (0..kk).for_each(|i| id[i * kk + i] = T::one());
        id
    } else {
        align_with_first_axis(&eval)
    };
    let mut vectors = Vec::with_capacity(kk);
    let mut rayleigh = Vec::with_capacity(kk);
    let mut evaluations = Vec::with_capacity(kk);
    for j in 0..kk {
        let mut v = vec![T::zero(); n];
        let mut q = T::zero();
        let mut e = T::zero();
        for (i, p) in pairs.iter().enumerate() {
            let r = rotation[j * kk + i];
            if r != T::zero() {
                crate::fem::axpy(r, &p.vector, &mut v);
            }
            q += r * r * p.value;
            e += r * eval[i];
        }
        vectors.push(v);
        rayleigh.push(q);
        evaluations.push(e);
    }
    Ok(RotatedBasis {
        vectors,
        rayleigh,
        eval0: if vanishing { T::zero() } else { norm },
        evaluations,
        rotation,
        vanishing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffVariant {
    /// `3s² − 2s³` with `s = r/ε^k − 1` on `[ε^k, 2ε^k]`.
    Smooth,
    /// `1 − log(r/ε^{k/2}) / log(ε^{k/2})` on `[ε^k, ε^{k/2}]`.
    Log,
}

/// Smoothstep `3s² − 2s³` on `[0, 1]`, clamped outside.
pub fn smoothstep<T: Real>(s: T) -> T {
    let s = s.max(T::zero()).min(T::one());
    s * s * (c::<T>(3.0) - c::<T>(2.0) * s)
}

/// Radial profile of the cutoff around one pole.
pub fn cutoff_profile<T: Real>(r: T, eps: T, k: T, variant: CutoffVariant) -> T {
    let r_in = eps.powf(k);
    match variant {
        CutoffVariant::Smooth => smoothstep(r / r_in - T::one()),
        CutoffVariant::Log => {
            let r_mid = eps.powf(k * c(0.5));
            if r <= r_in {
                T::zero()
            } else if r >= r_mid {
                T::one()
            } else {
                T::one() - (r / r_mid).ln() / r_mid.ln()
            }
        }
    }
}

/// Outer radius of the cutoff transition.
fn cutoff_outer<T: Real>(eps: T, k: T, variant: CutoffVariant) -> T {
    match variant {
        CutoffVariant::Smooth => c::<T>(2.0) * eps.powf(k),
        CutoffVariant::Log => eps.powf(k * c(0.5)),
    }
}

/// Checks that every annulus extends past the cutoff transition with at
/// least two rings inside it.
pub(crate) fn check_cutoff_resolved<T: Real>(mesh: &GluedMesh<T>, eps: T, k: T, variant: CutoffVariant) -> Result<()> {
    let r_in = eps.powf(k);
    let r_out = cutoff_outer(eps, k, variant);
    for ch in mesh.charts.iter().filter(|ch| matches!(ch.role, ChartRole::Annulus { .. })) {
        let nt = ch.boundary_loops[0].vertices.len();
        let radius = |j: usize| {
            let [x, y] = ch.vertices[j * nt];
            (x * x + y * y).sqrt()
        };
        let rings = ch.vertices.len() / nt;
        let outer = ch.vertices[(rings - 1) * nt..]
            .iter()
            .fold(T::infinity(), |m, p| m.min((p[0] * p[0] + p[1] * p[1]).sqrt()));
        if outer < r_out {
            return Err(Error::RefinementNeeded(format!(
                "annulus reaches r = {outer}, the cutoff needs {r_out}"
            )));
        }
        let inside = (0..rings).filter(|&j| radius(j) > r_in && radius(j) < r_out).count();
        if inside < 2 {
            return Err(Error::RefinementNeeded(format!(
                "only {inside} annulus rings inside the cutoff band [{r_in}, {r_out}]"
            )));
        }
    }
    Ok(())
}

/// Cutoff `η` per vertex of chart `ci`: product over the poles, 0 on the
/// strip and on filling caps.
fn cutoff_at<T: Real>(mesh: &GluedMesh<T>, ci: usize, v: usize, eps: T, k: T, variant: CutoffVariant) -> T {
    match mesh.charts[ci].role {
        ChartRole::Strip | ChartRole::Cap { .. } => T::zero(),
        _ => (0..mesh.poles.len())
            .map(|p| {
                let r = mesh.radial_distance(ci, v, p).expect("not a strip chart");
                cutoff_profile(r, eps, k, variant)
            })
            .fold(T::one(), |a, b| a * b),
    }
}

/// Cutoff function as a DOF vector: 0 on the piece (or caps), 1 outside the
/// transition band around each pole.
pub fn cutoff<T: Real>(mesh: &GluedMesh<T>, eps: T, k: T, variant: CutoffVariant) -> Result<Vec<T>> {
    if !(eps > T::zero() && eps < T::one()) || !(k > T::zero()) {
        return Err(Error::InvalidParameter(format!("cutoff needs 0 < eps < 1 and k > 0, got {eps}, {k}")));
    }
    check_cutoff_resolved(mesh, eps, k, variant)?;
    let mut out = vec![T::zero(); mesh.n_dofs];
    let mut set = vec![false; mesh.n_dofs];
    // Strip and caps first so that seam DOFs take the value 0.
    let order: Vec<usize> = (0..mesh.charts.len())
        .filter(|&ci| matches!(mesh.charts[ci].role, ChartRole::Strip | ChartRole::Cap { .. }))
        .chain((0..mesh.charts.len()).filter(|&ci| !matches!(mesh.charts[ci].role, ChartRole::Strip | ChartRole::Cap { .. })))
        .collect();
    for ci in order {
        for v in 0..mesh.charts[ci].vertices.len() {
            let d = mesh.dof_map[ci][v];
            if !set[d] {
                out[d] = cutoff_at(mesh, ci, v, eps, k, variant);
                set[d] = true;
            }
        }
    }
    Ok(out)
}
