use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{psi_profile, ModelPiece, PieceKind};
use crate::fem::{assemble, assemble_charts, axpy, dot, CsrMatrix, LdlFactor};
use crate::mesh::{ChartRole, GluedMesh};
use crate::{c, Error, Real, Result};

use super::{check_cutoff_resolved, cutoff_profile, smoothstep, CutoffVariant, KernelField, RotatedBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuasimodeKind {
    /// `φ_ε`: cut off background eigenfunction, constant on the piece.
    CutoffSurface,
    /// `φ_ε^N`: background eigenfunction bridged by the antisymmetric
    /// Neumann mode of the cylinder.
    NeumannBridge,
    /// `ψ̃`: piece ground state continued by the scaled resolvent kernel.
    CrossCapGreen,
    /// `χ`: `ψ̃` with the correction term carried by `φ_{0,ε}`.
    CrossCapChi,
    /// Cylinder analogue of `ψ̃` built from the sum kernel.
    CylinderGreen,
    /// `ψ` on the piece, zero on the background.
    ZeroExtendedPiece,
}

/// Trial function on the glued mesh with its measured residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Quasimode<T: Real> {
    pub kind: QuasimodeKind,
    pub vector: Vec<T>,
    pub lambda_target: T,
    /// `‖(K − λM) f‖` in the `W^{1,2}` dual norm.
    pub delta: T,
    pub norm_l2: T,
    pub eps: T,
    pub h: T,
    pub k: T,
    pub defect_terms: BTreeMap<String, f64>,
}

/// One line of a quasimode run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeRecord {
    pub kind: QuasimodeKind,
    pub eps: f64,
    pub h: f64,
    pub k: f64,
    pub lambda_target: f64,
    pub delta: f64,
    pub norm_l2: f64,
    pub defect_terms: BTreeMap<String, f64>,
}

impl<T: Real> Quasimode<T> {
    pub fn record(&self) -> QuasimodeRecord {
        QuasimodeRecord {
            kind: self.kind,
            eps: self.eps.to_f64_lossy(),
            h: self.h.to_f64_lossy(),
            k: self.k.to_f64_lossy(),
            lambda_target: self.lambda_target.to_f64_lossy(),
            delta: self.delta.to_f64_lossy(),
            norm_l2: self.norm_l2.to_f64_lossy(),
            defect_terms: self.defect_terms.clone(),
        }
    }

    pub fn recompute_delta(&self, ops: &GluedOperators<T>) -> T {
        ops.delta(&self.vector, self.lambda_target)
    }

    /// Copy scaled to unit L² norm (residual scaled alike).
    pub fn normalized(&self) -> Self {
        let mut q = self.clone();
        let s = T::one() / self.norm_l2;
        q.vector.iter_mut().for_each(|x| *x *= s);
        q.delta = self.delta * s;
        q.norm_l2 = T::one();
        q
    }
}

/// Appends one JSON object per quasimode to `path`.
pub fn append_jsonl(path: &Path, records: &[QuasimodeRecord]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("{}: {e}", path.display()));
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(())
}

/// Operators of the glued surface needed to build and measure quasimodes.
pub struct GluedOperators<T: Real> {
    pub mesh: GluedMesh<T>,
    pub piece: ModelPiece<T>,
    pub stiffness: CsrMatrix<T>,
    pub mass: CsrMatrix<T>,
    /// Mass matrix of the strip chart alone.
    pub strip_mass: CsrMatrix<T>,
    riesz: LdlFactor<T>,
}

impl<T: Real> GluedOperators<T> {
    pub fn new(mesh: GluedMesh<T>) -> Result<Self> {
        let spec = mesh
            .spec
            .ok_or_else(|| Error::InvalidParameter("glued mesh carries no attachment spec".into()))?;
        let piece = spec.piece()?;
        let strip = mesh
            .chart_index(ChartRole::Strip)
            .ok_or_else(|| Error::InvalidParameter("glued mesh has no strip".into()))?;
        let (stiffness, mass) = assemble(&mesh)?;
        let (_, strip_mass) = assemble_charts(&mesh, &[strip])?;
        let riesz = LdlFactor::new(&stiffness.linear_combination(T::one(), &mass, T::one()))?;
        Ok(GluedOperators { mesh, piece, stiffness, mass, strip_mass, riesz })
    }

    /// `√(rᵀ(K+M)⁻¹r)` for a functional `r`.
    pub fn dual_norm(&self, r: &[T]) -> T {
        dot(r, &self.riesz.solve(r)).max(T::zero()).sqrt()
    }

    pub fn residual(&self, f: &[T], lambda: T) -> Vec<T> {
        let mut r = self.stiffness.matvec(f);
        axpy(-lambda, &self.mass.matvec(f), &mut r);
        r
    }

    pub fn delta(&self, f: &[T], lambda: T) -> T {
        self.dual_norm(&self.residual(f, lambda))
    }

    pub fn norm_l2(&self, f: &[T]) -> T {
        self.mass.quad_form(f).max(T::zero()).sqrt()
    }

    pub fn riesz(&self) -> &LdlFactor<T> {
        &self.riesz
    }

    fn strip_index(&self) -> usize {
        self.mesh.chart_index(ChartRole::Strip).expect("checked in new")
    }

    /// Fills a DOF vector: `bg(chart, vertex, dof)` on background and
    /// annulus charts, then `strip(t)` on the strip, which wins on the seam.
    fn fill(&self, mut bg: impl FnMut(usize, usize, usize) -> T, strip: impl Fn(T) -> T) -> Vec<T> {
        let mut out = vec![T::zero(); self.mesh.n_dofs];
        let si = self.strip_index();
        for (ci, ch) in self.mesh.charts.iter().enumerate() {
            if ci == si {
                continue;
            }
            for v in 0..ch.vertices.len() {
                let d = self.mesh.dof_map[ci][v];
                out[d] = bg(ci, v, d);
            }
        }
        let ch = &self.mesh.charts[si];
        for v in 0..ch.vertices.len() {
            out[self.mesh.dof_map[si][v]] = strip(ch.vertices[v][1]);
        }
        out
    }

    /// Per-pole smooth cutoff values at a background vertex.
    fn etas(&self, ci: usize, v: usize, variant: CutoffVariant) -> Vec<T> {
        (0..self.mesh.poles.len())
            .map(|p| {
                let r = self.mesh.radial_distance(ci, v, p).expect("background chart");
                cutoff_profile(r, self.piece.eps, self.piece.k, variant)
            })
            .collect()
    }

    fn radii(&self, ci: usize, v: usize) -> Vec<T> {
        (0..self.mesh.poles.len())
            .map(|p| self.mesh.radial_distance(ci, v, p).expect("background chart"))
            .collect()
    }

    fn finish(&self, kind: QuasimodeKind, vector: Vec<T>, lambda: T, terms: BTreeMap<String, f64>) -> Quasimode<T> {
        Quasimode {
            kind,
            delta: self.delta(&vector, lambda),
            norm_l2: self.norm_l2(&vector),
            vector,
            lambda_target: lambda,
            eps: self.piece.eps,
            h: self.piece.h,
            k: self.piece.k,
            defect_terms: terms,
        }
    }

    /// Residual with the piece-mass contribution `λ M_strip f` added back.
    fn delta_off_piece(&self, f: &[T], lambda: T) -> T {
        let mut r = self.residual(f, lambda);
        axpy(lambda, &self.strip_mass.matvec(f), &mut r);
        self.dual_norm(&r)
    }
}

fn pole_values<T: Real>(filled: &GluedMesh<T>, phi: &[T]) -> Result<Vec<T>> {
    if phi.len() != filled.n_dofs {
        return Err(Error::InvalidParameter(format!(
            "vector of length {} does not match the background mesh ({} DOFs)",
            phi.len(),
            filled.n_dofs
        )));
    }
    (0..filled.poles.len())
        .map(|p| {
            filled
                .pole_dof(p)
                .map(|d| phi[d])
                .ok_or_else(|| Error::InvalidParameter(format!("pole {p} has no filling cap")))
        })
        .collect()
}

/// `η φ + Σ_p (1 − η_p) φ(x_p)` on background DOFs of the glued mesh.
fn cut_background<'a, T: Real>(
    ops: &'a GluedOperators<T>,
    filled: &GluedMesh<T>,
    phi: &[T],
    at_poles: &[T],
    variant: CutoffVariant,
) -> Result<impl FnMut(usize, usize, usize) -> T + 'a> {
    let moved = ops.mesh.transfer_from(filled, phi)?;
    let at_poles = at_poles.to_vec();
    Ok(move |ci: usize, v: usize, d: usize| {
        let etas = ops.etas(ci, v, variant);
        let eta: T = etas.iter().copied().fold(T::one(), |a, b| a * b);
        let mut x = eta * moved[d];
        for (e, fp) in etas.iter().zip(&at_poles) {
            x += (T::one() - *e) * *fp;
        }
        x
    })
}

fn check_filled<T: Real>(ops: &GluedOperators<T>, filled: &GluedMesh<T>) -> Result<()> {
    if filled.poles.len() != ops.mesh.poles.len() {
        return Err(Error::InvalidParameter("background and glued meshes have different poles".into()));
    }
    Ok(())
}

/// `φ_ε`: `η φ + (1 − η) φ(x₀)` around each pole and constant on the piece
/// (linear in `t` between `φ(x₀)` and `φ(x₁)` on a cylinder).
pub fn quasimode_surface<T: Real>(
    ops: &GluedOperators<T>,
    filled: &GluedMesh<T>,
    phi: &[T],
    lambda: T,
    variant: CutoffVariant,
) -> Result<Quasimode<T>> {
    check_filled(ops, filled)?;
    check_cutoff_resolved(&ops.mesh, ops.piece.eps, ops.piece.k, variant)?;
    let at = pole_values(filled, phi)?;
    let h = ops.piece.h;
    let (a0, a1) = (at[0], *at.last().expect("one pole"));
    let vector = ops.fill(cut_background(ops, filled, phi, &at, variant)?, |t| match ops.piece.kind {
        PieceKind::CrossCap => a0,
        PieceKind::Cylinder => a0 + (a1 - a0) * t / h,
    });
    let mut terms = BTreeMap::new();
    terms.insert("phi_at_x0".into(), a0.to_f64_lossy());
    if at.len() > 1 {
        terms.insert("phi_at_x1".into(), a1.to_f64_lossy());
    }
    terms.insert("delta_off_piece".into(), ops.delta_off_piece(&vector, lambda).to_f64_lossy());
    Ok(ops.finish(QuasimodeKind::CutoffSurface, vector, lambda, terms))
}

/// `φ_ε^N`: background cut off around both poles, `φ(x₀) cos(πt/h)` on the
/// cylinder. Needs `φ(x₀) + φ(x₁) = 0`.
pub fn quasimode_neumann_bridge<T: Real>(
    ops: &GluedOperators<T>,
    filled: &GluedMesh<T>,
    phi: &[T],
    lambda: T,
) -> Result<Quasimode<T>> {
    check_filled(ops, filled)?;
    if ops.piece.kind != PieceKind::Cylinder {
        return Err(Error::InvalidPairing("the Neumann bridge needs a cylinder".into()));
    }
    check_cutoff_resolved(&ops.mesh, ops.piece.eps, ops.piece.k, CutoffVariant::Smooth)?;
    let at = pole_values(filled, phi)?;
    let sym = (at[0] + at[1]).abs();
    if !(sym <= c(1e-8)) {
        return Err(Error::SymmetryAssumptionFailed(sym.to_f64_lossy()));
    }
    let h = ops.piece.h;
    let a0 = at[0];
    let vector = ops.fill(cut_background(ops, filled, phi, &at, CutoffVariant::Smooth)?, |t| {
        a0 * (T::PI() * t / h).cos()
    });
    let mut terms = BTreeMap::new();
    terms.insert("phi_at_x0".into(), a0.to_f64_lossy());
    terms.insert("symmetry_defect".into(), sym.to_f64_lossy());
    Ok(ops.finish(QuasimodeKind::NeumannBridge, vector, lambda, terms))
}

/// `ψ` on the piece, zero elsewhere; the baseline the kernel constructions
/// improve on.
pub fn zero_extended_piece<T: Real>(ops: &GluedOperators<T>) -> Result<Quasimode<T>> {
    let piece = ops.piece;
    let lambda = T::PI() * T::PI() / (piece.h * piece.h);
    let psi = |t: T| psi_profile(&piece, t.min(piece.h).max(T::zero())).expect("validated piece");
    let vector = ops.fill(|_, _, _| T::zero(), psi);
    Ok(ops.finish(QuasimodeKind::ZeroExtendedPiece, vector, lambda, BTreeMap::new()))
}

fn check_pairing<T: Real>(ops: &GluedOperators<T>, kernel: &KernelField<T>, kind: PieceKind) -> Result<()> {
    let piece = ops.piece;
    if piece.kind != kind {
        return Err(Error::InvalidPairing(format!("expected a {kind}, the glued mesh has a {}", piece.kind)));
    }
    let want = T::PI() * T::PI() / (piece.h * piece.h);
    if !((kernel.lambda - want).abs() <= want * c(1e-9)) {
        return Err(Error::InvalidPairing(format!(
            "kernel at lambda = {} but the piece has pi^2/h^2 = {want}",
            kernel.lambda
        )));
    }
    let r = piece.hole_radius();
    if !((kernel.hole_radius - r).abs() <= r * c(1e-9)) {
        return Err(Error::InvalidPairing(format!(
            "kernel mesh has hole radius {}, the piece {r}",
            kernel.hole_radius
        )));
    }
    if kernel.poles.len() != kind.n_balls() {
        return Err(Error::InvalidPairing(format!(
            "a {kind} needs a kernel with {} pole(s), got {}",
            kind.n_balls(),
            kernel.poles.len()
        )));
    }
    Ok(())
}

/// Fluxes across the seam at `x₀` by edge quadrature along the discrete
/// loops: the log part `A log(1/r)/2π` out of the annulus (toward the pole)
/// and `ψ` out of the strip at `t = 0`.
fn seam_fluxes<T: Real>(ops: &GluedOperators<T>, amp: T) -> Result<(T, T)> {
    let mesh = &ops.mesh;
    let ai = mesh
        .chart_index(ChartRole::Annulus { pole: 0 })
        .ok_or_else(|| Error::InvalidParameter("glued mesh has no annulus".into()))?;
    let si = ops.strip_index();
    let along = |ci: usize, f: &dyn Fn([T; 2]) -> T| {
        let ch = &mesh.charts[ci];
        let lp = &ch.boundary_loops[0].vertices;
        let n = lp.len();
        let mut s = T::zero();
        for i in 0..n {
            let (pa, pb) = (ch.vertices[lp[i]], ch.vertices[lp[(i + 1) % n]]);
            let mut dx = pb[0] - pa[0];
            if let Some(per) = ch.period[0] {
                dx -= per * (dx / per).round();
            }
            let len = (dx * dx + (pb[1] - pa[1]).powi(2)).sqrt();
            s += len * (f(pa) + f(pb)) * c(0.5);
        }
        s
    };
    let two_pi = T::TAU();
    // −∂_r of the log part, r = |p| in annulus coordinates.
    let fw = along(ai, &|p: [T; 2]| amp / (two_pi * (p[0] * p[0] + p[1] * p[1]).sqrt()));
    let piece = ops.piece;
    let dpsi = crate::analytic::psi_profile_dt(&piece, T::zero());
    let fp = along(si, &|_| -dpsi);
    Ok((fw, fp))
}

/// `ψ̃` for the cross cap:
/// `A(η H + (1 − η)(log(1/r)/2π + e))` on the background and
/// `ψ + A(1 + e_{ε,λ}) log(1/ε^k)/2π` on the piece, `A = (2π/h)^{3/2} ε^{1/2}`.
pub fn quasimode_crosscap_green<T: Real>(
    ops: &GluedOperators<T>,
    filled: &GluedMesh<T>,
    kernel: &KernelField<T>,
) -> Result<Quasimode<T>> {
    check_filled(ops, filled)?;
    check_pairing(ops, kernel, PieceKind::CrossCap)?;
    check_cutoff_resolved(&ops.mesh, ops.piece.eps, ops.piece.k, CutoffVariant::Smooth)?;
    let piece = ops.piece;
    let two_pi = T::TAU();
    let amp = (two_pi / piece.h).powf(c(1.5)) * piece.eps.sqrt();
    let pd = kernel.poles[0];
    let log_inv = (T::one() / piece.hole_radius()).ln();
    let h_moved = ops.mesh.transfer_from(filled, &kernel.values)?;
    let lift = amp * (T::one() + pd.e_eps_lambda) * log_inv / two_pi;
    let vector = ops.fill(
        |ci, v, d| {
            let eta = ops.etas(ci, v, CutoffVariant::Smooth)[0];
            let r = ops.radii(ci, v)[0];
            amp * (eta * h_moved[d] + (T::one() - eta) * ((T::one() / r).ln() / two_pi + pd.e_at_pole))
        },
        |t| psi_profile(&piece, t.min(piece.h)).expect("validated piece") + lift,
    );
    let (fw, fp) = seam_fluxes(ops, amp)?;
    let mut lifted = ops.residual(&vector, kernel.lambda);
    let ones: Vec<T> = ops.mesh.strip_dofs().iter().fold(vec![T::zero(); ops.mesh.n_dofs], |mut v, &d| {
        v[d] = lift;
        v
    });
    axpy(kernel.lambda, &ops.strip_mass.matvec(&ones), &mut lifted);
    let mut terms = BTreeMap::new();
    terms.insert("amplitude".into(), amp.to_f64_lossy());
    terms.insert("e_at_pole".into(), pd.e_at_pole.to_f64_lossy());
    terms.insert("e_eps_lambda".into(), pd.e_eps_lambda.to_f64_lossy());
    terms.insert("piece_lift".into(), lift.to_f64_lossy());
    terms.insert("flux_log_part".into(), fw.to_f64_lossy());
    terms.insert("flux_piece".into(), fp.to_f64_lossy());
    terms.insert("flux_mismatch".into(), ((fw + fp).abs() / amp).to_f64_lossy());
    terms.insert("delta_without_piece_constant".into(), ops.dual_norm(&lifted).to_f64_lossy());
    Ok(ops.finish(QuasimodeKind::CrossCapGreen, vector, kernel.lambda, terms))
}

/// `χ = ψ̃ − A (1/2π)(1 + e_{ε,λ}) log(1/ε^k) φ_{0,ε}/φ₀(x₀)`, which equals
/// `ψ` on the piece.
pub fn quasimode_crosscap_chi<T: Real>(
    ops: &GluedOperators<T>,
    filled: &GluedMesh<T>,
    kernel: &KernelField<T>,
    basis: &RotatedBasis<T>,
) -> Result<Quasimode<T>> {
    if !(basis.eval0 > T::zero()) {
        return Err(Error::HypothesisViolated(format!(
            "phi0(x0) must be positive, got {}",
            basis.eval0
        )));
    }
    let green = quasimode_crosscap_green(ops, filled, kernel)?;
    let phi0 = &basis.vectors[0];
    let surf = quasimode_surface(ops, filled, phi0, basis.rayleigh[0], CutoffVariant::Smooth)?;
    let at = pole_values(filled, phi0)?[0];
    let coef = green.defect_terms["piece_lift"];
    let coef_t = T::from_f64(coef).expect("finite");
    let mut vector = green.vector.clone();
    axpy(-coef_t / at, &surf.vector, &mut vector);
    let mut terms = green.defect_terms.clone();
    terms.insert("correction_coefficient".into(), coef);
    terms.insert("eval0".into(), basis.eval0.to_f64_lossy());
    Ok(ops.finish(QuasimodeKind::CrossCapChi, vector, kernel.lambda, terms))
}

/// Cylinder analogue of `ψ̃` with `B = 2(π/h)^{3/2} ε^{1/2}`: around pole
/// `p` the sum kernel is matched to `log(1/|x − x_p|)/2π + e_p + H_{1−p}(x_p)`,
/// and the piece carries `ψ + B(ρ C₀ + (1 − ρ) C₁)` with `ρ = 1 − (3s² − 2s³)`,
/// `s = t/h`, and `C_p` the matched constant at `∂B_{ε^k}(x_p)`.
pub fn quasimode_cylinder_green<T: Real>(
    ops: &GluedOperators<T>,
    filled: &GluedMesh<T>,
    kernel: &KernelField<T>,
) -> Result<Quasimode<T>> {
    check_filled(ops, filled)?;
    check_pairing(ops, kernel, PieceKind::Cylinder)?;
    check_cutoff_resolved(&ops.mesh, ops.piece.eps, ops.piece.k, CutoffVariant::Smooth)?;
    let piece = ops.piece;
    let two_pi = T::TAU();
    let amp = c::<T>(2.0) * (T::PI() / piece.h).powf(c(1.5)) * piece.eps.sqrt();
    let log_inv = (T::one() / piece.hole_radius()).ln();
    let mut consts = [T::zero(); 2];
    let mut offsets = [T::zero(); 2];
    for pd in &kernel.poles {
        if pd.pole > 1 {
            return Err(Error::InvalidPairing(format!("kernel pole index {} for a cylinder", pd.pole)));
        }
        offsets[pd.pole] = pd.e_at_pole + pd.cross;
        consts[pd.pole] = log_inv / two_pi + offsets[pd.pole];
    }
    let j_moved = ops.mesh.transfer_from(filled, &kernel.values)?;
    let vector = ops.fill(
        |ci, v, d| {
            let etas = ops.etas(ci, v, CutoffVariant::Smooth);
            let radii = ops.radii(ci, v);
            let eta: T = etas.iter().copied().fold(T::one(), |a, b| a * b);
            let mut x = eta * j_moved[d];
            for p in 0..2 {
                x += (T::one() - etas[p]) * ((T::one() / radii[p]).ln() / two_pi + offsets[p]);
            }
            amp * x
        },
        |t| {
            let rho = T::one() - smoothstep(t / piece.h);
            psi_profile(&piece, t.min(piece.h)).expect("validated piece")
                + amp * (rho * consts[0] + (T::one() - rho) * consts[1])
        },
    );
    let mut terms = BTreeMap::new();
    terms.insert("amplitude".into(), amp.to_f64_lossy());
    for p in 0..2 {
        terms.insert(format!("matched_constant_{p}"), consts[p].to_f64_lossy());
    }
    Ok(ops.finish(QuasimodeKind::CylinderGreen, vector, kernel.lambda, terms))
}
