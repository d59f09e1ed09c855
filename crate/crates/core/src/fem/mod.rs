//! Linear finite elements on glued meshes: assembly, factorizations, the
//! generalized eigensolver and the W^{1,2}-dual residual norm.

mod eigen;
mod export;
mod ldl;
mod sparse;

pub use eigen::{solve_lowest, solve_lowest_with, EigenPair, ShiftInvert, SolverOptions, SolverStats, Spectrum};
pub use export::{spectrum_json, write_vectors};
pub use ldl::{rcm_ordering, LdlFactor};
pub use sparse::{CsrMatrix, OperatorKind};

use crate::mesh::{mesh_fingerprint, GluedMesh};
use crate::{c, Error, Real, Result};

pub use sparse::{axpy, dot};

/// P1 element matrices of a flat triangle.
fn element_matrices<T: Real>(p: [[T; 2]; 3]) -> (T, [[T; 3]; 3], [[T; 3]; 3]) {
    let area = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])) * c(0.5);
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let g = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let mut ke = [[T::zero(); 3]; 3];
    let mut me = [[T::zero(); 3]; 3];
    let four_a = c::<T>(4.0) * area;
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = (b[i] * b[j] + g[i] * g[j]) / four_a;
            me[i][j] = area / c(12.0) * if i == j { c(2.0) } else { T::one() };
        }
    }
    (area, ke, me)
}

/// Stiffness and mass restricted to a subset of charts, in global DOF
/// numbering (DOFs outside those charts get empty rows).
pub fn assemble_charts<T: Real>(mesh: &GluedMesh<T>, charts: &[usize]) -> Result<(CsrMatrix<T>, CsrMatrix<T>)> {
    let mut kt = Vec::new();
    let mut mt = Vec::new();
    for &ci in charts {
        let ch = &mesh.charts[ci];
        let map = &mesh.dof_map[ci];
        for (t, tri) in ch.triangles.iter().enumerate() {
            let (area, ke, me) = element_matrices(ch.triangle_coords(t));
            if !(area > T::zero()) {
                return Err(Error::DegenerateTriangle { chart: ci, triangle: t });
            }
            let f = (ch.metric_factor[tri[0]] + ch.metric_factor[tri[1]] + ch.metric_factor[tri[2]]) / c(3.0);
            for i in 0..3 {
                for j in 0..3 {
                    let (di, dj) = (map[tri[i]], map[tri[j]]);
                    kt.push((di, dj, ke[i][j]));
                    mt.push((di, dj, me[i][j] * f));
                }
            }
        }
    }
    Ok((
        CsrMatrix::from_triplets(mesh.n_dofs, kt, OperatorKind::Stiffness),
        CsrMatrix::from_triplets(mesh.n_dofs, mt, OperatorKind::Mass),
    ))
}

/// Global stiffness and mass: each chart assembled in its own flat metric
/// and accumulated through the DOF map.
pub fn assemble<T: Real>(mesh: &GluedMesh<T>) -> Result<(CsrMatrix<T>, CsrMatrix<T>)> {
    let all: Vec<usize> = (0..mesh.charts.len()).collect();
    assemble_charts(mesh, &all)
}

/// Index maps of a Dirichlet restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletRestriction {
    /// Kept (interior) DOFs in ascending order.
    pub interior: Vec<usize>,
    pub n_full: usize,
}

impl DirichletRestriction {
    pub fn restrict<T: Real>(&self, op: &CsrMatrix<T>) -> CsrMatrix<T> {
        op.principal_submatrix(&self.interior)
    }

    pub fn restrict_vector<T: Real>(&self, v: &[T]) -> Vec<T> {
        self.interior.iter().map(|&d| v[d]).collect()
    }

    /// Zero extension back to the full DOF set.
    pub fn extend<T: Real>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_full];
        for (&d, x) in self.interior.iter().zip(v) {
            out[d] = *x;
        }
        out
    }
}

/// Eliminates the DOFs on the given `(chart, loop)` boundary loops, and
/// optionally every DOF outside `region`.
pub fn dirichlet_restriction<T: Real>(
    mesh: &GluedMesh<T>,
    loops: &[(usize, usize)],
    region: Option<&[usize]>,
) -> Result<DirichletRestriction> {
    let mut drop = vec![false; mesh.n_dofs];
    for &(ch, lp) in loops {
        if ch >= mesh.charts.len() {
            return Err(Error::InvalidParameter(format!("unknown chart {ch}")));
        }
        for d in mesh.loop_dofs(ch, lp)? {
            drop[d] = true;
        }
    }
    if let Some(region) = region {
        let mut inside = vec![false; mesh.n_dofs];
        for &d in region {
            inside[d] = true;
        }
        for d in 0..mesh.n_dofs {
            if !inside[d] {
                drop[d] = true;
            }
        }
    }
    Ok(DirichletRestriction {
        interior: (0..mesh.n_dofs).filter(|&d| !drop[d]).collect(),
        n_full: mesh.n_dofs,
    })
}

/// Restricts `op` to the DOFs off the given loops.
pub fn dirichlet_restrict<T: Real>(
    op: &CsrMatrix<T>,
    mesh: &GluedMesh<T>,
    loops: &[(usize, usize)],
) -> Result<(CsrMatrix<T>, DirichletRestriction)> {
    let r = dirichlet_restriction(mesh, loops, None)?;
    Ok((r.restrict(op), r))
}

/// Discrete harmonic function on the union of `charts` with prescribed
/// values on `trace` DOFs. Returns a full-length vector, zero off the region.
pub fn harmonic_extension<T: Real>(
    mesh: &GluedMesh<T>,
    charts: &[usize],
    trace: &[(usize, T)],
) -> Result<Vec<T>> {
    let (k, _) = assemble_charts(mesh, charts)?;
    let mut region: Vec<usize> = charts.iter().flat_map(|&c| mesh.chart_dofs(c)).collect();
    region.sort_unstable();
    region.dedup();
    let mut fixed = vec![None; mesh.n_dofs];
    for &(d, v) in trace {
        fixed[d] = Some(v);
    }
    let free: Vec<usize> = region.iter().copied().filter(|&d| fixed[d].is_none()).collect();
    let mut out = vec![T::zero(); mesh.n_dofs];
    for &(d, v) in trace {
        out[d] = v;
    }
    if free.is_empty() {
        return Ok(out);
    }
    let kff = k.principal_submatrix(&free);
    let rhs: Vec<T> = free
        .iter()
        .map(|&i| {
            -k.row(i)
                .filter_map(|(j, a)| fixed[j].map(|v| a * v))
                .fold(T::zero(), |s, x| s + x)
        })
        .collect();
    let fac = LdlFactor::new(&kff)
        .map_err(|e| Error::SolverFailure(format!("harmonic extension: {e}")))?;
    let u = fac.solve(&rhs);
    for (&d, x) in free.iter().zip(u) {
        out[d] = x;
    }
    Ok(out)
}

/// Riesz map of `W^{1,2}`: factorization of `K + M`.
pub struct DualNorm<'a, T: Real> {
    k: &'a CsrMatrix<T>,
    m: &'a CsrMatrix<T>,
    riesz: LdlFactor<T>,
}

impl<'a, T: Real> DualNorm<'a, T> {
    pub fn new(k: &'a CsrMatrix<T>, m: &'a CsrMatrix<T>) -> Result<Self> {
        let riesz = LdlFactor::new(&k.linear_combination(T::one(), m, T::one()))?;
        Ok(DualNorm { k, m, riesz })
    }

    /// Reuses an existing factorization of `K + M`.
    pub fn with_factor(k: &'a CsrMatrix<T>, m: &'a CsrMatrix<T>, riesz: LdlFactor<T>) -> Self {
        DualNorm { k, m, riesz }
    }

    /// `√(rᵀ (K+M)⁻¹ r)` for a residual functional `r`.
    pub fn functional_norm(&self, r: &[T]) -> T {
        let z = self.riesz.solve(r);
        dot(r, &z).max(T::zero()).sqrt()
    }

    /// `δ = ‖(K − λM) f‖` in the `W^{1,2}` dual norm.
    pub fn residual(&self, f: &[T], lambda: T) -> T {
        let kf = self.k.matvec(f);
        let mf = self.m.matvec(f);
        let r: Vec<T> = kf.iter().zip(&mf).map(|(a, b)| *a - lambda * *b).collect();
        self.functional_norm(&r)
    }

    /// `‖f‖²_{W^{1,2}} = fᵀ(K+M)f`.
    pub fn energy(&self, f: &[T]) -> T {
        self.k.quad_form(f) + self.m.quad_form(f)
    }

    pub fn riesz(&self) -> &LdlFactor<T> {
        &self.riesz
    }
}

/// One-shot `δ = √(rᵀz)`, `r = (K − λM)f`, `(K+M)z = r`.
pub fn dual_residual_norm<T: Real>(k: &CsrMatrix<T>, m: &CsrMatrix<T>, f: &[T], lambda: T) -> Result<T> {
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("vector has non-finite entries".into()));
    }
    Ok(DualNorm::new(k, m)?.residual(f, lambda))
}

/// Lowest `count` eigenpairs of a mesh, fingerprinted.
pub fn mesh_spectrum<T: Real>(mesh: &GluedMesh<T>, count: usize, opts: &SolverOptions<T>) -> Result<Spectrum<T>> {
    let (k, m) = assemble(mesh)?;
    let mut s = solve_lowest(&k, &m, count, opts)?;
    s.mesh_fingerprint = mesh_fingerprint(mesh);
    Ok(s)
}

/// Neumann spectrum of `Σ∖B_{ε^k}`: natural boundary conditions on the free
/// hole loops, so this is the plain spectrum of the holed mesh.
pub fn neumann_spectrum<T: Real>(holed: &GluedMesh<T>, count: usize, opts: &SolverOptions<T>) -> Result<Spectrum<T>> {
    if holed.chart_index(crate::mesh::ChartRole::Strip).is_some() {
        return Err(Error::InvalidParameter(
            "Neumann spectrum expects a background mesh without the piece".into(),
        ));
    }
    mesh_spectrum(holed, count, opts)
}

/// `∫ u²` along a boundary loop, with `u` linear on each polygon edge.
pub fn loop_l2_squared<T: Real>(mesh: &GluedMesh<T>, chart: usize, lp: usize, u: &[T]) -> Result<T> {
    let ch = &mesh.charts[chart];
    let l = ch.boundary_loops.get(lp).ok_or(Error::UnknownLoop(lp))?;
    let n = l.vertices.len();
    let mut s = T::zero();
    for i in 0..n {
        let (a, b) = (l.vertices[i], l.vertices[(i + 1) % n]);
        let (pa, pb) = (ch.vertices[a], ch.vertices[b]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let (ua, ub) = (u[mesh.dof_map[chart][a]], u[mesh.dof_map[chart][b]]);
        s += len / c(3.0) * (ua * ua + ua * ub + ub * ub);
    }
    Ok(s)
}
