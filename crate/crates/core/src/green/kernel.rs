use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::fem::{assemble, axpy, dot, solve_lowest, CsrMatrix, EigenPair, LdlFactor, SolverOptions, Spectrum};
use crate::mesh::{mesh_fingerprint, ChartRole, GluedMesh};
use crate::{c, Error, Real, Result};

use super::{rotate_basis, RotatedBasis};

/// Closed background (holes filled with caps) with its operators and low
/// spectrum.
#[derive(Debug, Clone)]
pub struct BackgroundProblem<T: Real> {
    pub mesh: GluedMesh<T>,
    pub stiffness: CsrMatrix<T>,
    pub mass: CsrMatrix<T>,
    pub spectrum: Spectrum<T>,
    /// Indices of the λ₁-cluster in `spectrum.pairs`.
    pub cluster: Range<usize>,
    /// `λ_{K+1} − λ₁`.
    pub gap: T,
}

impl<T: Real> BackgroundProblem<T> {
    /// Assembles `mesh` and computes its lowest `count` eigenpairs; `count`
    /// must reach past the λ₁-cluster.
    pub fn new(mesh: GluedMesh<T>, count: usize, opts: &SolverOptions<T>) -> Result<Self> {
        if mesh.chart_index(ChartRole::Strip).is_some() {
            return Err(Error::InvalidParameter("background problem expects a mesh without the piece".into()));
        }
        let (stiffness, mass) = assemble(&mesh)?;
        let mut spectrum = solve_lowest(&stiffness, &mass, count, opts)?;
        spectrum.mesh_fingerprint = mesh_fingerprint(&mesh);
        let (cluster, gap) = lambda1_cluster(&spectrum.values())?;
        Ok(BackgroundProblem { mesh, stiffness, mass, spectrum, cluster, gap })
    }

    pub fn cluster_pairs(&self) -> &[EigenPair<T>] {
        &self.spectrum.pairs[self.cluster.clone()]
    }

    pub fn lambda1(&self) -> T {
        self.spectrum.pairs[self.cluster.start].value
    }

    /// Cap-center DOFs of all poles.
    pub fn pole_dofs(&self) -> Result<Vec<usize>> {
        (0..self.mesh.poles.len())
            .map(|p| {
                self.mesh
                    .pole_dof(p)
                    .ok_or_else(|| Error::InvalidParameter(format!("pole {p} has no filling cap")))
            })
            .collect()
    }

    /// Radius of the removed balls, read off the inner annulus loop.
    pub fn hole_radius(&self) -> Result<T> {
        let ci = self
            .mesh
            .chart_index(ChartRole::Annulus { pole: 0 })
            .ok_or_else(|| Error::InvalidParameter("background has no annulus".into()))?;
        let [x, y] = self.mesh.charts[ci].vertices[0];
        Ok((x * x + y * y).sqrt())
    }

    /// The cluster rotated against the evaluation at every pole.
    pub fn rotated_basis(&self) -> Result<RotatedBasis<T>> {
        rotate_basis(self.cluster_pairs(), &self.pole_dofs()?)
    }
}

/// λ₁-cluster by the gap test: the largest jump among the nonzero computed
/// eigenvalues ends the cluster, and every member must lie within half of
/// that gap from λ₁.
pub fn lambda1_cluster<T: Real>(values: &[T]) -> Result<(Range<usize>, T)> {
    if values.len() < 3 {
        return Err(Error::InvalidParameter(
            "need λ₀, λ₁ and at least one eigenvalue past the λ₁-cluster".into(),
        ));
    }
    let mut end = 2;
    let mut jump = values[2] - values[1];
    for l in 3..values.len() {
        let d = values[l] - values[l - 1];
        if d > jump {
            jump = d;
            end = l;
        }
    }
    let gap = values[end] - values[1];
    if (1..end).any(|l| (values[l] - values[1]).abs() >= gap * c(0.5)) {
        return Err(Error::InvalidParameter(format!(
            "λ₁-cluster not separated in the computed spectrum {values:?}"
        )));
    }
    Ok((1..end, gap))
}

/// Data attached to one pole of a kernel field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PoleData<T: Real> {
    pub pole: usize,
    pub dof: usize,
    /// `e_λ(x_p)`: regular part of this pole's kernel at the pole.
    pub e_at_pole: T,
    /// `2π e_λ(x_p) / log(1/ε^k)`.
    pub e_eps_lambda: T,
    /// Value at `x_p` of the kernels centered at the other poles.
    pub cross: T,
}

/// Deflated resolvent kernel (one pole) or the sum kernel over several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KernelField<T: Real> {
    /// DOF vector on the background mesh.
    pub values: Vec<T>,
    pub lambda: T,
    pub poles: Vec<PoleData<T>>,
    /// `ε^k`.
    pub hole_radius: T,
    /// `Φᵀ((K − λM)H − b)` for each pole's kernel: the bordering multipliers,
    /// zero up to solver accuracy.
    pub multipliers: Vec<Vec<T>>,
    /// Largest relative defect of the discrete equation over the poles.
    pub equation_defect: T,
}

impl<T: Real> KernelField<T> {
    pub fn pole(&self, p: usize) -> Option<&PoleData<T>> {
        self.poles.iter().find(|d| d.pole == p)
    }
}

/// Factorization of `K − λ_f M` with `λ_f` moved off the cluster when `λ`
/// is too close to it for a stable factorization.
struct ResolventSolver<'a, T: Real> {
    bg: &'a BackgroundProblem<T>,
    lambda: T,
    lambda_f: T,
    factor: LdlFactor<T>,
    mphi: Vec<Vec<T>>,
}

impl<'a, T: Real> ResolventSolver<'a, T> {
    fn new(bg: &'a BackgroundProblem<T>, lambda: T) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        let pairs = &bg.spectrum.pairs;
        let top = pairs.last().expect("nonempty spectrum").value;
        if !(lambda < top) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} is not below the largest computed eigenvalue {top}"
            )));
        }
        for (l, p) in pairs.iter().enumerate() {
            let dist = (lambda - p.value).abs();
            if !bg.cluster.contains(&l) && dist < c(1e-6) {
                return Err(Error::ResolventSingular {
                    lambda: lambda.to_f64_lossy(),
                    eigenvalue: p.value.to_f64_lossy(),
                    distance: dist.to_f64_lossy(),
                });
            }
        }
        let near_cluster = |x: T| {
            bg.cluster_pairs()
                .iter()
                .map(|p| (x - p.value).abs())
                .fold(T::infinity(), |m, d| m.min(d))
        };
        let mut candidates = vec![lambda];
        if near_cluster(lambda) < lambda * c(1e-8) {
            candidates.clear();
        }
        for f in [1e-5, -1e-5, 3e-5, -3e-5, 1e-4] {
            candidates.push(lambda * (T::one() + c(f)));
        }
        let mphi: Vec<Vec<T>> = bg.cluster_pairs().iter().map(|p| bg.mass.matvec(&p.vector)).collect();
        let mut last_err = None;
        for lf in candidates {
            let a = bg.stiffness.linear_combination(T::one(), &bg.mass, -lf);
            match LdlFactor::new(&a) {
                Ok(factor) => return Ok(ResolventSolver { bg, lambda, lambda_f: lf, factor, mphi }),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one candidate"))
    }

    /// `x − Φ Φᵀ M x`.
    fn project(&self, x: &mut [T]) {
        for (p, mp) in self.bg.cluster_pairs().iter().zip(&self.mphi) {
            let a = dot(mp, x);
            axpy(-a, &p.vector, x);
        }
    }

    /// Kernel with a unit point load at `dof` plus its bordering multipliers
    /// and the relative defect of the discrete equation.
    fn kernel(&self, dof: usize) -> Result<(Vec<T>, Vec<T>, T)> {
        let bg = self.bg;
        let n = bg.mass.n;
        let cluster = bg.cluster_pairs();
        let mut b = vec![T::zero(); n];
        b[dof] = T::one();
        let mut rhs = b.clone();
        for (p, mp) in cluster.iter().zip(&self.mphi) {
            axpy(-p.vector[dof], mp, &mut rhs);
        }
        let shift = self.lambda - self.lambda_f;
        let mut x = vec![T::zero(); n];
        let max_iter = if shift == T::zero() { 1 } else { 100 };
        let mut converged = false;
        for _ in 0..max_iter {
            let mut r = rhs.clone();
            if shift != T::zero() {
                axpy(shift, &bg.mass.matvec(&x), &mut r);
            }
            let mut y = self.factor.solve(&r);
            self.project(&mut y);
            let diff = y.iter().zip(&x).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            let size = y.iter().fold(T::zero(), |m, a| m.max(a.abs()));
            x = y;
            if diff <= size * c(1e-14) {
                converged = true;
                break;
            }
        }
        if shift != T::zero() && !converged {
            return Err(Error::SolverFailure(format!(
                "deflated resolvent iteration at lambda = {} did not settle",
                self.lambda
            )));
        }
        // Cluster components: ⟨H, φ_i⟩ = φ_i(x_p) / λ_i.
        for p in cluster {
            axpy(p.vector[dof] / p.value, &p.vector, &mut x);
        }
        // b_full = δ − λ Σ (φ_i(x_p)/λ_i) M φ_i
        for (p, mp) in cluster.iter().zip(&self.mphi) {
            axpy(-self.lambda * p.vector[dof] / p.value, mp, &mut b);
        }
        let kx = bg.stiffness.matvec(&x);
        let mx = bg.mass.matvec(&x);
        let resid: Vec<T> = (0..n).map(|i| kx[i] - self.lambda * mx[i] - b[i]).collect();
        let multipliers = cluster.iter().map(|p| dot(&p.vector, &resid)).collect();
        let defect = resid.iter().fold(T::zero(), |m, a| m.max(a.abs()));
        Ok((x, multipliers, defect))
    }
}

/// Ring averages of `H − (1/2π) log(1/r)` over annulus loops 1–3 around
/// `pole`, extrapolated linearly in `r²` to `r = 0`.
fn extract_e<T: Real>(mesh: &GluedMesh<T>, h: &[T], pole: usize) -> Result<T> {
    let ci = mesh
        .chart_index(ChartRole::Annulus { pole })
        .ok_or_else(|| Error::InvalidParameter(format!("no annulus around pole {pole}")))?;
    let ch = &mesh.charts[ci];
    let nt = ch.boundary_loops[0].vertices.len();
    let rings = ch.vertices.len() / nt;
    if rings < 7 {
        return Err(Error::RefinementNeeded(format!(
            "annulus around pole {pole} has {rings} vertex rings; extracting e needs 7"
        )));
    }
    let two_pi = T::TAU();
    let mut xs = Vec::with_capacity(3);
    let mut ys = Vec::with_capacity(3);
    for j in 1..=3 {
        let mut r2 = T::zero();
        let mut y = T::zero();
        for v in j * nt..(j + 1) * nt {
            let [a, b] = ch.vertices[v];
            let r = (a * a + b * b).sqrt();
            r2 += r * r;
            y += h[mesh.dof_map[ci][v]] - (T::one() / r).ln() / two_pi;
        }
        let nn = T::from_usize_lossy(nt);
        xs.push(r2 / nn);
        ys.push(y / nn);
    }
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(&ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    let sxx: T = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    Ok(my - slope * mx)
}

/// Kernels for the given poles summed into one field. Each pole's kernel
/// solves `(K − λM)H = δ_p − λ Σᵢ (φᵢ(x_p)/λᵢ) Mφᵢ` with its λ₁-cluster
/// components fixed to `φᵢ(x_p)/λᵢ`.
fn kernel_sum<T: Real>(bg: &BackgroundProblem<T>, poles: &[usize], lambda: T) -> Result<KernelField<T>> {
    let solver = ResolventSolver::new(bg, lambda)?;
    let dofs = bg.pole_dofs()?;
    let r = bg.hole_radius()?;
    let log_inv = (T::one() / r).ln();
    let mut fields = Vec::with_capacity(poles.len());
    let mut multipliers = Vec::with_capacity(poles.len());
    let mut defect = T::zero();
    for &p in poles {
        let dof = *dofs
            .get(p)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pole {p}")))?;
        let (h, mu, d) = solver.kernel(dof)?;
        fields.push(h);
        multipliers.push(mu);
        defect = defect.max(d);
    }
    let mut values = vec![T::zero(); bg.mass.n];
    for f in &fields {
        axpy(T::one(), f, &mut values);
    }
    let mut data = Vec::with_capacity(poles.len());
    for (a, &p) in poles.iter().enumerate() {
        let e = extract_e(&bg.mesh, &fields[a], p)?;
        let cross = fields
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != a)
            .map(|(_, f)| f[dofs[p]])
            .sum();
        data.push(PoleData {
            pole: p,
            dof: dofs[p],
            e_at_pole: e,
            e_eps_lambda: T::TAU() * e / log_inv,
            cross,
        });
    }
    Ok(KernelField { values, lambda, poles: data, hole_radius: r, multipliers, equation_defect: defect })
}

/// `H_λ` with a point source at `pole` of the background problem.
pub fn deflated_resolvent<T: Real>(bg: &BackgroundProblem<T>, pole: usize, lambda: T) -> Result<KernelField<T>> {
    kernel_sum(bg, &[pole], lambda)
}

/// `J_λ = H_{λ,p₀} + H_{λ,p₁}`. Passing the same pole twice gives `2H_λ`.
pub fn symmetric_kernel<T: Real>(bg: &BackgroundProblem<T>, poles: [usize; 2], lambda: T) -> Result<KernelField<T>> {
    kernel_sum(bg, &poles, lambda)
}
