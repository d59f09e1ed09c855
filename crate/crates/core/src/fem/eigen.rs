use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::symmetric_eigen;
use crate::{c, Error, Real, Result};

use super::ldl::LdlFactor;
use super::sparse::{axpy, dot, CsrMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EigenPair<T: Real> {
    pub value: T,
    /// Mass-normalized DOF coefficients.
    pub vector: Vec<T>,
    /// `‖K v − λ M v‖`, see [`ShiftInvert::residual_norm`].
    pub residual: T,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub restarts: usize,
    pub operator_applications: usize,
    pub shift: f64,
    pub envelope_size: usize,
    pub subspace: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Spectrum<T: Real> {
    pub pairs: Vec<EigenPair<T>>,
    pub stats: SolverStats,
    pub mesh_fingerprint: String,
}

impl<T: Real> Spectrum<T> {
    pub fn values(&self) -> Vec<T> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    /// Largest `|⟨v_i, v_j⟩_M − δ_ij|`.
    pub fn orthogonality_defect(&self, mass: &CsrMatrix<T>) -> T {
        let mv: Vec<Vec<T>> = self.pairs.iter().map(|p| mass.matvec(&p.vector)).collect();
        let mut worst = T::zero();
        for i in 0..self.pairs.len() {
            for j in 0..=i {
                let g = dot(&self.pairs[j].vector, &mv[i]);
                let want = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g - want).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolverOptions<T: Real> {
    /// Spectral shift `σ`; the factored operator is `K − σM`.
    pub shift: T,
    pub block: usize,
    pub rtol: T,
    pub max_restarts: usize,
    pub seed: u64,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            shift: -T::one(),
            block: 6,
            rtol: c(1e-9),
            max_restarts: 300,
            seed: 0x5eed_1a6e,
        }
    }
}

/// Factorizations reused across solves on the same operator pair.
pub struct ShiftInvert<T: Real> {
    pub shifted: LdlFactor<T>,
    /// Mass factor, only needed when `K − σM` is not positive definite.
    pub mass: Option<LdlFactor<T>>,
    pub shift: T,
}

impl<T: Real> ShiftInvert<T> {
    pub fn new(k: &CsrMatrix<T>, m: &CsrMatrix<T>, shift: T) -> Result<Self> {
        let a = k.linear_combination(T::one(), m, -shift);
        Ok(ShiftInvert {
            shifted: LdlFactor::new(&a)?,
            mass: if shift < T::zero() { None } else { Some(LdlFactor::new(m)?) },
            shift,
        })
    }

    /// Residual norm: `‖r‖` in the dual norm of `K − σM` for `σ < 0` (the
    /// `W^{1,2}` dual norm at `σ = −1`), otherwise in the `M⁻¹` norm.
    pub fn residual_norm(&self, r: &[T]) -> T {
        let z = match &self.mass {
            Some(m) => m.solve(r),
            None => self.shifted.solve(r),
        };
        dot(r, &z).max(T::zero()).sqrt()
    }
}

fn residual_norm<T: Real>(
    kv: &[T],
    mv: &[T],
    value: T,
    fac: &ShiftInvert<T>,
) -> T {
    let r: Vec<T> = kv.iter().zip(mv).map(|(a, b)| *a - value * *b).collect();
    fac.residual_norm(&r)
}

/// Lowest `count` eigenpairs of `K v = λ M v`.
///
/// Block shift-invert iteration on `(K − σM)⁻¹M` with a growing subspace,
/// M-orthonormalized by classical Gram–Schmidt applied twice, and
/// Rayleigh–Ritz on `VᵀKV`. The subspace is thick-restarted on the leading
/// Ritz vectors; the next block expands the lowest unconverged ones.
pub fn solve_lowest<T: Real>(
    k: &CsrMatrix<T>,
    m: &CsrMatrix<T>,
    count: usize,
    opts: &SolverOptions<T>,
) -> Result<Spectrum<T>> {
    let fac = ShiftInvert::new(k, m, opts.shift)?;
    solve_lowest_with(k, m, count, opts, &fac)
}

pub fn solve_lowest_with<T: Real>(
    k: &CsrMatrix<T>,
    m: &CsrMatrix<T>,
    count: usize,
    opts: &SolverOptions<T>,
    fac: &ShiftInvert<T>,
) -> Result<Spectrum<T>> {
    let n = k.n;
    if count == 0 {
        return Err(Error::InvalidParameter("requested zero eigenpairs".into()));
    }
    if count > n {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenpairs of a {n}-dimensional problem"
        )));
    }
    let block = opts.block.max(1).min(n);
    let keep = (count + block).min(n);
    let max_dim = (keep + 4 * block).max(2 * count + block).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut stats = SolverStats {
        shift: opts.shift.to_f64_lossy(),
        envelope_size: fac.shifted.envelope_size(),
        subspace: max_dim,
        ..Default::default()
    };

    let mut v: Vec<Vec<T>> = Vec::new();
    let mut kv: Vec<Vec<T>> = Vec::new();
    let mut mv: Vec<Vec<T>> = Vec::new();

    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<T> {
        (0..n).map(|_| T::from_f64(rng.gen::<f64>() - 0.5).unwrap()).collect()
    };

    // M-orthonormalize `z` against the basis and append; false if it vanished.
    let push = |z: Vec<T>, v: &mut Vec<Vec<T>>, kv: &mut Vec<Vec<T>>, mv: &mut Vec<Vec<T>>| -> bool {
        let mut z = z;
        let mz0 = m.matvec(&z);
        let norm0 = dot(&z, &mz0).max(T::zero()).sqrt();
        if !(norm0 > T::zero()) || !norm0.is_finite() {
            return false;
        }
        for _ in 0..2 {
            let mz = m.matvec(&z);
            let coef: Vec<T> = v.iter().map(|b| dot(b, &mz)).collect();
            for (b, cf) in v.iter().zip(coef) {
                axpy(-cf, b, &mut z);
            }
        }
        let mz = m.matvec(&z);
        let norm = dot(&z, &mz).max(T::zero()).sqrt();
        if norm <= norm0 * c(1e-10) {
            return false;
        }
        let inv = T::one() / norm;
        z.iter_mut().for_each(|x| *x *= inv);
        let mz: Vec<T> = mz.into_iter().map(|x| x * inv).collect();
        kv.push(k.matvec(&z));
        mv.push(mz);
        v.push(z);
        true
    };

    let mut frontier = Vec::new();
    for _ in 0..block {
        let f = random_vec(&mut rng);
        stats.operator_applications += 1;
        if push(fac.shifted.solve(&m.matvec(&f)), &mut v, &mut kv, &mut mv) {
            frontier.push(v.last().expect("pushed").clone());
        }
    }
    let mut result = None;
    let mut last_residuals: Vec<T> = Vec::new();
    for restart in 0..=opts.max_restarts {
        stats.restarts = restart;
        while v.len() < max_dim {
            let mut added = Vec::new();
            for f in frontier.drain(..) {
                if v.len() >= max_dim {
                    break;
                }
                stats.operator_applications += 1;
                if push(fac.shifted.solve(&m.matvec(&f)), &mut v, &mut kv, &mut mv) {
                    added.push(v.last().expect("pushed").clone());
                }
            }
            if added.is_empty() {
                let z = random_vec(&mut rng);
                if push(z, &mut v, &mut kv, &mut mv) {
                    added.push(v.last().expect("pushed").clone());
                } else {
                    break;
                }
            }
            frontier = added;
        }
        let p = v.len();
        let mut h = vec![T::zero(); p * p];
        for i in 0..p {
            for j in 0..=i {
                let x = (dot(&v[i], &kv[j]) + dot(&v[j], &kv[i])) * c(0.5);
                h[i * p + j] = x;
                h[j * p + i] = x;
            }
        }
        let (theta, s) = symmetric_eigen(&h, p)?;
        let combine = |basis: &[Vec<T>], col: usize| -> Vec<T> {
            let mut y = vec![T::zero(); n];
            for (i, b) in basis.iter().enumerate() {
                axpy(s[i * p + col], b, &mut y);
            }
            y
        };
        let wanted = count.min(p);
        let mut residuals = Vec::with_capacity(wanted);
        let mut first_bad = None;
        for j in 0..wanted {
            let kyj = combine(&kv, j);
            let myj = combine(&mv, j);
            let r = residual_norm(&kyj, &myj, theta[j], fac);
            if r > opts.rtol * theta[j].abs().max(T::one()) && first_bad.is_none() {
                first_bad = Some(j);
            }
            residuals.push(r);
        }
        last_residuals = residuals.clone();
        if first_bad.is_none() && wanted == count {
            let pairs = (0..count)
                .map(|j| {
                    let mut y = combine(&v, j);
                    let big = y.iter().fold(T::zero(), |a: T, x| if x.abs() > a.abs() { *x } else { a });
                    if big < T::zero() {
                        y.iter_mut().for_each(|x| *x = -*x);
                    }
                    EigenPair { value: theta[j], vector: y, residual: residuals[j] }
                })
                .collect();
            result = Some(pairs);
            break;
        }
        if p >= n {
            return Err(Error::SolverFailure(format!(
                "subspace exhausted the space without meeting rtol (residuals {residuals:?})"
            )));
        }
        let keep_now = keep.min(p);
        let nv: Vec<Vec<T>> = (0..keep_now).map(|j| combine(&v, j)).collect();
        let nkv: Vec<Vec<T>> = (0..keep_now).map(|j| combine(&kv, j)).collect();
        let nmv: Vec<Vec<T>> = (0..keep_now).map(|j| combine(&mv, j)).collect();
        let lo = first_bad.unwrap_or(0);
        frontier = (lo..(lo + block).min(keep_now)).map(|j| nv[j].clone()).collect();
        v = nv;
        kv = nkv;
        mv = nmv;
    }
    let pairs = result.ok_or_else(|| {
        Error::SolverFailure(format!(
            "no convergence after {} restarts ({} operator applications, residuals {:?})",
            stats.restarts,
            stats.operator_applications,
            last_residuals.iter().map(|r| r.to_f64_lossy()).collect::<Vec<_>>()
        ))
    })?;
    Ok(Spectrum { pairs, stats, mesh_fingerprint: String::new() })
}
