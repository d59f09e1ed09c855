//! Small dense kernels: symmetric eigendecomposition, Householder reflectors
//! and a pivoted linear solve. Matrices are row-major `Vec<T>` of size `n*n`.

use crate::{c, Error, Real, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns ascending eigenvalues and the eigenvectors as columns of a
/// row-major `n×n` matrix.
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize) -> Result<(Vec<T>, Vec<T>)> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    for i in 0..n {
        for j in 0..i {
            let avg = (m[i * n + j] + m[j * n + i]) * c(0.5);
            m[i * n + j] = avg;
            m[j * n + i] = avg;
        }
    }
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let scale = m.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
    if scale == T::zero() {
        return Ok((vec![T::zero(); n], v));
    }
    let tol = T::epsilon() * scale * c(4.0);
    let mut converged = false;
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |s, (i, j)| s + m[i * n + j] * m[i * n + j])
            .sqrt();
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= T::epsilon() * scale * c(1e-3) {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let cs = T::one() / (t * t + T::one()).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = cs * mkp - sn * mkq;
                    m[k * n + q] = sn * mkp + cs * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = cs * mpk - sn * mqk;
                    m[q * n + k] = sn * mpk + cs * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = cs * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::SolverFailure("Jacobi sweeps did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).expect("finite"));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + new] = v[k * n + old];
        }
    }
    Ok((values, vectors))
}

/// Orthogonal matrix `Q` (row-major) with `Q a = |a| e₀`.
///
/// Uses a Householder reflector; when `a` already points along `+e₀` the
/// identity is returned.
pub fn align_with_first_axis<T: Real>(a: &[T]) -> Vec<T> {
    let n = a.len();
    let mut q = vec![T::zero(); n * n];
    for i in 0..n {
        q[i * n + i] = T::one();
    }
    let norm = a.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
    if norm == T::zero() {
        return q;
    }
    let mut w: Vec<T> = a.to_vec();
    w[0] -= norm;
    let wn2 = w.iter().fold(T::zero(), |s, x| s + *x * *x);
    if wn2 <= (norm * T::epsilon()) * (norm * T::epsilon()) {
        return q;
    }
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] -= c::<T>(2.0) * w[i] * w[j] / wn2;
        }
    }
    q
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve<T: Real>(a: &[T], b: &[T], n: usize) -> Result<Vec<T>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(T::zero(), |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).expect("finite"))
            .expect("nonempty");
        if m[piv * n + col].abs() <= scale * T::epsilon() * c(16.0) {
            return Err(Error::SolverFailure("singular dense system".into()));
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[r * n + k] -= f * v;
            }
            let xc = x[col];
            x[r] -= f * xc;
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in (col + 1)..n {
            s -= m[col * n + k] * x[k];
        }
        x[col] = s / m[col * n + col];
    }
    Ok(x)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(a: &[T], n: usize) -> Result<T> {
    let (vals, _) = symmetric_eigen(a, n)?;
    Ok(vals.first().copied().unwrap_or(T::zero()))
}
