use serde::{Deserialize, Serialize};

use crate::dense::symmetric_eigen;
use crate::fem::{axpy, dot, Spectrum};
use crate::{c, Error, Real, Result};

use super::GluedOperators;

/// Split of a trial function against the spectral window `[λ − s, λ + s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TailBoundReport<T: Real> {
    pub lambda: T,
    pub s: T,
    pub delta: T,
    pub norm_l2: T,
    /// Indices of the eigenpairs inside the window.
    pub window: Vec<usize>,
    /// `‖g₁‖, ‖g₂‖` (below / above the window) in L².
    pub branch_l2: [T; 2],
    /// `‖g₁‖, ‖g₂‖` in `W^{1,2}`.
    pub branch_w: [T; 2],
    /// `max(δ, (λ+2)δ/s)`, the L² bound on each branch.
    pub branch_l2_bound: T,
    /// `(λ+2)·branch_l2_bound + δ`, the `W^{1,2}` bound on each branch.
    pub branch_w_bound: T,
    /// Bound on `‖g‖²_{W^{1,2}}`: twice the squared branch bound.
    pub bound: T,
    /// `‖g‖²_{W^{1,2}} = gᵀ(K+M)g`.
    pub measured_tail: T,
    /// `bound · s² / δ²`.
    pub constant: T,
    /// Both per-branch inequalities hold for the measured branches.
    pub chain_holds: bool,
}

fn check_window<T: Real>(spectrum: &Spectrum<T>, lambda: T, s: T) -> Result<()> {
    if !(s > T::zero() && s < T::one()) {
        return Err(Error::InvalidParameter(format!("window half-width must lie in (0, 1), got {s}")));
    }
    let top = spectrum
        .pairs
        .last()
        .ok_or_else(|| Error::InvalidParameter("empty spectrum".into()))?
        .value;
    if !(top > lambda + s) {
        return Err(Error::InvalidParameter(format!(
            "computed spectrum ends at {top}, below the window edge {}",
            lambda + s
        )));
    }
    Ok(())
}

/// Measures the part of `f` outside the window and checks it against the
/// quasimode estimate. Eigenpairs must come from `ops` (glued mesh).
pub fn spectral_tail_bound<T: Real>(
    ops: &GluedOperators<T>,
    spectrum: &Spectrum<T>,
    f: &[T],
    lambda: T,
    s: T,
) -> Result<TailBoundReport<T>> {
    check_window(spectrum, lambda, s)?;
    let norm = ops.norm_l2(f);
    if !(norm >= c(0.5) && norm <= c(2.0)) {
        return Err(Error::NormHypothesis(norm.to_f64_lossy()));
    }
    let mf = ops.mass.matvec(f);
    let mut below = vec![T::zero(); f.len()];
    let mut inside = vec![T::zero(); f.len()];
    let mut window = Vec::new();
    for (l, p) in spectrum.pairs.iter().enumerate() {
        let coef = dot(&p.vector, &mf);
        if (p.value - lambda).abs() <= s {
            axpy(coef, &p.vector, &mut inside);
            window.push(l);
        } else if p.value < lambda {
            axpy(coef, &p.vector, &mut below);
        }
    }
    let g: Vec<T> = f.iter().zip(&inside).map(|(a, b)| *a - *b).collect();
    let above: Vec<T> = g.iter().zip(&below).map(|(a, b)| *a - *b).collect();
    let w2 = |v: &[T]| (ops.stiffness.quad_form(v) + ops.mass.quad_form(v)).max(T::zero());
    let l2 = |v: &[T]| ops.mass.quad_form(v).max(T::zero()).sqrt();
    let delta = ops.delta(f, lambda);
    let lp2 = lambda + c(2.0);
    let l_bound = delta.max(lp2 * delta / s);
    let w_bound = lp2 * l_bound + delta;
    let branch_l2 = [l2(&below), l2(&above)];
    let branch_w = [w2(&below).sqrt(), w2(&above).sqrt()];
    let slack = c::<T>(1.0 + 1e-9);
    let chain_holds = (0..2).all(|i| {
        branch_l2[i] <= l_bound * slack + c(1e-14) && branch_w[i] <= (lp2 * branch_l2[i] + delta) * slack + c(1e-14)
    });
    let bound = c::<T>(2.0) * w_bound * w_bound;
    let constant = if delta > T::zero() { bound * s * s / (delta * delta) } else { T::zero() };
    Ok(TailBoundReport {
        lambda,
        s,
        delta,
        norm_l2: norm,
        window,
        branch_l2,
        branch_w,
        branch_l2_bound: l_bound,
        branch_w_bound: w_bound,
        bound,
        measured_tail: w2(&g),
        constant,
        chain_holds,
    })
}

/// Lower bound on the number of eigenvalues in `[λ − s, λ + s]` from a
/// family of quasimodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct WindowCertificate<T: Real> {
    pub lambda: T,
    pub s: T,
    /// Certified count.
    pub certified: usize,
    /// Eigenvalues of the Gram matrix of the quasimodes, ascending.
    pub gram_eigenvalues: Vec<T>,
    /// Bound on `Σ_j ‖g_j‖²`: two branches of `max(δ_j, (λ+2)δ_j/s)²` each.
    pub leak_bound: T,
    /// Eigenvalues of the discrete spectrum actually in the window.
    pub window_count: usize,
    pub reports: Vec<TailBoundReport<T>>,
}

/// The projections of the `fs` onto the window have a Gram matrix within
/// `leak_bound` of theirs, so every Gram eigenvalue above `leak_bound`
/// certifies one eigenvalue in the window.
pub fn certify_window<T: Real>(
    ops: &GluedOperators<T>,
    spectrum: &Spectrum<T>,
    fs: &[Vec<T>],
    lambda: T,
    s: T,
) -> Result<WindowCertificate<T>> {
    check_window(spectrum, lambda, s)?;
    let n = fs.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no quasimodes to certify with".into()));
    }
    let reports = fs
        .iter()
        .map(|f| spectral_tail_bound(ops, spectrum, f, lambda, s))
        .collect::<Result<Vec<_>>>()?;
    let mfs: Vec<Vec<T>> = fs.iter().map(|f| ops.mass.matvec(f)).collect();
    let mut gram = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let g = (dot(&fs[i], &mfs[j]) + dot(&fs[j], &mfs[i])) * c(0.5);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let (eigs, _) = symmetric_eigen(&gram, n)?;
    let leak: T = reports
        .iter()
        .map(|r| c::<T>(2.0) * r.branch_l2_bound * r.branch_l2_bound)
        .sum();
    let certified = eigs.iter().filter(|&&e| e > leak).count();
    let window_count = spectrum.pairs.iter().filter(|p| (p.value - lambda).abs() <= s).count();
    Ok(WindowCertificate { lambda, s, certified, gram_eigenvalues: eigs, leak_bound: leak, window_count, reports })
}
