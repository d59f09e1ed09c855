//! Closed-form layer: model spectra of the flat pieces, the admissible height
//! window, the implicit ratio function `f_eps` and the predicted first
//! eigenvalue. Everything here is scalar arithmetic.

use serde::{Deserialize, Serialize};

use crate::{c, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PieceKind {
    CrossCap,
    Cylinder,
}

impl PieceKind {
    /// Number of background balls removed when attaching the piece.
    pub fn n_balls(self) -> usize {
        match self {
            PieceKind::CrossCap => 1,
            PieceKind::Cylinder => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PieceKind::CrossCap => "crosscap",
            PieceKind::Cylinder => "cylinder",
        }
    }
}

impl std::fmt::Display for PieceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PieceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crosscap" | "cross_cap" | "cross-cap" => Ok(PieceKind::CrossCap),
            "cylinder" => Ok(PieceKind::Cylinder),
            other => Err(Error::InvalidParameter(format!("unknown piece kind {other:?}"))),
        }
    }
}

/// A flat cross cap `S¹(ε)×[0,h]/(θ,t)~(θ+π,h−t)` or flat cylinder `S¹(ε)×[0,h]`,
/// attached along balls of radius `ε^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelPiece<T: Real> {
    pub kind: PieceKind,
    pub eps: T,
    pub h: T,
    pub k: T,
}

impl<T: Real> ModelPiece<T> {
    pub fn new(kind: PieceKind, eps: T, h: T, k: T) -> Result<Self> {
        let piece = ModelPiece { kind, eps, h, k };
        piece.validate()?;
        Ok(piece)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > T::zero()) || !self.eps.is_finite() {
            return Err(Error::InvalidParameter(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.h > T::zero()) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(format!("h must be > 0, got {}", self.h)));
        }
        if !(self.k >= T::one()) || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!("k must be >= 1, got {}", self.k)));
        }
        Ok(())
    }

    /// Fundamental-domain area: `πεh` for the cross cap, `2πεh` for the cylinder.
    pub fn area(&self) -> T {
        let base = T::PI() * self.eps * self.h;
        match self.kind {
            PieceKind::CrossCap => base,
            PieceKind::Cylinder => base + base,
        }
    }

    /// Radius `ε^k` of the removed ball(s).
    pub fn hole_radius(&self) -> T {
        self.eps.powf(self.k)
    }
}

/// Smallest Dirichlet eigenvalue `π²/h²` of the piece.
pub fn model_lambda0<T: Real>(piece: &ModelPiece<T>) -> Result<T> {
    piece.validate()?;
    Ok(T::PI() * T::PI() / (piece.h * piece.h))
}

/// Rotationally symmetric Dirichlet eigenvalues, ascending.
///
/// The profile of a θ-independent function on the cross cap must satisfy
/// `u(t) = u(h − t)` because of the identification `(θ,t) ~ (θ+π, h−t)`.
/// Of the modes `sin(nπt/h)` only odd `n` are symmetric about `h/2`, so the
/// cross cap keeps `n = 1, 3, 5, …` while the cylinder keeps every `n`.
pub fn model_dirichlet_spectrum<T: Real>(piece: &ModelPiece<T>, n_max: usize) -> Result<Vec<T>> {
    piece.validate()?;
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let base = model_lambda0(piece)?;
    Ok((0..n_max)
        .map(|i| {
            let n = match piece.kind {
                PieceKind::CrossCap => 2 * i + 1,
                PieceKind::Cylinder => i + 1,
            };
            let n = T::from_usize_lossy(n);
            n * n * base
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct Mu1<T: Real> {
    pub value: T,
    /// Set when `ε` is within 10% of the crossover `h/π`.
    pub near_crossing: bool,
}

/// First nonzero Neumann eigenvalue of the cylinder, which equals `π²/h²`
/// as long as the first circumferential mode `1/ε²` lies above it.
pub fn model_mu1<T: Real>(piece: &ModelPiece<T>) -> Result<Mu1<T>> {
    piece.validate()?;
    if piece.kind != PieceKind::Cylinder {
        return Err(Error::InvalidParameter("model_mu1 is defined for cylinders".into()));
    }
    let crossover = piece.h / T::PI();
    if piece.eps >= crossover {
        return Err(Error::ModeCrossing {
            eps: piece.eps.to_f64_lossy(),
            h: piece.h.to_f64_lossy(),
        });
    }
    Ok(Mu1 {
        value: model_lambda0(piece)?,
        near_crossing: piece.eps > crossover * c(0.9),
    })
}

/// Normalization constant of the ground state: `ψ = sin(πt/h) / norm`.
fn psi_norm<T: Real>(piece: &ModelPiece<T>) -> T {
    let full = T::PI() * piece.eps * piece.h;
    match piece.kind {
        PieceKind::CrossCap => (full * c(0.5)).sqrt(),
        PieceKind::Cylinder => full.sqrt(),
    }
}

/// L²-normalized Dirichlet ground state of the piece at height `t`.
pub fn psi_profile<T: Real>(piece: &ModelPiece<T>, t: T) -> Result<T> {
    piece.validate()?;
    if !(t >= T::zero() && t <= piece.h) {
        return Err(Error::Domain {
            value: t.to_f64_lossy(),
            lo: 0.0,
            hi: piece.h.to_f64_lossy(),
        });
    }
    Ok((T::PI() * t / piece.h).sin() / psi_norm(piece))
}

/// `∂_t ψ` at height `t` (no domain check; used by quasimode builders).
pub fn psi_profile_dt<T: Real>(piece: &ModelPiece<T>, t: T) -> T {
    (T::PI() / piece.h) * (T::PI() * t / piece.h).cos() / psi_norm(piece)
}

/// `∫ ψ` over the fundamental domain.
///
/// Cross cap: `4 (h/2π)^{1/2} ε^{1/2}`. Cylinder: `4 (εh/π)^{1/2}`, the value of
/// the integral under the cylinder normalization `sin(πt/h)/√(πεh)`.
pub fn psi_l1_norm<T: Real>(piece: &ModelPiece<T>) -> Result<T> {
    piece.validate()?;
    let four = c::<T>(4.0);
    Ok(match piece.kind {
        PieceKind::CrossCap => four * (piece.h / T::TAU()).sqrt() * piece.eps.sqrt(),
        PieceKind::Cylinder => four * (piece.eps * piece.h / T::PI()).sqrt(),
    })
}

/// Total outward normal derivative of ψ over the boundary of the piece.
///
/// Cross cap: `−(2π/h)^{3/2} ε^{1/2}`; cylinder (both ends): `−4 (π/h)^{3/2} ε^{1/2}`.
pub fn psi_boundary_flux<T: Real>(piece: &ModelPiece<T>) -> Result<T> {
    piece.validate()?;
    let three_halves = c::<T>(1.5);
    Ok(match piece.kind {
        PieceKind::CrossCap => -(T::TAU() / piece.h).powf(three_halves) * piece.eps.sqrt(),
        PieceKind::Cylinder => {
            -c::<T>(4.0) * (T::PI() / piece.h).powf(three_halves) * piece.eps.sqrt()
        }
    })
}

/// Known closed-form backgrounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    /// `[0,1)²` with periodic identifications, area 1.
    UnitTorus,
    /// Eigenvalues supplied numerically, no evaluator.
    Numeric,
}

/// Eigenvalues of the background, sorted with multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BackgroundSpectrum<T: Real> {
    pub eigenvalues: Vec<T>,
    pub area: T,
    pub background: Background,
    /// Wave vectors `(a, b, phase)` for torus modes; phase 0 = cos, 1 = sin.
    #[serde(skip)]
    torus_modes: Vec<(i64, i64, u8)>,
}

impl<T: Real> BackgroundSpectrum<T> {
    /// First `n_max` eigenvalues `4π²(a² + b²)` of the unit flat torus with the
    /// real Fourier basis `1, √2 cos 2π(ax+by), √2 sin 2π(ax+by)`.
    pub fn unit_torus(n_max: usize) -> Self {
        let n_max = n_max.max(1);
        let mut radius = 1i64;
        loop {
            let mut waves: Vec<(i64, i64)> = Vec::new();
            for a in 0..=radius {
                for b in -radius..=radius {
                    if a == 0 && b <= 0 {
                        continue;
                    }
                    if a * a + b * b <= radius * radius {
                        waves.push((a, b));
                    }
                }
            }
            // Enough modes strictly inside the disk for a complete shell list.
            let complete = 1 + 2 * waves.len();
            if complete >= n_max {
                waves.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
                let mut modes = vec![(0, 0, 0u8)];
                for &(a, b) in &waves {
                    modes.push((a, b, 0));
                    modes.push((a, b, 1));
                }
                modes.truncate(n_max);
                let four_pi2 = c::<T>(4.0) * T::PI() * T::PI();
                let eigenvalues = modes
                    .iter()
                    .map(|&(a, b, _)| four_pi2 * T::from_i64(a * a + b * b).unwrap())
                    .collect();
                return BackgroundSpectrum {
                    eigenvalues,
                    area: T::one(),
                    background: Background::UnitTorus,
                    torus_modes: modes,
                };
            }
            radius += 1;
        }
    }

    pub fn from_eigenvalues(mut eigenvalues: Vec<T>, area: T) -> Result<Self> {
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        let spec = BackgroundSpectrum {
            eigenvalues,
            area,
            background: Background::Numeric,
            torus_modes: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let tol = self.tolerance();
        match self.eigenvalues.as_slice() {
            [] => Err(Error::InvalidParameter("empty background spectrum".into())),
            [first, rest @ ..] => {
                if first.abs() > tol {
                    return Err(Error::InvalidParameter("first eigenvalue must be 0".into()));
                }
                if rest.first().is_some_and(|v| v.abs() <= tol) {
                    return Err(Error::InvalidParameter(
                        "eigenvalue 0 must be simple (connected surface)".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn tolerance(&self) -> T {
        let scale = self
            .eigenvalues
            .iter()
            .fold(T::one(), |m, v| if v.abs() > m { v.abs() } else { m });
        scale * c(1e-9)
    }

    /// `λ₁`, the first nonzero eigenvalue.
    pub fn lambda1(&self) -> Option<T> {
        self.eigenvalues.get(1).copied()
    }

    /// Multiplicity `K` of `λ₁`, judged with a relative tolerance.
    pub fn multiplicity(&self) -> usize {
        let Some(l1) = self.lambda1() else { return 0 };
        self.eigenvalues[1..]
            .iter()
            .take_while(|v| (**v - l1).abs() <= l1 * c(1e-9))
            .count()
    }

    /// `λ_{K+1}`, the first eigenvalue above the `λ₁` cluster.
    pub fn lambda_k1(&self) -> Option<T> {
        self.eigenvalues.get(1 + self.multiplicity()).copied()
    }

    /// Value of the `mode`-th L²-normalized eigenfunction at `(x, y)`;
    /// only available for analytic backgrounds.
    pub fn eval(&self, mode: usize, x: T, y: T) -> Option<T> {
        let &(a, b, phase) = self.torus_modes.get(mode)?;
        if a == 0 && b == 0 {
            return Some(T::one());
        }
        let arg = T::TAU() * (T::from_i64(a).unwrap() * x + T::from_i64(b).unwrap() * y);
        let s2 = c::<T>(2.0).sqrt();
        Some(if phase == 0 { s2 * arg.cos() } else { s2 * arg.sin() })
    }

    pub fn n_modes_with_evaluator(&self) -> usize {
        self.torus_modes.len()
    }
}

/// Admissible heights for the attached piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HWindow<T: Real> {
    pub lambda1: T,
    pub lambda_k1: T,
    pub k_mult: usize,
    pub delta0: T,
    pub h0: T,
    pub h1: T,
    pub h_star: T,
}

impl<T: Real> HWindow<T> {
    /// Checks the four window invariants, returning the first violated one.
    pub fn check(&self) -> std::result::Result<(), String> {
        let pi2 = T::PI() * T::PI();
        let l0 = |h: T| pi2 / (h * h);
        if !(l0(self.h1) < self.lambda1 && self.lambda1 < l0(self.h0) && l0(self.h0) < self.lambda_k1) {
            return Err("pi^2/h1^2 < lambda1 < pi^2/h0^2 < lambda_{K+1}".into());
        }
        if !(l0(self.h0) <= self.lambda_k1 - self.delta0) {
            return Err("pi^2/h0^2 <= lambda_{K+1} - delta0".into());
        }
        let rel = (self.lambda1 - l0(self.h_star)).abs() / self.lambda1;
        if rel > c(1e-12) {
            return Err("lambda1 = pi^2/h_star^2".into());
        }
        if !(self.delta0 < self.lambda1 && self.lambda1 < self.lambda_k1 - self.delta0) {
            return Err("delta0 < lambda1 < lambda_{K+1} - delta0".into());
        }
        Ok(())
    }
}

/// Places `h0`, `h1` inside the admissible window.
///
/// `h_star = π/√λ₁`; `h0` is the geometric midpoint of `π/√(λ_{K+1}−δ₀)` and
/// `h_star`; `h1` is fixed by `π²/h1² = λ₁/2`.
pub fn choose_h_window<T: Real>(bg: &BackgroundSpectrum<T>, delta0: T) -> Result<HWindow<T>> {
    let lambda1 = bg
        .lambda1()
        .ok_or_else(|| Error::InfeasibleWindow("background has no nonzero eigenvalue".into()))?;
    let lambda_k1 = bg
        .lambda_k1()
        .ok_or_else(|| Error::InfeasibleWindow("lambda_{K+1} not available".into()))?;
    if !(delta0 > T::zero()) {
        return Err(Error::InvalidParameter("delta0 must be positive".into()));
    }
    if !(delta0 < lambda1) || !(lambda_k1 - delta0 > lambda1) {
        return Err(Error::InfeasibleWindow(format!(
            "need delta0 < lambda1 < lambda_K+1 - delta0 (delta0 = {delta0}, lambda1 = {lambda1}, lambda_K+1 = {lambda_k1})"
        )));
    }
    let h_star = T::PI() / lambda1.sqrt();
    let h_low = T::PI() / (lambda_k1 - delta0).sqrt();
    let window = HWindow {
        lambda1,
        lambda_k1,
        k_mult: bg.multiplicity(),
        delta0,
        h0: (h_low * h_star).sqrt(),
        h1: T::PI() * (c::<T>(2.0) / lambda1).sqrt(),
        h_star,
    };
    window.check().map_err(Error::InfeasibleWindow)?;
    Ok(window)
}

/// Positive root of `f² + b f − 1 = 0`, evaluated without cancellation.
pub fn f_root<T: Real>(b: T) -> T {
    let disc = (b * b + c(4.0)).sqrt();
    if b > T::zero() {
        c::<T>(2.0) / (b + disc)
    } else {
        (disc - b) * c(0.5)
    }
}

/// Linear coefficient `b` of the quadratic defining `f_eps`.
pub fn f_eps_coefficient<T: Real>(h: T, eps: T, lambda1: T, phi0_x0: T, kind: PieceKind) -> Result<T> {
    if !(phi0_x0 > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "phi0(x0) must be positive, got {phi0_x0}"
        )));
    }
    if !(eps > T::zero()) || !(h > T::zero()) {
        return Err(Error::InvalidParameter("eps and h must be positive".into()));
    }
    let gap = lambda1 - T::PI() * T::PI() / (h * h);
    let three_halves = c::<T>(1.5);
    let scale = match kind {
        PieceKind::CrossCap => (h / T::TAU()).powf(three_halves),
        PieceKind::Cylinder => c::<T>(0.5) * (h / T::PI()).powf(three_halves),
    };
    Ok(scale * gap / (eps.sqrt() * phi0_x0))
}

/// The positive solution of the implicit equation for `f_ε(h)`. For a
/// cylinder `phi0_x0` stands for `φ₀(x₀) + φ₀(x₁)`.
pub fn f_eps<T: Real>(h: T, eps: T, lambda1: T, phi0_x0: T, kind: PieceKind) -> Result<T> {
    Ok(f_root(f_eps_coefficient(h, eps, lambda1, phi0_x0, kind)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Prediction<T: Real> {
    pub lambda_model: T,
    pub f_eps: T,
    pub lambda1_predicted: T,
    pub error_scale: T,
    /// `h` lies in `[h* − Dε^{1/2}, h* + Dε^{1/2}]`.
    pub in_window: bool,
}

/// Leading-order first eigenvalue `λ₁ − f_ε(h)⁻¹ λ₁ φ₀(x₀) ε^{1/2}`.
pub fn predicted_lambda1<T: Real>(
    eps: T,
    h: T,
    lambda1: T,
    phi0_x0: T,
    kind: PieceKind,
    d: T,
) -> Result<Prediction<T>> {
    let f = f_eps(h, eps, lambda1, phi0_x0, kind)?;
    let h_star = T::PI() / lambda1.sqrt();
    Ok(Prediction {
        lambda_model: T::PI() * T::PI() / (h * h),
        f_eps: f,
        lambda1_predicted: lambda1 - lambda1 * phi0_x0 * eps.sqrt() / f,
        error_scale: eps * (T::one() / eps).ln(),
        in_window: (h - h_star).abs() <= d * eps.sqrt(),
    })
}

/// Height `h_ε` with `π²/h_ε² = π²/h*² + ε^{3/4}`.
pub fn h_eps_rule<T: Real>(eps: T, h_star: T) -> Result<T> {
    if !(eps > T::zero()) || !(h_star > T::zero()) {
        return Err(Error::InvalidParameter("eps and h_star must be positive".into()));
    }
    let pi2 = T::PI() * T::PI();
    Ok(T::PI() / (pi2 / (h_star * h_star) + eps.powf(c(0.75))).sqrt())
}

/// Ascending union (with multiplicity) of the background eigenvalues and the
/// rotationally symmetric Dirichlet eigenvalues of the piece, truncated.
pub fn merged_limit_spectrum<T: Real>(
    bg: &BackgroundSpectrum<T>,
    kind: PieceKind,
    h: T,
    n_max: usize,
) -> Result<Vec<T>> {
    let piece = ModelPiece::new(kind, c(1e-3), h, T::one())?;
    let mut all = bg.eigenvalues.clone();
    all.extend(model_dirichlet_spectrum(&piece, n_max)?);
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    all.truncate(n_max);
    Ok(all)
}

/// Area of the glued surface: background minus the removed ball(s) plus the
/// fundamental-domain area of the piece.
pub fn glued_area<T: Real>(bg_area: T, piece: &ModelPiece<T>) -> Result<T> {
    piece.validate()?;
    let r = piece.hole_radius();
    let balls = T::from_usize_lossy(piece.kind.n_balls());
    Ok(bg_area - balls * T::PI() * r * r + piece.area())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_first_shells() {
        let bg = BackgroundSpectrum::<f64>::unit_torus(10);
        let l1 = 4.0 * std::f64::consts::PI.powi(2);
        assert_eq!(bg.eigenvalues[0], 0.0);
        for v in &bg.eigenvalues[1..5] {
            assert!((v - l1).abs() < 1e-12);
        }
        assert!((bg.eigenvalues[5] - 2.0 * l1).abs() < 1e-12);
        assert_eq!(bg.multiplicity(), 4);
    }

    #[test]
    fn f_root_branches_agree() {
        for b in [-5.0, -0.3, 0.0, 0.3, 5.0, 1e8] {
            let f = f_root::<f64>(b);
            assert!(f > 0.0);
            assert!((f * f + b * f - 1.0).abs() < 1e-12 * (1.0 + b.abs() * f));
        }
    }
}
