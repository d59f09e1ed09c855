use serde::{Deserialize, Serialize};
use sgl_core::analytic::{choose_h_window, h_eps_rule, BackgroundSpectrum, PieceKind};
use sgl_core::fem::SolverOptions;
use sgl_core::mesh::{AttachmentSpec, MeshParams};

use crate::error::{LabError, Result};

/// Heights visited at every `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HGrid {
    Explicit { values: Vec<f64> },
    /// `points` equispaced heights in `[h* − Dε^{1/2}, h* + Dε^{1/2}]`,
    /// clipped to the admissible window `[h0, h1]`.
    CriticalWindow { d: f64, points: usize },
    /// The single height `h_ε` with `π²/h_ε² = π²/h*² + ε^{3/4}`.
    EpsRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshSettings {
    pub n_background: usize,
    pub n_theta: usize,
    pub grading_ratio: f64,
}

impl Default for MeshSettings {
    fn default() -> Self {
        MeshSettings { n_background: 64, n_theta: 64, grading_ratio: 1.5 }
    }
}

impl MeshSettings {
    pub fn params(&self, refine: u32) -> MeshParams<f64> {
        let mut p = MeshParams::new(self.n_background, self.n_theta);
        p.grading_ratio = self.grading_ratio;
        p.refined(refine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub shift: f64,
    pub block: usize,
    pub rtol: f64,
    pub max_restarts: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let o = SolverOptions::<f64>::default();
        SolverSettings { shift: o.shift, block: o.block, rtol: o.rtol, max_restarts: o.max_restarts }
    }
}

impl SolverSettings {
    pub fn options(&self, seed: u64) -> SolverOptions<f64> {
        SolverOptions { shift: self.shift, block: self.block, rtol: self.rtol, max_restarts: self.max_restarts, seed }
    }
}

/// One `(ε, h)` sweep on the unit torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: PieceKind,
    pub x0: [f64; 2],
    #[serde(default)]
    pub x1: Option<[f64; 2]>,
    pub eps: Vec<f64>,
    pub h_grid: HGrid,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub mesh: MeshSettings,
    /// Extra uniform refinements applied to `mesh`.
    #[serde(default)]
    pub refine: u32,
    /// Solve once more one level finer and extrapolate (order 2).
    #[serde(default = "default_true")]
    pub richardson: bool,
    /// Eigenpairs computed on every glued surface.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Half-width factor `D` of the critical window.
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}
fn default_modes() -> usize {
    8
}
fn default_d() -> f64 {
    2.0
}

/// Torus eigenvalues used for the height window and the limit spectrum.
pub fn torus_spectrum() -> BackgroundSpectrum<f64> {
    BackgroundSpectrum::unit_torus(12)
}

impl SweepConfig {
    /// Cross cap at `x0` with defaults for everything else.
    pub fn crosscap(x0: [f64; 2], eps: Vec<f64>, h_grid: HGrid) -> Self {
        SweepConfig {
            kind: PieceKind::CrossCap,
            x0,
            x1: None,
            eps,
            h_grid,
            k: default_k(),
            mesh: MeshSettings::default(),
            refine: 0,
            richardson: true,
            modes: default_modes(),
            d: default_d(),
            solver: SolverSettings::default(),
            seed: 0,
        }
    }

    pub fn cylinder(x0: [f64; 2], x1: [f64; 2], eps: Vec<f64>, h_grid: HGrid) -> Self {
        SweepConfig { kind: PieceKind::Cylinder, x1: Some(x1), ..Self::crosscap(x0, eps, h_grid) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(LabError::Config("eps list is empty".into()));
        }
        if self.modes < 7 {
            return Err(LabError::Config(format!("modes must be at least 7, got {}", self.modes)));
        }
        if !(self.d > 0.0) {
            return Err(LabError::Config("d must be positive".into()));
        }
        match &self.h_grid {
            HGrid::Explicit { values } if values.is_empty() => {
                return Err(LabError::Config("explicit h grid is empty".into()))
            }
            HGrid::CriticalWindow { points, .. } if *points == 0 => {
                return Err(LabError::Config("critical window needs at least one point".into()))
            }
            _ => {}
        }
        self.mesh.params(self.refine).validate()?;
        for (eps, h) in self.grid()? {
            self.attachment(eps, h).validate()?;
        }
        Ok(())
    }

    pub fn attachment(&self, eps: f64, h: f64) -> AttachmentSpec<f64> {
        AttachmentSpec { kind: self.kind, x0: self.x0, x1: self.x1, eps, h, k: self.k }
    }

    /// Heights for one `ε`, ascending.
    pub fn heights(&self, eps: f64) -> Result<Vec<f64>> {
        let window = choose_h_window(&torus_spectrum(), 1.0)?;
        let mut hs = match &self.h_grid {
            HGrid::Explicit { values } => values.clone(),
            HGrid::EpsRule => vec![h_eps_rule(eps, window.h_star)?],
            HGrid::CriticalWindow { d, points } => {
                let half = d * eps.sqrt();
                let lo = (window.h_star - half).max(window.h0);
                let hi = (window.h_star + half).min(window.h1);
                if *points == 1 {
                    vec![window.h_star]
                } else {
                    (0..*points).map(|i| lo + (hi - lo) * i as f64 / (*points - 1) as f64).collect()
                }
            }
        };
        hs.sort_by(|a, b| a.total_cmp(b));
        hs.dedup();
        Ok(hs)
    }

    /// All grid points sorted by `(ε, h)`.
    pub fn grid(&self) -> Result<Vec<(f64, f64)>> {
        let mut eps = self.eps.clone();
        eps.sort_by(|a, b| a.total_cmp(b));
        eps.dedup();
        let mut out = Vec::new();
        for e in eps {
            for h in self.heights(e)? {
                out.push((e, h));
            }
        }
        Ok(out)
    }
}
