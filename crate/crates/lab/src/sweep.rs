use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use sgl_core::analytic::{glued_area, predicted_lambda1, PieceKind};
use sgl_core::fem::{assemble, dot, solve_lowest, CsrMatrix, SolverOptions};
use sgl_core::green::{
    deflated_resolvent, quasimode_crosscap_chi, quasimode_crosscap_green, zero_extended_piece, BackgroundProblem,
    GluedOperators,
};
use sgl_core::mesh::{ChartRole, GluedSurfaces};
use sgl_core::{GluedMesh64, RotatedBasis64};

use crate::bounds::{off_piece_operators, summarize_bounds};
use crate::branches::track_branches;
use crate::config::SweepConfig;
use crate::error::{LabError, Result};
use crate::record::{Flag, SweepRecord};

/// Background eigenpairs computed on the filled mesh for each `ε`.
pub const BACKGROUND_MODES: usize = 8;
/// Height bins of the strip part of a branch signature.
pub const SIGNATURE_BINS: usize = 32;
/// `n` below this excludes a point from ratio fits.
pub const N_FLOOR: f64 = 1e-3;

/// Data shared by all heights at one `ε`: the filled background, its
/// spectrum and the λ₁-basis rotated against the pole(s).
pub struct EpsContext {
    pub eps: f64,
    pub background: BackgroundProblem<f64>,
    pub basis: RotatedBasis64,
}

impl EpsContext {
    pub fn new(cfg: &SweepConfig, eps: f64, h: f64) -> Result<Self> {
        let params = cfg.mesh.params(cfg.refine);
        let surfaces = GluedSurfaces::build(&cfg.attachment(eps, h), &params)?;
        let background = BackgroundProblem::new(surfaces.filled, BACKGROUND_MODES, &cfg.solver.options(cfg.seed))?;
        let basis = background.rotated_basis()?;
        Ok(EpsContext { eps, background, basis })
    }

    pub fn lambda1(&self) -> f64 {
        self.background.lambda1()
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build().map_err(|e| LabError::Config(format!("worker pool: {e}")))
}

/// Runs every grid point of `cfg`, then tracks branches across `h` at each
/// `ε`. Failed points are kept as flagged records.
pub fn run_sweep(cfg: &SweepConfig, workers: Option<usize>) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let points = cfg.grid()?;
    let mut records = run_points(cfg, &points, workers)?;
    track_by_eps(&mut records);
    Ok(records)
}

/// Groups records by `ε` and labels branches along `h` in each group.
pub fn track_by_eps(records: &mut [SweepRecord]) {
    let mut start = 0;
    while start < records.len() {
        let eps = records[start].eps;
        let end = start + records[start..].iter().take_while(|r| r.eps == eps).count();
        track_branches(&mut records[start..end]);
        start = end;
    }
}

/// Computes the given points (sorted by `(ε, h)` on output).
pub fn run_points(cfg: &SweepConfig, points: &[(f64, f64)], workers: Option<usize>) -> Result<Vec<SweepRecord>> {
    let mut by_eps: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &(e, h) in points {
        by_eps.entry(e.to_bits()).or_insert((e, h));
    }
    let pool = pool(workers)?;
    let contexts: BTreeMap<u64, std::result::Result<EpsContext, String>> = pool.install(|| {
        by_eps
            .par_iter()
            .map(|(key, &(e, h))| (*key, EpsContext::new(cfg, e, h).map_err(|err| err.to_string())))
            .collect()
    });
    let mut records: Vec<SweepRecord> = pool.install(|| {
        points
            .par_iter()
            .map(|&(eps, h)| match &contexts[&eps.to_bits()] {
                Ok(ctx) => run_point(cfg, ctx, h)
                    .unwrap_or_else(|e| SweepRecord::failed(eps, h, cfg.k, cfg.kind, e.to_string())),
                Err(msg) => SweepRecord::failed(eps, h, cfg.k, cfg.kind, format!("background: {msg}")),
            })
            .collect()
    });
    records.sort_by(|a, b| a.eps.total_cmp(&b.eps).then(a.h.total_cmp(&b.h)));
    Ok(records)
}

/// DOF mask of the background region at distance `≥ r` from every pole.
fn far_mask(mesh: &GluedMesh64, r: f64) -> Vec<f64> {
    let mut mask = vec![0.0; mesh.n_dofs];
    let mut near = vec![false; mesh.n_dofs];
    for (ci, ch) in mesh.charts.iter().enumerate() {
        if matches!(ch.role, ChartRole::Strip) {
            continue;
        }
        for v in 0..ch.vertices.len() {
            let d = mesh.dof_map[ci][v];
            let close = (0..mesh.poles.len()).any(|p| mesh.radial_distance(ci, v, p).is_some_and(|x| x < r));
            if close {
                near[d] = true;
            } else {
                mask[d] = 1.0;
            }
        }
    }
    for (m, n) in mask.iter_mut().zip(near) {
        if n {
            *m = 0.0;
        }
    }
    mask
}

/// Mode fingerprint that is comparable between meshes sharing the
/// background chart: background vertex values weighted by the square root
/// of their lumped mass, followed by the θ-averaged strip profile on
/// [`SIGNATURE_BINS`] normalized heights.
pub fn signature(mesh: &GluedMesh64, u: &[f64]) -> Vec<f64> {
    let mut sig = Vec::new();
    if let Some(bi) = mesh.chart_index(ChartRole::Background) {
        let ch = &mesh.charts[bi];
        let mut lumped = vec![0.0; ch.vertices.len()];
        for (t, tri) in ch.triangles.iter().enumerate() {
            let a = ch.triangle_area(t).abs() / 3.0;
            for &v in tri {
                lumped[v] += a;
            }
        }
        sig.extend((0..ch.vertices.len()).map(|v| u[mesh.dof_map[bi][v]] * lumped[v].sqrt()));
    }
    if let Some(si) = mesh.chart_index(ChartRole::Strip) {
        let ch = &mesh.charts[si];
        // θ-average per row of constant t, then sample linearly in t.
        let mut rows: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for (v, p) in ch.vertices.iter().enumerate() {
            let e = rows.entry(p[1].to_bits()).or_insert((p[1], 0.0, 0));
            e.1 += u[mesh.dof_map[si][v]];
            e.2 += 1;
        }
        let mut profile: Vec<(f64, f64)> = rows.values().map(|&(t, s, n)| (t, s / n as f64)).collect();
        profile.sort_by(|a, b| a.0.total_cmp(&b.0));
        let t_max = profile.last().map_or(0.0, |p| p.0);
        let sample = |t: f64| -> f64 {
            let j = profile.partition_point(|p| p.0 < t).clamp(1, profile.len() - 1);
            let ((t0, a), (t1, b)) = (profile[j - 1], profile[j]);
            a + (b - a) * (t - t0) / (t1 - t0)
        };
        let w = (ch.area().abs() / SIGNATURE_BINS as f64).sqrt();
        sig.extend((0..SIGNATURE_BINS).map(|b| w * sample(t_max * (b as f64 + 0.5) / SIGNATURE_BINS as f64)));
    }
    sig
}

/// Eigenvalues of the glued surface one refinement finer.
fn refined_lambdas(cfg: &SweepConfig, eps: f64, h: f64, opts: &SolverOptions<f64>) -> Result<Vec<f64>> {
    let params = cfg.mesh.params(cfg.refine + 1);
    let s = GluedSurfaces::build(&cfg.attachment(eps, h), &params)?;
    let (k, m) = assemble(&s.glued)?;
    Ok(solve_lowest(&k, &m, cfg.modes, opts)?.values())
}

fn m_inner(m: &CsrMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    m.bilinear(a, b)
}

/// All measurements at one `(ε, h)`.
pub fn run_point(cfg: &SweepConfig, ctx: &EpsContext, h: f64) -> Result<SweepRecord> {
    let start = Instant::now();
    let eps = ctx.eps;
    let spec = cfg.attachment(eps, h);
    let params = cfg.mesh.params(cfg.refine);
    let surfaces = GluedSurfaces::build(&spec, &params)?;
    let ops = GluedOperators::new(surfaces.glued)?;
    let opts = cfg.solver.options(cfg.seed);
    let spectrum = solve_lowest(&ops.stiffness, &ops.mass, cfg.modes, &opts)?;
    let lambdas = spectrum.values();
    let piece = ops.piece;
    let r_hole = piece.hole_radius();

    let psi = zero_extended_piece(&ops)?.vector;
    let filled = &ctx.background.mesh;
    let phi0 = ops.mesh.transfer_from(filled, &ctx.basis.vectors[0])?;
    let mask = far_mask(&ops.mesh, 2.0 * r_hole);
    let phi0_far: Vec<f64> = phi0.iter().zip(&mask).map(|(a, b)| a * b).collect();
    let off = off_piece_operators(&ops.mesh)?;

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(spectrum.pairs.len());
    let (mut mode_n, mut mode_m, mut mode_mass_piece) = (Vec::new(), Vec::new(), Vec::new());
    for p in &spectrum.pairs {
        let n = m_inner(&ops.strip_mass, &p.vector, &psi);
        let s = if n < 0.0 { -1.0 } else { 1.0 };
        let v: Vec<f64> = p.vector.iter().map(|x| s * x).collect();
        mode_n.push(s * n);
        mode_m.push(m_inner(&off.1, &v, &phi0_far));
        mode_mass_piece.push(ops.strip_mass.quad_form(&v).max(0.0).sqrt());
        vectors.push(v);
    }
    let u = &vectors[1];
    let mass_sigma = off.1.quad_form(u).max(0.0).sqrt();
    let mass_piece = mode_mass_piece[1];

    let piece_mode = (1..vectors.len())
        .max_by(|&a, &b| mode_mass_piece[a].total_cmp(&mode_mass_piece[b]))
        .unwrap_or(1);
    let decomp_residual = {
        let w = &vectors[piece_mode];
        let n = mode_n[piece_mode];
        let d: Vec<f64> = w.iter().zip(&psi).map(|(a, b)| a - n * b).collect();
        ops.strip_mass.quad_form(&d)
    };

    let mut flags = Vec::new();
    let lambda1_bg = ctx.lambda1();
    let eval0 = ctx.basis.eval0;
    let prediction = match predicted_lambda1(eps, h, lambda1_bg, eval0, cfg.kind, cfg.d) {
        Ok(p) => Some(p),
        Err(e) => {
            flags.push(Flag::NoPrediction(e.to_string()));
            None
        }
    };
    let beta = match beta(&ops, ctx, u) {
        Ok(b) => b,
        Err(e) => {
            flags.push(Flag::NoBeta(e.to_string()));
            f64::NAN
        }
    };
    if mode_n[1] < N_FLOOR {
        flags.push(Flag::NBelowFloor);
    }
    let bounds = Some(summarize_bounds(&ops.mesh, &off, u, r_hole)?);

    let (lambdas_extrapolated, disc_errs) = if cfg.richardson {
        let fine = refined_lambdas(cfg, eps, h, &opts)?;
        let ext = lambdas.iter().zip(&fine).map(|(b, f)| f - (b - f) / 3.0).collect();
        let err = lambdas.iter().zip(&fine).map(|(b, f)| (b - f) * 4.0 / 3.0).collect();
        (ext, err)
    } else {
        (lambdas.clone(), vec![f64::NAN; lambdas.len()])
    };

    let signatures = vectors.iter().map(|v| signature(&ops.mesh, v)).collect();
    Ok(SweepRecord {
        eps,
        h,
        k: cfg.k,
        kind: cfg.kind,
        lambdas,
        lambdas_extrapolated,
        disc_errs,
        branches: Vec::new(),
        n: mode_n[1],
        m_coef: mode_m[1],
        beta,
        mass_sigma,
        mass_piece,
        mode_n,
        mode_m,
        mode_mass_piece,
        piece_mode,
        decomp_residual,
        background_lambda1: lambda1_bg,
        eval0,
        area: glued_area(1.0, &piece)?,
        prediction,
        bounds,
        flags,
        seconds: start.elapsed().as_secs_f64(),
        signatures,
    })
}

/// `β = ⟨u, ψ̃ − χ⟩ / ⟨u, χ⟩` with the kernel at `π²/h²`.
fn beta(ops: &GluedOperators<f64>, ctx: &EpsContext, u: &[f64]) -> Result<f64> {
    if ops.piece.kind != PieceKind::CrossCap {
        return Err(LabError::Config("beta is defined for the cross cap".into()));
    }
    let lambda = std::f64::consts::PI.powi(2) / (ops.piece.h * ops.piece.h);
    let kernel = deflated_resolvent(&ctx.background, 0, lambda)?;
    let filled = &ctx.background.mesh;
    let green = quasimode_crosscap_green(ops, filled, &kernel)?;
    let chi = quasimode_crosscap_chi(ops, filled, &kernel, &ctx.basis)?;
    let mu = ops.mass.matvec(u);
    let diff: Vec<f64> = green.vector.iter().zip(&chi.vector).map(|(a, b)| a - b).collect();
    let den = dot(&mu, &chi.vector);
    if den == 0.0 {
        return Err(LabError::InsufficientData("⟨u, χ⟩ vanishes".into()));
    }
    Ok(dot(&mu, &diff) / den)
}
