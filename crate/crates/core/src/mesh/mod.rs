//! Piecewise-flat triangulations of the glued surfaces.
//!
//! Each chart carries its own flat coordinates. Charts are stitched by DOF
//! identification only: the circle `∂B_{ε^k}` of the background and the
//! circle of length `2πε` bounding the piece are matched θ-pointwise, so the
//! metric jumps across the seam while the conformal structure is continuous.

mod build;
mod export;
mod glue;

pub use build::{
    build_annulus_mesh, build_cap_mesh, build_circular_annulus, build_strip_mesh, build_strip_mesh_with_layers, build_torus_mesh,
    build_torus_with_holes,
    effective_grading, ring_count, strip_layers,
};
pub use export::{export_mesh, mesh_fingerprint};
pub use glue::{glue, glue_background, GluedSurfaces};

use serde::{Deserialize, Serialize};

use crate::analytic::{ModelPiece, PieceKind};
use crate::{c, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartRole {
    /// Background torus with square holes around the poles.
    Background,
    /// Graded annulus between `∂B_{ε^k}(pole)` and the square hole boundary.
    Annulus { pole: usize },
    /// The flat piece (cylinder strip or cross-cap half strip).
    Strip,
    /// Disk filling `B_{ε^k}(pole)`; only used for the closed background.
    Cap { pole: usize },
}

impl ChartRole {
    pub fn label(&self) -> String {
        match self {
            ChartRole::Background => "background".into(),
            ChartRole::Annulus { pole } => format!("annulus{pole}"),
            ChartRole::Strip => "strip".into(),
            ChartRole::Cap { pole } => format!("cap{pole}"),
        }
    }
}

/// Ordered boundary cycle with the angular parameter of every vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoundaryLoop<T: Real> {
    pub vertices: Vec<usize>,
    pub theta: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ChartMesh<T: Real> {
    pub chart_id: usize,
    pub role: ChartRole,
    /// Chart coordinates are stored relative to `origin`.
    pub origin: [T; 2],
    pub vertices: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Conformal factor per vertex; identically 1 on flat charts.
    pub metric_factor: Vec<T>,
    pub boundary_loops: Vec<BoundaryLoop<T>>,
    /// Periods of the chart coordinates (torus in both axes, strip in `s`).
    pub period: [Option<T>; 2],
    /// Vertex pairs identified inside the chart (cross-cap involution).
    pub identifications: Vec<(usize, usize)>,
}

impl<T: Real> ChartMesh<T> {
    /// Triangle corners in flat coordinates, unwrapped across periods so the
    /// triangle is geometrically faithful.
    pub fn triangle_coords(&self, t: usize) -> [[T; 2]; 3] {
        let [a, b, cc] = self.triangles[t];
        let p0 = self.vertices[a];
        let unwrap = |p: [T; 2]| {
            let mut q = p;
            for ax in 0..2 {
                if let Some(per) = self.period[ax] {
                    let d = q[ax] - p0[ax];
                    q[ax] -= per * (d / per).round();
                }
            }
            q
        };
        [p0, unwrap(self.vertices[b]), unwrap(self.vertices[cc])]
    }

    pub fn triangle_area(&self, t: usize) -> T {
        let [p, q, r] = self.triangle_coords(t);
        ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])) * c(0.5)
    }

    pub fn area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Inradius over circumradius (1/2 for an equilateral triangle).
    pub fn triangle_quality(&self, t: usize) -> T {
        let [p, q, r] = self.triangle_coords(t);
        let len = |a: [T; 2], b: [T; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let (la, lb, lc) = (len(q, r), len(p, r), len(p, q));
        let area = self.triangle_area(t).abs();
        let s = (la + lb + lc) * c(0.5);
        if area == T::zero() {
            return T::zero();
        }
        let inradius = area / s;
        let circumradius = la * lb * lc / (c::<T>(4.0) * area);
        inradius / circumradius
    }

    pub fn min_quality(&self) -> T {
        (0..self.triangles.len())
            .map(|t| self.triangle_quality(t))
            .fold(T::infinity(), |m, q| m.min(q))
    }

    /// Absolute position of a vertex (origin plus chart coordinates).
    pub fn absolute(&self, v: usize) -> [T; 2] {
        [self.origin[0] + self.vertices[v][0], self.origin[1] + self.vertices[v][1]]
    }
}

/// Resolution of the generated meshes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MeshParams<T: Real> {
    /// Vertices on each gluing circle; a multiple of 8 so the outermost
    /// annulus loop lands on the background grid.
    pub n_theta: usize,
    /// Background grid cells per unit length.
    pub n_background: usize,
    /// Radial geometric ratio of the annulus rings.
    pub grading_ratio: T,
    /// Target edge length along the strip; defaults to `1/n_background`.
    pub target_edge: T,
}

impl<T: Real> MeshParams<T> {
    pub fn new(n_background: usize, n_theta: usize) -> Self {
        MeshParams {
            n_theta,
            n_background,
            grading_ratio: c(1.5),
            target_edge: T::one() / T::from_usize_lossy(n_background.max(1)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 8 || !self.n_theta.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "n_theta must be even and >= 8, got {}",
                self.n_theta
            )));
        }
        if !self.n_theta.is_multiple_of(8) {
            return Err(Error::InvalidParameter(format!(
                "n_theta must be a multiple of 8 to meet the background grid, got {}",
                self.n_theta
            )));
        }
        if self.n_background < 4 {
            return Err(Error::InvalidParameter("n_background must be >= 4".into()));
        }
        if !(self.grading_ratio > T::one() && self.grading_ratio <= c(2.0)) {
            return Err(Error::InvalidParameter(format!(
                "grading_ratio must lie in (1, 2], got {}",
                self.grading_ratio
            )));
        }
        if !(self.target_edge > T::zero()) {
            return Err(Error::InvalidParameter("target_edge must be positive".into()));
        }
        Ok(())
    }

    /// Uniform refinement by a factor `2^level`.
    pub fn refined(&self, level: u32) -> Self {
        let f = 1usize << level;
        MeshParams {
            n_theta: self.n_theta * f,
            n_background: self.n_background * f,
            grading_ratio: self.grading_ratio.powf(T::one() / T::from_usize_lossy(f)),
            target_edge: self.target_edge / T::from_usize_lossy(f),
        }
    }

    /// Half-width, in grid cells, of the square hole cut around each pole.
    pub fn hole_cells(&self) -> usize {
        self.n_theta / 8
    }

    /// Inscribed radius of the square hole.
    pub fn hole_half_width(&self) -> T {
        T::from_usize_lossy(self.hole_cells()) / T::from_usize_lossy(self.n_background)
    }
}

/// Where and what to attach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AttachmentSpec<T: Real> {
    pub kind: PieceKind,
    pub x0: [T; 2],
    pub x1: Option<[T; 2]>,
    pub eps: T,
    pub h: T,
    pub k: T,
}

impl<T: Real> AttachmentSpec<T> {
    pub fn piece(&self) -> Result<ModelPiece<T>> {
        ModelPiece::new(self.kind, self.eps, self.h, self.k)
    }

    pub fn poles(&self) -> Vec<[T; 2]> {
        let mut p = vec![self.x0];
        if let Some(x1) = self.x1 {
            p.push(x1);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.piece()?;
        let r = self.eps.powf(self.k);
        match (self.kind, self.x1) {
            (PieceKind::CrossCap, Some(_)) => Err(Error::InvalidParameter(
                "a cross cap is attached at a single point".into(),
            )),
            (PieceKind::Cylinder, None) => Err(Error::InvalidParameter(
                "a cylinder needs a second attachment point x1".into(),
            )),
            (PieceKind::Cylinder, Some(x1)) => {
                let d = torus_distance(self.x0, x1);
                if !(d > c::<T>(4.0) * r) {
                    return Err(Error::InvalidParameter(format!(
                        "removed balls overlap: |x0 - x1| = {d} <= 4 eps^k"
                    )));
                }
                Ok(())
            }
            (PieceKind::CrossCap, None) => Ok(()),
        }?;
        if !(r < c(0.25)) {
            return Err(Error::InvalidParameter(format!(
                "hole radius eps^k = {r} exceeds the chart injectivity scale"
            )));
        }
        Ok(())
    }
}

/// Flat distance on the unit torus.
pub fn torus_distance<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let mut s = T::zero();
    for ax in 0..2 {
        let d = a[ax] - b[ax];
        let d = d - d.round();
        s += d * d;
    }
    s.sqrt()
}

/// Identification of two boundary loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gluing {
    pub chart_a: usize,
    pub loop_a: usize,
    pub chart_b: usize,
    pub loop_b: usize,
    /// `true` for the conformal seam between background and piece, `false`
    /// for the conforming seam between annulus and background grid.
    pub conformal: bool,
    /// Vertex pairs (local index in chart a, local index in chart b).
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GluedMesh<T: Real> {
    pub charts: Vec<ChartMesh<T>>,
    /// `dof_map[chart][vertex]` is the global DOF of that vertex.
    pub dof_map: Vec<Vec<usize>>,
    pub gluings: Vec<Gluing>,
    pub n_dofs: usize,
    /// Attachment points actually used (snapped to the grid).
    pub poles: Vec<[T; 2]>,
    pub spec: Option<AttachmentSpec<T>>,
}

impl<T: Real> GluedMesh<T> {
    pub fn chart_index(&self, role: ChartRole) -> Option<usize> {
        self.charts.iter().position(|ch| ch.role == role)
    }

    /// DOFs touched by a chart, ascending and deduplicated.
    pub fn chart_dofs(&self, chart: usize) -> Vec<usize> {
        let mut d = self.dof_map[chart].clone();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// DOF of the filling-cap center at `pole`, when present.
    pub fn pole_dof(&self, pole: usize) -> Option<usize> {
        let ch = self.chart_index(ChartRole::Cap { pole })?;
        Some(self.dof_map[ch][0])
    }

    /// Global DOFs of a boundary loop.
    pub fn loop_dofs(&self, chart: usize, lp: usize) -> Result<Vec<usize>> {
        let l = self.charts[chart]
            .boundary_loops
            .get(lp)
            .ok_or(Error::UnknownLoop(lp))?;
        Ok(l.vertices.iter().map(|&v| self.dof_map[chart][v]).collect())
    }

    /// Boundary loops not consumed by any gluing: `(chart, loop)` pairs.
    pub fn free_loops(&self) -> Vec<(usize, usize)> {
        let mut used = std::collections::HashSet::new();
        for g in &self.gluings {
            used.insert((g.chart_a, g.loop_a));
            used.insert((g.chart_b, g.loop_b));
        }
        let mut out = Vec::new();
        for (ci, ch) in self.charts.iter().enumerate() {
            for li in 0..ch.boundary_loops.len() {
                if !used.contains(&(ci, li)) {
                    out.push((ci, li));
                }
            }
        }
        out
    }

    pub fn area(&self) -> T {
        self.charts.iter().map(|ch| ch.area()).sum()
    }

    /// `V − E + F` of the glued complex.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        let mut faces = 0i64;
        for (ci, ch) in self.charts.iter().enumerate() {
            for tri in &ch.triangles {
                faces += 1;
                let d = [self.dof_map[ci][tri[0]], self.dof_map[ci][tri[1]], self.dof_map[ci][tri[2]]];
                for (a, b) in [(d[0], d[1]), (d[1], d[2]), (d[2], d[0])] {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
        }
        self.n_dofs as i64 - edges.len() as i64 + faces
    }

    /// Whether the DOF adjacency graph is connected.
    pub fn is_connected(&self) -> bool {
        if self.n_dofs == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.n_dofs];
        for (ci, ch) in self.charts.iter().enumerate() {
            for tri in &ch.triangles {
                for i in 0..3 {
                    let a = self.dof_map[ci][tri[i]];
                    let b = self.dof_map[ci][tri[(i + 1) % 3]];
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        let mut seen = vec![false; self.n_dofs];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Distance to `pole` in background coordinates for every vertex of a
    /// background, annulus or cap chart; `None` for strip charts.
    pub fn radial_distance(&self, chart: usize, v: usize, pole: usize) -> Option<T> {
        let ch = &self.charts[chart];
        match ch.role {
            ChartRole::Strip => None,
            ChartRole::Annulus { pole: p } | ChartRole::Cap { pole: p } if p == pole => {
                let [x, y] = ch.vertices[v];
                Some((x * x + y * y).sqrt())
            }
            _ => Some(torus_distance(ch.absolute(v), self.poles[pole])),
        }
    }

    /// Maps a DOF vector from `other` onto this mesh through shared charts
    /// (matched by role and identical vertex lists); DOFs with no source stay 0.
    pub fn transfer_from(&self, other: &GluedMesh<T>, values: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.n_dofs];
        let mut hit = vec![false; self.n_dofs];
        for (ci, ch) in self.charts.iter().enumerate() {
            let Some(oi) = other.chart_index(ch.role) else { continue };
            let och = &other.charts[oi];
            if och.vertices.len() != ch.vertices.len() {
                return Err(Error::InvalidParameter(format!(
                    "chart {} differs between meshes",
                    ch.role.label()
                )));
            }
            for v in 0..ch.vertices.len() {
                let d = self.dof_map[ci][v];
                out[d] = values[other.dof_map[oi][v]];
                hit[d] = true;
            }
        }
        Ok(out)
    }

    /// DOFs of the strip chart (empty when no piece is attached).
    pub fn strip_dofs(&self) -> Vec<usize> {
        self.chart_index(ChartRole::Strip)
            .map(|c| self.chart_dofs(c))
            .unwrap_or_default()
    }
}
