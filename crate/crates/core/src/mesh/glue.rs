use crate::analytic::PieceKind;
use crate::{c, Error, Real, Result};

use super::build::{build_annulus_mesh, build_cap_mesh, build_strip_mesh, build_torus_with_holes, theta_grid};
use super::{torus_distance, AttachmentSpec, ChartMesh, ChartRole, GluedMesh, Gluing, MeshParams};

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

fn loop_of<T: Real>(ch: &ChartMesh<T>, lp: usize) -> Result<&super::BoundaryLoop<T>> {
    ch.boundary_loops.get(lp).ok_or(Error::UnknownLoop(lp))
}

/// Pairs the vertices of two loops. `reversed` matches vertex `i` of loop a
/// with vertex `(n − i) mod n` of loop b.
fn pair_loops<T: Real>(
    charts: &[ChartMesh<T>],
    (ca, la): (usize, usize),
    (cb, lb): (usize, usize),
    conformal: bool,
    reversed: bool,
) -> Result<Gluing> {
    let a = loop_of(&charts[ca], la)?;
    let b = loop_of(&charts[cb], lb)?;
    let n = a.vertices.len();
    if n != b.vertices.len() {
        return Err(Error::GluingMismatch(format!(
            "{} loop {la} has {n} vertices, {} loop {lb} has {}",
            charts[ca].role.label(),
            charts[cb].role.label(),
            b.vertices.len()
        )));
    }
    let map = |i: usize| if reversed { (n - i) % n } else { i };
    if reversed {
        let grid = theta_grid::<T>(n);
        if a.theta != grid || b.theta != grid {
            return Err(Error::GluingMismatch(
                "orientation-reversing gluing needs both loops on the uniform θ grid".into(),
            ));
        }
    } else if a.theta != b.theta {
        return Err(Error::GluingMismatch(format!(
            "θ grids of {} loop {la} and {} loop {lb} differ",
            charts[ca].role.label(),
            charts[cb].role.label()
        )));
    }
    Ok(Gluing {
        chart_a: ca,
        loop_a: la,
        chart_b: cb,
        loop_b: lb,
        conformal,
        pairs: (0..n).map(|i| (a.vertices[i], b.vertices[map(i)])).collect(),
    })
}

/// Checks that conforming (non-conformal) seams really coincide in the
/// background coordinates.
fn check_coincident<T: Real>(charts: &[ChartMesh<T>], g: &Gluing) -> Result<()> {
    let (a, b) = (&charts[g.chart_a], &charts[g.chart_b]);
    let scale = a
        .vertices
        .iter()
        .chain(b.vertices.iter())
        .fold(T::zero(), |m, p| m.max(p[0].abs()).max(p[1].abs()))
        .max(T::one());
    for &(va, vb) in &g.pairs {
        let d = torus_distance(a.absolute(va), b.absolute(vb));
        if d > scale * c(1e-9) {
            return Err(Error::GluingMismatch(format!(
                "{} vertex {va} and {} vertex {vb} are {d} apart",
                a.role.label(),
                b.role.label()
            )));
        }
    }
    Ok(())
}

fn assemble<T: Real>(
    mut charts: Vec<ChartMesh<T>>,
    gluings: Vec<Gluing>,
    poles: Vec<[T; 2]>,
    spec: Option<AttachmentSpec<T>>,
) -> Result<GluedMesh<T>> {
    for (i, ch) in charts.iter_mut().enumerate() {
        ch.chart_id = i;
    }
    let offsets: Vec<usize> = charts
        .iter()
        .scan(0, |acc, ch| {
            let o = *acc;
            *acc += ch.vertices.len();
            Some(o)
        })
        .collect();
    let total: usize = charts.iter().map(|ch| ch.vertices.len()).sum();
    let mut uf = UnionFind((0..total).collect());
    for (ci, ch) in charts.iter().enumerate() {
        for &(a, b) in &ch.identifications {
            uf.union(offsets[ci] + a, offsets[ci] + b);
        }
    }
    for g in &gluings {
        for &(a, b) in &g.pairs {
            uf.union(offsets[g.chart_a] + a, offsets[g.chart_b] + b);
        }
    }
    let mut number = vec![usize::MAX; total];
    let mut n_dofs = 0;
    let mut dof_map = Vec::with_capacity(charts.len());
    for (ci, ch) in charts.iter().enumerate() {
        let mut m = Vec::with_capacity(ch.vertices.len());
        for v in 0..ch.vertices.len() {
            let r = uf.find(offsets[ci] + v);
            if number[r] == usize::MAX {
                number[r] = n_dofs;
                n_dofs += 1;
            }
            m.push(number[r]);
        }
        dof_map.push(m);
    }
    for (ci, ch) in charts.iter().enumerate() {
        for t in 0..ch.triangles.len() {
            if !(ch.triangle_area(t) > T::zero()) {
                return Err(Error::DegenerateTriangle { chart: ci, triangle: t });
            }
        }
    }
    Ok(GluedMesh {
        charts,
        dof_map,
        gluings,
        n_dofs,
        poles,
        spec,
    })
}

/// Glues the holed background, one annulus per pole and the strip.
///
/// Background hole loop `p` meets the outer loop of annulus `p` vertex by
/// vertex. The inner annulus loops meet the strip θ-pointwise; for the
/// cylinder the far end is glued with θ ↦ −θ so the result is orientable.
pub fn glue<T: Real>(
    background: ChartMesh<T>,
    annuli: Vec<ChartMesh<T>>,
    strip: ChartMesh<T>,
    spec: &AttachmentSpec<T>,
) -> Result<GluedMesh<T>> {
    spec.validate()?;
    let n_balls = spec.kind.n_balls();
    if annuli.len() != n_balls || background.boundary_loops.len() != n_balls {
        return Err(Error::GluingMismatch(format!(
            "{} needs {n_balls} holes; got {} annuli and {} background loops",
            spec.kind,
            annuli.len(),
            background.boundary_loops.len()
        )));
    }
    let expected_strip_loops = match spec.kind {
        PieceKind::CrossCap => 1,
        PieceKind::Cylinder => 2,
    };
    if strip.boundary_loops.len() != expected_strip_loops {
        return Err(Error::GluingMismatch(format!(
            "strip has {} boundary loops, {} expects {expected_strip_loops}",
            strip.boundary_loops.len(),
            spec.kind
        )));
    }
    let poles = spec.poles();
    let mut charts = vec![background];
    for (p, mut a) in annuli.into_iter().enumerate() {
        a.role = ChartRole::Annulus { pole: p };
        charts.push(a);
    }
    let strip_idx = charts.len();
    charts.push(strip);
    let mut gluings = Vec::new();
    for p in 0..n_balls {
        let g = pair_loops(&charts, (0, p), (1 + p, 1), false, false)?;
        check_coincident(&charts, &g)?;
        gluings.push(g);
    }
    gluings.push(pair_loops(&charts, (1, 0), (strip_idx, 0), true, false)?);
    if spec.kind == PieceKind::Cylinder {
        gluings.push(pair_loops(&charts, (2, 0), (strip_idx, 1), true, true)?);
    }
    assemble(charts, gluings, poles, Some(*spec))
}

/// Glues the holed background to its annuli and, optionally, filling caps.
/// Without caps the result is `Σ∖B_{ε^k}` with free boundary loops.
pub fn glue_background<T: Real>(
    background: ChartMesh<T>,
    annuli: Vec<ChartMesh<T>>,
    caps: Vec<ChartMesh<T>>,
    poles: Vec<[T; 2]>,
) -> Result<GluedMesh<T>> {
    let n_balls = annuli.len();
    if background.boundary_loops.len() != n_balls || !(caps.is_empty() || caps.len() == n_balls) {
        return Err(Error::GluingMismatch(
            "background holes, annuli and caps must correspond one to one".into(),
        ));
    }
    let mut charts = vec![background];
    for (p, mut a) in annuli.into_iter().enumerate() {
        a.role = ChartRole::Annulus { pole: p };
        charts.push(a);
    }
    let n_caps = caps.len();
    for (p, mut cap) in caps.into_iter().enumerate() {
        cap.role = ChartRole::Cap { pole: p };
        charts.push(cap);
    }
    let mut gluings = Vec::new();
    for p in 0..n_balls {
        let g = pair_loops(&charts, (0, p), (1 + p, 1), false, false)?;
        check_coincident(&charts, &g)?;
        gluings.push(g);
    }
    for p in 0..n_caps {
        let g = pair_loops(&charts, (1 + p, 0), (1 + n_balls + p, 0), false, false)?;
        check_coincident(&charts, &g)?;
        gluings.push(g);
    }
    assemble(charts, gluings, poles, None)
}

/// The three meshes an experiment needs, sharing chart geometry so vectors
/// can be moved between them by chart role.
#[derive(Debug, Clone)]
pub struct GluedSurfaces<T: Real> {
    /// `Σ_{ε,h}`: background, annuli and the piece.
    pub glued: GluedMesh<T>,
    /// The closed background, holes filled with fan caps.
    pub filled: GluedMesh<T>,
    /// `Σ∖B_{ε^k}` with free (Neumann) boundary.
    pub holed: GluedMesh<T>,
}

impl<T: Real> GluedSurfaces<T> {
    pub fn build(spec: &AttachmentSpec<T>, params: &MeshParams<T>) -> Result<Self> {
        spec.validate()?;
        params.validate()?;
        let piece = spec.piece()?;
        let (background, poles) = build_torus_with_holes(params, &spec.poles())?;
        let r_in = piece.hole_radius();
        let r_out = params.hole_half_width();
        let annuli = poles
            .iter()
            .map(|&p| build_annulus_mesh(p, r_in, r_out, params))
            .collect::<Result<Vec<_>>>()?;
        let caps = poles
            .iter()
            .map(|&p| build_cap_mesh(p, r_in, params.n_theta))
            .collect::<Result<Vec<_>>>()?;
        let strip = build_strip_mesh(&piece, params)?;
        let snapped = AttachmentSpec {
            x0: poles[0],
            x1: poles.get(1).copied(),
            ..*spec
        };
        let glued = glue(background.clone(), annuli.clone(), strip, &snapped)?;
        let filled = glue_background(background.clone(), annuli.clone(), caps, poles.clone())?;
        let holed = glue_background(background, annuli, Vec::new(), poles)?;
        Ok(GluedSurfaces { glued, filled, holed })
    }
}
