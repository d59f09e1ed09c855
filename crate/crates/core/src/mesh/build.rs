use crate::analytic::{ModelPiece, PieceKind};
use crate::{c, Error, Real, Result};

use super::{BoundaryLoop, ChartMesh, ChartRole, MeshParams};

/// Uniform angular grid `2πi/n`, shared by every loop that takes part in a
/// conformal gluing so the θ values agree bitwise.
pub(crate) fn theta_grid<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| T::TAU() * T::from_usize_lossy(i) / T::from_usize_lossy(n))
        .collect()
}

/// Number of geometric rings needed to grade from `r_in` to `r_out`.
pub fn ring_count<T: Real>(r_in: T, r_out: T, ratio: T) -> usize {
    let m = ((r_out / r_in).ln() / ratio.ln()).ceil();
    m.to_f64_lossy().max(1.0) as usize
}

/// Radial ratio actually used by the annulus: the requested grading, capped
/// so radial steps stay within twice the angular spacing `2π/n_theta`.
pub fn effective_grading<T: Real>(params: &MeshParams<T>) -> T {
    let cap = (c::<T>(2.0) * T::TAU() / T::from_usize_lossy(params.n_theta)).exp();
    params.grading_ratio.min(cap)
}

/// Even number of `t` layers giving edges near `target_edge` on the full
/// height `h`, at least 4.
pub fn strip_layers<T: Real>(h: T, params: &MeshParams<T>) -> usize {
    let n = (h / params.target_edge).ceil().to_f64_lossy().max(1.0) as usize;
    let n = n + n % 2;
    n.max(4)
}

/// Integer offsets of the `8R` vertices on the boundary of the square
/// `[-R, R]²`, counter-clockwise from `(R, 0)`.
pub(crate) fn square_ring(r: usize) -> Vec<(i64, i64)> {
    let r = r as i64;
    let mut out = Vec::with_capacity(8 * r as usize);
    for y in 0..r {
        out.push((r, y));
    }
    for x in (-r + 1..=r).rev() {
        out.push((x, r));
    }
    for y in (-r + 1..=r).rev() {
        out.push((-r, y));
    }
    for x in -r..r {
        out.push((x, -r));
    }
    for y in -r..0 {
        out.push((r, y));
    }
    out
}

fn square_theta<T: Real>(dx: i64, dy: i64) -> T {
    let a = T::from_f64((dy as f64).atan2(dx as f64)).expect("finite angle");
    if a < T::zero() {
        a + T::TAU()
    } else {
        a
    }
}

fn structured_quads(
    n_cols: usize,
    n_rows: usize,
    periodic_cols: bool,
    idx: impl Fn(usize, usize) -> usize,
) -> Vec<[usize; 3]> {
    let mut tris = Vec::new();
    let cols = if periodic_cols { n_cols } else { n_cols - 1 };
    for j in 0..n_rows - 1 {
        for i in 0..cols {
            let i1 = (i + 1) % n_cols;
            let (a, b, cc, d) = (idx(i, j), idx(i1, j), idx(i1, j + 1), idx(i, j + 1));
            tris.push([a, b, cc]);
            tris.push([a, cc, d]);
        }
    }
    tris
}

/// Structured triangulation of the unit flat torus `[0,1)²`.
pub fn build_torus_mesh<T: Real>(params: &MeshParams<T>) -> Result<ChartMesh<T>> {
    let n = params.n_background;
    if n < 4 {
        return Err(Error::InvalidParameter("n_background must be >= 4".into()));
    }
    let nf = T::from_usize_lossy(n);
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push([T::from_usize_lossy(i) / nf, T::from_usize_lossy(j) / nf]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v = |a: usize, b: usize| (b % n) * n + (a % n);
            triangles.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
            triangles.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    Ok(ChartMesh {
        chart_id: 0,
        role: ChartRole::Background,
        origin: [T::zero(); 2],
        metric_factor: vec![T::one(); vertices.len()],
        vertices,
        triangles,
        boundary_loops: Vec::new(),
        period: [Some(T::one()), Some(T::one())],
        identifications: Vec::new(),
    })
}

/// The torus grid with a square of half-width `n_theta/8` cells removed
/// around each pole. Poles are snapped to the nearest grid vertex; the
/// snapped positions are returned alongside the chart.
pub fn build_torus_with_holes<T: Real>(
    params: &MeshParams<T>,
    poles: &[[T; 2]],
) -> Result<(ChartMesh<T>, Vec<[T; 2]>)> {
    params.validate()?;
    let n = params.n_background;
    let r = params.hole_cells();
    let nf = T::from_usize_lossy(n);
    let snapped: Vec<(i64, i64)> = poles
        .iter()
        .map(|p| {
            let s = |x: T| {
                let k = (x * nf).round().to_f64_lossy() as i64;
                k.rem_euclid(n as i64)
            };
            (s(p[0]), s(p[1]))
        })
        .collect();
    let wrap = |d: i64| {
        let d = d.rem_euclid(n as i64);
        if d > n as i64 / 2 {
            d - n as i64
        } else {
            d
        }
    };
    if 2 * r + 2 > n {
        return Err(Error::InvalidParameter(format!(
            "hole of {r} cells does not fit a {n}-cell torus"
        )));
    }
    for a in 0..snapped.len() {
        for b in 0..a {
            let dx = wrap(snapped[a].0 - snapped[b].0).abs();
            let dy = wrap(snapped[a].1 - snapped[b].1).abs();
            if dx.max(dy) < 2 * r as i64 + 1 {
                return Err(Error::InvalidParameter(
                    "attachment points too close for the hole squares at this resolution".into(),
                ));
            }
        }
    }
    let rr = r as i64;
    let inside = |i: usize, j: usize| {
        snapped.iter().any(|&(pi, pj)| {
            let dx = wrap(i as i64 - pi);
            let dy = wrap(j as i64 - pj);
            dx.abs() < rr && dy.abs() < rr
        })
    };
    let cell_removed = |i: usize, j: usize| {
        snapped.iter().any(|&(pi, pj)| {
            let dx = wrap(i as i64 - pi);
            let dy = wrap(j as i64 - pj);
            (-rr..rr).contains(&dx) && (-rr..rr).contains(&dy)
        })
    };
    let mut index = vec![usize::MAX; n * n];
    let mut vertices = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if !inside(i, j) {
                index[j * n + i] = vertices.len();
                vertices.push([T::from_usize_lossy(i) / nf, T::from_usize_lossy(j) / nf]);
            }
        }
    }
    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if cell_removed(i, j) {
                continue;
            }
            let v = |a: usize, b: usize| index[(b % n) * n + (a % n)];
            triangles.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
            triangles.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    let ring = square_ring(r);
    let boundary_loops = snapped
        .iter()
        .map(|&(pi, pj)| BoundaryLoop {
            vertices: ring
                .iter()
                .map(|&(dx, dy)| {
                    let i = (pi + dx).rem_euclid(n as i64) as usize;
                    let j = (pj + dy).rem_euclid(n as i64) as usize;
                    index[j * n + i]
                })
                .collect(),
            theta: ring.iter().map(|&(dx, dy)| square_theta(dx, dy)).collect(),
        })
        .collect();
    let poles_out = snapped
        .iter()
        .map(|&(i, j)| [T::from_usize_lossy(i as usize) / nf, T::from_usize_lossy(j as usize) / nf])
        .collect();
    Ok((
        ChartMesh {
            chart_id: 0,
            role: ChartRole::Background,
            origin: [T::zero(); 2],
            metric_factor: vec![T::one(); vertices.len()],
            vertices,
            triangles,
            boundary_loops,
            period: [Some(T::one()), Some(T::one())],
            identifications: Vec::new(),
        },
        poles_out,
    ))
}

/// Graded annulus around `x0` between the circle of radius `r_in` and the
/// square of inscribed radius `r_out` cut from the background grid.
///
/// Loop 0 is the inner circle (θ on the uniform grid), loop 1 the outer
/// square. Intermediate loops sit at geometric radii and blend from circles
/// into the square over the last few bands.
pub fn build_annulus_mesh<T: Real>(
    x0: [T; 2],
    r_in: T,
    r_out: T,
    params: &MeshParams<T>,
) -> Result<ChartMesh<T>> {
    annulus(x0, r_in, r_out, params, true)
}

/// Graded annulus between two concentric circles, for checks against
/// closed-form solutions.
pub fn build_circular_annulus<T: Real>(
    x0: [T; 2],
    r_in: T,
    r_out: T,
    params: &MeshParams<T>,
) -> Result<ChartMesh<T>> {
    annulus(x0, r_in, r_out, params, false)
}

fn annulus<T: Real>(x0: [T; 2], r_in: T, r_out: T, params: &MeshParams<T>, square_outer: bool) -> Result<ChartMesh<T>> {
    if !(r_in > T::zero()) || !(r_in < r_out) {
        return Err(Error::InvalidParameter(format!(
            "annulus needs 0 < r_in < r_out, got r_in = {r_in}, r_out = {r_out}"
        )));
    }
    if params.n_theta < 8 || !params.n_theta.is_multiple_of(8) {
        return Err(Error::InvalidParameter(format!(
            "n_theta must be a positive multiple of 8, got {}",
            params.n_theta
        )));
    }
    let nt = params.n_theta;
    let m = ring_count(r_in, r_out, effective_grading(params));
    let q = (r_out / r_in).powf(T::one() / T::from_usize_lossy(m));
    let theta = theta_grid::<T>(nt);
    let rcells = nt / 8;
    let square: Vec<[T; 2]> = square_ring(rcells)
        .iter()
        .map(|&(dx, dy)| {
            let s = r_out / T::from_usize_lossy(rcells);
            [T::from_f64(dx as f64).unwrap() * s, T::from_f64(dy as f64).unwrap() * s]
        })
        .collect();
    let blend_loops = if square_outer { m.min(3) } else { 0 };
    let mut vertices = Vec::with_capacity((m + 1) * nt);
    for j in 0..=m {
        let rho = r_in * q.powi(j as i32);
        let w = if j + blend_loops <= m {
            T::zero()
        } else {
            T::from_usize_lossy(j + blend_loops - m) / T::from_usize_lossy(blend_loops)
        };
        for i in 0..nt {
            if j == m && square_outer {
                vertices.push(square[i]);
            } else if j == m {
                vertices.push([r_out * theta[i].cos(), r_out * theta[i].sin()]);
            } else if j == 0 {
                vertices.push([r_in * theta[i].cos(), r_in * theta[i].sin()]);
            } else {
                let (cs, sn) = (theta[i].cos(), theta[i].sin());
                let sq = [square[i][0] / r_out, square[i][1] / r_out];
                vertices.push([
                    rho * ((T::one() - w) * cs + w * sq[0]),
                    rho * ((T::one() - w) * sn + w * sq[1]),
                ]);
            }
        }
    }
    let idx = |i: usize, j: usize| j * nt + (i % nt);
    let mut triangles = Vec::with_capacity(2 * m * nt);
    let area2 = |a: [T; 2], b: [T; 2], d: [T; 2]| (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
    let dist2 = |a: [T; 2], b: [T; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    for j in 0..m {
        for i in 0..nt {
            let (a, b, cc, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            let quad = if dist2(vertices[a], vertices[cc]) <= dist2(vertices[b], vertices[d]) {
                [[a, b, cc], [a, cc, d]]
            } else {
                [[a, b, d], [b, cc, d]]
            };
            for mut t in quad {
                if area2(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < T::zero() {
                    t.swap(1, 2);
                }
                triangles.push(t);
            }
        }
    }
    let inner = BoundaryLoop {
        vertices: (0..nt).collect(),
        theta,
    };
    let outer = BoundaryLoop {
        vertices: (0..nt).map(|i| idx(i, m)).collect(),
        theta: if square_outer {
            square_ring(rcells).iter().map(|&(dx, dy)| square_theta(dx, dy)).collect()
        } else {
            inner.theta.clone()
        },
    };
    Ok(ChartMesh {
        chart_id: 0,
        role: ChartRole::Annulus { pole: 0 },
        origin: x0,
        metric_factor: vec![T::one(); vertices.len()],
        vertices,
        triangles,
        boundary_loops: vec![inner, outer],
        period: [None, None],
        identifications: Vec::new(),
    })
}

/// Fan triangulation of the disk `B_{r}(x0)` whose rim matches the inner loop
/// of the annulus. Vertex 0 is the center.
pub fn build_cap_mesh<T: Real>(x0: [T; 2], r: T, n_theta: usize) -> Result<ChartMesh<T>> {
    if n_theta < 3 {
        return Err(Error::InvalidParameter("cap needs at least 3 rim vertices".into()));
    }
    let theta = theta_grid::<T>(n_theta);
    let mut vertices = vec![[T::zero(); 2]];
    vertices.extend(theta.iter().map(|t| [r * t.cos(), r * t.sin()]));
    let triangles = (0..n_theta)
        .map(|i| [0, 1 + i, 1 + (i + 1) % n_theta])
        .collect();
    Ok(ChartMesh {
        chart_id: 0,
        role: ChartRole::Cap { pole: 0 },
        origin: x0,
        metric_factor: vec![T::one(); vertices.len()],
        vertices,
        triangles,
        boundary_loops: vec![BoundaryLoop {
            vertices: (1..=n_theta).collect(),
            theta,
        }],
        period: [None, None],
        identifications: Vec::new(),
    })
}

/// Flat strip in coordinates `(s, t) = (εθ, t)`.
///
/// The cylinder uses the full height `[0, h]` with loops at `t = 0` and
/// `t = h`. The cross cap keeps the fundamental domain `t ∈ [0, h/2]` and
/// identifies `(θ, h/2) ~ (θ + π, h/2)`, which is the quotient of the
/// cylinder by the fixed-point-free involution `(θ, t) ↦ (θ + π, h − t)`.
pub fn build_strip_mesh<T: Real>(piece: &ModelPiece<T>, params: &MeshParams<T>) -> Result<ChartMesh<T>> {
    build_strip_mesh_with_layers(piece, params.n_theta, strip_layers(piece.h, params))
}

pub fn build_strip_mesh_with_layers<T: Real>(
    piece: &ModelPiece<T>,
    n_theta: usize,
    n_t: usize,
) -> Result<ChartMesh<T>> {
    piece.validate()?;
    if !n_theta.is_multiple_of(2) {
        return Err(Error::IdentificationImpossible(n_theta));
    }
    if n_theta < 4 || n_t < 2 {
        return Err(Error::InvalidParameter(format!(
            "strip needs n_theta >= 4 and at least 2 layers, got {n_theta} x {n_t}"
        )));
    }
    if piece.kind == PieceKind::CrossCap && !n_t.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "cross cap needs an even number of t layers, got {n_t}"
        )));
    }
    let theta = theta_grid::<T>(n_theta);
    let rows = match piece.kind {
        PieceKind::Cylinder => n_t + 1,
        PieceKind::CrossCap => n_t / 2 + 1,
    };
    let dt = piece.h / T::from_usize_lossy(n_t);
    let mut vertices = Vec::with_capacity(rows * n_theta);
    for j in 0..rows {
        for th in &theta {
            vertices.push([piece.eps * *th, dt * T::from_usize_lossy(j)]);
        }
    }
    let idx = |i: usize, j: usize| j * n_theta + i;
    let triangles = structured_quads(n_theta, rows, true, idx);
    let mut boundary_loops = vec![BoundaryLoop {
        vertices: (0..n_theta).map(|i| idx(i, 0)).collect(),
        theta: theta.clone(),
    }];
    let mut identifications = Vec::new();
    match piece.kind {
        PieceKind::Cylinder => boundary_loops.push(BoundaryLoop {
            vertices: (0..n_theta).map(|i| idx(i, rows - 1)).collect(),
            theta,
        }),
        PieceKind::CrossCap => {
            let half = n_theta / 2;
            for i in 0..half {
                identifications.push((idx(i, rows - 1), idx(i + half, rows - 1)));
            }
        }
    }
    Ok(ChartMesh {
        chart_id: 0,
        role: ChartRole::Strip,
        origin: [T::zero(); 2],
        metric_factor: vec![T::one(); vertices.len()],
        vertices,
        triangles,
        boundary_loops,
        period: [Some(T::TAU() * piece.eps), None],
        identifications,
    })
}
