use std::fmt::Write;

use sha2::{Digest, Sha256};

use crate::Real;

use super::GluedMesh;

/// Plain-text mesh dump.
///
/// Sections, each introduced by a header line `NAME count`:
/// - `CHARTS`: `chart_id role n_vertices n_triangles`
/// - `VERTICES`: `chart_id x y` in absolute coordinates, chart by chart
/// - `TRIANGLES`: `chart_id a b c` with chart-local vertex indices
/// - `DOFMAP`: `chart_id vertex dof`
/// - `GLUINGS`: `chart_a loop_a chart_b loop_b kind n_pairs`, followed by
///   `n_pairs` lines `vertex_a vertex_b`; kind is `conformal` or `conforming`
///
/// Reals are printed with 17 significant digits.
pub fn export_mesh<T: Real>(mesh: &GluedMesh<T>) -> String {
    let mut s = String::new();
    let num = |x: T| format!("{:.16e}", x.to_f64_lossy());
    writeln!(s, "SGLMESH 1").unwrap();
    writeln!(s, "CHARTS {}", mesh.charts.len()).unwrap();
    for ch in &mesh.charts {
        writeln!(
            s,
            "{} {} {} {}",
            ch.chart_id,
            ch.role.label(),
            ch.vertices.len(),
            ch.triangles.len()
        )
        .unwrap();
    }
    let nv: usize = mesh.charts.iter().map(|ch| ch.vertices.len()).sum();
    writeln!(s, "VERTICES {nv}").unwrap();
    for ch in &mesh.charts {
        for v in 0..ch.vertices.len() {
            let p = ch.absolute(v);
            writeln!(s, "{} {} {}", ch.chart_id, num(p[0]), num(p[1])).unwrap();
        }
    }
    let nt: usize = mesh.charts.iter().map(|ch| ch.triangles.len()).sum();
    writeln!(s, "TRIANGLES {nt}").unwrap();
    for ch in &mesh.charts {
        for t in &ch.triangles {
            writeln!(s, "{} {} {} {}", ch.chart_id, t[0], t[1], t[2]).unwrap();
        }
    }
    writeln!(s, "DOFMAP {nv}").unwrap();
    for (ci, m) in mesh.dof_map.iter().enumerate() {
        for (v, d) in m.iter().enumerate() {
            writeln!(s, "{ci} {v} {d}").unwrap();
        }
    }
    writeln!(s, "GLUINGS {}", mesh.gluings.len()).unwrap();
    for g in &mesh.gluings {
        let kind = if g.conformal { "conformal" } else { "conforming" };
        writeln!(
            s,
            "{} {} {} {} {kind} {}",
            g.chart_a,
            g.loop_a,
            g.chart_b,
            g.loop_b,
            g.pairs.len()
        )
        .unwrap();
        for (a, b) in &g.pairs {
            writeln!(s, "{a} {b}").unwrap();
        }
    }
    s
}

/// SHA-256 of the exported mesh, hex encoded.
pub fn mesh_fingerprint<T: Real>(mesh: &GluedMesh<T>) -> String {
    let digest = Sha256::digest(export_mesh(mesh).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
