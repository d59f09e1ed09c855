use std::f64::consts::PI;

use sgl_core::analytic::{glued_area, ModelPiece, PieceKind};
use sgl_core::fem::{
    assemble, dirichlet_restrict, dual_residual_norm, harmonic_extension, mesh_spectrum, neumann_spectrum,
    solve_lowest, CsrMatrix, OperatorKind, SolverOptions,
};
use sgl_core::mesh::{
    build_circular_annulus, build_strip_mesh_with_layers, build_torus_mesh, glue_background, AttachmentSpec,
    ChartRole, GluedMesh, GluedSurfaces, MeshParams,
};

fn torus(n: usize) -> GluedMesh<f64> {
    let t = build_torus_mesh(&MeshParams::new(n, 8)).unwrap();
    glue_background(t, vec![], vec![], vec![]).unwrap()
}

fn single_chart(ch: sgl_core::mesh::ChartMesh<f64>) -> GluedMesh<f64> {
    let n = ch.vertices.len();
    let ids = ch.identifications.clone();
    let mut map: Vec<usize> = (0..n).collect();
    for (a, b) in ids {
        map[b] = map[a];
    }
    let mut number = vec![usize::MAX; n];
    let mut next = 0;
    let mut dof = vec![0; n];
    for v in 0..n {
        let r = map[v];
        if number[r] == usize::MAX {
            number[r] = next;
            next += 1;
        }
        dof[v] = number[r];
    }
    GluedMesh { charts: vec![ch], dof_map: vec![dof], gluings: vec![], n_dofs: next, poles: vec![], spec: None }
}

#[test]
fn torus_kernel_is_constants() {
    let (k, m) = assemble(&torus(16)).unwrap();
    let ones = vec![1.0; k.n];
    let k1 = k.matvec(&ones);
    assert!(k1.iter().all(|x| x.abs() < 1e-12));
    assert!((m.quad_form(&ones) - 1.0).abs() < 1e-12);
    assert!(k.asymmetry() < 1e-14);
    let s = solve_lowest(&k, &m, 1, &SolverOptions::default()).unwrap();
    assert!(s.pairs[0].value.abs() < 1e-8);
    let v = &s.pairs[0].vector;
    let spread = v.iter().fold(0.0f64, |a, x| a.max((x - v[0]).abs()));
    assert!(spread < 1e-6);
}

#[test]
fn unit_square_mass_partition() {
    let trip = vec![(0, 0, 1.0)];
    let _ = CsrMatrix::from_triplets(1, trip, OperatorKind::Mass);
    let sq = sgl_core::mesh::ChartMesh {
        chart_id: 0,
        role: ChartRole::Background,
        origin: [0.0, 0.0],
        vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        triangles: vec![[0, 1, 2], [0, 2, 3]],
        metric_factor: vec![1.0; 4],
        boundary_loops: vec![],
        period: [None, None],
        identifications: vec![],
    };
    let (_, m) = assemble(&single_chart(sq)).unwrap();
    let total: f64 = m.values.iter().sum();
    assert!((total - 1.0).abs() < 1e-14);
}

#[test]
fn torus_spectrum_matches_fourier() {
    let mesh = torus(64);
    let s = mesh_spectrum(&mesh, 6, &SolverOptions::default()).unwrap();
    let l1 = 4.0 * PI * PI;
    assert!(s.pairs[0].value.abs() < 1e-8);
    for p in &s.pairs[1..5] {
        assert!(((p.value - l1) / l1).abs() < 0.01, "{}", p.value);
    }
    assert!(((s.pairs[5].value - 2.0 * l1) / (2.0 * l1)).abs() < 0.03);
    let (_, m) = assemble(&mesh).unwrap();
    assert!(s.orthogonality_defect(&m) < 1e-8);
    for p in &s.pairs {
        assert!(p.residual <= 1e-9 * p.value.max(1.0));
    }
    assert!(!s.mesh_fingerprint.is_empty());
}

#[test]
fn solver_is_deterministic() {
    let mesh = torus(16);
    let a = mesh_spectrum(&mesh, 5, &SolverOptions::default()).unwrap();
    let b = mesh_spectrum(&mesh, 5, &SolverOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cylinder_strip_dirichlet_modes() {
    let piece = ModelPiece::new(PieceKind::Cylinder, 0.005, 0.5, 2.0).unwrap();
    let strip = build_strip_mesh_with_layers(&piece, 16, 64).unwrap();
    let mesh = single_chart(strip);
    let (k, m) = assemble(&mesh).unwrap();
    let (kr, r) = dirichlet_restrict(&k, &mesh, &[(0, 0), (0, 1)]).unwrap();
    let mr = r.restrict(&m);
    let s = solve_lowest(&kr, &mr, 2, &SolverOptions::default()).unwrap();
    let l0 = PI * PI / 0.25;
    assert!(((s.pairs[0].value - l0) / l0).abs() < 0.01);
    assert!(((s.pairs[1].value - 4.0 * l0) / (4.0 * l0)).abs() < 0.01);
}

#[test]
fn cross_cap_strip_dirichlet_modes_are_odd() {
    let piece = ModelPiece::new(PieceKind::CrossCap, 0.005, 0.5, 2.0).unwrap();
    let strip = build_strip_mesh_with_layers(&piece, 16, 64).unwrap();
    let mesh = single_chart(strip);
    let (k, m) = assemble(&mesh).unwrap();
    let (kr, r) = dirichlet_restrict(&k, &mesh, &[(0, 0)]).unwrap();
    let mr = r.restrict(&m);
    let s = solve_lowest(&kr, &mr, 2, &SolverOptions::default()).unwrap();
    let l0 = PI * PI / 0.25;
    assert!(((s.pairs[0].value - l0) / l0).abs() < 0.01);
    // the next rotationally symmetric mode is n = 3; n = 2 is odd under the involution
    assert!(((s.pairs[1].value - 9.0 * l0) / (9.0 * l0)).abs() < 0.02, "{}", s.pairs[1].value);
    let (none, _) = dirichlet_restrict(&k, &mesh, &[]).unwrap();
    assert_eq!(none, k);
}

#[test]
fn glued_constant_has_zero_energy_and_glued_area_mass() {
    let spec = AttachmentSpec { kind: PieceKind::CrossCap, x0: [0.5, 0.5], x1: None, eps: 0.02, h: 0.5, k: 2.0 };
    let s = GluedSurfaces::build(&spec, &MeshParams::new(32, 32)).unwrap();
    let (k, m) = assemble(&s.glued).unwrap();
    let ones = vec![1.0f64; k.n];
    assert!(k.quad_form(&ones).abs() < 1e-10);
    let want = glued_area(1.0, &spec.piece().unwrap()).unwrap();
    assert!(((m.quad_form(&ones) - want) / want).abs() < 5e-3);
}

#[test]
fn dual_norm_vanishes_on_eigenpairs_and_constants() {
    let mesh = torus(16);
    let (k, m) = assemble(&mesh).unwrap();
    let opts = SolverOptions::default();
    let s = solve_lowest(&k, &m, 3, &opts).unwrap();
    for p in &s.pairs {
        let d = dual_residual_norm(&k, &m, &p.vector, p.value).unwrap();
        assert!(d <= 10.0 * opts.rtol * p.value.max(1.0), "{d}");
    }
    let ones = vec![1.0; k.n];
    assert!(dual_residual_norm(&k, &m, &ones, 0.0).unwrap() < 1e-12);
    let d = dual_residual_norm(&k, &m, &s.pairs[1].vector, s.pairs[1].value + 1.0).unwrap();
    assert!(d > 1e-3);
}

#[test]
fn harmonic_extension_constant_and_cos() {
    let params = MeshParams::<f64>::new(64, 64);
    let (r_in, r_out) = (0.1, 1.0);
    let ann = build_circular_annulus([0.0, 0.0], r_in, r_out, &params).unwrap();
    let mesh = single_chart(ann);
    let inner = mesh.charts[0].boundary_loops[0].vertices.clone();
    let outer = mesh.charts[0].boundary_loops[1].vertices.clone();
    let trace: Vec<(usize, f64)> = inner.iter().chain(&outer).map(|&v| (v, 2.5)).collect();
    let u = harmonic_extension(&mesh, &[0], &trace).unwrap();
    assert!(u.iter().all(|x| (x - 2.5).abs() < 1e-10));

    // cos θ inside, 0 outside: u = (a r + b / r) cos θ
    let th = mesh.charts[0].boundary_loops[0].theta.clone();
    let mut trace: Vec<(usize, f64)> = inner.iter().zip(&th).map(|(&v, t)| (v, t.cos())).collect();
    trace.extend(outer.iter().map(|&v| (v, 0.0)));
    let u = harmonic_extension(&mesh, &[0], &trace).unwrap();
    let a = r_in / (r_in * r_in - r_out * r_out);
    let b = -a * r_out * r_out;
    let ch = &mesh.charts[0];
    let mut worst: f64 = 0.0;
    for v in 0..ch.vertices.len() {
        let [x, y] = ch.vertices[v];
        let r = x.hypot(y);
        let want = (a * r + b / r) * (x / r);
        worst = worst.max((u[v] - want).abs());
    }
    assert!(worst < 0.02, "worst {worst}");
}

#[test]
fn neumann_spectrum_small_hole_close_to_torus() {
    let spec = AttachmentSpec { kind: PieceKind::CrossCap, x0: [0.5, 0.5], x1: None, eps: 0.01, h: 0.5, k: 2.0 };
    let s = GluedSurfaces::build(&spec, &MeshParams::new(64, 32)).unwrap();
    let n = neumann_spectrum(&s.holed, 5, &SolverOptions::default()).unwrap();
    let t = mesh_spectrum(&torus(64), 5, &SolverOptions::default()).unwrap();
    for i in 1..5 {
        assert!(((n.pairs[i].value - t.pairs[i].value) / t.pairs[i].value).abs() < 0.005);
    }
}
