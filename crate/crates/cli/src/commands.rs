use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde_json::json;
use sgl_core::analytic::PieceKind;
use sgl_core::fem::{mesh_spectrum, solve_lowest, spectrum_json};
use sgl_core::green::{
    deflated_resolvent, quasimode_crosscap_green, quasimode_neumann_bridge, zero_extended_piece, BackgroundProblem,
    GluedOperators,
};
use sgl_core::mesh::{build_torus_mesh, export_mesh, glue_background, GluedSurfaces};
use sgl_lab::config::SweepConfig;
use sgl_lab::experiments::{
    bounds_experiment, conv_experiment, localization, main1_experiment, main2_experiment, Settings,
};
use sgl_lab::record::{read_csv, read_signatures, write_csv, write_signatures, CsvRow, SweepRecord};
use sgl_lab::sweep::{run_points, track_by_eps, BACKGROUND_MODES};
use sgl_lab::verify::{verify_main1_vanishing_point, Verdict};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{config_hash, Environment, RunManifest, Timing};

pub const RECORDS: &str = "records.jsonl";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SIGNATURES: &str = "signatures";

/// Share of grid points that must succeed for a zero exit.
pub const MIN_SUCCESS: f64 = 0.9;

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// One `(ε, h)`: spectrum, mesh export and, with a piece, the quasimode
/// residuals. Without a sweep section only the background is solved.
pub fn spectrum(run: &RunConfig, out: &Path, point: Option<(f64, f64)>, workers: Option<usize>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let Some(cfg) = &run.sweep else {
        let settings = run.settings(workers);
        let chart = build_torus_mesh(&settings.mesh.params(settings.refine))?;
        let mesh = glue_background(chart, Vec::new(), Vec::new(), Vec::new())?;
        let s = mesh_spectrum(&mesh, 8, &settings.solver.options(settings.seed))?;
        let p = out.join("spectrum.json");
        write_json(&p, &json!({ "background": run.background, "piece": null, "spectrum": spectrum_json(&s) }))?;
        written.push(p);
        let p = out.join("mesh.txt");
        std::fs::write(&p, export_mesh(&mesh))?;
        written.push(p);
        return Ok(written);
    };
    let (eps, h) = match point {
        Some(p) => p,
        None => *cfg.grid()?.first().ok_or_else(|| CliError::Config("empty grid".into()))?,
    };
    let spec = cfg.attachment(eps, h);
    spec.validate()?;
    let opts = cfg.solver.options(cfg.seed);
    let surfaces = GluedSurfaces::build(&spec, &cfg.mesh.params(cfg.refine))?;
    let p = out.join("mesh.txt");
    std::fs::write(&p, export_mesh(&surfaces.glued))?;
    written.push(p);
    let ops = GluedOperators::new(surfaces.glued)?;
    let s = solve_lowest(&ops.stiffness, &ops.mass, cfg.modes, &opts)?;
    let p = out.join("spectrum.json");
    write_json(&p, &json!({ "background": run.background, "piece": spec, "spectrum": spectrum_json(&s) }))?;
    written.push(p);

    let bg = BackgroundProblem::new(surfaces.filled, BACKGROUND_MODES, &opts)?;
    let mut report = vec![json!(zero_extended_piece(&ops)?.normalized().record())];
    let extra = match cfg.kind {
        PieceKind::CrossCap => deflated_resolvent(&bg, 0, std::f64::consts::PI.powi(2) / (h * h))
            .and_then(|kernel| quasimode_crosscap_green(&ops, &bg.mesh, &kernel)),
        PieceKind::Cylinder => bg
            .rotated_basis()
            .and_then(|b| quasimode_neumann_bridge(&ops, &bg.mesh, &b.vectors[0], b.rayleigh[0])),
    };
    report.push(match extra {
        Ok(q) => json!(q.normalized().record()),
        Err(e) => json!({ "error": e.to_string() }),
    });
    let p = out.join("quasimodes.json");
    write_json(&p, &report)?;
    written.push(p);
    Ok(written)
}

fn point_key(eps: f64, h: f64) -> String {
    format!("{:016x}_{:016x}", eps.to_bits(), h.to_bits())
}

fn signature_path(eps: f64, h: f64) -> String {
    format!("{SIGNATURES}/{}.sig", point_key(eps, h))
}

/// Records of an earlier run whose signatures are also on disk.
fn load_previous(dir: &Path) -> Result<Vec<SweepRecord>> {
    let path = dir.join(RECORDS);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(&path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut r: SweepRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if !r.is_failed() {
            let Ok(f) = std::fs::File::open(dir.join(signature_path(r.eps, r.h))) else {
                warn!("no signatures for eps {} h {}; recomputing", r.eps, r.h);
                continue;
            };
            r.signatures = read_signatures(BufReader::new(f))?;
        }
        out.push(r);
    }
    Ok(out)
}

/// Writes records, signatures and (when `complete`) the CSV; returns the
/// file list for the manifest.
fn persist(dir: &Path, records: &[SweepRecord], complete: bool) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir.join(SIGNATURES))?;
    let mut files = vec![RECORDS.to_string()];
    let mut w = BufWriter::new(std::fs::File::create(dir.join(RECORDS))?);
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
        if !r.signatures.is_empty() {
            let name = signature_path(r.eps, r.h);
            write_signatures(BufWriter::new(std::fs::File::create(dir.join(&name))?), &r.signatures)?;
            files.push(name);
        }
    }
    w.flush()?;
    if complete {
        write_csv(BufWriter::new(std::fs::File::create(dir.join(SWEEP_CSV))?), records)?;
        files.push(SWEEP_CSV.into());
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub total: usize,
    pub computed: usize,
    pub reused: usize,
    pub failed: usize,
}

impl SweepSummary {
    pub fn exit_code(&self) -> i32 {
        if (self.total - self.failed) as f64 >= MIN_SUCCESS * self.total as f64 {
            0
        } else {
            3
        }
    }
}

/// Runs the grid one `ε` at a time, checkpointing after each, and skips
/// points already present in `dir` from a run of the same config.
pub fn sweep(cfg: &SweepConfig, dir: &Path, workers: Option<usize>) -> Result<SweepSummary> {
    let start = Instant::now();
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let hash = config_hash(cfg)?;
    let previous = match RunManifest::load(dir)? {
        Some(m) if m.config_hash != hash => {
            return Err(CliError::Config(format!(
                "{} holds a sweep of a different config (hash {}); choose another --out",
                dir.display(),
                m.config_hash.get(..12).unwrap_or(&m.config_hash)
            )))
        }
        Some(_) => load_previous(dir)?,
        None => Vec::new(),
    };
    let grid = cfg.grid()?;
    let mut done: BTreeMap<String, SweepRecord> = BTreeMap::new();
    for r in previous {
        if grid.iter().any(|&(e, h)| e == r.eps && h == r.h) {
            done.insert(point_key(r.eps, r.h), r);
        }
    }
    let reused = done.len();
    let mut computed = 0;
    let mut manifest = RunManifest {
        command: "sweep".into(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").into(),
        complete: false,
        files: BTreeMap::new(),
        environment: Environment::current(workers),
        timing: Timing { seconds: 0.0, points_total: grid.len(), points_computed: 0, points_reused: reused },
    };
    let mut eps_values: Vec<f64> = grid.iter().map(|p| p.0).collect();
    eps_values.dedup();
    for eps in eps_values {
        let todo: Vec<(f64, f64)> =
            grid.iter().copied().filter(|&(e, h)| e == eps && !done.contains_key(&point_key(e, h))).collect();
        if todo.is_empty() {
            continue;
        }
        info!("eps {eps}: {} of the heights to compute", todo.len());
        for r in run_points(cfg, &todo, workers)? {
            if r.is_failed() {
                warn!("eps {} h {} failed: {:?}", r.eps, r.h, r.flags);
            }
            done.insert(point_key(r.eps, r.h), r);
        }
        computed += todo.len();
        let mut records = sorted(&done);
        track_by_eps(&mut records);
        manifest.timing.points_computed = computed;
        manifest.timing.seconds = start.elapsed().as_secs_f64();
        let files = persist(dir, &records, false)?;
        manifest.write(dir, &files)?;
    }
    let mut records = sorted(&done);
    track_by_eps(&mut records);
    let files = persist(dir, &records, true)?;
    manifest.complete = true;
    manifest.timing.points_computed = computed;
    manifest.timing.seconds = start.elapsed().as_secs_f64();
    manifest.write(dir, &files)?;
    let failed = records.iter().filter(|r| r.is_failed()).count();
    Ok(SweepSummary { total: grid.len(), computed, reused, failed })
}

fn sorted(done: &BTreeMap<String, SweepRecord>) -> Vec<SweepRecord> {
    let mut v: Vec<SweepRecord> = done.values().cloned().collect();
    v.sort_by(|a, b| a.eps.total_cmp(&b.eps).then(a.h.total_cmp(&b.h)));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Criterion {
    Main1,
    Main2,
    Conv,
    Bounds,
    Tail,
}

/// Part of the first main result to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Main1Mode {
    /// Every first eigenfunction vanishes at the attachment point.
    I,
    /// Antipodal cylinder at `h_ε`.
    Ii,
}

fn write_records_csv(dir: &Path, name: &str, records: &[SweepRecord]) -> Result<()> {
    write_csv(BufWriter::new(std::fs::File::create(dir.join(name))?), records)?;
    Ok(())
}

/// Runs one criterion and writes `verdict_<name>.json` (plus the records
/// behind it) into `dir`.
pub fn verify(run: &RunConfig, criterion: Criterion, mode: Main1Mode, dir: &Path, settings: &Settings) -> Result<Verdict> {
    std::fs::create_dir_all(dir)?;
    let v = &run.verify;
    let verdict = match criterion {
        Criterion::Main1 if mode == Main1Mode::I => verify_main1_vanishing_point(),
        Criterion::Main1 => {
            let (verdict, recs) = main1_experiment(settings, &v.main1.eps)?;
            write_records_csv(dir, "main1.csv", &recs)?;
            verdict
        }
        Criterion::Main2 => {
            let o = main2_experiment(settings, &v.main2.eps, v.main2.window_eps, v.main2.d, v.main2.points)?;
            write_records_csv(dir, "main2_h_star.csv", &o.at_h_star)?;
            write_records_csv(dir, "main2_window.csv", &o.window)?;
            write_json(&dir.join("verdict_mass_ratio.json"), &o.mass_ratio)?;
            println!("{}", o.mass_ratio.summary());
            o.main2
        }
        Criterion::Conv => {
            let (verdict, recs) = conv_experiment(settings, &v.conv.eps, v.conv.h)?;
            write_records_csv(dir, "conv.csv", &recs)?;
            verdict
        }
        Criterion::Bounds => {
            let (_, recs) = conv_experiment(settings, &v.conv.eps, v.conv.h)?;
            write_records_csv(dir, "bounds.csv", &recs)?;
            bounds_experiment(&recs)?
        }
        Criterion::Tail => localization(settings, v.tail.eps, v.tail.k, v.tail.random)?,
    };
    write_json(&dir.join(format!("verdict_{}.json", verdict.criterion)), &verdict)?;
    Ok(verdict)
}

/// The plot scripts written by [`plot`].
pub const PLOT_SCRIPTS: [&str; 3] = ["branches.gp", "mass.gp", "residual.gp"];

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.10e}")
    } else {
        "NaN".into()
    }
}

/// Gnuplot scripts and their data files from a sweep CSV: eigenvalue
/// branches against `h`, the background mass share `c_ε` against `h`, and
/// the residual of λ₁ against the prediction on log-log axes.
pub fn plot(csv: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let file = std::fs::File::open(csv).map_err(|e| CliError::Input(format!("{}: {e}", csv.display())))?;
    let rows = read_csv(BufReader::new(file)).map_err(|e| CliError::Input(format!("{}: {e}", csv.display())))?;
    let rows: Vec<CsvRow> = rows.into_iter().filter(|r| !r.is_failed()).collect();
    if rows.is_empty() {
        return Err(CliError::Input(format!("{} has no usable rows", csv.display())));
    }
    std::fs::create_dir_all(dir)?;
    let mut eps_values: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    eps_values.sort_by(f64::total_cmp);
    eps_values.dedup();
    let block = |e: f64| rows.iter().filter(move |r| r.eps == e);

    // gnuplot `index` selects blank-line separated blocks, one per ε.
    let mut branches = String::from("# h lambda0 .. lambda6\n");
    let mut mass = String::from("# h c_eps=mass_sigma^2 predicted=f^2/(1+f^2)\n");
    for &e in &eps_values {
        branches += &format!("# eps {e}\n");
        mass += &format!("# eps {e}\n");
        for r in block(e) {
            let ls: Vec<String> = r.lambdas.iter().map(|x| num(*x)).collect();
            branches += &format!("{} {}\n", num(r.h), ls.join(" "));
            let f2 = r.f_eps * r.f_eps;
            mass += &format!("{} {} {}\n", num(r.h), num(r.mass_sigma * r.mass_sigma), num(f2 / (1.0 + f2)));
        }
        branches += "\n\n";
        mass += "\n\n";
    }
    // One point per ε at the middle height of its block, h* for a critical-window grid.
    let mut residual = String::from("# eps |lambda1 - predicted| eps*log(1/eps)\n");
    for &e in &eps_values {
        let usable: Vec<&CsvRow> = block(e).filter(|r| r.predicted_lambda1.is_finite()).collect();
        if let Some(r) = usable.get(usable.len() / 2) {
            residual +=
                &format!("{} {} {}\n", num(e), num((r.lambdas[1] - r.predicted_lambda1).abs()), num(e * (1.0 / e).ln()));
        }
    }
    let titles: Vec<String> = eps_values.iter().map(|e| format!("eps = {e}")).collect();
    let per_block = |file: &str, using: &str, with: &str| -> String {
        titles
            .iter()
            .enumerate()
            .map(|(i, t)| format!("'{file}' index {i} using {using} with {with} title '{t}'"))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };
    let mut lambda_lines = Vec::new();
    for l in 1..sgl_lab::record::CSV_LAMBDAS {
        for (i, t) in titles.iter().enumerate() {
            lambda_lines.push(format!("'branches.dat' index {i} using 1:{} with linespoints title 'l={l}, {t}'", l + 2));
        }
    }
    let scripts = [
        (
            "branches.gp",
            format!(
                "set xlabel 'h'\nset ylabel 'lambda'\nset key outside\nplot {}\npause -1\n",
                lambda_lines.join(", \\\n     ")
            ),
        ),
        (
            "mass.gp",
            format!(
                "set xlabel 'h'\nset ylabel 'c_eps'\nset yrange [0:1]\nplot {}, \\\n     {}\npause -1\n",
                per_block("mass.dat", "1:2", "linespoints"),
                per_block("mass.dat", "1:3", "lines dashtype 2")
            ),
        ),
        (
            "residual.gp",
            "set logscale xy\nset xlabel 'eps'\nset ylabel 'residual'\n\
             plot 'residual.dat' using 1:2 with linespoints title '|lambda1 - predicted|', \\\n     \
             'residual.dat' using 1:3 with lines title 'eps log(1/eps)'\npause -1\n"
                .to_string(),
        ),
    ];
    let mut written = Vec::new();
    for (name, text) in [("branches.dat", branches), ("mass.dat", mass), ("residual.dat", residual)] {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
    }
    for (name, text) in scripts {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}

/// Problems found when re-hashing the files listed in `dir`'s manifest.
pub fn check(dir: &Path) -> Result<Vec<String>> {
    let m = RunManifest::load(dir)?.ok_or_else(|| CliError::Input(format!("no manifest in {}", dir.display())))?;
    Ok(m.mismatches(dir))
}
