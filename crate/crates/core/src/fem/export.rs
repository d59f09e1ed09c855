use std::io::Write;
use std::path::Path;

use serde_json::json;

use crate::{Error, Real, Result};

use super::Spectrum;

/// `{mesh_fingerprint, eigenvalues, residuals, stats}`.
pub fn spectrum_json<T: Real>(s: &Spectrum<T>) -> serde_json::Value {
    json!({
        "mesh_fingerprint": s.mesh_fingerprint,
        "eigenvalues": s.pairs.iter().map(|p| p.value.to_f64_lossy()).collect::<Vec<_>>(),
        "residuals": s.pairs.iter().map(|p| p.residual.to_f64_lossy()).collect::<Vec<_>>(),
        "stats": s.stats,
    })
}

/// Eigenvectors as consecutive little-endian `f64` arrays in `path`, with a
/// JSON sidecar `path.json` giving the count, length and DOF order.
pub fn write_vectors<T: Real>(s: &Spectrum<T>, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for p in &s.pairs {
        for x in &p.vector {
            f.write_all(&x.to_f64_lossy().to_le_bytes()).map_err(io)?;
        }
    }
    f.flush().map_err(io)?;
    let side = json!({
        "count": s.pairs.len(),
        "length": s.pairs.first().map(|p| p.vector.len()).unwrap_or(0),
        "dtype": "f64-le",
        "dof_order": "global DOF index, vectors stored consecutively in eigenvalue order",
        "mesh_fingerprint": s.mesh_fingerprint,
    });
    let mut side_path = path.as_os_str().to_owned();
    side_path.push(".json");
    std::fs::write(&side_path, serde_json::to_string_pretty(&side).expect("json")).map_err(io)?;
    Ok(())
}
