use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sgl_core::analytic::PieceKind;
use sgl_core::Prediction64;

use crate::error::{LabError, Result};

/// JSON has no NaN: non-finite values are written as `null` and read back as NaN.
mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(xs.len()))?;
            for x in xs {
                seq.serialize_element(&x.is_finite().then_some(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
        }
    }
}

/// Eigenvalue columns written to CSV.
pub const CSV_LAMBDAS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", content = "detail", rename_all = "snake_case")]
pub enum Flag {
    /// The grid point could not be computed.
    Failed(String),
    /// The λ₁ mode has no overlap ≥ 0.5 with the neighbouring record.
    BranchAmbiguous,
    /// `f_ε` or the predicted λ₁ could not be evaluated.
    NoPrediction(String),
    /// `β` needs a cross cap at a point with `φ₀(x₀) > 0`.
    NoBeta(String),
    /// `n` is below the 10⁻³ floor.
    NBelowFloor,
}

impl Flag {
    pub fn code(&self) -> String {
        match self {
            Flag::Failed(_) => "FAILED".into(),
            Flag::BranchAmbiguous => "BRANCH_AMBIGUOUS".into(),
            Flag::NoPrediction(_) => "NO_PREDICTION".into(),
            Flag::NoBeta(_) => "NO_BETA".into(),
            Flag::NBelowFloor => "N_BELOW_FLOOR".into(),
        }
    }

    fn from_code(s: &str) -> Result<Self> {
        Ok(match s {
            "FAILED" => Flag::Failed(String::new()),
            "BRANCH_AMBIGUOUS" => Flag::BranchAmbiguous,
            "NO_PREDICTION" => Flag::NoPrediction(String::new()),
            "NO_BETA" => Flag::NoBeta(String::new()),
            "N_BELOW_FLOOR" => Flag::NBelowFloor,
            other => return Err(LabError::Config(format!("unknown flag {other:?}"))),
        })
    }
}

/// Radial profile of one eigenfunction around a pole.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsSummary {
    /// `max_r sup_{ring}|u − ū| / log(1/r)`.
    #[serde(with = "nan_null")]
    pub sup_const: f64,
    /// Max over rings of the ring constant divided by its median.
    #[serde(with = "nan_null")]
    pub sup_spread: f64,
    /// `max_r sup_{ring}|∇u| · r` over `r ≥ 2ε^k`.
    #[serde(with = "nan_null")]
    pub grad_const: f64,
    #[serde(with = "nan_null")]
    pub grad_spread: f64,
    /// `∫_{∂B}|u|² / (ε^k log(1/ε^k) ‖u‖²_{W^{1,2}(Σ∖B)})`.
    #[serde(with = "nan_null")]
    pub trace_ratio: f64,
}

/// Everything measured at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub h: f64,
    pub k: f64,
    pub kind: PieceKind,
    /// Eigenvalues on the base mesh, ascending.
    #[serde(with = "nan_null::vec")]
    pub lambdas: Vec<f64>,
    /// Eigenvalues extrapolated from one extra refinement; equal to
    /// `lambdas` when extrapolation is off.
    #[serde(with = "nan_null::vec")]
    pub lambdas_extrapolated: Vec<f64>,
    /// `λ_base − λ_exact` estimate per mode (NaN without extrapolation).
    #[serde(with = "nan_null::vec")]
    pub disc_errs: Vec<f64>,
    /// Branch id per mode; `None` where the overlap was ambiguous.
    pub branches: Vec<Option<usize>>,
    /// `⟨u, ψ⟩` on the piece for the λ₁ mode, after the sign flip.
    #[serde(with = "nan_null")]
    pub n: f64,
    /// `⟨u, φ₀⟩` on `Σ∖B_{2ε^k}`.
    #[serde(with = "nan_null")]
    pub m_coef: f64,
    #[serde(with = "nan_null")]
    pub beta: f64,
    #[serde(with = "nan_null")]
    pub mass_sigma: f64,
    #[serde(with = "nan_null")]
    pub mass_piece: f64,
    /// Same quantities for every mode, each sign-normalized.
    #[serde(with = "nan_null::vec")]
    pub mode_n: Vec<f64>,
    #[serde(with = "nan_null::vec")]
    pub mode_m: Vec<f64>,
    #[serde(with = "nan_null::vec")]
    pub mode_mass_piece: Vec<f64>,
    /// Mode with the largest piece mass among `1..`.
    pub piece_mode: usize,
    /// `∫_M |u − n ψ|²` for `piece_mode`.
    #[serde(with = "nan_null")]
    pub decomp_residual: f64,
    #[serde(with = "nan_null")]
    pub background_lambda1: f64,
    #[serde(with = "nan_null")]
    pub eval0: f64,
    /// Analytic area of the glued surface (background area 1).
    #[serde(with = "nan_null")]
    pub area: f64,
    pub prediction: Option<Prediction64>,
    pub bounds: Option<BoundsSummary>,
    pub flags: Vec<Flag>,
    #[serde(with = "nan_null")]
    pub seconds: f64,
    /// Mesh-independent fingerprints of the modes for branch tracking.
    #[serde(skip)]
    pub signatures: Vec<Vec<f64>>,
}

impl SweepRecord {
    pub fn failed(eps: f64, h: f64, k: f64, kind: PieceKind, reason: String) -> Self {
        SweepRecord {
            eps,
            h,
            k,
            kind,
            lambdas: Vec::new(),
            lambdas_extrapolated: Vec::new(),
            disc_errs: Vec::new(),
            branches: Vec::new(),
            n: f64::NAN,
            m_coef: f64::NAN,
            beta: f64::NAN,
            mass_sigma: f64::NAN,
            mass_piece: f64::NAN,
            mode_n: Vec::new(),
            mode_m: Vec::new(),
            mode_mass_piece: Vec::new(),
            piece_mode: 0,
            decomp_residual: f64::NAN,
            background_lambda1: f64::NAN,
            eval0: f64::NAN,
            area: f64::NAN,
            prediction: None,
            bounds: None,
            flags: vec![Flag::Failed(reason)],
            seconds: 0.0,
            signatures: Vec::new(),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, Flag::Failed(_)))
    }

    /// Failed or branch-ambiguous points are excluded from verdicts.
    pub fn is_flagged(&self) -> bool {
        self.is_failed() || self.flags.contains(&Flag::BranchAmbiguous)
    }

    pub fn flag(&mut self, f: Flag) {
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }

    pub fn lambda1(&self) -> f64 {
        self.lambdas.get(1).copied().unwrap_or(f64::NAN)
    }

    /// λ₁ after extrapolation when available.
    pub fn lambda1_best(&self) -> f64 {
        self.lambdas_extrapolated.get(1).copied().unwrap_or(f64::NAN)
    }

    pub fn disc_err(&self) -> f64 {
        self.disc_errs.get(1).copied().unwrap_or(f64::NAN)
    }

    pub fn branch_label(&self) -> String {
        match self.branches.get(1) {
            Some(Some(b)) => format!("b{b}"),
            Some(None) => "?".into(),
            None => String::new(),
        }
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["eps", "h", "k", "kind"].iter().map(|s| s.to_string()).collect();
        h.extend((0..CSV_LAMBDAS).map(|l| format!("lambda{l}")));
        h.extend(
            [
                "branch",
                "n",
                "m_coef",
                "beta",
                "mass_sigma",
                "mass_piece",
                "predicted_lambda1",
                "f_eps",
                "disc_err",
                "flags",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let num = |x: f64| if x.is_finite() { format!("{x:.12e}") } else { "NaN".into() };
        let mut r = vec![num(self.eps), num(self.h), num(self.k), self.kind.name().to_string()];
        r.extend((0..CSV_LAMBDAS).map(|l| num(self.lambdas.get(l).copied().unwrap_or(f64::NAN))));
        r.push(self.branch_label());
        for x in [self.n, self.m_coef, self.beta, self.mass_sigma, self.mass_piece] {
            r.push(num(x));
        }
        let (pl, fe) = self
            .prediction
            .map(|p| (p.lambda1_predicted, p.f_eps))
            .unwrap_or((f64::NAN, f64::NAN));
        r.push(num(pl));
        r.push(num(fe));
        r.push(num(self.disc_err()));
        r.push(self.flags.iter().map(Flag::code).collect::<Vec<_>>().join("|"));
        r
    }
}

/// One parsed CSV row; the columns only, not the full record.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub eps: f64,
    pub h: f64,
    pub k: f64,
    pub kind: PieceKind,
    pub lambdas: Vec<f64>,
    pub branch: String,
    pub n: f64,
    pub m_coef: f64,
    pub beta: f64,
    pub mass_sigma: f64,
    pub mass_piece: f64,
    pub predicted_lambda1: f64,
    pub f_eps: f64,
    pub disc_err: f64,
    pub flags: Vec<Flag>,
}

impl CsvRow {
    pub fn is_failed(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, Flag::Failed(_)))
    }
}

pub fn write_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SweepRecord::csv_header())?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != SweepRecord::csv_header() {
        return Err(LabError::Config(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(LabError::Config(format!("row {} has {} fields, expected {}", i + 1, rec.len(), header.len())));
        }
        let f = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|e| LabError::Config(format!("row {}, column {}: {e}", i + 1, header[j])))
        };
        let kind: PieceKind = rec[3].parse()?;
        let base = 4 + CSV_LAMBDAS;
        let flags = if rec[base + 9].is_empty() {
            Vec::new()
        } else {
            rec[base + 9].split('|').map(Flag::from_code).collect::<Result<_>>()?
        };
        rows.push(CsvRow {
            eps: f(0)?,
            h: f(1)?,
            k: f(2)?,
            kind,
            lambdas: (4..base).map(f).collect::<Result<_>>()?,
            branch: rec[base].to_string(),
            n: f(base + 1)?,
            m_coef: f(base + 2)?,
            beta: f(base + 3)?,
            mass_sigma: f(base + 4)?,
            mass_piece: f(base + 5)?,
            predicted_lambda1: f(base + 6)?,
            f_eps: f(base + 7)?,
            disc_err: f(base + 8)?,
            flags,
        });
    }
    Ok(rows)
}

/// Branch signatures as little-endian binary: mode count and length as
/// `u64`, then the values mode by mode.
pub fn write_signatures<W: Write>(mut out: W, sigs: &[Vec<f64>]) -> Result<()> {
    let len = sigs.first().map_or(0, Vec::len);
    if sigs.iter().any(|s| s.len() != len) {
        return Err(LabError::Config("signatures of one record must share a length".into()));
    }
    out.write_all(&(sigs.len() as u64).to_le_bytes())?;
    out.write_all(&(len as u64).to_le_bytes())?;
    for x in sigs.iter().flatten() {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_signatures<R: Read>(mut input: R) -> Result<Vec<Vec<f64>>> {
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> Result<[u8; 8]> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let modes = u64::from_le_bytes(next(&mut input)?) as usize;
    let len = u64::from_le_bytes(next(&mut input)?) as usize;
    if modes.saturating_mul(len) > 1 << 28 {
        return Err(LabError::Config(format!("implausible signature size {modes} x {len}")));
    }
    (0..modes)
        .map(|_| (0..len).map(|_| Ok(f64::from_le_bytes(next(&mut input)?))).collect())
        .collect()
}
