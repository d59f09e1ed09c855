use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgl_lab::config::{HGrid, SweepConfig};
use sgl_lab::experiments::{Settings, GENERIC_POINT};

use crate::error::{CliError, Result};

/// Closed surface the pieces are attached to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Background {
    /// Unit flat torus `ℝ²/ℤ²`.
    #[default]
    FlatTorus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Main2Params {
    /// Values of `ε` at `h*`.
    pub eps: Vec<f64>,
    /// `ε` of the critical-window scan.
    pub window_eps: f64,
    pub d: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvParams {
    pub eps: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Main1Params {
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailParams {
    pub eps: f64,
    pub k: f64,
    pub random: usize,
}

/// Parameters of the `verify` experiments. `bounds` reuses the `conv` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub main2: Main2Params,
    pub conv: ConvParams,
    pub main1: Main1Params,
    pub tail: TailParams,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            main2: Main2Params { eps: vec![0.04, 0.02, 0.01, 0.005], window_eps: 0.01, d: 2.0, points: 21 },
            conv: ConvParams { eps: vec![0.04, 0.02, 0.01], h: 0.45 },
            main1: Main1Params { eps: vec![0.02, 0.01] },
            tail: TailParams { eps: 0.01, k: 2.0, random: 100 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub background: Background,
    /// Attachment and `(ε, h)` grid; absent for background-only runs.
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Cross cap at the generic point over the critical window, 4 × 21 points.
    pub fn torus_reference() -> Self {
        RunConfig {
            name: "torus-reference".into(),
            background: Background::FlatTorus,
            sweep: Some(SweepConfig::crosscap(
                GENERIC_POINT,
                vec![0.04, 0.02, 0.01, 0.005],
                HGrid::CriticalWindow { d: 2.0, points: 21 },
            )),
            verify: VerifyConfig::default(),
            out: None,
        }
    }

    pub fn sweep(&self) -> Result<&SweepConfig> {
        self.sweep.as_ref().ok_or_else(|| CliError::Config("missing field `sweep`".into()))
    }

    /// Mesh and solver settings of the sweep, or the defaults without one.
    pub fn settings(&self, workers: Option<usize>) -> Settings {
        let mut s = Settings { workers, ..Settings::default() };
        if let Some(c) = &self.sweep {
            s.mesh = c.mesh;
            s.refine = c.refine;
            s.solver = c.solver;
            s.seed = c.seed;
        }
        s
    }

    /// Applies `--seed` and `--refine`.
    pub fn override_with(&mut self, seed: Option<u64>, refine: Option<u32>) {
        if let Some(c) = self.sweep.as_mut() {
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(r) = refine {
                c.refine = r;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.sweep {
            c.validate()?;
        }
        let v = &self.verify;
        if v.main2.eps.len() < 3 || v.conv.eps.len() < 3 || v.main1.eps.len() < 2 {
            return Err(CliError::Config("verify needs 3 values of eps for main2 and conv, 2 for main1".into()));
        }
        Ok(())
    }
}

/// Parses JSON with `//` and `/* */` comments.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut plain = String::new();
    json_comments::StripComments::new(text.as_bytes()).read_to_string(&mut plain)?;
    let cfg: RunConfig = serde_json::from_str(&plain).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
