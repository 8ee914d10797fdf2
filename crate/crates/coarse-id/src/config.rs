//! Versioned JSON experiment configuration.

use anyhow::{bail, ensure, Context, Result};
use coarse_id_core::linalg::Mat;
use coarse_id_core::lti::{CostWeights, LinearSystem, NoiseSpec};
use coarse_id_core::systems::{laplacian_example, laplacian_example_cost};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

/// Name of the built-in benchmark system.
pub const LAPLACIAN_EXAMPLE: &str = "laplacian-example";

/// Row-major dense matrix as it appears in JSON.
pub type Rows = Vec<Vec<f64>>;

pub fn mat_from_rows(rows: &Rows, what: &str) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    ensure!(r > 0 && c > 0, "{what} is empty");
    ensure!(rows.iter().all(|row| row.len() == c), "{what} has ragged rows");
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_from_mat(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitSystem {
    pub a: Rows,
    pub b: Rows,
    pub q: Rows,
    pub r: Rows,
}

/// Either `"laplacian-example"` or explicit matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Named(String),
    Explicit(ExplicitSystem),
}

impl SystemSpec {
    pub fn build(&self) -> Result<(LinearSystem, CostWeights)> {
        match self {
            SystemSpec::Named(name) if name == LAPLACIAN_EXAMPLE => Ok((laplacian_example(), laplacian_example_cost())),
            SystemSpec::Named(name) => bail!("unknown system {name:?}; expected {LAPLACIAN_EXAMPLE:?} or explicit matrices"),
            SystemSpec::Explicit(s) => {
                let sys = LinearSystem::new(mat_from_rows(&s.a, "A")?, mat_from_rows(&s.b, "B")?)?;
                let cost = CostWeights::new(mat_from_rows(&s.q, "Q")?, mat_from_rows(&s.r, "R")?)?;
                cost.check_dims(&sys)?;
                Ok((sys, cost))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_u: f64,
    pub sigma_w: f64,
}

impl NoiseConfig {
    pub fn spec(&self) -> Result<NoiseSpec> {
        Ok(NoiseSpec::new(self.sigma_u, self.sigma_w)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    /// Synthetic trials `M`.
    pub trials: usize,
    pub delta: f64,
}

/// How the radii handed to the robust methods are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsSource {
    Bootstrap,
    Oracle,
    Theory,
    DataDependent,
}

impl EpsSource {
    pub fn label(self) -> &'static str {
        match self {
            EpsSource::Bootstrap => "bootstrap",
            EpsSource::Oracle => "oracle",
            EpsSource::Theory => "theory-independent",
            EpsSource::DataDependent => "data-dependent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodSpec {
    /// LQR on the estimate, certainty equivalence.
    Nominal,
    Cl {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixed_gamma: Option<f64>,
    },
    Fir {
        horizon: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixed_gamma: Option<f64>,
    },
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Nominal => write!(f, "nominal"),
            MethodSpec::Cl { fixed_gamma: None } => write!(f, "cl"),
            MethodSpec::Cl { fixed_gamma: Some(g) } => write!(f, "cl-fixed{g}"),
            MethodSpec::Fir { horizon, fixed_gamma: None } => write!(f, "fir{horizon}"),
            MethodSpec::Fir { horizon, fixed_gamma: Some(g) } => write!(f, "fir{horizon}-fixed{g}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub system: SystemSpec,
    pub noise: NoiseConfig,
    /// Grid of rollout counts `N`.
    pub rollouts: Vec<usize>,
    /// Rollout length `T`.
    pub horizon: usize,
    pub bootstrap: BootstrapSettings,
    pub eps_source: EpsSource,
    pub methods: Vec<MethodSpec>,
    /// Trials per `N`.
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// The example-system protocol with the given grid and methods.
    pub fn laplacian(rollouts: Vec<usize>, methods: Vec<MethodSpec>, trials: usize, seed: u64, output_dir: PathBuf) -> Self {
        Self {
            version: CONFIG_VERSION,
            system: SystemSpec::Named(LAPLACIAN_EXAMPLE.to_string()),
            noise: NoiseConfig { sigma_u: 1.0, sigma_w: 1.0 },
            rollouts,
            horizon: 6,
            bootstrap: BootstrapSettings { trials: 200, delta: 0.05 },
            eps_source: EpsSource::Bootstrap,
            methods,
            trials,
            seed,
            output_dir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.version == CONFIG_VERSION, "config version {} is not supported (expected {CONFIG_VERSION})", self.version);
        ensure!(!self.rollouts.is_empty(), "rollout grid is empty");
        ensure!(self.rollouts.iter().all(|&n| n > 0), "rollout counts must be positive");
        ensure!(self.horizon > 0, "rollout length must be positive");
        ensure!(self.trials > 0, "trials must be positive");
        ensure!(!self.methods.is_empty(), "method list is empty");
        ensure!(self.bootstrap.trials > 0, "bootstrap trials must be positive");
        ensure!(self.bootstrap.delta > 0.0 && self.bootstrap.delta < 1.0, "bootstrap delta must lie in (0, 1)");
        for m in &self.methods {
            match *m {
                MethodSpec::Fir { horizon: 0, .. } => bail!("FIR horizon must be positive"),
                MethodSpec::Cl { fixed_gamma: Some(g) } | MethodSpec::Fir { fixed_gamma: Some(g), .. } if !(g > 0.0 && g < 1.0) => {
                    bail!("fixed gamma must lie in (0, 1), got {g}")
                }
                _ => {}
            }
        }
        self.noise.spec()?;
        self.system.build()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
