//! Experiment configuration, read from TOML.
//!
//! ```toml
//! version = 1
//! seed = 7
//! runs = 50
//! t = 200
//! algorithms = ["dbf", "dbsa", "sdbsa"]
//! n_particles = [100]
//! # m = 100               # backward passes; defaults to the particle count
//! n_i = 1
//! weight_reuse = true
//! # divergence_threshold = 1.0   # defaults per model
//! # out_dir = "results"
//!
//! [model]
//! kind = "ssm1"            # ssm1 | ssm2 | linear
//! # any model parameter may follow, e.g. sigma_ep = 0.02
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complexity::Algorithm;
use crate::error::{Error, Result};
use crate::forward::{PseudoScope, Resampling};
use crate::model::{ClgModel, LinearClg, Ssm1, Ssm1Params, Ssm2, Ssm2Params};

pub const CONFIG_VERSION: u32 = 1;

/// Parameters of the constant-velocity affine model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    /// spatial dimension (state has twice this size)
    pub dim: usize,
    pub rho: f64,
    pub ts: f64,
    /// velocity noise variance
    pub q_v: f64,
    /// position noise variance
    pub q_p: f64,
    /// velocity measurement noise variance
    pub r_v: f64,
    /// position measurement noise variance
    pub r_p: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self { dim: 2, rho: 0.95, ts: 0.5, q_v: 0.05, q_p: 0.02, r_v: 0.2, r_p: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Ssm1(Ssm1Params),
    Ssm2(Ssm2Params),
    Linear(LinearParams),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Ssm1(_) => "ssm1",
            ModelSpec::Ssm2(_) => "ssm2",
            ModelSpec::Linear(_) => "linear",
        }
    }

    /// Default-parameter model by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ssm1" => Ok(ModelSpec::Ssm1(Ssm1Params::default())),
            "ssm2" => Ok(ModelSpec::Ssm2(Ssm2Params::default())),
            "linear" => Ok(ModelSpec::Linear(LinearParams::default())),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }

    /// Builds the model for one Monte Carlo run; only the target placement of
    /// the multi-target model depends on `placement_seed`.
    pub fn build(&self, placement_seed: u64) -> Result<Box<dyn ClgModel>> {
        Ok(match self {
            ModelSpec::Ssm1(p) => Box::new(Ssm1::new(p.clone())?),
            ModelSpec::Ssm2(p) => Box::new(Ssm2::new(p.clone(), placement_seed)?),
            ModelSpec::Linear(p) => {
                let m = LinearClg::constant_velocity(p.dim, p.rho, p.ts, p.q_v, p.q_p, p.r_v, p.r_p);
                m.validate()?;
                Box::new(m)
            }
        })
    }

    pub fn default_t(&self) -> usize {
        match self {
            ModelSpec::Ssm1(_) => crate::model::SSM1_DEFAULT_T,
            ModelSpec::Ssm2(_) => crate::model::SSM2_DEFAULT_T,
            ModelSpec::Linear(_) => 50,
        }
    }

    /// Size of the position sub-blocks of `x_N` whose error norm is checked
    /// for divergence.
    pub fn position_block(&self) -> usize {
        match self {
            ModelSpec::Ssm1(_) => 2,
            ModelSpec::Ssm2(_) => 2,
            ModelSpec::Linear(p) => p.dim,
        }
    }

    /// Default divergence threshold on the position error norm: a tenth of
    /// the arena side for the multi-target model, 50 measurement standard
    /// deviations otherwise.
    pub fn default_divergence_threshold(&self) -> f64 {
        match self {
            ModelSpec::Ssm1(p) => 50.0 * p.sigma_ep,
            ModelSpec::Ssm2(p) => 0.1 * p.side,
            ModelSpec::Linear(p) => 50.0 * p.r_p.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub runs: usize,
    #[serde(default)]
    pub t: Option<usize>,
    pub algorithms: Vec<Algorithm>,
    pub n_particles: Vec<usize>,
    /// backward passes; `None` means one per particle
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "one")]
    pub n_i: usize,
    #[serde(default = "yes")]
    pub weight_reuse: bool,
    #[serde(default)]
    pub divergence_threshold: Option<f64>,
    #[serde(default = "joint")]
    pub pseudo: PseudoScope,
    #[serde(default = "always")]
    pub resampling: Resampling,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub model: ModelSpec,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn joint() -> PseudoScope {
    PseudoScope::Joint
}
fn always() -> Resampling {
    Resampling::Always
}

/// Algorithms the harness can run.
pub const RUNNABLE: [Algorithm; 7] = [
    Algorithm::Dbf,
    Algorithm::Sdbf,
    Algorithm::Mpf,
    Algorithm::Dbsa,
    Algorithm::Sdbsa,
    Algorithm::Ddbsa,
    Algorithm::Sddbsa,
];

impl ExperimentConfig {
    /// Minimal configuration with defaults for everything optional.
    pub fn new(model: ModelSpec, algorithms: Vec<Algorithm>, n_particles: Vec<usize>, runs: usize, seed: u64) -> Self {
        Self {
            version: CONFIG_VERSION,
            seed,
            runs,
            t: None,
            algorithms,
            n_particles,
            m: None,
            n_i: 1,
            weight_reuse: true,
            divergence_threshold: None,
            pseudo: PseudoScope::Joint,
            resampling: Resampling::Always,
            out_dir: None,
            model,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms listed".into());
        }
        if let Some(a) = self.algorithms.iter().find(|a| !RUNNABLE.contains(a)) {
            return bad(format!("algorithm '{a}' is not implemented by the harness"));
        }
        if self.n_particles.is_empty() || self.n_particles.contains(&0) {
            return bad("n_particles must list positive particle counts".into());
        }
        if self.m == Some(0) || self.n_i == 0 || self.t == Some(0) {
            return bad("m, n_i and t must be at least 1".into());
        }
        if let Some(th) = self.divergence_threshold {
            if !(th > 0.0) {
                return bad("divergence_threshold must be positive".into());
            }
        }
        if let Resampling::Ess(f) = self.resampling {
            if !(0.0..=1.0).contains(&f) {
                return bad("ESS fraction must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.t.unwrap_or_else(|| self.model.default_t())
    }

    pub fn threshold(&self) -> f64 {
        self.divergence_threshold.unwrap_or_else(|| self.model.default_divergence_threshold())
    }

    pub fn passes(&self, n_particles: usize) -> usize {
        self.m.unwrap_or(n_particles)
    }
}
