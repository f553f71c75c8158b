//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::env::{sample_environment, TaskEnvironment};
use crate::error::{Error, Result};
use crate::metrics::linalg::sym_extreme_eigs;
use crate::model::{Algo, HyperParams, InitScheme, Mode};
use crate::rng::NormalStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub hp: HpConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub head_mean: HeadMean,
    #[serde(default = "one")]
    pub head_scale: f64,
    #[serde(default)]
    pub noise_std: f64,
}

/// Mean of the task-head distribution: a scalar fills all `k` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HeadMean {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Default for HeadMean {
    fn default() -> Self {
        HeadMean::Scalar(0.0)
    }
}

impl HeadMean {
    pub fn to_vector(&self, k: usize) -> DVector<f64> {
        match self {
            HeadMean::Scalar(v) => DVector::from_element(k, *v),
            HeadMean::Vector(v) => DVector::from_column_slice(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpConfig {
    pub algo: Algo,
    #[serde(default)]
    pub mode: Mode,
    pub alpha: AlphaSpec,
    pub beta: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_out: Option<usize>,
    pub iters: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub fixed_batch: bool,
}

/// Inner step size, either literal or derived from the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Rule(AlphaRule),
}

/// `alpha = constant * k^(-2/3) / L * T^(-1/4)`, with `L` the square root of
/// the largest eigenvalue of the head second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaRule {
    pub rule: AlphaRuleKind,
    #[serde(default = "quarter")]
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlphaRuleKind {
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemeName {
    #[default]
    Spec,
    Random,
    NearTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub scheme: SchemeName,
    /// `[lo, hi]` band for the initial distance; `NEAR_TRUTH` only.
    #[serde(default = "default_band")]
    pub target: [f64; 2],
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeName::Spec,
            target: default_band(),
        }
    }
}

impl InitConfig {
    pub fn scheme(&self) -> InitScheme {
        match self.scheme {
            SchemeName::Spec => InitScheme::Spec,
            SchemeName::Random => InitScheme::Random,
            SchemeName::NearTruth => InitScheme::NearTruth {
                lo: self.target[0],
                hi: self.target[1],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            master_seed: 0,
            record_every: default_record_every(),
            output_dir: default_output_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default)]
    pub gradcheck: bool,
    #[serde(default)]
    pub hypcheck: bool,
    #[serde(rename = "hyp_constant_C_A1", default = "one")]
    pub hyp_constant_c_a1: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            gradcheck: false,
            hypcheck: false,
            hyp_constant_c_a1: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn quarter() -> f64 {
    0.25
}
fn default_band() -> [f64; 2] {
    [0.65, 0.70]
}
fn default_trials() -> usize {
    5
}
fn default_record_every() -> usize {
    10
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn is_false(b: &bool) -> bool {
    !*b
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, "must be a positive finite number"))
    }
}

fn nonnegative(field: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, "must be a nonnegative finite number"))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let env = &self.env;
        if env.k < 1 {
            return Err(Error::validation("env.k", "must be >= 1"));
        }
        if env.d <= env.k {
            return Err(Error::validation("env.d", "must exceed env.k"));
        }
        match &env.head_mean {
            HeadMean::Scalar(v) if !v.is_finite() => {
                return Err(Error::validation("env.head_mean", "must be finite"))
            }
            HeadMean::Vector(v) if v.len() != env.k => {
                return Err(Error::validation(
                    "env.head_mean",
                    "vector length must equal env.k",
                ))
            }
            HeadMean::Vector(v) if v.iter().any(|x| !x.is_finite()) => {
                return Err(Error::validation("env.head_mean", "must be finite"))
            }
            _ => {}
        }
        nonnegative("env.head_scale", env.head_scale)?;
        nonnegative("env.noise_std", env.noise_std)?;

        let hp = &self.hp;
        match &hp.alpha {
            AlphaSpec::Value(a) => positive("alpha", *a)?,
            AlphaSpec::Rule(r) => positive("alpha.constant", r.constant)?,
        }
        positive("beta", hp.beta)?;
        if hp.n < 1 {
            return Err(Error::validation("n", "must be >= 1"));
        }
        if hp.mode == Mode::Finite {
            match hp.m_in {
                Some(m) if m >= 1 => {}
                _ => return Err(Error::validation("m_in", "must be >= 1 in FINITE mode")),
            }
            match hp.m_out {
                Some(m) if m >= 1 => {}
                _ => return Err(Error::validation("m_out", "must be >= 1 in FINITE mode")),
            }
        }

        if self.init.scheme == SchemeName::NearTruth {
            let [lo, hi] = self.init.target;
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::validation("init.target", "need 0 <= lo <= hi <= 1"));
            }
        }

        if self.run.trials < 1 {
            return Err(Error::validation("run.trials", "must be >= 1"));
        }
        if self.run.record_every < 1 {
            return Err(Error::validation("run.record_every", "must be >= 1"));
        }
        positive("checks.hyp_constant_C_A1", self.checks.hyp_constant_c_a1)
    }

    /// Head-distribution parameters as a vector mean.
    pub fn head_mean(&self) -> DVector<f64> {
        self.env.head_mean.to_vector(self.env.k)
    }

    /// Inner step size after resolving any horizon rule.
    pub fn alpha(&self) -> f64 {
        match &self.hp.alpha {
            AlphaSpec::Value(a) => *a,
            AlphaSpec::Rule(r) => {
                let mean = self.head_mean();
                let second = &mean * mean.transpose()
                    + nalgebra::DMatrix::identity(self.env.k, self.env.k) * self.env.head_scale.powi(2);
                let l = sym_extreme_eigs(&second).1.sqrt();
                let k = self.env.k as f64;
                let t = (self.hp.iters.max(1)) as f64;
                r.constant * k.powf(-2.0 / 3.0) / l * t.powf(-0.25)
            }
        }
    }

    pub fn hyper_params(&self) -> HyperParams {
        let hp = &self.hp;
        HyperParams {
            algo: hp.algo,
            mode: hp.mode,
            alpha: self.alpha(),
            beta: hp.beta,
            n: hp.n,
            m_in: hp.m_in.unwrap_or(1),
            m_out: hp.m_out.unwrap_or(1),
            iters: hp.iters,
            fixed_batch: hp.fixed_batch,
        }
    }

    pub fn environment(&self, rng: &mut NormalStream) -> Result<TaskEnvironment> {
        sample_environment(
            self.env.d,
            self.env.k,
            self.head_mean(),
            self.env.head_scale,
            self.env.noise_std,
            rng,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse and validate a config from JSON text.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path)
}
