//! End-to-end two-stage pipelines for the Weibull model.
//!
//! Training draws `M_θ` parameters `θ_i = (η_i, γ_i)` (independently per
//! component), simulates `M_y` datasets of `N` observations for each, and
//! compresses every dataset to `n` quantiles. The scale and shape are then
//! fitted separately on their own feature maps, either by ridge regression
//! (Bayes rule under the sampling prior) or by the certified minimax fitter
//! (minimax rule over the training rows; any importance weights drop out
//! because the worst case over the simplex sits on a vertex).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compression::{compress, CompressedVector, FeatureKind};
use crate::error::{Result, TsError};
use crate::second_stage::{evaluate_max_quadratic, fit_ridge, Coefficients, MinimaxSolver, RegressionProblem};
use crate::sim::{sample_prior, sample_weibull, PriorSpec, SeedSpec, WeibullParams};

/// Relative optimality gap requested from the minimax fitter, measured
/// against the worst-case objective of the ridge warm start.
pub const MINIMAX_REL_TOL: f64 = 1e-6;

const STREAM_ETA: u64 = 0;
const STREAM_GAMMA: u64 = 1;
const STREAM_DATA: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub m_theta: usize,
    pub m_y: usize,
    pub n_obs: usize,
    pub n_quantiles: usize,
    pub ridge: f64,
    /// Prior for the Bayes fit, proposal for the minimax fit. Applied
    /// independently to the scale and the shape.
    pub theta_distribution: PriorSpec,
    pub seed: SeedSpec,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            m_theta: 1000,
            m_y: 1,
            n_obs: 10_000,
            n_quantiles: 10,
            ridge: 1e-8,
            theta_distribution: PriorSpec::uniform(1.0, 20.0).expect("valid default prior"),
            seed: SeedSpec::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_theta == 0 || self.m_y == 0 {
            return Err(TsError::config("m_theta and m_y must be at least 1"));
        }
        if self.n_quantiles == 0 || self.n_quantiles >= self.n_obs {
            return Err(TsError::config(format!(
                "need 1 <= n_quantiles < n_obs, got n_quantiles = {} and n_obs = {}",
                self.n_quantiles, self.n_obs
            )));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(TsError::config(format!(
                "ridge must be finite and >= 0, got {}",
                self.ridge
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Simulated pairs `(θ_i, α_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub thetas: Vec<WeibullParams>,
    /// `M_θ · M_y` entries, each tagged with the index of its parameter.
    pub compressed: Vec<(usize, CompressedVector)>,
}

impl TrainingSet {
    fn targets(&self, pick: impl Fn(&WeibullParams) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            self.compressed.len(),
            self.compressed.iter().map(|(i, _)| pick(&self.thetas[*i])),
        )
    }

    pub fn feature_matrix(&self, kind: FeatureKind) -> Result<DMatrix<f64>> {
        let n = self.compressed.first().map_or(0, |(_, a)| a.n());
        let m = kind.dimension(n);
        let mut out = DMatrix::zeros(self.compressed.len(), m);
        for (row, (_, alpha)) in self.compressed.iter().enumerate() {
            let phi = kind.apply(alpha)?;
            for (j, v) in phi.values.iter().enumerate() {
                out[(row, j)] = *v;
            }
        }
        Ok(out)
    }

    /// Regression problem for the scale (targets `η_i`) or the shape
    /// (targets `γ_i`).
    pub fn problem(&self, kind: FeatureKind, ridge: f64) -> Result<RegressionProblem> {
        let targets = match kind {
            FeatureKind::Scale => self.targets(WeibullParams::scale),
            FeatureKind::Shape => self.targets(WeibullParams::shape),
        };
        RegressionProblem::new(self.feature_matrix(kind)?, targets, ridge)
    }
}

pub fn generate_training_set(config: &TrainingConfig) -> Result<TrainingSet> {
    config.validate()?;
    let etas = sample_prior(
        config.m_theta,
        &config.theta_distribution,
        config.seed.child(STREAM_ETA),
    )?;
    let gammas = sample_prior(
        config.m_theta,
        &config.theta_distribution,
        config.seed.child(STREAM_GAMMA),
    )?;
    let thetas = etas
        .into_iter()
        .zip(gammas)
        .map(|(eta, gamma)| WeibullParams::new(eta, gamma))
        .collect::<Result<Vec<_>>>()?;

    let data_seed = config.seed.child(STREAM_DATA);
    let compressed = (0..config.m_theta * config.m_y)
        .into_par_iter()
        .map(|row| {
            let parent = row / config.m_y;
            let y = sample_weibull(config.n_obs, &thetas[parent], data_seed.child(row as u64))?;
            Ok((parent, compress(&y, config.n_quantiles)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet { thetas, compressed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bayes,
    Minimax,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bayes => "bayes",
            Method::Minimax => "minimax",
        })
    }
}

impl FromStr for Method {
    type Err = TsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bayes" => Ok(Method::Bayes),
            "minimax" => Ok(Method::Minimax),
            other => Err(TsError::Parse(format!("unknown method `{other}`"))),
        }
    }
}

/// Anything that maps a raw sample to `(η̂, γ̂)`.
pub trait ParamEstimator: Sync {
    fn estimate(&self, y: &[f64]) -> Result<(f64, f64)>;
}

/// Fitted decision rule `δ = g ∘ h_N`: quantile compression followed by one
/// linear readout per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TsModel {
    pub beta_scale: Coefficients,
    pub beta_shape: Coefficients,
    pub n_quantiles: usize,
    pub method: Method,
    pub config_fingerprint: String,
}

impl TsModel {
    /// Fits both parameters on an existing training set.
    pub fn fit(set: &TrainingSet, method: Method, ridge: f64, config_fingerprint: String) -> Result<Self> {
        let n_quantiles = set
            .compressed
            .first()
            .map(|(_, a)| a.n())
            .ok_or_else(|| TsError::config("empty training set"))?;
        let fit_one = |kind| -> Result<Coefficients> {
            let problem = set.problem(kind, ridge)?;
            match method {
                Method::Bayes => fit_ridge(&problem),
                Method::Minimax => fit_worst_case(&problem),
            }
        };
        Ok(Self {
            beta_scale: fit_one(FeatureKind::Scale)?,
            beta_shape: fit_one(FeatureKind::Shape)?,
            n_quantiles,
            method,
            config_fingerprint,
        })
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC}");
        let _ = writeln!(out, "method={}", self.method);
        let _ = writeln!(out, "n_quantiles={}", self.n_quantiles);
        let _ = writeln!(out, "config_fingerprint={}", self.config_fingerprint);
        for (name, c) in [("scale", &self.beta_scale), ("shape", &self.beta_shape)] {
            let _ = writeln!(out, "{name}.len={}", c.beta.len());
            let _ = writeln!(out, "{name}.objective={:.16e}", c.objective);
            let _ = writeln!(out, "{name}.certificate={:.16e}", c.certificate);
        }
        out.push_str("coefficients\n");
        for v in self.beta_scale.beta.iter().chain(&self.beta_shape.beta) {
            let _ = writeln!(out, "{v:.16e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(TsError::Parse("missing model header".into()));
        }
        let mut header = std::collections::BTreeMap::new();
        for line in lines.by_ref() {
            if line == "coefficients" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TsError::Parse(format!("malformed header line `{line}`")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| TsError::Parse(format!("missing header key `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| TsError::Parse(format!("bad number for `{k}`")))
        };
        let count = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| TsError::Parse(format!("bad count for `{k}`")))
        };

        let values = lines
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| TsError::Parse(format!("bad coefficient `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (scale_len, shape_len) = (count("scale.len")?, count("shape.len")?);
        if values.len() != scale_len + shape_len {
            return Err(TsError::Parse(format!(
                "expected {} coefficients, found {}",
                scale_len + shape_len,
                values.len()
            )));
        }
        let n_quantiles = count("n_quantiles")?;
        if n_quantiles == 0
            || scale_len != FeatureKind::Scale.dimension(n_quantiles)
            || shape_len != FeatureKind::Shape.dimension(n_quantiles)
        {
            return Err(TsError::Parse("coefficient lengths do not match n_quantiles".into()));
        }
        Ok(Self {
            beta_scale: Coefficients {
                beta: values[..scale_len].to_vec(),
                objective: num("scale.objective")?,
                certificate: num("scale.certificate")?,
            },
            beta_shape: Coefficients {
                beta: values[scale_len..].to_vec(),
                objective: num("shape.objective")?,
                certificate: num("shape.certificate")?,
            },
            n_quantiles,
            method: get("method")?.parse()?,
            config_fingerprint: get("config_fingerprint")?.clone(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

const MODEL_MAGIC: &str = "ts-estimate-model v1";

impl ParamEstimator for TsModel {
    fn estimate(&self, y: &[f64]) -> Result<(f64, f64)> {
        estimate(self, y)
    }
}

/// Minimax fit warm-started at the ridge solution with a gap tolerance
/// relative to the ridge worst-case objective.
fn fit_worst_case(problem: &RegressionProblem) -> Result<Coefficients> {
    let ridge = fit_ridge(problem)?;
    let (start_value, _) = evaluate_max_quadratic(&ridge.beta, problem);
    let tolerance = (MINIMAX_REL_TOL * start_value).max(f64::MIN_POSITIVE);
    MinimaxSolver::new(tolerance).solve(problem, Some(&ridge.beta))
}

pub fn fit_bayes(config: &TrainingConfig) -> Result<TsModel> {
    let set = generate_training_set(config)?;
    TsModel::fit(&set, Method::Bayes, config.ridge, config.fingerprint())
}

pub fn fit_minimax(config: &TrainingConfig) -> Result<TsModel> {
    let set = generate_training_set(config)?;
    TsModel::fit(&set, Method::Minimax, config.ridge, config.fingerprint())
}

pub fn fit(config: &TrainingConfig, method: Method) -> Result<TsModel> {
    match method {
        Method::Bayes => fit_bayes(config),
        Method::Minimax => fit_minimax(config),
    }
}

pub fn estimate(model: &TsModel, y: &[f64]) -> Result<(f64, f64)> {
    if y.len() <= model.n_quantiles {
        return Err(TsError::domain(format!(
            "sample of size {} is too small for {} quantiles",
            y.len(),
            model.n_quantiles
        )));
    }
    let alpha = compress(y, model.n_quantiles)?;
    let scale = FeatureKind::Scale.apply(&alpha)?;
    let shape = FeatureKind::Shape.apply(&alpha)?;
    Ok((
        model.beta_scale.predict(&scale.values),
        model.beta_shape.predict(&shape.values),
    ))
}
