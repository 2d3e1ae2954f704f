//! Monte-Carlo risk evaluation and the CSV artefacts of the Weibull
//! experiment: the MSE/CRLB table and the scatter data behind the
//! estimate-versus-truth plots.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::crlb;
use crate::error::{Result, TsError};
use crate::estimator::{self, Method, ParamEstimator, TrainingConfig, TsModel};
use crate::sim::{sample_prior, sample_weibull, PriorKind, PriorSpec, SeedSpec, WeibullParams};

/// The six `(η, γ)` rows of the reference table.
pub const TABLE1_POINTS: [(f64, f64); 6] = [(2.0, 2.0), (2.0, 8.0), (4.0, 2.0), (4.0, 8.0), (8.0, 2.0), (8.0, 8.0)];

const STREAM_EVAL: u64 = 100;
const STREAM_SCATTER: u64 = 101;

pub const TABLE_HEADER: &str =
    "method,eta,gamma,crlb_eta,crlb_gamma,mse_eta,mse_gamma,eff_eta,eff_gamma,outside_support";
pub const SCATTER_HEADER: &str = "true_eta,true_gamma,est_eta,est_gamma";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Scatter,
    Table,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub training: TrainingConfig,
    pub eval_points: Vec<(f64, f64)>,
    pub mc_runs: usize,
    pub output_dir: PathBuf,
    pub emit: BTreeSet<Emit>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig::default(),
            eval_points: TABLE1_POINTS.to_vec(),
            mc_runs: 1000,
            output_dir: PathBuf::from("results"),
            emit: BTreeSet::from([Emit::Table]),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.mc_runs == 0 {
            return Err(TsError::config("mc_runs must be at least 1"));
        }
        if self.eval_points.is_empty() {
            return Err(TsError::config("no evaluation points"));
        }
        let support = &self.training.theta_distribution;
        for &(eta, gamma) in &self.eval_points {
            WeibullParams::new(eta, gamma)?;
            if !support.contains(eta) || !support.contains(gamma) {
                return Err(TsError::config(format!(
                    "evaluation point ({eta}, {gamma}) lies outside [{}, {}]",
                    support.lower(),
                    support.upper()
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| TsError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Copy with the parameter distribution switched to `kind` on the same
    /// support.
    pub fn with_prior(&self, kind: PriorKind) -> Result<Self> {
        let d = &self.training.theta_distribution;
        let mut out = self.clone();
        out.training.theta_distribution = PriorSpec::new(kind, d.lower(), d.upper())?;
        Ok(out)
    }

    fn eval_seed(&self, point: usize) -> SeedSpec {
        self.training.seed.child(STREAM_EVAL).child(point as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub eta: f64,
    pub gamma: f64,
    pub crlb_eta: f64,
    pub crlb_gamma: f64,
    pub mse_eta: f64,
    pub mse_gamma: f64,
    /// Runs whose estimate of either parameter left the prior support.
    pub outside_support: usize,
}

impl RiskRow {
    pub fn efficiency_eta(&self) -> f64 {
        self.mse_eta / self.crlb_eta
    }

    pub fn efficiency_gamma(&self) -> f64 {
        self.mse_gamma / self.crlb_gamma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub label: String,
    pub rows: Vec<RiskRow>,
}

/// Estimation errors `(η̂ - η, γ̂ - γ)` for the runs in `runs` at one point.
///
/// Run `r` always consumes the same sub-stream, so any prefix of a longer
/// experiment reproduces the shorter one.
pub fn evaluation_errors<E: ParamEstimator + ?Sized>(
    estimator: &E,
    params: &WeibullParams,
    n_obs: usize,
    runs: Range<usize>,
    seed: SeedSpec,
) -> Result<Vec<(f64, f64)>> {
    runs.into_par_iter()
        .map(|r| {
            let y = sample_weibull(n_obs, params, seed.child(r as u64))?;
            let (eta_hat, gamma_hat) = estimator.estimate(&y)?;
            Ok((eta_hat - params.scale(), gamma_hat - params.shape()))
        })
        .collect()
}

/// Mean squared errors at every evaluation point over `mc_runs` fresh
/// datasets each, alongside the Cramér-Rao bounds.
pub fn run_mse_experiment<E: ParamEstimator + ?Sized>(
    config: &ExperimentConfig,
    estimator: &E,
    label: &str,
) -> Result<RiskReport> {
    config.validate()?;
    let n_obs = config.training.n_obs;
    let support = config.training.theta_distribution;
    let rows = config
        .eval_points
        .iter()
        .enumerate()
        .map(|(p, &(eta, gamma))| {
            let params = WeibullParams::new(eta, gamma)?;
            let errors = evaluation_errors(estimator, &params, n_obs, 0..config.mc_runs, config.eval_seed(p))?;
            let runs = errors.len() as f64;
            let mse_eta = errors.iter().map(|(e, _)| e * e).sum::<f64>() / runs;
            let mse_gamma = errors.iter().map(|(_, g)| g * g).sum::<f64>() / runs;
            let outside_support = errors
                .iter()
                .filter(|(e, g)| !support.contains(eta + e) || !support.contains(gamma + g))
                .count();
            let (crlb_eta, crlb_gamma) = crlb(&params, n_obs)?;
            Ok(RiskRow {
                eta,
                gamma,
                crlb_eta,
                crlb_gamma,
                mse_eta,
                mse_gamma,
                outside_support,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskReport {
        label: label.to_string(),
        rows,
    })
}

/// Label used in file names and the table's `method` column.
pub fn run_label(method: Method, prior: PriorKind) -> String {
    format!("{method}-{prior}")
}

/// Bayes with a uniform prior, Bayes with a reciprocal prior and minimax
/// with a uniform proposal, each evaluated over `config.eval_points`. The
/// combined table is written to `output_dir/table1.csv`.
pub fn reproduce_table(config: &ExperimentConfig) -> Result<[RiskReport; 3]> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let runs = [
        (Method::Bayes, PriorKind::Uniform),
        (Method::Bayes, PriorKind::Reciprocal),
        (Method::Minimax, PriorKind::Uniform),
    ];
    let mut reports = Vec::with_capacity(3);
    for (method, prior) in runs {
        let cfg = config.with_prior(prior)?;
        let label = run_label(method, prior);
        let model = estimator::fit(&cfg.training, method)?;
        if config.emit.contains(&Emit::Model) {
            model.write(&config.output_dir.join(format!("model_{label}.txt")))?;
        }
        if config.emit.contains(&Emit::Scatter) {
            emit_scatter(&model, &cfg, &label)?;
        }
        reports.push(run_mse_experiment(&cfg, &model, &label)?);
    }
    let reports: [RiskReport; 3] = reports.try_into().expect("three runs");
    write_table(&config.output_dir.join("table1.csv"), &reports)?;
    Ok(reports)
}

pub fn table_to_csv(reports: &[RiskReport]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for report in reports {
        for r in &report.rows {
            let _ = writeln!(
                out,
                "{},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{}",
                report.label,
                r.eta,
                r.gamma,
                r.crlb_eta,
                r.crlb_gamma,
                r.mse_eta,
                r.mse_gamma,
                r.efficiency_eta(),
                r.efficiency_gamma(),
                r.outside_support
            );
        }
    }
    out
}

pub fn write_table(path: &Path, reports: &[RiskReport]) -> Result<()> {
    std::fs::write(path, table_to_csv(reports))?;
    Ok(())
}

/// Parses a table back into reports, grouping consecutive rows by label.
pub fn parse_table(text: &str) -> Result<Vec<RiskReport>> {
    let mut lines = text.lines();
    if lines.next() != Some(TABLE_HEADER) {
        return Err(TsError::Parse("unexpected table header".into()));
    }
    let mut reports: Vec<RiskReport> = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(TsError::Parse(format!("table row has {} fields", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| TsError::Parse(format!("bad number `{}`", fields[i])))
        };
        let row = RiskRow {
            eta: num(1)?,
            gamma: num(2)?,
            crlb_eta: num(3)?,
            crlb_gamma: num(4)?,
            mse_eta: num(5)?,
            mse_gamma: num(6)?,
            outside_support: fields[9]
                .parse()
                .map_err(|_| TsError::Parse(format!("bad count `{}`", fields[9])))?,
        };
        match reports.last_mut() {
            Some(last) if last.label == fields[0] => last.rows.push(row),
            _ => reports.push(RiskReport {
                label: fields[0].to_string(),
                rows: vec![row],
            }),
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub true_eta: f64,
    pub true_gamma: f64,
    pub est_eta: f64,
    pub est_gamma: f64,
}

/// Estimates for `m_theta` fresh parameter draws from the configured
/// distribution, one simulated dataset each.
pub fn scatter_rows<E: ParamEstimator + ?Sized>(estimator: &E, config: &ExperimentConfig) -> Result<Vec<ScatterRow>> {
    config.validate()?;
    let t = &config.training;
    let seed = t.seed.child(STREAM_SCATTER);
    let etas = sample_prior(t.m_theta, &t.theta_distribution, seed.child(0))?;
    let gammas = sample_prior(t.m_theta, &t.theta_distribution, seed.child(1))?;
    let data_seed = seed.child(2);
    (0..t.m_theta)
        .into_par_iter()
        .map(|i| {
            let params = WeibullParams::new(etas[i], gammas[i])?;
            let y = sample_weibull(t.n_obs, &params, data_seed.child(i as u64))?;
            let (est_eta, est_gamma) = estimator.estimate(&y)?;
            Ok(ScatterRow {
                true_eta: etas[i],
                true_gamma: gammas[i],
                est_eta,
                est_gamma,
            })
        })
        .collect()
}

pub fn scatter_to_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from(SCATTER_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.true_eta, r.true_gamma, r.est_eta, r.est_gamma
        );
    }
    out
}

pub fn parse_scatter(text: &str) -> Result<Vec<ScatterRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(SCATTER_HEADER) {
        return Err(TsError::Parse("unexpected scatter header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let v = line
                .split(',')
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| TsError::Parse(format!("bad number `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            match v[..] {
                [true_eta, true_gamma, est_eta, est_gamma] => Ok(ScatterRow {
                    true_eta,
                    true_gamma,
                    est_eta,
                    est_gamma,
                }),
                _ => Err(TsError::Parse(format!("scatter row has {} fields", v.len()))),
            }
        })
        .collect()
}

/// Writes `output_dir/scatter_<label>.csv` and returns its path.
pub fn emit_scatter(model: &TsModel, config: &ExperimentConfig, label: &str) -> Result<PathBuf> {
    let rows = scatter_rows(model, config)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join(format!("scatter_{label}.csv"));
    std::fs::write(&path, scatter_to_csv(&rows))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns the fixed parameter regardless of the data.
    struct Oracle(f64, f64);

    impl ParamEstimator for Oracle {
        fn estimate(&self, _y: &[f64]) -> Result<(f64, f64)> {
            Ok((self.0, self.1))
        }
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            training: TrainingConfig {
                n_obs: 200,
                n_quantiles: 4,
                m_theta: 20,
                ..TrainingConfig::default()
            },
            eval_points: vec![(2.0, 2.0)],
            mc_runs: 1,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn perfect_oracle_has_zero_mse() {
        let report = run_mse_experiment(&tiny_config(), &Oracle(2.0, 2.0), "oracle").unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].mse_eta, 0.0);
        assert_eq!(report.rows[0].mse_gamma, 0.0);
        assert_eq!(report.rows[0].outside_support, 0);
    }

    #[test]
    fn validation_catches_bad_points() {
        let mut c = tiny_config();
        c.eval_points = vec![(0.5, 2.0)];
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.mc_runs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let c = ExperimentConfig::from_json(r#"{"mc_runs": 5, "training": {"m_theta": 7}}"#).unwrap();
        assert_eq!(c.mc_runs, 5);
        assert_eq!(c.training.m_theta, 7);
        assert_eq!(c.training.n_obs, 10_000);
        assert_eq!(c.eval_points, TABLE1_POINTS.to_vec());
        assert!(ExperimentConfig::from_json(r#"{"mc_run": 5}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"mc_runs": 0}"#).is_err());
    }

    #[test]
    fn table_parse_rejects_garbage() {
        assert!(parse_table("nope\n").is_err());
        assert!(parse_table(&format!("{TABLE_HEADER}\nbayes,1,2\n")).is_err());
        assert!(parse_scatter(&format!("{SCATTER_HEADER}\n1,2,3\n")).is_err());
    }
}
