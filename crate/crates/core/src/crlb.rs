//! Fisher information and Cramér-Rao lower bounds for the two-parameter
//! Weibull model.
//!
//! With `z = (x/η)^γ ~ Exp(1)` the per-observation scores are
//!
//! ```text
//! ∂/∂η log f = (γ/η)(z - 1)
//! ∂/∂γ log f = (1 + ln z - z ln z) / γ
//! ```
//!
//! and their second moments give the closed form in [`fisher_per_sample`].
//! [`fisher_oracle`] estimates the same matrix by Monte Carlo so the closed
//! form can be checked independently.

use rayon::prelude::*;

use crate::error::{Result, TsError};
use crate::sim::{uniform, weibull_quantile, SeedSpec, WeibullParams};

#[allow(clippy::excessive_precision)]
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082_402_431;

/// Symmetric 2×2 information matrix in `(η, γ)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    pub entries: [[f64; 2]; 2],
}

impl FisherMatrix {
    pub fn eta_eta(&self) -> f64 {
        self.entries[0][0]
    }

    pub fn eta_gamma(&self) -> f64 {
        self.entries[0][1]
    }

    pub fn gamma_gamma(&self) -> f64 {
        self.entries[1][1]
    }

    pub fn det(&self) -> f64 {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }

    pub fn is_positive_definite(&self) -> bool {
        self.entries[0][0] > 0.0 && self.det() > 0.0
    }
}

pub fn fisher_per_sample(params: &WeibullParams) -> FisherMatrix {
    let (eta, gamma) = (params.scale(), params.shape());
    let one_minus = 1.0 - EULER_GAMMA;
    let cross = -one_minus / eta;
    FisherMatrix {
        entries: [
            [gamma * gamma / (eta * eta), cross],
            [
                cross,
                (std::f64::consts::PI.powi(2) / 6.0 + one_minus * one_minus) / (gamma * gamma),
            ],
        ],
    }
}

/// Diagonal of `(N I(θ))⁻¹`: the lower bounds on the variance of unbiased
/// estimators of `η` and `γ` from `n_obs` observations.
pub fn crlb(params: &WeibullParams, n_obs: usize) -> Result<(f64, f64)> {
    if n_obs == 0 {
        return Err(TsError::domain("CRLB needs at least one observation"));
    }
    let info = fisher_per_sample(params);
    let det = info.det();
    if !(det > 0.0) {
        return Err(TsError::domain("Fisher information is singular"));
    }
    let n = n_obs as f64;
    Ok((info.gamma_gamma() / det / n, info.eta_eta() / det / n))
}

/// Per-observation score vector `(∂_η, ∂_γ) log f(x)`.
pub fn score(x: f64, params: &WeibullParams) -> [f64; 2] {
    let (eta, gamma) = (params.scale(), params.shape());
    let log_ratio = (x / eta).ln();
    let z = (gamma * log_ratio).exp();
    [gamma / eta * (z - 1.0), gamma.recip() + log_ratio - z * log_ratio]
}

/// Monte-Carlo estimate of `E[score scoreᵀ]` with its sampling error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherEstimate {
    pub matrix: FisherMatrix,
    /// Standard error of each entry, computed as for i.i.d. sampling (an
    /// upper bound under the stratified design).
    pub std_error: [[f64; 2]; 2],
    pub mean_score: [f64; 2],
    pub score_std_error: [f64; 2],
    pub n_draws: usize,
}

const ORACLE_CHUNK: usize = 1 << 14;

/// Stratified Monte-Carlo estimate of the Fisher information.
///
/// Draw `k` uses the uniform variate `(k + U_k)/n`, one per stratum, mapped
/// through the Weibull quantile function; the analytic score is then
/// evaluated at each observation.
pub fn fisher_oracle_detailed(params: &WeibullParams, n_draws: usize, seed: SeedSpec) -> Result<FisherEstimate> {
    if n_draws < 100_000 {
        return Err(TsError::domain(format!(
            "Fisher oracle needs at least 1e5 draws, got {n_draws}"
        )));
    }
    let n = n_draws as f64;
    let n_chunks = n_draws.div_ceil(ORACLE_CHUNK);
    // [s_η, s_γ, s_η², s_η s_γ, s_γ², s_η⁴, (s_η s_γ)², s_γ⁴]
    let partial: Vec<[f64; 8]> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.child(c as u64).rng();
            let start = c * ORACLE_CHUNK;
            let end = (start + ORACLE_CHUNK).min(n_draws);
            let mut acc = [0.0; 8];
            for k in start..end {
                let u = (k as f64 + uniform(&mut rng)) / n;
                let x = weibull_quantile(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0), params)
                    .expect("stratified variate lies in [0, 1)");
                let [a, b] = score(x, params);
                let (aa, ab, bb) = (a * a, a * b, b * b);
                acc[0] += a;
                acc[1] += b;
                acc[2] += aa;
                acc[3] += ab;
                acc[4] += bb;
                acc[5] += aa * aa;
                acc[6] += ab * ab;
                acc[7] += bb * bb;
            }
            acc
        })
        .collect();
    let mut total = [0.0; 8];
    for acc in &partial {
        for (t, v) in total.iter_mut().zip(acc) {
            *t += v;
        }
    }
    let mean: Vec<f64> = total.iter().map(|v| v / n).collect();
    let se = |m1: f64, m2: f64| ((m2 - m1 * m1).max(0.0) / (n - 1.0)).sqrt();
    let matrix = FisherMatrix {
        entries: [[mean[2], mean[3]], [mean[3], mean[4]]],
    };
    let se_ee = se(mean[2], mean[5]);
    let se_eg = se(mean[3], mean[6]);
    let se_gg = se(mean[4], mean[7]);
    Ok(FisherEstimate {
        matrix,
        std_error: [[se_ee, se_eg], [se_eg, se_gg]],
        mean_score: [mean[0], mean[1]],
        score_std_error: [se(mean[0], mean[2]), se(mean[1], mean[4])],
        n_draws,
    })
}

pub fn fisher_oracle(params: &WeibullParams, n_draws: usize, seed: SeedSpec) -> Result<FisherMatrix> {
    fisher_oracle_detailed(params, n_draws, seed).map(|e| e.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(eta: f64, gamma: f64) -> WeibullParams {
        WeibullParams::new(eta, gamma).unwrap()
    }

    #[test]
    fn unit_eta_eta_at_two_two() {
        assert_eq!(fisher_per_sample(&p(2.0, 2.0)).eta_eta(), 1.0);
    }

    #[test]
    fn gamma_gamma_independent_of_scale() {
        let a = fisher_per_sample(&p(1.0, 3.0)).gamma_gamma();
        let b = fisher_per_sample(&p(17.0, 3.0)).gamma_gamma();
        assert_eq!(a, b);
    }

    #[test]
    fn positive_definite_on_grid() {
        for eta in [1.0, 2.0, 8.0, 20.0] {
            for gamma in [1.0, 2.0, 8.0, 20.0] {
                assert!(fisher_per_sample(&p(eta, gamma)).is_positive_definite());
            }
        }
    }

    #[test]
    fn crlb_scaling_in_n() {
        let params = p(3.0, 1.5);
        let (e1, g1) = crlb(&params, 1000).unwrap();
        let (e4, g4) = crlb(&params, 4000).unwrap();
        assert!((e1 / 4.0 - e4).abs() <= 4.0 * f64::EPSILON * e4);
        assert!((g1 / 4.0 - g4).abs() <= 4.0 * f64::EPSILON * g4);
        assert!(crlb(&params, 0).is_err());
    }

    #[test]
    fn crlb_scale_law() {
        let (e1, g1) = crlb(&p(2.0, 5.0), 100).unwrap();
        let (e3, g3) = crlb(&p(6.0, 5.0), 100).unwrap();
        assert!((e3 / e1 - 9.0).abs() < 1e-12 * 9.0);
        assert!((g3 / g1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_small_budgets() {
        assert!(fisher_oracle(&p(1.0, 1.0), 1000, SeedSpec::new(1)).is_err());
    }
}
