//! Weibull data model, parameter priors and seeded random streams.
//!
//! Every random draw in the crate goes through [`SeedSpec::rng`]. A seed is
//! a `(root_seed, stream_index)` pair mapped onto a ChaCha20 key and stream
//! id, so any sub-task (one training row, one Monte-Carlo run) can own an
//! independent stream that does not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsError};

/// Unknown parameter of the data model: scale `eta` and shape `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    scale: f64,
    shape: f64,
}

impl WeibullParams {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(TsError::domain(format!("Weibull scale must be > 0, got {scale}")));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(TsError::domain(format!("Weibull shape must be > 0, got {shape}")));
        }
        Ok(Self { scale, shape })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }
}

/// Density `(γ/η)(x/η)^(γ-1) exp(-(x/η)^γ)`.
///
/// At `x = 0` with shape below one the density diverges and `+inf` is
/// returned.
pub fn weibull_pdf(x: f64, params: &WeibullParams) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(TsError::domain(format!("Weibull density needs x >= 0, got {x}")));
    }
    let (eta, gamma) = (params.scale, params.shape);
    let z = x / eta;
    Ok((gamma / eta) * z.powf(gamma - 1.0) * (-z.powf(gamma)).exp())
}

pub fn weibull_cdf(x: f64, params: &WeibullParams) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(TsError::domain(format!("Weibull cdf needs x >= 0, got {x}")));
    }
    let z = (x / params.scale).powf(params.shape);
    Ok(-(-z).exp_m1())
}

/// Inverse cdf `η (-ln(1-p))^(1/γ)` for `p` in `[0, 1)`.
pub fn weibull_quantile(p: f64, params: &WeibullParams) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(TsError::domain(format!("quantile level must lie in [0, 1), got {p}")));
    }
    Ok(weibull_quantile_unchecked(p, params))
}

#[inline]
fn weibull_quantile_unchecked(p: f64, params: &WeibullParams) -> f64 {
    params.scale * (-(-p).ln_1p()).powf(params.shape.recip())
}

/// `n_samples` i.i.d. draws by inverse-cdf transform of the seeded uniform
/// stream.
pub fn sample_weibull(n_samples: usize, params: &WeibullParams, seed: SeedSpec) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(TsError::domain("sample size must be at least 1"));
    }
    let mut rng = seed.rng();
    Ok((0..n_samples)
        .map(|_| weibull_quantile_unchecked(uniform(&mut rng), params))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Uniform,
    /// Density `c/x` on `[a, b]` with `c = 1/ln(b/a)`.
    Reciprocal,
}

impl std::str::FromStr for PriorKind {
    type Err = TsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(PriorKind::Uniform),
            "reciprocal" | "uninformative" => Ok(PriorKind::Reciprocal),
            other => Err(TsError::Parse(format!("unknown prior kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriorKind::Uniform => "uniform",
            PriorKind::Reciprocal => "reciprocal",
        })
    }
}

/// One-dimensional prior (or proposal) on a bounded positive interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior")]
pub struct PriorSpec {
    kind: PriorKind,
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
struct RawPrior {
    kind: PriorKind,
    lower: f64,
    upper: f64,
}

impl TryFrom<RawPrior> for PriorSpec {
    type Error = TsError;

    fn try_from(raw: RawPrior) -> Result<Self> {
        PriorSpec::new(raw.kind, raw.lower, raw.upper)
    }
}

impl PriorSpec {
    pub fn new(kind: PriorKind, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower > 0.0 && lower < upper) {
            return Err(TsError::config(format!(
                "prior support must satisfy 0 < lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { kind, lower, upper })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::new(PriorKind::Uniform, lower, upper)
    }

    pub fn reciprocal(lower: f64, upper: f64) -> Result<Self> {
        Self::new(PriorKind::Reciprocal, lower, upper)
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lower..=self.upper).contains(&x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match self.kind {
            PriorKind::Uniform => (self.upper - self.lower).recip(),
            PriorKind::Reciprocal => 1.0 / ((self.upper / self.lower).ln() * x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        match self.kind {
            PriorKind::Uniform => (x - self.lower) / (self.upper - self.lower),
            PriorKind::Reciprocal => (x / self.lower).ln() / (self.upper / self.lower).ln(),
        }
    }

    /// Maps a uniform variate `u` in `[0, 1)` onto the support.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self.kind {
            PriorKind::Uniform => self.lower + (self.upper - self.lower) * u,
            PriorKind::Reciprocal => self.lower * (self.upper / self.lower).powf(u),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            PriorKind::Uniform => 0.5 * (self.lower + self.upper),
            PriorKind::Reciprocal => (self.upper - self.lower) / (self.upper / self.lower).ln(),
        }
    }
}

pub fn sample_prior(m: usize, prior: &PriorSpec, seed: SeedSpec) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(TsError::domain("number of prior draws must be at least 1"));
    }
    let mut rng = seed.rng();
    Ok((0..m).map(|_| prior.inverse_cdf(uniform(&mut rng))).collect())
}

/// Deterministic handle on a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub root_seed: u64,
    #[serde(default)]
    pub stream_index: u64,
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self::new(20_240_601)
    }
}

impl SeedSpec {
    pub const fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            stream_index: 0,
        }
    }

    pub const fn with_stream(root_seed: u64, stream_index: u64) -> Self {
        Self {
            root_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Sub-stream `index` of this stream. Children of distinct parents, and
    /// distinct children of one parent, get distinct keys or stream ids.
    pub fn child(&self, index: u64) -> SeedSpec {
        SeedSpec {
            root_seed: splitmix64(self.root_seed ^ splitmix64(self.stream_index.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream_index: index,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Uniform variate in `[0, 1)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn p(eta: f64, gamma: f64) -> WeibullParams {
        WeibullParams::new(eta, gamma).unwrap()
    }

    #[test]
    fn params_reject_nonpositive() {
        assert!(WeibullParams::new(0.0, 1.0).is_err());
        assert!(WeibullParams::new(1.0, -2.0).is_err());
        assert!(WeibullParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn pdf_at_scale() {
        for &(eta, gamma) in &[(2.0, 2.0), (0.5, 7.0), (13.0, 0.8)] {
            let got = weibull_pdf(eta, &p(eta, gamma)).unwrap();
            let want = gamma / eta / E;
            assert!((got - want).abs() <= 1e-15 * want);
        }
    }

    #[test]
    fn pdf_edge_values() {
        assert_eq!(weibull_pdf(0.0, &p(3.0, 2.5)).unwrap(), 0.0);
        let v = weibull_pdf(1.0, &p(1.0, 1.0)).unwrap();
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(matches!(weibull_pdf(-1e-3, &p(1.0, 1.0)), Err(TsError::Domain(_))));
    }

    #[test]
    fn quantile_examples() {
        let q = p(3.0, 1.7);
        assert_eq!(weibull_quantile(0.0, &q).unwrap(), 0.0);
        let at_scale = weibull_quantile(1.0 - (-1.0f64).exp(), &q).unwrap();
        assert!((at_scale - 3.0).abs() < 1e-14);
        let med = weibull_quantile(0.5, &p(2.0, 2.0)).unwrap();
        assert!((med - 1.665_109_222_315_395_5).abs() < 1e-14);
        assert!(weibull_quantile(1.0, &q).is_err());
        assert!(weibull_quantile(-0.1, &q).is_err());
    }

    #[test]
    fn single_draw_is_quantile_of_first_uniform() {
        let seed = SeedSpec::with_stream(7, 3);
        let params = p(4.0, 1.5);
        let u = uniform(&mut seed.rng());
        let y = sample_weibull(1, &params, seed).unwrap();
        assert_eq!(y, vec![weibull_quantile(u, &params).unwrap()]);
        assert!(sample_weibull(0, &params, seed).is_err());
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let params = p(2.0, 2.0);
        let a = sample_weibull(64, &params, SeedSpec::with_stream(1, 0)).unwrap();
        let b = sample_weibull(64, &params, SeedSpec::with_stream(1, 0)).unwrap();
        let c = sample_weibull(64, &params, SeedSpec::with_stream(1, 1)).unwrap();
        let d = sample_weibull(64, &params, SeedSpec::new(1).child(0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(SeedSpec::new(1).child(0), SeedSpec::new(1).child(1));
    }

    #[test]
    fn reciprocal_prior_endpoints() {
        let prior = PriorSpec::reciprocal(1.0, 20.0).unwrap();
        assert_eq!(prior.inverse_cdf(0.0), 1.0);
        assert!((prior.inverse_cdf(1.0 - 1e-16) - 20.0).abs() < 1e-12);
        assert!((prior.inverse_cdf(0.5) - 20f64.sqrt()).abs() < 1e-14);
        assert!((prior.inverse_cdf(0.5) - 4.472_14).abs() < 1e-5);
    }

    #[test]
    fn prior_validation() {
        assert!(PriorSpec::uniform(2.0, 2.0).is_err());
        assert!(PriorSpec::reciprocal(0.0, 1.0).is_err());
        assert!(PriorSpec::uniform(5.0, 1.0).is_err());
        let json = r#"{"kind":"uniform","lower":3,"upper":1}"#;
        assert!(serde_json::from_str::<PriorSpec>(json).is_err());
    }

    #[test]
    fn reciprocal_density_normalised() {
        let prior = PriorSpec::reciprocal(1.0, 20.0).unwrap();
        // midpoint rule in log space: integrand x * c/x = c is constant
        let n = 1000;
        let (la, lb) = (1f64.ln(), 20f64.ln());
        let h = (lb - la) / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let x = (la + (i as f64 + 0.5) * h).exp();
                prior.pdf(x) * x * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_prior_mean() {
        let prior = PriorSpec::uniform(1.0, 20.0).unwrap();
        let draws = sample_prior(1_000_000, &prior, SeedSpec::new(11)).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 10.5).abs() < 0.01 * 10.5);
        assert!(draws.iter().all(|&x| prior.contains(x)));
    }
}
