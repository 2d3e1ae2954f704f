//! First stage: order statistics, sample quantiles at levels `k/n` and the
//! feature maps fed to the linear second stage.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TsError};

/// Sample quantiles `α_k` at levels `k/n`, `k = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedVector {
    values: Vec<f64>,
    source_len: usize,
}

impl CompressedVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Size `N` of the sample this vector was computed from.
    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// Wraps precomputed quantiles. Values must be finite and non-decreasing.
    pub fn from_values(values: Vec<f64>, source_len: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(TsError::domain("compressed vector needs at least one quantile"));
        }
        if source_len <= values.len() {
            return Err(TsError::domain(format!(
                "source sample size {source_len} must exceed number of quantiles {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(TsError::domain("quantiles must be finite and non-decreasing"));
        }
        Ok(Self { values, source_len })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Scale,
    Shape,
}

impl FeatureKind {
    /// Feature dimension `m` produced from `n` quantiles.
    pub fn dimension(self, n: usize) -> usize {
        let base = 2 * n - 1;
        match self {
            FeatureKind::Scale => base,
            FeatureKind::Shape => 1 + base + base * (base + 1) / 2,
        }
    }

    pub fn apply(self, alpha: &CompressedVector) -> Result<FeatureVector> {
        match self {
            FeatureKind::Scale => feature_scale(alpha),
            FeatureKind::Shape => feature_shape(alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
}

pub fn order_statistics(y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(TsError::domain("order statistics of an empty sample"));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(TsError::domain("sample contains NaN"));
    }
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted)
}

/// Linear interpolation between adjacent order statistics at zero-based
/// position `p (N - 1)`.
pub fn sample_quantile(y_sorted: &[f64], p: f64) -> Result<f64> {
    if y_sorted.len() < 2 {
        return Err(TsError::domain("sample quantile needs at least two observations"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(TsError::domain(format!("quantile level must lie in (0, 1], got {p}")));
    }
    Ok(interpolate(y_sorted, p))
}

#[inline]
fn interpolate(y_sorted: &[f64], p: f64) -> f64 {
    let pos = p * (y_sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (pos.ceil() as usize).min(y_sorted.len() - 1);
    let frac = pos - lo as f64;
    let base = y_sorted[lo];
    if frac == 0.0 {
        base
    } else {
        base + frac * (y_sorted[hi] - base)
    }
}

pub fn compress(y: &[f64], n: usize) -> Result<CompressedVector> {
    if n == 0 {
        return Err(TsError::domain("number of quantiles must be at least 1"));
    }
    if y.len() <= n {
        return Err(TsError::domain(format!(
            "sample size {} must exceed number of quantiles {n}",
            y.len()
        )));
    }
    let sorted = order_statistics(y)?;
    let values = (1..=n).map(|k| interpolate(&sorted, k as f64 / n as f64)).collect();
    Ok(CompressedVector {
        values,
        source_len: y.len(),
    })
}

/// Quantiles followed by the ratios `α_2/α_1, …, α_n/α_1`.
pub fn feature_scale(alpha: &CompressedVector) -> Result<FeatureVector> {
    let a = &alpha.values;
    let first = a[0];
    if first == 0.0 {
        return Err(TsError::DegenerateInput("lowest quantile is zero".into()));
    }
    let mut values = Vec::with_capacity(FeatureKind::Scale.dimension(a.len()));
    values.extend_from_slice(a);
    values.extend(a[1..].iter().map(|v| v / first));
    Ok(FeatureVector {
        values,
        kind: FeatureKind::Scale,
    })
}

/// Monomials up to order two of `ψ = (α_1, …, α_n, α_1/α_n, …, α_{n-1}/α_n)`,
/// ordered as the constant, the linear terms, then `ψ_j ψ_k` for `j <= k` in
/// row-major order.
pub fn feature_shape(alpha: &CompressedVector) -> Result<FeatureVector> {
    let a = &alpha.values;
    let n = a.len();
    let last = a[n - 1];
    if last == 0.0 {
        return Err(TsError::DegenerateInput("highest quantile is zero".into()));
    }
    let mut psi = Vec::with_capacity(2 * n - 1);
    psi.extend_from_slice(a);
    psi.extend(a[..n - 1].iter().map(|v| v / last));

    let mut values = Vec::with_capacity(FeatureKind::Shape.dimension(n));
    values.push(1.0);
    values.extend_from_slice(&psi);
    for j in 0..psi.len() {
        for k in j..psi.len() {
            values.push(psi[j] * psi[k]);
        }
    }
    Ok(FeatureVector {
        values,
        kind: FeatureKind::Shape,
    })
}
