//! Second stage: linear-in-features regressors for one scalar parameter.
//!
//! Two fitters share [`RegressionProblem`]:
//!
//! * [`fit_ridge`] minimises the empirical risk
//!   `(1/M) Σ (t_i - βᵀφ_i)² + λ‖β‖²` (the Bayes objective), and
//! * [`fit_minimax`] minimises the worst-case risk
//!   `F(β) = max_i (t_i - βᵀφ_i)² + λ‖β‖²`.
//!
//! `F` equals `‖Φβ - t‖²_∞ + λ‖β‖²`, so the epigraph program is the convex QP
//!
//! ```text
//! minimise   s² + λ‖β‖²
//! subject to -s <= t_i - φ_iᵀβ <= s,   i = 1..M
//! ```
//!
//! which is solved with a Mehrotra predictor-corrector interior-point method.
//! Optimality is certified independently of the solver path: for any weights
//! `w` on the probability simplex,
//!
//! ```text
//! g(w) = min_β Σ w_i (t_i - φ_iᵀβ)² + λ‖β‖²  <=  min_β F(β)
//! ```
//!
//! and by the minimax theorem the bound is tight at the optimal weights. The
//! normalised constraint multipliers of the QP converge to those weights, so
//! `F(β) - g(w)` is a sound, shrinking certificate.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsError};

/// Regressor matrix (one row per training example), targets and ridge weight.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    ridge: f64,
}

impl RegressionProblem {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>, ridge: f64) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(TsError::config(
                "regression problem needs at least one row and one column",
            ));
        }
        if features.nrows() != targets.len() {
            return Err(TsError::config(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(TsError::config(format!(
                "ridge weight must be finite and >= 0, got {ridge}"
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(TsError::config("regression problem contains non-finite entries"));
        }
        Ok(Self {
            features,
            targets,
            ridge,
        })
    }

    /// Builds the problem from feature rows.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64], ridge: f64) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(TsError::config("feature rows have unequal lengths"));
        }
        let features = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(features, DVector::from_column_slice(targets), ridge)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn with_ridge(&self, ridge: f64) -> Result<Self> {
        Self::new(self.features.clone(), self.targets.clone(), ridge)
    }

    fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.targets - &self.features * beta
    }

    /// Empirical ridge objective `(1/M) Σ r_i² + λ‖β‖²`.
    pub fn mean_objective(&self, beta: &[f64]) -> f64 {
        let beta = DVector::from_column_slice(beta);
        let r = self.residuals(&beta);
        r.norm_squared() / self.n_rows() as f64 + self.ridge * beta.norm_squared()
    }

    /// Gradient `(2/M) Φᵀ(Φβ - t) + 2λβ` of [`Self::mean_objective`].
    pub fn mean_gradient(&self, beta: &[f64]) -> DVector<f64> {
        let beta = DVector::from_column_slice(beta);
        let r = self.residuals(&beta);
        self.features.tr_mul(&r) * (-2.0 / self.n_rows() as f64) + beta * (2.0 * self.ridge)
    }
}

/// Fitted coefficient vector with its objective value and optimality gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub beta: Vec<f64>,
    pub objective: f64,
    /// Upper bound on `objective - inf objective`.
    pub certificate: f64,
}

impl Coefficients {
    pub fn predict(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.beta.len());
        self.beta.iter().zip(features).map(|(b, f)| b * f).sum()
    }
}

/// Column equilibration: `Φ = Φ̃ D⁻¹` with every column of `Φ̃` of unit
/// max-norm.
fn column_scales(features: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        features.ncols(),
        features.column_iter().map(|c| {
            let amax = c.amax();
            if amax > 0.0 {
                amax.recip()
            } else {
                1.0
            }
        }),
    )
}

fn scale_columns(features: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = features.clone();
    for (mut col, &dj) in scaled.column_iter_mut().zip(d.iter()) {
        col *= dj;
    }
    scaled
}

/// Minimiser of the empirical ridge objective.
///
/// The normal equations are solved by Cholesky in equilibrated coordinates
/// and polished with iterative refinement. When rounding makes the
/// regularised matrix numerically indefinite the solver falls back to a QR
/// factorisation of the stacked system `[Φ/√M; √λ I]`.
pub fn fit_ridge(problem: &RegressionProblem) -> Result<Coefficients> {
    let rows = problem.n_rows() as f64;
    let lambda = problem.ridge;
    let d = column_scales(&problem.features);
    let phi = scale_columns(&problem.features, &d);

    let mut gram = phi.tr_mul(&phi) / rows;
    for j in 0..gram.ncols() {
        gram[(j, j)] += lambda * d[j] * d[j];
    }
    let rhs = phi.tr_mul(&problem.targets) / rows;

    let beta = match Cholesky::new(gram.clone()) {
        Some(chol) if lambda > 0.0 || well_conditioned(&chol) => {
            let mut beta_s = chol.solve(&rhs);
            let mut beta = beta_s.component_mul(&d);
            // iterative refinement against the unscaled gradient
            let mut best = problem.mean_gradient(beta.as_slice()).norm();
            for _ in 0..3 {
                let g = problem.mean_gradient(beta.as_slice()) * 0.5;
                let delta = chol.solve(&g.component_mul(&d));
                let cand_s = &beta_s - &delta;
                let cand = cand_s.component_mul(&d);
                let norm = problem.mean_gradient(cand.as_slice()).norm();
                if !(norm < best) {
                    break;
                }
                best = norm;
                beta_s = cand_s;
                beta = cand;
            }
            beta
        }
        _ if lambda == 0.0 => return Err(TsError::RankDeficient),
        _ => ridge_qr(&phi, &problem.targets, lambda, &d)?.component_mul(&d),
    };

    let beta = beta.as_slice().to_vec();
    let objective = problem.mean_objective(&beta);
    Ok(Coefficients {
        beta,
        objective,
        certificate: 0.0,
    })
}

fn well_conditioned(chol: &Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    lo > 0.0 && (lo / hi).powi(2) > 1e3 * f64::EPSILON * diag.len() as f64
}

fn ridge_qr(phi: &DMatrix<f64>, targets: &DVector<f64>, lambda: f64, d: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, m) = phi.shape();
    let inv_sqrt_rows = (rows as f64).sqrt().recip();
    let mut stacked = DMatrix::zeros(rows + m, m);
    stacked.rows_mut(0, rows).copy_from(&(phi * inv_sqrt_rows));
    for j in 0..m {
        stacked[(rows + j, j)] = lambda.sqrt() * d[j];
    }
    let mut rhs = DVector::zeros(rows + m);
    rhs.rows_mut(0, rows).copy_from(&(targets * inv_sqrt_rows));
    let qr = stacked.qr();
    let qtb = qr.q().tr_mul(&rhs);
    qr.r().solve_upper_triangular(&qtb).ok_or(TsError::RankDeficient)
}

/// Worst-case objective `max_i (t_i - βᵀφ_i)² + λ‖β‖²` and the smallest
/// index attaining the maximum.
pub fn evaluate_max_quadratic(beta: &[f64], problem: &RegressionProblem) -> (f64, usize) {
    let beta = DVector::from_column_slice(beta);
    let r = problem.residuals(&beta);
    let (mut worst, mut arg) = (f64::NEG_INFINITY, 0);
    for (i, ri) in r.iter().enumerate() {
        let q = ri * ri;
        if q > worst {
            worst = q;
            arg = i;
        }
    }
    (worst + problem.ridge * beta.norm_squared(), arg)
}

/// Lower bound `g(w)` on the minimax optimum for simplex weights `w`.
///
/// Weights are normalised internally; negative weights are rejected.
pub fn minimax_lower_bound(problem: &RegressionProblem, weights: &[f64]) -> Result<f64> {
    if weights.len() != problem.n_rows() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(TsError::domain("weights must be non-negative, one per row"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(TsError::domain("weights must not all be zero"));
    }
    let w = DVector::from_iterator(weights.len(), weights.iter().map(|v| v / total));
    let d = column_scales(&problem.features);
    let phi = scale_columns(&problem.features, &d);
    let penalty = d.map(|dj| problem.ridge * dj * dj);
    let beta_s = weighted_ridge(&phi, &problem.targets, &w, &penalty);
    let beta = beta_s.component_mul(&d);
    let r = problem.residuals(&beta);
    Ok(r.iter().zip(w.iter()).map(|(ri, wi)| wi * ri * ri).sum::<f64>() + problem.ridge * beta.norm_squared())
}

/// Minimiser of `Σ w_i (t_i - φ_iᵀβ)² + Σ penalty_j β_j²`.
fn weighted_ridge(
    phi: &DMatrix<f64>,
    targets: &DVector<f64>,
    w: &DVector<f64>,
    penalty: &DVector<f64>,
) -> DVector<f64> {
    let mut weighted = phi.clone();
    for (mut row, &wi) in weighted.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    let mut a = phi.tr_mul(&weighted);
    for j in 0..a.ncols() {
        a[(j, j)] += penalty[j];
    }
    let b = weighted.tr_mul(targets);
    solve_psd(a, &b)
}

/// Interior-point settings for [`fit_minimax`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxSolver {
    /// Absolute bound on the certified optimality gap.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl MinimaxSolver {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            max_iterations: 200,
        }
    }

    /// Solves the minimax program, starting from the ridge solution when no
    /// warm start is supplied. The returned objective never exceeds that of
    /// the warm start.
    pub fn solve(&self, problem: &RegressionProblem, warm_start: Option<&[f64]>) -> Result<Coefficients> {
        if !(self.tolerance > 0.0) {
            return Err(TsError::config("minimax tolerance must be positive"));
        }
        let warm = match warm_start {
            Some(b) if b.len() == problem.n_features() => b.to_vec(),
            Some(_) => return Err(TsError::config("warm start has the wrong dimension")),
            None => warm_start_beta(problem),
        };
        InteriorPoint::new(problem, &warm).run(self.tolerance, self.max_iterations)
    }
}

fn warm_start_beta(problem: &RegressionProblem) -> Vec<f64> {
    match fit_ridge(problem) {
        Ok(c) => c.beta,
        Err(_) => {
            // λ = 0 with a singular Gram: tiny ridge is good enough to start
            let eps = 1e-10 * problem.features.norm_squared() / problem.n_rows() as f64;
            problem
                .with_ridge(eps.max(f64::MIN_POSITIVE))
                .and_then(|p| fit_ridge(&p))
                .map(|c| c.beta)
                .unwrap_or_else(|_| vec![0.0; problem.n_features()])
        }
    }
}

/// Approximate minimiser of `max_i (t_i - βᵀφ_i)² + λ‖β‖²` with a certified
/// gap at most `tolerance`.
pub fn fit_minimax(problem: &RegressionProblem, tolerance: f64) -> Result<Coefficients> {
    MinimaxSolver::new(tolerance).solve(problem, None)
}

/// Mehrotra predictor-corrector on the epigraph QP in an orthonormal basis.
///
/// With equilibrated features `Φ̃ = Φ D = U Σ Vᵀ` (truncated to numerical
/// rank `r`) and targets `t̃ = t / c`, the variables are `x = (γ, s)` with
/// `γ = Σ Vᵀ β̃ ∈ R^r`, so the fit is `Uγ`. Directions of `β̃` invisible to
/// the fit are eliminated by minimising the penalty `β̃ᵀΛβ̃` subject to
/// `Vᵀβ̃ = Σ⁻¹γ`, which leaves `γᵀPγ` with `P = Σ⁻¹ (VᵀΛ⁻¹V)⁻¹ Σ⁻¹` and
/// `Λ = diag(λ d_j²)`. Working with orthonormal `U` keeps the Newton system
/// and the certificate solve well conditioned even though the shape features
/// contain exact collinearities.
///
/// Constraint rows come in pairs per training row:
/// `t̃_i - u_iᵀγ <= s` (upper, multiplier `z⁺`) and
/// `u_iᵀγ - t̃_i <= s` (lower, multiplier `z⁻`).
struct InteriorPoint<'a> {
    problem: &'a RegressionProblem,
    phi: DMatrix<f64>,
    q: DMatrix<f64>,
    /// `Σ Vᵀ`, mapping equilibrated coefficients to `γ`.
    forward: DMatrix<f64>,
    /// Penalty-minimal `β̃` for a given `γ`.
    backward: DMatrix<f64>,
    targets: DVector<f64>,
    col_scale: DVector<f64>,
    target_scale: f64,
    penalty: DMatrix<f64>,
    warm: Vec<f64>,
}

struct Iterate {
    beta: DVector<f64>,
    s: f64,
    slack_up: DVector<f64>,
    slack_lo: DVector<f64>,
    z_up: DVector<f64>,
    z_lo: DVector<f64>,
}

struct Direction {
    beta: DVector<f64>,
    s: f64,
    slack_up: DVector<f64>,
    slack_lo: DVector<f64>,
    z_up: DVector<f64>,
    z_lo: DVector<f64>,
}

impl<'a> InteriorPoint<'a> {
    fn new(problem: &'a RegressionProblem, warm: &[f64]) -> Self {
        let col_scale = column_scales(&problem.features);
        let phi = scale_columns(&problem.features, &col_scale);
        let amax = problem.targets.amax();
        let target_scale = if amax > 0.0 { amax } else { 1.0 };
        let targets = &problem.targets / target_scale;
        let lambda = col_scale.map(|d| problem.ridge * d * d);

        let size = phi.nrows().max(phi.ncols()) as f64;
        let svd = phi.clone().svd(true, true);
        let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
        let sigma_max = svd.singular_values.max();
        let cutoff = sigma_max * f64::EPSILON * size;
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > cutoff)
            .collect();
        let r = keep.len();
        let sigma = DVector::from_iterator(r, keep.iter().map(|&k| svd.singular_values[k]));
        let q = u.select_columns(&keep);
        let v = v_t.select_rows(&keep).transpose();
        let forward = DMatrix::from_diagonal(&sigma) * v.transpose();
        let inv_sigma = DMatrix::from_diagonal(&sigma.map(f64::recip));

        let reduced = if problem.ridge > 0.0 {
            // M = VᵀΛ⁻¹V, β̃ = Λ⁻¹ V M⁻¹ Σ⁻¹ γ, P = Σ⁻¹ M⁻¹ Σ⁻¹
            let lambda_inv_v = DMatrix::from_diagonal(&lambda.map(f64::recip)) * &v;
            Cholesky::new(v.transpose() * &lambda_inv_v).map(|chol| {
                (
                    lambda_inv_v * chol.inverse() * &inv_sigma,
                    inv_sigma.clone() * chol.inverse() * &inv_sigma,
                )
            })
        } else {
            None
        };
        let (backward, penalty) = reduced.unwrap_or_else(|| (&v * &inv_sigma, DMatrix::zeros(r, r)));
        Self {
            problem,
            phi,
            q,
            forward,
            backward,
            targets,
            col_scale,
            target_scale,
            penalty,
            warm: warm.to_vec(),
        }
    }

    fn to_original(&self, x: &DVector<f64>) -> Vec<f64> {
        // refine so that Φ̃β̃ reproduces Uγ despite rounding in the basis
        let fit = &self.q * x;
        let mut beta_s = &self.backward * x;
        for _ in 0..2 {
            let err = &fit - &self.phi * &beta_s;
            beta_s += &self.backward * self.q.tr_mul(&err);
        }
        (beta_s.component_mul(&self.col_scale) * self.target_scale)
            .as_slice()
            .to_vec()
    }

    fn to_basis(&self, beta: &[f64]) -> DVector<f64> {
        let beta_s = DVector::from_iterator(
            beta.len(),
            beta.iter()
                .zip(self.col_scale.iter())
                .map(|(b, d)| b / (d * self.target_scale)),
        );
        &self.forward * beta_s
    }

    /// `c² g(w)` evaluated in the working basis.
    fn lower_bound(&self, weights: &DVector<f64>) -> Option<f64> {
        let total = weights.sum();
        if !(total > 0.0) {
            return None;
        }
        let w = weights / total;
        let mut weighted = self.q.clone();
        for (mut row, &wi) in weighted.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let a = self.q.tr_mul(&weighted) + &self.penalty;
        let b = weighted.tr_mul(&self.targets);
        let x = solve_psd(a, &b);
        let r = &self.targets - &self.q * &x;
        let value = r.iter().zip(w.iter()).map(|(ri, wi)| wi * ri * ri).sum::<f64>() + x.dot(&(&self.penalty * &x));
        let scaled = value * self.target_scale * self.target_scale;
        scaled.is_finite().then_some(scaled)
    }

    fn run(&self, tolerance: f64, max_iterations: usize) -> Result<Coefficients> {
        let rows = self.problem.n_rows();
        let n_cons = 2 * rows;

        let (mut best_value, _) = evaluate_max_quadratic(&self.warm, self.problem);
        let mut best_beta = self.warm.clone();
        let mut best_lower = f64::NEG_INFINITY;

        let x0 = self.to_basis(&self.warm);
        let r0 = &self.targets - &self.q * &x0;
        let s0 = 1.1 * r0.amax() + 1e-2;
        let mut it = Iterate {
            slack_up: r0.map(|r| s0 - r),
            slack_lo: r0.map(|r| s0 + r),
            z_up: DVector::from_element(rows, s0 / rows as f64),
            z_lo: DVector::from_element(rows, s0 / rows as f64),
            beta: x0,
            s: s0,
        };

        for _ in 0..max_iterations {
            let beta_orig = self.to_original(&it.beta);
            let (value, _) = evaluate_max_quadratic(&beta_orig, self.problem);
            if value < best_value {
                best_value = value;
                best_beta = beta_orig;
            }
            if let Some(lower) = self.lower_bound(&(&it.z_up + &it.z_lo)) {
                best_lower = best_lower.max(lower);
            }
            if best_value - best_lower <= tolerance {
                return Ok(self.finish(best_beta, best_value, best_lower));
            }

            let mu = (it.slack_up.dot(&it.z_up) + it.slack_lo.dot(&it.z_lo)) / n_cons as f64;
            if !(mu > 0.0) || !mu.is_finite() {
                break;
            }

            let w_up = it.z_up.component_div(&it.slack_up);
            let w_lo = it.z_lo.component_div(&it.slack_lo);
            let Some(kkt) = self.factor(&w_up, &w_lo) else { break };

            let (rd_beta, rd_s) = self.dual_residual(&it);
            let (rp_up, rp_lo) = self.primal_residual(&it);
            let residuals = Residuals {
                rd_beta: &rd_beta,
                rd_s,
                rp_up: &rp_up,
                rp_lo: &rp_lo,
            };

            let comp_up = it.slack_up.component_mul(&it.z_up);
            let comp_lo = it.slack_lo.component_mul(&it.z_lo);
            let affine = self.direction(&kkt, &it, &w_up, &w_lo, &residuals, &comp_up, &comp_lo);
            let alpha_aff = step_to_boundary(&it, &affine, 1.0);
            let mu_aff = ((&it.slack_up + &affine.slack_up * alpha_aff).dot(&(&it.z_up + &affine.z_up * alpha_aff))
                + (&it.slack_lo + &affine.slack_lo * alpha_aff).dot(&(&it.z_lo + &affine.z_lo * alpha_aff)))
                / n_cons as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let target = DVector::from_element(rows, sigma * mu);

            let cc_up = comp_up + affine.slack_up.component_mul(&affine.z_up) - &target;
            let cc_lo = comp_lo + affine.slack_lo.component_mul(&affine.z_lo) - &target;
            let step = self.direction(&kkt, &it, &w_up, &w_lo, &residuals, &cc_up, &cc_lo);
            let alpha = step_to_boundary(&it, &step, 0.99);
            if !(alpha > 0.0) {
                break;
            }
            it.beta += &step.beta * alpha;
            it.s += step.s * alpha;
            it.slack_up += &step.slack_up * alpha;
            it.slack_lo += &step.slack_lo * alpha;
            it.z_up += &step.z_up * alpha;
            it.z_lo += &step.z_lo * alpha;
        }

        let coeffs = self.finish(best_beta, best_value, best_lower);
        if coeffs.certificate <= tolerance {
            return Ok(coeffs);
        }
        Err(TsError::BudgetExceeded {
            iterations: max_iterations,
            tolerance,
            best: Box::new(coeffs),
        })
    }

    fn finish(&self, beta: Vec<f64>, value: f64, lower: f64) -> Coefficients {
        let certificate = if lower.is_finite() {
            (value - lower).max(0.0)
        } else {
            f64::INFINITY
        };
        Coefficients {
            beta,
            objective: value,
            certificate,
        }
    }

    /// Cholesky of `H + GᵀWG`, regularised if rounding makes it indefinite.
    fn factor(&self, w_up: &DVector<f64>, w_lo: &DVector<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
        let m = self.q.ncols();
        let w_sum = w_up + w_lo;
        let w_diff = w_up - w_lo;
        let mut weighted = self.q.clone();
        for (mut row, &wi) in weighted.row_iter_mut().zip(w_sum.iter()) {
            row *= wi;
        }
        let mut k = DMatrix::zeros(m + 1, m + 1);
        k.view_mut((0, 0), (m, m))
            .copy_from(&(self.q.tr_mul(&weighted) + &self.penalty * 2.0));
        let cross = self.q.tr_mul(&w_diff);
        for j in 0..m {
            k[(j, m)] = cross[j];
            k[(m, j)] = cross[j];
        }
        k[(m, m)] = 2.0 + w_sum.sum();

        let scale = k.diagonal().amax().max(1.0);
        let mut shift = 0.0;
        for _ in 0..12 {
            let mut trial = k.clone();
            for j in 0..=m {
                trial[(j, j)] += shift;
            }
            if let Some(chol) = Cholesky::new(trial) {
                return Some(chol);
            }
            shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        }
        None
    }

    /// `r_d = Hx + Gᵀz`.
    fn dual_residual(&self, it: &Iterate) -> (DVector<f64>, f64) {
        let z_diff = &it.z_lo - &it.z_up;
        let rd_beta = self.q.tr_mul(&z_diff) + &self.penalty * &it.beta * 2.0;
        let rd_s = 2.0 * it.s - it.z_up.sum() - it.z_lo.sum();
        (rd_beta, rd_s)
    }

    /// `r_p = Gx + σ - h`.
    fn primal_residual(&self, it: &Iterate) -> (DVector<f64>, DVector<f64>) {
        let fit = &self.q * &it.beta;
        let rp_up = DVector::from_fn(fit.len(), |i, _| self.targets[i] - fit[i] - it.s + it.slack_up[i]);
        let rp_lo = DVector::from_fn(fit.len(), |i, _| fit[i] - self.targets[i] - it.s + it.slack_lo[i]);
        (rp_up, rp_lo)
    }

    /// Newton direction for complementarity residual `r_c`.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        kkt: &Cholesky<f64, nalgebra::Dyn>,
        it: &Iterate,
        w_up: &DVector<f64>,
        w_lo: &DVector<f64>,
        res: &Residuals<'_>,
        rc_up: &DVector<f64>,
        rc_lo: &DVector<f64>,
    ) -> Direction {
        let m = self.q.ncols();
        // q = W r_p - Σ⁻¹ r_c per constraint row
        let q_up = w_up.component_mul(res.rp_up) - rc_up.component_div(&it.slack_up);
        let q_lo = w_lo.component_mul(res.rp_lo) - rc_lo.component_div(&it.slack_lo);
        // Gᵀq with G⁺ = (-q_i, -1), G⁻ = (q_i, -1)
        let gtq_beta = self.q.tr_mul(&(&q_lo - &q_up));
        let gtq_s = -(q_up.sum() + q_lo.sum());

        let mut rhs = DVector::zeros(m + 1);
        rhs.rows_mut(0, m).copy_from(&(-(res.rd_beta + gtq_beta)));
        rhs[m] = -(res.rd_s + gtq_s);
        let dx = kkt.solve(&rhs);
        let d_beta = dx.rows(0, m).into_owned();
        let d_s = dx[m];

        let fit = &self.q * &d_beta;
        let g_up = fit.map(|v| -v - d_s);
        let g_lo = fit.map(|v| v - d_s);
        let z_up = w_up.component_mul(&(&g_up + res.rp_up)) - rc_up.component_div(&it.slack_up);
        let z_lo = w_lo.component_mul(&(&g_lo + res.rp_lo)) - rc_lo.component_div(&it.slack_lo);
        let slack_up = -(res.rp_up + &g_up);
        let slack_lo = -(res.rp_lo + &g_lo);
        Direction {
            beta: d_beta,
            s: d_s,
            slack_up,
            slack_lo,
            z_up,
            z_lo,
        }
    }
}

struct Residuals<'r> {
    rd_beta: &'r DVector<f64>,
    rd_s: f64,
    rp_up: &'r DVector<f64>,
    rp_lo: &'r DVector<f64>,
}

/// Solves `A x = b` for symmetric positive semi-definite `A`, using a
/// pseudo-inverse when Cholesky fails.
fn solve_psd(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        let mut x = chol.solve(b);
        let resid = b - &a * &x;
        x += chol.solve(&resid);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    let eig = SymmetricEigen::new(a);
    let cutoff = eig.eigenvalues.amax() * f64::EPSILON * eig.eigenvalues.len() as f64;
    let qtb = eig.eigenvectors.tr_mul(b);
    let scaled = DVector::from_iterator(
        qtb.len(),
        qtb.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(v, &l)| if l > cutoff { v / l } else { 0.0 }),
    );
    &eig.eigenvectors * scaled
}

fn step_to_boundary(it: &Iterate, dir: &Direction, fraction: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    let pairs = [
        (&it.slack_up, &dir.slack_up),
        (&it.slack_lo, &dir.slack_lo),
        (&it.z_up, &dir.z_up),
        (&it.z_lo, &dir.z_lo),
    ];
    for (v, dv) in pairs {
        for (x, dx) in v.iter().zip(dv.iter()) {
            if *dx < 0.0 {
                alpha = alpha.min(-fraction * x / dx);
            }
        }
    }
    alpha.max(0.0)
}
