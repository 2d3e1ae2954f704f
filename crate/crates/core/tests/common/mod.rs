//! Helpers shared by the integration test binaries.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use ts_estimate::{evaluate_max_quadratic, fit_ridge, RegressionProblem};

pub fn random_problem(rng: &mut ChaCha20Rng, rows: usize, cols: usize, ridge: f64) -> RegressionProblem {
    let features = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0));
    let targets = DVector::from_fn(rows, |_, _| rng.random_range(-5.0..5.0));
    RegressionProblem::new(features, targets, ridge).unwrap()
}

pub fn max_objective(beta: &[f64], problem: &RegressionProblem) -> f64 {
    evaluate_max_quadratic(beta, problem).0
}

/// Log-sum-exp smoothing of the max-row objective and its gradient.
fn smoothed(beta: &DVector<f64>, problem: &RegressionProblem, mu: f64) -> (f64, DVector<f64>) {
    let r = problem.targets() - problem.features() * beta;
    let q = r.map(|v| v * v);
    let top = q.max();
    let w = q.map(|v| ((v - top) / mu).exp());
    let z = w.sum();
    let value = top + mu * z.ln() + problem.ridge() * beta.norm_squared();
    let coeff = DVector::from_fn(r.len(), |i, _| -2.0 * r[i] * w[i] / z);
    let grad = problem.features().tr_mul(&coeff) + beta * (2.0 * problem.ridge());
    (value, grad)
}

/// BFGS on the smoothed objective with the smoothing driven towards zero.
fn smoothed_descent(problem: &RegressionProblem, start: &[f64], scale: f64) -> Vec<f64> {
    let m = start.len();
    let mut x = DVector::from_column_slice(start);
    let mut mu = 1e-2 * scale;
    while mu > 1e-11 * scale {
        let mut h = DMatrix::<f64>::identity(m, m);
        let (mut f, mut g) = smoothed(&x, problem, mu);
        for _ in 0..400 {
            if g.norm() < 1e-14 * (1.0 + f) {
                break;
            }
            let dir = -(&h * &g);
            let slope = g.dot(&dir);
            let dir = if slope < 0.0 { dir } else { -g.clone() };
            let slope = g.dot(&dir);
            let mut step = 1.0;
            let (mut x_new, mut f_new, mut g_new);
            loop {
                x_new = &x + &dir * step;
                (f_new, g_new) = smoothed(&x_new, problem, mu);
                if f_new <= f + 1e-4 * step * slope || step < 1e-16 {
                    break;
                }
                step *= 0.5;
            }
            let s = &x_new - &x;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            if sy > 1e-300 {
                let rho = 1.0 / sy;
                let eye = DMatrix::<f64>::identity(m, m);
                let left = &eye - &s * y.transpose() * rho;
                let right = &eye - &y * s.transpose() * rho;
                h = &left * &h * &right + &s * s.transpose() * rho;
            }
            if f - f_new <= 1e-16 * f.abs() {
                x = x_new;
                break;
            }
            (x, f, g) = (x_new, f_new, g_new);
        }
        mu *= 0.1;
    }
    x.as_slice().to_vec()
}

/// Grid scan, then from several starts a smoothed quasi-Newton descent
/// polished by pattern search along random directions.
pub fn brute_force_minimax(problem: &RegressionProblem, rng: &mut ChaCha20Rng) -> f64 {
    let m = problem.n_features();
    let centre = fit_ridge(problem).unwrap().beta;
    let radius = 2.0 * centre.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let steps = match m {
        1 => 400,
        2 => 60,
        _ => 16,
    };
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    let total = (steps + 1usize).pow(m as u32);
    for idx in 0..total {
        let mut rest = idx;
        let point: Vec<f64> = (0..m)
            .map(|j| {
                let k = rest % (steps + 1);
                rest /= steps + 1;
                centre[j] - radius + 2.0 * radius * k as f64 / steps as f64
            })
            .collect();
        starts.push((max_objective(&point, problem), point));
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.truncate(4);
    for _ in 0..4 {
        let point = (0..m)
            .map(|j| centre[j] + rng.random_range(-radius..radius))
            .collect::<Vec<_>>();
        starts.push((max_objective(&point, problem), point));
    }

    let scale = starts[0].0.max(1e-300);
    let mut best = f64::INFINITY;
    for (_, point) in starts {
        let mut point = smoothed_descent(problem, &point, scale);
        let mut value = max_objective(&point, problem);
        let mut step = radius / 4.0;
        while step > 1e-12 {
            let mut improved = false;
            for _ in 0..(32 * m + 32) {
                let dir: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                for sign in [1.0, -1.0] {
                    let trial: Vec<f64> = point
                        .iter()
                        .zip(&dir)
                        .map(|(p, d)| p + sign * step * d / norm)
                        .collect();
                    let v = max_objective(&trial, problem);
                    if v < value {
                        value = v;
                        point = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(value);
    }
    best
}
