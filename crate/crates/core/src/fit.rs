//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.
//!
//! Both the bimodal histogram fit and the PSD model fit run through
//! [`levenberg_marquardt`]. Problems supply residuals, an analytic Jacobian and
//! optionally a projection that keeps parameters inside their box.

use nalgebra::{DMatrix, DVector};

pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    /// Row-major `n_residuals x n_params`.
    fn jacobian(&self, params: &[f64], out: &mut DMatrix<f64>);
    fn project(&self, _params: &mut [f64]) {}
}

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged once an accepted step improves the cost by less than this
    /// fraction.
    pub relative_tolerance: f64,
    /// Converged once the root-mean-square residual drops below this.
    pub absolute_rms: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            absolute_rms: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    initial: &[f64],
    options: &LmOptions,
) -> LmOutcome {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut params = initial.to_vec();
    problem.project(&mut params);

    let mut r = vec![0.0; m];
    problem.residuals(&params, &mut r);
    let mut cost = half_sq(&r);
    let mut jac = DMatrix::zeros(m, n);
    let mut trial = vec![0.0; n];
    let mut trial_r = vec![0.0; m];
    let mut damping = options.initial_damping;
    let abs_cost = 0.5 * m as f64 * options.absolute_rms * options.absolute_rms;

    let mut converged = !cost.is_finite() || cost <= abs_cost;
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        problem.jacobian(&params, &mut jac);
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let gradient = &jt * DVector::from_column_slice(&r);
        let scale: Vec<f64> = (0..n).map(|i| normal[(i, i)].max(1e-12)).collect();

        // inner loop: raise damping until a step lowers the cost
        let mut accepted = false;
        while damping < 1e20 {
            let mut lhs = normal.clone();
            for i in 0..n {
                lhs[(i, i)] += damping * scale[i];
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&gradient)),
                None => {
                    damping *= 10.0;
                    continue;
                }
            };
            for i in 0..n {
                trial[i] = params[i] + step[i];
            }
            problem.project(&mut trial);
            let moved = trial
                .iter()
                .zip(&params)
                .any(|(a, b)| (a - b).abs() > 1e-15 * (1.0 + b.abs()));
            if !moved {
                // projection pinned the step: stationary within the box
                converged = true;
                break;
            }
            problem.residuals(&trial, &mut trial_r);
            let trial_cost = half_sq(&trial_r);
            if trial_cost.is_finite() && trial_cost < cost {
                let improvement = (cost - trial_cost) / cost;
                params.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                damping = (damping / 3.0).max(1e-12);
                accepted = true;
                if improvement < options.relative_tolerance || cost <= abs_cost {
                    converged = true;
                }
                break;
            }
            damping *= 4.0;
        }
        if !accepted && !converged {
            // no descent direction left at machine precision
            converged = true;
        }
    }

    LmOutcome {
        rms: (2.0 * cost / m.max(1) as f64).sqrt(),
        params,
        cost,
        iterations,
        converged,
    }
}
