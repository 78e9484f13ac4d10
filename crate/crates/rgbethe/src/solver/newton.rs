//! Damped Newton iterations for the real Λ systems and the complex rapidity
//! systems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{SolveConfig, SolverError};

const MAX_HALVINGS: u32 = 30;

fn max_abs_real(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn max_abs_complex(v: &DVector<Complex64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.norm()))
}

/// Newton with step halving on a real system. Returns the solution and the
/// final max-norm residual.
///
/// `floor` estimates the f64 evaluation noise of the residual at the current
/// iterate; convergence is accepted at max(newton_tol, floor), since no
/// iteration can push the measured residual below the rounding of its own
/// evaluation.
pub fn newton_real<F, J, E>(
    x0: &[f64],
    f: F,
    jac: J,
    floor: E,
    config: &SolveConfig,
) -> Result<(Vec<f64>, f64), SolverError>
where
    F: Fn(&[f64]) -> DVector<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
    E: Fn(&[f64]) -> f64,
{
    let mut x = DVector::from_column_slice(x0);
    let mut res = f(x.as_slice());
    let mut res_norm = max_abs_real(&res);
    for _ in 0..config.max_iter {
        if res_norm <= config.newton_tol.max(floor(x.as_slice())) {
            return Ok((x.as_slice().to_vec(), res_norm));
        }
        let j = if config.fd_jacobian {
            fd_jacobian_real(x.as_slice(), &f)
        } else {
            jac(x.as_slice())
        };
        let delta = j
            .lu()
            .solve(&res)
            .ok_or(SolverError::LinearSystemSingular)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x - &delta * lambda;
            let trial_res = f(trial.as_slice());
            let trial_norm = max_abs_real(&trial_res);
            if trial_norm.is_finite() && trial_norm < res_norm {
                x = trial;
                res = trial_res;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(SolverError::NoConvergence { residual: res_norm });
        }
    }
    if res_norm <= config.newton_tol.max(floor(x.as_slice())) {
        Ok((x.as_slice().to_vec(), res_norm))
    } else {
        Err(SolverError::NoConvergence { residual: res_norm })
    }
}

/// Newton with step halving on a complex-analytic system. `guard` rejects
/// iterates that walk into forbidden regions (pole neighborhoods); a step
/// that cannot escape the guard by damping is reported as a pole collision.
/// `floor` plays the same role as in [`newton_real`].
pub fn newton_complex<F, J, G, E>(
    x0: &[Complex64],
    f: F,
    jac: J,
    guard: G,
    floor: E,
    config: &SolveConfig,
) -> Result<(Vec<Complex64>, f64), SolverError>
where
    F: Fn(&[Complex64]) -> DVector<Complex64>,
    J: Fn(&[Complex64]) -> DMatrix<Complex64>,
    G: Fn(&[Complex64]) -> bool,
    E: Fn(&[Complex64]) -> f64,
{
    if !guard(x0) {
        return Err(SolverError::PoleCollision);
    }
    let mut x = DVector::from_column_slice(x0);
    let mut res = f(x.as_slice());
    let mut res_norm = max_abs_complex(&res);
    for _ in 0..config.max_iter {
        if res_norm <= config.newton_tol.max(floor(x.as_slice())) {
            return Ok((x.as_slice().to_vec(), res_norm));
        }
        let j = if config.fd_jacobian {
            fd_jacobian_complex(x.as_slice(), &f)
        } else {
            jac(x.as_slice())
        };
        let delta = j
            .lu()
            .solve(&res)
            .ok_or(SolverError::LinearSystemSingular)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        let mut guard_blocked = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x - &delta * Complex64::new(lambda, 0.0);
            if !guard(trial.as_slice()) {
                guard_blocked = true;
                lambda *= 0.5;
                continue;
            }
            let trial_res = f(trial.as_slice());
            let trial_norm = max_abs_complex(&trial_res);
            if trial_norm.is_finite() && trial_norm < res_norm {
                x = trial;
                res = trial_res;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            guard_blocked = false;
            lambda *= 0.5;
        }
        if !accepted {
            return if guard_blocked {
                Err(SolverError::PoleCollision)
            } else {
                Err(SolverError::NoConvergence { residual: res_norm })
            };
        }
    }
    if res_norm <= config.newton_tol.max(floor(x.as_slice())) {
        Ok((x.as_slice().to_vec(), res_norm))
    } else {
        Err(SolverError::NoConvergence { residual: res_norm })
    }
}

fn fd_jacobian_real<F>(x: &[f64], f: &F) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let n = x.len();
    let f0 = f(x);
    let mut j = DMatrix::zeros(f0.len(), n);
    let mut work = x.to_vec();
    for col in 0..n {
        let h = 1e-7 * (1.0 + x[col].abs());
        work[col] = x[col] + h;
        let fp = f(&work);
        work[col] = x[col];
        j.set_column(col, &((fp - &f0) / h));
    }
    j
}

fn fd_jacobian_complex<F>(x: &[Complex64], f: &F) -> DMatrix<Complex64>
where
    F: Fn(&[Complex64]) -> DVector<Complex64>,
{
    let n = x.len();
    let f0 = f(x);
    let mut j = DMatrix::zeros(f0.len(), n);
    let mut work = x.to_vec();
    for col in 0..n {
        let h = Complex64::new(1e-7 * (1.0 + x[col].norm()), 0.0);
        work[col] = x[col] + h;
        let fp = f(&work);
        work[col] = x[col];
        j.set_column(col, &((fp - &f0) / h));
    }
    j
}

/// Condition estimate of a complex Jacobian from the LU pivot spread.
pub fn condition_estimate(j: &DMatrix<Complex64>) -> f64 {
    let n = j.nrows();
    let lu = j.clone().lu();
    let u = lu.u();
    let mut max_p: f64 = 0.0;
    let mut min_p = f64::INFINITY;
    for i in 0..n {
        let p = u[(i, i)].norm();
        max_p = max_p.max(p);
        min_p = min_p.min(p);
    }
    if min_p == 0.0 {
        f64::INFINITY
    } else {
        max_p / min_p
    }
}
