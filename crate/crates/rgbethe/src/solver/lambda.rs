//! Quadratic systems for the eigenvalue-based variables and the seeded
//! continuation that enumerates a full excitation sector.
//!
//! The systems close only for spin-1/2 levels. Enumeration labels states by
//! their weak-coupling spin-occupation pattern S and rides an exact
//! decoupling limit into the target coupling:
//!
//! * Dicke, in μ = G²Λ: μ_i² − G²N + μ_i(ε_i−ε_0) − G²Σ(μ_i−μ_j)/(ε_i−ε_j)
//!   = 0 decouples at G² = 0 with roots μ_i ∈ {0, ε_0−ε_i};
//! * XXZ, in μ = gΛ: μ_i² + 2μ_i − g²ΓN(n−N) − gΣZ_ij(μ_i−μ_j) = 0
//!   decouples at g = 0 with roots μ_i ∈ {0, −2};
//! * (p+ip): large-κ asymptotics seed a downhill ramp in κ itself, since the
//!   κ → ∞ eigenstates localize onto occupation patterns.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::newton::newton_real;
use super::{BetheSolution, SolveConfig, SolverError};
use crate::models::{sector_dimension, BosonParams, ModelSpec, ModelVariant};

/// Residuals of the quadratic Λ system (particle representation).
pub fn lambda_residual_vec(model: &ModelSpec, n: usize, lambdas: &[f64]) -> DVector<f64> {
    let m = model.num_levels();
    let nf = n as f64;
    let mut out = DVector::zeros(m);
    match model.boson {
        Some(BosonParams::Dicke { eps0 }) => {
            let g2 = model.coupling * model.coupling;
            for i in 0..m {
                let mut f =
                    g2 * lambdas[i] * lambdas[i] - nf + lambdas[i] * (model.levels[i] - eps0);
                for j in (0..m).filter(|&j| j != i) {
                    f -= g2 * (lambdas[i] - lambdas[j]) / (model.levels[i] - model.levels[j]);
                }
                out[i] = f;
            }
        }
        Some(BosonParams::Pip { eta0_sq, kappa }) => {
            // the Λ_0 term enters unweighted, 2Λ_0, with
            // 2Λ_0 = ΣΛ_j + 2κN eliminating Λ_0
            let lambda0 = 0.5 * (lambdas.iter().sum::<f64>() + 2.0 * kappa * nf);
            for i in 0..m {
                let ei = model.levels[i];
                let mut f =
                    lambdas[i] * lambdas[i] + nf * (m as f64 - nf) + 2.0 * kappa * lambdas[i]
                        - 2.0 * lambda0
                        - 2.0 * eta0_sq * (lambdas[i] + nf) / ei;
                for j in (0..m).filter(|&j| j != i) {
                    f -= model.z_hyp(i, j) * (lambdas[i] - lambdas[j]);
                }
                out[i] = f;
            }
        }
        None => {
            let gamma = model
                .realization
                .expect("xxz carries a realization")
                .gamma();
            let g = model.coupling;
            for i in 0..m {
                let mut f =
                    lambdas[i] * lambdas[i] - gamma * nf * (m as f64 - nf) + (2.0 / g) * lambdas[i];
                for j in (0..m).filter(|&j| j != i) {
                    f -= model.z_xxz(i, j) * (lambdas[i] - lambdas[j]);
                }
                out[i] = f;
            }
        }
    }
    out
}

/// Residuals of the hole-representation XXZ system (N holes = n−N
/// particles), which is the particle system with g → −g and N → n−N.
pub fn xxz_lambda_residual_dual(model: &ModelSpec, n: usize, dual: &[f64]) -> DVector<f64> {
    let m = model.num_levels();
    let holes = (m - n) as f64;
    let gamma = model
        .realization
        .expect("xxz carries a realization")
        .gamma();
    let g = model.coupling;
    let mut out = DVector::zeros(m);
    for i in 0..m {
        let mut f = dual[i] * dual[i] - gamma * holes * (m as f64 - holes) - (2.0 / g) * dual[i];
        for j in (0..m).filter(|&j| j != i) {
            f -= model.z_xxz(i, j) * (dual[i] - dual[j]);
        }
        out[i] = f;
    }
    out
}

/// Running-error bound on the residual evaluation: the kernels
/// (ε_i±ε_j)/(ε_i−ε_j) lose relative precision like (|u|+|v|)/|u−v|, so the
/// attainable residual scales with the instance, not with machine epsilon
/// alone.
pub(crate) fn lambda_residual_floor(model: &ModelSpec, n: usize, lambdas: &[f64]) -> f64 {
    let m = model.num_levels();
    let nf = n as f64;
    let amp = |u: f64, v: f64| 1.0 + (u.abs() + v.abs()) / (u - v).abs();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        let mut sum = lambdas[i] * lambdas[i] + nf;
        match model.boson {
            Some(BosonParams::Dicke { eps0 }) => {
                let g2 = model.coupling * model.coupling;
                sum = g2 * lambdas[i] * lambdas[i]
                    + nf
                    + (lambdas[i] * (model.levels[i] - eps0)).abs();
                for j in (0..m).filter(|&j| j != i) {
                    sum += (g2 * (lambdas[i] - lambdas[j]) / (model.levels[i] - model.levels[j]))
                        .abs()
                        * amp(model.levels[i], model.levels[j]);
                }
            }
            Some(BosonParams::Pip { eta0_sq, kappa }) => {
                let lambda0 =
                    0.5 * (lambdas.iter().map(|l| l.abs()).sum::<f64>()) + kappa.abs() * nf;
                sum += nf * (m as f64)
                    + (2.0 * kappa * lambdas[i]).abs()
                    + 2.0 * lambda0
                    + 2.0 * eta0_sq * (lambdas[i].abs() + nf) / model.levels[i];
                for j in (0..m).filter(|&j| j != i) {
                    sum += (model.z_hyp(i, j) * (lambdas[i] - lambdas[j])).abs()
                        * amp(model.levels[i], model.levels[j]);
                }
            }
            None => {
                sum += nf * (m as f64) + (2.0 / model.coupling * lambdas[i]).abs();
                for j in (0..m).filter(|&j| j != i) {
                    sum += (model.z_xxz(i, j) * (lambdas[i] - lambdas[j])).abs()
                        * amp(model.levels[i], model.levels[j]);
                }
            }
        }
        worst = worst.max(sum);
    }
    // running-error constant grows with the number of summed terms
    4.0 * (m as f64 + 4.0) * f64::EPSILON * worst
}

fn lambda_jacobian(model: &ModelSpec, _n: usize, lambdas: &[f64]) -> DMatrix<f64> {
    let m = model.num_levels();
    let mut j = DMatrix::zeros(m, m);
    match model.boson {
        Some(BosonParams::Dicke { eps0 }) => {
            let g2 = model.coupling * model.coupling;
            for i in 0..m {
                let mut diag = 2.0 * g2 * lambdas[i] + (model.levels[i] - eps0);
                for k in (0..m).filter(|&k| k != i) {
                    let inv = 1.0 / (model.levels[i] - model.levels[k]);
                    diag -= g2 * inv;
                    j[(i, k)] = g2 * inv;
                }
                j[(i, i)] = diag;
            }
        }
        Some(BosonParams::Pip { eta0_sq, kappa }) => {
            for i in 0..m {
                let mut diag =
                    2.0 * lambdas[i] + 2.0 * kappa - 1.0 - 2.0 * eta0_sq / model.levels[i];
                for k in (0..m).filter(|&k| k != i) {
                    let z = model.z_hyp(i, k);
                    diag -= z;
                    j[(i, k)] = z - 1.0;
                }
                j[(i, i)] = diag;
            }
        }
        None => {
            let g = model.coupling;
            for i in 0..m {
                let mut diag = 2.0 * lambdas[i] + 2.0 / g;
                for k in (0..m).filter(|&k| k != i) {
                    let z = model.z_xxz(i, k);
                    diag -= z;
                    j[(i, k)] = z;
                }
                j[(i, i)] = diag;
            }
        }
    }
    j
}

/// ∂Λ_i/∂κ for the (p+ip) model, from differentiating the quadratic system.
pub fn lambda_kappa_derivative(
    model: &ModelSpec,
    n: usize,
    lambdas: &[f64],
) -> Result<Vec<f64>, SolverError> {
    if model.pip_params().is_none() {
        return Err(SolverError::WrongVariant);
    }
    let j = lambda_jacobian(model, n, lambdas);
    let rhs = DVector::from_iterator(
        model.num_levels(),
        lambdas.iter().map(|&l| -(2.0 * l - 2.0 * n as f64)),
    );
    let sol = j
        .lu()
        .solve(&rhs)
        .ok_or(SolverError::LinearSystemSingular)?;
    Ok(sol.as_slice().to_vec())
}

/// Newton on the quadratic Λ system from a caller-supplied seed.
pub fn solve_lambdas(
    model: &ModelSpec,
    n: usize,
    seed: &[f64],
    config: &SolveConfig,
) -> Result<BetheSolution, SolverError> {
    if !model.spins_all_half() {
        return Err(SolverError::SpinNotHalf);
    }
    if seed.len() != model.num_levels() {
        return Err(SolverError::SeedDimensionMismatch {
            expected: model.num_levels(),
            got: seed.len(),
        });
    }
    let (lambdas, res) = newton_real(
        seed,
        |x| lambda_residual_vec(model, n, x),
        |x| lambda_jacobian(model, n, x),
        |x| lambda_residual_floor(model, n, x),
        config,
    )?;
    BetheSolution::from_lambdas(model, n, lambdas, res)
}

/// Generic predictor-corrector ramp over t ∈ [0, 1]. `max_h` caps the step;
/// steps additionally shrink where the tangent is steep, and a corrector
/// that strays from the Euler prediction is rejected as a branch jump.
fn continue_in_parameter<F, J, Ft, E>(
    x0: Vec<f64>,
    f: F,
    jac: J,
    dfdt: Ft,
    floor: E,
    max_h: f64,
    config: &SolveConfig,
) -> Result<Vec<f64>, SolverError>
where
    F: Fn(f64, &[f64]) -> DVector<f64>,
    J: Fn(f64, &[f64]) -> DMatrix<f64>,
    Ft: Fn(f64, &[f64]) -> DVector<f64>,
    E: Fn(f64, &[f64]) -> f64,
{
    let tangent_at = |t: f64, x: &[f64]| -> Option<DVector<f64>> {
        let j = jac(t, x);
        let rhs = -dfdt(t, x);
        j.lu().solve(&rhs)
    };
    let mut t: f64 = 0.0;
    let mut h: f64 = max_h;
    let mut x = x0;
    let mut last_err;
    while t < 1.0 {
        let tangent = tangent_at(t, &x);
        // bound the predicted motion per step
        if let Some(dx) = &tangent {
            let speed = dx
                .iter()
                .zip(&x)
                .map(|(d, xi)| d.abs() / (1.0 + xi.abs()))
                .fold(0.0f64, f64::max);
            if speed > 0.0 {
                h = h.min(0.2 / speed).max(1e-7);
            }
        }
        let t_next = (t + h).min(1.0);
        let dt = t_next - t;
        // Heun predictor: average the tangents at both step ends
        let seed = match &tangent {
            Some(dx) => {
                let euler: Vec<f64> = x
                    .iter()
                    .zip(dx.iter())
                    .map(|(xi, di)| xi + dt * di)
                    .collect();
                match tangent_at(t_next, &euler) {
                    Some(dx2) => x
                        .iter()
                        .zip(dx.iter().zip(dx2.iter()))
                        .map(|(xi, (d1, d2))| xi + 0.5 * dt * (d1 + d2))
                        .collect(),
                    None => euler,
                }
            }
            None => x.clone(),
        };
        let attempt = newton_real(
            &seed,
            |y| f(t_next, y),
            |y| jac(t_next, y),
            |y| floor(t_next, y),
            config,
        )
        .and_then(|(next, res)| {
            // branch-jump guard: the corrector must stay close to the
            // prediction, otherwise Newton hopped to another solution
            // branch near a crossing
            let dev = next
                .iter()
                .zip(&seed)
                .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
                .fold(0.0f64, f64::max);
            if dev > 0.05 {
                Err(SolverError::NoConvergence { residual: dev })
            } else {
                Ok((next, res))
            }
        });
        match attempt {
            Ok((next, _)) => {
                x = next;
                t = t_next;
                h = (h * 1.5).min(max_h);
            }
            Err(e) => {
                last_err = e;
                h *= 0.5;
                if h < 1e-7 {
                    return Err(last_err);
                }
            }
        }
    }
    Ok(x)
}

fn dicke_solution_for_pattern(
    model: &ModelSpec,
    n: usize,
    pattern: &[usize],
    max_h: f64,
    config: &SolveConfig,
) -> Result<BetheSolution, SolverError> {
    let m = model.num_levels();
    let eps0 = model.eps0().expect("dicke model");
    let s_target = model.coupling * model.coupling;
    // μ = G²Λ; exact roots at G² = 0
    let mut mu = vec![0.0; m];
    for &i in pattern {
        mu[i] = eps0 - model.levels[i];
    }
    let system = |t: f64, y: &[f64]| -> DVector<f64> {
        let s = t * s_target;
        let mut out = DVector::zeros(m);
        for i in 0..m {
            let mut f = y[i] * y[i] - s * n as f64 + y[i] * (model.levels[i] - eps0);
            for j in (0..m).filter(|&j| j != i) {
                f -= s * (y[i] - y[j]) / (model.levels[i] - model.levels[j]);
            }
            out[i] = f;
        }
        out
    };
    let jac = |t: f64, y: &[f64]| -> DMatrix<f64> {
        let s = t * s_target;
        let mut j = DMatrix::zeros(m, m);
        for i in 0..m {
            let mut diag = 2.0 * y[i] + (model.levels[i] - eps0);
            for k in (0..m).filter(|&k| k != i) {
                let inv = 1.0 / (model.levels[i] - model.levels[k]);
                diag -= s * inv;
                j[(i, k)] = s * inv;
            }
            j[(i, i)] = diag;
        }
        j
    };
    let dfdt = |_t: f64, y: &[f64]| -> DVector<f64> {
        let mut out = DVector::zeros(m);
        for i in 0..m {
            let mut d = -(n as f64);
            for j in (0..m).filter(|&j| j != i) {
                d -= (y[i] - y[j]) / (model.levels[i] - model.levels[j]);
            }
            out[i] = d * s_target;
        }
        out
    };
    let floor = |t: f64, y: &[f64]| -> f64 {
        let scale = y
            .iter()
            .fold(1.0f64 + t * s_target * n as f64, |m, v| m.max(v * v));
        8.0 * f64::EPSILON * scale
    };
    mu = continue_in_parameter(mu, system, jac, dfdt, floor, max_h, config)?;
    let lambdas: Vec<f64> = mu.iter().map(|v| v / s_target).collect();
    solve_lambdas(model, n, &lambdas, config)
}

fn xxz_solution_for_pattern(
    model: &ModelSpec,
    n: usize,
    pattern: &[usize],
    max_h: f64,
    config: &SolveConfig,
) -> Result<BetheSolution, SolverError> {
    let m = model.num_levels();
    let gamma = model.realization.expect("xxz").gamma();
    let g_target = model.coupling;
    let mut mu = vec![0.0; m];
    for &i in pattern {
        mu[i] = -2.0;
    }
    let system = |t: f64, y: &[f64]| -> DVector<f64> {
        let g = t * g_target;
        let mut out = DVector::zeros(m);
        for i in 0..m {
            let mut f =
                y[i] * y[i] + 2.0 * y[i] - g * g * gamma * (n as f64) * (m as f64 - n as f64);
            for j in (0..m).filter(|&j| j != i) {
                f -= g * model.z_xxz(i, j) * (y[i] - y[j]);
            }
            out[i] = f;
        }
        out
    };
    let jac = |t: f64, y: &[f64]| -> DMatrix<f64> {
        let g = t * g_target;
        let mut jm = DMatrix::zeros(m, m);
        for i in 0..m {
            let mut diag = 2.0 * y[i] + 2.0;
            for k in (0..m).filter(|&k| k != i) {
                let z = model.z_xxz(i, k);
                diag -= g * z;
                jm[(i, k)] = g * z;
            }
            jm[(i, i)] = diag;
        }
        jm
    };
    let dfdt = |t: f64, y: &[f64]| -> DVector<f64> {
        let g = t * g_target;
        let mut out = DVector::zeros(m);
        for i in 0..m {
            let mut d = -2.0 * g * gamma * (n as f64) * (m as f64 - n as f64);
            for j in (0..m).filter(|&j| j != i) {
                d -= model.z_xxz(i, j) * (y[i] - y[j]);
            }
            out[i] = d * g_target;
        }
        out
    };
    let floor = |_t: f64, y: &[f64]| -> f64 {
        let scale = y.iter().fold(4.0f64, |m, v| m.max(v * v));
        8.0 * f64::EPSILON * scale
    };
    mu = continue_in_parameter(mu, system, jac, dfdt, floor, max_h, config)?;
    let lambdas: Vec<f64> = mu.iter().map(|v| v / g_target).collect();
    solve_lambdas(model, n, &lambdas, config)
}

fn pip_solution_for_pattern(
    model: &ModelSpec,
    n: usize,
    pattern: &[usize],
    max_h: f64,
    config: &SolveConfig,
) -> Result<BetheSolution, SolverError> {
    let m = model.num_levels();
    let (eta0_sq, kappa_target) = model.pip_params().expect("pip model");
    let max_z = (0..m)
        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| model.z_hyp(i, j).abs())
        .fold(0.0f64, f64::max);
    let kappa_start = 25.0
        * (1.0
            + n as f64
            + eta0_sq * (1.0 + 1.0 / model.levels.iter().cloned().fold(f64::INFINITY, f64::min))
            + max_z
            + kappa_target.abs());
    let k = pattern.len();
    let occupied = |i: usize| pattern.contains(&i);
    // large-κ asymptotics of the quadratic system
    let seed: Vec<f64> = (0..m)
        .map(|i| {
            if occupied(i) {
                let z_out: f64 = (0..m)
                    .filter(|&j| j != i && !occupied(j))
                    .map(|j| model.z_hyp(i, j))
                    .sum();
                -2.0 * kappa_start + 2.0 * eta0_sq / model.levels[i] - (n - k) as f64 + z_out
            } else {
                let z_in: f64 = (0..m)
                    .filter(|&j| j != i && occupied(j))
                    .map(|j| model.z_hyp(i, j))
                    .sum();
                (n - k) as f64 + z_in
            }
        })
        .collect();

    let model_at = |kappa: f64| {
        let mut mm = model.clone();
        mm.boson = Some(BosonParams::Pip { eta0_sq, kappa });
        mm
    };
    // cubic schedule: most of the branch structure develops near the target
    let kappa_at = |t: f64| kappa_target + (kappa_start - kappa_target) * (1.0 - t).powi(3);
    let dkappa_dt = |t: f64| -3.0 * (kappa_start - kappa_target) * (1.0 - t) * (1.0 - t);
    let system = |t: f64, y: &[f64]| lambda_residual_vec(&model_at(kappa_at(t)), n, y);
    let jac = |t: f64, y: &[f64]| lambda_jacobian(&model_at(kappa_at(t)), n, y);
    let dfdt = |t: f64, y: &[f64]| -> DVector<f64> {
        DVector::from_iterator(
            m,
            y.iter().map(|&l| (2.0 * l - 2.0 * n as f64) * dkappa_dt(t)),
        )
    };

    let floor = |t: f64, y: &[f64]| -> f64 { lambda_residual_floor(&model_at(kappa_at(t)), n, y) };
    // converge the asymptotic seed before ramping
    let (start, _) = newton_real(
        &seed,
        |y| system(0.0, y),
        |y| jac(0.0, y),
        |y| floor(0.0, y),
        config,
    )?;
    let lambdas = continue_in_parameter(start, system, jac, dfdt, floor, max_h, config)?;
    solve_lambdas(model, n, &lambdas, config)
}

/// Solves the single state labeled by a weak-coupling occupation pattern,
/// riding the same seeded continuation as [`enumerate_states`].
pub fn solve_pattern(
    model: &ModelSpec,
    n: usize,
    pattern: &[usize],
    config: &SolveConfig,
) -> Result<BetheSolution, SolverError> {
    if !model.spins_all_half() {
        return Err(SolverError::SpinNotHalf);
    }
    let m = model.num_levels();
    if pattern.iter().any(|&i| i >= m) || pattern.len() > n.min(m) {
        return Err(SolverError::SeedDimensionMismatch {
            expected: n.min(m),
            got: pattern.len(),
        });
    }
    if model.variant == ModelVariant::XxzSpin && pattern.len() != n {
        return Err(SolverError::SeedDimensionMismatch {
            expected: n,
            got: pattern.len(),
        });
    }
    if n == 0 {
        return BetheSolution::from_lambdas(model, 0, vec![0.0; m], 0.0);
    }
    let ladder: &[f64] = match model.variant {
        ModelVariant::PipBoson => &[0.02, 0.004, 0.0008, 0.0002],
        _ => &[0.1, 0.02, 0.004, 0.0008],
    };
    let mut last = SolverError::NoConvergence { residual: f64::NAN };
    for &h in ladder {
        let attempt = match model.variant {
            ModelVariant::Dicke => dicke_solution_for_pattern(model, n, pattern, h, config),
            ModelVariant::PipBoson => pip_solution_for_pattern(model, n, pattern, h, config),
            ModelVariant::XxzSpin => xxz_solution_for_pattern(model, n, pattern, h, config),
        };
        match attempt {
            Ok(sol) => return Ok(sol),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn patterns(m: usize, max_k: usize, exact: Option<usize>) -> Vec<Vec<usize>> {
    assert!(m <= 24, "pattern enumeration is capped at 24 levels");
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << m) {
        let k = mask.count_ones() as usize;
        let keep = match exact {
            Some(e) => k == e,
            None => k <= max_k,
        };
        if keep {
            out.push((0..m).filter(|&i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

fn same_state(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-6 * (1.0 + x.abs().max(y.abs())))
}

/// Solves the full N-excitation sector from weak-coupling seeds over all
/// spin-occupation patterns. The result is complete when the number of
/// pairwise-distinct converged solutions matches [`sector_dimension`].
pub fn enumerate_states(
    model: &ModelSpec,
    n: usize,
    config: &SolveConfig,
) -> Result<Vec<BetheSolution>, SolverError> {
    if !model.spins_all_half() {
        return Err(SolverError::SpinNotHalf);
    }
    let m = model.num_levels();
    let expected = sector_dimension(model, n);
    if n == 0 {
        let sol = BetheSolution::from_lambdas(model, 0, vec![0.0; m], 0.0)?;
        return Ok(vec![sol]);
    }
    let pats = match model.variant {
        ModelVariant::XxzSpin => patterns(m, n, Some(n)),
        _ => patterns(m, n.min(m), None),
    };
    // step-cap ladder: refine the ramp for patterns that fail or collide;
    // the (p+ip) branch structure near small κ warrants a finer base rung
    let ladder: &[f64] = match model.variant {
        ModelVariant::PipBoson => &[0.02, 0.004, 0.0008, 0.0002],
        _ => &[0.1, 0.02, 0.004, 0.0008],
    };
    let solve_pattern = |p: &[usize], max_h: f64| match model.variant {
        ModelVariant::Dicke => dicke_solution_for_pattern(model, n, p, max_h, config),
        ModelVariant::PipBoson => pip_solution_for_pattern(model, n, p, max_h, config),
        ModelVariant::XxzSpin => xxz_solution_for_pattern(model, n, p, max_h, config),
    };
    let mut results: Vec<(Vec<usize>, usize, Result<BetheSolution, SolverError>)> = pats
        .into_par_iter()
        .map(|p| {
            let r = solve_pattern(&p, ladder[0]);
            (p, 0usize, r)
        })
        .collect();
    // retry failures and colliding pairs at finer step caps
    for _round in 0..ladder.len() {
        let mut retry: Vec<usize> = Vec::new();
        for idx in 0..results.len() {
            match &results[idx].2 {
                Err(_) => retry.push(idx),
                Ok(sol) => {
                    let dup = results.iter().enumerate().any(|(j, (_, _, r))| {
                        j != idx
                            && matches!(r, Ok(other) if same_state(&other.lambdas, &sol.lambdas))
                    });
                    if dup {
                        retry.push(idx);
                    }
                }
            }
        }
        if retry.is_empty() {
            break;
        }
        let mut progressed = false;
        for idx in retry {
            let rung = results[idx].1 + 1;
            if rung >= ladder.len() {
                continue;
            }
            let p = results[idx].0.clone();
            results[idx] = (p.clone(), rung, solve_pattern(&p, ladder[rung]));
            progressed = true;
        }
        if !progressed {
            break;
        }
    }

    let mut solutions: Vec<BetheSolution> = Vec::new();
    let mut failures: Vec<(Vec<usize>, String)> = Vec::new();
    for (pattern, _, res) in results {
        match res {
            Ok(sol) => {
                if solutions
                    .iter()
                    .any(|s| same_state(&s.lambdas, &sol.lambdas))
                {
                    failures.push((pattern, "duplicate of an earlier state".into()));
                } else {
                    solutions.push(sol);
                }
            }
            Err(e) => failures.push((pattern, e.to_string())),
        }
    }
    solutions.sort_by(|a, b| {
        a.charges
            .iter()
            .zip(&b.charges)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if solutions.len() != expected {
        return Err(SolverError::IncompleteEnumeration {
            found: solutions.len(),
            expected,
            failures,
        });
    }
    Ok(solutions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Realization;

    #[test]
    fn dicke_m1_closed_form_roots() {
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let config = SolveConfig::default();
        let states = enumerate_states(&model, 1, &config).unwrap();
        assert_eq!(states.len(), 2);
        let mut lams: Vec<f64> = states.iter().map(|s| s.lambdas[0]).collect();
        lams.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((lams[0] - (-1.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!((lams[1] - (-1.0 + 2f64.sqrt())).abs() < 1e-12);
        for s in &states {
            assert!(s.residual_lambda.unwrap() <= 1e-12);
        }
    }

    #[test]
    fn pip_m1_closed_form_roots() {
        let model = ModelSpec::pip(1.0, 0.0, &[2.0]).unwrap();
        let config = SolveConfig::default();
        let states = enumerate_states(&model, 1, &config).unwrap();
        assert_eq!(states.len(), 2);
        let mut lams: Vec<f64> = states.iter().map(|s| s.lambdas[0]).collect();
        lams.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((lams[0] - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!((lams[1] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        for s in &states {
            assert!((s.lambda0.unwrap() - s.lambdas[0] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dicke_sector_counts() {
        let model = ModelSpec::dicke(1.0, &[2.0, 3.0, 4.0, 5.0], -0.1).unwrap();
        let config = SolveConfig::default();
        let states = enumerate_states(&model, 3, &config).unwrap();
        assert_eq!(states.len(), 15);
    }

    #[test]
    fn vacuum_sector_is_trivial() {
        let model = ModelSpec::dicke(1.0, &[2.0, 3.0], -0.2).unwrap();
        let states = enumerate_states(&model, 0, &SolveConfig::default()).unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].lambdas, vec![0.0, 0.0]);
        assert_eq!(states[0].residual_lambda, Some(0.0));
    }

    #[test]
    fn kappa_derivative_closed_form() {
        // m=1 instance: dΛ/dκ = (1−Λ)/(Λ+κ−1) = −1 at κ=0, Λ=1+√2
        let model = ModelSpec::pip(1.0, 0.0, &[2.0]).unwrap();
        let lam = 1.0 + 2f64.sqrt();
        let d = lambda_kappa_derivative(&model, 1, &[lam]).unwrap();
        assert!((d[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn xxz_enumeration_and_dual_system() {
        let model =
            ModelSpec::xxz(Realization::Trigonometric, &[0.5, 1.3, 2.2], 0.4, None).unwrap();
        let config = SolveConfig::default();
        let states = enumerate_states(&model, 2, &config).unwrap();
        assert_eq!(states.len(), 3);
        for s in &states {
            // dual variables satisfy the hole-form system
            let dual = super::super::dual_lambdas(&model, &s.lambdas).unwrap();
            let res = xxz_lambda_residual_dual(&model, 2, &dual).amax();
            assert!(res < 1e-9, "hole residual {res}");
        }
    }

    #[test]
    fn solve_lambdas_validates_input() {
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let err = solve_lambdas(&model, 1, &[0.0, 0.0], &SolveConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::SeedDimensionMismatch { .. }));

        let general = ModelSpec::xxz(
            Realization::Trigonometric,
            &[1.0, 2.0],
            0.3,
            Some(&[0.5, 1.0]),
        )
        .unwrap();
        let err = solve_lambdas(&general, 1, &[0.0, 0.0], &SolveConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::SpinNotHalf));
    }
}
