//! Rapidity-based Richardson-Gaudin equations.
//!
//! Residual conventions (one equation per rapidity x_α):
//!
//! * Dicke: (ε_0−x_α) − 2G²Σ_k s_k/(ε_k−x_α) + 2G²Σ_{β≠α} 1/(x_β−x_α),
//! * (p+ip): κ − η_0²/x_α + Σ_k s_k(ε_k+x_α)/(ε_k−x_α)
//!   − Σ_{β≠α}(x_β+x_α)/(x_β−x_α),
//! * XXZ: 1 + gΣ_i s_i Z(ε_i,x_α) − gΣ_{β≠α} Z(x_β,x_α).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::newton::newton_complex;
use super::{BetheSolution, SolveConfig, SolverError};
use crate::kernels::Realization;
use crate::models::{BosonParams, ModelSpec, ModelVariant};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Residual vector of the model's RG equations at the given rapidities.
pub fn rg_residual_vec(model: &ModelSpec, raps: &[Complex64]) -> DVector<Complex64> {
    let m = model.num_levels();
    let n = raps.len();
    let mut out = DVector::zeros(n);
    for (a, &x) in raps.iter().enumerate() {
        let mut f = Complex64::new(0.0, 0.0);
        match model.boson {
            Some(BosonParams::Dicke { eps0 }) => {
                let g2 = model.coupling * model.coupling;
                f += c(eps0) - x;
                for k in 0..m {
                    f -= 2.0 * g2 * model.spins[k] / (c(model.levels[k]) - x);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        f += 2.0 * g2 / (y - x);
                    }
                }
            }
            Some(BosonParams::Pip { eta0_sq, kappa }) => {
                f += c(kappa) - eta0_sq / x;
                for k in 0..m {
                    f += model.spins[k] * (c(model.levels[k]) + x) / (c(model.levels[k]) - x);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        f -= (y + x) / (y - x);
                    }
                }
            }
            None => {
                let g = model.coupling;
                let z = |u: Complex64, v: Complex64| match model.realization.unwrap() {
                    Realization::Trigonometric => (c(1.0) + u * v) / (u - v),
                    Realization::Hyperbolic => (u + v) / (u - v),
                };
                f += c(1.0);
                for i in 0..m {
                    f += g * model.spins[i] * z(c(model.levels[i]), x);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        f -= g * z(y, x);
                    }
                }
            }
        }
        out[a] = f;
    }
    out
}

fn rg_jacobian(model: &ModelSpec, raps: &[Complex64]) -> DMatrix<Complex64> {
    let m = model.num_levels();
    let n = raps.len();
    let mut jac = DMatrix::zeros(n, n);
    for (a, &x) in raps.iter().enumerate() {
        match model.boson {
            Some(BosonParams::Dicke { .. }) => {
                let g2 = model.coupling * model.coupling;
                let mut diag = c(-1.0);
                for k in 0..m {
                    let d = c(model.levels[k]) - x;
                    diag -= 2.0 * g2 * model.spins[k] / (d * d);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        let d = y - x;
                        diag += 2.0 * g2 / (d * d);
                        jac[(a, b)] = -2.0 * g2 / (d * d);
                    }
                }
                jac[(a, a)] = diag;
            }
            Some(BosonParams::Pip { eta0_sq, .. }) => {
                // dZ̃(u,v)/dv = 2u/(u−v)², dZ̃(u,v)/du = −2v/(u−v)²
                let mut diag = eta0_sq / (x * x);
                for k in 0..m {
                    let ek = c(model.levels[k]);
                    let d = ek - x;
                    diag += model.spins[k] * 2.0 * ek / (d * d);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        let d = y - x;
                        diag -= 2.0 * y / (d * d);
                        jac[(a, b)] = 2.0 * x / (d * d);
                    }
                }
                jac[(a, a)] = diag;
            }
            None => {
                let g = model.coupling;
                let realization = model.realization.unwrap();
                // dZ/dv and dZ/du for either realization
                let dz_dv = |u: Complex64, v: Complex64| match realization {
                    Realization::Trigonometric => (c(1.0) + u * u) / ((u - v) * (u - v)),
                    Realization::Hyperbolic => 2.0 * u / ((u - v) * (u - v)),
                };
                let dz_du = |u: Complex64, v: Complex64| match realization {
                    Realization::Trigonometric => -(c(1.0) + v * v) / ((u - v) * (u - v)),
                    Realization::Hyperbolic => -2.0 * v / ((u - v) * (u - v)),
                };
                let mut diag = c(0.0);
                for i in 0..m {
                    diag += g * model.spins[i] * dz_dv(c(model.levels[i]), x);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        diag -= g * dz_dv(y, x);
                        jac[(a, b)] = -g * dz_du(y, x);
                    }
                }
                jac[(a, a)] = diag;
            }
        }
    }
    jac
}

/// Running-error bound on the RG residual: each pole term q/(u−v) carries a
/// relative error amplified by (|u|+|v|)/|u−v| from the cancellation in the
/// denominator.
pub fn rg_residual_floor(model: &ModelSpec, raps: &[Complex64]) -> f64 {
    let m = model.num_levels();
    let amp = |u: Complex64, v: Complex64| 1.0 + (u.norm() + v.norm()) / (u - v).norm();
    let mut worst: f64 = 0.0;
    for (a, &x) in raps.iter().enumerate() {
        let mut sum: f64 = 1.0;
        match model.boson {
            Some(BosonParams::Dicke { eps0 }) => {
                let g2 = model.coupling * model.coupling;
                sum += (c(eps0) - x).norm();
                for k in 0..m {
                    let e = c(model.levels[k]);
                    sum += (2.0 * g2 * model.spins[k] / (e - x)).norm() * amp(e, x);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        sum += (2.0 * g2 / (y - x)).norm() * amp(y, x);
                    }
                }
            }
            Some(BosonParams::Pip { eta0_sq, kappa }) => {
                sum += kappa.abs() + (eta0_sq / x).norm();
                for k in 0..m {
                    let e = c(model.levels[k]);
                    sum += (model.spins[k] * (e + x) / (e - x)).norm() * amp(e, x);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        sum += ((y + x) / (y - x)).norm() * amp(y, x);
                    }
                }
            }
            None => {
                let g = model.coupling;
                let z = |u: Complex64, v: Complex64| match model.realization.unwrap() {
                    Realization::Trigonometric => (c(1.0) + u * v) / (u - v),
                    Realization::Hyperbolic => (u + v) / (u - v),
                };
                for i in 0..m {
                    let e = c(model.levels[i]);
                    sum += (g * model.spins[i] * z(e, x)).norm() * amp(e, x);
                }
                for (b, &y) in raps.iter().enumerate() {
                    if b != a {
                        sum += (g * z(y, x)).norm() * amp(y, x);
                    }
                }
            }
        }
        worst = worst.max(sum);
    }
    4.0 * ((m + raps.len()) as f64 + 4.0) * f64::EPSILON * worst
}

fn pole_guard_ok(model: &ModelSpec, raps: &[Complex64], guard: f64) -> bool {
    for (a, &x) in raps.iter().enumerate() {
        for &e in &model.levels {
            if (x - c(e)).norm() < guard {
                return false;
            }
        }
        if model.variant == ModelVariant::PipBoson && x.norm() < guard {
            return false;
        }
        for &y in &raps[a + 1..] {
            if (x - y).norm() < guard {
                return false;
            }
        }
    }
    true
}

/// Damped Newton on the RG equations from a caller-supplied complex seed.
pub fn solve_rapidities(
    model: &ModelSpec,
    n: usize,
    seed: &[Complex64],
    config: &SolveConfig,
) -> Result<BetheSolution, SolverError> {
    if seed.len() != n {
        return Err(SolverError::SeedDimensionMismatch {
            expected: n,
            got: seed.len(),
        });
    }
    if n == 0 {
        return BetheSolution::from_rapidities(model, 0, Vec::new(), 0.0);
    }
    let (raps, res) = newton_complex(
        seed,
        |x| rg_residual_vec(model, x),
        |x| rg_jacobian(model, x),
        |x| pole_guard_ok(model, x, config.pole_guard),
        |x| rg_residual_floor(model, x),
        config,
    )?;
    let raps = symmetrize_pairs(raps);
    BetheSolution::from_rapidities(model, n, raps, res)
}

/// Pairs conjugate rapidities exactly (averaging away roundoff drift) so
/// downstream Λ sums are real to machine precision.
fn symmetrize_pairs(mut raps: Vec<Complex64>) -> Vec<Complex64> {
    let n = raps.len();
    let scale = raps.iter().fold(1.0f64, |m, x| m.max(x.norm()));
    for i in 0..n {
        if raps[i].im.abs() <= 1e-8 * scale {
            raps[i].im = 0.0;
            continue;
        }
        for j in (i + 1)..n {
            if (raps[j] - raps[i].conj()).norm() <= 1e-8 * scale {
                let re = 0.5 * (raps[i].re + raps[j].re);
                let im = 0.5 * (raps[i].im - raps[j].im);
                raps[i] = Complex64::new(re, im);
                raps[j] = Complex64::new(re, -im);
                break;
            }
        }
    }
    raps
}

/// Real roots of the ξ=0 secular equation for the Dicke model,
/// (ε_0−E) − 2G²Σ_k s_k/(ε_k−E) = 0, ascending. The left-hand side is
/// strictly decreasing between consecutive poles, so there is exactly one
/// root per interval: m+1 roots in total.
pub fn secular_roots(model: &ModelSpec) -> Result<Vec<f64>, SolverError> {
    let Some(BosonParams::Dicke { eps0 }) = model.boson else {
        return Err(SolverError::WrongVariant);
    };
    let g2 = model.coupling * model.coupling;
    let mut poles: Vec<(f64, f64)> = model
        .levels
        .iter()
        .cloned()
        .zip(model.spins.iter().cloned())
        .collect();
    poles.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let f = |e: f64| -> f64 {
        (eps0 - e) - 2.0 * g2 * poles.iter().map(|&(p, s)| s / (p - e)).sum::<f64>()
    };
    let span = poles.last().unwrap().0 - poles[0].0 + 1.0 + eps0.abs();
    let mut roots = Vec::with_capacity(poles.len() + 1);
    let eps_bracket = 1e-13;
    for gap in 0..=poles.len() {
        // bracket (lo, hi) with f(lo) > 0 > f(hi)
        let (mut lo, mut hi) = if gap == 0 {
            let mut lo = poles[0].0 - span;
            while f(lo) <= 0.0 {
                lo -= span;
                if lo < poles[0].0 - 1e6 * span {
                    return Err(SolverError::RootFindingFailure);
                }
            }
            (lo, poles[0].0 - eps_bracket * span)
        } else if gap == poles.len() {
            let mut hi = poles[gap - 1].0 + span;
            while f(hi) >= 0.0 {
                hi += span;
                if hi > poles[gap - 1].0 + 1e6 * span {
                    return Err(SolverError::RootFindingFailure);
                }
            }
            (poles[gap - 1].0 + eps_bracket * span, hi)
        } else {
            (
                poles[gap - 1].0 + eps_bracket * span,
                poles[gap].0 - eps_bracket * span,
            )
        };
        if !(f(lo) > 0.0 && f(hi) < 0.0) {
            return Err(SolverError::RootFindingFailure);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    Ok(roots)
}

/// Rapidity seed at the contraction limit: `partition` lists secular-root
/// indices (ascending-root order) with repetition. A root carrying
/// multiplicity q is split onto a circle of radius q·seed_radius.
pub fn contraction_seed(
    model: &ModelSpec,
    n: usize,
    partition: &[usize],
    config: &SolveConfig,
) -> Result<Vec<Complex64>, SolverError> {
    let roots = secular_roots(model)?;
    if partition.len() != n {
        return Err(SolverError::BadPartition(format!(
            "partition assigns {} rapidities, sector has {}",
            partition.len(),
            n
        )));
    }
    let mut mult = vec![0usize; roots.len()];
    for &idx in partition {
        if idx >= roots.len() {
            return Err(SolverError::BadPartition(format!(
                "root index {idx} out of range 0..{}",
                roots.len()
            )));
        }
        mult[idx] += 1;
    }
    // a root pinned to a spin level can hold at most 2s_k rapidities; the
    // root tracking the bosonic level has no cap
    let eps0 = model.eps0().expect("dicke model");
    for (idx, &q) in mult.iter().enumerate() {
        if q <= 1 {
            continue;
        }
        let root = roots[idx];
        let (nearest, spin) = model
            .levels
            .iter()
            .zip(&model.spins)
            .map(|(&e, &s)| ((e - root).abs(), s))
            .fold(
                (f64::INFINITY, 0.0),
                |acc, it| if it.0 < acc.0 { it } else { acc },
            );
        if nearest < (eps0 - root).abs() && q > (2.0 * spin) as usize {
            return Err(SolverError::BadPartition(format!(
                "root {idx} sits on a spin level of capacity {} but carries {q}",
                (2.0 * spin) as usize
            )));
        }
    }
    Ok(split_seed(&roots, &mult, config.seed_radius, 0.0))
}

fn split_seed(roots: &[f64], mult: &[usize], radius_scale: f64, phase_frac: f64) -> Vec<Complex64> {
    let mut seed = Vec::new();
    for (idx, &q) in mult.iter().enumerate() {
        if q == 0 {
            continue;
        }
        if q == 1 {
            seed.push(c(roots[idx]));
        } else {
            let radius = radius_scale * q as f64;
            for j in 0..q {
                let phi = 2.0 * std::f64::consts::PI * (j as f64 + phase_frac) / q as f64;
                seed.push(c(roots[idx]) + Complex64::new(radius * phi.cos(), radius * phi.sin()));
            }
        }
    }
    seed
}

/// Solves the ξ=0 (Dicke) RG equations for a secular-root partition,
/// retrying the cluster splitting with a rotated circle and a larger radius
/// when the plain seed stalls: an even split leaves all seeds on the real
/// axis, from where the holomorphic Newton map cannot reach a
/// complex-conjugate pair.
pub fn solve_from_partition(
    model: &ModelSpec,
    n: usize,
    partition: &[usize],
    config: &SolveConfig,
) -> Result<BetheSolution, SolverError> {
    // reuse the validation from contraction_seed
    let base = contraction_seed(model, n, partition, config)?;
    match solve_rapidities(model, n, &base, config) {
        Ok(sol) => return Ok(sol),
        Err(SolverError::SeedDimensionMismatch { .. }) => unreachable!(),
        Err(_) => {}
    }
    let roots = secular_roots(model)?;
    let mut mult = vec![0usize; roots.len()];
    for &idx in partition {
        mult[idx] += 1;
    }
    let scale = model.levels.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let mut last = SolverError::NoConvergence { residual: f64::NAN };
    for phase in [0.25, 0.5] {
        for radius in [config.seed_radius, 1e-2 * scale, 5e-2 * scale] {
            let seed = split_seed(&roots, &mult, radius, phase);
            match solve_rapidities(model, n, &seed, config) {
                Ok(sol) => return Ok(sol),
                Err(e) => last = e,
            }
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dicke_m1_rapidity_closed_form() {
        // the RG equation reduces to x² − 2x − 1 = 0 with roots 1 ± √2
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let config = SolveConfig::default();
        let sol = solve_rapidities(&model, 1, &[c(0.9)], &config).unwrap();
        let x = sol.rapidities.as_ref().unwrap()[0];
        let near_root = [1.0 + 2f64.sqrt(), 1.0 - 2f64.sqrt()]
            .iter()
            .any(|&r| (x - c(r)).norm() < 1e-12);
        assert!(near_root, "x = {x}");
        assert!(sol.residual_rapidity.unwrap() <= 1e-12);

        let sol = solve_rapidities(&model, 1, &[c(2.3)], &config).unwrap();
        let x = sol.rapidities.as_ref().unwrap()[0];
        assert!((x - c(1.0 + 2f64.sqrt())).norm() < 1e-12);
        assert!((sol.lambdas[0] - (-1.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!(sol.residual_lambda.unwrap() <= 1e-9);
    }

    #[test]
    fn pip_m1_rapidity_closed_form() {
        // x² + 4x − 4 = 0, root −2+2√2 from seed 0.8
        let model = ModelSpec::pip(1.0, 0.0, &[2.0]).unwrap();
        let config = SolveConfig::default();
        let sol = solve_rapidities(&model, 1, &[c(0.8)], &config).unwrap();
        let x = sol.rapidities.as_ref().unwrap()[0];
        assert!((x - c(-2.0 + 2.0 * 2f64.sqrt())).norm() < 1e-12);
        assert!((sol.lambdas[0] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((sol.lambda0.unwrap() - (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_rapidity_set() {
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let sol = solve_rapidities(&model, 0, &[], &SolveConfig::default()).unwrap();
        assert_eq!(sol.lambdas, vec![0.0]);
        assert_eq!(sol.residual_lambda, Some(0.0));
    }

    #[test]
    fn seed_dimension_checked() {
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let err = solve_rapidities(&model, 2, &[c(0.9)], &SolveConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::SeedDimensionMismatch { .. }));
    }

    #[test]
    fn secular_roots_m1() {
        // (0−E) − 1/(2−E) = 0 → E² − 2E − 1 = 0 → roots 1 ± √2
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let roots = secular_roots(&model).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - (1.0 - 2f64.sqrt())).abs() < 1e-10);
        assert!((roots[1] - (1.0 + 2f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn contraction_seed_splitting() {
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let config = SolveConfig::default();
        // single rapidity on a distinct root: seed equals the root exactly
        let seed = contraction_seed(&model, 1, &[1], &config).unwrap();
        assert!((seed[0] - c(1.0 + 2f64.sqrt())).norm() < 1e-10);
        // two on one root: split at root ± 2·seed_radius
        let seed = contraction_seed(&model, 2, &[0, 0], &config).unwrap();
        let r = 2.0 * config.seed_radius;
        let root = 1.0 - 2f64.sqrt();
        assert!((seed[0] - c(root + r)).norm() < 1e-9);
        assert!((seed[1] - c(root - r)).norm() < 1e-9);

        assert!(contraction_seed(&model, 2, &[0, 7], &config).is_err());
        assert!(contraction_seed(&model, 1, &[0, 0], &config).is_err());
    }

    #[test]
    fn fd_jacobian_fallback_matches_analytic() {
        let model = ModelSpec::pip(1.3, 0.4, &[1.0, 2.1, 3.2]).unwrap();
        let seed = [c(0.4), Complex64::new(1.6, 0.3), Complex64::new(1.6, -0.3)];
        let analytic = solve_rapidities(&model, 3, &seed, &SolveConfig::default());
        let fd_config = SolveConfig {
            fd_jacobian: true,
            ..SolveConfig::default()
        };
        let fd = solve_rapidities(&model, 3, &seed, &fd_config);
        match (analytic, fd) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
                    assert!((x - y).abs() < 1e-8);
                }
            }
            (a, b) => panic!("solves disagree: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn fig1_ground_seed_converges_at_xi_zero() {
        // weak-coupling Dicke instance: rapidities stay near the secular roots
        let levels: Vec<f64> = (2..=12).map(f64::from).collect();
        let model = ModelSpec::dicke(1.0, &levels, -0.1).unwrap();
        let config = SolveConfig::default();
        let seed = contraction_seed(&model, 6, &[1, 2, 3, 4, 5, 6], &config).unwrap();
        let sol = solve_rapidities(&model, 6, &seed, &config).unwrap();
        // rapidities sit within ~2e-3 of their levels here, so the honest
        // f64 evaluation floor of the equations is ~1e-11
        let floor = rg_residual_floor(&model, sol.rapidities.as_ref().unwrap());
        assert!(sol.residual_rapidity.unwrap() <= floor.max(1e-12));
        assert!(sol.residual_rapidity.unwrap() <= 1e-10);
        assert!(sol.residual_lambda.unwrap() <= 1e-8);
    }
}
