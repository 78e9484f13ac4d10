//! Adiabatic continuation in the pseudo-deformation parameter ξ.
//!
//! The single-level-deformed RG equations interpolate between the Dicke
//! model (ξ=0) and a trigonometric XXZ spin model (ξ=1):
//!
//! (ε_0−E_α) − Σ_i s_i (2G²+ξε_iE_α/s_0)/(ε_i−E_α)
//!           + Σ_{β≠α} (2G²+ξE_βE_α/s_0)/(E_β−E_α) = 0.
//!
//! Singular points, where rapidities coalesce with a level, occur at
//! isolated ξ along the path; the divergent contributions cancel exactly but
//! leave Newton ill-conditioned, so the stepper shrinks towards the minimum
//! step and then bridges the window by polynomial extrapolation, flagging
//! the bridged samples.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::newton::{condition_estimate, newton_complex};
use super::{SolveConfig, SolverError};
use crate::models::{ModelSpec, ModelVariant};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    /// Pseudo-spin of the deformed level (Fig.-1 style runs use 1/2).
    pub s0: f64,
    pub xi_start: f64,
    pub xi_end: f64,
    /// Consecutive bridged windows tolerated before the path is declared
    /// stalled.
    pub max_bridges: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            s0: 0.5,
            xi_start: 0.0,
            xi_end: 1.0,
            max_bridges: 8,
        }
    }
}

/// A sampled rapidity trajectory over ξ.
#[derive(Debug, Clone)]
pub struct ContinuationPath {
    pub xi_samples: Vec<f64>,
    pub rapidity_snapshots: Vec<Vec<Complex64>>,
    /// False marks samples bridged by extrapolation across a singular
    /// window.
    pub converged: Vec<bool>,
    /// Jacobian condition estimate at each sample (infinite on bridged
    /// samples).
    pub condition: Vec<f64>,
}

impl ContinuationPath {
    pub fn flagged_fraction(&self) -> f64 {
        if self.converged.is_empty() {
            return 0.0;
        }
        self.converged.iter().filter(|&&ok| !ok).count() as f64 / self.converged.len() as f64
    }

    pub fn endpoint(&self) -> (&[Complex64], f64) {
        let last = self.rapidity_snapshots.len() - 1;
        (&self.rapidity_snapshots[last], self.xi_samples[last])
    }
}

/// Residual of the ξ-dependent RG equations.
pub fn xi_rg_residual(
    model: &ModelSpec,
    s0: f64,
    xi: f64,
    raps: &[Complex64],
) -> DVector<Complex64> {
    let eps0 = model.eps0().expect("continuation runs on the Dicke family");
    let g2 = model.coupling * model.coupling;
    let m = model.num_levels();
    let n = raps.len();
    let mut out = DVector::zeros(n);
    for (a, &x) in raps.iter().enumerate() {
        let mut f = c(eps0) - x;
        for i in 0..m {
            let ei = model.levels[i];
            f -= model.spins[i] * (c(2.0 * g2) + xi * ei * x / s0) / (c(ei) - x);
        }
        for (b, &y) in raps.iter().enumerate() {
            if b != a {
                f += (c(2.0 * g2) + xi * y * x / s0) / (y - x);
            }
        }
        out[a] = f;
    }
    out
}

fn xi_rg_jacobian(model: &ModelSpec, s0: f64, xi: f64, raps: &[Complex64]) -> DMatrix<Complex64> {
    let g2 = model.coupling * model.coupling;
    let m = model.num_levels();
    let n = raps.len();
    let mut jac = DMatrix::zeros(n, n);
    for (a, &x) in raps.iter().enumerate() {
        let mut diag = c(-1.0);
        for i in 0..m {
            let ei = c(model.levels[i]);
            let d = ei - x;
            diag -= model.spins[i] * ((xi / s0) * ei * d + (c(2.0 * g2) + (xi / s0) * ei * x))
                / (d * d);
        }
        for (b, &y) in raps.iter().enumerate() {
            if b != a {
                let d = y - x;
                diag += ((xi / s0) * y * d + (c(2.0 * g2) + (xi / s0) * y * x)) / (d * d);
                jac[(a, b)] = ((xi / s0) * x * d - (c(2.0 * g2) + (xi / s0) * y * x)) / (d * d);
            }
        }
        jac[(a, a)] = diag;
    }
    jac
}

/// Running-error bound for the ξ-RG residual, mirroring
/// `rg_residual_floor`.
fn xi_residual_floor(model: &ModelSpec, s0: f64, xi: f64, raps: &[Complex64]) -> f64 {
    let eps0 = model.eps0().expect("dicke family");
    let g2 = model.coupling * model.coupling;
    let m = model.num_levels();
    let amp = |u: Complex64, v: Complex64| 1.0 + (u.norm() + v.norm()) / (u - v).norm();
    let mut worst: f64 = 0.0;
    for (a, &x) in raps.iter().enumerate() {
        let mut sum = 1.0 + (c(eps0) - x).norm();
        for i in 0..m {
            let e = c(model.levels[i]);
            sum += (model.spins[i] * (c(2.0 * g2) + xi * e * x / s0) / (e - x)).norm() * amp(e, x);
        }
        for (b, &y) in raps.iter().enumerate() {
            if b != a {
                sum += ((c(2.0 * g2) + xi * y * x / s0) / (y - x)).norm() * amp(y, x);
            }
        }
        worst = worst.max(sum);
    }
    4.0 * ((m + raps.len()) as f64 + 4.0) * f64::EPSILON * worst
}

fn guard(model: &ModelSpec, raps: &[Complex64], pole_guard: f64) -> bool {
    for (a, &x) in raps.iter().enumerate() {
        if model.levels.iter().any(|&e| (x - c(e)).norm() < pole_guard) {
            return false;
        }
        if raps[a + 1..].iter().any(|&y| (x - y).norm() < pole_guard) {
            return false;
        }
    }
    true
}

/// Newton on the ξ-RG equations at a fixed ξ.
pub fn solve_xi_rapidities(
    model: &ModelSpec,
    s0: f64,
    xi: f64,
    seed: &[Complex64],
    config: &SolveConfig,
) -> Result<(Vec<Complex64>, f64), SolverError> {
    if model.variant != ModelVariant::Dicke {
        return Err(SolverError::WrongVariant);
    }
    newton_complex(
        seed,
        |x| xi_rg_residual(model, s0, xi, x),
        |x| xi_rg_jacobian(model, s0, xi, x),
        |x| guard(model, x, config.pole_guard),
        |x| xi_residual_floor(model, s0, xi, x),
        config,
    )
}

/// Conjugate-symmetric imaginary kick on the two mutually closest
/// rapidities. Near a singular point a real pair leaves the axis as a
/// conjugate pair; under the holomorphic Newton map a purely real seed can
/// never do that, so the bridge has to supply the transverse displacement.
fn kick_closest_pair(raps: &mut [Complex64]) {
    if raps.len() < 2 {
        return;
    }
    let mut best = (0usize, 1usize, f64::INFINITY);
    for a in 0..raps.len() {
        for b in (a + 1)..raps.len() {
            let d = (raps[a] - raps[b]).norm();
            if d < best.2 {
                best = (a, b, d);
            }
        }
    }
    let (a, b, gap) = best;
    if raps[a].im.abs() > 1e-6 || raps[b].im.abs() > 1e-6 {
        return; // already off the axis
    }
    let scale = raps.iter().map(|x| x.norm()).fold(1.0f64, f64::max);
    let kick = (2.0 * gap).max(1e-3 * scale);
    let mean = 0.5 * (raps[a] + raps[b]);
    raps[a] = mean + Complex64::new(0.0, kick);
    raps[b] = mean - Complex64::new(0.0, kick);
}

/// Quadratic extrapolation of the trajectory to `xi` from up to three most
/// recent accepted samples.
fn extrapolate(
    xis: &[f64],
    snaps: &[Vec<Complex64>],
    accepted: &[usize],
    xi: f64,
    n: usize,
) -> Vec<Complex64> {
    let take: Vec<usize> = accepted.iter().rev().take(3).cloned().collect();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    // Lagrange basis over the chosen samples
    for (ii, &i) in take.iter().enumerate() {
        let mut w = 1.0;
        for (jj, &j) in take.iter().enumerate() {
            if ii != jj {
                w *= (xi - xis[j]) / (xis[i] - xis[j]);
            }
        }
        for (o, s) in out.iter_mut().zip(&snaps[i]) {
            *o += s * w;
        }
    }
    out
}

/// Continues a converged start solution from its ξ towards `xi_end`.
pub fn continuation_xi(
    model: &ModelSpec,
    n: usize,
    start_raps: &[Complex64],
    opts: &ContinuationOptions,
    config: &SolveConfig,
) -> Result<ContinuationPath, SolverError> {
    if model.variant != ModelVariant::Dicke {
        return Err(SolverError::WrongVariant);
    }
    if start_raps.len() != n {
        return Err(SolverError::SeedDimensionMismatch {
            expected: n,
            got: start_raps.len(),
        });
    }
    let dir = if opts.xi_end >= opts.xi_start {
        1.0
    } else {
        -1.0
    };
    let span = (opts.xi_end - opts.xi_start).abs().max(f64::EPSILON);

    // verify or polish the start point
    let (start, _) = solve_xi_rapidities(model, opts.s0, opts.xi_start, start_raps, config)?;
    let cond0 = condition_estimate(&xi_rg_jacobian(model, opts.s0, opts.xi_start, &start));

    let mut xis = vec![opts.xi_start];
    let mut snaps = vec![start];
    let mut flags = vec![true];
    let mut conds = vec![cond0];
    let mut accepted: Vec<usize> = vec![0];

    if n == 0 {
        xis.push(opts.xi_end);
        snaps.push(Vec::new());
        flags.push(true);
        conds.push(1.0);
        return Ok(ContinuationPath {
            xi_samples: xis,
            rapidity_snapshots: snaps,
            converged: flags,
            condition: conds,
        });
    }

    let mut h = config.step.initial * span;
    let mut bridges_in_a_row = 0usize;
    let mut xi = opts.xi_start;
    while (opts.xi_end - xi) * dir > 1e-15 {
        let h_eff = h.min((opts.xi_end - xi).abs());
        let xi_next = xi + dir * h_eff;
        let seed = if accepted.len() >= 2 {
            extrapolate(&xis, &snaps, &accepted, xi_next, n)
        } else {
            snaps[*accepted.last().unwrap()].clone()
        };
        let attempt =
            solve_xi_rapidities(model, opts.s0, xi_next, &seed, config).and_then(|(raps, _res)| {
                let prev = &snaps[*accepted.last().unwrap()];
                let motion = raps
                    .iter()
                    .zip(prev)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0f64, f64::max);
                let scale = 1.0 + prev.iter().map(|r| r.norm()).fold(0.0f64, f64::max);
                if motion > config.step.trust * scale {
                    return Err(SolverError::NoConvergence { residual: motion });
                }
                let cond = condition_estimate(&xi_rg_jacobian(model, opts.s0, xi_next, &raps));
                if cond > config.step.max_condition {
                    return Err(SolverError::NoConvergence { residual: cond });
                }
                Ok((raps, cond))
            });
        match attempt {
            Ok((raps, cond)) => {
                xis.push(xi_next);
                snaps.push(raps);
                flags.push(true);
                conds.push(cond);
                accepted.push(xis.len() - 1);
                xi = xi_next;
                h = (h * config.step.grow).min(config.step.initial * span);
                bridges_in_a_row = 0;
            }
            Err(_) => {
                h *= config.step.shrink;
                if h >= config.step.min * span {
                    continue;
                }
                // singular window: flag an extrapolated sample, then try to
                // land past the window with an off-axis seed
                bridges_in_a_row += 1;
                if bridges_in_a_row > opts.max_bridges {
                    return Err(SolverError::PathStalled { xi });
                }
                let jump = (config.step.initial * span).min((opts.xi_end - xi).abs());
                if jump <= f64::EPSILON {
                    return Err(SolverError::PathStalled { xi });
                }
                let xi_mid = xi + dir * 0.5 * jump;
                let xi_jump = xi + dir * jump;
                let marker = extrapolate(&xis, &snaps, &accepted, xi_mid, n);
                xis.push(xi_mid);
                snaps.push(marker);
                flags.push(false);
                conds.push(f64::INFINITY);
                let mut guess = extrapolate(&xis, &snaps, &accepted, xi_jump, n);
                kick_closest_pair(&mut guess);
                match solve_xi_rapidities(model, opts.s0, xi_jump, &guess, config) {
                    Ok((raps, _)) => {
                        let cond =
                            condition_estimate(&xi_rg_jacobian(model, opts.s0, xi_jump, &raps));
                        xis.push(xi_jump);
                        snaps.push(raps);
                        flags.push(true);
                        conds.push(cond);
                        accepted.push(xis.len() - 1);
                        xi = xi_jump;
                        h = config.step.initial * span * 0.5;
                    }
                    Err(_) => {
                        // stay flagged and advance; the next attempts seed
                        // from the extrapolated markers
                        let guess = extrapolate(&xis, &snaps, &accepted, xi_jump, n);
                        xis.push(xi_jump);
                        snaps.push(guess);
                        flags.push(false);
                        conds.push(f64::INFINITY);
                        accepted.push(xis.len() - 1);
                        xi = xi_jump;
                        h = config.step.initial * span * 0.5;
                    }
                }
            }
        }
    }
    // the endpoint itself must be a converged sample
    if !flags[xis.len() - 1] {
        return Err(SolverError::PathStalled { xi: opts.xi_end });
    }
    Ok(ContinuationPath {
        xi_samples: xis,
        rapidity_snapshots: snaps,
        converged: flags,
        condition: conds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{contraction_seed, rg_residual_vec, solve_rapidities};

    fn fig1_model() -> ModelSpec {
        let levels: Vec<f64> = (2..=12).map(f64::from).collect();
        ModelSpec::dicke(1.0, &levels, -0.1).unwrap()
    }

    #[test]
    fn xi_zero_matches_dicke_equations() {
        let model = fig1_model();
        let config = SolveConfig::default();
        let seed = contraction_seed(&model, 3, &[1, 2, 3], &config).unwrap();
        let sol = solve_rapidities(&model, 3, &seed, &config).unwrap();
        let raps = sol.rapidities.unwrap();
        let res = xi_rg_residual(&model, 0.5, 0.0, &raps);
        assert!(res.iter().map(|r| r.norm()).fold(0.0f64, f64::max) <= 1e-10);
    }

    #[test]
    fn n_zero_path_is_trivial() {
        let model = fig1_model();
        let path = continuation_xi(
            &model,
            0,
            &[],
            &ContinuationOptions::default(),
            &SolveConfig::default(),
        )
        .unwrap();
        assert_eq!(path.xi_samples.len(), 2);
        assert!(path.converged.iter().all(|&f| f));
    }

    #[test]
    fn single_rapidity_path_reaches_xi_one() {
        let model = fig1_model();
        let config = SolveConfig::default();
        let seed = contraction_seed(&model, 1, &[0], &config).unwrap();
        let sol = solve_rapidities(&model, 1, &seed, &config).unwrap();
        let path = continuation_xi(
            &model,
            1,
            sol.rapidities.as_ref().unwrap(),
            &ContinuationOptions::default(),
            &config,
        )
        .unwrap();
        let (end, xi) = path.endpoint();
        assert_eq!(xi, 1.0);
        let res = xi_rg_residual(&model, 0.5, 1.0, end);
        assert!(res.iter().map(|r| r.norm()).fold(0.0f64, f64::max) <= 1e-8);
        // endpoint differs from the Dicke equations' solution
        let dicke_res = rg_residual_vec(&model, end);
        assert!(dicke_res.iter().map(|r| r.norm()).fold(0.0f64, f64::max) > 1e-3);
    }
}
