//! Solvers for the Richardson-Gaudin equations.
//!
//! Two independent routes are kept side by side:
//!
//! * Newton on the complex rapidity equations, seeded from the ξ=0 secular
//!   roots and continued in the coupling or the deformation parameter ξ;
//! * Newton on the real quadratic systems for the eigenvalue-based Λ
//!   variables, seeded from exact weak-coupling limits.
//!
//! The rapidity equations turn singular where rapidities coalesce with
//! levels, whereas the Λ systems stay well conditioned; enumeration runs in
//! Λ space and cross-validates any rapidity solution through
//! [`lambdas_from_rapidities`].

mod continuation;
mod lambda;
mod newton;
mod rapidity;

pub use continuation::{
    continuation_xi, solve_xi_rapidities, xi_rg_residual, ContinuationOptions, ContinuationPath,
};
pub use lambda::{
    enumerate_states, lambda_kappa_derivative, lambda_residual_vec, solve_lambdas, solve_pattern,
    xxz_lambda_residual_dual,
};
pub use newton::condition_estimate;
#[doc(hidden)]
pub use rapidity::rg_residual_floor;
pub use rapidity::{
    contraction_seed, rg_residual_vec, secular_roots, solve_from_partition, solve_rapidities,
};

use num_complex::Complex64;
use thiserror::Error;

use crate::models::{self, ModelError, ModelSpec, ModelVariant};

/// Tolerances and step policy shared by the solvers.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Convergence threshold on the max-norm residual.
    pub newton_tol: f64,
    pub max_iter: usize,
    pub step: StepControl,
    /// Minimum allowed distance between a rapidity and any level (and the
    /// origin for the (p+ip) model); closer iterates are rejected.
    pub pole_guard: f64,
    /// Scale of the circle used to split multiple secular roots.
    pub seed_radius: f64,
    /// Debug fallback: replace analytic Jacobians by finite differences.
    pub fd_jacobian: bool,
}

#[derive(Debug, Clone)]
pub struct StepControl {
    pub initial: f64,
    pub min: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Relative trust bound on the rapidity motion per accepted step.
    pub trust: f64,
    /// Jacobian condition estimate above which a step is rejected.
    pub max_condition: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            initial: 0.02,
            min: 1e-8,
            shrink: 0.5,
            grow: 1.4,
            trust: 0.5,
            max_condition: 1e12,
        }
    }
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            newton_tol: 1e-12,
            max_iter: 200,
            step: StepControl::default(),
            pole_guard: 1e-10,
            seed_radius: 1e-3,
            fd_jacobian: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Newton did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
    #[error("rapidity entered the pole guard of a level and damping failed")]
    PoleCollision,
    #[error("seed has wrong dimension: expected {expected}, got {got}")]
    SeedDimensionMismatch { expected: usize, got: usize },
    #[error("eigenvalue-based equations close only for spin-1/2 levels")]
    SpinNotHalf,
    #[error("secular-equation root solve failed")]
    RootFindingFailure,
    #[error("bad seed partition: {0}")]
    BadPartition(String),
    #[error("continuation stalled at xi = {xi}")]
    PathStalled { xi: f64 },
    #[error("linear system singular")]
    LinearSystemSingular,
    #[error("unpaired complex rapidities leave Lambda non-real (max imag {0:.3e})")]
    NonrealLambda(f64),
    #[error("coupling must be nonzero")]
    ZeroCoupling,
    #[error("operation not defined for this model variant")]
    WrongVariant,
    #[error("enumeration found {found} of {expected} states")]
    IncompleteEnumeration {
        found: usize,
        expected: usize,
        failures: Vec<(Vec<usize>, String)>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One eigenstate in whichever representations are available.
#[derive(Debug, Clone)]
pub struct BetheSolution {
    pub model: ModelSpec,
    pub n_excitations: usize,
    /// Complex rapidities; absent for Λ-only solutions.
    pub rapidities: Option<Vec<Complex64>>,
    /// Eigenvalue-based variables, one per spin level.
    pub lambdas: Vec<f64>,
    /// Dependent Λ_0 for the (p+ip) model, from 2Λ_0 = ΣΛ_i + 2κN.
    pub lambda0: Option<f64>,
    pub residual_rapidity: Option<f64>,
    pub residual_lambda: Option<f64>,
    pub charges: Vec<f64>,
}

impl BetheSolution {
    /// Assembles a solution from converged Λ variables.
    pub fn from_lambdas(
        model: &ModelSpec,
        n: usize,
        lambdas: Vec<f64>,
        residual_lambda: f64,
    ) -> Result<Self, SolverError> {
        let charges = match model.variant {
            ModelVariant::XxzSpin => models::xxz_charge_eigenvalues(model, &lambdas)?,
            _ => models::charge_eigenvalues(model, &lambdas, n)?,
        };
        let lambda0 = match model.variant {
            ModelVariant::PipBoson => Some(models::pip_lambda0(model, &lambdas, n)?),
            _ => None,
        };
        Ok(BetheSolution {
            model: model.clone(),
            n_excitations: n,
            rapidities: None,
            lambdas,
            lambda0,
            residual_rapidity: None,
            residual_lambda: Some(residual_lambda),
            charges,
        })
    }

    /// Assembles a solution from converged rapidities; Λ variables and both
    /// residuals are recomputed.
    pub fn from_rapidities(
        model: &ModelSpec,
        n: usize,
        rapidities: Vec<Complex64>,
        residual_rapidity: f64,
    ) -> Result<Self, SolverError> {
        let (lambdas, lambda0) = lambdas_from_rapidities(model, &rapidities)?;
        let charges = match model.variant {
            ModelVariant::XxzSpin => models::xxz_charge_eigenvalues(model, &lambdas)?,
            _ => models::charge_eigenvalues(model, &lambdas, n)?,
        };
        let residual_lambda = if model.spins_all_half() {
            Some(lambda_residual_vec(model, n, &lambdas).amax())
        } else {
            None
        };
        Ok(BetheSolution {
            model: model.clone(),
            n_excitations: n,
            rapidities: Some(rapidities),
            lambdas,
            lambda0,
            residual_rapidity: Some(residual_rapidity),
            residual_lambda,
            charges,
        })
    }
}

/// Λ_i from the defining sums over the rapidities, with the conjugate-pair
/// check: Dicke Λ_i = Σ_α 1/(ε_i−x_α), (p+ip) Λ_i = Σ_α (ε_i+x_α)/(ε_i−x_α)
/// plus Λ_0 = Σ_α η_0²/x_α, XXZ Λ_i = Σ_α Z(ε_i, x_α).
pub fn lambdas_from_rapidities(
    model: &ModelSpec,
    rapidities: &[Complex64],
) -> Result<(Vec<f64>, Option<f64>), SolverError> {
    check_conjugate_pairing(rapidities, 1e-8)?;
    let kernel = if model.variant == ModelVariant::XxzSpin {
        Some(model.kernel()?)
    } else {
        None
    };
    let mut lambdas = Vec::with_capacity(model.num_levels());
    let mut max_imag: f64 = 0.0;
    for i in 0..model.num_levels() {
        let ei = Complex64::new(model.levels[i], 0.0);
        let sum: Complex64 = rapidities
            .iter()
            .map(|&x| match model.variant {
                ModelVariant::Dicke => 1.0 / (ei - x),
                ModelVariant::PipBoson => (ei + x) / (ei - x),
                ModelVariant::XxzSpin => kernel
                    .as_ref()
                    .unwrap()
                    .z(ei, x)
                    .expect("rapidity must stay away from levels"),
            })
            .sum();
        max_imag = max_imag.max(sum.im.abs() / (1.0 + sum.re.abs()));
        lambdas.push(sum.re);
    }
    let lambda0 = match model.pip_params() {
        Some((eta0_sq, _)) => {
            let sum: Complex64 = rapidities.iter().map(|&x| eta0_sq / x).sum();
            max_imag = max_imag.max(sum.im.abs() / (1.0 + sum.re.abs()));
            Some(sum.re)
        }
        None => None,
    };
    if max_imag > 1e-9 {
        return Err(SolverError::NonrealLambda(max_imag));
    }
    Ok((lambdas, lambda0))
}

/// Verifies that non-real rapidities occur in conjugate pairs within `tol`
/// (relative to the rapidity magnitude).
pub fn check_conjugate_pairing(rapidities: &[Complex64], tol: f64) -> Result<(), SolverError> {
    let mut used = vec![false; rapidities.len()];
    for (i, &x) in rapidities.iter().enumerate() {
        if used[i] || x.im.abs() <= tol * (1.0 + x.norm()) {
            continue;
        }
        let partner = rapidities.iter().enumerate().position(|(j, &y)| {
            j != i && !used[j] && (y - x.conj()).norm() <= tol * (1.0 + x.norm())
        });
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return Err(SolverError::NonrealLambda(x.im.abs())),
        }
    }
    Ok(())
}

/// Hole-representation variables Λ'_i = Λ_i + 2/g (XXZ spin models only;
/// the bosonic models have no hole vacuum).
pub fn dual_lambdas(model: &ModelSpec, lambdas: &[f64]) -> Result<Vec<f64>, SolverError> {
    if model.variant != ModelVariant::XxzSpin {
        return Err(SolverError::WrongVariant);
    }
    if model.coupling == 0.0 {
        return Err(SolverError::ZeroCoupling);
    }
    Ok(lambdas.iter().map(|l| l + 2.0 / model.coupling).collect())
}

/// Max-norm residuals of both equation sets, recomputed from scratch.
pub fn residuals(model: &ModelSpec, solution: &BetheSolution) -> (Option<f64>, Option<f64>) {
    let rap = solution.rapidities.as_ref().map(|x| {
        rg_residual_vec(model, x)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.norm()))
    });
    let lam = if model.spins_all_half() {
        Some(lambda_residual_vec(model, solution.n_excitations, &solution.lambdas).amax())
    } else {
        None
    };
    (rap, lam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Realization;

    #[test]
    fn conjugate_pairing_detection() {
        let a = Complex64::new(1.0, 0.5);
        assert!(check_conjugate_pairing(&[a, a.conj()], 1e-8).is_ok());
        assert!(check_conjugate_pairing(&[a, Complex64::new(2.0, 0.0)], 1e-8).is_err());
        assert!(check_conjugate_pairing(&[Complex64::new(1.0, 1e-12)], 1e-8).is_ok());
    }

    #[test]
    fn lambdas_from_rapidities_closed_forms() {
        let dicke = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let x = Complex64::new(1.0 + 2f64.sqrt(), 0.0);
        let (lam, l0) = lambdas_from_rapidities(&dicke, &[x]).unwrap();
        assert!((lam[0] - (-1.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!(l0.is_none());

        let pip = ModelSpec::pip(1.0, 0.0, &[2.0]).unwrap();
        let x = Complex64::new(-2.0 + 2.0 * 2f64.sqrt(), 0.0);
        let (lam, l0) = lambdas_from_rapidities(&pip, &[x]).unwrap();
        assert!((lam[0] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((l0.unwrap() - (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);

        let empty: Vec<Complex64> = vec![];
        let (lam, _) = lambdas_from_rapidities(&dicke, &empty).unwrap();
        assert_eq!(lam, vec![0.0]);
    }

    #[test]
    fn dual_lambda_map() {
        let model = ModelSpec::xxz(Realization::Trigonometric, &[1.0, 2.0], 0.5, None).unwrap();
        let dual = dual_lambdas(&model, &[1.0, -0.5]).unwrap();
        assert_eq!(dual, vec![5.0, 3.5]);
        // double application with the asymmetric map: Λ'' = Λ + 4/g
        let dd = dual_lambdas(&model, &dual).unwrap();
        assert_eq!(dd, vec![9.0, 7.5]);

        let dicke = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        assert!(matches!(
            dual_lambdas(&dicke, &[0.0]),
            Err(SolverError::WrongVariant)
        ));
    }
}
