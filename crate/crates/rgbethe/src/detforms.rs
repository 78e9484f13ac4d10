//! Determinant expressions for overlaps, norms and form factors in the
//! eigenvalue-based variables, plus the permanent-expansion oracle.
//!
//! Conventions:
//!
//! * Bethe states are unnormalized, with unit boson coefficient per
//!   rapidity factor: Π_α (b† + Σ_i c_i(x_α) S†_i)|θ⟩ (XXZ states carry
//!   X(ε_i, x_α) and no boson term). Physical matrix elements divide by
//!   square roots of norms, see [`normalized_element`].
//! * Overlaps are taken with unit-normalized product basis states, so
//!   Parseval reads ⟨ψ|ψ⟩ = Σ_b |⟨b|ψ⟩|².
//! * All determinant routes are rapidity-free: matrices are assembled from
//!   the Λ variables wherever the diagonal is a rapidity sum.
//!
//! Published variants of several of these determinant expressions disagree
//! on constants and signs; every such constant here was calibrated once
//! against the permanent/expansion oracles and the closed-form m=1
//! instances, and the calibrated form is frozen (see the inline notes).

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::models::{BasisState, BosonParams, ModelSpec, ModelVariant};
use crate::solver::{lambda_kappa_derivative, BetheSolution, SolverError};

#[derive(Debug, Error)]
pub enum DetError {
    #[error("operation not defined for this model variant")]
    WrongVariant,
    #[error("gauge parameter collides with a level or rapidity")]
    GaugeCollision,
    #[error("basis state inconsistent with the solution sector")]
    SectorMismatch,
    #[error("permanent expansion limited to N <= {0}")]
    TooLarge(usize),
    #[error("dual determinant vanishes relative to its scale")]
    SingularDual,
    #[error("determinant operations require spin-1/2 levels")]
    SpinNotHalf,
    #[error("solution lacks rapidities required by this operation")]
    MissingRapidities,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Identifies which determinant expression produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaId {
    OverlapXxz,
    OverlapDicke,
    OverlapPip,
    NormDicke,
    NormPip,
    RaisePip,
    BosonPip,
    NumberPip,
    Permanent,
}

/// Scalar result together with the evaluation diagnostics.
#[derive(Debug, Clone)]
pub struct DeterminantReport {
    pub value: Complex64,
    pub matrix_dim: usize,
    /// LU pivot-ratio estimate of the matrix conditioning.
    pub conditioning: f64,
    pub formula: FormulaId,
}

impl DeterminantReport {
    pub fn real(&self) -> f64 {
        self.value.re
    }
}

/// Determinant via LU with partial pivoting; the conditioning estimate is
/// the pivot magnitude spread.
fn det_real(mat: &DMatrix<f64>) -> (f64, f64) {
    let n = mat.nrows();
    if n == 0 {
        return (1.0, 1.0);
    }
    let lu = mat.clone().lu();
    let u = lu.u();
    let mut det = lu.p().determinant::<f64>();
    let mut max_p: f64 = 0.0;
    let mut min_p = f64::INFINITY;
    for i in 0..n {
        let p = u[(i, i)];
        det *= p;
        max_p = max_p.max(p.abs());
        min_p = min_p.min(p.abs());
    }
    (
        det,
        if min_p == 0.0 {
            f64::INFINITY
        } else {
            max_p / min_p
        },
    )
}

fn det_complex(mat: &DMatrix<Complex64>) -> (Complex64, f64) {
    let n = mat.nrows();
    if n == 0 {
        return (Complex64::new(1.0, 0.0), 1.0);
    }
    let lu = mat.clone().lu();
    let u = lu.u();
    let mut det = Complex64::new(lu.p().determinant::<f64>(), 0.0);
    let mut max_p: f64 = 0.0;
    let mut min_p = f64::INFINITY;
    for i in 0..n {
        let p = u[(i, i)];
        det *= p;
        max_p = max_p.max(p.norm());
        min_p = min_p.min(p.norm());
    }
    (
        det,
        if min_p == 0.0 {
            f64::INFINITY
        } else {
            max_p / min_p
        },
    )
}

/// Permanent by Ryser's inclusion-exclusion formula, O(2^n n).
pub fn permanent(mat: &DMatrix<Complex64>) -> Complex64 {
    let n = mat.nrows();
    assert_eq!(n, mat.ncols(), "permanent requires a square matrix");
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut total = Complex64::new(0.0, 0.0);
    for subset in 1u32..(1 << n) {
        let bits = subset.count_ones() as i32;
        let mut prod = Complex64::new(1.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if subset & (1 << j) != 0 {
                    row += mat[(i, j)];
                }
            }
            prod *= row;
        }
        let sign = if (n as i32 - bits) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        total += prod * sign;
    }
    total
}

const PERMANENT_CAP: usize = 12;

/// Bethe-state coefficient of level i at rapidity x for the bosonic models
/// (the b† coefficient is 1) and the XXZ kernel coefficient otherwise.
fn state_coefficient(model: &ModelSpec, i: usize, x: Complex64) -> Complex64 {
    let ei = Complex64::new(model.levels[i], 0.0);
    match model.variant {
        ModelVariant::Dicke => -model.coupling / (ei - x),
        ModelVariant::PipBoson => {
            let (eta0_sq, _) = model.pip_params().unwrap();
            -model.levels[i].sqrt() * x / ((ei - x) * eta0_sq.sqrt())
        }
        ModelVariant::XxzSpin => {
            let kernel = model.kernel().expect("xxz model");
            kernel.x(ei, x).expect("rapidity away from levels")
        }
    }
}

/// Brute-force expansion coefficient ⟨basis|ψ⟩ via the permanent of the
/// coefficient matrix with repeated columns (normalized-basis convention).
pub fn permanent_expansion(
    model: &ModelSpec,
    rapidities: &[Complex64],
    basis: &BasisState,
) -> Result<Complex64, DetError> {
    let n = rapidities.len();
    if n > PERMANENT_CAP {
        return Err(DetError::TooLarge(PERMANENT_CAP));
    }
    basis
        .validate(model, n)
        .map_err(|_| DetError::SectorMismatch)?;
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    if model.has_boson() {
        for _ in 0..basis.boson {
            cols.push(
                rapidities
                    .iter()
                    .map(|_| Complex64::new(1.0, 0.0))
                    .collect(),
            );
        }
    }
    for (i, &occ) in basis.occupations.iter().enumerate() {
        for _ in 0..occ {
            cols.push(
                rapidities
                    .iter()
                    .map(|&x| state_coefficient(model, i, x))
                    .collect(),
            );
        }
    }
    let mut mat = DMatrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            mat[(i, j)] = v;
        }
    }
    let perm = permanent(&mat);
    // normalized-basis coefficient: perm / (N_0! Π N_i!) times the norms of
    // (b†)^{N_0}|0⟩ and (S†_i)^{N_i}|s_i,−s_i⟩
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let mut scale = fact(basis.boson).sqrt() / fact(basis.boson);
    for (i, &occ) in basis.occupations.iter().enumerate() {
        let occ = occ as usize;
        let cap = model.twice_spin(i) as usize;
        let falling: f64 = (0..occ).map(|v| (cap - v) as f64).product();
        scale *= (fact(occ) * falling).sqrt() / fact(occ);
    }
    Ok(perm * scale)
}

fn require_half_spins(model: &ModelSpec) -> Result<(), DetError> {
    if model.spins_all_half() {
        Ok(())
    } else {
        Err(DetError::SpinNotHalf)
    }
}

/// Overlap ⟨N_0;{i_a}|ψ⟩ for the Dicke model,
/// √(N_0!)(−G)^(N−N_0) det J with J_aa = Λ_{i_a} − Σ_{c≠a} 1/(ε_{i_a}−ε_{i_c})
/// and J_ab = 1/(ε_{i_a}−ε_{i_b}).
pub fn overlap_dicke(
    model: &ModelSpec,
    solution: &BetheSolution,
    basis: &BasisState,
) -> Result<DeterminantReport, DetError> {
    if model.variant != ModelVariant::Dicke {
        return Err(DetError::WrongVariant);
    }
    require_half_spins(model)?;
    let n = solution.n_excitations;
    basis
        .validate(model, n)
        .map_err(|_| DetError::SectorMismatch)?;
    let occ = basis.occupied_levels();
    let k = occ.len();
    let mut j = DMatrix::zeros(k, k);
    for (a, &ia) in occ.iter().enumerate() {
        for (b, &ib) in occ.iter().enumerate() {
            j[(a, b)] = if a == b {
                let pair: f64 = occ
                    .iter()
                    .filter(|&&ic| ic != ia)
                    .map(|&ic| 1.0 / (model.levels[ia] - model.levels[ic]))
                    .sum();
                solution.lambdas[ia] - pair
            } else {
                1.0 / (model.levels[ia] - model.levels[ib])
            };
        }
    }
    let (det, cond) = det_real(&j);
    let fact: f64 = (1..=basis.boson).map(|v| v as f64).product();
    let value = fact.sqrt() * (-model.coupling).powi(k as i32) * det;
    Ok(DeterminantReport {
        value: Complex64::new(value, 0.0),
        matrix_dim: k,
        conditioning: cond,
        formula: FormulaId::OverlapDicke,
    })
}

/// Overlap ⟨N_0;{i_a}|ψ⟩ for the (p+ip) model,
/// √(N_0!) √(Π_a ε_{i_a}) / (−η_0)^(N−N_0) det J with
/// J_aa = ½Λ_{i_a} − ½Σ_{c≠a} Z̃_{i_a i_c} − (N_0+1)/2 and
/// J_ab = √(ε_{i_a}ε_{i_b})/(ε_{i_a}−ε_{i_b}).
pub fn overlap_pip(
    model: &ModelSpec,
    solution: &BetheSolution,
    basis: &BasisState,
) -> Result<DeterminantReport, DetError> {
    let Some((eta0_sq, _)) = model.pip_params() else {
        return Err(DetError::WrongVariant);
    };
    require_half_spins(model)?;
    let n = solution.n_excitations;
    basis
        .validate(model, n)
        .map_err(|_| DetError::SectorMismatch)?;
    let occ = basis.occupied_levels();
    let k = occ.len();
    let mut j = DMatrix::zeros(k, k);
    for (a, &ia) in occ.iter().enumerate() {
        for (b, &ib) in occ.iter().enumerate() {
            j[(a, b)] = if a == b {
                let pair: f64 = occ
                    .iter()
                    .filter(|&&ic| ic != ia)
                    .map(|&ic| model.z_hyp(ia, ic))
                    .sum();
                0.5 * solution.lambdas[ia] - 0.5 * pair - (basis.boson as f64 + 1.0) / 2.0
            } else {
                (model.levels[ia] * model.levels[ib]).sqrt() / (model.levels[ia] - model.levels[ib])
            };
        }
    }
    let (det, cond) = det_real(&j);
    let fact: f64 = (1..=basis.boson).map(|v| v as f64).product();
    let level_prod: f64 = occ.iter().map(|&ia| model.levels[ia]).product();
    let value = fact.sqrt() * level_prod.sqrt() / (-eta0_sq.sqrt()).powi(k as i32) * det;
    Ok(DeterminantReport {
        value: Complex64::new(value, 0.0),
        matrix_dim: k,
        conditioning: cond,
        formula: FormulaId::OverlapPip,
    })
}

/// Overlap ⟨{i_1…i_N}|{x_α}⟩ for a spin-1/2 XXZ model with gauge parameter
/// ε_r: (Π_α X_{rα} / Π_a X_{r i_a}) det J with
/// J_aa = Λ_{i_a} − Σ_{c≠a} Z_{i_a i_c} + Z_{r i_a}, J_ab = X_{i_a i_b}.
/// The value is implicitly independent of the gauge.
pub fn overlap_xxz_spin(
    model: &ModelSpec,
    solution: &BetheSolution,
    occupied: &[usize],
    gauge_eps_r: f64,
) -> Result<DeterminantReport, DetError> {
    if model.variant != ModelVariant::XxzSpin {
        return Err(DetError::WrongVariant);
    }
    require_half_spins(model)?;
    let raps = solution
        .rapidities
        .as_ref()
        .ok_or(DetError::MissingRapidities)?;
    let kernel = model.kernel().map_err(|_| DetError::WrongVariant)?;
    let r = Complex64::new(gauge_eps_r, 0.0);
    let scale = model.levels.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    if model
        .levels
        .iter()
        .any(|&e| (e - gauge_eps_r).abs() < 1e-9 * scale)
        || raps.iter().any(|x| (x - r).norm() < 1e-9 * scale)
    {
        return Err(DetError::GaugeCollision);
    }
    let k = occupied.len();
    let mut j = DMatrix::zeros(k, k);
    for (a, &ia) in occupied.iter().enumerate() {
        for (b, &ib) in occupied.iter().enumerate() {
            j[(a, b)] = if a == b {
                let pair: f64 = occupied
                    .iter()
                    .filter(|&&ic| ic != ia)
                    .map(|&ic| model.z_xxz(ia, ic))
                    .sum();
                let zr = kernel
                    .z(r, Complex64::new(model.levels[ia], 0.0))
                    .map_err(|_| DetError::GaugeCollision)?;
                Complex64::new(solution.lambdas[ia] - pair, 0.0) + zr
            } else {
                kernel.x_levels(ia, ib).expect("distinct levels")
            };
        }
    }
    let (det, cond) = det_complex(&j);
    let mut prefactor = Complex64::new(1.0, 0.0);
    for &x in raps {
        prefactor *= kernel.x(r, x).map_err(|_| DetError::GaugeCollision)?;
    }
    for &ia in occupied {
        prefactor /= kernel
            .x(r, Complex64::new(model.levels[ia], 0.0))
            .map_err(|_| DetError::GaugeCollision)?;
    }
    Ok(DeterminantReport {
        value: prefactor * det,
        matrix_dim: k,
        conditioning: cond,
        formula: FormulaId::OverlapXxz,
    })
}

/// Degenerate-dual test: the LU pivot spread is scale-free, and a pivot
/// below 1e-13 of the largest one marks the determinant as vanishing
/// relative to the matrix scale.
fn dual_is_singular(det: f64, cond: f64) -> bool {
    det == 0.0 || !det.is_finite() || cond > 1e13
}

fn norm_ratio(
    jtot: &DMatrix<f64>,
    jdual: &DMatrix<f64>,
    n: usize,
    formula: FormulaId,
) -> Result<DeterminantReport, DetError> {
    let (dt, cond_t) = det_real(jtot);
    let (dd, cond_d) = det_real(jdual);
    if dual_is_singular(dd, cond_d) {
        return Err(DetError::SingularDual);
    }
    let fact: f64 = (1..=n).map(|v| v as f64).product();
    let value = fact * dt / dd;
    if !value.is_finite() {
        return Err(DetError::SingularDual);
    }
    Ok(DeterminantReport {
        value: Complex64::new(value, 0.0),
        matrix_dim: jtot.nrows(),
        conditioning: cond_t.max(cond_d),
        formula,
    })
}

/// Norm ⟨ψ|ψ⟩ = N! det J^tot / det J^dual for the Dicke model.
///
/// Diagonals: J^tot_ii = 2Λ_i + (ε_i−ε_0)/G² − Σ_{k≠i} 1/(ε_i−ε_k), the dual
/// with a single Λ_i; off-diagonals 1/(ε_i−ε_j). The coupling power in the
/// (ε_i−ε_0)/G² term is oracle-calibrated: a single power of G fails the
/// expansion resummation for any G ≠ 1.
pub fn norm_dicke(
    model: &ModelSpec,
    solution: &BetheSolution,
) -> Result<DeterminantReport, DetError> {
    let Some(BosonParams::Dicke { eps0 }) = model.boson else {
        return Err(DetError::WrongVariant);
    };
    require_half_spins(model)?;
    let m = model.num_levels();
    let g2 = model.coupling * model.coupling;
    let mut jtot = DMatrix::zeros(m, m);
    let mut jdual = DMatrix::zeros(m, m);
    for i in 0..m {
        for jx in 0..m {
            if i == jx {
                let pair: f64 = (0..m)
                    .filter(|&k| k != i)
                    .map(|k| 1.0 / (model.levels[i] - model.levels[k]))
                    .sum();
                let base = (model.levels[i] - eps0) / g2 - pair;
                jtot[(i, i)] = 2.0 * solution.lambdas[i] + base;
                jdual[(i, i)] = solution.lambdas[i] + base;
            } else {
                let v = 1.0 / (model.levels[i] - model.levels[jx]);
                jtot[(i, jx)] = v;
                jdual[(i, jx)] = v;
            }
        }
    }
    norm_ratio(&jtot, &jdual, solution.n_excitations, FormulaId::NormDicke)
}

/// Norm ⟨ψ|ψ⟩ = N! det J^tot / det J^dual for the (p+ip) model.
///
/// Diagonals: 2J^tot_ii = 2Λ_i − Σ_{j≠i} Z̃_{ij} − 2η_0²/ε_i + 2κ − 1 and
/// 2J^dual_ii = Λ_i − Σ_{j≠i} Z̃_{ij} − 2η_0²/ε_i + 2κ − 1 + N;
/// off-diagonals √(ε_iε_j)/(ε_i−ε_j). The +N in the dual diagonal is
/// oracle-calibrated: the analogous term vanishes in the trigonometric
/// contraction but survives the hyperbolic one and is easy to lose.
pub fn norm_pip(
    model: &ModelSpec,
    solution: &BetheSolution,
) -> Result<DeterminantReport, DetError> {
    let Some((eta0_sq, kappa)) = model.pip_params() else {
        return Err(DetError::WrongVariant);
    };
    require_half_spins(model)?;
    let m = model.num_levels();
    let n = solution.n_excitations;
    let mut jtot = DMatrix::zeros(m, m);
    let mut jdual = DMatrix::zeros(m, m);
    for i in 0..m {
        for jx in 0..m {
            if i == jx {
                let pair: f64 = (0..m).filter(|&k| k != i).map(|k| model.z_hyp(i, k)).sum();
                let base = -pair - 2.0 * eta0_sq / model.levels[i] + 2.0 * kappa - 1.0;
                jtot[(i, i)] = 0.5 * (2.0 * solution.lambdas[i] + base);
                jdual[(i, i)] = 0.5 * (solution.lambdas[i] + base + n as f64);
            } else {
                let v = (model.levels[i] * model.levels[jx]).sqrt()
                    / (model.levels[i] - model.levels[jx]);
                jtot[(i, jx)] = v;
                jdual[(i, jx)] = v;
            }
        }
    }
    norm_ratio(&jtot, &jdual, n, FormulaId::NormPip)
}

/// The (p+ip) dual matrix of an N-excitation state (denominator of every
/// determinant ratio).
fn pip_dual_matrix(model: &ModelSpec, lambdas: &[f64], n: usize) -> DMatrix<f64> {
    let (eta0_sq, kappa) = model.pip_params().expect("pip model");
    let m = model.num_levels();
    let mut jd = DMatrix::zeros(m, m);
    for i in 0..m {
        for jx in 0..m {
            if i == jx {
                let pair: f64 = (0..m).filter(|&k| k != i).map(|k| model.z_hyp(i, k)).sum();
                jd[(i, i)] = 0.5
                    * (lambdas[i] - pair - 2.0 * eta0_sq / model.levels[i] + 2.0 * kappa - 1.0
                        + n as f64);
            } else {
                jd[(i, jx)] = (model.levels[i] * model.levels[jx]).sqrt()
                    / (model.levels[i] - model.levels[jx]);
            }
        }
    }
    jd
}

fn check_pair_sectors(
    model: &ModelSpec,
    sol_n: &BetheSolution,
    sol_m: &BetheSolution,
    gap: usize,
) -> Result<(), DetError> {
    if sol_n.model != *model || sol_m.model != *model {
        return Err(DetError::SectorMismatch);
    }
    if sol_n.n_excitations != sol_m.n_excitations + gap {
        return Err(DetError::SectorMismatch);
    }
    Ok(())
}

/// Unnormalized form factor ⟨ψ_N|S_k†|ψ_{N−1}⟩ for the (p+ip) model:
/// −(η_0/√ε_k) N! det J^k / det J^dual with the (m−1)×(m−1) matrix J^k over
/// i,j ≠ k,
/// J^k_ii = ½[Λ^N_i + Λ^{N−1}_i + 2κ − 2η_0²/ε_i − Σ_{l≠i,l≠k} Z̃_{il} − 1],
/// and J^dual the dual matrix of the N-excitation state. The −η_0/√ε_k
/// prefactor (from freezing one rapidity onto ε_k) and the dual-matrix
/// choice are oracle-calibrated.
pub fn ff_raise_pip(
    model: &ModelSpec,
    sol_n: &BetheSolution,
    sol_nm1: &BetheSolution,
    level_k: usize,
) -> Result<DeterminantReport, DetError> {
    let Some((eta0_sq, kappa)) = model.pip_params() else {
        return Err(DetError::WrongVariant);
    };
    require_half_spins(model)?;
    check_pair_sectors(model, sol_n, sol_nm1, 1)?;
    let m = model.num_levels();
    if level_k >= m {
        return Err(DetError::SectorMismatch);
    }
    let n = sol_n.n_excitations;
    let rows: Vec<usize> = (0..m).filter(|&i| i != level_k).collect();
    let mut jk = DMatrix::zeros(m - 1, m - 1);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &jx) in rows.iter().enumerate() {
            jk[(a, b)] = if a == b {
                let pair: f64 = (0..m)
                    .filter(|&l| l != i && l != level_k)
                    .map(|l| model.z_hyp(i, l))
                    .sum();
                0.5 * (sol_n.lambdas[i] + sol_nm1.lambdas[i] + 2.0 * kappa
                    - 2.0 * eta0_sq / model.levels[i]
                    - pair
                    - 1.0)
            } else {
                (model.levels[i] * model.levels[jx]).sqrt() / (model.levels[i] - model.levels[jx])
            };
        }
    }
    let jdual = pip_dual_matrix(model, &sol_n.lambdas, n);
    let (dk, cond_k) = det_real(&jk);
    let (dd, cond_d) = det_real(&jdual);
    if dual_is_singular(dd, cond_d) {
        return Err(DetError::SingularDual);
    }
    let fact: f64 = (1..=n).map(|v| v as f64).product();
    let prefactor = -eta0_sq.sqrt() / model.levels[level_k].sqrt();
    Ok(DeterminantReport {
        value: Complex64::new(prefactor * fact * dk / dd, 0.0),
        matrix_dim: m - 1,
        conditioning: cond_k.max(cond_d),
        formula: FormulaId::RaisePip,
    })
}

/// Unnormalized form factor ⟨ψ_N|b†|ψ_{N−1}⟩ for the (p+ip) model:
/// N! det J^b / det J^dual with the m×m matrix
/// J^b_ii = ½[Λ^N_i + Λ^{N−1}_i + 2κ − 2η_0²/ε_i − Σ_{l≠i} Z̃_{il}] and the
/// N-state dual in the denominator. Freezing the extra rapidity at zero
/// cancels the gauge constant on the diagonal; the calibrated form keeps
/// that cancellation.
pub fn ff_boson_pip(
    model: &ModelSpec,
    sol_n: &BetheSolution,
    sol_nm1: &BetheSolution,
) -> Result<DeterminantReport, DetError> {
    let Some((eta0_sq, kappa)) = model.pip_params() else {
        return Err(DetError::WrongVariant);
    };
    require_half_spins(model)?;
    check_pair_sectors(model, sol_n, sol_nm1, 1)?;
    let m = model.num_levels();
    let n = sol_n.n_excitations;
    let mut jb = DMatrix::zeros(m, m);
    for i in 0..m {
        for jx in 0..m {
            jb[(i, jx)] = if i == jx {
                let pair: f64 = (0..m).filter(|&l| l != i).map(|l| model.z_hyp(i, l)).sum();
                0.5 * (sol_n.lambdas[i] + sol_nm1.lambdas[i] + 2.0 * kappa
                    - 2.0 * eta0_sq / model.levels[i]
                    - pair)
            } else {
                (model.levels[i] * model.levels[jx]).sqrt() / (model.levels[i] - model.levels[jx])
            };
        }
    }
    let jdual = pip_dual_matrix(model, &sol_n.lambdas, n);
    let (db, cond_b) = det_real(&jb);
    let (dd, cond_d) = det_real(&jdual);
    if dual_is_singular(dd, cond_d) {
        return Err(DetError::SingularDual);
    }
    let fact: f64 = (1..=n).map(|v| v as f64).product();
    Ok(DeterminantReport {
        value: Complex64::new(fact * db / dd, 0.0),
        matrix_dim: m,
        conditioning: cond_b.max(cond_d),
        formula: FormulaId::BosonPip,
    })
}

/// Local number expectations for the (p+ip) model.
#[derive(Debug, Clone)]
pub struct NumberFormFactors {
    /// ⟨S_i^0⟩ per level (diagonal) or transition elements (off-diagonal).
    pub spin_z: Vec<f64>,
    /// ⟨b†b⟩ recovered from excitation-number conservation.
    pub boson: f64,
}

/// Number-operator form factors via the Hellmann-Feynman route.
///
/// Diagonal (sol_a = sol_b; physically normalized by construction):
/// ⟨S_i^0⟩ = ½(−1 − ∂Λ_i/∂κ) and ⟨b†b⟩ = N − Σ_i s_i − Σ_i ⟨S_i^0⟩.
///
/// Off-diagonal (unnormalized, bra = sol_b, ket = sol_a):
/// ⟨ψ_b|S_i^0|ψ_a⟩ = −(N!/4)(Λ_i^a−Λ_i^b) Σ_k (∂Λ_k^a/∂κ) det J̃^k / det J^dual,b
/// with J̃^k the both-state matrix with row and column k removed and the
/// dual matrix built on the bra state. The N!/2 scale, the overall sign
/// and the bra-side dual are oracle-calibrated;
/// ⟨ψ_b|b†b|ψ_a⟩ = −Σ_i ⟨ψ_b|S_i^0|ψ_a⟩ by number conservation.
pub fn ff_number_pip(
    model: &ModelSpec,
    sol_a: &BetheSolution,
    sol_b: &BetheSolution,
) -> Result<NumberFormFactors, DetError> {
    let Some((eta0_sq, kappa)) = model.pip_params() else {
        return Err(DetError::WrongVariant);
    };
    require_half_spins(model)?;
    check_pair_sectors(model, sol_a, sol_b, 0)?;
    let m = model.num_levels();
    let n = sol_a.n_excitations;
    let spin_sum: f64 = model.spins.iter().sum();
    let diagonal = sol_a
        .lambdas
        .iter()
        .zip(&sol_b.lambdas)
        .all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()));
    let dlam = lambda_kappa_derivative(model, n, &sol_a.lambdas)?;
    if diagonal {
        let spin_z: Vec<f64> = dlam.iter().map(|d| 0.5 * (-1.0 - d)).collect();
        let boson = n as f64 - spin_sum - spin_z.iter().sum::<f64>();
        return Ok(NumberFormFactors { spin_z, boson });
    }
    // off-diagonal transition elements
    let jdual = pip_dual_matrix(model, &sol_b.lambdas, n);
    let (dd, cond_d) = det_real(&jdual);
    if dual_is_singular(dd, cond_d) {
        return Err(DetError::SingularDual);
    }
    let mut both = DMatrix::zeros(m, m);
    for i in 0..m {
        for jx in 0..m {
            both[(i, jx)] = if i == jx {
                let pair: f64 = (0..m).filter(|&l| l != i).map(|l| model.z_hyp(i, l)).sum();
                0.5 * (sol_a.lambdas[i] + sol_b.lambdas[i] - pair - 2.0 * eta0_sq / model.levels[i]
                    + 2.0 * kappa
                    - 1.0)
            } else {
                (model.levels[i] * model.levels[jx]).sqrt() / (model.levels[i] - model.levels[jx])
            };
        }
    }
    let mut weight = 0.0;
    for (k, dk_dkappa) in dlam.iter().enumerate() {
        let rows: Vec<usize> = (0..m).filter(|&i| i != k).collect();
        let mut jk = DMatrix::zeros(m - 1, m - 1);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &jx) in rows.iter().enumerate() {
                jk[(a, b)] = both[(i, jx)];
            }
        }
        let (dk, _) = det_real(&jk);
        weight += dk_dkappa * dk;
    }
    let fact: f64 = (1..=n).map(|v| v as f64).product();
    let spin_z: Vec<f64> = (0..m)
        .map(|i| -0.25 * fact * (sol_a.lambdas[i] - sol_b.lambdas[i]) * weight / dd)
        .collect();
    let boson = -spin_z.iter().sum::<f64>();
    Ok(NumberFormFactors { spin_z, boson })
}

/// Physical matrix element of an unnormalized value.
pub fn normalized_element(value: f64, norm_bra: f64, norm_ket: f64) -> f64 {
    value / (norm_bra * norm_ket).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Realization;
    use crate::solver::{solve_lambdas, solve_rapidities, SolveConfig};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn dicke_m1_state() -> (ModelSpec, BetheSolution) {
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let sol = solve_rapidities(&model, 1, &[c(2.3)], &SolveConfig::default()).unwrap();
        (model, sol)
    }

    fn pip_m1_state() -> (ModelSpec, BetheSolution) {
        let model = ModelSpec::pip(1.0, 0.0, &[2.0]).unwrap();
        let sol = solve_rapidities(&model, 1, &[c(0.8)], &SolveConfig::default()).unwrap();
        (model, sol)
    }

    #[test]
    fn permanent_small_cases() {
        let one = DMatrix::from_row_slice(1, 1, &[c(3.5)]);
        assert_eq!(permanent(&one), c(3.5));
        let two = DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        assert_eq!(permanent(&two), c(1.0 * 4.0 + 2.0 * 3.0));
        let empty: DMatrix<Complex64> = DMatrix::zeros(0, 0);
        assert_eq!(permanent(&empty), c(1.0));
    }

    #[test]
    fn permanent_expansion_rapidity_order_invariant() {
        let model = ModelSpec::dicke(1.0, &[2.0, 3.0, 4.0], -0.4).unwrap();
        let raps = [c(1.3), Complex64::new(2.5, 0.4), Complex64::new(2.5, -0.4)];
        let basis = BasisState {
            boson: 1,
            occupations: vec![1, 0, 1],
        };
        let v1 = permanent_expansion(&model, &raps, &basis).unwrap();
        let swapped = [raps[2], raps[0], raps[1]];
        let v2 = permanent_expansion(&model, &swapped, &basis).unwrap();
        assert!((v1 - v2).norm() < 1e-12 * (1.0 + v1.norm()));
        assert!(
            v1.im.abs() < 1e-12,
            "conjugate-paired rapidities give real overlaps"
        );
    }

    #[test]
    fn dicke_m1_overlaps_and_norm() {
        let (model, sol) = dicke_m1_state();
        // (N_0=1, ∅) → 1
        let b1 = BasisState {
            boson: 1,
            occupations: vec![0],
        };
        assert!((overlap_dicke(&model, &sol, &b1).unwrap().real() - 1.0).abs() < 1e-12);
        // (N_0=0, {1}) → −Λ₁ = 1+√2
        let b0 = BasisState {
            boson: 0,
            occupations: vec![1],
        };
        let v = overlap_dicke(&model, &sol, &b0).unwrap().real();
        assert!((v - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        // both match the permanent route
        let raps = sol.rapidities.as_ref().unwrap();
        for b in [&b1, &b0] {
            let p = permanent_expansion(&model, raps, b).unwrap();
            let d = overlap_dicke(&model, &sol, b).unwrap().value;
            assert!((p - d).norm() < 1e-12 * (1.0 + p.norm()));
        }
        // norm = 4 + 2√2
        let n = norm_dicke(&model, &sol).unwrap().real();
        assert!((n - (4.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn pip_m1_overlaps_and_norm() {
        let (model, sol) = pip_m1_state();
        let b1 = BasisState {
            boson: 1,
            occupations: vec![0],
        };
        assert!((overlap_pip(&model, &sol, &b1).unwrap().real() - 1.0).abs() < 1e-12);
        let b0 = BasisState {
            boson: 0,
            occupations: vec![1],
        };
        let v = overlap_pip(&model, &sol, &b0).unwrap().real();
        assert!((v - (-1.0)).abs() < 1e-10);
        let n = norm_pip(&model, &sol).unwrap().real();
        assert!((n - 2.0).abs() < 1e-10);
    }

    #[test]
    fn vacuum_overlap_is_unity() {
        let model = ModelSpec::dicke(1.0, &[2.0, 3.0], -0.2).unwrap();
        let sol = solve_lambdas(&model, 0, &[0.0, 0.0], &SolveConfig::default()).unwrap();
        let b = BasisState {
            boson: 0,
            occupations: vec![0, 0],
        };
        assert_eq!(overlap_dicke(&model, &sol, &b).unwrap().real(), 1.0);
        assert_eq!(norm_dicke(&model, &sol).unwrap().real(), 1.0);
    }

    #[test]
    fn xxz_single_excitation_overlap_is_kernel_coefficient() {
        let model = ModelSpec::xxz(Realization::Trigonometric, &[2.0], 0.7, None).unwrap();
        // any rapidity works off shell for the determinant/permanent identity
        let x = c(0.9);
        let kernel = model.kernel().unwrap();
        let lam = kernel.z(c(2.0), x).unwrap().re;
        let sol = BetheSolution {
            model: model.clone(),
            n_excitations: 1,
            rapidities: Some(vec![x]),
            lambdas: vec![lam],
            lambda0: None,
            residual_rapidity: None,
            residual_lambda: None,
            charges: vec![0.0],
        };
        let expect = kernel.x(c(2.0), x).unwrap();
        for gauge in [0.0, 5.7] {
            let v = overlap_xxz_spin(&model, &sol, &[0], gauge).unwrap().value;
            assert!(
                (v - expect).norm() < 1e-12 * (1.0 + expect.norm()),
                "gauge {gauge}"
            );
        }
        // gauge collision with the level
        assert!(matches!(
            overlap_xxz_spin(&model, &sol, &[0], 2.0),
            Err(DetError::GaugeCollision)
        ));
    }

    #[test]
    fn sector_mismatch_rejected() {
        let (model, sol) = dicke_m1_state();
        let wrong = BasisState {
            boson: 2,
            occupations: vec![0],
        };
        assert!(matches!(
            overlap_dicke(&model, &sol, &wrong),
            Err(DetError::SectorMismatch)
        ));
        let other = ModelSpec::pip(1.0, 0.0, &[2.0]).unwrap();
        let sol_pip = solve_rapidities(&other, 1, &[c(0.8)], &SolveConfig::default()).unwrap();
        let err = ff_raise_pip(&other, &sol_pip, &sol, 0);
        assert!(matches!(err, Err(DetError::SectorMismatch)));
    }

    #[test]
    fn number_ff_sum_rule_m1() {
        // ⟨S^0⟩ + ⟨b†b⟩ = N − Σ s_i = 1/2
        let (model, sol) = pip_m1_state();
        let ff = ff_number_pip(&model, &sol, &sol).unwrap();
        assert!((ff.spin_z[0] + ff.boson - 0.5).abs() < 1e-12);
        // m=1 closed form: ∂Λ/∂κ = −1 so ⟨S^0⟩ = 0
        assert!(ff.spin_z[0].abs() < 1e-10);
    }

    #[test]
    fn boson_ff_m1_closed_form() {
        // ⟨ψ_1|b†|θ⟩ = 1 before normalization
        let (model, sol1) = pip_m1_state();
        let sol0 = solve_lambdas(&model, 0, &[0.0], &SolveConfig::default()).unwrap();
        let v = ff_boson_pip(&model, &sol1, &sol0).unwrap().real();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn permanent_cap() {
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let raps: Vec<Complex64> = (0..13).map(|k| c(3.0 + k as f64)).collect();
        let basis = BasisState {
            boson: 13,
            occupations: vec![0],
        };
        assert!(matches!(
            permanent_expansion(&model, &raps, &basis),
            Err(DetError::TooLarge(_))
        ));
    }
}
