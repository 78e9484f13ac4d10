//! Exact diagonalization in the conserved-excitation sector.
//!
//! Both bosonic models and the XXZ spin models conserve the total excitation
//! number, so the N-excitation sector is finite dimensional and the boson
//! occupation is bounded by N: sector truncation is exact. The oracle builds
//! dense charge/Hamiltonian matrices over the product basis, diagonalizes
//! them, and resolves degeneracies by a (seeded) random positive combination
//! of the charges, since the full charge tuple rather than the energy labels
//! a Bethe state.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::models::{sector_dimension, BasisState, BosonParams, ModelSpec, ModelVariant};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("unknown operator for this model variant")]
    UnknownOperator,
    #[error("eigensolver failed: {0}")]
    EigensolverFailure(String),
    #[error("no eigenstate matches the Bethe charge tuple (best deviation {0:.3e})")]
    NoMatch(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("sector dimension {0} exceeds the oracle cap {1}")]
    SectorTooLarge(usize, usize),
}

pub const SECTOR_CAP: usize = 5000;

/// The ordered product basis of one excitation sector.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub model: ModelSpec,
    pub n: usize,
    pub states: Vec<BasisState>,
    index: HashMap<Vec<u32>, usize>,
}

impl SectorBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn position(&self, state: &BasisState) -> Option<usize> {
        self.index.get(&state.occupations).copied()
    }
}

/// Enumerates the sector basis, ordered lexicographically by occupations
/// (the boson count is determined by the remainder).
pub fn build_sector_basis(model: &ModelSpec, n: usize) -> Result<SectorBasis, OracleError> {
    let dim = sector_dimension(model, n);
    if dim > SECTOR_CAP {
        return Err(OracleError::SectorTooLarge(dim, SECTOR_CAP));
    }
    let m = model.num_levels();
    let caps: Vec<u32> = (0..m).map(|i| model.twice_spin(i)).collect();
    let mut states = Vec::with_capacity(dim);
    let mut occ = vec![0u32; m];
    loop {
        let spin_exc: usize = occ.iter().map(|&o| o as usize).sum();
        if spin_exc <= n && (model.has_boson() || spin_exc == n) {
            states.push(BasisState {
                boson: n - spin_exc,
                occupations: occ.clone(),
            });
        }
        // odometer over capped occupations
        let mut k = m;
        loop {
            if k == 0 {
                let index = states
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.occupations.clone(), i))
                    .collect();
                let basis = SectorBasis {
                    model: model.clone(),
                    n,
                    states,
                    index,
                };
                debug_assert_eq!(basis.dim(), dim);
                return Ok(basis);
            }
            k -= 1;
            if occ[k] < caps[k] {
                occ[k] += 1;
                break;
            }
            occ[k] = 0;
        }
    }
}

/// Sector-preserving operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorId {
    /// Conserved charge R_i attached to spin level i.
    Charge(usize),
    /// Model Hamiltonian: R_0^D for Dicke, Σ_k ε_k R_k^p for (p+ip),
    /// Σ_i ε_i R_i for XXZ.
    Hamiltonian,
    /// b†b.
    BosonNumber,
    /// S_i^0.
    SpinZ(usize),
    /// Total excitation count (constant on the sector).
    ExcitationNumber,
}

/// Sector-changing ladder operators, N−1 → N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaisingId {
    SpinRaise(usize),
    BosonCreate,
}

struct Accumulator<'a> {
    basis: &'a SectorBasis,
    column: Vec<f64>,
}

impl<'a> Accumulator<'a> {
    fn new(basis: &'a SectorBasis) -> Self {
        Accumulator {
            basis,
            column: vec![0.0; basis.dim()],
        }
    }

    fn add(&mut self, state: &BasisState, amp: f64) {
        if amp == 0.0 {
            return;
        }
        let row = self
            .basis
            .position(state)
            .expect("excitation-conserving operator left the sector");
        self.column[row] += amp;
    }
}

fn spin_raise_amp(model: &ModelSpec, i: usize, occ: u32) -> f64 {
    let cap = model.twice_spin(i);
    if occ >= cap {
        0.0
    } else {
        (((occ + 1) * (cap - occ)) as f64).sqrt()
    }
}

fn spin_lower_amp(model: &ModelSpec, i: usize, occ: u32) -> f64 {
    let cap = model.twice_spin(i);
    if occ == 0 {
        0.0
    } else {
        ((occ * (cap - occ + 1)) as f64).sqrt()
    }
}

fn spin_z_val(model: &ModelSpec, i: usize, occ: u32) -> f64 {
    occ as f64 - model.spins[i]
}

/// S†_i S_k |ket⟩ for i ≠ k.
fn hop(model: &ModelSpec, ket: &BasisState, i: usize, k: usize) -> Option<(BasisState, f64)> {
    let a_low = spin_lower_amp(model, k, ket.occupations[k]);
    if a_low == 0.0 {
        return None;
    }
    let mut occ = ket.occupations.clone();
    occ[k] -= 1;
    let a_raise = spin_raise_amp(model, i, occ[i]);
    if a_raise == 0.0 {
        return None;
    }
    occ[i] += 1;
    Some((
        BasisState {
            boson: ket.boson,
            occupations: occ,
        },
        a_low * a_raise,
    ))
}

/// S†_i b |ket⟩.
fn raise_spin_annihilate_boson(
    model: &ModelSpec,
    ket: &BasisState,
    i: usize,
) -> Option<(BasisState, f64)> {
    if ket.boson == 0 {
        return None;
    }
    let a_raise = spin_raise_amp(model, i, ket.occupations[i]);
    if a_raise == 0.0 {
        return None;
    }
    let mut occ = ket.occupations.clone();
    occ[i] += 1;
    Some((
        BasisState {
            boson: ket.boson - 1,
            occupations: occ,
        },
        (ket.boson as f64).sqrt() * a_raise,
    ))
}

/// S_i b† |ket⟩.
fn lower_spin_create_boson(
    model: &ModelSpec,
    ket: &BasisState,
    i: usize,
) -> Option<(BasisState, f64)> {
    let a_low = spin_lower_amp(model, i, ket.occupations[i]);
    if a_low == 0.0 {
        return None;
    }
    let mut occ = ket.occupations.clone();
    occ[i] -= 1;
    Some((
        BasisState {
            boson: ket.boson + 1,
            occupations: occ,
        },
        ((ket.boson + 1) as f64).sqrt() * a_low,
    ))
}

fn apply_charge(model: &ModelSpec, ket: &BasisState, i: usize, acc: &mut Accumulator) {
    let m = model.num_levels();
    match model.variant {
        ModelVariant::Dicke => {
            let Some(BosonParams::Dicke { eps0 }) = model.boson else {
                unreachable!()
            };
            let g = model.coupling;
            let mut diag = (eps0 - model.levels[i]) * spin_z_val(model, i, ket.occupations[i]);
            for k in (0..m).filter(|&k| k != i) {
                let w = -2.0 * g * g / (model.levels[i] - model.levels[k]);
                diag += w
                    * spin_z_val(model, i, ket.occupations[i])
                    * spin_z_val(model, k, ket.occupations[k]);
                if let Some((st, amp)) = hop(model, ket, i, k) {
                    acc.add(&st, 0.5 * w * amp);
                }
                if let Some((st, amp)) = hop(model, ket, k, i) {
                    acc.add(&st, 0.5 * w * amp);
                }
            }
            acc.add(ket, diag);
            if let Some((st, amp)) = raise_spin_annihilate_boson(model, ket, i) {
                acc.add(&st, -g * amp);
            }
            if let Some((st, amp)) = lower_spin_create_boson(model, ket, i) {
                acc.add(&st, -g * amp);
            }
        }
        ModelVariant::PipBoson => {
            let Some(BosonParams::Pip { eta0_sq, kappa }) = model.boson else {
                unreachable!()
            };
            let eta0 = eta0_sq.sqrt();
            let ei = model.levels[i];
            let mut diag = spin_z_val(model, i, ket.occupations[i])
                * (kappa + ket.boson as f64 - eta0_sq / ei);
            for k in (0..m).filter(|&k| k != i) {
                let ek = model.levels[k];
                let x = (ei * ek).sqrt() / (ei - ek);
                let z = (ei + ek) / (ei - ek);
                diag += z
                    * spin_z_val(model, i, ket.occupations[i])
                    * spin_z_val(model, k, ket.occupations[k]);
                if let Some((st, amp)) = hop(model, ket, i, k) {
                    acc.add(&st, x * amp);
                }
                if let Some((st, amp)) = hop(model, ket, k, i) {
                    acc.add(&st, x * amp);
                }
            }
            acc.add(ket, diag);
            let w = eta0 / ei.sqrt();
            if let Some((st, amp)) = raise_spin_annihilate_boson(model, ket, i) {
                acc.add(&st, w * amp);
            }
            if let Some((st, amp)) = lower_spin_create_boson(model, ket, i) {
                acc.add(&st, w * amp);
            }
        }
        ModelVariant::XxzSpin => {
            let kernel = model.kernel().expect("xxz model carries a kernel");
            let g = model.coupling;
            let mut diag = spin_z_val(model, i, ket.occupations[i]);
            for k in (0..m).filter(|&k| k != i) {
                let x = kernel.x_levels(i, k).expect("distinct levels").re;
                let z = kernel.z_levels(i, k).expect("distinct levels").re;
                diag += g
                    * z
                    * spin_z_val(model, i, ket.occupations[i])
                    * spin_z_val(model, k, ket.occupations[k]);
                // ½ X_ik (S†_k S_i + S_k S†_i)
                if let Some((st, amp)) = hop(model, ket, k, i) {
                    acc.add(&st, 0.5 * g * x * amp);
                }
                if let Some((st, amp)) = hop(model, ket, i, k) {
                    acc.add(&st, 0.5 * g * x * amp);
                }
            }
            acc.add(ket, diag);
        }
    }
}

/// Dense matrix of a sector-preserving operator in the basis ordering.
pub fn build_operator(basis: &SectorBasis, id: OperatorId) -> Result<DMatrix<f64>, OracleError> {
    let model = &basis.model;
    let m = model.num_levels();
    let dim = basis.dim();
    let mut mat = DMatrix::zeros(dim, dim);
    for (col, ket) in basis.states.iter().enumerate() {
        let mut acc = Accumulator::new(basis);
        match id {
            OperatorId::Charge(i) => {
                if i >= m {
                    return Err(OracleError::UnknownOperator);
                }
                apply_charge(model, ket, i, &mut acc);
            }
            OperatorId::Hamiltonian => match model.variant {
                ModelVariant::Dicke => {
                    let Some(BosonParams::Dicke { eps0 }) = model.boson else {
                        unreachable!()
                    };
                    let g = model.coupling;
                    let mut diag = eps0 * ket.boson as f64;
                    for i in 0..m {
                        diag += model.levels[i] * spin_z_val(model, i, ket.occupations[i]);
                    }
                    acc.add(ket, diag);
                    for i in 0..m {
                        if let Some((st, amp)) = raise_spin_annihilate_boson(model, ket, i) {
                            acc.add(&st, g * amp);
                        }
                        if let Some((st, amp)) = lower_spin_create_boson(model, ket, i) {
                            acc.add(&st, g * amp);
                        }
                    }
                }
                ModelVariant::PipBoson | ModelVariant::XxzSpin => {
                    for i in 0..m {
                        let mut charge = Accumulator::new(basis);
                        apply_charge(model, ket, i, &mut charge);
                        for (row, amp) in charge.column.iter().enumerate() {
                            acc.column[row] += model.levels[i] * amp;
                        }
                    }
                }
            },
            OperatorId::BosonNumber => acc.add(ket, ket.boson as f64),
            OperatorId::SpinZ(i) => {
                if i >= m {
                    return Err(OracleError::UnknownOperator);
                }
                acc.add(ket, spin_z_val(model, i, ket.occupations[i]));
            }
            OperatorId::ExcitationNumber => acc.add(ket, basis.n as f64),
        }
        mat.set_column(col, &DVector::from_vec(acc.column));
    }
    Ok(mat)
}

/// Rectangular matrix of a raising operator between the N−1 and N sector
/// bases (rows index `to`, columns index `from`).
pub fn build_raising(
    to: &SectorBasis,
    from: &SectorBasis,
    id: RaisingId,
) -> Result<DMatrix<f64>, OracleError> {
    if to.n != from.n + 1 {
        return Err(OracleError::DimensionMismatch(to.n, from.n));
    }
    let model = &to.model;
    let mut mat = DMatrix::zeros(to.dim(), from.dim());
    for (col, ket) in from.states.iter().enumerate() {
        match id {
            RaisingId::SpinRaise(i) => {
                let amp = spin_raise_amp(model, i, ket.occupations[i]);
                if amp != 0.0 {
                    let mut occ = ket.occupations.clone();
                    occ[i] += 1;
                    let st = BasisState {
                        boson: ket.boson,
                        occupations: occ,
                    };
                    if let Some(row) = to.position(&st) {
                        mat[(row, col)] = amp;
                    }
                }
            }
            RaisingId::BosonCreate => {
                let st = BasisState {
                    boson: ket.boson + 1,
                    occupations: ket.occupations.clone(),
                };
                if let Some(row) = to.position(&st) {
                    mat[(row, col)] = ((ket.boson + 1) as f64).sqrt();
                }
            }
        }
    }
    Ok(mat)
}

/// One simultaneous eigenvector of all charges together with its full charge
/// tuple.
#[derive(Debug, Clone)]
pub struct ChargeEigenpair {
    pub charges: Vec<f64>,
    pub energy: f64,
    pub vector: DVector<f64>,
}

/// Simultaneously diagonalizes the commuting charge set.
///
/// A seeded random positive combination of the charges is diagonalized once;
/// its eigenvectors are generically nondegenerate and the per-charge
/// eigenvalues are read off as quadratic forms. Residual off-diagonal charge
/// matrix elements are checked against 1e-10.
pub fn charge_eigenpairs(basis: &SectorBasis) -> Result<Vec<ChargeEigenpair>, OracleError> {
    let m = basis.model.num_levels();
    let charges: Vec<DMatrix<f64>> = (0..m)
        .map(|i| build_operator(basis, OperatorId::Charge(i)))
        .collect::<Result<_, _>>()?;
    let ham = build_operator(basis, OperatorId::Hamiltonian)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x9ad1);
    let mut combo = DMatrix::zeros(basis.dim(), basis.dim());
    for c in &charges {
        combo += c * rng.gen_range(0.5..1.5);
    }
    combo = (combo.clone() + combo.transpose()) * 0.5;
    let eig = combo.symmetric_eigen();

    let mut pairs: Vec<ChargeEigenpair> = (0..basis.dim())
        .map(|j| {
            let v = eig.eigenvectors.column(j).into_owned();
            let charges: Vec<f64> = charges
                .iter()
                .map(|c| (v.transpose() * c * &v)[(0, 0)])
                .collect();
            let energy = (v.transpose() * &ham * &v)[(0, 0)];
            ChargeEigenpair {
                charges,
                energy,
                vector: v,
            }
        })
        .collect();

    // simultaneous-diagonalization quality check
    let mut max_offdiag: f64 = 0.0;
    for c in &charges {
        for a in 0..pairs.len() {
            for b in (a + 1)..pairs.len() {
                let off = (pairs[a].vector.transpose() * c * &pairs[b].vector)[(0, 0)];
                max_offdiag = max_offdiag.max(off.abs());
            }
        }
    }
    if max_offdiag > 1e-10 {
        return Err(OracleError::EigensolverFailure(format!(
            "charges not simultaneously diagonal (off-diagonal {max_offdiag:.3e})"
        )));
    }

    pairs.sort_by(|a, b| {
        a.charges
            .iter()
            .zip(&b.charges)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(pairs)
}

/// Spectrum and orthonormal eigenvectors of one Hermitian sector operator.
pub fn diagonalize(
    basis: &SectorBasis,
    id: OperatorId,
) -> Result<(Vec<f64>, DMatrix<f64>), OracleError> {
    let mat = build_operator(basis, id)?;
    let sym = (mat.clone() + mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(basis.dim(), basis.dim());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Outcome of matching a Bethe charge tuple against the ED spectrum.
#[derive(Debug, Clone)]
pub struct MatchReport {
    pub index: usize,
    pub max_charge_dev: f64,
    /// 1 − |cosine| between the supplied amplitude vector and the matched
    /// eigenvector, when amplitudes are given.
    pub angle_dev: Option<f64>,
}

pub fn compare_solution(
    pairs: &[ChargeEigenpair],
    bethe_charges: &[f64],
    amplitudes: Option<&DVector<f64>>,
    threshold: f64,
) -> Result<MatchReport, OracleError> {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, p) in pairs.iter().enumerate() {
        if p.charges.len() != bethe_charges.len() {
            return Err(OracleError::DimensionMismatch(
                p.charges.len(),
                bethe_charges.len(),
            ));
        }
        let dev = p
            .charges
            .iter()
            .zip(bethe_charges)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if dev < best.1 {
            best = (j, dev);
        }
    }
    if best.1 > threshold {
        return Err(OracleError::NoMatch(best.1));
    }
    let angle_dev = amplitudes.map(|v| {
        let vn = v.norm();
        let overlap = (pairs[best.0].vector.transpose() * v)[(0, 0)].abs() / vn;
        1.0 - overlap
    });
    Ok(MatchReport {
        index: best.0,
        max_charge_dev: best.1,
        angle_dev,
    })
}

pub fn matrix_element(
    bra: &DVector<f64>,
    op: &DMatrix<f64>,
    ket: &DVector<f64>,
) -> Result<f64, OracleError> {
    if bra.len() != op.nrows() || ket.len() != op.ncols() {
        return Err(OracleError::DimensionMismatch(bra.len(), ket.len()));
    }
    Ok((bra.transpose() * op * ket)[(0, 0)])
}

/// Expands the (unnormalized) Bethe state Π_α B†(x_α)|θ⟩ in the sector
/// basis by direct sparse application of the model's generalized creation
/// operator B†(x) = b† + Σ_i c_i(x) S†_i (no boson term for XXZ).
///
/// Coefficients: Dicke c_i = −G/(ε_i−x); (p+ip) c_i = −√ε_i x/((ε_i−x) η_0);
/// XXZ c_i = X(ε_i, x). This is the expansion-resummation oracle: it shares
/// no code with the determinant or permanent routes.
pub fn bethe_vector(
    model: &ModelSpec,
    n: usize,
    rapidities: &[Complex64],
) -> Result<DVector<Complex64>, OracleError> {
    if rapidities.len() != n {
        return Err(OracleError::DimensionMismatch(rapidities.len(), n));
    }
    let kernel = match model.variant {
        ModelVariant::XxzSpin => Some(model.kernel().map_err(|_| OracleError::UnknownOperator)?),
        _ => None,
    };
    let mut bases = Vec::with_capacity(n + 1);
    for k in 0..=n {
        bases.push(build_sector_basis(model, k)?);
    }
    let mut amps: Vec<Complex64> = vec![Complex64::new(1.0, 0.0)];
    for (step, &x) in rapidities.iter().enumerate() {
        let from = &bases[step];
        let to = &bases[step + 1];
        let coeff: Vec<Complex64> = (0..model.num_levels())
            .map(|i| {
                let ei = Complex64::new(model.levels[i], 0.0);
                match model.variant {
                    ModelVariant::Dicke => -model.coupling / (ei - x),
                    ModelVariant::PipBoson => {
                        let (eta0_sq, _) = model.pip_params().unwrap();
                        -model.levels[i].sqrt() * x / ((ei - x) * eta0_sq.sqrt())
                    }
                    ModelVariant::XxzSpin => kernel
                        .as_ref()
                        .unwrap()
                        .x(ei, x)
                        .expect("rapidity must stay away from levels"),
                }
            })
            .collect();
        let mut next = vec![Complex64::new(0.0, 0.0); to.dim()];
        for (col, ket) in from.states.iter().enumerate() {
            let amp = amps[col];
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            if model.has_boson() {
                let st = BasisState {
                    boson: ket.boson + 1,
                    occupations: ket.occupations.clone(),
                };
                if let Some(row) = to.position(&st) {
                    next[row] += amp * ((ket.boson + 1) as f64).sqrt();
                }
            }
            for i in 0..model.num_levels() {
                let a = spin_raise_amp(model, i, ket.occupations[i]);
                if a == 0.0 {
                    continue;
                }
                let mut occ = ket.occupations.clone();
                occ[i] += 1;
                let st = BasisState {
                    boson: ket.boson,
                    occupations: occ,
                };
                if let Some(row) = to.position(&st) {
                    next[row] += amp * coeff[i] * a;
                }
            }
        }
        amps = next;
    }
    Ok(DVector::from_vec(amps))
}
