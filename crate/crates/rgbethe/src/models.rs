//! Model definitions and conserved-charge eigenvalue maps.
//!
//! Three families share the machinery:
//!
//! * `XxzSpin`: n su(2) spins with a trigonometric or hyperbolic Gaudin
//!   kernel and coupling g,
//! * `Dicke`: m two-level systems coupled to a photon of energy ε_0 through
//!   the coupling G (trigonometric contraction),
//! * `PipBoson`: the extended (p+ip)-wave pairing model with boson
//!   parameters η_0² and κ (hyperbolic contraction).
//!
//! Charge eigenvalues are affine in the eigenvalue-based variables Λ_i, one
//! variable per conserved charge; the (p+ip) Λ_0 is fixed by the linear
//! constraint 2Λ_0 = ΣΛ_i + 2κN and is never an independent unknown.

use serde::Deserialize;
use thiserror::Error;

use crate::kernels::{GaudinKernel, KernelError, Realization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    XxzSpin,
    Dicke,
    PipBoson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BosonParams {
    Dicke { eps0: f64 },
    Pip { eta0_sq: f64, kappa: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("duplicate or near-duplicate level value {0}")]
    DuplicateLevel(f64),
    #[error("coupling must be nonzero")]
    ZeroCoupling,
    #[error("eta0_sq must be positive, got {0}")]
    NonpositiveEta0(f64),
    #[error("(p+ip) levels must be positive, got {0}")]
    NonpositiveLevel(f64),
    #[error("expected {expected} lambdas, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation not defined for this model variant")]
    WrongVariant,
    #[error("spins must be positive half-integers, got {0}")]
    BadSpin(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// A concrete integrable model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub levels: Vec<f64>,
    pub spins: Vec<f64>,
    /// g for XxzSpin, G for Dicke; unused (0) for PipBoson.
    pub coupling: f64,
    pub boson: Option<BosonParams>,
    /// Kernel realization; only meaningful for XxzSpin.
    pub realization: Option<Realization>,
}

fn check_levels_distinct(levels: &[f64]) -> Result<(), ModelError> {
    let scale = levels.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    for i in 0..levels.len() {
        for j in (i + 1)..levels.len() {
            if (levels[i] - levels[j]).abs() <= 1e-12 * scale {
                return Err(ModelError::DuplicateLevel(levels[i]));
            }
        }
    }
    Ok(())
}

fn check_spins(spins: &[f64]) -> Result<(), ModelError> {
    for &s in spins {
        let doubled = 2.0 * s;
        if s <= 0.0 || (doubled - doubled.round()).abs() > 1e-9 {
            return Err(ModelError::BadSpin(s));
        }
    }
    Ok(())
}

impl ModelSpec {
    pub fn dicke(eps0: f64, levels: &[f64], g: f64) -> Result<Self, ModelError> {
        if g == 0.0 {
            return Err(ModelError::ZeroCoupling);
        }
        let mut all = levels.to_vec();
        all.push(eps0);
        check_levels_distinct(&all)?;
        Ok(ModelSpec {
            variant: ModelVariant::Dicke,
            levels: levels.to_vec(),
            spins: vec![0.5; levels.len()],
            coupling: g,
            boson: Some(BosonParams::Dicke { eps0 }),
            realization: None,
        })
    }

    pub fn pip(eta0_sq: f64, kappa: f64, levels: &[f64]) -> Result<Self, ModelError> {
        if eta0_sq <= 0.0 {
            return Err(ModelError::NonpositiveEta0(eta0_sq));
        }
        if let Some(&bad) = levels.iter().find(|e| **e <= 0.0) {
            return Err(ModelError::NonpositiveLevel(bad));
        }
        check_levels_distinct(levels)?;
        Ok(ModelSpec {
            variant: ModelVariant::PipBoson,
            levels: levels.to_vec(),
            spins: vec![0.5; levels.len()],
            coupling: 0.0,
            boson: Some(BosonParams::Pip { eta0_sq, kappa }),
            realization: None,
        })
    }

    pub fn xxz(
        realization: Realization,
        levels: &[f64],
        g: f64,
        spins: Option<&[f64]>,
    ) -> Result<Self, ModelError> {
        if g == 0.0 {
            return Err(ModelError::ZeroCoupling);
        }
        let spins = match spins {
            Some(s) => {
                if s.len() != levels.len() {
                    return Err(ModelError::DimensionMismatch {
                        expected: levels.len(),
                        got: s.len(),
                    });
                }
                s.to_vec()
            }
            None => vec![0.5; levels.len()],
        };
        check_spins(&spins)?;
        // kernel construction enforces distinctness and positivity rules
        GaudinKernel::build(realization, levels)?;
        Ok(ModelSpec {
            variant: ModelVariant::XxzSpin,
            levels: levels.to_vec(),
            spins,
            coupling: g,
            boson: None,
            realization: Some(realization),
        })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn twice_spin(&self, i: usize) -> u32 {
        (2.0 * self.spins[i]).round() as u32
    }

    pub fn spins_all_half(&self) -> bool {
        self.spins.iter().all(|&s| (s - 0.5).abs() < 1e-12)
    }

    pub fn has_boson(&self) -> bool {
        self.boson.is_some()
    }

    pub fn eps0(&self) -> Option<f64> {
        match self.boson {
            Some(BosonParams::Dicke { eps0 }) => Some(eps0),
            _ => None,
        }
    }

    pub fn pip_params(&self) -> Option<(f64, f64)> {
        match self.boson {
            Some(BosonParams::Pip { eta0_sq, kappa }) => Some((eta0_sq, kappa)),
            _ => None,
        }
    }

    /// Hyperbolic level kernel (ε_i+ε_j)/(ε_i−ε_j), used throughout the
    /// (p+ip) equations.
    pub fn z_hyp(&self, i: usize, j: usize) -> f64 {
        (self.levels[i] + self.levels[j]) / (self.levels[i] - self.levels[j])
    }

    /// The XXZ kernel over the level parameters.
    pub fn kernel(&self) -> Result<GaudinKernel, ModelError> {
        match (self.variant, self.realization) {
            (ModelVariant::XxzSpin, Some(r)) => Ok(GaudinKernel::build(r, &self.levels)?),
            _ => Err(ModelError::WrongVariant),
        }
    }

    /// Z(ε_i, ε_j) for the XXZ realization of this model.
    pub fn z_xxz(&self, i: usize, j: usize) -> f64 {
        let (u, v) = (self.levels[i], self.levels[j]);
        match self.realization {
            Some(Realization::Trigonometric) => (1.0 + u * v) / (u - v),
            Some(Realization::Hyperbolic) => (u + v) / (u - v),
            None => unreachable!("z_xxz on a contracted model"),
        }
    }
}

/// A product basis configuration: boson occupation plus per-level spin
/// raisings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub boson: usize,
    pub occupations: Vec<u32>,
}

impl BasisState {
    pub fn excitations(&self) -> usize {
        self.boson + self.occupations.iter().map(|&o| o as usize).sum::<usize>()
    }

    /// Indices of singly-or-more occupied levels.
    pub fn occupied_levels(&self) -> Vec<usize> {
        self.occupations
            .iter()
            .enumerate()
            .filter(|(_, &o)| o > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self, model: &ModelSpec, n: usize) -> Result<(), ModelError> {
        if self.occupations.len() != model.num_levels() {
            return Err(ModelError::DimensionMismatch {
                expected: model.num_levels(),
                got: self.occupations.len(),
            });
        }
        if !model.has_boson() && self.boson != 0 {
            return Err(ModelError::WrongVariant);
        }
        for (i, &o) in self.occupations.iter().enumerate() {
            if o > model.twice_spin(i) {
                return Err(ModelError::BadSpin(model.spins[i]));
            }
        }
        if self.excitations() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                got: self.excitations(),
            });
        }
        Ok(())
    }
}

/// Number of simultaneous eigenstates in the N-excitation sector.
///
/// Counts spin configurations with k ≤ N raised pairs (occupations capped by
/// 2s_i); for bosonic models the boson absorbs the remaining N−k quanta, for
/// spin-only models k must equal N.
pub fn sector_dimension(model: &ModelSpec, n: usize) -> usize {
    let caps: Vec<u32> = (0..model.num_levels())
        .map(|i| model.twice_spin(i))
        .collect();
    // counts[k] = number of spin configurations with k excitations
    let total_cap: usize = caps.iter().map(|&c| c as usize).sum();
    let kmax = n.min(total_cap);
    let mut counts = vec![0usize; kmax + 1];
    counts[0] = 1;
    for &cap in &caps {
        let mut next = vec![0usize; kmax + 1];
        for k in 0..=kmax {
            if counts[k] == 0 {
                continue;
            }
            for add in 0..=(cap as usize).min(kmax - k) {
                next[k + add] += counts[k];
            }
        }
        counts = next;
    }
    if model.has_boson() {
        counts.iter().sum()
    } else {
        counts.get(n).copied().unwrap_or(0)
    }
}

/// Λ_0 from the (p+ip) linear constraint 2Λ_0 = ΣΛ_i + 2κN.
pub fn pip_lambda0(model: &ModelSpec, lambdas: &[f64], n: usize) -> Result<f64, ModelError> {
    let (_, kappa) = model.pip_params().ok_or(ModelError::WrongVariant)?;
    Ok(0.5 * (lambdas.iter().sum::<f64>() + 2.0 * kappa * n as f64))
}

/// Eigenvalues r_i of the conserved charges from the Λ variables.
///
/// Dicke: r_i = ½[(ε_i−ε_0) + 2G²Λ_i − G²Σ_{k≠i} 1/(ε_i−ε_k)].
/// (p+ip): r_i = s_i[−κ − Λ_i + η_0²/ε_i + Σ_{k≠i} s_k (ε_i+ε_k)/(ε_i−ε_k)].
pub fn charge_eigenvalues(
    model: &ModelSpec,
    lambdas: &[f64],
    _n: usize,
) -> Result<Vec<f64>, ModelError> {
    let m = model.num_levels();
    if lambdas.len() != m {
        return Err(ModelError::DimensionMismatch {
            expected: m,
            got: lambdas.len(),
        });
    }
    match model.boson {
        Some(BosonParams::Dicke { eps0 }) => {
            let g2 = model.coupling * model.coupling;
            Ok((0..m)
                .map(|i| {
                    let pair: f64 = (0..m)
                        .filter(|&k| k != i)
                        .map(|k| 1.0 / (model.levels[i] - model.levels[k]))
                        .sum();
                    0.5 * ((model.levels[i] - eps0) + 2.0 * g2 * lambdas[i] - g2 * pair)
                })
                .collect())
        }
        Some(BosonParams::Pip { eta0_sq, kappa }) => Ok((0..m)
            .map(|i| {
                let pair: f64 = (0..m)
                    .filter(|&k| k != i)
                    .map(|k| model.spins[k] * model.z_hyp(i, k))
                    .sum();
                model.spins[i] * (-kappa - lambdas[i] + eta0_sq / model.levels[i] + pair)
            })
            .collect()),
        None => Err(ModelError::WrongVariant),
    }
}

/// XXZ charge eigenvalues in the particle representation,
/// r_i = s_i(−1 − gΛ_i + gΣ_{k≠i} Z_{ik} s_k).
pub fn xxz_charge_eigenvalues(model: &ModelSpec, lambdas: &[f64]) -> Result<Vec<f64>, ModelError> {
    xxz_charges_impl(model, lambdas, false)
}

/// XXZ charge eigenvalues in the hole (dual) representation,
/// r_i = s_i(1 − gΛ'_i + gΣ_{k≠i} Z_{ik} s_k).
pub fn xxz_charge_eigenvalues_dual(
    model: &ModelSpec,
    dual_lambdas: &[f64],
) -> Result<Vec<f64>, ModelError> {
    xxz_charges_impl(model, dual_lambdas, true)
}

fn xxz_charges_impl(
    model: &ModelSpec,
    lambdas: &[f64],
    hole: bool,
) -> Result<Vec<f64>, ModelError> {
    if model.variant != ModelVariant::XxzSpin {
        return Err(ModelError::WrongVariant);
    }
    let n = model.num_levels();
    if lambdas.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            got: lambdas.len(),
        });
    }
    let g = model.coupling;
    let sign = if hole { 1.0 } else { -1.0 };
    Ok((0..n)
        .map(|i| {
            let pair: f64 = (0..n)
                .filter(|&k| k != i)
                .map(|k| model.z_xxz(i, k) * model.spins[k])
                .sum();
            model.spins[i] * (sign - g * lambdas[i] + g * pair)
        })
        .collect())
}

/// On-disk model description (CLI input schema). Unknown keys are rejected.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: String,
    pub levels: Vec<f64>,
    #[serde(default)]
    pub spins: Option<Vec<f64>>,
    #[serde(default)]
    pub coupling: Option<f64>,
    #[serde(default)]
    pub eps0: Option<f64>,
    #[serde(default)]
    pub eta0_sq: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub realization: Option<Realization>,
    #[serde(rename = "N")]
    pub n: usize,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("model file: {e}"))
    }

    pub fn build(&self) -> Result<ModelSpec, String> {
        let spec = match self.model.as_str() {
            "dicke" => ModelSpec::dicke(
                self.eps0.ok_or("dicke model requires \"eps0\"")?,
                &self.levels,
                self.coupling.ok_or("dicke model requires \"coupling\"")?,
            )
            .map_err(|e| e.to_string())?,
            "pip" => ModelSpec::pip(
                self.eta0_sq.ok_or("pip model requires \"eta0_sq\"")?,
                self.kappa.unwrap_or(0.0),
                &self.levels,
            )
            .map_err(|e| e.to_string())?,
            "xxz" => ModelSpec::xxz(
                self.realization
                    .ok_or("xxz model requires \"realization\"")?,
                &self.levels,
                self.coupling.ok_or("xxz model requires \"coupling\"")?,
                self.spins.as_deref(),
            )
            .map_err(|e| e.to_string())?,
            other => return Err(format!("unknown model kind {other:?}")),
        };
        if let Some(spins) = &self.spins {
            if self.model != "xxz" && spins.iter().any(|&s| (s - 0.5).abs() > 1e-12) {
                return Err("dicke/pip models are defined for spin-1/2 levels".into());
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dicke_constructor_validates() {
        assert!(ModelSpec::dicke(1.0, &(2..=12).map(f64::from).collect::<Vec<_>>(), -0.1).is_ok());
        assert!(ModelSpec::dicke(0.0, &[2.0], 1.0).is_ok());
        assert_eq!(
            ModelSpec::dicke(1.0, &[1.0, 2.0], 0.5).unwrap_err(),
            ModelError::DuplicateLevel(1.0)
        );
        assert_eq!(
            ModelSpec::dicke(0.0, &[2.0], 0.0).unwrap_err(),
            ModelError::ZeroCoupling
        );
    }

    #[test]
    fn pip_constructor_validates() {
        assert!(ModelSpec::pip(1.0, 0.0, &[2.0]).is_ok());
        assert!(ModelSpec::pip(2.5, 1.0, &[1.0, 2.0, 3.0, 4.0]).is_ok());
        assert_eq!(
            ModelSpec::pip(1.0, 0.0, &[-1.0, 2.0]).unwrap_err(),
            ModelError::NonpositiveLevel(-1.0)
        );
        assert!(matches!(
            ModelSpec::pip(0.0, 0.0, &[2.0]).unwrap_err(),
            ModelError::NonpositiveEta0(_)
        ));
    }

    #[test]
    fn sector_dimensions() {
        let dicke = ModelSpec::dicke(1.0, &[2.0, 3.0, 4.0, 5.0], -0.1).unwrap();
        assert_eq!(sector_dimension(&dicke, 3), 15);
        let dicke5 = ModelSpec::dicke(1.0, &[2.0, 3.0, 4.0, 5.0, 6.0], -0.1).unwrap();
        assert_eq!(sector_dimension(&dicke5, 3), 26);
        assert_eq!(sector_dimension(&dicke, 0), 1);
        let pip = ModelSpec::pip(2.5, 1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(sector_dimension(&pip, 2), 11);
        let xxz = ModelSpec::xxz(Realization::Trigonometric, &[1.0, 2.0, 3.0], 0.4, None).unwrap();
        assert_eq!(sector_dimension(&xxz, 2), 3);
    }

    #[test]
    fn dicke_charge_closed_form() {
        // m=1, ε_0=0, ε_1=2, G=1: Λ = −1−√2 pairs with r = −√2
        let model = ModelSpec::dicke(0.0, &[2.0], 1.0).unwrap();
        let r = charge_eigenvalues(&model, &[-1.0 - 2f64.sqrt()], 1).unwrap();
        assert!((r[0] + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pip_charge_closed_form() {
        // m=1, η_0²=1, κ=0, ε_1=2: Λ = 1+√2 pairs with r = −¼ − 1/√2
        let model = ModelSpec::pip(1.0, 0.0, &[2.0]).unwrap();
        let lam = 1.0 + 2f64.sqrt();
        let r = charge_eigenvalues(&model, &[lam], 1).unwrap();
        assert!((r[0] - (0.25 - lam / 2.0)).abs() < 1e-12);
        assert!((r[0] - (-0.25 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        // Λ_0 from the constraint
        assert!((pip_lambda0(&model, &[lam], 1).unwrap() - lam / 2.0).abs() < 1e-15);
    }

    #[test]
    fn charge_slopes_are_affine() {
        let dicke = ModelSpec::dicke(1.0, &[2.0, 3.0, 4.0], -0.3).unwrap();
        let lam = vec![0.7, -0.2, 1.1];
        let r0 = charge_eigenvalues(&dicke, &lam, 2).unwrap();
        for i in 0..3 {
            let mut bumped = lam.clone();
            bumped[i] += 1.0;
            let r1 = charge_eigenvalues(&dicke, &bumped, 2).unwrap();
            assert!((r1[i] - r0[i] - 0.09).abs() < 1e-12, "slope must be G²");
            for j in (0..3).filter(|&j| j != i) {
                assert!((r1[j] - r0[j]).abs() < 1e-15);
            }
        }

        let pip = ModelSpec::pip(2.5, 1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let lam = vec![0.3, -0.4, 0.9, 0.1];
        let r0 = charge_eigenvalues(&pip, &lam, 2).unwrap();
        let mut bumped = lam.clone();
        bumped[2] += 1.0;
        let r1 = charge_eigenvalues(&pip, &bumped, 2).unwrap();
        assert!((r1[2] - r0[2] + 0.5).abs() < 1e-12, "slope must be −1/2");
    }

    #[test]
    fn xxz_dual_charges_match_under_dual_map() {
        let model =
            ModelSpec::xxz(Realization::Trigonometric, &[0.4, 1.1, 2.3], 0.37, None).unwrap();
        let lam = vec![0.2, -1.4, 0.8];
        let dual: Vec<f64> = lam.iter().map(|l| l + 2.0 / model.coupling).collect();
        let r = xxz_charge_eigenvalues(&model, &lam).unwrap();
        let rd = xxz_charge_eigenvalues_dual(&model, &dual).unwrap();
        for (a, b) in r.iter().zip(&rd) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn model_file_schema() {
        let text = r#"{"model":"dicke","levels":[2,3,4],"coupling":-0.1,"eps0":1.0,"N":2}"#;
        let mf = ModelFile::parse(text).unwrap();
        let spec = mf.build().unwrap();
        assert_eq!(spec.variant, ModelVariant::Dicke);
        assert_eq!(mf.n, 2);

        let bad = r#"{"model":"dicke","levels":[2],"coupling":1.0,"eps0":0.0,"N":1,"zzz":3}"#;
        assert!(
            ModelFile::parse(bad).is_err(),
            "unknown keys must be rejected"
        );

        let xxz = r#"{"model":"xxz","levels":[1,2],"coupling":0.5,"realization":"trig","N":1}"#;
        assert!(ModelFile::parse(xxz).unwrap().build().is_ok());
    }

    #[test]
    fn basis_state_validation() {
        let model = ModelSpec::dicke(1.0, &[2.0, 3.0], -0.1).unwrap();
        let ok = BasisState {
            boson: 1,
            occupations: vec![1, 0],
        };
        assert!(ok.validate(&model, 2).is_ok());
        let wrong_n = BasisState {
            boson: 0,
            occupations: vec![1, 0],
        };
        assert!(wrong_n.validate(&model, 2).is_err());
        let over = BasisState {
            boson: 0,
            occupations: vec![2, 0],
        };
        assert!(over.validate(&model, 2).is_err());
    }
}
