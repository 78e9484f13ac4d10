//! Realizations of the Gaudin algebra.
//!
//! A Gaudin algebra is a pair of antisymmetric functions X(u,v), Z(u,v)
//! satisfying X_uv X_vw = X_uw (Z_uv + Z_vw) for pairwise distinct arguments.
//! Two realizations appear here:
//!
//! * trigonometric: X = √((1+u²)(1+v²))/(u−v), Z = (1+uv)/(u−v), with
//!   X² − Z² = +1,
//! * hyperbolic: X = 2√(uv)/(u−v), Z = (u+v)/(u−v), with X² − Z² = −1.
//!
//! The square roots are evaluated per argument (X(u,v) = f(u)f(v)/(u−v)),
//! which keeps antisymmetry and the quadratic constraints exact for complex
//! arguments as well; rapidities extend the algebra with the same code path.

use num_complex::Complex64;
use thiserror::Error;

use crate::dd::Dd;

/// Pairwise-distinctness tolerance, relative to the parameter scale.
pub const COINCIDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Realization {
    #[serde(rename = "trig")]
    Trigonometric,
    #[serde(rename = "hyp")]
    Hyperbolic,
}

impl Realization {
    /// The constant Γ = X² − Z² fixed by the realization.
    pub fn gamma(self) -> f64 {
        match self {
            Realization::Trigonometric => 1.0,
            Realization::Hyperbolic => -1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("parameters {0} and {1} coincide within tolerance")]
    DuplicateParameter(usize, usize),
    #[error("hyperbolic realization requires positive parameters, got {0}")]
    NonpositiveParameter(f64),
    #[error("kernel arguments coincide: {0}")]
    CoincidentArguments(Complex64),
}

/// A realization of the Gaudin algebra over a fixed set of level parameters.
#[derive(Debug, Clone)]
pub struct GaudinKernel {
    pub realization: Realization,
    pub parameters: Vec<f64>,
    pub gamma: f64,
}

impl GaudinKernel {
    pub fn build(realization: Realization, parameters: &[f64]) -> Result<Self, KernelError> {
        let scale = parameters.iter().fold(1.0f64, |m, p| m.max(p.abs()));
        for i in 0..parameters.len() {
            for j in (i + 1)..parameters.len() {
                if (parameters[i] - parameters[j]).abs() <= COINCIDENCE_TOL * scale {
                    return Err(KernelError::DuplicateParameter(i, j));
                }
            }
        }
        if realization == Realization::Hyperbolic {
            if let Some(&p) = parameters.iter().find(|p| **p <= 0.0) {
                return Err(KernelError::NonpositiveParameter(p));
            }
        }
        Ok(GaudinKernel {
            realization,
            parameters: parameters.to_vec(),
            gamma: realization.gamma(),
        })
    }

    /// X(u, v). Antisymmetric; accepts complex arguments.
    pub fn x(&self, u: Complex64, v: Complex64) -> Result<Complex64, KernelError> {
        self.guard(u, v)?;
        Ok(match self.realization {
            Realization::Trigonometric => {
                let fu = (Complex64::new(1.0, 0.0) + u * u).sqrt();
                let fv = (Complex64::new(1.0, 0.0) + v * v).sqrt();
                fu * fv / (u - v)
            }
            Realization::Hyperbolic => 2.0 * u.sqrt() * v.sqrt() / (u - v),
        })
    }

    /// Z(u, v). Antisymmetric; accepts complex arguments.
    pub fn z(&self, u: Complex64, v: Complex64) -> Result<Complex64, KernelError> {
        self.guard(u, v)?;
        Ok(match self.realization {
            Realization::Trigonometric => (Complex64::new(1.0, 0.0) + u * v) / (u - v),
            Realization::Hyperbolic => (u + v) / (u - v),
        })
    }

    pub fn x_levels(&self, i: usize, j: usize) -> Result<Complex64, KernelError> {
        self.x(
            Complex64::new(self.parameters[i], 0.0),
            Complex64::new(self.parameters[j], 0.0),
        )
    }

    pub fn z_levels(&self, i: usize, j: usize) -> Result<Complex64, KernelError> {
        self.z(
            Complex64::new(self.parameters[i], 0.0),
            Complex64::new(self.parameters[j], 0.0),
        )
    }

    fn guard(&self, u: Complex64, v: Complex64) -> Result<(), KernelError> {
        let scale = 1.0f64.max(u.norm()).max(v.norm());
        if (u - v).norm() <= COINCIDENCE_TOL * scale {
            return Err(KernelError::CoincidentArguments(u));
        }
        Ok(())
    }

    /// Residuals of the algebra over the given triples, evaluated in
    /// double-double arithmetic so the report measures the algebra rather
    /// than f64 rounding of the ~(1+ε²)²/(ε−ε')² intermediates.
    pub fn check(&self, triples: &[[f64; 3]]) -> KernelReport {
        let mut rep = KernelReport::default();
        for t in triples {
            let (u, v, w) = (t[0], t[1], t[2]);
            let gau = self.gaudin_residual_dd(u, v, w).abs();
            rep.max_gaudin = rep.max_gaudin.max(gau);
            for (a, b) in [(u, v), (v, w), (u, w)] {
                let gam = self.gamma_residual_dd(a, b).abs();
                rep.max_gamma = rep.max_gamma.max(gam);
            }
            rep.samples += 1;
        }
        rep
    }

    fn xz_dd(&self, u: f64, v: f64) -> (Dd, Dd) {
        let ud = Dd::from(u);
        let vd = Dd::from(v);
        let diff = ud.sub(vd);
        match self.realization {
            Realization::Trigonometric => {
                let one = Dd::from(1.0);
                let fu = one.add(ud.mul(ud)).sqrt();
                let fv = one.add(vd.mul(vd)).sqrt();
                let x = fu.mul(fv).div(diff);
                let z = one.add(ud.mul(vd)).div(diff);
                (x, z)
            }
            Realization::Hyperbolic => {
                let x = Dd::from(2.0).mul(ud.sqrt()).mul(vd.sqrt()).div(diff);
                let z = ud.add(vd).div(diff);
                (x, z)
            }
        }
    }

    fn gaudin_residual_dd(&self, u: f64, v: f64, w: f64) -> f64 {
        let (x_uv, z_uv) = self.xz_dd(u, v);
        let (x_vw, z_vw) = self.xz_dd(v, w);
        let (x_uw, _) = self.xz_dd(u, w);
        x_uv.mul(x_vw).sub(x_uw.mul(z_uv.add(z_vw))).to_f64()
    }

    fn gamma_residual_dd(&self, u: f64, v: f64) -> f64 {
        let (x, z) = self.xz_dd(u, v);
        x.mul(x).sub(z.mul(z)).sub(Dd::from(self.gamma)).to_f64()
    }
}

/// Max residual report from [`GaudinKernel::check`].
#[derive(Debug, Clone, Copy, Default)]
pub struct KernelReport {
    pub max_gaudin: f64,
    pub max_gamma: f64,
    pub samples: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn gamma_fixed_by_realization() {
        let trig = GaudinKernel::build(Realization::Trigonometric, &[2.0, 1.0]).unwrap();
        assert_eq!(trig.gamma, 1.0);
        let hyp = GaudinKernel::build(Realization::Hyperbolic, &[4.0, 1.0]).unwrap();
        assert_eq!(hyp.gamma, -1.0);
    }

    #[test]
    fn duplicate_parameters_rejected() {
        let err = GaudinKernel::build(Realization::Hyperbolic, &[1.0, 1.0]).unwrap_err();
        assert_eq!(err, KernelError::DuplicateParameter(0, 1));
        let err = GaudinKernel::build(Realization::Hyperbolic, &[1.0, -2.0]).unwrap_err();
        assert!(matches!(err, KernelError::NonpositiveParameter(_)));
    }

    #[test]
    fn trig_values() {
        let k = GaudinKernel::build(Realization::Trigonometric, &[2.0, 1.0]).unwrap();
        let x = k.x(c(2.0), c(1.0)).unwrap();
        assert!((x.re - 10f64.sqrt()).abs() < 1e-14 && x.im == 0.0);
        let z = k.z(c(2.0), c(1.0)).unwrap();
        assert!((z.re - 3.0).abs() < 1e-14);
        // X² − Z² = 10 − 9 = Γ
        assert!(((x * x - z * z).re - k.gamma).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_values() {
        let k = GaudinKernel::build(Realization::Hyperbolic, &[4.0, 1.0]).unwrap();
        let x = k.x(c(4.0), c(1.0)).unwrap();
        assert!((x.re - 4.0 / 3.0).abs() < 1e-14);
        let z = k.z(c(4.0), c(1.0)).unwrap();
        assert!((z.re - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn coincident_arguments_rejected() {
        let k = GaudinKernel::build(Realization::Trigonometric, &[2.0, 1.0]).unwrap();
        assert!(matches!(
            k.x(c(3.0), c(3.0)),
            Err(KernelError::CoincidentArguments(_))
        ));
    }

    #[test]
    fn check_on_fixed_triples() {
        let trig = GaudinKernel::build(Realization::Trigonometric, &[3.0, 2.0, 1.0]).unwrap();
        let r = trig.check(&[[3.0, 2.0, 1.0]]);
        assert!(r.max_gaudin <= 1e-12 && r.max_gamma <= 1e-12);

        let hyp = GaudinKernel::build(Realization::Hyperbolic, &[4.0, 2.0, 1.0]).unwrap();
        let r = hyp.check(&[[4.0, 2.0, 1.0]]);
        assert!(r.max_gaudin <= 1e-12 && r.max_gamma <= 1e-12);
    }

    #[test]
    fn f64_kernels_agree_with_dd_path() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for real in [Realization::Trigonometric, Realization::Hyperbolic] {
            let k = GaudinKernel::build(real, &[1.0, 2.0]).unwrap();
            for _ in 0..200 {
                let u: f64 = rng.gen_range(0.1..10.0);
                let v: f64 = rng.gen_range(0.1..10.0);
                if (u - v).abs() < 1e-3 {
                    continue;
                }
                let (xd, zd) = k.xz_dd(u, v);
                let x = k.x(c(u), c(v)).unwrap().re;
                let z = k.z(c(u), c(v)).unwrap().re;
                assert!((x - xd.to_f64()).abs() <= 1e-12 * (1.0 + x.abs()));
                assert!((z - zd.to_f64()).abs() <= 1e-12 * (1.0 + z.abs()));
            }
        }
    }

    proptest! {
        #[test]
        fn antisymmetry(u in 0.1f64..100.0, v in 0.1f64..100.0) {
            prop_assume!((u - v).abs() > 1e-6 * (1.0 + u.abs().max(v.abs())));
            for real in [Realization::Trigonometric, Realization::Hyperbolic] {
                let k = GaudinKernel::build(real, &[0.3, 0.7]).unwrap();
                let x1 = k.x(c(u), c(v)).unwrap();
                let x2 = k.x(c(v), c(u)).unwrap();
                prop_assert!((x1 + x2).norm() <= 1e-14 * x1.norm());
                let z1 = k.z(c(u), c(v)).unwrap();
                let z2 = k.z(c(v), c(u)).unwrap();
                prop_assert!((z1 + z2).norm() <= 1e-14 * z1.norm());
            }
        }

        #[test]
        fn gaudin_constraint_and_gamma(u in 0.1f64..100.0, v in 0.1f64..100.0, w in 0.1f64..100.0) {
            let scale = 1.0 + u.abs().max(v.abs()).max(w.abs());
            prop_assume!((u - v).abs() > 1e-6 * scale);
            prop_assume!((v - w).abs() > 1e-6 * scale);
            prop_assume!((u - w).abs() > 1e-6 * scale);
            for real in [Realization::Trigonometric, Realization::Hyperbolic] {
                let k = GaudinKernel::build(real, &[0.3, 0.7]).unwrap();
                let rep = k.check(&[[u, v, w]]);
                prop_assert!(rep.max_gaudin <= 1e-10);
                prop_assert!(rep.max_gamma <= 1e-12);
            }
        }

        #[test]
        fn complex_antisymmetry(re in -3.0f64..3.0, im in 0.1f64..3.0) {
            let u = Complex64::new(re, im);
            let v = Complex64::new(1.3, -0.4);
            for real in [Realization::Trigonometric, Realization::Hyperbolic] {
                let k = GaudinKernel::build(real, &[0.3, 0.7]).unwrap();
                let x1 = k.x(u, v).unwrap();
                let x2 = k.x(v, u).unwrap();
                prop_assert!((x1 + x2).norm() <= 1e-13 * (1.0 + x1.norm()));
            }
        }
    }
}
