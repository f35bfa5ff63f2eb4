//! Interaction potentials V with their convexity constants.
//!
//! A potential is a pure triple (V, V′, V″) together with the declared
//! constants 0 < λ ≤ V″ ≤ Λ and the Lipschitz constant of V″. Nothing here is
//! symbolic; the constants are declared and checked numerically on a grid.

use crate::{Error, Result};
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Quadratic,
    CosPerturbed { eps: f64 },
    Custom {
        name: String,
        eval: ScalarFn,
        d1: ScalarFn,
        d2: ScalarFn,
    },
}

/// A symmetric, uniformly convex interaction potential.
#[derive(Clone)]
pub struct Potential {
    kind: Kind,
    /// Declared lower bound on V″.
    pub lambda: f64,
    /// Declared upper bound on V″.
    pub big_lambda: f64,
    /// Declared Lipschitz constant of V″.
    pub lipschitz_d2: f64,
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name())
            .field("lambda", &self.lambda)
            .field("big_lambda", &self.big_lambda)
            .field("lipschitz_d2", &self.lipschitz_d2)
            .finish()
    }
}

impl Potential {
    /// V(t) = t²/2, the Gaussian special case.
    pub fn quadratic() -> Potential {
        Potential {
            kind: Kind::Quadratic,
            lambda: 1.0,
            big_lambda: 1.0,
            lipschitz_d2: 0.0,
        }
    }

    /// V(t) = t²/2 + eps·(cos t − 1), so V″ = 1 − eps·cos t ∈ [1−eps, 1+eps].
    /// Requires 0 < eps < 1 for uniform convexity.
    pub fn cos_perturbed(eps: f64) -> Result<Potential> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cos_perturbed needs eps in (0,1), got {eps}"
            )));
        }
        Ok(Potential {
            kind: Kind::CosPerturbed { eps },
            lambda: 1.0 - eps,
            big_lambda: 1.0 + eps,
            lipschitz_d2: eps,
        })
    }

    /// Arbitrary function triple with declared constants; used for
    /// deliberately broken potentials in verification tests.
    pub fn custom(
        name: &str,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lambda: f64,
        big_lambda: f64,
        lipschitz_d2: f64,
    ) -> Potential {
        Potential {
            kind: Kind::Custom {
                name: name.to_string(),
                eval: Arc::new(eval),
                d1: Arc::new(d1),
                d2: Arc::new(d2),
            },
            lambda,
            big_lambda,
            lipschitz_d2,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Quadratic => "quadratic".to_string(),
            Kind::CosPerturbed { eps } => format!("cos_perturbed(eps={eps})"),
            Kind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, Kind::Quadratic)
    }

    /// The perturbation amplitude when this is the cos-perturbed potential.
    pub fn cos_eps(&self) -> Option<f64> {
        match self.kind {
            Kind::CosPerturbed { eps } => Some(eps),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => 0.5 * t * t,
            Kind::CosPerturbed { eps } => 0.5 * t * t + eps * (t.cos() - 1.0),
            Kind::Custom { eval, .. } => eval(t),
        }
    }

    #[inline]
    pub fn d1(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => t,
            Kind::CosPerturbed { eps } => t - eps * t.sin(),
            Kind::Custom { d1, .. } => d1(t),
        }
    }

    #[inline]
    pub fn d2(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => 1.0,
            Kind::CosPerturbed { eps } => 1.0 - eps * t.cos(),
            Kind::Custom { d2, .. } => d2(t),
        }
    }
}

/// Empirical check of symmetry, the V″ bracket and the V″ Lipschitz bound on
/// a uniform grid. Report-only: violations are listed, never panicked on.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub lambda_hat: f64,
    pub big_lambda_hat: f64,
    pub symmetry_residual: f64,
    pub lipschitz_ratio: f64,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const ASSUMPTION_TOL: f64 = 1e-12;

pub fn verify_assumptions(p: &Potential, grid_halfwidth: f64, step: f64) -> AssumptionReport {
    assert!(step > 0.0, "grid step must be positive");
    let n = (grid_halfwidth / step).floor() as i64;
    let mut lambda_hat = f64::INFINITY;
    let mut big_lambda_hat = f64::NEG_INFINITY;
    let mut symmetry_residual = 0.0f64;
    let mut lipschitz_ratio = 0.0f64;
    let mut prev_d2: Option<f64> = None;
    for i in -n..=n {
        let t = i as f64 * step;
        let d2 = p.d2(t);
        lambda_hat = lambda_hat.min(d2);
        big_lambda_hat = big_lambda_hat.max(d2);
        symmetry_residual = symmetry_residual.max((p.eval(t) - p.eval(-t)).abs());
        if let Some(prev) = prev_d2 {
            lipschitz_ratio = lipschitz_ratio.max((d2 - prev).abs() / step);
        }
        prev_d2 = Some(d2);
    }
    let mut violations = Vec::new();
    if lambda_hat < p.lambda - ASSUMPTION_TOL {
        violations.push(format!(
            "V'' dips to {lambda_hat:.15} below declared lambda {}",
            p.lambda
        ));
    }
    if big_lambda_hat > p.big_lambda + ASSUMPTION_TOL {
        violations.push(format!(
            "V'' reaches {big_lambda_hat:.15} above declared Lambda {}",
            p.big_lambda
        ));
    }
    if symmetry_residual > ASSUMPTION_TOL {
        violations.push(format!("symmetry residual {symmetry_residual:.3e}"));
    }
    if lipschitz_ratio > p.lipschitz_d2 + 1e-10 {
        violations.push(format!(
            "V'' difference quotient {lipschitz_ratio:.15} exceeds declared Lipschitz constant {}",
            p.lipschitz_d2
        ));
    }
    AssumptionReport {
        lambda_hat,
        big_lambda_hat,
        symmetry_residual,
        lipschitz_ratio,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let p = Potential::quadratic();
        assert_eq!(p.eval(2.0), 2.0);
        assert_eq!(p.d2(17.3), 1.0);
        assert_eq!(p.eval(0.7), p.eval(-0.7));
    }

    #[test]
    fn cos_perturbed_values() {
        let p = Potential::cos_perturbed(0.5).unwrap();
        assert!((p.d2(0.0) - 0.5).abs() < 1e-15);
        assert!((p.d2(std::f64::consts::PI) - 1.5).abs() < 1e-15);
        assert!(Potential::cos_perturbed(0.999).is_ok());
        assert!(Potential::cos_perturbed(1.0).is_err());
        assert!(Potential::cos_perturbed(0.0).is_err());
    }

    #[test]
    fn verify_quadratic_on_grid() {
        let p = Potential::quadratic();
        let rep = verify_assumptions(&p, 10.0, 1e-3);
        assert!(rep.ok(), "{:?}", rep.violations);
        assert_eq!(rep.lambda_hat, 1.0);
        assert_eq!(rep.big_lambda_hat, 1.0);
        assert_eq!(rep.symmetry_residual, 0.0);
    }

    #[test]
    fn verify_cos_on_grid() {
        let p = Potential::cos_perturbed(0.5).unwrap();
        let rep = verify_assumptions(&p, 10.0, 1e-3);
        assert!(rep.ok(), "{:?}", rep.violations);
        assert!((rep.lambda_hat - 0.5).abs() < 1e-6);
        assert!((rep.big_lambda_hat - 1.5).abs() < 1e-6);
    }

    #[test]
    fn broken_potential_flagged() {
        // Declares lambda = 1 but V'' dips to 0.2 near the origin.
        let p = Potential::custom(
            "broken",
            |t| 0.5 * t * t - 0.4 * (t.cos() - 1.0) * 2.0,
            |t| t + 0.8 * t.sin(),
            |t| 1.0 - 0.8 * t.cos().abs() + 0.0 * t,
            1.0,
            1.8,
            0.8,
        );
        let rep = verify_assumptions(&p, 5.0, 1e-3);
        assert!(!rep.ok());
        assert!(rep.violations.iter().any(|v| v.contains("lambda")));
    }

    #[test]
    fn finite_difference_consistency() {
        for p in [Potential::quadratic(), Potential::cos_perturbed(0.5).unwrap()] {
            for &h in &[1e-3, 1e-4] {
                let mut worst = 0.0f64;
                for i in -100..=100 {
                    let t = i as f64 * 0.1;
                    let fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
                    worst = worst.max((fd - p.d1(t)).abs());
                }
                // |V'''| ≤ L, so the central difference error is ≤ L·h²/6
                // plus floating-point cancellation noise.
                let bound = p.lipschitz_d2 / 6.0 * h * h + 1e-9;
                assert!(worst <= bound, "h={h} worst={worst:.3e} bound={bound:.3e}");
            }
        }
    }

    #[test]
    fn declared_constants_bracket_grid() {
        for p in [Potential::quadratic(), Potential::cos_perturbed(0.3).unwrap()] {
            let rep = verify_assumptions(&p, 50.0, 1e-3);
            assert!(rep.lambda_hat >= p.lambda - 1e-12);
            assert!(rep.big_lambda_hat <= p.big_lambda + 1e-12);
        }
    }
}
