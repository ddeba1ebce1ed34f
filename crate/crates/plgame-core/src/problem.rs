//! Problem definition for the DPP boundary-value solver.

use std::sync::Arc;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::kernel::KernelParams;

/// Scalar data attached to a problem (sources, boundary values, exact
/// solutions). Named variants compare by value so problems can be checked
/// for identity; `Custom` closures compare by pointer.
#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Constant(f64),
    /// `a . x`
    Linear([f64; 3]),
    /// `|x|^2`
    SquaredNorm,
    /// `|x|^beta`
    RadialPower(f64),
    /// `sign(x_1)`, with `sign(0) = 1`
    SignFirstCoord,
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => *c,
            ScalarField::Linear(a) => x.iter().zip(a.iter()).map(|(xi, ai)| xi * ai).sum(),
            ScalarField::SquaredNorm => x.iter().map(|c| c * c).sum(),
            ScalarField::RadialPower(beta) => {
                x.iter().map(|c| c * c).sum::<f64>().sqrt().powf(*beta)
            }
            ScalarField::SignFirstCoord => {
                if x[0] >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            ScalarField::Custom(f) => f(x),
        }
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarField::Zero => write!(f, "Zero"),
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Linear(a) => write!(f, "Linear({a:?})"),
            ScalarField::SquaredNorm => write!(f, "SquaredNorm"),
            ScalarField::RadialPower(b) => write!(f, "RadialPower({b})"),
            ScalarField::SignFirstCoord => write!(f, "SignFirstCoord"),
            ScalarField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        use ScalarField::*;
        match (self, other) {
            (Zero, Zero) | (SquaredNorm, SquaredNorm) | (SignFirstCoord, SignFirstCoord) => true,
            (Constant(a), Constant(b)) => a == b,
            (Linear(a), Linear(b)) => a == b,
            (RadialPower(a), RadialPower(b)) => a == b,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Direction-search configuration.
///
/// `coarse` is the size of the global scan (equally spaced angles for N = 2,
/// an antipodally closed Fibonacci sphere for N = 3). `refine_tol` is the
/// angular tolerance of the golden-section / local refinement used by the
/// pointwise operator. `ring` is the angular resolution (number of
/// precomputed stencil directions) the grid solver refines on; it is rounded
/// to a multiple of `coarse`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionSearch {
    pub coarse: usize,
    pub refine_tol: f64,
    pub ring: usize,
}

impl DirectionSearch {
    pub fn default_for_dim(dim: usize) -> Self {
        if dim == 2 {
            Self {
                coarse: 64,
                refine_tol: 1e-8,
                ring: 4096,
            }
        } else {
            Self {
                coarse: 256,
                refine_tol: 1e-4,
                ring: 256,
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.coarse < 4 {
            return Err(Error::InvalidParameter(
                "direction search needs at least 4 coarse directions".into(),
            ));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "direction refinement tolerance must be positive".into(),
            ));
        }
        if dim == 2 && self.ring < self.coarse {
            return Err(Error::InvalidParameter(
                "ring resolution must be at least the coarse count".into(),
            ));
        }
        Ok(())
    }
}

/// A DPP boundary-value problem: domain with collar, kernel parameters,
/// source `f`, collar data `g`, grid spacing and solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct DppProblem {
    pub domain: DomainSpec,
    pub params: KernelParams,
    pub source: ScalarField,
    pub boundary: ScalarField,
    pub grid_dx: f64,
    /// Stopping tolerance for the sup-norm residual. `0.0` means the default
    /// `1e-9 * max(1, sup |g|)`, resolved at solve time.
    pub tol: f64,
    pub max_iter: usize,
    pub search: DirectionSearch,
    /// Axial and cross node counts of the quadrature rule.
    pub quad_counts: (usize, usize),
    /// With `true` (the default) the solver keeps iterating past the
    /// residual tolerance until the estimated distance to the fixed point is
    /// below half of it, so independently initialized runs agree within the
    /// tolerance. `false` stops at the plain residual test.
    pub strict_limit: bool,
}

impl DppProblem {
    pub fn new(
        domain: DomainSpec,
        params: KernelParams,
        source: ScalarField,
        boundary: ScalarField,
        grid_dx: f64,
    ) -> Result<Self> {
        if domain.dim != params.dim() {
            return Err(Error::InvalidParameter(format!(
                "domain dimension {} and kernel dimension {} differ",
                domain.dim,
                params.dim()
            )));
        }
        if (domain.eps - params.eps()).abs() > 1e-14 * params.eps() {
            return Err(Error::InvalidParameter(format!(
                "domain collar width {} and kernel step {} differ",
                domain.eps,
                params.eps()
            )));
        }
        if !(grid_dx > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {grid_dx}"
            )));
        }
        let problem = Self {
            domain,
            params,
            source,
            boundary,
            grid_dx,
            tol: 0.0,
            max_iter: 100_000,
            search: DirectionSearch::default_for_dim(domain.dim),
            quad_counts: (32, 32),
            strict_limit: true,
        };
        problem.search.validate(domain.dim)?;
        Ok(problem)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_search(mut self, search: DirectionSearch) -> Self {
        self.search = search;
        self
    }

    pub fn with_quad_counts(mut self, axial: usize, cross: usize) -> Self {
        self.quad_counts = (axial, cross);
        self
    }

    pub fn with_loose_stop(mut self) -> Self {
        self.strict_limit = false;
        self
    }

    /// True when everything except the boundary data coincides: the setting
    /// of the comparison principle.
    pub fn same_except_boundary(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.params == other.params
            && self.source == other.source
            && self.grid_dx == other.grid_dx
            && self.search == other.search
            && self.quad_counts == other.quad_counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_field_eval() {
        assert_eq!(ScalarField::Zero.eval(&[1.0, 2.0]), 0.0);
        assert_eq!(ScalarField::Constant(3.5).eval(&[1.0, 2.0]), 3.5);
        assert_eq!(
            ScalarField::Linear([2.0, -1.0, 0.0]).eval(&[1.0, 2.0]),
            0.0
        );
        assert_eq!(ScalarField::SquaredNorm.eval(&[3.0, 4.0]), 25.0);
        assert_eq!(ScalarField::RadialPower(-1.0).eval(&[0.0, 2.0]), 0.5);
        assert_eq!(ScalarField::SignFirstCoord.eval(&[-0.1, 5.0]), -1.0);
        assert_eq!(ScalarField::SignFirstCoord.eval(&[0.0, 5.0]), 1.0);
    }

    #[test]
    fn problem_validation() {
        let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, 0.1).unwrap();
        let params = KernelParams::new(2, 1.5, 0.1).unwrap();
        assert!(DppProblem::new(
            dom,
            params,
            ScalarField::Zero,
            ScalarField::Zero,
            0.025
        )
        .is_ok());
        // mismatched eps
        let bad = KernelParams::new(2, 1.5, 0.2).unwrap();
        assert!(DppProblem::new(dom, bad, ScalarField::Zero, ScalarField::Zero, 0.025).is_err());
        // mismatched dimension
        let dom3 = DomainSpec::ball(3, &[0.0; 3], 1.0, 0.1).unwrap();
        assert!(DppProblem::new(dom3, params, ScalarField::Zero, ScalarField::Zero, 0.025).is_err());
    }

    #[test]
    fn field_equality_semantics() {
        assert_eq!(ScalarField::Constant(1.0), ScalarField::Constant(1.0));
        assert_ne!(ScalarField::Constant(1.0), ScalarField::Constant(2.0));
        let f1 = ScalarField::Custom(Arc::new(|_: &[f64]| 0.0));
        let f2 = f1.clone();
        assert_eq!(f1, f2);
        let f3 = ScalarField::Custom(Arc::new(|_: &[f64]| 0.0));
        assert_ne!(f1, f3);
    }
}
