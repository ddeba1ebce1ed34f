//! Closed-form kernel constants and ball moment integrals.
//!
//! The averaging kernel on the unit ball is `(z.h)_+^(p-2)` for a unit
//! direction `z`. Everything here reduces to Gamma-function formulas for
//! ball averages of monomials; evaluation goes through [`crate::gamma::ln_gamma`]
//! so that `N + p` up to a few hundred stays finite.

use crate::error::{Error, Result};
use crate::gamma::ln_gamma;

/// Largest accepted kernel exponent. Beyond this the kernel weight underflows
/// and the constants carry no information.
pub const MAX_EXPONENT: f64 = 64.0;

/// Dimension, kernel exponent and step size of the averaging operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    dim: usize,
    p: f64,
    eps: f64,
}

impl KernelParams {
    /// Validates `N >= 2`, `1 < p <= 64` and `eps > 0`.
    pub fn new(dim: usize, p: f64, eps: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        if !(p > 1.0) || p > MAX_EXPONENT || !p.is_finite() {
            return Err(Error::InvalidExponent(format!(
                "p must lie in (1, {MAX_EXPONENT}], got {p}"
            )));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {eps}"
            )));
        }
        Ok(Self { dim, p, eps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Same dimension and exponent, different step.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.dim, self.p, eps)
    }

    /// Normalization constant of the kernel, see [`gamma_constant`].
    pub fn gamma(&self) -> f64 {
        gamma_constant_unchecked(self.dim, self.p)
    }

    /// Ball average of `z.h` under the normalized kernel:
    /// `gamma_{N,p+1} / gamma_{N,p}`. This is the first-order coefficient of
    /// the expansion of the averaging operator.
    pub fn first_moment(&self) -> f64 {
        gamma_constant_unchecked(self.dim, self.p + 1.0) / self.gamma()
    }

    /// Ball average of `|h|^2` under the normalized kernel:
    /// `(N + p - 2) / (N + p)`.
    pub fn second_moment(&self) -> f64 {
        let (n, p) = (self.dim as f64, self.p);
        (n + p - 2.0) / (n + p)
    }
}

/// The moment constants attached to one `(N, p)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTable {
    /// `gamma_{N,p+1} / gamma_{N,p}`: first axial moment of the normalized kernel.
    pub first_moment_ratio: f64,
    /// `(p-1)/(N+p)`: normalized average of `|h_1|^p`.
    pub axial_p_moment: f64,
    /// `1/(N+p)`: normalized average of `|h_1|^{p-2} h_2^2`.
    pub cross_moment: f64,
    /// `(N+p-2)/(N+p)`: normalized average of `|h|^2 |z.h|^{p-2}`.
    pub radial_moment: f64,
    /// `1/2 - 2^{-(N+p-1)}`: kernel mass of the outward half-shell `1/2 <= |h| < 1`.
    pub shell_fraction: f64,
}

/// Kernel normalization constant
/// `gamma_{N,p} = (1/(2 sqrt(pi))) Gamma(N/2+1) Gamma((p-1)/2) / Gamma((N+p)/2)`,
/// the ball average of `(z.h)_+^{p-2}`.
pub fn gamma_constant(params: &KernelParams) -> f64 {
    params.gamma()
}

fn gamma_constant_unchecked(dim: usize, p: f64) -> f64 {
    let n = dim as f64;
    let log = ln_gamma(n / 2.0 + 1.0) + ln_gamma((p - 1.0) / 2.0) - ln_gamma((n + p) / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - std::f64::consts::LN_2;
    log.exp()
}

/// Ball average of `|h_1|^{a_1} ... |h_N|^{a_N}`, each exponent `> -1`:
/// `pi^{-N/2} Gamma(N/2+1) prod Gamma((a_i+1)/2) / Gamma((N + sum a_i + 2)/2)`.
pub fn monomial_integral(dim: usize, exponents: &[f64]) -> Result<f64> {
    if exponents.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "expected {dim} exponents, got {}",
            exponents.len()
        )));
    }
    for &a in exponents {
        if !(a > -1.0) || !a.is_finite() {
            return Err(Error::InvalidExponent(format!(
                "monomial exponents must be > -1, got {a}"
            )));
        }
    }
    let n = dim as f64;
    let total: f64 = exponents.iter().sum();
    let mut log = ln_gamma(n / 2.0 + 1.0) - ln_gamma((n + total + 2.0) / 2.0)
        - n / 2.0 * std::f64::consts::PI.ln();
    for &a in exponents {
        log += ln_gamma((a + 1.0) / 2.0);
    }
    Ok(log.exp())
}

/// All moment constants for one parameter set. The closed forms satisfy
/// `axial + (N-1) cross = radial` exactly; [`MomentTable`] is checked against
/// that identity to 1e-12 relative before being returned.
pub fn moment_table(params: &KernelParams) -> Result<MomentTable> {
    let (n, p) = (params.dim() as f64, params.p());
    let table = MomentTable {
        first_moment_ratio: params.first_moment(),
        axial_p_moment: (p - 1.0) / (n + p),
        cross_moment: 1.0 / (n + p),
        radial_moment: (n + p - 2.0) / (n + p),
        shell_fraction: 0.5 - (-(n + p - 1.0)).exp2(),
    };
    let lhs = table.axial_p_moment + (n - 1.0) * table.cross_moment;
    let rel = (lhs - table.radial_moment).abs() / table.radial_moment.max(1e-300);
    debug_assert!(rel < 1e-12, "moment identity violated: {rel}");
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn kp(dim: usize, p: f64) -> KernelParams {
        KernelParams::new(dim, p, 0.1).unwrap()
    }

    #[test]
    fn gamma_at_p2_is_half() {
        // (z.h)_+^0 is the half-ball indicator, so the average is exactly 1/2.
        for dim in 2..=4 {
            assert_abs_diff_eq!(gamma_constant(&kp(dim, 2.0)), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_2_3_matches_hand_value() {
        // gamma_{2,3} = (1/(2 sqrt(pi))) Gamma(2) Gamma(1) / Gamma(5/2) = 2/(3 pi).
        let expected = 2.0 / (3.0 * std::f64::consts::PI);
        assert_relative_eq!(gamma_constant(&kp(2, 3.0)), expected, max_relative = 1e-13);
    }

    #[test]
    fn gamma_3_1_5_matches_hand_value() {
        // gamma_{3,1.5} = (3/8) Gamma(1/4) / Gamma(9/4) = (3/8) (16/5) = 6/5 exactly,
        // using Gamma(9/4) = (5/4)(1/4) Gamma(1/4).
        assert_relative_eq!(gamma_constant(&kp(3, 1.5)), 1.2, max_relative = 1e-13);
    }

    #[test]
    fn invalid_exponents_rejected() {
        assert!(matches!(
            KernelParams::new(2, 1.0, 0.1),
            Err(Error::InvalidExponent(_))
        ));
        assert!(matches!(
            KernelParams::new(2, 0.5, 0.1),
            Err(Error::InvalidExponent(_))
        ));
        assert!(matches!(
            KernelParams::new(2, 65.0, 0.1),
            Err(Error::InvalidExponent(_))
        ));
        assert!(KernelParams::new(2, 64.0, 0.1).is_ok());
        assert!(matches!(
            KernelParams::new(2, 1.5, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            KernelParams::new(1, 1.5, 0.1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn monomial_known_values() {
        // Average of h1^2 over the unit disk is 1/4 (polar coordinates).
        assert_relative_eq!(
            monomial_integral(2, &[2.0, 0.0]).unwrap(),
            0.25,
            max_relative = 1e-13
        );
        // Coordinate symmetry.
        assert_relative_eq!(
            monomial_integral(2, &[0.0, 2.0]).unwrap(),
            0.25,
            max_relative = 1e-13
        );
        // Average of the constant 1.
        for dim in 2..=5 {
            let zeros = vec![0.0; dim];
            assert_relative_eq!(
                monomial_integral(dim, &zeros).unwrap(),
                1.0,
                max_relative = 1e-13
            );
        }
        assert!(matches!(
            monomial_integral(2, &[-1.0, 0.0]),
            Err(Error::InvalidExponent(_))
        ));
    }

    /// Independent oracle: average of |h1|^a |h2|^b over the unit disk by
    /// polar-coordinate quadrature (midpoint rule, fine mesh).
    fn polar_disk_average(a: f64, b: f64) -> f64 {
        let (nr, nt) = (4000, 4000);
        let mut sum = 0.0;
        for i in 0..nr {
            let r = (i as f64 + 0.5) / nr as f64;
            let mut ang = 0.0;
            for j in 0..nt {
                let t = (j as f64 + 0.5) / nt as f64 * std::f64::consts::FRAC_PI_2;
                ang += (r * t.cos()).powf(a) * (r * t.sin()).powf(b);
            }
            // quarter disk by symmetry; weight r dr dt
            sum += ang * r / (nr * nt) as f64;
        }
        // normalize: quarter-disk area over the quarter parameter box is pi/4 / (pi/2 * 1)
        sum * std::f64::consts::FRAC_PI_2 / (std::f64::consts::PI / 4.0)
    }

    #[test]
    fn monomial_matches_polar_oracle() {
        for (a, b) in [(2.0, 0.0), (1.0, 1.0), (3.0, 2.0), (0.5, 0.0)] {
            let oracle = polar_disk_average(a, b);
            let closed = monomial_integral(2, &[a, b]).unwrap();
            assert_relative_eq!(closed, oracle, max_relative = 1e-5);
        }
    }

    #[test]
    fn moment_table_n2_p2() {
        let t = moment_table(&kp(2, 2.0)).unwrap();
        assert_abs_diff_eq!(t.axial_p_moment, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(t.cross_moment, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(t.radial_moment, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.shell_fraction, 3.0 / 8.0, epsilon = 1e-12);
        // first moment at p = 2: gamma_{2,3}/gamma_{2,2} = 4/(3 pi)
        assert_relative_eq!(
            t.first_moment_ratio,
            4.0 / (3.0 * std::f64::consts::PI),
            max_relative = 1e-13
        );
    }

    #[test]
    fn moment_table_n3_p15() {
        let t = moment_table(&kp(3, 1.5)).unwrap();
        assert_relative_eq!(t.axial_p_moment, 1.0 / 9.0, max_relative = 1e-13);
    }

    #[test]
    fn axial_and_cross_agree_with_monomial_route() {
        // Dual route: the closed forms (p-1)/(N+p) and 1/(N+p) must equal the
        // normalized monomial integrals computed through Gamma products.
        for &(dim, p) in &[(2usize, 1.25), (2, 1.5), (2, 3.0), (3, 1.5), (3, 5.0)] {
            let params = kp(dim, p);
            let two_gamma = 2.0 * gamma_constant(&params);
            let mut exps = vec![0.0; dim];
            exps[0] = p;
            let axial = monomial_integral(dim, &exps).unwrap() / two_gamma;
            exps[0] = p - 2.0;
            exps[1] = 2.0;
            let cross = monomial_integral(dim, &exps).unwrap() / two_gamma;
            let t = moment_table(&params).unwrap();
            assert_relative_eq!(axial, t.axial_p_moment, max_relative = 1e-12);
            assert_relative_eq!(cross, t.cross_moment, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn gamma_above_half_for_singular_range(p in 1.0001f64..1.9999, dim in 2usize..=4) {
            prop_assert!(gamma_constant(&kp(dim, p)) > 0.5);
        }

        #[test]
        fn moment_identity_holds(p in 1.01f64..16.0, dim in 2usize..=4) {
            let t = moment_table(&kp(dim, p)).unwrap();
            let n = dim as f64;
            let lhs = t.axial_p_moment + (n - 1.0) * t.cross_moment;
            prop_assert!((lhs - t.radial_moment).abs() <= 1e-12 * t.radial_moment.abs());
        }

        #[test]
        fn shell_fraction_in_range(p in 1.01f64..40.0, dim in 2usize..=4) {
            let t = moment_table(&kp(dim, p)).unwrap();
            prop_assert!(t.shell_fraction > 0.25 && t.shell_fraction < 0.5);
        }

        #[test]
        fn monomial_symmetric_under_permutation(a in -0.9f64..4.0, b in -0.9f64..4.0) {
            let lhs = monomial_integral(2, &[a, b]).unwrap();
            let rhs = monomial_integral(2, &[b, a]).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
