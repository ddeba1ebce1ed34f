//! Pucci-type extremal operators and the extremal-inequality verification.
//!
//! `L+ u = (alpha sup_{h in B_Lambda} delta u(x, eps h) + beta avg_{B_1}
//! delta u(x, eps h)) / (2 eps^2)` and its inf counterpart, where
//! `delta u(x, eps h) = u(x + eps h) + u(x - eps h) - 2 u(x)`. Solutions of
//! the DPP satisfy `L+ u + f >= 0 >= L- u + f` with `beta = 1/(2 gamma)`,
//! which requires `1 < p <= 2`: for p > 2 the kernel density vanishes
//! orthogonally to the direction and no convex split off the uniform
//! measure exists.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{low_discrepancy_ball, point_from, Point};
use crate::kernel::{gamma_constant, KernelParams};
use crate::problem::DppProblem;
use crate::quad::{build_rule, FieldRef, QuadratureRule};
use crate::solver::SolveReport;

/// Weights of the extremal operators: `alpha` on the point part, `beta` on
/// the uniform-average part, support radius `Lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Size of the low-discrepancy set used for the sup/inf over h.
    pub sup_samples: usize,
}

impl ExtremalParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1), got {alpha}"
            )));
        }
        if lambda < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "Lambda must be at least 1, got {lambda}"
            )));
        }
        Ok(Self {
            alpha,
            beta: 1.0 - alpha,
            lambda,
            sup_samples: 4096,
        })
    }

    /// The weights linked to the DPP: `beta = 1/(2 gamma_{N,p})`, which is a
    /// probability weight only for `1 < p <= 2`.
    pub fn for_dpp(kernel: &KernelParams) -> Result<Self> {
        if kernel.p() > 2.0 {
            return Err(Error::ExponentOutOfRange(kernel.p()));
        }
        let beta = 1.0 / (2.0 * gamma_constant(kernel));
        let alpha = 1.0 - beta;
        // p = 2 gives alpha = 0 exactly; absorb the roundoff of gamma = 1/2
        let alpha = if alpha.abs() < 1e-12 { 0.0 } else { alpha };
        Self::new(alpha, 1.0)
    }
}

/// Symmetric second difference `u(x + eps h) + u(x - eps h) - 2 u(x)`.
pub fn second_difference(
    field: FieldRef,
    x: &[f64],
    h: &[f64],
    eps: f64,
) -> Result<f64> {
    let dim = x.len();
    let mut plus = [0.0; 3];
    let mut minus = [0.0; 3];
    for d in 0..dim {
        plus[d] = x[d] + eps * h[d];
        minus[d] = x[d] - eps * h[d];
    }
    Ok(field.eval(&plus[..dim])? + field.eval(&minus[..dim])? - 2.0 * field.eval(x)?)
}

/// A rule whose nodes average uniformly over the unit ball: the p = 2 kernel
/// rule together with its mirror image.
pub fn uniform_ball_rule(dim: usize, counts: (usize, usize)) -> Result<QuadratureRule> {
    let params = KernelParams::new(dim, 2.0, 1.0)?;
    build_rule(&params, counts.0, counts.1)
}

fn uniform_mean_second_difference(
    rule: &QuadratureRule,
    field: FieldRef,
    x: &[f64],
    eps: f64,
) -> Result<f64> {
    // avg_{B1} delta u(x, eps h) dh = half-ball average of delta u under the
    // flat kernel, since delta u is symmetric in h
    let dim = x.len();
    let mut acc = 0.0;
    for (h, w) in rule.nodes() {
        let mut plus = [0.0; 3];
        let mut minus = [0.0; 3];
        for d in 0..dim {
            plus[d] = x[d] + eps * h[d];
            minus[d] = x[d] - eps * h[d];
        }
        acc += w * (field.eval(&plus[..dim])? + field.eval(&minus[..dim])?);
    }
    Ok(acc - 2.0 * field.eval(x)?)
}

fn extremal_point_term(
    field: FieldRef,
    x: &[f64],
    eps: f64,
    params: &ExtremalParams,
    maximize: bool,
) -> Result<f64> {
    let dim = x.len();
    let sign = if maximize { 1.0 } else { -1.0 };
    let seeds = low_discrepancy_ball(dim, params.lambda, params.sup_samples)?;
    let mut best = f64::NEG_INFINITY;
    let mut best_h = [0.0; 3];
    for h in &seeds {
        let v = sign * second_difference(field, x, &h[..dim], eps)?;
        if v > best {
            best = v;
            best_h = *h;
        }
    }
    // shrinking compass refinement around the best sample, clipped inside
    // the open ball
    let mut step = params.lambda / (params.sup_samples as f64).powf(1.0 / dim as f64);
    let clip = params.lambda * (1.0 - 1e-12);
    while step > 1e-9 * params.lambda {
        let mut improved = false;
        for d in 0..dim {
            for sgn in [-1.0, 1.0] {
                let mut cand = best_h;
                cand[d] += sgn * step;
                let norm2: f64 = cand[..dim].iter().map(|c| c * c).sum();
                if norm2 >= clip * clip {
                    let n = norm2.sqrt();
                    for c in cand.iter_mut().take(dim) {
                        *c *= clip / n;
                    }
                }
                let v = sign * second_difference(field, x, &cand[..dim], eps)?;
                if v > best {
                    best = v;
                    best_h = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(sign * best)
}

/// The maximal operator `L+`.
pub fn pucci_plus(
    field: FieldRef,
    x: &[f64],
    params: &ExtremalParams,
    kernel: &KernelParams,
) -> Result<f64> {
    let eps = kernel.eps();
    let rule = uniform_ball_rule(kernel.dim(), (32, 32))?;
    let sup = extremal_point_term(field, x, eps, params, true)?;
    let mean = uniform_mean_second_difference(&rule, field, x, eps)?;
    Ok((params.alpha * sup + params.beta * mean) / (2.0 * eps * eps))
}

/// The minimal operator `L-`.
pub fn pucci_minus(
    field: FieldRef,
    x: &[f64],
    params: &ExtremalParams,
    kernel: &KernelParams,
) -> Result<f64> {
    let eps = kernel.eps();
    let rule = uniform_ball_rule(kernel.dim(), (32, 32))?;
    let inf = extremal_point_term(field, x, eps, params, false)?;
    let mean = uniform_mean_second_difference(&rule, field, x, eps)?;
    Ok((params.alpha * inf + params.beta * mean) / (2.0 * eps * eps))
}

/// Density of the measure completing the kernel decomposition
/// `kernel/(2 gamma) = alpha nu + beta uniform` with `beta = 1/(2 gamma)`:
/// `(|z.h|^{p-2} - 1) / (2 gamma_{N,p} - 1)`. Nonnegative for `1 < p < 2`;
/// the convex weight `alpha = 1 - 1/(2 gamma)` flips sign across p = 2,
/// which is how the decomposition fails for p > 2.
pub fn decomposition_density(p: f64, dim: usize, z: &[f64], h: &[f64]) -> Result<f64> {
    let params = KernelParams::new(dim, p, 1.0)?;
    if (p - 2.0).abs() < 1e-14 {
        return Err(Error::DegenerateDecomposition);
    }
    let zh: f64 = z.iter().zip(h.iter()).map(|(a, b)| a * b).sum();
    let gamma = gamma_constant(&params);
    Ok((zh.abs().powf(p - 2.0) - 1.0) / (2.0 * gamma - 1.0))
}

/// Margins of the extremal inequalities at one node.
#[derive(Debug, Clone, Copy)]
pub struct ExtremalMargins {
    pub node: usize,
    pub position: Point,
    pub l_plus: f64,
    pub l_minus: f64,
    pub f_value: f64,
    /// `L+ u + f` (must be >= -slack)
    pub margin_plus: f64,
    /// `-(L- u + f)` (must be >= -slack)
    pub margin_minus: f64,
}

/// Verification report over the sampled nodes.
#[derive(Debug, Clone)]
pub struct ExtremalReport {
    pub margins: Vec<ExtremalMargins>,
    pub worst_plus: f64,
    pub worst_minus: f64,
    pub slack: f64,
    pub ok: bool,
    pub alpha: f64,
    pub beta: f64,
}

/// Checks `L+ u + f >= -slack` and `L- u + f <= slack` at `count` randomly
/// sampled interior nodes of a solved problem, with `beta = 1/(2 gamma)`.
/// Refuses p > 2.
pub fn verify_extremal_inequalities(
    report: &SolveReport,
    problem: &DppProblem,
    count: usize,
    slack: f64,
    seed: u64,
) -> Result<ExtremalReport> {
    if problem.params.p() > 2.0 {
        return Err(Error::ExponentOutOfRange(problem.params.p()));
    }
    let params = ExtremalParams::for_dpp(&problem.params)?;
    let field = FieldRef::Grid(&report.solution);
    let dim = problem.params.dim();
    let eps = problem.params.eps();

    // nodes whose Lambda*eps-ball stays covered
    let margin = params.lambda * eps + 2.0 * report.solution.dx();
    let eligible: Vec<usize> = report
        .interior
        .iter()
        .copied()
        .filter(|&i| {
            let x = report.solution.node_position(i);
            problem.domain.distance_to_boundary_from_inside(&x) > margin
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::InvalidParameter(
            "no interior nodes deep enough for the extremal support".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rule = uniform_ball_rule(dim, (32, 32))?;
    let mut margins = Vec::with_capacity(count);
    let mut worst_plus = f64::INFINITY;
    let mut worst_minus = f64::INFINITY;
    for _ in 0..count {
        let node = eligible[rng.gen_range(0..eligible.len())];
        let x = report.solution.node_position(node);
        let xs = &x[..dim];
        let sup = extremal_point_term(field, xs, eps, &params, true)?;
        let inf = extremal_point_term(field, xs, eps, &params, false)?;
        let mean = uniform_mean_second_difference(&rule, field, xs, eps)?;
        let l_plus = (params.alpha * sup + params.beta * mean) / (2.0 * eps * eps);
        let l_minus = (params.alpha * inf + params.beta * mean) / (2.0 * eps * eps);
        let f_value = problem.source.eval(xs);
        let m_plus = l_plus + f_value;
        let m_minus = -(l_minus + f_value);
        worst_plus = worst_plus.min(m_plus);
        worst_minus = worst_minus.min(m_minus);
        margins.push(ExtremalMargins {
            node,
            position: point_from(xs),
            l_plus,
            l_minus,
            f_value,
            margin_plus: m_plus,
            margin_minus: m_minus,
        });
    }
    Ok(ExtremalReport {
        ok: worst_plus >= -slack && worst_minus >= -slack,
        margins,
        worst_plus,
        worst_minus,
        slack,
        alpha: params.alpha,
        beta: params.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{GridField, NodeClass};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kp(eps: f64) -> KernelParams {
        KernelParams::new(2, 1.5, eps).unwrap()
    }

    #[test]
    fn second_difference_examples() {
        let eps = 0.2;
        let lin = |x: &[f64]| 3.0 * x[0] - x[1] + 2.0;
        assert_abs_diff_eq!(
            second_difference(FieldRef::Func(&lin), &[0.3, 0.1], &[0.5, -0.4], eps).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        let sq = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let h = [0.6, 0.3];
        let h2 = h[0] * h[0] + h[1] * h[1];
        assert_abs_diff_eq!(
            second_difference(FieldRef::Func(&sq), &[0.3, 0.1], &h, eps).unwrap(),
            2.0 * eps * eps * h2,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            second_difference(FieldRef::Func(&|_| 5.0), &[0.3, 0.1], &h, eps).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn pucci_on_quadratics() {
        // u = |y|^2, Lambda = 1: sup delta = 2 eps^2 (h -> boundary),
        // mean delta = 2 eps^2 N/(N+2), so L+ = alpha + beta N/(N+2).
        let kernel = kp(0.3);
        let params = ExtremalParams::new(0.4, 1.0).unwrap();
        let u = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let n_frac = 2.0 / 4.0;
        let lp = pucci_plus(FieldRef::Func(&u), &[0.2, -0.1], &params, &kernel).unwrap();
        assert_abs_diff_eq!(lp, params.alpha + params.beta * n_frac, epsilon = 1e-5);
        // inf delta = 0 in the limit h -> 0, so L- = beta N/(N+2)
        let lm = pucci_minus(FieldRef::Func(&u), &[0.2, -0.1], &params, &kernel).unwrap();
        assert_abs_diff_eq!(lm, params.beta * n_frac, epsilon = 1e-5);
        // u = -|y|^2: L+ = -beta N/(N+2)
        let nu = |x: &[f64]| -(x[0] * x[0] + x[1] * x[1]);
        let lpn = pucci_plus(FieldRef::Func(&nu), &[0.2, -0.1], &params, &kernel).unwrap();
        assert_abs_diff_eq!(lpn, -params.beta * n_frac, epsilon = 1e-5);
        // linear u: both vanish
        let lin = |x: &[f64]| 0.7 * x[0] - 0.1 * x[1];
        assert_abs_diff_eq!(
            pucci_plus(FieldRef::Func(&lin), &[0.0, 0.0], &params, &kernel).unwrap(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn pucci_duality_on_random_grid_fields() {
        let kernel = kp(0.25);
        let params = ExtremalParams::new(0.3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut u = GridField::new(2, [-1.5, -1.5, 0.0], [13, 13, 1], 0.25).unwrap();
        let mut nu = u.clone();
        for i in 0..u.len() {
            u.set_class(i, NodeClass::Interior);
            nu.set_class(i, NodeClass::Interior);
            let v = rng.gen_range(-2.0..2.0);
            u.set_value(i, v);
            nu.set_value(i, -v);
        }
        let x = [0.1, -0.2];
        let lp = pucci_plus(FieldRef::Grid(&u), &x, &params, &kernel).unwrap();
        let lm_neg = pucci_minus(FieldRef::Grid(&nu), &x, &params, &kernel).unwrap();
        // pucci_plus(-u) = -pucci_minus(u), here written from the mirrored field
        assert_abs_diff_eq!(lp, -lm_neg, epsilon = 1e-12);
        // L+ >= L-
        let lm = pucci_minus(FieldRef::Grid(&u), &x, &params, &kernel).unwrap();
        assert!(lp >= lm - 1e-12);
    }

    #[test]
    fn dpp_weights_require_singular_range() {
        assert!(ExtremalParams::for_dpp(&KernelParams::new(2, 1.5, 0.1).unwrap()).is_ok());
        assert!(matches!(
            ExtremalParams::for_dpp(&KernelParams::new(2, 2.5, 0.1).unwrap()),
            Err(Error::ExponentOutOfRange(_))
        ));
        // p = 2 degenerates to alpha = 0: the mean second difference alone
        let params = ExtremalParams::for_dpp(&KernelParams::new(2, 2.0, 0.1).unwrap()).unwrap();
        assert_abs_diff_eq!(params.alpha, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(params.beta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decomposition_density_signs() {
        let z = [1.0, 0.0];
        // 1 < p < 2: nonnegative on a dense sample
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let r: f64 = rng.gen_range(0.0..1.0f64);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let h = [r * th.cos(), r * th.sin()];
            let d = decomposition_density(1.5, 2, &z, &h).unwrap();
            assert!(d >= 0.0, "negative density {d} at {h:?}");
        }
        // |z.h| = 1 gives exactly zero for any p
        assert_abs_diff_eq!(
            decomposition_density(1.5, 2, &z, &[1.0, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            decomposition_density(3.0, 2, &z, &[1.0, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        // p = 2 is degenerate
        assert!(matches!(
            decomposition_density(2.0, 2, &z, &[0.5, 0.0]),
            Err(Error::DegenerateDecomposition)
        ));
        // p = 3: the density itself stays positive away from |z.h| = 1, but
        // the convex weight alpha = 1 - 1/(2 gamma) turns negative, so the
        // signed nu-part alpha * density changes sign across p = 2
        let h_perp = [0.0, 0.5];
        let d15 = decomposition_density(1.5, 2, &z, &h_perp).unwrap();
        let d30 = decomposition_density(3.0, 2, &z, &h_perp).unwrap();
        assert!(d30 > 0.0);
        let alpha = |p: f64| {
            1.0 - 1.0 / (2.0 * gamma_constant(&KernelParams::new(2, p, 0.1).unwrap()))
        };
        assert!(alpha(1.5) > 0.0 && alpha(3.0) < 0.0);
        assert!(alpha(1.5) * d15 >= 0.0);
        assert!(alpha(3.0) * d30 < 0.0);
        // and the kernel density itself vanishes orthogonally to z for p > 2
        let kernel_density = |p: f64, t: f64| t.abs().powf(p - 2.0);
        assert_eq!(kernel_density(3.0, 0.0), 0.0);
    }
}
