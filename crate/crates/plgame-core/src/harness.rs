//! Quantitative checks of the analytical statements: the second-order
//! expansion of the averaging operator, its normalized-p-Laplacian limit,
//! the midpoint expansion through the actual direction search, the Hölder
//! quotient of solved fields, and the vanishing-step convergence study.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{DomainSpec, Shape};
use crate::error::{Error, Result};
use crate::field::GridField;
use crate::geometry::{dot, norm, point_from, Direction, Point};
use crate::kernel::KernelParams;
use crate::problem::{DirectionSearch, DppProblem, ScalarField};
use crate::quad::{apply, build_rule, FieldRef};
use crate::solver::{optimize_direction, solve};

/// A test function with analytic derivatives.
#[derive(Clone)]
pub struct SmoothFn {
    pub name: &'static str,
    value: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
    gradient: Arc<dyn Fn(&Point) -> Point + Send + Sync>,
    hessian: Arc<dyn Fn(&Point) -> [[f64; 3]; 3] + Send + Sync>,
}

impl SmoothFn {
    pub fn new(
        name: &'static str,
        value: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Point) -> Point + Send + Sync + 'static,
        hessian: impl Fn(&Point) -> [[f64; 3]; 3] + Send + Sync + 'static,
    ) -> Self {
        Self {
            name,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Point) -> Point {
        (self.gradient)(x)
    }

    pub fn hess(&self, x: &Point) -> [[f64; 3]; 3] {
        (self.hessian)(x)
    }

    /// `cos(y_1)`
    pub fn cos_first() -> Self {
        Self::new(
            "cos(y1)",
            |x| x[0].cos(),
            |x| [-x[0].sin(), 0.0, 0.0],
            |x| {
                let mut h = [[0.0; 3]; 3];
                h[0][0] = -x[0].cos();
                h
            },
        )
    }

    /// `a . y`
    pub fn linear(a: Point) -> Self {
        Self::new(
            "linear",
            move |x| a[0] * x[0] + a[1] * x[1] + a[2] * x[2],
            move |_| a,
            |_| [[0.0; 3]; 3],
        )
    }

    /// `|y|^2`
    pub fn squared_norm() -> Self {
        Self::new(
            "|y|^2",
            |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2],
            |x| [2.0 * x[0], 2.0 * x[1], 2.0 * x[2]],
            |_| {
                let mut h = [[0.0; 3]; 3];
                h[0][0] = 2.0;
                h[1][1] = 2.0;
                h[2][2] = 2.0;
                h
            },
        )
    }

    /// `|y|^beta` away from the origin (dim fixed by usage).
    pub fn radial_power(beta: f64, dim: usize) -> Self {
        let value = move |x: &Point| norm(x, dim).powf(beta);
        let gradient = move |x: &Point| {
            let r = norm(x, dim);
            let c = beta * r.powf(beta - 2.0);
            [c * x[0], c * x[1], c * x[2]]
        };
        let hessian = move |x: &Point| {
            let r = norm(x, dim);
            let c = beta * r.powf(beta - 2.0);
            let d = beta * (beta - 2.0) * r.powf(beta - 4.0);
            let mut h = [[0.0; 3]; 3];
            for i in 0..dim {
                for j in 0..dim {
                    h[i][j] = d * x[i] * x[j] + if i == j { c } else { 0.0 };
                }
            }
            h
        };
        Self::new("radial power", value, gradient, hessian)
    }

    /// Normalized p-Laplacian `tr D^2 u + (p-2) <D^2 u n, n>` with
    /// `n = grad u / |grad u|`; needs a nonvanishing gradient.
    pub fn normalized_p_laplacian(&self, x: &Point, p: f64, dim: usize) -> Result<f64> {
        let g = self.grad(x);
        let gn = norm(&g, dim);
        if gn < 1e-10 {
            return Err(Error::DegenerateGradient(x[..dim].to_vec()));
        }
        let h = self.hess(x);
        let mut trace = 0.0;
        let mut quad = 0.0;
        for i in 0..dim {
            trace += h[i][i];
            for j in 0..dim {
                quad += h[i][j] * g[i] * g[j];
            }
        }
        Ok(trace + (p - 2.0) * quad / (gn * gn))
    }
}

/// Remainders of an expansion across a step-size ladder with the fitted
/// log-log order.
#[derive(Debug, Clone)]
pub struct ExpansionReport {
    pub eps_ladder: Vec<f64>,
    pub remainders: Vec<f64>,
    /// Least-squares slope of `log remainder` vs `log eps` over entries
    /// above the quadrature floor; NaN when fewer than two survive.
    pub fitted_order: f64,
}

fn fit_order(eps: &[f64], remainders: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(remainders.iter())
        .filter(|(_, r)| **r > 1e-13)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

fn validate_ladder(eps_ladder: &[f64]) -> Result<()> {
    if eps_ladder.len() < 2 {
        return Err(Error::InvalidParameter(
            "the step ladder needs at least two values".into(),
        ));
    }
    for w in eps_ladder.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "the step ladder must be strictly decreasing".into(),
            ));
        }
    }
    Ok(())
}

/// Second-order expansion of the directional average:
/// `I_z u(x) = u + eps c1 grad u . z + eps^2/(2(N+p)) [tr D^2 u + (p-2)
/// <D^2 u z, z>] + o(eps^2)`. Returns the measured remainders across the
/// ladder.
pub fn check_expansion(
    u: &SmoothFn,
    x: &[f64],
    z: &Direction,
    params: &KernelParams,
    eps_ladder: &[f64],
    quad_counts: (usize, usize),
) -> Result<ExpansionReport> {
    validate_ladder(eps_ladder)?;
    let dim = params.dim();
    let rule = build_rule(params, quad_counts.0, quad_counts.1)?;
    let xp = point_from(x);
    let c1 = params.first_moment();
    let npd = dim as f64 + params.p();
    let g = u.grad(&xp);
    let h = u.hess(&xp);
    let zv = z.as_point();
    let mut trace = 0.0;
    let mut quad = 0.0;
    for i in 0..dim {
        trace += h[i][i];
        for j in 0..dim {
            quad += h[i][j] * zv[i] * zv[j];
        }
    }
    let func = |y: &[f64]| u.eval(&point_from(y));
    let mut remainders = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let p_eps = params.with_eps(eps)?;
        let avg = apply(&rule, FieldRef::Func(&func), x, z, &p_eps)?;
        let predicted = u.eval(&xp)
            + eps * c1 * dot(&g, zv, dim)
            + eps * eps / (2.0 * npd) * (trace + (params.p() - 2.0) * quad);
        remainders.push((avg - predicted).abs());
    }
    Ok(ExpansionReport {
        eps_ladder: eps_ladder.to_vec(),
        fitted_order: fit_order(eps_ladder, &remainders),
        remainders,
    })
}

/// Convergence of the symmetric difference quotient along the gradient
/// direction to `Delta_p^N u / (2(N+p))`.
pub fn check_normalized_limit(
    u: &SmoothFn,
    x: &[f64],
    params: &KernelParams,
    eps_ladder: &[f64],
    quad_counts: (usize, usize),
) -> Result<ExpansionReport> {
    validate_ladder(eps_ladder)?;
    let dim = params.dim();
    let xp = point_from(x);
    let g = u.grad(&xp);
    if norm(&g, dim) < 1e-10 {
        return Err(Error::DegenerateGradient(x.to_vec()));
    }
    let z = Direction::from_vector(dim, &g[..dim])?;
    let rule = build_rule(params, quad_counts.0, quad_counts.1)?;
    let target = u.normalized_p_laplacian(&xp, params.p(), dim)? / (2.0 * (dim as f64 + params.p()));
    let func = |y: &[f64]| u.eval(&point_from(y));
    let ux = u.eval(&xp);
    let mut remainders = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let p_eps = params.with_eps(eps)?;
        let plus = apply(&rule, FieldRef::Func(&func), x, &z, &p_eps)?;
        let minus = apply(&rule, FieldRef::Func(&func), x, &z.negated(), &p_eps)?;
        let quotient = (plus + minus - 2.0 * ux) / (2.0 * eps * eps);
        remainders.push((quotient - target).abs());
    }
    Ok(ExpansionReport {
        eps_ladder: eps_ladder.to_vec(),
        fitted_order: fit_order(eps_ladder, &remainders),
        remainders,
    })
}

/// Midpoint expansion through the actual direction search:
/// `(sup_z I_z u + inf_z I_z u)/2 = u + eps^2/(2(N+p)) Delta_p^N u + o(eps^2)`,
/// plus the angle between the found maximizer and the gradient direction.
pub struct MidpointReport {
    pub expansion: ExpansionReport,
    /// angle(argmax, grad u/|grad u|) per ladder entry
    pub alignment: Vec<f64>,
}

pub fn check_midpoint_expansion(
    u: &SmoothFn,
    x: &[f64],
    params: &KernelParams,
    eps_ladder: &[f64],
    search: &DirectionSearch,
    quad_counts: (usize, usize),
) -> Result<MidpointReport> {
    validate_ladder(eps_ladder)?;
    let dim = params.dim();
    let xp = point_from(x);
    let g = u.grad(&xp);
    if norm(&g, dim) < 1e-10 {
        return Err(Error::DegenerateGradient(x.to_vec()));
    }
    let gdir = Direction::from_vector(dim, &g[..dim])?;
    let rule = build_rule(params, quad_counts.0, quad_counts.1)?;
    let dpn = u.normalized_p_laplacian(&xp, params.p(), dim)?;
    let func = |y: &[f64]| u.eval(&point_from(y));
    let ux = u.eval(&xp);
    let mut remainders = Vec::with_capacity(eps_ladder.len());
    let mut alignment = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let p_eps = params.with_eps(eps)?;
        let (sup, argmax) =
            optimize_direction(FieldRef::Func(&func), x, &p_eps, search, &rule, true)?;
        let (inf, _) = optimize_direction(FieldRef::Func(&func), x, &p_eps, search, &rule, false)?;
        let midpoint = 0.5 * (sup + inf);
        let predicted = ux + eps * eps / (2.0 * (dim as f64 + params.p())) * dpn;
        remainders.push((midpoint - predicted).abs());
        alignment.push(argmax.angle_to(&gdir));
    }
    Ok(MidpointReport {
        expansion: ExpansionReport {
            eps_ladder: eps_ladder.to_vec(),
            fitted_order: fit_order(eps_ladder, &remainders),
            remainders,
        },
        alignment,
    })
}

/// Hölder quotient of a solved field.
#[derive(Debug, Clone, Copy)]
pub struct HolderReport {
    pub gamma: f64,
    pub quotient_sup: f64,
    pub pair_count: usize,
    pub radius: f64,
}

/// `sup |u(x)-u(y)| / (|x-y|^gamma + eps^gamma)` over node pairs within
/// distance `radius/2` of the domain center. All pairs when at most 10^4
/// nodes qualify, otherwise 10^5 seeded random pairs. With `gamma` unset the
/// exponent is fitted by log-log regression of the increments against the
/// separations (clamped and snapped to the grid {0.05, ..., 1.0}).
pub fn holder_quotient(
    solution: &GridField,
    center: &[f64],
    radius: f64,
    gamma: Option<f64>,
    params: &KernelParams,
) -> Result<HolderReport> {
    let dim = solution.dim();
    let cp = point_from(center);
    let nodes: Vec<(Point, f64)> = solution
        .interior_nodes()
        .into_iter()
        .filter_map(|i| {
            let x = solution.node_position(i);
            let d: f64 = (0..dim).map(|k| (x[k] - cp[k]).powi(2)).sum::<f64>().sqrt();
            (d <= radius / 2.0).then(|| (x, solution.value(i)))
        })
        .collect();
    if nodes.len() < 2 {
        return Err(Error::InvalidParameter(
            "not enough nodes inside the half-radius region".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = if nodes.len() <= 10_000 {
        // all pairs would be 5e7 at the cap; subsample deterministically by
        // stride when the full product gets large
        let n = nodes.len();
        let all = n * (n - 1) / 2;
        if all <= 2_000_000 {
            (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            (0..2_000_000)
                .map(|_| {
                    let i = rng.gen_range(0..n);
                    let j = rng.gen_range(0..n);
                    (i.min(j), i.max(j))
                })
                .filter(|(i, j)| i != j)
                .collect()
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        (0..100_000)
            .map(|_| {
                let i = rng.gen_range(0..nodes.len());
                let j = rng.gen_range(0..nodes.len());
                (i.min(j), i.max(j))
            })
            .filter(|(i, j)| i != j)
            .collect()
    };

    let eps = params.eps();
    let gamma = match gamma {
        Some(g) => {
            if !(0.0 < g && g <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "gamma must lie in (0, 1], got {g}"
                )));
            }
            g
        }
        None => {
            // slope of log |Delta u| against log |Delta x| over separated pairs
            let mut pts = Vec::new();
            for &(i, j) in &pairs {
                let du = (nodes[i].1 - nodes[j].1).abs();
                let dx: f64 = (0..dim)
                    .map(|k| (nodes[i].0[k] - nodes[j].0[k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if du > 1e-12 && dx >= eps {
                    pts.push((dx.ln(), du.ln()));
                }
            }
            if pts.len() < 8 {
                1.0
            } else {
                let n = pts.len() as f64;
                let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
                let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
                let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
                let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
                let slope = (sxy / sxx).clamp(0.05, 1.0);
                (slope * 20.0).round() / 20.0
            }
        }
    };

    let mut quotient_sup = 0.0f64;
    for &(i, j) in &pairs {
        let du = (nodes[i].1 - nodes[j].1).abs();
        let dx: f64 = (0..dim)
            .map(|k| (nodes[i].0[k] - nodes[j].0[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        quotient_sup = quotient_sup.max(du / (dx.powf(gamma) + eps.powf(gamma)));
    }
    Ok(HolderReport {
        gamma,
        quotient_sup,
        pair_count: pairs.len(),
        radius,
    })
}

/// One row of the vanishing-step convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub dx: f64,
    /// sup error against the exact solution, away from the boundary
    pub sup_error: f64,
    pub iterations: usize,
    pub final_residual: f64,
}

/// Exact solutions with known DPP source `f = -Delta_p^N u / (2(N+p))`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactCase {
    /// `a . x`, `f = 0`
    Linear([f64; 3]),
    /// `|x|^2`, `f = -(N+p-2)/(N+p)`
    Quadratic,
    /// `|x|^{(p-N)/(p-1)}`, `f = 0`; needs an annulus domain
    RadialPHarmonic,
}

impl ExactCase {
    pub fn boundary(&self, params: &KernelParams) -> ScalarField {
        match self {
            ExactCase::Linear(a) => ScalarField::Linear(*a),
            ExactCase::Quadratic => ScalarField::SquaredNorm,
            ExactCase::RadialPHarmonic => ScalarField::RadialPower(
                (params.p() - params.dim() as f64) / (params.p() - 1.0),
            ),
        }
    }

    pub fn source(&self, params: &KernelParams) -> ScalarField {
        match self {
            ExactCase::Quadratic => ScalarField::Constant(-params.second_moment()),
            _ => ScalarField::Zero,
        }
    }
}

/// Study configuration: the shape template is scaled per ladder entry only
/// through the collar width.
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub dim: usize,
    pub p: f64,
    pub shape: Shape,
    pub exact: ExactCase,
    pub eps_ladder: Vec<f64>,
    /// dx = eps / dx_divisor (default 8)
    pub dx_divisor: f64,
    pub tol: f64,
    pub search: DirectionSearch,
    pub quad_counts: (usize, usize),
}

impl ConvergenceConfig {
    pub fn new(dim: usize, p: f64, shape: Shape, exact: ExactCase, eps_ladder: Vec<f64>) -> Self {
        Self {
            dim,
            p,
            shape,
            exact,
            eps_ladder,
            dx_divisor: 8.0,
            tol: 1e-9,
            search: DirectionSearch::default_for_dim(dim),
            quad_counts: (32, 32),
        }
    }
}

/// Solves the exact-solution problem for every ladder step and records the
/// sup error over nodes at distance at least a quarter of the inradius from
/// the boundary.
pub fn convergence_study(config: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>> {
    validate_ladder(&config.eps_ladder)?;
    let mut rows = Vec::with_capacity(config.eps_ladder.len());
    for &eps in &config.eps_ladder {
        let domain = DomainSpec {
            shape: config.shape,
            eps,
            dim: config.dim,
        };
        let params = KernelParams::new(config.dim, config.p, eps)?;
        let exact_g = config.exact.boundary(&params);
        let problem = DppProblem::new(
            domain,
            params,
            config.exact.source(&params),
            exact_g.clone(),
            eps / config.dx_divisor,
        )?
        .with_tol(config.tol)
        .with_loose_stop()
        .with_search(config.search)
        .with_quad_counts(config.quad_counts.0, config.quad_counts.1);
        let report = solve(&problem)?;
        let inradius = match config.shape {
            Shape::Ball { radius, .. } => radius,
            Shape::Annulus { inner, outer, .. } => (outer - inner) / 2.0,
            Shape::BoxDomain { min, max } => {
                (0..config.dim)
                    .map(|d| (max[d] - min[d]) / 2.0)
                    .fold(f64::INFINITY, f64::min)
            }
        };
        let margin = inradius / 4.0 * 2.0;
        let mut sup_error = 0.0f64;
        for &i in &report.interior {
            let x = report.solution.node_position(i);
            if domain.distance_to_boundary_from_inside(&x) < margin {
                continue;
            }
            let exact = exact_g.eval(&x[..config.dim]);
            sup_error = sup_error.max((report.solution.value(i) - exact).abs());
        }
        rows.push(ConvergenceRow {
            eps,
            dx: problem.grid_dx,
            sup_error,
            iterations: report.iterations,
            final_residual: report.final_residual,
        });
    }
    Ok(rows)
}
