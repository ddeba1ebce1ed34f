//! Monte Carlo simulation of the two-player tug-of-war with noise.
//!
//! Each round the players toss a fair coin; the winner picks a unit
//! direction z and the token jumps to `x + eps h` where `h` is drawn from
//! the unit ball with density proportional to `(z.h)_+^{p-2}`. Player I
//! collects the boundary payoff when the token first leaves the domain and
//! pays the running cost `eps^2 f` at every interior position visited,
//! matching the bookkeeping of the dynamic programming principle. Paths use
//! counter-based ChaCha substreams (one stream per path index), so runs are
//! bit-reproducible at any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{point_from, Direction, Point, Rotation};
use crate::kernel::KernelParams;
use crate::problem::{DirectionSearch, DppProblem};
use crate::quad::{build_rule, FieldRef, QuadratureRule};
use crate::solver::{optimize_direction, SolveReport};

const SAMPLER_PROPOSAL_CAP: usize = 10_000;

/// How an optimal player turns the solved field into moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Look up the optimizing direction stored at the nearest lattice node
    /// during the solve (recomputes only where the lookup misses).
    Stored,
    /// Re-run the direction search on the solved field at the current point.
    Recompute,
}

/// A player's strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Optimal play from a solved problem (Player I maximizes, Player II
    /// minimizes).
    Optimal(PolicyMode),
    /// Always the same direction.
    FixedDirection(Direction),
    /// Away from the domain center (first axis when at the center).
    Radial,
    /// A fresh uniform direction every move.
    AdversarialRandom,
}

/// One simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub problem: DppProblem,
    pub start: Point,
    pub paths: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub strategy_i: Strategy,
    pub strategy_ii: Strategy,
    /// Direction search used by recomputing optimal strategies; much lighter
    /// than the solver's because only the argmax matters, not the value.
    pub strategy_search: DirectionSearch,
    /// Quadrature counts for the strategy search.
    pub strategy_quad: (usize, usize),
}

impl GameConfig {
    pub fn new(problem: DppProblem, start: &[f64], paths: usize, seed: u64) -> Result<Self> {
        let start_p = point_from(start);
        if !problem.domain.contains(&start_p) {
            return Err(Error::OutOfDomain(start.to_vec()));
        }
        if paths == 0 {
            return Err(Error::InvalidParameter("need at least one path".into()));
        }
        let dim = problem.domain.dim;
        Ok(Self {
            problem,
            start: start_p,
            paths,
            max_steps: 1_000_000,
            seed,
            strategy_i: Strategy::Optimal(PolicyMode::Stored),
            strategy_ii: Strategy::Optimal(PolicyMode::Stored),
            strategy_search: DirectionSearch {
                coarse: if dim == 2 { 16 } else { 64 },
                refine_tol: 1e-3,
                ring: if dim == 2 { 16 } else { 64 },
            },
            strategy_quad: (8, 8),
        })
    }

    pub fn with_strategies(mut self, i: Strategy, ii: Strategy) -> Self {
        self.strategy_i = i;
        self.strategy_ii = ii;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// Aggregated path statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameStats {
    pub mean_payoff: f64,
    pub std_error: f64,
    pub mean_exit_steps: f64,
    pub truncated_paths: usize,
    pub paths: usize,
}

/// One step of the game: `x + eps h` with `h` drawn from the unit ball with
/// density proportional to `(z.h)_+^{p-2}`.
///
/// The axial coordinate `t = z.h` is proposed as `U^{1/(p-1)}` (exactly the
/// `t^{p-2}` density on (0,1)) and accepted with probability
/// `(1-t^2)^{(N-1)/2}`, the relative cross-section volume; the cross
/// component is uniform in the (N-1)-ball of radius `sqrt(1-t^2)`.
pub fn sample_step<R: Rng>(
    x: &Point,
    z: &Direction,
    params: &KernelParams,
    rng: &mut R,
) -> Result<Point> {
    let dim = params.dim();
    let p = params.p();
    let exponent = 1.0 / (p - 1.0);
    let mut t = f64::NAN;
    let mut accepted = false;
    for _ in 0..SAMPLER_PROPOSAL_CAP {
        let u: f64 = rng.gen_range(0.0..1.0);
        let cand = u.powf(exponent);
        let section = (1.0 - cand * cand).max(0.0).powf((dim as f64 - 1.0) / 2.0);
        if rng.gen_range(0.0..1.0) < section {
            t = cand;
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::SamplerStall(SAMPLER_PROPOSAL_CAP));
    }
    let width = (1.0 - t * t).max(0.0).sqrt();
    let mut h_canonical = [t, 0.0, 0.0];
    if dim == 2 {
        h_canonical[1] = width * rng.gen_range(-1.0..1.0f64);
    } else {
        let r = width * rng.gen_range(0.0..1.0f64).sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        h_canonical[1] = r * phi.cos();
        h_canonical[2] = r * phi.sin();
    }
    let h = Rotation::onto(z).apply(&h_canonical);
    let eps = params.eps();
    Ok([x[0] + eps * h[0], x[1] + eps * h[1], x[2] + eps * h[2]])
}

struct StrategyCtx<'a> {
    config: &'a GameConfig,
    solution: Option<&'a SolveReport>,
    rule: QuadratureRule,
    domain_center: Point,
}

impl<'a> StrategyCtx<'a> {
    fn new(config: &'a GameConfig, solution: Option<&'a SolveReport>) -> Result<Self> {
        let needs_solution = [config.strategy_i, config.strategy_ii]
            .iter()
            .any(|s| matches!(s, Strategy::Optimal(_)));
        if needs_solution && solution.is_none() {
            return Err(Error::InvalidParameter(
                "optimal strategies need a solve report".into(),
            ));
        }
        let rule = build_rule(
            &config.problem.params,
            config.strategy_quad.0,
            config.strategy_quad.1,
        )?;
        let domain_center = match config.problem.domain.shape {
            crate::domain::Shape::Ball { center, .. } => center,
            crate::domain::Shape::Annulus { center, .. } => center,
            crate::domain::Shape::BoxDomain { min, max } => [
                0.5 * (min[0] + max[0]),
                0.5 * (min[1] + max[1]),
                0.5 * (min[2] + max[2]),
            ],
        };
        Ok(Self {
            config,
            solution,
            rule,
            domain_center,
        })
    }

    fn direction<R: Rng>(
        &self,
        strategy: &Strategy,
        x: &Point,
        maximize: bool,
        rng: &mut R,
    ) -> Result<Direction> {
        let dim = self.config.problem.domain.dim;
        match strategy {
            Strategy::FixedDirection(d) => Ok(*d),
            Strategy::Radial => {
                let v = [
                    x[0] - self.domain_center[0],
                    x[1] - self.domain_center[1],
                    x[2] - self.domain_center[2],
                ];
                Direction::from_vector(dim, &v[..dim]).or_else(|_| Ok(Direction::axis(dim, 0)))
            }
            Strategy::AdversarialRandom => {
                if dim == 2 {
                    Ok(Direction::from_angle(
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    ))
                } else {
                    let z: f64 = rng.gen_range(-1.0..1.0);
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = (1.0 - z * z).sqrt();
                    Direction::new(3, &[r * phi.cos(), r * phi.sin(), z])
                }
            }
            Strategy::Optimal(mode) => {
                let report = self.solution.expect("checked in new");
                if *mode == PolicyMode::Stored {
                    if let Some(d) = report.stored_direction(&x[..dim], maximize) {
                        return Ok(d);
                    }
                }
                let (_, dir) = optimize_direction(
                    FieldRef::Grid(&report.solution),
                    &x[..dim],
                    &self.config.problem.params,
                    &self.config.strategy_search,
                    &self.rule,
                    maximize,
                )?;
                Ok(dir)
            }
        }
    }
}

/// Plays the configured number of paths and aggregates payoff statistics.
/// Optimal strategies read the supplied solve report. Deterministic for a
/// fixed seed: path k uses ChaCha stream k, and the reduction runs in path
/// order.
pub fn play(config: &GameConfig, solution: Option<&SolveReport>) -> Result<GameStats> {
    let ctx = StrategyCtx::new(config, solution)?;
    let eps2 = config.problem.params.eps() * config.problem.params.eps();
    let per_path: Vec<Result<(f64, usize, bool)>> = (0..config.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(path as u64 + 1);
            let mut x = config.start;
            let mut payoff = 0.0;
            let mut steps = 0usize;
            while config.problem.domain.contains(&x) {
                if steps >= config.max_steps {
                    // truncated: settle at the nearest collar point
                    let xb = config.problem.domain.project_to_boundary(&x);
                    payoff += config
                        .problem
                        .boundary
                        .eval(&xb[..config.problem.domain.dim]);
                    return Ok((payoff, steps, true));
                }
                payoff += eps2
                    * config
                        .problem
                        .source
                        .eval(&x[..config.problem.domain.dim]);
                let heads = rng.gen_bool(0.5);
                let (strategy, maximize) = if heads {
                    (&config.strategy_i, true)
                } else {
                    (&config.strategy_ii, false)
                };
                let z = ctx.direction(strategy, &x, maximize, &mut rng)?;
                x = sample_step(&x, &z, &config.problem.params, &mut rng)?;
                steps += 1;
            }
            payoff += config
                .problem
                .boundary
                .eval(&x[..config.problem.domain.dim]);
            Ok((payoff, steps, false))
        })
        .collect();

    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut steps_sum = 0usize;
    let mut truncated = 0usize;
    for r in per_path {
        let (payoff, steps, was_truncated) = r?;
        sum += payoff;
        sum2 += payoff * payoff;
        steps_sum += steps;
        truncated += usize::from(was_truncated);
    }
    let n = config.paths as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    Ok(GameStats {
        mean_payoff: mean,
        std_error: if config.paths > 1 {
            (var / (n - 1.0)).sqrt()
        } else {
            0.0
        },
        mean_exit_steps: steps_sum as f64 / n,
        truncated_paths: truncated,
        paths: config.paths,
    })
}

/// Game value versus solver value at the start point.
#[derive(Debug, Clone, Copy)]
pub struct DiscrepancyReport {
    pub stats: GameStats,
    pub solver_value: f64,
    pub difference: f64,
    /// |difference| in standard errors.
    pub sigmas: f64,
    /// Agreement within 4 standard errors.
    pub ok: bool,
}

/// Plays the game and compares the mean payoff with the solved field at the
/// start point. The report must come from the same problem.
pub fn value_vs_solver(config: &GameConfig, report: &SolveReport) -> Result<DiscrepancyReport> {
    if report.solution.dim() != config.problem.domain.dim
        || (report.solution.dx() - config.problem.grid_dx).abs() > 1e-14
    {
        return Err(Error::MismatchedProblems(
            "solve report grid does not match the game problem".into(),
        ));
    }
    // spot-check that the report's collar really carries this problem's g
    for &i in report.solution.collar_nodes().iter().take(16) {
        let x = report.solution.node_position(i);
        let g = config.problem.boundary.eval(&x[..report.solution.dim()]);
        if (report.solution.value(i) - g).abs() > 1e-12 {
            return Err(Error::MismatchedProblems(
                "solve report boundary data differ from the game problem".into(),
            ));
        }
    }
    let stats = play(config, Some(report))?;
    let solver_value = report
        .solution
        .interpolate(&config.start[..report.solution.dim()])?;
    let difference = stats.mean_payoff - solver_value;
    let sigmas = difference.abs() / stats.std_error.max(1e-300);
    Ok(DiscrepancyReport {
        stats,
        solver_value,
        difference,
        sigmas,
        ok: sigmas <= 4.0,
    })
}
