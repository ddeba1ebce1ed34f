//! Numerics for the tug-of-war dynamic programming principle (DPP) of the
//! normalized p-Laplacian with 1 < p < infinity.
//!
//! The building blocks: closed-form kernel constants ([`kernel`]), a
//! singularity-aware quadrature of the directional averaging operator
//! ([`quad`]), a fixed-point solver for the DPP with collar boundary data
//! ([`solver`]), Pucci-type extremal operators ([`extremal`]), a Monte Carlo
//! simulator of the underlying two-player game ([`game`]), and harnesses
//! that measure the asymptotic expansion, Hölder regularity and vanishing
//! step-size convergence ([`harness`]).

pub mod domain;
pub mod error;
pub mod extremal;
pub mod field;
pub mod game;
mod gamma;
pub mod harness;
pub mod geometry;
pub mod kernel;
pub mod mc;
pub mod problem;
pub mod quad;
pub mod solver;

pub use domain::{build_grid, DomainSpec, Shape};
pub use error::{Error, Result};
pub use extremal::{
    decomposition_density, pucci_minus, pucci_plus, second_difference,
    verify_extremal_inequalities, ExtremalParams, ExtremalReport,
};
pub use field::{GridField, NodeClass};
pub use game::{
    play, sample_step, value_vs_solver, DiscrepancyReport, GameConfig, GameStats, PolicyMode,
    Strategy,
};
pub use geometry::{Direction, Point, Rotation};
pub use harness::{
    check_expansion, check_midpoint_expansion, check_normalized_limit, convergence_study,
    holder_quotient, ConvergenceConfig, ConvergenceRow, ExactCase, ExpansionReport, HolderReport,
    MidpointReport, SmoothFn,
};
pub use kernel::{gamma_constant, moment_table, monomial_integral, KernelParams, MomentTable};
pub use mc::{mc_average_oracle, mc_moment_oracle, McEstimate, MomentKind};
pub use problem::{DirectionSearch, DppProblem, ScalarField};
pub use quad::{apply, build_rule, continuity_probe, FieldRef, QuadratureRule};
pub use solver::{
    comparison_check, dpp_rhs, initial_subsolution, solve, solve_with_init, DppRhs, InitKind,
    SolveReport,
};
