//! Fixed-point solver for the DPP with collar boundary data.
//!
//! The update at an interior node is the midpoint of the directional
//! averages optimized over the unit sphere plus the scaled source:
//! `u <- (sup_z I_z u + inf_z I_z u)/2 + eps^2 f`. Iteration is Jacobi
//! (simultaneous over all interior nodes), started from the explicit
//! subsolution, so the iterates increase monotonically and the sup-norm
//! residual decays geometrically.
//!
//! Performance rests on translation invariance: on a uniform lattice the
//! quadrature-plus-interpolation of `I_z u` at a node is one fixed stencil of
//! lattice offsets per direction, shared by all nodes. The solver precomputes
//! a ring of stencil directions (an antipodally closed Fibonacci set for
//! N = 3), scans coarse directions, and refines the extrema on the ring with
//! iterated parabolic steps. Stencil weights carry a least-squares moment
//! correction that makes the discrete average exact on quadratic fields,
//! which removes the systematic interpolation bias that would otherwise be
//! amplified by the eps^-2 exit time of the iteration.

use rayon::prelude::*;

use crate::domain::build_grid;
use crate::error::{Error, Result};
use crate::field::{GridField, NodeClass};
use crate::geometry::{fibonacci_sphere, Direction, Rotation};
use crate::kernel::KernelParams;
use crate::problem::{DirectionSearch, DppProblem};
use crate::quad::{apply, build_rule, FieldRef, QuadratureRule};

/// Tolerance on the per-iteration signed residual below which the monotone
/// flag is withdrawn.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// How a solve was initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// The explicit subsolution `C(|x|^2 - R^2) + eps^2 f`.
    Subsolution,
    /// The boundary datum evaluated on the whole grid.
    BoundaryExtension,
}

/// Output of the pointwise DPP right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct DppRhs {
    pub value: f64,
    pub sup: f64,
    pub inf: f64,
    pub argmax: Direction,
    pub argmin: Direction,
}

/// Everything a solve produces: the solution field, the iteration history and
/// the diagnostic flags, plus the optimizing directions per interior node
/// for reuse by game strategies.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    pub monotone_ok: bool,
    /// Most negative per-node increment seen across all iterations, and the
    /// iteration where it happened (diagnostics for the monotone flag).
    pub worst_signed_residual: f64,
    pub worst_signed_iteration: usize,
    pub apriori_bound_ok: bool,
    pub tol_used: f64,
    pub g_norm: f64,
    pub f_norm: f64,
    pub interior: Vec<usize>,
    argmax_idx: Vec<u32>,
    argmin_idx: Vec<u32>,
    directions: DirectionTable,
    policy_lookup: Vec<u32>,
}

#[derive(Debug, Clone)]
enum DirectionTable {
    Ring(usize),
    Set(Vec<Direction>),
}

impl SolveReport {
    fn direction(&self, idx: u32) -> Direction {
        match &self.directions {
            DirectionTable::Ring(k) => {
                Direction::from_angle(2.0 * std::f64::consts::PI * idx as f64 / *k as f64)
            }
            DirectionTable::Set(dirs) => dirs[idx as usize],
        }
    }

    /// Optimizing direction stored at the lattice node nearest to `x`
    /// (maximizing for `maximize = true`), if that node is interior.
    pub fn stored_direction(&self, x: &[f64], maximize: bool) -> Option<Direction> {
        let g = &self.solution;
        let mut idx = [0usize; 3];
        for d in 0..g.dim() {
            let rel = ((x[d] - g.node_position(0)[d]) / g.dx()).round();
            if rel < 0.0 {
                return None;
            }
            idx[d] = rel as usize;
            if idx[d] >= g.shape()[d] {
                return None;
            }
        }
        let flat = g.flat_index(idx);
        let slot = self.policy_lookup[flat];
        if slot == u32::MAX {
            return None;
        }
        let i = slot as usize;
        Some(self.direction(if maximize {
            self.argmax_idx[i]
        } else {
            self.argmin_idx[i]
        }))
    }

    pub fn sup_interior(&self) -> f64 {
        self.interior
            .iter()
            .map(|&i| self.solution.value(i))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The subsolution scale constant `C = 3 (sup|f| + eps^-2 sup|g|)`.
pub fn subsolution_constant(f_norm: f64, g_norm: f64, eps: f64) -> f64 {
    3.0 * (f_norm + g_norm / (eps * eps))
}

fn collar_filled_grid(problem: &DppProblem) -> Result<(GridField, Vec<usize>, Vec<f64>, f64, f64)> {
    if problem.grid_dx > problem.params.eps() / 4.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "solver grid spacing {} must not exceed eps/4 = {}",
            problem.grid_dx,
            problem.params.eps() / 4.0
        )));
    }
    let mut grid = build_grid(&problem.domain, problem.grid_dx)?;
    let mut g_norm: f64 = 0.0;
    let mut f_norm: f64 = 0.0;
    let mut interior = Vec::new();
    let mut f_vals = Vec::new();
    for i in 0..grid.len() {
        match grid.class(i) {
            NodeClass::Collar => {
                let p = grid.node_position(i);
                let v = problem.boundary.eval(&p[..grid.dim()]);
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "boundary datum not finite at {:?}",
                        &p[..grid.dim()]
                    )));
                }
                g_norm = g_norm.max(v.abs());
                grid.set_value(i, v);
            }
            NodeClass::Interior => {
                let p = grid.node_position(i);
                let v = problem.source.eval(&p[..grid.dim()]);
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "source not finite at {:?}",
                        &p[..grid.dim()]
                    )));
                }
                f_norm = f_norm.max(v.abs());
                interior.push(i);
                f_vals.push(v);
            }
            NodeClass::Exterior => {}
        }
    }
    Ok((grid, interior, f_vals, g_norm, f_norm))
}

/// The explicit subsolution on the problem grid: `C(|x|^2 - R^2) + eps^2 f`
/// in the interior with `R = sup |x|` over the collar-extended domain, the
/// boundary datum on the collar.
pub fn initial_subsolution(problem: &DppProblem) -> Result<GridField> {
    let (mut grid, interior, f_vals, g_norm, f_norm) = collar_filled_grid(problem)?;
    let eps = problem.params.eps();
    let c = subsolution_constant(f_norm, g_norm, eps);
    let r2 = problem.domain.sup_norm_extended().powi(2);
    for (slot, &i) in interior.iter().enumerate() {
        let p = grid.node_position(i);
        let x2: f64 = p[..grid.dim()].iter().map(|v| v * v).sum();
        grid.set_value(i, c * (x2 - r2) + eps * eps * f_vals[slot]);
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// stencils

struct Stencil {
    entries: Vec<(isize, f64)>,
}

impl Stencil {
    /// Caller contract: `base` is an interior node of the grid the stencil
    /// was built for; the coverage check at operator construction proves
    /// every offset lands on a covered node.
    #[inline]
    fn eval(&self, values: &[f64], base: usize) -> f64 {
        let mut acc = 0.0;
        for &(off, w) in &self.entries {
            let idx = (base as isize + off) as usize;
            debug_assert!(idx < values.len());
            acc += w * unsafe { values.get_unchecked(idx) };
        }
        acc
    }
}

/// Accumulates quadrature nodes onto lattice offsets through the multilinear
/// interpolation weights, then applies the moment correction.
fn build_stencil(
    rule: &QuadratureRule,
    z: &Direction,
    eps: f64,
    dx: f64,
    grid_shape: [usize; 3],
    c1: f64,
    p: f64,
) -> Stencil {
    let dim = rule.dim();
    let rot = Rotation::onto(z);
    let mut acc: std::collections::HashMap<[i32; 3], f64> = std::collections::HashMap::new();
    for (h, w) in rule.nodes() {
        let r = rot.apply(h);
        let mut base = [0i32; 3];
        let mut frac = [0.0; 3];
        for d in 0..dim {
            let rel = eps * r[d] / dx;
            let cell = rel.floor();
            base[d] = cell as i32;
            frac[d] = rel - cell;
        }
        for corner in 0..(1usize << dim) {
            let mut off = base;
            let mut cw = *w;
            for d in 0..dim {
                if corner >> d & 1 == 1 {
                    off[d] += 1;
                    cw *= frac[d];
                } else {
                    cw *= 1.0 - frac[d];
                }
            }
            if cw != 0.0 {
                *acc.entry(off).or_insert(0.0) += cw;
            }
        }
    }
    let mut entries: Vec<([i32; 3], f64)> = acc.into_iter().collect();
    entries.sort_by_key(|(o, _)| *o);
    moment_correct(&mut entries, z, eps, dx, dim, c1, p);
    let (nx, ny) = (grid_shape[0] as isize, grid_shape[1] as isize);
    Stencil {
        entries: entries
            .into_iter()
            .map(|(o, w)| {
                (
                    (o[2] as isize * ny + o[1] as isize) * nx + o[0] as isize,
                    w,
                )
            })
            .collect(),
    }
}

/// Least-squares weight adjustment pinning the discrete zeroth, first and
/// second moments to their closed forms, so the stencil is exact on all
/// quadratic fields. Constraint rows are scaled by powers of eps to keep the
/// normal equations well conditioned; the correction itself is O(dx^2).
fn moment_correct(
    entries: &mut [([i32; 3], f64)],
    z: &Direction,
    eps: f64,
    dx: f64,
    dim: usize,
    c1: f64,
    p: f64,
) {
    let zv = z.as_point();
    let npd = dim as f64 + p;
    // constraints: total mass, dim first moments, dim(dim+1)/2 second moments
    let m = 1 + dim + dim * (dim + 1) / 2;
    let n = entries.len();
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let mut target = vec![0.0; m];
    target[0] = 1.0;
    for d in 0..dim {
        target[1 + d] = c1 * zv[d];
    }
    let mut r = 1 + dim;
    let mut pairs = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            let i_ab = if a == b { 1.0 } else { 0.0 };
            target[r] = (i_ab + (p - 2.0) * zv[a] * zv[b]) / npd;
            pairs.push((a, b));
            r += 1;
        }
    }
    for (j, (o, _)) in entries.iter().enumerate() {
        rows[0][j] = 1.0;
        for d in 0..dim {
            rows[1 + d][j] = o[d] as f64 * dx / eps;
        }
        for (k, (a, b)) in pairs.iter().enumerate() {
            rows[1 + dim + k][j] =
                (o[*a] as f64 * dx / eps) * (o[*b] as f64 * dx / eps);
        }
    }
    // residual r = target - A w
    let mut resid = target;
    for (i, row) in rows.iter().enumerate() {
        for (j, (_, w)) in entries.iter().enumerate() {
            resid[i] -= row[j] * w;
        }
    }
    // delta = A^T (A A^T)^{-1} resid
    let mut gram = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in 0..m {
            gram[i][k] = rows[i].iter().zip(rows[k].iter()).map(|(a, b)| a * b).sum();
        }
    }
    if let Some(lam) = solve_dense(&mut gram, &resid) {
        for (j, (_, w)) in entries.iter_mut().enumerate() {
            let mut dj = 0.0;
            for i in 0..m {
                dj += rows[i][j] * lam[i];
            }
            *w += dj;
        }
    }
}

/// Gaussian elimination with partial pivoting for the small normal systems.
fn solve_dense(a: &mut [Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= a[col][col];
        for row in 0..col {
            x[row] -= a[row][col] * x[col];
            a[row][col] = 0.0;
        }
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// direction table for the grid solver

struct GridOperator {
    stencils: Vec<Stencil>,
    dirs: Vec<Direction>,
    ring: bool,
    ring_len: usize,
    coarse: usize,
    stride: usize,
}

/// A run of interior nodes with consecutive flat indices inside one lattice
/// row. The coarse scan streams each stencil entry over a whole segment, so
/// the inner loop reads and writes contiguous memory.
#[derive(Debug, Clone, Copy)]
struct Segment {
    base: usize,
    len: usize,
}

fn row_segments(interior: &[usize], nx: usize) -> Vec<Segment> {
    let mut segs: Vec<Segment> = Vec::new();
    for &flat in interior {
        match segs.last_mut() {
            Some(seg) if seg.base + seg.len == flat && flat % nx != 0 => {
                seg.len += 1;
            }
            _ => segs.push(Segment { base: flat, len: 1 }),
        }
    }
    segs
}

/// Coarse extrema per node: (max value, min value, argmax, argmin).
type CoarseOut = (f64, f64, u32, u32);

impl GridOperator {
    fn build(problem: &DppProblem, grid: &GridField, rule: &QuadratureRule) -> Self {
        let dim = problem.domain.dim;
        let eps = problem.params.eps();
        let dx = grid.dx();
        let c1 = problem.params.first_moment();
        let p = problem.params.p();
        if dim == 2 {
            let coarse = problem.search.coarse;
            let stride = (problem.search.ring / coarse).max(1);
            let ring_len = coarse * stride;
            let dirs: Vec<Direction> = (0..ring_len)
                .map(|k| {
                    Direction::from_angle(2.0 * std::f64::consts::PI * k as f64 / ring_len as f64)
                })
                .collect();
            let shape = grid.shape();
            let stencils: Vec<Stencil> = dirs
                .par_iter()
                .map(|z| build_stencil(rule, z, eps, dx, shape, c1, p))
                .collect();
            Self {
                stencils,
                dirs,
                ring: true,
                ring_len,
                coarse,
                stride,
            }
        } else {
            let dirs = fibonacci_sphere(problem.search.coarse);
            let shape = grid.shape();
            let stencils: Vec<Stencil> = dirs
                .par_iter()
                .map(|z| build_stencil(rule, z, eps, dx, shape, c1, p))
                .collect();
            Self {
                ring_len: dirs.len(),
                coarse: dirs.len(),
                stride: 1,
                stencils,
                dirs,
                ring: false,
            }
        }
    }

    #[inline]
    fn eval(&self, values: &[f64], base: usize, k: usize) -> f64 {
        self.stencils[k].eval(values, base)
    }

    /// Streams every coarse direction over a segment, tracking per-node
    /// extrema. `acc` is caller-provided scratch of at least `seg.len`.
    fn coarse_scan_segment(
        &self,
        values: &[f64],
        seg: &Segment,
        acc: &mut [f64],
        out: &mut [CoarseOut],
    ) {
        debug_assert_eq!(out.len(), seg.len);
        for o in out.iter_mut() {
            *o = (f64::NEG_INFINITY, f64::INFINITY, 0, 0);
        }
        let n_coarse = if self.ring { self.coarse } else { self.ring_len };
        for c in 0..n_coarse {
            let k = c * self.stride;
            let acc = &mut acc[..seg.len];
            acc.fill(0.0);
            for &(off, w) in &self.stencils[k].entries {
                let start = (seg.base as isize + off) as usize;
                let src = &values[start..start + seg.len];
                for (a, v) in acc.iter_mut().zip(src) {
                    *a += w * v;
                }
            }
            for (o, &v) in out.iter_mut().zip(acc.iter()) {
                if v > o.0 {
                    o.0 = v;
                    o.2 = k as u32;
                }
                if v < o.1 {
                    o.1 = v;
                    o.3 = k as u32;
                }
            }
        }
    }

    #[inline]
    fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.ring_len as isize) as usize
    }

    /// Two-round parabolic polish of an extremum on the ring. `start` is the
    /// coarse argbest, so its +-stride neighbors are coarse samples and
    /// cannot beat it; the quadratic vertex of that triple lands within a
    /// ring step for smooth profiles, and a second triple at spacing 2
    /// polishes it.
    fn refine_ring(&self, values: &[f64], base: usize, start: usize, sign: f64) -> (usize, f64) {
        let mut c = start;
        let mut fc = sign * self.eval(values, base, c);
        for s in [self.stride as isize, 2] {
            let im = self.wrap(c as isize - s);
            let ip = self.wrap(c as isize + s);
            let fm = sign * self.eval(values, base, im);
            let fp = sign * self.eval(values, base, ip);
            if fm > fc {
                c = im;
                fc = fm;
            }
            if fp > fc {
                c = ip;
                fc = fp;
            }
            let denom = fm - 2.0 * fc + fp;
            if denom < 0.0 {
                let delta = 0.5 * s as f64 * (fm - fp) / denom;
                let cand = self.wrap(c as isize + delta.round() as isize);
                if cand != c && cand != im && cand != ip {
                    let fcand = sign * self.eval(values, base, cand);
                    if fcand > fc {
                        c = cand;
                        fc = fcand;
                    }
                }
            }
            if s <= 1 {
                break;
            }
        }
        (c, sign * fc)
    }

    /// Polishes the coarse extrema at one node and applies the sticky probes
    /// (the previous optimizing indices are always evaluated, so a found
    /// extremum is never lost while the field increases).
    fn refine_extrema(
        &self,
        values: &[f64],
        base: usize,
        coarse: CoarseOut,
        prev: (u32, u32),
    ) -> (f64, f64, u32, u32) {
        if !self.ring {
            // the coarse scan was already global over the direction set
            return (coarse.0, coarse.1, coarse.2, coarse.3);
        }
        let (max_idx, sup) = self.refine_ring(values, base, coarse.2 as usize, 1.0);
        let (min_idx, inf) = self.refine_ring(values, base, coarse.3 as usize, -1.0);
        let prev_sup = self.eval(values, base, prev.0 as usize);
        let prev_inf = self.eval(values, base, prev.1 as usize);
        let (sup, max_idx) = if prev_sup > sup {
            (prev_sup, prev.0 as usize)
        } else {
            (sup, max_idx)
        };
        let (inf, min_idx) = if prev_inf < inf {
            (prev_inf, prev.1 as usize)
        } else {
            (inf, min_idx)
        };
        (sup, inf, max_idx as u32, min_idx as u32)
    }
}

// ---------------------------------------------------------------------------
// the iteration

/// Runs the Jacobi value iteration and always returns the report; the
/// `converged` flag records whether the tolerance was met within `max_iter`.
pub fn solve_with_init(problem: &DppProblem, init: InitKind) -> Result<SolveReport> {
    let (mut grid, interior, f_vals, g_norm, f_norm) = collar_filled_grid(problem)?;
    let eps = problem.params.eps();
    let eps2 = eps * eps;

    match init {
        InitKind::Subsolution => {
            let c = subsolution_constant(f_norm, g_norm, eps);
            let r2 = problem.domain.sup_norm_extended().powi(2);
            for (slot, &i) in interior.iter().enumerate() {
                let p = grid.node_position(i);
                let x2: f64 = p[..grid.dim()].iter().map(|v| v * v).sum();
                grid.set_value(i, c * (x2 - r2) + eps2 * f_vals[slot]);
            }
        }
        InitKind::BoundaryExtension => {
            for &i in &interior {
                let p = grid.node_position(i);
                grid.set_value(i, problem.boundary.eval(&p[..grid.dim()]));
            }
        }
    }

    let rule = build_rule(&problem.params, problem.quad_counts.0, problem.quad_counts.1)?;
    let op = GridOperator::build(problem, &grid, &rule);

    let tol = if problem.tol > 0.0 {
        problem.tol
    } else {
        1e-9 * g_norm.max(1.0)
    };

    let mut cur: Vec<f64> = grid.values().to_vec();
    // exterior NaNs never enter a stencil, but keep the buffer finite so that
    // accidental reads poison results visibly rather than silently
    let mut next = cur.clone();
    let mut states: Vec<(u32, u32)> = vec![(0, 0); interior.len()];
    let mut new_vals: Vec<(f64, u32, u32)> = vec![(0.0, 0, 0); interior.len()];
    let mut coarse_out: Vec<CoarseOut> = vec![(0.0, 0.0, 0, 0); interior.len()];

    let segments = row_segments(&interior, grid.shape()[0]);
    let max_seg = segments.iter().map(|s| s.len).max().unwrap_or(1);
    // split the coarse output into per-segment slices once per iteration
    fn split_by_segments<'a, T>(mut buf: &'a mut [T], segs: &[Segment]) -> Vec<&'a mut [T]> {
        let mut out = Vec::with_capacity(segs.len());
        for s in segs {
            let (a, rest) = buf.split_at_mut(s.len);
            out.push(a);
            buf = rest;
        }
        out
    }

    let mut history = Vec::new();
    let mut monotone_ok = true;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut worst_signed = f64::INFINITY;
    let mut worst_signed_iter = 0usize;

    while iterations < problem.max_iter {
        // phase 1: full coarse scan, streamed per row segment
        let slices = split_by_segments(&mut coarse_out, &segments);
        segments
            .par_iter()
            .zip(slices)
            .for_each_init(
                || vec![0.0f64; max_seg],
                |acc, (seg, out)| op.coarse_scan_segment(&cur, seg, acc, out),
            );
        // phase 2: per-node refinement and sticky probes
        new_vals
            .par_iter_mut()
            .enumerate()
            .for_each(|(slot, out)| {
                let base = interior[slot];
                let (sup, inf, mi, si) =
                    op.refine_extrema(&cur, base, coarse_out[slot], states[slot]);
                *out = (0.5 * (sup + inf) + eps2 * f_vals[slot], mi, si);
            });

        let mut residual = 0.0f64;
        let mut signed_min = f64::INFINITY;
        for (slot, &i) in interior.iter().enumerate() {
            let (v, mi, si) = new_vals[slot];
            let d = v - cur[i];
            residual = residual.max(d.abs());
            signed_min = signed_min.min(d);
            next[i] = v;
            states[slot] = (mi, si);
        }
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
        history.push(residual);
        if signed_min < worst_signed {
            worst_signed = signed_min;
            worst_signed_iter = iterations;
        }
        if init == InitKind::Subsolution && signed_min < -MONOTONE_SLACK {
            monotone_ok = false;
        }

        if residual == 0.0 || residual <= tol * 1e-3 {
            converged = true;
            break;
        }
        if residual <= tol {
            if !problem.strict_limit {
                converged = true;
                break;
            }
            if history.len() > 16 {
                // stop only when the estimated distance to the fixed point
                // is half the tolerance, so independent runs land within tol
                // of each other
                let r16 = history[history.len() - 17];
                if r16 > 0.0 {
                    let rho = (residual / r16).powf(1.0 / 16.0);
                    if rho < 1.0 && residual * rho / (1.0 - rho) <= 0.5 * tol {
                        converged = true;
                        break;
                    }
                }
            }
        }
    }

    for &i in &interior {
        grid.set_value(i, cur[i]);
    }

    let final_residual = history.last().copied().unwrap_or(0.0);
    let sup_interior = interior
        .iter()
        .map(|&i| grid.value(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let apriori_bound_ok = check_apriori_bound(
        sup_interior,
        g_norm,
        f_norm,
        eps,
        problem.domain.sup_norm_extended(),
        tol,
    );

    let mut policy_lookup = vec![u32::MAX; grid.len()];
    for (slot, &i) in interior.iter().enumerate() {
        policy_lookup[i] = slot as u32;
    }

    Ok(SolveReport {
        solution: grid,
        iterations,
        residual_history: history,
        final_residual,
        converged,
        monotone_ok,
        worst_signed_residual: if worst_signed.is_finite() { worst_signed } else { 0.0 },
        worst_signed_iteration: worst_signed_iter,
        apriori_bound_ok,
        tol_used: tol,
        g_norm,
        f_norm,
        interior,
        argmax_idx: states.iter().map(|s| s.0).collect(),
        argmin_idx: states.iter().map(|s| s.1).collect(),
        directions: if op.ring {
            DirectionTable::Ring(op.ring_len)
        } else {
            DirectionTable::Set(op.dirs.clone())
        },
        policy_lookup,
    })
}

/// `sup u <= sup|g| + 2^{2k+1} eps^2 sup|f|` with `k = ceil(4 R^2/eps^2)`,
/// compared in log space because the constant overflows for small eps.
fn check_apriori_bound(
    sup_u: f64,
    g_norm: f64,
    f_norm: f64,
    eps: f64,
    r_ext: f64,
    tol: f64,
) -> bool {
    let excess = sup_u - g_norm;
    if excess <= 10.0 * tol.max(1e-12) {
        return true;
    }
    if f_norm == 0.0 {
        return false;
    }
    let k = (4.0 * r_ext * r_ext / (eps * eps)).ceil();
    excess.log2() <= 2.0 * k + 1.0 + (eps * eps * f_norm).log2()
}

/// Solves from the subsolution and requires convergence.
pub fn solve(problem: &DppProblem) -> Result<SolveReport> {
    let report = solve_with_init(problem, InitKind::Subsolution)?;
    if !report.converged {
        return Err(Error::NotConverged {
            iterations: report.iterations,
            residual: report.final_residual,
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// pointwise right-hand side

/// The DPP right-hand side at an arbitrary point: coarse scan over
/// directions followed by golden-section refinement (N = 2) or Fibonacci
/// scan plus local parabolic refinement in tangent coordinates (N = 3),
/// evaluated with the full quadrature at every probe.
pub fn dpp_rhs(field: FieldRef, x: &[f64], problem: &DppProblem) -> Result<DppRhs> {
    let rule = build_rule(&problem.params, problem.quad_counts.0, problem.quad_counts.1)?;
    dpp_rhs_with_rule(field, x, problem, &rule)
}

pub fn dpp_rhs_with_rule(
    field: FieldRef,
    x: &[f64],
    problem: &DppProblem,
    rule: &QuadratureRule,
) -> Result<DppRhs> {
    let params = &problem.params;
    let (sup, argmax) = optimize_direction(field, x, params, &problem.search, rule, true)?;
    let (inf, argmin) = optimize_direction(field, x, params, &problem.search, rule, false)?;
    let fx = problem.source.eval(x);
    let eps2 = params.eps() * params.eps();
    Ok(DppRhs {
        value: 0.5 * (sup + inf) + eps2 * fx,
        sup,
        inf,
        argmax,
        argmin,
    })
}

/// Optimizes the directional average over |z| = 1 at an arbitrary point.
pub(crate) fn optimize_direction(
    field: FieldRef,
    x: &[f64],
    params: &KernelParams,
    search: &DirectionSearch,
    rule: &QuadratureRule,
    maximize: bool,
) -> Result<(f64, Direction)> {
    let sign = if maximize { 1.0 } else { -1.0 };
    let dim = params.dim();
    let m = search.coarse;
    if dim == 2 {
        let mut best_k = 0usize;
        let mut best = f64::NEG_INFINITY;
        for k in 0..m {
            let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            let v = sign * apply(rule, field, x, &Direction::from_angle(th), params)?;
            if v > best {
                best = v;
                best_k = k;
            }
        }
        let step = 2.0 * std::f64::consts::PI / m as f64;
        let center = 2.0 * std::f64::consts::PI * best_k as f64 / m as f64;
        let (mut lo, mut hi) = (center - step, center + step);
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut t1 = hi - phi * (hi - lo);
        let mut t2 = lo + phi * (hi - lo);
        let mut f1 = sign * apply(rule, field, x, &Direction::from_angle(t1), params)?;
        let mut f2 = sign * apply(rule, field, x, &Direction::from_angle(t2), params)?;
        while hi - lo > search.refine_tol {
            if f1 < f2 {
                lo = t1;
                t1 = t2;
                f1 = f2;
                t2 = lo + phi * (hi - lo);
                f2 = sign * apply(rule, field, x, &Direction::from_angle(t2), params)?;
            } else {
                hi = t2;
                t2 = t1;
                f2 = f1;
                t1 = hi - phi * (hi - lo);
                f1 = sign * apply(rule, field, x, &Direction::from_angle(t1), params)?;
            }
        }
        let theta = 0.5 * (lo + hi);
        let z = Direction::from_angle(theta);
        let v = apply(rule, field, x, &z, params)?;
        let vb = sign * v;
        if best > vb {
            let z0 = Direction::from_angle(center);
            Ok((sign * best, z0))
        } else {
            Ok((v, z))
        }
    } else {
        let dirs = fibonacci_sphere(m);
        let mut best = f64::NEG_INFINITY;
        let mut best_dir = dirs[0];
        for d in &dirs {
            let v = sign * apply(rule, field, x, d, params)?;
            if v > best {
                best = v;
                best_dir = *d;
            }
        }
        // parabolic refinement in the tangent plane
        let mut alpha = (4.0 * std::f64::consts::PI / m as f64).sqrt();
        let mut c = best_dir;
        let mut fc = best;
        while alpha > search.refine_tol {
            let frame = Rotation::onto(&c);
            let mut moved = [0.0f64; 2];
            for (axis, slot) in [(1usize, 0usize), (2, 1)] {
                let mut e = [0.0; 3];
                e[axis] = 1.0;
                let t = frame.apply(&e);
                let dp = tilt(&c, &t, alpha);
                let dm = tilt(&c, &t, -alpha);
                let fp = sign * apply(rule, field, x, &dp, params)?;
                let fm = sign * apply(rule, field, x, &dm, params)?;
                let denom = fp - 2.0 * fc + fm;
                let delta = if denom < 0.0 {
                    (0.5 * alpha * (fm - fp) / denom).clamp(-alpha, alpha)
                } else if fp > fm {
                    alpha
                } else {
                    -alpha
                };
                moved[slot] = delta;
            }
            let frame = Rotation::onto(&c);
            let mut e1 = [0.0; 3];
            e1[1] = 1.0;
            let mut e2 = [0.0; 3];
            e2[2] = 1.0;
            let t1v = frame.apply(&e1);
            let t2v = frame.apply(&e2);
            let cand_v = [
                c.as_point()[0] + moved[0] * t1v[0] + moved[1] * t2v[0],
                c.as_point()[1] + moved[0] * t1v[1] + moved[1] * t2v[1],
                c.as_point()[2] + moved[0] * t1v[2] + moved[1] * t2v[2],
            ];
            if let Ok(cand) = Direction::from_vector(3, &cand_v) {
                let fcand = sign * apply(rule, field, x, &cand, params)?;
                if fcand > fc {
                    c = cand;
                    fc = fcand;
                }
            }
            alpha *= 0.25;
        }
        Ok((sign * fc, c))
    }
}

fn tilt(c: &Direction, tangent: &crate::geometry::Point, alpha: f64) -> Direction {
    let v = [
        c.as_point()[0] + alpha * tangent[0],
        c.as_point()[1] + alpha * tangent[1],
        c.as_point()[2] + alpha * tangent[2],
    ];
    Direction::from_vector(3, &v).unwrap()
}

// ---------------------------------------------------------------------------
// comparison

/// Comparison check: both problems solved, identical except the boundary
/// data, and `g_u <= g_v` on the collar. Returns whether `u <= v + slack` at
/// every interior node.
pub fn comparison_check(
    problem_u: &DppProblem,
    problem_v: &DppProblem,
    u: &SolveReport,
    v: &SolveReport,
    slack: f64,
) -> Result<bool> {
    if !problem_u.same_except_boundary(problem_v) {
        return Err(Error::MismatchedProblems(
            "problems differ beyond the boundary data".into(),
        ));
    }
    if u.solution.shape() != v.solution.shape() || u.interior != v.interior {
        return Err(Error::MismatchedProblems("grids differ".into()));
    }
    for i in u.solution.collar_nodes() {
        if u.solution.value(i) > v.solution.value(i) + 1e-12 {
            return Err(Error::MismatchedProblems(
                "boundary data are not ordered g_u <= g_v".into(),
            ));
        }
    }
    Ok(u
        .interior
        .iter()
        .all(|&i| u.solution.value(i) <= v.solution.value(i) + slack))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::kernel::KernelParams;
    use crate::problem::{DirectionSearch, ScalarField};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Small, fast ball problem used by most tests.
    fn cheap_problem(p: f64, eps: f64, source: ScalarField, boundary: ScalarField) -> DppProblem {
        let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, eps).unwrap();
        let params = KernelParams::new(2, p, eps).unwrap();
        DppProblem::new(dom, params, source, boundary, eps / 4.0)
            .unwrap()
            .with_search(DirectionSearch {
                coarse: 32,
                refine_tol: 1e-7,
                ring: 1024,
            })
            .with_quad_counts(16, 16)
    }

    #[test]
    fn dpp_rhs_constant_field() {
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Zero);
        let rhs = dpp_rhs(FieldRef::Func(&|_| 3.25), &[0.1, -0.2], &problem).unwrap();
        assert_abs_diff_eq!(rhs.value, 3.25, epsilon = 1e-10);
    }

    #[test]
    fn dpp_rhs_linear_field_cancels_and_aligns() {
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Zero);
        let a = [0.8, -0.6];
        let u = move |x: &[f64]| a[0] * x[0] + a[1] * x[1];
        let x = [0.2, 0.1];
        let rhs = dpp_rhs(FieldRef::Func(&u), &x, &problem).unwrap();
        // sup and inf first-order terms cancel exactly
        assert_abs_diff_eq!(rhs.value, u(&x), epsilon = 1e-9);
        let opt = Direction::from_vector(2, &a).unwrap();
        assert!(rhs.argmax.angle_to(&opt) < 1e-5, "{:?}", rhs.argmax);
        assert!(rhs.argmin.angle_to(&opt.negated()) < 1e-5);
    }

    #[test]
    fn dpp_rhs_quadratic_at_origin() {
        for p in [1.25, 1.5, 2.0, 3.0] {
            let problem = cheap_problem(p, 0.25, ScalarField::Zero, ScalarField::Zero);
            let u = |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>();
            let rhs = dpp_rhs(FieldRef::Func(&u), &[0.0, 0.0], &problem).unwrap();
            let expected = 0.0625 * problem.params.second_moment();
            // cheap 16x16 rule here; the default 32x32 rule meets 1e-10
            assert_abs_diff_eq!(rhs.value, expected, epsilon = 5e-8);
        }
    }

    #[test]
    fn dpp_rhs_sup_dominates_random_directions() {
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Zero);
        let u = |x: &[f64]| (x[0] * 1.3).sin() + 0.5 * (x[1] * 2.0).cos() + 0.2 * x[0] * x[1];
        let x = [0.15, -0.1];
        let rule = build_rule(&problem.params, 16, 16).unwrap();
        let rhs = dpp_rhs_with_rule(FieldRef::Func(&u), &x, &problem, &rule).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..50 {
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let v = apply(
                &rule,
                FieldRef::Func(&u),
                &x,
                &Direction::from_angle(th),
                &problem.params,
            )
            .unwrap();
            assert!(rhs.sup >= v - 1e-9, "sup {} < I^z {}", rhs.sup, v);
            assert!(rhs.inf <= v + 1e-9);
        }
    }

    #[test]
    fn subsolution_constant_example() {
        // f = 0, g = 1, ball R = 1, eps = 0.1: C = 3 * (0 + 100 * 1) = 300 and
        // u0(0) = -C * R_ext^2 with R_ext = 1.1, i.e. -363.
        assert_abs_diff_eq!(subsolution_constant(0.0, 1.0, 0.1), 300.0, epsilon = 1e-12);
        let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, 0.1).unwrap();
        let params = KernelParams::new(2, 1.5, 0.1).unwrap();
        let problem = DppProblem::new(
            dom,
            params,
            ScalarField::Zero,
            ScalarField::Constant(1.0),
            0.025,
        )
        .unwrap();
        let u0 = initial_subsolution(&problem).unwrap();
        // origin node exists in this grid
        let mut found = false;
        for i in u0.interior_nodes() {
            let pos = u0.node_position(i);
            if pos[0].abs() < 1e-9 && pos[1].abs() < 1e-9 {
                assert_abs_diff_eq!(u0.value(i), -300.0 * 1.21, epsilon = 1e-9);
                found = true;
            }
        }
        assert!(found, "origin node missing from the lattice");
    }

    #[test]
    fn subsolution_is_zero_for_zero_data() {
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Zero);
        let u0 = initial_subsolution(&problem).unwrap();
        for i in u0.interior_nodes() {
            assert_eq!(u0.value(i), 0.0);
        }
    }

    #[test]
    fn subsolution_inequality_at_random_nodes() {
        let problem = cheap_problem(
            1.5,
            0.25,
            ScalarField::Zero,
            ScalarField::Linear([0.7, -0.2, 0.0]),
        );
        let u0 = initial_subsolution(&problem).unwrap();
        let interior = u0.interior_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rule = build_rule(&problem.params, 16, 16).unwrap();
        for _ in 0..100 {
            let i = interior[rng.gen_range(0..interior.len())];
            let x = u0.node_position(i);
            let rhs =
                dpp_rhs_with_rule(FieldRef::Grid(&u0), &x[..2], &problem, &rule).unwrap();
            assert!(
                u0.value(i) <= rhs.value + 1e-3,
                "subsolution inequality fails at {:?}: {} vs {}",
                &x[..2],
                u0.value(i),
                rhs.value
            );
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Constant(2.5));
        // boundary-extension start: converges in one iteration
        let report = solve_with_init(&problem, InitKind::BoundaryExtension).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        for &i in &report.interior {
            assert_abs_diff_eq!(report.solution.value(i), 2.5, epsilon = 1e-12);
        }
        // subsolution start reaches the same constant
        let report = solve(&problem).unwrap();
        assert!(report.converged && report.monotone_ok, "{:?}", report.iterations);
        for &i in &report.interior {
            assert_abs_diff_eq!(report.solution.value(i), 2.5, epsilon = 1e-6);
        }
        assert!(report.apriori_bound_ok);
    }

    #[test]
    fn linear_solution_recovered() {
        let a = [0.9, -0.4, 0.0];
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Linear(a));
        let report = solve(&problem).unwrap();
        assert!(report.converged && report.monotone_ok);
        let mut worst = 0.0f64;
        for &i in &report.interior {
            let x = report.solution.node_position(i);
            let exact = a[0] * x[0] + a[1] * x[1];
            worst = worst.max((report.solution.value(i) - exact).abs());
        }
        assert!(worst < 1e-5, "sup error {worst}");
        assert!(report.apriori_bound_ok);
    }

    #[test]
    fn quadratic_solution_recovered() {
        let p = 1.5;
        let c2 = (2.0 + p - 2.0) / (2.0 + p);
        let problem = cheap_problem(
            p,
            0.25,
            ScalarField::Constant(-c2),
            ScalarField::SquaredNorm,
        );
        let report = solve(&problem).unwrap();
        assert!(report.converged && report.monotone_ok);
        let mut worst = 0.0f64;
        for &i in &report.interior {
            let x = report.solution.node_position(i);
            let exact = x[0] * x[0] + x[1] * x[1];
            worst = worst.max((report.solution.value(i) - exact).abs());
        }
        assert!(worst < 1e-5, "sup error {worst}");
    }

    #[test]
    fn comparison_and_uniqueness() {
        let p0 = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Constant(0.0));
        let p1 = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Constant(1.0));
        let r0 = solve(&p0).unwrap();
        let r1 = solve(&p1).unwrap();
        assert!(comparison_check(&p0, &p1, &r0, &r1, 1e-8).unwrap());
        // v - u <= 1 everywhere (comparison applied twice)
        for &i in &r0.interior {
            let d = r1.solution.value(i) - r0.solution.value(i);
            assert!(d >= -1e-8 && d <= 1.0 + 1e-8);
        }
        // identical data from two initializations agree within 10 tol
        let a = ScalarField::Linear([0.5, 0.3, 0.0]);
        let pl = cheap_problem(1.5, 0.25, ScalarField::Zero, a);
        let from_sub = solve_with_init(&pl, InitKind::Subsolution).unwrap();
        let from_ext = solve_with_init(&pl, InitKind::BoundaryExtension).unwrap();
        let mut gap = 0.0f64;
        for &i in &from_sub.interior {
            gap = gap.max((from_sub.solution.value(i) - from_ext.solution.value(i)).abs());
        }
        assert!(
            gap <= 10.0 * from_sub.tol_used,
            "initialization gap {gap} vs tol {}",
            from_sub.tol_used
        );
        // mismatched problems are rejected
        let p2 = cheap_problem(1.6, 0.25, ScalarField::Zero, ScalarField::Constant(1.0));
        let r2 = solve(&p2).unwrap();
        assert!(matches!(
            comparison_check(&p0, &p2, &r0, &r2, 1e-8),
            Err(Error::MismatchedProblems(_))
        ));
    }

    #[test]
    fn unconverged_run_is_reported_honestly() {
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Constant(1.0))
            .with_max_iter(3);
        let report = solve_with_init(&problem, InitKind::Subsolution).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 3);
        assert_eq!(report.residual_history.len(), 3);
        assert!(matches!(solve(&problem), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn solver_grid_spacing_guard() {
        let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, 0.2).unwrap();
        let params = KernelParams::new(2, 1.5, 0.2).unwrap();
        let problem = DppProblem::new(
            dom,
            params,
            ScalarField::Zero,
            ScalarField::Zero,
            0.1, // eps/2 > eps/4
        )
        .unwrap();
        assert!(matches!(
            solve(&problem),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn stored_policy_directions_are_usable() {
        let a = [1.0, 0.0, 0.0];
        let problem = cheap_problem(1.5, 0.25, ScalarField::Zero, ScalarField::Linear(a));
        let report = solve(&problem).unwrap();
        let d = report.stored_direction(&[0.3, 0.1], true).unwrap();
        let opt = Direction::from_vector(2, &a[..2]).unwrap();
        assert!(d.angle_to(&opt) < 0.05, "angle {}", d.angle_to(&opt));
        let dmin = report.stored_direction(&[0.3, 0.1], false).unwrap();
        assert!(dmin.angle_to(&opt.negated()) < 0.05);
        assert!(report.stored_direction(&[5.0, 5.0], true).is_none());
    }
}
