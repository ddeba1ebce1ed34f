//! Quadrature for the kernel-weighted ball average.
//!
//! In the canonical frame (direction = e1) the average of `u` over the unit
//! ball with weight `(h1)_+^{p-2}` splits into an axial integral over
//! `t = h1 in (0,1)` and a cross-sectional integral over the (N-1)-ball of
//! radius `sqrt(1-t^2)`. For `1 < p < 2` the axial kernel `t^{p-2}` is
//! singular at 0; the substitution `t = s^{1/(p-1)}` absorbs it exactly
//! (`t^{p-2} dt = ds/(p-1)`), leaving a smooth integrand for Gauss-Legendre.
//! For `p >= 2` the axial variable is integrated directly. Weights are
//! normalized so the rule returns exactly 1 on constants, which makes it
//! compute the gamma-normalized average.

use crate::error::{Error, Result};
use crate::field::GridField;
use crate::geometry::{point_from, Direction, Point, Rotation};
use crate::kernel::KernelParams;

pub const DEFAULT_AXIAL: usize = 32;
pub const DEFAULT_CROSS: usize = 32;

/// A field the averaging operator can read: a lattice sample (interpolated
/// multilinearly) or a callable. Callables bypass interpolation, which keeps
/// discretization error out of the expansion harness.
#[derive(Clone, Copy)]
pub enum FieldRef<'a> {
    Grid(&'a GridField),
    Func(&'a dyn Fn(&[f64]) -> f64),
}

impl<'a> FieldRef<'a> {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            FieldRef::Grid(g) => g.interpolate(x),
            FieldRef::Func(f) => Ok(f(x)),
        }
    }
}

/// Precomputed nodes and weights for the canonical frame z = e1. Rotating the
/// nodes onto an arbitrary unit direction happens at application time.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    p: f64,
    axial_nodes: Vec<(f64, f64)>,
    cross_nodes: Vec<(Vec<f64>, f64)>,
    /// flattened canonical unit-ball nodes with normalized weights
    nodes: Vec<(Point, f64)>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Axial nodes `t in (0,1)` with their axial weights.
    pub fn axial_nodes(&self) -> &[(f64, f64)] {
        &self.axial_nodes
    }

    /// Canonical cross-section nodes in the unit (N-1)-ball with weights.
    pub fn cross_nodes(&self) -> &[(Vec<f64>, f64)] {
        &self.cross_nodes
    }

    pub fn total_node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Canonical unit-ball nodes (first coordinate is the axial one) and the
    /// normalized weights; weights are positive and sum to exactly 1.
    pub fn nodes(&self) -> &[(Point, f64)] {
        &self.nodes
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, dpn) = legendre(n, x);
            let dx = pn / dpn;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dpn) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| ((x + 1.0) / 2.0, w / 2.0))
        .collect()
}

/// Builds the canonical rule for one `(N, p)` pair.
pub fn build_rule(
    params: &KernelParams,
    axial_count: usize,
    cross_count: usize,
) -> Result<QuadratureRule> {
    let dim = params.dim();
    let p = params.p();
    if dim > 3 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if axial_count < 4 || cross_count < 4 {
        return Err(Error::InvalidParameter(format!(
            "node counts must be at least 4, got {axial_count} x {cross_count}"
        )));
    }

    // Two panels. Left (t in (0, 1/2]): the power substitution t = s^q with
    // q = k/(p-1), k = max(1, ceil(3(p-1))), absorbs the kernel exactly:
    // t^{p-2} dt = (k/(p-1)) s^{k-1} ds with integer k-1, and q >= 3 keeps
    // the composed integrand effectively smooth for fractional p. For
    // p <= 3/2 this is exactly t = s^{1/(p-1)}. Right (t in [1/2, 1)): the
    // substitution t = sqrt(1-v^2) removes the square-root endpoint
    // singularity of the 2-D cross-section factor; the axial weight becomes
    // t^{p-3} v against the assembled (1-t^2)^{(N-1)/2} section factor.
    let per_panel = axial_count.div_ceil(2).max(4);
    let mut axial_nodes: Vec<(f64, f64)> = Vec::with_capacity(2 * per_panel);
    let k = (3.0 * (p - 1.0)).ceil().max(1.0);
    let q = k / (p - 1.0);
    let s_max = 0.5f64.powf(1.0 / q);
    for (x, w) in gauss_legendre_01(per_panel) {
        let s = x * s_max;
        let glw = w * s_max;
        let t = s.powf(q);
        axial_nodes.push((t, glw * k / (p - 1.0) * s.powf(k - 1.0)));
    }
    let v_max = (0.75f64).sqrt();
    for (x, w) in gauss_legendre_01(per_panel) {
        let v = x * v_max;
        let glw = w * v_max;
        let t = (1.0 - v * v).sqrt();
        axial_nodes.push((t, glw * t.powf(p - 3.0) * v));
    }

    let cross_nodes: Vec<(Vec<f64>, f64)> = if dim == 2 {
        gauss_legendre(cross_count)
            .into_iter()
            .map(|(y, w)| (vec![y], w))
            .collect()
    } else {
        // polar product rule on the unit disk: GL in radius (jacobian rho),
        // midpoint in angle
        let radial = gauss_legendre_01(cross_count);
        let mut nodes = Vec::with_capacity(cross_count * cross_count);
        for (rho, wr) in radial {
            for l in 0..cross_count {
                let phi = (l as f64 + 0.5) / cross_count as f64 * 2.0 * std::f64::consts::PI;
                nodes.push((
                    vec![rho * phi.cos(), rho * phi.sin()],
                    wr * rho * 2.0 * std::f64::consts::PI / cross_count as f64,
                ));
            }
        }
        nodes
    };

    let mut nodes = Vec::with_capacity(axial_nodes.len() * cross_nodes.len());
    let mut total = 0.0;
    for &(t, wa) in &axial_nodes {
        let width = (1.0 - t * t).max(0.0).sqrt();
        let section = width.powi(dim as i32 - 1);
        for (y, wc) in &cross_nodes {
            let mut h = [0.0; 3];
            h[0] = t;
            for (d, yc) in y.iter().enumerate() {
                h[d + 1] = width * yc;
            }
            let w = wa * section * wc;
            total += w;
            nodes.push((h, w));
        }
    }
    for (_, w) in nodes.iter_mut() {
        *w /= total;
    }

    Ok(QuadratureRule {
        dim,
        p,
        axial_nodes,
        cross_nodes,
        nodes,
    })
}

/// Kernel-weighted average of `field` over the eps-ball at `x` in direction
/// `z`: the canonical nodes rotated by the orthogonal map with `R e1 = z`.
pub fn apply(
    rule: &QuadratureRule,
    field: FieldRef,
    x: &[f64],
    z: &Direction,
    params: &KernelParams,
) -> Result<f64> {
    if z.dim() != rule.dim || params.dim() != rule.dim {
        return Err(Error::InvalidParameter(
            "rule, direction and params dimensions must agree".into(),
        ));
    }
    let eps = params.eps();
    let rot = Rotation::onto(z);
    let xp = point_from(x);
    let mut acc = 0.0;
    for (h, w) in &rule.nodes {
        let r = rot.apply(h);
        let mut pt = [0.0; 3];
        for d in 0..rule.dim {
            pt[d] = xp[d] + eps * r[d];
        }
        acc += w * field.eval(&pt[..rule.dim])?;
    }
    Ok(acc)
}

/// Empirical continuity modulus of `z -> I^z u(x)`: the maximum of
/// `|I^z - I^w|` over the probed direction pairs. Builds a default-size rule
/// internally.
pub fn continuity_probe(
    field: FieldRef,
    x: &[f64],
    params: &KernelParams,
    angle_pairs: &[(Direction, Direction)],
) -> Result<f64> {
    let rule = build_rule(params, DEFAULT_AXIAL, DEFAULT_CROSS)?;
    let mut worst = 0.0f64;
    for (z, w) in angle_pairs {
        let a = apply(&rule, field, x, z, params)?;
        let b = apply(&rule, field, x, w, params)?;
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}
