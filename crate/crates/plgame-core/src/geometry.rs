//! Points, unit directions, frame rotations and deterministic point sets.
//!
//! Points are stored as `[f64; 3]` with unused trailing coordinates zero, so
//! the same code paths serve N = 2 and N = 3.

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub fn point_from(slice: &[f64]) -> Point {
    let n = slice.len().min(3);
    let mut p = [0.0; 3];
    p[..n].copy_from_slice(&slice[..n]);
    p
}

pub fn dot(a: &Point, b: &Point, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        s += a[i] * b[i];
    }
    s
}

pub fn norm(a: &Point, dim: usize) -> f64 {
    dot(a, a, dim).sqrt()
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add_scaled(a: &Point, s: f64, b: &Point) -> Point {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// A unit vector in R^N, |z| = 1 within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    v: Point,
    dim: usize,
}

impl Direction {
    pub fn new(dim: usize, components: &[f64]) -> Result<Self> {
        if dim < 2 || dim > 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if components.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "direction needs {dim} components, got {}",
                components.len()
            )));
        }
        let v = point_from(components);
        let n = norm(&v, dim);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "direction must be unit length, |z| = {n}"
            )));
        }
        Ok(Self { v, dim })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn from_vector(dim: usize, components: &[f64]) -> Result<Self> {
        let v = point_from(components);
        let n = norm(&v, dim);
        if n < 1e-300 {
            return Err(Error::InvalidParameter(
                "cannot normalize the zero vector".into(),
            ));
        }
        Ok(Self {
            v: [v[0] / n, v[1] / n, v[2] / n],
            dim,
        })
    }

    /// 2-D direction at angle `theta` from the first axis.
    pub fn from_angle(theta: f64) -> Self {
        Self {
            v: [theta.cos(), theta.sin(), 0.0],
            dim: 2,
        }
    }

    pub fn axis(dim: usize, k: usize) -> Self {
        let mut v = [0.0; 3];
        v[k] = 1.0;
        Self { v, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.v[..self.dim]
    }

    pub fn as_point(&self) -> &Point {
        &self.v
    }

    pub fn negated(&self) -> Self {
        Self {
            v: [-self.v[0], -self.v[1], -self.v[2]],
            dim: self.dim,
        }
    }

    /// Angle to another unit direction, in [0, pi].
    pub fn angle_to(&self, other: &Direction) -> f64 {
        dot(&self.v, &other.v, self.dim).clamp(-1.0, 1.0).acos()
    }
}

/// Orthogonal map R with `R e1 = z`: an explicit rotation for N = 2, a
/// Householder reflection for N = 3.
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    cols: [Point; 3],
    dim: usize,
}

impl Rotation {
    pub fn onto(z: &Direction) -> Self {
        let dim = z.dim();
        let zv = z.as_point();
        if dim == 2 {
            Self {
                cols: [[zv[0], zv[1], 0.0], [-zv[1], zv[0], 0.0], [0.0, 0.0, 1.0]],
                dim,
            }
        } else {
            // Householder: R = I - 2 v v^T / |v|^2 with v = e1 - z maps e1 to z.
            let v = [1.0 - zv[0], -zv[1], -zv[2]];
            let vv = dot(&v, &v, 3);
            if vv < 1e-28 {
                return Self {
                    cols: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                    dim,
                };
            }
            let mut cols = [[0.0; 3]; 3];
            for (j, col) in cols.iter_mut().enumerate() {
                for (i, c) in col.iter_mut().enumerate() {
                    let e = if i == j { 1.0 } else { 0.0 };
                    *c = e - 2.0 * v[i] * v[j] / vv;
                }
            }
            Self { cols, dim }
        }
    }

    pub fn apply(&self, h: &Point) -> Point {
        let mut out = [0.0; 3];
        for (j, col) in self.cols.iter().enumerate().take(self.dim) {
            for i in 0..self.dim {
                out[i] += col[i] * h[j];
            }
        }
        out
    }
}

/// Unit directions roughly equidistributed on the sphere (N = 3). The set is
/// closed under negation so that antipodal pairs cancel first-order terms in
/// coarse sup/inf scans: `count` is rounded up to the next even number.
pub fn fibonacci_sphere(count: usize) -> Vec<Direction> {
    let half = count.div_ceil(2);
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let mut dirs = Vec::with_capacity(2 * half);
    for i in 0..half {
        // upper hemisphere only; antipodes added explicitly
        let y = (i as f64 + 0.5) / half as f64; // in (0, 1)
        let r = (1.0 - y * y).sqrt();
        let phi = i as f64 * golden_angle;
        let d = Direction {
            v: [r * phi.cos(), r * phi.sin(), y],
            dim: 3,
        };
        dirs.push(d);
        dirs.push(d.negated());
    }
    dirs
}

/// Deterministic low-discrepancy points filling the open ball of radius
/// `lambda` in R^N: a golden-angle spiral for N = 2, a Halton-driven
/// (direction, radius) product for N = 3.
pub fn low_discrepancy_ball(dim: usize, lambda: f64, count: usize) -> Result<Vec<Point>> {
    if dim == 2 {
        let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        Ok((0..count)
            .map(|i| {
                let r = lambda * (((i as f64 + 0.5) / count as f64).sqrt()).min(1.0 - 1e-12);
                let th = i as f64 * golden_angle;
                [r * th.cos(), r * th.sin(), 0.0]
            })
            .collect())
    } else if dim == 3 {
        Ok((0..count)
            .map(|i| {
                let u = halton(i as u64 + 1, 2);
                let v = halton(i as u64 + 1, 3);
                let w = halton(i as u64 + 1, 5);
                let cz = 2.0 * u - 1.0;
                let rxy = (1.0 - cz * cz).sqrt();
                let phi = 2.0 * std::f64::consts::PI * v;
                let r = lambda * w.cbrt().min(1.0 - 1e-12);
                [r * rxy * phi.cos(), r * rxy * phi.sin(), r * cz]
            })
            .collect())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}
