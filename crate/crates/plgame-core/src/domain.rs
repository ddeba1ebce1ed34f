//! Domain geometry: the open domain, its eps-collar and the lattice builder.

use crate::error::{Error, Result};
use crate::field::{GridField, NodeClass};
use crate::geometry::{norm, sub, Point};

/// Supported domain shapes. Balls and boxes cover the solver test problems;
/// the annulus carries the radial exact-solution convergence study (the
/// origin must be excluded there).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Ball { center: Point, radius: f64 },
    BoxDomain { min: Point, max: Point },
    Annulus { center: Point, inner: f64, outer: f64 },
}

/// Domain plus the collar width eps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub shape: Shape,
    pub eps: f64,
    pub dim: usize,
}

impl DomainSpec {
    pub fn ball(dim: usize, center: &[f64], radius: f64, eps: f64) -> Result<Self> {
        let spec = Self {
            shape: Shape::Ball {
                center: crate::geometry::point_from(center),
                radius,
            },
            eps,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cuboid(dim: usize, min: &[f64], max: &[f64], eps: f64) -> Result<Self> {
        let spec = Self {
            shape: Shape::BoxDomain {
                min: crate::geometry::point_from(min),
                max: crate::geometry::point_from(max),
            },
            eps,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn annulus(dim: usize, center: &[f64], inner: f64, outer: f64, eps: f64) -> Result<Self> {
        let spec = Self {
            shape: Shape::Annulus {
                center: crate::geometry::point_from(center),
                inner,
                outer,
            },
            eps,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.dim > 3 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        match self.shape {
            Shape::Ball { radius, .. } => {
                if !(radius > 0.0) {
                    return Err(Error::InvalidParameter("ball radius must be positive".into()));
                }
                if self.eps >= radius / 2.0 {
                    return Err(Error::InvalidParameter(format!(
                        "eps = {} must be below half the ball radius {}",
                        self.eps, radius
                    )));
                }
            }
            Shape::BoxDomain { min, max } => {
                for d in 0..self.dim {
                    if !(max[d] > min[d]) {
                        return Err(Error::InvalidParameter(
                            "box must have positive extent on every axis".into(),
                        ));
                    }
                }
            }
            Shape::Annulus { inner, outer, .. } => {
                if !(inner > 0.0 && outer > inner) {
                    return Err(Error::InvalidParameter(
                        "annulus needs 0 < inner < outer".into(),
                    ));
                }
                if self.eps >= inner {
                    return Err(Error::InvalidParameter(format!(
                        "eps = {} must be below the annulus inner radius {inner}",
                        self.eps
                    )));
                }
                if self.eps >= (outer - inner) / 2.0 {
                    return Err(Error::InvalidParameter(
                        "eps must be below half the annulus width".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Is `x` in the open domain?
    pub fn contains(&self, x: &Point) -> bool {
        match self.shape {
            Shape::Ball { center, radius } => norm(&sub(x, &center), self.dim) < radius,
            Shape::BoxDomain { min, max } => {
                (0..self.dim).all(|d| x[d] > min[d] && x[d] < max[d])
            }
            Shape::Annulus { center, inner, outer } => {
                let r = norm(&sub(x, &center), self.dim);
                r > inner && r < outer
            }
        }
    }

    /// Euclidean distance from `x` to the domain (zero inside).
    pub fn distance(&self, x: &Point) -> f64 {
        match self.shape {
            Shape::Ball { center, radius } => {
                (norm(&sub(x, &center), self.dim) - radius).max(0.0)
            }
            Shape::BoxDomain { min, max } => {
                let mut d2 = 0.0;
                for d in 0..self.dim {
                    let gap = (min[d] - x[d]).max(x[d] - max[d]).max(0.0);
                    d2 += gap * gap;
                }
                d2.sqrt()
            }
            Shape::Annulus { center, inner, outer } => {
                let r = norm(&sub(x, &center), self.dim);
                if r < inner {
                    inner - r
                } else {
                    (r - outer).max(0.0)
                }
            }
        }
    }

    /// Distance from an interior point to the domain boundary (zero or
    /// meaningless outside).
    pub fn distance_to_boundary_from_inside(&self, x: &Point) -> f64 {
        match self.shape {
            Shape::Ball { center, radius } => radius - norm(&sub(x, &center), self.dim),
            Shape::Annulus { center, inner, outer } => {
                let r = norm(&sub(x, &center), self.dim);
                (r - inner).min(outer - r)
            }
            Shape::BoxDomain { min, max } => {
                let mut d = f64::INFINITY;
                for k in 0..self.dim {
                    d = d.min(x[k] - min[k]).min(max[k] - x[k]);
                }
                d
            }
        }
    }

    /// Nearest point of the domain boundary, used to assign a payoff to a
    /// truncated game path.
    pub fn project_to_boundary(&self, x: &Point) -> Point {
        match self.shape {
            Shape::Ball { center, radius } => radial_project(x, &center, radius, self.dim),
            Shape::Annulus { center, inner, outer } => {
                let r = norm(&sub(x, &center), self.dim);
                let target = if (r - inner).abs() < (r - outer).abs() {
                    inner
                } else {
                    outer
                };
                radial_project(x, &center, target, self.dim)
            }
            Shape::BoxDomain { min, max } => {
                // clamp into the closed box, then push the closest coordinate
                // onto a face
                let mut p = *x;
                for d in 0..self.dim {
                    p[d] = p[d].clamp(min[d], max[d]);
                }
                let mut best_d = 0;
                let mut best_gap = f64::INFINITY;
                let mut best_val = min[0];
                for d in 0..self.dim {
                    for face in [min[d], max[d]] {
                        let gap = (p[d] - face).abs();
                        if gap < best_gap {
                            best_gap = gap;
                            best_d = d;
                            best_val = face;
                        }
                    }
                }
                p[best_d] = best_val;
                p
            }
        }
    }

    /// sup |x| over the collar-extended domain, the radius entering the
    /// explicit subsolution and the a-priori bound.
    pub fn sup_norm_extended(&self) -> f64 {
        match self.shape {
            Shape::Ball { center, radius } => norm(&center, self.dim) + radius + self.eps,
            Shape::Annulus { center, outer, .. } => norm(&center, self.dim) + outer + self.eps,
            Shape::BoxDomain { min, max } => {
                let mut sup: f64 = 0.0;
                for corner in 0..(1usize << self.dim) {
                    let mut c = [0.0; 3];
                    for d in 0..self.dim {
                        c[d] = if corner >> d & 1 == 1 { max[d] } else { min[d] };
                    }
                    sup = sup.max(norm(&c, self.dim));
                }
                sup + self.eps
            }
        }
    }

    /// Bounding box of the collar-extended domain plus `margin`.
    fn bounding_box(&self, margin: f64) -> (Point, Point) {
        let pad = self.eps + margin;
        match self.shape {
            Shape::Ball { center, radius } => {
                let r = radius + pad;
                (
                    [center[0] - r, center[1] - r, center[2] - r],
                    [center[0] + r, center[1] + r, center[2] + r],
                )
            }
            Shape::Annulus { center, outer, .. } => {
                let r = outer + pad;
                (
                    [center[0] - r, center[1] - r, center[2] - r],
                    [center[0] + r, center[1] + r, center[2] + r],
                )
            }
            Shape::BoxDomain { min, max } => (
                [min[0] - pad, min[1] - pad, min[2] - pad],
                [max[0] + pad, max[1] + pad, max[2] + pad],
            ),
        }
    }
}

fn radial_project(x: &Point, center: &Point, radius: f64, dim: usize) -> Point {
    let d = sub(x, center);
    let r = norm(&d, dim);
    if r < 1e-14 {
        let mut p = *center;
        p[0] += radius;
        return p;
    }
    let mut p = [0.0; 3];
    for i in 0..dim {
        p[i] = center[i] + d[i] * radius / r;
    }
    p
}

/// Builds the lattice for a domain: interior nodes inside the open domain,
/// collar nodes out to `eps` plus an interpolation margin of `(sqrt(N)+0.01)
/// dx` (every cell corner reachable from an interior node's eps-ball must
/// carry data), exterior beyond. Fails fast if the coverage invariant does
/// not hold.
pub fn build_grid(domain: &DomainSpec, dx: f64) -> Result<GridField> {
    if !(dx > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid spacing must be positive, got {dx}"
        )));
    }
    let dim = domain.dim;
    let margin = (dim as f64).sqrt() * dx * 1.01;
    let (lo, hi) = domain.bounding_box(margin + dx);
    let mut shape = [1usize; 3];
    let mut origin = [0.0; 3];
    for d in 0..dim {
        // snap to multiples of dx so coordinates like the domain center land
        // exactly on lattice nodes
        origin[d] = (lo[d] / dx).floor() * dx;
        shape[d] = ((hi[d] - origin[d]) / dx).ceil() as usize + 1;
    }
    let mut field = GridField::new(dim, origin, shape, dx)?;
    let collar_limit = domain.eps + margin;
    for i in 0..field.len() {
        let p = field.node_position(i);
        let class = if domain.contains(&p) {
            NodeClass::Interior
        } else if domain.distance(&p) <= collar_limit {
            NodeClass::Collar
        } else {
            NodeClass::Exterior
        };
        field.set_class(i, class);
    }
    verify_ball_coverage(&field, domain.eps)?;
    Ok(field)
}

/// Checks that for every interior node all lattice nodes that multilinear
/// interpolation can touch within the eps-ball are interior or collar.
pub fn verify_ball_coverage(field: &GridField, eps: f64) -> Result<()> {
    let dim = field.dim();
    let dx = field.dx();
    let reach = eps + dx * (dim as f64).sqrt() * 1.001;
    let m = (reach / dx).ceil() as isize;
    let shape = field.shape();
    let mut offsets = Vec::new();
    for dk in if dim == 3 { -m..=m } else { 0..=0 } {
        for dj in -m..=m {
            for di in -m..=m {
                let dist = dx
                    * (((di * di + dj * dj + dk * dk) as f64).sqrt());
                if dist <= reach {
                    offsets.push([di, dj, dk]);
                }
            }
        }
    }
    for flat in 0..field.len() {
        if field.class(flat) != NodeClass::Interior {
            continue;
        }
        let idx = field.grid_index(flat);
        for off in &offsets {
            let mut ok = true;
            let mut nidx = [0usize; 3];
            for d in 0..3 {
                let v = idx[d] as isize + off[d];
                if v < 0 || v >= shape[d] as isize {
                    ok = false;
                    break;
                }
                nidx[d] = v as usize;
            }
            if !ok || field.class(field.flat_index(nidx)) == NodeClass::Exterior {
                let p = field.node_position(flat);
                return Err(Error::OutOfDomain(p[..dim].to_vec()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ball_grid_classification_and_coverage() {
        let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, 0.2).unwrap();
        let grid = build_grid(&dom, 0.05).unwrap();
        let n_int = grid.interior_nodes().len();
        let n_col = grid.collar_nodes().len();
        // area pi vs lattice density 1/dx^2
        let expect = std::f64::consts::PI / 0.0025;
        assert!((n_int as f64) > 0.95 * expect && (n_int as f64) < 1.05 * expect);
        assert!(n_col > 0);
    }

    #[test]
    fn annulus_grid_has_two_collars() {
        let dom = DomainSpec::annulus(2, &[0.0, 0.0], 0.5, 1.0, 0.1).unwrap();
        let grid = build_grid(&dom, 0.025).unwrap();
        let mut inner_collar = 0;
        let mut outer_collar = 0;
        for i in grid.collar_nodes() {
            let p = grid.node_position(i);
            if norm(&p, 2) < 0.5 {
                inner_collar += 1;
            } else {
                outer_collar += 1;
            }
        }
        assert!(inner_collar > 0 && outer_collar > 0);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(DomainSpec::ball(2, &[0.0, 0.0], 1.0, 0.6).is_err());
        assert!(DomainSpec::annulus(2, &[0.0, 0.0], 0.1, 1.0, 0.2).is_err());
        assert!(DomainSpec::cuboid(2, &[0.0, 0.0], [0.0, 1.0].as_ref(), 0.1).is_err());
        assert!(DomainSpec::ball(4, &[0.0; 4], 1.0, 0.1).is_err());
    }

    #[test]
    fn sup_norm_extended_values() {
        let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, 0.1).unwrap();
        assert_abs_diff_eq!(dom.sup_norm_extended(), 1.1, epsilon = 1e-14);
        let dom = DomainSpec::cuboid(2, &[-1.0, -2.0], &[1.0, 0.5], 0.1).unwrap();
        assert_abs_diff_eq!(dom.sup_norm_extended(), 5.0f64.sqrt() + 0.1, epsilon = 1e-14);
    }

    #[test]
    fn boundary_projection() {
        let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, 0.1).unwrap();
        let p = dom.project_to_boundary(&[0.3, 0.4, 0.0]);
        assert_abs_diff_eq!(norm(&p, 2), 1.0, epsilon = 1e-14);
        let dom = DomainSpec::annulus(2, &[0.0, 0.0], 0.5, 1.0, 0.1).unwrap();
        let p = dom.project_to_boundary(&[0.55, 0.0, 0.0]);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn distance_box() {
        let dom = DomainSpec::cuboid(2, &[0.0, 0.0], &[1.0, 1.0], 0.1).unwrap();
        assert_abs_diff_eq!(dom.distance(&[1.3, 0.5, 0.0]), 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(
            dom.distance(&[1.3, 1.4, 0.0]),
            0.5,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(dom.distance(&[0.5, 0.5, 0.0]), 0.0, epsilon = 1e-14);
    }
}
