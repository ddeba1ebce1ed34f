//! Lattice-sampled scalar fields with multilinear interpolation.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Role of a lattice node relative to the domain: inside the domain, in the
/// boundary collar where prescribed data lives, or outside (never read).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Collar,
    Exterior,
}

impl NodeClass {
    pub fn label(&self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Collar => "collar",
            NodeClass::Exterior => "exterior",
        }
    }
}

/// A real-valued function sampled on a uniform lattice covering the
/// collar-extended domain. Exterior nodes hold NaN and are never read;
/// interpolation refuses cells that touch them.
#[derive(Debug, Clone)]
pub struct GridField {
    dim: usize,
    origin: Point,
    shape: [usize; 3],
    dx: f64,
    values: Vec<f64>,
    class: Vec<NodeClass>,
}

impl GridField {
    pub fn new(dim: usize, origin: Point, shape: [usize; 3], dx: f64) -> Result<Self> {
        if dim < 2 || dim > 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(dx > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {dx}"
            )));
        }
        let len = shape[0] * shape[1] * shape[2];
        if len == 0 || (dim == 2 && shape[2] != 1) {
            return Err(Error::InvalidParameter(format!(
                "bad grid shape {shape:?} for dimension {dim}"
            )));
        }
        Ok(Self {
            dim,
            origin,
            shape,
            dx,
            values: vec![f64::NAN; len],
            class: vec![NodeClass::Exterior; len],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        (idx[2] * self.shape[1] + idx[1]) * self.shape[0] + idx[0]
    }

    pub fn grid_index(&self, flat: usize) -> [usize; 3] {
        let i = flat % self.shape[0];
        let rest = flat / self.shape[0];
        [i, rest % self.shape[1], rest / self.shape[1]]
    }

    pub fn node_position(&self, flat: usize) -> Point {
        let idx = self.grid_index(flat);
        let mut p = [0.0; 3];
        for d in 0..self.dim {
            p[d] = self.origin[d] + idx[d] as f64 * self.dx;
        }
        p
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn set_value(&mut self, flat: usize, v: f64) {
        self.values[flat] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn class(&self, flat: usize) -> NodeClass {
        self.class[flat]
    }

    pub fn set_class(&mut self, flat: usize, c: NodeClass) {
        self.class[flat] = c;
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.class[i] == NodeClass::Interior)
            .collect()
    }

    pub fn collar_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.class[i] == NodeClass::Collar)
            .collect()
    }

    /// Fills every non-exterior node from a callable.
    pub fn fill<F: FnMut(&[f64]) -> f64>(&mut self, mut f: F) {
        for i in 0..self.len() {
            if self.class[i] != NodeClass::Exterior {
                let p = self.node_position(i);
                self.values[i] = f(&p[..self.dim]);
            }
        }
    }

    /// Multilinear interpolation from the 2^N surrounding lattice nodes.
    /// Exact on multilinear functions; `OutOfDomain` if the cell leaves the
    /// lattice or touches an exterior node.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..self.dim {
            let rel = (x[d] - self.origin[d]) / self.dx;
            // clamp roundoff just outside the first/last cell
            let cell = rel.floor();
            let mut i = cell as isize;
            let mut fr = rel - cell;
            if i < 0 && rel > -1e-9 {
                i = 0;
                fr = 0.0;
            }
            if i + 1 >= self.shape[d] as isize && rel < (self.shape[d] - 1) as f64 + 1e-9 {
                i = self.shape[d] as isize - 2;
                fr = 1.0;
            }
            if i < 0 || i + 1 >= self.shape[d] as isize {
                return Err(Error::OutOfDomain(x.to_vec()));
            }
            base[d] = i as usize;
            frac[d] = fr;
        }
        let corners = 1usize << self.dim;
        let mut out = 0.0;
        for c in 0..corners {
            let mut idx = base;
            let mut w = 1.0;
            for d in 0..self.dim {
                if c >> d & 1 == 1 {
                    idx[d] += 1;
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            let flat = self.flat_index(idx);
            if self.class[flat] == NodeClass::Exterior {
                return Err(Error::OutOfDomain(x.to_vec()));
            }
            out += w * self.values[flat];
        }
        Ok(out)
    }

    /// CSV serialization: header `x1,...,xN,value,class`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let coords: Vec<String> = (1..=self.dim).map(|d| format!("x{d}")).collect();
        writeln!(w, "{},value,class", coords.join(","))?;
        for i in 0..self.len() {
            let p = self.node_position(i);
            for c in &p[..self.dim] {
                write!(w, "{:.17e},", c)?;
            }
            writeln!(w, "{:.17e},{}", self.values[i], self.class[i].label())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn small_field(dx: f64, n: usize) -> GridField {
        let mut f = GridField::new(2, [0.0, 0.0, 0.0], [n, n, 1], dx).unwrap();
        for i in 0..f.len() {
            f.set_class(i, NodeClass::Interior);
        }
        f
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let mut f = small_field(0.5, 5);
        f.fill(|x| 3.0 * x[0] - x[1] + 0.25);
        for i in [0usize, 7, 12, 24] {
            let p = f.node_position(i);
            assert_abs_diff_eq!(f.interpolate(&p[..2]).unwrap(), f.value(i), epsilon = 1e-14);
        }
    }

    #[test]
    fn multilinear_exactness_at_cell_center() {
        let mut f = small_field(0.5, 5);
        f.fill(|x| x[0]);
        // cell center of the first cell
        assert_abs_diff_eq!(f.interpolate(&[0.25, 0.25]).unwrap(), 0.25, epsilon = 1e-14);
        // and a bilinear function is reproduced exactly anywhere
        f.fill(|x| 1.0 + 2.0 * x[0] - 0.5 * x[1] + 4.0 * x[0] * x[1]);
        let x = [0.693, 1.111];
        let exact = 1.0 + 2.0 * x[0] - 0.5 * x[1] + 4.0 * x[0] * x[1];
        assert_abs_diff_eq!(f.interpolate(&x).unwrap(), exact, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_interpolation_error_is_second_order() {
        // |y|^2 at a cell center with dx = 0.1: error <= dx^2/2 = 0.005 < 0.01.
        let mut f = small_field(0.1, 21);
        f.fill(|x| x[0] * x[0] + x[1] * x[1]);
        let x = [1.05, 1.05];
        let exact = x[0] * x[0] + x[1] * x[1];
        let err = (f.interpolate(&x).unwrap() - exact).abs();
        assert!(err < 0.01, "error {err}");
        assert!(err > 0.0);
    }

    #[test]
    fn out_of_domain_detected() {
        let f = small_field(0.5, 5);
        assert!(matches!(
            f.interpolate(&[-0.6, 0.0]),
            Err(Error::OutOfDomain(_))
        ));
        assert!(matches!(
            f.interpolate(&[2.6, 0.0]),
            Err(Error::OutOfDomain(_))
        ));
        // exterior corner poisoning
        let mut g = small_field(0.5, 5);
        g.fill(|_| 1.0);
        g.set_class(g.flat_index([1, 1, 0]), NodeClass::Exterior);
        assert!(g.interpolate(&[0.6, 0.6]).is_err());
    }

    #[test]
    fn csv_layout_is_stable() {
        let mut f = small_field(0.5, 2);
        f.fill(|x| x[0] + x[1]);
        let mut buf1 = Vec::new();
        f.write_csv(&mut buf1).unwrap();
        let mut buf2 = Vec::new();
        f.write_csv(&mut buf2).unwrap();
        assert_eq!(buf1, buf2);
        let text = String::from_utf8(buf1).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2,value,class");
        let field_counts: Vec<usize> = lines.map(|l| l.split(',').count()).collect();
        assert_eq!(field_counts.len(), 4);
        assert!(field_counts.iter().all(|&c| c == 4));
    }

    proptest! {
        #[test]
        fn interpolation_exact_on_multilinear(
            a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0,
            px in 0.0f64..2.0, py in 0.0f64..2.0,
        ) {
            let mut f = small_field(0.5, 5);
            f.fill(|x| a + b * x[0] + c * x[1] + d * x[0] * x[1]);
            let exact = a + b * px + c * py + d * px * py;
            let got = f.interpolate(&[px, py]).unwrap();
            prop_assert!((got - exact).abs() < 1e-11);
        }
    }
}
