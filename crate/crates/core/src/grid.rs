//! Uniform power-of-two sample grids and the complex fields stored on them.
//!
//! Nodes are stored x-fastest: `index = ix + nx * (iy + ny * iz)`. Planar
//! grids have `dims[2] == 1` and live in the `z = 0` plane.

use nalgebra::Point3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::DescriptorError;
use crate::solids::Aabb;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    dim: usize,
    dims: [usize; 3],
    origin: [f64; 3],
    spacing: f64,
}

impl SampleGrid {
    pub fn new(
        dim: usize,
        dims: [usize; 3],
        origin: [f64; 3],
        spacing: f64,
    ) -> Result<Self, DescriptorError> {
        if dim != 2 && dim != 3 {
            return Err(DescriptorError::InvalidGrid(format!("dimension {dim}")));
        }
        for (axis, &n) in dims.iter().enumerate().take(dim) {
            if n < 4 || !n.is_power_of_two() {
                return Err(DescriptorError::InvalidGrid(format!(
                    "axis {axis} has {n} nodes; need a power of two >= 4"
                )));
            }
        }
        if dim == 2 && (dims[2] != 1 || origin[2] != 0.0) {
            return Err(DescriptorError::InvalidGrid(
                "planar grids need dims[2] = 1 and origin z = 0".into(),
            ));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(DescriptorError::InvalidGrid(format!("spacing {spacing}")));
        }
        Ok(Self {
            dim,
            dims,
            origin,
            spacing,
        })
    }

    /// `n` nodes per axis with node `n/2` at the model origin.
    pub fn centered(dim: usize, n: usize, spacing: f64) -> Result<Self, DescriptorError> {
        let o = -((n / 2) as f64) * spacing;
        let (dims, origin) = if dim == 2 {
            ([n, n, 1], [o, o, 0.0])
        } else {
            ([n, n, n], [o, o, o])
        };
        Self::new(dim, dims, origin, spacing)
    }

    /// Smallest centered grid spacing for which `bbox` padded by `margin`
    /// fits inside the node box.
    pub fn centered_enclosing(
        dim: usize,
        n: usize,
        bbox: &Aabb,
        margin: f64,
    ) -> Result<Self, DescriptorError> {
        let reach = (0..dim)
            .map(|k| bbox.min[k].abs().max(bbox.max[k].abs()))
            .fold(0.0, f64::max)
            + margin;
        // Nodes span [-(n/2) h, (n/2 - 1) h].
        let spacing = reach / ((n / 2) as f64 - 1.0);
        Self::centered(dim, n, spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Point3<f64> {
        Point3::from(self.origin)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    pub fn unflatten(&self, index: usize) -> [usize; 3] {
        let ix = index % self.dims[0];
        let rest = index / self.dims[0];
        [ix, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn node_position(&self, index: usize) -> Point3<f64> {
        let ijk = self.unflatten(index);
        self.position_of(ijk)
    }

    pub fn position_of(&self, ijk: [usize; 3]) -> Point3<f64> {
        let mut p = self.origin;
        for k in 0..self.dim {
            p[k] += ijk[k] as f64 * self.spacing;
        }
        Point3::from(p)
    }

    /// Box spanned by the nodes.
    pub fn bounds(&self) -> Aabb {
        let mut max = self.origin;
        for k in 0..self.dim {
            max[k] += (self.dims[k] - 1) as f64 * self.spacing;
        }
        Aabb {
            min: Point3::from(self.origin),
            max: Point3::from(max),
        }
    }

    /// Whether `bbox` grown by `margin` lies strictly inside the node box.
    pub fn contains_with_margin(&self, bbox: &Aabb, margin: f64) -> bool {
        let b = self.bounds();
        (0..self.dim).all(|k| bbox.min[k] - margin > b.min[k] && bbox.max[k] + margin < b.max[k])
    }

    /// Same node count and spacing (origins may differ).
    pub fn compatible_with(&self, other: &SampleGrid) -> bool {
        self.dim == other.dim && self.dims == other.dims && self.spacing == other.spacing
    }

    /// Face-adjacent neighbors of a node.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let ijk = self.unflatten(index);
        (0..self.dim).flat_map(move |k| {
            let mut out = [None, None];
            if ijk[k] > 0 {
                let mut n = ijk;
                n[k] -= 1;
                out[0] = Some(self.index(n));
            }
            if ijk[k] + 1 < self.dims[k] {
                let mut n = ijk;
                n[k] += 1;
                out[1] = Some(self.index(n));
            }
            out.into_iter().flatten()
        })
    }
}

/// Complex samples over a [`SampleGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: SampleGrid,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: SampleGrid, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.node_count(), "field length must match grid");
        Self { grid, values }
    }

    pub fn zeros(grid: SampleGrid) -> Self {
        Self::new(grid, vec![Complex64::new(0.0, 0.0); grid.node_count()])
    }

    pub fn from_fn<F: Fn(Point3<f64>) -> Complex64>(grid: SampleGrid, f: F) -> Self {
        let values = (0..grid.node_count())
            .map(|i| f(grid.node_position(i)))
            .collect();
        Self::new(grid, values)
    }

    /// Zeroes every node outside `bbox`. Descriptor tails span the whole
    /// grid, so only a cropped field has a support that can avoid wrapping.
    pub fn cropped(&self, bbox: &Aabb) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| if bbox.contains(&self.grid.node_position(i)) { *v } else { zero })
            .collect();
        Self::new(self.grid, values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Multilinear interpolation at a physical point; zero outside the node box.
    pub fn sample(&self, p: &Point3<f64>) -> Complex64 {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for k in 0..g.dim {
            let u = (p[k] - g.origin[k]) / g.spacing;
            if u < 0.0 || u > (g.dims[k] - 1) as f64 {
                return Complex64::new(0.0, 0.0);
            }
            let i = (u.floor() as usize).min(g.dims[k] - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for corner in 0..(1usize << g.dim) {
            let mut w = 1.0;
            let mut ijk = base;
            for k in 0..g.dim {
                if corner >> k & 1 == 1 {
                    ijk[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += self.values[g.index(ijk)] * w;
            }
        }
        acc
    }
}

/// `d` component fields sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub components: Vec<ComplexField>,
}

impl VectorField {
    pub fn grid(&self) -> &SampleGrid {
        &self.components[0].grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(SampleGrid::new(2, [6, 8, 1], [0.0; 3], 1.0).is_err());
        assert!(SampleGrid::new(2, [2, 8, 1], [0.0; 3], 1.0).is_err());
        assert!(SampleGrid::new(3, [8, 8, 8], [0.0; 3], 0.0).is_err());
        assert!(SampleGrid::new(2, [8, 8, 2], [0.0; 3], 1.0).is_err());
    }

    #[test]
    fn centered_has_origin_node() {
        let g = SampleGrid::centered(3, 16, 0.5).unwrap();
        let i = g.index([8, 8, 8]);
        assert_eq!(g.node_position(i), Point3::origin());
        assert_eq!(g.unflatten(i), [8, 8, 8]);
    }

    #[test]
    fn enclosing_contains_box() {
        let b = Aabb {
            min: Point3::new(-1.0, -0.5, 0.0),
            max: Point3::new(2.0, 0.5, 0.0),
        };
        let g = SampleGrid::centered_enclosing(2, 64, &b, 0.75).unwrap();
        assert!(g.contains_with_margin(&b, 0.7));
    }

    #[test]
    fn neighbors_at_corner() {
        let g = SampleGrid::centered(2, 8, 1.0).unwrap();
        let n: Vec<usize> = g.neighbors(0).collect();
        assert_eq!(n, vec![1, 8]);
        assert_eq!(g.neighbors(g.index([3, 3, 0])).count(), 4);
    }

    #[test]
    fn sample_reproduces_linear_function() {
        let g = SampleGrid::centered(3, 8, 0.25).unwrap();
        let f = ComplexField::from_fn(g, |p| Complex64::new(p.x + 2.0 * p.y - p.z, p.x));
        let v = f.sample(&Point3::new(0.1, -0.37, 0.2));
        assert!((v - Complex64::new(0.1 - 0.74 - 0.2, 0.1)).norm() < 1e-12);
        assert_eq!(f.sample(&Point3::new(5.0, 0.0, 0.0)), Complex64::new(0.0, 0.0));
    }
}
