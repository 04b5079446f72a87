//! Uniform box grids and nodal fields.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform grid with node counts `dims`, spacing `h` and the first node at
/// `origin`. Node `(i, j, k)` has flat index `i + nx (j + ny k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    pub dims: [usize; 3],
    pub spacing: T,
    pub origin: [T; 3],
}

impl<T: Real> Grid<T> {
    pub fn new(dims: [usize; 3], spacing: T, origin: [T; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n < 3) {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3 nodes per axis, got {dims:?}"
            )));
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {spacing}")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid origin must be finite".into()));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// `n` nodes per axis on `[0, 1]³`.
    pub fn unit_cube(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!("grid needs at least 3 nodes per axis, got {n}")));
        }
        Self::new([n; 3], T::one() / T::from_usize_lossy(n - 1), [T::zero(); 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    pub fn ijk(&self, n: usize) -> [usize; 3] {
        let (nx, ny) = (self.dims[0], self.dims[1]);
        [n % nx, (n / nx) % ny, n / (nx * ny)]
    }

    /// Flat index offset of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    pub fn coords(&self, n: usize) -> [T; 3] {
        let ijk = self.ijk(n);
        std::array::from_fn(|a| self.origin[a] + self.spacing * T::from_usize_lossy(ijk[a]))
    }

    pub fn on_boundary(&self, n: usize) -> bool {
        let ijk = self.ijk(n);
        (0..3).any(|a| ijk[a] == 0 || ijk[a] + 1 == self.dims[a])
    }

    pub fn is_interior_along(&self, n: usize, axis: usize) -> bool {
        let c = self.ijk(n)[axis];
        c > 0 && c + 1 < self.dims[axis]
    }

    /// Distance in nodes to the nearest face.
    pub fn boundary_distance(&self, n: usize) -> usize {
        let ijk = self.ijk(n);
        (0..3)
            .map(|a| ijk[a].min(self.dims[a] - 1 - ijk[a]))
            .min()
            .unwrap_or(0)
    }

    /// Node nearest the geometric center.
    pub fn center(&self) -> usize {
        self.index(self.dims.map(|d| d / 2))
    }

    pub fn interior_count(&self) -> usize {
        self.dims.iter().map(|d| d - 2).product()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims == other.dims
            && (self.spacing - other.spacing).abs() <= T::lit(1e-12) * self.spacing
            && (0..3).all(|a| (self.origin[a] - other.origin[a]).abs() <= T::lit(1e-12) * self.spacing)
    }
}

/// Nodal values with `components` reals per node, node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    pub grid: Grid<T>,
    pub components: usize,
    pub data: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: Grid<T>, components: usize) -> Self {
        Self {
            grid,
            components,
            data: vec![T::zero(); grid.len() * components],
        }
    }

    pub fn from_data(grid: Grid<T>, components: usize, data: Vec<T>) -> Result<Self> {
        if components == 0 || data.len() != grid.len() * components {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} nodes x {components} components",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            components,
            data,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid<T>, components: usize, mut f: impl FnMut([T; 3]) -> Vec<T>) -> Self {
        let mut data = Vec::with_capacity(grid.len() * components);
        for n in 0..grid.len() {
            let v = f(grid.coords(n));
            assert_eq!(v.len(), components, "sample has wrong component count");
            data.extend(v);
        }
        Self {
            grid,
            components,
            data,
        }
    }

    pub fn node(&self, n: usize) -> &[T] {
        &self.data[n * self.components..(n + 1) * self.components]
    }

    pub fn node_mut(&mut self, n: usize) -> &mut [T] {
        let k = self.components;
        &mut self.data[n * k..(n + 1) * k]
    }

    pub fn get(&self, n: usize, c: usize) -> T {
        self.data[n * self.components + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// One component as a scalar field.
    pub fn component(&self, c: usize) -> Field<T> {
        Field {
            grid: self.grid,
            components: 1,
            data: (0..self.grid.len()).map(|n| self.get(n, c)).collect(),
        }
    }

    /// Derivative of every component along `axis`: central differences
    /// inside, second-order one-sided differences on the faces.
    pub fn diff(&self, axis: usize) -> Field<T> {
        let g = &self.grid;
        let k = self.components;
        let s = g.stride(axis);
        let last = g.dims[axis] - 1;
        let h = g.spacing;
        let two_h = T::two() * h;
        let (three, four) = (T::lit(3.0), T::lit(4.0));
        let mut out = vec![T::zero(); self.data.len()];
        for n in 0..g.len() {
            let pos = g.ijk(n)[axis];
            for c in 0..k {
                let f = |m: usize| self.data[m * k + c];
                out[n * k + c] = if pos == 0 {
                    (-three * f(n) + four * f(n + s) - f(n + 2 * s)) / two_h
                } else if pos == last {
                    (three * f(n) - four * f(n - s) + f(n - 2 * s)) / two_h
                } else {
                    (f(n + s) - f(n - s)) / two_h
                };
            }
        }
        Field {
            grid: *g,
            components: k,
            data: out,
        }
    }
}
