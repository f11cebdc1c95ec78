use super::{Coord, PhaseGrid};
use crate::error::{KmfgError, Result};

/// Scalar values on one time slice of a [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: PhaseGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &PhaseGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &PhaseGrid, c: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, v)` at every cell.
    pub fn from_fn(grid: &PhaseGrid, mut f: impl FnMut(&Coord, &Coord) -> f64) -> Self {
        let nv = grid.cells_v();
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.cells_x() {
            let x = grid.x_point(ix);
            for iv in 0..nv {
                values.push(f(&x, &grid.v_point(iv)));
            }
        }
        Self {
            grid: *grid,
            values,
        }
    }

    /// Wraps raw values; rejects wrong lengths and non-finite entries.
    pub fn from_values(grid: &PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(KmfgError::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(KmfgError::InvalidArgument(format!(
                "non-finite value at cell {i}"
            )));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub(crate) fn from_values_unchecked(grid: &PhaseGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, ix: usize, iv: usize) -> f64 {
        self.values[ix * self.grid.cells_v() + iv]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.grid.same_space(&other.grid));
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Field {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Rescales so that the midpoint-quadrature mass equals one.
    pub fn normalized(&self) -> Result<Field> {
        let mass = super::integrate(self);
        if !(mass.is_finite() && mass > 0.0) {
            return Err(KmfgError::InvalidArgument(
                "cannot normalize a field with non-positive mass".into(),
            ));
        }
        Ok(self.map(|v| v / mass))
    }
}

/// A vector-valued field (one component per velocity axis) on one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn zeros(grid: &PhaseGrid) -> Self {
        Self {
            components: (0..grid.d()).map(|_| Field::zeros(grid)).collect(),
        }
    }

    pub fn from_components(components: Vec<Field>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(KmfgError::InvalidArgument("empty vector field".into()));
        };
        if components.len() != first.grid().d()
            || components.iter().any(|c| !c.grid().same_space(first.grid()))
        {
            return Err(KmfgError::InvalidArgument(
                "vector field needs one component per dimension on a common grid".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }

    /// Vector at a flat cell index (unused components are zero).
    pub fn at_cell(&self, cell: usize) -> Coord {
        let mut p = [0.0; 2];
        for (a, c) in self.components.iter().enumerate() {
            p[a] = c.values()[cell];
        }
        p
    }

    /// Pointwise Euclidean norm squared.
    pub fn norm_squared(&self) -> Field {
        let grid = *self.grid();
        let values = (0..grid.len())
            .map(|c| self.components.iter().map(|f| f.values()[c].powi(2)).sum())
            .collect();
        Field::from_values_unchecked(&grid, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.values().iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max)
    }
}

/// Values on every time level `0..=n_t` of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: PhaseGrid,
    slices: Vec<Field>,
}

impl SpaceTimeField {
    pub fn from_slices(grid: &PhaseGrid, slices: Vec<Field>) -> Result<Self> {
        if slices.len() != grid.n_t() + 1 {
            return Err(KmfgError::InvalidArgument(format!(
                "expected {} time slices, got {}",
                grid.n_t() + 1,
                slices.len()
            )));
        }
        for s in &slices {
            grid.ensure_same_space(s.grid())?;
        }
        Ok(Self {
            grid: *grid,
            slices,
        })
    }

    /// The same field repeated on every time level.
    pub fn constant_in_time(grid: &PhaseGrid, f: &Field) -> Self {
        Self {
            grid: *grid,
            slices: vec![f.clone(); grid.n_t() + 1],
        }
    }

    pub fn from_fn(grid: &PhaseGrid, f: impl Fn(f64, &Coord, &Coord) -> f64) -> Self {
        let slices = (0..=grid.n_t())
            .map(|k| {
                let t = grid.time(k);
                Field::from_fn(grid, |x, v| f(t, x, v))
            })
            .collect();
        Self {
            grid: *grid,
            slices,
        }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn slice(&self, level: usize) -> &Field {
        &self.slices[level]
    }

    pub fn first(&self) -> &Field {
        &self.slices[0]
    }

    pub fn last(&self) -> &Field {
        &self.slices[self.slices.len() - 1]
    }

    pub fn into_slices(self) -> Vec<Field> {
        self.slices
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        Self {
            grid: self.grid,
            slices: self.slices.iter().map(|s| s.map(f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &SpaceTimeField, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self {
            grid: self.grid,
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a.zip_map(b, f))
                .collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.slices.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.slices
            .iter()
            .map(Field::max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup over time levels of `dist(slice_a, slice_b)`.
    pub fn sup_distance(&self, other: &SpaceTimeField, p: f64) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| super::lp_norm(&a.zip_map(b, |x, y| x - y), p))
            .fold(0.0, f64::max)
    }
}
