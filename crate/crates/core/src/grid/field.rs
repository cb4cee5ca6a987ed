use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryPartition, Point};
use crate::grid::Grid;

/// Scalar function sampled on a space–time grid. Values are stored one time
/// level after another: `values[level * nspace + node]`.
///
/// `log_offset` records the constant φ* used when the field carries a
/// normalized Carleman weight `exp(s(φ − φ*))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    log_offset: f64,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Field {
        Field::from_shared(Arc::new(grid.clone()), vec![0.0; grid.len()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Point, f64) -> f64) -> Field {
        let nspace = grid.nspace();
        let positions: Vec<Point> = (0..nspace).map(|i| grid.position(i)).collect();
        let mut values = Vec::with_capacity(grid.len());
        for level in 0..grid.nt() {
            let t = grid.time(level);
            values.extend(positions.iter().map(|x| f(x, t)));
        }
        Field::from_shared(Arc::new(grid.clone()), values)
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidData(format!(
                "field needs {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Field::from_shared(Arc::new(grid.clone()), values))
    }

    /// Constant-in-time extension of a spatial field.
    pub fn from_spatial(spatial: &SpatialField) -> Field {
        let grid = spatial.shared_grid();
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.nt() {
            values.extend_from_slice(spatial.values());
        }
        Field::from_shared(grid, values)
    }

    pub(crate) fn from_shared(grid: Arc<Grid>, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.len());
        Field {
            grid,
            values,
            log_offset: 0.0,
        }
    }

    pub(crate) fn shared_grid(&self) -> Arc<Grid> {
        Arc::clone(&self.grid)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    pub fn with_log_offset(mut self, offset: f64) -> Field {
        self.log_offset = offset;
        self
    }

    pub fn at(&self, level: usize, node: usize) -> f64 {
        self.values[level * self.grid.nspace() + node]
    }

    /// Values of one time level.
    pub fn level(&self, level: usize) -> &[f64] {
        let n = self.grid.nspace();
        &self.values[level * n..(level + 1) * n]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        let n = self.grid.nspace();
        &mut self.values[level * n..(level + 1) * n]
    }

    pub fn slice_at(&self, level: usize) -> SpatialField {
        SpatialField::from_shared(self.shared_grid(), self.level(level).to_vec())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Field {
            grid: self.shared_grid(),
            values,
            log_offset: self.log_offset,
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.values.len(), other.values.len(), "field shapes differ");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field {
            grid: self.shared_grid(),
            values,
            log_offset: self.log_offset,
        }
    }

    /// Pointwise map that also sees the flat (level, node) position.
    pub fn map_indexed(&self, f: impl Fn(usize, usize, f64) -> f64) -> Field {
        let n = self.grid.nspace();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k / n, k % n, v))
            .collect();
        Field {
            grid: self.shared_grid(),
            values,
            log_offset: self.log_offset,
        }
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    /// Pointwise product with a time-independent field.
    pub fn mul_spatial(&self, other: &SpatialField) -> Field {
        let n = self.grid.nspace();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| v * other.values()[k % n])
            .collect();
        Field {
            grid: self.shared_grid(),
            values,
            log_offset: self.log_offset,
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Time-independent function on the spatial nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn zeros(grid: &Grid) -> SpatialField {
        SpatialField::from_shared(Arc::new(grid.clone()), vec![0.0; grid.nspace()])
    }

    pub fn constant(grid: &Grid, c: f64) -> SpatialField {
        SpatialField::from_shared(Arc::new(grid.clone()), vec![c; grid.nspace()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Point) -> f64) -> SpatialField {
        let values = (0..grid.nspace()).map(|i| f(&grid.position(i))).collect();
        SpatialField::from_shared(Arc::new(grid.clone()), values)
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<SpatialField> {
        if values.len() != grid.nspace() {
            return Err(Error::InvalidData(format!(
                "spatial field needs {} values, got {}",
                grid.nspace(),
                values.len()
            )));
        }
        Ok(SpatialField::from_shared(Arc::new(grid.clone()), values))
    }

    pub(crate) fn from_shared(grid: Arc<Grid>, values: Vec<f64>) -> SpatialField {
        debug_assert_eq!(values.len(), grid.nspace());
        SpatialField { grid, values }
    }

    pub(crate) fn shared_grid(&self) -> Arc<Grid> {
        Arc::clone(&self.grid)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpatialField {
        SpatialField::from_shared(
            self.shared_grid(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &SpatialField, f: impl Fn(f64, f64) -> f64) -> SpatialField {
        assert_eq!(self.values.len(), other.values.len(), "field shapes differ");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        SpatialField::from_shared(self.shared_grid(), values)
    }

    pub fn scale(&self, c: f64) -> SpatialField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &SpatialField) -> SpatialField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpatialField) -> SpatialField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &SpatialField) -> SpatialField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_abs(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Values on the boundary nodes of a [`BoundaryPartition`] at every time
/// level, stored `values[level * nodes + node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    partition: Arc<BoundaryPartition>,
    nt: usize,
    values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(partition: Arc<BoundaryPartition>, nt: usize) -> BoundaryTrace {
        let values = vec![0.0; partition.len() * nt];
        BoundaryTrace {
            partition,
            nt,
            values,
        }
    }

    pub fn from_fn(
        grid: &Grid,
        partition: Arc<BoundaryPartition>,
        f: impl Fn(&Point, f64) -> f64,
    ) -> BoundaryTrace {
        let nt = grid.nt();
        let mut values = Vec::with_capacity(partition.len() * nt);
        for level in 0..nt {
            let t = grid.time(level);
            values.extend(partition.nodes().iter().map(|n| f(&n.position, t)));
        }
        BoundaryTrace {
            partition,
            nt,
            values,
        }
    }

    /// Boundary values of `spatial`, held fixed in time.
    pub fn constant_in_time(
        partition: Arc<BoundaryPartition>,
        spatial: &SpatialField,
    ) -> BoundaryTrace {
        let nt = spatial.grid().nt();
        let level: Vec<f64> = partition
            .nodes()
            .iter()
            .map(|n| spatial.values()[n.index])
            .collect();
        let mut values = Vec::with_capacity(level.len() * nt);
        for _ in 0..nt {
            values.extend_from_slice(&level);
        }
        BoundaryTrace {
            partition,
            nt,
            values,
        }
    }

    pub(crate) fn from_raw(
        partition: Arc<BoundaryPartition>,
        nt: usize,
        values: Vec<f64>,
    ) -> BoundaryTrace {
        debug_assert_eq!(values.len(), partition.len() * nt);
        BoundaryTrace {
            partition,
            nt,
            values,
        }
    }

    pub fn partition(&self) -> &BoundaryPartition {
        &self.partition
    }

    pub fn shared_partition(&self) -> Arc<BoundaryPartition> {
        Arc::clone(&self.partition)
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, node: usize, level: usize) -> f64 {
        self.values[level * self.partition.len() + node]
    }

    pub fn level(&self, level: usize) -> &[f64] {
        let n = self.partition.len();
        &self.values[level * n..(level + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> BoundaryTrace {
        BoundaryTrace {
            partition: Arc::clone(&self.partition),
            nt: self.nt,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &BoundaryTrace, f: impl Fn(f64, f64) -> f64) -> BoundaryTrace {
        assert_eq!(self.values.len(), other.values.len(), "trace shapes differ");
        BoundaryTrace {
            partition: Arc::clone(&self.partition),
            nt: self.nt,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Pointwise map that also sees (level, boundary node).
    pub fn map_indexed(&self, f: impl Fn(usize, usize, f64) -> f64) -> BoundaryTrace {
        let n = self.partition.len();
        BoundaryTrace {
            partition: Arc::clone(&self.partition),
            nt: self.nt,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(k, &v)| f(k / n, k % n, v))
                .collect(),
        }
    }
}
