use std::io::{Read, Write};

use super::TorusGrid;
use crate::error::{Error, Result};

/// Real-valued field sampled on the nodes of a [`TorusGrid`], row-major.
///
/// Binary layout: `d, M, n, N` as little-endian `u64`, then `N^d`
/// little-endian `f64` values in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: TorusGrid) -> Self {
        GridField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        GridField { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridField { grid, values })
    }

    /// Samples `f` at every node position.
    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: TorusGrid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node_position(i))).collect();
        GridField { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
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

    /// Discrete L2 inner product with volume element `spacing^d`.
    pub fn inner(&self, other: &GridField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Usage("inner product of fields on different grids".into()));
        }
        let dv = self.grid.cell_volume();
        Ok(dv * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        for h in [g.d(), g.m(), g.n(), g.side()] {
            w.write_all(&(h as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u64; 4];
        let mut word = [0u8; 8];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [d, m, n, side] = header.map(|h| h as usize);
        let grid = TorusGrid::new(m, d, n)?;
        if grid.side() != side {
            return Err(Error::Parse(format!("field header has N = {side} but n * M = {}", grid.side())));
        }
        let mut bytes = vec![0u8; 8 * grid.len()];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Parse("trailing bytes after grid field".into()));
        }
        Ok(GridField { grid, values })
    }
}
