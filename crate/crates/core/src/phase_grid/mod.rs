//! Uniform tensor grid over the truncated phase space `[0,T] x X x V`.
//!
//! Positions live on a periodic box `[-L_x, L_x)^d` sampled at nodes
//! `x_i = -L_x + i h_x`; velocities live on `[-L_v, L_v]^d` sampled at cell
//! centres `v_j = -L_v + (j + 1/2) h_v`, so the velocity grid is symmetric
//! under `v -> -v`. Cells are stored row-major with the position index
//! outermost: `cell = ix * cells_v + iv`.

mod field;
mod norms;

pub use field::{Field, SpaceTimeField, VectorField};
pub use norms::{
    fractional_seminorm, fractional_seminorm_slice, integrate, lp_norm, lp_norm_spacetime, moment, pairwise_sum,
    FractionalAxis, MomentWeight,
};

use serde::{Deserialize, Serialize};

use crate::error::{KmfgError, Result};

/// Default cap on `n_x^d * n_v^d`: 2^24 cells (a 64^2 x 64^2 grid fits exactly).
pub const DEFAULT_MAX_CELLS: usize = 1 << 24;

/// A point in position or velocity space. Components beyond `d` are zero.
pub type Coord = [f64; 2];

fn default_max_cells() -> usize {
    DEFAULT_MAX_CELLS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    pub t_final: f64,
    pub n_t: usize,
    pub l_x: f64,
    pub n_x: usize,
    pub l_v: f64,
    pub n_v: usize,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

impl GridConfig {
    pub fn new_1d(t_final: f64, n_t: usize, l_x: f64, n_x: usize, l_v: f64, n_v: usize) -> Self {
        Self {
            d: 1,
            t_final,
            n_t,
            l_x,
            n_x,
            l_v,
            n_v,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    d: usize,
    t_final: f64,
    n_t: usize,
    l_x: f64,
    n_x: usize,
    l_v: f64,
    n_v: usize,
    dt: f64,
    h_x: f64,
    h_v: f64,
}

/// Validate a grid configuration and derive the spacings.
pub fn build_grid(cfg: &GridConfig) -> Result<PhaseGrid> {
    if cfg.d != 1 && cfg.d != 2 {
        return Err(KmfgError::InvalidGrid(format!(
            "d must be 1 or 2, got {}",
            cfg.d
        )));
    }
    if !(cfg.t_final.is_finite() && cfg.t_final > 0.0) {
        return Err(KmfgError::InvalidGrid("T must be positive".into()));
    }
    if !(cfg.l_x.is_finite() && cfg.l_x > 0.0) || !(cfg.l_v.is_finite() && cfg.l_v > 0.0) {
        return Err(KmfgError::InvalidGrid("box half-widths must be positive".into()));
    }
    if cfg.n_t == 0 {
        return Err(KmfgError::InvalidGrid("n_t must be at least 1".into()));
    }
    if cfg.n_x < 4 || !cfg.n_x.is_power_of_two() {
        return Err(KmfgError::InvalidGrid(
            "n_x must be power of two ≥ 4".into(),
        ));
    }
    if cfg.n_v < 4 {
        return Err(KmfgError::InvalidGrid("n_v must be ≥ 4".into()));
    }
    let cells = cfg
        .n_x
        .checked_pow(cfg.d as u32)
        .and_then(|a| cfg.n_v.checked_pow(cfg.d as u32).and_then(|b| a.checked_mul(b)));
    match cells {
        Some(c) if c <= cfg.max_cells => {}
        _ => {
            return Err(KmfgError::InvalidGrid(format!(
                "cell count exceeds memory budget of {} cells",
                cfg.max_cells
            )))
        }
    }
    Ok(PhaseGrid {
        d: cfg.d,
        t_final: cfg.t_final,
        n_t: cfg.n_t,
        l_x: cfg.l_x,
        n_x: cfg.n_x,
        l_v: cfg.l_v,
        n_v: cfg.n_v,
        dt: cfg.t_final / cfg.n_t as f64,
        h_x: 2.0 * cfg.l_x / cfg.n_x as f64,
        h_v: 2.0 * cfg.l_v / cfg.n_v as f64,
    })
}

impl PhaseGrid {
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }
    pub fn n_t(&self) -> usize {
        self.n_t
    }
    pub fn l_x(&self) -> f64 {
        self.l_x
    }
    pub fn l_v(&self) -> f64 {
        self.l_v
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn n_v(&self) -> usize {
        self.n_v
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn h_x(&self) -> f64 {
        self.h_x
    }
    pub fn h_v(&self) -> f64 {
        self.h_v
    }

    pub fn config(&self) -> GridConfig {
        GridConfig {
            d: self.d,
            t_final: self.t_final,
            n_t: self.n_t,
            l_x: self.l_x,
            n_x: self.n_x,
            l_v: self.l_v,
            n_v: self.n_v,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }

    /// Same spatial grid with a different time discretization.
    pub fn with_time(&self, t_final: f64, n_t: usize) -> Result<PhaseGrid> {
        let mut cfg = self.config();
        cfg.t_final = t_final;
        cfg.n_t = n_t;
        cfg.max_cells = usize::MAX;
        build_grid(&cfg)
    }

    /// Number of position nodes, `n_x^d`.
    pub fn cells_x(&self) -> usize {
        self.n_x.pow(self.d as u32)
    }

    /// Number of velocity cells, `n_v^d`.
    pub fn cells_v(&self) -> usize {
        self.n_v.pow(self.d as u32)
    }

    pub fn len(&self) -> usize {
        self.cells_x() * self.cells_v()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Phase-space volume of one cell, `h_x^d h_v^d`.
    pub fn cell_volume(&self) -> f64 {
        (self.h_x * self.h_v).powi(self.d as i32)
    }

    /// Volume of the truncated box, `(2 L_x)^d (2 L_v)^d`.
    pub fn box_volume(&self) -> f64 {
        (4.0 * self.l_x * self.l_v).powi(self.d as i32)
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    /// Trapezoid weight of a time level in `[0, T]` quadrature.
    pub fn time_weight(&self, level: usize) -> f64 {
        if level == 0 || level == self.n_t {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    pub fn x_node(&self, i: usize) -> f64 {
        -self.l_x + i as f64 * self.h_x
    }

    pub fn v_center(&self, j: usize) -> f64 {
        -self.l_v + (j as f64 + 0.5) * self.h_v
    }

    /// Position of the flat position index `ix`.
    pub fn x_point(&self, ix: usize) -> Coord {
        match self.d {
            1 => [self.x_node(ix), 0.0],
            _ => [self.x_node(ix / self.n_x), self.x_node(ix % self.n_x)],
        }
    }

    /// Velocity of the flat velocity index `iv`.
    pub fn v_point(&self, iv: usize) -> Coord {
        match self.d {
            1 => [self.v_center(iv), 0.0],
            _ => [self.v_center(iv / self.n_v), self.v_center(iv % self.n_v)],
        }
    }

    pub fn split_cell(&self, cell: usize) -> (usize, usize) {
        (cell / self.cells_v(), cell % self.cells_v())
    }

    /// Whether the velocity index touches the outermost ring of velocity cells.
    pub fn is_v_boundary(&self, iv: usize) -> bool {
        let last = self.n_v - 1;
        match self.d {
            1 => iv == 0 || iv == last,
            _ => {
                let (a, b) = (iv / self.n_v, iv % self.n_v);
                a == 0 || a == last || b == 0 || b == last
            }
        }
    }

    /// Checks that two grids describe the same spatial discretization.
    pub fn same_space(&self, other: &PhaseGrid) -> bool {
        self.d == other.d
            && self.n_x == other.n_x
            && self.n_v == other.n_v
            && self.l_x == other.l_x
            && self.l_v == other.l_v
    }

    pub(crate) fn ensure_same_space(&self, other: &PhaseGrid) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(KmfgError::GridMismatch(format!(
                "d={} n_x={} n_v={} vs d={} n_x={} n_v={}",
                self.d, self.n_x, self.n_v, other.d, other.n_x, other.n_v
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn derived_spacings() {
        let g = build_grid(&GridConfig::new_1d(1.0, 100, PI, 64, 4.0, 64)).unwrap();
        assert_relative_eq!(g.dt(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(g.h_x(), 2.0 * PI / 64.0, epsilon = 1e-15);
        assert_relative_eq!(g.h_v(), 0.125, epsilon = 1e-15);
        assert_eq!(g.len(), 64 * 64);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let err = build_grid(&GridConfig::new_1d(1.0, 10, 1.0, 3, 1.0, 8)).unwrap_err();
        assert!(err.to_string().contains("n_x must be power of two ≥ 4"));
        assert!(build_grid(&GridConfig::new_1d(1.0, 10, 1.0, 24, 1.0, 8)).is_err());
        assert!(build_grid(&GridConfig::new_1d(1.0, 10, 1.0, 8, 1.0, 3)).is_err());
    }

    #[test]
    fn memory_budget() {
        let mut cfg = GridConfig::new_1d(1.0, 10, 1.0, 64, 1.0, 64);
        cfg.d = 2;
        assert_eq!(build_grid(&cfg).unwrap().len(), 16_777_216);
        cfg.max_cells = 16_777_215;
        assert!(build_grid(&cfg).is_err());
    }

    #[test]
    fn velocity_centres_are_symmetric() {
        let g = build_grid(&GridConfig::new_1d(1.0, 10, 1.0, 8, 2.0, 8)).unwrap();
        for j in 0..8 {
            assert_relative_eq!(g.v_center(j), -g.v_center(7 - j), epsilon = 1e-15);
        }
        assert_eq!(g.x_node(4), 0.0);
    }
}
