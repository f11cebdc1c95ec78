//! Closed-form Gaussian solutions of the drift-free kinetic equation
//! `d_t m = Delta_v m + v.D_x m`.
//!
//! Along characteristics `dX = -V dt`, `dV = sqrt(2) dB`, so a Gaussian stays
//! Gaussian with mean `(x0 - v0 t, v0)` and covariance
//! `Phi S0 Phi^T + K(t)`, `Phi = [[1, -t], [0, 1]]`,
//! `K(t) = [[2t^3/3, -t^2], [-t^2, 2t]]`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{KmfgError, Result};
use crate::phase_grid::{Field, PhaseGrid};

/// A Gaussian in one `(x, v)` pair. In `d = 2` the same law is used on both
/// axes independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticGaussian {
    pub mean_x: f64,
    pub mean_v: f64,
    pub var_x: f64,
    pub var_v: f64,
    pub cov_xv: f64,
}

impl KineticGaussian {
    pub fn isotropic(mean_x: f64, mean_v: f64, sigma_x: f64, sigma_v: f64) -> Self {
        Self {
            mean_x,
            mean_v,
            var_x: sigma_x * sigma_x,
            var_v: sigma_v * sigma_v,
            cov_xv: 0.0,
        }
    }

    /// Point source at `(x0, v0)`.
    pub fn point(x0: f64, v0: f64) -> Self {
        Self::isotropic(x0, v0, 0.0, 0.0)
    }

    pub fn determinant(&self) -> f64 {
        self.var_x * self.var_v - self.cov_xv * self.cov_xv
    }

    /// Law at time `t` under the drift-free flow.
    pub fn evolve(&self, t: f64) -> Self {
        let (a, b, c) = (self.var_x, self.cov_xv, self.var_v);
        Self {
            mean_x: self.mean_x - self.mean_v * t,
            mean_v: self.mean_v,
            var_x: a - 2.0 * b * t + c * t * t + 2.0 * t.powi(3) / 3.0,
            cov_xv: b - c * t - t * t,
            var_v: c + 2.0 * t,
        }
    }

    /// Density on the line, no periodization.
    pub fn density_free(&self, x: f64, v: f64) -> f64 {
        let det = self.determinant();
        let (dx, dv) = (x - self.mean_x, v - self.mean_v);
        let q = (self.var_v * dx * dx - 2.0 * self.cov_xv * dx * dv + self.var_x * dv * dv) / det;
        (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    }

    /// Density with `x` wrapped onto the periodic cell `[-l_x, l_x)`.
    pub fn density_periodic(&self, x: f64, v: f64, l_x: f64) -> f64 {
        let period = 2.0 * l_x;
        let reach = (8.0 * self.var_x.sqrt() / period).ceil() as i64 + 1;
        (-reach..=reach)
            .map(|k| self.density_free(x + k as f64 * period, v))
            .sum()
    }

    /// Pointwise values on the grid (product over axes in `d = 2`).
    pub fn field(&self, grid: &PhaseGrid) -> Result<Field> {
        if !(self.determinant() > 0.0) {
            return Err(KmfgError::InvalidArgument(
                "Gaussian covariance must be positive definite".into(),
            ));
        }
        let l_x = grid.l_x();
        let d = grid.d();
        Ok(Field::from_fn(grid, |x, v| {
            (0..d).map(|a| self.density_periodic(x[a], v[a], l_x)).product()
        }))
    }
}

/// Exact solution at time `t` started from `init`, sampled on the grid.
pub fn kolmogorov_density(grid: &PhaseGrid, t: f64, init: &KineticGaussian) -> Result<Field> {
    if t < 0.0 {
        return Err(KmfgError::InvalidArgument("time must be nonnegative".into()));
    }
    init.evolve(t).field(grid)
}
