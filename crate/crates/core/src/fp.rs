//! Forward kinetic Fokker-Planck solver
//! `d_t m - Delta_v m - v.D_x m - div_v(m b) = 0`, and level-set
//! measurements on its solutions.

use crate::error::{KmfgError, Result};
use crate::kolmogorov::{cfl_report, transport_step, v_diffusion_drift_step, OperatorConfig, VelocityMode};
use crate::oracle::KineticGaussian;
use crate::phase_grid::{integrate, Field, PhaseGrid, SpaceTimeField, VectorField};

/// Tolerance on the initial mass.
pub const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FpProblem {
    pub m0: Field,
    /// Drift `b` at every time level (`n_t + 1` entries), or `None` for `b = 0`.
    pub drift: Option<Vec<VectorField>>,
    pub operator: OperatorConfig,
}

impl FpProblem {
    pub fn new(m0: Field, drift: Option<Vec<VectorField>>, operator: OperatorConfig) -> Result<Self> {
        let p = Self { m0, drift, operator };
        p.validate()?;
        Ok(p)
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.m0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.operator.validate()?;
        if !self.operator.transport.preserves_positivity() {
            return Err(KmfgError::InvalidArgument(format!(
                "transport scheme {:?} does not preserve positivity",
                self.operator.transport
            )));
        }
        if let Some((cell, &min)) = self.m0.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(KmfgError::NegativeDensity { min, cell });
        }
        let mass = integrate(&self.m0);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(KmfgError::InvalidArgument(format!("initial mass {mass} is not 1")));
        }
        if let Some(b) = &self.drift {
            let grid = self.grid();
            if b.len() != grid.n_t() + 1 {
                return Err(KmfgError::InvalidArgument(format!(
                    "drift has {} levels, expected {}",
                    b.len(),
                    grid.n_t() + 1
                )));
            }
            for (level, bk) in b.iter().enumerate() {
                grid.ensure_same_space(bk.grid())?;
                if !bk.components().iter().all(Field::is_finite) {
                    return Err(KmfgError::NonFinite { level });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FpSolution {
    pub m: SpaceTimeField,
    /// `integrate(m(t_k))` per level.
    pub mass: Vec<f64>,
    /// Mass in the outermost velocity cells per level.
    pub leakage: Vec<f64>,
}

/// Mass carried by cells touching the velocity boundary.
pub fn boundary_mass(f: &Field) -> f64 {
    let g = f.grid();
    let nv = g.cells_v();
    let vals: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .filter(|(cell, _)| g.is_v_boundary(cell % nv))
        .map(|(_, &v)| v)
        .collect();
    crate::phase_grid::pairwise_sum(&vals) * g.cell_volume()
}

/// One Strang step `m(t_k) -> m(t_{k+1})` with the drift of the new level.
pub fn fp_step(m: &Field, dt: f64, drift: Option<&VectorField>, op: &OperatorConfig) -> Result<Field> {
    let half = transport_step(m, 0.5 * dt, -1.0, op)?;
    let diffused = v_diffusion_drift_step(&half, dt, drift, VelocityMode::FokkerPlanck)?;
    transport_step(&diffused, 0.5 * dt, -1.0, op)
}

pub fn solve_fp(prob: &FpProblem) -> Result<FpSolution> {
    prob.validate()?;
    let grid = *prob.grid();
    let dt = grid.dt();
    let admissible = cfl_report(&grid, 0.0, &prob.operator);
    if 0.5 * dt > admissible * (1.0 + 1e-12) {
        return Err(KmfgError::Cfl { dt, admissible: 2.0 * admissible });
    }
    let mut slices = Vec::with_capacity(grid.n_t() + 1);
    let mut mass = Vec::with_capacity(grid.n_t() + 1);
    let mut leakage = Vec::with_capacity(grid.n_t() + 1);
    let mut current = prob.m0.clone();
    for level in 0..=grid.n_t() {
        if level > 0 {
            let b = prob.drift.as_ref().map(|b| &b[level]);
            current = fp_step(&current, dt, b, &prob.operator)?;
            if !current.is_finite() {
                return Err(KmfgError::NonFinite { level });
            }
            if let Some((cell, &min)) = current.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
                return Err(KmfgError::NegativeDensity { min, cell });
            }
        }
        mass.push(integrate(&current));
        leakage.push(boundary_mass(&current));
        slices.push(current.clone());
    }
    Ok(FpSolution {
        m: SpaceTimeField::from_slices(&grid, slices)?,
        mass,
        leakage,
    })
}

/// Gaussian initial density normalized to unit discrete mass.
pub fn gaussian_initial(grid: &PhaseGrid, law: &KineticGaussian) -> Result<Field> {
    law.field(grid)?.normalized()
}

/// Uniform probability density on the box.
pub fn uniform_density(grid: &PhaseGrid) -> Field {
    Field::constant(grid, 1.0 / grid.box_volume())
}

/// `alpha_k = 2 + 2^(1-k)`, `k = 1..=count`.
pub fn de_giorgi_alphas(count: usize) -> Vec<f64> {
    (1..=count).map(|k| 2.0 + 2f64.powi(1 - k as i32)).collect()
}

/// De Giorgi level data for `m / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSequence {
    pub scale: f64,
    /// `alpha_0 = 4` followed by `alpha_1..alpha_K`.
    pub alpha: Vec<f64>,
    /// `U_k = int_0^T int (m - alpha_k)_+^4`, indexed like `alpha`.
    pub u: Vec<f64>,
    /// Space-time measure of `{m > alpha_k}`.
    pub super_level: Vec<f64>,
    /// Space-time measure of the band `{alpha_k < m <= alpha_(k-1)}` (`k >= 1`).
    pub band: Vec<f64>,
    /// `16^k U_k - |{m > alpha_(k-1)}|` for `k >= 1`: the Chebyshev step
    /// across the gap `alpha_(k-1) - alpha_k = 2^(1-k)`.
    pub chebyshev_margin: Vec<f64>,
    /// `16^k U_(k-1) - |{m > alpha_k}|` for `k >= 1`, index order as usually
    /// written. With decreasing levels this is not implied by Chebyshev.
    pub reversed_margin: Vec<f64>,
}

impl LevelSequence {
    pub fn chebyshev_violations(&self) -> usize {
        self.chebyshev_margin.iter().filter(|&&m| m < 0.0).count()
    }
}

pub fn de_giorgi_levels(m: &SpaceTimeField, count: usize, scale: f64) -> Result<LevelSequence> {
    if !(scale > 0.0) {
        return Err(KmfgError::InvalidArgument("scale must be positive".into()));
    }
    if m.min() < 0.0 {
        return Err(KmfgError::InvalidArgument("density must be nonnegative".into()));
    }
    let grid = m.grid();
    let mut alpha = vec![4.0];
    alpha.extend(de_giorgi_alphas(count));
    let measure = |f: &dyn Fn(f64) -> f64| -> f64 {
        let per_level: Vec<f64> = m
            .slices()
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let vals: Vec<f64> = s.values().iter().map(|&v| f(v / scale)).collect();
                grid.time_weight(k) * crate::phase_grid::pairwise_sum(&vals)
            })
            .collect();
        crate::phase_grid::pairwise_sum(&per_level) * grid.cell_volume()
    };
    let u: Vec<f64> = alpha
        .iter()
        .map(|&a| measure(&|v| (v - a).max(0.0).powi(4)))
        .collect();
    let super_level: Vec<f64> = alpha
        .iter()
        .map(|&a| measure(&|v| if v > a { 1.0 } else { 0.0 }))
        .collect();
    let mut band = vec![0.0];
    let mut chebyshev_margin = vec![];
    let mut reversed_margin = vec![];
    for k in 1..alpha.len() {
        let (lo, hi) = (alpha[k], alpha[k - 1]);
        band.push(measure(&|v| if v > lo && v <= hi { 1.0 } else { 0.0 }));
        let w = 16f64.powi(k as i32);
        chebyshev_margin.push(w * u[k] - super_level[k - 1]);
        reversed_margin.push(w * u[k - 1] - super_level[k]);
    }
    Ok(LevelSequence {
        scale,
        alpha,
        u,
        super_level,
        band,
        chebyshev_margin,
        reversed_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kolmogorov::TransportScheme;
    use crate::phase_grid::{build_grid, GridConfig};

    fn grid() -> PhaseGrid {
        build_grid(&GridConfig::new_1d(0.5, 20, 2.0, 32, 5.0, 40)).unwrap()
    }

    #[test]
    fn alphas_match_the_level_rule() {
        assert_eq!(de_giorgi_alphas(3), vec![3.0, 2.5, 2.25]);
    }

    #[test]
    fn rejects_bad_initial_data() {
        let g = grid();
        let op = OperatorConfig::default();
        assert!(FpProblem::new(Field::constant(&g, 1.0), None, op).is_err());
        let m0 = uniform_density(&g);
        let spectral = OperatorConfig::new(TransportScheme::Spectral, 0.9).unwrap();
        assert!(FpProblem::new(m0.clone(), None, spectral).is_err());
        assert!(FpProblem::new(m0, Some(vec![]), op).is_err());
    }

    #[test]
    fn drift_free_run_is_a_probability_density() {
        let g = grid();
        let m0 = gaussian_initial(&g, &KineticGaussian::isotropic(0.3, 0.5, 0.3, 0.4)).unwrap();
        let sol = solve_fp(&FpProblem::new(m0, None, OperatorConfig::default()).unwrap()).unwrap();
        assert!(sol.m.min() >= 0.0);
        assert!(sol.mass.iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert_eq!(sol.leakage.len(), g.n_t() + 1);
    }

    #[test]
    fn bounded_density_has_empty_levels() {
        let g = grid();
        let m = SpaceTimeField::constant_in_time(&g, &Field::constant(&g, 1.9));
        let l = de_giorgi_levels(&m, 5, 1.0).unwrap();
        assert!(l.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn chebyshev_on_ramp() {
        let g = grid();
        let m = SpaceTimeField::constant_in_time(&g, &Field::from_fn(&g, |x, v| 2.0 + (x[0] + v[0] * 0.3).cos().abs() * 1.5));
        let l = de_giorgi_levels(&m, 6, 1.0).unwrap();
        assert_eq!(l.chebyshev_violations(), 0);
        assert!(l.u.windows(2).all(|w| w[0] <= w[1]));
    }
}
