//! Backward solver for `-d_t u - Delta_v u + v.D_x u + H(D_v u) = F`,
//! `u(T) = G`.
//!
//! One step from `t_(k+1)` to `t_k`: half transport, explicit monotone
//! numerical Hamiltonian plus source, implicit Neumann heat step in `v`,
//! half transport. With a monotone transport scheme every sub-step is
//! monotone and fixes constants, so the discrete comparison principle and
//! `|u| <= |G|_inf + T |F|_inf` hold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KmfgError, Result};
use crate::hamiltonian::HamiltonianSpec;
use crate::kolmogorov::{transport_step, v_diffusion_drift_step, OperatorConfig, TransportScheme, VelocityMode};
use crate::phase_grid::{lp_norm, lp_norm_spacetime, Coord, Field, PhaseGrid, SpaceTimeField, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericalHamiltonian {
    /// `H(p*)` with `p*_a` the larger in magnitude of `max(p-_a, 0)` and
    /// `min(p+_a, 0)`. Requires `H` nondecreasing in each `|p_a|`.
    #[default]
    UpwindGodunov,
    /// `H((p- + p+)/2) - sum_a alpha_a/2 (p+_a - p-_a)` with `alpha_a` the
    /// largest `|H_{p_a}|` seen on the current level.
    LaxFriedrichs,
}

#[derive(Debug, Clone)]
pub struct HjbProblem {
    pub h: HamiltonianSpec,
    pub f: SpaceTimeField,
    pub g: Field,
    pub operator: OperatorConfig,
    pub scheme: NumericalHamiltonian,
}

impl HjbProblem {
    pub fn new(h: HamiltonianSpec, f: SpaceTimeField, g: Field, operator: OperatorConfig) -> Result<Self> {
        let p = Self {
            h,
            f,
            g,
            operator,
            scheme: NumericalHamiltonian::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.g.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.operator.validate()?;
        self.g.grid().ensure_same_space(self.f.grid())?;
        if self.f.grid().n_t() != self.g.grid().n_t() {
            return Err(KmfgError::GridMismatch("source and terminal grids differ in time".into()));
        }
        if !self.g.is_finite() {
            return Err(KmfgError::NonFinite { level: self.grid().n_t() });
        }
        if let Some(level) = self.f.slices().iter().position(|s| !s.is_finite()) {
            return Err(KmfgError::NonFinite { level });
        }
        Ok(())
    }
}

/// Index of `iv` along velocity axis `axis` and the flat stride of that axis.
fn axis_index(grid: &PhaseGrid, iv: usize, axis: usize) -> (usize, usize) {
    let n = grid.n_v();
    match (grid.d(), axis) {
        (1, _) => (iv, 1),
        (_, 0) => (iv / n, n),
        _ => (iv % n, 1),
    }
}

/// One-sided differences `(p-, p+)` at `cell`, with homogeneous Neumann ghosts.
fn one_sided(u: &[f64], grid: &PhaseGrid, cell: usize) -> (Coord, Coord) {
    let nv = grid.cells_v();
    let iv = cell % nv;
    let h = grid.h_v();
    let last = grid.n_v() - 1;
    let (mut pm, mut pp) = ([0.0; 2], [0.0; 2]);
    for a in 0..grid.d() {
        let (j, s) = axis_index(grid, iv, a);
        if j > 0 {
            pm[a] = (u[cell] - u[cell - s]) / h;
        }
        if j < last {
            pp[a] = (u[cell + s] - u[cell]) / h;
        }
    }
    (pm, pp)
}

/// `D_v u`: centred differences inside, one-sided at the velocity walls.
pub fn discrete_gradient_v(u: &Field) -> VectorField {
    let grid = *u.grid();
    let vals = u.values();
    let nv = grid.cells_v();
    let h = grid.h_v();
    let last = grid.n_v() - 1;
    let comps = (0..grid.d())
        .map(|a| {
            let out: Vec<f64> = (0..grid.len())
                .into_par_iter()
                .map(|cell| {
                    let (j, s) = axis_index(&grid, cell % nv, a);
                    if j == 0 {
                        (vals[cell + s] - vals[cell]) / h
                    } else if j == last {
                        (vals[cell] - vals[cell - s]) / h
                    } else {
                        (vals[cell + s] - vals[cell - s]) / (2.0 * h)
                    }
                })
                .collect();
            Field::from_values_unchecked(&grid, out)
        })
        .collect();
    VectorField::from_components(comps).expect("components share one grid")
}

/// `b = H_p(D_v u)` on every cell.
pub fn drift_from_value(u: &Field, h: &HamiltonianSpec) -> VectorField {
    let grid = *u.grid();
    let du = discrete_gradient_v(u);
    let d = grid.d();
    let grads: Vec<Coord> = (0..grid.len())
        .into_par_iter()
        .map(|cell| h.grad(&du.at_cell(cell)))
        .collect();
    let comps = (0..d)
        .map(|a| Field::from_values_unchecked(&grid, grads.iter().map(|g| g[a]).collect()))
        .collect();
    VectorField::from_components(comps).expect("components share one grid")
}

/// Upper bound on `|H_{p_a}|` over the box `|p_b| <= bound[b]`, evaluated at
/// the corner and on the axes (exact for the radial library Hamiltonians).
fn axis_speeds(h: &HamiltonianSpec, bound: Coord, d: usize) -> Coord {
    let mut out = [0.0; 2];
    let candidates = [bound, [bound[0], 0.0], [0.0, bound[1]]];
    for p in candidates {
        let g = h.grad(&p);
        for a in 0..d {
            out[a] = f64::max(out[a], g[a].abs());
        }
    }
    out
}

fn godunov_point(pm: &Coord, pp: &Coord, d: usize) -> Coord {
    let mut p = [0.0; 2];
    for a in 0..d {
        let left = pm[a].max(0.0);
        let right = pp[a].min(0.0);
        p[a] = if left >= -right { left } else { right };
    }
    p
}

/// Explicit part of one backward step: `u - dt H_num(u) + dt F`.
fn explicit_step(
    u: &Field,
    f: &Field,
    dt: f64,
    h: &HamiltonianSpec,
    scheme: NumericalHamiltonian,
    cfl_safety: f64,
) -> Result<Field> {
    let grid = *u.grid();
    let d = grid.d();
    let vals = u.values();
    if h.is_zero() {
        return Ok(u.zip_map(f, |a, b| a + dt * b));
    }
    let stencils: Vec<(Coord, Coord)> = (0..grid.len())
        .into_par_iter()
        .map(|cell| one_sided(vals, &grid, cell))
        .collect();
    let mut bound = [0.0f64; 2];
    for (pm, pp) in &stencils {
        for a in 0..d {
            bound[a] = bound[a].max(pm[a].abs()).max(pp[a].abs());
        }
    }
    let speeds = axis_speeds(h, bound, d);
    let total: f64 = speeds[..d].iter().sum();
    if total > 0.0 {
        let admissible = cfl_safety * grid.h_v() / total;
        if dt > admissible * (1.0 + 1e-12) {
            return Err(KmfgError::Cfl { dt, admissible });
        }
    }
    let out: Vec<f64> = stencils
        .par_iter()
        .zip(vals.par_iter().zip(f.values().par_iter()))
        .map(|((pm, pp), (&ui, &fi))| {
            let hn = match scheme {
                NumericalHamiltonian::UpwindGodunov => h.eval(&godunov_point(pm, pp, d)),
                NumericalHamiltonian::LaxFriedrichs => {
                    let avg = [0.5 * (pm[0] + pp[0]), 0.5 * (pm[1] + pp[1])];
                    let mut val = h.eval(&avg);
                    for a in 0..d {
                        val -= 0.5 * speeds[a] * (pp[a] - pm[a]);
                    }
                    val
                }
            };
            ui - dt * hn + dt * fi
        })
        .collect();
    Ok(Field::from_values_unchecked(&grid, out))
}

/// One step from level `k+1` to level `k`; `f` is the source at level `k`.
pub fn hjb_step(u_next: &Field, f: &Field, dt: f64, prob: &HjbProblem) -> Result<Field> {
    let op = &prob.operator;
    let a = transport_step(u_next, 0.5 * dt, 1.0, op)?;
    let b = explicit_step(&a, f, dt, &prob.h, prob.scheme, op.cfl_safety)?;
    let c = v_diffusion_drift_step(&b, dt, None, VelocityMode::Hjb)?;
    transport_step(&c, 0.5 * dt, 1.0, op)
}

pub fn solve_hjb(prob: &HjbProblem) -> Result<SpaceTimeField> {
    prob.validate()?;
    let grid = *prob.grid();
    let n_t = grid.n_t();
    let dt = grid.dt();
    let mut slices = vec![prob.g.clone(); n_t + 1];
    for level in (0..n_t).rev() {
        let next = hjb_step(&slices[level + 1], prob.f.slice(level), dt, prob)?;
        if !next.is_finite() {
            return Err(KmfgError::NonFinite { level });
        }
        slices[level] = next;
    }
    SpaceTimeField::from_slices(&grid, slices)
}

/// Transport schemes for which the backward step is monotone.
pub fn is_monotone_transport(t: TransportScheme) -> bool {
    matches!(t, TransportScheme::Upwind1 | TransportScheme::SemiLagrangian)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbNormReport {
    pub sup_u_l2: f64,
    pub f_l2: f64,
    pub g_l2: f64,
    /// `sup_t |u(t)|_2 / (|G|_2 + |F|_2)`, 0 when the data vanish.
    pub stability_ratio: f64,
    /// `|D_v u|_2` over space-time.
    pub grad_l2: f64,
    /// `|u H(D_v u)|_1` over space-time.
    pub u_h_l1: f64,
    /// `|u|_inf`, `|G|_inf + T |F|_inf`.
    pub sup_abs: f64,
    pub max_principle_bound: f64,
    /// `(T - t) |Delta_v u(t)|_2` per level.
    pub blow_up: Vec<f64>,
}

/// `Delta_v u` with Neumann ghosts.
pub fn laplacian_v(u: &Field) -> Field {
    let grid = *u.grid();
    let vals = u.values();
    let h2 = grid.h_v() * grid.h_v();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|cell| {
            let (pm, pp) = one_sided(vals, &grid, cell);
            (0..grid.d()).map(|a| (pp[a] - pm[a]) * grid.h_v() / h2).sum()
        })
        .collect();
    Field::from_values_unchecked(&grid, out)
}

pub fn hjb_norm_report(u: &SpaceTimeField, f: &SpaceTimeField, g: &Field, h: &HamiltonianSpec) -> HjbNormReport {
    let grid = *u.grid();
    let sup_u_l2 = u.slices().iter().map(|s| lp_norm(s, 2.0)).fold(0.0, f64::max);
    let f_l2 = lp_norm_spacetime(f, 2.0);
    let g_l2 = lp_norm(g, 2.0);
    let data = f_l2 + g_l2;
    let grads: Vec<VectorField> = u.slices().iter().map(discrete_gradient_v).collect();
    let grad_sq = SpaceTimeField::from_slices(&grid, grads.iter().map(VectorField::norm_squared).collect())
        .expect("levels match");
    let grad_l2 = lp_norm_spacetime(&grad_sq, 1.0).sqrt();
    let uh = SpaceTimeField::from_slices(
        &grid,
        u.slices()
            .iter()
            .zip(&grads)
            .map(|(s, du)| {
                let vals = (0..grid.len()).map(|c| s.values()[c] * h.eval(&du.at_cell(c))).collect();
                Field::from_values_unchecked(&grid, vals)
            })
            .collect(),
    )
    .expect("levels match");
    let f_inf = f.slices().iter().map(|s| lp_norm(s, f64::INFINITY)).fold(0.0, f64::max);
    HjbNormReport {
        sup_u_l2,
        f_l2,
        g_l2,
        stability_ratio: if data > 0.0 { sup_u_l2 / data } else { 0.0 },
        grad_l2,
        u_h_l1: lp_norm_spacetime(&uh, 1.0),
        sup_abs: u.slices().iter().map(|s| lp_norm(s, f64::INFINITY)).fold(0.0, f64::max),
        max_principle_bound: lp_norm(g, f64::INFINITY) + grid.t_final() * f_inf,
        blow_up: u
            .slices()
            .iter()
            .enumerate()
            .map(|(k, s)| (grid.t_final() - grid.time(k)) * lp_norm(&laplacian_v(s), 2.0))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_grid::{build_grid, GridConfig};
    use approx::assert_relative_eq;

    fn grid() -> PhaseGrid {
        build_grid(&GridConfig::new_1d(1.0, 40, 2.0, 16, 3.0, 24)).unwrap()
    }

    fn sl() -> OperatorConfig {
        OperatorConfig::new(TransportScheme::SemiLagrangian, 0.9).unwrap()
    }

    fn solve(h: HamiltonianSpec, f: SpaceTimeField, g: Field) -> SpaceTimeField {
        solve_hjb(&HjbProblem::new(h, f, g, sl()).unwrap()).unwrap()
    }

    #[test]
    fn constants_are_exact() {
        let g = grid();
        let u = solve(
            HamiltonianSpec::Zero,
            SpaceTimeField::constant_in_time(&g, &Field::zeros(&g)),
            Field::constant(&g, 0.7),
        );
        assert!(u.slices().iter().all(|s| s.values().iter().all(|&v| (v - 0.7).abs() < 1e-14)));
    }

    #[test]
    fn unit_source_gives_remaining_time() {
        let g = grid();
        let u = solve(
            HamiltonianSpec::quadratic(),
            SpaceTimeField::constant_in_time(&g, &Field::constant(&g, 1.0)),
            Field::zeros(&g),
        );
        for k in 0..=g.n_t() {
            let want = g.t_final() - g.time(k);
            assert!(u.slice(k).values().iter().all(|&v| (v - want).abs() < 1e-12));
        }
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = grid();
        let du = discrete_gradient_v(&Field::from_fn(&g, |_, v| v[0] * v[0]));
        for iv in 1..g.n_v() - 1 {
            assert_relative_eq!(du.component(0).at(3, iv), 2.0 * g.v_center(iv), epsilon = 1e-12);
        }
        let du = discrete_gradient_v(&Field::constant(&g, 4.0));
        assert_eq!(du.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_sine() {
        let g = build_grid(&GridConfig::new_1d(1.0, 4, 1.0, 4, 3.0, 64)).unwrap();
        let du = discrete_gradient_v(&Field::from_fn(&g, |_, v| v[0].sin()));
        let h = g.h_v();
        for iv in 1..g.n_v() - 1 {
            let err = (du.component(0).at(0, iv) - g.v_center(iv).cos()).abs();
            assert!(err <= h * h / 6.0 + 1e-14);
        }
    }

    #[test]
    fn max_principle_with_quadratic_hamiltonian() {
        let g = grid();
        let gt = Field::from_fn(&g, |x, v| (-(x[0] * x[0] + v[0] * v[0])).exp());
        let h = HamiltonianSpec::regularized(HamiltonianSpec::quadratic(), 0.5).unwrap();
        let f = SpaceTimeField::constant_in_time(&g, &Field::zeros(&g));
        let u = solve(h.clone(), f.clone(), gt.clone());
        let r = hjb_norm_report(&u, &f, &gt, &h);
        assert!(u.min() >= 0.0);
        assert!(r.sup_abs <= r.max_principle_bound * (1.0 + 1e-12));
    }

    #[test]
    fn raw_quadratic_cfl_is_checked() {
        let g = build_grid(&GridConfig::new_1d(1.0, 2, 2.0, 16, 3.0, 48)).unwrap();
        let gt = Field::from_fn(&g, |_, v| 20.0 * (3.0 * v[0]).sin());
        let f = SpaceTimeField::constant_in_time(&g, &Field::zeros(&g));
        let err = solve_hjb(&HjbProblem::new(HamiltonianSpec::quadratic(), f, gt, sl()).unwrap());
        assert!(matches!(err, Err(KmfgError::Cfl { .. })));
    }

    #[test]
    fn linear_in_data_when_h_vanishes() {
        let g = grid();
        let gt = Field::from_fn(&g, |x, v| x[0].cos() + v[0]);
        let f = SpaceTimeField::from_fn(&g, |t, x, v| t * x[0].sin() * v[0]);
        let u1 = solve(HamiltonianSpec::Zero, f.clone(), gt.clone());
        let u2 = solve(HamiltonianSpec::Zero, f.map(|v| 2.0 * v), gt.map(|v| 2.0 * v));
        let r1 = hjb_norm_report(&u1, &f, &gt, &HamiltonianSpec::Zero);
        let r2 = hjb_norm_report(&u2, &f.map(|v| 2.0 * v), &gt.map(|v| 2.0 * v), &HamiltonianSpec::Zero);
        assert_relative_eq!(r2.sup_u_l2, 2.0 * r1.sup_u_l2, max_relative = 1e-12);
    }

    #[test]
    fn zero_data_zero_norms() {
        let g = grid();
        let f = SpaceTimeField::constant_in_time(&g, &Field::zeros(&g));
        let u = solve(HamiltonianSpec::quadratic(), f.clone(), Field::zeros(&g));
        let r = hjb_norm_report(&u, &f, &Field::zeros(&g), &HamiltonianSpec::quadratic());
        assert_eq!((r.sup_u_l2, r.grad_l2, r.u_h_l1, r.stability_ratio), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn lax_friedrichs_variant_keeps_bounds() {
        let g = grid();
        let gt = Field::from_fn(&g, |x, v| (x[0] + v[0]).sin());
        let f = SpaceTimeField::constant_in_time(&g, &Field::zeros(&g));
        let mut p = HjbProblem::new(HamiltonianSpec::SmoothLipschitz, f, gt, sl()).unwrap();
        p.scheme = NumericalHamiltonian::LaxFriedrichs;
        let u = solve_hjb(&p).unwrap();
        assert!(u.max() <= 1.0 + 1e-12 && u.min() >= -1.0 - 1e-12);
    }
}
