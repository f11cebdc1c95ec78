//! Fixed-point solution of the coupled system.
//!
//! `Phi(mu)`: solve the HJB equation with `F(mu)` and `G(mu(T))`, take
//! `b = H_p(D_v u)`, push `m0` forward. The driver iterates the damped map
//! `m <- (1 - theta) m + theta Phi(m)` and measures progress in
//! `sup_t |.|_2`.

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingSpec;
use crate::diagnostics::{l1_ledger, lasry_lions_terms, L1Ledger, LasryLions};
use crate::error::{KmfgError, Result};
use crate::fp::{solve_fp, FpProblem};
use crate::hamiltonian::{legendre_excess_field, HamiltonianSpec};
use crate::hjb::{discrete_gradient_v, drift_from_value, solve_hjb, HjbProblem, NumericalHamiltonian};
use crate::kolmogorov::{OperatorConfig, TransportScheme};
use crate::phase_grid::{integrate, lp_norm_spacetime, Field, PhaseGrid, SpaceTimeField};

/// Consecutive residual increases treated as divergence.
pub const DIVERGENCE_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfgConfig {
    #[serde(default = "defaults::damping")]
    pub damping: f64,
    #[serde(default = "defaults::tol")]
    pub tol_fixed_point: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub epsilon_schedule: Vec<f64>,
    #[serde(default = "defaults::truncation")]
    pub truncation_levels: Vec<f64>,
}

mod defaults {
    pub fn damping() -> f64 {
        0.5
    }
    pub fn tol() -> f64 {
        1e-6
    }
    pub fn max_iters() -> usize {
        100
    }
    pub fn truncation() -> Vec<f64> {
        vec![2.0, 4.0, 8.0]
    }
}

impl Default for MfgConfig {
    fn default() -> Self {
        Self {
            damping: defaults::damping(),
            tol_fixed_point: defaults::tol(),
            max_iters: defaults::max_iters(),
            epsilon_schedule: Vec::new(),
            truncation_levels: defaults::truncation(),
        }
    }
}

impl MfgConfig {
    /// Checks ranges; errors name the offending field.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(("damping", "damping must lie in (0,1]".into()));
        }
        if !(self.tol_fixed_point > 0.0) {
            return Err(("tol_fixed_point", "tolerance must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(("max_iters", "max_iters must be at least 1".into()));
        }
        if self.epsilon_schedule.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(("epsilon_schedule", "schedule entries must be positive".into()));
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(("epsilon_schedule", "schedule must be strictly decreasing".into()));
        }
        if self.truncation_levels.iter().any(|&k| !(k > 0.0)) {
            return Err(("truncation_levels", "truncation levels must be positive".into()));
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        self.validate()
            .map_err(|(field, msg)| KmfgError::InvalidArgument(format!("{field}: {msg}")))
    }
}

#[derive(Debug, Clone)]
pub struct MfgProblem {
    pub h: HamiltonianSpec,
    pub coupling: CouplingSpec,
    pub m0: Field,
    pub hjb_operator: OperatorConfig,
    pub fp_operator: OperatorConfig,
    pub hjb_scheme: NumericalHamiltonian,
}

impl MfgProblem {
    pub fn new(h: HamiltonianSpec, coupling: CouplingSpec, m0: Field) -> Self {
        Self {
            h,
            coupling,
            m0,
            hjb_operator: OperatorConfig {
                transport: TransportScheme::SemiLagrangian,
                ..OperatorConfig::default()
            },
            fp_operator: OperatorConfig::default(),
            hjb_scheme: NumericalHamiltonian::default(),
        }
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.m0.grid()
    }

    pub fn with_hamiltonian(&self, h: HamiltonianSpec) -> Self {
        Self { h, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct PhiOutput {
    pub u: SpaceTimeField,
    pub m: SpaceTimeField,
    pub mass: Vec<f64>,
    pub leakage: Vec<f64>,
}

fn coupling_fields(prob: &MfgProblem, mu: &SpaceTimeField) -> Result<(SpaceTimeField, Field)> {
    let grid = *prob.grid();
    let f = mu
        .slices()
        .iter()
        .enumerate()
        .map(|(k, s)| prob.coupling.running_field(grid.time(k), s))
        .collect::<Result<Vec<_>>>()?;
    let g = prob.coupling.terminal_field(mu.last())?;
    Ok((SpaceTimeField::from_slices(&grid, f)?, g))
}

pub fn phi_map(prob: &MfgProblem, mu: &SpaceTimeField) -> Result<PhiOutput> {
    prob.grid().ensure_same_space(mu.grid())?;
    if mu.min() < 0.0 {
        return Err(KmfgError::InvalidArgument("density guess must be nonnegative".into()));
    }
    let (f, g) = coupling_fields(prob, mu)?;
    let mut hjb = HjbProblem::new(prob.h.clone(), f, g, prob.hjb_operator)?;
    hjb.scheme = prob.hjb_scheme;
    let u = solve_hjb(&hjb)?;
    let drift = if prob.h.is_zero() {
        None
    } else {
        Some(u.slices().iter().map(|s| drift_from_value(s, &prob.h)).collect())
    };
    let sol = solve_fp(&FpProblem::new(prob.m0.clone(), drift, prob.fp_operator)?)?;
    Ok(PhiOutput {
        u,
        m: sol.m,
        mass: sol.mass,
        leakage: sol.leakage,
    })
}

/// `m0` carried by the drift-free kinetic flow.
pub fn kolmogorov_guess(prob: &MfgProblem) -> Result<SpaceTimeField> {
    Ok(solve_fp(&FpProblem::new(prob.m0.clone(), None, prob.fp_operator)?)?.m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MfgStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub u: SpaceTimeField,
    /// Density produced by the last evaluation of `Phi`.
    pub m: SpaceTimeField,
    pub residual_history: Vec<f64>,
    /// Regularization level, 0 when `H` was used as given.
    pub epsilon: f64,
    pub status: MfgStatus,
    pub mass: Vec<f64>,
    pub leakage: Vec<f64>,
    /// Lasry-Lions terms between consecutive evaluations of `Phi`.
    pub lasry_lions: Vec<LasryLions>,
    pub hamiltonian: HamiltonianSpec,
}

impl MfgSolution {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

fn epsilon_of(h: &HamiltonianSpec) -> f64 {
    match h {
        HamiltonianSpec::Regularized { epsilon, .. } => *epsilon,
        _ => 0.0,
    }
}

pub fn solve_mfg(cfg: &MfgConfig, prob: &MfgProblem) -> Result<MfgSolution> {
    let guess = kolmogorov_guess(prob)?;
    solve_mfg_from(cfg, prob, guess)
}

/// Same as [`solve_mfg`] from a caller-supplied initial density path.
pub fn solve_mfg_from(cfg: &MfgConfig, prob: &MfgProblem, guess: SpaceTimeField) -> Result<MfgSolution> {
    cfg.check()?;
    if prob.h.lipschitz_constant().is_none() {
        return Err(KmfgError::InvalidArgument(
            "Hamiltonian has no finite Lipschitz constant; use epsilon continuation".into(),
        ));
    }
    prob.grid().ensure_same_space(guess.grid())?;
    if guess.grid().n_t() != prob.grid().n_t() {
        return Err(KmfgError::GridMismatch("initial guess has a different time grid".into()));
    }
    let theta = cfg.damping;
    let mut mu = guess;
    let mut history = Vec::new();
    let mut lasry_lions = Vec::new();
    let mut previous: Option<PhiOutput> = None;
    let mut increases = 0;
    loop {
        let out = phi_map(prob, &mu)?;
        if let Some(prev) = &previous {
            lasry_lions.push(lasry_lions_terms(&out.u, &out.m, &prev.u, &prev.m, &prob.coupling, &prob.h)?);
        }
        let next = mu.zip_map(&out.m, |a, b| (1.0 - theta) * a + theta * b);
        let residual = next.sup_distance(&mu, 2.0);
        if let Some(&last) = history.last() {
            increases = if residual > last { increases + 1 } else { 0 };
        }
        history.push(residual);
        if increases >= DIVERGENCE_WINDOW {
            return Err(KmfgError::Divergence { history });
        }
        let done = residual <= cfg.tol_fixed_point;
        if done || history.len() >= cfg.max_iters {
            return Ok(MfgSolution {
                u: out.u,
                m: out.m,
                residual_history: history,
                epsilon: epsilon_of(&prob.h),
                status: if done { MfgStatus::Converged } else { MfgStatus::MaxIters },
                mass: out.mass,
                leakage: out.leakage,
                lasry_lions,
                hamiltonian: prob.h.clone(),
            });
        }
        mu = next;
        previous = Some(out);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationRecord {
    pub epsilon: f64,
    pub iterations: usize,
    pub status: MfgStatus,
    /// `|m |H_p^eps(D_v u)|^2|_1`.
    pub drift_energy: f64,
    pub ledger: L1Ledger,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationReport {
    pub records: Vec<ContinuationRecord>,
    /// `|m_i - m_(i+1)|_1` and `|u_i - u_(i+1)|_1` over space-time.
    pub cauchy_m_l1: Vec<f64>,
    pub cauchy_u_l1: Vec<f64>,
    /// Per truncation level `k`: `|D_v(u_i ^ k) - D_v(u_(i+1) ^ k)|_2`.
    pub truncated_gradient: Vec<(f64, Vec<f64>)>,
    /// Error that stopped the schedule early, if any.
    pub aborted: Option<String>,
}

pub struct Continuation {
    pub solutions: Vec<MfgSolution>,
    pub report: ContinuationReport,
}

/// `|m |H_p(D_v u)|^2|_1` over space-time.
pub fn drift_energy(u: &SpaceTimeField, m: &SpaceTimeField, h: &HamiltonianSpec) -> Result<f64> {
    let grid = *u.grid();
    let slices = u
        .slices()
        .iter()
        .zip(m.slices())
        .map(|(us, ms)| drift_from_value(us, h).norm_squared().zip_map(ms, |b2, m| b2 * m))
        .collect();
    Ok(lp_norm_spacetime(&SpaceTimeField::from_slices(&grid, slices)?, 1.0))
}

fn truncated_gradient_distance(a: &SpaceTimeField, b: &SpaceTimeField, k: f64) -> Result<f64> {
    let grid = *a.grid();
    let slices = a
        .slices()
        .iter()
        .zip(b.slices())
        .map(|(x, y)| {
            let gx = discrete_gradient_v(&x.map(|v| v.min(k)));
            let gy = discrete_gradient_v(&y.map(|v| v.min(k)));
            let mut acc = Field::zeros(&grid);
            for (cx, cy) in gx.components().iter().zip(gy.components()) {
                acc = acc.zip_map(&cx.zip_map(cy, |p, q| (p - q) * (p - q)), |s, t| s + t);
            }
            acc
        })
        .collect();
    Ok(lp_norm_spacetime(&SpaceTimeField::from_slices(&grid, slices)?, 1.0).sqrt())
}

/// Solves with `H^eps` for each `eps` of the schedule, warm-starting each
/// level from the previous density.
pub fn epsilon_continuation(cfg: &MfgConfig, prob: &MfgProblem) -> Result<Continuation> {
    cfg.check()?;
    if cfg.epsilon_schedule.is_empty() {
        return Err(KmfgError::InvalidArgument("epsilon schedule is empty".into()));
    }
    let base = match &prob.h {
        HamiltonianSpec::Regularized { base, .. } => base.as_ref().clone(),
        h => h.clone(),
    };
    let mut solutions: Vec<MfgSolution> = Vec::new();
    let mut records = Vec::new();
    let mut aborted = None;
    let mut guess = kolmogorov_guess(prob)?;
    for &eps in &cfg.epsilon_schedule {
        let level = prob.with_hamiltonian(HamiltonianSpec::regularized(base.clone(), eps)?);
        match solve_mfg_from(cfg, &level, guess.clone()) {
            Ok(sol) => {
                records.push(ContinuationRecord {
                    epsilon: eps,
                    iterations: sol.residual_history.len(),
                    status: sol.status,
                    drift_energy: drift_energy(&sol.u, &sol.m, &level.h)?,
                    ledger: l1_ledger(&sol.u, &sol.m, &level.coupling, &level.h)?,
                });
                guess = sol.m.clone();
                solutions.push(sol);
            }
            Err(e) => {
                aborted = Some(format!("epsilon = {eps}: {e}"));
                break;
            }
        }
    }
    let mut cauchy_m_l1 = Vec::new();
    let mut cauchy_u_l1 = Vec::new();
    for w in solutions.windows(2) {
        cauchy_m_l1.push(lp_norm_spacetime(&w[0].m.zip_map(&w[1].m, |a, b| a - b), 1.0));
        cauchy_u_l1.push(lp_norm_spacetime(&w[0].u.zip_map(&w[1].u, |a, b| a - b), 1.0));
    }
    let truncated_gradient = cfg
        .truncation_levels
        .iter()
        .map(|&k| {
            let d = solutions
                .windows(2)
                .map(|w| truncated_gradient_distance(&w[0].u, &w[1].u, k))
                .collect::<Result<Vec<_>>>()?;
            Ok((k, d))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Continuation {
        solutions,
        report: ContinuationReport {
            records,
            cauchy_m_l1,
            cauchy_u_l1,
            truncated_gradient,
            aborted,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityGap {
    pub terminal: f64,
    pub excess: f64,
    pub coupling: f64,
    pub initial: f64,
    /// `|terminal + excess + coupling - initial|`.
    pub gap: f64,
}

/// Both sides of the energy identity
/// `int u(T)m(T) + int int m (H_p(D_v u).D_v u - H) + int int F(m) m = int m0 u(0)`.
pub fn duality_gap(u: &SpaceTimeField, m: &SpaceTimeField, coupling: &CouplingSpec, h: &HamiltonianSpec) -> Result<DualityGap> {
    let grid = *u.grid();
    grid.ensure_same_space(m.grid())?;
    let terminal = integrate(&u.last().zip_map(m.last(), |a, b| a * b));
    let initial = integrate(&u.first().zip_map(m.first(), |a, b| a * b));
    let mut excess = 0.0;
    let mut coup = 0.0;
    for k in 0..=grid.n_t() {
        let w = grid.time_weight(k);
        let (us, ms) = (u.slice(k), m.slice(k));
        excess += w * integrate(&legendre_excess_field(h, &discrete_gradient_v(us)).zip_map(ms, |e, m| e * m));
        coup += w * integrate(&coupling.running_field(grid.time(k), ms)?.zip_map(ms, |f, m| f * m));
    }
    Ok(DualityGap {
        terminal,
        excess,
        coupling: coup,
        initial,
        gap: (terminal + excess + coup - initial).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::gaussian_initial;
    use crate::oracle::KineticGaussian;
    use crate::phase_grid::{build_grid, GridConfig};

    fn problem(h: HamiltonianSpec, coupling: CouplingSpec) -> MfgProblem {
        let g = build_grid(&GridConfig::new_1d(0.5, 20, 2.0, 16, 4.0, 20)).unwrap();
        let m0 = gaussian_initial(&g, &KineticGaussian::isotropic(0.0, 0.5, 0.5, 0.6)).unwrap();
        MfgProblem::new(h, coupling, m0)
    }

    #[test]
    fn config_validation() {
        let mut c = MfgConfig::default();
        assert!(c.validate().is_ok());
        c.epsilon_schedule = vec![0.1, 0.5];
        assert_eq!(c.validate().unwrap_err().1, "schedule must be strictly decreasing");
        c.epsilon_schedule = vec![];
        c.damping = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_hamiltonian_converges_at_once() {
        let p = problem(HamiltonianSpec::Zero, CouplingSpec::linear());
        let sol = solve_mfg(&MfgConfig::default(), &p).unwrap();
        assert_eq!(sol.residual_history, vec![0.0]);
        assert_eq!(sol.status, MfgStatus::Converged);
    }

    #[test]
    fn decoupled_phi_ignores_guess() {
        let p = problem(HamiltonianSpec::Zero, CouplingSpec::none());
        let a = phi_map(&p, &kolmogorov_guess(&p).unwrap()).unwrap();
        let uni = crate::fp::uniform_density(p.grid());
        let b = phi_map(&p, &SpaceTimeField::constant_in_time(p.grid(), &uni)).unwrap();
        assert_eq!(a.m.sup_distance(&b.m, 1.0), 0.0);
        assert_eq!(a.u.max(), 0.0);
        let gap = duality_gap(&a.u, &a.m, &p.coupling, &p.h).unwrap();
        assert_eq!(gap.gap, 0.0);
    }

    #[test]
    fn quadratic_requires_continuation() {
        let p = problem(HamiltonianSpec::quadratic(), CouplingSpec::linear());
        assert!(matches!(solve_mfg(&MfgConfig::default(), &p), Err(KmfgError::InvalidArgument(_))));
    }

    #[test]
    fn lipschitz_run_converges_and_is_unique() {
        let p = problem(HamiltonianSpec::SmoothLipschitz, CouplingSpec::linear());
        let cfg = MfgConfig::default();
        let a = solve_mfg(&cfg, &p).unwrap();
        assert_eq!(a.status, MfgStatus::Converged);
        let uni = crate::fp::uniform_density(p.grid());
        let b = solve_mfg_from(&cfg, &p, SpaceTimeField::constant_in_time(p.grid(), &uni)).unwrap();
        assert!(a.m.sup_distance(&b.m, 2.0) <= 10.0 * cfg.tol_fixed_point);
        for ll in &a.lasry_lions {
            assert!(ll.terminal >= -1e-12 && ll.running >= -1e-12 && ll.convexity >= -1e-12);
        }
    }

    #[test]
    fn duality_gap_ignores_constant_shift() {
        let p = problem(HamiltonianSpec::SmoothLipschitz, CouplingSpec::linear());
        let sol = solve_mfg(&MfgConfig::default(), &p).unwrap();
        let a = duality_gap(&sol.u, &sol.m, &p.coupling, &p.h).unwrap();
        let b = duality_gap(&sol.u.map(|v| v + 1.0), &sol.m, &p.coupling, &p.h).unwrap();
        assert!((a.gap - b.gap).abs() < 1e-9);
    }
}
