//! Named estimate series computed from solver output, with pass/fail checks
//! and CSV / JSON export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::coupling::CouplingSpec;
use crate::error::{KmfgError, Result};
use crate::fp::{de_giorgi_levels, LevelSequence};
use crate::hamiltonian::{hamiltonian_field, HamiltonianSpec};
use crate::hjb::{discrete_gradient_v, drift_from_value, laplacian_v};
use crate::phase_grid::{
    fractional_seminorm, integrate, lp_norm, lp_norm_spacetime, moment, pairwise_sum, FractionalAxis, Field, MomentWeight,
    SpaceTimeField, VectorField,
};

/// Floor added under the square root in `D_v sqrt(m)`.
pub const SQRT_FLOOR: f64 = 1e-12;
/// Relative slack allowed on discretized inequalities.
pub const SLACK: f64 = 0.05;

/// `Q = d + 2`, `q = (Q+2)/(Q+1)`, `p = (Q+2)/Q`.
pub fn gain_exponents(d: usize) -> (f64, f64) {
    let big_q = d as f64 + 2.0;
    ((big_q + 2.0) / (big_q + 1.0), (big_q + 2.0) / big_q)
}

fn spacetime(grid: &crate::phase_grid::PhaseGrid, slices: Vec<Field>) -> SpaceTimeField {
    SpaceTimeField::from_slices(grid, slices).expect("one slice per level")
}

/// `(1/n) int int_{n < f < 2n} |D_v f|^2`.
pub fn renorm_residual(f: &SpaceTimeField, n: f64) -> Result<f64> {
    if !(n > 0.0) {
        return Err(KmfgError::InvalidArgument("level must be positive".into()));
    }
    let grid = *f.grid();
    let slices = f
        .slices()
        .iter()
        .map(|s| {
            let g2 = discrete_gradient_v(s).norm_squared();
            s.zip_map(&g2, |v, g| if v > n && v < 2.0 * n { g } else { 0.0 })
        })
        .collect();
    Ok(lp_norm_spacetime(&spacetime(&grid, slices), 1.0) / n)
}

/// `(|m|_p, |m |b|^2|_q)` over space-time with the exponents of
/// [`gain_exponents`].
pub fn gain_norms(m: &SpaceTimeField, b: &[VectorField]) -> (f64, f64) {
    let grid = *m.grid();
    let (q, p) = gain_exponents(grid.d());
    let mb = m
        .slices()
        .iter()
        .zip(b)
        .map(|(ms, bs)| ms.zip_map(&bs.norm_squared(), |a, c| a * c))
        .collect();
    (lp_norm_spacetime(m, p), lp_norm_spacetime(&spacetime(&grid, mb), q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LasryLions {
    /// `int (G(m(T)) - G(m'(T))) (m(T) - m'(T))`.
    pub terminal: f64,
    /// `int int (F(m) - F(m')) (m - m')`.
    pub running: f64,
    /// The two convexity brackets weighted by `m` and `m'`.
    pub convexity: f64,
}

pub fn lasry_lions_terms(
    u: &SpaceTimeField,
    m: &SpaceTimeField,
    u2: &SpaceTimeField,
    m2: &SpaceTimeField,
    coupling: &CouplingSpec,
    h: &HamiltonianSpec,
) -> Result<LasryLions> {
    let grid = *u.grid();
    for f in [m, u2, m2] {
        grid.ensure_same_space(f.grid())?;
    }
    let (mt, mt2) = (m.last(), m2.last());
    let g1 = coupling.terminal_field(mt)?;
    let g2 = coupling.terminal_field(mt2)?;
    let dg = g1.zip_map(&g2, |a, b| a - b);
    let terminal = integrate(&dg.zip_map(&mt.zip_map(mt2, |a, b| a - b), |a, b| a * b));
    let mut running = Vec::with_capacity(grid.n_t() + 1);
    let mut convexity = Vec::with_capacity(grid.n_t() + 1);
    for k in 0..=grid.n_t() {
        let t = grid.time(k);
        let (a, b) = (m.slice(k), m2.slice(k));
        let df = coupling.running_field(t, a)?.zip_map(&coupling.running_field(t, b)?, |x, y| x - y);
        running.push(grid.time_weight(k) * integrate(&df.zip_map(&a.zip_map(b, |x, y| x - y), |x, y| x * y)));
        let p1 = discrete_gradient_v(u.slice(k));
        let p2 = discrete_gradient_v(u2.slice(k));
        let cells: Vec<f64> = (0..grid.len())
            .map(|c| {
                let (p, q) = (p1.at_cell(c), p2.at_cell(c));
                let (hp, hq) = (h.eval(&p), h.eval(&q));
                let (gp, gq) = (h.grad(&p), h.grad(&q));
                let bracket1 = hq - hp - ((q[0] - p[0]) * gp[0] + (q[1] - p[1]) * gp[1]);
                let bracket2 = hp - hq - ((p[0] - q[0]) * gq[0] + (p[1] - q[1]) * gq[1]);
                a.values()[c] * bracket1 + b.values()[c] * bracket2
            })
            .collect();
        convexity.push(grid.time_weight(k) * pairwise_sum(&cells) * grid.cell_volume());
    }
    Ok(LasryLions {
        terminal,
        running: pairwise_sum(&running),
        convexity: pairwise_sum(&convexity),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Ledger {
    pub sup_u_l1: f64,
    pub f_l1: f64,
    pub fm_l1: f64,
    pub g_l1: f64,
    pub h_l1: f64,
    pub drift_energy: f64,
    /// `sup_t |u(t)|_1 + |H(D_v u)|_1` against `|F|_1 + |G|_1`.
    pub chain_lhs: f64,
    pub chain_rhs: f64,
    pub chain_holds: bool,
}

impl L1Ledger {
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("sup_u_l1", self.sup_u_l1),
            ("f_l1", self.f_l1),
            ("fm_l1", self.fm_l1),
            ("g_l1", self.g_l1),
            ("h_l1", self.h_l1),
            ("drift_energy", self.drift_energy),
        ]
    }
}

pub fn l1_ledger(u: &SpaceTimeField, m: &SpaceTimeField, coupling: &CouplingSpec, h: &HamiltonianSpec) -> Result<L1Ledger> {
    let grid = *u.grid();
    grid.ensure_same_space(m.grid())?;
    let f = m
        .slices()
        .iter()
        .enumerate()
        .map(|(k, s)| coupling.running_field(grid.time(k), s))
        .collect::<Result<Vec<_>>>()?;
    let fm: Vec<Field> = f.iter().zip(m.slices()).map(|(a, b)| a.zip_map(b, |x, y| x * y)).collect();
    let g = coupling.terminal_field(m.last())?;
    let mut hs = Vec::with_capacity(grid.n_t() + 1);
    let mut de = Vec::with_capacity(grid.n_t() + 1);
    for (us, ms) in u.slices().iter().zip(m.slices()) {
        hs.push(hamiltonian_field(h, &discrete_gradient_v(us)));
        de.push(drift_from_value(us, h).norm_squared().zip_map(ms, |a, b| a * b));
    }
    let sup_u_l1 = u.slices().iter().map(|s| lp_norm(s, 1.0)).fold(0.0, f64::max);
    let f_l1 = lp_norm_spacetime(&spacetime(&grid, f), 1.0);
    let g_l1 = lp_norm(&g, 1.0);
    let h_l1 = lp_norm_spacetime(&spacetime(&grid, hs), 1.0);
    let chain_lhs = sup_u_l1 + h_l1;
    let chain_rhs = f_l1 + g_l1;
    Ok(L1Ledger {
        sup_u_l1,
        f_l1,
        fm_l1: lp_norm_spacetime(&spacetime(&grid, fm), 1.0),
        g_l1,
        h_l1,
        drift_energy: lp_norm_spacetime(&spacetime(&grid, de), 1.0),
        chain_lhs,
        chain_rhs,
        chain_holds: chain_lhs <= (1.0 + SLACK) * chain_rhs,
    })
}

/// `|D_v sqrt(m + delta)|_2^2` for one slice.
pub fn sqrt_gradient(m: &Field) -> f64 {
    let root = m.map(|v| (v.max(0.0) + SQRT_FLOOR).sqrt());
    integrate(&discrete_gradient_v(&root).norm_squared())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyCheck {
    pub entropy: Vec<f64>,
    pub initial: f64,
    /// `1/2 |m |b|^2|_1`.
    pub drift_term: f64,
    /// `1/2 int int |D_v m|^2 / m = 2 int int |D_v sqrt(m)|^2`.
    pub fisher_term: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    /// `sup_t (int m log m + 1/2 int_0^t |D_v m|^2/m) <= initial + drift_term`,
    /// the dissipation moved to the left.
    pub sharp_lhs: f64,
    pub sharp_holds: bool,
}

pub fn entropy_check(m: &SpaceTimeField, b: Option<&[VectorField]>) -> Result<EntropyCheck> {
    let grid = *m.grid();
    let entropy = m
        .slices()
        .iter()
        .map(|s| moment(s, MomentWeight::Entropy))
        .collect::<Result<Vec<_>>>()?;
    let drift_term = match b {
        Some(b) => {
            let slices = m
                .slices()
                .iter()
                .zip(b)
                .map(|(ms, bs)| ms.zip_map(&bs.norm_squared(), |a, c| a * c))
                .collect();
            0.5 * lp_norm_spacetime(&spacetime(&grid, slices), 1.0)
        }
        None => 0.0,
    };
    let fisher: Vec<f64> = m.slices().iter().map(|s| 2.0 * sqrt_gradient(s)).collect();
    let mut running = 0.0;
    let mut sharp_lhs = f64::NEG_INFINITY;
    for k in 0..=grid.n_t() {
        if k > 0 {
            running += 0.5 * grid.dt() * (fisher[k - 1] + fisher[k]);
        }
        sharp_lhs = sharp_lhs.max(entropy[k] + 0.5 * running);
    }
    let fisher_term = 0.5 * running;
    let initial = entropy[0];
    let lhs = entropy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rhs = initial + drift_term + fisher_term;
    let slack = SLACK * (initial.abs() + drift_term + fisher_term);
    Ok(EntropyCheck {
        entropy,
        initial,
        drift_term,
        fisher_term,
        lhs,
        rhs,
        slack,
        holds: lhs <= rhs + slack,
        sharp_lhs,
        sharp_holds: sharp_lhs <= initial + drift_term + slack,
    })
}

/// `sup_t int_{|(x,v)| > r} m(t)`.
pub fn tail_mass(m: &SpaceTimeField, r: f64) -> f64 {
    let grid = m.grid();
    let nv = grid.cells_v();
    m.slices()
        .iter()
        .map(|s| {
            let vals: Vec<f64> = s
                .values()
                .iter()
                .enumerate()
                .filter(|(c, _)| {
                    let (x, v) = (grid.x_point(c / nv), grid.v_point(c % nv));
                    x[0] * x[0] + x[1] * x[1] + v[0] * v[0] + v[1] * v[1] > r * r
                })
                .map(|(_, &v)| v)
                .collect();
            pairwise_sum(&vals) * grid.cell_volume()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    /// `C = R0^2 tail(R0)` at the fitting radius.
    pub constant: f64,
    pub radii: Vec<f64>,
    pub tails: Vec<f64>,
    pub holds: bool,
}

/// Fits `C` at `radii[0]` and checks `tail(R) <= C / R^2` at the others.
pub fn tail_check(m: &SpaceTimeField, radii: &[f64]) -> TailCheck {
    let tails: Vec<f64> = radii.iter().map(|&r| tail_mass(m, r)).collect();
    let constant = radii[0] * radii[0] * tails[0];
    let holds = radii
        .iter()
        .zip(&tails)
        .skip(1)
        .all(|(&r, &t)| t <= constant / (r * r) * (1.0 + 1e-12));
    TailCheck {
        constant,
        radii: radii.to_vec(),
        tails,
        holds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    /// Least-squares fit `log M(t) ~ log A + B t`.
    pub a: f64,
    pub b: f64,
    /// Smallest `A'` with `M(t) <= A' e^{B t}` at every level.
    pub envelope: f64,
}

pub fn growth_fit(times: &[f64], values: &[f64]) -> GrowthFit {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        let a = values.iter().copied().fold(0.0, f64::max);
        return GrowthFit { a, b: 0.0, envelope: a };
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = (my - b * mt).exp();
    let envelope = times
        .iter()
        .zip(values)
        .map(|(&t, &v)| v * (-b * t).exp())
        .fold(0.0, f64::max);
    GrowthFit { a, b, envelope }
}

/// Centred periodic differences along the position axes.
pub fn gradient_x(f: &Field) -> VectorField {
    let grid = *f.grid();
    let (n, nv) = (grid.n_x(), grid.cells_v());
    let vals = f.values();
    let comps = (0..grid.d())
        .map(|a| {
            let out = (0..grid.len())
                .map(|c| {
                    let (ix, iv) = (c / nv, c % nv);
                    let (i, stride) = match (grid.d(), a) {
                        (1, _) => (ix, 1),
                        (_, 0) => (ix / n, n),
                        _ => (ix % n, 1),
                    };
                    let up = ix - i * stride + ((i + 1) % n) * stride;
                    let down = ix - i * stride + ((i + n - 1) % n) * stride;
                    (vals[up * nv + iv] - vals[down * nv + iv]) / (2.0 * grid.h_x())
                })
                .collect();
            Field::from_values_unchecked(&grid, out)
        })
        .collect();
    VectorField::from_components(comps).expect("same grid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub sup_dx_m: f64,
    pub sup_dv_m: f64,
    /// Space-time `|D_vv m|_2` and `|D_v D_x m|_2`.
    pub dvv_m: f64,
    pub dvdx_m: f64,
    pub frac_x: f64,
    pub frac_t: f64,
}

pub fn regularity_report(m: &SpaceTimeField) -> Result<RegularityReport> {
    let grid = *m.grid();
    let mut sup_dx = 0.0f64;
    let mut sup_dv = 0.0f64;
    let mut dvv = Vec::with_capacity(grid.n_t() + 1);
    let mut dvdx = Vec::with_capacity(grid.n_t() + 1);
    for s in m.slices() {
        let gx = gradient_x(s);
        let gv = discrete_gradient_v(s);
        sup_dx = sup_dx.max(integrate(&gx.norm_squared()).sqrt());
        sup_dv = sup_dv.max(integrate(&gv.norm_squared()).sqrt());
        dvv.push(laplacian_v(s).map(|v| v * v));
        let mut mixed = Field::zeros(&grid);
        for c in gv.components() {
            mixed = mixed.zip_map(&gradient_x(c).norm_squared(), |a, b| a + b);
        }
        dvdx.push(mixed);
    }
    Ok(RegularityReport {
        sup_dx_m: sup_dx,
        sup_dv_m: sup_dv,
        dvv_m: lp_norm_spacetime(&spacetime(&grid, dvv), 1.0).sqrt(),
        dvdx_m: lp_norm_spacetime(&spacetime(&grid, dvdx), 1.0).sqrt(),
        frac_x: fractional_seminorm(m, 1.0 / 3.0, FractionalAxis::X)?,
        frac_t: fractional_seminorm(m, 1.0 / 3.0, FractionalAxis::T)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Hard checks decide the exit status of a run.
    pub hard: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DiagnosticsReport {
    /// Per-level series indexed by time.
    pub series: BTreeMap<String, Vec<f64>>,
    /// Series indexed by something other than time (levels, `n`, ...).
    pub indexed: BTreeMap<String, Vec<(f64, f64)>>,
    pub scalars: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub times: Vec<f64>,
}

impl DiagnosticsReport {
    pub fn check(&mut self, name: &str, passed: bool, hard: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            hard,
            detail,
        });
    }

    pub fn hard_ok(&self) -> bool {
        self.checks.iter().filter(|c| c.hard).all(|c| c.passed)
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One CSV per series plus `summary.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, values) in &self.series {
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.csv")))?);
            writeln!(w, "time,value")?;
            for (t, v) in self.times.iter().zip(values) {
                writeln!(w, "{t:.17e},{v:.17e}")?;
            }
            w.flush()?;
        }
        for (name, values) in &self.indexed {
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.csv")))?);
            writeln!(w, "index,value")?;
            for (i, v) in values {
                writeln!(w, "{i:.17e},{v:.17e}")?;
            }
            w.flush()?;
        }
        let json = serde_json::to_string_pretty(self).map_err(|e| KmfgError::Format(e.to_string()))?;
        std::fs::write(dir.join("summary.json"), json)?;
        Ok(())
    }
}

/// Inputs for the full suite; the value-function parts are optional so a
/// lone density checkpoint can be diagnosed.
pub struct SuiteInput<'a> {
    pub m: &'a SpaceTimeField,
    pub u: Option<&'a SpaceTimeField>,
    pub h: Option<&'a HamiltonianSpec>,
    pub coupling: Option<&'a CouplingSpec>,
    pub truncation_levels: &'a [f64],
    pub de_giorgi_count: usize,
}

pub fn run_suite(input: &SuiteInput<'_>) -> Result<DiagnosticsReport> {
    let m = input.m;
    let grid = *m.grid();
    let mut r = DiagnosticsReport {
        times: (0..=grid.n_t()).map(|k| grid.time(k)).collect(),
        ..Default::default()
    };
    let mass: Vec<f64> = m.slices().iter().map(integrate).collect();
    let mass_err = mass.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    r.check("mass", mass_err <= 1e-10, true, format!("max |mass - 1| = {mass_err:e}"));
    let min = m.min();
    r.check("positivity", min >= 0.0, true, format!("min m = {min:e}"));
    r.series.insert("mass".into(), mass);
    r.series.insert(
        "boundary_leakage".into(),
        m.slices().iter().map(crate::fp::boundary_mass).collect(),
    );
    if min < 0.0 {
        return Ok(r);
    }

    for (name, w) in [
        ("moment_x2", MomentWeight::XSquared),
        ("moment_v2", MomentWeight::VSquared),
        ("moment_v4", MomentWeight::VFourth),
        ("moment_x2_v2", MomentWeight::XSquaredPlusVSquared),
    ] {
        let s = m.slices().iter().map(|f| moment(f, w)).collect::<Result<Vec<_>>>()?;
        if name == "moment_v4" {
            let fit = growth_fit(&r.times, &s);
            r.scalars.insert("moment_v4_fit_a".into(), fit.a);
            r.scalars.insert("moment_v4_fit_b".into(), fit.b);
            r.scalars.insert("moment_v4_envelope".into(), fit.envelope);
        }
        r.series.insert(name.into(), s);
    }
    r.series.insert("sqrt_gradient".into(), m.slices().iter().map(sqrt_gradient).collect());

    let drift: Option<Vec<VectorField>> = match (input.u, input.h) {
        (Some(u), Some(h)) => Some(u.slices().iter().map(|s| drift_from_value(s, h)).collect()),
        _ => None,
    };
    let ent = entropy_check(m, drift.as_deref())?;
    r.check(
        "entropy",
        ent.holds,
        false,
        format!("sup entropy {:.6e} <= {:.6e} + slack {:.3e}", ent.lhs, ent.rhs, ent.slack),
    );
    r.scalars.insert("entropy_fisher_term".into(), ent.fisher_term);
    r.scalars.insert("entropy_drift_term".into(), ent.drift_term);
    r.series.insert("entropy".into(), ent.entropy.clone());

    let tails = tail_check(m, &[2.0, 3.0, 4.0]);
    r.check(
        "tails",
        tails.holds,
        false,
        format!("C = {:.4e}, tails {:?}", tails.constant, tails.tails),
    );

    let renorm: Vec<(f64, f64)> = input
        .truncation_levels
        .iter()
        .map(|&n| Ok((n, renorm_residual(m, n)?)))
        .collect::<Result<_>>()?;
    let sup = m.max();
    let zero_ok = renorm.iter().all(|&(n, v)| sup >= n || v == 0.0);
    let mono_ok = renorm.windows(2).all(|w| w[1].1 <= w[0].1);
    r.check("renorm_zero_above_sup", zero_ok, false, format!("sup m = {sup:.4e}"));
    r.check("renorm_monotone", mono_ok, false, format!("{renorm:?}"));
    r.indexed.insert("renorm_residual_fp".into(), renorm);
    if let Some(u) = input.u {
        let ru: Vec<(f64, f64)> = input
            .truncation_levels
            .iter()
            .map(|&n| Ok((n, renorm_residual(u, n)?)))
            .collect::<Result<_>>()?;
        r.indexed.insert("renorm_residual_hjb".into(), ru);
    }

    let levels: LevelSequence = de_giorgi_levels(m, input.de_giorgi_count, (sup / 3.0).max(f64::MIN_POSITIVE))?;
    r.check(
        "de_giorgi_chebyshev",
        levels.chebyshev_violations() == 0,
        false,
        format!("margins {:?}", levels.chebyshev_margin),
    );
    r.indexed.insert(
        "de_giorgi_u".into(),
        levels.alpha.iter().zip(&levels.u).map(|(&a, &u)| (a, u)).collect(),
    );
    let m0 = m.first();
    r.scalars.insert(
        "linf_ratio".into(),
        sup / lp_norm(m0, 2.0).max(lp_norm(m0, f64::INFINITY)),
    );

    let reg = regularity_report(m)?;
    r.scalars.insert("sup_dx_m".into(), reg.sup_dx_m);
    r.scalars.insert("sup_dv_m".into(), reg.sup_dv_m);
    r.scalars.insert("dvv_m".into(), reg.dvv_m);
    r.scalars.insert("dvdx_m".into(), reg.dvdx_m);
    r.scalars.insert("frac_x_third".into(), reg.frac_x);
    r.scalars.insert("frac_t_third".into(), reg.frac_t);

    if let Some(b) = &drift {
        let (mp, mbq) = gain_norms(m, b);
        r.scalars.insert("gain_m_p".into(), mp);
        r.scalars.insert("gain_mb2_q".into(), mbq);
    }
    if let (Some(u), Some(h), Some(c)) = (input.u, input.h, input.coupling) {
        let ledger = l1_ledger(u, m, c, h)?;
        r.check(
            "l1_chain",
            ledger.chain_holds,
            false,
            format!("{:.6e} <= 1.05 * {:.6e}", ledger.chain_lhs, ledger.chain_rhs),
        );
        for (name, v) in ledger.entries() {
            r.scalars.insert(format!("ledger_{name}"), v);
        }
        let gap = crate::mfg::duality_gap(u, m, c, h)?;
        r.scalars.insert("duality_gap".into(), gap.gap);
        r.scalars.insert("duality_rhs".into(), gap.initial);
        r.series.insert(
            "u_blow_up".into(),
            u.slices()
                .iter()
                .enumerate()
                .map(|(k, s)| (grid.t_final() - grid.time(k)) * lp_norm(&laplacian_v(s), 2.0))
                .collect(),
        );
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_grid::{build_grid, GridConfig, PhaseGrid};
    use approx::assert_relative_eq;

    fn grid() -> PhaseGrid {
        build_grid(&GridConfig::new_1d(1.0, 4, 2.0, 8, 2.0, 64)).unwrap()
    }

    #[test]
    fn exponents() {
        let (q, p) = gain_exponents(1);
        assert_relative_eq!(q, 1.25);
        assert_relative_eq!(p, 5.0 / 3.0);
        let (q, p) = gain_exponents(2);
        assert_relative_eq!(q, 1.2);
        assert_relative_eq!(p, 1.5);
        for d in 1..4 {
            let (q, p) = gain_exponents(d);
            assert_relative_eq!(1.0 / p, 1.0 / q - 1.0 / (d as f64 + 4.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn renorm_on_a_ramp() {
        // f = 1.5 n + n v on the band: gradient n where n < f < 2n, i.e. |v| < 1/2
        let g = grid();
        let n = 2.0;
        let f = SpaceTimeField::constant_in_time(&g, &Field::from_fn(&g, |_, v| 1.5 * n + n * v[0]));
        let got = renorm_residual(&f, n).unwrap();
        // band width in v is 1, x-length 4, time 1: (1/n) * n^2 * 1 * 4
        let inside = (0..g.n_v()).filter(|&j| (g.v_center(j)).abs() < 0.5).count() as f64;
        let want = n * inside * g.h_v() * 4.0;
        assert_relative_eq!(got, want, max_relative = 1e-12);
        assert_relative_eq!(want, 8.0, max_relative = 0.1);
        let small = SpaceTimeField::constant_in_time(&g, &Field::constant(&g, 1.0));
        assert_eq!(renorm_residual(&small, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn lasry_lions_signs() {
        let g = grid();
        let m = SpaceTimeField::constant_in_time(&g, &Field::constant(&g, 1.0 / g.box_volume()));
        let u = SpaceTimeField::from_fn(&g, |t, x, v| t + x[0].sin() * v[0]);
        let u2 = SpaceTimeField::from_fn(&g, |_, x, v| (x[0] + v[0]).cos());
        let h = HamiltonianSpec::quadratic();
        let c = CouplingSpec::linear();
        let same = lasry_lions_terms(&u, &m, &u, &m, &c, &h).unwrap();
        assert_eq!((same.terminal, same.running, same.convexity), (0.0, 0.0, 0.0));
        let ll = lasry_lions_terms(&u, &m, &u2, &m, &c, &h).unwrap();
        assert_eq!((ll.terminal, ll.running), (0.0, 0.0));
        assert!(ll.convexity > 0.0);
    }

    #[test]
    fn growth_fit_recovers_exponential() {
        let t: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 2.0 * (0.7 * t).exp()).collect();
        let fit = growth_fit(&t, &v);
        assert_relative_eq!(fit.a, 2.0, max_relative = 1e-10);
        assert_relative_eq!(fit.b, 0.7, max_relative = 1e-10);
    }

    #[test]
    fn x_gradient_of_sine() {
        let g = build_grid(&GridConfig::new_1d(1.0, 4, std::f64::consts::PI, 64, 1.0, 4)).unwrap();
        let gx = gradient_x(&Field::from_fn(&g, |x, _| x[0].sin()));
        for ix in 0..g.n_x() {
            assert!((gx.component(0).at(ix, 0) - g.x_node(ix).cos()).abs() < 2e-3);
        }
    }
}
