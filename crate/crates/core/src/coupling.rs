//! Monotone local couplings `F(t,x,v,m)` and `G(x,v,m)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KmfgError, Result};
use crate::phase_grid::{Coord, Field, PhaseGrid};

/// Scalar law `m -> phi(m)` applied to the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityLaw {
    Zero,
    /// `a m`
    Linear(f64),
    /// `m + m^2`
    LinearPlusSquare,
    /// `m + m^3`
    LinearPlusCube,
    /// `m^2` (not strictly increasing at 0; used to exercise failure paths)
    Square,
    /// `m + sin(m)/2`
    LinearPlusHalfSine,
}

impl DensityLaw {
    pub fn value(&self, m: f64) -> f64 {
        match *self {
            DensityLaw::Zero => 0.0,
            DensityLaw::Linear(a) => a * m,
            DensityLaw::LinearPlusSquare => m + m * m,
            DensityLaw::LinearPlusCube => m + m * m * m,
            DensityLaw::Square => m * m,
            DensityLaw::LinearPlusHalfSine => m + 0.5 * m.sin(),
        }
    }

    pub fn derivative(&self, m: f64) -> f64 {
        match *self {
            DensityLaw::Zero => 0.0,
            DensityLaw::Linear(a) => a,
            DensityLaw::LinearPlusSquare => 1.0 + 2.0 * m,
            DensityLaw::LinearPlusCube => 1.0 + 3.0 * m * m,
            DensityLaw::Square => 2.0 * m,
            DensityLaw::LinearPlusHalfSine => 1.0 + 0.5 * m.cos(),
        }
    }
}

/// Positive spatial weight `floor + amplitude exp(-(|x|^2+|v|^2)/(2 width^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub floor: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl Bump {
    pub fn value(&self, x: &Coord, v: &Coord) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1] + v[0] * v[0] + v[1] * v[1];
        self.floor + self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
    }
}

/// `weight(x,v) * law(m)`; built-ins are time independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingTerm {
    pub law: DensityLaw,
    pub weight: Option<Bump>,
}

impl CouplingTerm {
    pub fn plain(law: DensityLaw) -> Self {
        Self { law, weight: None }
    }

    fn weight_at(&self, x: &Coord, v: &Coord) -> f64 {
        self.weight.map_or(1.0, |w| w.value(x, v))
    }

    pub fn value(&self, x: &Coord, v: &Coord, m: f64) -> f64 {
        self.weight_at(x, v) * self.law.value(m)
    }

    pub fn derivative(&self, x: &Coord, v: &Coord, m: f64) -> f64 {
        self.weight_at(x, v) * self.law.derivative(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    /// `f_L = sup_{m in [0,L]} F`.
    L1,
    /// `f_L = sup_{m in [0,L]} F / m`.
    Ratio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub running: CouplingTerm,
    pub terminal: CouplingTerm,
    pub c0: f64,
    pub envelope_mode: EnvelopeMode,
}

fn check_density(m: f64) -> Result<()> {
    if m >= 0.0 {
        Ok(())
    } else {
        Err(KmfgError::InvalidArgument(format!(
            "density must be nonnegative, got {m}"
        )))
    }
}

impl CouplingSpec {
    /// `F = G = 0`.
    pub fn none() -> Self {
        Self {
            running: CouplingTerm::plain(DensityLaw::Zero),
            terminal: CouplingTerm::plain(DensityLaw::Zero),
            c0: 0.0,
            envelope_mode: EnvelopeMode::Ratio,
        }
    }

    /// `F = G = m`.
    pub fn linear() -> Self {
        Self {
            running: CouplingTerm::plain(DensityLaw::Linear(1.0)),
            terminal: CouplingTerm::plain(DensityLaw::Linear(1.0)),
            c0: 1.0,
            envelope_mode: EnvelopeMode::Ratio,
        }
    }

    /// `F = G = phi(x,v) (m + m^2)` with a positive bump `phi`.
    pub fn bump_quadratic(c0: f64) -> Self {
        let term = CouplingTerm {
            law: DensityLaw::LinearPlusSquare,
            weight: Some(Bump {
                floor: c0,
                amplitude: 1.0,
                width: 1.0,
            }),
        };
        Self {
            running: term,
            terminal: term,
            c0,
            envelope_mode: EnvelopeMode::L1,
        }
    }

    pub fn with_running(law: DensityLaw, c0: f64) -> Self {
        Self {
            running: CouplingTerm::plain(law),
            terminal: CouplingTerm::plain(law),
            c0,
            envelope_mode: EnvelopeMode::Ratio,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.running.law == DensityLaw::Zero && self.terminal.law == DensityLaw::Zero
    }

    pub fn eval_f(&self, _t: f64, x: &Coord, v: &Coord, m: f64) -> Result<f64> {
        check_density(m)?;
        Ok(self.running.value(x, v, m))
    }

    pub fn eval_g(&self, x: &Coord, v: &Coord, m: f64) -> Result<f64> {
        check_density(m)?;
        Ok(self.terminal.value(x, v, m))
    }

    /// `F(t, ., ., m(.))` as a field; negative densities are rejected.
    pub fn running_field(&self, t: f64, m: &Field) -> Result<Field> {
        self.compose(m, |x, v, mv| self.eval_f(t, x, v, mv))
    }

    pub fn terminal_field(&self, m: &Field) -> Result<Field> {
        self.compose(m, |x, v, mv| self.eval_g(x, v, mv))
    }

    fn compose(&self, m: &Field, f: impl Fn(&Coord, &Coord, f64) -> Result<f64>) -> Result<Field> {
        let grid = m.grid();
        let nv = grid.cells_v();
        let mut out = Vec::with_capacity(grid.len());
        for (cell, &mv) in m.values().iter().enumerate() {
            out.push(f(&grid.x_point(cell / nv), &grid.v_point(cell % nv), mv)?);
        }
        Field::from_values(grid, out)
    }

    pub fn monotone_check(
        &self,
        grid: &PhaseGrid,
        m_max: f64,
        n_points: usize,
        seed: u64,
    ) -> Result<MonotoneReport> {
        if !(m_max > 0.0) {
            return Err(KmfgError::InvalidArgument("m_max must be positive".into()));
        }
        let n_m = 1024;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_f = f64::INFINITY;
        let mut min_g = f64::INFINITY;
        for _ in 0..n_points.max(1) {
            let x = random_point(&mut rng, grid.d(), grid.l_x());
            let v = random_point(&mut rng, grid.d(), grid.l_v());
            for (term, slot) in [(&self.running, &mut min_f), (&self.terminal, &mut min_g)] {
                let mut prev = term.value(&x, &v, 0.0);
                for i in 1..=n_m {
                    let m = m_max * i as f64 / n_m as f64;
                    let cur = term.value(&x, &v, m);
                    *slot = slot.min((cur - prev) / (m_max / n_m as f64));
                    prev = cur;
                }
            }
        }
        Ok(MonotoneReport {
            min_slope_f: min_f,
            min_slope_g: min_g,
            c0: self.c0,
        })
    }

    /// Envelope `f_L` of the running coupling on the grid, plus a sampled
    /// check of `F <= f_L + (m/L) F` (L1 mode) or `F <= f_L m + (m/L) F`
    /// (ratio mode).
    pub fn envelope(&self, grid: &PhaseGrid, l: f64, n_checks: usize, seed: u64) -> Result<EnvelopeReport> {
        if !(l > 0.0) {
            return Err(KmfgError::InvalidArgument("L must be positive".into()));
        }
        let ms = envelope_samples(l);
        let nv = grid.cells_v();
        let mut values = Vec::with_capacity(grid.len());
        for cell in 0..grid.len() {
            let (x, v) = (grid.x_point(cell / nv), grid.v_point(cell % nv));
            values.push(self.envelope_at(&x, &v, &ms));
        }
        let field = Field::from_values(grid, values)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violations = 0;
        let mut worst = f64::INFINITY;
        for _ in 0..n_checks {
            let cell = rng.random_range(0..grid.len());
            let (x, v) = (grid.x_point(cell / nv), grid.v_point(cell % nv));
            let m = rng.random::<f64>() * 4.0 * l;
            let f = self.running.value(&x, &v, m);
            let fl = field.values()[cell];
            let rhs = match self.envelope_mode {
                EnvelopeMode::L1 => fl + m / l * f,
                EnvelopeMode::Ratio => fl * m + m / l * f,
            };
            let margin = rhs - f;
            worst = worst.min(margin);
            if margin < -1e-12 * f.abs().max(1.0) {
                violations += 1;
            }
        }
        Ok(EnvelopeReport {
            envelope: field,
            checks: n_checks,
            violations,
            worst_margin: worst,
        })
    }

    fn envelope_at(&self, x: &Coord, v: &Coord, ms: &[f64]) -> f64 {
        match self.envelope_mode {
            EnvelopeMode::L1 => ms
                .iter()
                .map(|&m| self.running.value(x, v, m))
                .fold(f64::NEG_INFINITY, f64::max),
            EnvelopeMode::Ratio => ms
                .iter()
                .filter(|&&m| m > 0.0)
                .map(|&m| self.running.value(x, v, m) / m)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// 1024 sample densities on `[0, L]`: zero, 256 log-spaced points in
/// `[1e-9 L, L/16)`, then uniform up to `L` inclusive.
pub fn envelope_samples(l: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(1024);
    out.push(0.0);
    let n_log = 256;
    let (lo, hi) = ((1e-9_f64).ln(), (1.0_f64 / 16.0).ln());
    for i in 0..n_log {
        out.push(l * (lo + (hi - lo) * i as f64 / n_log as f64).exp());
    }
    let n_lin = 1024 - 1 - n_log;
    for i in 0..n_lin {
        let s = 1.0 / 16.0 + (1.0 - 1.0 / 16.0) * i as f64 / (n_lin - 1) as f64;
        out.push(l * s);
    }
    out
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, half: f64) -> Coord {
    let mut p = [0.0; 2];
    for c in p.iter_mut().take(d) {
        *c = (rng.random::<f64>() * 2.0 - 1.0) * half;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub min_slope_f: f64,
    pub min_slope_g: f64,
    pub c0: f64,
}

impl MonotoneReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.min_slope_f >= self.c0 - tol && self.min_slope_g >= self.c0 - tol
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeReport {
    pub envelope: Field,
    pub checks: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingName {
    None,
    Linear,
    BumpQuadratic,
}

/// Manifest form: `{"name": "linear", "c0": 1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub name: CouplingName,
    #[serde(default = "default_c0")]
    pub c0: f64,
}

fn default_c0() -> f64 {
    1.0
}

impl CouplingConfig {
    pub fn to_spec(&self) -> CouplingSpec {
        match self.name {
            CouplingName::None => CouplingSpec::none(),
            CouplingName::Linear => CouplingSpec {
                c0: self.c0,
                ..CouplingSpec::linear()
            },
            CouplingName::BumpQuadratic => CouplingSpec::bump_quadratic(self.c0),
        }
    }
}
