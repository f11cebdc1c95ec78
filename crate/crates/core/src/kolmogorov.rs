//! Discrete pieces of the kinetic operator `d_t -/+ v.D_x - Delta_v`.
//!
//! Time steps are Strang-split: half a transport step along `x` at fixed
//! `v`, a full implicit step in `v`, and another half transport step. The
//! `v` step is a backward-Euler solve per velocity line; in Fokker-Planck
//! mode it uses exponentially fitted two-point fluxes for
//! `Delta_v m + div_v(m b)`, which gives a column-stochastic M-matrix.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{KmfgError, Result};
use crate::phase_grid::{Field, PhaseGrid, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportScheme {
    /// First-order upwind; needs `dt L_v / h_x <= cfl_safety`.
    Upwind1,
    /// Linear-interpolation semi-Lagrangian shift. Monotone, conservative,
    /// no CFL restriction.
    SemiLagrangian,
    /// Flux-form semi-Lagrangian shift with MC-limited linear
    /// reconstruction. Positive, conservative, second order where smooth.
    SemiLagrangianLimited,
    /// Exact Fourier shift. Not positivity preserving.
    Spectral,
}

impl TransportScheme {
    pub fn preserves_positivity(&self) -> bool {
        !matches!(self, TransportScheme::Spectral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub transport: TransportScheme,
    #[serde(default = "default_true")]
    pub v_implicit: bool,
    pub cfl_safety: f64,
}

fn default_true() -> bool {
    true
}

impl OperatorConfig {
    pub fn new(transport: TransportScheme, cfl_safety: f64) -> Result<Self> {
        let cfg = Self {
            transport,
            v_implicit: true,
            cfl_safety,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(KmfgError::InvalidArgument(format!(
                "cfl_safety must lie in (0,1], got {}",
                self.cfl_safety
            )));
        }
        if !self.v_implicit {
            return Err(KmfgError::InvalidArgument(
                "only the implicit velocity step is implemented".into(),
            ));
        }
        Ok(())
    }
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            transport: TransportScheme::SemiLagrangianLimited,
            v_implicit: true,
            cfl_safety: 0.9,
        }
    }
}

/// Largest admissible `dt` given the transport scheme and a drift bound.
/// Returns `f64::INFINITY` when nothing constrains the step.
pub fn cfl_report(grid: &PhaseGrid, b_max: f64, cfg: &OperatorConfig) -> f64 {
    let d = grid.d() as f64;
    let transport = match cfg.transport {
        TransportScheme::Upwind1 => cfg.cfl_safety * grid.h_x() / (grid.l_v() * d),
        _ => f64::INFINITY,
    };
    let drift = if b_max > 0.0 {
        cfg.cfl_safety * grid.h_v() / (b_max * d)
    } else {
        f64::INFINITY
    };
    transport.min(drift)
}

/// Displaces each fixed-velocity slice along `x` by `sign * v * dt`, i.e.
/// `f_new(x, v) = f(x - sign v dt, v)`.
pub fn transport_step(f: &Field, dt: f64, sign: f64, cfg: &OperatorConfig) -> Result<Field> {
    let grid = *f.grid();
    if cfg.transport == TransportScheme::Upwind1 {
        let admissible = cfl_report(&grid, 0.0, cfg);
        if dt > admissible * (1.0 + 1e-12) {
            return Err(KmfgError::Cfl { dt, admissible });
        }
    }
    let (nxc, nv, n) = (grid.cells_x(), grid.cells_v(), grid.n_x());
    let plans = (cfg.transport == TransportScheme::Spectral).then(|| {
        let mut planner = FftPlanner::new();
        (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
    });
    let columns: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|iv| {
            let v = grid.v_point(iv);
            let mut col: Vec<f64> = (0..nxc).map(|ix| f.values()[ix * nv + iv]).collect();
            let mut line = vec![0.0; n];
            let mut scratch = LineScratch::new(n);
            for axis in 0..grid.d() {
                let cells = sign * v[axis] * dt / grid.h_x();
                if cells == 0.0 {
                    continue;
                }
                let (count, stride) = match (grid.d(), axis) {
                    (1, _) => (1, 1),
                    (_, 0) => (n, n),
                    _ => (n, 1),
                };
                for l in 0..count {
                    let (start, step) = if stride == n && grid.d() == 2 {
                        (l, n)
                    } else {
                        (l * n, 1)
                    };
                    for (i, slot) in line.iter_mut().enumerate() {
                        *slot = col[start + i * step];
                    }
                    shift_line(&mut line, cells, cfg.transport, &mut scratch, plans.as_ref());
                    for (i, &val) in line.iter().enumerate() {
                        col[start + i * step] = val;
                    }
                }
            }
            col
        })
        .collect();
    let mut out = vec![0.0; grid.len()];
    for (iv, col) in columns.iter().enumerate() {
        for (ix, &val) in col.iter().enumerate() {
            out[ix * nv + iv] = val;
        }
    }
    Ok(Field::from_values_unchecked(&grid, out))
}

struct LineScratch {
    a: Vec<f64>,
    mirror: Vec<f64>,
    b: Vec<f64>,
    c: Vec<Complex64>,
}

impl LineScratch {
    fn new(n: usize) -> Self {
        Self {
            a: vec![0.0; n],
            mirror: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![Complex64::new(0.0, 0.0); n],
        }
    }
}

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// Periodic reflection about index 0: `i -> (n - i) mod n`.
fn reflect(line: &mut [f64], tmp: &mut [f64]) {
    let n = line.len();
    for i in 0..n {
        tmp[i] = line[(n - i) % n];
    }
    line.copy_from_slice(tmp);
}

/// Moves the profile by `cells` grid cells (positive = towards larger index).
/// Negative shifts are applied as reflect / shift / reflect so the scheme is
/// exactly equivariant under `x -> -x`.
fn shift_line(
    line: &mut [f64],
    cells: f64,
    scheme: TransportScheme,
    s: &mut LineScratch,
    plans: Option<&Plans>,
) {
    if cells < 0.0 {
        reflect(line, &mut s.mirror);
        shift_line(line, -cells, scheme, s, plans);
        reflect(line, &mut s.mirror);
        return;
    }
    let n = line.len();
    let wrap = |i: isize| -> usize { i.rem_euclid(n as isize) as usize };
    match scheme {
        TransportScheme::Upwind1 => {
            let old = &mut s.b;
            old.copy_from_slice(line);
            for i in 0..n {
                let left = old[wrap(i as isize - 1)];
                line[i] = old[i] - cells * (old[i] - left);
            }
        }
        TransportScheme::SemiLagrangian => {
            let whole = cells.floor();
            let theta = cells - whole;
            let k = whole as isize;
            let old = &mut s.b;
            old.copy_from_slice(line);
            for i in 0..n {
                let a = old[wrap(i as isize - k)];
                let b = old[wrap(i as isize - k - 1)];
                line[i] = (1.0 - theta) * a + theta * b;
            }
        }
        TransportScheme::SemiLagrangianLimited => {
            let whole = cells.floor();
            let theta = cells - whole;
            let k = whole as isize;
            let g = &mut s.b;
            for (i, slot) in g.iter_mut().enumerate() {
                *slot = line[wrap(i as isize - k)];
            }
            if theta == 0.0 {
                line.copy_from_slice(g);
                return;
            }
            // outgoing flux through the right face of each cell
            let flux = &mut s.a;
            for j in 0..n {
                let gj = g[j];
                let dm = gj - g[wrap(j as isize - 1)];
                let dp = g[wrap(j as isize + 1)] - gj;
                let slope = mc_slope(dm, dp);
                flux[j] = theta * (gj + 0.5 * slope * (1.0 - theta));
                // what stays behind, kept in the scratch line
                line[j] = (1.0 - theta) * (gj - 0.5 * slope * theta);
            }
            let last = flux[n - 1];
            for j in (1..n).rev() {
                line[j] += flux[j - 1];
            }
            line[0] += last;
        }
        TransportScheme::Spectral => {
            let (fwd, inv) = plans.expect("spectral transport needs FFT plans");
            let buf = &mut s.c;
            for (z, &v) in buf.iter_mut().zip(line.iter()) {
                *z = Complex64::new(v, 0.0);
            }
            fwd.process(buf);
            for (j, z) in buf.iter_mut().enumerate() {
                let k = crate::spectral::signed_frequency(j, n);
                // drop the Nyquist phase so real input stays real
                let phase = if 2 * j == n { 0.0 } else { -2.0 * PI * k * cells / n as f64 };
                *z *= Complex64::from_polar(1.0, phase);
            }
            inv.process(buf);
            let scale = 1.0 / n as f64;
            for (v, z) in line.iter_mut().zip(buf.iter()) {
                *v = z.re * scale;
            }
        }
    }
}

fn mc_slope(dm: f64, dp: f64) -> f64 {
    if dm * dp <= 0.0 {
        return 0.0;
    }
    let mag = (2.0 * dm.abs()).min(2.0 * dp.abs()).min(0.5 * (dm + dp).abs());
    mag.copysign(dm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityMode {
    /// `d_t m = Delta_v m + div_v(m b)`, no-flux boundary.
    FokkerPlanck,
    /// `d_t u = Delta_v u`, homogeneous Neumann boundary.
    Hjb,
}

/// `B(z) = z / (e^z - 1)`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Solves a tridiagonal system by the Thomas algorithm. `lower[0]` and
/// `upper[n-1]` are ignored. Without pivoting; intended for M-matrices.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(KmfgError::LinearSolve { row: 0 });
    }
    scratch[0] = upper[0] / denom;
    out[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * scratch[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(KmfgError::LinearSolve { row: i });
        }
        scratch[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
    Ok(())
}

struct VLine {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    out: Vec<f64>,
    scratch: Vec<f64>,
    drift: Vec<f64>,
}

impl VLine {
    fn new(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            out: vec![0.0; n],
            scratch: vec![0.0; n],
            drift: vec![0.0; n],
        }
    }

    fn assemble(&mut self, r: f64, h: f64, mode: VelocityMode, with_drift: bool) {
        let n = self.diag.len();
        for j in 0..n {
            let (bl, br) = match mode {
                VelocityMode::FokkerPlanck if with_drift => {
                    let zl = if j > 0 { 0.5 * (self.drift[j - 1] + self.drift[j]) * h } else { 0.0 };
                    let zr = if j + 1 < n { 0.5 * (self.drift[j] + self.drift[j + 1]) * h } else { 0.0 };
                    (zl, zr)
                }
                _ => (0.0, 0.0),
            };
            let mut diag = 1.0;
            if j + 1 < n {
                diag += r * bernoulli(br);
                self.upper[j] = -r * bernoulli(-br);
            } else {
                self.upper[j] = 0.0;
            }
            if j > 0 {
                diag += r * bernoulli(-bl);
                self.lower[j] = -r * bernoulli(bl);
            } else {
                self.lower[j] = 0.0;
            }
            if mode == VelocityMode::Hjb {
                // Neumann heat operator: symmetric, unit row sums
                diag = 1.0 + r * ((j + 1 < n) as u8 as f64 + (j > 0) as u8 as f64);
            }
            self.diag[j] = diag;
        }
    }

    fn solve(&mut self) -> Result<()> {
        solve_tridiagonal(
            &self.lower,
            &self.diag,
            &self.upper,
            &self.rhs,
            &mut self.out,
            &mut self.scratch,
        )
    }
}

/// One backward-Euler step of the velocity operator.
///
/// `drift` is the cell-centred `b` (one component per velocity axis); it is
/// averaged onto faces and ignored in [`VelocityMode::Hjb`]. For `d = 2` the
/// step is dimensionally split over the two velocity axes.
pub fn v_diffusion_drift_step(
    f: &Field,
    dt: f64,
    drift: Option<&VectorField>,
    mode: VelocityMode,
) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(KmfgError::InvalidArgument("dt must be positive".into()));
    }
    let grid = *f.grid();
    if mode == VelocityMode::FokkerPlanck {
        if let Some((cell, &min)) = f.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(KmfgError::NegativeDensity { min, cell });
        }
    }
    if let Some(b) = drift {
        grid.ensure_same_space(b.grid())?;
    }
    let (nv, n, d) = (grid.cells_v(), grid.n_v(), grid.d());
    let h = grid.h_v();
    let r = dt / (h * h);
    let mut values = f.values().to_vec();
    values
        .par_chunks_mut(nv)
        .enumerate()
        .try_for_each(|(ix, block)| -> Result<()> {
            let mut line = VLine::new(n);
            for axis in 0..d {
                // lines along `axis` inside this position's velocity block
                let (count, stride) = match (d, axis) {
                    (1, _) => (1, 1),
                    (_, 0) => (n, n),
                    _ => (n, 1),
                };
                for l in 0..count {
                    let (start, step) = if d == 2 && axis == 0 { (l, stride) } else { (l * n, 1) };
                    let with_drift = drift.is_some() && mode == VelocityMode::FokkerPlanck;
                    for j in 0..n {
                        let iv = start + j * step;
                        line.rhs[j] = block[iv];
                        if let Some(b) = drift {
                            line.drift[j] = b.component(axis).values()[ix * nv + iv];
                        }
                    }
                    line.assemble(r, h, mode, with_drift);
                    line.solve()?;
                    for j in 0..n {
                        block[start + j * step] = line.out[j];
                    }
                }
            }
            Ok(())
        })?;
    Ok(Field::from_values_unchecked(&grid, values))
}
