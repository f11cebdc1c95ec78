//! Particle approximation of the kinetic Fokker-Planck equation.
//!
//! Particles follow `dX = -V dt`, `dV = -b dt + sqrt(2) dB`, the
//! characteristics of `d_t m = Delta_v m + v.D_x m + div_v(m b)`, with periodic
//! `x` and reflecting velocity walls. Each block of particles owns a ChaCha
//! stream selected by `(seed, block)`, so results do not depend on the
//! thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KmfgError, Result};
use crate::fp::FpProblem;
use crate::phase_grid::{lp_norm, Field, PhaseGrid, SpaceTimeField, VectorField};

/// Below this many particles the histogram noise dominates the comparison.
pub const MIN_RECOMMENDED_PARTICLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub n_particles: usize,
    pub seed: u64,
    #[serde(default = "default_block")]
    pub block_size: usize,
    /// Number of equally spaced time levels used for the modulus estimate.
    #[serde(default = "default_samples")]
    pub modulus_levels: usize,
    /// Particles of block 0 whose paths are recorded.
    #[serde(default)]
    pub trace_particles: usize,
}

fn default_block() -> usize {
    4096
}

fn default_samples() -> usize {
    11
}

impl MonteCarloConfig {
    pub fn new(n_particles: usize, seed: u64) -> Self {
        Self {
            n_particles,
            seed,
            block_size: default_block(),
            modulus_levels: default_samples(),
            trace_particles: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusSample {
    pub t: f64,
    pub s: f64,
    /// `E |Z_t - Z_s|` under the synchronous coupling; bounds `d_1(w(t), w(s))`.
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub n_particles: usize,
    #[serde(skip)]
    pub histogram: Field,
    /// `|histogram - m(T)|_1` when a PDE solution was supplied.
    pub l1_to_pde: Option<f64>,
    /// Empirical variance of the first velocity component at `t = 0` and `t = T`.
    pub var_v0: f64,
    pub var_vt: f64,
    /// Standard error of `var_vt` from the fourth central moment.
    pub var_vt_se: f64,
    pub modulus: Vec<ModulusSample>,
    pub modulus_max: f64,
    /// `2 sqrt(2) + L_v sqrt(T) + |b|_inf sqrt(T)`: what the Holder-1/2
    /// modulus can reach for this box and drift.
    pub modulus_bound: f64,
    pub warning: Option<String>,
    /// Rows `(particle, t, x.., v..)`.
    #[serde(skip)]
    pub traces: Vec<Vec<f64>>,
}

impl MonteCarloReport {
    /// `|var_vt - (var_v0 + 2T)|` in standard errors.
    pub fn variance_z(&self, t: f64) -> f64 {
        (self.var_vt - (self.var_v0 + 2.0 * t)).abs() / self.var_vt_se
    }
}

#[derive(Clone, Copy)]
struct Particle {
    x: [f64; 2],
    v: [f64; 2],
}

/// Multilinear interpolation of a cell field at a phase point: periodic
/// nodes in `x`, clamped cell centres in `v`.
fn interpolate(f: &Field, x: &[f64; 2], v: &[f64; 2]) -> f64 {
    let g = f.grid();
    let d = g.d();
    let (nx, nv) = (g.n_x(), g.n_v());
    // per-dimension (lower index, weight of upper)
    let mut idx = [(0usize, 0usize, 0.0f64); 4];
    for a in 0..d {
        let s = (x[a] + g.l_x()) / g.h_x();
        let i0 = s.floor();
        let w = s - i0;
        let i0 = (i0 as i64).rem_euclid(nx as i64) as usize;
        idx[a] = (i0, (i0 + 1) % nx, w);
        let s = ((v[a] + g.l_v()) / g.h_v() - 0.5).clamp(0.0, (nv - 1) as f64);
        let j0 = (s.floor() as usize).min(nv - 2);
        idx[d + a] = (j0, j0 + 1, s - j0 as f64);
    }
    let dims = 2 * d;
    let mut total = 0.0;
    for corner in 0..(1usize << dims) {
        let mut weight = 1.0;
        let mut pick = [0usize; 4];
        for k in 0..dims {
            let up = corner >> k & 1 == 1;
            let (lo, hi, w) = idx[k];
            pick[k] = if up { hi } else { lo };
            weight *= if up { w } else { 1.0 - w };
        }
        if weight == 0.0 {
            continue;
        }
        let (ix, iv) = if d == 1 {
            (pick[0], pick[1])
        } else {
            (pick[0] * nx + pick[1], pick[2] * nv + pick[3])
        };
        total += weight * f.at(ix, iv);
    }
    total
}

fn reflect(mut v: f64, l: f64) -> f64 {
    loop {
        if v > l {
            v = 2.0 * l - v;
        } else if v < -l {
            v = -2.0 * l - v;
        } else {
            return v;
        }
    }
}

fn wrap(x: f64, l: f64) -> f64 {
    (x + l).rem_euclid(2.0 * l) - l
}

fn cell_of(g: &PhaseGrid, p: &Particle) -> usize {
    let d = g.d();
    let mut ix = 0;
    let mut iv = 0;
    for a in 0..d {
        let i = (((p.x[a] + g.l_x()) / g.h_x() + 0.5).floor() as usize) % g.n_x();
        let j = (((p.v[a] + g.l_v()) / g.h_v()).floor() as usize).min(g.n_v() - 1);
        ix = ix * g.n_x() + i;
        iv = iv * g.n_v() + j;
    }
    ix * g.cells_v() + iv
}

fn phase_distance(a: &Particle, b: &Particle, d: usize, l_x: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..d {
        let dx = wrap(a.x[k] - b.x[k], l_x);
        let dv = a.v[k] - b.v[k];
        s += dx * dx + dv * dv;
    }
    s.sqrt()
}

struct BlockResult {
    counts: Vec<u32>,
    v0: [f64; 2],
    vt: [f64; 4],
    pair_sums: Vec<f64>,
    traces: Vec<Vec<f64>>,
}

pub fn monte_carlo_fp(prob: &FpProblem, pde: Option<&SpaceTimeField>, cfg: &MonteCarloConfig) -> Result<MonteCarloReport> {
    prob.validate()?;
    if cfg.n_particles == 0 || cfg.block_size == 0 {
        return Err(KmfgError::InvalidArgument("particle and block counts must be positive".into()));
    }
    let grid = *prob.grid();
    if let Some(m) = pde {
        grid.ensure_same_space(m.grid())?;
    }
    let d = grid.d();
    let n_t = grid.n_t();
    let dt = grid.dt();
    let sq2dt = (2.0 * dt).sqrt();

    // cumulative distribution of the initial histogram
    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for &m in prob.m0.values() {
        acc += m.max(0.0);
        cdf.push(acc);
    }
    let total = acc;

    let levels: Vec<usize> = {
        let k = cfg.modulus_levels.max(2);
        let mut l: Vec<usize> = (0..k).map(|i| (i * n_t + (k - 1) / 2) / (k - 1)).collect();
        l.dedup();
        l
    };
    let pairs: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|i| (i + 1..levels.len()).map(move |j| (i, j)))
        .collect();

    let b_max = prob
        .drift
        .as_ref()
        .map(|b| b.iter().map(VectorField::max_abs).fold(0.0, f64::max))
        .unwrap_or(0.0);
    let n_blocks = cfg.n_particles.div_ceil(cfg.block_size);

    let results: Vec<BlockResult> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(block as u64);
            let start = block * cfg.block_size;
            let count = cfg.block_size.min(cfg.n_particles - start);
            let mut ps: Vec<Particle> = (0..count)
                .map(|_| {
                    let target = rng.random::<f64>() * total;
                    let cell = cdf.partition_point(|&c| c <= target).min(grid.len() - 1);
                    let (ix, iv) = grid.split_cell(cell);
                    let (xc, vc) = (grid.x_point(ix), grid.v_point(iv));
                    let mut p = Particle { x: [0.0; 2], v: [0.0; 2] };
                    for a in 0..d {
                        p.x[a] = wrap(xc[a] + (rng.random::<f64>() - 0.5) * grid.h_x(), grid.l_x());
                        p.v[a] = vc[a] + (rng.random::<f64>() - 0.5) * grid.h_v();
                    }
                    p
                })
                .collect();
            let mut v0 = [0.0; 2];
            for p in &ps {
                v0[0] += p.v[0];
                v0[1] += p.v[0] * p.v[0];
            }
            let mut snaps: Vec<Vec<Particle>> = Vec::with_capacity(levels.len());
            let mut traces = Vec::new();
            let n_trace = if block == 0 { cfg.trace_particles.min(count) } else { 0 };
            let record = |ps: &[Particle], k: usize, traces: &mut Vec<Vec<f64>>| {
                for (i, p) in ps.iter().take(n_trace).enumerate() {
                    let mut row = vec![i as f64, grid.time(k)];
                    row.extend_from_slice(&p.x[..d]);
                    row.extend_from_slice(&p.v[..d]);
                    traces.push(row);
                }
            };
            if levels[0] == 0 {
                snaps.push(ps.clone());
            }
            record(&ps, 0, &mut traces);
            for k in 0..n_t {
                let b = prob.drift.as_ref().map(|b| &b[k + 1]);
                for p in ps.iter_mut() {
                    let mut drift = [0.0; 2];
                    if let Some(b) = b {
                        for (a, slot) in drift.iter_mut().enumerate().take(d) {
                            *slot = interpolate(b.component(a), &p.x, &p.v);
                        }
                    }
                    for a in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        p.x[a] = wrap(p.x[a] - p.v[a] * dt, grid.l_x());
                        p.v[a] = reflect(p.v[a] - drift[a] * dt + sq2dt * z, grid.l_v());
                    }
                }
                if levels.contains(&(k + 1)) {
                    snaps.push(ps.clone());
                }
                record(&ps, k + 1, &mut traces);
            }
            let mut counts = vec![0u32; grid.len()];
            let mut vt = [0.0; 4];
            for p in &ps {
                counts[cell_of(&grid, p)] += 1;
                let v = p.v[0];
                vt[0] += v;
                vt[1] += v * v;
                vt[2] += v * v * v;
                vt[3] += v * v * v * v;
            }
            let pair_sums = pairs
                .iter()
                .map(|&(i, j)| {
                    snaps[i]
                        .iter()
                        .zip(&snaps[j])
                        .map(|(a, b)| phase_distance(a, b, d, grid.l_x()))
                        .sum()
                })
                .collect();
            BlockResult { counts, v0, vt, pair_sums, traces }
        })
        .collect();

    let n = cfg.n_particles as f64;
    let mut counts = vec![0u64; grid.len()];
    let mut v0 = [0.0; 2];
    let mut vt = [0.0; 4];
    let mut pair_sums = vec![0.0; pairs.len()];
    let mut traces = Vec::new();
    for r in results {
        for (c, k) in counts.iter_mut().zip(&r.counts) {
            *c += *k as u64;
        }
        for i in 0..2 {
            v0[i] += r.v0[i];
        }
        for i in 0..4 {
            vt[i] += r.vt[i];
        }
        for (s, p) in pair_sums.iter_mut().zip(&r.pair_sums) {
            *s += p;
        }
        traces.extend(r.traces);
    }
    let scale = 1.0 / (n * grid.cell_volume());
    let histogram = Field::from_values(&grid, counts.iter().map(|&c| c as f64 * scale).collect())?;
    let l1_to_pde = pde.map(|m| lp_norm(&histogram.zip_map(m.last(), |a, b| a - b), 1.0));

    let mean0 = v0[0] / n;
    let var_v0 = v0[1] / n - mean0 * mean0;
    let mu = vt[0] / n;
    let (e2, e3, e4) = (vt[1] / n, vt[2] / n, vt[3] / n);
    let var_vt = e2 - mu * mu;
    let m4 = e4 - 4.0 * mu * e3 + 6.0 * mu * mu * e2 - 3.0 * mu.powi(4);
    let var_vt_se = ((m4 - var_vt * var_vt).max(0.0) / n).sqrt();

    let modulus: Vec<ModulusSample> = pairs
        .iter()
        .zip(&pair_sums)
        .map(|(&(i, j), &s)| {
            let (t, s_) = (grid.time(levels[j]), grid.time(levels[i]));
            let distance = s / n;
            ModulusSample {
                t,
                s: s_,
                distance,
                ratio: distance / (t - s_).sqrt(),
            }
        })
        .collect();
    let modulus_max = modulus.iter().map(|m| m.ratio).fold(0.0, f64::max);
    let sqrt_t = grid.t_final().sqrt();
    Ok(MonteCarloReport {
        n_particles: cfg.n_particles,
        histogram,
        l1_to_pde,
        var_v0,
        var_vt,
        var_vt_se,
        modulus,
        modulus_max,
        modulus_bound: 2.0 * 2f64.sqrt() + grid.l_v() * sqrt_t + b_max * sqrt_t,
        warning: (cfg.n_particles < MIN_RECOMMENDED_PARTICLES)
            .then(|| format!("{} particles: histogram noise dominates", cfg.n_particles)),
        traces,
    })
}
