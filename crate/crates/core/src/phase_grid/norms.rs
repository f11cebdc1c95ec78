use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

use super::{Field, SpaceTimeField};
use crate::error::{KmfgError, Result};
use crate::spectral::{dft_real, signed_frequency, CubeFft};

/// Fixed-order pairwise summation; the result does not depend on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Midpoint quadrature `sum f * h_x^d h_v^d`.
pub fn integrate(f: &Field) -> f64 {
    pairwise_sum(f.values()) * f.grid().cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentWeight {
    XSquared,
    VSquared,
    VFourth,
    XSquaredPlusVSquared,
    /// `m log m` with `0 log 0 = 0`.
    Entropy,
}

pub fn moment(f: &Field, weight: MomentWeight) -> Result<f64> {
    let grid = f.grid();
    let nv = grid.cells_v();
    if weight == MomentWeight::Entropy {
        if let Some((cell, &min)) = f
            .values()
            .iter()
            .enumerate()
            .find(|(_, &v)| v < 0.0)
        {
            return Err(KmfgError::NegativeDensity { min, cell });
        }
    }
    let terms: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(cell, &m)| {
            let (ix, iv) = (cell / nv, cell % nv);
            let x = grid.x_point(ix);
            let v = grid.v_point(iv);
            let x2 = x[0] * x[0] + x[1] * x[1];
            let v2 = v[0] * v[0] + v[1] * v[1];
            match weight {
                MomentWeight::XSquared => x2 * m,
                MomentWeight::VSquared => v2 * m,
                MomentWeight::VFourth => v2 * v2 * m,
                MomentWeight::XSquaredPlusVSquared => (x2 + v2) * m,
                MomentWeight::Entropy => {
                    if m > 0.0 {
                        m * m.ln()
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    Ok(pairwise_sum(&terms) * grid.cell_volume())
}

/// Quadrature-weighted `l^p` norm of one slice; `p = inf` gives `max |f|`.
pub fn lp_norm(f: &Field, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm requires p >= 1");
    if p.is_infinite() {
        return f.values().iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let terms: Vec<f64> = f.values().iter().map(|v| v.abs().powf(p)).collect();
    (pairwise_sum(&terms) * f.grid().cell_volume()).powf(1.0 / p)
}

/// Space-time `L^p` norm with trapezoid weights in time.
pub fn lp_norm_spacetime(f: &SpaceTimeField, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm requires p >= 1");
    if p.is_infinite() {
        return f
            .slices()
            .iter()
            .map(|s| lp_norm(s, p))
            .fold(0.0, f64::max);
    }
    let grid = f.grid();
    let terms: Vec<f64> = f
        .slices()
        .iter()
        .enumerate()
        .map(|(k, s)| grid.time_weight(k) * lp_norm(s, p).powf(p))
        .collect();
    pairwise_sum(&terms).powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractionalAxis {
    X,
    T,
}

fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(KmfgError::InvalidArgument(format!(
            "fractional order must lie in (0,1), got {s}"
        )))
    }
}

/// `|| |k|^s f^ ||_2` of one slice along the periodic position axes.
pub fn fractional_seminorm_slice(f: &Field, s: f64) -> Result<f64> {
    check_order(s)?;
    Ok(x_seminorm_squared(f, s, &CubeFft::new(f.grid().n_x(), f.grid().d())).sqrt())
}

fn x_seminorm_squared(f: &Field, s: f64, fft: &CubeFft) -> f64 {
    let grid = f.grid();
    let (nx_cells, nv) = (grid.cells_x(), grid.cells_v());
    let kscale = PI / grid.l_x();
    let weights: Vec<f64> = (0..nx_cells)
        .map(|idx| {
            let k = fft.frequency(idx);
            let k2 = (k[0] * k[0] + k[1] * k[1]) * kscale * kscale;
            if k2 == 0.0 {
                0.0
            } else {
                k2.powf(s)
            }
        })
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); nx_cells];
    let mut per_v = Vec::with_capacity(nv);
    for iv in 0..nv {
        for (ix, z) in buf.iter_mut().enumerate() {
            *z = Complex64::new(f.values()[ix * nv + iv], 0.0);
        }
        fft.forward(&mut buf);
        let terms: Vec<f64> = buf
            .iter()
            .zip(&weights)
            .map(|(z, w)| w * z.norm_sqr())
            .collect();
        per_v.push(pairwise_sum(&terms));
    }
    // Parseval: h^d sum |f|^2 = (h^d / N) sum |F|^2
    pairwise_sum(&per_v) * grid.cell_volume() / nx_cells as f64
}

/// Spectral estimate of `||D^s f||_2` over space-time along `axis`.
///
/// The time axis is handled by even reflection of the level sequence, which
/// avoids the jump a periodic wrap would introduce; the result is an
/// estimator rather than an exact norm on `[0, T]`.
pub fn fractional_seminorm(f: &SpaceTimeField, s: f64, axis: FractionalAxis) -> Result<f64> {
    check_order(s)?;
    let grid = f.grid();
    match axis {
        FractionalAxis::X => {
            let fft = CubeFft::new(grid.n_x(), grid.d());
            let terms: Vec<f64> = f
                .slices()
                .iter()
                .enumerate()
                .map(|(k, sl)| grid.time_weight(k) * x_seminorm_squared(sl, s, &fft))
                .collect();
            Ok(pairwise_sum(&terms).sqrt())
        }
        FractionalAxis::T => {
            let nt = grid.n_t();
            if nt < 2 {
                return Ok(0.0);
            }
            let period = 2 * nt;
            let kscale = PI / grid.t_final();
            let weights: Vec<f64> = (0..period)
                .map(|j| {
                    let k = signed_frequency(j, period).abs() * kscale;
                    if k == 0.0 {
                        0.0
                    } else {
                        k.powf(2.0 * s)
                    }
                })
                .collect();
            let mut series = vec![0.0; period];
            let mut per_cell = Vec::with_capacity(grid.len());
            for cell in 0..grid.len() {
                for (k, sl) in f.slices().iter().enumerate() {
                    series[k] = sl.values()[cell];
                }
                for k in 1..nt {
                    series[period - k] = series[k];
                }
                let spec = dft_real(&series);
                let terms: Vec<f64> = spec
                    .iter()
                    .zip(&weights)
                    .map(|(z, w)| w * z.norm_sqr())
                    .collect();
                per_cell.push(pairwise_sum(&terms));
            }
            // the reflected series covers [0, 2T]; halve to refer to [0, T]
            let dt = grid.dt();
            Ok((pairwise_sum(&per_cell) * grid.cell_volume() * dt / period as f64 / 2.0).sqrt())
        }
    }
}
