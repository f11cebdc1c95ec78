//! Binary field checkpoints and CSV export.
//!
//! Layout: `b"KMFG1"`, then `d, n_x, n_v` as little-endian `u32`, then
//! `L_x, L_v` as little-endian `f64`, then the values of every stored time
//! level as little-endian `f64` in `(level, x, v)` row-major order. The
//! number of levels follows from the file length.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{KmfgError, Result};
use crate::phase_grid::{build_grid, lp_norm, Field, GridConfig, PhaseGrid, SpaceTimeField};

pub const MAGIC: &[u8; 5] = b"KMFG1";
const HEADER_LEN: usize = 5 + 3 * 4 + 2 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointHeader {
    pub d: u32,
    pub n_x: u32,
    pub n_v: u32,
    pub l_x: f64,
    pub l_v: f64,
}

impl CheckpointHeader {
    pub fn of(grid: &PhaseGrid) -> Self {
        Self {
            d: grid.d() as u32,
            n_x: grid.n_x() as u32,
            n_v: grid.n_v() as u32,
            l_x: grid.l_x(),
            l_v: grid.l_v(),
        }
    }

    pub fn cells(&self) -> usize {
        ((self.n_x as usize) * (self.n_v as usize)).pow(self.d)
    }

    /// Grid with this spatial layout and the given time axis.
    pub fn grid(&self, t_final: f64, n_t: usize) -> Result<PhaseGrid> {
        build_grid(&GridConfig {
            d: self.d as usize,
            t_final,
            n_t,
            l_x: self.l_x,
            n_x: self.n_x as usize,
            l_v: self.l_v,
            n_v: self.n_v as usize,
            max_cells: usize::MAX,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub levels: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn from_fields(fields: &[Field]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| KmfgError::InvalidArgument("no fields to store".into()))?;
        let grid = first.grid();
        for f in fields {
            grid.ensure_same_space(f.grid())?;
        }
        Ok(Self {
            header: CheckpointHeader::of(grid),
            levels: fields.iter().map(|f| f.values().to_vec()).collect(),
        })
    }

    pub fn from_spacetime(f: &SpaceTimeField) -> Self {
        Self::from_fields(f.slices()).expect("a space-time field has levels")
    }

    /// Rebuilds the level sequence on `[0, t_final]`. Needs two or more levels.
    pub fn to_spacetime(&self, t_final: f64) -> Result<SpaceTimeField> {
        if self.levels.len() < 2 {
            return Err(KmfgError::Format("a time series needs at least two levels".into()));
        }
        let grid = self.header.grid(t_final, self.levels.len() - 1)?;
        let slices = self
            .levels
            .iter()
            .map(|v| Field::from_values(&grid, v.clone()))
            .collect::<Result<Vec<_>>>()?;
        SpaceTimeField::from_slices(&grid, slices)
    }

    pub fn field(&self, level: usize) -> Result<Field> {
        let grid = self.header.grid(1.0, 1)?;
        Field::from_values(&grid, self.levels[level].clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.levels.len() * self.header.cells());
        out.extend_from_slice(MAGIC);
        for v in [self.header.d, self.header.n_x, self.header.n_v] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.header.l_x.to_le_bytes());
        out.extend_from_slice(&self.header.l_v.to_le_bytes());
        for level in &self.levels {
            for v in level {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..5] != MAGIC {
            return Err(KmfgError::Format("missing KMFG1 header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let header = CheckpointHeader {
            d: u32_at(5),
            n_x: u32_at(9),
            n_v: u32_at(13),
            l_x: f64_at(17),
            l_v: f64_at(25),
        };
        if !(1..=2).contains(&header.d) || header.n_x == 0 || header.n_v == 0 {
            return Err(KmfgError::Format(format!("implausible header {header:?}")));
        }
        let body = &bytes[HEADER_LEN..];
        let level_bytes = 8 * header.cells();
        if body.is_empty() || body.len() % level_bytes != 0 {
            return Err(KmfgError::Format(format!(
                "body of {} bytes is not a whole number of {}-byte levels",
                body.len(),
                level_bytes
            )));
        }
        let levels = body
            .chunks_exact(level_bytes)
            .map(|chunk| {
                chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect()
            })
            .collect();
        Ok(Self { header, levels })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelDistance {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub levels: Vec<LevelDistance>,
    pub sup_l1: f64,
    pub sup_l2: f64,
    pub sup_linf: f64,
}

pub fn compare(a: &Checkpoint, b: &Checkpoint) -> Result<CompareReport> {
    if a.header != b.header {
        return Err(KmfgError::GridMismatch(format!("{:?} vs {:?}", a.header, b.header)));
    }
    if a.levels.len() != b.levels.len() {
        return Err(KmfgError::GridMismatch(format!(
            "{} vs {} time levels",
            a.levels.len(),
            b.levels.len()
        )));
    }
    let grid = a.header.grid(1.0, 1)?;
    let levels: Vec<LevelDistance> = a
        .levels
        .iter()
        .zip(&b.levels)
        .map(|(x, y)| {
            let diff = Field::from_values(&grid, x.iter().zip(y).map(|(p, q)| p - q).collect())?;
            Ok(LevelDistance {
                l1: lp_norm(&diff, 1.0),
                l2: lp_norm(&diff, 2.0),
                linf: lp_norm(&diff, f64::INFINITY),
            })
        })
        .collect::<Result<_>>()?;
    let sup = |f: fn(&LevelDistance) -> f64| levels.iter().map(f).fold(0.0, f64::max);
    Ok(CompareReport {
        sup_l1: sup(|l| l.l1),
        sup_l2: sup(|l| l.l2),
        sup_linf: sup(|l| l.linf),
        levels,
    })
}

/// One row per cell: `x.., v.., value`.
pub fn write_field_csv(path: &Path, f: &Field) -> Result<()> {
    let grid = f.grid();
    let d = grid.d();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let head: Vec<String> = (0..d)
        .map(|a| format!("x{a}"))
        .chain((0..d).map(|a| format!("v{a}")))
        .chain(std::iter::once("value".into()))
        .collect();
    writeln!(w, "{}", head.join(","))?;
    let nv = grid.cells_v();
    for (cell, val) in f.values().iter().enumerate() {
        let (x, v) = (grid.x_point(cell / nv), grid.v_point(cell % nv));
        let mut row: Vec<String> = x[..d].iter().chain(&v[..d]).map(|c| format!("{c:.17e}")).collect();
        row.push(format!("{val:.17e}"));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
