//! Solver and estimate diagnostics for kinetic (hypoelliptic) mean field games
//!
//! ```text
//! -d_t u - Delta_v u + v.D_x u + H(D_v u) = F(m),   u(T) = G(m(T))
//!  d_t m - Delta_v m - v.D_x m - div_v(m H_p(D_v u)) = 0,   m(0) = m0
//! ```
//!
//! on a periodic-in-`x`, truncated-in-`v` phase-space grid.

pub mod cli_io;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod fp;
pub mod hamiltonian;
pub mod hjb;
pub mod kolmogorov;
pub mod mfg;
pub mod oracle;
pub mod particles;
pub mod phase_grid;
pub mod spectral;

pub use error::{KmfgError, Result};
